//! Browser bindings over the core toolkit: three interactive views on
//! synthetic fixtures, each returning a self-contained SVG string.
//!
//! Build with `wasm-pack build --target web crates/demo` and serve
//! `crates/demo/www/`.

use wasm_bindgen::prelude::*;

use embias::eval::Group;
use embias::harness::{run_grid, BaseEmbedding, ExperimentInputs, ExperimentParams, Method};
use embias::modify::{attract_repel, build_constraint_pairs, ArHyper, Direction};
use embias::sgns::TrainConfig;
use embias::svg::{scatter_svg, ScatterPoint};
use embias::synthetic::{
    ar_fixture, biased_store, fixture_lexicon, fixture_weat_test, labeled_examples,
    planted_corpus, ArFixtureOptions, BiasedStoreOptions, CorpusOptions, CAREER_TERMS,
    FAMILY_TERMS, FEMALE_TERMS, MALE_TERMS,
};
use embias::weat::{effect_size, OovPolicy};

/// Scatter of a synthetic gendered space projected on its two cluster
/// axes, captioned with the measured effect size. `bias` 0..1 moves the
/// concept clusters from neutral to fully stereotyped; `noise` spreads
/// the words.
#[wasm_bindgen]
pub fn geometry_svg(bias: f64, noise: f64, seed: u32) -> String {
    let opts = BiasedStoreOptions {
        bias: bias.clamp(0.0, 1.0),
        noise: noise.clamp(0.01, 0.8),
        ..BiasedStoreOptions::default()
    };
    let store = biased_store(seed as u64, &opts);
    let effect = effect_size(&store, &fixture_weat_test())
        .map(|d| format!("{d:+.3}"))
        .unwrap_or_else(|_| "undefined".into());

    let mut points = Vec::new();
    let sets: [(&[&str], usize); 4] = [
        (&MALE_TERMS, 0),
        (&FEMALE_TERMS, 1),
        (&CAREER_TERMS, 2),
        (&FAMILY_TERMS, 3),
    ];
    for (words, series) in sets {
        for w in words {
            let v = store.resolve(w).unwrap();
            points.push(ScatterPoint {
                x: v[0] as f64,
                y: v[1] as f64,
                series,
                highlight: false,
            });
        }
    }
    scatter_svg(
        &format!("Synthetic space, association effect size {effect}"),
        "male/career axis",
        "female/family axis",
        &["male terms", "female terms", "career terms", "family terms"],
        &points,
    )
}

/// Effect size as a function of specialization strength, for both
/// directions on the same fixture. Strength scales the update rate; the
/// highlighted point is the untouched baseline.
#[wasm_bindgen]
pub fn specialize_curve_svg(seed: u32, steps: u32) -> String {
    let steps = steps.clamp(2, 12) as usize;
    let (store, test, lexicon) = ar_fixture(seed as u64, &ArFixtureOptions::default());
    let baseline = effect_size(&store, &test).unwrap_or(0.0);
    let mut points = vec![ScatterPoint {
        x: 0.0,
        y: baseline,
        series: 0,
        highlight: true,
    }];
    for (series, direction) in [(0usize, Direction::Debias), (1, Direction::Overbias)] {
        let constraints = build_constraint_pairs(&lexicon, direction).unwrap();
        for i in 1..=steps {
            let strength = i as f64 / steps as f64;
            let hyper = ArHyper {
                learning_rate: ArHyper::default().learning_rate * strength,
                ..ArHyper::default()
            };
            if let Ok(out) = attract_repel(&store, &constraints, &hyper) {
                if let Ok(d) = effect_size(&out.store, &test) {
                    points.push(ScatterPoint {
                        x: strength,
                        y: d,
                        series,
                        highlight: false,
                    });
                }
            }
        }
    }
    scatter_svg(
        &format!("Specialization response, baseline {baseline:+.3}"),
        "strength (update-rate scale)",
        "association effect size",
        &["debias", "overbias"],
        &points,
    )
}

/// Run a miniature modification grid end to end (train, balance or
/// specialize, re-train the downstream classifier) and plot effect size
/// against the chosen gap metric. `metric` is "precision" or "recall".
#[wasm_bindgen]
pub fn experiment_scatter_svg(master_seed: u32, metric: &str) -> String {
    let corpus_opts = CorpusOptions {
        pro: 120,
        anti: 60,
        sentiment: 300,
        filler: 720,
    };
    let inputs = ExperimentInputs {
        base: BaseEmbedding::Corpus(planted_corpus(7, &corpus_opts)),
        weat_tests: vec![fixture_weat_test()],
        lexicon: fixture_lexicon(),
        train_examples: labeled_examples(8, 40),
        test_examples: labeled_examples(9, 40),
    };
    let params = ExperimentParams {
        train: TrainConfig {
            dim: 16,
            window: 4,
            negatives: 5,
            epochs: 8,
            learning_rate: 0.05,
            min_count: 2,
            seed: 1,
            ..TrainConfig::default()
        },
        methods: vec![Method::Preprocessing, Method::Postprocessing],
        directions: vec![Direction::Debias, Direction::Overbias],
        strengths: vec![0.5, 1.0],
        balance_budget: 0.05,
        expand_neighbors: 0,
        reference_group: Group::A,
        classifier: Default::default(),
        attract_repel: Default::default(),
        oov_policy: OovPolicy::Drop,
        master_seed: master_seed as u64,
        parallel: false,
    };
    let use_recall = metric == "recall";
    match run_grid(&inputs, &params) {
        Ok(output) => {
            let mut points = Vec::new();
            for record in &output.table.records {
                let Some(metrics) = &record.metrics else { continue };
                let gap = if use_recall {
                    metrics.recall_gap
                } else {
                    metrics.precision_gap
                };
                let effect = metrics.tests.first().and_then(|t| t.effect_size);
                let (Some(x), Some(y)) = (gap, effect) else { continue };
                let series = if record.method == "postprocessing" { 1 } else { 0 };
                points.push(ScatterPoint {
                    x,
                    y,
                    series,
                    highlight: record.condition_id == "baseline",
                });
            }
            let label = if use_recall { "recall gap" } else { "precision gap" };
            scatter_svg(
                &format!("Modification grid, seed {master_seed}"),
                &format!("performance gap ({label})"),
                "association effect size",
                &["preprocessing", "postprocessing"],
                &points,
            )
        }
        Err(e) => scatter_svg(&format!("grid failed: {e}"), "", "", &[], &[]),
    }
}
