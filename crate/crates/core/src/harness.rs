//! Experiment grid: baseline → bias-modification grid → remeasure →
//! correlate → report.
//!
//! One config drives the whole study. The baseline embedding is trained
//! (or loaded) and measured first; then every (method, direction,
//! strength) grid point re-derives an embedding — preprocessing balances
//! the corpus and retrains, postprocessing runs attract-repel on the
//! baseline store — and measures the association tests plus a freshly
//! trained downstream classifier. Pearson correlations are computed per
//! (test × gap metric × method) slice, with the baseline included in
//! every slice as the shared strength-0 anchor.
//!
//! Determinism: every stage seed is derived by hashing the master seed
//! with the condition id and stage name, so grid points are independent
//! of each other and of execution order; parallel runs emit the same
//! bytes as sequential ones. A grid point at strength 0 is the baseline
//! by definition and reuses its seeds and numbers.
//!
//! Per-condition stores are archived in the binary format so any scatter
//! point can be re-measured bit-exactly later.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::eval::{
    compute_gaps, grouped_confusion, read_labeled_tsv, train_classifier, ClassifierConfig, Group,
    LabeledExample,
};
use crate::modify::{
    attract_repel, balance_corpus, build_constraint_pairs, tag_sentences, ArHyper, Direction,
    StereotypeLexicon,
};
use crate::sgns::{train_skipgram, TrainConfig};
use crate::store::{EmbeddingStore, StoreFormat};
use crate::svg::{scatter_svg, ScatterPoint};
use crate::weat::{run_weat_suite, OovPolicy, WeatTest};

pub const PEARSON_PERMUTATIONS: u64 = 10_000;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("failed to parse experiment config: {0}")]
    Parse(String),
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("input lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),
    #[error("baseline condition failed: {0}")]
    BaselineFailed(String),
    #[error(transparent)]
    Store(#[from] crate::store::StoreError),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    Weat(#[from] crate::weat::WeatError),
    #[error(transparent)]
    Modify(#[from] crate::modify::ModifyError),
    #[error(transparent)]
    Eval(#[from] crate::eval::EvalError),
    #[error(transparent)]
    Train(#[from] crate::sgns::TrainError),
}

impl HarnessError {
    pub fn is_io(&self) -> bool {
        matches!(self, HarnessError::Io(_))
    }
}

/// Pearson r with a two-sided permutation p-value (10,000 seeded
/// shuffles of `ys`).
pub fn pearson(xs: &[f64], ys: &[f64], seed: u64) -> Result<(f64, f64), HarnessError> {
    let r = pearson_r(xs, ys)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled: Vec<f64> = ys.to_vec();
    let mut at_least = 0u64;
    for _ in 0..PEARSON_PERMUTATIONS {
        shuffled.shuffle(&mut rng);
        let r_perm = pearson_r(xs, &shuffled)?;
        if r_perm.abs() >= r.abs() {
            at_least += 1;
        }
    }
    Ok((r, at_least as f64 / PEARSON_PERMUTATIONS as f64))
}

/// Plain correlation coefficient, clamped to [-1, 1].
pub fn pearson_r(xs: &[f64], ys: &[f64]) -> Result<f64, HarnessError> {
    if xs.len() != ys.len() {
        return Err(HarnessError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 3 {
        return Err(HarnessError::TooFewPoints(xs.len()));
    }
    let n = xs.len() as f64;
    let mean_x: f64 = xs.iter().sum::<f64>() / n;
    let mean_y: f64 = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = x - mean_x;
        let dy = y - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 {
        return Err(HarnessError::ZeroVariance("xs"));
    }
    if var_y == 0.0 {
        return Err(HarnessError::ZeroVariance("ys"));
    }
    Ok((cov / (var_x * var_y).sqrt()).clamp(-1.0, 1.0))
}

/// Stable seed derivation: FNV-1a over the master seed and a tag list.
/// Adding a grid point never perturbs another point's seeds.
pub fn derive_seed(master: u64, tags: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    eat(&master.to_le_bytes());
    for t in tags {
        eat(t.as_bytes());
        eat(&[0xff]);
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Preprocessing,
    Postprocessing,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Preprocessing => write!(f, "preprocessing"),
            Method::Postprocessing => write!(f, "postprocessing"),
        }
    }
}

impl Method {
    fn short(&self) -> &'static str {
        match self {
            Method::Preprocessing => "pre",
            Method::Postprocessing => "post",
        }
    }
}

/// Per-stage seeds of one condition, kept for provenance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageSeeds {
    pub train: u64,
    pub balance: u64,
    pub attract_repel: u64,
    pub classifier: u64,
    pub weat: u64,
}

impl StageSeeds {
    fn for_condition(master: u64, condition_id: &str) -> Self {
        StageSeeds {
            train: derive_seed(master, &[condition_id, "train"]),
            balance: derive_seed(master, &[condition_id, "balance"]),
            attract_repel: derive_seed(master, &[condition_id, "attract-repel"]),
            classifier: derive_seed(master, &[condition_id, "classifier"]),
            weat: derive_seed(master, &[condition_id, "weat"]),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TestMetrics {
    pub test_name: String,
    pub effect_size: Option<f64>,
    pub p_value: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ConditionMetrics {
    pub tests: Vec<TestMetrics>,
    pub precision_gap: Option<f64>,
    pub recall_gap: Option<f64>,
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentRecord {
    pub condition_id: String,
    pub method: String,
    pub direction: String,
    pub strength: f64,
    pub seeds: StageSeeds,
    /// Absent when the condition failed before anything could be
    /// measured.
    pub metrics: Option<ConditionMetrics>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct CorrelationSummary {
    pub test_name: String,
    pub gap_metric: String,
    pub method: String,
    pub n: usize,
    pub r: Option<f64>,
    pub p: Option<f64>,
    pub status: String,
}

#[derive(Debug)]
pub struct ExperimentTable {
    pub records: Vec<ExperimentRecord>,
    pub correlations: Vec<CorrelationSummary>,
    pub test_names: Vec<String>,
}

/// Per-condition artifacts worth archiving.
#[derive(Debug)]
pub struct ConditionArtifacts {
    pub condition_id: String,
    pub store: EmbeddingStore,
    /// Indices removed from the corpus, for preprocessing conditions.
    pub removed_indices: Option<Vec<usize>>,
}

#[derive(Debug)]
pub struct GridOutput {
    pub table: ExperimentTable,
    pub artifacts: Vec<ConditionArtifacts>,
}

/// Where the baseline embedding comes from.
#[derive(Debug, Clone)]
pub enum BaseEmbedding {
    Corpus(Corpus),
    Store(EmbeddingStore),
}

/// All data already loaded into memory.
#[derive(Debug)]
pub struct ExperimentInputs {
    pub base: BaseEmbedding,
    pub weat_tests: Vec<WeatTest>,
    pub lexicon: StereotypeLexicon,
    pub train_examples: Vec<LabeledExample>,
    pub test_examples: Vec<LabeledExample>,
}

/// Grid parameters, path-free.
#[derive(Debug, Clone)]
pub struct ExperimentParams {
    pub train: TrainConfig,
    pub methods: Vec<Method>,
    pub directions: Vec<Direction>,
    pub strengths: Vec<f64>,
    pub balance_budget: f64,
    pub expand_neighbors: usize,
    pub reference_group: Group,
    pub classifier: ClassifierConfig,
    pub attract_repel: ArHyper,
    pub oov_policy: OovPolicy,
    pub master_seed: u64,
    pub parallel: bool,
}

impl ExperimentParams {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.methods.is_empty() {
            return Err(HarnessError::InvalidConfig("no methods configured".into()));
        }
        if self.directions.is_empty() {
            return Err(HarnessError::InvalidConfig("no directions configured".into()));
        }
        if self.strengths.is_empty() {
            return Err(HarnessError::InvalidConfig("no strengths configured".into()));
        }
        if self
            .strengths
            .iter()
            .any(|s| !(0.0..=1.0).contains(s) || !s.is_finite())
        {
            return Err(HarnessError::InvalidConfig(
                "strengths must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// The on-disk experiment config. Every field except the data paths has
/// a default.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Train the baseline from this corpus …
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    /// … or load a pre-trained store instead.
    #[serde(default)]
    pub store: Option<PathBuf>,
    #[serde(default = "default_store_format")]
    pub store_format: String,
    pub weat_tests: Vec<PathBuf>,
    pub lexicon: PathBuf,
    pub downstream_train: PathBuf,
    pub downstream_test: PathBuf,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_directions")]
    pub directions: Vec<Direction>,
    #[serde(default = "default_strengths")]
    pub strengths: Vec<f64>,
    #[serde(default = "default_budget")]
    pub balance_budget: f64,
    #[serde(default = "default_expand_neighbors")]
    pub expand_neighbors: usize,
    #[serde(default = "default_reference_group")]
    pub reference_group: Group,
    #[serde(default)]
    pub oov_policy: OovPolicy,
    #[serde(default = "default_master_seed")]
    pub master_seed: u64,
    #[serde(default = "default_parallel")]
    pub parallel: bool,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    #[serde(default)]
    pub attract_repel: ArHyper,
}

fn default_store_format() -> String {
    "text".into()
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("experiment-out")
}
fn default_methods() -> Vec<Method> {
    vec![Method::Preprocessing, Method::Postprocessing]
}
fn default_directions() -> Vec<Direction> {
    vec![Direction::Debias, Direction::Overbias]
}
fn default_strengths() -> Vec<f64> {
    vec![0.25, 0.5, 0.75, 1.0]
}
fn default_budget() -> f64 {
    0.05
}
fn default_expand_neighbors() -> usize {
    100
}
fn default_reference_group() -> Group {
    Group::A
}
fn default_master_seed() -> u64 {
    42
}
fn default_parallel() -> bool {
    true
}

impl ExperimentConfig {
    /// Parse a config file, resolving relative paths against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path)?;
        let mut config: ExperimentConfig =
            toml::from_str(&text).map_err(|e| HarnessError::Parse(e.to_string()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = config.corpus.as_mut() {
            resolve(p);
        }
        if let Some(p) = config.store.as_mut() {
            resolve(p);
        }
        for p in config.weat_tests.iter_mut() {
            resolve(p);
        }
        resolve(&mut config.lexicon);
        resolve(&mut config.downstream_train);
        resolve(&mut config.downstream_test);
        resolve(&mut config.output_dir);
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.corpus.is_none() && self.store.is_none() {
            return Err(HarnessError::InvalidConfig(
                "config must name either a corpus or a store".into(),
            ));
        }
        if self.weat_tests.is_empty() {
            return Err(HarnessError::InvalidConfig("no weat_tests configured".into()));
        }
        if self.methods.contains(&Method::Preprocessing) && self.corpus.is_none() {
            return Err(HarnessError::InvalidConfig(
                "preprocessing requires a training corpus".into(),
            ));
        }
        if !matches!(self.store_format.as_str(), "text" | "binary") {
            return Err(HarnessError::InvalidConfig(format!(
                "store_format must be text or binary, got {:?}",
                self.store_format
            )));
        }
        self.params().validate()
    }

    pub fn params(&self) -> ExperimentParams {
        ExperimentParams {
            train: self.train.clone(),
            methods: self.methods.clone(),
            directions: self.directions.clone(),
            strengths: self.strengths.clone(),
            balance_budget: self.balance_budget,
            expand_neighbors: self.expand_neighbors,
            reference_group: self.reference_group,
            classifier: self.classifier.clone(),
            attract_repel: self.attract_repel.clone(),
            oov_policy: self.oov_policy,
            master_seed: self.master_seed,
            parallel: self.parallel,
        }
    }

    pub fn load_inputs(&self) -> Result<ExperimentInputs, HarnessError> {
        let base = match (&self.corpus, &self.store) {
            (Some(corpus), _) => BaseEmbedding::Corpus(Corpus::read_normalized(corpus)?),
            (None, Some(store)) => {
                let format = if self.store_format == "binary" {
                    StoreFormat::Binary
                } else {
                    StoreFormat::Text
                };
                BaseEmbedding::Store(EmbeddingStore::load(store, format)?)
            }
            (None, None) => unreachable!("validated"),
        };
        let weat_tests = self
            .weat_tests
            .iter()
            .map(|p| WeatTest::load(p))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ExperimentInputs {
            base,
            weat_tests,
            lexicon: StereotypeLexicon::load(&self.lexicon)?,
            train_examples: read_labeled_tsv(&self.downstream_train)?,
            test_examples: read_labeled_tsv(&self.downstream_test)?,
        })
    }
}

struct Condition {
    id: String,
    method: Method,
    direction: Direction,
    strength: f64,
}

fn condition_id(method: Method, direction: Direction, strength: f64) -> String {
    format!("{}-{}-s{:.2}", method.short(), direction, strength)
}

/// Measure one store: association suite plus a fresh frozen-embedding
/// classifier. Downstream failures leave the gap fields empty rather
/// than discarding the test metrics.
fn evaluate_store(
    store: &EmbeddingStore,
    inputs: &ExperimentInputs,
    params: &ExperimentParams,
    seeds: &StageSeeds,
) -> (ConditionMetrics, Option<String>) {
    let suite = run_weat_suite(store, &inputs.weat_tests, params.oov_policy, seeds.weat);
    let tests: Vec<TestMetrics> = suite
        .into_iter()
        .map(|entry| match entry.outcome {
            Ok(result) => TestMetrics {
                test_name: entry.test_name,
                effect_size: Some(result.effect_size),
                p_value: result.p_value,
                error: None,
            },
            Err(e) => TestMetrics {
                test_name: entry.test_name,
                effect_size: None,
                p_value: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let classifier_config = ClassifierConfig {
        seed: seeds.classifier,
        ..params.classifier.clone()
    };
    let downstream = train_classifier(store, &inputs.train_examples, &classifier_config)
        .map_err(|e| e.to_string())
        .and_then(|clf| {
            let conf = grouped_confusion(&clf, store, &inputs.test_examples);
            let gaps = compute_gaps(&conf, params.reference_group).map_err(|e| e.to_string())?;
            Ok((gaps, conf.accuracy(), conf.f1()))
        });
    match downstream {
        Ok((gaps, accuracy, f1)) => (
            ConditionMetrics {
                tests,
                precision_gap: Some(gaps.precision_gap),
                recall_gap: Some(gaps.recall_gap),
                accuracy: Some(accuracy),
                f1: Some(f1),
            },
            None,
        ),
        Err(e) => (
            ConditionMetrics {
                tests,
                precision_gap: None,
                recall_gap: None,
                accuracy: None,
                f1: None,
            },
            Some(e),
        ),
    }
}

/// Derive the store for one grid condition.
fn condition_store(
    condition: &Condition,
    seeds: &StageSeeds,
    inputs: &ExperimentInputs,
    params: &ExperimentParams,
    baseline_store: &EmbeddingStore,
    lexicon: &StereotypeLexicon,
) -> Result<(EmbeddingStore, Option<Vec<usize>>), String> {
    match condition.method {
        Method::Preprocessing => {
            let BaseEmbedding::Corpus(corpus) = &inputs.base else {
                return Err("preprocessing requires a training corpus".into());
            };
            let tagged = tag_sentences(corpus, lexicon).map_err(|e| e.to_string())?;
            let balanced = balance_corpus(
                &tagged,
                condition.direction,
                params.balance_budget,
                condition.strength,
                seeds.balance,
            )
            .map_err(|e| e.to_string())?;
            let train = TrainConfig {
                seed: seeds.train,
                ..params.train.clone()
            };
            let store = train_skipgram(&balanced.corpus, &train).map_err(|e| e.to_string())?;
            Ok((store, Some(balanced.removed_indices)))
        }
        Method::Postprocessing => {
            let constraints =
                build_constraint_pairs(lexicon, condition.direction).map_err(|e| e.to_string())?;
            let hyper = ArHyper {
                seed: seeds.attract_repel,
                learning_rate: params.attract_repel.learning_rate * condition.strength,
                ..params.attract_repel.clone()
            };
            let out = attract_repel(baseline_store, &constraints, &hyper)
                .map_err(|e| e.to_string())?;
            Ok((out.store, None))
        }
    }
}

/// Run the whole grid in memory. The baseline must succeed; grid
/// conditions fail individually.
pub fn run_grid(
    inputs: &ExperimentInputs,
    params: &ExperimentParams,
) -> Result<GridOutput, HarnessError> {
    params.validate()?;
    let master = params.master_seed;
    let baseline_seeds = StageSeeds::for_condition(master, "baseline");

    let baseline_store = match &inputs.base {
        BaseEmbedding::Corpus(corpus) => {
            let train = TrainConfig {
                seed: baseline_seeds.train,
                ..params.train.clone()
            };
            train_skipgram(corpus, &train)?
        }
        BaseEmbedding::Store(store) => store.clone(),
    };
    let (baseline_metrics, baseline_error) =
        evaluate_store(&baseline_store, inputs, params, &baseline_seeds);
    if let Some(e) = baseline_error {
        return Err(HarnessError::BaselineFailed(e));
    }
    if let Some(bad) = baseline_metrics.tests.iter().find(|t| t.error.is_some()) {
        return Err(HarnessError::BaselineFailed(format!(
            "test {}: {}",
            bad.test_name,
            bad.error.clone().unwrap_or_default()
        )));
    }
    let baseline_record = ExperimentRecord {
        condition_id: "baseline".into(),
        method: "none".into(),
        direction: "none".into(),
        strength: 0.0,
        seeds: baseline_seeds,
        metrics: Some(baseline_metrics),
        error: None,
    };

    // Modification wordlists may be expanded over the baseline space;
    // measurement always uses the original test lists.
    let lexicon = inputs
        .lexicon
        .expanded(&baseline_store, params.expand_neighbors)?;

    let conditions: Vec<Condition> = params
        .methods
        .iter()
        .flat_map(|&method| {
            params.directions.iter().flat_map(move |&direction| {
                params.strengths.iter().map(move |&strength| Condition {
                    id: condition_id(method, direction, strength),
                    method,
                    direction,
                    strength,
                })
            })
        })
        .collect();

    let run_one = |condition: &Condition| -> (ExperimentRecord, Option<ConditionArtifacts>) {
        // Strength zero leaves the embedding untouched: it is the
        // baseline under a grid label, sharing the baseline's seeds.
        if condition.strength == 0.0 {
            let record = ExperimentRecord {
                condition_id: condition.id.clone(),
                method: condition.method.to_string(),
                direction: condition.direction.to_string(),
                strength: 0.0,
                seeds: baseline_seeds,
                metrics: baseline_record.metrics.clone(),
                error: None,
            };
            let artifacts = ConditionArtifacts {
                condition_id: condition.id.clone(),
                store: baseline_store.clone(),
                removed_indices: None,
            };
            return (record, Some(artifacts));
        }
        let seeds = StageSeeds::for_condition(master, &condition.id);
        match condition_store(condition, &seeds, inputs, params, &baseline_store, &lexicon) {
            Ok((store, removed_indices)) => {
                let (metrics, error) = evaluate_store(&store, inputs, params, &seeds);
                let record = ExperimentRecord {
                    condition_id: condition.id.clone(),
                    method: condition.method.to_string(),
                    direction: condition.direction.to_string(),
                    strength: condition.strength,
                    seeds,
                    metrics: Some(metrics),
                    error,
                };
                let artifacts = ConditionArtifacts {
                    condition_id: condition.id.clone(),
                    store,
                    removed_indices,
                };
                (record, Some(artifacts))
            }
            Err(e) => (
                ExperimentRecord {
                    condition_id: condition.id.clone(),
                    method: condition.method.to_string(),
                    direction: condition.direction.to_string(),
                    strength: condition.strength,
                    seeds,
                    metrics: None,
                    error: Some(e),
                },
                None,
            ),
        }
    };

    let parallel = params.parallel && !cfg!(target_arch = "wasm32") && conditions.len() > 1;
    let mut outcomes: Vec<Option<(ExperimentRecord, Option<ConditionArtifacts>)>> =
        (0..conditions.len()).map(|_| None).collect();
    if parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = conditions
                .iter()
                .map(|condition| scope.spawn(|| run_one(condition)))
                .collect();
            for (slot, handle) in outcomes.iter_mut().zip(handles) {
                *slot = Some(handle.join().expect("condition thread panicked"));
            }
        });
    } else {
        for (slot, condition) in outcomes.iter_mut().zip(&conditions) {
            *slot = Some(run_one(condition));
        }
    }

    let mut records = vec![baseline_record];
    let mut artifacts = vec![ConditionArtifacts {
        condition_id: "baseline".into(),
        store: baseline_store.clone(),
        removed_indices: None,
    }];
    for outcome in outcomes.into_iter().flatten() {
        records.push(outcome.0);
        if let Some(a) = outcome.1 {
            artifacts.push(a);
        }
    }

    let test_names: Vec<String> = inputs.weat_tests.iter().map(|t| t.name.clone()).collect();
    let correlations = correlate(&records, &test_names, params);
    Ok(GridOutput {
        table: ExperimentTable {
            records,
            correlations,
            test_names,
        },
        artifacts,
    })
}

/// Pearson summaries per (test × gap metric × method) slice. The
/// baseline point joins every slice; slices need at least 3 usable
/// points.
fn correlate(
    records: &[ExperimentRecord],
    test_names: &[String],
    params: &ExperimentParams,
) -> Vec<CorrelationSummary> {
    let mut out = Vec::new();
    for test_name in test_names {
        for gap_metric in ["precision_gap", "recall_gap"] {
            for &method in &params.methods {
                let method_name = method.to_string();
                let mut xs = Vec::new();
                let mut ys = Vec::new();
                for record in records {
                    if record.method != method_name && record.condition_id != "baseline" {
                        continue;
                    }
                    let Some(metrics) = &record.metrics else { continue };
                    let gap = match gap_metric {
                        "precision_gap" => metrics.precision_gap,
                        _ => metrics.recall_gap,
                    };
                    let effect = metrics
                        .tests
                        .iter()
                        .find(|t| &t.test_name == test_name)
                        .and_then(|t| t.effect_size);
                    if let (Some(x), Some(y)) = (gap, effect) {
                        xs.push(x);
                        ys.push(y);
                    }
                }
                let n = xs.len();
                let summary = if n < 3 {
                    CorrelationSummary {
                        test_name: test_name.clone(),
                        gap_metric: gap_metric.into(),
                        method: method_name.clone(),
                        n,
                        r: None,
                        p: None,
                        status: "insufficient_n".into(),
                    }
                } else {
                    let seed = derive_seed(
                        params.master_seed,
                        &["pearson", test_name, gap_metric, &method_name],
                    );
                    match pearson(&xs, &ys, seed) {
                        Ok((r, p)) => CorrelationSummary {
                            test_name: test_name.clone(),
                            gap_metric: gap_metric.into(),
                            method: method_name.clone(),
                            n,
                            r: Some(r),
                            p: Some(p),
                            status: "ok".into(),
                        },
                        Err(HarnessError::ZeroVariance(_)) => CorrelationSummary {
                            test_name: test_name.clone(),
                            gap_metric: gap_metric.into(),
                            method: method_name.clone(),
                            n,
                            r: None,
                            p: None,
                            status: "zero_variance".into(),
                        },
                        Err(e) => CorrelationSummary {
                            test_name: test_name.clone(),
                            gap_metric: gap_metric.into(),
                            method: method_name.clone(),
                            n,
                            r: None,
                            p: None,
                            status: format!("error: {e}"),
                        },
                    }
                };
                out.push(summary);
            }
        }
    }
    out
}

/// Load everything, run the grid, archive per-condition artifacts and
/// write the report into the config's output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentTable, HarnessError> {
    config.validate()?;
    let inputs = config.load_inputs()?;
    let params = config.params();
    let output = run_grid(&inputs, &params)?;

    let outdir = &config.output_dir;
    fs::create_dir_all(outdir.join("stores"))?;
    let mut wrote_corpora_dir = false;
    for artifact in &output.artifacts {
        let path = outdir
            .join("stores")
            .join(format!("{}.emb", artifact.condition_id));
        artifact.store.save(&path, StoreFormat::Binary)?;
        if let Some(removed) = &artifact.removed_indices {
            if !wrote_corpora_dir {
                fs::create_dir_all(outdir.join("corpora"))?;
                wrote_corpora_dir = true;
            }
            let manifest: String = removed
                .iter()
                .map(|i| format!("{i}\n"))
                .collect();
            fs::write(
                outdir
                    .join("corpora")
                    .join(format!("{}.removed.txt", artifact.condition_id)),
                manifest,
            )?;
        }
    }
    write_report(&output.table, outdir)?;
    Ok(output.table)
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.6}"),
        None => "NA".into(),
    }
}

/// `records.csv` text with the fixed column order.
pub fn records_csv(table: &ExperimentTable) -> String {
    let mut out = String::from(
        "condition_id,method,direction,strength,test_name,effect_size,p_value,precision_gap,recall_gap,accuracy,f1\n",
    );
    for record in &table.records {
        let prefix = format!(
            "{},{},{},{:.2}",
            record.condition_id, record.method, record.direction, record.strength
        );
        match &record.metrics {
            Some(metrics) => {
                for test in &metrics.tests {
                    out.push_str(&format!(
                        "{},{},{},{},{},{},{},{}\n",
                        prefix,
                        test.test_name,
                        fmt_opt(test.effect_size),
                        fmt_opt(test.p_value),
                        fmt_opt(metrics.precision_gap),
                        fmt_opt(metrics.recall_gap),
                        fmt_opt(metrics.accuracy),
                        fmt_opt(metrics.f1),
                    ));
                }
            }
            None => {
                for test_name in &table.test_names {
                    out.push_str(&format!("{prefix},{test_name},NA,NA,NA,NA,NA,NA\n"));
                }
            }
        }
    }
    out
}

/// `correlations.csv` text.
pub fn correlations_csv(table: &ExperimentTable) -> String {
    let mut out = String::from("test_name,gap_metric,method,n,r,p,status\n");
    for c in &table.correlations {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.test_name,
            c.gap_metric,
            c.method,
            c.n,
            fmt_opt(c.r),
            fmt_opt(c.p),
            c.status
        ));
    }
    out
}

/// Write `records.csv`, `correlations.csv` and one scatter SVG per
/// (test × gap metric), gap on x, effect size on y, baseline in black.
pub fn write_report(table: &ExperimentTable, outdir: &Path) -> Result<(), HarnessError> {
    if table.records.is_empty() {
        return Err(HarnessError::InvalidConfig("empty table".into()));
    }
    fs::create_dir_all(outdir)?;
    fs::write(outdir.join("records.csv"), records_csv(table))?;
    fs::write(outdir.join("correlations.csv"), correlations_csv(table))?;

    let methods: Vec<String> = {
        let mut seen = Vec::new();
        for r in &table.records {
            if r.condition_id != "baseline" && !seen.contains(&r.method) {
                seen.push(r.method.clone());
            }
        }
        seen
    };
    for test_name in &table.test_names {
        for gap_metric in ["precision_gap", "recall_gap"] {
            let mut points = Vec::new();
            for record in &table.records {
                let Some(metrics) = &record.metrics else { continue };
                let gap = match gap_metric {
                    "precision_gap" => metrics.precision_gap,
                    _ => metrics.recall_gap,
                };
                let effect = metrics
                    .tests
                    .iter()
                    .find(|t| &t.test_name == test_name)
                    .and_then(|t| t.effect_size);
                let (Some(x), Some(y)) = (gap, effect) else { continue };
                let highlight = record.condition_id == "baseline";
                let series = methods
                    .iter()
                    .position(|m| m == &record.method)
                    .unwrap_or(0);
                points.push(ScatterPoint {
                    x,
                    y,
                    series,
                    highlight,
                });
            }
            let series_names: Vec<&str> = methods.iter().map(String::as_str).collect();
            let svg = scatter_svg(
                &format!("{test_name}: effect size vs {gap_metric}"),
                &format!("performance gap ({gap_metric})"),
                "association effect size",
                &series_names,
                &points,
            );
            fs::write(
                outdir.join(format!("scatter_{test_name}_{gap_metric}.svg")),
                svg,
            )?;
        }
    }
    Ok(())
}
