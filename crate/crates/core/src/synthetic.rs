//! Self-contained synthetic fixtures: a geometrically biased store, a
//! planted-co-occurrence corpus with a matching downstream task, and a
//! ready-to-run experiment dataset.
//!
//! The fixtures plant a gender/occupation stereotype: male terms and
//! career terms share one direction of the space, female terms and
//! family terms another, with the two directions nearly orthogonal.
//! Everything is generated from a seed, so test suites and the browser
//! demo get reproducible inputs without shipping any real-world data.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Corpus;
use crate::eval::{Group, Label, LabeledExample};
use crate::modify::StereotypeLexicon;
use crate::store::EmbeddingStore;
use crate::weat::WeatTest;

pub const MALE_TERMS: [&str; 4] = ["he", "him", "his", "man"];
pub const FEMALE_TERMS: [&str; 4] = ["she", "her", "hers", "woman"];
pub const CAREER_TERMS: [&str; 4] = ["office", "career", "salary", "business"];
pub const FAMILY_TERMS: [&str; 4] = ["home", "family", "wedding", "parents"];

const TOXIC: [&str; 3] = ["awful", "terrible", "horrid"];
const BENIGN: [&str; 3] = ["lovely", "pleasant", "fine"];
const FILLER: [&str; 18] = [
    "the", "a", "is", "was", "and", "to", "day", "time", "good", "long", "went", "stayed",
    "talked", "about", "with", "people", "quiet", "it",
];

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Knobs for the geometric fixture.
#[derive(Debug, Clone)]
pub struct BiasedStoreOptions {
    /// 0 puts both concept clusters midway between the group axes; 1
    /// puts them on top of their stereotyped group.
    pub bias: f64,
    /// Component noise, controls in-cluster cosine spread.
    pub noise: f64,
    /// Extra unrelated vocabulary words.
    pub filler_words: usize,
    pub dim: usize,
}

impl Default for BiasedStoreOptions {
    fn default() -> Self {
        BiasedStoreOptions {
            bias: 0.9,
            noise: 0.15,
            filler_words: 20,
            dim: 8,
        }
    }
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

/// A store where male/career terms cluster along one axis and
/// female/family terms along a nearly orthogonal one (their base
/// directions have cosine 0.1). In-cluster cosines sit near 0.9 at the
/// default noise level, cross-cluster near 0.1.
pub fn biased_store(seed: u64, opts: &BiasedStoreOptions) -> EmbeddingStore {
    assert!(opts.dim >= 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = opts.dim;
    let mut axis_m = vec![0.0f64; dim];
    axis_m[0] = 1.0;
    // cos(axis_m, axis_f) = 0.1.
    let mut axis_f = vec![0.0f64; dim];
    axis_f[0] = 0.1;
    axis_f[1] = (1.0f64 - 0.01).sqrt();
    let mut mid: Vec<f64> = axis_m.iter().zip(&axis_f).map(|(a, b)| a + b).collect();
    normalize(&mut mid);

    let lerp = |target: &[f64], bias: f64| -> Vec<f64> {
        let mut v: Vec<f64> = mid
            .iter()
            .zip(target)
            .map(|(m, t)| (1.0 - bias) * m + bias * t)
            .collect();
        normalize(&mut v);
        v
    };
    let career_axis = lerp(&axis_m, opts.bias);
    let family_axis = lerp(&axis_f, opts.bias);

    let mut rows: Vec<(String, Vec<f32>)> = Vec::new();
    let sample = |rng: &mut ChaCha8Rng, center: &[f64], noise: f64| -> Vec<f32> {
        let mut v: Vec<f64> = center.iter().map(|c| c + noise * gaussian(rng)).collect();
        normalize(&mut v);
        v.into_iter().map(|x| x as f32).collect()
    };
    for w in MALE_TERMS {
        let v = sample(&mut rng, &axis_m, opts.noise);
        rows.push((w.to_string(), v));
    }
    for w in FEMALE_TERMS {
        let v = sample(&mut rng, &axis_f, opts.noise);
        rows.push((w.to_string(), v));
    }
    for w in CAREER_TERMS {
        let v = sample(&mut rng, &career_axis, opts.noise);
        rows.push((w.to_string(), v));
    }
    for w in FAMILY_TERMS {
        let v = sample(&mut rng, &family_axis, opts.noise);
        rows.push((w.to_string(), v));
    }
    for i in 0..opts.filler_words {
        let mut v: Vec<f64> = (0..dim).map(|_| gaussian(&mut rng)).collect();
        normalize(&mut v);
        rows.push((
            format!("filler{i:02}"),
            v.into_iter().map(|x| x as f32).collect(),
        ));
    }
    EmbeddingStore::from_rows(rows).expect("fixture rows are valid")
}

/// The association test matching the planted stereotype: career vs
/// family targets, male vs female attributes.
pub fn fixture_weat_test() -> WeatTest {
    WeatTest {
        name: "synthetic-gender".into(),
        language: "en".into(),
        x: CAREER_TERMS.iter().map(|w| w.to_string()).collect(),
        y: FAMILY_TERMS.iter().map(|w| w.to_string()).collect(),
        a: MALE_TERMS.iter().map(|w| w.to_string()).collect(),
        b: FEMALE_TERMS.iter().map(|w| w.to_string()).collect(),
    }
}

/// The lexicon matching the planted stereotype: male is linked to
/// career, female to family.
pub fn fixture_lexicon() -> StereotypeLexicon {
    StereotypeLexicon::new(
        MALE_TERMS.iter().map(|w| w.to_string()).collect(),
        FEMALE_TERMS.iter().map(|w| w.to_string()).collect(),
        CAREER_TERMS.iter().map(|w| w.to_string()).collect(),
        FAMILY_TERMS.iter().map(|w| w.to_string()).collect(),
        vec!["synthetic-gender".into()],
    )
    .expect("fixture lexicon is valid")
}

/// Knobs for the parametric specialization fixture.
#[derive(Debug, Clone)]
pub struct ArFixtureOptions {
    pub store: BiasedStoreOptions,
    /// Words per test list.
    pub words_per_set: usize,
    /// Counter-stereotypical words per concept list. They lean toward
    /// the opposite group's axis at `anti_bias` strength and are exactly
    /// the words the modification lexicon targets, so debiasing pushes
    /// the list mean toward zero while overbiasing pulls the whole list
    /// onto the stereotype.
    pub anti_lean: usize,
    pub anti_bias: f64,
    /// Group terms per group included in the lexicon.
    pub cover_groups: usize,
}

impl Default for ArFixtureOptions {
    fn default() -> Self {
        ArFixtureOptions {
            store: BiasedStoreOptions {
                bias: 0.7,
                noise: 0.15,
                filler_words: 20,
                dim: 8,
            },
            words_per_set: 10,
            anti_lean: 4,
            anti_bias: 0.25,
            cover_groups: 10,
        }
    }
}

/// A parametric fixture for vector-space specialization: a biased store
/// over generated term sets, the matching association test, and a
/// lexicon covering the counter-stereotypical minority of each concept
/// list plus a few group terms.
pub fn ar_fixture(
    seed: u64,
    opts: &ArFixtureOptions,
) -> (EmbeddingStore, WeatTest, StereotypeLexicon) {
    assert!(opts.anti_lean >= 1 && opts.anti_lean < opts.words_per_set);
    assert!(opts.cover_groups >= 1 && opts.cover_groups <= opts.words_per_set);
    let dim = opts.store.dim;
    assert!(dim >= 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut axis_m = vec![0.0f64; dim];
    axis_m[0] = 1.0;
    let mut axis_f = vec![0.0f64; dim];
    axis_f[0] = 0.1;
    axis_f[1] = (1.0f64 - 0.01).sqrt();
    let mut mid: Vec<f64> = axis_m.iter().zip(&axis_f).map(|(a, b)| a + b).collect();
    normalize(&mut mid);
    let lerp = |target: &[f64], amount: f64| -> Vec<f64> {
        let mut v: Vec<f64> = mid
            .iter()
            .zip(target)
            .map(|(m, t)| (1.0 - amount) * m + amount * t)
            .collect();
        normalize(&mut v);
        v
    };
    let pro_career = lerp(&axis_m, opts.store.bias);
    let pro_family = lerp(&axis_f, opts.store.bias);
    let anti_career = lerp(&axis_f, opts.anti_bias);
    let anti_family = lerp(&axis_m, opts.anti_bias);

    let names = |prefix: &str| -> Vec<String> {
        (0..opts.words_per_set).map(|i| format!("{prefix}{i:02}")).collect()
    };
    let male = names("male");
    let female = names("female");
    let career = names("career");
    let family = names("family");

    let mut rows: Vec<(String, Vec<f32>)> = Vec::new();
    let sample = |rng: &mut ChaCha8Rng, center: &[f64]| -> Vec<f32> {
        let mut v: Vec<f64> = center
            .iter()
            .map(|c| c + opts.store.noise * gaussian(rng))
            .collect();
        normalize(&mut v);
        v.into_iter().map(|x| x as f32).collect()
    };
    for w in &male {
        let v = sample(&mut rng, &axis_m);
        rows.push((w.clone(), v));
    }
    for w in &female {
        let v = sample(&mut rng, &axis_f);
        rows.push((w.clone(), v));
    }
    for (i, w) in career.iter().enumerate() {
        let axis = if i < opts.anti_lean { &anti_career } else { &pro_career };
        let v = sample(&mut rng, axis);
        rows.push((w.clone(), v));
    }
    for (i, w) in family.iter().enumerate() {
        let axis = if i < opts.anti_lean { &anti_family } else { &pro_family };
        let v = sample(&mut rng, axis);
        rows.push((w.clone(), v));
    }
    for i in 0..opts.store.filler_words {
        let mut v: Vec<f64> = (0..dim).map(|_| gaussian(&mut rng)).collect();
        normalize(&mut v);
        rows.push((
            format!("filler{i:02}"),
            v.into_iter().map(|x| x as f32).collect(),
        ));
    }
    let store = EmbeddingStore::from_rows(rows).expect("fixture rows are valid");
    let test = WeatTest {
        name: "synthetic-gender-wide".into(),
        language: "en".into(),
        x: career.clone(),
        y: family.clone(),
        a: male.clone(),
        b: female.clone(),
    };
    let lexicon = StereotypeLexicon::new(
        male[..opts.cover_groups].to_vec(),
        female[..opts.cover_groups].to_vec(),
        career[..opts.anti_lean].to_vec(),
        family[..opts.anti_lean].to_vec(),
        vec![test.name.clone()],
    )
    .expect("fixture lexicon is valid");
    (store, test, lexicon)
}

/// Sentence counts for the planted corpus.
#[derive(Debug, Clone)]
pub struct CorpusOptions {
    /// Pro-stereotypical sentences (split between male/career and
    /// female/family).
    pub pro: usize,
    /// Anti-stereotypical sentences.
    pub anti: usize,
    /// Sentiment-bearing sentences feeding the downstream task.
    pub sentiment: usize,
    /// Plain filler sentences.
    pub filler: usize,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        // Pro/anti imbalance equals the 5% removal cap of the 2400
        // sentences, so full-strength balancing equalizes the counts
        // exactly in one direction and empties the anti set in the
        // other.
        CorpusOptions {
            pro: 240,
            anti: 120,
            sentiment: 600,
            filler: 1440,
        }
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, set: &[&'a str]) -> &'a str {
    set[rng.gen_range(0..set.len())]
}

fn group_concept_sentence(
    rng: &mut ChaCha8Rng,
    group: &[&str],
    concept: &[&str],
) -> Vec<String> {
    vec![
        pick(rng, &FILLER).to_string(),
        pick(rng, group).to_string(),
        pick(rng, &FILLER).to_string(),
        pick(rng, concept).to_string(),
        pick(rng, &FILLER).to_string(),
    ]
}

fn sentiment_sentence(rng: &mut ChaCha8Rng, group: Group, positive: bool) -> Vec<String> {
    let subject = match group {
        Group::A => pick(rng, &MALE_TERMS),
        Group::B => pick(rng, &FEMALE_TERMS),
        Group::Neutral => pick(rng, &FILLER),
    };
    let lexicon = if positive { &TOXIC } else { &BENIGN };
    // The marker is diluted by filler, and a quarter of the sentences
    // carry a stray marker of the opposite polarity, so the classes
    // overlap and the per-group confusion counts stay away from the
    // degenerate corners. Marker counts are identical across groups so
    // the task does not disturb the gender geometry itself.
    let mut tokens = vec![
        subject.to_string(),
        "is".to_string(),
        pick(rng, lexicon).to_string(),
    ];
    if rng.gen_bool(0.25) {
        let opposite = if positive { &BENIGN } else { &TOXIC };
        tokens.push(pick(rng, opposite).to_string());
    }
    while tokens.len() < 7 {
        tokens.push(pick(rng, &FILLER).to_string());
    }
    tokens
}

/// A corpus with a pro-stereotypical skew: group/concept co-occurrence
/// comes almost entirely from the pro and anti sentences, so balancing
/// them away changes what the trainer can learn.
pub fn planted_corpus(seed: u64, opts: &CorpusOptions) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sentences = Vec::new();
    for i in 0..opts.pro {
        let s = if i % 2 == 0 {
            group_concept_sentence(&mut rng, &MALE_TERMS, &CAREER_TERMS)
        } else {
            group_concept_sentence(&mut rng, &FEMALE_TERMS, &FAMILY_TERMS)
        };
        sentences.push(s);
    }
    for i in 0..opts.anti {
        let s = if i % 2 == 0 {
            group_concept_sentence(&mut rng, &MALE_TERMS, &FAMILY_TERMS)
        } else {
            group_concept_sentence(&mut rng, &FEMALE_TERMS, &CAREER_TERMS)
        };
        sentences.push(s);
    }
    for i in 0..opts.sentiment {
        let group = match i % 3 {
            0 => Group::A,
            1 => Group::B,
            _ => Group::Neutral,
        };
        sentences.push(sentiment_sentence(&mut rng, group, i % 2 == 0));
    }
    for _ in 0..opts.filler {
        let len = rng.gen_range(4..9);
        sentences.push((0..len).map(|_| pick(&mut rng, &FILLER).to_string()).collect());
    }
    Corpus::new(sentences)
}

/// Labeled sentiment examples over the same vocabulary as the corpus:
/// positives contain hostile markers, group tags follow the subject
/// term.
pub fn labeled_examples(seed: u64, per_cell: usize) -> Vec<LabeledExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for group in [Group::A, Group::B, Group::Neutral] {
        for positive in [true, false] {
            for _ in 0..per_cell {
                out.push(LabeledExample {
                    tokens: sentiment_sentence(&mut rng, group, positive),
                    label: if positive { Label::Positive } else { Label::Negative },
                    group,
                });
            }
        }
    }
    out
}

/// Write the full bundled dataset: corpus, labeled splits, test and
/// lexicon files, and an experiment config wired to them.
pub fn write_dataset(dir: &Path, seed: u64) -> Result<(), crate::Error> {
    std::fs::create_dir_all(dir)?;
    let corpus = planted_corpus(seed, &CorpusOptions::default());
    corpus.write(&dir.join("corpus.txt"))?;
    crate::eval::write_labeled_tsv(
        &dir.join("train.tsv"),
        &labeled_examples(seed.wrapping_add(1), 40),
    )?;
    crate::eval::write_labeled_tsv(
        &dir.join("test.tsv"),
        &labeled_examples(seed.wrapping_add(2), 40),
    )?;

    let test = fixture_weat_test();
    let weat_toml = format!(
        "name = \"{}\"\nlanguage = \"{}\"\nx = {:?}\ny = {:?}\na = {:?}\nb = {:?}\n",
        test.name, test.language, test.x, test.y, test.a, test.b
    );
    std::fs::write(dir.join("weat.toml"), weat_toml)?;

    let lex = fixture_lexicon();
    let lexicon_toml = format!(
        "name = \"synthetic-gender\"\nprovenance = {:?}\ngroup1 = {:?}\ngroup2 = {:?}\nconcept1 = {:?}\nconcept2 = {:?}\nlinkage = \"group1-concept1\"\n",
        lex.provenance, lex.group1, lex.group2, lex.concept1, lex.concept2
    );
    std::fs::write(dir.join("lexicon.toml"), lexicon_toml)?;

    let config = r#"# Synthetic end-to-end experiment: planted-bias corpus, one
# association test, both modification methods in both directions.
corpus = "corpus.txt"
weat_tests = ["weat.toml"]
lexicon = "lexicon.toml"
downstream_train = "train.tsv"
downstream_test = "test.tsv"
output_dir = "out"
master_seed = 3
methods = ["preprocessing", "postprocessing"]
directions = ["debias", "overbias"]
strengths = [0.5, 1.0]
balance_budget = 0.05
expand_neighbors = 0
reference_group = "a"
parallel = true

[train]
dim = 32
window = 4
negatives = 5
epochs = 12
learning_rate = 0.05
min_count = 2

[classifier]
learning_rate = 0.5
epochs = 120
l2 = 0.0001

[attract_repel]
"#;
    std::fs::write(dir.join("experiment.toml"), config)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modify::{attract_repel, build_constraint_pairs, ArHyper, Direction};
    use crate::weat::effect_size;

    #[test]
    fn biased_store_geometry() {
        let store = biased_store(1, &BiasedStoreOptions::default());
        // In-cluster similarity is high, cross-cluster low.
        let in_cluster = store.cosine("he", "him").unwrap();
        let cross = store.cosine("he", "she").unwrap();
        assert!(in_cluster > 0.7, "in-cluster cos {in_cluster}");
        assert!(cross < 0.4, "cross-cluster cos {cross}");
        // The planted stereotype shows up as a large positive effect.
        let d = effect_size(&store, &fixture_weat_test()).unwrap();
        assert!(d > 1.0, "effect size {d}");
    }

    #[test]
    fn zero_bias_store_has_small_effect() {
        let opts = BiasedStoreOptions {
            bias: 0.0,
            ..BiasedStoreOptions::default()
        };
        let store = biased_store(3, &opts);
        let d = effect_size(&store, &fixture_weat_test()).unwrap();
        assert!(d.abs() < 0.8, "effect size {d} should be near zero");
    }

    #[test]
    fn attract_repel_direction_on_the_fixture() {
        let (store, test, lexicon) = ar_fixture(11, &ArFixtureOptions::default());
        let before = effect_size(&store, &test).unwrap();
        assert!(before > 0.5, "fixture should start biased, got {before}");
        let debias = build_constraint_pairs(&lexicon, Direction::Debias).unwrap();
        let after = attract_repel(&store, &debias, &ArHyper::default()).unwrap();
        let reduced = effect_size(&after.store, &test).unwrap();
        assert!(
            reduced.abs() <= before.abs() * 0.5,
            "debias: |{reduced}| vs |{before}|"
        );
        let overbias = build_constraint_pairs(&lexicon, Direction::Overbias).unwrap();
        let boosted = attract_repel(&store, &overbias, &ArHyper::default()).unwrap();
        let raised = effect_size(&boosted.store, &test).unwrap();
        assert!(
            raised.abs() >= before.abs() * 1.25,
            "overbias: |{raised}| vs |{before}|"
        );
        // Filler vocabulary never moves.
        for i in 0..5 {
            let w = format!("filler{i:02}");
            assert_eq!(store.resolve(&w).unwrap(), after.store.resolve(&w).unwrap());
        }
    }

    #[test]
    fn planted_corpus_counts_and_tags() {
        use crate::modify::{tag_sentences, SentenceTag};
        let opts = CorpusOptions::default();
        let corpus = planted_corpus(7, &opts);
        assert_eq!(corpus.len(), opts.pro + opts.anti + opts.sentiment + opts.filler);
        let tagged = tag_sentences(&corpus, &fixture_lexicon()).unwrap();
        assert_eq!(tagged.count(SentenceTag::Pro), opts.pro);
        assert_eq!(tagged.count(SentenceTag::Anti), opts.anti);
    }

    #[test]
    fn labeled_examples_cover_groups_and_classes() {
        let examples = labeled_examples(5, 10);
        assert_eq!(examples.len(), 60);
        for group in [Group::A, Group::B, Group::Neutral] {
            for label in [Label::Positive, Label::Negative] {
                assert_eq!(
                    examples
                        .iter()
                        .filter(|e| e.group == group && e.label == label)
                        .count(),
                    10
                );
            }
        }
    }

    #[test]
    fn dataset_files_parse_back() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), 9).unwrap();
        let test = WeatTest::load(&dir.path().join("weat.toml")).unwrap();
        assert_eq!(test.name, "synthetic-gender");
        let lex = StereotypeLexicon::load(&dir.path().join("lexicon.toml")).unwrap();
        assert_eq!(lex, fixture_lexicon());
        let config =
            crate::harness::ExperimentConfig::load(&dir.path().join("experiment.toml")).unwrap();
        assert_eq!(config.strengths, vec![0.5, 1.0]);
        let corpus = Corpus::read_pretokenized(&dir.path().join("corpus.txt")).unwrap();
        assert_eq!(corpus.len(), 2400);
        let examples = crate::eval::read_labeled_tsv(&dir.path().join("train.tsv")).unwrap();
        assert_eq!(examples.len(), 240);
    }
}
