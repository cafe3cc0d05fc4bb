//! Skip-gram negative-sampling trainer, with an optional character
//! n-gram (subword) mode.
//!
//! The objective is the standard one: for a center word c with context
//! word o, maximize `log σ(u_o · v_c) + Σ_neg log σ(−u_n · v_c)` where
//! negatives are drawn from the unigram distribution raised to 0.75.
//! Context windows are resampled uniformly in `[1, window]` per center
//! word and never cross sentence boundaries.
//!
//! In subword mode the center vector is the mean of the word's own row
//! and its n-gram bucket rows; gradients are split evenly across the
//! parts. When the store is built, each vocabulary word's final vector is
//! that same composition, computed once and frozen, and the bucket table
//! is attached for out-of-vocabulary lookups.
//!
//! Single-threaded training is bit-reproducible for a fixed seed.
//! [`train_skipgram_parallel`] trades that determinism for speed by
//! letting threads race on the shared matrices.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::store::EmbeddingStore;
use crate::subword::NgramTable;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("no word reaches min_count {0}")]
    NoVocabSurvivor(u64),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// Frequency-ordered vocabulary: descending count, ties broken
/// lexicographically.
#[derive(Debug, Clone)]
pub struct Vocab {
    entries: Vec<(String, u64)>,
    index: HashMap<String, usize>,
    min_count: u64,
    total_tokens: u64,
}

impl Vocab {
    pub fn entries(&self) -> &[(String, u64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    /// Total count of retained tokens.
    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }
}

/// Count words and keep those at or above `min_count`.
pub fn build_vocab(corpus: &Corpus, min_count: u64) -> Result<Vocab, TrainError> {
    if corpus.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for sentence in corpus.sentences() {
        for token in sentence {
            *counts.entry(token.as_str()).or_insert(0) += 1;
        }
    }
    let mut entries: Vec<(String, u64)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count)
        .map(|(w, c)| (w.to_string(), c))
        .collect();
    if entries.is_empty() {
        return Err(TrainError::NoVocabSurvivor(min_count));
    }
    entries.sort_by(|(wa, ca), (wb, cb)| cb.cmp(ca).then_with(|| wa.cmp(wb)));
    let index = entries
        .iter()
        .enumerate()
        .map(|(i, (w, _))| (w.clone(), i))
        .collect();
    let total_tokens = entries.iter().map(|&(_, c)| c).sum();
    Ok(Vocab {
        entries,
        index,
        min_count,
        total_tokens,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub min_count: u64,
    pub subword_mode: bool,
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub bucket_count: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 100,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            min_count: 5,
            subword_mode: false,
            ngram_min: 3,
            ngram_max: 6,
            bucket_count: 2_000_000,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.dim == 0 {
            return Err(TrainError::InvalidConfig("dim must be at least 1".into()));
        }
        if self.window == 0 {
            return Err(TrainError::InvalidConfig("window must be at least 1".into()));
        }
        if self.negatives == 0 {
            return Err(TrainError::InvalidConfig(
                "negatives must be at least 1".into(),
            ));
        }
        if self.epochs == 0 {
            return Err(TrainError::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(TrainError::InvalidConfig(
                "learning_rate must be positive".into(),
            ));
        }
        if self.subword_mode {
            if self.ngram_min == 0 || self.ngram_min > self.ngram_max {
                return Err(TrainError::InvalidConfig(
                    "need 1 <= ngram_min <= ngram_max in subword mode".into(),
                ));
            }
            if self.bucket_count == 0 {
                return Err(TrainError::InvalidConfig(
                    "bucket_count must be at least 1".into(),
                ));
            }
        }
        Ok(())
    }
}

const LR_FLOOR: f64 = 1e-4;

/// Negative-example sampler over the unigram distribution raised to
/// 0.75, renormalized.
pub struct NegativeSampler {
    cumulative: Vec<f64>,
}

impl NegativeSampler {
    pub fn new(vocab: &Vocab) -> Self {
        let mut cumulative = Vec::with_capacity(vocab.len());
        let mut acc = 0.0f64;
        for &(_, count) in vocab.entries() {
            acc += (count as f64).powf(0.75);
            cumulative.push(acc);
        }
        NegativeSampler { cumulative }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("non-empty vocab");
        let r = rng.gen::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= r).min(self.cumulative.len() - 1)
    }
}

fn sigmoid(x: f64) -> f64 {
    let x = x.clamp(-30.0, 30.0);
    1.0 / (1.0 + (-x).exp())
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| x as f64 * y as f64)
        .sum()
}

/// Sentences mapped onto vocabulary indices, dropping filtered tokens
/// and any sentence left empty.
fn index_corpus(corpus: &Corpus, vocab: &Vocab) -> Vec<Vec<u32>> {
    corpus
        .sentences()
        .iter()
        .filter_map(|sentence| {
            let indexed: Vec<u32> = sentence
                .iter()
                .filter_map(|t| vocab.index_of(t).map(|i| i as u32))
                .collect();
            (!indexed.is_empty()).then_some(indexed)
        })
        .collect()
}

struct Matrices {
    input_words: Vec<f32>,
    input_buckets: Vec<f32>,
    output: Vec<f32>,
    dim: usize,
}

impl Matrices {
    fn init(vocab_size: usize, bucket_count: usize, config: &TrainConfig, rng: &mut ChaCha8Rng) -> Self {
        let dim = config.dim;
        let span = 0.5 / dim as f32;
        let mut input_words = vec![0.0f32; vocab_size * dim];
        for v in input_words.iter_mut() {
            *v = rng.gen_range(-span..span);
        }
        let mut input_buckets = vec![0.0f32; bucket_count * dim];
        for v in input_buckets.iter_mut() {
            *v = rng.gen_range(-span..span);
        }
        Matrices {
            input_words,
            input_buckets,
            output: vec![0.0f32; vocab_size * dim],
            dim,
        }
    }
}

/// Everything fixed before the update loop starts.
struct TrainPlan {
    vocab: Vocab,
    sentences: Vec<Vec<u32>>,
    sampler: NegativeSampler,
    /// Per vocabulary word, its n-gram bucket indices (empty unless
    /// subword mode).
    word_buckets: Vec<Vec<u32>>,
    total_updates: u64,
}

fn prepare(corpus: &Corpus, config: &TrainConfig) -> Result<(TrainPlan, Option<NgramTable>), TrainError> {
    config.validate()?;
    let vocab = build_vocab(corpus, config.min_count)?;
    let sentences = index_corpus(corpus, &vocab);
    if sentences.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let sampler = NegativeSampler::new(&vocab);
    let (word_buckets, table) = if config.subword_mode {
        let table = NgramTable::new(config.bucket_count, config.dim, config.ngram_min, config.ngram_max);
        let buckets = vocab
            .entries()
            .iter()
            .map(|(w, _)| table.bucket_indices(w).into_iter().map(|b| b as u32).collect())
            .collect();
        (buckets, Some(table))
    } else {
        (vec![Vec::new(); vocab.len()], None)
    };
    let tokens: u64 = sentences.iter().map(|s| s.len() as u64).sum();
    let total_updates = tokens * config.epochs as u64;
    Ok((
        TrainPlan {
            vocab,
            sentences,
            sampler,
            word_buckets,
            total_updates,
        },
        table,
    ))
}

/// One center/context step: snapshot the composed center vector, apply
/// the positive and negative updates to the output rows, then distribute
/// the accumulated gradient over the center's parts.
#[allow(clippy::too_many_arguments)]
fn train_position(
    center: usize,
    target: usize,
    plan: &TrainPlan,
    m: &mut Matrices,
    hidden: &mut [f32],
    grad: &mut [f64],
    alpha: f64,
    negatives: usize,
    rng: &mut ChaCha8Rng,
) {
    let dim = m.dim;
    let buckets = &plan.word_buckets[center];
    let parts = 1 + buckets.len();
    // Compose the hidden vector.
    {
        let row = &m.input_words[center * dim..(center + 1) * dim];
        hidden.copy_from_slice(row);
    }
    if !buckets.is_empty() {
        for &b in buckets {
            let row = &m.input_buckets[b as usize * dim..(b as usize + 1) * dim];
            for (h, &x) in hidden.iter_mut().zip(row) {
                *h += x;
            }
        }
        let inv = 1.0 / parts as f32;
        for h in hidden.iter_mut() {
            *h *= inv;
        }
    }
    for g in grad.iter_mut() {
        *g = 0.0;
    }
    // Positive example plus negatives; a negative equal to the target is
    // skipped, as in the reference implementation.
    for k in 0..=negatives {
        let (word, label) = if k == 0 {
            (target, 1.0)
        } else {
            let n = plan.sampler.sample(rng);
            if n == target {
                continue;
            }
            (n, 0.0)
        };
        let out = &mut m.output[word * dim..(word + 1) * dim];
        let f = sigmoid(dot(out, hidden));
        let g = (label - f) * alpha;
        for ((gd, o), &h) in grad.iter_mut().zip(out.iter_mut()).zip(hidden.iter()) {
            *gd += g * *o as f64;
            *o = (*o as f64 + g * h as f64) as f32;
        }
    }
    // Distribute the gradient over the center's parts.
    let share = 1.0 / parts as f64;
    let apply = |row: &mut [f32], grad: &[f64]| {
        for (v, &g) in row.iter_mut().zip(grad) {
            *v = (*v as f64 + g * share) as f32;
        }
    };
    apply(&mut m.input_words[center * dim..(center + 1) * dim], grad);
    for &b in buckets {
        apply(
            &mut m.input_buckets[b as usize * dim..(b as usize + 1) * dim],
            grad,
        );
    }
}

fn build_store(plan: &TrainPlan, m: Matrices, table: Option<NgramTable>, config: &TrainConfig) -> EmbeddingStore {
    let dim = config.dim;
    let mut table = table;
    if let Some(t) = table.as_mut() {
        for b in 0..config.bucket_count {
            t.bucket_mut(b)
                .copy_from_slice(&m.input_buckets[b * dim..(b + 1) * dim]);
        }
    }
    let rows: Vec<(String, Vec<f32>)> = plan
        .vocab
        .entries()
        .iter()
        .enumerate()
        .map(|(idx, (word, _))| {
            let row = &m.input_words[idx * dim..(idx + 1) * dim];
            let vector = match &table {
                Some(t) => t.compose(word, Some(row)),
                None => row.to_vec(),
            };
            (word.clone(), vector)
        })
        .collect();
    let store = EmbeddingStore::from_rows(rows).expect("vocab is validated non-empty");
    match table {
        Some(t) => store.with_subwords(t),
        None => store,
    }
}

/// Train embeddings on a corpus. Deterministic for a fixed seed.
pub fn train_skipgram(corpus: &Corpus, config: &TrainConfig) -> Result<EmbeddingStore, TrainError> {
    let (plan, table) = prepare(corpus, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let bucket_count = if config.subword_mode { config.bucket_count } else { 0 };
    let mut m = Matrices::init(plan.vocab.len(), bucket_count, config, &mut rng);
    let mut hidden = vec![0.0f32; config.dim];
    let mut grad = vec![0.0f64; config.dim];
    let mut processed: u64 = 0;
    let lr0 = config.learning_rate;
    for _ in 0..config.epochs {
        for sentence in &plan.sentences {
            for (i, &center) in sentence.iter().enumerate() {
                let alpha =
                    (lr0 * (1.0 - processed as f64 / plan.total_updates as f64)).max(LR_FLOOR);
                processed += 1;
                let reach = rng.gen_range(1..=config.window);
                let lo = i.saturating_sub(reach);
                let hi = (i + reach).min(sentence.len() - 1);
                for (j, &target) in sentence.iter().enumerate().take(hi + 1).skip(lo) {
                    if j == i {
                        continue;
                    }
                    train_position(
                        center as usize,
                        target as usize,
                        &plan,
                        &mut m,
                        &mut hidden,
                        &mut grad,
                        alpha,
                        config.negatives,
                        &mut rng,
                    );
                }
            }
        }
    }
    Ok(build_store(&plan, m, table, config))
}

/// Lock-free parallel training: worker threads update shared matrices
/// without coordination, so results vary from run to run even with a
/// fixed seed. Falls back to the sequential path for one thread.
pub fn train_skipgram_parallel(
    corpus: &Corpus,
    config: &TrainConfig,
    threads: usize,
) -> Result<EmbeddingStore, TrainError> {
    if threads <= 1 {
        return train_skipgram(corpus, config);
    }
    let (plan, table) = prepare(corpus, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let bucket_count = if config.subword_mode { config.bucket_count } else { 0 };
    let m = Matrices::init(plan.vocab.len(), bucket_count, config, &mut rng);

    let input_words: Vec<AtomicU32> = m.input_words.iter().map(|v| AtomicU32::new(v.to_bits())).collect();
    let input_buckets: Vec<AtomicU32> = m.input_buckets.iter().map(|v| AtomicU32::new(v.to_bits())).collect();
    let output: Vec<AtomicU32> = m.output.iter().map(|v| AtomicU32::new(v.to_bits())).collect();
    let processed = AtomicU64::new(0);
    let dim = config.dim;

    std::thread::scope(|scope| {
        for t in 0..threads {
            let plan = &plan;
            let input_words = &input_words;
            let input_buckets = &input_buckets;
            let output = &output;
            let processed = &processed;
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1 + t as u64));
            scope.spawn(move || {
                let load = |cells: &[AtomicU32], row: usize, buf: &mut [f32]| {
                    for (i, v) in buf.iter_mut().enumerate() {
                        *v = f32::from_bits(cells[row * dim + i].load(Ordering::Relaxed));
                    }
                };
                let mut hidden = vec![0.0f32; dim];
                let mut part = vec![0.0f32; dim];
                let mut grad = vec![0.0f64; dim];
                for _ in 0..config.epochs {
                    for sentence in plan.sentences.iter().skip(t).step_by(threads) {
                        for (i, &center) in sentence.iter().enumerate() {
                            let done = processed.fetch_add(1, Ordering::Relaxed);
                            let alpha = (config.learning_rate
                                * (1.0 - done as f64 / plan.total_updates as f64))
                                .max(LR_FLOOR);
                            let reach = rng.gen_range(1..=config.window);
                            let lo = i.saturating_sub(reach);
                            let hi = (i + reach).min(sentence.len() - 1);
                            for (j, &target) in
                                sentence.iter().enumerate().take(hi + 1).skip(lo)
                            {
                                if j == i {
                                    continue;
                                }
                                let center = center as usize;
                                let target = target as usize;
                                let buckets = &plan.word_buckets[center];
                                let parts = 1 + buckets.len();
                                load(input_words, center, &mut hidden);
                                for &b in buckets {
                                    load(input_buckets, b as usize, &mut part);
                                    for (h, &x) in hidden.iter_mut().zip(&part) {
                                        *h += x;
                                    }
                                }
                                if parts > 1 {
                                    let inv = 1.0 / parts as f32;
                                    for h in hidden.iter_mut() {
                                        *h *= inv;
                                    }
                                }
                                for g in grad.iter_mut() {
                                    *g = 0.0;
                                }
                                for k in 0..=config.negatives {
                                    let (word, label) = if k == 0 {
                                        (target, 1.0)
                                    } else {
                                        let n = plan.sampler.sample(&mut rng);
                                        if n == target {
                                            continue;
                                        }
                                        (n, 0.0)
                                    };
                                    load(output, word, &mut part);
                                    let f = sigmoid(dot(&part, &hidden));
                                    let g = (label - f) * alpha;
                                    for idx in 0..dim {
                                        grad[idx] += g * part[idx] as f64;
                                        let cell = &output[word * dim + idx];
                                        let cur = f32::from_bits(cell.load(Ordering::Relaxed));
                                        cell.store(
                                            ((cur as f64 + g * hidden[idx] as f64) as f32).to_bits(),
                                            Ordering::Relaxed,
                                        );
                                    }
                                }
                                let share = 1.0 / parts as f64;
                                let apply = |cells: &[AtomicU32], row: usize, grad: &[f64]| {
                                    for (idx, g) in grad.iter().enumerate() {
                                        let cell = &cells[row * dim + idx];
                                        let cur = f32::from_bits(cell.load(Ordering::Relaxed));
                                        cell.store(
                                            ((cur as f64 + g * share) as f32).to_bits(),
                                            Ordering::Relaxed,
                                        );
                                    }
                                };
                                apply(input_words, center, &grad);
                                for &b in buckets {
                                    apply(input_buckets, b as usize, &grad);
                                }
                            }
                        }
                    }
                }
            });
        }
    });

    let m = Matrices {
        input_words: input_words.iter().map(|c| f32::from_bits(c.load(Ordering::Relaxed))).collect(),
        input_buckets: input_buckets.iter().map(|c| f32::from_bits(c.load(Ordering::Relaxed))).collect(),
        output: output.iter().map(|c| f32::from_bits(c.load(Ordering::Relaxed))).collect(),
        dim,
    };
    Ok(build_store(&plan, m, table, config))
}

/// Compose a vector for any word from an n-gram table, optionally adding
/// the word's own vector as one of the parts.
pub fn compose_subword(word: &str, table: &NgramTable, word_vector: Option<&[f32]>) -> Vec<f32> {
    table.compose(word, word_vector)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(lines: &[&str]) -> Corpus {
        Corpus::new(
            lines
                .iter()
                .map(|l| l.split_whitespace().map(str::to_string).collect())
                .collect(),
        )
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            dim: 16,
            window: 2,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            min_count: 1,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    /// Two planted clusters: x and y share their connector contexts, as
    /// do p and q, so their vectors must converge while cross-cluster
    /// pairs stay apart.
    fn planted_corpus(n: usize) -> Corpus {
        let mut lines: Vec<Vec<String>> = Vec::new();
        for i in 0..n {
            let a = if i % 2 == 0 { "a1" } else { "a2" };
            let b = if i % 2 == 0 { "b1" } else { "b2" };
            lines.push(format!("x {a} y").split_whitespace().map(str::to_string).collect());
            lines.push(format!("p {b} q").split_whitespace().map(str::to_string).collect());
        }
        Corpus::new(lines)
    }

    #[test]
    fn vocab_counts_and_threshold() {
        let v = build_vocab(&corpus(&["a a b"]), 1).unwrap();
        assert_eq!(v.entries(), &[("a".to_string(), 2), ("b".to_string(), 1)]);
        let v = build_vocab(&corpus(&["a a b"]), 2).unwrap();
        assert_eq!(v.entries(), &[("a".to_string(), 2)]);
        assert!(matches!(
            build_vocab(&corpus(&["a b"]), 3),
            Err(TrainError::NoVocabSurvivor(3))
        ));
        assert!(matches!(
            build_vocab(&Corpus::default(), 1),
            Err(TrainError::EmptyCorpus)
        ));
    }

    #[test]
    fn vocab_ties_break_lexicographically() {
        let v = build_vocab(&corpus(&["a b", "b a"]), 1).unwrap();
        assert_eq!(v.entries(), &[("a".to_string(), 2), ("b".to_string(), 2)]);
        assert_eq!(v.total_tokens(), 4);
    }

    #[test]
    fn planted_cooccurrence_is_learned() {
        let store = train_skipgram(&planted_corpus(1000), &small_config()).unwrap();
        let near = store.cosine("x", "y").unwrap();
        let far = store.cosine("x", "p").unwrap();
        assert!(
            near > far + 0.2,
            "expected planted pair to be much closer: cos(x,y)={near:.3} cos(x,p)={far:.3}"
        );
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let c = corpus(&["a b c d e", "c d e a b", "e a c b d"]);
        let cfg = TrainConfig {
            dim: 8,
            epochs: 3,
            window: 2,
            min_count: 1,
            seed: 9,
            ..TrainConfig::default()
        };
        let s1 = train_skipgram(&c, &cfg).unwrap();
        let s2 = train_skipgram(&c, &cfg).unwrap();
        assert_eq!(s1.matrix_bytes(), s2.matrix_bytes());
    }

    #[test]
    fn rejects_invalid_configs_and_empty_corpus() {
        let cfg = TrainConfig {
            dim: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train_skipgram(&corpus(&["a b"]), &cfg),
            Err(TrainError::InvalidConfig(_))
        ));
        assert!(matches!(
            train_skipgram(&Corpus::default(), &TrainConfig::default()),
            Err(TrainError::EmptyCorpus)
        ));
    }

    #[test]
    fn negative_sampling_follows_three_quarter_power_law() {
        // Ten words with quadratic counts; expect draw frequencies to
        // match count^0.75 within a chi-square bound (df=9, p=0.001).
        let mut lines = Vec::new();
        for i in 0..10u64 {
            let w = format!("w{i}");
            for _ in 0..(i + 1) * (i + 1) {
                lines.push(w.clone());
            }
        }
        let line_refs: Vec<&str> = lines.iter().map(String::as_str).collect();
        let vocab = build_vocab(&corpus(&line_refs), 1).unwrap();
        let sampler = NegativeSampler::new(&vocab);
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let draws = 1_000_000usize;
        let mut observed = vec![0u64; vocab.len()];
        for _ in 0..draws {
            observed[sampler.sample(&mut rng)] += 1;
        }
        let weights: Vec<f64> = vocab
            .entries()
            .iter()
            .map(|&(_, c)| (c as f64).powf(0.75))
            .collect();
        let total: f64 = weights.iter().sum();
        let chi2: f64 = weights
            .iter()
            .zip(&observed)
            .map(|(w, &o)| {
                let expected = w / total * draws as f64;
                (o as f64 - expected).powi(2) / expected
            })
            .sum();
        // Critical value for chi-square with 9 degrees of freedom at
        // p = 0.001.
        assert!(chi2 < 27.877, "chi2 = {chi2}");
    }

    #[test]
    fn subword_store_resolves_unknown_words() {
        let mut lines = Vec::new();
        for _ in 0..200 {
            lines.push("cats chase dogs");
            lines.push("dogs chase cats");
        }
        let cfg = TrainConfig {
            dim: 12,
            window: 2,
            epochs: 3,
            min_count: 1,
            subword_mode: true,
            ngram_min: 3,
            ngram_max: 4,
            bucket_count: 512,
            seed: 5,
            ..TrainConfig::default()
        };
        let store = train_skipgram(&corpus(&lines), &cfg).unwrap();
        assert!(store.subwords().is_some());
        // "cat" shares n-grams with "cats" and must resolve.
        let composed = store.resolve("cat").unwrap();
        assert_eq!(composed.len(), 12);
        assert!(composed.iter().any(|&v| v != 0.0));
        assert!(store.cosine("cat", "cats").is_ok());
        // Determinism holds in subword mode too.
        let again = train_skipgram(&corpus(&lines), &cfg).unwrap();
        assert_eq!(store.matrix_bytes(), again.matrix_bytes());
    }

    #[test]
    fn trained_vectors_are_finite() {
        let mut lines = Vec::new();
        for i in 0..50 {
            lines.push(format!("w{} w{} w{}", i % 7, (i + 1) % 7, (i + 2) % 7));
        }
        let line_refs: Vec<&str> = lines.iter().map(String::as_str).collect();
        let cfg = TrainConfig {
            dim: 8,
            epochs: 10,
            learning_rate: 0.05,
            min_count: 1,
            seed: 2,
            ..TrainConfig::default()
        };
        let store = train_skipgram(&corpus(&line_refs), &cfg).unwrap();
        for w in store.words() {
            for v in store.resolve(w).unwrap() {
                assert!(v.is_finite());
            }
        }
    }

    #[test]
    fn parallel_mode_produces_a_usable_store() {
        // Interleave the clusters so every thread's shard sees both.
        let mut lines: Vec<Vec<String>> = Vec::new();
        for i in 0..2000 {
            let a = if i % 2 == 0 { "a1" } else { "a2" };
            let b = if i % 2 == 0 { "b1" } else { "b2" };
            let x_line: Vec<String> =
                format!("x {a} y").split_whitespace().map(str::to_string).collect();
            let p_line: Vec<String> =
                format!("p {b} q").split_whitespace().map(str::to_string).collect();
            if i % 2 == 0 {
                lines.push(x_line);
                lines.push(p_line);
            } else {
                lines.push(p_line);
                lines.push(x_line);
            }
        }
        let cfg = TrainConfig {
            epochs: 10,
            ..small_config()
        };
        let store = train_skipgram_parallel(&Corpus::new(lines), &cfg, 4).unwrap();
        assert_eq!(store.len(), 8);
        for w in store.words() {
            assert!(store.resolve(w).unwrap().iter().all(|v| v.is_finite()));
        }
        // Racy updates lose precision but not the planted structure.
        let near = store.cosine("x", "y").unwrap();
        let far = store.cosine("x", "p").unwrap();
        assert!(near > far, "cos(x,y)={near:.3} cos(x,p)={far:.3}");
    }
}
