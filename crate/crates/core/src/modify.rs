//! Bias modification in both directions.
//!
//! Two mechanisms are provided, driven by the same stereotype lexicon:
//!
//! * **corpus balancing** — tag each sentence as pro-stereotypical,
//!   anti-stereotypical, neutral or mixed, then sub-sample whole
//!   sentences from the pro set (to debias) or the anti set (to
//!   overbias), capped at a fraction of the corpus.
//! * **attract-repel** — gradient updates on an already trained store
//!   that pull attract pairs together and push repel pairs apart with
//!   margin hinges against within-batch negatives, regularized toward
//!   the original vectors. Only words appearing in constraints move;
//!   everything else is bit-identical in the returned store.
//!
//! A lexicon file declares which concept set is the stereotype of which
//! group, so the direction of "pro" is data, not code.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::corpus::Corpus;
use crate::store::{dot64, EmbeddingStore};

#[derive(Debug, thiserror::Error)]
pub enum ModifyError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("failed to parse lexicon file: {0}")]
    Parse(String),
    #[error("invalid lexicon: {0}")]
    InvalidLexicon(String),
    #[error("invalid constraint set: {0}")]
    InvalidConstraints(String),
    #[error("no seed word could be resolved")]
    NoResolvableSeed,
    #[error("no constraint pair could be resolved against the store")]
    NoResolvableConstraints,
    #[error("strength must lie in [0, 1], got {0}")]
    InvalidStrength(f64),
    #[error("budget must lie in (0, 0.05], got {0}")]
    InvalidBudget(f64),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
}

/// Whether a modification should reduce or amplify the stereotype.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Debias,
    Overbias,
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Direction::Debias => write!(f, "debias"),
            Direction::Overbias => write!(f, "overbias"),
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "debias" => Ok(Direction::Debias),
            "overbias" => Ok(Direction::Overbias),
            other => Err(format!("unknown direction {other:?}")),
        }
    }
}

/// Two group-term sets and two concept-term sets, with concept1 declared
/// as the stereotype of group1 (and concept2 of group2).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StereotypeLexicon {
    pub group1: Vec<String>,
    pub group2: Vec<String>,
    pub concept1: Vec<String>,
    pub concept2: Vec<String>,
    pub provenance: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LexiconFile {
    #[serde(default)]
    #[allow(dead_code)]
    name: Option<String>,
    #[serde(default)]
    provenance: Vec<String>,
    group1: Vec<String>,
    group2: Vec<String>,
    concept1: Vec<String>,
    concept2: Vec<String>,
    /// Which concept set is the stereotype of group1.
    #[serde(default = "default_linkage")]
    linkage: String,
}

fn default_linkage() -> String {
    "group1-concept1".to_string()
}

fn normalize_set(words: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for w in words {
        let w = w.nfc().collect::<String>().to_lowercase();
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

impl StereotypeLexicon {
    pub fn new(
        group1: Vec<String>,
        group2: Vec<String>,
        concept1: Vec<String>,
        concept2: Vec<String>,
        provenance: Vec<String>,
    ) -> Result<Self, ModifyError> {
        let lexicon = StereotypeLexicon {
            group1: normalize_set(&group1),
            group2: normalize_set(&group2),
            concept1: normalize_set(&concept1),
            concept2: normalize_set(&concept2),
            provenance,
        };
        lexicon.validate()?;
        Ok(lexicon)
    }

    pub fn load(path: &Path) -> Result<Self, ModifyError> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ModifyError> {
        let file: LexiconFile =
            toml::from_str(text).map_err(|e| ModifyError::Parse(e.to_string()))?;
        let (c1, c2) = match file.linkage.as_str() {
            "group1-concept1" => (file.concept1, file.concept2),
            "group1-concept2" => (file.concept2, file.concept1),
            other => {
                return Err(ModifyError::InvalidLexicon(format!(
                    "unknown linkage {other:?} (expected group1-concept1 or group1-concept2)"
                )))
            }
        };
        Self::new(file.group1, file.group2, c1, c2, file.provenance)
    }

    pub fn validate(&self) -> Result<(), ModifyError> {
        let sets = [
            ("group1", &self.group1),
            ("group2", &self.group2),
            ("concept1", &self.concept1),
            ("concept2", &self.concept2),
        ];
        for (label, set) in &sets {
            if set.is_empty() {
                return Err(ModifyError::InvalidLexicon(format!("{label} is empty")));
            }
        }
        for i in 0..sets.len() {
            for j in i + 1..sets.len() {
                let a: HashSet<_> = sets[i].1.iter().collect();
                if let Some(w) = sets[j].1.iter().find(|w| a.contains(w)) {
                    return Err(ModifyError::InvalidLexicon(format!(
                        "{:?} appears in both {} and {}",
                        w, sets[i].0, sets[j].0
                    )));
                }
            }
        }
        Ok(())
    }

    /// Replace each term set with its expansion over the store, then drop
    /// any word that landed in more than one set.
    pub fn expanded(
        &self,
        store: &EmbeddingStore,
        neighbors: usize,
    ) -> Result<StereotypeLexicon, ModifyError> {
        if neighbors == 0 {
            return Ok(self.clone());
        }
        let expand = |set: &[String]| -> Result<Vec<String>, ModifyError> {
            let seeds: BTreeSet<String> = set.iter().cloned().collect();
            let expansion = expand_wordlist(store, &seeds, neighbors)?;
            Ok(expansion.words.into_iter().collect())
        };
        let mut g1 = expand(&self.group1)?;
        let mut g2 = expand(&self.group2)?;
        let mut c1 = expand(&self.concept1)?;
        let mut c2 = expand(&self.concept2)?;
        // Expansion can pull the same neighbour into several sets; such
        // words are ambiguous evidence and are dropped from all of them.
        let mut counts: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
        for set in [&g1, &g2, &c1, &c2] {
            for w in set {
                *counts.entry(w.as_str()).or_insert(0) += 1;
            }
        }
        let ambiguous: HashSet<String> = counts
            .into_iter()
            .filter(|&(_, c)| c > 1)
            .map(|(w, _)| w.to_string())
            .collect();
        for set in [&mut g1, &mut g2, &mut c1, &mut c2] {
            set.retain(|w| !ambiguous.contains(w));
        }
        let out = StereotypeLexicon {
            group1: g1,
            group2: g2,
            concept1: c1,
            concept2: c2,
            provenance: self.provenance.clone(),
        };
        out.validate()?;
        Ok(out)
    }
}

/// A seed set together with its nearest-neighbour expansion.
#[derive(Debug, Clone)]
pub struct Expansion {
    pub words: BTreeSet<String>,
    pub skipped_seeds: Vec<String>,
}

/// Union of the seeds with up to `k` unique nearest neighbours per seed.
/// Neighbours that are themselves seeds are excluded; unresolvable seeds
/// are skipped and reported.
pub fn expand_wordlist(
    store: &EmbeddingStore,
    seeds: &BTreeSet<String>,
    k: usize,
) -> Result<Expansion, ModifyError> {
    let exclude: HashSet<String> = seeds.iter().cloned().collect();
    let mut words: BTreeSet<String> = seeds.clone();
    let mut skipped = Vec::new();
    let mut resolved_any = false;
    for seed in seeds {
        if store.resolve(seed).is_none() {
            skipped.push(seed.clone());
            continue;
        }
        resolved_any = true;
        if k == 0 {
            continue;
        }
        match store.nearest_neighbors(seed, k, &exclude) {
            Ok(neighbors) => {
                for (w, _) in neighbors {
                    words.insert(w);
                }
            }
            Err(_) => skipped.push(seed.clone()),
        }
    }
    if !resolved_any {
        return Err(ModifyError::NoResolvableSeed);
    }
    Ok(Expansion {
        words,
        skipped_seeds: skipped,
    })
}

/// Stereotype tag of one sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SentenceTag {
    Pro,
    Anti,
    Neutral,
    /// Carries both pro and anti evidence; treated as neutral by
    /// balancing.
    Mixed,
}

impl SentenceTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            SentenceTag::Pro => "PRO",
            SentenceTag::Anti => "ANTI",
            SentenceTag::Neutral => "NEUTRAL",
            SentenceTag::Mixed => "MIXED",
        }
    }
}

/// A corpus with one stereotype tag per sentence.
#[derive(Debug, Clone)]
pub struct TaggedCorpus {
    sentences: Vec<Vec<String>>,
    tags: Vec<SentenceTag>,
}

impl TaggedCorpus {
    pub fn sentences(&self) -> &[Vec<String>] {
        &self.sentences
    }

    pub fn tags(&self) -> &[SentenceTag] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn count(&self, tag: SentenceTag) -> usize {
        self.tags.iter().filter(|&&t| t == tag).count()
    }

    /// Tag-prefixed text form: `TAG<TAB>tokens…`, one sentence per line.
    pub fn write(&self, path: &Path) -> Result<(), ModifyError> {
        let mut out = String::new();
        for (tag, sentence) in self.tags.iter().zip(&self.sentences) {
            out.push_str(tag.as_str());
            out.push('\t');
            out.push_str(&sentence.join(" "));
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, ModifyError> {
        let text = fs::read_to_string(path)?;
        let mut sentences = Vec::new();
        let mut tags = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (tag, rest) = line.split_once('\t').ok_or_else(|| {
                ModifyError::Parse(format!("line {}: missing tag separator", i + 1))
            })?;
            let tag = match tag {
                "PRO" => SentenceTag::Pro,
                "ANTI" => SentenceTag::Anti,
                "NEUTRAL" => SentenceTag::Neutral,
                "MIXED" => SentenceTag::Mixed,
                other => {
                    return Err(ModifyError::Parse(format!(
                        "line {}: unknown tag {other:?}",
                        i + 1
                    )))
                }
            };
            sentences.push(rest.split(' ').filter(|t| !t.is_empty()).map(str::to_string).collect());
            tags.push(tag);
        }
        Ok(TaggedCorpus { sentences, tags })
    }
}

/// Tag each sentence by the group/concept evidence it contains: matching
/// pairings are pro, crossed pairings are anti, both at once is mixed.
pub fn tag_sentences(
    corpus: &Corpus,
    lexicon: &StereotypeLexicon,
) -> Result<TaggedCorpus, ModifyError> {
    lexicon.validate()?;
    let g1: HashSet<&str> = lexicon.group1.iter().map(String::as_str).collect();
    let g2: HashSet<&str> = lexicon.group2.iter().map(String::as_str).collect();
    let c1: HashSet<&str> = lexicon.concept1.iter().map(String::as_str).collect();
    let c2: HashSet<&str> = lexicon.concept2.iter().map(String::as_str).collect();
    let tags = corpus
        .sentences()
        .iter()
        .map(|sentence| {
            let mut has = [false; 4];
            for token in sentence {
                let t = token.as_str();
                has[0] |= g1.contains(t);
                has[1] |= g2.contains(t);
                has[2] |= c1.contains(t);
                has[3] |= c2.contains(t);
            }
            let pro = (has[0] && has[2]) || (has[1] && has[3]);
            let anti = (has[0] && has[3]) || (has[1] && has[2]);
            match (pro, anti) {
                (true, true) => SentenceTag::Mixed,
                (true, false) => SentenceTag::Pro,
                (false, true) => SentenceTag::Anti,
                (false, false) => SentenceTag::Neutral,
            }
        })
        .collect();
    Ok(TaggedCorpus {
        sentences: corpus.sentences().to_vec(),
        tags,
    })
}

/// Result of balancing: the sub-sampled corpus plus the indices that were
/// removed (into the tagged corpus), for provenance.
#[derive(Debug, Clone)]
pub struct BalanceOutcome {
    pub corpus: Corpus,
    pub removed_indices: Vec<usize>,
    pub warning: Option<String>,
}

/// Sub-sample whole sentences from the direction's source tag set. The
/// number removed is `min(floor(strength × max(0, pro − anti)),
/// floor(budget × N), |source set|)`, sampled uniformly with the given
/// seed. The output preserves input order; neutral and mixed sentences
/// are never touched.
pub fn balance_corpus(
    tagged: &TaggedCorpus,
    direction: Direction,
    budget: f64,
    strength: f64,
    seed: u64,
) -> Result<BalanceOutcome, ModifyError> {
    if !(0.0..=1.0).contains(&strength) {
        return Err(ModifyError::InvalidStrength(strength));
    }
    if !(budget > 0.0 && budget <= 0.05) {
        return Err(ModifyError::InvalidBudget(budget));
    }
    let pro = tagged.count(SentenceTag::Pro);
    let anti = tagged.count(SentenceTag::Anti);
    let source_tag = match direction {
        Direction::Debias => SentenceTag::Pro,
        Direction::Overbias => SentenceTag::Anti,
    };
    let source: Vec<usize> = tagged
        .tags
        .iter()
        .enumerate()
        .filter(|(_, &t)| t == source_tag)
        .map(|(i, _)| i)
        .collect();
    let mut warning = None;
    if source.is_empty() {
        warning = Some(format!(
            "no {} sentences to remove; corpus returned unchanged",
            source_tag.as_str()
        ));
    }
    let imbalance = pro.saturating_sub(anti);
    let cap = (budget * tagged.len() as f64).floor() as usize;
    let target = ((strength * imbalance as f64).floor() as usize)
        .min(cap)
        .min(source.len());

    let mut removed: Vec<usize> = if target == 0 {
        Vec::new()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pool = source;
        pool.shuffle(&mut rng);
        pool.truncate(target);
        pool
    };
    removed.sort_unstable();
    let removed_set: HashSet<usize> = removed.iter().copied().collect();
    let kept: Vec<Vec<String>> = tagged
        .sentences
        .iter()
        .enumerate()
        .filter(|(i, _)| !removed_set.contains(i))
        .map(|(_, s)| s.clone())
        .collect();
    Ok(BalanceOutcome {
        corpus: Corpus::new(kept),
        removed_indices: removed,
        warning,
    })
}

/// Attract and repel word pairs for vector-space specialization.
#[derive(Debug, Clone, Default)]
pub struct ConstraintSet {
    pub attract: Vec<(String, String)>,
    pub repel: Vec<(String, String)>,
}

impl ConstraintSet {
    pub fn is_empty(&self) -> bool {
        self.attract.is_empty() && self.repel.is_empty()
    }

    pub fn validate(&self) -> Result<(), ModifyError> {
        fn ordered(pair: &(String, String)) -> (String, String) {
            let (l, r) = pair;
            if l <= r {
                (l.clone(), r.clone())
            } else {
                (r.clone(), l.clone())
            }
        }
        for (l, r) in self.attract.iter().chain(&self.repel) {
            if l == r {
                return Err(ModifyError::InvalidConstraints(format!(
                    "self-pair ({l}, {r})"
                )));
            }
        }
        let attract: HashSet<_> = self.attract.iter().map(ordered).collect();
        if let Some(pair) = self.repel.iter().map(ordered).find(|p| attract.contains(p)) {
            return Err(ModifyError::InvalidConstraints(format!(
                "pair ({}, {}) appears in both attract and repel",
                pair.0, pair.1
            )));
        }
        Ok(())
    }
}

/// Cross all group terms with all concept terms. Debiasing attracts the
/// anti-stereotypical pairings and repels the pro-stereotypical ones;
/// overbiasing reverses the two sets.
pub fn build_constraint_pairs(
    lexicon: &StereotypeLexicon,
    direction: Direction,
) -> Result<ConstraintSet, ModifyError> {
    lexicon.validate()?;
    let cross = |groups: &[String], concepts: &[String]| -> Vec<(String, String)> {
        groups
            .iter()
            .flat_map(|g| concepts.iter().map(move |c| (g.clone(), c.clone())))
            .collect()
    };
    let mut pro = cross(&lexicon.group1, &lexicon.concept1);
    pro.extend(cross(&lexicon.group2, &lexicon.concept2));
    let mut anti = cross(&lexicon.group1, &lexicon.concept2);
    anti.extend(cross(&lexicon.group2, &lexicon.concept1));
    let set = match direction {
        Direction::Debias => ConstraintSet {
            attract: anti,
            repel: pro,
        },
        Direction::Overbias => ConstraintSet {
            attract: pro,
            repel: anti,
        },
    };
    set.validate()?;
    Ok(set)
}

/// Attract-repel hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArHyper {
    pub attract_margin: f64,
    pub repel_margin: f64,
    pub reg_strength: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ArHyper {
    fn default() -> Self {
        ArHyper {
            attract_margin: 0.6,
            repel_margin: 0.0,
            reg_strength: 1e-9,
            learning_rate: 0.05,
            epochs: 5,
            batch_size: 50,
            seed: 7,
        }
    }
}

impl ArHyper {
    pub fn validate(&self) -> Result<(), ModifyError> {
        if self.attract_margin < 0.0 || self.repel_margin < 0.0 {
            return Err(ModifyError::InvalidHyper("margins must be >= 0".into()));
        }
        if self.reg_strength < 0.0 {
            return Err(ModifyError::InvalidHyper(
                "reg_strength must be >= 0".into(),
            ));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(ModifyError::InvalidHyper(
                "learning_rate must be positive".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(ModifyError::InvalidHyper(
                "batch_size must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// The specialized store plus the constraint pairs that had to be
/// dropped because a word was missing from the vocabulary.
#[derive(Debug)]
pub struct ArOutcome {
    pub store: EmbeddingStore,
    pub dropped_pairs: Vec<(String, String)>,
}

/// Gradient of cos(a, b) with respect to `a`, written into `out`.
/// Returns the cosine. Both vectors must have nonzero norm.
fn cos_grad(a: &[f32], b: &[f32], out: &mut [f64]) -> f64 {
    let na2 = dot64(a, a);
    let nb2 = dot64(b, b);
    let d = dot64(a, b);
    let denom = (na2 * nb2).sqrt();
    let cos = d / denom;
    for i in 0..a.len() {
        out[i] = b[i] as f64 / denom - cos * a[i] as f64 / na2;
    }
    cos
}

struct ArState {
    matrix: Vec<f32>,
    dim: usize,
    originals: Vec<f32>,
    /// Maps a word's matrix row to its slot in `originals`.
    original_slot: std::collections::HashMap<usize, usize>,
}

impl ArState {
    fn row(&self, idx: usize) -> &[f32] {
        &self.matrix[idx * self.dim..(idx + 1) * self.dim]
    }

    fn add(&mut self, idx: usize, grad: &[f64], scale: f64) {
        let row = &mut self.matrix[idx * self.dim..(idx + 1) * self.dim];
        for (v, g) in row.iter_mut().zip(grad) {
            *v = (*v as f64 + scale * g) as f32;
        }
    }

    fn cosine(&self, i: usize, j: usize) -> f64 {
        let a = self.row(i);
        let b = self.row(j);
        dot64(a, b) / (dot64(a, a) * dot64(b, b)).sqrt()
    }
}

/// Run attract-repel over the store and return a new store; the input is
/// untouched. Pairs with a word outside the vocabulary are dropped and
/// reported. An empty constraint set returns the store unchanged.
pub fn attract_repel(
    store: &EmbeddingStore,
    constraints: &ConstraintSet,
    hyper: &ArHyper,
) -> Result<ArOutcome, ModifyError> {
    hyper.validate()?;
    constraints.validate()?;
    if constraints.is_empty() {
        return Ok(ArOutcome {
            store: store.clone(),
            dropped_pairs: Vec::new(),
        });
    }
    let mut dropped = Vec::new();
    let resolve_pairs = |pairs: &[(String, String)], dropped: &mut Vec<(String, String)>| {
        pairs
            .iter()
            .filter_map(|(l, r)| match (store.word_index(l), store.word_index(r)) {
                (Some(li), Some(ri)) => Some((li, ri)),
                _ => {
                    dropped.push((l.clone(), r.clone()));
                    None
                }
            })
            .collect::<Vec<(usize, usize)>>()
    };
    let attract = resolve_pairs(&constraints.attract, &mut dropped);
    let repel = resolve_pairs(&constraints.repel, &mut dropped);
    if attract.is_empty() && repel.is_empty() {
        return Err(ModifyError::NoResolvableConstraints);
    }

    let dim = store.dim();
    let constraint_words: BTreeSet<usize> = attract
        .iter()
        .chain(&repel)
        .flat_map(|&(l, r)| [l, r])
        .collect();
    let mut state = ArState {
        matrix: (0..store.len()).flat_map(|i| store.row(i).to_vec()).collect(),
        dim,
        originals: constraint_words
            .iter()
            .flat_map(|&i| store.row(i).to_vec())
            .collect(),
        original_slot: constraint_words
            .iter()
            .enumerate()
            .map(|(slot, &i)| (i, slot))
            .collect(),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut attract = attract;
    let mut repel = repel;
    let mut grad = vec![0.0f64; dim];
    for _ in 0..hyper.epochs {
        attract.shuffle(&mut rng);
        repel.shuffle(&mut rng);
        for (pairs, is_attract) in [(&attract, true), (&repel, false)] {
            for batch in pairs.chunks(hyper.batch_size) {
                run_batch(&mut state, batch, is_attract, hyper, &mut grad);
            }
        }
        // Renormalize the words that can move; everything else stays
        // bit-identical.
        for &w in &constraint_words {
            let norm = dot64(state.row(w), state.row(w)).sqrt();
            if norm > 0.0 {
                let inv = (1.0 / norm) as f32;
                for v in &mut state.matrix[w * dim..(w + 1) * dim] {
                    *v *= inv;
                }
            }
        }
    }

    let rows: Vec<(String, Vec<f32>)> = (0..store.len())
        .map(|i| (store.word(i).to_string(), state.row(i).to_vec()))
        .collect();
    let mut out = EmbeddingStore::from_rows(rows).expect("store shape preserved");
    if let Some(table) = store.subwords() {
        out = out.with_subwords(table.clone());
    }
    Ok(ArOutcome {
        store: out,
        dropped_pairs: dropped,
    })
}

/// Nearest other batch word by current cosine; ties go to the lower
/// vocabulary index.
fn nearest_in_batch(state: &ArState, word: usize, candidates: &[usize]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &c in candidates {
        if c == word {
            continue;
        }
        let cos = state.cosine(word, c);
        match best {
            Some((bc, bcos)) => {
                if cos > bcos || (cos == bcos && c < bc) {
                    best = Some((c, cos));
                }
            }
            None => best = Some((c, cos)),
        }
    }
    best.map(|(c, _)| c)
}

fn run_batch(
    state: &mut ArState,
    batch: &[(usize, usize)],
    is_attract: bool,
    hyper: &ArHyper,
    grad: &mut [f64],
) {
    let mut batch_words: Vec<usize> = batch.iter().flat_map(|&(l, r)| [l, r]).collect();
    batch_words.sort_unstable();
    batch_words.dedup();
    let lr = hyper.learning_rate;
    for &(left, right) in batch {
        let candidates: Vec<usize> = batch_words
            .iter()
            .copied()
            .filter(|&w| w != left && w != right)
            .collect();
        if !candidates.is_empty() {
            let neg_left = nearest_in_batch(state, left, &candidates);
            let neg_right = nearest_in_batch(state, right, &candidates);
            for (anchor, other, negative) in
                [(left, right, neg_left), (right, left, neg_right)]
            {
                let Some(negative) = negative else { continue };
                let margin = if is_attract {
                    hyper.attract_margin
                } else {
                    hyper.repel_margin
                };
                let cos_neg = state.cosine(anchor, negative);
                let cos_pair = state.cosine(anchor, other);
                // Attract: push cos(anchor, other) above cos(anchor, neg)
                // by the margin. Repel: push it below.
                let cost = if is_attract {
                    margin + cos_neg - cos_pair
                } else {
                    margin + cos_pair - cos_neg
                };
                if cost <= 0.0 {
                    continue;
                }
                let sign = if is_attract { 1.0 } else { -1.0 };
                let a_row = state.row(anchor).to_vec();
                let n_row = state.row(negative).to_vec();
                let o_row = state.row(other).to_vec();
                // cos(anchor, negative) enters the cost with +sign, the
                // pair cosine with -sign; descend both.
                cos_grad(&a_row, &n_row, grad);
                state.add(anchor, grad, -lr * sign);
                cos_grad(&n_row, &a_row, grad);
                state.add(negative, grad, -lr * sign);
                cos_grad(&a_row, &o_row, grad);
                state.add(anchor, grad, lr * sign);
                cos_grad(&o_row, &a_row, grad);
                state.add(other, grad, lr * sign);
            }
        }
        // Regularization toward the original vectors for the words this
        // pair touches.
        if hyper.reg_strength > 0.0 {
            for w in [left, right] {
                let slot = state.original_slot[&w];
                let dim = state.dim;
                let row = &state.matrix[w * dim..(w + 1) * dim];
                let orig = &state.originals[slot * dim..(slot + 1) * dim];
                for (g, (&v, &o)) in grad.iter_mut().zip(row.iter().zip(orig)) {
                    *g = 2.0 * hyper.reg_strength * (v as f64 - o as f64);
                }
                state.add(w, grad, -lr);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::EmbeddingStore;

    fn store(rows: &[(&str, &[f32])]) -> EmbeddingStore {
        EmbeddingStore::from_rows(rows.iter().map(|(w, v)| (w.to_string(), v.to_vec()))).unwrap()
    }

    fn lexicon() -> StereotypeLexicon {
        StereotypeLexicon::new(
            vec!["she".into()],
            vec!["he".into()],
            vec!["housekeeper".into()],
            vec!["analyst".into()],
            vec!["seed-test".into()],
        )
        .unwrap()
    }

    fn corpus(lines: &[&str]) -> Corpus {
        Corpus::new(
            lines
                .iter()
                .map(|l| l.split_whitespace().map(str::to_string).collect())
                .collect(),
        )
    }

    #[test]
    fn lexicon_rejects_overlap_and_empty_sets() {
        assert!(matches!(
            StereotypeLexicon::new(
                vec!["she".into()],
                vec!["she".into()],
                vec!["a".into()],
                vec!["b".into()],
                vec![],
            ),
            Err(ModifyError::InvalidLexicon(_))
        ));
        assert!(matches!(
            StereotypeLexicon::new(
                vec!["she".into()],
                vec!["he".into()],
                vec![],
                vec!["b".into()],
                vec![],
            ),
            Err(ModifyError::InvalidLexicon(_))
        ));
    }

    #[test]
    fn lexicon_linkage_is_normalized_on_load() {
        let text = r#"
group1 = ["she"]
group2 = ["he"]
concept1 = ["analyst"]
concept2 = ["housekeeper"]
linkage = "group1-concept2"
"#;
        let lex = StereotypeLexicon::from_toml_str(text).unwrap();
        // concept1 is always group1's stereotype internally.
        assert_eq!(lex.concept1, vec!["housekeeper"]);
        assert_eq!(lex.concept2, vec!["analyst"]);
    }

    #[test]
    fn expand_wordlist_contracts() {
        let s = store(&[
            ("q", &[1.0, 0.0]),
            ("a", &[1.0, 0.01]),
            ("b", &[0.0, 1.0]),
        ]);
        let seeds: BTreeSet<String> = ["q".to_string()].into_iter().collect();
        let zero = expand_wordlist(&s, &seeds, 0).unwrap();
        assert_eq!(zero.words, seeds);
        let one = expand_wordlist(&s, &seeds, 1).unwrap();
        assert_eq!(
            one.words,
            ["q", "a"].iter().map(|w| w.to_string()).collect()
        );
        // Two seeds sharing a neighbour produce it once, and seeds are
        // never returned as neighbours.
        let both: BTreeSet<String> = ["q".to_string(), "b".to_string()].into_iter().collect();
        let joint = expand_wordlist(&s, &both, 1).unwrap();
        assert!(joint.words.contains("a"));
        assert_eq!(joint.words.len(), 3);
        let missing: BTreeSet<String> = ["gone".to_string()].into_iter().collect();
        assert!(matches!(
            expand_wordlist(&s, &missing, 1),
            Err(ModifyError::NoResolvableSeed)
        ));
    }

    #[test]
    fn tagging_matches_the_linkage() {
        let c = corpus(&[
            "she was a talented housekeeper",
            "he was a talented housekeeper",
            "the sky is blue",
            "she is an analyst and housekeeper",
        ]);
        let tagged = tag_sentences(&c, &lexicon()).unwrap();
        assert_eq!(
            tagged.tags(),
            &[
                SentenceTag::Pro,
                SentenceTag::Anti,
                SentenceTag::Neutral,
                SentenceTag::Mixed
            ]
        );
    }

    #[test]
    fn tagged_corpus_file_round_trip() {
        let c = corpus(&["she loves housekeeper work", "plain sentence"]);
        let tagged = tag_sentences(&c, &lexicon()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tagged.txt");
        tagged.write(&path).unwrap();
        let back = TaggedCorpus::read(&path).unwrap();
        assert_eq!(back.sentences(), tagged.sentences());
        assert_eq!(back.tags(), tagged.tags());
        std::fs::write(&path, "BOGUS\tx y\n").unwrap();
        assert!(matches!(TaggedCorpus::read(&path), Err(ModifyError::Parse(_))));
    }

    fn tagged_fixture(pro: usize, anti: usize, neutral: usize) -> TaggedCorpus {
        let mut lines = Vec::new();
        for _ in 0..pro {
            lines.push("she loves housekeeper work".to_string());
        }
        for _ in 0..anti {
            lines.push("he loves housekeeper work".to_string());
        }
        for _ in 0..neutral {
            lines.push("plain filler sentence".to_string());
        }
        let line_refs: Vec<&str> = lines.iter().map(String::as_str).collect();
        tag_sentences(&corpus(&line_refs), &lexicon()).unwrap()
    }

    #[test]
    fn balance_arithmetic_from_the_stated_rule() {
        // 1000 sentences, 60 pro, 20 anti.
        let tagged = tagged_fixture(60, 20, 920);
        let out = balance_corpus(&tagged, Direction::Debias, 0.05, 1.0, 5).unwrap();
        // Imbalance 40 < cap 50: removes exactly 40 pro sentences.
        assert_eq!(out.removed_indices.len(), 40);
        assert_eq!(out.corpus.len(), 960);
        let retagged = tag_sentences(&out.corpus, &lexicon()).unwrap();
        assert_eq!(retagged.count(SentenceTag::Pro), 20);
        assert_eq!(retagged.count(SentenceTag::Anti), 20);

        // Budget 0.03 binds: removes 30, leaving 30 pro / 20 anti.
        let capped = balance_corpus(&tagged, Direction::Debias, 0.03, 1.0, 5).unwrap();
        assert_eq!(capped.removed_indices.len(), 30);
        let retagged = tag_sentences(&capped.corpus, &lexicon()).unwrap();
        assert_eq!(retagged.count(SentenceTag::Pro), 30);
        assert_eq!(retagged.count(SentenceTag::Anti), 20);
    }

    #[test]
    fn balance_strength_zero_is_identity() {
        let tagged = tagged_fixture(10, 2, 50);
        let out = balance_corpus(&tagged, Direction::Debias, 0.05, 0.0, 1).unwrap();
        assert_eq!(out.corpus.sentences(), tagged.sentences());
        assert!(out.removed_indices.is_empty());
    }

    #[test]
    fn balance_overbias_removes_anti_sentences() {
        let tagged = tagged_fixture(60, 20, 920);
        let out = balance_corpus(&tagged, Direction::Overbias, 0.05, 1.0, 3).unwrap();
        // Imbalance is 40 but only 20 anti sentences exist.
        assert_eq!(out.removed_indices.len(), 20);
        let retagged = tag_sentences(&out.corpus, &lexicon()).unwrap();
        assert_eq!(retagged.count(SentenceTag::Anti), 0);
        assert_eq!(retagged.count(SentenceTag::Pro), 60);
    }

    #[test]
    fn balance_empty_source_warns_instead_of_failing() {
        let tagged = tagged_fixture(5, 0, 20);
        let out = balance_corpus(&tagged, Direction::Overbias, 0.05, 1.0, 1).unwrap();
        assert!(out.warning.is_some());
        assert_eq!(out.corpus.len(), tagged.len());
    }

    #[test]
    fn balance_output_is_a_subsequence_and_deterministic() {
        let tagged = tagged_fixture(30, 5, 100);
        let a = balance_corpus(&tagged, Direction::Debias, 0.05, 0.8, 11).unwrap();
        let b = balance_corpus(&tagged, Direction::Debias, 0.05, 0.8, 11).unwrap();
        assert_eq!(a.removed_indices, b.removed_indices);
        // Subsequence check: kept sentences appear in original order.
        let mut cursor = 0usize;
        for sentence in a.corpus.sentences() {
            let mut found = false;
            while cursor < tagged.len() {
                if &tagged.sentences()[cursor] == sentence {
                    cursor += 1;
                    found = true;
                    break;
                }
                cursor += 1;
            }
            assert!(found, "output is not a subsequence");
        }
    }

    #[test]
    fn balance_validates_inputs() {
        let tagged = tagged_fixture(5, 1, 10);
        assert!(matches!(
            balance_corpus(&tagged, Direction::Debias, 0.05, 1.5, 1),
            Err(ModifyError::InvalidStrength(_))
        ));
        assert!(matches!(
            balance_corpus(&tagged, Direction::Debias, 0.2, 1.0, 1),
            Err(ModifyError::InvalidBudget(_))
        ));
        assert!(matches!(
            balance_corpus(&tagged, Direction::Debias, 0.0, 1.0, 1),
            Err(ModifyError::InvalidBudget(_))
        ));
    }

    #[test]
    fn constraint_pairs_follow_direction() {
        let lex = lexicon();
        let debias = build_constraint_pairs(&lex, Direction::Debias).unwrap();
        let attract: HashSet<_> = debias.attract.iter().cloned().collect();
        assert!(attract.contains(&("she".to_string(), "analyst".to_string())));
        assert!(attract.contains(&("he".to_string(), "housekeeper".to_string())));
        let repel: HashSet<_> = debias.repel.iter().cloned().collect();
        assert!(repel.contains(&("she".to_string(), "housekeeper".to_string())));
        assert!(repel.contains(&("he".to_string(), "analyst".to_string())));

        let overbias = build_constraint_pairs(&lex, Direction::Overbias).unwrap();
        assert_eq!(
            overbias.attract.iter().collect::<HashSet<_>>(),
            debias.repel.iter().collect::<HashSet<_>>()
        );
        assert_eq!(
            overbias.repel.iter().collect::<HashSet<_>>(),
            debias.attract.iter().collect::<HashSet<_>>()
        );
    }

    #[test]
    fn constraint_validation() {
        let bad = ConstraintSet {
            attract: vec![("a".into(), "a".into())],
            repel: vec![],
        };
        assert!(bad.validate().is_err());
        let dup = ConstraintSet {
            attract: vec![("a".into(), "b".into())],
            repel: vec![("b".into(), "a".into())],
        };
        assert!(dup.validate().is_err());
    }

    #[test]
    fn attract_repel_empty_constraints_is_identity() {
        let s = store(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        let out = attract_repel(&s, &ConstraintSet::default(), &ArHyper::default()).unwrap();
        assert_eq!(out.store.matrix_bytes(), s.matrix_bytes());
    }

    #[test]
    fn attract_repel_leaves_non_constraint_words_untouched() {
        let s = store(&[
            ("she", &[0.9, 0.1, 0.0]),
            ("housekeeper", &[0.8, 0.2, 0.0]),
            ("he", &[0.1, 0.9, 0.0]),
            ("analyst", &[0.2, 0.8, 0.0]),
            ("bystander", &[0.3, 0.3, 0.9]),
            ("onlooker", &[-0.5, 0.4, 0.2]),
        ]);
        let constraints = build_constraint_pairs(&lexicon(), Direction::Debias).unwrap();
        let out = attract_repel(&s, &constraints, &ArHyper::default()).unwrap();
        assert!(out.dropped_pairs.is_empty());
        for w in ["bystander", "onlooker"] {
            assert_eq!(
                s.resolve(w).unwrap(),
                out.store.resolve(w).unwrap(),
                "non-constraint word {w} moved"
            );
        }
        // Constraint words end up unit length.
        for w in ["she", "he", "housekeeper", "analyst"] {
            let v = out.store.resolve(w).unwrap();
            let norm = v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-5, "{w} norm {norm}");
        }
    }

    #[test]
    fn attract_repel_moves_pairs_in_the_requested_direction() {
        let s = store(&[
            ("she", &[0.95, 0.05, 0.1]),
            ("housekeeper", &[0.9, 0.1, 0.05]),
            ("he", &[0.05, 0.95, 0.1]),
            ("analyst", &[0.1, 0.9, 0.05]),
        ]);
        let before_pro = s.cosine("she", "housekeeper").unwrap();
        let before_anti = s.cosine("she", "analyst").unwrap();
        let constraints = build_constraint_pairs(&lexicon(), Direction::Debias).unwrap();
        let out = attract_repel(&s, &constraints, &ArHyper::default()).unwrap();
        let after_pro = out.store.cosine("she", "housekeeper").unwrap();
        let after_anti = out.store.cosine("she", "analyst").unwrap();
        assert!(after_pro < before_pro, "{after_pro} !< {before_pro}");
        assert!(after_anti > before_anti, "{after_anti} !> {before_anti}");
    }

    #[test]
    fn attract_repel_is_deterministic_and_errors_without_resolvable_pairs() {
        let s = store(&[
            ("she", &[0.9, 0.1]),
            ("housekeeper", &[0.8, 0.2]),
            ("he", &[0.1, 0.9]),
            ("analyst", &[0.2, 0.8]),
        ]);
        let constraints = build_constraint_pairs(&lexicon(), Direction::Debias).unwrap();
        let a = attract_repel(&s, &constraints, &ArHyper::default()).unwrap();
        let b = attract_repel(&s, &constraints, &ArHyper::default()).unwrap();
        assert_eq!(a.store.matrix_bytes(), b.store.matrix_bytes());

        let unresolvable = ConstraintSet {
            attract: vec![("ghost".into(), "phantom".into())],
            repel: vec![],
        };
        assert!(matches!(
            attract_repel(&s, &unresolvable, &ArHyper::default()),
            Err(ModifyError::NoResolvableConstraints)
        ));
    }
}
