//! Word-association tests over an embedding store.
//!
//! A test compares two target wordlists X and Y against two attribute
//! wordlists A and B. The per-word association is the difference in mean
//! cosine similarity to A versus B; the test statistic sums associations
//! over X and subtracts the sum over Y; the effect size divides the
//! difference of list means by the sample standard deviation of the
//! pooled associations. Significance comes from a one-sided permutation
//! test over equal-size reassignments of X ∪ Y: exact enumeration when
//! the partition count fits the budget, seeded Monte-Carlo otherwise.
//!
//! Tests are data files: TOML documents with `name`, `language` and the
//! four word arrays. Words are NFC- and lowercase-normalized on load.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::store::{EmbeddingStore, StoreError};

/// Partition budget above which the permutation test switches to
/// Monte-Carlo sampling.
pub const DEFAULT_MAX_PERMUTATIONS: u64 = 100_000;
/// Number of Monte-Carlo samples in the sampled regime.
pub const MONTE_CARLO_SAMPLES: u64 = 10_000;

#[derive(Debug, thiserror::Error)]
pub enum WeatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("failed to parse test file: {0}")]
    Parse(String),
    #[error("invalid test {name:?}: {reason}")]
    InvalidTest { name: String, reason: String },
    #[error("word {0:?} cannot be resolved")]
    Unresolvable(String),
    #[error("list {list} of test {name:?} has no resolvable word")]
    EmptyListAfterDrops { name: String, list: &'static str },
    #[error("test {name:?} drops {word:?} under strict OOV policy")]
    StrictOov { name: String, word: String },
    #[error("degenerate test {0:?}: all pooled associations are equal")]
    DegenerateTest(String),
    #[error("permutation test requires equal resolved list sizes, got {x} and {y}")]
    UnequalListSizes { x: usize, y: usize },
    #[error(transparent)]
    Store(StoreError),
}

impl From<StoreError> for WeatError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::UnknownWord(w) => WeatError::Unresolvable(w),
            other => WeatError::Store(other),
        }
    }
}

/// What to do with wordlist entries missing from the store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OovPolicy {
    /// Drop missing words, recording them and the per-list coverage.
    #[default]
    Drop,
    /// Fail the test if any list word is missing.
    Strict,
}

/// Four wordlists: targets X and Y, attributes A and B.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeatTest {
    pub name: String,
    #[serde(default)]
    pub language: String,
    pub x: Vec<String>,
    pub y: Vec<String>,
    pub a: Vec<String>,
    pub b: Vec<String>,
}

fn normalize_word(word: &str) -> String {
    word.nfc().collect::<String>().to_lowercase()
}

impl WeatTest {
    pub fn load(path: &Path) -> Result<Self, WeatError> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, WeatError> {
        let mut test: WeatTest =
            toml::from_str(text).map_err(|e| WeatError::Parse(e.to_string()))?;
        for list in [&mut test.x, &mut test.y, &mut test.a, &mut test.b] {
            for w in list.iter_mut() {
                *w = normalize_word(w);
            }
        }
        test.validate()?;
        Ok(test)
    }

    pub fn validate(&self) -> Result<(), WeatError> {
        let err = |reason: String| {
            Err(WeatError::InvalidTest {
                name: self.name.clone(),
                reason,
            })
        };
        for (label, list) in [("x", &self.x), ("y", &self.y), ("a", &self.a), ("b", &self.b)] {
            if list.is_empty() {
                return err(format!("list {label} is empty"));
            }
            let mut seen = HashSet::new();
            for w in list {
                if w.is_empty() || w.chars().any(|c| c.is_whitespace()) {
                    return err(format!("list {label} contains invalid word {w:?}"));
                }
                if !seen.insert(w) {
                    return err(format!("list {label} contains duplicate {w:?}"));
                }
            }
        }
        let x: HashSet<_> = self.x.iter().collect();
        if self.y.iter().any(|w| x.contains(w)) {
            return err("a word appears in both x and y".into());
        }
        let a: HashSet<_> = self.a.iter().collect();
        if self.b.iter().any(|w| a.contains(w)) {
            return err("a word appears in both a and b".into());
        }
        Ok(())
    }
}

/// Fraction of each list that resolved against the store.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ListCoverage {
    pub x: f64,
    pub y: f64,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone)]
pub struct WeatResult {
    pub test_name: String,
    pub statistic: f64,
    pub effect_size: f64,
    /// One-sided permutation p-value; absent when the resolved target
    /// lists have unequal sizes.
    pub p_value: Option<f64>,
    pub coverage: ListCoverage,
    pub dropped_words: Vec<String>,
    pub warnings: Vec<String>,
}

/// One suite entry per test, failures captured rather than aborting.
#[derive(Debug)]
pub struct SuiteEntry {
    pub test_name: String,
    pub outcome: Result<WeatResult, WeatError>,
}

/// Difference in mean cosine similarity of `word` to lists `a` and `b`.
/// Unresolvable attribute words are dropped; either list fully failing
/// to resolve is an error.
pub fn association(
    store: &EmbeddingStore,
    word: &str,
    a: &[String],
    b: &[String],
) -> Result<f64, WeatError> {
    if store.resolve(word).is_none() {
        return Err(WeatError::Unresolvable(word.to_string()));
    }
    let mean_to = |list: &[String], label: &'static str| -> Result<f64, WeatError> {
        let mut sum = 0.0f64;
        let mut n = 0usize;
        for attr in list {
            if store.resolve(attr).is_some() {
                sum += store.cosine(word, attr)?;
                n += 1;
            }
        }
        if n == 0 {
            return Err(WeatError::EmptyListAfterDrops {
                name: String::new(),
                list: label,
            });
        }
        Ok(sum / n as f64)
    };
    Ok(mean_to(a, "a")? - mean_to(b, "b")?)
}

/// A test with unresolvable words removed, plus the bookkeeping the
/// caller reports.
struct ResolvedTest {
    x: Vec<String>,
    y: Vec<String>,
    a: Vec<String>,
    b: Vec<String>,
    coverage: ListCoverage,
    dropped: Vec<String>,
}

fn resolve_test(
    store: &EmbeddingStore,
    test: &WeatTest,
    policy: OovPolicy,
) -> Result<ResolvedTest, WeatError> {
    let mut dropped = Vec::new();
    let mut keep = |list: &[String]| -> Result<(Vec<String>, f64), WeatError> {
        let mut kept = Vec::with_capacity(list.len());
        for w in list {
            if store.resolve(w).is_some() {
                kept.push(w.clone());
            } else if policy == OovPolicy::Strict {
                return Err(WeatError::StrictOov {
                    name: test.name.clone(),
                    word: w.clone(),
                });
            } else {
                dropped.push(w.clone());
            }
        }
        let coverage = kept.len() as f64 / list.len() as f64;
        Ok((kept, coverage))
    };
    let (x, cx) = keep(&test.x)?;
    let (y, cy) = keep(&test.y)?;
    let (a, ca) = keep(&test.a)?;
    let (b, cb) = keep(&test.b)?;
    for (label, list) in [("x", &x), ("y", &y), ("a", &a), ("b", &b)] {
        if list.is_empty() {
            return Err(WeatError::EmptyListAfterDrops {
                name: test.name.clone(),
                list: match label {
                    "x" => "x",
                    "y" => "y",
                    "a" => "a",
                    _ => "b",
                },
            });
        }
    }
    Ok(ResolvedTest {
        x,
        y,
        a,
        b,
        coverage: ListCoverage {
            x: cx,
            y: cy,
            a: ca,
            b: cb,
        },
        dropped,
    })
}

fn associations_for(
    store: &EmbeddingStore,
    words: &[String],
    a: &[String],
    b: &[String],
) -> Result<Vec<f64>, WeatError> {
    words
        .iter()
        .map(|w| association(store, w, a, b))
        .collect()
}

/// Sum of associations over X minus the sum over Y, after dropping
/// unresolvable words.
pub fn test_statistic(store: &EmbeddingStore, test: &WeatTest) -> Result<f64, WeatError> {
    let r = resolve_test(store, test, OovPolicy::Drop)?;
    let sx: f64 = associations_for(store, &r.x, &r.a, &r.b)?.iter().sum();
    let sy: f64 = associations_for(store, &r.y, &r.a, &r.b)?.iter().sum();
    Ok(sx - sy)
}

/// Mean-difference of associations normalized by the sample standard
/// deviation of the pooled associations. The pooled pass runs in
/// lexicographic word order so relabeling X and Y negates the value
/// exactly.
pub fn effect_size(store: &EmbeddingStore, test: &WeatTest) -> Result<f64, WeatError> {
    let r = resolve_test(store, test, OovPolicy::Drop)?;
    effect_size_resolved(store, &test.name, &r)
}

fn effect_size_resolved(
    store: &EmbeddingStore,
    name: &str,
    r: &ResolvedTest,
) -> Result<f64, WeatError> {
    let ax = associations_for(store, &r.x, &r.a, &r.b)?;
    let ay = associations_for(store, &r.y, &r.a, &r.b)?;
    let mean_x: f64 = ax.iter().sum::<f64>() / ax.len() as f64;
    let mean_y: f64 = ay.iter().sum::<f64>() / ay.len() as f64;

    let mut pooled: Vec<(&str, f64)> = r
        .x
        .iter()
        .zip(&ax)
        .chain(r.y.iter().zip(&ay))
        .map(|(w, &v)| (w.as_str(), v))
        .collect();
    pooled.sort_by_key(|p| p.0);
    let n = pooled.len();
    let mean: f64 = pooled.iter().map(|&(_, v)| v).sum::<f64>() / n as f64;
    let var: f64 = if n < 2 {
        0.0
    } else {
        pooled.iter().map(|&(_, v)| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    };
    if var == 0.0 {
        return Err(WeatError::DegenerateTest(name.to_string()));
    }
    Ok((mean_x - mean_y) / var.sqrt())
}

/// `C(n, k)` capped at `cap`; `None` when the count exceeds the cap.
fn binomial_capped(n: u64, k: u64, cap: u64) -> Option<u64> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > cap as u128 {
            return None;
        }
    }
    Some(acc as u64)
}

/// One-sided probability that a random equal split of X ∪ Y produces a
/// statistic at least as large as the observed one. Exact enumeration
/// when the number of splits is at most `max_permutations`, otherwise
/// seeded Monte-Carlo with [`MONTE_CARLO_SAMPLES`] draws.
pub fn permutation_pvalue(
    store: &EmbeddingStore,
    test: &WeatTest,
    max_permutations: u64,
    seed: u64,
) -> Result<f64, WeatError> {
    let r = resolve_test(store, test, OovPolicy::Drop)?;
    permutation_pvalue_resolved(store, &r, max_permutations, seed)
}

fn permutation_pvalue_resolved(
    store: &EmbeddingStore,
    r: &ResolvedTest,
    max_permutations: u64,
    seed: u64,
) -> Result<f64, WeatError> {
    if r.x.len() != r.y.len() {
        return Err(WeatError::UnequalListSizes {
            x: r.x.len(),
            y: r.y.len(),
        });
    }
    let half = r.x.len();
    let pooled: Vec<f64> = {
        let ax = associations_for(store, &r.x, &r.a, &r.b)?;
        let ay = associations_for(store, &r.y, &r.a, &r.b)?;
        ax.into_iter().chain(ay).collect()
    };
    let total: f64 = pooled.iter().sum();
    // statistic(subset) = 2 * Σ subset − Σ all; the observed value uses
    // the same expression so exact ties count themselves.
    let stat_of = |indices: &[usize]| -> f64 {
        2.0 * indices.iter().map(|&i| pooled[i]).sum::<f64>() - total
    };
    let identity: Vec<usize> = (0..half).collect();
    let observed = stat_of(&identity);

    if let Some(count) = binomial_capped(pooled.len() as u64, half as u64, max_permutations) {
        // Lexicographic enumeration of all size-half index subsets.
        let mut indices = identity;
        let mut at_least = 0u64;
        loop {
            if stat_of(&indices) >= observed {
                at_least += 1;
            }
            // Advance to the next combination.
            let n = pooled.len();
            let mut i = half;
            loop {
                if i == 0 {
                    return Ok(at_least as f64 / count as f64);
                }
                i -= 1;
                if indices[i] != i + n - half {
                    break;
                }
            }
            indices[i] += 1;
            for j in i + 1..half {
                indices[j] = indices[j - 1] + 1;
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..pooled.len()).collect();
        let mut at_least = 0u64;
        for _ in 0..MONTE_CARLO_SAMPLES {
            order.shuffle(&mut rng);
            if stat_of(&order[..half]) >= observed {
                at_least += 1;
            }
        }
        Ok(at_least as f64 / MONTE_CARLO_SAMPLES as f64)
    }
}

/// Run every test, capturing failures per test instead of aborting the
/// suite. `seed` drives Monte-Carlo p-values.
pub fn run_weat_suite(
    store: &EmbeddingStore,
    tests: &[WeatTest],
    policy: OovPolicy,
    seed: u64,
) -> Vec<SuiteEntry> {
    tests
        .iter()
        .map(|test| SuiteEntry {
            test_name: test.name.clone(),
            outcome: evaluate_test(store, test, policy, seed),
        })
        .collect()
}

fn evaluate_test(
    store: &EmbeddingStore,
    test: &WeatTest,
    policy: OovPolicy,
    seed: u64,
) -> Result<WeatResult, WeatError> {
    test.validate()?;
    let r = resolve_test(store, test, policy)?;
    let mut warnings = Vec::new();
    if test.x.len() != test.y.len() {
        warnings.push(format!(
            "target lists have unequal sizes ({} vs {})",
            test.x.len(),
            test.y.len()
        ));
    }
    let sx: f64 = associations_for(store, &r.x, &r.a, &r.b)?.iter().sum();
    let sy: f64 = associations_for(store, &r.y, &r.a, &r.b)?.iter().sum();
    let statistic = sx - sy;
    let effect = effect_size_resolved(store, &test.name, &r)?;
    let p_value = if r.x.len() == r.y.len() {
        Some(permutation_pvalue_resolved(
            store,
            &r,
            DEFAULT_MAX_PERMUTATIONS,
            seed,
        )?)
    } else {
        warnings.push(format!(
            "resolved target lists have unequal sizes ({} vs {}); p-value skipped",
            r.x.len(),
            r.y.len()
        ));
        None
    };
    Ok(WeatResult {
        test_name: test.name.clone(),
        statistic,
        effect_size: effect,
        p_value,
        coverage: r.coverage,
        dropped_words: r.dropped,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(rows: &[(&str, &[f32])]) -> EmbeddingStore {
        EmbeddingStore::from_rows(rows.iter().map(|(w, v)| (w.to_string(), v.to_vec()))).unwrap()
    }

    fn words(list: &[&str]) -> Vec<String> {
        list.iter().map(|w| w.to_string()).collect()
    }

    fn four_word_store() -> EmbeddingStore {
        store(&[
            ("x1", &[1.0, 0.0]),
            ("y1", &[0.0, 1.0]),
            ("a1", &[1.0, 0.0]),
            ("b1", &[0.0, 1.0]),
        ])
    }

    fn four_word_test() -> WeatTest {
        WeatTest {
            name: "four".into(),
            language: "en".into(),
            x: words(&["x1"]),
            y: words(&["y1"]),
            a: words(&["a1"]),
            b: words(&["b1"]),
        }
    }

    #[test]
    fn association_hand_values() {
        let s = store(&[("w", &[1.0, 0.0]), ("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        let v = association(&s, "w", &words(&["a"]), &words(&["b"])).unwrap();
        assert_eq!(v, 1.0);
        // Identical lists cancel exactly; swapped lists negate exactly.
        assert_eq!(association(&s, "w", &words(&["a"]), &words(&["a"])).unwrap(), 0.0);
        let swapped = association(&s, "w", &words(&["b"]), &words(&["a"])).unwrap();
        assert_eq!(swapped, -v);
    }

    #[test]
    fn association_errors() {
        let s = store(&[("w", &[1.0]), ("a", &[1.0])]);
        assert!(matches!(
            association(&s, "gone", &words(&["a"]), &words(&["a"])),
            Err(WeatError::Unresolvable(_))
        ));
        assert!(matches!(
            association(&s, "w", &words(&["gone"]), &words(&["a"])),
            Err(WeatError::EmptyListAfterDrops { .. })
        ));
    }

    #[test]
    fn statistic_and_effect_size_hand_computed() {
        let s = four_word_store();
        let t = four_word_test();
        assert_eq!(test_statistic(&s, &t).unwrap(), 2.0);
        let d = effect_size(&s, &t).unwrap();
        assert!((d - std::f64::consts::SQRT_2).abs() < 1e-8);

        let swapped = WeatTest {
            x: t.y.clone(),
            y: t.x.clone(),
            ..t.clone()
        };
        assert_eq!(test_statistic(&s, &swapped).unwrap(), -2.0);
        assert_eq!(effect_size(&s, &swapped).unwrap(), -d);
    }

    #[test]
    fn identical_vectors_give_zero_statistic() {
        let s = store(&[
            ("x1", &[1.0, 1.0]),
            ("y1", &[1.0, 1.0]),
            ("a1", &[1.0, 1.0]),
            ("b1", &[1.0, 1.0]),
        ]);
        let t = four_word_test();
        assert_eq!(test_statistic(&s, &t).unwrap(), 0.0);
        // All associations equal: the effect size is degenerate.
        assert!(matches!(
            effect_size(&s, &t),
            Err(WeatError::DegenerateTest(_))
        ));
    }

    #[test]
    fn equal_attribute_lists_are_degenerate() {
        let s = four_word_store();
        let t = WeatTest {
            b: words(&["a1"]),
            ..four_word_test()
        };
        assert!(matches!(
            effect_size(&s, &t),
            Err(WeatError::DegenerateTest(_))
        ));
    }

    #[test]
    fn exact_permutation_p_on_the_four_word_fixture() {
        let s = four_word_store();
        let t = four_word_test();
        let p = permutation_pvalue(&s, &t, 100_000, 0).unwrap();
        assert_eq!(p, 0.5);
    }

    #[test]
    fn permutation_requires_equal_sizes_and_is_seed_stable() {
        let s = store(&[
            ("x1", &[1.0, 0.0]),
            ("x2", &[0.9, 0.1]),
            ("y1", &[0.0, 1.0]),
            ("a1", &[1.0, 0.0]),
            ("b1", &[0.0, 1.0]),
        ]);
        let t = WeatTest {
            name: "uneven".into(),
            language: String::new(),
            x: words(&["x1", "x2"]),
            y: words(&["y1"]),
            a: words(&["a1"]),
            b: words(&["b1"]),
        };
        assert!(matches!(
            permutation_pvalue(&s, &t, 100_000, 0),
            Err(WeatError::UnequalListSizes { x: 2, y: 1 })
        ));
    }

    #[test]
    fn monte_carlo_is_deterministic_per_seed() {
        // Force the Monte-Carlo path with a tiny budget.
        let s = four_word_store();
        let t = four_word_test();
        let p1 = permutation_pvalue(&s, &t, 1, 77).unwrap();
        let p2 = permutation_pvalue(&s, &t, 1, 77).unwrap();
        assert_eq!(p1, p2);
        assert!((0.0..=1.0).contains(&p1));
    }

    #[test]
    fn suite_isolates_failures_and_reports_coverage() {
        let s = store(&[
            ("x1", &[1.0, 0.0]),
            ("y1", &[0.0, 1.0]),
            ("a1", &[1.0, 0.0]),
            ("a2", &[0.9, 0.2]),
            ("b1", &[0.0, 1.0]),
        ]);
        let good = WeatTest {
            name: "good".into(),
            language: String::new(),
            x: words(&["x1"]),
            y: words(&["y1"]),
            a: words(&["a1", "a2", "a3", "a4", "a5", "a6", "a7", "a8"]),
            b: words(&["b1"]),
        };
        let bad = WeatTest {
            name: "bad".into(),
            language: String::new(),
            x: words(&["gone1", "gone2"]),
            y: words(&["y1"]),
            a: words(&["a1"]),
            b: words(&["b1"]),
        };
        let entries = run_weat_suite(&s, &[good, bad.clone(), bad], OovPolicy::Drop, 0);
        assert_eq!(entries.len(), 3);
        assert_eq!(entries[0].test_name, "good");
        let r = entries[0].outcome.as_ref().unwrap();
        // 2 of 8 attribute words resolved.
        assert!((r.coverage.a - 0.25).abs() < 1e-12);
        assert_eq!(r.coverage.x, 1.0);
        assert_eq!(r.dropped_words.len(), 6);
        assert!(entries[1].outcome.is_err());
        assert!(entries[2].outcome.is_err());
    }

    #[test]
    fn strict_policy_rejects_any_drop() {
        let s = four_word_store();
        let t = WeatTest {
            a: words(&["a1", "missing"]),
            ..four_word_test()
        };
        let entries = run_weat_suite(&s, &[t], OovPolicy::Strict, 0);
        assert!(matches!(
            entries[0].outcome,
            Err(WeatError::StrictOov { .. })
        ));
    }

    #[test]
    fn scale_invariance_of_statistic_and_effect_size() {
        let s = store(&[
            ("x1", &[0.5, 1.0, -0.25]),
            ("x2", &[1.0, -0.5, 2.0]),
            ("y1", &[-1.0, 0.5, 0.25]),
            ("y2", &[0.25, 2.0, -1.0]),
            ("a1", &[2.0, 1.0, 0.5]),
            ("b1", &[-0.5, 1.0, 1.0]),
        ]);
        // Components are powers of two, so doubling is exact.
        let scaled = EmbeddingStore::from_rows(
            s.words()
                .map(|w| (w.to_string(), s.resolve(w).unwrap().iter().map(|v| v * 2.0).collect()))
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let t = WeatTest {
            name: "scale".into(),
            language: String::new(),
            x: words(&["x1", "x2"]),
            y: words(&["y1", "y2"]),
            a: words(&["a1"]),
            b: words(&["b1"]),
        };
        let d1 = effect_size(&s, &t).unwrap();
        let d2 = effect_size(&scaled, &t).unwrap();
        assert!((d1 - d2).abs() < 1e-12);
        let s1 = test_statistic(&s, &t).unwrap();
        let s2 = test_statistic(&scaled, &t).unwrap();
        assert!((s1 - s2).abs() < 1e-12);
    }

    #[test]
    fn toml_parsing_and_validation() {
        let text = r#"
name = "mini"
language = "en"
x = ["Math", "algebra"]
y = ["poetry", "art"]
a = ["he", "him"]
b = ["she", "her"]
"#;
        let t = WeatTest::from_toml_str(text).unwrap();
        assert_eq!(t.x[0], "math");
        let dup = text.replace("\"art\"", "\"Math\"");
        assert!(matches!(
            WeatTest::from_toml_str(&dup),
            Err(WeatError::InvalidTest { .. })
        ));
        let empty = text.replace("[\"he\", \"him\"]", "[]");
        assert!(matches!(
            WeatTest::from_toml_str(&empty),
            Err(WeatError::InvalidTest { .. })
        ));
    }
}
