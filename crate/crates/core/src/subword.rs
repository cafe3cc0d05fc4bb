//! Character n-gram vectors for composing words from their pieces.
//!
//! A word is padded with angle brackets (`cat` becomes `<cat>`) and all
//! character n-grams with lengths in `[min, max]` are extracted. Each
//! n-gram is hashed with 32-bit FNV-1a over its UTF-8 bytes, modulo the
//! bucket count. The composed vector is the word's own vector (when one
//! exists) plus the sum of its n-gram bucket vectors, divided by one plus
//! the number of n-grams.

/// 32-bit FNV-1a over a byte string.
pub fn fnv1a_32(bytes: &[u8]) -> u32 {
    let mut hash: u32 = 0x811c9dc5;
    for &b in bytes {
        hash ^= b as u32;
        hash = hash.wrapping_mul(0x0100_0193);
    }
    hash
}

/// All character n-grams of the bracket-padded word, shortest first, in
/// left-to-right order.
pub fn word_ngrams(word: &str, min_n: usize, max_n: usize) -> Vec<String> {
    let padded: Vec<char> = std::iter::once('<')
        .chain(word.chars())
        .chain(std::iter::once('>'))
        .collect();
    let mut grams = Vec::new();
    for n in min_n..=max_n {
        if n == 0 || n > padded.len() {
            continue;
        }
        for window in padded.windows(n) {
            grams.push(window.iter().collect());
        }
    }
    grams
}

/// A hashed table of n-gram vectors sharing the store's dimensionality.
#[derive(Debug, Clone)]
pub struct NgramTable {
    bucket_count: usize,
    dim: usize,
    vectors: Vec<f32>,
    ngram_min: usize,
    ngram_max: usize,
}

impl NgramTable {
    pub fn new(bucket_count: usize, dim: usize, ngram_min: usize, ngram_max: usize) -> Self {
        assert!(bucket_count >= 1, "bucket count must be at least 1");
        assert!(dim >= 1, "dimension must be at least 1");
        assert!(ngram_min <= ngram_max, "ngram_min must not exceed ngram_max");
        NgramTable {
            bucket_count,
            dim,
            vectors: vec![0.0; bucket_count * dim],
            ngram_min,
            ngram_max,
        }
    }

    pub fn from_vectors(
        vectors: Vec<f32>,
        bucket_count: usize,
        dim: usize,
        ngram_min: usize,
        ngram_max: usize,
    ) -> Self {
        assert_eq!(vectors.len(), bucket_count * dim);
        NgramTable {
            bucket_count,
            dim,
            vectors,
            ngram_min,
            ngram_max,
        }
    }

    pub fn bucket_count(&self) -> usize {
        self.bucket_count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ngram_range(&self) -> (usize, usize) {
        (self.ngram_min, self.ngram_max)
    }

    pub fn bucket_of(&self, ngram: &str) -> usize {
        fnv1a_32(ngram.as_bytes()) as usize % self.bucket_count
    }

    pub fn bucket(&self, idx: usize) -> &[f32] {
        &self.vectors[idx * self.dim..(idx + 1) * self.dim]
    }

    pub(crate) fn bucket_mut(&mut self, idx: usize) -> &mut [f32] {
        &mut self.vectors[idx * self.dim..(idx + 1) * self.dim]
    }

    /// Bucket indices for a word's n-grams, in extraction order.
    pub fn bucket_indices(&self, word: &str) -> Vec<usize> {
        word_ngrams(word, self.ngram_min, self.ngram_max)
            .iter()
            .map(|g| self.bucket_of(g))
            .collect()
    }

    /// Compose a vector for `word`: `(word_vector + Σ bucket vectors) /
    /// (1 + number of n-grams)`, with a zero word contribution when no
    /// word vector is given. Accumulates in f64.
    pub fn compose(&self, word: &str, word_vector: Option<&[f32]>) -> Vec<f32> {
        let buckets = self.bucket_indices(word);
        let mut acc = vec![0.0f64; self.dim];
        if let Some(v) = word_vector {
            for (a, &x) in acc.iter_mut().zip(v.iter()) {
                *a += x as f64;
            }
        }
        for &b in &buckets {
            for (a, &x) in acc.iter_mut().zip(self.bucket(b).iter()) {
                *a += x as f64;
            }
        }
        let parts = (1 + buckets.len()) as f64;
        acc.into_iter().map(|a| (a / parts) as f32).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv1a_known_vectors() {
        assert_eq!(fnv1a_32(b""), 0x811c9dc5);
        assert_eq!(fnv1a_32(b"a"), 0xe40c292c);
        assert_eq!(fnv1a_32(b"foobar"), 0xbf9cf968);
    }

    #[test]
    fn trigrams_of_cat() {
        assert_eq!(word_ngrams("cat", 3, 3), vec!["<ca", "cat", "at>"]);
    }

    #[test]
    fn ngrams_skip_lengths_longer_than_word() {
        // "<a>" has length 3, so no 4-grams exist.
        assert_eq!(word_ngrams("a", 3, 4), vec!["<a>"]);
    }

    #[test]
    fn compose_with_zero_table_is_scaled_word_vector() {
        // Three n-grams, all zero buckets: mean over four parts.
        let table = NgramTable::new(16, 2, 3, 3);
        assert_eq!(word_ngrams("cat", 3, 3).len(), 3);
        let out = table.compose("cat", Some(&[2.0, 0.0]));
        assert_eq!(out, vec![0.5, 0.0]);
    }

    #[test]
    fn compose_without_word_vector_still_counts_the_word_part() {
        // Two n-grams with distinct buckets holding (1,0) and (0,1):
        // result is the sum over three parts.
        let mut table = NgramTable::new(64, 2, 2, 2);
        let grams = word_ngrams("a", 2, 2);
        assert_eq!(grams.len(), 2);
        let b0 = table.bucket_of(&grams[0]);
        let b1 = table.bucket_of(&grams[1]);
        assert_ne!(b0, b1, "fixture requires distinct buckets");
        table.bucket_mut(b0).copy_from_slice(&[1.0, 0.0]);
        table.bucket_mut(b1).copy_from_slice(&[0.0, 1.0]);
        let out = table.compose("a", None);
        assert!((out[0] - 1.0 / 3.0).abs() < 1e-7);
        assert!((out[1] - 1.0 / 3.0).abs() < 1e-7);
    }

    #[test]
    fn bucket_hashing_is_stable() {
        let table = NgramTable::new(1000, 4, 3, 6);
        let a = table.bucket_indices("childish");
        let b = table.bucket_indices("childish");
        assert_eq!(a, b);
        assert!(!a.is_empty());
    }
}
