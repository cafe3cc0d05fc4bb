//! Immutable word-vector storage.
//!
//! An [`EmbeddingStore`] maps a vocabulary onto the rows of a dense V×D
//! matrix of `f32` values. All similarity math accumulates in `f64`.
//! Stores are immutable once built and safe to share across threads.
//!
//! Two file formats are supported:
//!
//! * **text** — a header line `V D` followed by V lines of
//!   `word f1 … fD`, space separated. This is the canonical interchange
//!   format; floats are rendered with at least six significant digits and
//!   trailing zeros trimmed, so writing a freshly loaded canonical file
//!   reproduces it byte for byte.
//! * **binary** — magic bytes `EMB1`, then `u32 V`, `u32 D`, then V
//!   records of `u16` word byte length, the UTF-8 word bytes, and D
//!   little-endian `f32` components.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::subword::NgramTable;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("line {line}: expected {expected} vector components, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {0}: invalid vector component {1:?}")]
    InvalidComponent(usize, String),
    #[error("duplicate word {0:?}")]
    DuplicateWord(String),
    #[error("invalid word {0:?}: words must be non-empty and contain no whitespace")]
    InvalidWord(String),
    #[error("store must contain at least one word")]
    EmptyVocab,
    #[error("vector dimension must be at least 1")]
    ZeroDim,
    #[error("word {0:?} is not in the vocabulary and cannot be composed")]
    UnknownWord(String),
    #[error("vector for {0:?} has zero norm")]
    ZeroNorm(String),
    #[error("bad magic bytes, expected \"EMB1\"")]
    BadMagic,
    #[error("unexpected end of file")]
    UnexpectedEof,
}

impl StoreError {
    pub fn is_io(&self) -> bool {
        matches!(self, StoreError::Io(_))
    }
}

/// On-disk representation of a store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoreFormat {
    Text,
    Binary,
}

/// A vocabulary plus a dense V×D matrix of 32-bit floats, with an
/// optional n-gram table for composing vectors of unknown words.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    words: Vec<String>,
    index: HashMap<String, usize>,
    matrix: Vec<f32>,
    dim: usize,
    subwords: Option<NgramTable>,
}

fn validate_word(word: &str) -> Result<(), StoreError> {
    if word.is_empty() || word.chars().any(|c| c.is_whitespace()) {
        return Err(StoreError::InvalidWord(word.to_string()));
    }
    Ok(())
}

/// Dot product with 64-bit accumulation.
pub(crate) fn dot64(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| x as f64 * y as f64)
        .sum()
}

/// Cosine of two raw vectors, clamped to [-1, 1]. `None` if either norm
/// is zero.
pub(crate) fn cosine_raw(a: &[f32], b: &[f32]) -> Option<f64> {
    let na2 = dot64(a, a);
    let nb2 = dot64(b, b);
    if na2 == 0.0 || nb2 == 0.0 {
        return None;
    }
    let cos = dot64(a, b) / (na2 * nb2).sqrt();
    Some(cos.clamp(-1.0, 1.0))
}

impl EmbeddingStore {
    /// Build a store from `(word, vector)` rows, in order.
    pub fn from_rows<I, S>(rows: I) -> Result<Self, StoreError>
    where
        I: IntoIterator<Item = (S, Vec<f32>)>,
        S: Into<String>,
    {
        let mut words = Vec::new();
        let mut index = HashMap::new();
        let mut matrix = Vec::new();
        let mut dim = 0usize;
        for (word, vector) in rows {
            let word = word.into();
            validate_word(&word)?;
            if words.is_empty() {
                dim = vector.len();
                if dim == 0 {
                    return Err(StoreError::ZeroDim);
                }
            } else if vector.len() != dim {
                return Err(StoreError::DimensionMismatch {
                    line: words.len() + 2,
                    expected: dim,
                    found: vector.len(),
                });
            }
            if index.insert(word.clone(), words.len()).is_some() {
                return Err(StoreError::DuplicateWord(word));
            }
            words.push(word);
            matrix.extend_from_slice(&vector);
        }
        if words.is_empty() {
            return Err(StoreError::EmptyVocab);
        }
        Ok(EmbeddingStore {
            words,
            index,
            matrix,
            dim,
            subwords: None,
        })
    }

    /// Attach an n-gram table so unknown words resolve via subword
    /// composition.
    pub fn with_subwords(mut self, table: NgramTable) -> Self {
        debug_assert_eq!(table.dim(), self.dim);
        self.subwords = Some(table);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(|w| w.as_str())
    }

    pub fn word(&self, idx: usize) -> &str {
        &self.words[idx]
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn word_index(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn row(&self, idx: usize) -> &[f32] {
        &self.matrix[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn subwords(&self) -> Option<&NgramTable> {
        self.subwords.as_ref()
    }

    /// Raw matrix bytes, for cheap change detection in tests.
    pub fn matrix_bytes(&self) -> Vec<u8> {
        self.matrix.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    /// Resolve a word to a vector: exact vocabulary hit first, then
    /// subword composition when a table is attached, else `None`.
    pub fn resolve(&self, word: &str) -> Option<Vec<f32>> {
        if let Some(&idx) = self.index.get(word) {
            return Some(self.row(idx).to_vec());
        }
        self.subwords
            .as_ref()
            .filter(|_| !word.is_empty())
            .map(|table| table.compose(word, None))
    }

    fn resolve_or_err(&self, word: &str) -> Result<Vec<f32>, StoreError> {
        self.resolve(word)
            .ok_or_else(|| StoreError::UnknownWord(word.to_string()))
    }

    /// Cosine similarity between two resolvable words, in [-1, 1].
    pub fn cosine(&self, w1: &str, w2: &str) -> Result<f64, StoreError> {
        let a = self.resolve_or_err(w1)?;
        if dot64(&a, &a) == 0.0 {
            return Err(StoreError::ZeroNorm(w1.to_string()));
        }
        if w1 == w2 {
            return Ok(1.0);
        }
        let b = self.resolve_or_err(w2)?;
        cosine_raw(&a, &b).ok_or_else(|| StoreError::ZeroNorm(w2.to_string()))
    }

    /// The `k` nearest vocabulary words to `word` by cosine, excluding the
    /// query itself and everything in `exclude`. Sorted by descending
    /// cosine; ties broken by vocabulary order. Rows with zero norm are
    /// skipped.
    pub fn nearest_neighbors(
        &self,
        word: &str,
        k: usize,
        exclude: &HashSet<String>,
    ) -> Result<Vec<(String, f64)>, StoreError> {
        let query = self.resolve_or_err(word)?;
        if dot64(&query, &query) == 0.0 {
            return Err(StoreError::ZeroNorm(word.to_string()));
        }
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut scored: Vec<(usize, f64)> = Vec::new();
        for (idx, candidate) in self.words.iter().enumerate() {
            if candidate == word || exclude.contains(candidate) {
                continue;
            }
            if let Some(cos) = cosine_raw(&query, self.row(idx)) {
                scored.push((idx, cos));
            }
        }
        scored.sort_by(|(ia, ca), (ib, cb)| {
            cb.partial_cmp(ca).unwrap().then_with(|| ia.cmp(ib))
        });
        scored.truncate(k);
        Ok(scored
            .into_iter()
            .map(|(idx, cos)| (self.words[idx].clone(), cos))
            .collect())
    }

    pub fn load(path: &Path, format: StoreFormat) -> Result<Self, StoreError> {
        match format {
            StoreFormat::Text => Self::read_text(&mut BufReader::new(File::open(path)?)),
            StoreFormat::Binary => Self::read_binary(&mut BufReader::new(File::open(path)?)),
        }
    }

    pub fn save(&self, path: &Path, format: StoreFormat) -> Result<(), StoreError> {
        let mut out = BufWriter::new(File::create(path)?);
        match format {
            StoreFormat::Text => self.write_text(&mut out)?,
            StoreFormat::Binary => self.write_binary(&mut out)?,
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_text<R: BufRead>(reader: &mut R) -> Result<Self, StoreError> {
        let mut header = String::new();
        if reader.read_line(&mut header)? == 0 {
            return Err(StoreError::MalformedHeader("empty file".into()));
        }
        let mut parts = header.split_whitespace();
        let vocab_size: usize = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| StoreError::MalformedHeader(header.trim().to_string()))?;
        let dim: usize = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| StoreError::MalformedHeader(header.trim().to_string()))?;
        if parts.next().is_some() {
            return Err(StoreError::MalformedHeader(header.trim().to_string()));
        }
        if vocab_size == 0 {
            return Err(StoreError::EmptyVocab);
        }
        if dim == 0 {
            return Err(StoreError::ZeroDim);
        }
        let mut rows = Vec::with_capacity(vocab_size);
        let mut line = String::new();
        for line_no in 0..vocab_size {
            line.clear();
            if reader.read_line(&mut line)? == 0 {
                return Err(StoreError::UnexpectedEof);
            }
            let mut tokens = line.split_whitespace();
            let word = tokens.next().ok_or(StoreError::UnexpectedEof)?.to_string();
            let mut vector = Vec::with_capacity(dim);
            for token in tokens {
                let value: f32 = token.parse().map_err(|_| {
                    StoreError::InvalidComponent(line_no + 2, token.to_string())
                })?;
                if !value.is_finite() {
                    return Err(StoreError::InvalidComponent(line_no + 2, token.to_string()));
                }
                vector.push(value);
            }
            if vector.len() != dim {
                return Err(StoreError::DimensionMismatch {
                    line: line_no + 2,
                    expected: dim,
                    found: vector.len(),
                });
            }
            rows.push((word, vector));
        }
        Self::from_rows(rows)
    }

    pub fn write_text<W: Write>(&self, out: &mut W) -> Result<(), StoreError> {
        if self.words.is_empty() {
            return Err(StoreError::EmptyVocab);
        }
        writeln!(out, "{} {}", self.words.len(), self.dim)?;
        for (idx, word) in self.words.iter().enumerate() {
            out.write_all(word.as_bytes())?;
            for &v in self.row(idx) {
                write!(out, " {}", format_component(v))?;
            }
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(reader: &mut R) -> Result<Self, StoreError> {
        let mut magic = [0u8; 4];
        read_exact(reader, &mut magic)?;
        if &magic != b"EMB1" {
            return Err(StoreError::BadMagic);
        }
        let vocab_size = read_u32(reader)? as usize;
        let dim = read_u32(reader)? as usize;
        if vocab_size == 0 {
            return Err(StoreError::EmptyVocab);
        }
        if dim == 0 {
            return Err(StoreError::ZeroDim);
        }
        let mut rows = Vec::with_capacity(vocab_size);
        for _ in 0..vocab_size {
            let word_len = read_u16(reader)? as usize;
            let mut word_bytes = vec![0u8; word_len];
            read_exact(reader, &mut word_bytes)?;
            let word = String::from_utf8(word_bytes)
                .map_err(|e| StoreError::InvalidWord(String::from_utf8_lossy(e.as_bytes()).into_owned()))?;
            let mut vector = Vec::with_capacity(dim);
            let mut buf = [0u8; 4];
            for _ in 0..dim {
                read_exact(reader, &mut buf)?;
                vector.push(f32::from_le_bytes(buf));
            }
            rows.push((word, vector));
        }
        Self::from_rows(rows)
    }

    pub fn write_binary<W: Write>(&self, out: &mut W) -> Result<(), StoreError> {
        if self.words.is_empty() {
            return Err(StoreError::EmptyVocab);
        }
        out.write_all(b"EMB1")?;
        out.write_all(&(self.words.len() as u32).to_le_bytes())?;
        out.write_all(&(self.dim as u32).to_le_bytes())?;
        for (idx, word) in self.words.iter().enumerate() {
            out.write_all(&(word.len() as u16).to_le_bytes())?;
            out.write_all(word.as_bytes())?;
            for &v in self.row(idx) {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

fn read_exact<R: Read>(reader: &mut R, buf: &mut [u8]) -> Result<(), StoreError> {
    reader.read_exact(buf).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            StoreError::UnexpectedEof
        } else {
            StoreError::Io(e)
        }
    })
}

fn read_u32<R: Read>(reader: &mut R) -> Result<u32, StoreError> {
    let mut buf = [0u8; 4];
    read_exact(reader, &mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u16<R: Read>(reader: &mut R) -> Result<u16, StoreError> {
    let mut buf = [0u8; 2];
    read_exact(reader, &mut buf)?;
    Ok(u16::from_le_bytes(buf))
}

/// Render a component with at least six significant digits and at least
/// six decimal places, then trim trailing zeros. Writing a value that was
/// itself parsed from this rendering reproduces the same string.
pub(crate) fn format_component(v: f32) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let exp = (v.abs() as f64).log10().floor() as i32;
    let decimals = (5 - exp).max(6) as usize;
    let mut s = format!("{:.*}", decimals, v);
    if s.contains('.') {
        s.truncate(s.trim_end_matches('0').trim_end_matches('.').len());
    }
    s
}
