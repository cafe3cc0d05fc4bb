//! Tokenized corpora: one sentence per line, tokens separated by single
//! spaces. Sentence boundaries are hard boundaries for every consumer.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use unicode_normalization::UnicodeNormalization;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("corpus is empty")]
    Empty,
}

impl CorpusError {
    pub fn is_io(&self) -> bool {
        matches!(self, CorpusError::Io(_))
    }
}

/// A list of tokenized sentences.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    sentences: Vec<Vec<String>>,
}

impl Corpus {
    pub fn new(sentences: Vec<Vec<String>>) -> Self {
        Corpus { sentences }
    }

    pub fn sentences(&self) -> &[Vec<String>] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(|s| s.len()).sum()
    }

    /// Read a corpus that is already tokenized (tokens split on
    /// whitespace, no further normalization). Blank lines are skipped.
    pub fn read_pretokenized(path: &Path) -> Result<Self, CorpusError> {
        let reader = BufReader::new(File::open(path)?);
        let mut sentences = Vec::new();
        for line in reader.lines() {
            let line = line?;
            let tokens: Vec<String> = line.split_whitespace().map(str::to_string).collect();
            if !tokens.is_empty() {
                sentences.push(tokens);
            }
        }
        if sentences.is_empty() {
            return Err(CorpusError::Empty);
        }
        Ok(Corpus { sentences })
    }

    /// Read raw text and normalize it with [`tokenize`].
    pub fn read_normalized(path: &Path) -> Result<Self, CorpusError> {
        let reader = BufReader::new(File::open(path)?);
        let mut sentences = Vec::new();
        for line in reader.lines() {
            let tokens = tokenize(&line?);
            if !tokens.is_empty() {
                sentences.push(tokens);
            }
        }
        if sentences.is_empty() {
            return Err(CorpusError::Empty);
        }
        Ok(Corpus { sentences })
    }

    pub fn write(&self, path: &Path) -> Result<(), CorpusError> {
        let mut out = BufWriter::new(File::create(path)?);
        for sentence in &self.sentences {
            writeln!(out, "{}", sentence.join(" "))?;
        }
        out.flush()?;
        Ok(())
    }
}

pub const MENTION_TOKEN: &str = "<mention>";
pub const URL_TOKEN: &str = "<url>";

/// Normalize a line of raw text: Unicode NFC, lowercase, split on
/// whitespace, with @-mentions and URLs replaced by placeholder tokens.
pub fn tokenize(line: &str) -> Vec<String> {
    line.split_whitespace()
        .map(|raw| {
            let token: String = raw.nfc().collect::<String>().to_lowercase();
            if token.len() > 1 && token.starts_with('@') {
                MENTION_TOKEN.to_string()
            } else if token.starts_with("http://")
                || token.starts_with("https://")
                || token.starts_with("www.")
            {
                URL_TOKEN.to_string()
            } else {
                token
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_lowercases_and_replaces_placeholders() {
        let tokens = tokenize("Hello @Someone see https://example.com NOW");
        assert_eq!(tokens, vec!["hello", "<mention>", "see", "<url>", "now"]);
    }

    #[test]
    fn tokenize_applies_nfc() {
        // "é" as e + combining acute composes to a single code point.
        let decomposed = "cafe\u{0301}";
        let tokens = tokenize(decomposed);
        assert_eq!(tokens, vec!["caf\u{e9}"]);
    }

    #[test]
    fn lone_at_sign_is_kept() {
        assert_eq!(tokenize("@ b"), vec!["@", "b"]);
    }

    #[test]
    fn read_write_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt");
        let corpus = Corpus::new(vec![
            vec!["a".into(), "b".into()],
            vec!["c".into()],
        ]);
        corpus.write(&path).unwrap();
        let back = Corpus::read_pretokenized(&path).unwrap();
        assert_eq!(corpus, back);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.txt");
        std::fs::write(&path, "\n\n").unwrap();
        assert!(matches!(
            Corpus::read_pretokenized(&path),
            Err(CorpusError::Empty)
        ));
    }
}
