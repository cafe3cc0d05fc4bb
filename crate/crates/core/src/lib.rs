//! Toolkit for auditing social bias in word embeddings.
//!
//! The crate is organized around one pipeline:
//!
//! 1. [`store`] — immutable word-vector storage with cosine geometry and
//!    nearest-neighbour search, plus text/binary file formats.
//! 2. [`sgns`] — a skip-gram negative-sampling trainer, with an optional
//!    character n-gram (subword) mode.
//! 3. [`weat`] — word-association tests over a store: test statistic,
//!    effect size and permutation p-values.
//! 4. [`modify`] — bias modification in both directions: corpus
//!    sub-sampling before training, or attract-repel specialization of an
//!    already trained space.
//! 5. [`eval`] — a frozen-embedding downstream classifier and per-group
//!    precision/recall gap metrics.
//! 6. [`harness`] — an experiment grid that ties all of the above
//!    together and correlates intrinsic effect sizes with downstream gaps.
//!
//! [`synthetic`] generates the self-contained fixtures used by the test
//! suite, the bundled example experiment and the browser demo.

pub mod corpus;
pub mod eval;
pub mod harness;
pub mod modify;
pub mod sgns;
pub mod store;
pub mod subword;
pub mod svg;
pub mod synthetic;
pub mod weat;

use std::io;

pub use corpus::Corpus;
pub use eval::{Classifier, ClassifierConfig, GapMetrics, Group, GroupedConfusion, LabeledExample};
pub use modify::{ArHyper, ConstraintSet, Direction, StereotypeLexicon};
pub use sgns::{TrainConfig, Vocab};
pub use store::{EmbeddingStore, StoreFormat};
pub use weat::{OovPolicy, WeatResult, WeatTest};

/// Any error the toolkit can produce, for callers that do not care which
/// stage failed.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Store(#[from] store::StoreError),
    #[error(transparent)]
    Train(#[from] sgns::TrainError),
    #[error(transparent)]
    Weat(#[from] weat::WeatError),
    #[error(transparent)]
    Modify(#[from] modify::ModifyError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
    #[error(transparent)]
    Harness(#[from] harness::HarnessError),
    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// True when the failure is an environment problem (I/O) rather than
    /// invalid input. The CLI maps this to its exit codes.
    pub fn is_runtime(&self) -> bool {
        match self {
            Error::Io(_) => true,
            Error::Store(e) => e.is_io(),
            Error::Train(_) => false,
            Error::Weat(_) => false,
            Error::Modify(_) => false,
            Error::Eval(e) => e.is_io(),
            Error::Harness(e) => e.is_io(),
            Error::Corpus(e) => e.is_io(),
        }
    }
}
