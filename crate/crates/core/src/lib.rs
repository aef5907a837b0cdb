//! Word Embedding Association Tests for tweet-trained word vectors.
//!
//! The crate is organized bottom-up:
//!
//! * [`embedding`] loads and saves GloVe / word2vec text tables and provides
//!   the cosine kernel.
//! * [`lexicon`] holds the builtin word sets and resolves a test against a
//!   vocabulary, balancing set sizes with a seeded draw.
//! * [`weat`] computes association scores, the effect size and exact or
//!   Monte Carlo permutation p-values.
//! * [`corpus`] turns tweet dumps into GloVe embeddings.
//! * [`config`] and [`report`] run experiment suites and render their output.

pub mod config;
pub mod corpus;
pub mod embedding;
pub mod lexicon;
pub mod parallel;
pub mod report;
pub mod weat;

use thiserror::Error;

pub use embedding::{cosine, EmbeddingTable, LoadOptions};
pub use lexicon::{BiasTestSpec, ResolvedTest, WordSet};
pub use weat::{run_weat, PermutationPlan, StdConvention, WeatResult};

/// Any failure surfaced by the command-line tool.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Embedding(#[from] embedding::EmbeddingError),
    #[error(transparent)]
    Lexicon(#[from] lexicon::LexiconError),
    #[error(transparent)]
    Weat(#[from] weat::WeatError),
    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Report(#[from] report::ReportError),
}

impl Error {
    /// 0 success, 1 I/O or parse, 2 validation or resolution, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        use embedding::EmbeddingError as E;
        match self {
            Error::Embedding(E::ZeroVector | E::DimensionMismatch(..)) => 3,
            Error::Embedding(E::TokenUnencodable(_) | E::EmptyTable) => 2,
            Error::Embedding(_) => 1,
            Error::Lexicon(_) => 2,
            Error::Weat(weat::WeatError::DegenerateSpread) => 3,
            Error::Weat(weat::WeatError::Embedding(_)) => 3,
            Error::Weat(_) => 2,
            Error::Corpus(e) => e.exit_code(),
            Error::Config(e) => e.exit_code(),
            Error::Report(e) => e.exit_code(),
        }
    }
}
