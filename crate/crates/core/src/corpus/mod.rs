//! Corpus-to-embedding pipeline: tweet preprocessing, hashtag filtering,
//! vocabulary and co-occurrence construction, GloVe training.

mod cooccur;
mod glove;
mod tweets;

use thiserror::Error;

pub use cooccur::{build_vocab, count_cooccurrence, CooccurrenceTable, Vocabulary, Weighting};
pub use glove::{train_glove, train_glove_with, GloveConfig, GloveModel, TrainedGlove};
pub use tweets::{
    filter_by_hashtags, preprocess_texts, preprocess_tweets, tokenize, FilterMeta, InputFormat,
    PreprocessOptions, Rules, RulesMeta, TokenizedCorpus, ANTI_CHINESE_14,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("corpus contains no documents")]
    EmptyCorpus,
    #[error("no token reaches min_count {0}")]
    EmptyVocabulary(u64),
    #[error("co-occurrence table is empty")]
    EmptyTable,
    #[error("invalid GloVe config: {0}")]
    InvalidConfig(String),
    #[error(
        "loss became non-finite in epoch {epoch}; try a smaller learning_rate (currently {learning_rate})"
    )]
    NonFiniteLoss { epoch: usize, learning_rate: f64 },
    #[error("window must be at least 1")]
    InvalidWindow,
}

impl CorpusError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CorpusError::Io { .. } | CorpusError::MalformedRecord { .. } => 1,
            CorpusError::NonFiniteLoss { .. } => 3,
            _ => 2,
        }
    }
}
