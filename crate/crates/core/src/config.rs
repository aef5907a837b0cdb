//! JSON experiment configuration.
//!
//! ```json
//! {
//!   "embeddings": [{"name": "twitter-g", "path": "glove.txt", "format": "glove", "lowercase": true}],
//!   "tests": [{"name": "russia-china/pleasant", "x": "russia_cities", "y": "china_cities",
//!              "a": "pleasant", "b": ["happy", "joy"], "balance_policy": "truncate_seeded", "seed": 1}],
//!   "permutation": {"mode": "auto", "draws": 100000, "comparator": "geq", "max_exact_partitions": 1000000}
//! }
//! ```
//!
//! A set reference is either a builtin name or an inline token array.
//! Relative embedding paths are resolved against the config file's directory.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::{self, BalancePolicy, BiasTestSpec, LexiconError, WordSet, DEFAULT_MIN_SET_SIZE};
use crate::weat::{
    Comparator, PermutationAxis, PermutationMode, PermutationPlan, StdConvention, DEFAULT_DRAWS,
    DEFAULT_MAX_EXACT_PARTITIONS,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema violation at {path}: {message}")]
    SchemaViolation { path: String, message: String },
    #[error("test {test:?}: {source}")]
    Lexicon {
        test: String,
        #[source]
        source: LexiconError,
    },
    #[error("config declares no tests")]
    EmptySuite,
    #[error("test {test:?} refers to undeclared embedding {embedding:?}")]
    UnknownEmbedding { test: String, embedding: String },
    #[error("embedding name {0:?} declared twice")]
    DuplicateEmbedding(String),
}

impl ConfigError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ConfigError::Io { .. } | ConfigError::SchemaViolation { .. } => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingFormat {
    #[default]
    Glove,
    Word2vec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingEntry {
    pub name: String,
    pub path: PathBuf,
    #[serde(default)]
    pub format: EmbeddingFormat,
    #[serde(default = "yes")]
    pub lowercase: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SetRef {
    Builtin(String),
    Inline(Vec<String>),
}

impl SetRef {
    pub fn to_wordset(&self, fallback_name: &str) -> Result<WordSet, LexiconError> {
        match self {
            SetRef::Builtin(name) => lexicon::builtin(name),
            SetRef::Inline(tokens) => WordSet::new(fallback_name, tokens),
        }
    }
}

/// A published reference value for one (test, embedding) cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expected {
    pub d: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    /// Set when only an upper bound on p was published.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_below: Option<f64>,
}

impl Expected {
    pub const D_TOLERANCE: f64 = 0.10;
    pub const P_TOLERANCE: f64 = 0.05;

    pub fn matches(&self, d: f64, p: f64) -> bool {
        let d_ok = (d - self.d).abs() <= Self::D_TOLERANCE;
        let p_ok = match (self.p, self.p_below) {
            (Some(want), _) => (p - want).abs() <= Self::P_TOLERANCE,
            (None, Some(bound)) => p < bound + Self::P_TOLERANCE,
            (None, None) => true,
        };
        d_ok && p_ok
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestEntry {
    pub name: String,
    pub x: SetRef,
    pub y: SetRef,
    pub a: SetRef,
    pub b: SetRef,
    #[serde(default)]
    pub balance_policy: BalancePolicy,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_min_set_size")]
    pub min_set_size: usize,
    /// Embeddings this test runs on; all declared embeddings when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub expected: BTreeMap<String, Expected>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn default_min_set_size() -> usize {
    DEFAULT_MIN_SET_SIZE
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PermutationEntry {
    #[serde(default)]
    pub mode: PermutationMode,
    #[serde(default = "default_draws")]
    pub draws: u64,
    #[serde(default)]
    pub comparator: Comparator,
    #[serde(default = "default_max_exact")]
    pub max_exact_partitions: u64,
    #[serde(default)]
    pub axis: PermutationAxis,
}

impl Default for PermutationEntry {
    fn default() -> Self {
        PermutationEntry {
            mode: PermutationMode::default(),
            draws: DEFAULT_DRAWS,
            comparator: Comparator::default(),
            max_exact_partitions: DEFAULT_MAX_EXACT_PARTITIONS,
            axis: PermutationAxis::default(),
        }
    }
}

fn default_draws() -> u64 {
    DEFAULT_DRAWS
}

fn default_max_exact() -> u64 {
    DEFAULT_MAX_EXACT_PARTITIONS
}

impl PermutationEntry {
    pub fn plan(&self, seed: u64) -> PermutationPlan {
        PermutationPlan {
            mode: self.mode,
            comparator: self.comparator,
            draws: self.draws,
            seed,
            max_exact_partitions: self.max_exact_partitions,
            axis: self.axis,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default)]
    pub embeddings: Vec<EmbeddingEntry>,
    pub tests: Vec<TestEntry>,
    #[serde(default)]
    pub permutation: PermutationEntry,
    #[serde(default)]
    pub std_convention: StdConvention,
}

/// A validated test ready to run.
#[derive(Debug, Clone)]
pub struct PreparedTest {
    pub spec: BiasTestSpec,
    pub seed: u64,
    pub embeddings: Vec<String>,
    pub expected: BTreeMap<String, Expected>,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
    pub tests: Vec<PreparedTest>,
}

impl Experiment {
    pub fn embedding_path(&self, entry: &EmbeddingEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.base_dir.join(&entry.path)
        }
    }

    pub fn plan_for(&self, test: &PreparedTest) -> PermutationPlan {
        self.config.permutation.plan(test.seed)
    }
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| ConfigError::SchemaViolation {
        path: e.path().to_string(),
        message: e.into_inner().to_string(),
    })
}

fn prepare_test(entry: &TestEntry, declared: &[String]) -> Result<PreparedTest, ConfigError> {
    let wrap = |source| ConfigError::Lexicon {
        test: entry.name.clone(),
        source,
    };
    let set = |r: &SetRef, role: &str| r.to_wordset(&format!("{}.{role}", entry.name)).map_err(wrap);
    let spec = BiasTestSpec::new(
        entry.name.clone(),
        set(&entry.x, "x")?,
        set(&entry.y, "y")?,
        set(&entry.a, "a")?,
        set(&entry.b, "b")?,
    )
    .map_err(wrap)?
    .with_balance_policy(entry.balance_policy)
    .with_min_set_size(entry.min_set_size);

    let embeddings = match &entry.embeddings {
        Some(list) => list.clone(),
        None => declared.to_vec(),
    };
    for name in embeddings.iter().chain(entry.expected.keys()) {
        if !declared.contains(name) {
            return Err(ConfigError::UnknownEmbedding {
                test: entry.name.clone(),
                embedding: name.clone(),
            });
        }
    }
    Ok(PreparedTest {
        spec,
        seed: entry.seed,
        embeddings,
        expected: entry.expected.clone(),
    })
}

pub fn prepare(config: ExperimentConfig, base_dir: PathBuf) -> Result<Experiment, ConfigError> {
    if config.tests.is_empty() {
        return Err(ConfigError::EmptySuite);
    }
    let mut names = HashSet::new();
    for e in &config.embeddings {
        if !names.insert(e.name.clone()) {
            return Err(ConfigError::DuplicateEmbedding(e.name.clone()));
        }
    }
    let declared: Vec<String> = config.embeddings.iter().map(|e| e.name.clone()).collect();
    let tests = config
        .tests
        .iter()
        .map(|t| prepare_test(t, &declared))
        .collect::<Result<_, _>>()?;
    Ok(Experiment {
        config,
        base_dir,
        tests,
    })
}

pub fn load_experiment(path: impl AsRef<Path>) -> Result<Experiment, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let config = parse_config_str(&text)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    prepare(config, base)
}

/// The bias tests a config defines, validated.
pub fn parse_test_config(path: impl AsRef<Path>) -> Result<Vec<BiasTestSpec>, ConfigError> {
    Ok(load_experiment(path)?.tests.into_iter().map(|t| t.spec).collect())
}
