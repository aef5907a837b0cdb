//! Word sets, the builtin stimulus registry, and resolution of a test against
//! an embedding vocabulary.

use std::collections::HashSet;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddingTable;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("unknown builtin word set {0:?}")]
    UnknownBuiltin(String),
    #[error("word set {name:?}: {reason}")]
    InvalidWordSet { name: String, reason: String },
    #[error("test {test:?}: sets {first:?} and {second:?} overlap on {shared:?}")]
    OverlappingSets {
        test: String,
        first: String,
        second: String,
        shared: Vec<String>,
    },
    #[error("test {test:?}: word set name {name:?} is used for more than one role")]
    DuplicateSetName { test: String, name: String },
    #[error("sets {first:?} ({first_len}) and {second:?} ({second_len}) differ in size and the balance policy is `error`")]
    UnequalSets {
        first: String,
        first_len: usize,
        second: String,
        second_len: usize,
    },
    #[error("sets {first:?}/{second:?} balance to {size} tokens, below the minimum of {min}")]
    ResultTooSmall {
        first: String,
        second: String,
        size: usize,
        min: usize,
    },
    #[error("every token of set {0:?} is out of vocabulary")]
    AllTokensOov(String),
}

/// A named, ordered list of distinct lowercase tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WordSet {
    name: String,
    tokens: Vec<String>,
}

impl WordSet {
    /// Tokens are case-folded; duplicates, blanks and whitespace are rejected.
    pub fn new<S: AsRef<str>>(name: impl Into<String>, tokens: &[S]) -> Result<Self, LexiconError> {
        let name = name.into();
        let invalid = |reason: String| LexiconError::InvalidWordSet {
            name: name.clone(),
            reason,
        };
        if tokens.is_empty() {
            return Err(invalid("set is empty".into()));
        }
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(tokens.len());
        for t in tokens {
            let t = t.as_ref().to_lowercase();
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(invalid(format!("token {t:?} is empty or contains whitespace")));
            }
            if !seen.insert(t.clone()) {
                return Err(invalid(format!("token {t:?} appears twice")));
            }
            out.push(t);
        }
        Ok(WordSet { name, tokens: out })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

const BUILTINS: &[(&str, &[&str])] = &[
    // attribute pairs, used with every embedding
    (
        "pleasant",
        &[
            "glorious",
            "happy",
            "joy",
            "laughter",
            "love",
            "pleasure",
            "peace",
            "wonderful",
        ],
    ),
    (
        "unpleasant",
        &[
            "agony", "awful", "evil", "failure", "horrible", "hurt", "nasty", "terrible",
        ],
    ),
    ("calm", &["calm", "peaceful", "quiet", "relaxed", "tranquil"]),
    ("panic", &["anxious", "fear", "frightened", "panicked", "scared"]),
    (
        "trustworthy",
        &[
            "friendly",
            "trustworthy",
            "warm",
            "sincere",
            "nice",
            "kind",
            "supportive",
        ],
    ),
    (
        "untrustworthy",
        &[
            "selfish",
            "mean",
            "dishonest",
            "cold",
            "disloyal",
            "untrustworthy",
            "deceitful",
        ],
    ),
    // IRA-DisInfo
    (
        "blacklivesmatter",
        &[
            "#blacklivesmatter",
            "#blm",
            "#ferguson",
            "#handsupdontshoot",
            "#icantbreathe",
        ],
    ),
    (
        "police",
        &[
            "#alllivesmatter",
            "#backtheblue",
            "#bluelivesmatter",
            "#policelivesmatter",
            "#thinblueline",
        ],
    ),
    // RU-DisInfo
    (
        "trump",
        &["trump", "#trump", "#maga", "#trump2016", "@realdonaldtrump"],
    ),
    (
        "clinton",
        &[
            "clinton",
            "#clinton",
            "#hillaryclinton",
            "#clinton2016",
            "@hillaryclinton",
        ],
    ),
    (
        "obama",
        &["obama", "#obama", "#barackobama", "#yeswecan", "@barackobama"],
    ),
    (
        "sanders",
        &[
            "sanders",
            "#sanders",
            "@berniesanders",
            "#feelthebern",
            "#berniesanders",
        ],
    ),
    // COVID-G and COVID-AC
    (
        "russia",
        &[
            "moscow",
            "russia",
            "russian",
            "russians",
            "#moscow",
            "#russia",
            "#russian",
            "#russians",
        ],
    ),
    (
        "china",
        &[
            "beijing", "china", "chinese", "wuhan", "#beijing", "#china", "#chinese", "#wuhan",
        ],
    ),
    (
        "germany",
        &[
            "berlin", "german", "germans", "germany", "#berlin", "#german", "#germany",
        ],
    ),
    (
        "iran",
        &[
            "iran",
            "iranian",
            "iranians",
            "tehran",
            "#iran",
            "#iranian",
            "#iranians",
            "#tehran",
        ],
    ),
    (
        "usa",
        &[
            "america",
            "american",
            "usa",
            "washington",
            "#america",
            "#american",
            "#usa",
            "#washington",
        ],
    ),
    // Twitter-G, hashtags replaced by city names
    (
        "russia_cities",
        &[
            "moscow",
            "novosibirsk",
            "petersburg",
            "russia",
            "russian",
            "russians",
            "volgograd",
            "yekaterinburg",
        ],
    ),
    (
        "china_cities",
        &[
            "beijing", "chengdu", "china", "chinese", "shanghai", "shenzhen", "tianjin", "wuhan",
        ],
    ),
];

/// Names of every builtin word set, in registry order.
pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTINS.iter().map(|(name, _)| *name)
}

pub fn builtin(name: &str) -> Result<WordSet, LexiconError> {
    BUILTINS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(n, tokens)| WordSet {
            name: (*n).to_string(),
            tokens: tokens.iter().map(|t| t.to_string()).collect(),
        })
        .ok_or_else(|| LexiconError::UnknownBuiltin(name.to_string()))
}

pub fn builtin_wordsets() -> Vec<WordSet> {
    builtin_names()
        .map(|n| builtin(n).expect("registry entry"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalancePolicy {
    Error,
    #[default]
    TruncateSeeded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SetRole {
    X,
    Y,
    A,
    B,
}

impl fmt::Display for SetRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SetRole::X => "x",
            SetRole::Y => "y",
            SetRole::A => "a",
            SetRole::B => "b",
        };
        f.write_str(s)
    }
}

pub const DEFAULT_MIN_SET_SIZE: usize = 2;
/// Below this many tokens a resolved set triggers a warning.
pub const SMALL_SET_WARNING: usize = 5;

/// One bias test: target sets X, Y and polar attribute sets A, B.
#[derive(Debug, Clone, Serialize)]
pub struct BiasTestSpec {
    pub test_name: String,
    pub targets_x: WordSet,
    pub targets_y: WordSet,
    pub attrs_a: WordSet,
    pub attrs_b: WordSet,
    pub balance_policy: BalancePolicy,
    pub min_set_size: usize,
}

impl BiasTestSpec {
    pub fn new(
        test_name: impl Into<String>,
        x: WordSet,
        y: WordSet,
        a: WordSet,
        b: WordSet,
    ) -> Result<Self, LexiconError> {
        let spec = Self::new_unchecked(test_name, x, y, a, b);
        spec.validate()?;
        Ok(spec)
    }

    /// Skips the overlap and naming checks; meant for degenerate test fixtures.
    pub fn new_unchecked(
        test_name: impl Into<String>,
        x: WordSet,
        y: WordSet,
        a: WordSet,
        b: WordSet,
    ) -> Self {
        BiasTestSpec {
            test_name: test_name.into(),
            targets_x: x,
            targets_y: y,
            attrs_a: a,
            attrs_b: b,
            balance_policy: BalancePolicy::default(),
            min_set_size: DEFAULT_MIN_SET_SIZE,
        }
    }

    pub fn with_balance_policy(mut self, policy: BalancePolicy) -> Self {
        self.balance_policy = policy;
        self
    }

    pub fn with_min_set_size(mut self, min: usize) -> Self {
        self.min_set_size = min.max(1);
        self
    }

    pub fn sets(&self) -> [(SetRole, &WordSet); 4] {
        [
            (SetRole::X, &self.targets_x),
            (SetRole::Y, &self.targets_y),
            (SetRole::A, &self.attrs_a),
            (SetRole::B, &self.attrs_b),
        ]
    }

    pub fn validate(&self) -> Result<(), LexiconError> {
        let sets = self.sets();
        for (i, (_, s)) in sets.iter().enumerate() {
            if sets[..i].iter().any(|(_, t)| t.name == s.name) {
                return Err(LexiconError::DuplicateSetName {
                    test: self.test_name.clone(),
                    name: s.name.clone(),
                });
            }
        }
        for (p, q) in [(&self.targets_x, &self.targets_y), (&self.attrs_a, &self.attrs_b)] {
            let shared = shared_tokens(p, q);
            if !shared.is_empty() {
                return Err(LexiconError::OverlappingSets {
                    test: self.test_name.clone(),
                    first: p.name.clone(),
                    second: q.name.clone(),
                    shared,
                });
            }
        }
        Ok(())
    }

    /// Targets that are also attributes are legal but worth flagging.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        for t in [&self.targets_x, &self.targets_y] {
            for a in [&self.attrs_a, &self.attrs_b] {
                let shared = shared_tokens(t, a);
                if !shared.is_empty() {
                    out.push(format!(
                        "target set {:?} shares {:?} with attribute set {:?}",
                        t.name, shared, a.name
                    ));
                }
            }
        }
        out
    }
}

fn shared_tokens(p: &WordSet, q: &WordSet) -> Vec<String> {
    let q: HashSet<&str> = q.tokens.iter().map(String::as_str).collect();
    p.tokens
        .iter()
        .filter(|t| q.contains(t.as_str()))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Oov,
    DroppedForBalance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditEntry {
    pub token: String,
    pub reason: DropReason,
    pub set: SetRole,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Balanced {
    pub p: Vec<String>,
    pub q: Vec<String>,
    pub dropped_p: Vec<String>,
    pub dropped_q: Vec<String>,
}

/// Equalizes two token lists. Under `TruncateSeeded` the longer list loses
/// a seeded uniform sample (without replacement) of its excess; the survivors
/// keep their original order.
pub fn balance(
    (p_name, p): (&str, &[String]),
    (q_name, q): (&str, &[String]),
    policy: BalancePolicy,
    seed: u64,
    min_set_size: usize,
) -> Result<Balanced, LexiconError> {
    let size = p.len().min(q.len());
    if p.len() != q.len() && policy == BalancePolicy::Error {
        return Err(LexiconError::UnequalSets {
            first: p_name.to_string(),
            first_len: p.len(),
            second: q_name.to_string(),
            second_len: q.len(),
        });
    }
    if size < min_set_size {
        return Err(LexiconError::ResultTooSmall {
            first: p_name.to_string(),
            second: q_name.to_string(),
            size,
            min: min_set_size,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut truncate = |list: &[String]| -> (Vec<String>, Vec<String>) {
        let excess = list.len() - size;
        if excess == 0 {
            return (list.to_vec(), Vec::new());
        }
        let mut remove = rand::seq::index::sample(&mut rng, list.len(), excess).into_vec();
        remove.sort_unstable();
        let mut kept = Vec::with_capacity(size);
        let mut dropped = Vec::with_capacity(excess);
        for (i, t) in list.iter().enumerate() {
            if remove.binary_search(&i).is_ok() {
                dropped.push(t.clone());
            } else {
                kept.push(t.clone());
            }
        }
        (kept, dropped)
    };
    let (p, dropped_p) = truncate(p);
    let (q, dropped_q) = truncate(q);
    Ok(Balanced {
        p,
        q,
        dropped_p,
        dropped_q,
    })
}

/// One set after resolution: surviving tokens and their vectors, in set order.
#[derive(Debug, Clone)]
pub struct ResolvedSet {
    pub name: String,
    pub tokens: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
}

impl ResolvedSet {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct ResolvedTest {
    pub spec: BiasTestSpec,
    pub x: ResolvedSet,
    pub y: ResolvedSet,
    pub a: ResolvedSet,
    pub b: ResolvedSet,
    pub seed: u64,
    pub audit: Vec<AuditEntry>,
    pub warnings: Vec<String>,
}

impl ResolvedTest {
    /// |X| = |Y|
    pub fn m(&self) -> usize {
        self.x.len()
    }

    /// |A| = |B|
    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn set(&self, role: SetRole) -> &ResolvedSet {
        match role {
            SetRole::X => &self.x,
            SetRole::Y => &self.y,
            SetRole::A => &self.a,
            SetRole::B => &self.b,
        }
    }
}

// Target and attribute balancing draw from independent streams of the same seed.
fn balance_seed(seed: u64, pair: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(pair)
}

/// Looks every token up, removes OOV tokens, then balances X/Y and A/B.
pub fn resolve(spec: &BiasTestSpec, table: &EmbeddingTable, seed: u64) -> Result<ResolvedTest, LexiconError> {
    let mut audit = Vec::new();
    let mut present: Vec<Vec<String>> = Vec::with_capacity(4);
    for (role, set) in spec.sets() {
        let mut kept = Vec::new();
        for t in set.tokens() {
            if table.contains(t) {
                kept.push(t.clone());
            } else {
                audit.push(AuditEntry {
                    token: t.clone(),
                    reason: DropReason::Oov,
                    set: role,
                });
            }
        }
        if kept.is_empty() {
            return Err(LexiconError::AllTokensOov(set.name().to_string()));
        }
        present.push(kept);
    }

    let targets = balance(
        (spec.targets_x.name(), &present[0]),
        (spec.targets_y.name(), &present[1]),
        spec.balance_policy,
        balance_seed(seed, 0),
        spec.min_set_size,
    )?;
    let attrs = balance(
        (spec.attrs_a.name(), &present[2]),
        (spec.attrs_b.name(), &present[3]),
        spec.balance_policy,
        balance_seed(seed, 1),
        spec.min_set_size,
    )?;

    for (role, dropped) in [
        (SetRole::X, &targets.dropped_p),
        (SetRole::Y, &targets.dropped_q),
        (SetRole::A, &attrs.dropped_p),
        (SetRole::B, &attrs.dropped_q),
    ] {
        audit.extend(dropped.iter().map(|t| AuditEntry {
            token: t.clone(),
            reason: DropReason::DroppedForBalance,
            set: role,
        }));
    }

    let build = |set: &WordSet, tokens: Vec<String>| ResolvedSet {
        name: set.name().to_string(),
        vectors: tokens
            .iter()
            .map(|t| table.lookup(t).expect("resolved token present").to_vec())
            .collect(),
        tokens,
    };
    let resolved = ResolvedTest {
        x: build(&spec.targets_x, targets.p),
        y: build(&spec.targets_y, targets.q),
        a: build(&spec.attrs_a, attrs.p),
        b: build(&spec.attrs_b, attrs.q),
        spec: spec.clone(),
        seed,
        audit,
        warnings: Vec::new(),
    };
    let mut warnings = spec.warnings();
    for role in [SetRole::X, SetRole::Y, SetRole::A, SetRole::B] {
        let set = resolved.set(role);
        if set.len() < SMALL_SET_WARNING {
            warnings.push(format!(
                "set {:?} resolved to {} tokens; fewer than {SMALL_SET_WARNING} stimuli weaken the test",
                set.name,
                set.len()
            ));
        }
    }
    Ok(ResolvedTest { warnings, ..resolved })
}
