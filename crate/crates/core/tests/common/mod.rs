//! Brute-force reference implementations and fixture generators shared by
//! the integration tests. Nothing here calls into the crate's WEAT code.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Vector = Vec<f64>;

#[derive(Debug, Clone)]
pub struct Fixture {
    pub x: Vec<Vector>,
    pub y: Vec<Vector>,
    pub a: Vec<Vector>,
    pub b: Vec<Vector>,
}

impl Fixture {
    pub fn m(&self) -> usize {
        self.x.len()
    }

    pub fn swapped_targets(&self) -> Fixture {
        Fixture {
            x: self.y.clone(),
            y: self.x.clone(),
            ..self.clone()
        }
    }

    pub fn swapped_attributes(&self) -> Fixture {
        Fixture {
            a: self.b.clone(),
            b: self.a.clone(),
            ..self.clone()
        }
    }
}

pub fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vector {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn random_fixture(rng: &mut ChaCha8Rng, m: usize, n: usize, dim: usize) -> Fixture {
    let mut set = |k: usize| (0..k).map(|_| gaussian(rng, dim)).collect::<Vec<_>>();
    Fixture {
        x: set(m),
        y: set(m),
        a: set(n),
        b: set(n),
    }
}

/// Cosine computed term by term, with no clamping or shared helpers.
pub fn naive_cosine(u: &[f64], v: &[f64]) -> f64 {
    let mut uv = 0.0;
    let mut uu = 0.0;
    let mut vv = 0.0;
    for i in 0..u.len() {
        uv += u[i] * v[i];
        uu += u[i] * u[i];
        vv += v[i] * v[i];
    }
    uv / (uu.sqrt() * vv.sqrt())
}

pub fn naive_s(w: &[f64], a: &[Vector], b: &[Vector]) -> f64 {
    let pos: f64 = a.iter().map(|v| naive_cosine(w, v)).sum();
    let neg: f64 = b.iter().map(|v| naive_cosine(w, v)).sum();
    pos - neg
}

pub fn oracle_scores(f: &Fixture) -> Vec<f64> {
    f.x.iter().chain(&f.y).map(|w| naive_s(w, &f.a, &f.b)).collect()
}

/// d with a population (divide-by-2m) standard deviation, or the sample one
/// when `sample` is set.
pub fn oracle_d(f: &Fixture, sample: bool) -> f64 {
    let scores = oracle_scores(f);
    let m = f.m();
    let mean_x = scores[..m].iter().sum::<f64>() / m as f64;
    let mean_y = scores[m..].iter().sum::<f64>() / m as f64;
    let mu = scores.iter().sum::<f64>() / scores.len() as f64;
    let ss: f64 = scores.iter().map(|s| (s - mu).powi(2)).sum();
    let denom = if sample { scores.len() - 1 } else { scores.len() };
    (mean_x - mean_y) / (ss / denom as f64).sqrt()
}

/// Exact one-sided p-value by visiting every bitmask of the 2m pooled
/// targets with exactly m bits set. The statistic of a split is the raw
/// differential `Σ_{X_i} s − Σ_{Y_i} s`.
pub fn oracle_exact_p(f: &Fixture, strict: bool) -> (f64, u64) {
    let scores = oracle_scores(f);
    let m = f.m();
    let total: f64 = scores.iter().sum();
    let stat = |mask: u64| -> f64 {
        let left: f64 = (0..2 * m).filter(|i| mask >> i & 1 == 1).map(|i| scores[i]).sum();
        left - (total - left)
    };
    let observed = stat((1u64 << m) - 1);
    let slack = 1e-9 * (1.0 + observed.abs());
    let mut hits = 0u64;
    let mut visited = 0u64;
    for mask in 0u64..(1u64 << (2 * m)) {
        if mask.count_ones() as usize != m {
            continue;
        }
        visited += 1;
        let t = stat(mask);
        let counted = if strict {
            t > observed + slack
        } else {
            t >= observed - slack
        };
        hits += u64::from(counted);
    }
    (hits as f64 / visited as f64, visited)
}

pub fn choose(n: u64, k: u64) -> u64 {
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// X/Y and A/B lie on two orthogonal axes: every X word is aligned with A,
/// every Y word with B. The result is the most extreme association possible.
pub fn maximal_separation(m: usize) -> Fixture {
    let unit = |k: usize| -> Vector { (0..2).map(|i| if i == k { 1.0 } else { 0.0 }).collect() };
    Fixture {
        x: vec![unit(0); m],
        y: vec![unit(1); m],
        a: vec![unit(0); m],
        b: vec![unit(1); m],
    }
}

/// A synthetic corpus where the P-tokens co-occur only with pleasant-pole
/// words and the Q-tokens only with unpleasant-pole words.
pub struct PlantedCorpus {
    pub documents: Vec<String>,
    pub p_tokens: Vec<String>,
    pub q_tokens: Vec<String>,
    pub good: Vec<String>,
    pub bad: Vec<String>,
}

pub fn planted_corpus(rng: &mut ChaCha8Rng, docs: usize) -> PlantedCorpus {
    let names = |prefix: &str, k: usize| (0..k).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>();
    let p_tokens = names("ptarget", 8);
    let q_tokens = names("qtarget", 8);
    let good = names("goodattr", 8);
    let bad = names("badattr", 8);
    let filler = names("filler", 200);
    let mut documents = Vec::with_capacity(docs);
    for d in 0..docs {
        let (targets, attrs) = if d % 2 == 0 {
            (&p_tokens, &good)
        } else {
            (&q_tokens, &bad)
        };
        let mut words = vec![targets[rng.gen_range(0..targets.len())].clone()];
        for _ in 0..3 {
            words.push(attrs[rng.gen_range(0..attrs.len())].clone());
        }
        for _ in 0..6 {
            words.push(filler[rng.gen_range(0..filler.len())].clone());
        }
        let mut text = String::new();
        while !words.is_empty() {
            let w = words.swap_remove(rng.gen_range(0..words.len()));
            if !text.is_empty() {
                text.push(' ');
            }
            text.push_str(&w);
        }
        documents.push(text);
    }
    PlantedCorpus {
        documents,
        p_tokens,
        q_tokens,
        good,
        bad,
    }
}

/// GloVe-format text for a set of named vectors.
pub fn glove_text(rows: &[(String, Vector)]) -> String {
    let mut out = String::new();
    for (token, v) in rows {
        out.push_str(token);
        for x in v {
            out.push(' ');
            out.push_str(&x.to_string());
        }
        out.push('\n');
    }
    out
}

/// Fixture rows named x0.., y0.., a0.., b0.. for file-based tests.
pub fn named_rows(f: &Fixture) -> Vec<(String, Vector)> {
    let mut rows = Vec::new();
    for (prefix, set) in [("x", &f.x), ("y", &f.y), ("a", &f.a), ("b", &f.b)] {
        for (i, v) in set.iter().enumerate() {
            rows.push((format!("{prefix}{i}"), v.clone()));
        }
    }
    rows
}

pub fn names(prefix: &str, k: usize) -> Vec<String> {
    (0..k).map(|i| format!("{prefix}{i}")).collect()
}
