//! Weighted least-squares GloVe training with AdaGrad updates.
//!
//! Minimizes `Σ f(X_ij) (w_i·w̃_j + b_i + b̃_j − ln X_ij)²` with
//! `f(x) = min(1, (x / x_max)^alpha)`. Training is single-threaded and
//! bit-deterministic for a given seed.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CooccurrenceTable, CorpusError};
use crate::embedding::EmbeddingTable;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GloveConfig {
    pub dimension: usize,
    pub window: usize,
    pub x_max: f64,
    pub alpha: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub min_count: u64,
    pub seed: u64,
}

impl Default for GloveConfig {
    fn default() -> Self {
        GloveConfig {
            dimension: 50,
            window: 10,
            x_max: 100.0,
            alpha: 0.75,
            learning_rate: 0.05,
            epochs: 25,
            min_count: 5,
            seed: 0,
        }
    }
}

impl GloveConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |what: &str| Err(CorpusError::InvalidConfig(what.to_string()));
        if self.dimension == 0 {
            return bad("dimension must be positive");
        }
        if self.window == 0 {
            return bad("window must be positive");
        }
        if self.x_max.is_nan() || self.x_max <= 0.0 {
            return bad("x_max must be positive");
        }
        if self.alpha.is_nan() || self.alpha <= 0.0 || self.alpha > 1.0 {
            return bad("alpha must lie in (0, 1]");
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return bad("learning_rate must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.min_count == 0 {
            return bad("min_count must be positive");
        }
        Ok(())
    }

    pub fn weight(&self, x: f64) -> f64 {
        if x < self.x_max {
            (x / self.x_max).powf(self.alpha)
        } else {
            1.0
        }
    }
}

/// Main and context parameters, row-major `vocab × dimension`.
#[derive(Debug, Clone)]
pub struct GloveModel {
    pub dimension: usize,
    pub main: Vec<f64>,
    pub context: Vec<f64>,
    pub main_bias: Vec<f64>,
    pub context_bias: Vec<f64>,
}

impl GloveModel {
    fn init(vocab: usize, dimension: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 0.5 / dimension as f64;
        let mut draw = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.gen_range(-bound..bound)).collect() };
        GloveModel {
            dimension,
            main: draw(vocab * dimension),
            context: draw(vocab * dimension),
            main_bias: draw(vocab),
            context_bias: draw(vocab),
        }
    }

    pub fn main_row(&self, i: usize) -> &[f64] {
        &self.main[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn context_row(&self, j: usize) -> &[f64] {
        &self.context[j * self.dimension..(j + 1) * self.dimension]
    }

    fn residual(&self, i: usize, j: usize, x: f64) -> f64 {
        let dot: f64 = self
            .main_row(i)
            .iter()
            .zip(self.context_row(j))
            .map(|(a, b)| a * b)
            .sum();
        dot + self.main_bias[i] + self.context_bias[j] - x.ln()
    }

    /// Mean weighted squared residual over the table's entries.
    pub fn objective(&self, coocc: &CooccurrenceTable, config: &GloveConfig) -> f64 {
        let total: f64 = coocc
            .entries()
            .iter()
            .map(|&(i, j, x)| {
                let r = self.residual(i as usize, j as usize, x);
                config.weight(x) * r * r
            })
            .sum();
        total / coocc.len() as f64
    }

    /// Word vectors as main + context.
    pub fn word_vector(&self, i: usize) -> Vec<f64> {
        self.main_row(i)
            .iter()
            .zip(self.context_row(i))
            .map(|(a, b)| a + b)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrainedGlove {
    pub table: EmbeddingTable,
    pub model: GloveModel,
    /// Objective after each epoch.
    pub epoch_losses: Vec<f64>,
    pub deterministic: bool,
}

struct AdaGrad {
    main: Vec<f64>,
    context: Vec<f64>,
    main_bias: Vec<f64>,
    context_bias: Vec<f64>,
}

pub fn train_glove(coocc: &CooccurrenceTable, config: &GloveConfig) -> Result<TrainedGlove, CorpusError> {
    train_glove_with(coocc, config, |_, _| {})
}

/// Like [`train_glove`], calling `on_epoch(epoch, loss)` after every epoch.
pub fn train_glove_with(
    coocc: &CooccurrenceTable,
    config: &GloveConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainedGlove, CorpusError> {
    config.validate()?;
    if coocc.is_empty() {
        return Err(CorpusError::EmptyTable);
    }
    let vocab = coocc.vocab().len();
    let dim = config.dimension;
    let mut model = GloveModel::init(vocab, dim, config.seed);
    let mut grad = AdaGrad {
        main: vec![1.0; vocab * dim],
        context: vec![1.0; vocab * dim],
        main_bias: vec![1.0; vocab],
        context_bias: vec![1.0; vocab],
    };
    let mut order: Vec<usize> = (0..coocc.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let lr = config.learning_rate;
    let mut losses = Vec::with_capacity(config.epochs);
    let mut main_i = vec![0.0; dim];

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for &e in &order {
            let (i, j, x) = coocc.entries()[e];
            let (i, j) = (i as usize, j as usize);
            let fdiff = config.weight(x) * model.residual(i, j, x);
            if !fdiff.is_finite() {
                return Err(CorpusError::NonFiniteLoss {
                    epoch,
                    learning_rate: lr,
                });
            }
            let (wi, cj) = (i * dim..(i + 1) * dim, j * dim..(j + 1) * dim);
            main_i.copy_from_slice(&model.main[wi.clone()]);
            for (k, &w) in main_i.iter().enumerate() {
                let g_main = fdiff * model.context[cj.start + k];
                let g_ctx = fdiff * w;
                model.main[wi.start + k] -= lr * g_main / grad.main[wi.start + k].sqrt();
                model.context[cj.start + k] -= lr * g_ctx / grad.context[cj.start + k].sqrt();
                grad.main[wi.start + k] += g_main * g_main;
                grad.context[cj.start + k] += g_ctx * g_ctx;
            }
            model.main_bias[i] -= lr * fdiff / grad.main_bias[i].sqrt();
            model.context_bias[j] -= lr * fdiff / grad.context_bias[j].sqrt();
            grad.main_bias[i] += fdiff * fdiff;
            grad.context_bias[j] += fdiff * fdiff;
        }
        let loss = model.objective(coocc, config);
        if !loss.is_finite() {
            return Err(CorpusError::NonFiniteLoss {
                epoch,
                learning_rate: lr,
            });
        }
        on_epoch(epoch, loss);
        losses.push(loss);
    }

    let rows = coocc
        .vocab()
        .tokens()
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), model.word_vector(i)));
    let table = EmbeddingTable::from_rows(rows).map_err(|e| CorpusError::InvalidConfig(e.to_string()))?;
    Ok(TrainedGlove {
        table,
        model,
        epoch_losses: losses,
        deterministic: true,
    })
}
