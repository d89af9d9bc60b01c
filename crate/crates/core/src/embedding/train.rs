use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::dual_triplet_grad;
use super::model::{EmbeddingModel, Gradients};
use crate::dataset::Dataset;
use crate::{par, Error, ItemId, Result};

/// Items per backpropagation work unit. Fixed so that gradient sums are
/// associated the same way regardless of thread count.
const BACKPROP_CHUNK: usize = 8;

/// An answered question: two positives and the chosen odd one out, with the
/// margin frozen when the question was sampled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnsweredTriplet {
    pub p1: ItemId,
    pub p2: ItemId,
    pub n: ItemId,
    pub margin: f64,
}

impl AnsweredTriplet {
    pub fn new(p1: ItemId, p2: ItemId, n: ItemId, margin: f64) -> Result<Self> {
        if p1 == p2 || p1 == n || p2 == n {
            return Err(Error::InvalidConfig(format!(
                "triplet ids must be distinct: ({p1}, {p2}, {n})"
            )));
        }
        if !(margin > 0.0 && margin.is_finite()) {
            return Err(Error::InvalidConfig(format!("margin must be > 0, got {margin}")));
        }
        Ok(Self { p1, p2, n, margin })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub momentum: f64,
    pub seed: u64,
    /// Margin of questions asked before a hierarchy exists, and of every
    /// question in fixed-margin runs.
    pub fixed_margin: f64,
    /// `m_h` of the adaptive margin.
    pub margin_base: f64,
    /// `γ` of the adaptive margin.
    pub margin_gain: f64,
    pub hidden: Vec<usize>,
    pub embedding_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            batch_size: 32,
            epochs: 20,
            momentum: 0.9,
            seed: 0,
            fixed_margin: 0.4,
            margin_base: 0.2,
            margin_gain: 0.05,
            hidden: vec![64],
            embedding_dim: 8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be > 0");
        }
        if !(self.fixed_margin > 0.0 && self.margin_base > 0.0) {
            return bad("margins must be > 0");
        }
        if !(self.margin_gain >= 0.0) {
            return bad("margin_gain must be >= 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if self.embedding_dim < 2 {
            return bad("embedding_dim must be >= 2");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean dual-triplet loss per triplet for each epoch, measured on the
    /// parameters each mini-batch saw.
    pub epoch_losses: Vec<f64>,
}

/// Triplets resolved to dataset row positions.
fn resolve(answered: &[AnsweredTriplet], dataset: &Dataset) -> Result<Vec<([usize; 3], f64)>> {
    answered
        .iter()
        .map(|t| {
            let pos = |id| dataset.position(id).ok_or(Error::UnknownItem(id));
            Ok(([pos(t.p1)?, pos(t.p2)?, pos(t.n)?], t.margin))
        })
        .collect()
}

/// Sum of dual-triplet losses over `triplets` and its parameter gradient.
fn batch_objective(
    model: &EmbeddingModel,
    dataset: &Dataset,
    triplets: &[([usize; 3], f64)],
    slot_of: &mut [usize],
) -> Result<(f64, Gradients)> {
    let mut rows: Vec<usize> = triplets.iter().flat_map(|(r, _)| r.iter().copied()).collect();
    rows.sort_unstable();
    rows.dedup();
    for (slot, &row) in rows.iter().enumerate() {
        slot_of[row] = slot;
    }
    let items = dataset.items();
    let traces = par::map(&rows, |&row| model.trace(&items[row].features));

    let k = model.embedding_dim();
    let mut grad_out = vec![vec![0.0; k]; rows.len()];
    let mut loss = 0.0;
    for ([a, b, n], margin) in triplets {
        let (sa, sb, sn) = (slot_of[*a], slot_of[*b], slot_of[*n]);
        let g = dual_triplet_grad(
            &traces[sa].output,
            &traces[sb].output,
            &traces[sn].output,
            *margin,
        )?;
        loss += g.loss;
        if g.is_zero() {
            continue;
        }
        for (slot, part) in [(sa, &g.p1), (sb, &g.p2), (sn, &g.negative)] {
            grad_out[slot].iter_mut().zip(part).for_each(|(x, y)| *x += y);
        }
    }

    let slots: Vec<usize> = (0..rows.len()).collect();
    let partials = par::map_chunks(&slots, BACKPROP_CHUNK, |chunk| {
        let mut g = Gradients::zeros_like(model);
        for &s in chunk {
            if grad_out[s].iter().any(|&v| v != 0.0) {
                model.backward(&traces[s], &grad_out[s], &mut g);
            }
        }
        g
    });
    let mut total = Gradients::zeros_like(model);
    for p in &partials {
        total.add_assign(p);
    }
    Ok((loss, total))
}

/// Total dual-triplet objective over `answered` and its exact gradient with
/// respect to every model parameter.
pub fn objective_and_gradient(
    model: &EmbeddingModel,
    answered: &[AnsweredTriplet],
    dataset: &Dataset,
) -> Result<(f64, Gradients)> {
    let triplets = resolve(answered, dataset)?;
    let mut slot_of = vec![0; dataset.len()];
    batch_objective(model, dataset, &triplets, &mut slot_of)
}

/// Mini-batch SGD with momentum on the dual-triplet objective. Each step uses
/// the batch-mean gradient; batches are reshuffled every epoch from `seed`.
pub fn train(
    model: &mut EmbeddingModel,
    answered: &[AnsweredTriplet],
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    if answered.is_empty() {
        return Err(Error::EmptyTriplets);
    }
    if model.input_dim() != dataset.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            found: dataset.dim(),
        });
    }
    let triplets = resolve(answered, dataset)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..triplets.len()).collect();
    let mut velocity = Gradients::zeros_like(model);
    let mut slot_of = vec![0; dataset.len()];
    let mut batch = Vec::with_capacity(config.batch_size);
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            batch.clear();
            batch.extend(idx.iter().map(|&i| triplets[i]));
            let (loss, mut grad) = batch_objective(model, dataset, &batch, &mut slot_of)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            epoch_loss += loss;
            grad.scale(1.0 / batch.len() as f64);
            for (v, g) in velocity.layers.iter_mut().zip(&grad.layers) {
                for (vi, gi) in v.weights.iter_mut().zip(&g.weights) {
                    *vi = config.momentum * *vi + gi;
                }
                for (vi, gi) in v.bias.iter_mut().zip(&g.bias) {
                    *vi = config.momentum * *vi + gi;
                }
            }
            for (p, v) in model.layers_mut().iter_mut().zip(&velocity.layers) {
                p.weights
                    .iter_mut()
                    .zip(&v.weights)
                    .for_each(|(w, d)| *w -= config.learning_rate * d);
                p.bias
                    .iter_mut()
                    .zip(&v.bias)
                    .for_each(|(w, d)| *w -= config.learning_rate * d);
            }
        }
        epoch_losses.push(epoch_loss / triplets.len() as f64);
    }
    if !model.is_finite() {
        return Err(Error::NonFiniteLoss {
            epoch: config.epochs.saturating_sub(1),
            batch: 0,
        });
    }
    Ok(TrainReport { epoch_losses })
}

/// Embedding vectors in dataset order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embeddings {
    pub ids: Vec<ItemId>,
    pub vectors: Vec<Vec<f64>>,
}

impl Embeddings {
    pub fn new(ids: Vec<ItemId>, vectors: Vec<Vec<f64>>) -> Self {
        assert_eq!(ids.len(), vectors.len());
        Self { ids, vectors }
    }

    /// Raw dataset features used as embeddings.
    pub fn from_features(dataset: &Dataset) -> Self {
        Self::new(dataset.ids(), dataset.feature_matrix())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }
}

pub fn embed_all(model: &EmbeddingModel, dataset: &Dataset) -> Result<Embeddings> {
    let vectors = model.forward(&dataset.feature_matrix())?;
    Ok(Embeddings::new(dataset.ids(), vectors))
}
