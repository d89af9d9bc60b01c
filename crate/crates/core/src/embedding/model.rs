use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Dense layer, `weights` stored row-major as `outputs × inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.bias.iter().enumerate().map(|(o, b)| {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
        }));
    }
}

/// A multilayer perceptron: rectifier on hidden layers, identity on the
/// output layer. Inputs are standardized with fixed per-feature shift and
/// scale before the first layer.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    layers: Vec<Layer>,
    shift: Vec<f64>,
    scale: Vec<f64>,
}

/// Parameter gradients, shaped like the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(model: &EmbeddingModel) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| Layer::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.iter_mut().zip(&b.weights).for_each(|(x, y)| *x += y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|x| *x *= factor);
            l.bias.iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// Flattened in the same order as [`EmbeddingModel::for_each_param_mut`].
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|&x| x == 0.0))
    }
}

/// Activations recorded during a forward pass, needed for backpropagation.
pub(crate) struct Trace {
    /// Input to each layer after standardization / rectification.
    pub inputs: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

/// JSON checkpoint of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub widths: Vec<usize>,
    pub input_shift: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub layers: Vec<Layer>,
}

impl EmbeddingModel {
    /// Randomly initialized model with the given layer widths
    /// (`[input, hidden..., embedding]`), He-uniform weights and zero biases.
    pub fn new(widths: &[usize], seed: u64) -> Result<Self> {
        let mut model = Self::zeros(widths)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut model.layers {
            let bound = (6.0 / layer.inputs as f64).sqrt();
            layer
                .weights
                .iter_mut()
                .for_each(|w| *w = rng.random_range(-bound..bound));
        }
        Ok(model)
    }

    pub fn zeros(widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidConfig(
                "model needs at least input and embedding widths".into(),
            ));
        }
        if widths.contains(&0) {
            return Err(Error::InvalidConfig("layer widths must be positive".into()));
        }
        if *widths.last().unwrap() < 2 {
            return Err(Error::InvalidConfig("embedding dim must be >= 2".into()));
        }
        Ok(Self {
            layers: widths.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
            shift: vec![0.0; widths[0]],
            scale: vec![1.0; widths[0]],
        })
    }

    /// Single square layer with identity weights and zero bias.
    pub fn identity(dim: usize) -> Result<Self> {
        let mut model = Self::zeros(&[dim, dim])?;
        for i in 0..dim {
            model.layers[0].weights[i * dim + i] = 1.0;
        }
        Ok(model)
    }

    /// Random model whose input standardization is fitted to `dataset`.
    pub fn for_dataset(dataset: &Dataset, hidden: &[usize], embedding_dim: usize, seed: u64) -> Result<Self> {
        let mut widths = vec![dataset.dim()];
        widths.extend_from_slice(hidden);
        widths.push(embedding_dim);
        let mut model = Self::new(&widths, seed)?;
        model.fit_standardization(dataset);
        Ok(model)
    }

    /// Centers each feature on its mean over `dataset` and divides it by
    /// `sd · √dim`, so standardized inputs have unit expected squared norm.
    /// Constant features are only centered.
    pub fn fit_standardization(&mut self, dataset: &Dataset) {
        let n = dataset.len() as f64;
        let dim = dataset.dim();
        let mut mean = vec![0.0; dim];
        for item in dataset.items() {
            mean.iter_mut().zip(&item.features).for_each(|(m, x)| *m += x);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for item in dataset.items() {
            for j in 0..dim {
                var[j] += (item.features[j] - mean[j]).powi(2);
            }
        }
        let root_dim = (dim as f64).sqrt();
        self.scale = var
            .into_iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > 1e-12 {
                    1.0 / (sd * root_dim)
                } else {
                    1.0
                }
            })
            .collect();
        self.shift = mean;
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].inputs];
        w.extend(self.layers.iter().map(|l| l.outputs));
        w
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn embedding_dim(&self) -> usize {
        self.layers.last().unwrap().outputs
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(&mut f);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|x| x.is_finite()))
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn trace(&self, x: &[f64]) -> Trace {
        let mut inputs = Vec::with_capacity(self.layers.len());
        inputs.push(
            x.iter()
                .zip(self.shift.iter().zip(&self.scale))
                .map(|(v, (s, c))| (v - s) * c)
                .collect::<Vec<_>>(),
        );
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(inputs.last().unwrap(), &mut out);
            if i + 1 < self.layers.len() {
                inputs.push(out.iter().map(|v| v.max(0.0)).collect());
            }
        }
        Trace { inputs, output: out }
    }

    /// Embeds one feature vector.
    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.trace(x).output)
    }

    /// Embeds a batch; rows are evaluated independently and may run in
    /// parallel.
    pub fn forward(&self, batch: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        for x in batch {
            self.check_input(x)?;
        }
        Ok(crate::par::map(batch, |x| self.trace(x).output))
    }

    /// Accumulates parameter gradients for one input given `grad_out`, the
    /// gradient of the objective with respect to its embedding.
    pub(crate) fn backward(&self, trace: &Trace, grad_out: &[f64], grads: &mut Gradients) {
        let mut delta = grad_out.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &trace.inputs[l];
            let g = &mut grads.layers[l];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.bias[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                row.iter_mut().zip(input).for_each(|(w, x)| *w += d * x);
            }
            if l == 0 {
                break;
            }
            // Rectifier derivative: input[l] = max(0, pre) so input > 0 iff pre > 0.
            let mut next = vec![0.0; layer.inputs];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                next.iter_mut().zip(row).for_each(|(n, w)| *n += d * w);
            }
            for (n, x) in next.iter_mut().zip(input) {
                if *x <= 0.0 {
                    *n = 0.0;
                }
            }
            delta = next;
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            widths: self.widths(),
            input_shift: self.shift.clone(),
            input_scale: self.scale.clone(),
            layers: self.layers.clone(),
        }
    }

    pub fn from_checkpoint(c: Checkpoint) -> Result<Self> {
        if c.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", c.version)));
        }
        let mut model = Self::zeros(&c.widths)?;
        if c.layers.len() != model.layers.len()
            || c.input_shift.len() != model.input_dim()
            || c.input_scale.len() != model.input_dim()
        {
            return Err(Error::Checkpoint("shape does not match widths".into()));
        }
        for (have, want) in c.layers.iter().zip(&model.layers) {
            if have.inputs != want.inputs
                || have.outputs != want.outputs
                || have.weights.len() != want.weights.len()
                || have.bias.len() != want.bias.len()
            {
                return Err(Error::Checkpoint("layer shape does not match widths".into()));
            }
        }
        model.layers = c.layers;
        model.shift = c.input_shift;
        model.scale = c.input_scale;
        if !model.is_finite() {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_checkpoint())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_checkpoint(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_model_outputs_bias() {
        let mut m = EmbeddingModel::zeros(&[3, 4, 2]).unwrap();
        m.layers_mut()[1].bias = vec![0.5, -1.0];
        let out = m.forward(&[vec![1.0, 2.0, 3.0], vec![-7.0, 0.0, 9.0]]).unwrap();
        assert_eq!(out, vec![vec![0.5, -1.0]; 2]);
    }

    #[test]
    fn identity_layer_passes_through() {
        let m = EmbeddingModel::identity(3).unwrap();
        assert_eq!(m.embed(&[1.5, -2.0, 0.25]).unwrap(), vec![1.5, -2.0, 0.25]);
    }

    #[test]
    fn forward_is_deterministic_and_checks_dims() {
        let m = EmbeddingModel::new(&[4, 8, 3], 11).unwrap();
        let x = vec![vec![0.1, 0.2, -0.3, 0.4]];
        assert_eq!(m.forward(&x).unwrap(), m.forward(&x).unwrap());
        assert_eq!(m, EmbeddingModel::new(&[4, 8, 3], 11).unwrap());
        assert!(matches!(
            m.forward(&[vec![1.0; 3]]),
            Err(Error::DimensionMismatch { expected: 4, found: 3 })
        ));
    }

    #[test]
    fn rejects_bad_widths() {
        assert!(EmbeddingModel::zeros(&[4]).is_err());
        assert!(EmbeddingModel::zeros(&[4, 1]).is_err());
        assert!(EmbeddingModel::zeros(&[4, 0, 2]).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = EmbeddingModel::new(&[5, 6, 2], 3).unwrap();
        let json = m.to_json().unwrap();
        assert!(json.contains("\"version\":1"));
        assert_eq!(EmbeddingModel::from_json(&json).unwrap(), m);
        let mut c = m.to_checkpoint();
        c.layers[0].weights.pop();
        assert!(EmbeddingModel::from_checkpoint(c).is_err());
    }
}
