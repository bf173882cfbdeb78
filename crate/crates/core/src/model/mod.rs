//! Feed-forward ReLU networks: layer types, dense and node-masked forward
//! passes, and prediction heads.
//!
//! All dot products accumulate in `f64` and store activations as `f32`.
//! A dropped node has activation exactly `0.0`, and downstream layers skip
//! inactive inputs entirely (gather kernel), which is arithmetically the same
//! as a dense product over a zero-filled vector.

mod format;
mod prune;
mod synth;

pub use format::{
    dataset_from_bytes, dataset_to_bytes, load_dataset, load_model, model_from_bytes,
    model_to_bytes, save_dataset, save_model,
};
pub use prune::prune_neurons;
pub use synth::{
    fit_class_mean_readout, gen_synthetic_dataset, gen_synthetic_model, SyntheticDataSpec,
};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputSemantics {
    Raw,
    ClassificationSoftmax,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    in_dim: usize,
    out_dim: usize,
    /// Row-major, one row per output node.
    weights: Vec<f32>,
    bias: Vec<f32>,
    activation: Activation,
}

impl DenseLayer {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
        activation: Activation,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::input("layer dimensions must be positive"));
        }
        if weights.len() != in_dim * out_dim {
            return Err(Error::input(format!(
                "weights hold {} values, expected {out_dim}x{in_dim}",
                weights.len()
            )));
        }
        if bias.len() != out_dim {
            return Err(Error::input(format!(
                "bias holds {} values, expected {out_dim}",
                bias.len()
            )));
        }
        if !weights.iter().chain(bias.iter()).all(|v| v.is_finite()) {
            return Err(Error::input("non-finite weight or bias"));
        }
        Ok(Self {
            in_dim,
            out_dim,
            weights,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    pub fn row(&self, node: usize) -> &[f32] {
        &self.weights[node * self.in_dim..(node + 1) * self.in_dim]
    }

    /// Pre-activation `w_node · input + b_node`. `input_active` lists the
    /// nonzero input coordinates; every other coordinate must be zero.
    #[inline]
    pub fn preactivation(&self, node: usize, input: &[f32], input_active: Option<&[u32]>) -> f64 {
        dot_masked(self.row(node), input, input_active) + self.bias[node] as f64
    }

    #[inline]
    pub fn activate(&self, pre: f64) -> f32 {
        match self.activation {
            Activation::Linear => pre as f32,
            Activation::Relu => pre.max(0.0) as f32,
        }
    }
}

/// Dense dot product with `f64` accumulation. Every full-input product in the
/// crate goes through this function so that dense and activator paths produce
/// bit-identical values when nothing is dropped.
#[inline]
pub(crate) fn dot_dense(w: &[f32], x: &[f32]) -> f64 {
    debug_assert_eq!(w.len(), x.len());
    let mut acc = [0f64; 8];
    let (wc, xc) = (w.chunks_exact(8), x.chunks_exact(8));
    let (wr, xr) = (wc.remainder(), xc.remainder());
    for (a, b) in wc.zip(xc) {
        for t in 0..8 {
            acc[t] += a[t] as f64 * b[t] as f64;
        }
    }
    let tail: f64 = wr.iter().zip(xr).map(|(a, b)| *a as f64 * *b as f64).sum();
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// Dot product with an input that is zero outside `active`. Sparse inputs
/// are gathered; inputs at least half active use the dense kernel, which is
/// faster there and gives the same value up to summation order.
#[inline]
pub(crate) fn dot_masked(w: &[f32], x: &[f32], active: Option<&[u32]>) -> f64 {
    match active {
        Some(idx) if idx.len() * 2 < w.len() => dot_gather(w, x, idx),
        _ => dot_dense(w, x),
    }
}

#[inline]
pub(crate) fn dot_gather(w: &[f32], x: &[f32], idx: &[u32]) -> f64 {
    let mut acc = [0f64; 4];
    let chunks = idx.chunks_exact(4);
    let rest = chunks.remainder();
    for c in chunks {
        for t in 0..4 {
            let i = c[t] as usize;
            acc[t] += w[i] as f64 * x[i] as f64;
        }
    }
    let tail: f64 = rest.iter().map(|&i| w[i as usize] as f64 * x[i as usize] as f64).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    input_dim: usize,
    layers: Vec<DenseLayer>,
    output_semantics: OutputSemantics,
}

impl MlpModel {
    pub fn new(
        input_dim: usize,
        layers: Vec<DenseLayer>,
        output_semantics: OutputSemantics,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::input("model needs at least one layer"));
        }
        let mut expected = input_dim;
        for (i, layer) in layers.iter().enumerate() {
            if layer.in_dim != expected {
                return Err(Error::input(format!(
                    "layer {i} expects {} inputs but receives {expected}",
                    layer.in_dim
                )));
            }
            expected = layer.out_dim;
        }
        if output_semantics == OutputSemantics::ClassificationSoftmax
            && layers.last().unwrap().activation != Activation::Linear
        {
            return Err(Error::input(
                "classification models need a linear output layer",
            ));
        }
        Ok(Self {
            input_dim,
            layers,
            output_semantics,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layer(&self, index: usize) -> &DenseLayer {
        &self.layers[index]
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    pub fn output_semantics(&self) -> OutputSemantics {
        self.output_semantics
    }

    /// Multiply-accumulate count of a full forward pass.
    pub fn dense_macs(&self) -> usize {
        self.layers.iter().map(|l| l.in_dim * l.out_dim).sum()
    }

    fn check_input(&self, x: &[f32]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::input(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.input_dim
            )));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::input("input contains non-finite values"));
        }
        Ok(())
    }
}

/// Per-layer outputs of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerTrace {
    /// Post-activation vectors, one per layer, zero at dropped nodes.
    pub activations: Vec<Vec<f32>>,
    /// Sorted indices computed at each layer.
    pub computed: Vec<Vec<u32>>,
    /// Multiply-accumulate operations performed.
    pub macs: usize,
}

impl LayerTrace {
    pub fn output(&self) -> &[f32] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn output_computed(&self) -> &[u32] {
        self.computed.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Node indices to compute at every layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ActiveSetPlan {
    pub per_layer: Vec<Vec<u32>>,
    pub k_percent: f64,
}

impl ActiveSetPlan {
    pub fn full(model: &MlpModel) -> Self {
        Self {
            per_layer: model
                .layers
                .iter()
                .map(|l| (0..l.out_dim as u32).collect())
                .collect(),
            k_percent: 100.0,
        }
    }

    pub fn validate(&self, model: &MlpModel) -> Result<()> {
        if self.per_layer.len() != model.n_layers() {
            return Err(Error::InvalidPlan(format!(
                "plan covers {} layers, model has {}",
                self.per_layer.len(),
                model.n_layers()
            )));
        }
        if !(self.k_percent > 0.0 && self.k_percent <= 100.0) {
            return Err(Error::InvalidPlan(format!(
                "k_percent {} outside (0, 100]",
                self.k_percent
            )));
        }
        for (i, (set, layer)) in self.per_layer.iter().zip(&model.layers).enumerate() {
            if set.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidPlan(format!(
                    "layer {i} set is not strictly ascending"
                )));
            }
            if set.last().is_some_and(|&m| m as usize >= layer.out_dim) {
                return Err(Error::InvalidPlan(format!(
                    "layer {i} set references node beyond {}",
                    layer.out_dim
                )));
            }
        }
        Ok(())
    }

    /// Multiply-accumulate count implied by the plan.
    pub fn macs(&self, model: &MlpModel) -> usize {
        let mut prev = model.input_dim;
        let mut total = 0;
        for set in &self.per_layer {
            total += set.len() * prev;
            prev = set.len();
        }
        total
    }
}

pub fn forward_dense(model: &MlpModel, x: &[f32]) -> Result<LayerTrace> {
    model.check_input(x)?;
    let mut activations = Vec::with_capacity(model.n_layers());
    let mut input: &[f32] = x;
    for layer in &model.layers {
        let out: Vec<f32> = (0..layer.out_dim)
            .map(|j| layer.activate(layer.preactivation(j, input, None)))
            .collect();
        activations.push(out);
        input = activations.last().unwrap();
    }
    Ok(LayerTrace {
        computed: model
            .layers
            .iter()
            .map(|l| (0..l.out_dim as u32).collect())
            .collect(),
        activations,
        macs: model.dense_macs(),
    })
}

pub fn forward_masked(model: &MlpModel, x: &[f32], plan: &ActiveSetPlan) -> Result<LayerTrace> {
    model.check_input(x)?;
    plan.validate(model)?;
    let mut activations: Vec<Vec<f32>> = Vec::with_capacity(model.n_layers());
    let mut macs = 0;
    for (l, (layer, active)) in model.layers.iter().zip(&plan.per_layer).enumerate() {
        let (input, input_active): (&[f32], Option<&[u32]>) = if l == 0 {
            (x, None)
        } else {
            let prev = &plan.per_layer[l - 1];
            let full = prev.len() == model.layers[l - 1].out_dim;
            (&activations[l - 1], if full { None } else { Some(prev) })
        };
        let fan_in = input_active.map_or(layer.in_dim, <[u32]>::len);
        let mut out = vec![0f32; layer.out_dim];
        for &j in active {
            let j = j as usize;
            out[j] = layer.activate(layer.preactivation(j, input, input_active));
        }
        macs += active.len() * fan_in;
        activations.push(out);
    }
    Ok(LayerTrace {
        activations,
        computed: plan.per_layer.clone(),
        macs,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionVector {
    pub values: Vec<f64>,
    pub computed: Vec<u32>,
}

impl PredictionVector {
    /// Index of the largest value among computed nodes (lowest index on ties).
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for &j in &self.computed {
            let v = self.values[j as usize];
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((j as usize, v));
            }
        }
        best.map(|(j, _)| j)
    }
}

pub fn predict(trace: &LayerTrace, semantics: OutputSemantics) -> Result<PredictionVector> {
    let logits = trace.output();
    let computed = trace.output_computed();
    if computed.is_empty() {
        return Err(Error::InvalidPlan("no output node computed".into()));
    }
    let mut values = vec![0f64; logits.len()];
    match semantics {
        OutputSemantics::Raw => {
            for &j in computed {
                values[j as usize] = logits[j as usize] as f64;
            }
        }
        OutputSemantics::ClassificationSoftmax => {
            let max = computed
                .iter()
                .map(|&j| logits[j as usize] as f64)
                .fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for &j in computed {
                let e = (logits[j as usize] as f64 - max).exp();
                values[j as usize] = e;
                z += e;
            }
            for &j in computed {
                values[j as usize] /= z;
            }
        }
    }
    Ok(PredictionVector {
        values,
        computed: computed.to_vec(),
    })
}

/// Labeled feature matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    dim: usize,
    n_classes: usize,
    features: Vec<f32>,
    labels: Vec<u32>,
}

impl LabeledDataset {
    pub fn new(dim: usize, n_classes: usize, features: Vec<f32>, labels: Vec<u32>) -> Result<Self> {
        if dim == 0 || n_classes == 0 {
            return Err(Error::input("dataset dim and n_classes must be positive"));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::input(format!(
                "{} feature values do not form {} rows of {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y as usize >= n_classes) {
            return Err(Error::input(format!("label {bad} >= n_classes {n_classes}")));
        }
        if !features.iter().all(|v| v.is_finite()) {
            return Err(Error::input("non-finite feature value"));
        }
        Ok(Self {
            dim,
            n_classes,
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> u32 {
        self.labels[i]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.features.chunks_exact(self.dim)
    }

    /// Rows `range` as a new dataset.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            dim: self.dim,
            n_classes: self.n_classes,
            features: self.features[range.start * self.dim..range.end * self.dim].to_vec(),
            labels: self.labels[range].to_vec(),
        }
    }
}
