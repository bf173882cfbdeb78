//! Seeded synthetic models and clustered datasets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{dot_dense, Activation, DenseLayer, LabeledDataset, MlpModel, OutputSemantics};
use crate::error::{Error, Result};

/// ReLU hidden layers and a linear softmax head, weights `N(0, 1/in_dim)`,
/// biases `N(0, 0.01)`. `dims` lists the input width followed by each
/// layer's width.
pub fn gen_synthetic_model(seed: u64, dims: &[usize]) -> Result<MlpModel> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::input(format!(
            "model dims {dims:?} need an input width and at least one positive layer width"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bias_dist = Normal::new(0.0f64, 0.1).unwrap();
    let n = dims.len() - 1;
    let layers = dims
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let (in_dim, out_dim) = (w[0], w[1]);
            let scale = 1.0 / (in_dim as f64).sqrt();
            let weights = (0..in_dim * out_dim)
                .map(|_| {
                    let z: f64 = rng.sample(StandardNormal);
                    (z * scale) as f32
                })
                .collect();
            let bias = (0..out_dim)
                .map(|_| bias_dist.sample(&mut rng) as f32)
                .collect();
            let act = if i + 1 == n {
                Activation::Linear
            } else {
                Activation::Relu
            };
            DenseLayer::new(in_dim, out_dim, weights, bias, act)
        })
        .collect::<Result<Vec<_>>>()?;
    MlpModel::new(dims[0], layers, OutputSemantics::ClassificationSoftmax)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataSpec {
    pub n: usize,
    pub dim: usize,
    pub n_clusters: usize,
    pub n_classes: usize,
    pub noise_sigma: f64,
}

/// Cluster centres are uniform on the unit sphere; cluster `c` carries class
/// `c % n_classes`. Each point picks a cluster uniformly and adds isotropic
/// Gaussian noise.
pub fn gen_synthetic_dataset(seed: u64, spec: &SyntheticDataSpec) -> Result<LabeledDataset> {
    if spec.dim == 0 || spec.n_classes == 0 || spec.n_clusters < spec.n_classes {
        return Err(Error::input(format!(
            "need dim > 0, n_classes > 0 and n_clusters >= n_classes, got {spec:?}"
        )));
    }
    if !(spec.noise_sigma >= 0.0 && spec.noise_sigma.is_finite()) {
        return Err(Error::input("noise_sigma must be finite and non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..spec.n_clusters)
        .map(|_| loop {
            let v: Vec<f64> = (0..spec.dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break v.into_iter().map(|a| a / norm).collect();
            }
        })
        .collect();
    let mut features = Vec::with_capacity(spec.n * spec.dim);
    let mut labels = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let c = rng.random_range(0..spec.n_clusters);
        for &m in &centers[c] {
            let z: f64 = rng.sample(StandardNormal);
            features.push((m + spec.noise_sigma * z) as f32);
        }
        labels.push((c % spec.n_classes) as u32);
    }
    LabeledDataset::new(spec.dim, spec.n_classes, features, labels)
}

/// Replaces the output layer with a nearest-class-mean readout: row `c` is
/// the unit-normalised mean last-hidden activation of class `c`, bias zero.
/// Gives random-feature synthetic models a meaningful label accuracy.
pub fn fit_class_mean_readout(model: &MlpModel, data: &LabeledDataset) -> Result<MlpModel> {
    if model.n_layers() < 2 {
        return Err(Error::input("readout needs at least one hidden layer"));
    }
    if model.output_dim() != data.n_classes() || model.input_dim() != data.dim() {
        return Err(Error::input(format!(
            "model {}->{} does not match dataset dim {} with {} classes",
            model.input_dim(),
            model.output_dim(),
            data.dim(),
            data.n_classes()
        )));
    }
    let head = model.layers.last().unwrap();
    let width = head.in_dim;
    let mut sums = vec![vec![0f64; width]; data.n_classes()];
    for (x, &y) in data.rows().zip(data.labels()) {
        let mut h = x.to_vec();
        for layer in &model.layers[..model.n_layers() - 1] {
            h = (0..layer.out_dim)
                .map(|j| layer.activate(dot_dense(layer.row(j), &h) + layer.bias[j] as f64))
                .collect();
        }
        for (s, v) in sums[y as usize].iter_mut().zip(&h) {
            *s += *v as f64;
        }
    }
    let weights = sums
        .iter()
        .flat_map(|s| {
            let norm = s.iter().map(|a| a * a).sum::<f64>().sqrt();
            let inv = if norm > 0.0 { 1.0 / norm } else { 0.0 };
            s.iter().map(move |a| (a * inv) as f32).collect::<Vec<_>>()
        })
        .collect();
    let mut layers = model.layers.clone();
    *layers.last_mut().unwrap() = DenseLayer::new(
        width,
        data.n_classes(),
        weights,
        vec![0.0; data.n_classes()],
        Activation::Linear,
    )?;
    MlpModel::new(model.input_dim, layers, model.output_semantics)
}
