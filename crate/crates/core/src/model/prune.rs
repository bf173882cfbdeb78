//! Static neuron pruning by incoming-weight L2 norm.

use super::{DenseLayer, MlpModel};
use crate::error::{Error, Result};

/// Removes the lowest-norm hidden nodes. `keep_fractions` has one entry per
/// hidden layer; the output layer keeps all of its nodes. A pruned node's
/// bias goes with it, and the next layer loses the matching weight column.
pub fn prune_neurons(model: &MlpModel, keep_fractions: &[f64]) -> Result<MlpModel> {
    let hidden = model.n_layers() - 1;
    if keep_fractions.len() != hidden {
        return Err(Error::input(format!(
            "{} keep fractions given for {hidden} hidden layers",
            keep_fractions.len()
        )));
    }
    let mut layers: Vec<DenseLayer> = model.layers.clone();
    for (l, &keep) in keep_fractions.iter().enumerate() {
        if !(keep > 0.0 && keep <= 1.0) {
            return Err(Error::input(format!("keep fraction {keep} outside (0, 1]")));
        }
        let layer = &layers[l];
        let n_keep = (keep * layer.out_dim as f64 + 1e-9).floor() as usize;
        if n_keep == 0 {
            return Err(Error::input(format!(
                "keep fraction {keep} leaves no nodes in layer {l}"
            )));
        }
        let survivors = strongest_rows(layer, n_keep);
        layers[l] = select_rows(layer, &survivors);
        layers[l + 1] = select_columns(&layers[l + 1], &survivors);
    }
    MlpModel::new(model.input_dim, layers, model.output_semantics)
}

/// Indices of the `n_keep` largest-norm rows, ascending. Equal norms favour
/// the lower index.
fn strongest_rows(layer: &DenseLayer, n_keep: usize) -> Vec<usize> {
    let norms: Vec<f64> = (0..layer.out_dim)
        .map(|j| layer.row(j).iter().map(|&w| (w as f64) * (w as f64)).sum::<f64>())
        .collect();
    let mut order: Vec<usize> = (0..layer.out_dim).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    order.truncate(n_keep);
    order.sort_unstable();
    order
}

fn select_rows(layer: &DenseLayer, rows: &[usize]) -> DenseLayer {
    let weights = rows.iter().flat_map(|&j| layer.row(j).iter().copied()).collect();
    let bias = rows.iter().map(|&j| layer.bias[j]).collect();
    DenseLayer {
        in_dim: layer.in_dim,
        out_dim: rows.len(),
        weights,
        bias,
        activation: layer.activation,
    }
}

fn select_columns(layer: &DenseLayer, cols: &[usize]) -> DenseLayer {
    let weights = (0..layer.out_dim)
        .flat_map(|j| {
            let row = layer.row(j);
            cols.iter().map(move |&c| row[c])
        })
        .collect();
    DenseLayer {
        in_dim: cols.len(),
        out_dim: layer.out_dim,
        weights,
        bias: layer.bias.clone(),
        activation: layer.activation,
    }
}
