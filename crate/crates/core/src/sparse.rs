//! Top-k forward execution through the Node Importance tables.
//!
//! For each activated layer the incoming (possibly sparse) activation is
//! hashed, the matched buckets yield a ranking, and the top `k` percent plus
//! the layer's FreeHash nodes are computed. Hash-node pre-activations come
//! from the hashing step and are never recomputed. Layers without tables run
//! dense.

use std::time::{Duration, Instant};

use rand::seq::index;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::importance::{top_k_count, ActivatorBundle};
use crate::lsh::HashOutput;
use crate::model::{ActiveSetPlan, LayerTrace, MlpModel};

/// How the `k` percent budget is filled at activated layers.
pub enum Selection<'a> {
    Ranked,
    /// Uniform without replacement; the random-dropout baseline.
    Random(&'a mut ChaCha8Rng),
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StageTimes {
    pub hash: Duration,
    pub select: Duration,
    pub compute: Duration,
}

#[derive(Clone, Debug)]
pub struct SparseForward {
    pub trace: LayerTrace,
    pub plan: ActiveSetPlan,
    /// Pre-activations evaluated per layer, counting hash nodes once.
    pub preactivation_evals: Vec<usize>,
    pub times: StageTimes,
}

pub fn forward_top_k(
    model: &MlpModel,
    bundle: &ActivatorBundle,
    x: &[f32],
    k_percent: f64,
    mut selection: Selection<'_>,
) -> Result<SparseForward> {
    if !(k_percent > 0.0 && k_percent <= 100.0) {
        return Err(Error::input(format!("k = {k_percent} outside (0, 100]")));
    }
    if x.len() != model.input_dim() {
        return Err(Error::input(format!(
            "input has {} features, model expects {}",
            x.len(),
            model.input_dim()
        )));
    }
    let n_layers = model.n_layers();
    let mut activations: Vec<Vec<f32>> = Vec::with_capacity(n_layers);
    let mut computed: Vec<Vec<u32>> = Vec::with_capacity(n_layers);
    let mut evals = Vec::with_capacity(n_layers);
    let mut times = StageTimes::default();
    let mut macs = 0;
    let mut hout = HashOutput::default();

    for (l, layer) in model.layers().iter().enumerate() {
        let (input, input_active): (&[f32], Option<&[u32]>) = if l == 0 {
            (x, None)
        } else {
            let prev = &computed[l - 1];
            let full = prev.len() == model.layer(l - 1).out_dim();
            (&activations[l - 1], if full { None } else { Some(prev.as_slice()) })
        };
        let fan_in = input_active.map_or(layer.in_dim(), <[u32]>::len);
        let out_dim = layer.out_dim();
        let mut out = vec![0f32; out_dim];

        let active: Vec<u32> = match bundle.table_for(l) {
            Some(table) => {
                let t0 = Instant::now();
                table.hasher().compute_into(input, input_active, &mut hout)?;
                let t1 = Instant::now();
                let n_top = top_k_count(k_percent, out_dim);
                let active: Vec<u32> = if n_top >= out_dim {
                    (0..out_dim as u32).collect()
                } else {
                    let mut mark = vec![false; out_dim];
                    match &mut selection {
                        Selection::Ranked => table.mark_top(&hout.keys, n_top, &mut mark),
                        Selection::Random(rng) => {
                            for j in index::sample(*rng, out_dim, n_top) {
                                mark[j] = true;
                            }
                        }
                    }
                    for &j in table.spec().hash_nodes() {
                        mark[j as usize] = true;
                    }
                    (0..out_dim as u32).filter(|&j| mark[j as usize]).collect()
                };
                let t2 = Instant::now();
                let mut fresh = 0;
                for &j in &active {
                    let j = j as usize;
                    let pre = match table.hash_slot(j) {
                        Some(slot) => hout.preactivations[slot],
                        None => {
                            fresh += 1;
                            layer.preactivation(j, input, input_active)
                        }
                    };
                    out[j] = layer.activate(pre);
                }
                let n_hash = table.spec().hash_nodes().len();
                evals.push(fresh + n_hash);
                macs += (fresh + n_hash) * fan_in;
                times.hash += t1 - t0;
                times.select += t2 - t1;
                times.compute += t2.elapsed();
                active
            }
            None => {
                let t0 = Instant::now();
                for (j, o) in out.iter_mut().enumerate() {
                    *o = layer.activate(layer.preactivation(j, input, input_active));
                }
                times.compute += t0.elapsed();
                evals.push(out_dim);
                macs += out_dim * fan_in;
                (0..out_dim as u32).collect()
            }
        };
        activations.push(out);
        computed.push(active);
    }

    let plan = ActiveSetPlan {
        per_layer: computed.clone(),
        k_percent,
    };
    Ok(SparseForward {
        trace: LayerTrace {
            activations,
            computed,
            macs,
        },
        plan,
        preactivation_evals: evals,
        times,
    })
}

/// Dense forward at `k = 100`, top-k forward otherwise. Full-compute
/// requests never pay for hashing.
pub fn forward_at_k(
    model: &MlpModel,
    bundle: &ActivatorBundle,
    x: &[f32],
    k_percent: f64,
    selection: Selection<'_>,
) -> Result<SparseForward> {
    if k_percent < 100.0 {
        return forward_top_k(model, bundle, x, k_percent, selection);
    }
    let t0 = Instant::now();
    let trace = crate::model::forward_dense(model, x)?;
    let compute = t0.elapsed();
    let plan = ActiveSetPlan::full(model);
    Ok(SparseForward {
        preactivation_evals: model.layers().iter().map(|l| l.out_dim()).collect(),
        plan,
        trace,
        times: StageTimes {
            compute,
            ..Default::default()
        },
    })
}
