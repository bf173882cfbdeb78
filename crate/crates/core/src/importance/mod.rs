//! Node Importance tables: per-layer LSH buckets of similar layer inputs,
//! each mapped to that bucket's nodes ranked by summed activation.

mod format;

pub use format::{activator_from_bytes, activator_to_bytes, load_activator, save_activator, storage_overhead};

use std::collections::HashMap;

use rayon::prelude::*;

use crate::confidence::ConfidenceTables;
use crate::error::{Error, Result};
use crate::lsh::{sample_by_weight, sample_hash_nodes, BoundHasher, BucketKey, HashFamilySpec, HashOutput, LshTableSet};
use crate::model::{forward_dense, MlpModel};

/// Which hash family backs a set of tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HashChoice {
    FreeHash,
    SignedRandomProjection,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActivatorConfig {
    pub k: usize,
    pub l: usize,
    pub seed: u64,
    pub hash: HashChoice,
    /// Layers that get tables. `None` selects every hidden layer at least
    /// 64 nodes wide, plus the output layer when `include_output` is set.
    pub layers: Option<Vec<usize>>,
    pub include_output: bool,
    /// Longest ranked list stored per bucket, as a fraction of the layer
    /// width.
    pub max_list_fraction: f64,
    /// Store nodes whose summed activation in a bucket is zero. Off by
    /// default: such nodes carry no ranking information and the global rank
    /// already orders them.
    pub keep_zero_scores: bool,
}

impl Default for ActivatorConfig {
    fn default() -> Self {
        Self {
            k: 6,
            l: 4,
            seed: 0,
            hash: HashChoice::FreeHash,
            layers: None,
            include_output: false,
            max_list_fraction: 0.25,
            keep_zero_scores: false,
        }
    }
}

impl ActivatorConfig {
    pub fn activated_layers(&self, model: &MlpModel) -> Result<Vec<usize>> {
        let mut layers = match &self.layers {
            Some(ls) => ls.clone(),
            None => {
                let last = model.n_layers() - 1;
                let mut ls: Vec<usize> = (0..last)
                    .filter(|&i| model.layer(i).out_dim() >= 64)
                    .collect();
                if self.include_output {
                    ls.push(last);
                }
                ls
            }
        };
        layers.sort_unstable();
        layers.dedup();
        if let Some(&bad) = layers.iter().find(|&&l| l >= model.n_layers()) {
            return Err(Error::input(format!(
                "activated layer {bad} beyond {}-layer model",
                model.n_layers()
            )));
        }
        Ok(layers)
    }

    fn list_cap(&self, out_dim: usize) -> usize {
        ((self.max_list_fraction * out_dim as f64).ceil() as usize).clamp(1, out_dim)
    }
}

/// Ranked node lists for one layer.
#[derive(Clone, Debug)]
pub struct NodeRankTable {
    layer_index: usize,
    out_dim: usize,
    hasher: BoundHasher,
    tables: LshTableSet<Vec<u32>>,
    global_rank: Vec<u32>,
    /// Position of each node in the hash-node list, or -1.
    hash_pos: Vec<i32>,
}

impl PartialEq for NodeRankTable {
    fn eq(&self, other: &Self) -> bool {
        self.layer_index == other.layer_index
            && self.out_dim == other.out_dim
            && self.tables == other.tables
            && self.global_rank == other.global_rank
    }
}

/// Descending by score, ascending node index on ties.
pub fn argsort_desc(scores: &[f64]) -> Vec<u32> {
    let mut order: Vec<u32> = (0..scores.len() as u32).collect();
    order.sort_by(|&a, &b| {
        scores[b as usize]
            .total_cmp(&scores[a as usize])
            .then(a.cmp(&b))
    });
    order
}

impl NodeRankTable {
    pub fn from_parts(
        model: &MlpModel,
        spec: HashFamilySpec,
        tables: Vec<HashMap<BucketKey, Vec<u32>>>,
        global_rank: Vec<u32>,
    ) -> Result<Self> {
        let hasher = spec.bind(model)?;
        let layer_index = spec.layer_index;
        let out_dim = model.layer(layer_index).out_dim();
        if !is_permutation(&global_rank, out_dim) {
            return Err(Error::input("global rank is not a permutation of the layer"));
        }
        for list in tables.iter().flat_map(HashMap::values) {
            if !is_partial_permutation(list, out_dim) {
                return Err(Error::input("bucket list has duplicate or out-of-range nodes"));
            }
        }
        let mut hash_pos = vec![-1; out_dim];
        for (p, &j) in spec.hash_nodes().iter().enumerate() {
            hash_pos[j as usize] = p as i32;
        }
        Ok(Self {
            layer_index,
            out_dim,
            tables: LshTableSet::from_tables(spec, tables)?,
            hasher,
            global_rank,
            hash_pos,
        })
    }

    pub fn layer_index(&self) -> usize {
        self.layer_index
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn spec(&self) -> &HashFamilySpec {
        self.tables.spec()
    }

    pub fn hasher(&self) -> &BoundHasher {
        &self.hasher
    }

    pub fn tables(&self) -> &LshTableSet<Vec<u32>> {
        &self.tables
    }

    pub fn global_rank(&self) -> &[u32] {
        &self.global_rank
    }

    /// Slot of `node` in the FreeHash node list, if it is a hash node.
    #[inline]
    pub fn hash_slot(&self, node: usize) -> Option<usize> {
        let p = self.hash_pos[node];
        (p >= 0).then_some(p as usize)
    }

    /// Full aggregated ranking for `x_l` (reading only `active` coordinates).
    pub fn query_ranked_nodes(&self, x_l: &[f32], active: Option<&[u32]>) -> Result<Vec<u32>> {
        let out = self.hasher.compute_keys(x_l, active)?;
        Ok(self.ranked_prefix(&out.keys, self.out_dim))
    }

    /// First `n` nodes of the aggregated ranking for the given bucket keys.
    ///
    /// Each matched list contributes a node's position, or `out_dim` if the
    /// node is missing from it; nodes sort ascending by the sum, then by
    /// index. Nodes missing from every matched list follow in global-rank
    /// order. With no matched bucket the global rank is returned.
    pub fn ranked_prefix(&self, keys: &[BucketKey], n: usize) -> Vec<u32> {
        let n = n.min(self.out_dim);
        let Some((mut top, score)) = self.top_scored(keys, n) else {
            return self.global_rank[..n].to_vec();
        };
        top.sort_unstable();
        let mut ranked: Vec<u32> = top.into_iter().map(|p| p as u32).collect();
        let rest = n - ranked.len();
        ranked.extend(self.unlisted(&score).take(rest));
        ranked
    }

    /// Sets `mark[j]` for every node of `ranked_prefix(keys, n)` without
    /// ordering them.
    pub(crate) fn mark_top(&self, keys: &[BucketKey], n: usize, mark: &mut [bool]) {
        let n = n.min(self.out_dim);
        let Some((top, score)) = self.top_scored(keys, n) else {
            for &j in &self.global_rank[..n] {
                mark[j as usize] = true;
            }
            return;
        };
        for &p in &top {
            mark[p as u32 as usize] = true;
        }
        for j in self.unlisted(&score).take(n - top.len()) {
            mark[j as usize] = true;
        }
    }

    /// The best `min(n, listed)` listed nodes, unordered, as packed
    /// `(score << 32 | node)`, plus every node's rank-sum score (`u32::MAX`
    /// when unlisted). `None` when no bucket matched.
    fn top_scored(&self, keys: &[BucketKey], n: usize) -> Option<(Vec<u64>, Vec<u32>)> {
        let lists = self.tables.query(keys);
        if lists.is_empty() {
            return None;
        }
        // Scores fit in 32 bits (at most L * out_dim), so (score, node)
        // packs into one u64 whose natural order is the ranking order.
        let penalty = self.out_dim as u32;
        let base = penalty * lists.len() as u32;
        let mut score = vec![u32::MAX; self.out_dim];
        let mut present: Vec<u32> = Vec::with_capacity(lists.iter().map(|l| l.len()).sum());
        for list in &lists {
            for (pos, &node) in list.iter().enumerate() {
                let s = &mut score[node as usize];
                if *s == u32::MAX {
                    *s = base;
                    present.push(node);
                }
                *s -= penalty - pos as u32;
            }
        }
        let mut top: Vec<u64> = present
            .into_iter()
            .map(|j| (score[j as usize] as u64) << 32 | j as u64)
            .collect();
        if n < top.len() {
            if n > 0 {
                top.select_nth_unstable(n - 1);
            }
            top.truncate(n);
        }
        Some((top, score))
    }

    /// Nodes absent from every matched list, in global-rank order.
    fn unlisted<'a>(&'a self, score: &'a [u32]) -> impl Iterator<Item = u32> + 'a {
        self.global_rank
            .iter()
            .copied()
            .filter(move |&j| score[j as usize] == u32::MAX)
    }
}

fn is_permutation(v: &[u32], n: usize) -> bool {
    v.len() == n && is_partial_permutation(v, n)
}

fn is_partial_permutation(v: &[u32], n: usize) -> bool {
    let mut seen = vec![false; n];
    v.iter().all(|&j| {
        let j = j as usize;
        j < n && !std::mem::replace(&mut seen[j], true)
    })
}

/// Number of nodes in the top `k_percent` of a layer of width `out_dim`.
pub fn top_k_count(k_percent: f64, out_dim: usize) -> usize {
    let exact = k_percent * out_dim as f64 / 100.0;
    ((exact - 1e-9).ceil().max(1.0) as usize).min(out_dim)
}

/// First `ceil(k% * out_dim)` entries of `ranked`, sorted by index.
pub fn top_k(ranked: &[u32], k_percent: f64, out_dim: usize) -> Vec<u32> {
    let n = top_k_count(k_percent, out_dim).min(ranked.len());
    let mut set = ranked[..n].to_vec();
    set.sort_unstable();
    set
}

/// Layer-`layer` activations for each row of `inputs` (`n x in_dim`).
fn layer_activations(model: &MlpModel, layer: usize, inputs: &[f32]) -> Vec<f32> {
    let l = model.layer(layer);
    inputs
        .par_chunks(l.in_dim())
        .flat_map_iter(|x| {
            (0..l.out_dim()).map(move |j| l.activate(l.preactivation(j, x, None)))
        })
        .collect()
}

fn choose_hash_spec(
    acts: &[f32],
    out_dim: usize,
    layer: usize,
    cfg: &ActivatorConfig,
    seed: u64,
) -> Result<HashFamilySpec> {
    match cfg.hash {
        HashChoice::SignedRandomProjection => HashFamilySpec::srp(cfg.k, cfg.l, layer, seed),
        HashChoice::FreeHash => {
            let count = cfg.k * cfg.l;
            let nodes = match sample_hash_nodes(acts, out_dim, count, seed) {
                Err(Error::Degenerate(_)) => sample_by_weight(&vec![1.0; out_dim], count, seed)?,
                other => other?,
            };
            HashFamilySpec::freehash(cfg.k, cfg.l, layer, nodes)
        }
    }
}

/// Trains one layer's tables from layer inputs `inputs` (`n x in_dim`).
pub fn train_node_importance(
    model: &MlpModel,
    layer: usize,
    inputs: &[f32],
    cfg: &ActivatorConfig,
) -> Result<NodeRankTable> {
    if layer >= model.n_layers() {
        return Err(Error::input(format!("no layer {layer}")));
    }
    let lyr = model.layer(layer);
    let in_dim = lyr.in_dim();
    if inputs.is_empty() || !inputs.len().is_multiple_of(in_dim) {
        return Err(Error::input(format!(
            "layer {layer} training inputs must be a non-empty n x {in_dim} matrix"
        )));
    }
    let out_dim = lyr.out_dim();
    let seed = cfg.seed.wrapping_add(layer as u64);
    let acts = layer_activations(model, layer, inputs);
    let spec = choose_hash_spec(&acts, out_dim, layer, cfg, seed)?;
    let hasher = spec.bind(model)?;

    let mut scores: Vec<HashMap<BucketKey, Vec<f64>>> = vec![HashMap::new(); cfg.l];
    let mut global = vec![0f64; out_dim];
    let mut out = HashOutput::default();
    for (x, act) in inputs.chunks_exact(in_dim).zip(acts.chunks_exact(out_dim)) {
        hasher.compute_into(x, None, &mut out)?;
        for (table, key) in scores.iter_mut().zip(&out.keys) {
            let sum = table.entry(*key).or_insert_with(|| vec![0.0; out_dim]);
            for (s, a) in sum.iter_mut().zip(act) {
                *s += *a as f64;
            }
        }
        for (s, a) in global.iter_mut().zip(act) {
            *s += *a as f64;
        }
    }

    let cap = cfg.list_cap(out_dim);
    let tables = scores
        .into_iter()
        .map(|t| {
            t.into_iter()
                .map(|(key, sum)| {
                    let mut ranked = argsort_desc(&sum);
                    if !cfg.keep_zero_scores {
                        ranked.retain(|&j| sum[j as usize] != 0.0);
                    }
                    ranked.truncate(cap);
                    (key, ranked)
                })
                .collect()
        })
        .collect();
    NodeRankTable::from_parts(model, spec, tables, argsort_desc(&global))
}

/// All per-layer Node Importance tables plus the optional confidence tables.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivatorBundle {
    pub k: usize,
    pub l: usize,
    layers: Vec<NodeRankTable>,
    /// Table index per model layer.
    by_layer: Vec<Option<usize>>,
    pub confidence: Option<ConfidenceTables>,
}

impl ActivatorBundle {
    pub fn new(
        model: &MlpModel,
        k: usize,
        l: usize,
        mut layers: Vec<NodeRankTable>,
        confidence: Option<ConfidenceTables>,
    ) -> Result<Self> {
        layers.sort_by_key(|t| t.layer_index);
        let mut by_layer = vec![None; model.n_layers()];
        for (i, t) in layers.iter().enumerate() {
            if t.layer_index >= model.n_layers() {
                return Err(Error::input("table references a missing layer"));
            }
            if by_layer[t.layer_index].replace(i).is_some() {
                return Err(Error::input(format!(
                    "layer {} has two tables",
                    t.layer_index
                )));
            }
            if t.spec().k != k || t.spec().l != l {
                return Err(Error::input("table K/L differ from the bundle's"));
            }
        }
        Ok(Self {
            k,
            l,
            layers,
            by_layer,
            confidence,
        })
    }

    pub fn layers(&self) -> &[NodeRankTable] {
        &self.layers
    }

    pub fn table_for(&self, layer: usize) -> Option<&NodeRankTable> {
        self.by_layer.get(layer).copied().flatten().map(|i| &self.layers[i])
    }

    pub fn activated_layers(&self) -> Vec<usize> {
        self.layers.iter().map(|t| t.layer_index).collect()
    }
}

/// Trains Node Importance tables for every configured layer from raw
/// training inputs. Deeper layers see full-network activations of the
/// previous layer.
pub fn train_activator(
    model: &MlpModel,
    raw_inputs: &[f32],
    cfg: &ActivatorConfig,
) -> Result<ActivatorBundle> {
    let n_in = model.input_dim();
    if raw_inputs.is_empty() || !raw_inputs.len().is_multiple_of(n_in) {
        return Err(Error::input("training inputs must be a non-empty n x input_dim matrix"));
    }
    let layers = cfg.activated_layers(model)?;
    let deepest = layers.iter().copied().max();
    // Layer inputs, index l holds the input matrix of layer l.
    let mut layer_inputs: Vec<Vec<f32>> = vec![raw_inputs.to_vec()];
    if let Some(deepest) = deepest.filter(|&d| d > 0) {
        let traces: Vec<Vec<Vec<f32>>> = raw_inputs
            .par_chunks(n_in)
            .map(|x| forward_dense(model, x).map(|t| t.activations))
            .collect::<Result<_>>()?;
        for l in 0..deepest {
            layer_inputs.push(traces.iter().flat_map(|t| t[l].iter().copied()).collect());
        }
    }
    let tables = layers
        .iter()
        .map(|&l| train_node_importance(model, l, &layer_inputs[l], cfg))
        .collect::<Result<Vec<_>>>()?;
    ActivatorBundle::new(model, cfg.k, cfg.l, tables, None)
}
