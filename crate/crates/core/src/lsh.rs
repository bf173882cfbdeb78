//! (K, L) locality-sensitive hashing over layer inputs.
//!
//! Two hash families are supported. FreeHash uses the weight rows and biases
//! of selected nodes in the hashed layer itself, so the hash bits are the
//! signs of pre-activations the forward pass needs anyway. Signed random
//! projection (SRP) uses seeded Gaussian hyperplanes through the origin and
//! serves as the baseline family.
//!
//! Key `b` packs the bits of hash functions `b*K .. b*K + K`, with function
//! `j` of the table at bit position `j`. A zero pre-activation hashes to 0.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{dot_dense, dot_masked, MlpModel};

pub const MAX_K: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BucketKey(pub u64);

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HashKind {
    FreeHash { nodes: Vec<u32> },
    SignedRandomProjection { seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HashFamilySpec {
    pub k: usize,
    pub l: usize,
    /// Layer whose input space is hashed. FreeHash nodes belong to this layer.
    pub layer_index: usize,
    pub kind: HashKind,
}

impl HashFamilySpec {
    fn check_kl(k: usize, l: usize) -> Result<()> {
        if k == 0 || k > MAX_K {
            return Err(Error::input(format!("K = {k} outside 1..={MAX_K}")));
        }
        if l == 0 {
            return Err(Error::input("L must be at least 1"));
        }
        Ok(())
    }

    pub fn freehash(k: usize, l: usize, layer_index: usize, nodes: Vec<u32>) -> Result<Self> {
        Self::check_kl(k, l)?;
        if nodes.len() != k * l {
            return Err(Error::input(format!(
                "FreeHash needs {} nodes, got {}",
                k * l,
                nodes.len()
            )));
        }
        let mut sorted = nodes.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::input("FreeHash nodes must be distinct"));
        }
        Ok(Self {
            k,
            l,
            layer_index,
            kind: HashKind::FreeHash { nodes },
        })
    }

    pub fn srp(k: usize, l: usize, layer_index: usize, seed: u64) -> Result<Self> {
        Self::check_kl(k, l)?;
        Ok(Self {
            k,
            l,
            layer_index,
            kind: HashKind::SignedRandomProjection { seed },
        })
    }

    /// FreeHash node indices, empty for SRP.
    pub fn hash_nodes(&self) -> &[u32] {
        match &self.kind {
            HashKind::FreeHash { nodes } => nodes,
            HashKind::SignedRandomProjection { .. } => &[],
        }
    }

    /// Materialises the hash functions against `model`.
    pub fn bind(&self, model: &MlpModel) -> Result<BoundHasher> {
        if self.layer_index >= model.n_layers() {
            return Err(Error::input(format!(
                "hash spec references layer {} of a {}-layer model",
                self.layer_index,
                model.n_layers()
            )));
        }
        let layer = model.layer(self.layer_index);
        let dim = layer.in_dim();
        let n = self.k * self.l;
        let (rows, offsets) = match &self.kind {
            HashKind::FreeHash { nodes } => {
                if let Some(&bad) = nodes.iter().find(|&&j| j as usize >= layer.out_dim()) {
                    return Err(Error::input(format!(
                        "hash node {bad} beyond layer width {}",
                        layer.out_dim()
                    )));
                }
                let rows = nodes
                    .iter()
                    .flat_map(|&j| layer.row(j as usize).iter().copied())
                    .collect();
                let offsets = nodes.iter().map(|&j| layer.bias()[j as usize]).collect();
                (rows, offsets)
            }
            HashKind::SignedRandomProjection { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let rows = (0..n * dim)
                    .map(|_| rng.sample::<f64, _>(StandardNormal) as f32)
                    .collect();
                (rows, vec![0.0; n])
            }
        };
        Ok(BoundHasher {
            spec: self.clone(),
            dim,
            rows,
            offsets,
        })
    }
}

/// Output of hashing one input: `L` keys plus the `K x L` projections.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HashOutput {
    pub keys: Vec<BucketKey>,
    /// For FreeHash these are the hash nodes' pre-activations, in spec order.
    pub preactivations: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct BoundHasher {
    spec: HashFamilySpec,
    dim: usize,
    rows: Vec<f32>,
    offsets: Vec<f32>,
}

impl BoundHasher {
    pub fn spec(&self) -> &HashFamilySpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn compute_keys(&self, x: &[f32], active: Option<&[u32]>) -> Result<HashOutput> {
        let mut out = HashOutput::default();
        self.compute_into(x, active, &mut out)?;
        Ok(out)
    }

    /// Hashes `x`. `active`, when given, lists the nonzero coordinates of
    /// `x`; every other coordinate must be zero.
    pub fn compute_into(&self, x: &[f32], active: Option<&[u32]>, out: &mut HashOutput) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::input(format!(
                "hashed vector has {} entries, expected {}",
                x.len(),
                self.dim
            )));
        }
        let (k, l) = (self.spec.k, self.spec.l);
        out.keys.clear();
        out.preactivations.clear();
        for b in 0..l {
            let mut key = 0u64;
            for j in 0..k {
                let f = b * k + j;
                let row = &self.rows[f * self.dim..(f + 1) * self.dim];
                let pre = dot_masked(row, x, active) + self.offsets[f] as f64;
                if pre > 0.0 {
                    key |= 1 << j;
                }
                out.preactivations.push(pre);
            }
            out.keys.push(BucketKey(key));
        }
        Ok(())
    }
}

/// `sign(w . x + b)` as a bit; zero maps to 0.
pub fn freehash_bit(w: &[f32], b: f32, x: &[f32]) -> Result<bool> {
    if w.len() != x.len() {
        return Err(Error::input(format!(
            "weight row has {} entries, input has {}",
            w.len(),
            x.len()
        )));
    }
    Ok(dot_dense(w, x) + b as f64 > 0.0)
}

/// Per-column population variance of an `n x width` row-major matrix.
pub fn column_variances(matrix: &[f32], width: usize) -> Vec<f64> {
    let mut mean = vec![0f64; width];
    let mut m2 = vec![0f64; width];
    for (n, row) in matrix.chunks_exact(width).enumerate() {
        let n = (n + 1) as f64;
        for (j, &v) in row.iter().enumerate() {
            let v = v as f64;
            let d = v - mean[j];
            mean[j] += d / n;
            m2[j] += d * (v - mean[j]);
        }
    }
    let n = (matrix.len() / width.max(1)) as f64;
    if n == 0.0 {
        return vec![0.0; width];
    }
    m2.into_iter().map(|s| s / n).collect()
}

/// Draws `count` distinct nodes, each draw with probability proportional to
/// the node's activation variance among the nodes not yet drawn.
///
/// `activations` is `n_samples x out_dim` row-major. If fewer than `count`
/// nodes have positive variance, the remaining slots are filled uniformly
/// from the zero-variance nodes.
pub fn sample_hash_nodes(
    activations: &[f32],
    out_dim: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<u32>> {
    if out_dim == 0 || !activations.len().is_multiple_of(out_dim) {
        return Err(Error::input("activation matrix is not n x out_dim"));
    }
    if count > out_dim {
        return Err(Error::input(format!(
            "cannot draw {count} distinct nodes from {out_dim}"
        )));
    }
    let variances = column_variances(activations, out_dim);
    sample_by_weight(&variances, count, seed)
}

pub(crate) fn sample_by_weight(weights: &[f64], count: usize, seed: u64) -> Result<Vec<u32>> {
    if !weights.iter().any(|&w| w > 0.0) {
        return Err(Error::Degenerate(
            "every node has zero activation variance".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut remaining: Vec<(u32, f64)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| (i as u32, w.max(0.0)))
        .collect();
    let mut picked = Vec::with_capacity(count);
    while picked.len() < count {
        let total: f64 = remaining.iter().map(|r| r.1).sum();
        let pos = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (p, r) in remaining.iter().enumerate() {
                if r.1 <= 0.0 {
                    continue;
                }
                acc += r.1;
                chosen = Some(p);
                if target < acc {
                    break;
                }
            }
            chosen.unwrap()
        } else {
            rng.random_range(0..remaining.len())
        };
        picked.push(remaining.remove(pos).0);
    }
    Ok(picked)
}

/// `L` bucket maps sharing one hash family. Absent buckets have no entry.
#[derive(Clone, Debug, PartialEq)]
pub struct LshTableSet<P> {
    spec: HashFamilySpec,
    tables: Vec<HashMap<BucketKey, P>>,
}

impl<P> LshTableSet<P> {
    pub fn new(spec: HashFamilySpec) -> Self {
        let tables = (0..spec.l).map(|_| HashMap::new()).collect();
        Self { spec, tables }
    }

    pub fn from_tables(spec: HashFamilySpec, tables: Vec<HashMap<BucketKey, P>>) -> Result<Self> {
        if tables.len() != spec.l {
            return Err(Error::input(format!(
                "{} tables for L = {}",
                tables.len(),
                spec.l
            )));
        }
        Ok(Self { spec, tables })
    }

    pub fn spec(&self) -> &HashFamilySpec {
        &self.spec
    }

    pub fn tables(&self) -> &[HashMap<BucketKey, P>] {
        &self.tables
    }

    pub fn tables_mut(&mut self) -> &mut [HashMap<BucketKey, P>] {
        &mut self.tables
    }

    /// Folds one item into the bucket it hits in every table.
    pub fn insert_with(
        &mut self,
        keys: &[BucketKey],
        mut init: impl FnMut() -> P,
        mut update: impl FnMut(&mut P),
    ) {
        debug_assert_eq!(keys.len(), self.tables.len());
        for (table, key) in self.tables.iter_mut().zip(keys) {
            update(table.entry(*key).or_insert_with(&mut init));
        }
    }

    /// Matched payload per table, skipping tables whose bucket is absent.
    pub fn query(&self, keys: &[BucketKey]) -> Vec<&P> {
        self.tables
            .iter()
            .zip(keys)
            .filter_map(|(t, k)| t.get(k))
            .collect()
    }

    pub fn n_buckets(&self) -> usize {
        self.tables.iter().map(HashMap::len).sum()
    }

    pub fn map<Q>(self, mut f: impl FnMut(P) -> Q) -> LshTableSet<Q> {
        LshTableSet {
            spec: self.spec,
            tables: self
                .tables
                .into_iter()
                .map(|t| t.into_iter().map(|(k, v)| (k, f(v))).collect())
                .collect(),
        }
    }
}

impl<P: Default> LshTableSet<P> {
    /// Hashes each item and folds its update into the matched buckets.
    pub fn build<'a, U>(
        hasher: &BoundHasher,
        items: impl IntoIterator<Item = (&'a [f32], U)>,
        mut fold: impl FnMut(&mut P, &U),
    ) -> Result<Self> {
        let mut set = Self::new(hasher.spec().clone());
        let mut out = HashOutput::default();
        for (x, update) in items {
            hasher.compute_into(x, None, &mut out)?;
            set.insert_with(&out.keys, P::default, |p| fold(p, &update));
        }
        Ok(set)
    }

    pub fn query_input(&self, hasher: &BoundHasher, x: &[f32]) -> Result<Vec<&P>> {
        let out = hasher.compute_keys(x, None)?;
        Ok(self.query(&out.keys))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::gen_synthetic_model;

    #[test]
    fn freehash_bit_examples() {
        assert!(freehash_bit(&[1.0, -1.0], 0.0, &[2.0, 1.0]).unwrap());
        assert!(!freehash_bit(&[1.0, -1.0], 0.0, &[1.0, 2.0]).unwrap());
        assert!(!freehash_bit(&[1.0], -1.0, &[1.0]).unwrap());
        assert!(freehash_bit(&[1.0], 0.0, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn key_packs_bit_j_at_position_j() {
        // Two hash nodes: node 0 fires on x, node 1 does not -> bits (1, 0) -> 0b01.
        let layer = crate::model::DenseLayer::new(
            1,
            2,
            vec![1.0, -1.0],
            vec![0.0, 0.0],
            crate::model::Activation::Relu,
        )
        .unwrap();
        let m = crate::model::MlpModel::new(1, vec![layer], crate::model::OutputSemantics::Raw)
            .unwrap();
        let h = HashFamilySpec::freehash(2, 1, 0, vec![0, 1]).unwrap().bind(&m).unwrap();
        let out = h.compute_keys(&[1.0], None).unwrap();
        assert_eq!(out.keys, vec![BucketKey(1)]);
        assert_eq!(out.preactivations, vec![1.0, -1.0]);
    }

    #[test]
    fn spec_validation() {
        assert!(HashFamilySpec::freehash(2, 1, 0, vec![3, 3]).is_err());
        assert!(HashFamilySpec::freehash(2, 2, 0, vec![0, 1, 2]).is_err());
        assert!(HashFamilySpec::srp(65, 1, 0, 0).is_err());
        assert!(HashFamilySpec::srp(1, 0, 0, 0).is_err());
        let m = gen_synthetic_model(0, &[3, 4, 2]).unwrap();
        assert!(HashFamilySpec::freehash(1, 1, 1, vec![5]).unwrap().bind(&m).is_err());
        assert!(HashFamilySpec::srp(1, 1, 2, 0).unwrap().bind(&m).is_err());
    }

    #[test]
    fn keys_deterministic_and_dimension_checked() {
        let m = gen_synthetic_model(2, &[8, 16, 4]).unwrap();
        let h = HashFamilySpec::srp(6, 3, 0, 99).unwrap().bind(&m).unwrap();
        let x: Vec<f32> = (0..8).map(|i| i as f32 - 3.5).collect();
        assert_eq!(h.compute_keys(&x, None).unwrap(), h.compute_keys(&x, None).unwrap());
        assert!(h.compute_keys(&x[..4], None).is_err());
        for key in h.compute_keys(&x, None).unwrap().keys {
            assert!(key.0 < 1 << 6);
        }
    }

    #[test]
    fn freehash_bits_agree_with_preactivations() {
        let m = gen_synthetic_model(4, &[8, 16, 4]).unwrap();
        let h = HashFamilySpec::freehash(3, 2, 0, vec![0, 3, 5, 7, 11, 15])
            .unwrap()
            .bind(&m)
            .unwrap();
        let x: Vec<f32> = (0..8).map(|i| ((i * 7) as f32).cos()).collect();
        let out = h.compute_keys(&x, None).unwrap();
        for (f, pre) in out.preactivations.iter().enumerate() {
            let (b, j) = (f / 3, f % 3);
            assert_eq!(out.keys[b].0 >> j & 1 == 1, *pre > 0.0);
        }
    }

    #[test]
    fn table_set_basics() {
        let m = gen_synthetic_model(5, &[4, 8, 2]).unwrap();
        let h = HashFamilySpec::srp(4, 3, 0, 1).unwrap().bind(&m).unwrap();
        let x = [0.3f32, -0.2, 0.9, 0.1];
        let set: LshTableSet<u32> =
            LshTableSet::build(&h, [(&x[..], ()), (&x[..], ())], |c, _| *c += 1).unwrap();
        let hits = set.query_input(&h, &x).unwrap();
        assert_eq!(hits, vec![&2, &2, &2]);

        let empty: LshTableSet<u32> = LshTableSet::new(h.spec().clone());
        assert!(empty.query_input(&h, &x).unwrap().is_empty());
    }

    #[test]
    fn zero_variance_node_never_sampled() {
        // Node 2 is constant.
        let mut acts = Vec::new();
        for i in 0..50 {
            let v = i as f32;
            acts.extend_from_slice(&[v, -v, 1.0, v * 0.5]);
        }
        for seed in 0..200 {
            let picked = sample_hash_nodes(&acts, 4, 3, seed).unwrap();
            assert!(!picked.contains(&2));
            let mut s = picked.clone();
            s.sort();
            s.dedup();
            assert_eq!(s.len(), 3);
        }
    }

    #[test]
    fn all_zero_variance_is_degenerate() {
        let acts = vec![1.0f32; 12];
        assert!(matches!(
            sample_hash_nodes(&acts, 3, 1, 0),
            Err(Error::Degenerate(_))
        ));
        assert!(sample_hash_nodes(&acts, 3, 4, 0).is_err());
    }

    #[test]
    fn short_positive_support_fills_from_zero_variance() {
        let acts = vec![0.0f32, 1.0, 1.0, 1.0];
        let picked = sample_hash_nodes(&acts, 2, 2, 3).unwrap();
        assert_eq!(picked[0], 0);
        assert_eq!(picked.len(), 2);
    }

    #[test]
    fn column_variance_matches_two_pass() {
        let m: Vec<f32> = (0..30).map(|i| ((i * 13 % 7) as f32) * 0.25).collect();
        let v = column_variances(&m, 3);
        for (j, vj) in v.iter().enumerate() {
            let col: Vec<f64> = m.iter().skip(j).step_by(3).map(|&x| x as f64).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / col.len() as f64;
            assert!((vj - var).abs() < 1e-12);
        }
    }
}
