//! Confidence of top-k predictions, its bucket-mean estimate, the held-out
//! threshold-to-accuracy calibration curve, and accuracy-constrained k
//! selection.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::importance::{ActivatorBundle, HashChoice};
use crate::lsh::{sample_by_weight, sample_hash_nodes, BoundHasher, HashFamilySpec, HashOutput, LshTableSet};
use crate::model::{forward_dense, predict, LabeledDataset, MlpModel, PredictionVector};
use crate::sparse::{forward_top_k, Selection};

/// Added inside logarithms so dropped output nodes (probability 0) stay finite.
pub const LOG_EPS: f64 = 1e-9;

const CONFIDENCE_SEED_SALT: u64 = 0x5eed_c0f1_de4c_e000;

/// Ascending compute fractions in percent, ending at 100.
#[derive(Clone, Debug, PartialEq)]
pub struct KGrid(Vec<f64>);

impl KGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::input("k grid is empty"));
        }
        if values.iter().any(|&k| !(k > 0.0 && k <= 100.0)) {
            return Err(Error::input(format!("k grid {values:?} has values outside (0, 100]")));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::input("k grid must be strictly ascending"));
        }
        if *values.last().unwrap() != 100.0 {
            return Err(Error::input("k grid must end at 100"));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.0[0]
    }

    pub fn index_of(&self, k: f64) -> Option<usize> {
        self.0.iter().position(|&g| g == k)
    }
}

impl Default for KGrid {
    fn default() -> Self {
        Self(vec![0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 35.0, 50.0, 75.0, 100.0])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    CrossEntropy,
    KlDivergence,
    L2,
}

/// `distance(full, sparse)`; both vectors cover the same output nodes.
pub fn distance(kind: DistanceKind, full: &PredictionVector, sparse: &PredictionVector) -> f64 {
    let cross_entropy = || -> f64 {
        -full
            .values
            .iter()
            .zip(&sparse.values)
            .map(|(p, q)| p * (q + LOG_EPS).ln())
            .sum::<f64>()
    };
    match kind {
        DistanceKind::CrossEntropy => cross_entropy(),
        DistanceKind::KlDivergence => {
            let entropy = -full
                .values
                .iter()
                .map(|p| p * (p + LOG_EPS).ln())
                .sum::<f64>();
            (cross_entropy() - entropy).max(0.0)
        }
        DistanceKind::L2 => full
            .values
            .iter()
            .zip(&sparse.values)
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            .sqrt(),
    }
}

fn full_prediction(model: &MlpModel, x: &[f32]) -> Result<PredictionVector> {
    predict(&forward_dense(model, x)?, model.output_semantics())
}

fn top_k_prediction(model: &MlpModel, bundle: &ActivatorBundle, x: &[f32], k: f64) -> Result<PredictionVector> {
    let run = forward_top_k(model, bundle, x, k, Selection::Ranked)?;
    predict(&run.trace, model.output_semantics())
}

/// `c(k, x) = -distance(full prediction, top-k prediction)`.
pub fn compute_confidence(
    model: &MlpModel,
    bundle: &ActivatorBundle,
    x: &[f32],
    k: f64,
    kind: DistanceKind,
) -> Result<f64> {
    if !(k > 0.0 && k <= 100.0) {
        return Err(Error::input(format!("k = {k} outside (0, 100]")));
    }
    let full = full_prediction(model, x)?;
    let sparse = top_k_prediction(model, bundle, x, k)?;
    Ok(-distance(kind, &full, &sparse))
}

/// Per-grid-k mean confidence and sample count of one bucket.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfidencePayload {
    pub means: Vec<f32>,
    pub counts: Vec<u32>,
}

#[derive(Clone, Debug, Default)]
struct Accum {
    sums: Vec<f64>,
    count: u32,
}

#[derive(Clone, Debug)]
pub struct ConfidenceTables {
    grid: KGrid,
    hasher: BoundHasher,
    tables: LshTableSet<ConfidencePayload>,
}

impl PartialEq for ConfidenceTables {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.tables == other.tables
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceConfig {
    pub k: usize,
    pub l: usize,
    pub seed: u64,
    pub hash: HashChoice,
    pub distance: DistanceKind,
}

impl ConfidenceTables {
    pub fn from_parts(model: &MlpModel, grid: KGrid, tables: LshTableSet<ConfidencePayload>) -> Result<Self> {
        let hasher = tables.spec().bind(model)?;
        for p in tables.tables().iter().flat_map(|t| t.values()) {
            if p.means.len() != grid.len() || p.counts.len() != grid.len() {
                return Err(Error::input("confidence payload does not match the grid"));
            }
            if p.counts.contains(&0) || !p.means.iter().all(|m| m.is_finite()) {
                return Err(Error::input("confidence payload has zero count or non-finite mean"));
            }
        }
        Ok(Self { grid, hasher, tables })
    }

    pub fn grid(&self) -> &KGrid {
        &self.grid
    }

    pub fn hasher(&self) -> &BoundHasher {
        &self.hasher
    }

    pub fn tables(&self) -> &LshTableSet<ConfidencePayload> {
        &self.tables
    }

    /// `ĉ(k, x)` for every grid k from a single table lookup. All-miss
    /// yields negative infinity everywhere.
    pub fn estimate_all(&self, x: &[f32]) -> Result<Vec<f64>> {
        let mut out = HashOutput::default();
        self.hasher.compute_into(x, None, &mut out)?;
        Ok(self.estimate_from_hits(&self.tables.query(&out.keys)))
    }

    fn estimate_from_hits(&self, hits: &[&ConfidencePayload]) -> Vec<f64> {
        (0..self.grid.len())
            .map(|g| {
                let (mut num, mut den) = (0f64, 0f64);
                for p in hits {
                    num += p.counts[g] as f64 * p.means[g] as f64;
                    den += p.counts[g] as f64;
                }
                if den > 0.0 {
                    num / den
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect()
    }

    pub fn estimate_confidence(&self, x: &[f32], k: f64) -> Result<f64> {
        let g = self
            .grid
            .index_of(k)
            .ok_or_else(|| Error::input(format!("k = {k} is not on the grid")))?;
        Ok(self.estimate_all(x)?[g])
    }
}

/// Folds `c(k, x)` for every grid k into input-space LSH buckets as
/// running means. Needs the Node Importance tables already trained.
pub fn train_confidence_tables(
    model: &MlpModel,
    bundle: &ActivatorBundle,
    raw_inputs: &[f32],
    grid: &KGrid,
    cfg: &ConfidenceConfig,
) -> Result<ConfidenceTables> {
    if bundle.layers().is_empty() {
        return Err(Error::Config(
            "confidence tables need trained Node Importance tables".into(),
        ));
    }
    let dim = model.input_dim();
    if raw_inputs.is_empty() || !raw_inputs.len().is_multiple_of(dim) {
        return Err(Error::input("confidence training inputs must be a non-empty n x input_dim matrix"));
    }
    let seed = cfg.seed ^ CONFIDENCE_SEED_SALT;
    let spec = match cfg.hash {
        HashChoice::SignedRandomProjection => HashFamilySpec::srp(cfg.k, cfg.l, 0, seed)?,
        HashChoice::FreeHash => {
            let layer = model.layer(0);
            let acts: Vec<f32> = raw_inputs
                .par_chunks(dim)
                .flat_map_iter(|x| {
                    (0..layer.out_dim()).map(move |j| layer.activate(layer.preactivation(j, x, None)))
                })
                .collect();
            let count = cfg.k * cfg.l;
            let nodes = match sample_hash_nodes(&acts, layer.out_dim(), count, seed) {
                Err(Error::Degenerate(_)) => sample_by_weight(&vec![1.0; layer.out_dim()], count, seed)?,
                other => other?,
            };
            HashFamilySpec::freehash(cfg.k, cfg.l, 0, nodes)?
        }
    };
    let hasher = spec.bind(model)?;

    let confidences: Vec<Vec<f64>> = raw_inputs
        .par_chunks(dim)
        .map(|x| {
            let full = full_prediction(model, x)?;
            grid.values()
                .iter()
                .map(|&k| {
                    let sparse = top_k_prediction(model, bundle, x, k)?;
                    Ok(-distance(cfg.distance, &full, &sparse))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let n_grid = grid.len();
    let mut acc: LshTableSet<Accum> = LshTableSet::new(spec);
    let mut out = HashOutput::default();
    for (x, c) in raw_inputs.chunks_exact(dim).zip(&confidences) {
        hasher.compute_into(x, None, &mut out)?;
        acc.insert_with(
            &out.keys,
            || Accum {
                sums: vec![0.0; n_grid],
                count: 0,
            },
            |a| {
                for (s, v) in a.sums.iter_mut().zip(c) {
                    *s += v;
                }
                a.count += 1;
            },
        );
    }
    let tables = acc.map(|a| ConfidencePayload {
        means: a.sums.iter().map(|s| (s / a.count as f64) as f32).collect(),
        counts: vec![a.count; n_grid],
    });
    Ok(ConfidenceTables {
        grid: grid.clone(),
        hasher,
        tables,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub threshold: f64,
    pub accuracy: f64,
    pub coverage: f64,
}

/// Threshold `t` to accuracy `a_t` among held-out (x, k) pairs with
/// `ĉ(k, x) >= t`. Rows ascend in `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationCurve {
    rows: Vec<CalibrationRow>,
}

/// What a top-k prediction is scored against during calibration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Correctness {
    Labels,
    AgreeWithFull,
}

impl CalibrationCurve {
    pub fn from_rows(rows: Vec<CalibrationRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::input("calibration curve is empty"));
        }
        for r in &rows {
            if !r.threshold.is_finite()
                || !(0.0..=1.0).contains(&r.accuracy)
                || !(0.0..=1.0).contains(&r.coverage)
            {
                return Err(Error::input(format!("invalid calibration row {r:?}")));
            }
        }
        if rows.windows(2).any(|w| w[0].threshold >= w[1].threshold || w[1].coverage > w[0].coverage) {
            return Err(Error::input(
                "calibration rows must ascend in threshold with non-increasing coverage",
            ));
        }
        Ok(Self { rows })
    }

    /// Sweeps every distinct finite estimate as a threshold. Pairs whose
    /// estimate is negative infinity never count as covered.
    pub fn from_pairs(pairs: &[(f64, bool)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::input("no calibration pairs"));
        }
        let mut sorted: Vec<(f64, bool)> = pairs.iter().copied().filter(|p| p.0.is_finite()).collect();
        if sorted.is_empty() {
            return Err(Error::input("no calibration pair has a finite confidence estimate"));
        }
        sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
        let total = pairs.len() as f64;
        let mut rows = Vec::new();
        let (mut covered, mut correct) = (0usize, 0usize);
        let mut i = 0;
        while i < sorted.len() {
            let t = sorted[i].0;
            while i < sorted.len() && sorted[i].0 == t {
                covered += 1;
                correct += sorted[i].1 as usize;
                i += 1;
            }
            rows.push(CalibrationRow {
                threshold: t,
                accuracy: correct as f64 / covered as f64,
                coverage: covered as f64 / total,
            });
        }
        rows.reverse();
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[CalibrationRow] {
        &self.rows
    }

    pub fn max_accuracy(&self) -> f64 {
        self.rows.iter().map(|r| r.accuracy).fold(0.0, f64::max)
    }

    /// Smallest threshold whose accuracy reaches `a_star`.
    pub fn threshold_for(&self, a_star: f64) -> Option<f64> {
        self.rows.iter().find(|r| r.accuracy >= a_star).map(|r| r.threshold)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wtr.serialize(r).map_err(csv_err)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn from_csv(bytes: &[u8]) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(bytes);
        let headers = rdr.headers().map_err(csv_err)?.clone();
        if headers.iter().collect::<Vec<_>>() != ["threshold", "accuracy", "coverage"] {
            return Err(Error::format(0, "calibration CSV header must be threshold,accuracy,coverage"));
        }
        let rows = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<CalibrationRow>, _>>()
            .map_err(csv_err)?;
        Self::from_rows(rows).map_err(|e| Error::format(0, e.to_string()))
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    let offset = e.position().map_or(0, |p| p.byte() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::format(offset, format!("{kind:?}")),
    }
}

/// Pairs every held-out input with every grid k, scoring `ĉ(k, x)` against
/// correctness of the top-k prediction.
pub fn build_calibration(
    model: &MlpModel,
    bundle: &ActivatorBundle,
    tables: &ConfidenceTables,
    held_out: &LabeledDataset,
    correctness: Correctness,
) -> Result<CalibrationCurve> {
    if held_out.is_empty() {
        return Err(Error::input("held-out set is empty"));
    }
    let grid = tables.grid();
    let pairs: Vec<Vec<(f64, bool)>> = (0..held_out.len())
        .into_par_iter()
        .map(|i| {
            let x = held_out.row(i);
            let est = tables.estimate_all(x)?;
            let target = match correctness {
                Correctness::Labels => held_out.label(i) as usize,
                Correctness::AgreeWithFull => full_prediction(model, x)?
                    .argmax()
                    .expect("dense prediction has every node"),
            };
            grid.values()
                .iter()
                .zip(est)
                .map(|(&k, c)| {
                    let p = top_k_prediction(model, bundle, x, k)?;
                    Ok((c, p.argmax() == Some(target)))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    CalibrationCurve::from_pairs(&pairs.concat())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KChoice {
    pub k: f64,
    pub feasible: bool,
}

/// Smallest grid k whose estimate clears the threshold certifying `a_star`.
///
/// `estimates[g]` is `ĉ(grid[g], x)`. If the curve cannot certify `a_star`
/// the full network is used and the choice is flagged infeasible; if it can
/// but no grid k clears the threshold, the full network is used.
pub fn select_k_aclo(
    estimates: &[f64],
    a_star: f64,
    curve: &CalibrationCurve,
    grid: &KGrid,
) -> Result<KChoice> {
    if !(a_star > 0.0 && a_star <= 1.0) {
        return Err(Error::input(format!("accuracy target {a_star} outside (0, 1]")));
    }
    if estimates.len() != grid.len() {
        return Err(Error::input("one estimate per grid k required"));
    }
    let Some(t_star) = curve.threshold_for(a_star) else {
        return Ok(KChoice {
            k: 100.0,
            feasible: false,
        });
    };
    let k = grid
        .values()
        .iter()
        .zip(estimates)
        .find(|(_, &c)| c >= t_star)
        .map_or(100.0, |(&k, _)| k);
    Ok(KChoice { k, feasible: true })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(values: Vec<f64>) -> PredictionVector {
        let computed = (0..values.len() as u32).collect();
        PredictionVector { values, computed }
    }

    #[test]
    fn identical_predictions_have_zero_kl_and_l2() {
        let p = pv(vec![0.2, 0.3, 0.5]);
        assert_eq!(distance(DistanceKind::KlDivergence, &p, &p), 0.0);
        assert_eq!(distance(DistanceKind::L2, &p, &p), 0.0);
    }

    #[test]
    fn cross_entropy_against_collapsed_prediction() {
        let full = pv(vec![0.5, 0.5]);
        let sparse = pv(vec![1.0, 0.0]);
        let c = -distance(DistanceKind::CrossEntropy, &full, &sparse);
        let expected = 0.5 * (1.0f64 + 1e-9).ln() + 0.5 * (1e-9f64).ln();
        assert!((c - expected).abs() < 1e-12);
        assert!((c - (-10.36)).abs() < 0.01);
    }

    #[test]
    fn grid_validation() {
        assert!(KGrid::new(vec![10.0, 50.0]).is_err());
        assert!(KGrid::new(vec![50.0, 10.0, 100.0]).is_err());
        assert!(KGrid::new(vec![0.0, 100.0]).is_err());
        assert!(KGrid::new(vec![]).is_err());
        assert_eq!(KGrid::default().len(), 10);
        assert_eq!(KGrid::default().index_of(35.0), Some(6));
    }

    #[test]
    fn calibration_hand_count() {
        let pairs = [(-1.0, true), (-2.0, true), (-3.0, false), (-4.0, true)];
        let c = CalibrationCurve::from_pairs(&pairs).unwrap();
        let at = c.rows().iter().find(|r| r.threshold == -3.0).unwrap();
        assert!((at.accuracy - 2.0 / 3.0).abs() < 1e-12);
        assert!((at.coverage - 0.75).abs() < 1e-12);
        let lowest = c.rows()[0];
        assert_eq!(lowest.coverage, 1.0);
        assert_eq!(lowest.accuracy, 0.75);
    }

    #[test]
    fn all_correct_curve_is_flat() {
        let pairs: Vec<(f64, bool)> = (0..20).map(|i| (-(i as f64) / 3.0, true)).collect();
        let c = CalibrationCurve::from_pairs(&pairs).unwrap();
        assert!(c.rows().iter().all(|r| r.accuracy == 1.0));
    }

    #[test]
    fn misses_never_covered() {
        let pairs = [(f64::NEG_INFINITY, false), (-1.0, true)];
        let c = CalibrationCurve::from_pairs(&pairs).unwrap();
        assert_eq!(c.rows().len(), 1);
        assert_eq!(c.rows()[0].coverage, 0.5);
        assert!(CalibrationCurve::from_pairs(&[(f64::NEG_INFINITY, true)]).is_err());
        assert!(CalibrationCurve::from_pairs(&[]).is_err());
    }

    #[test]
    fn aclo_two_step_rule() {
        let curve = CalibrationCurve::from_rows(vec![
            CalibrationRow { threshold: -3.0, accuracy: 0.90, coverage: 1.0 },
            CalibrationRow { threshold: -1.0, accuracy: 0.99, coverage: 0.5 },
        ])
        .unwrap();
        let grid = KGrid::new(vec![5.0, 20.0, 100.0]).unwrap();
        let est = [-2.0, -0.5, 0.0];
        let choice = select_k_aclo(&est, 0.99, &curve, &grid).unwrap();
        assert_eq!(choice, KChoice { k: 20.0, feasible: true });
        // Lenient target: lowest threshold, smallest k with a hit.
        let choice = select_k_aclo(&est, 0.5, &curve, &grid).unwrap();
        assert_eq!(choice.k, 5.0);
        // Bucket misses force the full network.
        let miss = [f64::NEG_INFINITY; 3];
        assert_eq!(select_k_aclo(&miss, 0.5, &curve, &grid).unwrap().k, 100.0);
        // Uncertifiable target.
        assert_eq!(
            select_k_aclo(&est, 1.0, &curve, &grid).unwrap(),
            KChoice { k: 100.0, feasible: false }
        );
        assert!(select_k_aclo(&est, 0.0, &curve, &grid).is_err());
        assert!(select_k_aclo(&est, 1.5, &curve, &grid).is_err());
    }

    #[test]
    fn calibration_csv_round_trip() {
        let c = CalibrationCurve::from_pairs(&[(-0.1, true), (-0.7, false), (-2.5, true)]).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"threshold,accuracy,coverage\n"));
        assert_eq!(CalibrationCurve::from_csv(&buf).unwrap(), c);
        assert!(CalibrationCurve::from_csv(b"a,b,c\n1,2,3\n").is_err());
    }
}
