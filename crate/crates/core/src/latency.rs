//! Latency profiles `T(k, β)` over the k grid per co-location scenario,
//! interference load generation, and latency-constrained k selection.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::confidence::{csv_err, KChoice, KGrid};
use crate::error::{Error, Result};
use crate::importance::ActivatorBundle;
use crate::engine::{Engine, SloMode, SloQuery};
use crate::model::{forward_dense, model_to_bytes, MlpModel};

/// A discrete co-location state: `isolated` or `colo<N>` for N busy
/// full-network workers sharing the machine.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scenario {
    pub id: String,
    pub n_interferers: usize,
    pub description: String,
}

impl Scenario {
    pub fn isolated() -> Self {
        Self::colocated(0)
    }

    pub fn colocated(n: usize) -> Self {
        if n == 0 {
            Self {
                id: "isolated".into(),
                n_interferers: 0,
                description: "no co-located load".into(),
            }
        } else {
            Self {
                id: format!("colo{n}"),
                n_interferers: n,
                description: format!("{n} co-located full-network worker(s)"),
            }
        }
    }

    pub fn from_id(id: &str) -> Result<Self> {
        if id == "isolated" {
            return Ok(Self::isolated());
        }
        id.strip_prefix("colo")
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|&n| n > 0)
            .map(Self::colocated)
            .ok_or_else(|| Error::input(format!("unknown scenario {id:?}; use isolated or colo<N>")))
    }
}

/// Selection statistic over a profiled latency distribution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stat {
    Median,
    #[default]
    P95,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub n: usize,
    pub median_us: f64,
    pub p95_us: f64,
    pub mean_us: f64,
}

impl LatencyStats {
    pub fn from_samples(samples_us: &[f64]) -> Result<Self> {
        if samples_us.is_empty() {
            return Err(Error::input("no latency samples"));
        }
        let mut s = samples_us.to_vec();
        s.sort_by(f64::total_cmp);
        Ok(Self {
            n: s.len(),
            median_us: percentile(&s, 0.5),
            p95_us: percentile(&s, 0.95),
            mean_us: s.iter().sum::<f64>() / s.len() as f64,
        })
    }

    pub fn get(&self, stat: Stat) -> f64 {
        match stat {
            Stat::Median => self.median_us,
            Stat::P95 => self.p95_us,
        }
    }
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// FNV-1a over the serialized model, identifying which model a profile
/// was measured on.
pub fn model_fingerprint(model: &MlpModel) -> u64 {
    model_to_bytes(model)
        .iter()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatencyProfile {
    grid: KGrid,
    /// Stats per scenario, indexed like the grid.
    entries: BTreeMap<String, Vec<LatencyStats>>,
    pub model_fingerprint: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct ProfileRow {
    scenario: String,
    k_percent: f64,
    n: usize,
    #[serde(serialize_with = "whole_us")]
    median_us: f64,
    #[serde(serialize_with = "whole_us")]
    p95_us: f64,
    #[serde(serialize_with = "whole_us")]
    mean_us: f64,
}

/// Writes a timing as integer microseconds, at least 1.
fn whole_us<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_u64(v.round().max(1.0) as u64)
}

impl LatencyProfile {
    pub fn new(grid: KGrid, entries: BTreeMap<String, Vec<LatencyStats>>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::input("latency profile has no scenarios"));
        }
        for (id, stats) in &entries {
            if stats.len() != grid.len() {
                return Err(Error::input(format!("scenario {id} does not cover the grid")));
            }
            for s in stats {
                let vals = [s.median_us, s.p95_us, s.mean_us];
                if s.n == 0 || vals.iter().any(|v| !v.is_finite() || *v <= 0.0) || s.p95_us < s.median_us {
                    return Err(Error::input(format!("invalid latency stats {s:?} in scenario {id}")));
                }
            }
        }
        Ok(Self {
            grid,
            entries,
            model_fingerprint: None,
        })
    }

    pub fn grid(&self) -> &KGrid {
        &self.grid
    }

    pub fn scenarios(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn stats(&self, scenario: &str) -> Result<&[LatencyStats]> {
        self.entries
            .get(scenario)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::input(format!("scenario {scenario:?} not in profile")))
    }

    /// Profiled full-network median for a scenario.
    pub fn full_median_us(&self, scenario: &str) -> Result<f64> {
        Ok(self.stats(scenario)?.last().expect("grid is non-empty").median_us)
    }

    /// Timings are written as integer microseconds (at least 1).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for (id, stats) in &self.entries {
            for (&k, s) in self.grid.values().iter().zip(stats) {
                wtr.serialize(ProfileRow {
                    scenario: id.clone(),
                    k_percent: k,
                    n: s.n,
                    median_us: s.median_us,
                    p95_us: s.p95_us,
                    mean_us: s.mean_us,
                })
                .map_err(csv_err)?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn from_csv(bytes: &[u8]) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(bytes);
        let headers = rdr.headers().map_err(csv_err)?.clone();
        if headers.iter().collect::<Vec<_>>() != ["scenario", "k_percent", "n", "median_us", "p95_us", "mean_us"] {
            return Err(Error::format(
                0,
                "profile CSV header must be scenario,k_percent,n,median_us,p95_us,mean_us",
            ));
        }
        let mut by_scenario: BTreeMap<String, Vec<(f64, LatencyStats)>> = BTreeMap::new();
        for row in rdr.deserialize::<ProfileRow>() {
            let row = row.map_err(csv_err)?;
            by_scenario.entry(row.scenario).or_default().push((
                row.k_percent,
                LatencyStats {
                    n: row.n,
                    median_us: row.median_us,
                    p95_us: row.p95_us,
                    mean_us: row.mean_us,
                },
            ));
        }
        let bad = |m: String| Error::format(0, m);
        let mut grid: Option<Vec<f64>> = None;
        let mut entries = BTreeMap::new();
        for (id, mut rows) in by_scenario {
            rows.sort_by(|a, b| a.0.total_cmp(&b.0));
            let ks: Vec<f64> = rows.iter().map(|r| r.0).collect();
            match &grid {
                None => grid = Some(ks),
                Some(g) if *g == ks => {}
                Some(_) => return Err(bad(format!("scenario {id} uses a different k grid"))),
            }
            entries.insert(id, rows.into_iter().map(|r| r.1).collect());
        }
        let grid = KGrid::new(grid.ok_or_else(|| bad("profile CSV has no rows".into()))?)
            .map_err(|e| bad(e.to_string()))?;
        Self::new(grid, entries).map_err(|e| bad(e.to_string()))
    }
}

/// Arrival time of a query; `t0` is everything spent before inference
/// starts (queueing, feature handling).
#[derive(Clone, Copy, Debug)]
pub struct QueryClock {
    arrival: Instant,
    fixed_t0_us: Option<f64>,
}

impl QueryClock {
    pub fn arrived_now() -> Self {
        Self::arrived_at(Instant::now())
    }

    pub fn arrived_at(arrival: Instant) -> Self {
        Self {
            arrival,
            fixed_t0_us: None,
        }
    }

    /// A clock that always reports the given overhead.
    pub fn with_t0_us(t0_us: f64) -> Result<Self> {
        if !(t0_us >= 0.0 && t0_us.is_finite()) {
            return Err(Error::input(format!("t0 = {t0_us} must be a finite non-negative value")));
        }
        Ok(Self {
            arrival: Instant::now(),
            fixed_t0_us: Some(t0_us),
        })
    }

    pub fn arrival(&self) -> Instant {
        self.arrival
    }

    /// Microseconds between arrival and now, unless fixed.
    pub fn t0_us(&self) -> f64 {
        self.fixed_t0_us
            .unwrap_or_else(|| self.arrival.elapsed().as_secs_f64() * 1e6)
    }
}

/// Background full-network workers. Stopping is idempotent and joins
/// every worker; dropping the handle stops it.
#[derive(Debug)]
pub struct InterferenceHandle {
    stop: Arc<AtomicBool>,
    workers: Vec<JoinHandle<()>>,
}

impl InterferenceHandle {
    pub fn n_workers(&self) -> usize {
        self.workers.len()
    }

    pub fn stop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for InterferenceHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Starts `n` closed-loop dense-inference threads, each on a private copy
/// of the model fed with seeded random inputs.
pub fn spawn_interference(n: usize, model: &MlpModel, seed: u64) -> Result<InterferenceHandle> {
    let stop = Arc::new(AtomicBool::new(false));
    let mut handle = InterferenceHandle {
        stop: stop.clone(),
        workers: Vec::with_capacity(n),
    };
    for i in 0..n {
        let model = model.clone();
        let stop = stop.clone();
        let worker = thread::Builder::new()
            .name(format!("interferer-{i}"))
            .spawn(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
                let x: Vec<f32> = (0..model.input_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
                while !stop.load(Ordering::Relaxed) {
                    std::hint::black_box(forward_dense(&model, std::hint::black_box(&x)).ok());
                }
            })
            .map_err(|e| Error::Scenario(format!("cannot start interferer {i}: {e}")))?;
        handle.workers.push(worker);
    }
    Ok(handle)
}

/// Smallest observed step of the monotonic clock.
pub fn timer_resolution() -> Duration {
    let mut best = Duration::MAX;
    for _ in 0..200 {
        let a = Instant::now();
        let mut b = Instant::now();
        while b == a {
            b = Instant::now();
        }
        best = best.min(b - a);
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProfileConfig {
    pub reps: usize,
    pub warmup: usize,
    pub seed: u64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self {
            reps: 100,
            warmup: 20,
            seed: 0,
        }
    }
}

/// Times single-query inference at every grid k for each scenario.
///
/// Each sample is the engine's reported inference time for a query served
/// at that k, the same quantity SLO violations are judged on. Grid points
/// are interleaved within each repetition so slow drift in machine state
/// spreads evenly across k. The k = 100 column is the dense forward pass.
/// `inputs` is `n x input_dim`, cycled.
pub fn profile(
    model: &MlpModel,
    bundle: &ActivatorBundle,
    grid: &KGrid,
    scenarios: &[Scenario],
    inputs: &[f32],
    cfg: &ProfileConfig,
) -> Result<LatencyProfile> {
    if cfg.reps < 10 {
        return Err(Error::input(format!("profiling needs at least 10 reps, got {}", cfg.reps)));
    }
    let dim = model.input_dim();
    if inputs.is_empty() || !inputs.len().is_multiple_of(dim) {
        return Err(Error::input("profiling inputs must be a non-empty n x input_dim matrix"));
    }
    if scenarios.is_empty() {
        return Err(Error::input("no scenarios to profile"));
    }
    let res = timer_resolution();
    if res > Duration::from_micros(1) {
        return Err(Error::Environment(format!("timer resolution {res:?} is coarser than 1 µs")));
    }
    let rows: Vec<&[f32]> = inputs.chunks_exact(dim).collect();
    let engine = Engine::new(model.clone(), bundle.clone());
    let mut entries = BTreeMap::new();
    for sc in scenarios {
        if entries.contains_key(&sc.id) {
            return Err(Error::input(format!("duplicate scenario {}", sc.id)));
        }
        let mut load = spawn_interference(sc.n_interferers, model, cfg.seed)?;
        let mut next = 0usize;
        let mut run = |k: f64| -> Result<f64> {
            let x = rows[next % rows.len()];
            next += 1;
            let mode = if k < 100.0 { SloMode::FixedK(k) } else { SloMode::Full };
            let r = engine.infer(&SloQuery::new(x), mode)?;
            Ok(std::hint::black_box(r).latency.total_us)
        };
        for _ in 0..cfg.warmup {
            for &k in grid.values() {
                run(k)?;
            }
        }
        let mut samples = vec![Vec::with_capacity(cfg.reps); grid.len()];
        for _ in 0..cfg.reps {
            for (g, &k) in grid.values().iter().enumerate() {
                samples[g].push(run(k)?);
            }
        }
        load.stop();
        let stats = samples
            .iter()
            .map(|s| LatencyStats::from_samples(s))
            .collect::<Result<Vec<_>>>()?;
        entries.insert(sc.id.clone(), stats);
    }
    let mut p = LatencyProfile::new(grid.clone(), entries)?;
    p.model_fingerprint = Some(model_fingerprint(model));
    Ok(p)
}

/// Largest grid k with `t0 + stat(k) <= tau_star`; the smallest grid k,
/// flagged infeasible, when none fits.
pub fn select_k_lcao(
    tau_star_us: f64,
    t0_us: f64,
    scenario: &str,
    profile: &LatencyProfile,
    stat: Stat,
) -> Result<KChoice> {
    let stats = profile.stats(scenario)?;
    let grid = profile.grid().values();
    Ok(grid
        .iter()
        .zip(stats)
        .rev()
        .find(|(_, s)| t0_us + s.get(stat) <= tau_star_us)
        .map_or(
            KChoice {
                k: grid[0],
                feasible: false,
            },
            |(&k, _)| KChoice { k, feasible: true },
        ))
}
