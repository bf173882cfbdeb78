//! Serving experiments: arrival processes, per-query records with SLO
//! accounting, aggregate reports, and the k / ACLO / LCAO sweeps.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Uniform};
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::confidence::{csv_err, KGrid};
use crate::engine::{Engine, InferenceResult, SloMode, SloQuery};
use crate::error::{Error, Result};
use crate::importance::top_k_count;
use crate::latency::{percentile, spawn_interference, QueryClock, Scenario};
use crate::model::LabeledDataset;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ArrivalProcess {
    /// `concurrency` workers, each issuing its next query as soon as the
    /// previous one finishes.
    ClosedLoop { concurrency: usize },
    Poisson { rate_qps: f64, seed: u64 },
    /// Poisson arrivals whose rate is `burst_qps` for the first `duty`
    /// fraction of every period and `base_qps` otherwise.
    Burst {
        base_qps: f64,
        burst_qps: f64,
        period_ms: f64,
        duty: f64,
        seed: u64,
    },
}

impl ArrivalProcess {
    fn validate(self) -> Result<Self> {
        let ok = match self {
            ArrivalProcess::ClosedLoop { concurrency } => concurrency > 0,
            ArrivalProcess::Poisson { rate_qps, .. } => rate_qps > 0.0 && rate_qps.is_finite(),
            ArrivalProcess::Burst {
                base_qps,
                burst_qps,
                period_ms,
                duty,
                ..
            } => {
                [base_qps, burst_qps, period_ms].iter().all(|v| *v > 0.0 && v.is_finite())
                    && duty > 0.0
                    && duty < 1.0
            }
        };
        if ok {
            Ok(self)
        } else {
            Err(Error::input(format!("invalid arrival process {self}")))
        }
    }

    /// Arrival offsets in µs from the start of the run for open processes;
    /// `None` for closed-loop. Stops after `n` arrivals or once the offset
    /// passes `horizon_us`.
    pub fn arrival_offsets_us(&self, n: Option<usize>, horizon_us: Option<f64>) -> Option<Vec<f64>> {
        let limit = n.unwrap_or(usize::MAX);
        let horizon = horizon_us.unwrap_or(f64::INFINITY);
        let mut out = Vec::new();
        match *self {
            ArrivalProcess::ClosedLoop { .. } => return None,
            ArrivalProcess::Poisson { rate_qps, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let gap = Exp::new(rate_qps / 1e6).expect("validated rate");
                let mut t = 0.0;
                while out.len() < limit {
                    t += gap.sample(&mut rng);
                    if t > horizon {
                        break;
                    }
                    out.push(t);
                }
            }
            ArrivalProcess::Burst {
                base_qps,
                burst_qps,
                period_ms,
                duty,
                seed,
            } => {
                // Thinning of a homogeneous process at the peak rate.
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let peak = base_qps.max(burst_qps);
                let gap = Exp::new(peak / 1e6).expect("validated rate");
                let coin = Uniform::new(0.0, 1.0).expect("unit interval");
                let period_us = period_ms * 1e3;
                let mut t = 0.0;
                while out.len() < limit {
                    t += gap.sample(&mut rng);
                    if t > horizon {
                        break;
                    }
                    let rate = if (t % period_us) < duty * period_us { burst_qps } else { base_qps };
                    if coin.sample(&mut rng) * peak < rate {
                        out.push(t);
                    }
                }
            }
        }
        Some(out)
    }
}

impl fmt::Display for ArrivalProcess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArrivalProcess::ClosedLoop { concurrency } => write!(f, "closed:{concurrency}"),
            ArrivalProcess::Poisson { rate_qps, seed } => write!(f, "poisson:{rate_qps}:{seed}"),
            ArrivalProcess::Burst {
                base_qps,
                burst_qps,
                period_ms,
                duty,
                seed,
            } => write!(f, "burst:{base_qps}:{burst_qps}:{period_ms}:{duty}:{seed}"),
        }
    }
}

/// `closed:N`, `poisson:RATE[:SEED]`, or
/// `burst:BASE:BURST:PERIOD_MS:DUTY[:SEED]`.
impl FromStr for ArrivalProcess {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::input(format!("cannot parse arrival process {s:?}"));
        let num = |p: &str| p.parse::<f64>().map_err(|_| bad());
        let seed = |p: Option<&&str>| p.map_or(Ok(0), |p| p.parse::<u64>().map_err(|_| bad()));
        let a = match (parts[0], parts.len()) {
            ("closed", 2) => ArrivalProcess::ClosedLoop {
                concurrency: parts[1].parse().map_err(|_| bad())?,
            },
            ("poisson", 2 | 3) => ArrivalProcess::Poisson {
                rate_qps: num(parts[1])?,
                seed: seed(parts.get(2))?,
            },
            ("burst", 5 | 6) => ArrivalProcess::Burst {
                base_qps: num(parts[1])?,
                burst_qps: num(parts[2])?,
                period_ms: num(parts[3])?,
                duty: num(parts[4])?,
                seed: seed(parts.get(5))?,
            },
            _ => return Err(bad()),
        };
        a.validate()
    }
}

fn round_us<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_u64(v.round().max(0.0) as u64)
}

/// One served query. CSV output writes timings as integer microseconds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QueryRecord {
    pub id: usize,
    #[serde(serialize_with = "round_us")]
    pub arrival_us: f64,
    #[serde(serialize_with = "round_us")]
    pub t0_us: f64,
    pub mode: String,
    pub scenario: String,
    pub k_used: f64,
    #[serde(serialize_with = "round_us")]
    pub hash_us: f64,
    #[serde(serialize_with = "round_us")]
    pub select_us: f64,
    #[serde(serialize_with = "round_us")]
    pub compute_us: f64,
    #[serde(serialize_with = "round_us")]
    pub total_us: f64,
    pub correct: bool,
    pub feasible: bool,
    pub violated: bool,
}

impl QueryRecord {
    /// End-to-end response time: pre-inference overhead plus inference.
    pub fn response_us(&self) -> f64 {
        self.t0_us + self.total_us
    }
}

/// Report aggregates. Latencies serialize as integer microseconds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchSummary {
    pub n: usize,
    pub accuracy: f64,
    #[serde(serialize_with = "round_us")]
    pub latency_mean_us: f64,
    #[serde(serialize_with = "round_us")]
    pub latency_median_us: f64,
    #[serde(serialize_with = "round_us")]
    pub latency_p95_us: f64,
    #[serde(serialize_with = "round_us")]
    pub latency_p99_us: f64,
    pub violation_rate: f64,
    pub infeasible_rate: f64,
    pub mean_k: f64,
    /// Profiled full-network median over each query's inference time.
    pub speedup_mean: Option<f64>,
    pub speedup_min: Option<f64>,
    pub speedup_max: Option<f64>,
    pub k_histogram: BTreeMap<String, usize>,
}

impl BenchSummary {
    /// Aggregates over the records; `full_median_us` enables speedups.
    pub fn from_records(records: &[QueryRecord], full_median_us: Option<f64>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::input("no records to summarize"));
        }
        let n = records.len() as f64;
        let frac = |f: &dyn Fn(&QueryRecord) -> bool| records.iter().filter(|r| f(r)).count() as f64 / n;
        let mut lat: Vec<f64> = records.iter().map(QueryRecord::response_us).collect();
        lat.sort_by(f64::total_cmp);
        let speedups: Option<Vec<f64>> =
            full_median_us.map(|m| records.iter().map(|r| m / r.total_us.max(1e-3)).collect());
        let mut k_histogram = BTreeMap::new();
        for r in records {
            *k_histogram.entry(r.k_used.to_string()).or_insert(0) += 1;
        }
        Ok(Self {
            n: records.len(),
            accuracy: frac(&|r| r.correct),
            latency_mean_us: lat.iter().sum::<f64>() / n,
            latency_median_us: percentile(&lat, 0.5),
            latency_p95_us: percentile(&lat, 0.95),
            latency_p99_us: percentile(&lat, 0.99),
            violation_rate: frac(&|r| r.violated),
            infeasible_rate: frac(&|r| !r.feasible),
            mean_k: records.iter().map(|r| r.k_used).sum::<f64>() / n,
            speedup_mean: speedups.as_ref().map(|s| s.iter().sum::<f64>() / n),
            speedup_min: speedups.as_ref().map(|s| s.iter().copied().fold(f64::INFINITY, f64::min)),
            speedup_max: speedups.as_ref().map(|s| s.iter().copied().fold(0.0, f64::max)),
            k_histogram,
        })
    }
}

#[derive(Clone, Debug)]
pub struct BenchReport {
    pub records: Vec<QueryRecord>,
    pub summary: BenchSummary,
}

impl BenchReport {
    pub fn write_records_csv<W: Write>(&self, w: W) -> Result<()> {
        write_csv(w, &self.records)
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes")
    }
}

pub fn write_csv<W: Write, R: Serialize>(w: W, rows: &[R]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r).map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub mode: SloMode,
    pub arrival: ArrivalProcess,
    pub scenario: String,
    /// Queries to issue; dataset rows are cycled.
    pub n: Option<usize>,
    pub duration: Option<Duration>,
    pub accuracy_target: Option<f64>,
    pub latency_target_us: Option<f64>,
    /// Run the scenario's co-located load for the length of the bench.
    pub interfere: bool,
    /// Workers serving open-loop arrivals.
    pub workers: usize,
    /// Append each record here as soon as it completes.
    pub record_sink: Option<PathBuf>,
    pub seed: u64,
}

impl BenchConfig {
    pub fn new(mode: SloMode, n: usize) -> Self {
        Self {
            mode,
            arrival: ArrivalProcess::ClosedLoop { concurrency: 1 },
            scenario: "isolated".into(),
            n: Some(n),
            duration: None,
            accuracy_target: None,
            latency_target_us: None,
            interfere: false,
            workers: 1,
            record_sink: None,
            seed: 0,
        }
    }
}

struct Sink {
    records: Vec<QueryRecord>,
    csv: Option<csv::Writer<File>>,
    error: Option<Error>,
}

fn check_dims(engine: &Engine, data: &LabeledDataset) -> Result<()> {
    if data.dim() != engine.model().input_dim() {
        return Err(Error::input(format!(
            "dataset has {} features, model expects {}",
            data.dim(),
            engine.model().input_dim()
        )));
    }
    if data.is_empty() {
        return Err(Error::input("dataset is empty"));
    }
    Ok(())
}

fn mode_for_query(mode: SloMode, id: usize) -> SloMode {
    match mode {
        SloMode::RandomK { k, seed } => SloMode::RandomK {
            k,
            seed: seed.wrapping_add(id as u64),
        },
        m => m,
    }
}

fn record_of(
    cfg: &BenchConfig,
    id: usize,
    arrival_us: f64,
    label: u32,
    r: &InferenceResult,
) -> QueryRecord {
    QueryRecord {
        id,
        arrival_us,
        t0_us: r.t0_us,
        mode: cfg.mode.name().into(),
        scenario: cfg.scenario.clone(),
        k_used: r.k_used,
        hash_us: r.latency.hash_us,
        select_us: r.latency.select_us,
        compute_us: r.latency.compute_us,
        total_us: r.latency.total_us,
        correct: r.prediction.argmax() == Some(label as usize),
        feasible: r.feasible,
        violated: cfg
            .latency_target_us
            .is_some_and(|tau| r.t0_us + r.latency.total_us > tau),
    }
}

/// Kernel timer slack makes a plain sleep overshoot by tens of
/// microseconds, which would show up as queueing delay. Sleep to just
/// short of the deadline, then yield until it passes.
fn wait_until(at: Instant) {
    const SPIN: Duration = Duration::from_micros(200);
    if let Some(wait) = at.checked_duration_since(Instant::now()) {
        if wait > SPIN {
            thread::sleep(wait - SPIN);
        }
    }
    while Instant::now() < at {
        thread::yield_now();
    }
}

/// Serves dataset rows under the configured arrival process and mode.
pub fn run_bench(engine: &Engine, data: &LabeledDataset, cfg: &BenchConfig) -> Result<BenchReport> {
    check_dims(engine, data)?;
    if cfg.n.is_none() && cfg.duration.is_none() {
        return Err(Error::input("bench needs a query count or a duration"));
    }
    cfg.arrival.validate()?;
    let scenario = Scenario::from_id(&cfg.scenario)?;
    let n = cfg.n.unwrap_or(usize::MAX);
    let horizon_us = cfg.duration.map(|d| d.as_secs_f64() * 1e6);
    let offsets = cfg.arrival.arrival_offsets_us(cfg.n, horizon_us);

    let sink = Mutex::new(Sink {
        records: Vec::new(),
        csv: match &cfg.record_sink {
            Some(p) => Some(csv::Writer::from_writer(File::create(p)?)),
            None => None,
        },
        error: None,
    });
    let mut load = if cfg.interfere {
        Some(spawn_interference(scenario.n_interferers, engine.model(), cfg.seed)?)
    } else {
        None
    };

    let start = Instant::now();
    let serve = |id: usize, clock: QueryClock| {
        let i = id % data.len();
        let q = SloQuery {
            x: data.row(i),
            accuracy_target: cfg.accuracy_target,
            latency_target_us: cfg.latency_target_us,
            clock,
            scenario: cfg.scenario.clone(),
        };
        let arrival_us = clock.arrival().saturating_duration_since(start).as_secs_f64() * 1e6;
        let result = engine
            .infer(&q, mode_for_query(cfg.mode, id))
            .map(|r| record_of(cfg, id, arrival_us, data.label(i), &r));
        let mut s = sink.lock().expect("sink lock");
        match result {
            Ok(rec) => {
                if let Some(w) = s.csv.as_mut() {
                    if let Err(e) = w.serialize(&rec).and_then(|_| w.flush().map_err(Into::into)) {
                        s.error.get_or_insert(csv_err(e));
                    }
                }
                s.records.push(rec);
            }
            Err(e) => {
                s.error.get_or_insert(e);
            }
        }
    };

    match offsets {
        None => {
            let ArrivalProcess::ClosedLoop { concurrency } = cfg.arrival else {
                unreachable!("open processes always produce offsets")
            };
            let next = AtomicUsize::new(0);
            thread::scope(|s| {
                for _ in 0..concurrency {
                    s.spawn(|| loop {
                        let id = next.fetch_add(1, Ordering::Relaxed);
                        if id >= n || cfg.duration.is_some_and(|d| start.elapsed() >= d) {
                            break;
                        }
                        serve(id, QueryClock::arrived_now());
                    });
                }
            });
        }
        Some(offsets) => {
            let (tx, rx) = mpsc::channel::<(usize, Instant)>();
            let rx = Mutex::new(rx);
            thread::scope(|s| {
                for _ in 0..cfg.workers.max(1) {
                    s.spawn(|| loop {
                        let msg = rx.lock().expect("queue lock").recv();
                        match msg {
                            Ok((id, at)) => serve(id, QueryClock::arrived_at(at)),
                            Err(_) => break,
                        }
                    });
                }
                for (id, off) in offsets.into_iter().enumerate() {
                    let at = start + Duration::from_secs_f64(off / 1e6);
                    wait_until(at);
                    if tx.send((id, at)).is_err() {
                        break;
                    }
                }
                drop(tx);
            });
        }
    }
    if let Some(l) = load.as_mut() {
        l.stop();
    }

    let Sink { mut records, error, .. } = sink.into_inner().expect("sink lock");
    if let Some(e) = error {
        return Err(e);
    }
    records.sort_by_key(|r| r.id);
    let full_median = engine
        .profile()
        .and_then(|p| p.full_median_us(&cfg.scenario).ok());
    let summary = BenchSummary::from_records(&records, full_median)?;
    Ok(BenchReport { records, summary })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepKRow {
    pub k_percent: f64,
    pub nodes_per_layer: usize,
    pub acc_ranked: f64,
    pub acc_random: f64,
    pub acc_full: f64,
}

fn accuracy(engine: &Engine, data: &LabeledDataset, mode: impl Fn(usize) -> SloMode + Sync) -> Result<f64> {
    let correct: usize = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let r = engine.infer(&SloQuery::new(data.row(i)), mode(i))?;
            Ok((r.prediction.argmax() == Some(data.label(i) as usize)) as usize)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok(correct as f64 / data.len() as f64)
}

/// Accuracy of ranked and random top-k selection at every grid k, next to
/// full-network accuracy. `nodes_per_layer` is the top-k size of the first
/// activated layer.
pub fn sweep_k(engine: &Engine, data: &LabeledDataset, grid: &KGrid, seed: u64) -> Result<Vec<SweepKRow>> {
    check_dims(engine, data)?;
    let width = engine
        .bundle()
        .layers()
        .first()
        .map_or(engine.model().layer(0).out_dim(), |t| t.out_dim());
    let acc_full = accuracy(engine, data, |_| SloMode::Full)?;
    grid.values()
        .iter()
        .map(|&k| {
            Ok(SweepKRow {
                k_percent: k,
                nodes_per_layer: top_k_count(k, width),
                acc_ranked: accuracy(engine, data, |_| SloMode::FixedK(k))?,
                acc_random: accuracy(engine, data, |i| SloMode::RandomK {
                    k,
                    seed: seed.wrapping_add(i as u64),
                })?,
                acc_full,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepAcloRow {
    pub a_star: f64,
    pub acc_achieved: f64,
    pub speedup_min: f64,
    pub speedup_avg: f64,
    pub speedup_max: f64,
}

fn sequential(engine: &Engine, data: &LabeledDataset, cfg: BenchConfig) -> Result<BenchSummary> {
    Ok(run_bench(engine, data, &cfg)?.summary)
}

/// One ACLO run per accuracy target over the whole dataset, served one
/// query at a time. A target of zero or below is the unconstrained case.
pub fn sweep_aclo(
    engine: &Engine,
    data: &LabeledDataset,
    targets: &[f64],
    scenario: &str,
) -> Result<Vec<SweepAcloRow>> {
    check_dims(engine, data)?;
    if engine.profile().is_none() {
        return Err(Error::Config("ACLO sweep needs a latency profile for speedups".into()));
    }
    targets
        .iter()
        .map(|&a_star| {
            let cfg = BenchConfig {
                scenario: scenario.into(),
                accuracy_target: Some(if a_star > 0.0 { a_star } else { f64::MIN_POSITIVE }),
                ..BenchConfig::new(SloMode::Aclo, data.len())
            };
            let s = sequential(engine, data, cfg)?;
            Ok(SweepAcloRow {
                a_star,
                acc_achieved: s.accuracy,
                speedup_min: s.speedup_min.expect("profile present"),
                speedup_avg: s.speedup_mean.expect("profile present"),
                speedup_max: s.speedup_max.expect("profile present"),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepLcaoRow {
    #[serde(serialize_with = "round_us")]
    pub tau_star_us: f64,
    pub scenario: String,
    pub acc_achieved: f64,
    #[serde(serialize_with = "round_us")]
    pub p95_latency_us: f64,
    pub violation_rate: f64,
    pub mean_k: f64,
}

/// One LCAO run per (scenario, latency target), with the scenario's
/// co-located load running throughout.
pub fn sweep_lcao(
    engine: &Engine,
    data: &LabeledDataset,
    targets_us: &[f64],
    scenarios: &[String],
    seed: u64,
) -> Result<Vec<SweepLcaoRow>> {
    check_dims(engine, data)?;
    if engine.profile().is_none() {
        return Err(Error::Config("LCAO sweep needs a latency profile".into()));
    }
    let mut rows = Vec::new();
    for sc in scenarios {
        let mut load = spawn_interference(Scenario::from_id(sc)?.n_interferers, engine.model(), seed)?;
        for &tau in targets_us {
            let cfg = BenchConfig {
                scenario: sc.clone(),
                latency_target_us: Some(tau),
                seed,
                ..BenchConfig::new(SloMode::Lcao, data.len())
            };
            let s = sequential(engine, data, cfg)?;
            rows.push(SweepLcaoRow {
                tau_star_us: tau,
                scenario: sc.clone(),
                acc_achieved: s.accuracy,
                p95_latency_us: s.latency_p95_us,
                violation_rate: s.violation_rate,
                mean_k: s.mean_k,
            });
        }
        load.stop();
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_arrivals() {
        assert_eq!(
            "closed:4".parse::<ArrivalProcess>().unwrap(),
            ArrivalProcess::ClosedLoop { concurrency: 4 }
        );
        assert_eq!(
            "poisson:250".parse::<ArrivalProcess>().unwrap(),
            ArrivalProcess::Poisson { rate_qps: 250.0, seed: 0 }
        );
        let b: ArrivalProcess = "burst:10:100:50:0.2:7".parse().unwrap();
        assert_eq!(b.to_string().parse::<ArrivalProcess>().unwrap(), b);
        for bad in ["", "closed:0", "poisson:-1", "burst:1:2:3:1.0", "burst:1:2:3", "tcp:9", "poisson:x"] {
            assert!(bad.parse::<ArrivalProcess>().is_err(), "{bad}");
        }
    }

    #[test]
    fn poisson_gap_mean() {
        let a = ArrivalProcess::Poisson { rate_qps: 500.0, seed: 3 };
        let t = a.arrival_offsets_us(Some(10_000), None).unwrap();
        let mean_gap = t.last().unwrap() / t.len() as f64;
        assert!((mean_gap / 2000.0 - 1.0).abs() < 0.05, "{mean_gap}");
    }

    #[test]
    fn burst_rate_follows_duty_cycle() {
        let a = ArrivalProcess::Burst {
            base_qps: 100.0,
            burst_qps: 1000.0,
            period_ms: 100.0,
            duty: 0.5,
            seed: 1,
        };
        let t = a.arrival_offsets_us(None, Some(20e6)).unwrap();
        let in_burst = t.iter().filter(|&&x| x % 100e3 < 50e3).count() as f64;
        let ratio = in_burst / (t.len() as f64 - in_burst);
        assert!((ratio - 10.0).abs() < 1.0, "{ratio}");
        assert!(ArrivalProcess::ClosedLoop { concurrency: 1 }.arrival_offsets_us(Some(3), None).is_none());
    }

    fn rec(id: usize, total: f64, correct: bool, k: f64) -> QueryRecord {
        QueryRecord {
            id,
            arrival_us: 0.0,
            t0_us: 1.0,
            mode: "full".into(),
            scenario: "isolated".into(),
            k_used: k,
            hash_us: 0.0,
            select_us: 0.0,
            compute_us: total,
            total_us: total,
            correct,
            feasible: true,
            violated: 1.0 + total > 10.0,
        }
    }

    #[test]
    fn summary_aggregates() {
        let rs = vec![rec(0, 4.0, true, 10.0), rec(1, 19.0, false, 100.0), rec(2, 9.0, true, 10.0)];
        let s = BenchSummary::from_records(&rs, Some(20.0)).unwrap();
        assert_eq!(s.accuracy, 2.0 / 3.0);
        assert_eq!(s.latency_median_us, 10.0);
        assert_eq!(s.latency_p99_us, 20.0);
        assert_eq!(s.violation_rate, 1.0 / 3.0);
        assert_eq!(s.mean_k, 40.0);
        assert_eq!(s.speedup_max, Some(5.0));
        assert_eq!(s.k_histogram["10"], 2);
        let mut buf = Vec::new();
        write_csv(&mut buf, &rs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "id,arrival_us,t0_us,mode,scenario,k_used,hash_us,select_us,compute_us,total_us,correct,feasible,violated\n"
        ));
        assert!(text.contains("\n1,0,1,full,isolated,100.0,0,0,19,19,false,true,true\n"));
    }
}
