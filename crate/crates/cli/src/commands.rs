use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use serde_json::json;

use slonn_core::bench::{self, BenchConfig};
use slonn_core::confidence::{
    build_calibration, train_confidence_tables, CalibrationCurve, ConfidenceConfig, Correctness,
    DistanceKind, KGrid,
};
use slonn_core::engine::{Engine, SloMode, SloQuery};
use slonn_core::importance::{
    load_activator, save_activator, storage_overhead, train_activator, ActivatorConfig, HashChoice,
};
use slonn_core::latency::{self, LatencyProfile, ProfileConfig, QueryClock, Scenario, Stat};
use slonn_core::model::{
    fit_class_mean_readout, gen_synthetic_dataset, gen_synthetic_model, load_dataset, load_model,
    save_dataset, save_model, LabeledDataset, MlpModel, SyntheticDataSpec,
};

use crate::opts::{display, parse_list, ModeArg, Opts, StatArg};
use crate::{MissingFlag, Outcome, UsageError};

fn require<'a, T>(v: &'a Option<T>, flag: &'static str) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| MissingFlag(flag).into())
}

fn model(o: &Opts) -> Result<MlpModel> {
    let p = require(&o.model, "--model")?;
    load_model(p).with_context(|| format!("loading model {}", display(p)))
}

fn data(o: &Opts) -> Result<LabeledDataset> {
    let p = require(&o.data, "--data")?;
    load_dataset(p).with_context(|| format!("loading dataset {}", display(p)))
}

fn wrote(path: &Path) {
    eprintln!("wrote {}", path.display());
}

fn write_rows<R: serde::Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    bench::write_csv(BufWriter::new(File::create(path)?), rows)?;
    wrote(path);
    Ok(())
}

/// Model, activator, and whichever of calibration and profile exist.
fn engine(o: &Opts) -> Result<Engine> {
    let model = model(o)?;
    let act = require(&o.activator, "--activator")?;
    let bundle = load_activator(act, &model).with_context(|| format!("loading activator {}", display(act)))?;
    let mut engine = Engine::new(model, bundle);
    if let Some(p) = o.calibration_path().filter(|p| p.exists()) {
        let curve = CalibrationCurve::from_csv(&std::fs::read(&p)?)
            .with_context(|| format!("loading calibration {}", display(&p)))?;
        engine = engine.with_calibration(curve);
    }
    if let Some(p) = &o.profile {
        let prof = LatencyProfile::from_csv(&std::fs::read(p)?)
            .with_context(|| format!("loading profile {}", display(p)))?;
        engine = engine.with_profile(prof);
    }
    if let Some(stat) = o.stat {
        engine = engine.with_stat(match stat {
            StatArg::Median => Stat::Median,
            StatArg::P95 => Stat::P95,
        });
    }
    Ok(engine)
}

fn mode(o: &Opts) -> Result<SloMode> {
    Ok(match o.mode.unwrap_or(ModeArg::Full) {
        ModeArg::Full => SloMode::Full,
        ModeArg::Fixed => SloMode::FixedK(*require(&o.k, "--k")?),
        ModeArg::Random => SloMode::RandomK {
            k: *require(&o.k, "--k")?,
            seed: o.seed(),
        },
        ModeArg::Aclo => {
            require(&o.accuracy_target, "--accuracy-target")?;
            SloMode::Aclo
        }
        ModeArg::Lcao => {
            require(&o.latency_target_us, "--latency-target-us")?;
            SloMode::Lcao
        }
    })
}

// --- gen-model ---

#[derive(Args, Debug)]
pub struct GenModelArgs {
    /// Layer widths from input to output.
    #[arg(long, default_value = "64,128,128,8")]
    dims: String,
    /// Replace the output layer with a class-mean readout fit on --data.
    #[arg(long)]
    fit_readout: bool,
}

pub fn gen_model(o: &Opts, a: &GenModelArgs) -> Result<Outcome> {
    let dims: Vec<usize> = a
        .dims
        .split(',')
        .map(|d| d.trim().parse().map_err(|_| UsageError(format!("--dims: {d:?} is not a width"))))
        .collect::<std::result::Result<_, _>>()?;
    let mut m = gen_synthetic_model(o.seed(), &dims).map_err(|e| UsageError(format!("--dims: {e}")))?;
    if a.fit_readout {
        m = fit_class_mean_readout(&m, &data(o)?)?;
    }
    let path = o.out_dir()?.join("model.slnn");
    save_model(&m, &path)?;
    wrote(&path);
    Ok(Outcome::Done)
}

// --- gen-data ---

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 16)]
    clusters: usize,
    #[arg(long, default_value_t = 8)]
    classes: usize,
    /// Standard deviation of the isotropic noise around cluster centres.
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    /// Rows for held.slds, drawn from the same clusters.
    #[arg(long, default_value_t = 0)]
    held_out: usize,
    /// Rows for test.slds, drawn from the same clusters.
    #[arg(long, default_value_t = 0)]
    test: usize,
}

/// `--n` rows (default 10000) go to data.slds.
pub fn gen_data(o: &Opts, a: &GenDataArgs) -> Result<Outcome> {
    let n = o.n.unwrap_or(10_000);
    let spec = SyntheticDataSpec {
        n: n + a.held_out + a.test,
        dim: a.dim,
        n_clusters: a.clusters,
        n_classes: a.classes,
        noise_sigma: a.noise,
    };
    let all = gen_synthetic_dataset(o.seed(), &spec).map_err(|e| UsageError(e.to_string()))?;
    let dir = o.out_dir()?;
    let parts = [("data.slds", 0..n), ("held.slds", n..n + a.held_out), ("test.slds", n + a.held_out..spec.n)];
    for (name, range) in parts {
        if range.is_empty() {
            continue;
        }
        let path = dir.join(name);
        save_dataset(&all.slice(range), &path)?;
        wrote(&path);
    }
    Ok(Outcome::Done)
}

// --- fit ---

#[derive(Clone, Copy, Debug, ValueEnum)]
enum HashArg {
    Freehash,
    Srp,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DistanceArg {
    CrossEntropy,
    KlDivergence,
    L2,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CorrectnessArg {
    Labels,
    AgreeWithFull,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Calibration set; without it the last --held-out-fraction of --data is used.
    #[arg(long)]
    held_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.2)]
    held_out_fraction: f64,
    #[arg(long, value_enum, default_value = "freehash")]
    hash: HashArg,
    #[arg(long, value_enum, default_value = "cross-entropy")]
    distance: DistanceArg,
    #[arg(long, value_enum, default_value = "labels")]
    correctness: CorrectnessArg,
    /// Longest stored ranked list as a fraction of the layer width.
    #[arg(long, default_value_t = 0.25)]
    max_list_fraction: f64,
}

pub fn fit(o: &Opts, a: &FitArgs) -> Result<Outcome> {
    let model = model(o)?;
    let all = data(o)?;
    let (train, held) = match &a.held_out {
        Some(p) => (all, load_dataset(p).with_context(|| format!("loading {}", display(p)))?),
        None => {
            if !(a.held_out_fraction > 0.0 && a.held_out_fraction < 1.0) {
                return Err(UsageError("--held-out-fraction must lie in (0, 1)".into()).into());
            }
            let cut = all.len() - ((all.len() as f64 * a.held_out_fraction).round() as usize).clamp(1, all.len() - 1);
            (all.slice(0..cut), all.slice(cut..all.len()))
        }
    };
    let grid = o.grid()?;
    let hash = match a.hash {
        HashArg::Freehash => HashChoice::FreeHash,
        HashArg::Srp => HashChoice::SignedRandomProjection,
    };
    let cfg = ActivatorConfig {
        k: o.hash_bits(),
        l: o.tables(),
        seed: o.seed(),
        hash,
        max_list_fraction: a.max_list_fraction,
        ..Default::default()
    };
    let mut bundle = train_activator(&model, train.features(), &cfg).map_err(|e| match e {
        slonn_core::Error::Input(m) => UsageError(m).into(),
        e => anyhow::Error::from(e),
    })?;
    let ccfg = ConfidenceConfig {
        k: cfg.k,
        l: cfg.l,
        seed: cfg.seed,
        hash,
        distance: match a.distance {
            DistanceArg::CrossEntropy => DistanceKind::CrossEntropy,
            DistanceArg::KlDivergence => DistanceKind::KlDivergence,
            DistanceArg::L2 => DistanceKind::L2,
        },
    };
    let tables = train_confidence_tables(&model, &bundle, train.features(), &grid, &ccfg)?;
    let correctness = match a.correctness {
        CorrectnessArg::Labels => Correctness::Labels,
        CorrectnessArg::AgreeWithFull => Correctness::AgreeWithFull,
    };
    let curve = build_calibration(&model, &bundle, &tables, &held, correctness)?;
    bundle.confidence = Some(tables);

    let dir = o.out_dir()?;
    let act = dir.join("activator.slac");
    save_activator(&bundle, &act)?;
    wrote(&act);
    let cal = dir.join("calibration.csv");
    curve.write_csv(BufWriter::new(File::create(&cal)?))?;
    wrote(&cal);
    eprintln!(
        "activated layers {:?}, storage {:.1}% of the model",
        bundle.activated_layers(),
        100.0 * storage_overhead(&bundle, &model)?
    );
    Ok(Outcome::Done)
}

// --- profile ---

#[derive(Args, Debug)]
pub struct ProfileArgs {
    /// Comma-separated scenario ids to measure.
    #[arg(long, default_value = "isolated,colo1")]
    scenarios: String,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 20)]
    warmup: usize,
}

fn scenarios(list: &str) -> Result<Vec<Scenario>> {
    list.split(',')
        .map(|s| Scenario::from_id(s.trim()).map_err(|e| UsageError(e.to_string()).into()))
        .collect()
}

pub fn profile(o: &Opts, a: &ProfileArgs) -> Result<Outcome> {
    let engine = engine(o)?;
    let inputs = data(o)?;
    let grid: KGrid = match (&o.k_grid, engine.grid()) {
        (None, Some(g)) => g.clone(),
        _ => o.grid()?,
    };
    let cfg = ProfileConfig {
        reps: a.reps,
        warmup: a.warmup,
        seed: o.seed(),
    };
    let prof = latency::profile(
        engine.model(),
        engine.bundle(),
        &grid,
        &scenarios(&a.scenarios)?,
        inputs.features(),
        &cfg,
    )?;
    let path = o.out_dir()?.join("profile.csv");
    prof.write_csv(BufWriter::new(File::create(&path)?))?;
    wrote(&path);
    Ok(Outcome::Done)
}

// --- infer ---

#[derive(Args, Debug)]
pub struct InferArgs {
    /// Dataset row to serve.
    #[arg(long, default_value_t = 0)]
    row: usize,
    /// Comma-separated features, instead of a dataset row.
    #[arg(long)]
    input: Option<String>,
    /// Treat the query as having waited this long before inference.
    #[arg(long)]
    t0_us: Option<f64>,
}

pub fn infer(o: &Opts, a: &InferArgs) -> Result<Outcome> {
    let engine = engine(o)?;
    let x: Vec<f32> = match &a.input {
        Some(s) => parse_list(s, "--input")?.into_iter().map(|v| v as f32).collect(),
        None => {
            let d = data(o)?;
            if a.row >= d.len() {
                return Err(UsageError(format!("--row {} beyond {} rows", a.row, d.len())).into());
            }
            d.row(a.row).to_vec()
        }
    };
    let mode = mode(o)?;
    let clock = match a.t0_us {
        Some(t) => QueryClock::with_t0_us(t).map_err(|e| UsageError(e.to_string()))?,
        None => QueryClock::arrived_now(),
    };
    let q = SloQuery {
        accuracy_target: o.accuracy_target,
        latency_target_us: o.latency_target_us,
        clock,
        scenario: o.scenario(),
        ..SloQuery::new(&x)
    };
    let r = engine.infer(&q, mode)?;
    let us = |v: f64| v.round() as u64;
    let out = json!({
        "mode": mode.name(),
        "prediction": r.prediction.values,
        "argmax": r.prediction.argmax(),
        "k_used": r.k_used,
        "per_layer_active": r.per_layer_active,
        "latency_us": {
            "hash": us(r.latency.hash_us),
            "select": us(r.latency.select_us),
            "compute": us(r.latency.compute_us),
            "total": us(r.latency.total_us),
        },
        "t0_us": us(r.t0_us),
        "confidence_estimate": r.confidence_estimate,
        "feasible": r.feasible,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(if r.feasible { Outcome::Done } else { Outcome::Infeasible })
}

// --- bench ---

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Workers serving open-loop arrivals.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Run the scenario's co-located load during the bench.
    #[arg(long)]
    interfere: bool,
}

pub fn bench(o: &Opts, a: &BenchArgs) -> Result<Outcome> {
    let engine = engine(o)?;
    let d = data(o)?;
    let dir = o.out_dir()?;
    let records = dir.join("records.csv");
    let duration = o
        .duration_s
        .map(|s| {
            Duration::try_from_secs_f64(s).map_err(|_| UsageError(format!("--duration-s {s} is not a valid duration")))
        })
        .transpose()?;
    let cfg = BenchConfig {
        arrival: o.arrival()?,
        scenario: o.scenario(),
        n: if duration.is_some() { o.n } else { Some(o.n.unwrap_or(d.len())) },
        duration,
        accuracy_target: o.accuracy_target,
        latency_target_us: o.latency_target_us,
        interfere: a.interfere,
        workers: a.workers,
        record_sink: Some(records.clone()),
        seed: o.seed(),
        ..BenchConfig::new(mode(o)?, 0)
    };
    let report = bench::run_bench(&engine, &d, &cfg)?;
    wrote(&records);
    let summary = dir.join("summary.json");
    std::fs::write(&summary, report.summary_json() + "\n")?;
    wrote(&summary);
    println!("{}", report.summary_json());
    Ok(Outcome::Done)
}

// --- sweeps ---

pub fn sweep_k(o: &Opts) -> Result<Outcome> {
    let engine = engine(o)?;
    let rows = bench::sweep_k(&engine, &data(o)?, &o.grid()?, o.seed())?;
    write_rows(&o.out_dir()?.join("sweep_k.csv"), &rows)?;
    Ok(Outcome::Done)
}

#[derive(Args, Debug)]
pub struct SweepAcloArgs {
    /// Comma-separated accuracy targets; 0 is the unconstrained case.
    #[arg(long, default_value = "0,0.5,0.8,0.9,0.95,0.99")]
    targets: String,
}

pub fn sweep_aclo(o: &Opts, a: &SweepAcloArgs) -> Result<Outcome> {
    require(&o.profile, "--profile")?;
    let engine = engine(o)?;
    let targets = parse_list(&a.targets, "--targets")?;
    let rows = bench::sweep_aclo(&engine, &data(o)?, &targets, &o.scenario())?;
    write_rows(&o.out_dir()?.join("sweep_aclo.csv"), &rows)?;
    Ok(Outcome::Done)
}

#[derive(Args, Debug)]
pub struct SweepLcaoArgs {
    /// Comma-separated latency targets in µs [default: 0.25, 0.5, 0.75, 1
    /// and 1.5 times the isolated full-network median].
    #[arg(long)]
    targets: Option<String>,
    /// Comma-separated scenarios [default: every scenario in the profile].
    #[arg(long)]
    scenarios: Option<String>,
}

pub fn sweep_lcao(o: &Opts, a: &SweepLcaoArgs) -> Result<Outcome> {
    require(&o.profile, "--profile")?;
    let engine = engine(o)?;
    let prof = engine.profile().expect("profile loaded");
    let targets = match &a.targets {
        Some(t) => parse_list(t, "--targets")?,
        None => {
            let m = prof.full_median_us("isolated").map_err(|e| UsageError(e.to_string()))?;
            [0.25, 0.5, 0.75, 1.0, 1.5].iter().map(|f| f * m).collect()
        }
    };
    let ids: Vec<String> = match &a.scenarios {
        Some(s) => scenarios(s)?.into_iter().map(|s| s.id).collect(),
        None => prof.scenarios().map(String::from).collect(),
    };
    let rows = bench::sweep_lcao(&engine, &data(o)?, &targets, &ids, o.seed())?;
    write_rows(&o.out_dir()?.join("sweep_lcao.csv"), &rows)?;
    Ok(Outcome::Done)
}
