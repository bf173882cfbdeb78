//! Acceptance criteria. Each test prints one `[PASS]` / `[FAIL]` line with
//! its measurements and runtime. Tests hold a shared lock so timing-based
//! criteria never overlap with other work in this binary.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use slonn_core::bench::{sweep_k, sweep_lcao};
use slonn_core::confidence::{
    build_calibration, select_k_aclo, train_confidence_tables, CalibrationCurve, ConfidenceConfig,
    Correctness, DistanceKind, KGrid,
};
use slonn_core::engine::{Engine, SloMode, SloQuery};
use slonn_core::importance::{
    activator_to_bytes, argsort_desc, train_activator, ActivatorBundle, ActivatorConfig,
    HashChoice,
};
use slonn_core::latency::{
    profile, select_k_lcao, LatencyProfile, LatencyStats, ProfileConfig, Scenario, Stat,
};
use slonn_core::lsh::HashFamilySpec;
use slonn_core::model::{
    fit_class_mean_readout, forward_dense, forward_masked, gen_synthetic_dataset,
    gen_synthetic_model, model_to_bytes, Activation, ActiveSetPlan, LabeledDataset, MlpModel,
    SyntheticDataSpec,
};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

/// Prints the verdict line straight to file descriptor 1 so it shows up
/// even while the test harness captures output.
fn verdict(name: &str, pass: bool, detail: &str, elapsed: Duration, budget: Duration) -> bool {
    let in_time = elapsed <= budget;
    let ok = pass && in_time;
    let line = format!(
        "\n[{}] {name}: {detail}; runtime {:.2}s (budget {}s{})\n",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs(),
        if in_time { "" } else { ", exceeded" },
    );
    use std::os::fd::FromRawFd;
    // SAFETY: fd 1 stays open for the life of the process; ManuallyDrop
    // keeps the File from closing it.
    let mut out = std::mem::ManuallyDrop::new(unsafe { std::fs::File::from_raw_fd(1) });
    out.write_all(line.as_bytes()).unwrap();
    ok
}

// --- Shared synthetic task: dim 64, 8 classes, 10k train / 2k held-out /
// 2k test, a 64-128-128-8 model with a class-mean readout. ---

const N_TRAIN: usize = 10_000;
const N_HELD: usize = 2_000;
const N_TEST: usize = 2_000;

struct Task {
    model: MlpModel,
    train: LabeledDataset,
    held: LabeledDataset,
    test: LabeledDataset,
}

fn task(seed: u64) -> Task {
    let spec = SyntheticDataSpec {
        n: N_TRAIN + N_HELD + N_TEST,
        dim: 64,
        n_clusters: 16,
        n_classes: 8,
        noise_sigma: 0.05,
    };
    let all = gen_synthetic_dataset(seed, &spec).unwrap();
    let train = all.slice(0..N_TRAIN);
    let held = all.slice(N_TRAIN..N_TRAIN + N_HELD);
    let test = all.slice(N_TRAIN + N_HELD..spec.n);
    let model = gen_synthetic_model(seed, &[64, 128, 128, 8]).unwrap();
    let model = fit_class_mean_readout(&model, &train).unwrap();
    Task {
        model,
        train,
        held,
        test,
    }
}

fn node_tables(t: &Task, seed: u64) -> ActivatorBundle {
    let cfg = ActivatorConfig {
        seed,
        ..Default::default()
    };
    train_activator(&t.model, t.train.features(), &cfg).unwrap()
}

fn full_activator(t: &Task, seed: u64) -> (ActivatorBundle, CalibrationCurve) {
    let mut bundle = node_tables(t, seed);
    let cfg = ConfidenceConfig {
        k: bundle.k,
        l: bundle.l,
        seed,
        hash: HashChoice::FreeHash,
        distance: DistanceKind::CrossEntropy,
    };
    let tables =
        train_confidence_tables(&t.model, &bundle, t.train.features(), &KGrid::default(), &cfg)
            .unwrap();
    let curve = build_calibration(&t.model, &bundle, &tables, &t.held, Correctness::Labels).unwrap();
    bundle.confidence = Some(tables);
    (bundle, curve)
}

// --- Masked-forward oracle ---

/// Dense pass over zero-filled inputs with inactive outputs forced to zero.
fn zero_mask_oracle(model: &MlpModel, x: &[f32], plan: &ActiveSetPlan) -> Vec<Vec<f32>> {
    let mut input: Vec<f32> = x.to_vec();
    let mut out = Vec::new();
    for (layer, active) in model.layers().iter().zip(&plan.per_layer) {
        let mut mask = vec![false; layer.out_dim()];
        for &j in active {
            mask[j as usize] = true;
        }
        let act: Vec<f32> = (0..layer.out_dim())
            .map(|j| {
                if !mask[j] {
                    return 0.0;
                }
                let mut z = layer.bias()[j] as f64;
                for (w, v) in layer.row(j).iter().zip(&input) {
                    z += *w as f64 * *v as f64;
                }
                match layer.activation() {
                    Activation::Relu => z.max(0.0) as f32,
                    Activation::Linear => z as f32,
                }
            })
            .collect();
        out.push(act.clone());
        input = act;
    }
    out
}

#[test]
fn masked_forward_oracle() {
    let _g = serial();
    let start = Instant::now();
    let mut worst = 0f64;
    for case in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(case);
        let n_layers = rng.random_range(1..=4);
        let mut dims = vec![rng.random_range(1..=32)];
        for _ in 0..n_layers {
            dims.push(rng.random_range(1..=48));
        }
        let model = gen_synthetic_model(case, &dims).unwrap();
        let x: Vec<f32> = (0..dims[0]).map(|_| rng.random_range(-2.0..2.0)).collect();
        let p: f64 = rng.random_range(0.0..=1.0);
        let per_layer = dims[1..]
            .iter()
            .map(|&w| (0..w as u32).filter(|_| rng.random_bool(p)).collect())
            .collect();
        let plan = ActiveSetPlan {
            per_layer,
            k_percent: rng.random_range(0.5..=100.0),
        };
        let got = forward_masked(&model, &x, &plan).unwrap();
        let want = zero_mask_oracle(&model, &x, &plan);
        for (a, b) in got.activations.iter().flatten().zip(want.iter().flatten()) {
            worst = worst.max((*a as f64 - *b as f64).abs());
        }
    }
    let ok = verdict(
        "masked-forward oracle",
        worst <= 1e-6,
        &format!("200 triples, max |diff| = {worst:.3e} (tol 1e-6)"),
        start.elapsed(),
        Duration::from_secs(10),
    );
    assert!(ok);
}

// --- Node Importance training oracle ---

#[test]
fn bucket_list_oracle() {
    let _g = serial();
    let start = Instant::now();
    let mut mismatches = 0usize;
    let mut buckets_checked = 0usize;
    for build in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + build);
        let in_dim = rng.random_range(4..=32);
        let w1 = rng.random_range(8..=256);
        let w2 = rng.random_range(8..=256);
        let l = [1, 2, 4][build as usize % 3];
        let k = rng.random_range(1..=8);
        let hash = if build % 2 == 0 {
            HashChoice::FreeHash
        } else {
            HashChoice::SignedRandomProjection
        };
        let model = gen_synthetic_model(build, &[in_dim, w1, w2, 4]).unwrap();
        let data = gen_synthetic_dataset(
            build,
            &SyntheticDataSpec {
                n: 2000,
                dim: in_dim,
                n_clusters: 8,
                n_classes: 4,
                noise_sigma: 0.1,
            },
        )
        .unwrap();
        let cfg = ActivatorConfig {
            k,
            l,
            seed: build,
            hash,
            layers: Some(vec![0, 1]),
            max_list_fraction: 1.0,
            keep_zero_scores: true,
            ..Default::default()
        };
        let bundle = train_activator(&model, data.features(), &cfg).unwrap();
        let traces: Vec<Vec<Vec<f32>>> = data
            .rows()
            .map(|x| forward_dense(&model, x).unwrap().activations)
            .collect();
        for table in bundle.layers() {
            let li = table.layer_index();
            let width = model.layer(li).out_dim();
            // Brute force: group inputs by key, sum activations, argsort.
            let mut groups: Vec<std::collections::BTreeMap<u64, Vec<f64>>> =
                vec![Default::default(); l];
            let mut total = vec![0f64; width];
            for (x, tr) in data.rows().zip(&traces) {
                let input: &[f32] = if li == 0 { x } else { &tr[li - 1] };
                let keys = table.hasher().compute_keys(input, None).unwrap().keys;
                for (b, key) in keys.iter().enumerate() {
                    let s = groups[b].entry(key.0).or_insert_with(|| vec![0.0; width]);
                    for (acc, a) in s.iter_mut().zip(&tr[li]) {
                        *acc += *a as f64;
                    }
                }
                for (acc, a) in total.iter_mut().zip(&tr[li]) {
                    *acc += *a as f64;
                }
            }
            if table.global_rank() != argsort_desc(&total).as_slice() {
                mismatches += 1;
            }
            for (b, group) in groups.iter().enumerate() {
                let stored = &table.tables().tables()[b];
                if stored.len() != group.len() {
                    mismatches += 1;
                }
                for (key, sums) in group {
                    buckets_checked += 1;
                    let want = argsort_desc(sums);
                    match stored.get(&slonn_core::lsh::BucketKey(*key)) {
                        Some(list) if *list == want => {}
                        _ => mismatches += 1,
                    }
                }
            }
        }
    }
    let ok = verdict(
        "bucket-list oracle",
        mismatches == 0,
        &format!("20 builds, {buckets_checked} buckets compared, {mismatches} mismatches"),
        start.elapsed(),
        Duration::from_secs(30),
    );
    assert!(ok);
}

// --- Selector oracles ---

fn random_grid(rng: &mut ChaCha8Rng) -> KGrid {
    let mut v: Vec<f64> = KGrid::default()
        .values()
        .iter()
        .copied()
        .filter(|&k| k == 100.0 || rng.random_bool(0.6))
        .collect();
    v.dedup();
    KGrid::new(v).unwrap()
}

#[test]
fn selector_oracles() {
    let _g = serial();
    let start = Instant::now();
    let mut aclo_bad = 0;
    let mut lcao_bad = 0;
    for case in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(case);
        // ACLO: random calibration pairs, estimates drawn near observed values.
        let grid = random_grid(&mut rng);
        let n_pairs = rng.random_range(1..40);
        let pairs: Vec<(f64, bool)> = (0..n_pairs)
            .map(|_| {
                let c = -(rng.random_range(0..12) as f64) / 4.0;
                (c, rng.random_bool(0.7))
            })
            .collect();
        let curve = CalibrationCurve::from_pairs(&pairs).unwrap();
        let est: Vec<f64> = (0..grid.len())
            .map(|_| {
                if rng.random_bool(0.1) {
                    f64::NEG_INFINITY
                } else {
                    -(rng.random_range(0..14) as f64) / 4.0
                }
            })
            .collect();
        let mut targets: Vec<f64> = (0..5).map(|_| rng.random_range(0.01..=1.0)).collect();
        targets.sort_by(f64::total_cmp);
        let mut prev_k = 0.0;
        for &a in &targets {
            let got = select_k_aclo(&est, a, &curve, &grid).unwrap();
            let t_star = curve
                .rows()
                .iter()
                .filter(|r| r.accuracy >= a)
                .map(|r| r.threshold)
                .fold(f64::INFINITY, f64::min);
            let (want_k, want_feasible) = if t_star.is_infinite() {
                (100.0, false)
            } else {
                let mut k = 100.0;
                for (g, &kk) in grid.values().iter().enumerate().rev() {
                    if est[g] >= t_star {
                        k = kk;
                    }
                }
                (k, true)
            };
            if got.k != want_k || got.feasible != want_feasible || got.k < prev_k {
                aclo_bad += 1;
            }
            prev_k = got.k;
        }

        // LCAO: random (not necessarily monotone) profile.
        let grid = random_grid(&mut rng);
        let stats: Vec<LatencyStats> = (0..grid.len())
            .map(|_| {
                let m = rng.random_range(10.0..5000.0);
                LatencyStats {
                    n: 100,
                    median_us: m,
                    p95_us: m * rng.random_range(1.0..2.0),
                    mean_us: m,
                }
            })
            .collect();
        let mut entries = std::collections::BTreeMap::new();
        entries.insert("isolated".to_string(), stats.clone());
        let prof = LatencyProfile::new(grid.clone(), entries).unwrap();
        let stat = if rng.random_bool(0.5) { Stat::P95 } else { Stat::Median };
        let brute = |tau: f64, t0: f64| {
            let mut best = None;
            for (g, &k) in grid.values().iter().enumerate() {
                if t0 + stats[g].get(stat) <= tau {
                    best = Some(k);
                }
            }
            best.map_or((grid.min(), false), |k| (k, true))
        };
        let t0 = rng.random_range(0.0..1000.0);
        let mut taus: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..12000.0)).collect();
        taus.sort_by(f64::total_cmp);
        let mut prev_k = 0.0;
        for &tau in &taus {
            let got = select_k_lcao(tau, t0, "isolated", &prof, stat).unwrap();
            if (got.k, got.feasible) != brute(tau, t0) || got.k < prev_k {
                lcao_bad += 1;
            }
            prev_k = got.k;
        }
        let tau = rng.random_range(0.0..12000.0);
        let mut t0s: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..3000.0)).collect();
        t0s.sort_by(f64::total_cmp);
        let mut prev_k = f64::INFINITY;
        for &t0 in &t0s {
            let got = select_k_lcao(tau, t0, "isolated", &prof, stat).unwrap();
            if (got.k, got.feasible) != brute(tau, t0) || got.k > prev_k {
                lcao_bad += 1;
            }
            prev_k = got.k;
        }
    }
    let ok = verdict(
        "selector oracles",
        aclo_bad == 0 && lcao_bad == 0,
        &format!(
            "1000 ACLO + 1000 LCAO instances; violations: aclo {aclo_bad}, lcao {lcao_bad}"
        ),
        start.elapsed(),
        Duration::from_secs(5),
    );
    assert!(ok);
}

// --- LSH statistics ---

fn unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn srp_collision_rate(theta: f64, pairs: usize) -> f64 {
    let d = 32;
    let k = 8;
    let model = gen_synthetic_model(0, &[d, 4, 2]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(theta.to_bits());
    let mut same = 0usize;
    for p in 0..pairs {
        let u = unit(&mut rng, d);
        let mut v = unit(&mut rng, d);
        let dot: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
        v.iter_mut().zip(&u).for_each(|(vi, ui)| *vi -= dot * ui);
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let a: Vec<f32> = u.iter().map(|&x| x as f32).collect();
        let b: Vec<f32> = u
            .iter()
            .zip(&v)
            .map(|(ui, vi)| (theta.cos() * ui + theta.sin() * vi / n) as f32)
            .collect();
        let hasher = HashFamilySpec::srp(k, 1, 0, p as u64).unwrap().bind(&model).unwrap();
        let ka = hasher.compute_keys(&a, None).unwrap().keys[0].0;
        let kb = hasher.compute_keys(&b, None).unwrap().keys[0].0;
        same += k - (ka ^ kb).count_ones() as usize;
    }
    same as f64 / (pairs * k) as f64
}

fn freehash_intra_inter(seed: u64) -> (f64, f64) {
    let data = gen_synthetic_dataset(
        seed,
        &SyntheticDataSpec {
            n: 4000,
            dim: 64,
            n_clusters: 8,
            n_classes: 8,
            noise_sigma: 0.05,
        },
    )
    .unwrap();
    let model = gen_synthetic_model(seed, &[64, 128, 128, 8]).unwrap();
    let cfg = ActivatorConfig {
        seed,
        layers: Some(vec![0]),
        ..Default::default()
    };
    let bundle = train_activator(&model, data.features(), &cfg).unwrap();
    let hasher = bundle.layers()[0].hasher();
    let keys: Vec<Vec<u64>> = data
        .rows()
        .map(|x| hasher.compute_keys(x, None).unwrap().keys.iter().map(|k| k.0).collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut intra, mut n_intra, mut inter, mut n_inter) = (0usize, 0usize, 0usize, 0usize);
    while n_intra < 5000 || n_inter < 5000 {
        let i = rng.random_range(0..data.len());
        let j = rng.random_range(0..data.len());
        if i == j {
            continue;
        }
        let hits = keys[i].iter().zip(&keys[j]).filter(|(a, b)| a == b).count();
        if data.label(i) == data.label(j) {
            if n_intra < 5000 {
                intra += hits;
                n_intra += 1;
            }
        } else if n_inter < 5000 {
            inter += hits;
            n_inter += 1;
        }
    }
    let per = (5000 * keys[0].len()) as f64;
    (intra as f64 / per, inter as f64 / per)
}

#[test]
fn lsh_statistics() {
    let _g = serial();
    let start = Instant::now();
    let mut ok = true;
    let mut detail = Vec::new();
    for theta in [0.0, PI / 4.0, PI / 2.0] {
        let rate = srp_collision_rate(theta, 10_000);
        let expected = 1.0 - theta / PI;
        ok &= (rate - expected).abs() <= 0.03;
        detail.push(format!("SRP θ={theta:.3}: {rate:.4} vs {expected:.4}"));
    }
    let mut fh = Vec::new();
    for seed in 0..5 {
        let (intra, inter) = freehash_intra_inter(seed);
        ok &= intra > inter;
        fh.push(format!("{intra:.3}>{inter:.3}"));
    }
    detail.push(format!("FreeHash intra>inter per seed [{}]", fh.join(", ")));
    let ok = verdict("LSH statistics", ok, &detail.join("; "), start.elapsed(), Duration::from_secs(30));
    assert!(ok);
}

// --- Ranked versus random dropout ---

#[test]
fn ranked_beats_random_dropout() {
    let _g = serial();
    let start = Instant::now();
    let grid = KGrid::default();
    let mut ranked = vec![0.0; grid.len()];
    let mut random = vec![0.0; grid.len()];
    let mut exact_at_full = true;
    let seeds = 5;
    for seed in 0..seeds {
        let t = task(seed);
        let engine = Engine::new(t.model.clone(), node_tables(&t, seed));
        let rows = sweep_k(&engine, &t.test, &grid, seed).unwrap();
        for (g, r) in rows.iter().enumerate() {
            ranked[g] += r.acc_ranked / seeds as f64;
            random[g] += r.acc_random / seeds as f64;
        }
        let last = rows.last().unwrap();
        exact_at_full &= last.acc_ranked == last.acc_full;
    }
    let mut ok = exact_at_full;
    let mut detail = Vec::new();
    for (g, &k) in grid.values().iter().enumerate() {
        if k <= 10.0 {
            ok &= ranked[g] >= random[g];
            detail.push(format!("k={k}: {:.3} vs {:.3}", ranked[g], random[g]));
        }
    }
    detail.push(format!("acc(k=100) == full: {exact_at_full}"));
    let ok = verdict(
        "ranked >= random top-k (5 seeds)",
        ok,
        &detail.join(", "),
        start.elapsed(),
        Duration::from_secs(300),
    );
    assert!(ok);
}

// --- LCAO under co-location ---

#[test]
fn lcao_under_interference() {
    let _g = serial();
    let start = Instant::now();
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let t = task(0);
    let (bundle, curve) = full_activator(&t, 0);
    let scenarios = [Scenario::isolated(), Scenario::colocated(1)];
    let prof = profile(
        &t.model,
        &bundle,
        &KGrid::default(),
        &scenarios,
        t.test.features(),
        // A longer profile samples more scheduler slices under interference.
        &ProfileConfig {
            reps: 500,
            ..ProfileConfig::default()
        },
    )
    .unwrap();
    let tau = prof.full_median_us("isolated").unwrap();
    let colo_full = *prof.stats("colo1").unwrap().last().unwrap();
    let engine = Engine::new(t.model.clone(), bundle)
        .with_calibration(curve)
        .with_profile(prof);
    let full_acc = {
        let correct = (0..t.test.len())
            .filter(|&i| {
                let r = engine.infer(&SloQuery::new(t.test.row(i)), SloMode::Full).unwrap();
                r.prediction.argmax() == Some(t.test.label(i) as usize)
            })
            .count();
        correct as f64 / t.test.len() as f64
    };
    let rows = sweep_lcao(&engine, &t.test, &[tau], &["colo1".to_string()], 0).unwrap();
    let r = &rows[0];
    let pass = r.violation_rate <= 0.05 && r.acc_achieved >= full_acc - 0.05;
    let ok = verdict(
        "LCAO with 1 interferer at tau = isolated full median",
        pass,
        &format!(
            "tau {tau:.1}us, violation rate {:.4} (<= 0.05), accuracy {:.4} vs full {full_acc:.4} (within 0.05), mean k {:.1}, colo1 full-network median/p95 {:.1}/{:.1}us, {cores} core(s) available (criterion assumes >= 2)",
            r.violation_rate, r.acc_achieved, r.mean_k, colo_full.median_us, colo_full.p95_us
        ),
        start.elapsed(),
        Duration::from_secs(300),
    );
    assert!(ok);
}

// --- Full-pass overhead ---

#[test]
fn full_pass_overhead() {
    let _g = serial();
    let start = Instant::now();
    let model = gen_synthetic_model(7, &[784, 512, 512, 10]).unwrap();
    let data = gen_synthetic_dataset(
        7,
        &SyntheticDataSpec {
            n: 2000,
            dim: 784,
            n_clusters: 20,
            n_classes: 10,
            noise_sigma: 0.02,
        },
    )
    .unwrap();
    let bundle = train_activator(&model, data.features(), &ActivatorConfig::default()).unwrap();
    let engine = Engine::new(model, bundle);
    let reps = 400;
    let mut dense = Vec::with_capacity(reps);
    let mut with_activators = Vec::with_capacity(reps);
    for i in 0..reps + 20 {
        let q = SloQuery::new(data.row(i % data.len()));
        let a = engine.infer(&q, SloMode::Full).unwrap().latency.total_us;
        let b = engine.infer(&q, SloMode::FixedK(100.0)).unwrap().latency.total_us;
        if i >= 20 {
            dense.push(a);
            with_activators.push(b);
        }
    }
    let d = LatencyStats::from_samples(&dense).unwrap().median_us;
    let f = LatencyStats::from_samples(&with_activators).unwrap().median_us;
    let ratio = f / d;
    let ok = verdict(
        "full-pass overhead (784-512-512-10)",
        ratio <= 1.5,
        &format!("activators-on k=100 median {f:.1}us / dense median {d:.1}us = {ratio:.3} (<= 1.5)"),
        start.elapsed(),
        Duration::from_secs(60),
    );
    assert!(ok);
}

// --- Storage ---

#[test]
fn activator_storage() {
    let _g = serial();
    let start = Instant::now();
    let t = task(0);
    let (bundle, _) = full_activator(&t, 0);
    let act = activator_to_bytes(&bundle).unwrap().len();
    let model = model_to_bytes(&t.model).len();
    let node_only = {
        let mut b = bundle.clone();
        b.confidence = None;
        activator_to_bytes(&b).unwrap().len()
    };
    let ratio = act as f64 / model as f64;
    let setup = start.elapsed();
    let ok = verdict(
        "activator storage < 10% of model (64-128-128-8)",
        ratio < 0.10,
        &format!(
            "activator {act} B (node-importance part {node_only} B) / model {model} B = {:.1}%",
            100.0 * ratio
        ),
        setup,
        Duration::from_secs(60),
    );
    assert!(ok);
}
