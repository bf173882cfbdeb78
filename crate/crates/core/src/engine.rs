//! SLO-aware inference: pick `k` once per query, then run the top-k
//! forward pass through the activated layers.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::confidence::{select_k_aclo, CalibrationCurve, KChoice, KGrid};
use crate::error::{Error, Result};
use crate::importance::ActivatorBundle;
use crate::latency::{select_k_lcao, LatencyProfile, QueryClock, Stat};
use crate::model::{predict, ActiveSetPlan, MlpModel, PredictionVector};
use crate::sparse::{forward_at_k, forward_top_k, Selection, SparseForward};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SloMode {
    /// Smallest k certified to meet the accuracy target.
    Aclo,
    /// Largest k whose profiled latency fits the budget.
    Lcao,
    /// Ranked top-k with activators enabled, even at `k = 100`.
    FixedK(f64),
    /// Plain dense forward.
    Full,
    /// Uniformly sampled nodes; a baseline for ranked selection.
    RandomK { k: f64, seed: u64 },
}

impl SloMode {
    pub fn name(&self) -> &'static str {
        match self {
            SloMode::Aclo => "aclo",
            SloMode::Lcao => "lcao",
            SloMode::FixedK(_) => "fixed",
            SloMode::Full => "full",
            SloMode::RandomK { .. } => "random",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SloQuery<'a> {
    pub x: &'a [f32],
    pub accuracy_target: Option<f64>,
    pub latency_target_us: Option<f64>,
    pub clock: QueryClock,
    pub scenario: String,
}

impl<'a> SloQuery<'a> {
    /// A query arriving now, with no targets, in the isolated scenario.
    pub fn new(x: &'a [f32]) -> Self {
        Self {
            x,
            accuracy_target: None,
            latency_target_us: None,
            clock: QueryClock::arrived_now(),
            scenario: "isolated".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct LatencyBreakdown {
    pub hash_us: f64,
    pub select_us: f64,
    pub compute_us: f64,
    /// Wall time from inference start to result, including k selection.
    pub total_us: f64,
}

#[derive(Clone, Debug)]
pub struct InferenceResult {
    pub prediction: PredictionVector,
    pub k_used: f64,
    pub per_layer_active: Vec<usize>,
    pub plan: ActiveSetPlan,
    /// Pre-activations evaluated per layer.
    pub preactivation_evals: Vec<usize>,
    pub latency: LatencyBreakdown,
    pub t0_us: f64,
    /// `ĉ(k_used, x)` when confidence tables were consulted and matched.
    pub confidence_estimate: Option<f64>,
    pub feasible: bool,
}

/// An assembled, immutable engine. Queries may run concurrently.
#[derive(Clone, Debug)]
pub struct Engine {
    model: MlpModel,
    bundle: ActivatorBundle,
    calibration: Option<CalibrationCurve>,
    profile: Option<LatencyProfile>,
    stat: Stat,
}

struct Choice {
    k: f64,
    feasible: bool,
    confidence: Option<f64>,
    t0_us: f64,
}

fn us(d: std::time::Duration) -> f64 {
    d.as_secs_f64() * 1e6
}

impl Engine {
    pub fn new(model: MlpModel, bundle: ActivatorBundle) -> Self {
        Self {
            model,
            bundle,
            calibration: None,
            profile: None,
            stat: Stat::default(),
        }
    }

    pub fn with_calibration(mut self, curve: CalibrationCurve) -> Self {
        self.calibration = Some(curve);
        self
    }

    pub fn with_profile(mut self, profile: LatencyProfile) -> Self {
        self.profile = Some(profile);
        self
    }

    pub fn with_stat(mut self, stat: Stat) -> Self {
        self.stat = stat;
        self
    }

    pub fn model(&self) -> &MlpModel {
        &self.model
    }

    pub fn bundle(&self) -> &ActivatorBundle {
        &self.bundle
    }

    pub fn calibration(&self) -> Option<&CalibrationCurve> {
        self.calibration.as_ref()
    }

    pub fn profile(&self) -> Option<&LatencyProfile> {
        self.profile.as_ref()
    }

    pub fn stat(&self) -> Stat {
        self.stat
    }

    /// The grid the SLO selectors choose from.
    pub fn grid(&self) -> Option<&KGrid> {
        self.bundle
            .confidence
            .as_ref()
            .map(|c| c.grid())
            .or(self.profile.as_ref().map(|p| p.grid()))
    }

    fn choose(&self, q: &SloQuery<'_>, mode: SloMode) -> Result<Choice> {
        let plain = |k: f64| -> Result<Choice> {
            if !(k > 0.0 && k <= 100.0) {
                return Err(Error::input(format!("k = {k} outside (0, 100]")));
            }
            Ok(Choice {
                k,
                feasible: true,
                confidence: None,
                t0_us: q.clock.t0_us(),
            })
        };
        match mode {
            SloMode::Full => plain(100.0),
            SloMode::FixedK(k) | SloMode::RandomK { k, .. } => plain(k),
            SloMode::Aclo => {
                let a_star = q
                    .accuracy_target
                    .ok_or_else(|| Error::Config("ACLO needs an accuracy target".into()))?;
                let curve = self
                    .calibration
                    .as_ref()
                    .ok_or_else(|| Error::Config("ACLO needs a calibration curve".into()))?;
                let tables = self
                    .bundle
                    .confidence
                    .as_ref()
                    .ok_or_else(|| Error::Config("ACLO needs confidence tables".into()))?;
                let est = tables.estimate_all(q.x)?;
                let KChoice { k, feasible } = select_k_aclo(&est, a_star, curve, tables.grid())?;
                let c = est[tables.grid().index_of(k).expect("selected k is on the grid")];
                Ok(Choice {
                    k,
                    feasible,
                    confidence: c.is_finite().then_some(c),
                    t0_us: q.clock.t0_us(),
                })
            }
            SloMode::Lcao => {
                let tau = q
                    .latency_target_us
                    .ok_or_else(|| Error::Config("LCAO needs a latency target".into()))?;
                if tau.is_nan() || tau < 0.0 {
                    return Err(Error::input(format!("latency target {tau} must be non-negative")));
                }
                let profile = self
                    .profile
                    .as_ref()
                    .ok_or_else(|| Error::Config("LCAO needs a latency profile".into()))?;
                let t0_us = q.clock.t0_us();
                let KChoice { k, feasible } = select_k_lcao(tau, t0_us, &q.scenario, profile, self.stat)?;
                Ok(Choice {
                    k,
                    feasible,
                    confidence: None,
                    t0_us,
                })
            }
        }
    }

    /// Selects k without executing the forward pass; `feasible` is false
    /// iff the selector could not meet the SLO.
    pub fn check_feasibility(&self, q: &SloQuery<'_>, mode: SloMode) -> Result<KChoice> {
        self.choose(q, mode).map(|c| KChoice {
            k: c.k,
            feasible: c.feasible,
        })
    }

    pub fn infer(&self, q: &SloQuery<'_>, mode: SloMode) -> Result<InferenceResult> {
        let start = Instant::now();
        let choice = self.choose(q, mode)?;
        let select_done = Instant::now();
        let run: SparseForward = match mode {
            SloMode::FixedK(k) => forward_top_k(&self.model, &self.bundle, q.x, k, Selection::Ranked)?,
            SloMode::RandomK { k, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                forward_top_k(&self.model, &self.bundle, q.x, k, Selection::Random(&mut rng))?
            }
            _ => forward_at_k(&self.model, &self.bundle, q.x, choice.k, Selection::Ranked)?,
        };
        let prediction = predict(&run.trace, self.model.output_semantics())?;
        let total_us = us(start.elapsed());
        Ok(InferenceResult {
            prediction,
            k_used: choice.k,
            per_layer_active: run.plan.per_layer.iter().map(Vec::len).collect(),
            plan: run.plan,
            preactivation_evals: run.preactivation_evals,
            latency: LatencyBreakdown {
                hash_us: us(run.times.hash),
                select_us: us(select_done - start) + us(run.times.select),
                compute_us: us(run.times.compute),
                total_us,
            },
            t0_us: choice.t0_us,
            confidence_estimate: choice.confidence,
            feasible: choice.feasible,
        })
    }

    /// Random-dropout baseline at `k` percent, seeded.
    pub fn infer_random(&self, x: &[f32], k: f64, seed: u64) -> Result<InferenceResult> {
        self.infer(&SloQuery::new(x), SloMode::RandomK { k, seed })
    }
}
