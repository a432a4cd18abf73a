//! The online allocation loop.
//!
//! Each round: observe the public context, draw a source from its EXP3
//! state, read the revealed context, allocate against the current dual
//! multiplier, feed the virtual reward to EXP3, pick the fairness target on
//! the ball around the allocated attribute, and take a dual step.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bandit::{Exp3Bank, Exp3State};
use crate::dual::{default_schedule, DualState, Schedule};
use crate::environment::ProblemInstance;
use crate::error::{Error, Result};
use crate::estimators::{EstimatorMode, MeanEstimator};
use crate::numeric::{dot, norm, scale};
use crate::penalty::{BallRegion, PenaltySpec};
use crate::polytope::Polytope;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// One entry of a finite action table: `f(x) = utility·u`, `a(x) = attribute·a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    /// Value written to the log's `x` column.
    pub value: f64,
    pub utility: f64,
    pub attribute: f64,
}

impl Action {
    /// `[select, skip]`: with lowest-index tie-breaking this matches the
    /// select-on-equality rule of the binary allocation.
    pub fn binary() -> Vec<Action> {
        vec![
            Action { value: 1.0, utility: 1.0, attribute: 1.0 },
            Action { value: 0.0, utility: 0.0, attribute: 0.0 },
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Base,
    FiniteActions { actions: Vec<Action> },
    RatioPenalty,
    /// One EXP3 state per public context with a shared multiplier. `anytime`
    /// switches the states to the doubling trick.
    PublicContexts {
        #[serde(default = "default_true")]
        anytime: bool,
        #[serde(default)]
        cover: Option<ContextCover>,
    },
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    SelectOnEquality,
    SkipOnEquality,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum Policy {
    #[default]
    PrimalDual,
    /// Always buy `source`, allocate iff `E[u | c] > 0`.
    Greedy { source: usize },
}

/// Partial overrides of the step-size schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ScheduleOverride {
    pub eta: Option<f64>,
    pub m: Option<f64>,
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub variant: Variant,
    pub horizon: u64,
    #[serde(default)]
    pub schedule: ScheduleOverride,
    #[serde(default)]
    pub tie_break: TieBreak,
    #[serde(default)]
    pub estimator: EstimatorMode,
    #[serde(default)]
    pub policy: Policy,
    /// Use `η_t = L/(2·diam·√t)` instead of the fixed step.
    #[serde(default)]
    pub anytime_dual: bool,
    /// Keep every `log_stride`-th round in the log (0 keeps none).
    #[serde(default)]
    pub log_stride: u64,
    /// Rounds at which cumulative utility is recorded (the horizon is always added).
    #[serde(default)]
    pub checkpoints: Vec<u64>,
}

impl EngineConfig {
    pub fn new(horizon: u64) -> Self {
        Self {
            variant: Variant::Base,
            horizon,
            schedule: ScheduleOverride::default(),
            tie_break: TieBreak::default(),
            estimator: EstimatorMode::Exact,
            policy: Policy::PrimalDual,
            anytime_dual: false,
            log_stride: 0,
            checkpoints: Vec::new(),
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_policy(mut self, policy: Policy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_estimator(mut self, estimator: EstimatorMode) -> Self {
        self.estimator = estimator;
        self
    }

    pub fn with_log_stride(mut self, stride: u64) -> Self {
        self.log_stride = stride;
        self
    }

    pub fn with_checkpoints(mut self, checkpoints: Vec<u64>) -> Self {
        self.checkpoints = checkpoints;
        self
    }
}

// ---------------------------------------------------------------------------
// Public-context discretisation
// ---------------------------------------------------------------------------

/// Uniform cover of an interval by bins of width `epsilon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextCover {
    pub lo: f64,
    pub hi: f64,
    pub epsilon: f64,
    pub bins: usize,
}

impl ContextCover {
    pub fn bin(&self, z: f64) -> usize {
        let idx = ((z - self.lo) / self.epsilon).floor();
        if idx <= 0.0 {
            0
        } else {
            (idx as usize).min(self.bins - 1)
        }
    }

    pub fn representatives(&self) -> Vec<f64> {
        (0..self.bins)
            .map(|i| (self.lo + (i as f64 + 0.5) * self.epsilon).min(self.hi))
            .collect()
    }
}

/// `⌈(hi − lo)/ε⌉` bins of width `ε` (at least one).
pub fn discretize_contexts(lo: f64, hi: f64, epsilon: f64) -> Result<ContextCover> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::input("epsilon must be positive"));
    }
    if !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::input("invalid context interval"));
    }
    let bins = (((hi - lo) / epsilon).ceil() as usize).max(1);
    Ok(ContextCover { lo, hi, epsilon, bins })
}

// ---------------------------------------------------------------------------
// Per-round primitives
// ---------------------------------------------------------------------------

/// `max(E[u|c] − ⟨λ, E[a|c]⟩, 0) − p`.
pub fn virtual_value(lambda: &[f64], cond_u: f64, cond_a: &[f64], price: f64) -> f64 {
    (cond_u - dot(lambda, cond_a)).max(0.0) - price
}

/// `1` iff `E[u|c] ≥ ⟨λ, E[a|c]⟩`.
pub fn allocate(lambda: &[f64], cond_u: f64, cond_a: &[f64]) -> f64 {
    if cond_u >= dot(lambda, cond_a) {
        1.0
    } else {
        0.0
    }
}

/// Lowest-index maximiser of `utility·E[u|c] − attribute·⟨λ, E[a|c]⟩` and its value.
pub fn best_action(actions: &[Action], lambda: &[f64], cond_u: f64, cond_a: &[f64]) -> (usize, f64) {
    let la = dot(lambda, cond_a);
    let mut best = (0, f64::NEG_INFINITY);
    for (i, a) in actions.iter().enumerate() {
        let v = a.utility * cond_u - a.attribute * la;
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Logs and summaries
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub t: u64,
    pub z: usize,
    pub k: usize,
    pub p: f64,
    pub x: f64,
    /// Realized utility `f_t(x_t)`.
    pub u_x: f64,
    /// Realized allocated attribute `a_t(x_t)`.
    pub a_x: Vec<f64>,
    pub cond_u: f64,
    pub cond_a: Vec<f64>,
    pub delta: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Multiplier used in this round (before its update).
    pub lambda: Vec<f64>,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: u64,
    pub utility: f64,
    pub decision_loss: f64,
    pub alpha_hat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub horizon: u64,
    pub total_utility: f64,
    pub sum_u_x: f64,
    pub total_price: f64,
    pub realized_penalty: f64,
    /// `T·R(Σδ/T)` (ratio variant: `(Σx)·R(Σδ̃x/Σx)`).
    pub delta_penalty: f64,
    pub sum_x: f64,
    pub sum_a_x: Vec<f64>,
    pub sum_delta: Vec<f64>,
    pub source_counts: Vec<u64>,
    pub final_lambda: Vec<f64>,
    pub max_lambda_norm: f64,
    pub lambda_bound: f64,
    pub schedule: Schedule,
    /// Online-gradient regret terms `Σ⟨λ_t, γ_t − δ_t⟩` and `Σ(γ_t − δ_t)`.
    pub ogd_inner: f64,
    pub ogd_sum: Vec<f64>,
    /// `Σ (x*_t − x_t)(E[u|c] − ⟨λ_t, E[a|c]⟩)` against exact-mean decisions.
    pub decision_loss: f64,
    /// Whether every true linear parameter stayed in its confidence set.
    pub coverage_held: Option<bool>,
    pub checkpoints: Vec<Checkpoint>,
}

impl Summary {
    pub fn mean_utility(&self) -> f64 {
        self.total_utility / self.horizon as f64
    }
}

/// Output of one run.
#[derive(Debug, Clone)]
pub struct Episode {
    pub summary: Summary,
    pub rows: Vec<RoundLog>,
}

/// A failed run: the error, the offending row when there is one, and the
/// rows logged so far.
#[derive(Debug)]
pub struct EpisodeFailure {
    pub error: Error,
    pub row: Option<RoundLog>,
    pub rows: Vec<RoundLog>,
}

impl From<Error> for EpisodeFailure {
    fn from(error: Error) -> Self {
        Self { error, row: None, rows: Vec::new() }
    }
}

impl std::fmt::Display for EpisodeFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.error)
    }
}

impl std::error::Error for EpisodeFailure {}

/// Penalty charged on cumulative sums: `t·R(Σ/t)` or, for the ratio
/// variant, `n·R(Σ/n)` with `n = Σx` (zero when nothing was allocated).
pub fn penalty_charge(penalty: &PenaltySpec, sum: &[f64], count: f64) -> f64 {
    if count <= 0.0 {
        return 0.0;
    }
    count * penalty.value(&scale(sum, 1.0 / count))
}

// ---------------------------------------------------------------------------
// RNG streams
// ---------------------------------------------------------------------------

/// Independent user-draw and algorithm streams for one seed, so that two
/// policies run on the same seed see the same users.
pub fn rng_streams(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut users = ChaCha8Rng::seed_from_u64(seed);
    users.set_stream(0);
    let mut algo = ChaCha8Rng::seed_from_u64(seed);
    algo.set_stream(1);
    (users, algo)
}

/// Per-seed stream derived from a master seed and an index (SplitMix64).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

// ---------------------------------------------------------------------------
// Episode
// ---------------------------------------------------------------------------

/// Schedule, fairness domain and initial multiplier for a run.
pub struct Setup {
    pub schedule: Schedule,
    pub penalty: PenaltySpec,
    pub dual: DualState,
}

/// Resolve the schedule and dual initialisation for `config` on `instance`.
pub fn setup(instance: &ProblemInstance, config: &EngineConfig) -> Result<Setup> {
    let ratio = matches!(config.variant, Variant::RatioPenalty);
    let penalty = if ratio {
        instance
            .penalty()
            .with_polytope(Polytope::from_attributes(instance.attributes(), false)?)?
    } else {
        instance.penalty().clone()
    };
    let l = penalty.lipschitz();
    let diam = penalty.diam();
    let prices = instance.prices();
    let mut schedule = default_schedule(l, diam, config.horizon, instance.ubar(), &prices);
    if let Some(eta) = config.schedule.eta {
        let max_p = prices.iter().fold(0.0_f64, |a, p| a.max(p.abs()));
        schedule.eta = eta;
        schedule.m = instance.ubar() + l + max_p + 2.0 * eta * diam;
    }
    let lambda0 = if ratio {
        // Minimum-norm subgradient over the attribute set.
        let mut best: Option<Vec<f64>> = None;
        for a in instance.attributes() {
            let g = penalty.min_norm_subgradient(a)?;
            if best.as_ref().map_or(true, |b| norm(&g) < norm(b)) {
                best = Some(g);
            }
        }
        best.ok_or_else(|| Error::config("instance has no attributes"))?
    } else {
        penalty.subgradient_at_zero()?
    };
    let dual = if config.anytime_dual {
        DualState::anytime(lambda0, l, diam)
    } else {
        DualState::new(lambda0, schedule.eta, l, diam)
    };
    if ratio {
        schedule.m += penalty.max_conjugate_on_ball(dual.bound);
    }
    if let Some(m) = config.schedule.m {
        schedule.m = m;
    }
    schedule.rho = config
        .schedule
        .rho
        .unwrap_or_else(|| crate::dual::exp3_rate(prices.len(), config.horizon as f64, schedule.m));
    Ok(Setup { schedule, penalty, dual })
}

pub fn validate(instance: &ProblemInstance, config: &EngineConfig) -> Result<()> {
    if config.horizon == 0 {
        return Err(Error::input("horizon must be at least 1"));
    }
    if let Policy::Greedy { source } = config.policy {
        if source >= instance.k() {
            return Err(Error::input(format!("greedy source {source} out of range")));
        }
    }
    if let Variant::FiniteActions { actions } = &config.variant {
        if actions.is_empty() {
            return Err(Error::input("action table is empty"));
        }
        if actions.iter().any(|a| !(0.0..=1.0).contains(&a.attribute)) {
            return Err(Error::input("action attribute scale must lie in [0, 1]"));
        }
    }
    Ok(())
}

/// Run one episode with the given seed.
pub fn run_episode(
    instance: &ProblemInstance,
    config: &EngineConfig,
    seed: u64,
) -> std::result::Result<Episode, EpisodeFailure> {
    validate(instance, config)?;
    let Setup { schedule, penalty, mut dual } = setup(instance, config)?;
    let mut estimator = MeanEstimator::build(config.estimator, instance, config.horizon)?;
    let (mut users, mut algo) = rng_streams(seed);
    let k_count = instance.k();
    let d = instance.d();
    let diam = penalty.diam();

    let public = matches!(config.variant, Variant::PublicContexts { .. });
    let template = match &config.variant {
        Variant::PublicContexts { anytime: true, .. } => Exp3State::anytime(k_count, schedule.m),
        _ => Exp3State::new(k_count, schedule.rho, schedule.m),
    };
    let cover = match &config.variant {
        Variant::PublicContexts { cover, .. } => cover.clone(),
        _ => None,
    };
    let mut bank = Exp3Bank::new(template);
    let ratio = matches!(config.variant, Variant::RatioPenalty);
    let linear_models: Option<Vec<_>> = match &estimator {
        MeanEstimator::LearnU(_) => (0..k_count).map(|k| instance.linear_model(k)).collect(),
        _ => None,
    };

    let mut checkpoints: Vec<u64> = config
        .checkpoints
        .iter()
        .copied()
        .filter(|&t| t >= 1 && t <= config.horizon)
        .collect();
    checkpoints.push(config.horizon);
    checkpoints.sort_unstable();
    checkpoints.dedup();
    let mut next_cp = 0;

    let mut rows = Vec::new();
    let mut sum_u_x = 0.0;
    let mut total_price = 0.0;
    let mut sum_x = 0.0;
    let mut sum_a_x = vec![0.0; d];
    let mut sum_delta = vec![0.0; d];
    let mut sum_delta_x = vec![0.0; d];
    let mut source_counts = vec![0u64; k_count];
    let mut max_lambda_norm = norm(&dual.lambda);
    let mut ogd_inner = 0.0;
    let mut ogd_sum = vec![0.0; d];
    let mut decision_loss = 0.0;
    let mut coverage_held = linear_models.as_ref().map(|_| true);
    let mut cps = Vec::with_capacity(checkpoints.len());

    let fail = |error: Error, row: Option<RoundLog>, rows: Vec<RoundLog>| EpisodeFailure { error, row, rows };

    for t in 1..=config.horizon {
        let draw = instance.draw_user(&mut users);
        let lambda = dual.lambda.clone();

        let row = match config.policy {
            Policy::Greedy { source } => {
                let c = &draw.contexts[source];
                let (cu, ca) = match estimator.means(instance, t, draw.z, source, c) {
                    Ok(v) => v,
                    Err(e) => return Err(fail(e, None, rows)),
                };
                let x = if cu > 0.0 { 1.0 } else { 0.0 };
                let p = instance.price(source);
                RoundLog {
                    t,
                    z: draw.z,
                    k: source,
                    p,
                    x,
                    u_x: draw.u * x,
                    a_x: scale(&draw.a, x),
                    delta: scale(&ca, x),
                    gamma: scale(&ca, x),
                    phi: virtual_value(&lambda, cu, &ca, p),
                    cond_u: cu,
                    cond_a: ca,
                    lambda,
                }
            }
            Policy::PrimalDual => {
                let zkey = if public {
                    cover.as_ref().map_or(draw.z, |cv| cv.bin(draw.z as f64))
                } else {
                    0
                };
                let state = bank.state_mut(zkey);
                let (k, pi) = state.sample(&mut algo);
                let c = &draw.contexts[k];
                let p = instance.price(k);
                let (cu, ca) = match estimator.means(instance, t, draw.z, k, c) {
                    Ok(v) => v,
                    Err(e) => return Err(fail(e, None, rows)),
                };
                let la = dot(&lambda, &ca);
                let (x, phi, delta, u_x, a_x, weight) = match &config.variant {
                    Variant::FiniteActions { actions } => {
                        let (i, v) = best_action(actions, &lambda, cu, &ca);
                        let act = actions[i];
                        (
                            act.value,
                            v - p,
                            scale(&ca, act.attribute),
                            act.utility * draw.u,
                            scale(&draw.a, act.attribute),
                            1.0,
                        )
                    }
                    Variant::RatioPenalty => {
                        let rstar = penalty.conj(&lambda);
                        let x = if cu + rstar >= la { 1.0 } else { 0.0 };
                        let phi = (cu - la + rstar).max(0.0) - p;
                        (x, phi, ca.clone(), draw.u * x, scale(&draw.a, x), x)
                    }
                    _ => {
                        let x = match config.tie_break {
                            TieBreak::SelectOnEquality => allocate(&lambda, cu, &ca),
                            TieBreak::SkipOnEquality => (cu > la) as u8 as f64,
                        };
                        let phi = (cu - la).max(0.0) - p;
                        (x, phi, scale(&ca, x), draw.u * x, scale(&draw.a, x), 1.0)
                    }
                };
                let partial = RoundLog {
                    t,
                    z: draw.z,
                    k,
                    p,
                    x,
                    u_x,
                    a_x,
                    cond_u: cu,
                    cond_a: ca.clone(),
                    delta: delta.clone(),
                    gamma: vec![f64::NAN; d],
                    lambda: lambda.clone(),
                    phi,
                };
                if let Err(e) = state.iw_update(k, phi, &pi) {
                    return Err(fail(with_round(e, t), Some(partial), rows));
                }
                let gamma = if weight == 0.0 {
                    // The step is void; the target is irrelevant.
                    delta.clone()
                } else {
                    match penalty.solve_gamma(&lambda, &BallRegion::new(delta.clone(), diam)) {
                        Ok(g) => g,
                        Err(e) => return Err(fail(with_round(e, t), Some(partial), rows)),
                    }
                };
                let mut row = partial;
                row.gamma = gamma;
                if let Err(e) = dual.step(&row.gamma, &delta, weight) {
                    return Err(fail(with_round(e, t), Some(row), rows));
                }
                let gd: Vec<f64> = row.gamma.iter().zip(&delta).map(|(g, dl)| weight * (g - dl)).collect();
                ogd_inner += dot(&lambda, &gd);
                for (s, v) in ogd_sum.iter_mut().zip(&gd) {
                    *s += v;
                }
                max_lambda_norm = max_lambda_norm.max(norm(&dual.lambda));

                if let Some(models) = &linear_models {
                    let true_u = match instance.true_conditional_means(draw.z, k, c) {
                        Ok((u, _)) => u,
                        Err(e) => return Err(fail(e, Some(row), rows)),
                    };
                    let x_star = if true_u >= la { 1.0 } else { 0.0 };
                    decision_loss += (x_star - x) * (true_u - la);
                    if let MeanEstimator::LearnU(st) = &estimator {
                        let beta = st.beta(t);
                        if coverage_held == Some(true)
                            && models.iter().enumerate().any(|(j, m)| !st.contains(j, &m.psi, beta))
                        {
                            coverage_held = Some(false);
                        }
                    }
                }
                if let Err(e) = estimator.observe(instance, k, c, x, draw.u) {
                    return Err(fail(with_round(e, t), Some(row), rows));
                }
                row
            }
        };

        source_counts[row.k] += 1;
        sum_u_x += row.u_x;
        total_price += row.p;
        sum_x += row.x;
        for i in 0..d {
            sum_a_x[i] += row.a_x[i];
            sum_delta[i] += row.delta[i];
            sum_delta_x[i] += row.x * row.delta[i];
        }

        if next_cp < checkpoints.len() && checkpoints[next_cp] == t {
            let charge = if ratio {
                penalty_charge(&penalty, &sum_a_x, sum_x)
            } else {
                penalty_charge(&penalty, &sum_a_x, t as f64)
            };
            cps.push(Checkpoint {
                t,
                utility: sum_u_x - total_price - charge,
                decision_loss,
                alpha_hat: match &estimator {
                    MeanEstimator::LearnA(st) => Some(st.alpha_hat),
                    _ => None,
                },
            });
            next_cp += 1;
        }
        if config.log_stride > 0 && t % config.log_stride == 0 {
            rows.push(row);
        }
    }

    let horizon = config.horizon as f64;
    let (realized_penalty, delta_penalty) = if ratio {
        (
            penalty_charge(&penalty, &sum_a_x, sum_x),
            penalty_charge(&penalty, &sum_delta_x, sum_x),
        )
    } else {
        (
            penalty_charge(&penalty, &sum_a_x, horizon),
            penalty_charge(&penalty, &sum_delta, horizon),
        )
    };
    let summary = Summary {
        horizon: config.horizon,
        total_utility: sum_u_x - total_price - realized_penalty,
        sum_u_x,
        total_price,
        realized_penalty,
        delta_penalty,
        sum_x,
        sum_a_x,
        sum_delta,
        source_counts,
        final_lambda: dual.lambda.clone(),
        max_lambda_norm,
        lambda_bound: dual.bound,
        schedule,
        ogd_inner,
        ogd_sum,
        decision_loss,
        coverage_held,
        checkpoints: cps,
    };
    Ok(Episode { summary, rows })
}

fn with_round(e: Error, t: u64) -> Error {
    match e {
        Error::Invariant { message, .. } => Error::Invariant { round: t, message },
        other => other,
    }
}

/// Recompute `(Σ u_x, Σ p, penalty, total utility)` from a complete log.
pub fn replay_utility(rows: &[RoundLog], penalty: &PenaltySpec, ratio: bool) -> (f64, f64, f64, f64) {
    let d = penalty.dim();
    let mut sum_u_x = 0.0;
    let mut total_price = 0.0;
    let mut sum_x = 0.0;
    let mut sum_a_x = vec![0.0; d];
    for r in rows {
        sum_u_x += r.u_x;
        total_price += r.p;
        sum_x += r.x;
        for i in 0..d {
            sum_a_x[i] += r.a_x[i];
        }
    }
    let count = if ratio { sum_x } else { rows.len() as f64 };
    let charge = penalty_charge(penalty, &sum_a_x, count);
    (sum_u_x, total_price, charge, sum_u_x - total_price - charge)
}
