//! Acceptance checks A1–A9.
//!
//! Each check runs its own experiments at full scale and returns a
//! [`Report`]. The [`Suite`] keeps the multiplier audit of the A1/A2 runs so
//! that A3 can inspect them without re-running.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bandit::Exp3State;
use crate::dual::{default_schedule, DualState, BOUND_SLACK};
use crate::engine::{derive_seed, run_episode, Action, EngineConfig, Episode, Policy, Summary, Variant};
use crate::environment::{NoiseModel, ProblemInstance, TableModel};
use crate::error::Result;
use crate::estimators::EstimatorMode;
use crate::numeric::{dist, dot, norm};
use crate::oracle::{self, Oracle};
use crate::parallel::{self, ExecMode};
use crate::penalty::{BallRegion, CustomPenalty, PenaltyKind, PenaltySpec};
use crate::polytope::Polytope;

pub const CRITERIA: [&str; 9] = ["A1", "A2", "A3", "A4", "A5", "A6", "A7", "A8", "A9"];

/// Frozen constant of the `α̂` envelope `κ·√(log T / (c·t))`, calibrated by
/// [`calibrate_alpha_constant`] on master seed [`ALPHA_CALIBRATION_SEED`].
pub const ALPHA_ENVELOPE_C: f64 = 2.79;
pub const ALPHA_CALIBRATION_SEED: u64 = 0xA8C0;

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub id: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{} {status}  {}", self.id, self.detail)
    }
}

fn report(id: &str, checks: Vec<(bool, String)>) -> Report {
    Report {
        id: id.into(),
        passed: checks.iter().all(|c| c.0),
        detail: checks
            .into_iter()
            .map(|(ok, s)| if ok { s } else { format!("[failed] {s}") })
            .collect::<Vec<_>>()
            .join("; "),
    }
}

fn errored(id: &str, e: impl fmt::Display) -> Report {
    Report { id: id.into(), passed: false, detail: format!("error: {e}") }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_err(v: &[f64]) -> f64 {
    let m = mean(v);
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0).max(1.0);
    (var / v.len() as f64).sqrt()
}

/// Run `seeds` episodes with seeds derived from `master`.
pub fn run_many(
    instance: &ProblemInstance,
    config: &EngineConfig,
    master: u64,
    seeds: u64,
    mode: ExecMode,
) -> Result<Vec<Episode>> {
    let idx: Vec<u64> = (0..seeds).collect();
    parallel::map(mode, &idx, |&i| run_episode(instance, config, derive_seed(master, i)).map_err(|f| f.error))
        .into_iter()
        .collect()
}

fn summaries(instance: &ProblemInstance, config: &EngineConfig, master: u64, seeds: u64, mode: ExecMode) -> Result<Vec<Summary>> {
    Ok(run_many(instance, config, master, seeds, mode)?.into_iter().map(|e| e.summary).collect())
}

/// `R = 0` table with three free-to-observe-or-paid sources: perfect
/// information at price 0, no information, perfect information at price 0.3.
pub fn bandit_reduction_instance() -> Result<ProblemInstance> {
    let text = "dim 1\nprices 0 0 0.3\n\
                0.25 0  1  1  1 0  1\n\
                0.25 0  1 -1  1 0  1\n\
                0.25 0 -1  1 -1 0 -1\n\
                0.25 0 -1 -1 -1 0 -1\n";
    ProblemInstance::table(TableModel::parse(text)?, PenaltyKind::Zero)
}

/// Noisy-attribute instance used for the `α̂` envelope.
pub fn alpha_instance() -> Result<ProblemInstance> {
    ProblemInstance::noisy_attribute(
        0.7,
        0.2,
        vec![NoiseModel::Gaussian { sigma: 1.0 }, NoiseModel::Laplace { scale: 0.5 }],
        vec![0.0, 0.05],
        PenaltyKind::ScaledAbs(1.0),
    )
}

/// Log-spaced checkpoints from `⌈ln T⌉` to `T`.
pub fn alpha_checkpoints(horizon: u64, count: usize) -> Vec<u64> {
    let lo = (horizon as f64).ln().ceil().max(1.0);
    let hi = horizon as f64;
    let mut v: Vec<u64> = (0..count)
        .map(|i| (lo * (hi / lo).powf(i as f64 / (count - 1) as f64)).round() as u64)
        .collect();
    v.dedup();
    v
}

/// Per-checkpoint ratios `κ² log T / (t·(α̂_t − α)²)`: the envelope with
/// constant `c` holds at a checkpoint iff its ratio is at least `c`.
fn alpha_ratios(horizon: u64, runs: u64, master: u64, mode: ExecMode) -> Result<Vec<f64>> {
    let inst = alpha_instance()?;
    let alpha = inst.attribute_alpha().expect("noisy instance");
    let kappa = crate::estimators::AlphaLearnerState::new(
        (0..inst.k()).map(|k| inst.attribute_noise(k).expect("noise")).collect(),
    )
    .kappa;
    let cfg = EngineConfig::new(horizon)
        .with_estimator(EstimatorMode::LearnA)
        .with_checkpoints(alpha_checkpoints(horizon, 30));
    let log_t = (horizon as f64).ln();
    let mut out = Vec::new();
    for s in summaries(&inst, &cfg, master, runs, mode)? {
        for cp in &s.checkpoints {
            let dev = (cp.alpha_hat.expect("alpha") - alpha).abs();
            out.push(if dev == 0.0 { f64::INFINITY } else { kappa * kappa * log_t / (cp.t as f64 * dev * dev) });
        }
    }
    Ok(out)
}

/// Largest `c` for which every calibration checkpoint satisfies the
/// envelope, halved for margin.
pub fn calibrate_alpha_constant(horizon: u64, runs: u64, mode: ExecMode) -> Result<f64> {
    let ratios = alpha_ratios(horizon, runs, ALPHA_CALIBRATION_SEED, mode)?;
    Ok(0.5 * ratios.into_iter().fold(f64::INFINITY, f64::min))
}

/// Shared state across checks.
pub struct Suite {
    mode: ExecMode,
    /// `(max ‖λ_t‖, bound)` per audited run.
    lambda_audit: Vec<(f64, f64)>,
    a1_done: bool,
    a2_done: bool,
}

impl Suite {
    pub fn new(mode: ExecMode) -> Self {
        Self { mode, lambda_audit: Vec::new(), a1_done: false, a2_done: false }
    }

    pub fn run(&mut self, id: &str) -> Report {
        match id {
            "A1" => self.a1(),
            "A2" => self.a2(),
            "A3" => self.a3(),
            "A4" => self.a4(),
            "A5" => self.a5(),
            "A6" => self.a6(),
            "A7" => self.a7(),
            "A8" => self.a8(),
            "A9" => self.a9(),
            other => errored(other, "unknown criterion"),
        }
    }

    pub fn run_all(&mut self) -> Vec<Report> {
        CRITERIA.iter().map(|id| self.run(id)).collect()
    }

    fn audit(&mut self, runs: &[Summary]) {
        self.lambda_audit
            .extend(runs.iter().map(|s| (s.max_lambda_norm, s.lambda_bound)));
    }

    /// Randomization gap on the symmetric instance.
    pub fn a1(&mut self) -> Report {
        self.a1_inner().unwrap_or_else(|e| errored("A1", e))
    }

    fn a1_inner(&mut self) -> Result<Report> {
        let start = Instant::now();
        let inst = ProblemInstance::symmetric_two_source();
        let o = Oracle::new(&inst);
        let opt = o.solve()?;
        let st = o.solve_static()?;
        let t = 100_000;
        let seeds = 20;
        let cfg = EngineConfig::new(t);
        let alg = summaries(&inst, &cfg, 0xA1, seeds, self.mode)?;
        let fixed_inst = inst.restrict_sources(&[st.choice[0]])?;
        let fixed = summaries(&fixed_inst, &cfg, 0xA1, seeds, self.mode)?;
        let greedy = summaries(&inst, &cfg.clone().with_policy(Policy::Greedy { source: 0 }), 0xA1, seeds, self.mode)?;
        let secs = start.elapsed().as_secs_f64();
        self.audit(&alg);
        self.audit(&fixed);
        self.a1_done = true;
        let rate = |v: &[Summary]| mean(&v.iter().map(Summary::mean_utility).collect::<Vec<_>>());
        let (ra, rf) = (rate(&alg), rate(&fixed));
        let g_total = mean(&greedy.iter().map(|s| s.total_utility).collect::<Vec<_>>());
        Ok(report(
            "A1",
            vec![
                ((opt.rate - 0.25).abs() <= 1e-4, format!("opt rate {:.6}", opt.rate)),
                (st.rate.abs() <= 1e-4, format!("static rate {:.6}", st.rate)),
                ((0.20..=0.25).contains(&ra), format!("alg {ra:.4}/round")),
                ((-0.05..=0.05).contains(&rf), format!("best-fixed {rf:.4}/round")),
                (g_total < 0.0, format!("greedy total {g_total:.1}")),
                (secs <= 120.0, format!("{secs:.1}s")),
            ],
        ))
    }

    /// Regret envelope at three horizons.
    pub fn a2(&mut self) -> Report {
        self.a2_inner().unwrap_or_else(|e| errored("A2", e))
    }

    fn a2_inner(&mut self) -> Result<Report> {
        let inst = ProblemInstance::symmetric_two_source();
        let opt = Oracle::new(&inst).solve()?.rate;
        let pen = inst.penalty();
        let (l, diam) = (pen.lipschitz(), pen.diam());
        let k = inst.k() as f64;
        let d = inst.d() as f64;
        let max_p = inst.prices().iter().fold(0.0f64, |a, p| a.max(p.abs()));
        let kk = (k * k.ln()).sqrt();
        let mut checks = Vec::new();
        let mut per_round = Vec::new();
        for &t in &[1_000u64, 10_000, 100_000] {
            let runs = summaries(&inst, &EngineConfig::new(t), 0xA2 + t, 50, self.mode)?;
            self.audit(&runs);
            let alg = mean(&runs.iter().map(|s| s.total_utility).collect::<Vec<_>>());
            let regret = t as f64 * opt - alg;
            let tf = t as f64;
            let bound = 2.0 * ((l + inst.ubar() + max_p) * kk + l * d.sqrt() + l * diam) * tf.sqrt() + 2.0 * l * kk;
            checks.push((regret <= bound, format!("T={t}: regret {regret:.1} ≤ {bound:.1}")));
            per_round.push(regret / tf);
        }
        self.a2_done = true;
        let decreasing = per_round.windows(2).all(|w| w[1] < w[0]);
        checks.push((
            decreasing,
            format!("Reg/T {:?}", per_round.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>()),
        ));
        Ok(report("A2", checks))
    }

    /// Multiplier bound over all audited runs and an adversarial stress test.
    pub fn a3(&mut self) -> Report {
        if !self.a1_done {
            self.a1();
        }
        if !self.a2_done {
            self.a2();
        }
        let violations = self
            .lambda_audit
            .iter()
            .filter(|(n, b)| *n > b + BOUND_SLACK)
            .count();
        let mut checks = vec![(
            violations == 0 && !self.lambda_audit.is_empty(),
            format!("{} engine runs, {violations} violations", self.lambda_audit.len()),
        )];
        match adversarial_stress(10_000) {
            Ok((steps, worst)) => checks.push((true, format!("{steps} adversarial steps, max ‖λ‖/bound {worst:.4}"))),
            Err(e) => checks.push((false, format!("adversarial stress: {e}"))),
        }
        report("A3", checks)
    }

    /// Gap between realized and target penalties.
    pub fn a4(&mut self) -> Report {
        let inst = ProblemInstance::symmetric_two_source();
        let l = inst.penalty().lipschitz();
        let d = inst.d() as f64;
        let mut checks = Vec::new();
        for &t in &[1_000u64, 10_000] {
            let runs = match summaries(&inst, &EngineConfig::new(t), 0xA4 + t, 200, self.mode) {
                Ok(r) => r,
                Err(e) => return errored("A4", e),
            };
            self.audit(&runs);
            let tf = t as f64;
            let realized = mean(&runs.iter().map(|s| s.realized_penalty / tf).collect::<Vec<_>>());
            let target = mean(&runs.iter().map(|s| s.delta_penalty / tf).collect::<Vec<_>>());
            let bound = 2.0 * l * (d / tf).sqrt();
            let gap = (realized - target).abs();
            checks.push((gap <= bound, format!("T={t}: |{realized:.4} − {target:.4}| = {gap:.4} ≤ {bound:.4}")));
        }
        report("A4", checks)
    }

    /// Convex-analysis properties on the built-in penalties and a custom one.
    pub fn a5(&mut self) -> Report {
        let mut checks = Vec::new();
        let interval = Polytope::symmetric_interval();
        let triangle = match Polytope::from_attributes(&[vec![1.0, 0.0], vec![0.0, 1.0]], true) {
            Ok(p) => p,
            Err(e) => return errored("A5", e),
        };
        let kinds = [
            PenaltyKind::Zero,
            PenaltyKind::ScaledAbs(5.0),
            PenaltyKind::ScaledQuadratic(1.0),
            PenaltyKind::Custom(CustomPenalty::deadzone(3.0, 0.2)),
        ];
        for poly in [&interval, &triangle] {
            for kind in &kinds {
                let spec = match PenaltySpec::new(kind.clone(), poly.clone()) {
                    Ok(s) => s,
                    Err(e) => return errored("A5", e),
                };
                let label = format!("{:?}/d={}", kind, poly.dim());
                let (ok, worst) = penalty_properties(&spec, 0xA5);
                checks.push((ok, format!("{label}: worst {worst}")));
            }
        }
        report("A5", checks)
    }

    /// Importance-weighted estimator and the `R = 0` bandit reduction.
    pub fn a6(&mut self) -> Report {
        let mut checks = Vec::new();
        let (ok, detail) = iw_unbiasedness(200_000, 0xA6);
        checks.push((ok, detail));
        let inst = match bandit_reduction_instance() {
            Ok(i) => i,
            Err(e) => return errored("A6", e),
        };
        let best = match Oracle::new(&inst).solve_static() {
            Ok(s) => s.choice[0],
            Err(e) => return errored("A6", e),
        };
        let t = 100_000;
        match summaries(&inst, &EngineConfig::new(t), 0xA6, 5, self.mode) {
            Ok(runs) => {
                let freqs: Vec<f64> = runs.iter().map(|s| s.source_counts[best] as f64 / t as f64).collect();
                let worst = freqs.iter().copied().fold(f64::INFINITY, f64::min);
                checks.push((
                    worst >= 0.9 && best == 0,
                    format!("best source {best} pulled with frequency ≥ {worst:.4} in every run"),
                ));
            }
            Err(e) => checks.push((false, e.to_string())),
        }
        report("A6", checks)
    }

    /// Qualitative shape of the sensitivity sweep.
    pub fn a7(&mut self) -> Report {
        let rs = [0.0, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0];
        let ps = [0.0, 0.05, 0.1, 0.2, 0.3, 0.4];
        let rows = match oracle::sensitivity_sweep(&rs, &ps, self.mode) {
            Ok(r) => r,
            Err(e) => return errored("A7", e),
        };
        let tol = oracle::GAP_TOLERANCE;
        let at = |r: f64, p: f64| rows.iter().find(|x| x.r == r && x.p == p).expect("grid point");
        let never = ps.iter().filter(|&&p| p > 0.0).all(|&p| at(0.0, p).pi_star.abs() <= 1e-6);
        let always = (at(5.0, 0.0).pi_star - 1.0).abs() <= 1e-6;
        let worst_skew = rows.iter().map(|x| x.p_a1_given_x1).fold(f64::INFINITY, f64::min);
        let mut monotone = true;
        for &p in &ps {
            for w in rs.windows(2) {
                if at(w[1], p).p_a1_given_x1 > at(w[0], p).p_a1_given_x1 + tol {
                    monotone = false;
                }
            }
        }
        let max_gap = rows.iter().map(|x| x.gap).fold(0.0, f64::max);
        report(
            "A7",
            vec![
                (never, "π*(r=0, p>0) = 0".into()),
                (always, format!("π*(r=5, p=0) = {:.6}", at(5.0, 0.0).pi_star)),
                (worst_skew >= 0.5 - tol, format!("min P(a=1|x=1) {worst_skew:.4}")),
                (monotone, "P(a=1|x=1) non-increasing in r".into()),
                (max_gap <= tol, format!("max gap {max_gap:.2e} over {} points", rows.len())),
            ],
        )
    }

    /// Learning extensions.
    pub fn a8(&mut self) -> Report {
        let mut checks = Vec::new();
        let inst = ProblemInstance::symmetric_two_source();

        // (i) confidence-set coverage
        let delta = 0.01;
        let cfg = EngineConfig::new(10_000).with_estimator(EstimatorMode::LearnU { delta_conf: Some(delta) });
        match summaries(&inst, &cfg, 0xA81, 500, self.mode) {
            Ok(runs) => {
                let held = runs.iter().filter(|s| s.coverage_held == Some(true)).count() as f64 / runs.len() as f64;
                let need = 1.0 - inst.k() as f64 * delta - 0.02;
                checks.push((held >= need, format!("(i) coverage {held:.3} ≥ {need:.3}")));
            }
            Err(e) => checks.push((false, format!("(i) {e}"))),
        }

        // (ii) added regret of learning E[u|c]
        let mut losses = Vec::new();
        for &t in &[1_000u64, 10_000, 100_000] {
            let cfg = EngineConfig::new(t).with_estimator(EstimatorMode::LearnU { delta_conf: None });
            match summaries(&inst, &cfg, 0xA82 + t, 20, self.mode) {
                Ok(runs) => losses.push((t, mean(&runs.iter().map(|s| s.decision_loss).collect::<Vec<_>>()))),
                Err(e) => {
                    checks.push((false, format!("(ii) {e}")));
                    break;
                }
            }
        }
        if losses.len() == 3 {
            let mut ok = true;
            let mut parts = Vec::new();
            for w in losses.windows(2) {
                let (t0, l0) = w[0];
                let ratio = w[1].1 / l0.max(f64::MIN_POSITIVE);
                let t0f = t0 as f64;
                let allowed = 10f64.sqrt() * (10.0 * t0f).ln() / t0f.ln();
                ok &= ratio <= allowed;
                parts.push(format!("{ratio:.2} ≤ {allowed:.2}"));
            }
            checks.push((
                ok,
                format!(
                    "(ii) added regret {:?}, decade ratios {}",
                    losses.iter().map(|(_, l)| format!("{l:.1}")).collect::<Vec<_>>(),
                    parts.join(", ")
                ),
            ));
        }

        // (iii) α̂ envelope
        let horizon = 10_000;
        match alpha_ratios(horizon, 200, 0xA83, self.mode) {
            Ok(ratios) => {
                let held = ratios.iter().filter(|&&r| r >= ALPHA_ENVELOPE_C).count() as f64 / ratios.len() as f64;
                let need = 1.0 - 2.0 / horizon as f64;
                checks.push((
                    held >= need,
                    format!("(iii) envelope c={ALPHA_ENVELOPE_C} holds at {held:.5} of {} checkpoints ≥ {need:.5}", ratios.len()),
                ));
            }
            Err(e) => checks.push((false, format!("(iii) {e}"))),
        }
        report("A8", checks)
    }

    /// Variant consistency.
    pub fn a9(&mut self) -> Report {
        self.a9_inner().unwrap_or_else(|e| errored("A9", e))
    }

    fn a9_inner(&mut self) -> Result<Report> {
        let inst = ProblemInstance::symmetric_two_source();
        let mut checks = Vec::new();

        let base = EngineConfig::new(10_000).with_log_stride(1);
        let finite = base.clone().with_variant(Variant::FiniteActions { actions: Action::binary() });
        let mut identical = true;
        for i in 0..5 {
            let seed = derive_seed(0xA9, i);
            let a = run_episode(&inst, &base, seed).map_err(|f| f.error)?;
            let b = run_episode(&inst, &finite, seed).map_err(|f| f.error)?;
            identical &= a.rows == b.rows && a.summary == b.summary;
        }
        checks.push((identical, "finite actions ≡ base on 5 seeds".into()));

        let ratio = base.clone().with_variant(Variant::RatioPenalty);
        let mut frozen = true;
        let mut zero_rounds = 0;
        for i in 0..5 {
            let ep = run_episode(&inst, &ratio, derive_seed(0xA9, i)).map_err(|f| f.error)?;
            for w in ep.rows.windows(2) {
                if w[0].x == 0.0 {
                    zero_rounds += 1;
                    frozen &= w[0].lambda == w[1].lambda;
                }
            }
        }
        let never = never_selecting_ratio_instance()?;
        let ep = run_episode(&never, &ratio, derive_seed(0xA9, 99)).map_err(|f| f.error)?;
        let constant = ep.rows.iter().all(|r| r.x == 0.0 && r.lambda == ep.rows[0].lambda)
            && ep.summary.final_lambda == ep.rows[0].lambda;
        checks.push((frozen && zero_rounds > 0, format!("ratio λ frozen on {zero_rounds} zero-allocation rounds")));
        checks.push((constant, "ratio λ constant on a never-allocating instance".into()));

        let t = 100_000;
        let seeds = 20;
        let plain = EngineConfig::new(t);
        let public = plain.clone().with_variant(Variant::PublicContexts { anytime: false, cover: None });
        let a = summaries(&inst, &plain, 0xA9, seeds, self.mode)?;
        let b = summaries(&inst, &public, 0xA9, seeds, self.mode)?;
        let ra: Vec<f64> = a.iter().map(Summary::mean_utility).collect();
        let rb: Vec<f64> = b.iter().map(Summary::mean_utility).collect();
        let diff = (mean(&ra) - mean(&rb)).abs();
        let tol = 3.0 * (std_err(&ra).powi(2) + std_err(&rb).powi(2)).sqrt();
        checks.push((diff <= tol, format!("public |Z|=1 vs base: |Δrate| {diff:.2e} ≤ {tol:.2e}")));
        let anytime = plain.clone().with_variant(Variant::PublicContexts { anytime: true, cover: None });
        let c = summaries(&inst, &anytime, 0xA9, seeds, self.mode)?;
        let rc = mean(&c.iter().map(Summary::mean_utility).collect::<Vec<_>>());
        checks.push((true, format!("anytime public rate {rc:.4} vs base {:.4} (informational)", mean(&ra))));
        Ok(report("A9", checks))
    }
}

/// Ratio-penalty instance that never allocates: utility is always −1 and
/// every user carries attribute 1.
pub fn never_selecting_ratio_instance() -> Result<ProblemInstance> {
    let text = "dim 1\nprices 0\n1.0 0 -1 1 0\n";
    ProblemInstance::table(TableModel::parse(text)?, PenaltyKind::ScaledAbs(5.0))
}

/// Drive the dual update with adversarial targets and check the bound after
/// every step. Returns the number of steps and the worst `‖λ‖ / bound`.
pub fn adversarial_stress(steps: u64) -> Result<(u64, f64)> {
    let spec = PenaltySpec::scaled_abs_interval(5.0);
    let (l, diam) = (spec.lipschitz(), spec.diam());
    let schedule = default_schedule(l, diam, steps, 1.0, &[0.0, 0.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(0xA3);
    let mut total = 0;
    let mut worst: f64 = 0.0;
    for strategy in 0..4 {
        let mut dual = DualState::new(vec![0.0], schedule.eta, l, diam);
        for _ in 0..steps {
            let lam = dual.lambda[0];
            let delta = match strategy {
                0 => 1.0,
                1 => -1.0,
                // Push along the current sign.
                2 => if lam >= 0.0 { 1.0 } else { -1.0 },
                _ => rng.random_range(-1.0..=1.0),
            };
            let gamma = spec.solve_gamma(&dual.lambda, &BallRegion::new(vec![delta], diam))?;
            dual.step(&gamma, &[delta], 1.0)?;
            worst = worst.max(norm(&dual.lambda) / dual.bound);
            total += 1;
        }
    }
    Ok((total, worst))
}

/// Monte-Carlo check that `m − 1[k'=k](m − φ)/π_k` is unbiased for `φ_{k'}`.
pub fn iw_unbiasedness(draws: u64, seed: u64) -> (bool, String) {
    let phi = [0.3, -0.2, 0.8];
    let m = 1.0;
    let mut state = Exp3State::new(3, 1.0, m);
    state.scores = vec![0.0, 0.4, 0.9];
    let pi = state.probabilities();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = [0.0f64; 3];
    let mut sq = [0.0f64; 3];
    for _ in 0..draws {
        let (k, used) = state.sample(&mut rng);
        let mut fresh = Exp3State::new(3, 1.0, m);
        fresh.iw_update(k, phi[k], &used).expect("bounded reward");
        for j in 0..3 {
            sum[j] += fresh.scores[j];
            sq[j] += fresh.scores[j] * fresh.scores[j];
        }
    }
    let n = draws as f64;
    let mut ok = true;
    let mut parts = Vec::new();
    for j in 0..3 {
        let mu = sum[j] / n;
        let sd = ((sq[j] / n - mu * mu).max(0.0) / n).sqrt();
        let z = (mu - phi[j]) / sd;
        ok &= z.abs() <= 3.0;
        parts.push(format!("{z:+.2}σ"));
    }
    (ok, format!("IW estimator deviations {} at π {:.3?}", parts.join(" "), pi))
}

/// Fenchel–Young, extension agreement, Lipschitz certificate, biconjugation
/// and the γ-optimality residual on random samples. Returns the overall
/// verdict and a short description of the worst margin.
pub fn penalty_properties(spec: &PenaltySpec, seed: u64) -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let poly = spec.polytope();
    let d = spec.dim();
    let l = spec.lipschitz();
    let diam = spec.diam();
    let radius = l + 1.0;
    let inside: Vec<Vec<f64>> = (0..24).map(|_| poly.sample(&mut rng)).collect();
    let lambdas: Vec<Vec<f64>> = (0..24)
        .map(|_| (0..d).map(|_| rng.random_range(-radius..=radius)).collect())
        .collect();
    let ball_point = |rng: &mut ChaCha8Rng, c: &[f64], r: f64| -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..d).map(|_| rng.random_range(-r..=r)).collect();
            if norm(&v) <= r {
                return c.iter().zip(&v).map(|(a, b)| a + b).collect();
            }
        }
    };

    let mut fy: f64 = 0.0;
    for g in &inside {
        for lam in &lambdas {
            fy = fy.max(dot(g, lam) - spec.value(g) - spec.conj(lam));
        }
    }
    let ext: f64 = inside
        .iter()
        .map(|g| (spec.extension(g) - spec.value(g)).abs())
        .fold(0.0, f64::max);
    let mut lip: f64 = 0.0;
    for _ in 0..200 {
        let c = poly.sample(&mut rng);
        let x = ball_point(&mut rng, &c, diam);
        let y = ball_point(&mut rng, &c, diam);
        lip = lip.max((spec.extension(&x) - spec.extension(&y)).abs() - l * dist(&x, &y));
    }

    // Biconjugation: sup over a λ grid of ⟨γ, λ⟩ − R*(λ).
    let per_axis: usize = if d == 1 { 2001 } else { 81 };
    let h = 2.0 * radius / (per_axis - 1) as f64;
    let mut grid = Vec::new();
    for mut code in 0..per_axis.pow(d as u32) {
        let lam: Vec<f64> = (0..d)
            .map(|_| {
                let i = code % per_axis;
                code /= per_axis;
                -radius + i as f64 * h
            })
            .collect();
        let c = spec.conj(&lam);
        grid.push((lam, c));
    }
    // Grid error: the maximiser moves by at most h·√d/2, and the objective is
    // Lipschitz in λ with constant ≤ ‖γ‖ + max‖∂R*‖ ≤ 2.
    let bic_tol = h * (d as f64).sqrt();
    let mut bic: f64 = 0.0;
    for g in inside.iter().take(8) {
        let sup = grid
            .iter()
            .map(|(lam, c)| dot(g, lam) - c)
            .fold(f64::NEG_INFINITY, f64::max);
        bic = bic.max((sup - spec.value(g)).abs());
    }

    let mut resid: f64 = 0.0;
    for (lam, center) in lambdas.iter().zip(&inside).take(12) {
        let region = BallRegion::new(center.clone(), diam);
        let gamma = match spec.solve_gamma(lam, &region) {
            Ok(g) => g,
            Err(_) => return (false, "solve_gamma failed".into()),
        };
        if !region.contains(&gamma, 1e-9) {
            return (false, "solve_gamma left the region".into());
        }
        let samples: Vec<Vec<f64>> = (0..32).map(|_| ball_point(&mut rng, center, diam)).collect();
        resid = resid.max(spec.gamma_residual(lam, &gamma, &samples));
    }

    let ok = fy <= 1e-9 && ext <= 1e-9 && lip <= 1e-9 && bic <= bic_tol && resid <= 1e-6;
    (
        ok,
        format!("FY {fy:.1e}, ext {ext:.1e}, lip {lip:.1e}, bic {bic:.1e}/{bic_tol:.1e}, γ-resid {resid:.1e}"),
    )
}
