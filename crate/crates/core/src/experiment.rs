//! Run configuration, seed orchestration and persisted outputs.
//!
//! A run executes one engine episode per seed (in parallel), then writes
//! `summaries.json` (deterministic for a fixed config), one CSV round log
//! per seed when logging is enabled, and `manifest.json` with the config
//! hash, the crate version and timings.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::{
    derive_seed, run_episode, EngineConfig, EpisodeFailure, Policy, RoundLog, ScheduleOverride, Summary, TieBreak,
    Variant,
};
use crate::environment::{NoiseModel, ProblemInstance, TableModel};
use crate::error::{Error, Result};
use crate::estimators::EstimatorMode;
use crate::oracle::{self, Oracle, SensitivityRow};
use crate::parallel::{self, ExecMode};
use crate::penalty::{PenaltyConfig, PenaltyRegistry};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceSpec {
    SymmetricTwoSource {
        #[serde(default)]
        penalty: Option<PenaltyConfig>,
    },
    GaussianMonotone {
        r: f64,
        p: f64,
    },
    /// Table file; relative paths resolve against the config file.
    Table {
        path: PathBuf,
        penalty: PenaltyConfig,
    },
    NoisyAttribute {
        alpha: f64,
        u_mean: f64,
        noises: Vec<NoiseModel>,
        prices: Vec<f64>,
        penalty: PenaltyConfig,
    },
}

impl Default for InstanceSpec {
    fn default() -> Self {
        InstanceSpec::SymmetricTwoSource { penalty: None }
    }
}

impl InstanceSpec {
    pub fn build(&self, base: &Path) -> Result<ProblemInstance> {
        let registry = PenaltyRegistry::with_builtins();
        match self {
            InstanceSpec::SymmetricTwoSource { penalty: None } => Ok(ProblemInstance::symmetric_two_source()),
            InstanceSpec::SymmetricTwoSource { penalty: Some(p) } => {
                ProblemInstance::symmetric_two_source_with(registry.resolve(p)?)
            }
            InstanceSpec::GaussianMonotone { r, p } => ProblemInstance::gaussian_monotone(*r, *p),
            InstanceSpec::Table { path, penalty } => {
                let full = if path.is_relative() { base.join(path) } else { path.clone() };
                ProblemInstance::table(TableModel::load(&full)?, registry.resolve(penalty)?)
            }
            InstanceSpec::NoisyAttribute { alpha, u_mean, noises, prices, penalty } => {
                ProblemInstance::noisy_attribute(*alpha, *u_mean, noises.clone(), prices.clone(), registry.resolve(penalty)?)
            }
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_json(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub instance: InstanceSpec,
    #[serde(default)]
    pub variant: Variant,
    pub horizon: u64,
    #[serde(default = "one")]
    pub seeds: u64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub schedule: ScheduleOverride,
    #[serde(default)]
    pub tie_break: TieBreak,
    #[serde(default)]
    pub estimator: EstimatorMode,
    #[serde(default)]
    pub policy: Policy,
    #[serde(default)]
    pub anytime_dual: bool,
    /// Keep every `log_stride`-th round in the CSV logs (0 disables logs).
    #[serde(default)]
    pub log_stride: u64,
    #[serde(default)]
    pub checkpoints: Vec<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn one() -> u64 {
    1
}

impl RunConfig {
    pub fn new(instance: InstanceSpec, horizon: u64, seeds: u64) -> Self {
        Self {
            instance,
            variant: Variant::Base,
            horizon,
            seeds,
            master_seed: 0,
            schedule: ScheduleOverride::default(),
            tie_break: TieBreak::default(),
            estimator: EstimatorMode::Exact,
            policy: Policy::PrimalDual,
            anytime_dual: false,
            log_stride: 0,
            checkpoints: Vec::new(),
            out: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::config("horizon must be positive"));
        }
        if self.seeds == 0 {
            return Err(Error::config("at least one seed is required"));
        }
        Ok(())
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            variant: self.variant.clone(),
            horizon: self.horizon,
            schedule: self.schedule,
            tie_break: self.tie_break,
            estimator: self.estimator,
            policy: self.policy,
            anytime_dual: self.anytime_dual,
            log_stride: self.log_stride,
            checkpoints: self.checkpoints.clone(),
        }
    }

    /// SHA-256 of the canonical JSON form, excluding the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        sha256_json(&c)
    }
}

fn sha256_json<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("serializable");
    hex::encode(Sha256::digest(&json))
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub index: u64,
    pub seed: u64,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretPoint {
    pub t: u64,
    pub mean_utility: f64,
    /// `t·opt_rate − mean utility`, when the oracle certified a rate.
    pub regret: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config_hash: String,
    pub opt_rate: Option<f64>,
    pub static_opt_rate: Option<f64>,
    pub seeds: Vec<SeedSummary>,
    pub regret: Vec<RegretPoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub code_version: String,
    pub config: RunConfig,
    pub files: Vec<String>,
    pub wall_clock_seconds: f64,
    /// Oracle diagnostics when no rate was certified.
    pub notes: Vec<String>,
}

/// Why a run stopped.
#[derive(Debug)]
pub enum RunError {
    /// Configuration or instance problem, detected before any round ran.
    Setup(Error),
    /// A seed failed mid-run; its log and the offending row were dumped.
    Failed { seed_index: u64, error: Error, dump: Option<PathBuf> },
    Io(std::io::Error),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Setup(e) => write!(f, "{e}"),
            RunError::Failed { seed_index, error, dump } => {
                write!(f, "seed {seed_index}: {error}")?;
                if let Some(p) = dump {
                    write!(f, " (dump: {})", p.display())?;
                }
                Ok(())
            }
            RunError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Setup(e)
    }
}

/// Run every seed of `config` without touching the filesystem.
pub fn run_seeds(
    instance: &ProblemInstance,
    config: &RunConfig,
    mode: ExecMode,
) -> std::result::Result<Vec<(SeedSummary, Vec<RoundLog>)>, (u64, EpisodeFailure)> {
    let engine = config.engine_config();
    let indices: Vec<u64> = (0..config.seeds).collect();
    let results = parallel::map(mode, &indices, |&i| {
        let seed = derive_seed(config.master_seed, i);
        run_episode(instance, &engine, seed)
            .map(|ep| (SeedSummary { index: i, seed, summary: ep.summary }, ep.rows))
            .map_err(|f| (i, f))
    });
    results.into_iter().collect()
}

/// Mean utility and regret at each checkpoint shared by all seeds.
pub fn regret_series(seeds: &[SeedSummary], opt_rate: Option<f64>) -> Vec<RegretPoint> {
    let Some(first) = seeds.first() else {
        return Vec::new();
    };
    first
        .summary
        .checkpoints
        .iter()
        .enumerate()
        .map(|(i, cp)| {
            let mean = seeds.iter().map(|s| s.summary.checkpoints[i].utility).sum::<f64>() / seeds.len() as f64;
            RegretPoint { t: cp.t, mean_utility: mean, regret: opt_rate.map(|r| cp.t as f64 * r - mean) }
        })
        .collect()
}

/// Execute a run and persist it under `out`.
pub fn execute(config: &RunConfig, base: &Path, out: &Path, mode: ExecMode) -> std::result::Result<RunResult, RunError> {
    config.validate()?;
    let start = Instant::now();
    let instance = config.instance.build(base)?;
    crate::engine::validate(&instance, &config.engine_config())?;
    fs::create_dir_all(out)?;
    let hash = config.hash();
    let mut files = Vec::new();

    let outcomes = match run_seeds(&instance, config, mode) {
        Ok(v) => v,
        Err((seed_index, failure)) => {
            let name = format!("failure_seed_{seed_index}.csv");
            let dump = out.join(&name);
            let mut rows = failure.rows;
            rows.extend(failure.row);
            write_round_log(&dump, &rows, instance.d()).map_err(RunError::Setup)?;
            return Err(RunError::Failed { seed_index, error: failure.error, dump: Some(dump) });
        }
    };

    if config.log_stride > 0 {
        fs::create_dir_all(out.join("logs"))?;
        for (s, rows) in &outcomes {
            let name = format!("logs/seed_{}.csv", s.index);
            write_round_log(&out.join(&name), rows, instance.d())?;
            files.push(name);
        }
    }

    let mut notes = Vec::new();
    let (opt_rate, static_opt_rate) = if matches!(config.policy, Policy::PrimalDual) {
        let o = Oracle::new(&instance).per_context(matches!(config.variant, Variant::PublicContexts { .. }));
        let opt = o.solve().map(|s| s.rate).map_err(|e| notes.push(format!("opt: {e}"))).ok();
        let st = o.solve_static().map(|s| s.rate).map_err(|e| notes.push(format!("static: {e}"))).ok();
        if !matches!(config.variant, Variant::Base) {
            notes.push("oracle rates refer to the base objective".into());
        }
        (opt, st)
    } else {
        (None, None)
    };

    let seeds: Vec<SeedSummary> = outcomes.into_iter().map(|(s, _)| s).collect();
    let result = RunResult {
        config_hash: hash.clone(),
        opt_rate,
        static_opt_rate,
        regret: regret_series(&seeds, opt_rate),
        seeds,
    };
    write_json(&out.join("summaries.json"), &result)?;
    files.push("summaries.json".into());

    let manifest = Manifest {
        config_hash: hash,
        code_version: CODE_VERSION.into(),
        config: config.clone(),
        files,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        notes,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(result)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::input(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Column names of the round-log CSV for attribute dimension `d`.
pub fn round_log_header(d: usize) -> Vec<String> {
    let vec_cols = |name: &str| -> Vec<String> {
        if d == 1 {
            vec![name.to_string()]
        } else {
            (1..=d).map(|i| format!("{name}_{i}")).collect()
        }
    };
    let mut h: Vec<String> = ["t", "z", "k", "p", "x", "u_x"].iter().map(|s| s.to_string()).collect();
    h.extend(vec_cols("a_x"));
    h.push("cond_u".into());
    for name in ["cond_a", "delta", "gamma", "lambda"] {
        h.extend(vec_cols(name));
    }
    h.push("phi".into());
    h
}

pub fn write_round_log(path: &Path, rows: &[RoundLog], d: usize) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_error)?;
    w.write_record(round_log_header(d)).map_err(csv_error)?;
    for r in rows {
        let mut rec = vec![r.t.to_string(), r.z.to_string(), r.k.to_string(), fmt(r.p), fmt(r.x), fmt(r.u_x)];
        rec.extend(r.a_x.iter().map(|v| fmt(*v)));
        rec.push(fmt(r.cond_u));
        for v in [&r.cond_a, &r.delta, &r.gamma, &r.lambda] {
            rec.extend(v.iter().map(|x| fmt(*x)));
        }
        rec.push(fmt(r.phi));
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Parse a round log written by [`write_round_log`].
pub fn read_round_log(path: &Path, d: usize) -> Result<Vec<RoundLog>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    let header: Vec<String> = r.headers().map_err(csv_error)?.iter().map(String::from).collect();
    if header != round_log_header(d) {
        return Err(Error::input(format!("unexpected round-log header in {}", path.display())));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_error)?;
        let f = |i: usize| -> Result<f64> {
            rec[i].parse::<f64>().map_err(|e| Error::input(format!("column {i}: {e}")))
        };
        let u = |i: usize| -> Result<u64> {
            rec[i].parse::<u64>().map_err(|e| Error::input(format!("column {i}: {e}")))
        };
        let vecf = |start: usize| -> Result<Vec<f64>> { (start..start + d).map(f).collect() };
        let mut i = 6;
        let a_x = vecf(i)?;
        i += d;
        let cond_u = f(i)?;
        i += 1;
        let cond_a = vecf(i)?;
        let delta = vecf(i + d)?;
        let gamma = vecf(i + 2 * d)?;
        let lambda = vecf(i + 3 * d)?;
        out.push(RoundLog {
            t: u(0)?,
            z: u(1)? as usize,
            k: u(2)? as usize,
            p: f(3)?,
            x: f(4)?,
            u_x: f(5)?,
            a_x,
            cond_u,
            cond_a,
            delta,
            gamma,
            lambda,
            phi: f(i + 4 * d)?,
        });
    }
    Ok(out)
}

/// Shortest representation that parses back to the same `f64`.
fn fmt(v: f64) -> String {
    format!("{v:?}")
}

fn csv_error(e: csv::Error) -> Error {
    Error::input(format!("csv: {e}"))
}

// ---------------------------------------------------------------------------
// Oracle rows
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub instance_hash: String,
    pub r: Option<f64>,
    pub p: Option<f64>,
    pub rate: f64,
    pub static_rate: Option<f64>,
    pub pi_star: Vec<Vec<f64>>,
    pub lambda_star: Vec<f64>,
    pub gap: f64,
}

pub fn oracle_row(spec: &InstanceSpec, base: &Path, per_context: bool) -> Result<OracleRow> {
    let instance = spec.build(base)?;
    let o = Oracle::new(&instance).per_context(per_context);
    let sol = o.solve()?;
    let static_rate = o.solve_static().ok().map(|s| s.rate);
    let (r, p) = match spec {
        InstanceSpec::GaussianMonotone { r, p } => (Some(*r), Some(*p)),
        _ => (None, None),
    };
    Ok(OracleRow {
        instance_hash: spec.hash(),
        r,
        p,
        rate: sol.rate,
        static_rate,
        pi_star: sol.policy,
        lambda_star: sol.lambda,
        gap: sol.gap,
    })
}

/// Write oracle rows as CSV; policy rows are `;`-joined and context rows `|`-joined.
pub fn write_oracle_rows(path: &Path, rows: &[OracleRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_error)?;
    w.write_record(["instance_hash", "r", "p", "rate", "static_rate", "pi_star", "lambda_star", "gap"])
        .map_err(csv_error)?;
    let opt = |v: Option<f64>| v.map(fmt).unwrap_or_default();
    let join = |v: &[f64]| v.iter().map(|x| fmt(*x)).collect::<Vec<_>>().join(";");
    for r in rows {
        let pi = r.pi_star.iter().map(|row| join(row)).collect::<Vec<_>>().join("|");
        w.write_record([
            r.instance_hash.clone(),
            opt(r.r),
            opt(r.p),
            fmt(r.rate),
            opt(r.static_rate),
            pi,
            join(&r.lambda_star),
            fmt(r.gap),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Figure bundles
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiArmsSpec {
    #[serde(default)]
    pub instance: InstanceSpec,
    pub horizon: u64,
    pub seeds: u64,
    #[serde(default)]
    pub master_seed: u64,
    /// Number of evenly spaced checkpoints.
    #[serde(default = "default_points")]
    pub points: u64,
}

fn default_points() -> u64 {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivitySpec {
    pub r: Vec<f64>,
    pub p: Vec<f64>,
}

impl Default for SensitivitySpec {
    fn default() -> Self {
        Self {
            r: vec![0.0, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0],
            p: vec![0.0, 0.05, 0.1, 0.2, 0.3, 0.4],
        }
    }
}

/// One row of the `multi_arms` bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub series: String,
    pub t: u64,
    pub mean: f64,
    pub q1: f64,
    pub q3: f64,
}

pub const MULTI_ARMS_SERIES: [&str; 5] = ["alg", "best-fixed", "greedy", "opt-line", "static-opt-line"];

/// Quantile with linear interpolation between order statistics.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Utility curves of the primal-dual learner, the learner restricted to the
/// best single source, the greedy baseline and the two oracle lines.
pub fn multi_arms(spec: &MultiArmsSpec, base: &Path, mode: ExecMode) -> Result<Vec<SeriesPoint>> {
    if spec.horizon == 0 || spec.seeds == 0 || spec.points == 0 {
        return Err(Error::input("multi_arms needs positive horizon, seeds and points"));
    }
    let instance = spec.instance.build(base)?;
    let o = Oracle::new(&instance);
    let opt = o.solve()?;
    let st = o.solve_static()?;
    let checkpoints: Vec<u64> = (1..=spec.points)
        .map(|i| (spec.horizon * i / spec.points).max(1))
        .collect();

    let run = |inst: &ProblemInstance, policy: Policy| -> Result<Vec<Vec<f64>>> {
        let mut cfg = RunConfig::new(spec.instance.clone(), spec.horizon, spec.seeds);
        cfg.master_seed = spec.master_seed;
        cfg.policy = policy;
        cfg.checkpoints = checkpoints.clone();
        let out = run_seeds(inst, &cfg, mode).map_err(|(_, f)| f.error)?;
        Ok(out
            .iter()
            .map(|(s, _)| s.summary.checkpoints.iter().map(|c| c.utility).collect())
            .collect())
    };
    let best = instance.restrict_sources(&[st.choice[0]])?;
    let curves = [
        ("alg", run(&instance, Policy::PrimalDual)?),
        ("best-fixed", run(&best, Policy::PrimalDual)?),
        ("greedy", run(&instance, Policy::Greedy { source: 0 })?),
    ];
    let mut out = Vec::new();
    for (name, per_seed) in &curves {
        for (i, &t) in checkpoints.iter().enumerate() {
            let vals: Vec<f64> = per_seed.iter().map(|c| c[i]).collect();
            out.push(SeriesPoint {
                series: name.to_string(),
                t,
                mean: vals.iter().sum::<f64>() / vals.len() as f64,
                q1: quantile(&vals, 0.25),
                q3: quantile(&vals, 0.75),
            });
        }
    }
    for (name, rate) in [("opt-line", opt.rate), ("static-opt-line", st.rate)] {
        for &t in &checkpoints {
            let v = t as f64 * rate;
            out.push(SeriesPoint { series: name.into(), t, mean: v, q1: v, q3: v });
        }
    }
    Ok(out)
}

pub fn sensitivity(spec: &SensitivitySpec, mode: ExecMode) -> Result<Vec<SensitivityRow>> {
    oracle::sensitivity_sweep(&spec.r, &spec.p, mode)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_error)?;
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_toml() {
        let mut cfg = RunConfig::new(InstanceSpec::GaussianMonotone { r: 1.0, p: 0.1 }, 100, 3);
        cfg.variant = Variant::PublicContexts { anytime: true, cover: None };
        cfg.estimator = EstimatorMode::LearnU { delta_conf: Some(0.01) };
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.hash(), back.hash());
    }

    #[test]
    fn bad_configs_are_config_errors() {
        assert!(matches!(RunConfig::from_toml("horizon = 0"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml("horizon = 10\nbogus = 1"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml("seeds = 2"), Err(Error::Config(_))));
    }

    #[test]
    fn header_layout() {
        assert_eq!(
            round_log_header(1).join(","),
            "t,z,k,p,x,u_x,a_x,cond_u,cond_a,delta,gamma,lambda,phi"
        );
        assert_eq!(round_log_header(2).len(), 6 + 2 + 1 + 8 + 1);
    }

    #[test]
    fn quartiles() {
        let v = [4.0, 1.0, 3.0, 2.0, 5.0];
        assert_eq!(quantile(&v, 0.25), 2.0);
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&[1.0, 2.0], 0.5), 1.5);
    }
}
