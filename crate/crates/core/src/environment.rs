//! Stochastic instance models.
//!
//! Every instance draws i.i.d. users `(z, u, a, c_1..c_K)`, knows the exact
//! conditional means `E[u | z, c_k]` and `E[a | z, c_k]`, and exposes the law
//! of those means per source so the offline oracle can integrate against it.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::norm;
use crate::penalty::{PenaltyKind, PenaltySpec};
use crate::polytope::Polytope;

/// Truncation half-width for Gaussian utilities; keeps `|u| ≤ ū`. The
/// truncation is symmetric, so `E[a | u] = tanh(u)` stays exact.
pub const GAUSSIAN_U_BOUND: f64 = 6.0;

#[derive(Debug, Clone, PartialEq)]
pub struct UserDraw {
    pub z: usize,
    pub u: f64,
    pub a: Vec<f64>,
    /// One context vector per active source.
    pub contexts: Vec<Vec<f64>>,
}

/// A point mass of the conditional-mean law of one source.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextAtom {
    pub z: usize,
    pub prob: f64,
    pub cond_u: f64,
    pub cond_a: Vec<f64>,
}

pub type DensityFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type MeansFn = Arc<dyn Fn(f64) -> (f64, Vec<f64>) + Send + Sync>;

/// A continuous piece of the conditional-mean law: a scalar context variable
/// with (sub-probability) density `density` on `[lo, hi]`.
#[derive(Clone)]
pub struct DensityComponent {
    pub z: usize,
    pub lo: f64,
    pub hi: f64,
    pub density: DensityFn,
    pub means: MeansFn,
}

impl fmt::Debug for DensityComponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DensityComponent(z={}, [{}, {}])", self.z, self.lo, self.hi)
    }
}

#[derive(Debug, Clone)]
pub enum ContextLaw {
    Atoms(Vec<ContextAtom>),
    Continuous(Vec<DensityComponent>),
}

/// Linear utility model `E[u | c] = ⟨ψ, features(c)⟩` used by the learner.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub psi: Vec<f64>,
    /// Upper bound on `‖features(c)‖`.
    pub feature_bound: f64,
}

/// Observation noise on the attribute for the noisy-attribute instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum NoiseModel {
    Gaussian { sigma: f64 },
    Laplace { scale: f64 },
}

impl NoiseModel {
    pub fn density(&self, x: f64) -> f64 {
        match *self {
            NoiseModel::Gaussian { sigma } => {
                (-0.5 * (x / sigma).powi(2)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
            }
            NoiseModel::Laplace { scale } => (-(x.abs()) / scale).exp() / (2.0 * scale),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseModel::Gaussian { sigma } => sigma * rng.sample::<f64, _>(StandardNormal),
            NoiseModel::Laplace { scale } => {
                let v: f64 = rng.random::<f64>() - 0.5;
                -scale * v.signum() * (1.0 - 2.0 * v.abs()).max(f64::MIN_POSITIVE).ln()
            }
        }
    }

    /// Scale parameter (σ or b).
    pub fn scale(&self) -> f64 {
        match *self {
            NoiseModel::Gaussian { sigma } => sigma,
            NoiseModel::Laplace { scale } => scale,
        }
    }

    /// Half-width of the support used for integration.
    fn support_radius(&self) -> f64 {
        match *self {
            NoiseModel::Gaussian { sigma } => 12.0 * sigma,
            NoiseModel::Laplace { scale } => 40.0 * scale,
        }
    }
}

/// Bayes-rule posterior mean of `a ∈ {−1, 1}` given `â = a + noise` and
/// prior `P(a = 1) = alpha`. Returns `None` when both likelihoods underflow.
pub fn posterior_mean_sign(alpha: f64, noise: &NoiseModel, a_hat: f64) -> Option<f64> {
    let up = alpha * noise.density(a_hat - 1.0);
    let down = (1.0 - alpha) * noise.density(a_hat + 1.0);
    let total = up + down;
    if total > 0.0 && total.is_finite() {
        Some((up - down) / total)
    } else {
        None
    }
}

// ---------------------------------------------------------------------------
// Table-driven instances
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub prob: f64,
    pub z: usize,
    pub u: f64,
    pub a: Vec<f64>,
    pub c: Vec<f64>,
}

/// A finite joint law over `(z, u, a, c_1..c_K)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableModel {
    pub dim: usize,
    pub prices: Vec<f64>,
    pub rows: Vec<TableRow>,
}

impl TableModel {
    /// Parse the text format:
    ///
    /// ```text
    /// # comment
    /// dim 1
    /// prices 0.0 0.1
    /// # prob z u a_1..a_d c_1..c_K
    /// 0.25 0 1 1 1 0
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let mut dim = 1usize;
        let mut prices: Option<Vec<f64>> = None;
        let mut raw_rows: Vec<(usize, Vec<f64>)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty());
            let head = parts.next().unwrap_or("");
            let num = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|_| Error::input(format!("line {}: cannot parse '{s}'", lineno + 1)))
            };
            match head {
                "dim" => {
                    dim = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .filter(|&d| d > 0)
                        .ok_or_else(|| Error::input(format!("line {}: bad dim", lineno + 1)))?;
                }
                "prices" => prices = Some(parts.map(num).collect::<Result<_>>()?),
                _ => {
                    let mut values = vec![num(head)?];
                    for p in parts {
                        values.push(num(p)?);
                    }
                    raw_rows.push((lineno + 1, values));
                }
            }
        }
        let prices = prices.ok_or_else(|| Error::input("table is missing a 'prices' line"))?;
        let k = prices.len();
        let mut rows = Vec::with_capacity(raw_rows.len());
        for (lineno, v) in raw_rows {
            if v.len() != 3 + dim + k {
                return Err(Error::input(format!(
                    "line {lineno}: expected {} values, found {}",
                    3 + dim + k,
                    v.len()
                )));
            }
            if v[1] < 0.0 || v[1].fract() != 0.0 {
                return Err(Error::input(format!("line {lineno}: z must be a nonnegative integer")));
            }
            rows.push(TableRow {
                prob: v[0],
                z: v[1] as usize,
                u: v[2],
                a: v[3..3 + dim].to_vec(),
                c: v[3 + dim..].to_vec(),
            });
        }
        let model = Self { dim, prices, rows };
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::input("table has no rows"));
        }
        if self.prices.is_empty() {
            return Err(Error::input("table needs at least one source"));
        }
        let mut total = 0.0;
        for r in &self.rows {
            if !(r.prob >= 0.0) || !r.prob.is_finite() {
                return Err(Error::input("row probabilities must be nonnegative"));
            }
            if r.a.len() != self.dim || r.c.len() != self.prices.len() {
                return Err(Error::input("row has wrong shape"));
            }
            if norm(&r.a) > 1.0 + 1e-12 {
                return Err(Error::input(format!("attribute {:?} has norm above 1", r.a)));
            }
            total += r.prob;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::input(format!("row probabilities sum to {total}, not 1")));
        }
        Ok(())
    }

    fn attributes(&self) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = Vec::new();
        for r in &self.rows {
            if r.prob > 0.0 && !out.contains(&r.a) {
                out.push(r.a.clone());
            }
        }
        out
    }

    /// Atoms of `(E[u|z,c_k], E[a|z,c_k])` for source `k`, keyed by `(z, c_k)`.
    fn atoms(&self, k: usize) -> BTreeMap<(usize, u64), ContextAtom> {
        let mut acc: BTreeMap<(usize, u64), (f64, f64, Vec<f64>)> = BTreeMap::new();
        for r in self.rows.iter().filter(|r| r.prob > 0.0) {
            let e = acc
                .entry((r.z, (r.c[k] + 0.0).to_bits()))
                .or_insert((0.0, 0.0, vec![0.0; self.dim]));
            e.0 += r.prob;
            e.1 += r.prob * r.u;
            for (s, a) in e.2.iter_mut().zip(&r.a) {
                *s += r.prob * a;
            }
        }
        acc.into_iter()
            .map(|((z, bits), (p, su, sa))| {
                (
                    (z, bits),
                    ContextAtom {
                        z,
                        prob: p,
                        cond_u: su / p,
                        cond_a: sa.iter().map(|v| v / p).collect(),
                    },
                )
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Instance
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum InstanceKind {
    /// Two free sources, each revealing one of two favourable cells.
    SymmetricTwoSource,
    /// `a = ±1`, `u ~ N(a, 1)`; source 1 reveals `(a, u)` at price `p`,
    /// source 2 reveals `u` for free; penalty `r·x²`.
    GaussianMonotone { r: f64, p: f64 },
    Table(Arc<TableModel>),
    /// `a = ±1` with `P(a=1) = alpha`, `u = ±1` independent with mean
    /// `u_mean`; source `k` reveals `a + noise_k`.
    NoisyAttribute { alpha: f64, u_mean: f64, noises: Vec<NoiseModel> },
}

#[derive(Debug, Clone)]
pub struct ProblemInstance {
    kind: InstanceKind,
    prices: Vec<f64>,
    attributes: Vec<Vec<f64>>,
    penalty: PenaltySpec,
    ubar: f64,
    /// Active sources, as indices into the underlying model.
    active: Vec<usize>,
    /// Precomputed conditional-mean tables for finite models.
    lookup: Option<Arc<Vec<BTreeMap<(usize, u64), ContextAtom>>>>,
    /// Cumulative probabilities of table rows.
    cumulative: Option<Arc<Vec<f64>>>,
}

impl ProblemInstance {
    /// The symmetric two-source instance with penalty `5|δ|`.
    pub fn symmetric_two_source() -> Self {
        Self::symmetric_two_source_with(PenaltyKind::ScaledAbs(5.0)).expect("valid instance")
    }

    pub fn symmetric_two_source_with(penalty: PenaltyKind) -> Result<Self> {
        let attributes = vec![vec![-1.0], vec![1.0]];
        let penalty = PenaltySpec::new(penalty, Polytope::from_attributes(&attributes, true)?)?;
        let mut inst = Self {
            kind: InstanceKind::SymmetricTwoSource,
            prices: vec![0.0, 0.0],
            attributes,
            penalty,
            ubar: 1.0,
            active: vec![0, 1],
            lookup: None,
            cumulative: None,
        };
        inst.lookup = Some(Arc::new(
            (0..2)
                .map(|k| {
                    let (pos, neg) = symmetric_means(k);
                    let mut m = BTreeMap::new();
                    m.insert((0, 1f64.to_bits()), ContextAtom { z: 0, prob: 0.25, cond_u: pos.0, cond_a: vec![pos.1] });
                    m.insert((0, 0f64.to_bits()), ContextAtom { z: 0, prob: 0.75, cond_u: neg.0, cond_a: vec![neg.1] });
                    m
                })
                .collect(),
        ));
        Ok(inst)
    }

    pub fn gaussian_monotone(r: f64, p: f64) -> Result<Self> {
        if r < 0.0 || !r.is_finite() || !p.is_finite() {
            return Err(Error::input("gaussian instance needs finite r ≥ 0 and finite p"));
        }
        let attributes = vec![vec![-1.0], vec![1.0]];
        let penalty = PenaltySpec::new(PenaltyKind::ScaledQuadratic(r), Polytope::from_attributes(&attributes, true)?)?;
        Ok(Self {
            kind: InstanceKind::GaussianMonotone { r, p },
            prices: vec![p, 0.0],
            attributes,
            penalty,
            ubar: GAUSSIAN_U_BOUND,
            active: vec![0, 1],
            lookup: None,
            cumulative: None,
        })
    }

    pub fn table(model: TableModel, penalty: PenaltyKind) -> Result<Self> {
        model.validate()?;
        let attributes = model.attributes();
        let penalty = PenaltySpec::new(penalty, Polytope::from_attributes(&attributes, true)?)?;
        let ubar = model.rows.iter().map(|r| r.u.abs()).fold(0.0, f64::max);
        let k = model.prices.len();
        let lookup: Vec<_> = (0..k).map(|s| model.atoms(s)).collect();
        let mut acc = 0.0;
        let cumulative: Vec<f64> = model
            .rows
            .iter()
            .map(|r| {
                acc += r.prob;
                acc
            })
            .collect();
        Ok(Self {
            prices: model.prices.clone(),
            kind: InstanceKind::Table(Arc::new(model)),
            attributes,
            penalty,
            ubar,
            active: (0..k).collect(),
            lookup: Some(Arc::new(lookup)),
            cumulative: Some(Arc::new(cumulative)),
        })
    }

    pub fn noisy_attribute(
        alpha: f64,
        u_mean: f64,
        noises: Vec<NoiseModel>,
        prices: Vec<f64>,
        penalty: PenaltyKind,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) || !(-1.0..=1.0).contains(&u_mean) {
            return Err(Error::input("alpha must lie in [0,1] and u_mean in [-1,1]"));
        }
        if noises.is_empty() || noises.len() != prices.len() {
            return Err(Error::input("one noise model and one price per source"));
        }
        if noises.iter().any(|n| !(n.scale() > 0.0)) {
            return Err(Error::input("noise scales must be positive"));
        }
        let attributes = vec![vec![-1.0], vec![1.0]];
        let penalty = PenaltySpec::new(penalty, Polytope::from_attributes(&attributes, true)?)?;
        let k = noises.len();
        Ok(Self {
            kind: InstanceKind::NoisyAttribute { alpha, u_mean, noises },
            prices,
            attributes,
            penalty,
            ubar: 1.0,
            active: (0..k).collect(),
            lookup: None,
            cumulative: None,
        })
    }

    /// Keep only the listed sources (indices into the current source list).
    pub fn restrict_sources(&self, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() || keep.iter().any(|&k| k >= self.k()) {
            return Err(Error::input("invalid source subset"));
        }
        let mut out = self.clone();
        out.active = keep.iter().map(|&k| self.active[k]).collect();
        Ok(out)
    }

    /// Replace the penalty kind, keeping the attribute polytope.
    pub fn with_penalty(&self, kind: PenaltyKind) -> Result<Self> {
        let mut out = self.clone();
        out.penalty = PenaltySpec::new(kind, self.penalty.polytope().clone())?;
        Ok(out)
    }

    pub fn kind(&self) -> &InstanceKind {
        &self.kind
    }

    pub fn k(&self) -> usize {
        self.active.len()
    }

    pub fn d(&self) -> usize {
        self.penalty.dim()
    }

    pub fn prices(&self) -> Vec<f64> {
        self.active.iter().map(|&k| self.prices[k]).collect()
    }

    pub fn price(&self, k: usize) -> f64 {
        self.prices[self.active[k]]
    }

    pub fn attributes(&self) -> &[Vec<f64>] {
        &self.attributes
    }

    pub fn penalty(&self) -> &PenaltySpec {
        &self.penalty
    }

    pub fn ubar(&self) -> f64 {
        self.ubar
    }

    /// Public-context law `μ(z)`.
    pub fn z_law(&self) -> Vec<(usize, f64)> {
        match &self.kind {
            InstanceKind::Table(t) => {
                let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
                for r in &t.rows {
                    *acc.entry(r.z).or_insert(0.0) += r.prob;
                }
                acc.into_iter().filter(|(_, p)| *p > 0.0).collect()
            }
            _ => vec![(0, 1.0)],
        }
    }

    pub fn draw_user<R: Rng + ?Sized>(&self, rng: &mut R) -> UserDraw {
        let (z, u, a, contexts) = match &self.kind {
            InstanceKind::SymmetricTwoSource => {
                let a: f64 = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let u: f64 = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let c1 = (a == 1.0 && u == 1.0) as u8 as f64;
                let c2 = (a == -1.0 && u == 1.0) as u8 as f64;
                (0, u, vec![a], vec![vec![c1], vec![c2]])
            }
            InstanceKind::GaussianMonotone { .. } => {
                let a: f64 = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let u = loop {
                    let x = a + rng.sample::<f64, _>(StandardNormal);
                    if x.abs() <= GAUSSIAN_U_BOUND {
                        break x;
                    }
                };
                (0, u, vec![a], vec![vec![a, u], vec![u]])
            }
            InstanceKind::Table(t) => {
                let cum = self.cumulative.as_ref().expect("table cumulative");
                let x: f64 = rng.random::<f64>() * cum[cum.len() - 1];
                let idx = cum.partition_point(|&c| c <= x).min(t.rows.len() - 1);
                let r = &t.rows[idx];
                (r.z, r.u, r.a.clone(), r.c.iter().map(|&c| vec![c]).collect())
            }
            InstanceKind::NoisyAttribute { alpha, u_mean, noises } => {
                let a: f64 = if rng.random::<f64>() < *alpha { 1.0 } else { -1.0 };
                let u: f64 = if rng.random::<f64>() < 0.5 * (1.0 + u_mean) { 1.0 } else { -1.0 };
                let ctx = noises.iter().map(|n| vec![a + n.sample(rng)]).collect();
                (0, u, vec![a], ctx)
            }
        };
        let contexts = self.active.iter().map(|&k| contexts[k].clone()).collect();
        UserDraw { z, u, a, contexts }
    }

    /// Exact `(E[u | z, c_k], E[a | z, c_k])`.
    pub fn true_conditional_means(&self, z: usize, k: usize, c: &[f64]) -> Result<(f64, Vec<f64>)> {
        let src = *self
            .active
            .get(k)
            .ok_or_else(|| Error::input(format!("source {k} out of range")))?;
        match &self.kind {
            InstanceKind::SymmetricTwoSource | InstanceKind::Table(_) => {
                let key = (z, (c.first().copied().unwrap_or(f64::NAN) + 0.0).to_bits());
                let atom = self.lookup.as_ref().expect("finite lookup")[src]
                    .get(&key)
                    .ok_or_else(|| Error::input(format!("context {c:?} (z={z}) unreachable for source {k}")))?;
                Ok((atom.cond_u, atom.cond_a.clone()))
            }
            InstanceKind::GaussianMonotone { .. } => match (src, c) {
                (0, [a, u]) => Ok((*u, vec![*a])),
                (1, [u]) => Ok((*u, vec![u.tanh()])),
                _ => Err(Error::input(format!("context {c:?} unreachable for source {k}"))),
            },
            InstanceKind::NoisyAttribute { alpha, u_mean, noises } => {
                let a_hat = *c.first().ok_or_else(|| Error::input("empty context"))?;
                let s = posterior_mean_sign(*alpha, &noises[src], a_hat).unwrap_or(0.0);
                Ok((*u_mean, vec![s]))
            }
        }
    }

    /// Law of the conditional means revealed by source `k`.
    pub fn context_law(&self, k: usize) -> ContextLaw {
        let src = self.active[k];
        match &self.kind {
            InstanceKind::SymmetricTwoSource | InstanceKind::Table(_) => ContextLaw::Atoms(
                self.lookup.as_ref().expect("finite lookup")[src].values().cloned().collect(),
            ),
            InstanceKind::GaussianMonotone { .. } => {
                let b = GAUSSIAN_U_BOUND;
                // Mass of N(±1, 1) inside [−b, b]; identical for both signs.
                let mass = normal_cdf(b - 1.0) - normal_cdf(-b - 1.0);
                let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
                if src == 0 {
                    ContextLaw::Continuous(
                        [1.0f64, -1.0]
                            .into_iter()
                            .map(|a| DensityComponent {
                                z: 0,
                                lo: -b,
                                hi: b,
                                density: Arc::new(move |u| 0.5 * phi(u - a) / mass),
                                means: Arc::new(move |u| (u, vec![a])),
                            })
                            .collect(),
                    )
                } else {
                    ContextLaw::Continuous(vec![DensityComponent {
                        z: 0,
                        lo: -b,
                        hi: b,
                        density: Arc::new(move |u| 0.5 * (phi(u - 1.0) + phi(u + 1.0)) / mass),
                        means: Arc::new(|u| (u, vec![u.tanh()])),
                    }])
                }
            }
            InstanceKind::NoisyAttribute { alpha, u_mean, noises } => {
                let noise = noises[src];
                let (alpha, u_mean) = (*alpha, *u_mean);
                let r = 1.0 + noise.support_radius();
                ContextLaw::Continuous(vec![DensityComponent {
                    z: 0,
                    lo: -r,
                    hi: r,
                    density: Arc::new(move |x| {
                        alpha * noise.density(x - 1.0) + (1.0 - alpha) * noise.density(x + 1.0)
                    }),
                    means: Arc::new(move |x| {
                        (u_mean, vec![posterior_mean_sign(alpha, &noise, x).unwrap_or(0.0)])
                    }),
                }])
            }
        }
    }

    /// Affine features `(1, c)` used by the linear utility learner.
    pub fn features(&self, c: &[f64]) -> Vec<f64> {
        let mut f = Vec::with_capacity(c.len() + 1);
        f.push(1.0);
        f.extend_from_slice(c);
        f
    }

    /// True linear utility model of source `k`, when `E[u | c]` is affine in `c`.
    pub fn linear_model(&self, k: usize) -> Option<LinearModel> {
        let src = self.active[k];
        match &self.kind {
            InstanceKind::SymmetricTwoSource => Some(LinearModel {
                psi: vec![-1.0 / 3.0, 4.0 / 3.0],
                feature_bound: 2f64.sqrt(),
            }),
            InstanceKind::GaussianMonotone { .. } => Some(if src == 0 {
                LinearModel { psi: vec![0.0, 0.0, 1.0], feature_bound: (2.0 + GAUSSIAN_U_BOUND.powi(2)).sqrt() }
            } else {
                LinearModel { psi: vec![0.0, 1.0], feature_bound: (1.0 + GAUSSIAN_U_BOUND.powi(2)).sqrt() }
            }),
            _ => None,
        }
    }

    /// Attribute noise model of source `k` (noisy-attribute instance only).
    pub fn attribute_noise(&self, k: usize) -> Option<NoiseModel> {
        match &self.kind {
            InstanceKind::NoisyAttribute { noises, .. } => Some(noises[self.active[k]]),
            _ => None,
        }
    }

    /// `P(a = 1)` for the noisy-attribute instance.
    pub fn attribute_alpha(&self) -> Option<f64> {
        match &self.kind {
            InstanceKind::NoisyAttribute { alpha, .. } => Some(*alpha),
            _ => None,
        }
    }
}

/// `(E[u|c=1], E[a|c=1])` and `(E[u|c=0], E[a|c=0])` of the symmetric instance.
fn symmetric_means(k: usize) -> ((f64, f64), (f64, f64)) {
    if k == 0 {
        ((1.0, 1.0), (-1.0 / 3.0, -1.0 / 3.0))
    } else {
        ((1.0, -1.0), (-1.0 / 3.0, 1.0 / 3.0))
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn symmetric_conditional_means() {
        let inst = ProblemInstance::symmetric_two_source();
        assert_eq!(inst.true_conditional_means(0, 0, &[1.0]).unwrap(), (1.0, vec![1.0]));
        assert_eq!(inst.true_conditional_means(0, 0, &[0.0]).unwrap(), (-1.0 / 3.0, vec![-1.0 / 3.0]));
        assert_eq!(inst.true_conditional_means(0, 1, &[1.0]).unwrap(), (1.0, vec![-1.0]));
        assert!(inst.true_conditional_means(0, 0, &[0.5]).is_err());
    }

    #[test]
    fn gaussian_conditional_means() {
        let inst = ProblemInstance::gaussian_monotone(1.0, 0.1).unwrap();
        assert_eq!(inst.true_conditional_means(0, 0, &[-1.0, 0.3]).unwrap(), (0.3, vec![-1.0]));
        let (u, a) = inst.true_conditional_means(0, 1, &[0.7]).unwrap();
        assert_eq!(u, 0.7);
        assert!((a[0] - 0.7f64.tanh()).abs() < 1e-15);
    }

    #[test]
    fn symmetric_cells_are_uniform() {
        let inst = ProblemInstance::symmetric_two_source();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            let d = inst.draw_user(&mut rng);
            let idx = ((d.a[0] > 0.0) as usize) * 2 + (d.u > 0.0) as usize;
            counts[idx] += 1;
            assert_eq!(d.contexts[0][0] == 1.0, d.a[0] == 1.0 && d.u == 1.0);
            assert_eq!(d.contexts[1][0] == 1.0, d.a[0] == -1.0 && d.u == 1.0);
        }
        let sd = (n as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - 0.25 * n as f64).abs() < 4.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn table_parsing_and_lookup() {
        let text = "# two atoms\ndim 1\nprices 0.0\n0.5 0 1 1 1\n0.5 0 -1 -1 0\n";
        let model = TableModel::parse(text).unwrap();
        let inst = ProblemInstance::table(model, PenaltyKind::Zero).unwrap();
        assert_eq!(inst.true_conditional_means(0, 0, &[1.0]).unwrap(), (1.0, vec![1.0]));
        assert!(TableModel::parse("prices 0\n0.4 0 1 1 1\n").is_err());
        assert!(TableModel::parse("dim 1\n1 0 1 1 1\n").is_err());
    }

    #[test]
    fn deterministic_table_draws_are_constant() {
        let model = TableModel::parse("prices 0.2\n1.0 3 0.5 -0.5 7\n").unwrap();
        let inst = ProblemInstance::table(model, PenaltyKind::Zero).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let d = inst.draw_user(&mut rng);
            assert_eq!((d.z, d.u, d.a.clone(), d.contexts.clone()), (3, 0.5, vec![-0.5], vec![vec![7.0]]));
        }
    }

    #[test]
    fn normal_cdf_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.96) - 0.975_002_1).abs() < 1e-6);
        assert!((normal_cdf(-5.0) - 2.866_515_7e-7).abs() < 1e-9);
    }

    #[test]
    fn posterior_mean_reduces_to_tanh() {
        let g = NoiseModel::Gaussian { sigma: 1.0 };
        assert!((posterior_mean_sign(0.5, &g, 2.0).unwrap() - 2f64.tanh()).abs() < 1e-12);
        assert_eq!(posterior_mean_sign(0.5, &g, 0.0).unwrap(), 0.0);
    }
}
