//! Convex fairness penalties and their derived objects.
//!
//! A [`PenaltySpec`] bundles a convex, `L`-Lipschitz function `R` with the
//! attribute polytope `Δ` it lives on. It provides the Lipschitz extension
//! `R̄(p) = inf_{δ∈Δ} R(δ) + L‖p − δ‖`, the conjugate
//! `R*(λ) = max_{γ∈Δ} ⟨γ, λ⟩ − R(γ)`, minimum-norm subgradients, and the
//! ball-constrained target problem `argmax_{γ∈B(c, r)} ⟨λ, γ⟩ − R̄(γ)`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{axpy, dist, dot, golden_max, norm, scale, sub};
use crate::polytope::Polytope;

pub type PenaltyFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type SubgradientFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Tolerance used by the generic (non closed-form) maximisations.
const GENERIC_TOL: f64 = 1e-7;
/// Iteration cap and stall patience of the `d ≥ 2` ascent.
const ASCENT_ITERATIONS: usize = 2000;
const ASCENT_PATIENCE: usize = 200;

/// A user-supplied convex penalty.
#[derive(Clone)]
pub struct CustomPenalty {
    pub name: String,
    pub value: PenaltyFn,
    /// Must return the minimum-norm subgradient when one is supplied.
    pub subgradient: Option<SubgradientFn>,
    pub lipschitz: f64,
}

impl CustomPenalty {
    /// `scale · max(‖x‖ − width, 0)`: no charge inside a tolerance band.
    pub fn deadzone(scale: f64, width: f64) -> Self {
        let value: PenaltyFn = Arc::new(move |x: &[f64]| scale * (norm(x) - width).max(0.0));
        let subgradient: SubgradientFn = Arc::new(move |x: &[f64]| {
            let n = norm(x);
            if n > width && n > 0.0 {
                x.iter().map(|v| scale * v / n).collect()
            } else {
                vec![0.0; x.len()]
            }
        });
        Self {
            name: "deadzone".into(),
            value,
            subgradient: Some(subgradient),
            lipschitz: scale,
        }
    }
}

#[derive(Clone)]
pub enum PenaltyKind {
    Zero,
    /// `s · ‖x‖₂`.
    ScaledAbs(f64),
    /// `s · ‖x‖₂²`.
    ScaledQuadratic(f64),
    Custom(CustomPenalty),
}

impl fmt::Debug for PenaltyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PenaltyKind::Zero => write!(f, "Zero"),
            PenaltyKind::ScaledAbs(s) => write!(f, "ScaledAbs({s})"),
            PenaltyKind::ScaledQuadratic(s) => write!(f, "ScaledQuadratic({s})"),
            PenaltyKind::Custom(c) => write!(f, "Custom({})", c.name),
        }
    }
}

/// Serializable penalty description used in run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PenaltyConfig {
    Zero,
    ScaledAbs { scale: f64 },
    ScaledQuadratic { scale: f64 },
    Custom { name: String },
}

/// Named constructors for custom penalties.
#[derive(Clone, Default)]
pub struct PenaltyRegistry {
    entries: BTreeMap<String, CustomPenalty>,
}

impl PenaltyRegistry {
    /// Registry with the bundled custom penalties.
    pub fn with_builtins() -> Self {
        let mut reg = Self::default();
        reg.register("deadzone", CustomPenalty::deadzone(3.0, 0.2));
        reg
    }

    pub fn register(&mut self, name: &str, mut penalty: CustomPenalty) {
        penalty.name = name.to_string();
        self.entries.insert(name.to_string(), penalty);
    }

    pub fn resolve(&self, config: &PenaltyConfig) -> Result<PenaltyKind> {
        Ok(match config {
            PenaltyConfig::Zero => PenaltyKind::Zero,
            PenaltyConfig::ScaledAbs { scale } => PenaltyKind::ScaledAbs(*scale),
            PenaltyConfig::ScaledQuadratic { scale } => PenaltyKind::ScaledQuadratic(*scale),
            PenaltyConfig::Custom { name } => PenaltyKind::Custom(
                self.entries
                    .get(name)
                    .cloned()
                    .ok_or_else(|| Error::config(format!("unknown custom penalty '{name}'")))?,
            ),
        })
    }
}

/// Ball `B(center, radius)` on which the allocation target is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallRegion {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl BallRegion {
    pub fn new(center: Vec<f64>, radius: f64) -> Self {
        Self { center, radius }
    }

    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        dist(p, &self.center) <= self.radius + tol
    }

    pub fn project(&self, p: &[f64]) -> Vec<f64> {
        let d = dist(p, &self.center);
        if d <= self.radius {
            p.to_vec()
        } else {
            let dir = sub(p, &self.center);
            axpy(&self.center, self.radius / d, &dir)
        }
    }
}

#[derive(Clone)]
pub struct PenaltySpec {
    kind: PenaltyKind,
    lipschitz: f64,
    polytope: Polytope,
}

impl fmt::Debug for PenaltySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PenaltySpec")
            .field("kind", &self.kind)
            .field("lipschitz", &self.lipschitz)
            .field("dim", &self.polytope.dim())
            .field("diam", &self.polytope.diam())
            .finish()
    }
}

impl PenaltySpec {
    pub fn new(kind: PenaltyKind, polytope: Polytope) -> Result<Self> {
        let lipschitz = match &kind {
            PenaltyKind::Zero => 0.0,
            PenaltyKind::ScaledAbs(s) | PenaltyKind::ScaledQuadratic(s) if *s < 0.0 || !s.is_finite() => {
                return Err(Error::config(format!("penalty scale must be finite and nonnegative, got {s}")))
            }
            PenaltyKind::ScaledAbs(s) => *s,
            PenaltyKind::ScaledQuadratic(s) => 2.0 * s * polytope.max_vertex_norm(),
            PenaltyKind::Custom(c) => {
                if c.lipschitz < 0.0 || !c.lipschitz.is_finite() {
                    return Err(Error::config("custom penalty needs a finite nonnegative Lipschitz constant"));
                }
                c.lipschitz
            }
        };
        Ok(Self { kind, lipschitz, polytope })
    }

    /// `5|δ|` on `[-1, 1]`, the penalty of the symmetric two-source instance.
    pub fn scaled_abs_interval(scale: f64) -> Self {
        Self::new(PenaltyKind::ScaledAbs(scale), Polytope::symmetric_interval()).expect("valid")
    }

    /// Same penalty on a different domain (used for the ratio variant).
    pub fn with_polytope(&self, polytope: Polytope) -> Result<Self> {
        Self::new(self.kind.clone(), polytope)
    }

    pub fn kind(&self) -> &PenaltyKind {
        &self.kind
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn dim(&self) -> usize {
        self.polytope.dim()
    }

    pub fn polytope(&self) -> &Polytope {
        &self.polytope
    }

    pub fn diam(&self) -> f64 {
        self.polytope.diam()
    }

    fn check_dim(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.dim() {
            return Err(Error::input(format!(
                "dimension mismatch: expected {}, got {}",
                self.dim(),
                p.len()
            )));
        }
        Ok(())
    }

    /// `R(point)`; dimension-checked.
    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        self.check_dim(point)?;
        Ok(self.value(point))
    }

    /// `R(point)` without checks.
    pub fn value(&self, p: &[f64]) -> f64 {
        match &self.kind {
            PenaltyKind::Zero => 0.0,
            PenaltyKind::ScaledAbs(s) => s * norm(p),
            PenaltyKind::ScaledQuadratic(s) => s * dot(p, p),
            PenaltyKind::Custom(c) => (c.value)(p),
        }
    }

    /// `R̄(point)`; dimension-checked.
    pub fn eval_extension(&self, point: &[f64]) -> Result<f64> {
        self.check_dim(point)?;
        Ok(self.extension(point))
    }

    /// `R̄(p) = inf_{δ∈Δ} R(δ) + L‖p − δ‖`.
    pub fn extension(&self, p: &[f64]) -> f64 {
        if let PenaltyKind::Zero = self.kind {
            return 0.0;
        }
        if let Some((lo, hi)) = self.polytope.interval() {
            // In one dimension `R(δ) − Lδ` is nonincreasing, so the infimum
            // sits at the nearest endpoint.
            let q = p[0].clamp(lo, hi);
            return self.value(&[q]) + self.lipschitz * (p[0] - q).abs();
        }
        let origin = vec![0.0; self.dim()];
        if let PenaltyKind::ScaledAbs(s) = self.kind {
            if self.polytope.contains(&origin, 1e-12) {
                // Triangle inequality: the infimum is attained at δ = 0.
                return s * norm(p);
            }
        }
        if self.polytope.contains(p, 1e-12) {
            return self.value(p);
        }
        let l = self.lipschitz;
        let (_, v) = self
            .polytope
            .maximize(|d| -(self.value(d) + l * dist(p, d)), GENERIC_TOL);
        -v
    }

    /// `R*(λ)`; dimension-checked.
    pub fn conjugate(&self, lambda: &[f64]) -> Result<f64> {
        self.check_dim(lambda)?;
        Ok(self.conj(lambda))
    }

    /// `R*(λ) = max_{γ∈Δ} ⟨γ, λ⟩ − R(γ)` without checks.
    pub fn conj(&self, lambda: &[f64]) -> f64 {
        match &self.kind {
            PenaltyKind::Zero => self.polytope.support(lambda),
            PenaltyKind::ScaledAbs(s) => {
                if let Some((lo, hi)) = self.polytope.interval() {
                    // Concave and piecewise linear with a kink at 0.
                    let l = lambda[0];
                    let mut best = (l * lo - s * lo.abs()).max(l * hi - s * hi.abs());
                    if lo <= 0.0 && hi >= 0.0 {
                        best = best.max(0.0);
                    }
                    best
                } else {
                    self.generic_conjugate(lambda)
                }
            }
            PenaltyKind::ScaledQuadratic(s) => {
                if *s == 0.0 {
                    return self.polytope.support(lambda);
                }
                let p = self.polytope.project(&scale(lambda, 0.5 / s));
                dot(&p, lambda) - s * dot(&p, &p)
            }
            PenaltyKind::Custom(_) => self.generic_conjugate(lambda),
        }
    }

    fn generic_conjugate(&self, lambda: &[f64]) -> f64 {
        let tol = if self.dim() == 1 { 1e-12 } else { GENERIC_TOL };
        self.polytope
            .maximize(|g| dot(g, lambda) - self.value(g), tol)
            .1
    }

    /// Upper bound on `R*` over the ball `‖λ‖ ≤ radius` (exact when `d = 1`).
    pub fn max_conjugate_on_ball(&self, radius: f64) -> f64 {
        if self.dim() == 1 {
            return self.conj(&[radius]).max(self.conj(&[-radius]));
        }
        // R*(λ) ≤ ‖λ‖·max‖γ‖ − min_Δ R.
        let (_, neg_min) = self.polytope.maximize(|g| -self.value(g), GENERIC_TOL);
        radius * self.polytope.max_vertex_norm() + neg_min
    }

    /// Minimum-norm element of `∂R(point)`.
    pub fn min_norm_subgradient(&self, point: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(point)?;
        Ok(match &self.kind {
            PenaltyKind::Zero => vec![0.0; self.dim()],
            PenaltyKind::ScaledAbs(s) => {
                let n = norm(point);
                if n == 0.0 {
                    vec![0.0; self.dim()]
                } else {
                    scale(point, s / n)
                }
            }
            PenaltyKind::ScaledQuadratic(s) => scale(point, 2.0 * s),
            PenaltyKind::Custom(c) => match &c.subgradient {
                Some(g) => g(point),
                None => {
                    return Err(Error::config(format!(
                        "custom penalty '{}' has no subgradient",
                        c.name
                    )))
                }
            },
        })
    }

    /// Minimum-norm element of `∂R(0)`, the initial dual multiplier.
    pub fn subgradient_at_zero(&self) -> Result<Vec<f64>> {
        self.min_norm_subgradient(&vec![0.0; self.dim()])
    }

    /// `argmax_{γ ∈ region} ⟨λ, γ⟩ − R̄(γ)`.
    pub fn solve_gamma(&self, lambda: &[f64], region: &BallRegion) -> Result<Vec<f64>> {
        self.check_dim(lambda)?;
        self.check_dim(&region.center)?;
        if lambda.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("lambda must be finite"));
        }
        if region.radius <= 0.0 {
            return Ok(region.center.clone());
        }
        if let PenaltyKind::Zero = self.kind {
            let n = norm(lambda);
            if n == 0.0 {
                return Ok(region.center.clone());
            }
            return Ok(axpy(&region.center, region.radius / n, lambda));
        }
        if self.dim() == 1 {
            let c = region.center[0];
            let l = lambda[0];
            if let (PenaltyKind::ScaledQuadratic(s), Some((lo, hi))) = (&self.kind, self.polytope.interval()) {
                // Concave in γ, so clamping the unconstrained maximiser is exact.
                let free = if *s > 0.0 && l.abs() < self.lipschitz {
                    (l / (2.0 * s)).clamp(lo, hi)
                } else if l > 0.0 {
                    f64::INFINITY
                } else if l < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    0.0f64.clamp(lo, hi)
                };
                return Ok(vec![free.clamp(c - region.radius, c + region.radius)]);
            }
            let (x, _) = golden_max(
                |g| l * g - self.extension(&[g]),
                c - region.radius,
                c + region.radius,
                1e-12,
            );
            return Ok(vec![x]);
        }
        self.solve_gamma_ascent(lambda, region)
    }

    /// Projected subgradient ascent followed by a zooming lattice polish.
    /// The ascent stops early once it stalls; the polish does the fine work.
    fn solve_gamma_ascent(&self, lambda: &[f64], region: &BallRegion) -> Result<Vec<f64>> {
        let obj = |g: &[f64]| dot(lambda, g) - self.extension(g);
        let d = self.dim();
        let mut x = region.center.clone();
        let mut best = x.clone();
        let mut best_v = obj(&x);
        let h = 1e-7;
        let mut stale = 0;
        for iter in 1..=ASCENT_ITERATIONS {
            let grad: Vec<f64> = (0..d)
                .map(|i| {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    lambda[i] - (self.extension(&xp) - self.extension(&xm)) / (2.0 * h)
                })
                .collect();
            let gn = norm(&grad);
            if gn < 1e-8 {
                break;
            }
            let step = region.radius / (iter as f64).sqrt();
            x = region.project(&axpy(&x, step / gn, &grad));
            let v = obj(&x);
            if v > best_v + 1e-12 {
                best_v = v;
                best = x.clone();
                stale = 0;
            } else {
                stale += 1;
                if stale >= ASCENT_PATIENCE {
                    break;
                }
            }
        }
        // Zooming lattice search inside the ball.
        let mut step = region.radius / 50.0;
        let offsets: Vec<Vec<f64>> = lattice(d);
        while step > 1e-10 {
            let center = best.clone();
            for off in &offsets {
                let cand = region.project(&axpy(&center, step, off));
                let v = obj(&cand);
                if v > best_v + 1e-15 {
                    best_v = v;
                    best = cand;
                }
            }
            if best == center {
                step /= 3.0;
            }
        }
        Ok(best)
    }

    /// First-order optimality residual of `gamma` for the target problem:
    /// the largest directional derivative of the objective towards the
    /// sampled points of the region (scaled by their distance). Zero at the
    /// optimum.
    pub fn gamma_residual(&self, lambda: &[f64], gamma: &[f64], samples: &[Vec<f64>]) -> f64 {
        let obj = |g: &[f64]| dot(lambda, g) - self.extension(g);
        let f0 = obj(gamma);
        let h: f64 = 1e-6;
        let mut worst: f64 = 0.0;
        for s in samples {
            let dir = sub(s, gamma);
            let len = norm(&dir);
            if len < 1e-12 {
                continue;
            }
            let u = scale(&dir, 1.0 / len);
            let step = h.min(len / 2.0);
            let f1 = obj(&axpy(gamma, step, &u));
            let f2 = obj(&axpy(gamma, 2.0 * step, &u));
            // One-sided second-order difference, exact for quadratics.
            let deriv = (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * step);
            worst = worst.max(deriv * len);
        }
        worst
    }
}

/// Offsets in `{-2..2}^d` (excluding the origin), for `d ≤ 3`.
fn lattice(d: usize) -> Vec<Vec<f64>> {
    let base = 5usize;
    let mut out = Vec::new();
    for mut code in 0..base.pow(d as u32) {
        let v: Vec<f64> = (0..d)
            .map(|_| {
                let digit = (code % base) as f64 - 2.0;
                code /= base;
                digit
            })
            .collect();
        if v.iter().any(|&x| x != 0.0) {
            out.push(v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abs5() -> PenaltySpec {
        PenaltySpec::scaled_abs_interval(5.0)
    }

    #[test]
    fn evaluation_examples() {
        assert_eq!(abs5().eval(&[0.0]).unwrap(), 0.0);
        assert_eq!(abs5().eval(&[0.5]).unwrap(), 2.5);
        let q = PenaltySpec::new(PenaltyKind::ScaledQuadratic(2.0), Polytope::symmetric_interval()).unwrap();
        assert!((q.eval(&[-0.3]).unwrap() - 0.18).abs() < 1e-15);
        assert!(abs5().eval(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn extension_examples() {
        assert_eq!(abs5().eval_extension(&[2.0]).unwrap(), 10.0);
        assert_eq!(abs5().eval_extension(&[-0.4]).unwrap(), abs5().value(&[-0.4]));
        let z = PenaltySpec::new(PenaltyKind::Zero, Polytope::symmetric_interval()).unwrap();
        assert_eq!(z.eval_extension(&[3.0]).unwrap(), 0.0);
    }

    #[test]
    fn conjugate_examples() {
        let z = PenaltySpec::new(PenaltyKind::Zero, Polytope::symmetric_interval()).unwrap();
        assert_eq!(z.conjugate(&[3.0]).unwrap(), 3.0);
        assert_eq!(abs5().conjugate(&[0.0]).unwrap(), 0.0);
        assert_eq!(abs5().conjugate(&[7.0]).unwrap(), 2.0);
    }

    #[test]
    fn subgradients_at_zero_are_minimum_norm() {
        assert_eq!(abs5().subgradient_at_zero().unwrap(), vec![0.0]);
        let q = PenaltySpec::new(PenaltyKind::ScaledQuadratic(3.0), Polytope::symmetric_interval()).unwrap();
        assert_eq!(q.subgradient_at_zero().unwrap(), vec![0.0]);
        let mut c = CustomPenalty::deadzone(1.0, 0.1);
        c.subgradient = None;
        let spec = PenaltySpec::new(PenaltyKind::Custom(c), Polytope::symmetric_interval()).unwrap();
        assert!(matches!(spec.subgradient_at_zero(), Err(Error::Config(_))));
    }

    #[test]
    fn solve_gamma_examples() {
        let z = PenaltySpec::new(PenaltyKind::Zero, Polytope::symmetric_interval()).unwrap();
        let region = BallRegion::new(vec![0.5], 2.0);
        assert_eq!(z.solve_gamma(&[-1.0], &region).unwrap(), vec![-1.5]);
        let g = abs5().solve_gamma(&[0.0], &BallRegion::new(vec![0.0], 2.0)).unwrap();
        assert!(g[0].abs() < 1e-9);
        let q = PenaltySpec::new(PenaltyKind::ScaledQuadratic(1.0), Polytope::symmetric_interval()).unwrap();
        let g = q.solve_gamma(&[1.0], &BallRegion::new(vec![0.0], 2.0)).unwrap();
        assert!((g[0] - 0.5).abs() < 1e-9);
        let point = abs5().solve_gamma(&[1.0], &BallRegion::new(vec![0.3], 0.0)).unwrap();
        assert_eq!(point, vec![0.3]);
    }

    #[test]
    fn two_dimensional_target_problem() {
        let poly = Polytope::from_attributes(&[vec![1.0, 0.0], vec![0.0, 1.0]], true).unwrap();
        let spec = PenaltySpec::new(PenaltyKind::ScaledQuadratic(1.0), poly).unwrap();
        let region = BallRegion::new(vec![0.0, 0.0], spec.diam());
        let lambda = [0.4, 0.2];
        let g = spec.solve_gamma(&lambda, &region).unwrap();
        // Interior stationary point γ = λ / 2 lies in Δ.
        assert!((g[0] - 0.2).abs() < 1e-6 && (g[1] - 0.1).abs() < 1e-6, "{g:?}");
    }
}
