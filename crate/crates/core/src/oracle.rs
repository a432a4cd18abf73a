//! Offline benchmark: the saddle point `sup_π inf_λ D_π(λ)`.
//!
//! For a source-selection policy `π` the dual function is
//! `D_π(λ) = R*(λ) + Σ_k π_k (E[max(E[u|c_k] − ⟨λ, E[a|c_k]⟩, 0)] − p_k)`,
//! convex in `λ` and linear in `π`. With public contexts the policy is one
//! distribution per context value and the expectation is split by `z`.
//!
//! Expectations over continuous conditional-mean laws are computed by
//! locating the roots of the selection margin on a grid, refining them by
//! bisection, and integrating the selected pieces with adaptive quadrature.
//! Every solve reports a duality-gap certificate.

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::environment::{ContextLaw, DensityComponent, ProblemInstance};
use crate::error::{Error, Result};
use crate::numeric::{dot, golden_max, golden_min};
use crate::parallel::{self, ExecMode};

/// Largest accepted duality gap.
pub const GAP_TOLERANCE: f64 = 1e-4;
/// Grid size used to bracket roots of the selection margin.
const ROOT_GRID: usize = 200;
const QUAD_TOL: f64 = 1e-11;
const FW_ITERATIONS: usize = 500;
/// Largest number of deterministic per-context policies enumerated.
const MAX_POLICIES: usize = 4096;
/// Endpoint preference when the outer objective is flat.
const TIE_SLACK: f64 = 1e-9;

/// Saddle-point solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptSolution {
    /// `OPT / T`.
    pub rate: f64,
    /// One row per public context (a single row without public contexts).
    pub policy: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
    /// `inf_λ max_π D_π(λ) − inf_λ D_{π*}(λ)`.
    pub gap: f64,
}

impl OptSolution {
    /// Source distribution for the first (or only) context row.
    pub fn pi(&self) -> &[f64] {
        &self.policy[0]
    }
}

/// Best deterministic policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticSolution {
    pub rate: f64,
    /// Chosen source per context row.
    pub choice: Vec<usize>,
}

/// Expected allocation statistics under the saddle-point policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InducedStats {
    pub mass: f64,
    pub utility: f64,
    pub attribute: Vec<f64>,
    /// `E[x · P(a = 1 | c)]` for scalar `±1` attributes.
    pub positive: f64,
    pub price: f64,
}

/// One row of a `(r, p)` sweep on the Gaussian instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub r: f64,
    pub p: f64,
    pub rate: f64,
    /// Probability of buying the paid full-information source.
    pub pi_star: f64,
    pub lambda_star: f64,
    pub gap: f64,
    /// `P(a = 1 | x = 1)`.
    pub p_a1_given_x1: f64,
    /// `R(E[a x]) / E[u x]`.
    pub penalty_share: f64,
    /// `p π* / E[u x]`.
    pub price_share: f64,
}

pub struct Oracle<'a> {
    instance: &'a ProblemInstance,
    laws: Vec<ContextLaw>,
    /// Context values and their probabilities.
    zs: Vec<(usize, f64)>,
    per_context: bool,
    radius: f64,
    worst_quad: Cell<f64>,
}

impl<'a> Oracle<'a> {
    pub fn new(instance: &'a ProblemInstance) -> Self {
        Self {
            instance,
            laws: (0..instance.k()).map(|k| instance.context_law(k)).collect(),
            zs: instance.z_law(),
            per_context: false,
            radius: instance.penalty().lipschitz() + 0.5,
            worst_quad: Cell::new(0.0),
        }
    }

    /// Let the policy depend on the public context.
    pub fn per_context(mut self, on: bool) -> Self {
        self.per_context = on;
        self
    }

    /// Half-width of the box searched for `λ`.
    pub fn lambda_radius(&self) -> f64 {
        self.radius
    }

    fn rows(&self) -> usize {
        if self.per_context {
            self.zs.len()
        } else {
            1
        }
    }

    fn row_of(&self, z: usize) -> usize {
        if self.per_context {
            self.zs.iter().position(|(v, _)| *v == z).unwrap_or(0)
        } else {
            0
        }
    }

    /// `Σ_rows` of `E[1{row} · w(E[u|c], E[a|c]) · x]` with
    /// `x = 1{E[u|c] ≥ ⟨λ, E[a|c]⟩}`.
    fn selected<F: Fn(f64, &[f64]) -> f64>(&self, k: usize, lambda: &[f64], w: F) -> Vec<f64> {
        let mut out = vec![0.0; self.rows()];
        match &self.laws[k] {
            ContextLaw::Atoms(atoms) => {
                for atom in atoms {
                    if atom.cond_u >= dot(lambda, &atom.cond_a) {
                        out[self.row_of(atom.z)] += atom.prob * w(atom.cond_u, &atom.cond_a);
                    }
                }
            }
            ContextLaw::Continuous(parts) => {
                for part in parts {
                    out[self.row_of(part.z)] += self.integrate_part(part, lambda, &w);
                }
            }
        }
        out
    }

    fn integrate_part<F: Fn(f64, &[f64]) -> f64>(&self, part: &DensityComponent, lambda: &[f64], w: &F) -> f64 {
        let margin = |x: f64| {
            let (u, a) = (part.means)(x);
            u - dot(lambda, &a)
        };
        let h = (part.hi - part.lo) / ROOT_GRID as f64;
        let mut breaks = vec![part.lo];
        let mut prev = margin(part.lo);
        for i in 1..=ROOT_GRID {
            let x = if i == ROOT_GRID { part.hi } else { part.lo + i as f64 * h };
            let g = margin(x);
            if (prev >= 0.0) != (g >= 0.0) {
                let (mut a, mut b) = (x - h, x);
                let sa = prev >= 0.0;
                for _ in 0..80 {
                    let mid = 0.5 * (a + b);
                    if (margin(mid) >= 0.0) == sa {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                breaks.push(0.5 * (a + b));
            }
            prev = g;
        }
        breaks.push(part.hi);
        let mut total = 0.0;
        for pair in breaks.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            if hi <= lo || margin(0.5 * (lo + hi)) < 0.0 {
                continue;
            }
            let q = crate::numeric::integrate(
                |x| {
                    let (u, a) = (part.means)(x);
                    w(u, &a) * (part.density)(x)
                },
                lo,
                hi,
                QUAD_TOL,
            );
            if !q.converged {
                self.worst_quad.set(self.worst_quad.get().max(q.error));
            }
            total += q.value;
        }
        total
    }

    /// Per-row expected virtual value of source `k`, prices included.
    fn virtual_values(&self, k: usize, lambda: &[f64]) -> Vec<f64> {
        let mut v = self.selected(k, lambda, |u, a| u - dot(lambda, a));
        let price = self.instance.price(k);
        if self.per_context {
            for (row, (_, mu)) in v.iter_mut().zip(&self.zs) {
                *row -= mu * price;
            }
        } else {
            v[0] -= price;
        }
        v
    }

    /// `values[row][k]`.
    fn value_matrix(&self, lambda: &[f64]) -> Vec<Vec<f64>> {
        let per_source: Vec<Vec<f64>> = (0..self.instance.k()).map(|k| self.virtual_values(k, lambda)).collect();
        (0..self.rows())
            .map(|row| per_source.iter().map(|v| v[row]).collect())
            .collect()
    }

    /// `D(λ, k)`: the dual function of the deterministic policy "always buy `k`".
    pub fn dual_value(&self, k: usize, lambda: &[f64]) -> f64 {
        self.instance.penalty().conj(lambda) + self.virtual_values(k, lambda).iter().sum::<f64>()
    }

    /// `D_π(λ)` for a policy matrix.
    pub fn policy_value(&self, policy: &[Vec<f64>], lambda: &[f64]) -> f64 {
        let m = self.value_matrix(lambda);
        self.instance.penalty().conj(lambda)
            + m.iter()
                .zip(policy)
                .map(|(row, pi)| dot(row, pi))
                .sum::<f64>()
    }

    /// `inf_λ D_π(λ)` and its minimiser.
    pub fn inner(&self, policy: &[Vec<f64>]) -> (Vec<f64>, f64) {
        minimize_box(self.instance.d(), self.radius, |l| self.policy_value(policy, l))
    }

    /// `inf_λ max_π D_π(λ)`: an upper bound on the saddle value.
    pub fn upper(&self) -> (Vec<f64>, f64) {
        minimize_box(self.instance.d(), self.radius, |l| {
            self.instance.penalty().conj(l)
                + self
                    .value_matrix(l)
                    .iter()
                    .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
                    .sum::<f64>()
        })
    }

    fn check_quadrature(&self) -> Result<()> {
        let worst = self.worst_quad.get();
        if worst > 1e-8 {
            return Err(Error::Numerical {
                message: "quadrature did not converge".into(),
                achieved: worst,
            });
        }
        Ok(())
    }

    /// Solve the saddle point; fails if the certificate exceeds [`GAP_TOLERANCE`].
    pub fn solve(&self) -> Result<OptSolution> {
        let k = self.instance.k();
        let rows = self.rows();
        let (lambda_up, upper) = self.upper();
        let policy = if k == 1 {
            vec![vec![1.0]; rows]
        } else if rows == 1 && self.instance.d() == 1 {
            vec![self.best_pair()]
        } else {
            self.frank_wolfe(upper)
        };
        let (_, lower) = self.inner(&policy);
        self.check_quadrature()?;
        let gap = upper - lower;
        if gap > GAP_TOLERANCE {
            return Err(Error::Numerical {
                message: "saddle-point certificate above tolerance".into(),
                achieved: gap,
            });
        }
        Ok(OptSolution { rate: lower, policy, lambda: lambda_up, gap: gap.max(0.0) })
    }

    /// Single context, scalar attribute: an optimal policy mixes at most two
    /// sources, so a golden-section search over every pair is exact. Pure
    /// policies win ties within [`TIE_SLACK`], lower source index first.
    fn best_pair(&self) -> Vec<f64> {
        let k = self.instance.k();
        let unit = |i: usize| -> Vec<f64> { (0..k).map(|j| if j == i { 1.0 } else { 0.0 }).collect() };
        let mut candidates: Vec<(Vec<f64>, f64)> = (0..k)
            .map(|i| {
                let p = unit(i);
                let v = self.inner(std::slice::from_ref(&p)).1;
                (p, v)
            })
            .collect();
        for i in 0..k {
            for j in i + 1..k {
                let mix = |t: f64| -> Vec<f64> {
                    let mut p = vec![0.0; k];
                    p[i] = t;
                    p[j] = 1.0 - t;
                    p
                };
                let (t, v) = golden_max(|t| self.inner(&[mix(t)]).1, 0.0, 1.0, 1e-9);
                candidates.push((mix(t), v));
            }
        }
        let best = candidates.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
        candidates
            .into_iter()
            .find(|c| c.1 >= best - TIE_SLACK)
            .map(|c| c.0)
            .unwrap_or_else(|| unit(0))
    }

    /// Frank-Wolfe ascent on the concave function `π ↦ inf_λ D_π(λ)` over a
    /// product of simplices, with exact line search.
    fn frank_wolfe(&self, upper: f64) -> Vec<Vec<f64>> {
        let k = self.instance.k();
        let mut policy = vec![vec![1.0 / k as f64; k]; self.rows()];
        let (mut lambda, mut value) = self.inner(&policy);
        for (choice, v) in self.vertex_values() {
            if v >= value - TIE_SLACK {
                policy = one_hot_policy(&choice, k);
                value = v;
                lambda = self.inner(&policy).0;
            }
        }
        for _ in 0..FW_ITERATIONS {
            if upper - value <= 1e-9 {
                break;
            }
            let grad = self.value_matrix(&lambda);
            let target: Vec<Vec<f64>> = grad
                .iter()
                .map(|row| {
                    let best = argmax(row);
                    (0..k).map(|j| if j == best { 1.0 } else { 0.0 }).collect()
                })
                .collect();
            let mix = |t: f64| -> Vec<Vec<f64>> {
                policy
                    .iter()
                    .zip(&target)
                    .map(|(p, s)| p.iter().zip(s).map(|(a, b)| a + t * (b - a)).collect())
                    .collect()
            };
            let (t, v) = golden_max(|t| self.inner(&mix(t)).1, 0.0, 1.0, 1e-8);
            if v <= value {
                break;
            }
            policy = mix(t);
            let (l, val) = self.inner(&policy);
            lambda = l;
            value = val;
        }
        policy
    }

    /// `inf_λ` of every deterministic policy that the search enumerates.
    fn vertex_values(&self) -> Vec<(Vec<usize>, f64)> {
        let k = self.instance.k();
        let rows = self.rows();
        let count = (k as f64).powi(rows as i32);
        if count > MAX_POLICIES as f64 {
            return Vec::new();
        }
        (0..count as usize)
            .map(|mut code| {
                let choice: Vec<usize> = (0..rows)
                    .map(|_| {
                        let c = code % k;
                        code /= k;
                        c
                    })
                    .collect();
                let v = self.inner(&one_hot_policy(&choice, k)).1;
                (choice, v)
            })
            .collect()
    }

    /// Best deterministic policy (per context when enabled).
    pub fn solve_static(&self) -> Result<StaticSolution> {
        let vertices = self.vertex_values();
        if vertices.is_empty() {
            return Err(Error::input(format!(
                "more than {MAX_POLICIES} deterministic policies; static benchmark not enumerated"
            )));
        }
        self.check_quadrature()?;
        let (choice, rate) = vertices
            .into_iter()
            .fold((Vec::new(), f64::NEG_INFINITY), |best, (c, v)| if v > best.1 { (c, v) } else { best });
        Ok(StaticSolution { rate, choice })
    }

    /// Expected allocation statistics for `policy` and a fixed `λ`.
    pub fn induced(&self, policy: &[Vec<f64>], lambda: &[f64]) -> InducedStats {
        let d = self.instance.d();
        let mut stats = InducedStats { mass: 0.0, utility: 0.0, attribute: vec![0.0; d], positive: 0.0, price: 0.0 };
        for k in 0..self.instance.k() {
            let weight_rows: Vec<f64> = policy.iter().map(|p| p[k]).collect();
            let combine = |v: Vec<f64>| v.iter().zip(&weight_rows).map(|(a, b)| a * b).sum::<f64>();
            stats.mass += combine(self.selected(k, lambda, |_, _| 1.0));
            stats.utility += combine(self.selected(k, lambda, |u, _| u));
            for j in 0..d {
                stats.attribute[j] += combine(self.selected(k, lambda, |_, a| a[j]));
            }
            stats.positive += combine(self.selected(k, lambda, |_, a| 0.5 * (1.0 + a[0])));
            let buy = if self.per_context {
                self.zs.iter().zip(&weight_rows).map(|((_, mu), w)| mu * w).sum::<f64>()
            } else {
                weight_rows[0]
            };
            stats.price += buy * self.instance.price(k);
        }
        stats
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn one_hot_policy(choice: &[usize], k: usize) -> Vec<Vec<f64>> {
    choice
        .iter()
        .map(|&c| (0..k).map(|j| if j == c { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Minimise a convex function over the box `[−r, r]^d`.
///
/// One dimension uses golden-section search; otherwise a grid start is
/// refined by a shrinking pattern search.
pub fn minimize_box<F: FnMut(&[f64]) -> f64>(d: usize, r: f64, mut f: F) -> (Vec<f64>, f64) {
    if d == 1 {
        let (x, v) = golden_min(|t| f(&[t]), -r, r, 1e-10);
        return (vec![x], v);
    }
    let n: i64 = if d == 2 { 20 } else { 6 };
    let h0 = 2.0 * r / n as f64;
    let mut best = (vec![0.0; d], f(&vec![0.0; d]));
    let total = (n as usize + 1).pow(d as u32);
    for mut code in 0..total {
        let x: Vec<f64> = (0..d)
            .map(|_| {
                let i = (code % (n as usize + 1)) as f64;
                code /= n as usize + 1;
                -r + i * h0
            })
            .collect();
        let v = f(&x);
        if v < best.1 {
            best = (x, v);
        }
    }
    let offsets: Vec<Vec<f64>> = (0..5usize.pow(d as u32))
        .filter_map(|mut code| {
            let o: Vec<f64> = (0..d)
                .map(|_| {
                    let v = (code % 5) as f64 - 2.0;
                    code /= 5;
                    v
                })
                .collect();
            o.iter().any(|&v| v != 0.0).then_some(o)
        })
        .collect();
    let mut h = h0;
    while h > 1e-10 {
        let center = best.0.clone();
        for o in &offsets {
            let x: Vec<f64> = center
                .iter()
                .zip(o)
                .map(|(c, oi)| (c + h * oi).clamp(-r, r))
                .collect();
            let v = f(&x);
            if v < best.1 {
                best = (x, v);
            }
        }
        if best.0 == center {
            h /= 3.0;
        }
    }
    best
}

/// Sensitivity of the Gaussian instance over a grid of `(r, p)` values.
pub fn sensitivity_sweep(rs: &[f64], ps: &[f64], mode: ExecMode) -> Result<Vec<SensitivityRow>> {
    if rs.is_empty() || ps.is_empty() {
        return Err(Error::input("sensitivity grid is empty"));
    }
    let grid: Vec<(f64, f64)> = rs.iter().flat_map(|&r| ps.iter().map(move |&p| (r, p))).collect();
    parallel::map(mode, &grid, |&(r, p)| sensitivity_point(r, p)).into_iter().collect()
}

pub fn sensitivity_point(r: f64, p: f64) -> Result<SensitivityRow> {
    let instance = ProblemInstance::gaussian_monotone(r, p)?;
    let oracle = Oracle::new(&instance);
    let sol = oracle.solve()?;
    let stats = oracle.induced(&sol.policy, &sol.lambda);
    let penalty = instance.penalty().value(&stats.attribute);
    let ratio = |num: f64| if stats.utility.abs() > 1e-15 { num / stats.utility } else { f64::NAN };
    Ok(SensitivityRow {
        r,
        p,
        rate: sol.rate,
        pi_star: sol.pi()[0],
        lambda_star: sol.lambda[0],
        gap: sol.gap,
        p_a1_given_x1: if stats.mass > 0.0 { stats.positive / stats.mass } else { f64::NAN },
        penalty_share: ratio(penalty),
        price_share: ratio(p * sol.pi()[0]),
    })
}
