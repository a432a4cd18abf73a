//! Attribute polytopes described by their vertex lists.
//!
//! The base algorithm works on `conv(A ∪ {0})`, the ratio variant on
//! `conv(A)`. One-dimensional polytopes are intervals and get exact fast
//! paths; higher dimensions go through the barycentric weights.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{dist, dot, norm, project_simplex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polytope {
    dim: usize,
    vertices: Vec<Vec<f64>>,
    diam: f64,
}

impl Polytope {
    pub fn new(vertices: Vec<Vec<f64>>) -> Result<Self> {
        let first = vertices
            .first()
            .ok_or_else(|| Error::input("polytope needs at least one vertex"))?;
        let dim = first.len();
        if dim == 0 {
            return Err(Error::input("polytope dimension must be positive"));
        }
        if vertices.iter().any(|v| v.len() != dim) {
            return Err(Error::input("polytope vertices have mixed dimensions"));
        }
        if vertices.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::input("polytope vertices must be finite"));
        }
        let mut diam: f64 = 0.0;
        for (i, v) in vertices.iter().enumerate() {
            for w in &vertices[i + 1..] {
                diam = diam.max(dist(v, w));
            }
        }
        Ok(Self { dim, vertices, diam })
    }

    /// Build `conv(attributes)` or `conv(attributes ∪ {0})`, checking `‖a‖ ≤ 1`.
    pub fn from_attributes(attributes: &[Vec<f64>], include_origin: bool) -> Result<Self> {
        if let Some(a) = attributes.iter().find(|a| norm(a) > 1.0 + 1e-12) {
            return Err(Error::input(format!("attribute {a:?} has norm above 1")));
        }
        let mut vertices = attributes.to_vec();
        if include_origin {
            let dim = attributes.first().map(Vec::len).unwrap_or(0);
            let origin = vec![0.0; dim];
            if !vertices.contains(&origin) {
                vertices.push(origin);
            }
        }
        Self::new(vertices)
    }

    /// The interval `[-1, 1]`, i.e. `conv({-1, 1} ∪ {0})`.
    pub fn symmetric_interval() -> Self {
        Self::new(vec![vec![-1.0], vec![1.0]]).expect("valid interval")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub fn diam(&self) -> f64 {
        self.diam
    }

    /// `(lo, hi)` when the polytope is one-dimensional.
    pub fn interval(&self) -> Option<(f64, f64)> {
        (self.dim == 1).then(|| {
            let lo = self.vertices.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min);
            let hi = self.vertices.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        })
    }

    pub fn max_vertex_norm(&self) -> f64 {
        self.vertices.iter().map(|v| norm(v)).fold(0.0, f64::max)
    }

    /// Support function `max_{γ∈Δ} ⟨γ, λ⟩`.
    pub fn support(&self, lambda: &[f64]) -> f64 {
        self.vertices
            .iter()
            .map(|v| dot(v, lambda))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn point_from_weights(&self, weights: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.dim];
        for (w, v) in weights.iter().zip(&self.vertices) {
            for (pi, vi) in p.iter_mut().zip(v) {
                *pi += w * vi;
            }
        }
        p
    }

    /// Euclidean projection onto the polytope.
    ///
    /// Exact for intervals; otherwise solves the convex-combination least
    /// squares problem over the weight simplex with accelerated projected
    /// gradient.
    pub fn project(&self, y: &[f64]) -> Vec<f64> {
        if let Some((lo, hi)) = self.interval() {
            return vec![y[0].clamp(lo, hi)];
        }
        let m = self.vertices.len();
        let lip: f64 = self.vertices.iter().map(|v| dot(v, v)).sum::<f64>().max(1e-12);
        let step = 1.0 / lip;
        let mut w = vec![1.0 / m as f64; m];
        let mut z = w.clone();
        let mut t = 1.0_f64;
        for _ in 0..4000 {
            let r: Vec<f64> = self
                .point_from_weights(&z)
                .iter()
                .zip(y)
                .map(|(a, b)| a - b)
                .collect();
            let grad: Vec<f64> = self.vertices.iter().map(|v| dot(v, &r)).collect();
            let cand: Vec<f64> = z.iter().zip(&grad).map(|(zi, gi)| zi - step * gi).collect();
            let w_next = project_simplex(&cand);
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let mom = (t - 1.0) / t_next;
            z = w_next
                .iter()
                .zip(&w)
                .map(|(a, b)| a + mom * (a - b))
                .collect();
            let moved: f64 = w_next.iter().zip(&w).map(|(a, b)| (a - b).abs()).sum();
            w = w_next;
            t = t_next;
            if moved < 1e-15 {
                break;
            }
        }
        self.point_from_weights(&w)
    }

    pub fn distance(&self, y: &[f64]) -> f64 {
        dist(y, &self.project(y))
    }

    pub fn contains(&self, y: &[f64], tol: f64) -> bool {
        self.distance(y) <= tol
    }

    /// Uniform-on-weights random point (Dirichlet(1) mixture of vertices).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        if let Some((lo, hi)) = self.interval() {
            return vec![rng.random_range(lo..=hi)];
        }
        let raw: Vec<f64> = self
            .vertices
            .iter()
            .map(|_| -(1.0 - rng.random::<f64>()).ln())
            .collect();
        let s: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|x| x / s).collect();
        self.point_from_weights(&w)
    }

    /// Maximise a concave function over the polytope.
    ///
    /// Intervals use golden-section search. Otherwise a barycentric grid is
    /// refined around the incumbent until the step falls below `tol`.
    pub fn maximize<F: FnMut(&[f64]) -> f64>(&self, mut f: F, tol: f64) -> (Vec<f64>, f64) {
        if let Some((lo, hi)) = self.interval() {
            let (x, v) = crate::numeric::golden_max(|t| f(&[t]), lo, hi, tol.min(1e-10));
            return (vec![x], v);
        }
        let m = self.vertices.len();
        if m == 1 {
            let p = self.vertices[0].clone();
            let v = f(&p);
            return (p, v);
        }
        // Coarse global grid over the weight simplex.
        let n = match m {
            2 => 64,
            3 => 24,
            4 => 12,
            _ => 6,
        };
        let mut best_w = vec![0.0; m];
        let mut best_v = f64::NEG_INFINITY;
        for_each_composition(n, m, &mut |c| {
            let w: Vec<f64> = c.iter().map(|&ci| ci as f64 / n as f64).collect();
            let v = f(&self.point_from_weights(&w));
            if v > best_v {
                best_v = v;
                best_w = w;
            }
        });
        // Local refinement: lattice moves with zero total weight.
        let mut h = 1.0 / n as f64;
        let offsets = lattice_offsets(m, 2);
        while h > tol {
            let center = best_w.clone();
            for off in &offsets {
                let w: Vec<f64> = center
                    .iter()
                    .zip(off)
                    .map(|(c, &o)| c + h * o as f64)
                    .collect();
                if w.iter().any(|&x| x < -1e-15) {
                    continue;
                }
                let w: Vec<f64> = w.iter().map(|x| x.max(0.0)).collect();
                let v = f(&self.point_from_weights(&w));
                if v > best_v {
                    best_v = v;
                    best_w = w;
                }
            }
            if best_w == center {
                h /= 3.0;
            }
        }
        (self.point_from_weights(&best_w), best_v)
    }
}

fn for_each_composition(n: usize, parts: usize, f: &mut dyn FnMut(&[usize])) {
    fn rec(left: usize, parts: usize, acc: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if parts == 1 {
            acc.push(left);
            f(acc);
            acc.pop();
            return;
        }
        for i in 0..=left {
            acc.push(i);
            rec(left - i, parts - 1, acc, f);
            acc.pop();
        }
    }
    rec(n, parts, &mut Vec::with_capacity(parts), f);
}

/// Integer vectors in `{-r..r}^m` with zero sum, excluding the origin.
fn lattice_offsets(m: usize, r: i32) -> Vec<Vec<i32>> {
    let base = (2 * r + 1) as usize;
    let count = base.pow((m - 1) as u32);
    let mut out = Vec::new();
    for mut code in 0..count {
        let mut v: Vec<i32> = (0..m - 1)
            .map(|_| {
                let digit = (code % base) as i32 - r;
                code /= base;
                digit
            })
            .collect();
        let last = -v.iter().sum::<i32>();
        if last.abs() <= r {
            v.push(last);
            if v.iter().any(|&x| x != 0) {
                out.push(v);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_basics() {
        let p = Polytope::symmetric_interval();
        assert_eq!(p.diam(), 2.0);
        assert_eq!(p.interval(), Some((-1.0, 1.0)));
        assert_eq!(p.project(&[2.5]), vec![1.0]);
        assert!(p.contains(&[0.3], 1e-12));
    }

    #[test]
    fn one_hot_projection_and_diameter() {
        let p = Polytope::from_attributes(&[vec![1.0, 0.0], vec![0.0, 1.0]], true).unwrap();
        assert!((p.diam() - 2f64.sqrt()).abs() < 1e-15);
        let q = p.project(&[1.0, 1.0]);
        assert!((q[0] - 0.5).abs() < 1e-9 && (q[1] - 0.5).abs() < 1e-9);
        let q = p.project(&[-1.0, -1.0]);
        assert!(q[0].abs() < 1e-9 && q[1].abs() < 1e-9);
    }

    #[test]
    fn rejects_long_attributes() {
        assert!(Polytope::from_attributes(&[vec![2.0]], true).is_err());
    }

    #[test]
    fn lattice_offsets_have_zero_sum() {
        let offs = lattice_offsets(3, 2);
        assert!(offs.iter().all(|o| o.iter().sum::<i32>() == 0));
        // a in {-2..2}^2 with |a1+a2| <= 2, minus the origin
        assert_eq!(offs.len(), 18);
    }

    #[test]
    fn grid_maximization_on_triangle() {
        let p = Polytope::from_attributes(&[vec![1.0, 0.0], vec![0.0, 1.0]], true).unwrap();
        let target = [0.2, 0.3];
        let (x, v) = p.maximize(|g| -dist(g, &target), 1e-9);
        assert!(v > -1e-7, "{x:?} {v}");
    }
}
