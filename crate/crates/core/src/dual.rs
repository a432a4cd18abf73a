//! Dual multiplier state and the online gradient step on `λ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::norm;

/// Slack added to the multiplier bound to absorb floating-point drift.
pub const BOUND_SLACK: f64 = 1e-7;

/// Step-size schedule constants `(η, m, ρ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub eta: f64,
    pub m: f64,
    pub rho: f64,
}

/// `η = L / (2·diam·√T)`, `m = ū + L + max|p| + 2η·diam`,
/// `ρ = √(log K / (T·K·m²))`.
pub fn default_schedule(l: f64, diam: f64, t: u64, ubar: f64, prices: &[f64]) -> Schedule {
    let t = t.max(1) as f64;
    let eta = if diam > 0.0 { l / (2.0 * diam * t.sqrt()) } else { 0.0 };
    let max_p = prices.iter().fold(0.0_f64, |a, p| a.max(p.abs()));
    let m = ubar + l + max_p + 2.0 * eta * diam;
    Schedule { eta, m, rho: exp3_rate(prices.len(), t, m) }
}

/// `ρ = √(log K / (T·K·m²))`, zero for degenerate inputs.
pub fn exp3_rate(k: usize, horizon: f64, m: f64) -> f64 {
    if k <= 1 || m <= 0.0 || horizon <= 0.0 {
        return 0.0;
    }
    let k = k as f64;
    (k.ln() / (horizon * k * m * m)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub lambda: Vec<f64>,
    /// Base step size; the per-step size is `eta / √t` in anytime mode.
    pub eta: f64,
    /// `‖λ‖ ≤ bound` must hold after every step.
    pub bound: f64,
    pub step_index: u64,
    pub anytime: bool,
}

impl DualState {
    /// Fixed step `eta`; bound `L + 2η·diam`.
    pub fn new(lambda0: Vec<f64>, eta: f64, l: f64, diam: f64) -> Self {
        Self {
            lambda: lambda0,
            eta,
            bound: l + 2.0 * eta * diam,
            step_index: 0,
            anytime: false,
        }
    }

    /// Anytime schedule `η_t = L / (2·diam·√t)`; the largest step is the first.
    pub fn anytime(lambda0: Vec<f64>, l: f64, diam: f64) -> Self {
        let eta = if diam > 0.0 { l / (2.0 * diam) } else { 0.0 };
        Self {
            lambda: lambda0,
            eta,
            bound: l + 2.0 * eta * diam,
            step_index: 0,
            anytime: true,
        }
    }

    /// Step size used by the next update.
    pub fn current_eta(&self) -> f64 {
        if self.anytime {
            self.eta / ((self.step_index + 1) as f64).sqrt()
        } else {
            self.eta
        }
    }

    /// `λ ← λ − η_t·weight·(γ − δ)`, then check the bound.
    pub fn step(&mut self, gamma: &[f64], delta: &[f64], weight: f64) -> Result<()> {
        let eta = self.current_eta() * weight;
        for ((l, g), d) in self.lambda.iter_mut().zip(gamma).zip(delta) {
            *l -= eta * (g - d);
        }
        self.step_index += 1;
        let n = norm(&self.lambda);
        if n > self.bound + BOUND_SLACK || !n.is_finite() {
            return Err(Error::Invariant {
                round: self.step_index,
                message: format!("dual norm {n} exceeds bound {}", self.bound),
            });
        }
        Ok(())
    }
}

/// Functional form of [`DualState::step`].
pub fn dual_step(state: &DualState, gamma: &[f64], delta: &[f64], weight: f64) -> Result<DualState> {
    let mut next = state.clone();
    next.step(gamma, delta, weight)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_examples() {
        let s = DualState::new(vec![0.3], 0.5, 5.0, 2.0);
        assert_eq!(dual_step(&s, &[0.7], &[0.7], 1.0).unwrap().lambda, vec![0.3]);
        assert_eq!(dual_step(&s, &[2.0], &[0.0], 0.0).unwrap().lambda, vec![0.3]);
        let s = DualState::new(vec![0.0], 0.5, 5.0, 2.0);
        assert_eq!(dual_step(&s, &[2.0], &[0.0], 1.0).unwrap().lambda, vec![-1.0]);
    }

    #[test]
    fn schedule_examples() {
        let s = default_schedule(5.0, 2.0, 10_000, 1.0, &[0.0, 0.0]);
        assert_eq!(s.eta, 0.0125);
        assert!((s.m - 6.05).abs() < 1e-12);
        let expected = ((2f64).ln() / (10_000.0 * 2.0 * 6.05 * 6.05)).sqrt();
        assert!((s.rho - expected).abs() < 1e-15);
        let s = default_schedule(0.0, 2.0, 100, 1.0, &[0.2, -0.4]);
        assert_eq!(s.eta, 0.0);
        assert!((s.m - 1.4).abs() < 1e-15);
        assert_eq!(default_schedule(5.0, 0.0, 100, 1.0, &[0.0]).eta, 0.0);
    }

    #[test]
    fn violation_is_reported() {
        let mut s = DualState::new(vec![0.0], 1.0, 0.1, 0.1);
        assert!(matches!(s.step(&[5.0], &[0.0], 1.0), Err(Error::Invariant { .. })));
    }

    #[test]
    fn anytime_steps_shrink() {
        let s = DualState::anytime(vec![0.0], 5.0, 2.0);
        assert_eq!(s.current_eta(), 1.25);
        let s = dual_step(&s, &[0.0], &[0.0], 1.0).unwrap();
        assert!((s.current_eta() - 1.25 / 2f64.sqrt()).abs() < 1e-15);
    }
}
