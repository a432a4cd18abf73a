//! Conditional-mean estimators consumed by the engine.
//!
//! `Exact` reads the instance's closed-form means. `LearnU` replaces
//! `E[u | c]` by an optimistic ridge-regression estimate over a confidence
//! ellipsoid. `LearnA` replaces `E[a | c]` by a Bayes plug-in built on a
//! running estimate of `P(a = 1)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::environment::{posterior_mean_sign, NoiseModel, ProblemInstance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EstimatorMode {
    #[default]
    Exact,
    /// Learn `E[u | c]`; `delta_conf` defaults to `1/T`.
    LearnU { delta_conf: Option<f64> },
    LearnA,
}

// ---------------------------------------------------------------------------
// Confidence ellipsoids for a linear utility model
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct SourceDesign {
    pub v: DMatrix<f64>,
    pub moment: DVector<f64>,
    pub psi_hat: DVector<f64>,
}

impl SourceDesign {
    fn new(q: usize) -> Self {
        Self {
            v: DMatrix::identity(q, q),
            moment: DVector::zeros(q),
            psi_hat: DVector::zeros(q),
        }
    }

    pub fn q(&self) -> usize {
        self.moment.len()
    }

    fn refresh(&mut self) -> Result<()> {
        let chol = self
            .v
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical { message: "design matrix lost positive definiteness".into(), achieved: 0.0 })?;
        self.psi_hat = chol.solve(&self.moment);
        Ok(())
    }

    /// `‖c‖_{V⁻¹}`.
    fn inverse_norm(&self, c: &DVector<f64>) -> Result<f64> {
        let chol = self
            .v
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numerical { message: "design matrix lost positive definiteness".into(), achieved: 0.0 })?;
        Ok(c.dot(&chol.solve(c)).max(0.0).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidState {
    pub sources: Vec<SourceDesign>,
    pub delta_conf: f64,
    pub psi_bar: f64,
    pub c_bar: f64,
}

impl EllipsoidState {
    pub fn new(dims: &[usize], delta_conf: f64, psi_bar: f64, c_bar: f64) -> Result<Self> {
        if !(delta_conf > 0.0 && delta_conf < 1.0) {
            return Err(Error::input("delta_conf must lie in (0, 1)"));
        }
        if dims.iter().any(|&q| q == 0) {
            return Err(Error::input("feature dimensions must be positive"));
        }
        Ok(Self {
            sources: dims.iter().map(|&q| SourceDesign::new(q)).collect(),
            delta_conf,
            psi_bar,
            c_bar,
        })
    }

    /// `β_t` with `√β_t = ψ̄ + √(2 log(1/δ) + q log(1 + t·c̄²/q))`.
    pub fn beta(&self, t: u64) -> f64 {
        let q = self.sources.iter().map(SourceDesign::q).max().unwrap_or(1) as f64;
        let root = self.psi_bar
            + (2.0 * (1.0 / self.delta_conf).ln() + q * (1.0 + t as f64 * self.c_bar * self.c_bar / q).ln()).sqrt();
        root * root
    }

    /// `⟨ψ̃, c⟩ = ⟨ψ̂, c⟩ + √β·‖c‖_{V⁻¹}`, the maximum of `⟨ψ, c⟩` over the ellipsoid.
    pub fn optimistic_value(&self, k: usize, c: &[f64], beta: f64) -> Result<f64> {
        let s = &self.sources[k];
        if c.len() != s.q() {
            return Err(Error::input("feature dimension mismatch"));
        }
        let c = DVector::from_column_slice(c);
        Ok(s.psi_hat.dot(&c) + beta.max(0.0).sqrt() * s.inverse_norm(&c)?)
    }

    /// Optimistic parameter `ψ̂ + √β·V⁻¹c / ‖c‖_{V⁻¹}`.
    pub fn optimistic_parameter(&self, k: usize, c: &[f64], beta: f64) -> Result<Vec<f64>> {
        let s = &self.sources[k];
        let cv = DVector::from_column_slice(c);
        let chol = s.v.clone().cholesky().ok_or_else(|| Error::Numerical {
            message: "design matrix lost positive definiteness".into(),
            achieved: 0.0,
        })?;
        let vinv_c = chol.solve(&cv);
        let n = cv.dot(&vinv_c).max(0.0).sqrt();
        if n == 0.0 {
            return Ok(s.psi_hat.iter().copied().collect());
        }
        Ok((&s.psi_hat + vinv_c * (beta.max(0.0).sqrt() / n)).iter().copied().collect())
    }

    /// Rank-one update with action `θ_k·x·c` and reward `u·x·θ_k`; sources
    /// with `θ_k = 0` or rounds with `x = 0` leave the state unchanged.
    pub fn linear_update(&mut self, k: usize, x: f64, c: &[f64], u: f64) -> Result<()> {
        if x == 0.0 {
            return Ok(());
        }
        let s = &mut self.sources[k];
        let action = DVector::from_column_slice(c) * x;
        s.v += &action * action.transpose();
        s.moment += &action * (u * x);
        s.refresh()
    }

    /// Whether `psi` lies in the confidence set `‖ψ − ψ̂‖²_V ≤ β`.
    pub fn contains(&self, k: usize, psi: &[f64], beta: f64) -> bool {
        let s = &self.sources[k];
        let diff = DVector::from_column_slice(psi) - &s.psi_hat;
        (diff.transpose() * &s.v * &diff)[(0, 0)] <= beta
    }
}

// ---------------------------------------------------------------------------
// Running estimate of P(a = 1)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaLearnerState {
    pub alpha_hat: f64,
    pub count: u64,
    pub noises: Vec<NoiseModel>,
    /// Sub-exponential constant `1/ln 2 + max_k σ_k / 2`.
    pub kappa: f64,
    pub underflows: u64,
}

impl AlphaLearnerState {
    pub fn new(noises: Vec<NoiseModel>) -> Self {
        let max_scale = noises.iter().map(NoiseModel::scale).fold(0.0, f64::max);
        Self {
            alpha_hat: 0.5,
            count: 0,
            noises,
            kappa: 1.0 / std::f64::consts::LN_2 + max_scale / 2.0,
            underflows: 0,
        }
    }

    /// Plug-in estimate of `E[a | â]` under the current `α̂` (0 before any
    /// observation or when `α̂ ∉ [0, 1]`).
    pub fn plugin(&mut self, k: usize, a_hat: f64) -> f64 {
        if self.count == 0 || !(0.0..=1.0).contains(&self.alpha_hat) {
            return 0.0;
        }
        match posterior_mean_sign(self.alpha_hat, &self.noises[k], a_hat) {
            Some(s) => s,
            None => {
                self.underflows += 1;
                0.0
            }
        }
    }

    /// Fold `(â + 1)/2` into the running mean.
    pub fn observe(&mut self, a_hat: f64) {
        self.count += 1;
        self.alpha_hat += (0.5 * (a_hat + 1.0) - self.alpha_hat) / self.count as f64;
    }

    /// Plug-in estimate, then update of `α̂` with the same observation.
    pub fn plugin_mean_a(&mut self, k: usize, a_hat: f64) -> f64 {
        let s = self.plugin(k, a_hat);
        self.observe(a_hat);
        s
    }
}

// ---------------------------------------------------------------------------
// Engine-facing estimator
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum MeanEstimator {
    Exact,
    LearnU(EllipsoidState),
    LearnA(AlphaLearnerState),
}

impl MeanEstimator {
    pub fn build(mode: EstimatorMode, instance: &ProblemInstance, horizon: u64) -> Result<Self> {
        Ok(match mode {
            EstimatorMode::Exact => MeanEstimator::Exact,
            EstimatorMode::LearnU { delta_conf } => {
                let mut dims = Vec::new();
                let mut psi_bar: f64 = 0.0;
                let mut c_bar: f64 = 0.0;
                for k in 0..instance.k() {
                    let model = instance.linear_model(k).ok_or_else(|| {
                        Error::config("learn_u needs an instance with a linear utility model")
                    })?;
                    dims.push(model.psi.len());
                    psi_bar = psi_bar.max(crate::numeric::norm(&model.psi));
                    c_bar = c_bar.max(model.feature_bound);
                }
                let delta = delta_conf.unwrap_or(1.0 / horizon.max(2) as f64);
                MeanEstimator::LearnU(EllipsoidState::new(&dims, delta, psi_bar, c_bar)?)
            }
            EstimatorMode::LearnA => {
                if instance.d() != 1 {
                    return Err(Error::config("learn_a needs a scalar attribute"));
                }
                let noises = (0..instance.k())
                    .map(|k| {
                        instance
                            .attribute_noise(k)
                            .ok_or_else(|| Error::config("learn_a needs an instance with noisy attribute sources"))
                    })
                    .collect::<Result<Vec<_>>>()?;
                MeanEstimator::LearnA(AlphaLearnerState::new(noises))
            }
        })
    }

    /// Means used for round `t` (1-based) after source `k` revealed `c`.
    pub fn means(
        &mut self,
        instance: &ProblemInstance,
        t: u64,
        z: usize,
        k: usize,
        c: &[f64],
    ) -> Result<(f64, Vec<f64>)> {
        let (cond_u, cond_a) = instance.true_conditional_means(z, k, c)?;
        match self {
            MeanEstimator::Exact => Ok((cond_u, cond_a)),
            MeanEstimator::LearnU(state) => {
                let beta = state.beta(t);
                let v = state.optimistic_value(k, &instance.features(c), beta)?;
                // Optimism never needs values beyond the known utility range.
                let ubar = instance.ubar();
                Ok((v.clamp(-ubar, ubar), cond_a))
            }
            MeanEstimator::LearnA(state) => Ok((cond_u, vec![state.plugin_mean_a(k, c[0])])),
        }
    }

    /// Feedback after the allocation: `u` is observed only when `x > 0`.
    pub fn observe(&mut self, instance: &ProblemInstance, k: usize, c: &[f64], x: f64, u: f64) -> Result<()> {
        if let MeanEstimator::LearnU(state) = self {
            state.linear_update(k, x, &instance.features(c), if x > 0.0 { u } else { 0.0 })?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_and_fresh_ellipsoids() {
        let s = EllipsoidState::new(&[2], 0.1, 1.0, 1.0).unwrap();
        assert_eq!(s.optimistic_value(0, &[1.0, 0.0], 0.0).unwrap(), 0.0);
        assert_eq!(s.optimistic_value(0, &[1.0, 0.0], 1.0).unwrap(), 1.0);
    }

    #[test]
    fn zero_actions_leave_state_unchanged() {
        let mut s = EllipsoidState::new(&[2, 2], 0.1, 1.0, 1.0).unwrap();
        let before = s.clone();
        s.linear_update(0, 0.0, &[1.0, 1.0], 0.7).unwrap();
        assert_eq!(s, before);
        s.linear_update(1, 1.0, &[1.0, 0.0], 0.5).unwrap();
        assert_eq!(s.sources[0], before.sources[0]);
        assert_eq!(s.sources[1].v[(0, 0)], 2.0);
        assert_eq!(s.sources[1].moment[0], 0.5);
    }

    #[test]
    fn beta_is_nondecreasing() {
        let s = EllipsoidState::new(&[2, 3], 0.01, 1.5, 2.0).unwrap();
        let mut prev = 0.0;
        for t in 0..1000 {
            let b = s.beta(t);
            assert!(b >= prev);
            prev = b;
        }
    }

    #[test]
    fn optimistic_parameter_attains_value() {
        let mut s = EllipsoidState::new(&[2], 0.1, 1.0, 1.0).unwrap();
        s.linear_update(0, 1.0, &[1.0, 0.5], 0.3).unwrap();
        let c = [0.2, 1.0];
        let psi = s.optimistic_parameter(0, &c, 2.0).unwrap();
        let v = s.optimistic_value(0, &c, 2.0).unwrap();
        assert!((psi[0] * c[0] + psi[1] * c[1] - v).abs() < 1e-12);
        assert!(s.contains(0, &psi, 2.0 + 1e-9));
    }

    #[test]
    fn plugin_examples() {
        let g = NoiseModel::Gaussian { sigma: 1.0 };
        let mut st = AlphaLearnerState::new(vec![g]);
        st.count = 1;
        st.alpha_hat = 0.5;
        assert_eq!(st.plugin(0, 0.0), 0.0);
        assert!((st.plugin(0, 2.0) - 2f64.tanh()).abs() < 1e-12);
        st.alpha_hat = 1.2;
        assert_eq!(st.plugin(0, 2.0), 0.0);
    }

    #[test]
    fn alpha_is_running_mean() {
        let mut st = AlphaLearnerState::new(vec![NoiseModel::Laplace { scale: 1.0 }]);
        for x in [1.0, -1.0, 3.0] {
            st.observe(x);
        }
        assert!((st.alpha_hat - (1.0 + 0.0 + 2.0) / 3.0).abs() < 1e-15);
    }
}
