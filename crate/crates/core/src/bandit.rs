//! EXP3 over information sources.
//!
//! Scores are cumulative importance-weighted reward estimates; sampling uses
//! `softmax(ρ·S)`. The estimator `m − 1[k'=k](m − φ)/π_k` stays bounded below
//! because rewards are bounded by `m`, so no exploration floor is mixed in.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dual::exp3_rate;
use crate::error::{Error, Result};

/// Tolerance on `|φ| ≤ m`.
const PHI_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp3State {
    pub scores: Vec<f64>,
    pub rho: f64,
    pub m: f64,
    pub t_local: u64,
    /// `Some(e)` when the doubling trick is active; `e` is the current epoch.
    pub doubling_epoch: Option<u32>,
}

impl Exp3State {
    /// Fixed-horizon state with learning rate `rho`.
    pub fn new(k: usize, rho: f64, m: f64) -> Self {
        Self { scores: vec![0.0; k], rho, m, t_local: 0, doubling_epoch: None }
    }

    /// Anytime state: epoch `e` uses the horizon guess `2^e`.
    pub fn anytime(k: usize, m: f64) -> Self {
        Self {
            scores: vec![0.0; k],
            rho: exp3_rate(k, 1.0, m),
            m,
            t_local: 0,
            doubling_epoch: Some(0),
        }
    }

    pub fn k(&self) -> usize {
        self.scores.len()
    }

    /// `softmax(ρ·S)` with max-shift.
    pub fn probabilities(&self) -> Vec<f64> {
        let max = self
            .scores
            .iter()
            .map(|s| self.rho * s)
            .fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = self.scores.iter().map(|s| (self.rho * s - max).exp()).collect();
        let z: f64 = w.iter().sum();
        w.iter().map(|x| x / z).collect()
    }

    /// Draw a source; returns the index and the distribution it was drawn from.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, Vec<f64>) {
        let pi = self.probabilities();
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in pi.iter().enumerate() {
            acc += p;
            if u < acc {
                return (i, pi);
            }
        }
        // Rounding left a sliver above the cumulative sum.
        let last = pi.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        (last, pi)
    }

    /// `S_{k'} += m − 1[k' = chosen]·(m − φ)/π_chosen` for every `k'`.
    pub fn iw_update(&mut self, chosen: usize, phi: f64, pi_used: &[f64]) -> Result<()> {
        if !(phi.abs() <= self.m + PHI_SLACK) {
            return Err(Error::Invariant {
                round: self.t_local + 1,
                message: format!("virtual reward {phi} outside [-{m}, {m}]", m = self.m),
            });
        }
        let p = pi_used[chosen];
        if !(p > 0.0) {
            return Err(Error::Invariant {
                round: self.t_local + 1,
                message: format!("sampling probability {p} of source {chosen} is not positive"),
            });
        }
        let m = self.m;
        for s in self.scores.iter_mut() {
            *s += m;
        }
        self.scores[chosen] -= (m - phi) / p;
        self.t_local += 1;
        self.anytime_wrap();
        Ok(())
    }

    /// Restart at the end of an epoch: reset scores, double the horizon guess.
    pub fn anytime_wrap(&mut self) {
        if let Some(e) = self.doubling_epoch {
            if self.t_local >= 1u64 << e {
                let next = e + 1;
                self.doubling_epoch = Some(next);
                self.scores.iter_mut().for_each(|s| *s = 0.0);
                self.rho = exp3_rate(self.k(), (1u64 << next) as f64, self.m);
            }
        }
    }
}

/// One EXP3 state per public context, all created from the same template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp3Bank {
    template: Exp3State,
    states: BTreeMap<usize, Exp3State>,
    counts: BTreeMap<usize, u64>,
}

impl Exp3Bank {
    pub fn new(template: Exp3State) -> Self {
        Self { template, states: BTreeMap::new(), counts: BTreeMap::new() }
    }

    /// State for context `z`, created on first use.
    pub fn state_mut(&mut self, z: usize) -> &mut Exp3State {
        *self.counts.entry(z).or_insert(0) += 1;
        self.states.entry(z).or_insert_with(|| self.template.clone())
    }

    pub fn state(&self, z: usize) -> Option<&Exp3State> {
        self.states.get(&z)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Empirical context frequencies.
    pub fn context_frequencies(&self) -> BTreeMap<usize, f64> {
        let total: u64 = self.counts.values().sum();
        self.counts
            .iter()
            .map(|(z, c)| (*z, *c as f64 / total.max(1) as f64))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_scores_are_uniform() {
        let s = Exp3State::new(4, 0.3, 1.0);
        assert_eq!(s.probabilities(), vec![0.25; 4]);
    }

    #[test]
    fn saturated_softmax() {
        let mut s = Exp3State::new(2, 1.0, 1.0);
        s.scores = vec![1e6, 0.0];
        assert!(s.probabilities()[0] >= 1.0 - 1e-9);
    }

    #[test]
    fn update_examples() {
        let mut s = Exp3State::new(3, 0.1, 2.0);
        s.iw_update(1, 2.0, &[0.2, 0.3, 0.5]).unwrap();
        assert_eq!(s.scores, vec![2.0; 3]);
        let mut s = Exp3State::new(2, 0.1, 1.0);
        s.iw_update(1, 0.0, &[0.5, 0.5]).unwrap();
        assert_eq!(s.scores, vec![1.0, -1.0]);
        assert!(s.iw_update(0, 1.5, &[0.5, 0.5]).is_err());
    }

    #[test]
    fn doubling_epochs() {
        let mut s = Exp3State::anytime(2, 1.0);
        s.iw_update(0, 0.5, &[0.5, 0.5]).unwrap();
        assert_eq!(s.doubling_epoch, Some(1));
        assert_eq!(s.scores, vec![0.0, 0.0]);
        s.iw_update(0, 0.5, &[0.5, 0.5]).unwrap();
        assert_eq!(s.doubling_epoch, Some(2));
        s.iw_update(0, 0.5, &[0.5, 0.5]).unwrap();
        assert_eq!(s.doubling_epoch, Some(2));
        assert_ne!(s.scores, vec![0.0, 0.0]);
        s.iw_update(0, 0.5, &[0.5, 0.5]).unwrap();
        assert_eq!(s.doubling_epoch, Some(3));
        assert!((s.rho - (2f64.ln() / (8.0 * 2.0)).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn fixed_horizon_wrap_is_identity() {
        let mut s = Exp3State::new(2, 0.1, 1.0);
        s.scores = vec![3.0, 1.0];
        s.t_local = 64;
        let before = s.clone();
        s.anytime_wrap();
        assert_eq!(s, before);
    }

    #[test]
    fn bank_isolation() {
        let mut bank = Exp3Bank::new(Exp3State::new(2, 0.1, 1.0));
        bank.state_mut(0).iw_update(0, 0.0, &[0.5, 0.5]).unwrap();
        let snapshot = bank.state(0).cloned();
        bank.state_mut(1).iw_update(1, 1.0, &[0.5, 0.5]).unwrap();
        assert_eq!(bank.state(0).cloned(), snapshot);
        assert_eq!(bank.len(), 2);
    }

    #[test]
    fn sampling_frequency() {
        let mut s = Exp3State::new(2, 1.0, 1.0);
        s.scores = vec![0.0, (0.7f64 / 0.3).ln()];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let ones = (0..n).filter(|_| s.sample(&mut rng).0 == 1).count() as f64;
        let sd = (n as f64 * 0.21).sqrt();
        assert!((ones - 0.7 * n as f64).abs() < 3.0 * sd);
    }
}
