//! One-dimensional comparator-adaptive learner on `[-C, C]`.
//!
//! The learner is a coin-betting algorithm. Gradients are normalized by the
//! running maximum of the per-round bounds, and the bet is the wealth-weighted
//! average of `2K` constant-fraction (Kelly) bettors with fractions
//! `±2^-1, ..., ±2^-K`, all started with the same initial wealth `ε`. The
//! mixture wealth is at least `1/(2K)` of the best constant fraction in
//! hindsight, which yields a regret that scales with `√(Σ z_t²)` rather than
//! with `√T`.
//!
//! The box constraint uses the unconstrained-to-constrained reduction: the
//! output is `clamp(u, -C, C)`. The inner bettor receives `g` when `|u| ≤ C`
//! or when `g` pushes `u` back towards the box, and `0` otherwise. In every
//! case `g·(clamp(u) - c) ≤ s·(u - c)` for `|c| ≤ C`, and the prediction
//! stays on the boundary while the gradients keep pointing outwards.
//!
//! For every comparator `|c| ≤ C` the realized regret satisfies
//!
//! ```text
//! Σ g_t (c_t - c) ≤ ε·M + P + |c - c1|·(Ξ1·M·√V + Ξ2·M)
//! Ξ1 = 3√Λ,  Ξ2 = 4Λ,  Λ = ln(8K·(C/ε)·√(1 + V))
//! ```
//!
//! where `M` is the largest bound seen, `V = Σ z_t²` and `P` is a penalty that
//! is zero when the bounds are constant. With constant bounds `M·√V = √(Σ g_t²)`
//! and this is the usual `|c - c1|(Ξ1·√(Σ g²) + Ξ2·sup G)` bound plus the
//! wealth offset `ε·sup G` that every coin-betting learner pays. The closed
//! form holds while `V ≤ Λ·4^K`; past that the certificate minimizes the exact
//! per-fraction bound instead.

use crate::error::{Error, Result};
use crate::math;

/// Number of betting fractions per sign.
pub const FRACTIONS_PER_SIGN: usize = 16;
const COMPONENTS: usize = 2 * FRACTIONS_PER_SIGN;
const RESCALE_HIGH: f64 = 1e150;
const RESCALE_LOW: f64 = 1e-150;
const RESCALE_BITS: i32 = 498;

const MODULE: &str = "bettor";

#[inline]
fn fraction(k: usize) -> f64 {
    if k < FRACTIONS_PER_SIGN {
        libm::ldexp(1.0, -(k as i32 + 1))
    } else {
        -libm::ldexp(1.0, -((k - FRACTIONS_PER_SIGN) as i32 + 1))
    }
}

/// State of one constrained coin-betting learner.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BettorState {
    c1: f64,
    radius: f64,
    initial_wealth: f64,
    /// Component wealths relative to `initial_wealth · 2^wealth_exponent`.
    components: [f64; COMPONENTS],
    wealth_exponent: i32,
    running_grad_max: f64,
    sum_sq_normalized: f64,
    sum_normalized: f64,
    rounds: u64,
    u: f64,
    growth_penalty: f64,
    path_mass: f64,
}

/// Regret bound certified by a [`BettorState`] for one comparator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretCertificate {
    /// `ε · M`, the regret the learner may incur against its own start.
    pub wealth_offset: f64,
    /// Penalty for bounds that grew during the run, zero for constant bounds.
    pub growth_penalty: f64,
    /// `|c - c1|·(Ξ1·M·√V + Ξ2·M)`.
    pub comparator_term: f64,
    pub xi1: f64,
    pub xi2: f64,
    /// `√(Σ g_t²)` of the gradients passed to the certificate.
    pub sqrt_sum_sq: f64,
    /// Largest per-round bound seen.
    pub sup_bound: f64,
}

impl RegretCertificate {
    pub fn bound(&self) -> f64 {
        self.wealth_offset + self.growth_penalty + self.comparator_term
    }
}

impl BettorState {
    /// Fresh learner predicting `c1` with radius `C` and initial wealth `ε = C`.
    pub fn new(c1: f64, radius: f64) -> Result<Self> {
        Self::with_wealth(c1, radius, radius)
    }

    /// Fresh learner with an explicit initial wealth `0 < ε ≤ C`.
    pub fn with_wealth(c1: f64, radius: f64, initial_wealth: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::domain(MODULE, "radius C must be positive and finite"));
        }
        if !c1.is_finite() || c1.abs() > radius {
            return Err(Error::domain(MODULE, "initial prediction must satisfy |c1| <= C"));
        }
        if !(initial_wealth > 0.0) || initial_wealth > radius {
            return Err(Error::domain(MODULE, "initial wealth must lie in (0, C]"));
        }
        Ok(Self {
            c1,
            radius,
            initial_wealth,
            components: [1.0; COMPONENTS],
            wealth_exponent: 0,
            running_grad_max: 0.0,
            sum_sq_normalized: 0.0,
            sum_normalized: 0.0,
            rounds: 0,
            u: c1,
            growth_penalty: 0.0,
            path_mass: 0.0,
        })
    }

    /// Current prediction, always in `[-C, C]`.
    #[inline]
    pub fn predict(&self) -> f64 {
        self.u.clamp(-self.radius, self.radius)
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn initial_wealth(&self) -> f64 {
        self.initial_wealth
    }

    /// Unconstrained inner iterate.
    pub fn unconstrained(&self) -> f64 {
        self.u
    }

    pub fn running_grad_max(&self) -> f64 {
        self.running_grad_max
    }

    pub fn sum_sq_normalized(&self) -> f64 {
        self.sum_sq_normalized
    }

    pub fn sum_normalized(&self) -> f64 {
        self.sum_normalized
    }

    /// Rounds with a nonzero bound.
    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    /// Mixture wealth in units of the prediction.
    pub fn wealth(&self) -> f64 {
        let mean = self.components.iter().sum::<f64>() / COMPONENTS as f64;
        libm::ldexp(mean * self.initial_wealth, self.wealth_exponent)
    }

    /// Feeds one gradient `g` with its bound `|g| ≤ hint`. A zero bound is a no-op.
    pub fn update(&mut self, g: f64, hint: f64) -> Result<()> {
        if !g.is_finite() {
            return Err(Error::NonFinite {
                module: MODULE,
                what: "gradient",
            });
        }
        if !(hint >= 0.0) || !hint.is_finite() {
            return Err(Error::domain(MODULE, "gradient bound must be finite and >= 0"));
        }
        if g.abs() > hint {
            return Err(Error::domain(MODULE, "gradient exceeds its bound"));
        }
        if hint == 0.0 {
            return Ok(());
        }

        let previous_max = self.running_grad_max;
        let max = previous_max.max(hint);
        // outside the box only gradients pointing back inside are kept
        let surrogate = if self.u.abs() <= self.radius || g * self.u.signum() > 0.0 {
            g
        } else {
            0.0
        };
        let z = surrogate / max;

        self.growth_penalty += (max - previous_max) * self.path_mass;
        self.path_mass += self.u.abs() + self.radius;
        self.running_grad_max = max;
        self.sum_sq_normalized += z * z;
        self.sum_normalized += z;
        self.rounds += 1;

        let mut peak = 0.0f64;
        for (k, w) in self.components.iter_mut().enumerate() {
            *w *= 1.0 - fraction(k) * z;
            peak = peak.max(*w);
        }
        if peak > RESCALE_HIGH {
            self.rescale(-RESCALE_BITS);
        } else if peak < RESCALE_LOW && peak > 0.0 {
            self.rescale(RESCALE_BITS);
        }

        self.u = self.c1 + self.bet();
        Ok(())
    }

    fn rescale(&mut self, bits: i32) {
        for w in self.components.iter_mut() {
            *w = libm::ldexp(*w, bits);
        }
        self.wealth_exponent -= bits;
    }

    fn bet(&self) -> f64 {
        let weighted: f64 = self
            .components
            .iter()
            .enumerate()
            .map(|(k, w)| fraction(k) * w)
            .sum();
        libm::ldexp(
            weighted * self.initial_wealth / COMPONENTS as f64,
            self.wealth_exponent,
        )
    }

    /// `(Ξ1, Ξ2)` for the current normalized variance.
    pub fn constants(&self) -> (f64, f64) {
        let lambda = self.log_factor();
        (3.0 * math::sqrt(lambda), 4.0 * lambda)
    }

    fn log_factor(&self) -> f64 {
        math::ln(
            8.0 * FRACTIONS_PER_SIGN as f64 * (self.radius / self.initial_wealth)
                * math::sqrt(1.0 + self.sum_sq_normalized),
        )
    }

    /// Normalized comparator coefficient `Φ(V)` with `Σ a_t ≤ ε + |x*|·Φ(V)`.
    fn comparator_factor(&self) -> f64 {
        let v = self.sum_sq_normalized;
        let lambda = self.log_factor();
        if v <= lambda * math::powf(4.0, FRACTIONS_PER_SIGN as f64) {
            3.0 * math::sqrt(lambda * v) + 4.0 * lambda
        } else {
            let scale = 4.0 * FRACTIONS_PER_SIGN as f64 * self.radius / self.initial_wealth;
            (0..FRACTIONS_PER_SIGN)
                .map(|i| {
                    let b = libm::ldexp(1.0, -(i as i32 + 1));
                    math::ln(scale / b) / b + b * v
                })
                .fold(f64::INFINITY, f64::min)
        }
    }

    /// Certified upper bound on `Σ g_t (c_t - c)` for the gradients fed so far.
    pub fn regret_certificate(&self, c: f64, grads: &[f64]) -> Result<RegretCertificate> {
        if !c.is_finite() || c.abs() > self.radius {
            return Err(Error::domain(MODULE, "comparator must satisfy |c| <= C"));
        }
        let (xi1, xi2) = self.constants();
        let m = self.running_grad_max;
        let comparator_term = (c - self.c1).abs() * m * self.comparator_factor();
        let sum_sq: f64 = grads.iter().map(|g| g * g).sum();
        Ok(RegretCertificate {
            wealth_offset: self.initial_wealth * m,
            growth_penalty: self.growth_penalty,
            comparator_term,
            xi1,
            xi2,
            sqrt_sum_sq: math::sqrt(sum_sq),
            sup_bound: m,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn init_predicts_c1() {
        assert_eq!(BettorState::new(0.0, 1.0).unwrap().predict(), 0.0);
        assert_eq!(BettorState::new(0.5, 0.5).unwrap().predict(), 0.5);
    }

    #[test]
    fn init_rejects_bad_domain() {
        assert!(matches!(BettorState::new(2.0, 1.0), Err(Error::Domain { .. })));
        assert!(BettorState::new(0.0, 0.0).is_err());
        assert!(BettorState::new(0.0, -1.0).is_err());
        assert!(BettorState::with_wealth(0.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn zero_gradient_keeps_prediction() {
        let mut b = BettorState::new(0.0, 1.0).unwrap();
        b.update(0.0, 1.0).unwrap();
        assert_eq!(b.predict(), 0.0);
        assert_eq!(b.rounds(), 1);
    }

    #[test]
    fn zero_bound_is_noop() {
        let mut b = BettorState::new(0.0, 1.0).unwrap();
        let before = b.clone();
        b.update(0.0, 0.0).unwrap();
        assert_eq!(b, before);
    }

    #[test]
    fn rejects_gradient_above_bound() {
        let mut b = BettorState::new(0.0, 1.0).unwrap();
        assert!(b.update(1.5, 1.0).is_err());
        assert!(b.update(f64::NAN, 1.0).is_err());
        assert!(b.update(0.0, -1.0).is_err());
    }

    #[test]
    fn constant_gradient_drives_to_lower_edge() {
        let mut b = BettorState::new(0.0, 1.0).unwrap();
        let mut last = b.predict();
        for _ in 0..50 {
            b.update(1.0, 1.0).unwrap();
            let p = b.predict();
            assert!((-1.0..=1.0).contains(&p));
            assert!(p <= last, "prediction moved up: {p} > {last}");
            last = p;
        }
        assert!(last < -0.9, "did not approach -1: {last}");
    }

    #[test]
    fn certificate_with_no_rounds_is_zero() {
        let b = BettorState::new(0.2, 1.0).unwrap();
        let cert = b.regret_certificate(0.7, &[]).unwrap();
        assert_eq!(cert.bound(), 0.0);
    }

    #[test]
    fn certificate_at_start_point_has_no_comparator_term() {
        let mut b = BettorState::new(0.3, 1.0).unwrap();
        let mut grads = Vec::new();
        let mut regret = 0.0;
        for t in 0..200 {
            let g = if t % 3 == 0 { 0.8 } else { -0.5 };
            regret += g * (b.predict() - 0.3);
            b.update(g, 1.0).unwrap();
            grads.push(g);
        }
        let cert = b.regret_certificate(0.3, &grads).unwrap();
        assert_eq!(cert.comparator_term, 0.0);
        assert!(regret <= cert.wealth_offset + cert.growth_penalty);
    }

    #[test]
    fn certificate_rejects_outside_comparator() {
        let b = BettorState::new(0.0, 1.0).unwrap();
        assert!(b.regret_certificate(1.5, &[]).is_err());
    }

    #[test]
    fn wealth_stays_positive_under_adversarial_signs() {
        let mut b = BettorState::new(0.0, 1.0).unwrap();
        for t in 0..5000 {
            // bet against the learner every round
            let g = if b.unconstrained() >= 0.0 { 1.0 } else { -1.0 };
            b.update(if t % 7 == 0 { -g } else { g }, 1.0).unwrap();
            assert!(b.wealth() > 0.0 && b.wealth().is_finite());
        }
    }
}
