//! Clipping of noisy gradients and the noise-aware margin schedule.
//!
//! Each coordinate `n` owns a [`BettorState`]. A noisy gradient `ĝ` with
//! expected bound `G` is clipped at `Ḡ = G + Δ` before it reaches the bettor,
//! so the bettor contract `|ḡ| ≤ Ḡ` holds by construction. Coordinates with
//! `G = 0` are skipped.

use alloc::vec::Vec;

use crate::bettor::BettorState;
use crate::error::{Error, Result};
use crate::math;

const MODULE: &str = "clipper";

/// `x` if `|x| ≤ τ`, otherwise `sign(x)·τ`.
pub fn clip(x: f64, tau: f64) -> Result<f64> {
    if !(tau >= 0.0) {
        return Err(Error::domain(MODULE, "clipping threshold must be >= 0"));
    }
    Ok(x.clamp(-tau, tau))
}

/// How the margin `Δ` is chosen at each round.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum MarginMode {
    /// Logarithmically growing margin driven by the noise parameters.
    Schedule,
    /// Constant margin.
    Fixed(f64),
}

/// Noise parameters `(ν, μ)`, confidence `δ` and margin mode.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClipConfig {
    pub nu: f64,
    pub mu: f64,
    pub delta: f64,
    pub mode: MarginMode,
}

impl ClipConfig {
    pub fn schedule(nu: f64, mu: f64, delta: f64) -> Result<Self> {
        let config = Self {
            nu,
            mu,
            delta,
            mode: MarginMode::Schedule,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn fixed(margin: f64) -> Result<Self> {
        let config = Self {
            nu: 0.0,
            mu: 0.0,
            delta: 0.5,
            mode: MarginMode::Fixed(margin),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::domain(MODULE, "confidence delta must lie in (0, 1)"));
        }
        if !(self.nu >= 0.0 && self.mu >= 0.0) || !self.nu.is_finite() || !self.mu.is_finite() {
            return Err(Error::domain(MODULE, "noise parameters nu, mu must be finite and >= 0"));
        }
        if let MarginMode::Fixed(m) = self.mode {
            if !(m >= 0.0) || !m.is_finite() {
                return Err(Error::domain(MODULE, "fixed margin must be finite and >= 0"));
            }
        }
        Ok(())
    }

    /// Margin used at round `t ≥ 1`.
    pub fn margin(&self, t: u64) -> Result<f64> {
        match self.mode {
            MarginMode::Schedule => margin_schedule(self, t),
            MarginMode::Fixed(m) => {
                if t < 1 {
                    return Err(Error::domain(MODULE, "round index starts at 1"));
                }
                Ok(m)
            }
        }
    }
}

/// `Δ_t = max(ν√(2L), 2μL)` with `L = ln(C_νμ·t / ln(1/δ))`, `C_νμ = √(π/2)ν + 2μ`.
///
/// The argument of the outer logarithm is floored at `e`, so `L ≥ 1`.
pub fn margin_schedule(config: &ClipConfig, t: u64) -> Result<f64> {
    config.validate()?;
    if t < 1 {
        return Err(Error::domain(MODULE, "round index starts at 1"));
    }
    let (nu, mu) = (config.nu, config.mu);
    if nu == 0.0 && mu == 0.0 {
        return Ok(0.0);
    }
    let c_nu_mu = math::sqrt(core::f64::consts::FRAC_PI_2) * nu + 2.0 * mu;
    let arg = c_nu_mu * t as f64 / math::ln(1.0 / config.delta);
    let l = math::ln(arg.max(core::f64::consts::E));
    Ok((nu * math::sqrt(2.0 * l)).max(2.0 * mu * l))
}

/// Clips `g` at `bound + margin`. Returns `None` when `bound = 0`, the
/// no-op case, and otherwise `(ḡ, Ḡ)` together with whether clipping bit.
#[inline]
pub(crate) fn clip_for_bettor(g: f64, bound: f64, margin: f64) -> Option<(f64, f64, bool)> {
    if bound == 0.0 {
        return None;
    }
    let threshold = bound + margin;
    let clipped = g.clamp(-threshold, threshold);
    Some((clipped, threshold, clipped != g))
}

/// One coordinate bettor per dimension, fed clipped gradients.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClippedLearner {
    bettors: Vec<BettorState>,
    config: ClipConfig,
    t: u64,
    clipped_total: u64,
}

impl ClippedLearner {
    /// Learner starting at `c1` with per-coordinate radii `radii`.
    pub fn new(config: ClipConfig, c1: &[f64], radii: &[f64]) -> Result<Self> {
        config.validate()?;
        Error::check_len(MODULE, c1.len(), radii.len())?;
        let bettors = c1
            .iter()
            .zip(radii)
            .map(|(&c, &r)| BettorState::new(c, r))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            bettors,
            config,
            t: 0,
            clipped_total: 0,
        })
    }

    /// Learner starting at the origin.
    pub fn at_origin(config: ClipConfig, radii: &[f64]) -> Result<Self> {
        let zeros = alloc::vec![0.0; radii.len()];
        Self::new(config, &zeros, radii)
    }

    pub fn dim(&self) -> usize {
        self.bettors.len()
    }

    pub fn config(&self) -> &ClipConfig {
        &self.config
    }

    pub fn rounds(&self) -> u64 {
        self.t
    }

    /// Total number of clipped coordinate gradients so far.
    pub fn clipped_total(&self) -> u64 {
        self.clipped_total
    }

    pub fn bettors(&self) -> &[BettorState] {
        &self.bettors
    }

    pub fn predict(&self) -> Vec<f64> {
        self.bettors.iter().map(BettorState::predict).collect()
    }

    pub fn predict_into(&self, out: &mut [f64]) {
        for (o, b) in out.iter_mut().zip(&self.bettors) {
            *o = b.predict();
        }
    }

    /// Clips and feeds one gradient vector at the given margin. Returns the
    /// number of coordinates whose gradient was clipped.
    pub fn clipped_step(&mut self, noisy_grad: &[f64], grad_bounds: &[f64], margin: f64) -> Result<usize> {
        Error::check_len(MODULE, self.bettors.len(), noisy_grad.len())?;
        Error::check_len(MODULE, self.bettors.len(), grad_bounds.len())?;
        if !(margin >= 0.0) || !margin.is_finite() {
            return Err(Error::domain(MODULE, "margin must be finite and >= 0"));
        }
        if grad_bounds.iter().any(|&g| !(g >= 0.0) || !g.is_finite()) {
            return Err(Error::domain(MODULE, "gradient bounds must be finite and >= 0"));
        }
        let mut clipped = 0;
        for ((bettor, &g), &bound) in self.bettors.iter_mut().zip(noisy_grad).zip(grad_bounds) {
            if let Some((g_bar, threshold, was_clipped)) = clip_for_bettor(g, bound, margin) {
                bettor.update(g_bar, threshold)?;
                clipped += was_clipped as usize;
            }
        }
        self.t += 1;
        self.clipped_total += clipped as u64;
        Ok(clipped)
    }

    /// Like [`clipped_step`](Self::clipped_step) with the configured margin for the next round.
    pub fn step(&mut self, noisy_grad: &[f64], grad_bounds: &[f64]) -> Result<usize> {
        let margin = self.config.margin(self.t + 1)?;
        self.clipped_step(noisy_grad, grad_bounds, margin)
    }
}
