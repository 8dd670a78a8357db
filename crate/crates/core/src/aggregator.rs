//! Scale-free second-order expert aggregation and the clipping-margin meta-learner.
//!
//! [`ExpertWeights`] runs, for every expert, a grid of `LEVELS` learning rates
//! `η_i = 2^-i / (2·E_1)` where `E_1` is the first nonzero regret range. With
//! `E_t` the running maximum of `|r_{e,s}|`, a level is active while
//! `η_i ≤ 1/(2·E_t)`; levels that drop out stay out. Each round the regrets
//! are rescaled to `r̃ = r·min(1, E_{t-1}/max_e |r_e|)` and the weights are
//!
//! ```text
//! w_e ∝ Σ_{active i} η_i · exp(η_i·R̃_{e,i} - η_i²·Ṽ_{e,i})
//! ```
//!
//! with `R̃`, `Ṽ` the sums of `r̃` and `r̃²` seen by level `i`. For every
//! expert this guarantees
//!
//! ```text
//! Σ_t r_{e,t} ≤ 3·√(Λ·V_e) + (6Λ + 1)·E_T,   Λ = ln(LEVELS·K)
//! ```
//!
//! as long as `E_T / E_1 ≤ 2^(LEVELS-1)`. Since `E_T ≤ 2·max_t ‖∇̂_t‖_∞`
//! this is the second-order form with `Ξ3 = 3√(Λ/ln K)` and
//! `Ξ4 = 2(6Λ+1)/ln K`. Multiplying all regrets by `λ > 0` multiplies every
//! `η_i` by `1/λ`, so the weights are scale-free.

use alloc::vec;
use alloc::vec::Vec;

use crate::clipper::{ClipConfig, ClippedLearner};
use crate::error::{Error, Result};
use crate::math;

const MODULE: &str = "aggregator";

/// Number of learning rates per expert.
pub const LEVELS: usize = 64;

/// Convex combination `Σ_e w_e · pred_e`.
pub fn aggregate(weights: &[f64], predictions: &[f64]) -> Result<f64> {
    Error::check_len(MODULE, weights.len(), predictions.len())?;
    Ok(weights.iter().zip(predictions).map(|(w, p)| w * p).sum())
}

/// Layout of the clipping-margin grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum GridMode {
    /// `{0, 1, ..., ⌊√T⌋ + 1}`.
    Integer,
    /// `{0} ∪ {2^i ≤ ⌊√T⌋ + 1}`.
    #[default]
    Geometric,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MarginGrid {
    pub margins: Vec<f64>,
    pub mode: GridMode,
}

/// Margin grid for horizon `T`.
pub fn build_margin_grid(horizon: u64, mode: GridMode) -> Result<MarginGrid> {
    if horizon < 1 {
        return Err(Error::domain(MODULE, "horizon T must be >= 1"));
    }
    let mut root = math::floor(math::sqrt(horizon as f64)) as u64;
    // guard against rounding in sqrt for large perfect squares
    while root * root > horizon {
        root -= 1;
    }
    while (root + 1) * (root + 1) <= horizon {
        root += 1;
    }
    let top = root + 1;
    let margins = match mode {
        GridMode::Integer => (0..=top).map(|m| m as f64).collect(),
        GridMode::Geometric => {
            let mut out = vec![0.0];
            let mut p = 1u64;
            while p <= top {
                out.push(p as f64);
                p *= 2;
            }
            out
        }
    };
    Ok(MarginGrid { margins, mode })
}

/// Second-order adaptive weights over `K` experts.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExpertWeights {
    w: Vec<f64>,
    /// First nonzero range `E_1`, zero before any informative round.
    first_range: f64,
    /// Running max of `|r|`.
    range_max: f64,
    /// Smallest active level index.
    first_active: usize,
    /// Per expert `Σ r̃ / E_1`. Every active level has seen every round, so
    /// these sums are shared by all active levels.
    scaled_sum: Vec<f64>,
    /// Per expert `Σ r̃² / E_1²`.
    scaled_sq: Vec<f64>,
    /// Raw cumulative regret per expert.
    regret: Vec<f64>,
    /// Raw `Σ r²` per expert.
    var: Vec<f64>,
    rounds: u64,
}

impl ExpertWeights {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::domain(MODULE, "need at least one expert"));
        }
        Ok(Self {
            w: vec![1.0 / k as f64; k],
            first_range: 0.0,
            range_max: 0.0,
            first_active: 0,
            scaled_sum: vec![0.0; k],
            scaled_sq: vec![0.0; k],
            regret: vec![0.0; k],
            var: vec![0.0; k],
            rounds: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    /// Running max of `|r_{e,t}|`.
    pub fn range_max(&self) -> f64 {
        self.range_max
    }

    /// Cumulative regret `Σ_t r_{e,t}` per expert.
    pub fn cumulative_regret(&self) -> &[f64] {
        &self.regret
    }

    /// `Σ_t r_{e,t}²` per expert.
    pub fn cumulative_sq(&self) -> &[f64] {
        &self.var
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    fn lambda(&self) -> f64 {
        math::ln((LEVELS * self.w.len()) as f64)
    }

    /// `(Ξ3, Ξ4)`; undefined for a single expert, where `ln K = 0`.
    pub fn constants(&self) -> (f64, f64) {
        let lambda = self.lambda();
        let log_k = math::ln(self.w.len() as f64);
        (3.0 * math::sqrt(lambda / log_k), 2.0 * (6.0 * lambda + 1.0) / log_k)
    }

    /// `3√(Λ·V_e) + (6Λ+1)·E_T`, or `∞` once the range outgrew the level grid.
    pub fn regret_bound(&self, e: usize) -> f64 {
        if self.first_range > 0.0
            && self.range_max / self.first_range > libm::ldexp(1.0, LEVELS as i32 - 1)
        {
            return f64::INFINITY;
        }
        let lambda = self.lambda();
        3.0 * math::sqrt(lambda * self.var[e]) + (6.0 * lambda + 1.0) * self.range_max
    }

    /// Feeds the instantaneous regrets `r_e = ⟨∇̂, w⟩ - ∇̂_e`.
    pub fn update(&mut self, regrets: &[f64]) -> Result<()> {
        Error::check_len(MODULE, self.w.len(), regrets.len())?;
        if regrets.iter().any(|r| !r.is_finite()) {
            return Err(Error::NonFinite {
                module: MODULE,
                what: "regret",
            });
        }
        self.rounds += 1;
        for ((acc, sq), &r) in self.regret.iter_mut().zip(&mut self.var).zip(regrets) {
            *acc += r;
            *sq += r * r;
        }
        let peak = regrets.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        if peak == 0.0 {
            return Ok(());
        }
        if self.first_range == 0.0 {
            self.first_range = peak;
            self.range_max = peak;
        }
        let scale = (self.range_max / peak).min(1.0) / self.first_range;
        let k = self.w.len();
        for ((sum, sq), &r) in self.scaled_sum.iter_mut().zip(&mut self.scaled_sq).zip(regrets) {
            let x = r * scale;
            *sum += x;
            *sq += x * x;
        }
        self.range_max = self.range_max.max(peak);
        // level i stays active while 2^i ≥ E_t / E_1
        while self.first_active < LEVELS - 1
            && libm::ldexp(1.0, self.first_active as i32) < self.range_max / self.first_range
        {
            self.first_active += 1;
        }

        let mut logs = Vec::with_capacity(k);
        for (&sum, &sq) in self.scaled_sum.iter().zip(&self.scaled_sq) {
            let terms = (self.first_active..LEVELS).map(|i| {
                // η_i·E_1 = 2^-(i+1)
                let eta = libm::ldexp(1.0, -(i as i32 + 1));
                math::ln(eta) + eta * sum - eta * eta * sq
            });
            logs.push(math::log_sum_exp(terms));
        }
        let norm = math::log_sum_exp(logs.iter().copied());
        for (w, l) in self.w.iter_mut().zip(&logs) {
            *w = math::exp(l - norm);
        }
        let total: f64 = self.w.iter().sum();
        for w in self.w.iter_mut() {
            *w /= total;
        }
        Ok(())
    }
}

/// Clipped learners at every margin of a grid, aggregated by [`ExpertWeights`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MarginMeta {
    margins: Vec<f64>,
    learners: Vec<ClippedLearner>,
    weights: ExpertWeights,
}

impl MarginMeta {
    /// One learner per margin, all starting at the origin with the same radii.
    pub fn new(grid: &MarginGrid, radii: &[f64]) -> Result<Self> {
        if grid.margins.is_empty() {
            return Err(Error::domain(MODULE, "margin grid is empty"));
        }
        let learners = grid
            .margins
            .iter()
            .map(|&m| ClippedLearner::at_origin(ClipConfig::fixed(m)?, radii))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            margins: grid.margins.clone(),
            weights: ExpertWeights::new(learners.len())?,
            learners,
        })
    }

    pub fn margins(&self) -> &[f64] {
        &self.margins
    }

    pub fn learners(&self) -> &[ClippedLearner] {
        &self.learners
    }

    pub fn weights(&self) -> &ExpertWeights {
        &self.weights
    }

    /// Aggregated prediction `ĉ_t = Σ_Δ w^Δ c^Δ`.
    pub fn predict(&self) -> Vec<f64> {
        let dim = self.learners[0].dim();
        let mut out = vec![0.0; dim];
        let mut buf = vec![0.0; dim];
        for (learner, &w) in self.learners.iter().zip(self.weights.weights()) {
            learner.predict_into(&mut buf);
            for (o, c) in out.iter_mut().zip(&buf) {
                *o += w * c;
            }
        }
        out
    }

    /// One round: predicts, asks `oracle` for the noisy gradient at the
    /// aggregated prediction, and updates every learner and the weights.
    /// Returns the aggregated prediction that was played.
    pub fn round<F>(&mut self, grad_bounds: &[f64], oracle: F) -> Result<Vec<f64>>
    where
        F: FnOnce(&[f64]) -> Vec<f64>,
    {
        let played = self.predict();
        let noisy = oracle(&played);
        self.update(&played, &noisy, grad_bounds)?;
        Ok(played)
    }

    fn update(&mut self, played: &[f64], noisy: &[f64], grad_bounds: &[f64]) -> Result<()> {
        Error::check_len(MODULE, played.len(), noisy.len())?;
        let k = self.learners.len();
        let mut expert_grads = Vec::with_capacity(k);
        for learner in &self.learners {
            let c = learner.predict();
            expert_grads.push(noisy.iter().zip(&c).map(|(g, c)| g * c).sum::<f64>());
        }
        if k > 1 {
            let mixed: f64 = self
                .weights
                .weights()
                .iter()
                .zip(&expert_grads)
                .map(|(w, g)| w * g)
                .sum();
            let regrets: Vec<f64> = expert_grads.iter().map(|g| mixed - g).collect();
            self.weights.update(&regrets)?;
        }
        for (learner, &margin) in self.learners.iter_mut().zip(&self.margins) {
            learner.clipped_step(noisy, grad_bounds, margin)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_examples() {
        let g = build_margin_grid(9, GridMode::Integer).unwrap();
        assert_eq!(g.margins, [0.0, 1.0, 2.0, 3.0, 4.0]);
        let g = build_margin_grid(1, GridMode::Integer).unwrap();
        assert_eq!(g.margins, [0.0, 1.0, 2.0]);
        let g = build_margin_grid(100, GridMode::Geometric).unwrap();
        assert_eq!(g.margins, [0.0, 1.0, 2.0, 4.0, 8.0]);
        assert!(build_margin_grid(0, GridMode::Integer).is_err());
    }

    #[test]
    fn fresh_weights_are_uniform() {
        let w = ExpertWeights::new(4).unwrap();
        assert_eq!(w.weights(), [0.25; 4]);
    }

    #[test]
    fn equal_regrets_keep_uniform() {
        let mut w = ExpertWeights::new(3).unwrap();
        for t in 0..100 {
            let r = if t % 2 == 0 { 0.7 } else { -0.2 };
            w.update(&[r, r, r]).unwrap();
            let first = w.weights()[0];
            assert!(w.weights().iter().all(|&x| x == first));
        }
    }

    #[test]
    fn better_expert_takes_over() {
        let mut w = ExpertWeights::new(2).unwrap();
        for _ in 0..500 {
            let losses = [0.0, 1.0];
            let mixed = aggregate(w.weights(), &losses).unwrap();
            w.update(&[mixed - losses[0], mixed - losses[1]]).unwrap();
        }
        assert!(w.weights()[0] > 0.99, "{:?}", w.weights());
    }

    #[test]
    fn rejects_non_finite_regret() {
        let mut w = ExpertWeights::new(2).unwrap();
        assert!(w.update(&[f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate(&[0.5, 0.5], &[1.0, 3.0]).unwrap(), 2.0);
        assert_eq!(aggregate(&[1.0, 0.0], &[5.0, -5.0]).unwrap(), 5.0);
        assert!(aggregate(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn scale_free_under_power_of_two() {
        let mut a = ExpertWeights::new(3).unwrap();
        let mut b = ExpertWeights::new(3).unwrap();
        let seq = [[0.3, -0.1, -0.2], [1.5, -1.0, -0.5], [-0.2, 0.4, -0.2]];
        for _ in 0..20 {
            for r in &seq {
                a.update(r).unwrap();
                let rb: Vec<f64> = r.iter().map(|x| x * 8.0).collect();
                b.update(&rb).unwrap();
            }
        }
        assert_eq!(a.weights(), b.weights());
    }

    #[test]
    fn singleton_meta_matches_plain_learner() {
        let grid = MarginGrid {
            margins: vec![0.0],
            mode: GridMode::Integer,
        };
        let radii = [1.0, 2.0];
        let mut meta = MarginMeta::new(&grid, &radii).unwrap();
        let mut plain = ClippedLearner::at_origin(ClipConfig::fixed(0.0).unwrap(), &radii).unwrap();
        for t in 0..200 {
            let g = [((t * 7) % 5) as f64 - 2.0, ((t * 3) % 4) as f64 - 1.5];
            let played = meta.round(&[1.0, 1.0], |_| g.to_vec()).unwrap();
            assert_eq!(played, plain.predict());
            plain.clipped_step(&g, &[1.0, 1.0], 0.0).unwrap();
        }
        assert_eq!(meta.learners()[0], plain);
    }

    #[test]
    fn identical_instances_stay_uniform() {
        let grid = MarginGrid {
            margins: vec![2.0; 3],
            mode: GridMode::Integer,
        };
        let mut meta = MarginMeta::new(&grid, &[1.0]).unwrap();
        for t in 0..100 {
            let g = if t % 3 == 0 { 0.5 } else { -0.3 };
            let single = meta.learners()[0].predict()[0];
            let played = meta.round(&[1.0], |_| alloc::vec![g]).unwrap();
            assert!((played[0] - single).abs() < 1e-15);
        }
        let w = meta.weights().weights();
        assert!(w.iter().all(|&x| x == w[0]));
    }
}
