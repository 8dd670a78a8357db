//! Online wavelet regression by expert aggregation.
//!
//! An expert is a truncated Haar expansion starting at scale `j0` with a fixed
//! clipping margin `Δ` and an initial value for its scaling coefficients.
//! Every coefficient is a [`BettorState`] constrained to its diameter. Each
//! round the aggregated prediction `ŷ = Σ_e w_e f̂_e(x)` is issued before the
//! label is seen (see [`Regressor::predict`] and [`Round::observe`]). Then the
//! active coefficients of every expert receive the clipped chain-rule
//! gradient `ℓ'(ŷ)·φ_{j,k}(x)` with bound `G·|φ_{j,k}(x)|`, and the expert
//! weights receive the linearized regrets `ℓ'(ŷ)·(ŷ - f̂_e(x))`.
//!
//! Coefficient learners are created on first use, so the work per round is
//! proportional to the number of active basis functions.

use alloc::vec;
use alloc::vec::Vec;

use crate::aggregator::{build_margin_grid, ExpertWeights, GridMode};
use crate::bettor::BettorState;
use crate::clipper::clip_for_bettor;
use crate::error::{Error, Result};
use crate::math;
use crate::wavelet::{CoefficientTree, HaarBasis};

const MODULE: &str = "regression";

/// Largest number of coefficients per expert.
pub const MAX_COEFFICIENTS_LOG2: u32 = 20;

const EMPTY: u32 = u32::MAX;

/// How the scaling coefficients of the experts are initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ScalingInit {
    /// A single initial value, 0.
    #[default]
    ZeroInit,
    /// About `2·T^{1/4}` values spanning the admissible range.
    CoarseGrid,
    /// `2⌈√T⌉ + 1` values spanning the admissible range.
    PaperGrid,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct RegressionConfig {
    /// Besov-norm bound.
    #[cfg_attr(feature = "serde", serde(rename = "B"))]
    pub b: f64,
    /// Largest starting scale.
    #[cfg_attr(feature = "serde", serde(rename = "J0"))]
    pub j0_max: u32,
    /// Truncation depth; derived from `T` when absent.
    #[cfg_attr(feature = "serde", serde(rename = "J"))]
    pub depth: Option<u32>,
    /// Horizon.
    #[cfg_attr(feature = "serde", serde(rename = "T"))]
    pub horizon: u64,
    pub d: u32,
    pub grid_mode: ScalingInit,
    pub margin_grid: GridMode,
    /// Lower bound on `s - d/p`.
    pub kappa: f64,
    /// Noise floor `σ0` used to pick the default depth.
    pub sigma_floor: f64,
    /// Bound on the expected loss derivative; derived from `B` when absent.
    #[cfg_attr(feature = "serde", serde(rename = "G"))]
    pub gradient_bound: Option<f64>,
    pub expert_cap: usize,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self {
            b: 1.0,
            j0_max: 2,
            depth: None,
            horizon: 1024,
            d: 1,
            grid_mode: ScalingInit::ZeroInit,
            margin_grid: GridMode::Geometric,
            kappa: 0.5,
            sigma_floor: 0.1,
            gradient_bound: None,
            expert_cap: 10_000,
        }
    }
}

impl RegressionConfig {
    pub fn validate(&self) -> Result<()> {
        HaarBasis::new(self.d)?;
        if !(self.b > 0.0) || !self.b.is_finite() {
            return Err(Error::domain(MODULE, "Besov bound B must be positive"));
        }
        if self.horizon < 1 {
            return Err(Error::domain(MODULE, "horizon T must be >= 1"));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::domain(MODULE, "kappa must be positive"));
        }
        if !(self.sigma_floor > 0.0) {
            return Err(Error::domain(MODULE, "sigma floor must be positive"));
        }
        if let Some(g) = self.gradient_bound {
            if !(g > 0.0) || !g.is_finite() {
                return Err(Error::domain(MODULE, "gradient bound G must be positive"));
            }
        }
        if (self.j0_max + 1) * self.d > MAX_COEFFICIENTS_LOG2 {
            return Err(Error::domain(MODULE, "starting scale J0 too large"));
        }
        if let Some(depth) = self.depth {
            if (self.j0_max + depth + 1) * self.d > MAX_COEFFICIENTS_LOG2 {
                return Err(Error::domain(
                    MODULE,
                    "J0 + J too large: an expert would exceed 2^20 coefficients",
                ));
            }
        }
        Ok(())
    }

    /// Depth `J`, either configured or `⌈S/((2S+d)κ)·log2(T·B²/σ0²)⌉` capped
    /// so that an expert has at most `2^20` coefficients.
    pub fn resolved_depth(&self) -> u32 {
        if let Some(depth) = self.depth {
            return depth;
        }
        let s = 1.0;
        let d = self.d as f64;
        let ratio = self.horizon as f64 * self.b * self.b / (self.sigma_floor * self.sigma_floor);
        let raw = math::ceil(s / ((2.0 * s + d) * self.kappa) * libm::log2(ratio.max(1.0)));
        let cap = (MAX_COEFFICIENTS_LOG2 / self.d).saturating_sub(self.j0_max + 1);
        (raw.max(0.0) as u32).min(cap)
    }

    /// Finest scale carrying details.
    pub fn max_level(&self) -> u32 {
        self.j0_max + self.resolved_depth()
    }

    /// Sup-norm bounds and the derivative bound `G` actually used by the
    /// regressor. The predictor bound accounts for every coefficient's radius.
    pub fn bounds(&self) -> Result<ResolvedBounds> {
        self.validate()?;
        let basis = HaarBasis::new(self.d)?;
        let depth = self.resolved_depth();
        let (b_inf, _, _) = sup_norm_bounds(self.b, depth, self.kappa, &basis)?;
        let predictor = b_inf * basis.m_phi() * basis.m_phi()
            + (depth + 1) as f64 * basis.detail_types() as f64 * self.b * basis.m_psi();
        let g = self.gradient_bound.unwrap_or(2.0 * (predictor + b_inf));
        Ok(ResolvedBounds {
            b_inf,
            predictor,
            g,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedBounds {
    pub b_inf: f64,
    /// Sup-norm bound on every expert's predictor.
    pub predictor: f64,
    pub g: f64,
}

/// `C_j = B·2^{-jd/2}`.
pub fn diameters(j: u32, b: f64, d: u32) -> f64 {
    b * math::pow2_half(-((j * d) as i32))
}

/// `(B_∞, B̂_∞, G)` with `B_∞ = B·M_φ/(1 - 2^{-κ})`, `B̂_∞ = (J+1)·B·M_φ` and
/// `G = 2(B̂_∞ + B_∞)`.
pub fn sup_norm_bounds(b: f64, depth: u32, kappa: f64, basis: &HaarBasis) -> Result<(f64, f64, f64)> {
    if !(kappa > 0.0) {
        return Err(Error::domain(MODULE, "kappa must be positive"));
    }
    let b_inf = b * basis.m_phi() / (1.0 - math::powf(2.0, -kappa));
    let b_hat = (depth + 1) as f64 * b * basis.m_phi();
    Ok((b_inf, b_hat, 2.0 * (b_hat + b_inf)))
}

/// Radius of the scaling coefficients at `j0`: `2^{-j0·d/2}·B_∞·M_φ`.
pub fn scaling_radius(j0: u32, b_inf: f64, basis: &HaarBasis) -> f64 {
    math::pow2_half(-((j0 * basis.dim()) as i32)) * b_inf * basis.m_phi()
}

/// Candidate initial values for the scaling coefficients at `j0`.
pub fn scaling_grid(j0: u32, horizon: u64, b_inf: f64, basis: &HaarBasis, mode: ScalingInit) -> Vec<f64> {
    let a = scaling_radius(j0, b_inf, basis);
    let root = math::ceil(math::sqrt(horizon.max(1) as f64)) as usize;
    let half = match mode {
        ScalingInit::ZeroInit => return vec![0.0],
        ScalingInit::PaperGrid => root,
        ScalingInit::CoarseGrid => {
            let quarter = math::ceil(math::powf(horizon.max(1) as f64, 0.25)) as usize;
            quarter.min(root)
        }
    };
    (0..=2 * half)
        .map(|i| {
            let offset = i as f64 - half as f64;
            a * offset / half as f64
        })
        .collect()
}

/// `ℓ'(ŷ) = 2(ŷ - y)`.
#[inline]
pub fn loss_derivative(prediction: f64, y: f64) -> f64 {
    2.0 * (prediction - y)
}

/// Identity of one expert.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExpertRecord {
    pub j0: u32,
    pub init_alpha: f64,
    pub margin: f64,
}

/// One record per `(j0, initial scaling value, margin)`.
pub fn build_expert_set(config: &RegressionConfig, basis: &HaarBasis) -> Result<Vec<ExpertRecord>> {
    config.validate()?;
    let bounds = config.bounds()?;
    let margins = build_margin_grid(config.horizon, config.margin_grid)?.margins;
    let mut count = 0usize;
    for j0 in 0..=config.j0_max {
        count += scaling_grid(j0, config.horizon, bounds.b_inf, basis, config.grid_mode).len() * margins.len();
    }
    if count > config.expert_cap {
        return Err(Error::Unsupported {
            module: MODULE,
            message: alloc::format!(
                "{count} experts exceed the cap of {}; use grid_mode zero_init or coarse_grid, \
                 a geometric margin grid, or a smaller J0",
                config.expert_cap
            ),
        });
    }
    let mut out = Vec::with_capacity(count);
    for j0 in 0..=config.j0_max {
        for alpha in scaling_grid(j0, config.horizon, bounds.b_inf, basis, config.grid_mode) {
            for &margin in &margins {
                out.push(ExpertRecord {
                    j0,
                    init_alpha: alpha,
                    margin,
                });
            }
        }
    }
    Ok(out)
}

/// Position of a coefficient inside an expert.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefficientId {
    Scaling { j: u32, k: usize },
    Detail { j: u32, index: usize },
}

/// Gradient of one active coefficient and its expected bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientGradient {
    pub id: CoefficientId,
    pub basis_value: f64,
    pub gradient: f64,
    pub bound: f64,
}

/// `ĝ_{j,k} = deriv·φ_{j,k}(x)` with bound `G·|φ_{j,k}(x)|` for every function
/// active at `x` on the scales of an expert starting at `j0` with depth `J`.
pub fn coefficient_gradients(
    basis: &HaarBasis,
    j0: u32,
    depth: u32,
    x: &[f64],
    deriv: f64,
    g: f64,
) -> Result<Vec<CoefficientGradient>> {
    basis.check_point(x)?;
    let mut out = Vec::with_capacity(1 + (depth as usize + 1) * basis.detail_types());
    let (k, _) = basis.locate(x, j0);
    let v = math::pow2_half((j0 * basis.dim()) as i32);
    out.push(CoefficientGradient {
        id: CoefficientId::Scaling { j: j0, k },
        basis_value: v,
        gradient: deriv * v,
        bound: g * v.abs(),
    });
    let mut buf = [(0usize, 0.0f64); 3];
    let types = basis.detail_types();
    for j in j0..=j0 + depth {
        basis.active_values(x, j, &mut buf[..types]);
        for &(index, v) in &buf[..types] {
            out.push(CoefficientGradient {
                id: CoefficientId::Detail { j, index },
                basis_value: v,
                gradient: deriv * v,
                bound: g * v.abs(),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
struct Cell {
    index: u32,
    bettor: BettorState,
    /// `Σ_s w_{e,s}·c_s` up to the round where `mark` was taken.
    acc: f64,
    mark: f64,
}

/// Coefficients of one scale, learners created on first use.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
struct LazyLevel {
    init: f64,
    radius: f64,
    wealth: f64,
    slots: Vec<u32>,
    cells: Vec<Cell>,
}

impl LazyLevel {
    fn new(size: usize, init: f64, radius: f64, wealth: f64) -> Self {
        Self {
            init,
            radius,
            wealth,
            slots: vec![EMPTY; size],
            cells: Vec::new(),
        }
    }

    #[inline]
    fn value(&self, index: usize) -> f64 {
        match self.slots[index] {
            EMPTY => self.init,
            slot => self.cells[slot as usize].bettor.predict(),
        }
    }

    /// Feeds a clipped gradient; returns `(old, new)` values.
    fn update(&mut self, index: usize, g: f64, threshold: f64, cum_weight: f64) -> Result<(f64, f64)> {
        let slot = match self.slots[index] {
            EMPTY => {
                let bettor = BettorState::with_wealth(self.init, self.radius, self.wealth)?;
                self.cells.push(Cell {
                    index: index as u32,
                    bettor,
                    acc: 0.0,
                    mark: 0.0,
                });
                let slot = self.cells.len() - 1;
                self.slots[index] = slot as u32;
                slot
            }
            slot => slot as usize,
        };
        let cell = &mut self.cells[slot];
        let old = cell.bettor.predict();
        cell.acc += old * (cum_weight - cell.mark);
        cell.mark = cum_weight;
        cell.bettor.update(g, threshold)?;
        Ok((old, cell.bettor.predict()))
    }

    fn values(&self) -> Vec<f64> {
        let mut out = vec![self.init; self.slots.len()];
        for c in &self.cells {
            out[c.index as usize] = c.bettor.predict();
        }
        out
    }

    /// `Σ_s w_{e,s}·c_s` for every coefficient, given the current cumulative weight.
    fn weighted_sums(&self, cum_weight: f64) -> Vec<f64> {
        let mut out = vec![self.init * cum_weight; self.slots.len()];
        for c in &self.cells {
            out[c.index as usize] = c.acc + c.bettor.predict() * (cum_weight - c.mark);
        }
        out
    }

    fn for_each_bettor(&self, mut f: impl FnMut(&BettorState)) {
        for c in &self.cells {
            f(&c.bettor);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
struct Expert {
    record: ExpertRecord,
    scaling: LazyLevel,
    details: Vec<LazyLevel>,
    cum_weight: f64,
    sq_loss: f64,
}

impl Expert {
    fn new(record: ExpertRecord, basis: &HaarBasis, depth: u32, b: f64, b_inf: f64) -> Result<Self> {
        let d = basis.dim();
        let j0 = record.j0;
        let radius = scaling_radius(j0, b_inf, basis);
        if record.init_alpha.abs() > radius {
            return Err(Error::domain(MODULE, "initial scaling value outside its radius"));
        }
        let scaling = LazyLevel::new(basis.scaling_count(j0), record.init_alpha, radius, radius);
        let details = (j0..=j0 + depth)
            .map(|j| {
                let c = diameters(j, b, d);
                let wealth = libm::ldexp(c, -(((j - j0) * d) as i32));
                LazyLevel::new(basis.detail_count(j), 0.0, c, wealth)
            })
            .collect();
        Ok(Self {
            record,
            scaling,
            details,
            cum_weight: 0.0,
            sq_loss: 0.0,
        })
    }

    fn predict(&self, basis: &HaarBasis, x: &[f64]) -> f64 {
        let (k, _) = basis.locate(x, self.record.j0);
        let mut value = self.scaling.value(k) * math::pow2_half((self.record.j0 * basis.dim()) as i32);
        let mut buf = [(0usize, 0.0f64); 3];
        let types = basis.detail_types();
        for (l, level) in self.details.iter().enumerate() {
            basis.active_values(x, self.record.j0 + l as u32, &mut buf[..types]);
            for &(idx, v) in &buf[..types] {
                value += level.value(idx) * v;
            }
        }
        value
    }

    fn tree(&self, d: u32, depth: u32) -> CoefficientTree {
        CoefficientTree {
            j0: self.record.j0,
            depth,
            d,
            alpha: self.scaling.values(),
            beta: self.details.iter().map(LazyLevel::values).collect(),
        }
    }

    fn weighted_tree(&self, d: u32, depth: u32) -> CoefficientTree {
        CoefficientTree {
            j0: self.record.j0,
            depth,
            d,
            alpha: self.scaling.weighted_sums(self.cum_weight),
            beta: self.details.iter().map(|l| l.weighted_sums(self.cum_weight)).collect(),
        }
    }
}

/// Re-expresses a tree on the canonical layout: scaling at scale 0 and
/// details on scales `0..=max_level`.
pub fn to_canonical(tree: &CoefficientTree, max_level: u32) -> Result<CoefficientTree> {
    tree.validate()?;
    if tree.max_level() > max_level {
        return Err(Error::domain(MODULE, "tree is finer than the canonical layout"));
    }
    let basis = tree.basis()?;
    let mut out = CoefficientTree::zeros(&basis, 0, max_level)?;
    let mut alpha = tree.alpha.clone();
    for j in (0..tree.j0).rev() {
        let (coarse, detail) = crate::wavelet::coarsen(&alpha, j, tree.d);
        out.beta[j as usize] = detail;
        alpha = coarse;
    }
    out.alpha = alpha;
    for (l, level) in tree.beta.iter().enumerate() {
        out.beta[tree.j0 as usize + l].clone_from(level);
    }
    Ok(out)
}

/// Position in the flattened canonical layout.
#[inline]
fn canonical_detail(j: u32, index: usize, d: u32) -> usize {
    (1usize << (j * d)) + index
}

/// Expansion of `φ_{j0,k}` on the canonical layout.
fn scaling_expansion(j0: u32, k: usize, d: u32, out: &mut Vec<(usize, f64)>) {
    out.clear();
    let step = math::pow2_half(-(d as i32));
    let mut factor = 1.0;
    let mut kk = [0usize; 2];
    if d == 1 {
        kk[0] = k;
    } else {
        kk = [k >> j0, k & ((1usize << j0) - 1)];
    }
    for j in (1..=j0).rev() {
        factor *= step;
        let parent = [kk[0] >> 1, kk[1] >> 1];
        let signs = [
            if kk[0] & 1 == 0 { 1.0 } else { -1.0 },
            if kk[1] & 1 == 0 { 1.0 } else { -1.0 },
        ];
        let coarse = j - 1;
        let per_type = 1usize << (coarse * d);
        let flat = if d == 1 { parent[0] } else { (parent[0] << coarse) | parent[1] };
        for eps in 1..(1usize << d) {
            let mut sign = 1.0;
            for (axis, s) in signs.iter().enumerate().take(d as usize) {
                if (eps >> axis) & 1 == 1 {
                    sign *= s;
                }
            }
            out.push((canonical_detail(coarse, (eps - 1) * per_type + flat, d), factor * sign));
        }
        kk = parent;
    }
    out.push((0, factor));
}

/// Exact per-round risk `‖f̂_t - f_R‖²` through the Gram matrix of the experts
/// on the canonical layout.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
struct RiskTrace {
    target: Vec<f64>,
    target_norm_sq: f64,
    coeffs: Vec<Vec<f64>>,
    gram: Vec<f64>,
    cross: Vec<f64>,
    risks: Vec<f64>,
}

/// Cap on `experts × canonical coefficients` for risk tracing.
const TRACE_CAP: usize = 1 << 25;

impl RiskTrace {
    fn risk(&self, w: &[f64]) -> f64 {
        let k = w.len();
        let mut quad = 0.0;
        for (e, &we) in w.iter().enumerate() {
            let row = &self.gram[e * k..(e + 1) * k];
            quad += we * row.iter().zip(w).map(|(g, wf)| g * wf).sum::<f64>();
        }
        let lin: f64 = w.iter().zip(&self.cross).map(|(a, b)| a * b).sum();
        (quad - 2.0 * lin + self.target_norm_sq).max(0.0)
    }

    fn apply(&mut self, e: usize, deltas: &[(usize, f64)]) {
        let k = self.coeffs.len();
        for &(i, delta) in deltas {
            for f in 0..k {
                if f == e {
                    continue;
                }
                let g = delta * self.coeffs[f][i];
                self.gram[e * k + f] += g;
                self.gram[f * k + e] += g;
            }
            let own = self.coeffs[e][i];
            self.gram[e * k + e] += delta * (2.0 * own + delta);
            self.cross[e] += delta * self.target[i];
            self.coeffs[e][i] = own + delta;
        }
    }
}

/// Outcome of one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundOutcome {
    pub prediction: f64,
    pub derivative: f64,
    /// Bettor updates performed across all experts.
    pub bettor_updates: usize,
    /// Gradients that were clipped across all experts.
    pub clipped: usize,
}

/// Online regressor state.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Regressor {
    config: RegressionConfig,
    basis: HaarBasis,
    depth: u32,
    bounds_g: f64,
    b_inf: f64,
    experts: Vec<Expert>,
    weights: ExpertWeights,
    t: u64,
    sq_loss: f64,
    trace: Option<RiskTrace>,
    #[cfg_attr(feature = "serde", serde(skip))]
    scratch: Vec<f64>,
}

impl Regressor {
    pub fn new(config: RegressionConfig) -> Result<Self> {
        let basis = HaarBasis::new(config.d)?;
        let records = build_expert_set(&config, &basis)?;
        let depth = config.resolved_depth();
        let bounds = config.bounds()?;
        let experts = records
            .into_iter()
            .map(|r| Expert::new(r, &basis, depth, config.b, bounds.b_inf))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            weights: ExpertWeights::new(experts.len())?,
            scratch: vec![0.0; experts.len()],
            config,
            basis,
            depth,
            bounds_g: bounds.g,
            b_inf: bounds.b_inf,
            experts,
            t: 0,
            sq_loss: 0.0,
            trace: None,
        })
    }

    pub fn config(&self) -> &RegressionConfig {
        &self.config
    }

    pub fn basis(&self) -> &HaarBasis {
        &self.basis
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Finest detail scale over all experts.
    pub fn max_level(&self) -> u32 {
        self.config.j0_max + self.depth
    }

    pub fn gradient_bound(&self) -> f64 {
        self.bounds_g
    }

    pub fn b_inf(&self) -> f64 {
        self.b_inf
    }

    pub fn rounds(&self) -> u64 {
        self.t
    }

    pub fn expert_count(&self) -> usize {
        self.experts.len()
    }

    pub fn records(&self) -> Vec<ExpertRecord> {
        self.experts.iter().map(|e| e.record).collect()
    }

    pub fn weights(&self) -> &ExpertWeights {
        &self.weights
    }

    /// `Σ_t (ŷ_t - y_t)²`.
    pub fn cumulative_loss(&self) -> f64 {
        self.sq_loss
    }

    /// `Σ_t (f̂_{e,t}(x_t) - y_t)²` per expert.
    pub fn expert_losses(&self) -> Vec<f64> {
        self.experts.iter().map(|e| e.sq_loss).collect()
    }

    /// Starts tracing `‖f̂_t - f‖²` each round. `target` is the canonical
    /// tree of `f` (scale 0, depth [`max_level`](Self::max_level)) and
    /// `target_norm_sq` its squared norm, including energy beyond the tree.
    pub fn enable_risk_trace(&mut self, target: &CoefficientTree, target_norm_sq: f64) -> Result<()> {
        if target.j0 != 0 || target.depth != self.max_level() || target.d != self.config.d {
            return Err(Error::domain(MODULE, "target tree must use the canonical layout"));
        }
        target.validate()?;
        let n = target.len();
        let k = self.experts.len();
        if n.saturating_mul(k) > TRACE_CAP {
            return Err(Error::Unsupported {
                module: MODULE,
                message: "risk tracing needs too much memory for this configuration".into(),
            });
        }
        let flat: Vec<f64> = target.iter().copied().collect();
        let mut coeffs = Vec::with_capacity(k);
        for e in 0..k {
            let tree = to_canonical(&self.expert_tree(e), self.max_level())?;
            coeffs.push(tree.iter().copied().collect::<Vec<f64>>());
        }
        let mut gram = vec![0.0; k * k];
        for e in 0..k {
            for f in 0..k {
                gram[e * k + f] = coeffs[e].iter().zip(&coeffs[f]).map(|(a, b)| a * b).sum();
            }
        }
        let cross = coeffs
            .iter()
            .map(|c| c.iter().zip(&flat).map(|(a, b)| a * b).sum())
            .collect();
        self.trace = Some(RiskTrace {
            target: flat,
            target_norm_sq,
            coeffs,
            gram,
            cross,
            risks: Vec::new(),
        });
        Ok(())
    }

    /// Risk `‖f̂_t - f‖²` of every round since tracing started.
    pub fn risk_trace(&self) -> Option<&[f64]> {
        self.trace.as_ref().map(|t| t.risks.as_slice())
    }

    /// Current coefficients of expert `e` on its own layout.
    pub fn expert_tree(&self, e: usize) -> CoefficientTree {
        self.experts[e].tree(self.config.d, self.depth)
    }

    /// Prediction of expert `e` at `x`.
    pub fn expert_predict(&self, e: usize, x: &[f64]) -> Result<f64> {
        self.basis.check_point(x)?;
        Ok(self.experts[e].predict(&self.basis, x))
    }

    /// The aggregated predictor `Σ_e w_e f̂_e` on the canonical layout.
    pub fn current_tree(&self) -> Result<CoefficientTree> {
        let mut out = CoefficientTree::zeros(&self.basis, 0, self.max_level())?;
        for (e, &w) in self.weights.weights().iter().enumerate() {
            let tree = to_canonical(&self.expert_tree(e), self.max_level())?;
            for (o, c) in out.iter_mut().zip(tree.iter()) {
                *o += w * c;
            }
        }
        Ok(out)
    }

    /// The online-to-batch average `(1/t)·Σ_s f̂_s` on the canonical layout.
    pub fn averaged_tree(&self) -> Result<CoefficientTree> {
        if self.t == 0 {
            return self.current_tree();
        }
        let mut out = CoefficientTree::zeros(&self.basis, 0, self.max_level())?;
        for expert in &self.experts {
            let tree = to_canonical(&expert.weighted_tree(self.config.d, self.depth), self.max_level())?;
            for (o, c) in out.iter_mut().zip(tree.iter()) {
                *o += c;
            }
        }
        out.scale(1.0 / self.t as f64);
        Ok(out)
    }

    /// Visits every coefficient learner created so far, with the radius bound
    /// it must respect.
    pub fn for_each_coefficient(&self, mut f: impl FnMut(&BettorState)) {
        for expert in &self.experts {
            expert.scaling.for_each_bettor(&mut f);
            for level in &expert.details {
                level.for_each_bettor(&mut f);
            }
        }
    }

    /// Issues the prediction for `x`. The label is accepted by the returned [`Round`].
    pub fn predict(&mut self, x: &[f64]) -> Result<Round<'_>> {
        self.basis.check_point(x)?;
        if self.t >= self.config.horizon {
            return Err(Error::domain(MODULE, "horizon T exhausted"));
        }
        if self.scratch.len() != self.experts.len() {
            self.scratch = vec![0.0; self.experts.len()];
        }
        let mut prediction = 0.0;
        for ((expert, slot), &w) in self.experts.iter().zip(&mut self.scratch).zip(self.weights.weights()) {
            *slot = expert.predict(&self.basis, x);
            prediction += w * *slot;
        }
        let mut point = [0.0; 2];
        point[..x.len()].copy_from_slice(x);
        Ok(Round {
            reg: self,
            x: point,
            prediction,
        })
    }

    fn observe(&mut self, x: &[f64], prediction: f64, y: f64) -> Result<RoundOutcome> {
        if !y.is_finite() {
            return Err(Error::NonFinite {
                module: MODULE,
                what: "label",
            });
        }
        let deriv = loss_derivative(prediction, y);
        if let Some(trace) = self.trace.as_mut() {
            let r = trace.risk(self.weights.weights());
            trace.risks.push(r);
        }
        self.sq_loss += (prediction - y) * (prediction - y);
        for ((expert, &p), &w) in self.experts.iter_mut().zip(&self.scratch).zip(self.weights.weights()) {
            expert.sq_loss += (p - y) * (p - y);
            expert.cum_weight += w;
        }

        if self.experts.len() > 1 {
            let grads: Vec<f64> = self.scratch.iter().map(|p| deriv * p).collect();
            let mixed: f64 = grads.iter().zip(self.weights.weights()).map(|(g, w)| g * w).sum();
            let regrets: Vec<f64> = grads.iter().map(|g| mixed - g).collect();
            self.weights.update(&regrets)?;
        }

        let d = self.config.d;
        let g_bound = self.bounds_g;
        let types = self.basis.detail_types();
        let mut updates = 0usize;
        let mut clipped = 0usize;
        let mut deltas: Vec<(usize, f64)> = Vec::new();
        let mut expansion: Vec<(usize, f64)> = Vec::new();
        let mut buf = [(0usize, 0.0f64); 3];
        for (e, expert) in self.experts.iter_mut().enumerate() {
            let j0 = expert.record.j0;
            let margin = expert.record.margin;
            let w_cum = expert.cum_weight;
            deltas.clear();

            let (k, _) = self.basis.locate(x, j0);
            let v = math::pow2_half((j0 * d) as i32);
            if let Some((g, threshold, was)) = clip_for_bettor(deriv * v, g_bound * v, margin) {
                let (old, new) = expert.scaling.update(k, g, threshold, w_cum)?;
                updates += 1;
                clipped += was as usize;
                if self.trace.is_some() && new != old {
                    scaling_expansion(j0, k, d, &mut expansion);
                    deltas.extend(expansion.iter().map(|&(i, f)| (i, f * (new - old))));
                }
            }
            for (l, level) in expert.details.iter_mut().enumerate() {
                let j = j0 + l as u32;
                self.basis.active_values(x, j, &mut buf[..types]);
                for &(index, v) in &buf[..types] {
                    if let Some((g, threshold, was)) = clip_for_bettor(deriv * v, g_bound * v.abs(), margin) {
                        let (old, new) = level.update(index, g, threshold, w_cum)?;
                        updates += 1;
                        clipped += was as usize;
                        if self.trace.is_some() && new != old {
                            deltas.push((canonical_detail(j, index, d), new - old));
                        }
                    }
                }
            }
            if let Some(trace) = self.trace.as_mut() {
                trace.apply(e, &deltas);
            }
        }
        self.t += 1;
        Ok(RoundOutcome {
            prediction,
            derivative: deriv,
            bettor_updates: updates,
            clipped,
        })
    }
}

/// A round whose prediction has been issued and whose label is pending.
#[must_use = "a round must be completed with `observe`"]
pub struct Round<'a> {
    reg: &'a mut Regressor,
    x: [f64; 2],
    prediction: f64,
}

impl Round<'_> {
    pub fn prediction(&self) -> f64 {
        self.prediction
    }

    /// Reveals the label and updates the regressor.
    pub fn observe(self, y: f64) -> Result<RoundOutcome> {
        let d = self.reg.config.d as usize;
        let x = self.x;
        self.reg.observe(&x[..d], self.prediction, y)
    }
}
