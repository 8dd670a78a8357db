//! Data generation, online-to-batch averaging and `L2` risk.
//!
//! Design points are uniform on `[0,1)^d` and labels follow
//! `Y = f(X) + ε`. Risks are computed by midpoint quadrature on the dyadic
//! grid of a given resolution, so they are exact for predictors and targets
//! that are piecewise constant at that resolution.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::math;
use crate::wavelet::{self, besov_norm, CoefficientTree, HaarBasis};

const MODULE: &str = "batch";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum NoiseKind {
    Gaussian,
    Laplace,
    /// `±σ` with probability one half each.
    ScaledBernoulli,
    None,
}

/// Zero-mean noise with standard deviation `sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub sigma: f64,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::domain(MODULE, "noise level sigma must be finite and >= 0"));
        }
        Ok(Self { kind, sigma })
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        Self::new(NoiseKind::Gaussian, sigma)
    }

    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            sigma: 0.0,
        }
    }

    pub fn variance(&self) -> f64 {
        match self.kind {
            NoiseKind::None => 0.0,
            _ => self.sigma * self.sigma,
        }
    }

    /// Parameters `(ν, μ)` with `P(|ε| ≥ u) ≤ exp(-½·min(u²/ν², u/μ))`.
    ///
    /// Gaussian noise reports `(σ, σ)`. Laplace noise with scale `b = σ/√2`
    /// reports `(σ, b/2)`. Scaled Bernoulli noise has `P(|ε| ≥ u) = 1` for
    /// `u ≤ σ` and no pair satisfies the bound, so it reports `None`.
    pub fn sub_exponential(&self) -> Option<(f64, f64)> {
        match self.kind {
            NoiseKind::Gaussian => Some((self.sigma, self.sigma)),
            NoiseKind::Laplace => Some((self.sigma, self.sigma * core::f64::consts::FRAC_1_SQRT_2 / 2.0)),
            NoiseKind::ScaledBernoulli => None,
            NoiseKind::None => Some((0.0, 0.0)),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            NoiseKind::None => 0.0,
            NoiseKind::Gaussian => {
                let z: f64 = rng.sample(StandardNormal);
                self.sigma * z
            }
            NoiseKind::Laplace => {
                let b = self.sigma * core::f64::consts::FRAC_1_SQRT_2;
                let u: f64 = rng.gen::<f64>() - 0.5;
                let mag = -b * math::ln(1.0 - 2.0 * u.abs());
                if u < 0.0 {
                    -mag
                } else {
                    mag
                }
            }
            NoiseKind::ScaledBernoulli => {
                if rng.gen::<bool>() {
                    self.sigma
                } else {
                    -self.sigma
                }
            }
        }
    }
}

/// Smoothness metadata `(s, p, q, B)`; `p` and `q` may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nominal {
    pub s: f64,
    pub p: f64,
    pub q: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TargetKind {
    Constant(f64),
    /// Piecewise constant along axis 0: `levels[i]` on `[edges[i-1], edges[i])`.
    Step { edges: Vec<f64>, levels: Vec<f64> },
    /// `amplitude·(frac(teeth·x) - ½)` along axis 0.
    Sawtooth { teeth: u32, amplitude: f64 },
    /// Random Haar expansion on scales `0..depth` whose Besov norm equals `B`.
    DyadicRandom { seed: u64, depth: u32 },
}

/// Regression function on `[0,1)^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetFunction {
    kind: TargetKind,
    d: u32,
    nominal: Nominal,
    tree: Option<CoefficientTree>,
}

/// Scales used to verify the declared Besov bound at construction.
const CHECK_DEPTH: u32 = 10;

impl TargetFunction {
    /// Builds the target. When `s > d/p` its analyzed Besov norm is checked
    /// against `B`; otherwise the sequence norm is undefined and no check runs.
    pub fn new(kind: TargetKind, d: u32, nominal: Nominal) -> Result<Self> {
        let basis = HaarBasis::new(d)?;
        if !(nominal.b >= 0.0) || !(nominal.s > 0.0) || !(nominal.p >= 1.0) || !(nominal.q >= 1.0) {
            return Err(Error::domain(MODULE, "nominal smoothness must have s > 0, p, q >= 1, B >= 0"));
        }
        let tree = match &kind {
            TargetKind::Step { edges, levels } => {
                if levels.len() != edges.len() + 1 {
                    return Err(Error::domain(MODULE, "a step target needs one more level than edges"));
                }
                if edges.windows(2).any(|w| !(w[0] < w[1])) || edges.iter().any(|e| !(0.0..=1.0).contains(e)) {
                    return Err(Error::domain(MODULE, "step edges must be increasing inside [0, 1]"));
                }
                None
            }
            TargetKind::DyadicRandom { seed, depth } => {
                if *depth == 0 {
                    return Err(Error::domain(MODULE, "dyadic random target needs depth >= 1"));
                }
                Some(random_tree(&basis, *seed, *depth, &nominal)?)
            }
            TargetKind::Constant(_) | TargetKind::Sawtooth { .. } => None,
        };
        let target = Self {
            kind,
            d,
            nominal,
            tree,
        };
        let dp = if nominal.p.is_infinite() { 0.0 } else { d as f64 / nominal.p };
        if nominal.s > dp {
            let depth = target.tree.as_ref().map_or(CHECK_DEPTH, |t| t.depth);
            let analyzed = wavelet::analyze(&basis, |x| target.eval(x), 0, depth as i64)?;
            let norm = besov_norm(&analyzed, nominal.s, nominal.p, nominal.q)?;
            if norm > nominal.b * (1.0 + 1e-9) + 1e-12 {
                return Err(Error::domain(
                    MODULE,
                    alloc::format!("target Besov norm {norm} exceeds declared B = {}", nominal.b),
                ));
            }
        }
        Ok(target)
    }

    pub fn kind(&self) -> &TargetKind {
        &self.kind
    }

    pub fn dim(&self) -> u32 {
        self.d
    }

    pub fn nominal(&self) -> Nominal {
        self.nominal
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.kind {
            TargetKind::Constant(c) => *c,
            TargetKind::Step { edges, levels } => {
                let i = edges.partition_point(|&e| e <= x[0]);
                levels[i]
            }
            TargetKind::Sawtooth { teeth, amplitude } => {
                let y = x[0] * *teeth as f64;
                amplitude * (y - math::floor(y) - 0.5)
            }
            TargetKind::DyadicRandom { .. } => {
                let tree = self.tree.as_ref().expect("built at construction");
                let basis = HaarBasis::new(self.d).expect("validated dimension");
                wavelet::synthesize(&basis, tree, x).unwrap_or(0.0)
            }
        }
    }
}

fn random_tree(basis: &HaarBasis, seed: u64, depth: u32, nominal: &Nominal) -> Result<CoefficientTree> {
    let d = basis.dim() as f64;
    let dp = if nominal.p.is_infinite() { 0.0 } else { d / nominal.p };
    let weight = nominal.s + d / 2.0 - dp;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tree = CoefficientTree::zeros(basis, 0, depth - 1)?;
    let half = nominal.b / 2.0;
    tree.alpha[0] = if rng.gen::<bool>() { half } else { -half };
    let share = if nominal.q.is_infinite() {
        half
    } else {
        half * math::powf(depth as f64, -1.0 / nominal.q)
    };
    for (j, level) in tree.beta.iter_mut().enumerate() {
        for c in level.iter_mut() {
            *c = rng.gen::<f64>() * 2.0 - 1.0;
        }
        let norm = lp(level, nominal.p);
        let target = share * math::powf(2.0, -(j as f64) * weight);
        if norm > 0.0 {
            for c in level.iter_mut() {
                *c *= target / norm;
            }
        }
    }
    Ok(tree)
}

fn lp(v: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        v.iter().fold(0.0, |m, x| m.max(x.abs()))
    } else {
        math::powf(v.iter().map(|x| math::powf(x.abs(), p)).sum(), 1.0 / p)
    }
}

/// One observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub x: [f64; 2],
    pub y: f64,
    d: u32,
}

impl Sample {
    pub fn point(&self) -> &[f64] {
        &self.x[..self.d as usize]
    }
}

/// Random generator for stream `stream` of master seed `seed`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `T` i.i.d. observations `Y = f(X) + ε`, `X` uniform on `[0,1)^d`.
pub fn generate_sample(f: &TargetFunction, noise: &NoiseModel, horizon: u64, seed: u64, stream: u64) -> Vec<Sample> {
    let mut rng = rng_for(seed, stream);
    let d = f.dim();
    (0..horizon)
        .map(|_| {
            let mut x = [0.0; 2];
            for v in x.iter_mut().take(d as usize) {
                *v = rng.gen::<f64>();
            }
            let y = f.eval(&x[..d as usize]) + noise.sample(&mut rng);
            Sample { x, y, d }
        })
        .collect()
}

/// Running mean of predictors in coefficient space.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AveragedPredictor {
    sum: CoefficientTree,
    count: u64,
}

impl AveragedPredictor {
    pub fn new(layout: &CoefficientTree) -> Self {
        let mut sum = layout.clone();
        for c in sum.iter_mut() {
            *c = 0.0;
        }
        Self { sum, count: 0 }
    }

    pub fn fold(&mut self, snapshot: &CoefficientTree) -> Result<()> {
        if !self.sum.same_layout(snapshot) {
            return Err(Error::domain(MODULE, "snapshot layout differs from the average"));
        }
        snapshot.validate()?;
        for (s, c) in self.sum.iter_mut().zip(snapshot.iter()) {
            *s += c;
        }
        self.count += 1;
        Ok(())
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> CoefficientTree {
        let mut out = self.sum.clone();
        if self.count > 0 {
            out.scale(1.0 / self.count as f64);
        }
        out
    }
}

fn for_each_midpoint(d: u32, resolution: u32, mut f: impl FnMut(usize, &[f64])) {
    let n = 1usize << resolution;
    let h = 1.0 / n as f64;
    if d == 1 {
        for i in 0..n {
            f(i, &[(i as f64 + 0.5) * h]);
        }
    } else {
        for i in 0..n {
            let x0 = (i as f64 + 0.5) * h;
            for j in 0..n {
                f(i * n + j, &[x0, (j as f64 + 0.5) * h]);
            }
        }
    }
}

/// Largest quadrature resolution accepted, per dimension.
const MAX_RESOLUTION_BITS: u32 = 26;

/// `‖predictor - f‖²` under the uniform design, by midpoint quadrature on
/// dyadic cells of scale `resolution`.
pub fn l2_risk(predictor: &CoefficientTree, f: &TargetFunction, resolution: u32) -> Result<f64> {
    predictor.validate()?;
    if predictor.d != f.dim() {
        return Err(Error::domain(MODULE, "predictor and target dimensions differ"));
    }
    let cell_level = predictor.max_level() + 1;
    if resolution < cell_level {
        return Err(Error::domain(MODULE, "resolution is coarser than the predictor"));
    }
    if resolution * predictor.d > MAX_RESOLUTION_BITS {
        return Err(Error::domain(MODULE, "quadrature resolution too fine"));
    }
    let values = predictor.cell_values()?;
    let shift = resolution - cell_level;
    let n = 1usize << resolution;
    let d = predictor.d;
    let mut acc = 0.0;
    for_each_midpoint(d, resolution, |i, x| {
        let cell = if d == 1 {
            i >> shift
        } else {
            let (r, c) = (i / n, i % n);
            ((r >> shift) << cell_level) | (c >> shift)
        };
        let diff = values[cell] - f.eval(x);
        acc += diff * diff;
    });
    Ok(acc / (1usize << (resolution * d)) as f64)
}

/// A target expressed on the canonical layout at a fixed quadrature resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetProjection {
    /// Inner products with the basis on scales `0..=max_level`.
    pub tree: CoefficientTree,
    /// Squared norm of the target at the quadrature resolution.
    pub norm_sq: f64,
    pub resolution: u32,
}

/// Projects `f` onto scales `0..=max_level` using the same quadrature points as
/// [`l2_risk`] at [`TargetProjection::resolution`], so that for any tree `c`
/// on this layout `l2_risk(c) = ‖c‖² - 2⟨c, tree⟩ + norm_sq` up to rounding.
pub fn target_projection(f: &TargetFunction, max_level: u32) -> Result<TargetProjection> {
    let d = f.dim();
    let basis = HaarBasis::new(d)?;
    let cell_level = max_level + 1;
    let guard = wavelet::guard_for(cell_level, d);
    let resolution = cell_level + guard;
    if resolution * d > MAX_RESOLUTION_BITS {
        return Err(Error::domain(MODULE, "projection resolution too fine"));
    }
    let cells = wavelet::cell_averages(&|x: &[f64]| f.eval(x), d, cell_level, guard);
    let tree = wavelet::tree_from_cells(&basis, &cells, 0, max_level)?;
    let mut acc = 0.0;
    for_each_midpoint(d, resolution, |_, x| {
        let v = f.eval(x);
        acc += v * v;
    });
    Ok(TargetProjection {
        tree,
        norm_sq: acc / (1usize << (resolution * d)) as f64,
        resolution,
    })
}

/// Monte-Carlo check of `E(f̂(X) - Y)² = ‖f̂ - f‖² + σ²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompositionCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
    /// Standard error of `lhs`.
    pub stderr: f64,
}

pub fn risk_decomposition_check(
    predictor: &CoefficientTree,
    f: &TargetFunction,
    noise: &NoiseModel,
    samples: u64,
    seed: u64,
) -> Result<DecompositionCheck> {
    if samples < 1 {
        return Err(Error::domain(MODULE, "need at least one Monte-Carlo sample"));
    }
    let basis = predictor.basis()?;
    let resolution = predictor.max_level() + 1 + wavelet::guard_for(predictor.max_level() + 1, predictor.d);
    let risk = l2_risk(predictor, f, resolution)?;
    let mut rng = rng_for(seed, 0);
    let d = f.dim() as usize;
    let (mut mean, mut m2) = (0.0, 0.0);
    let mut x = [0.0; 2];
    for n in 1..=samples {
        for v in x.iter_mut().take(d) {
            *v = rng.gen::<f64>();
        }
        let y = f.eval(&x[..d]) + noise.sample(&mut rng);
        let r = wavelet::synthesize(&basis, predictor, &x[..d])? - y;
        let v = r * r;
        // Welford update
        let delta = v - mean;
        mean += delta / n as f64;
        m2 += delta * (v - mean);
    }
    let var = if samples > 1 { m2 / (samples - 1) as f64 } else { 0.0 };
    let rhs = risk + noise.variance();
    Ok(DecompositionCheck {
        lhs: mean,
        rhs,
        gap: mean - rhs,
        stderr: math::sqrt(var / samples as f64),
    })
}

/// Fraction of `samples` draws with `|ε| ≥ u`, for each `u`.
pub fn empirical_tail(noise: &NoiseModel, thresholds: &[f64], samples: u64, seed: u64) -> Vec<f64> {
    let mut rng = rng_for(seed, 1);
    let mut counts = vec![0u64; thresholds.len()];
    for _ in 0..samples {
        let e = noise.sample(&mut rng).abs();
        for (c, &u) in counts.iter_mut().zip(thresholds) {
            *c += (e >= u) as u64;
        }
    }
    counts.iter().map(|&c| c as f64 / samples as f64).collect()
}
