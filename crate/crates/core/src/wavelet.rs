//! Periodized Haar multiresolution analysis on `[0,1)^d`, `d ∈ {1, 2}`.
//!
//! Indices are flat. At scale `j` a scaling index is `k` for `d = 1` and
//! `k0·2^j + k1` for `d = 2`. Detail functions for `d = 2` carry a type
//! `ε ∈ {1, 2, 3}`: bit 0 of `ε` selects the mother wavelet on axis 0 and bit 1
//! on axis 1. The flat detail index is `(ε-1)·4^j + k0·2^j + k1`, so level `j`
//! holds `(2^d - 1)·2^{jd}` details.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};
use crate::math;

const MODULE: &str = "wavelet";

/// Largest supported scale.
pub const MAX_LEVEL: u32 = 30;

/// Scaling function or detail wavelet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Scaling,
    Detail,
}

/// The periodized Haar basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HaarBasis {
    d: u32,
}

impl HaarBasis {
    pub fn new(d: u32) -> Result<Self> {
        if d == 0 || d > 2 {
            return Err(Error::Unsupported {
                module: MODULE,
                message: alloc::format!("dimension {d}; only d = 1 and d = 2 are available"),
            });
        }
        Ok(Self { d })
    }

    /// Selects a basis family by name. Only `"haar"` exists.
    pub fn from_family(family: &str, d: u32) -> Result<Self> {
        if family.eq_ignore_ascii_case("haar") {
            Self::new(d)
        } else {
            Err(Error::Unsupported {
                module: MODULE,
                message: alloc::format!(
                    "wavelet family `{family}`; only `haar` is implemented (its regularity S = 1 covers s < 1)"
                ),
            })
        }
    }

    pub fn dim(&self) -> u32 {
        self.d
    }

    /// Regularity order `S`.
    pub fn regularity(&self) -> u32 {
        1
    }

    /// `sup_x Σ_k |φ(x - k)|`.
    pub fn m_phi(&self) -> f64 {
        1.0
    }

    /// `sup_x Σ_k |ψ(x - k)|`.
    pub fn m_psi(&self) -> f64 {
        1.0
    }

    /// Support width in units of `2^-j`.
    pub fn support(&self) -> u32 {
        1
    }

    /// Detail types per translation, `2^d - 1`.
    pub fn detail_types(&self) -> usize {
        (1usize << self.d) - 1
    }

    /// Number of scaling functions at scale `j`.
    pub fn scaling_count(&self, j: u32) -> usize {
        1usize << (j * self.d)
    }

    /// Number of detail functions at scale `j`.
    pub fn detail_count(&self, j: u32) -> usize {
        self.detail_types() << (j * self.d)
    }

    pub(crate) fn check_point(&self, x: &[f64]) -> Result<()> {
        Error::check_len(MODULE, self.d as usize, x.len())?;
        if x.iter().any(|&v| !(0.0..1.0).contains(&v)) {
            return Err(Error::domain(MODULE, "point outside [0,1)^d"));
        }
        Ok(())
    }

    /// Cell of `x` at scale `j + 1` along each axis: `(k, half)` where `k` is
    /// the scale-`j` translation and `half` is 0 or 1.
    #[inline]
    fn cell(x: f64, j: u32) -> (usize, usize) {
        let m = math::floor(libm::ldexp(x, j as i32 + 1)) as usize;
        (m >> 1, m & 1)
    }

    /// Flat scaling index of the only scaling function at scale `j` that is
    /// nonzero at `x`, together with `(half_0, half_1)` used by the details.
    #[inline]
    pub(crate) fn locate(&self, x: &[f64], j: u32) -> (usize, [usize; 2]) {
        let (k0, h0) = Self::cell(x[0], j);
        if self.d == 1 {
            (k0, [h0, 0])
        } else {
            let (k1, h1) = Self::cell(x[1], j);
            ((k0 << j) | k1, [h0, h1])
        }
    }

    /// Scaling indices active at `x` on scale `j`. For Haar there is exactly one.
    pub fn active_indices(&self, x: &[f64], j: u32) -> Result<Vec<usize>> {
        self.check_point(x)?;
        check_level(j)?;
        Ok(vec![self.locate(x, j).0])
    }

    /// Splits a flat scaling index into per-axis translations.
    pub fn unflatten(&self, j: u32, k: usize) -> [usize; 2] {
        if self.d == 1 {
            [k, 0]
        } else {
            [k >> j, k & ((1usize << j) - 1)]
        }
    }

    /// Value of every active function at `x` on scale `j`: the scaling value
    /// and, for each detail type `ε`, the flat detail index and value.
    #[inline]
    pub(crate) fn active_values(&self, x: &[f64], j: u32, out: &mut [(usize, f64)]) -> f64 {
        let (k, halves) = self.locate(x, j);
        let amp = math::pow2_half((j * self.d) as i32);
        let per_type = 1usize << (j * self.d);
        for (slot, eps) in out.iter_mut().zip(1..=self.detail_types()) {
            let mut sign = 1.0;
            for (axis, &h) in halves.iter().enumerate().take(self.d as usize) {
                if (eps >> axis) & 1 == 1 && h == 1 {
                    sign = -sign;
                }
            }
            *slot = ((eps - 1) * per_type + k, sign * amp);
        }
        amp
    }

    /// `φ_{j,k}(x)` or `ψ_{j,k}(x)` for a flat index.
    pub fn evaluate(&self, kind: Kind, j: u32, index: usize, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        check_level(j)?;
        let count = match kind {
            Kind::Scaling => self.scaling_count(j),
            Kind::Detail => self.detail_count(j),
        };
        if index >= count {
            return Err(Error::domain(MODULE, "basis index out of range"));
        }
        let (k, halves) = self.locate(x, j);
        let amp = math::pow2_half((j * self.d) as i32);
        Ok(match kind {
            Kind::Scaling => {
                if k == index {
                    amp
                } else {
                    0.0
                }
            }
            Kind::Detail => {
                let per_type = 1usize << (j * self.d);
                let (eps, kk) = (index / per_type + 1, index % per_type);
                if kk != k {
                    return Ok(0.0);
                }
                let mut sign = 1.0;
                for (axis, &h) in halves.iter().enumerate().take(self.d as usize) {
                    if (eps >> axis) & 1 == 1 && h == 1 {
                        sign = -sign;
                    }
                }
                sign * amp
            }
        })
    }

    /// Numerical check of the regularity conditions.
    pub fn check_regularity(&self, tolerance: f64) -> RegularityReport {
        const GRID_BITS: i32 = 16;
        let n = 1usize << GRID_BITS;
        let h = 1.0 / n as f64;
        let phi = |t: f64| if (0.0..1.0).contains(&t) { 1.0 } else { 0.0 };
        let psi = |t: f64| {
            if (0.0..0.5).contains(&t) {
                1.0
            } else if (0.5..1.0).contains(&t) {
                -1.0
            } else {
                0.0
            }
        };
        let mids = || (0..n).map(move |i| (i as f64 + 0.5) * h);

        let int_phi: f64 = mids().map(|t| phi(t) * h).sum();
        let int_psi: f64 = mids().map(|t| psi(t) * h).sum();
        // sup over one period of Σ_k |φ(x - k)|, with the grid endpoints included
        let shifts = [-1.0, 0.0, 1.0];
        let grid = || (0..=n).map(move |i| i as f64 * h);
        let sum_abs = |f: &dyn Fn(f64) -> f64| {
            grid()
                .map(|t| shifts.iter().map(|k| f(t - k).abs()).sum::<f64>())
                .fold(0.0, f64::max)
        };
        let m_phi = sum_abs(&phi);
        let m_psi = sum_abs(&psi);
        // reproducing kernel K(x,y) = Σ_k φ(x-k)φ(y-k): ∫K(x,y)dy = 1 and K = 0 for |x-y| ≥ 1
        let kernel = |x: f64, y: f64| shifts.iter().map(|k| phi(x - k) * phi(y - k)).sum::<f64>();
        let probes = [0.0, 0.125, 0.3, 0.5, 0.999];
        let kernel_integral = probes
            .iter()
            .map(|&x| {
                let total: f64 = (0..2 * n)
                    .map(|i| kernel(x, -0.5 + (i as f64 + 0.5) * h))
                    .sum::<f64>()
                    * h;
                (total - 1.0).abs()
            })
            .fold(0.0, f64::max);
        let kernel_tail = probes
            .iter()
            .map(|&x| {
                [1.0, 1.5, 2.0, -1.0, -1.25]
                    .iter()
                    .map(|dx| kernel(x, x + dx).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);

        let checks = vec![
            RegularityCheck::new("vanishing moment: integral of psi", int_psi.abs(), tolerance),
            RegularityCheck::new("normalization: integral of phi = 1", (int_phi - 1.0).abs(), tolerance),
            RegularityCheck::new("bounded sums: M_phi matches declared", (m_phi - self.m_phi()).abs(), tolerance),
            RegularityCheck::new("bounded sums: M_psi matches declared", (m_psi - self.m_psi()).abs(), tolerance),
            RegularityCheck::new("kernel reproduces constants", kernel_integral, tolerance),
            RegularityCheck::new("kernel vanishes beyond the support", kernel_tail, tolerance),
        ];
        RegularityReport { checks }
    }
}

#[inline]
fn check_level(j: u32) -> Result<()> {
    if j > MAX_LEVEL {
        return Err(Error::domain(MODULE, "scale exceeds the supported maximum"));
    }
    Ok(())
}

/// Outcome of one regularity condition.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularityCheck {
    pub name: String,
    pub residual: f64,
    pub passed: bool,
}

impl RegularityCheck {
    fn new(name: &str, residual: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            residual,
            passed: residual <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularityReport {
    pub checks: Vec<RegularityCheck>,
}

impl RegularityReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Truncated expansion with scaling coefficients at `j0` and details on
/// scales `j0..=j0+J`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CoefficientTree {
    pub j0: u32,
    #[cfg_attr(feature = "serde", serde(rename = "J"))]
    pub depth: u32,
    #[cfg_attr(feature = "serde", serde(default = "default_dim"))]
    pub d: u32,
    pub alpha: Vec<f64>,
    /// `beta[l]` holds the details of scale `j0 + l`.
    pub beta: Vec<Vec<f64>>,
}

#[cfg(feature = "serde")]
fn default_dim() -> u32 {
    1
}

impl CoefficientTree {
    pub fn zeros(basis: &HaarBasis, j0: u32, depth: u32) -> Result<Self> {
        check_level(j0 + depth + 1)?;
        Ok(Self {
            j0,
            depth,
            d: basis.d,
            alpha: vec![0.0; basis.scaling_count(j0)],
            beta: (j0..=j0 + depth).map(|j| vec![0.0; basis.detail_count(j)]).collect(),
        })
    }

    /// Finest scale carrying details.
    pub fn max_level(&self) -> u32 {
        self.j0 + self.depth
    }

    pub fn basis(&self) -> Result<HaarBasis> {
        HaarBasis::new(self.d)
    }

    /// Checks the layout against the declared scales.
    pub fn validate(&self) -> Result<()> {
        let basis = self.basis()?;
        Error::check_len(MODULE, basis.scaling_count(self.j0), self.alpha.len())?;
        Error::check_len(MODULE, self.depth as usize + 1, self.beta.len())?;
        for (l, level) in self.beta.iter().enumerate() {
            Error::check_len(MODULE, basis.detail_count(self.j0 + l as u32), level.len())?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.alpha.len() + self.beta.iter().map(Vec::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All coefficients, scaling first then details scale by scale.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.alpha.iter().chain(self.beta.iter().flatten())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.alpha.iter_mut().chain(self.beta.iter_mut().flatten())
    }

    pub fn sum_sq(&self) -> f64 {
        self.iter().map(|c| c * c).sum()
    }

    pub fn scale(&mut self, factor: f64) {
        for c in self.iter_mut() {
            *c *= factor;
        }
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.j0 == other.j0 && self.depth == other.depth && self.d == other.d
    }

    /// Values on the `2^{(j0+J+1)d}` cells of the finest scale, row-major.
    pub fn cell_values(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let d = self.d;
        let mut level = self.j0;
        // scaling coefficients, refined one scale at a time
        let mut a = self.alpha.clone();
        for beta in &self.beta {
            a = refine(&a, beta, level, d);
            level += 1;
        }
        let amp = math::pow2_half((level * d) as i32);
        for v in a.iter_mut() {
            *v *= amp;
        }
        Ok(a)
    }
}

/// One inverse Haar step from scale `j` to `j + 1`.
fn refine(alpha: &[f64], beta: &[f64], j: u32, d: u32) -> Vec<f64> {
    let n = 1usize << j;
    if d == 1 {
        let mut out = vec![0.0; 2 * n];
        for k in 0..n {
            out[2 * k] = (alpha[k] + beta[k]) * FRAC_1_SQRT_2;
            out[2 * k + 1] = (alpha[k] - beta[k]) * FRAC_1_SQRT_2;
        }
        out
    } else {
        let per = n * n;
        let m = 2 * n;
        let mut out = vec![0.0; m * m];
        for k0 in 0..n {
            for k1 in 0..n {
                let k = k0 * n + k1;
                let (a, b1, b2, b3) = (alpha[k], beta[k], beta[per + k], beta[2 * per + k]);
                for h0 in 0..2 {
                    for h1 in 0..2 {
                        let s0 = if h0 == 0 { 1.0 } else { -1.0 };
                        let s1 = if h1 == 0 { 1.0 } else { -1.0 };
                        out[(2 * k0 + h0) * m + 2 * k1 + h1] = 0.5 * (a + s0 * b1 + s1 * b2 + s0 * s1 * b3);
                    }
                }
            }
        }
        out
    }
}

/// One forward Haar step from scale `j + 1` to `j`; returns `(alpha_j, beta_j)`.
pub(crate) fn coarsen(fine: &[f64], j: u32, d: u32) -> (Vec<f64>, Vec<f64>) {
    let n = 1usize << j;
    if d == 1 {
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        for k in 0..n {
            a[k] = (fine[2 * k] + fine[2 * k + 1]) * FRAC_1_SQRT_2;
            b[k] = (fine[2 * k] - fine[2 * k + 1]) * FRAC_1_SQRT_2;
        }
        (a, b)
    } else {
        let per = n * n;
        let m = 2 * n;
        let mut a = vec![0.0; per];
        let mut b = vec![0.0; 3 * per];
        for k0 in 0..n {
            for k1 in 0..n {
                let k = k0 * n + k1;
                let v00 = fine[2 * k0 * m + 2 * k1];
                let v01 = fine[2 * k0 * m + 2 * k1 + 1];
                let v10 = fine[(2 * k0 + 1) * m + 2 * k1];
                let v11 = fine[(2 * k0 + 1) * m + 2 * k1 + 1];
                a[k] = 0.5 * (v00 + v01 + v10 + v11);
                b[k] = 0.5 * (v00 + v01 - v10 - v11);
                b[per + k] = 0.5 * (v00 - v01 + v10 - v11);
                b[2 * per + k] = 0.5 * (v00 - v01 - v10 + v11);
            }
        }
        (a, b)
    }
}

/// Guard levels used by [`analyze`] beyond the finest scale.
pub const GUARD_LEVELS: u32 = 4;

/// Cap on the number of samples taken by [`analyze`].
const MAX_SAMPLE_BITS: u32 = 24;

/// Number of guard levels [`analyze`] uses for a tree whose finest cells are
/// at scale `cell_level`.
pub fn guard_for(cell_level: u32, d: u32) -> u32 {
    GUARD_LEVELS.min((MAX_SAMPLE_BITS / d).saturating_sub(cell_level))
}

/// Cell averages of `f` on scale `level`, each from `2^{guard·d}` midpoint samples.
pub fn cell_averages<F: Fn(&[f64]) -> f64>(f: &F, d: u32, level: u32, guard: u32) -> Vec<f64> {
    let fine = level + guard;
    let n = 1usize << fine;
    let h = 1.0 / n as f64;
    let sub = 1usize << guard;
    let cells = 1usize << level;
    let norm = 1.0 / (1usize << (guard * d)) as f64;
    if d == 1 {
        (0..cells)
            .map(|c| (0..sub).map(|i| f(&[((c * sub + i) as f64 + 0.5) * h])).sum::<f64>() * norm)
            .collect()
    } else {
        let mut out = vec![0.0; cells * cells];
        for c0 in 0..cells {
            for c1 in 0..cells {
                let mut acc = 0.0;
                for i0 in 0..sub {
                    let x0 = ((c0 * sub + i0) as f64 + 0.5) * h;
                    for i1 in 0..sub {
                        acc += f(&[x0, ((c1 * sub + i1) as f64 + 0.5) * h]);
                    }
                }
                out[c0 * cells + c1] = acc * norm;
            }
        }
        out
    }
}

/// Builds a tree from values on the finest cells (scale `j0 + J + 1`), row-major.
pub fn tree_from_cells(basis: &HaarBasis, cells: &[f64], j0: u32, depth: u32) -> Result<CoefficientTree> {
    let d = basis.d;
    let level = j0 + depth + 1;
    check_level(level)?;
    Error::check_len(MODULE, basis.scaling_count(level), cells.len())?;
    let amp = math::pow2_half(-((level * d) as i32));
    let mut a: Vec<f64> = cells.iter().map(|v| v * amp).collect();
    let mut beta = Vec::with_capacity(depth as usize + 1);
    for j in (j0..level).rev() {
        let (coarse, detail) = coarsen(&a, j, d);
        beta.push(detail);
        a = coarse;
    }
    beta.reverse();
    Ok(CoefficientTree {
        j0,
        depth,
        d,
        alpha: a,
        beta,
    })
}

/// Inner products of `f` with the basis on scales `j0..=j0+J`, from midpoint
/// samples with [`guard_for`] guard levels beyond the finest cells. Exact for
/// functions that are piecewise constant on dyadic cells of scale `j0 + J + 1`.
pub fn analyze<F: Fn(&[f64]) -> f64>(basis: &HaarBasis, f: F, j0: u32, depth: i64) -> Result<CoefficientTree> {
    if depth < 0 {
        return Err(Error::domain(MODULE, "truncation depth J must be >= 0"));
    }
    let depth = depth as u32;
    let level = j0 + depth + 1;
    check_level(level)?;
    let cells = cell_averages(&f, basis.d, level, guard_for(level, basis.d));
    tree_from_cells(basis, &cells, j0, depth)
}

/// Evaluates the truncated expansion at `x` using only the active functions.
pub fn synthesize(basis: &HaarBasis, tree: &CoefficientTree, x: &[f64]) -> Result<f64> {
    basis.check_point(x)?;
    if tree.d != basis.d {
        return Err(Error::domain(MODULE, "tree and basis dimensions differ"));
    }
    let (k, _) = basis.locate(x, tree.j0);
    let mut value = tree.alpha[k] * math::pow2_half((tree.j0 * basis.d) as i32);
    let mut buf = [(0usize, 0.0f64); 3];
    let types = basis.detail_types();
    for (l, level) in tree.beta.iter().enumerate() {
        basis.active_values(x, tree.j0 + l as u32, &mut buf[..types]);
        for &(idx, v) in &buf[..types] {
            value += level[idx] * v;
        }
    }
    Ok(value)
}

fn lp_norm(v: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        v.iter().fold(0.0, |m, x| m.max(x.abs()))
    } else if p == 1.0 {
        v.iter().map(|x| x.abs()).sum()
    } else if p == 2.0 {
        math::sqrt(v.iter().map(|x| x * x).sum())
    } else {
        math::powf(v.iter().map(|x| math::powf(x.abs(), p)).sum(), 1.0 / p)
    }
}

/// Besov sequence norm `‖α‖_p + (Σ_j 2^{jq(s + d/2 - d/p)} ‖β_j‖_p^q)^{1/q}`.
/// `p` or `q` may be `f64::INFINITY`.
pub fn besov_norm(tree: &CoefficientTree, s: f64, p: f64, q: f64) -> Result<f64> {
    if !(p >= 1.0) || !(q >= 1.0) {
        return Err(Error::domain(MODULE, "Besov indices p, q must lie in [1, inf]"));
    }
    let d = tree.d as f64;
    let dp = if p.is_infinite() { 0.0 } else { d / p };
    if !(s > dp) {
        return Err(Error::domain(MODULE, "Besov norm requires s > d/p"));
    }
    let exponent = s + d / 2.0 - dp;
    let weighted = tree
        .beta
        .iter()
        .enumerate()
        .map(|(l, b)| math::powf(2.0, (tree.j0 as f64 + l as f64) * exponent) * lp_norm(b, p));
    let detail = if q.is_infinite() {
        weighted.fold(0.0, f64::max)
    } else {
        math::powf(weighted.map(|w| math::powf(w, q)).sum(), 1.0 / q)
    };
    Ok(lp_norm(&tree.alpha, p) + detail)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn haar1() -> HaarBasis {
        HaarBasis::new(1).unwrap()
    }

    #[test]
    fn active_index_examples() {
        assert_eq!(haar1().active_indices(&[0.3], 2).unwrap(), [1]);
        assert_eq!(haar1().active_indices(&[0.0], 0).unwrap(), [0]);
        let b2 = HaarBasis::new(2).unwrap();
        let k = b2.active_indices(&[0.6, 0.1], 1).unwrap();
        assert_eq!(b2.unflatten(1, k[0]), [1, 0]);
        assert!(haar1().active_indices(&[1.0], 0).is_err());
    }

    #[test]
    fn evaluate_examples() {
        let b = haar1();
        assert_eq!(b.evaluate(Kind::Scaling, 0, 0, &[0.7]).unwrap(), 1.0);
        assert_eq!(b.evaluate(Kind::Detail, 0, 0, &[0.25]).unwrap(), 1.0);
        assert_eq!(b.evaluate(Kind::Detail, 0, 0, &[0.75]).unwrap(), -1.0);
        assert_eq!(b.evaluate(Kind::Scaling, 2, 1, &[0.3]).unwrap(), 2.0);
        assert!(b.evaluate(Kind::Scaling, 1, 2, &[0.3]).is_err());
    }

    #[test]
    fn other_families_are_rejected() {
        assert!(matches!(HaarBasis::from_family("db4", 1), Err(Error::Unsupported { .. })));
        assert!(HaarBasis::new(3).is_err());
    }

    #[test]
    fn analyze_examples() {
        let b = haar1();
        let t = analyze(&b, |_| 1.0, 0, 2).unwrap();
        assert!((t.alpha[0] - 1.0).abs() < 1e-15);
        assert!(t.beta.iter().flatten().all(|&v| v.abs() < 1e-15));

        let t = analyze(&b, |x| if x[0] < 0.5 { 1.0 } else { -1.0 }, 0, 1).unwrap();
        assert!(t.alpha[0].abs() < 1e-15);
        assert!((t.beta[0][0] - 1.0).abs() < 1e-15);
        assert!(t.beta[1].iter().all(|v| v.abs() < 1e-15));

        let t = analyze(&b, |x| if x[0] < 0.5 { 1.0 } else { 0.0 }, 0, 0).unwrap();
        assert!((t.alpha[0] - 0.5).abs() < 1e-15);
        assert!((t.beta[0][0] - 0.5).abs() < 1e-15);
        assert!(analyze(&b, |_| 0.0, 0, -1).is_err());
    }

    #[test]
    fn synthesize_examples() {
        let b = haar1();
        let zero = CoefficientTree::zeros(&b, 1, 2).unwrap();
        assert_eq!(synthesize(&b, &zero, &[0.4]).unwrap(), 0.0);
        let one = analyze(&b, |_| 1.0, 1, 2).unwrap();
        for x in [0.0, 0.1, 0.5, 0.99] {
            assert!((synthesize(&b, &one, &[x]).unwrap() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn two_dimensional_round_trip() {
        let b = HaarBasis::new(2).unwrap();
        let f = |x: &[f64]| {
            let i = (x[0] * 4.0) as usize;
            let j = (x[1] * 4.0) as usize;
            ((i * 7 + j * 3) % 5) as f64 - 2.0
        };
        let t = analyze(&b, f, 0, 1).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                let x = [(i as f64 + 0.5) / 16.0, (j as f64 + 0.5) / 16.0];
                assert!((synthesize(&b, &t, &x).unwrap() - f(&x)).abs() < 1e-13);
            }
        }
        let cells = t.cell_values().unwrap();
        let back = tree_from_cells(&b, &cells, 0, 1).unwrap();
        for (u, v) in back.iter().zip(t.iter()) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn detail_functions_are_orthonormal_2d() {
        let b = HaarBasis::new(2).unwrap();
        let n = 16;
        let count = b.detail_count(1);
        for a in 0..count {
            for c in 0..count {
                let mut ip = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        let x = [(i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64];
                        ip += b.evaluate(Kind::Detail, 1, a, &x).unwrap()
                            * b.evaluate(Kind::Detail, 1, c, &x).unwrap();
                    }
                }
                ip /= (n * n) as f64;
                let expect = if a == c { 1.0 } else { 0.0 };
                assert!((ip - expect).abs() < 1e-12, "{a} {c} {ip}");
            }
        }
    }

    #[test]
    fn besov_examples() {
        let b = haar1();
        let mut t = CoefficientTree::zeros(&b, 0, 1).unwrap();
        assert_eq!(besov_norm(&t, 1.0, 2.0, 2.0).unwrap(), 0.0);
        t.alpha[0] = 1.0;
        t.beta[0][0] = 0.5;
        let n = besov_norm(&t, 0.75, 2.0, 2.0).unwrap();
        assert!((n - 1.5).abs() < 1e-15, "{n}");
        let mut t3 = t.clone();
        t3.scale(3.0);
        assert!((besov_norm(&t3, 0.75, 2.0, 2.0).unwrap() - 3.0 * n).abs() < 1e-14);
        assert!(besov_norm(&t, 0.5, 2.0, 2.0).is_err());
        assert!(besov_norm(&t, 1.0, f64::INFINITY, f64::INFINITY).is_ok());
    }

    #[test]
    fn regularity_passes() {
        for d in [1, 2] {
            let report = HaarBasis::new(d).unwrap().check_regularity(1e-12);
            assert!(report.passed(), "{report:?}");
        }
    }
}
