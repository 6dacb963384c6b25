//! The operator for a set of small width: `K` inside the level set
//! `{|B| < r/(6M)}` of one Blaschke product.  Per-component Cauchy solves in
//! Möbius charts give a local solution `E_K f`; its Laurent splitting in
//! `w = B(z)` removes the part that is not defined globally.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{JonesBasis, TwoVariableBasis};
use crate::blaschke::{BlaschkeProduct, LevelComponents};
use crate::cauchy::{euclidean_norm, par_map, CauchyConfig, CauchySolver, Density, Exterior, GridField, Lookup, PolarGrid};
use crate::error::{Error, Result};
use crate::geometry::{shift, unshift};
use crate::region::{DiskUnion, Region};
use crate::sequence::FiniteSequence;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Numerical parameters shared by every stage of the construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub grid_nr: usize,
    pub grid_ntheta: usize,
    /// Trapezoid nodes on each Laurent contour.
    pub contour_q: usize,
    /// Largest `|n|` kept in a Laurent expansion.
    pub nmax: usize,
    /// Coefficients are kept while their contour-scaled size exceeds
    /// `tol` times the size of the expanded function.
    pub tol: f64,
    /// Allowed relative disagreement of the two branches where both apply.
    pub branch_tol: f64,
    pub lookup: Lookup,
    pub threads: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            grid_nr: 64,
            grid_ntheta: 64,
            contour_q: 384,
            nmax: 96,
            tol: 1e-12,
            branch_tol: 1e-8,
            lookup: Lookup::Bilinear,
            threads: 1,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_nr == 0 || self.grid_ntheta == 0 {
            return Err(Error::invalid("grid sizes must be positive"));
        }
        if self.contour_q < 4 * self.nmax.max(1) {
            return Err(Error::invalid(format!(
                "contour_q = {} must be at least 4 nmax = {}",
                self.contour_q,
                4 * self.nmax
            )));
        }
        if !(self.tol > 0.0) || !(self.branch_tol > 0.0) {
            return Err(Error::invalid("tolerances must be positive"));
        }
        Ok(())
    }
}

/// `f(g(w)) (1 + conj(c) w) / ((1 + c conj(w)) (1 - |w|^2))` with
/// `g(w) = (w + c) / (1 + conj(c) w)`, on the chart disk of radius `radius`,
/// masked to `support`.  Returns the field and the sampled sup of `|f|`.
pub fn pullback_density(
    f: &dyn Density,
    center: Complex64,
    radius: f64,
    support: &Region,
    n_r: usize,
    n_theta: usize,
) -> Result<(GridField, f64)> {
    let grid = PolarGrid::new(n_r, n_theta, radius)?;
    let dim = f.dim();
    let mut values = vec![ZERO; grid.len() * dim];
    let mut mask = vec![false; grid.len()];
    let mut sup = 0.0f64;
    for i in 0..n_r {
        for j in 0..n_theta {
            let w = grid.node(i, j);
            let z = shift(center, w);
            if !support.contains(z) {
                continue;
            }
            let v = f.eval(z);
            if v.len() != dim {
                return Err(Error::invalid("density returned the wrong number of components"));
            }
            sup = sup.max(euclidean_norm(&v));
            let weight = (1.0 + center.conj() * w) / ((1.0 + center * w.conj()) * (1.0 - w.norm_sqr()));
            let k = i * n_theta + j;
            mask[k] = true;
            for (c, x) in v.iter().enumerate() {
                values[k * dim + c] = x * weight;
            }
        }
    }
    Ok((GridField::from_parts(grid, dim, values, mask)?, sup))
}

/// Points `b_k(xi_q)` and inverse interpolation matrices on one contour.
#[derive(Debug, Clone)]
struct Contour {
    radius: f64,
    /// `[q][k]`: `b_k(xi_q)` in the chart of zero `k`.
    chart_points: Vec<Vec<Complex64>>,
    inverses: Vec<Vec<Vec<Complex64>>>,
}

impl Contour {
    fn new(basis: &TwoVariableBasis, zeros: &[Complex64], radius: f64, q: usize, threads: usize) -> Result<Self> {
        let nodes: Vec<usize> = (0..q).collect();
        let data = par_map(&nodes, threads, |&i| -> Result<(Vec<Complex64>, Vec<Vec<Complex64>>)> {
            let xi = Complex64::from_polar(radius, i as f64 * TAU / q as f64);
            let pts = basis.nodes(xi)?;
            let chart = pts.iter().zip(zeros).map(|(&b, &z)| unshift(z, b)).collect();
            Ok((chart, basis.inverse_matrix(xi)?))
        });
        let mut chart_points = Vec::with_capacity(q);
        let mut inverses = Vec::with_capacity(q);
        for d in data {
            let (c, inv) = d?;
            chart_points.push(c);
            inverses.push(inv);
        }
        Ok(Contour { radius, chart_points, inverses })
    }
}

/// Laurent coefficients in `w`, stored scaled by the contour radius:
/// `beta[n][k] = alpha_{k,n} rho^n`, so that `a_n(z) w^n = sum_k g_k(z) beta[n][k] (w/rho)^n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaurentCoefficients {
    pub radius: f64,
    pub n_lo: i64,
    pub n_hi: i64,
    pub n_basis: usize,
    pub dim: usize,
    beta: Vec<Complex64>,
}

impl LaurentCoefficients {
    fn empty(radius: f64, n_basis: usize, dim: usize) -> Self {
        LaurentCoefficients { radius, n_lo: 0, n_hi: -1, n_basis, dim, beta: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.n_hi < self.n_lo
    }

    pub fn indices(&self) -> std::ops::RangeInclusive<i64> {
        self.n_lo..=self.n_hi
    }

    /// `beta[n][k]`, `dim` entries.
    pub fn coefficient(&self, n: i64, k: usize) -> &[Complex64] {
        let base = ((n - self.n_lo) as usize * self.n_basis + k) * self.dim;
        &self.beta[base..base + self.dim]
    }

    /// `sum_{n in range} a_n(z) w^n` given `g = (g_k(z))`.
    fn sum(&self, g: &[Complex64], w: Complex64, nonnegative: bool) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.dim];
        if self.is_empty() {
            return out;
        }
        let t = w / self.radius;
        let (lo, hi) = if nonnegative {
            (self.n_lo.max(0), self.n_hi)
        } else {
            (self.n_lo, self.n_hi.min(-1))
        };
        if hi < lo {
            return out;
        }
        // Horner from the index farthest from zero, then one power for the nearest.
        let (step, order, nearest): (Complex64, Vec<i64>, i64) = if nonnegative {
            (t, (lo..=hi).rev().collect(), lo)
        } else {
            (1.0 / t, (lo..=hi).collect(), hi)
        };
        for n in order {
            for o in out.iter_mut() {
                *o *= step;
            }
            for (k, gk) in g.iter().enumerate() {
                for (o, b) in out.iter_mut().zip(self.coefficient(n, k)) {
                    *o += gk * b;
                }
            }
        }
        let p = t.powi(nearest as i32);
        for o in out.iter_mut() {
            *o *= p;
        }
        out
    }
}

fn chart_radius_max(r: &[f64]) -> f64 {
    r.iter().copied().fold(0.0, f64::max)
}

/// Parameters of one small-width operator as written to a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallWidthSummary {
    pub zeros: Vec<[f64; 2]>,
    pub delta: f64,
    pub m: f64,
    pub lambda: f64,
    pub r: f64,
    pub c_eps: f64,
    pub chart_radii: Vec<f64>,
    pub contour_radius: f64,
    pub h_radius: f64,
}

/// The data of one small-width operator that does not depend on `f`.
#[derive(Debug, Clone)]
pub struct SmallWidthOperator {
    basis: TwoVariableBasis,
    zeros: Vec<Complex64>,
    m: f64,
    c_eps: f64,
    support: Region,
    config: PipelineConfig,
    chart_radius: Vec<f64>,
    /// Nonnegative indices are taken on `|xi| = r/(4M)`.
    contour: Contour,
    /// Negative indices on `|xi| = h_radius`, where that series is used.
    h_contour: Contour,
}

impl SmallWidthOperator {
    /// `support` is intersected with `union D(z_n, r/(6M))`, which lies in
    /// `{|B| < r/(6M)}`.
    pub fn new(zeros: FiniteSequence, lambda: f64, support: &Region, config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let jones = JonesBasis::new(zeros.clone())?;
        let level = LevelComponents::new(BlaschkeProduct::new(zeros.clone()), lambda)?;
        let basis = TwoVariableBasis::new(jones, level)?;
        let m = basis.jones().m();
        let r = basis.level().r();
        let c_eps = r / (6.0 * m);
        let z = zeros.values();
        let support = support.restricted_to(DiskUnion::of_points(&z, c_eps));
        let chart_radius: Vec<f64> = z.iter().map(|&zn| support.enclosing_radius(zn, c_eps)).collect();
        let contour = Contour::new(&basis, &z, r / (4.0 * m), config.contour_q, config.threads)?;
        let c_support = chart_radius_max(&chart_radius);
        let h_radius = if c_support > 0.0 { (1.5 * c_support).min(contour.radius) } else { contour.radius };
        let h_contour = Contour::new(&basis, &z, h_radius, config.contour_q, config.threads)?;
        Ok(SmallWidthOperator { basis, zeros: z, m, c_eps, support, config, chart_radius, contour, h_contour })
    }

    pub fn zeros(&self) -> &[Complex64] {
        &self.zeros
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn r(&self) -> f64 {
        self.basis.level().r()
    }

    pub fn lambda(&self) -> f64 {
        self.basis.level().lambda()
    }

    /// `r / (6M)`, the largest chart radius allowed for the support.
    pub fn c_eps(&self) -> f64 {
        self.c_eps
    }

    /// `c(eps)`: the support lies in `union D(z_n, c(eps))`, `c(eps) <= r/(6M)`.
    pub fn c_support(&self) -> f64 {
        chart_radius_max(&self.chart_radius)
    }

    pub fn support(&self) -> &Region {
        &self.support
    }

    pub fn product(&self) -> &BlaschkeProduct {
        self.basis.level().product()
    }

    pub fn basis(&self) -> &TwoVariableBasis {
        &self.basis
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    /// Smallest `|w|` at which the negative-index series is evaluated:
    /// `1.5 c(eps)`, at most the splitting radius `r/(4M)`.
    pub fn h_radius(&self) -> f64 {
        self.h_contour.radius
    }

    /// `2c / (1 - c^2)`.
    pub fn ek_bound(&self) -> f64 {
        let c = self.c_support();
        2.0 * c / (1.0 - c * c)
    }

    /// `12 c M / (1 - c^2)`.
    pub fn norm_bound(&self) -> f64 {
        6.0 * self.m * self.ek_bound()
    }

    pub fn summary(&self) -> SmallWidthSummary {
        SmallWidthSummary {
            zeros: self.zeros.iter().map(|z| [z.re, z.im]).collect(),
            delta: self.basis.level().delta(),
            m: self.m,
            lambda: self.lambda(),
            r: self.r(),
            c_eps: self.c_eps,
            chart_radii: self.chart_radius.clone(),
            contour_radius: self.contour.radius,
            h_radius: self.h_contour.radius,
        }
    }

    /// Prepare the evaluation of the operator on `f`.
    pub fn apply<'a>(&'a self, f: &dyn Density) -> Result<SmallWidthSolution<'a>> {
        let dim = f.dim();
        let cfg = CauchyConfig { lookup: self.config.lookup, exterior: Exterior::Holomorphic, n_phi: None, n_chord: None };
        let mut solvers = Vec::with_capacity(self.zeros.len());
        let mut f_norm = 0.0f64;
        for (n, &zn) in self.zeros.iter().enumerate() {
            let s = self.chart_radius[n];
            if s <= 0.0 {
                solvers.push(None);
                continue;
            }
            let (field, sup) = pullback_density(f, zn, s, &self.support, self.config.grid_nr, self.config.grid_ntheta)
                .map_err(|e| e.context(&format!("component {n}")))?;
            f_norm = f_norm.max(sup);
            solvers.push(Some(CauchySolver::new(field, cfg)));
        }
        let mut sol = SmallWidthSolution {
            op: self,
            solvers,
            dim,
            f_norm,
            coeffs: LaurentCoefficients::empty(self.contour.radius, self.zeros.len(), dim),
            h_coeffs: LaurentCoefficients::empty(self.h_contour.radius, self.zeros.len(), dim),
        };
        let n = self.config.nmax as i64;
        sol.coeffs = sol.laurent(&self.contour, 0, n).map_err(|e| e.context("Laurent splitting"))?;
        sol.h_coeffs = sol.laurent(&self.h_contour, -n, -1).map_err(|e| e.context("Laurent splitting"))?;
        Ok(sol)
    }
}

/// `L_K f` for one small-width operator and one density.
#[derive(Debug, Clone)]
pub struct SmallWidthSolution<'a> {
    op: &'a SmallWidthOperator,
    solvers: Vec<Option<CauchySolver>>,
    dim: usize,
    f_norm: f64,
    coeffs: LaurentCoefficients,
    h_coeffs: LaurentCoefficients,
}

/// Which formula produced a value of `L_K f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    /// `E_K f - T_2 f` on `{|B| < r/(4M)}`.
    Inner,
    /// `T_1 f` on `{|B| >= r/(4M)}`.
    Outer,
}

impl<'a> SmallWidthSolution<'a> {
    pub fn operator(&self) -> &'a SmallWidthOperator {
        self.op
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Sampled sup of `|f|` over the support.
    pub fn f_norm(&self) -> f64 {
        self.f_norm
    }

    /// Coefficients of the nonnegative powers, scaled to `r/(4M)`.
    pub fn coefficients(&self) -> &LaurentCoefficients {
        &self.coeffs
    }

    /// Coefficients of the negative powers, scaled to the series radius.
    pub fn h_coefficients(&self) -> &LaurentCoefficients {
        &self.h_coeffs
    }

    fn ek_chart(&self, n: usize, w: Complex64) -> Vec<Complex64> {
        match &self.solvers[n] {
            Some(s) => s.eval(w),
            None => vec![ZERO; self.dim],
        }
    }

    /// `E_K f(z)` on `{|B| < r}`.
    pub fn ek(&self, z: Complex64) -> Result<Vec<Complex64>> {
        let n = self.op.basis.level().component_of(z).ok_or_else(|| {
            Error::invalid(format!("{z} lies in no level component; use the glued operator"))
        })?;
        Ok(self.ek_chart(n, unshift(self.op.zeros[n], z)))
    }

    fn laurent(&self, contour: &Contour, n_lo: i64, n_hi: i64) -> Result<LaurentCoefficients> {
        let nk = self.op.zeros.len();
        let dim = self.dim;
        let q = contour.chart_points.len();
        let idx: Vec<usize> = (0..q).collect();
        let u: Vec<Vec<Vec<Complex64>>> = par_map(&idx, self.op.config.threads, |&i| {
            (0..nk).map(|k| self.ek_chart(k, contour.chart_points[i][k])).collect()
        });
        let scale = self.op.m
            * u.iter()
                .flat_map(|row| row.iter().map(|v| euclidean_norm(v)))
                .fold(0.0, f64::max);
        if scale == 0.0 {
            return Ok(LaurentCoefficients::empty(contour.radius, nk, dim));
        }
        // c(xi_q) = P(xi_q)^{-1} u(xi_q)
        let c: Vec<Vec<Complex64>> = (0..q)
            .map(|i| {
                let inv = &contour.inverses[i];
                let mut out = vec![ZERO; nk * dim];
                for k in 0..nk {
                    for j in 0..nk {
                        for d in 0..dim {
                            out[k * dim + d] += inv[k][j] * u[i][j][d];
                        }
                    }
                }
                out
            })
            .collect();
        let count = (n_hi - n_lo + 1) as usize;
        let mut beta = vec![ZERO; count * nk * dim];
        for (m, n) in (n_lo..=n_hi).enumerate() {
            let slot = &mut beta[m * nk * dim..(m + 1) * nk * dim];
            for (i, ci) in c.iter().enumerate() {
                let e = Complex64::from_polar(1.0 / q as f64, -(n as f64) * i as f64 * TAU / q as f64);
                for (s, v) in slot.iter_mut().zip(ci) {
                    *s += v * e;
                }
            }
        }
        let size = |m: usize| -> f64 {
            (0..nk)
                .map(|k| euclidean_norm(&beta[(m * nk + k) * dim..(m * nk + k + 1) * dim]))
                .fold(0.0, f64::max)
                * self.op.m
        };
        let thr = self.op.config.tol * scale;
        let first = if n_lo < 0 { size(0) } else { 0.0 };
        let last = if n_hi > 0 { size(count - 1) } else { 0.0 };
        if first.max(last) >= thr {
            return Err(Error::numerical(format!(
                "Laurent coefficients not decaying: |n| = {} still at {:.3e} of the expanded size",
                self.op.config.nmax,
                first.max(last) / scale
            )));
        }
        let kept: Vec<usize> = (0..count).filter(|&m| size(m) >= thr).collect();
        let (lo_m, hi_m) = match (kept.first(), kept.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => return Ok(LaurentCoefficients::empty(contour.radius, nk, dim)),
        };
        Ok(LaurentCoefficients {
            radius: contour.radius,
            n_lo: n_lo + lo_m as i64,
            n_hi: n_lo + hi_m as i64,
            n_basis: nk,
            dim,
            beta: beta[lo_m * nk * dim..(hi_m + 1) * nk * dim].to_vec(),
        })
    }

    /// `T_2 f(z) = sum_{n >= 0} a_n(z) B(z)^n`, valid on `{|B| < r/(3M)}`.
    pub fn t2(&self, z: Complex64) -> Vec<Complex64> {
        let g = self.op.basis.jones().eval_all(z);
        self.coeffs.sum(&g, self.op.product().eval(z), true)
    }

    /// `T_1 f(z) = sum_{n < 0} a_n(z) B(z)^n`, valid on `{|B| > r/(6M)}`; the
    /// truncated series is accurate from the series radius on.
    pub fn t1(&self, z: Complex64) -> Vec<Complex64> {
        let g = self.op.basis.jones().eval_all(z);
        self.h_coeffs.sum(&g, self.op.product().eval(z), false)
    }

    /// `(H(w) f)(z) = sum_{n < 0} a_n(z) w^n`, so that `T_1 f(z) = H(B(z)) f(z)`.
    /// The truncated series is accurate for `|w|` at least
    /// [`SmallWidthOperator::h_radius`].
    pub fn h_eval(&self, w: Complex64, z: Complex64) -> Result<Vec<Complex64>> {
        let lo = self.op.h_radius();
        if w.norm() < lo * (1.0 - 1e-12) {
            return Err(Error::invalid(format!("|w| = {} below the series radius {lo}", w.norm())));
        }
        let g = self.op.basis.jones().eval_all(z);
        Ok(self.h_coeffs.sum(&g, w, false))
    }

    /// Radius of the splitting contour, `r/(4M)`.
    pub fn contour_radius(&self) -> f64 {
        self.op.contour.radius
    }

    /// `L_K f(z)` and the branch used.  Near the splitting contour both
    /// branches are evaluated and must agree; `T_1` is only compared where
    /// `|B| >= h_radius`, since its coefficients are truncated on that circle.
    pub fn eval_with_branch(&self, z: Complex64) -> Result<(Vec<Complex64>, Branch)> {
        let b = self.op.product().eval(z).norm();
        let mid = self.op.contour.radius;
        let band_lo = (0.8 * mid).max(self.op.h_radius());
        let inner = |z| -> Result<Vec<Complex64>> {
            let e = self.ek(z)?;
            Ok(e.iter().zip(self.t2(z)).map(|(a, t)| a - t).collect())
        };
        let (value, branch) = if b < mid {
            (inner(z)?, Branch::Inner)
        } else {
            (self.t1(z), Branch::Outer)
        };
        if b >= band_lo && b < 1.25 * mid && self.f_norm > 0.0 {
            let other = if branch == Branch::Inner { self.t1(z) } else { inner(z)? };
            let diff: Vec<Complex64> = value.iter().zip(&other).map(|(a, o)| a - o).collect();
            let allowed = self.op.config.branch_tol * self.op.ek_bound() * self.f_norm;
            if euclidean_norm(&diff) > allowed {
                return Err(Error::numerical(format!(
                    "branches disagree at {z} by {:.3e} (allowed {allowed:.3e})",
                    euclidean_norm(&diff)
                )));
            }
        }
        Ok((value, branch))
    }

    pub fn eval(&self, z: Complex64) -> Result<Vec<Complex64>> {
        Ok(self.eval_with_branch(z)?.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cauchy::{cauchy_solve_with, FnDensity};
    use crate::region::RegionSpec;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn seq(p: &[Complex64]) -> FiniteSequence {
        FiniteSequence::from_complex(p).unwrap()
    }

    #[test]
    fn sum_orders_terms_correctly() {
        // Two indices on each side with a single basis function.
        let lc = LaurentCoefficients {
            radius: 0.5,
            n_lo: -2,
            n_hi: 1,
            n_basis: 1,
            dim: 1,
            beta: vec![c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0)],
        };
        let g = [c(1.0, 0.0)];
        let w = c(0.3, 0.2);
        let t = w / 0.5;
        let pos = 3.0 + 4.0 * t;
        let neg = 1.0 / (t * t) + 2.0 / t;
        assert!((lc.sum(&g, w, true)[0] - pos).norm() < 1e-14);
        assert!((lc.sum(&g, w, false)[0] - neg).norm() < 1e-14);
    }

    #[test]
    fn pullback_at_origin_is_the_weighted_density() {
        let f = FnDensity::new(1, |z: Complex64| vec![z + 1.0]);
        let support = RegionSpec::uniform(seq(&[c(0.0, 0.0)]), 0.2).unwrap().region();
        let (field, sup) = pullback_density(&f, c(0.0, 0.0), 0.2, &support, 8, 8).unwrap();
        let w = field.grid().node(3, 5);
        assert!((field.node_value(3, 5)[0] - (w + 1.0) / (1.0 - w.norm_sqr())).norm() < 1e-15);
        assert!(sup <= 1.2 && field.sup_norm() <= sup / (1.0 - 0.04) + 1e-15);
    }

    #[test]
    fn pullback_bound_off_origin() {
        let f = FnDensity::new(1, |z: Complex64| vec![Complex64::from_polar(1.0, 7.0 * z.re)]);
        let centre = c(0.6, -0.3);
        let support = RegionSpec::uniform(seq(&[centre]), 0.1).unwrap().region();
        let (field, sup) = pullback_density(&f, centre, 0.1, &support, 16, 16).unwrap();
        assert!(field.sup_norm() <= sup / (1.0 - 0.01) + 1e-12);
    }

    #[test]
    fn single_zero_reduces_to_weighted_cauchy_transform() {
        // zeta = {0}, K = D_0.1, lambda chosen so that r/6 = 0.1.
        let zeros = seq(&[c(0.0, 0.0)]);
        let support = RegionSpec::uniform(zeros.clone(), 0.1).unwrap().region();
        let cfg = PipelineConfig { grid_nr: 32, grid_ntheta: 32, ..Default::default() };
        let op = SmallWidthOperator::new(zeros, 0.6, &support, cfg).unwrap();
        assert!((op.c_eps() - 0.1).abs() < 1e-12);
        let f = FnDensity::new(1, |z: Complex64| vec![c(1.0, 0.0) + z]);
        let sol = op.apply(&f).unwrap();
        let grid = PolarGrid::new(32, 32, 0.1).unwrap();
        let weighted = GridField::sample(grid, &FnDensity::new(1, |w: Complex64| vec![(c(1.0, 0.0) + w) / (1.0 - w.norm_sqr())]), |_| true).unwrap();
        let qcfg = CauchyConfig { lookup: Lookup::Bilinear, ..Default::default() };
        for &z in &[c(0.01, 0.02), c(-0.05, 0.0)] {
            let a = sol.ek(z).unwrap()[0];
            let b = cauchy_solve_with(&weighted, z, &qcfg)[0];
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn zero_density_gives_zero() {
        let zeros = seq(&[c(0.5, 0.0), c(-0.5, 0.0)]);
        let support = RegionSpec::uniform(zeros.clone(), 0.001).unwrap().region();
        let cfg = PipelineConfig { grid_nr: 8, grid_ntheta: 8, ..Default::default() };
        let op = SmallWidthOperator::new(zeros, 0.1, &support, cfg).unwrap();
        let sol = op.apply(&FnDensity::new(2, |_| vec![ZERO; 2])).unwrap();
        assert!(sol.coefficients().is_empty() && sol.h_coefficients().is_empty());
        assert_eq!(sol.eval(c(0.1, 0.1)).unwrap(), vec![ZERO; 2]);
        assert_eq!(sol.eval(c(0.5, 0.0001)).unwrap(), vec![ZERO; 2]);
    }

    fn two_zero_solution_parts() -> (SmallWidthOperator, FnDensity<impl Fn(Complex64) -> Vec<Complex64> + Sync>) {
        let zeros = seq(&[c(0.5, 0.1), c(-0.4, -0.2)]);
        let cfg = PipelineConfig { grid_nr: 48, grid_ntheta: 48, ..Default::default() };
        let wide = RegionSpec::uniform(zeros.clone(), 0.9).unwrap().region();
        let op = SmallWidthOperator::new(zeros, 0.3, &wide, cfg).unwrap();
        let f = FnDensity::new(1, |z: Complex64| vec![c(1.0, 0.5) + z * z.conj()]);
        (op, f)
    }

    #[test]
    fn splitting_sums_to_local_solution() {
        let (op, f) = two_zero_solution_parts();
        let sol = op.apply(&f).unwrap();
        let rho = sol.contour_radius();
        let p = op.product();
        let fnorm = sol.f_norm();
        for (n, &zn) in op.zeros().iter().enumerate() {
            for j in 0..12 {
                let w = Complex64::from_polar(rho * (0.85 + 0.05 * (j % 4) as f64), j as f64);
                let z = op.basis().level().local_inverse(n, w).unwrap();
                assert!((p.eval(z) - w).norm() < 1e-12);
                let lhs = sol.t1(z)[0] + sol.t2(z)[0];
                let rhs = sol.ek(z).unwrap()[0];
                assert!((lhs - rhs).norm() < 1e-8 * op.ek_bound() * fnorm, "{zn} {j}: {}", (lhs - rhs).norm());
            }
        }
    }

    #[test]
    fn glued_solution_is_holomorphic_off_the_support() {
        let (op, f) = two_zero_solution_parts();
        let sol = op.apply(&f).unwrap();
        // Mean value over a small circle avoiding K and the level curve |B| = r/(4M).
        let centre = c(0.05, 0.6);
        let v0 = sol.eval(centre).unwrap()[0];
        let n = 64;
        let mean: Complex64 = (0..n)
            .map(|k| sol.eval(centre + Complex64::from_polar(0.05, k as f64 * TAU / n as f64)).unwrap()[0])
            .sum::<Complex64>()
            / n as f64;
        assert!((mean - v0).norm() < 1e-10 * (1.0 + v0.norm()));
        assert!(sol.eval(centre).unwrap()[0].norm() <= op.norm_bound() * sol.f_norm());
    }

    #[test]
    fn glued_solution_solves_the_equation_weakly() {
        use crate::cauchy::{weak_residual_relative, Bump, ResidualQuadrature};
        let (op, f) = two_zero_solution_parts();
        let sol = op.apply(&f).unwrap();
        let z0 = op.zeros()[0];
        let s = op.c_eps() * (1.0 - z0.norm_sqr());
        let bump = Bump::new(z0, 2.0 * s).unwrap();
        let quad = ResidualQuadrature::new(64, 64).unwrap().with_breakpoints(&[0.9 * s, 1.1 * s]);
        let lhs = |z: Complex64| sol.eval(z).unwrap();
        let rhs = |z: Complex64| -> Vec<Complex64> {
            if op.support().contains(z) {
                f.eval(z).iter().map(|v| v / (1.0 - z.norm_sqr())).collect()
            } else {
                vec![ZERO]
            }
        };
        let res = weak_residual_relative(&lhs, &rhs, &bump, &quad).unwrap();
        assert!(res < 1e-2 * sol.f_norm(), "residual {res}");
    }
}
