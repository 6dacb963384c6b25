//! The Cauchy transform `E h(z) = (1/pi) iint h(w) / (z - w) dA(w)` of
//! densities sampled on polar grids, its modulus of continuity, and a
//! weak-solution residual for `dF/dz-bar = rhs`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use gauss_quad::GaussLegendre;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Polar grid on the disk of radius `radius`: node `(i, j)` sits at the centre
/// of the cell `[i dr, (i+1) dr] x [j dtheta, (j+1) dtheta]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarGrid {
    pub n_r: usize,
    pub n_theta: usize,
    pub radius: f64,
}

impl PolarGrid {
    pub fn new(n_r: usize, n_theta: usize, radius: f64) -> Result<Self> {
        if n_r == 0 || n_theta == 0 {
            return Err(Error::invalid("grid needs at least one node per direction"));
        }
        if !(radius > 0.0 && radius <= 1.0) {
            return Err(Error::invalid(format!("grid radius {radius} not in (0, 1]")));
        }
        Ok(PolarGrid { n_r, n_theta, radius })
    }

    pub fn dr(&self) -> f64 {
        self.radius / self.n_r as f64
    }

    pub fn dtheta(&self) -> f64 {
        TAU / self.n_theta as f64
    }

    pub fn len(&self) -> usize {
        self.n_r * self.n_theta
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node(&self, i: usize, j: usize) -> Complex64 {
        Complex64::from_polar((i as f64 + 0.5) * self.dr(), (j as f64 + 0.5) * self.dtheta())
    }

    /// Exact area of the cell around node `(i, _)`.
    pub fn cell_area(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dr() * self.dr() * self.dtheta()
    }
}

/// Anything that can be sampled as a `C^d`-valued function on the disk.
pub trait Density: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, z: Complex64) -> Vec<Complex64>;
}

/// A closure viewed as a density.
pub struct FnDensity<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(Complex64) -> Vec<Complex64> + Sync> FnDensity<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnDensity { dim, f }
    }
}

impl<F: Fn(Complex64) -> Vec<Complex64> + Sync> Density for FnDensity<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, z: Complex64) -> Vec<Complex64> {
        (self.f)(z)
    }
}

/// How off-node values of a grid field are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lookup {
    /// Value of the cell containing the point.
    #[default]
    Nearest,
    /// Bilinear in `(r, theta)` between neighbouring nodes.
    Bilinear,
}

/// `C^d`-valued samples on a polar grid with a support mask.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: PolarGrid,
    dim: usize,
    /// Radial-major: node `(i, j)`, component `c` at `(i * n_theta + j) * dim + c`.
    values: Vec<Complex64>,
    mask: Vec<bool>,
}

impl GridField {
    pub fn zeros(grid: PolarGrid, dim: usize) -> Self {
        GridField {
            grid,
            dim,
            values: vec![ZERO; grid.len() * dim],
            mask: vec![false; grid.len()],
        }
    }

    pub fn from_parts(grid: PolarGrid, dim: usize, values: Vec<Complex64>, mask: Vec<bool>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("field dimension must be positive"));
        }
        if values.len() != grid.len() * dim || mask.len() != grid.len() {
            return Err(Error::invalid(format!(
                "field has {} values and {} mask entries for a {}x{} grid of dimension {dim}",
                values.len(),
                mask.len(),
                grid.n_r,
                grid.n_theta
            )));
        }
        for (k, &m) in mask.iter().enumerate() {
            let node = &values[k * dim..(k + 1) * dim];
            if node.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return Err(Error::invalid(format!("non-finite value at node {k}")));
            }
            if !m && node.iter().any(|v| *v != ZERO) {
                return Err(Error::invalid(format!("nonzero value outside the mask at node {k}")));
            }
        }
        Ok(GridField { grid, dim, values, mask })
    }

    /// Sample `density` at the nodes where `support` holds.
    pub fn sample(grid: PolarGrid, density: &dyn Density, support: impl Fn(Complex64) -> bool) -> Result<Self> {
        let dim = density.dim();
        let mut field = GridField::zeros(grid, dim);
        for i in 0..grid.n_r {
            for j in 0..grid.n_theta {
                let z = grid.node(i, j);
                if !support(z) {
                    continue;
                }
                let v = density.eval(z);
                if v.len() != dim {
                    return Err(Error::invalid(format!(
                        "density returned {} components, expected {dim}",
                        v.len()
                    )));
                }
                if v.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                    return Err(Error::invalid(format!("density not finite at {z}")));
                }
                let k = i * grid.n_theta + j;
                field.mask[k] = true;
                field.values[k * dim..(k + 1) * dim].copy_from_slice(&v);
            }
        }
        Ok(field)
    }

    pub fn grid(&self) -> &PolarGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn node_value(&self, i: usize, j: usize) -> &[Complex64] {
        let k = (i * self.grid.n_theta + j) * self.dim;
        &self.values[k..k + self.dim]
    }

    /// Grid maximum of the pointwise Euclidean norm over the mask.
    pub fn sup_norm(&self) -> f64 {
        self.values
            .chunks(self.dim)
            .map(|v| v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// `T h` for a `d' x d` matrix `T` acting on every node.
    pub fn apply_matrix(&self, t: &[Vec<Complex64>]) -> Result<GridField> {
        if t.iter().any(|row| row.len() != self.dim) || t.is_empty() {
            return Err(Error::invalid("matrix shape does not match the field dimension"));
        }
        let out_dim = t.len();
        let mut values = Vec::with_capacity(self.grid.len() * out_dim);
        for node in self.values.chunks(self.dim) {
            for row in t {
                values.push(row.iter().zip(node).map(|(a, b)| a * b).sum());
            }
        }
        Ok(GridField { grid: self.grid, dim: out_dim, values, mask: self.mask.clone() })
    }

    /// `alpha * self + other` on the same grid; the mask is the union.
    pub fn axpy(&self, alpha: Complex64, other: &GridField) -> Result<GridField> {
        if self.grid != other.grid || self.dim != other.dim {
            return Err(Error::invalid("fields live on different grids"));
        }
        Ok(GridField {
            grid: self.grid,
            dim: self.dim,
            values: self.values.iter().zip(&other.values).map(|(a, b)| alpha * a + b).collect(),
            mask: self.mask.iter().zip(&other.mask).map(|(a, b)| *a || *b).collect(),
        })
    }

    /// Add `weight * h(z)` to `out`; zero outside the grid disk.
    pub fn accumulate(&self, z: Complex64, weight: f64, lookup: Lookup, out: &mut [Complex64]) {
        let g = &self.grid;
        let r = z.norm();
        if r >= g.radius {
            return;
        }
        let mut theta = z.im.atan2(z.re);
        if theta < 0.0 {
            theta += TAU;
        }
        match lookup {
            Lookup::Nearest => {
                let i = ((r / g.dr()) as usize).min(g.n_r - 1);
                let j = ((theta / g.dtheta()) as usize) % g.n_theta;
                self.add_node(i, j, weight, out);
            }
            Lookup::Bilinear => {
                let u = r / g.dr() - 0.5;
                let (i0, i1, fu) = if u <= 0.0 {
                    (0, 0, 0.0)
                } else if u >= (g.n_r - 1) as f64 {
                    (g.n_r - 1, g.n_r - 1, 0.0)
                } else {
                    let i0 = u.floor() as usize;
                    (i0, i0 + 1, u - i0 as f64)
                };
                let v = theta / g.dtheta() - 0.5;
                let vf = v.floor();
                let fv = v - vf;
                let j0 = (vf as i64).rem_euclid(g.n_theta as i64) as usize;
                let j1 = (j0 + 1) % g.n_theta;
                self.add_node(i0, j0, weight * (1.0 - fu) * (1.0 - fv), out);
                self.add_node(i0, j1, weight * (1.0 - fu) * fv, out);
                self.add_node(i1, j0, weight * fu * (1.0 - fv), out);
                self.add_node(i1, j1, weight * fu * fv, out);
            }
        }
    }

    fn add_node(&self, i: usize, j: usize, weight: f64, out: &mut [Complex64]) {
        if weight == 0.0 {
            return;
        }
        let k = (i * self.grid.n_theta + j) * self.dim;
        for (o, v) in out.iter_mut().zip(&self.values[k..k + self.dim]) {
            *o += v * weight;
        }
    }

    pub fn lookup(&self, z: Complex64, lookup: Lookup) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.dim];
        self.accumulate(z, 1.0, lookup, &mut out);
        out
    }
}

impl Density for GridField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, z: Complex64) -> Vec<Complex64> {
        self.lookup(z, Lookup::Nearest)
    }
}

/// Evaluation off the support disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exterior {
    /// The same singularity-centred polar quadrature as inside.
    #[default]
    Quadrature,
    /// Where `s / |z| <= 0.9`, the multipole expansion of the cell sum
    /// `(1/pi) sum_c h_c A_c / (z - w_c)`, which is exactly holomorphic in `z`
    /// (needed wherever Laurent coefficients are taken); quadrature closer in.
    Holomorphic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CauchyConfig {
    pub lookup: Lookup,
    pub exterior: Exterior,
    /// Angular nodes of the quadrature; `None` uses the grid's `n_theta`.
    pub n_phi: Option<usize>,
    /// Nodes along each chord; `None` uses `2 n_r`.
    pub n_chord: Option<usize>,
}

impl Default for CauchyConfig {
    fn default() -> Self {
        CauchyConfig { lookup: Lookup::Nearest, exterior: Exterior::Quadrature, n_phi: None, n_chord: None }
    }
}

/// Above this value of `s / |z|` the quadrature is used instead of the
/// multipole series; `0.9^400` is below `1e-18`.
const MULTIPOLE_RATIO: f64 = 0.9;
const MULTIPOLE_TERMS: usize = 400;

/// A field prepared for repeated evaluation of its Cauchy transform.
#[derive(Debug, Clone)]
pub struct CauchySolver {
    field: GridField,
    config: CauchyConfig,
    /// `sum_c h_c A_c (w_c / s)^k`, `dim` entries per `k`.
    moments: Vec<Complex64>,
}

impl CauchySolver {
    pub fn new(field: GridField, config: CauchyConfig) -> Self {
        let mut solver = CauchySolver {
            field,
            config,
            moments: Vec::new(),
        };
        if config.exterior == Exterior::Holomorphic {
            solver.prepare_cells();
        }
        solver
    }

    fn prepare_cells(&mut self) {
        let f = &self.field;
        let g = f.grid;
        let dim = f.dim;
        self.moments = vec![ZERO; MULTIPOLE_TERMS * dim];
        for i in 0..g.n_r {
            let area = g.cell_area(i);
            for j in 0..g.n_theta {
                if !f.mask[i * g.n_theta + j] {
                    continue;
                }
                let v = f.node_value(i, j);
                if v.iter().all(|c| *c == ZERO) {
                    continue;
                }
                let t = g.node(i, j) / g.radius;
                let mut p = Complex64::new(area, 0.0);
                for k in 0..MULTIPOLE_TERMS {
                    for c in 0..dim {
                        self.moments[k * dim + c] += v[c] * p;
                    }
                    p *= t;
                }
            }
        }
    }

    pub fn field(&self) -> &GridField {
        &self.field
    }

    pub fn config(&self) -> &CauchyConfig {
        &self.config
    }

    pub fn eval(&self, z: Complex64) -> Vec<Complex64> {
        let s = self.field.grid.radius;
        if self.config.exterior == Exterior::Holomorphic && s <= MULTIPOLE_RATIO * z.norm() {
            self.eval_multipole(z)
        } else {
            quadrature(&self.field, &self.config, z)
        }
    }

    fn eval_multipole(&self, z: Complex64) -> Vec<Complex64> {
        let dim = self.field.dim;
        let t = self.field.grid.radius / z;
        let mut out = vec![ZERO; dim];
        for k in (0..MULTIPOLE_TERMS).rev() {
            for c in 0..dim {
                out[c] = out[c] * t + self.moments[k * dim + c];
            }
        }
        for o in out.iter_mut() {
            *o /= PI * z;
        }
        out
    }

    /// Evaluate at many points; the result does not depend on `threads`.
    pub fn eval_many(&self, zs: &[Complex64], threads: usize) -> Vec<Vec<Complex64>> {
        par_map(zs, threads, |&z| self.eval(z))
    }
}

/// Map in contiguous chunks over scoped threads, keeping input order.
pub fn par_map<T: Sync, U: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> U + Sync) -> Vec<U> {
    let threads = threads.max(1).min(items.len().max(1));
    if threads == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    let f = &f;
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(f).collect::<Vec<U>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

/// `E h(z) = -(1/pi) int_0^{2pi} int h(z + r e^{i phi}) e^{-i phi} dr dphi`, with
/// each ray integrated only over its chord through the support disk.
fn quadrature(h: &GridField, config: &CauchyConfig, z: Complex64) -> Vec<Complex64> {
    let g = h.grid;
    let s = g.radius;
    let n_phi = config.n_phi.unwrap_or(g.n_theta);
    let n_chord = config.n_chord.unwrap_or(2 * g.n_r);
    let dim = h.dim;
    let mut out = vec![ZERO; dim];
    let mut ray = vec![ZERO; dim];
    let z2 = z.norm_sqr();
    let gap = s * s - z2;
    let modulus = z2.sqrt();
    if gap > 0.0 {
        // Rays from an interior point: one chord [0, r_out] per direction.
        let dphi = TAU / n_phi as f64;
        for k in 0..n_phi {
            let phi = (k as f64 + 0.5) * dphi;
            let e = Complex64::from_polar(1.0, phi);
            let b = z.re * e.re + z.im * e.im;
            let r_out = -b + (b * b + gap).sqrt();
            integrate_ray(h, config.lookup, z, e, 0.0, r_out, n_chord, &mut ray);
            let w = e.conj() * dphi;
            for c in 0..dim {
                out[c] += ray[c] * w;
            }
        }
    } else {
        // Only directions within asin(s/|z|) of the origin meet the support;
        // phi = psi + alpha sin t smooths the square-root ends of the window.
        let alpha = (s / modulus).min(1.0).asin();
        let psi = (-z).arg();
        let dt = PI / n_phi as f64;
        for k in 0..n_phi {
            let t = -FRAC_PI_2 + (k as f64 + 0.5) * dt;
            let phi = psi + alpha * t.sin();
            let jac = alpha * t.cos();
            let e = Complex64::from_polar(1.0, phi);
            let b = z.re * e.re + z.im * e.im;
            let disc = b * b + gap;
            if disc <= 0.0 {
                continue;
            }
            let root = disc.sqrt();
            integrate_ray(h, config.lookup, z, e, -b - root, -b + root, n_chord, &mut ray);
            let w = e.conj() * (jac * dt);
            for c in 0..dim {
                out[c] += ray[c] * w;
            }
        }
    }
    for o in out.iter_mut() {
        *o *= -1.0 / PI;
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn integrate_ray(
    h: &GridField,
    lookup: Lookup,
    z: Complex64,
    e: Complex64,
    r0: f64,
    r1: f64,
    n: usize,
    out: &mut [Complex64],
) {
    out.fill(ZERO);
    let step = (r1 - r0) / n as f64;
    for m in 0..n {
        let r = r0 + (m as f64 + 0.5) * step;
        h.accumulate(z + e * r, step, lookup, out);
    }
}

/// `E h(z)` with the default configuration.
pub fn cauchy_solve(h: &GridField, z: Complex64) -> Vec<Complex64> {
    quadrature(h, &CauchyConfig::default(), z)
}

pub fn cauchy_solve_with(h: &GridField, z: Complex64, config: &CauchyConfig) -> Vec<Complex64> {
    quadrature(h, config, z)
}

/// Elementwise `cauchy_solve`, parallel over targets.
pub fn cauchy_solve_field(h: &GridField, targets: &[Complex64], config: &CauchyConfig, threads: usize) -> Vec<Vec<Complex64>> {
    par_map(targets, threads, |&z| quadrature(h, config, z))
}

/// `t log(8/t)`, on `(0, 8/e]` where it is increasing (distances in the disk
/// never exceed 2).
pub fn omega(t: f64) -> Result<f64> {
    if !(t > 0.0 && t <= 8.0 / std::f64::consts::E) {
        return Err(Error::invalid(format!("omega is defined on (0, 8/e], got {t}")));
    }
    Ok(t * (8.0 / t).ln())
}

pub fn euclidean_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub pairs: usize,
    /// Largest `|Eh(z1) - Eh(z2)| / (3 omega(|z1 - z2|) |h|)`.
    pub max_ratio: f64,
    pub worst: Option<[[f64; 2]; 2]>,
}

/// Compare increments of `Eh` with `3 omega(|z1 - z2|) |h|` over the pairs.
pub fn continuity_check(solver: &CauchySolver, pairs: &[(Complex64, Complex64)], threads: usize) -> Result<ContinuityReport> {
    let norm = solver.field().sup_norm();
    let ratios = par_map(pairs, threads, |&(a, b)| -> Result<f64> {
        let t = (a - b).norm();
        if t == 0.0 || norm == 0.0 {
            return Ok(0.0);
        }
        let ea = solver.eval(a);
        let eb = solver.eval(b);
        let diff: Vec<Complex64> = ea.iter().zip(&eb).map(|(x, y)| x - y).collect();
        Ok(euclidean_norm(&diff) / (3.0 * omega(t)? * norm))
    });
    let mut report = ContinuityReport { pairs: pairs.len(), max_ratio: 0.0, worst: None };
    for (ratio, &(a, b)) in ratios.into_iter().zip(pairs) {
        let ratio = ratio?;
        if ratio > report.max_ratio {
            report.max_ratio = ratio;
            report.worst = Some([[a.re, a.im], [b.re, b.im]]);
        }
    }
    Ok(report)
}

/// `exp(-a^2 / (a^2 - |z - c|^2))` on the disk `|z - c| < a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: Complex64,
    pub radius: f64,
}

impl Bump {
    pub fn new(center: Complex64, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || center.norm() + radius >= 1.0 {
            return Err(Error::invalid(format!(
                "bump at {center} with radius {radius} is not compactly supported in the disk"
            )));
        }
        Ok(Bump { center, radius })
    }

    pub fn eval(&self, z: Complex64) -> f64 {
        let a2 = self.radius * self.radius;
        let t = (z - self.center).norm_sqr();
        if t >= a2 {
            0.0
        } else {
            (-a2 / (a2 - t)).exp()
        }
    }

    /// `d/dz-bar` of the bump.
    pub fn dbar(&self, z: Complex64) -> Complex64 {
        let a2 = self.radius * self.radius;
        let u = z - self.center;
        let t = u.norm_sqr();
        if t >= a2 {
            return ZERO;
        }
        let gap = a2 - t;
        u * (-a2 / (gap * gap) * (-a2 / gap).exp())
    }
}

/// Polar Gauss-Legendre (radius) times trapezoid (angle) rule on a bump disk.
/// Optional radial breakpoints split the radius into separately integrated
/// segments, for integrands with features much smaller than the bump.
#[derive(Debug, Clone)]
pub struct ResidualQuadrature {
    radial: Vec<(f64, f64)>,
    n_angular: usize,
    breakpoints: Vec<f64>,
    pub threads: usize,
}

impl ResidualQuadrature {
    pub fn new(n_radial: usize, n_angular: usize) -> Result<Self> {
        let gl = GaussLegendre::new(n_radial)
            .map_err(|_| Error::invalid(format!("need at least 2 radial nodes, got {n_radial}")))?;
        if n_angular == 0 {
            return Err(Error::invalid("need at least one angular node"));
        }
        Ok(ResidualQuadrature {
            radial: gl.into_node_weight_pairs(),
            n_angular,
            breakpoints: Vec::new(),
            threads: 1,
        })
    }

    /// Absolute radii (from the bump centre) where the radial rule restarts.
    pub fn with_breakpoints(mut self, radii: &[f64]) -> Self {
        self.breakpoints = radii.iter().copied().filter(|r| *r > 0.0).collect();
        self.breakpoints.sort_by(f64::total_cmp);
        self
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads.max(1);
        self
    }

    /// Nodes and `dA` weights on the disk `|z - c| < a`.
    pub fn nodes(&self, bump: &Bump) -> Vec<(Complex64, f64)> {
        let a = bump.radius;
        let dphi = TAU / self.n_angular as f64;
        let mut ends = vec![0.0];
        ends.extend(self.breakpoints.iter().copied().filter(|&b| b < a));
        ends.push(a);
        let mut out = Vec::with_capacity((ends.len() - 1) * self.radial.len() * self.n_angular);
        for seg in ends.windows(2) {
            let half = 0.5 * (seg[1] - seg[0]);
            for &(x, w) in &self.radial {
                let r = seg[0] + half * (x + 1.0);
                for k in 0..self.n_angular {
                    let z = bump.center + Complex64::from_polar(r, (k as f64 + 0.5) * dphi);
                    out.push((z, half * w * r * dphi));
                }
            }
        }
        out
    }
}

pub fn bump_mass(bump: &Bump, quad: &ResidualQuadrature) -> f64 {
    quad.nodes(bump).iter().map(|&(z, w)| bump.eval(z) * w).sum()
}

type Evaluator<'a> = dyn Fn(Complex64) -> Vec<Complex64> + Sync + 'a;

/// `|iint F dbar(rho) dz^dz-bar + iint rhs rho dz^dz-bar|`, the defect of `F`
/// as a weak solution of `dF/dz-bar = rhs` against the bump.
pub fn weak_residual(f: &Evaluator<'_>, rhs: &Evaluator<'_>, bump: &Bump, quad: &ResidualQuadrature) -> Result<f64> {
    Bump::new(bump.center, bump.radius)?;
    let nodes = quad.nodes(bump);
    let terms = par_map(&nodes, quad.threads, |&(z, w)| {
        let fv = f(z);
        let rv = rhs(z);
        let d = bump.dbar(z) * w;
        let p = bump.eval(z) * w;
        fv.iter().zip(&rv).map(|(a, b)| a * d + b * p).collect::<Vec<Complex64>>()
    });
    let dim = terms.first().map_or(0, Vec::len);
    let mut acc = vec![ZERO; dim];
    for t in &terms {
        if t.len() != dim {
            return Err(Error::invalid("evaluators returned inconsistent dimensions"));
        }
        for (a, v) in acc.iter_mut().zip(t) {
            *a += v;
        }
    }
    // dz ^ dz-bar = -2i dA
    Ok(2.0 * euclidean_norm(&acc))
}

/// The residual divided by `iint rho |dz ^ dz-bar|`, so that a residual
/// comparable to `eta |rhs|` measures a pointwise defect of size `eta`.
pub fn weak_residual_relative(f: &Evaluator<'_>, rhs: &Evaluator<'_>, bump: &Bump, quad: &ResidualQuadrature) -> Result<f64> {
    Ok(weak_residual(f, rhs, bump, quad)? / (2.0 * bump_mass(bump, quad)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn indicator(n: usize, s: f64) -> GridField {
        let grid = PolarGrid::new(n, n, s).unwrap();
        GridField::sample(grid, &FnDensity::new(1, |_| vec![c(1.0, 0.0)]), |_| true).unwrap()
    }

    fn indicator_exact(z: Complex64, s: f64) -> Complex64 {
        if z.norm() <= s {
            z.conj()
        } else {
            s * s / z
        }
    }

    fn random_field(rng: &mut ChaCha8Rng, n: usize, s: f64) -> GridField {
        let grid = PolarGrid::new(n, n, s).unwrap();
        let values: Vec<Complex64> = (0..grid.len())
            .map(|_| Complex64::from_polar(rng.gen::<f64>(), rng.gen::<f64>() * TAU))
            .collect();
        GridField::from_parts(grid, 1, values, vec![true; grid.len()]).unwrap()
    }

    #[test]
    fn zero_field_gives_zero() {
        let grid = PolarGrid::new(8, 8, 0.5).unwrap();
        let h = GridField::zeros(grid, 2);
        assert!(cauchy_solve(&h, c(0.1, 0.2)).iter().all(|v| *v == ZERO));
    }

    #[test]
    fn indicator_oracle() {
        let s = 0.5;
        let h = indicator(64, s);
        for &z in &[c(0.1, 0.2), c(-0.3, 0.05), c(0.0, 0.49), c(0.7, -0.2), c(-0.1, 0.9)] {
            let e = cauchy_solve(&h, z)[0];
            let exact = indicator_exact(z, s);
            assert!((e - exact).norm() < 1e-3 * exact.norm().max(0.1), "{z}: {e} vs {exact}");
        }
    }

    #[test]
    fn holomorphic_exterior_matches_closed_form() {
        let s = 0.3;
        let h = indicator(64, s);
        let hol = CauchySolver::new(h, CauchyConfig { exterior: Exterior::Holomorphic, ..Default::default() });
        for &z in &[c(0.5, 0.1), c(-0.9, 0.2), c(0.0, -0.31), c(0.2, 0.1)] {
            let a = hol.eval(z)[0];
            assert!((a - indicator_exact(z, s)).norm() < 1e-4, "{z}");
        }
        // Exactly holomorphic: the mean over a circle reproduces the centre.
        let centre = c(0.6, 0.1);
        let q = 64;
        let mean: Complex64 = (0..q)
            .map(|k| hol.eval(centre + Complex64::from_polar(0.2, k as f64 * TAU / q as f64))[0])
            .sum::<Complex64>()
            / q as f64;
        assert!((mean - hol.eval(centre)[0]).norm() < 1e-14);
    }

    #[test]
    fn bilinear_lookup_is_exact_on_constants() {
        let h = indicator(16, 0.8);
        for &z in &[c(0.0, 0.0), c(0.79, 0.0), c(-0.2, 0.3)] {
            assert!((h.lookup(z, Lookup::Bilinear)[0] - 1.0).norm() < 1e-14);
        }
        assert_eq!(h.lookup(c(0.81, 0.0), Lookup::Bilinear)[0], ZERO);
    }

    #[test]
    fn linear_and_componentwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h1 = random_field(&mut rng, 24, 0.4);
        let h2 = random_field(&mut rng, 24, 0.4);
        let alpha = c(0.3, -1.2);
        let combo = h1.axpy(alpha, &h2).unwrap();
        let cfg = CauchyConfig::default();
        for &z in &[c(0.1, 0.1), c(0.6, -0.2)] {
            let lhs = cauchy_solve_with(&combo, z, &cfg)[0];
            let rhs = alpha * cauchy_solve_with(&h1, z, &cfg)[0] + cauchy_solve_with(&h2, z, &cfg)[0];
            assert!((lhs - rhs).norm() < 1e-12);
        }
        let t = vec![vec![c(2.0, 1.0)], vec![c(0.0, -1.0)]];
        let th = h1.apply_matrix(&t).unwrap();
        let z = c(-0.2, 0.15);
        let e = cauchy_solve(&h1, z)[0];
        let te = cauchy_solve(&th, z);
        assert!((te[0] - t[0][0] * e).norm() < 1e-12);
        assert!((te[1] - t[1][0] * e).norm() < 1e-12);
    }

    #[test]
    fn batch_matches_pointwise_for_any_thread_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h = random_field(&mut rng, 16, 0.5);
        let targets: Vec<Complex64> = (0..13).map(|k| Complex64::from_polar(0.07 * k as f64, k as f64)).collect();
        let cfg = CauchyConfig::default();
        let one = cauchy_solve_field(&h, &targets, &cfg, 1);
        let four = cauchy_solve_field(&h, &targets, &cfg, 4);
        assert_eq!(one, four);
        assert_eq!(one[3], cauchy_solve(&h, targets[3]));
    }

    #[test]
    fn sup_bound_on_random_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let s = rng.gen_range(0.1..0.9);
            let h = random_field(&mut rng, 32, s);
            let norm = h.sup_norm();
            for _ in 0..20 {
                let z = Complex64::from_polar(rng.gen::<f64>().sqrt() * 0.999, rng.gen::<f64>() * TAU);
                assert!(cauchy_solve(&h, z)[0].norm() <= 2.0 * s * norm * 1.02);
            }
        }
    }

    #[test]
    fn nonnegative_density_stays_in_twice_the_hull() {
        let grid = PolarGrid::new(32, 32, 0.6).unwrap();
        let h = GridField::sample(grid, &FnDensity::new(1, |z: Complex64| vec![c(1.0 + z.re, 0.0)]), |_| true).unwrap();
        for k in 0..20 {
            let z = Complex64::from_polar(0.045 * k as f64, 0.7 * k as f64);
            assert!(cauchy_solve(&h, z)[0].norm() <= 2.0 * h.sup_norm());
        }
    }

    #[test]
    fn omega_values() {
        assert!((omega(8.0 / std::f64::consts::E).unwrap() - 8.0 / std::f64::consts::E).abs() < 1e-15);
        assert!((omega(2.0).unwrap() - 2.0 * 4f64.ln()).abs() < 1e-15);
        assert!(omega(1e-300).unwrap() < 1e-296);
        assert!(omega(0.0).is_err());
        assert!(omega(3.0).is_err());
    }

    #[test]
    fn continuity_on_indicator_and_random_fields() {
        let h = indicator(64, 0.5);
        let solver = CauchySolver::new(h, CauchyConfig::default());
        let same = continuity_check(&solver, &[(c(0.1, 0.1), c(0.1, 0.1))], 1).unwrap();
        assert_eq!(same.max_ratio, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pairs: Vec<(Complex64, Complex64)> = (0..100)
            .map(|_| {
                let a = Complex64::from_polar(0.95 * rng.gen::<f64>(), rng.gen::<f64>() * TAU);
                let b = Complex64::from_polar(0.95 * rng.gen::<f64>(), rng.gen::<f64>() * TAU);
                (a, b)
            })
            .collect();
        assert!(continuity_check(&solver, &pairs, 2).unwrap().max_ratio <= 1.0);
        let r = random_field(&mut rng, 32, 0.7);
        let solver = CauchySolver::new(r, CauchyConfig::default());
        assert!(continuity_check(&solver, &pairs, 2).unwrap().max_ratio <= 1.01);
    }

    #[test]
    fn exterior_is_holomorphic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let _ = &mut rng;
        let density = FnDensity::new(1, |z: Complex64| vec![c(1.0 + z.re * z.im, (2.0 * z.re).sin())]);
        let h = GridField::sample(PolarGrid::new(64, 64, 0.3).unwrap(), &density, |_| true).unwrap();
        let solver = CauchySolver::new(h, CauchyConfig::default());
        let centre = c(0.6, 0.1);
        let q = 64;
        let mean: Complex64 = (0..q)
            .map(|k| solver.eval(centre + Complex64::from_polar(0.2, k as f64 * TAU / q as f64))[0])
            .sum::<Complex64>()
            / q as f64;
        assert!((mean - solver.eval(centre)[0]).norm() < 1e-3 * solver.field().sup_norm());
    }

    #[test]
    fn residual_of_exact_solutions() {
        let quad = ResidualQuadrature::new(48, 64).unwrap();
        let bump = Bump::new(c(0.2, -0.1), 0.5).unwrap();
        let r = weak_residual(&|z: Complex64| vec![z.conj()], &|_| vec![c(1.0, 0.0)], &bump, &quad).unwrap();
        assert!(r < 1e-8, "{r}");
        let r = weak_residual(&|z: Complex64| vec![z * z + 1.0 / (z - 3.0)], &|_| vec![ZERO], &bump, &quad).unwrap();
        assert!(r < 1e-8, "{r}");
        // A wrong right-hand side is detected.
        let r = weak_residual_relative(&|z: Complex64| vec![z.conj()], &|_| vec![ZERO], &bump, &quad).unwrap();
        assert!((r - 1.0).abs() < 1e-8, "{r}");
        assert!(Bump::new(c(0.7, 0.0), 0.4).is_err());
        let split = ResidualQuadrature::new(24, 64).unwrap().with_breakpoints(&[0.1, 0.3, 0.9]);
        assert!((bump_mass(&bump, &split) - bump_mass(&bump, &quad)).abs() < 1e-10);
    }

    #[test]
    fn residual_of_cauchy_transform_shrinks() {
        let density = FnDensity::new(1, |z: Complex64| vec![c((3.0 * z.re).cos(), z.im)]);
        let quad = ResidualQuadrature::new(24, 32).unwrap();
        let bump = Bump::new(c(0.05, 0.0), 0.3).unwrap();
        let rhs = |z: Complex64| if z.norm() < 0.5 { density.eval(z) } else { vec![ZERO] };
        let mut last = f64::INFINITY;
        for n in [16, 32, 64] {
            let h = GridField::sample(PolarGrid::new(n, n, 0.5).unwrap(), &density, |_| true).unwrap();
            let solver = CauchySolver::new(h, CauchyConfig { lookup: Lookup::Bilinear, ..Default::default() });
            let r = weak_residual_relative(&|z| solver.eval(z), &rhs, &bump, &quad).unwrap();
            assert!(r < last);
            last = r;
        }
        assert!(last < 1e-2);
    }

    #[test]
    fn field_invariants_enforced() {
        let grid = PolarGrid::new(2, 2, 0.5).unwrap();
        let bad = GridField::from_parts(grid, 1, vec![c(1.0, 0.0); 4], vec![false; 4]);
        assert!(bad.is_err());
        assert!(GridField::from_parts(grid, 1, vec![c(f64::NAN, 0.0); 4], vec![true; 4]).is_err());
        assert!(PolarGrid::new(2, 2, 1.5).is_err());
    }

    proptest! {
        #[test]
        fn indicator_interior_is_conjugate(r in 0.0f64..0.45, t in 0.0f64..TAU) {
            let h = indicator(32, 0.5);
            let z = Complex64::from_polar(r, t);
            prop_assert!((cauchy_solve(&h, z)[0] - z.conj()).norm() < 1e-3);
        }
    }
}
