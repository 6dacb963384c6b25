//! Interpolation bases: Jones-type functions `g_j` with `g_j(z_k) = [j = k]`,
//! and the two-variable basis `f_j(z, w)` interpolating on the moving points
//! `b_k(w)` of the level components.

use std::f64::consts::{E, TAU};

use num_complex::Complex64;

use crate::blaschke::{BlaschkeProduct, LevelComponents};
use crate::error::{Error, Result};
use crate::sequence::{characteristic, interpolation_constant_bound, FiniteSequence};

const NEUMANN_TOL: f64 = 1e-13;
const NEUMANN_MAX_TERMS: usize = 400;

/// Explicit Jones interpolating functions for a finite sequence.
#[derive(Debug, Clone)]
pub struct JonesBasis {
    seq: FiniteSequence,
    z: Vec<Complex64>,
    /// Zeros ordered by decreasing modulus, and for each position in that
    /// order the index of the last zero with the same or larger modulus.
    order: Vec<usize>,
    group_end: Vec<usize>,
    rank: Vec<usize>,
    kappa: f64,
    /// `1 / B_j(z_j)`.
    inv_bj: Vec<Complex64>,
    /// `exp(kappa * sum_k H_k(z_j) w_k)` over the same index set as the
    /// exponent at `z`.
    exp_at_node: Vec<Complex64>,
    m: f64,
    sampled_sup: f64,
}

impl JonesBasis {
    pub fn new(seq: FiniteSequence) -> Result<Self> {
        if seq.is_empty() {
            return Err(Error::invalid("interpolation basis of an empty sequence"));
        }
        let delta = characteristic(&seq)?;
        let z = seq.values();
        let n = z.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| z[b].norm().total_cmp(&z[a].norm()).then(a.cmp(&b)));
        let mut group_end = vec![0; n];
        let mut i = n;
        while i > 0 {
            let last = i - 1;
            let modulus = z[order[last]].norm();
            let mut k = last;
            while k > 0 && z[order[k - 1]].norm() == modulus {
                k -= 1;
            }
            for g in k..=last {
                group_end[g] = last;
            }
            i = k;
        }
        let mut rank = vec![0; n];
        for (pos, &j) in order.iter().enumerate() {
            rank[j] = pos;
        }
        let kappa = 1.0 / (2.0 * (E / delta).ln());
        let m = if n == 1 {
            1.0
        } else {
            interpolation_constant_bound(delta)?.jones
        };
        let mut basis = JonesBasis {
            seq,
            z,
            order,
            group_end,
            rank,
            kappa,
            inv_bj: vec![Complex64::new(1.0, 0.0); n],
            exp_at_node: vec![Complex64::new(1.0, 0.0); n],
            m,
            sampled_sup: 0.0,
        };
        for j in 0..n {
            let zj = basis.z[j];
            let bj = basis.omitted_products(zj)[j];
            basis.inv_bj[j] = 1.0 / bj;
            basis.exp_at_node[j] = basis.exponent_sums(zj)[j].scale(kappa).exp();
        }
        basis.verify()?;
        Ok(basis)
    }

    pub fn sequence(&self) -> &FiniteSequence {
        &self.seq
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// The constant `M` with `sum_j |g_j| <= M` on the disk.
    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn sampled_sup(&self) -> f64 {
        self.sampled_sup
    }

    /// `B_j(z) = prod_{k != j} factor_k(z)` for every `j`.
    fn omitted_products(&self, z: Complex64) -> Vec<Complex64> {
        let n = self.z.len();
        let one = Complex64::new(1.0, 0.0);
        let f: Vec<Complex64> = self
            .z
            .iter()
            .map(|&a| {
                if a.norm() == 0.0 {
                    z
                } else {
                    (a.norm() / a) * (a - z) / (1.0 - a.conj() * z)
                }
            })
            .collect();
        let mut suffix = vec![one; n + 1];
        for k in (0..n).rev() {
            suffix[k] = suffix[k + 1] * f[k];
        }
        let mut out = Vec::with_capacity(n);
        let mut prefix = one;
        for k in 0..n {
            out.push(prefix * suffix[k + 1]);
            prefix *= f[k];
        }
        out
    }

    /// For every `j`: `sum_{|z_k| >= |z_j|} (1 + conj(z_k) z) / (1 - conj(z_k) z) (1 - |z_k|^2)`.
    fn exponent_sums(&self, z: Complex64) -> Vec<Complex64> {
        let n = self.z.len();
        let mut cumulative = vec![Complex64::new(0.0, 0.0); n];
        let mut acc = Complex64::new(0.0, 0.0);
        for (pos, &k) in self.order.iter().enumerate() {
            let a = self.z[k];
            let q = a.conj() * z;
            acc += (1.0 + q) / (1.0 - q) * (1.0 - a.norm_sqr());
            cumulative[pos] = acc;
        }
        (0..n)
            .map(|j| cumulative[self.group_end[self.rank[j]]])
            .collect()
    }

    /// `(g_1(z), ..., g_n(z))`.
    pub fn eval_all(&self, z: Complex64) -> Vec<Complex64> {
        let n = self.z.len();
        if n == 1 {
            return vec![Complex64::new(1.0, 0.0)];
        }
        let bj = self.omitted_products(z);
        let ex = self.exponent_sums(z);
        (0..n)
            .map(|j| {
                let zj = self.z[j];
                let kernel = (1.0 - zj.norm_sqr()) / (1.0 - zj.conj() * z);
                bj[j] * self.inv_bj[j] * kernel * kernel
                    * (ex[j].scale(-self.kappa)).exp()
                    * self.exp_at_node[j]
            })
            .collect()
    }

    pub fn eval(&self, j: usize, z: Complex64) -> Complex64 {
        self.eval_all(z)[j]
    }

    /// Interpolation at the nodes and the bound `sum |g_j| <= M` on a polar
    /// sample reaching `1 - 1e-4`.
    fn verify(&mut self) -> Result<()> {
        let n = self.z.len();
        for j in 0..n {
            let g = self.eval_all(self.z[j]);
            for (k, v) in g.iter().enumerate() {
                let want = if k == j { 1.0 } else { 0.0 };
                if (v - want).norm() > 1e-10 {
                    return Err(Error::numerical(format!(
                        "basis function {k} takes value {v} at node {j}"
                    )));
                }
            }
        }
        let mut sup = 0.0f64;
        let mut radii: Vec<f64> = (0..56).map(|i| (i as f64 + 0.5) / 56.0 * 0.99).collect();
        radii.extend((1..=8).map(|i| 1.0 - 10f64.powf(-2.0 - 2.0 * i as f64 / 8.0)));
        for &r in &radii {
            for t in 0..64 {
                let z = Complex64::from_polar(r, (t as f64 + 0.5) * TAU / 64.0);
                sup = sup.max(self.eval_all(z).iter().map(|v| v.norm()).sum());
            }
        }
        for &a in &self.z {
            sup = sup.max(self.eval_all(a).iter().map(|v| v.norm()).sum());
        }
        self.sampled_sup = sup;
        if sup > self.m + 1e-9 {
            return Err(Error::numerical(format!(
                "sampled sum |g_j| = {sup} exceeds the bound {}",
                self.m
            )));
        }
        Ok(())
    }
}

/// `max_k sum_j |a_kj|`, the operator norm on `l^inf`.
fn inf_norm(a: &[Vec<Complex64>]) -> f64 {
    a.iter()
        .map(|row| row.iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn vec_norm(a: &[Complex64]) -> f64 {
    a.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// `f_j(z, w) = sum_k (P(w)^{-1})_{kj} g_k(z)` with `P(w)_{kj} = g_j(b_k(w))`.
#[derive(Debug, Clone)]
pub struct TwoVariableBasis {
    jones: JonesBasis,
    level: LevelComponents,
    w_max: f64,
}

impl TwoVariableBasis {
    pub fn new(jones: JonesBasis, level: LevelComponents) -> Result<Self> {
        if jones.sequence() != level.product().zeros() {
            return Err(Error::invalid("basis and level components use different sequences"));
        }
        let w_max = level.r() / (3.0 * jones.m());
        Ok(TwoVariableBasis { jones, level, w_max })
    }

    pub fn from_sequence(seq: FiniteSequence, lambda: f64) -> Result<Self> {
        let jones = JonesBasis::new(seq.clone())?;
        let level = LevelComponents::new(BlaschkeProduct::new(seq), lambda)?;
        Self::new(jones, level)
    }

    pub fn jones(&self) -> &JonesBasis {
        &self.jones
    }

    pub fn level(&self) -> &LevelComponents {
        &self.level
    }

    /// `r / (3M)`: the radius in `w` on which the basis is defined.
    pub fn w_max(&self) -> f64 {
        self.w_max
    }

    fn check_w(&self, w: Complex64) -> Result<()> {
        if w.norm() > self.w_max * (1.0 + 1e-12) {
            return Err(Error::precondition(
                "two-variable interpolation",
                format!("|w| = {} exceeds r/(3M) = {}", w.norm(), self.w_max),
            ));
        }
        Ok(())
    }

    /// The moving nodes `b_k(w)`.
    pub fn nodes(&self, w: Complex64) -> Result<Vec<Complex64>> {
        (0..self.jones.len())
            .map(|k| self.level.local_inverse(k, w))
            .collect()
    }

    pub fn p_matrix(&self, w: Complex64) -> Result<Vec<Vec<Complex64>>> {
        self.check_w(w)?;
        Ok(self
            .nodes(w)?
            .into_iter()
            .map(|b| self.jones.eval_all(b))
            .collect())
    }

    /// `P(w)^{-1} a` by the Neumann series in `I - P(w)`.
    pub fn neumann_inverse_apply(&self, w: Complex64, a: &[Complex64]) -> Result<Vec<Complex64>> {
        let p = self.p_matrix(w)?;
        neumann_solve(&p, a, false)
    }

    /// `P(w)^{-1}` as a dense matrix.
    pub fn inverse_matrix(&self, w: Complex64) -> Result<Vec<Vec<Complex64>>> {
        let p = self.p_matrix(w)?;
        neumann_inverse(&p)
    }

    pub fn f_basis_eval(&self, j: usize, z: Complex64, w: Complex64) -> Result<Complex64> {
        let n = self.jones.len();
        if j >= n {
            return Err(Error::invalid(format!("no basis index {j}")));
        }
        let mut e = vec![Complex64::new(0.0, 0.0); n];
        e[j] = Complex64::new(1.0, 0.0);
        let c = self.neumann_inverse_apply(w, &e)?;
        let g = self.jones.eval_all(z);
        Ok(c.iter().zip(&g).map(|(a, b)| a * b).sum())
    }

    /// All `f_j(z, w)` given `P(w)^{-1}`.
    pub fn f_all_with_inverse(&self, inv: &[Vec<Complex64>], z: Complex64) -> Vec<Complex64> {
        let g = self.jones.eval_all(z);
        let n = g.len();
        (0..n)
            .map(|j| (0..n).map(|k| inv[k][j] * g[k]).sum())
            .collect()
    }
}

/// Solve `P x = a` (or `P^T x = a`) by `x = sum_m (I - P)^m a`.
pub fn neumann_solve(p: &[Vec<Complex64>], a: &[Complex64], transpose: bool) -> Result<Vec<Complex64>> {
    let n = p.len();
    let d: Vec<Vec<Complex64>> = (0..n)
        .map(|k| {
            (0..n)
                .map(|j| {
                    let v = if transpose { p[j][k] } else { p[k][j] };
                    let id = if j == k { 1.0 } else { 0.0 };
                    Complex64::new(id, 0.0) - v
                })
                .collect()
        })
        .collect();
    let q = inf_norm(&d);
    if q >= 1.0 {
        return Err(Error::numerical(format!(
            "Neumann series not contractive: |I - P| = {q}"
        )));
    }
    let scale = vec_norm(a);
    let mut x = a.to_vec();
    if scale == 0.0 {
        return Ok(x);
    }
    let mut term = a.to_vec();
    let mut prev = scale;
    for _ in 0..NEUMANN_MAX_TERMS {
        let next: Vec<Complex64> = (0..n)
            .map(|k| (0..n).map(|j| d[k][j] * term[j]).sum())
            .collect();
        let size = vec_norm(&next);
        if size > prev * (1.0 + 1e-12) && size > NEUMANN_TOL * scale {
            return Err(Error::numerical("Neumann terms growing"));
        }
        for (xi, ti) in x.iter_mut().zip(&next) {
            *xi += ti;
        }
        term = next;
        prev = size;
        if size < NEUMANN_TOL * scale {
            return Ok(x);
        }
    }
    Err(Error::numerical("Neumann series did not reach tolerance"))
}

/// `P^{-1} = sum_m (I - P)^m`.
pub fn neumann_inverse(p: &[Vec<Complex64>]) -> Result<Vec<Vec<Complex64>>> {
    let n = p.len();
    let d: Vec<Vec<Complex64>> = (0..n)
        .map(|k| {
            (0..n)
                .map(|j| Complex64::new(if j == k { 1.0 } else { 0.0 }, 0.0) - p[k][j])
                .collect()
        })
        .collect();
    let q = inf_norm(&d);
    if q >= 1.0 {
        return Err(Error::numerical(format!(
            "Neumann series not contractive: |I - P| = {q}"
        )));
    }
    let mut x: Vec<Vec<Complex64>> = (0..n)
        .map(|k| (0..n).map(|j| Complex64::new(if j == k { 1.0 } else { 0.0 }, 0.0)).collect())
        .collect();
    let mut term = x.clone();
    for _ in 0..NEUMANN_MAX_TERMS {
        let next: Vec<Vec<Complex64>> = (0..n)
            .map(|k| {
                (0..n)
                    .map(|j| (0..n).map(|l| d[k][l] * term[l][j]).sum())
                    .collect()
            })
            .collect();
        let size = inf_norm(&next);
        for k in 0..n {
            for j in 0..n {
                x[k][j] += next[k][j];
            }
        }
        term = next;
        if size < NEUMANN_TOL {
            return Ok(x);
        }
    }
    Err(Error::numerical("Neumann series did not reach tolerance"))
}
