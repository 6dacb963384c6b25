//! Finite Blaschke products, their level-set components and local inverses.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::rho;
use crate::sequence::{characteristic, interpolation_constant_bound, FiniteSequence};

const NEWTON_TOL: f64 = 1e-13;
const NEWTON_STEPS: usize = 50;
const MAX_SEGMENTS: usize = 64;
const BISECTION_STEPS: usize = 200;
const BISECTION_TOL: f64 = 1e-13;

/// `B(z) = prod_n (|z_n| / z_n) (z_n - z) / (1 - conj(z_n) z)`, with the
/// factor `z` for a zero at the origin.
#[derive(Debug, Clone)]
pub struct BlaschkeProduct {
    zeros: FiniteSequence,
    a: Vec<Complex64>,
    phase: Vec<Complex64>,
}

impl BlaschkeProduct {
    pub fn new(zeros: FiniteSequence) -> Self {
        let a = zeros.values();
        let phase = a
            .iter()
            .map(|&z| {
                if z.norm() == 0.0 {
                    Complex64::new(1.0, 0.0)
                } else {
                    z.norm() / z
                }
            })
            .collect();
        BlaschkeProduct { zeros, a, phase }
    }

    pub fn zeros(&self) -> &FiniteSequence {
        &self.zeros
    }

    pub fn zero_values(&self) -> &[Complex64] {
        &self.a
    }

    pub fn degree(&self) -> usize {
        self.a.len()
    }

    #[inline]
    fn factor(&self, k: usize, z: Complex64) -> Complex64 {
        let a = self.a[k];
        if a.re == 0.0 && a.im == 0.0 {
            z
        } else {
            self.phase[k] * (a - z) / (1.0 - a.conj() * z)
        }
    }

    #[inline]
    fn factor_derivative(&self, k: usize, z: Complex64) -> Complex64 {
        let a = self.a[k];
        if a.re == 0.0 && a.im == 0.0 {
            Complex64::new(1.0, 0.0)
        } else {
            let d = 1.0 - a.conj() * z;
            -self.phase[k] * (1.0 - a.norm_sqr()) / (d * d)
        }
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        (0..self.a.len()).fold(Complex64::new(1.0, 0.0), |acc, k| acc * self.factor(k, z))
    }

    /// `(B(z), B'(z))`.  The derivative uses prefix and suffix products so
    /// it stays exact at the zeros.
    pub fn eval_with_derivative(&self, z: Complex64) -> (Complex64, Complex64) {
        let n = self.a.len();
        let f: Vec<Complex64> = (0..n).map(|k| self.factor(k, z)).collect();
        let mut suffix = vec![Complex64::new(1.0, 0.0); n + 1];
        for k in (0..n).rev() {
            suffix[k] = suffix[k + 1] * f[k];
        }
        let mut prefix = Complex64::new(1.0, 0.0);
        let mut deriv = Complex64::new(0.0, 0.0);
        for k in 0..n {
            deriv += prefix * suffix[k + 1] * self.factor_derivative(k, z);
            prefix *= f[k];
        }
        (suffix[0], deriv)
    }

    pub fn derivative(&self, z: Complex64) -> Complex64 {
        self.eval_with_derivative(z).1
    }
}

/// Radius of the level disk, `lambda (delta - lambda) / (1 - lambda delta)`,
/// valid while `2 lambda / (1 + lambda^2) < delta`.
pub fn radius_r(delta: f64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda < 1.0) || !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid(format!(
            "need lambda in (0,1) and delta in (0,1], got {lambda}, {delta}"
        )));
    }
    if 2.0 * lambda / (1.0 + lambda * lambda) >= delta {
        return Err(Error::precondition(
            "level-set separation",
            format!("2 lambda / (1 + lambda^2) = {} is not below delta = {delta}",
                2.0 * lambda / (1.0 + lambda * lambda)),
        ));
    }
    Ok(lambda * (delta - lambda) / (1.0 - lambda * delta))
}

/// Parameters of one small-width stage: `r(lambda) / (6 m) = eps_nu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaSolution {
    pub lambda: f64,
    pub r: f64,
    pub m: f64,
}

/// Solve `r(lambda) / (6 M) = eps_nu` on `(0, nu)` with `M` the
/// interpolation-constant bound of `delta`.
pub fn solve_lambda(delta: f64, nu: f64, eps_nu: f64) -> Result<LambdaSolution> {
    let m = interpolation_constant_bound(delta)?.upper;
    solve_lambda_with_constant(delta, nu, eps_nu, m)
}

/// As [`solve_lambda`] with an explicit constant `m`.
pub fn solve_lambda_with_constant(
    delta: f64,
    nu: f64,
    eps_nu: f64,
    m: f64,
) -> Result<LambdaSolution> {
    if !(nu > 0.0 && nu <= 2.0 - 3f64.sqrt() + 1e-15) {
        return Err(Error::invalid(format!("nu = {nu} outside (0, 2 - sqrt 3]")));
    }
    if !(eps_nu > 0.0) || !(m >= 1.0) {
        return Err(Error::invalid(format!("need eps_nu > 0 and m >= 1, got {eps_nu}, {m}")));
    }
    let g = |lambda: f64| -> Result<f64> { Ok(radius_r(delta, lambda)? / (6.0 * m) - eps_nu) };
    let top = g(nu).map_err(|e| e.context("upper end of the lambda bracket"))?;
    if top <= 0.0 {
        return Err(Error::precondition(
            "lambda bracket",
            format!("r(nu) / (6 M) = {} does not exceed eps_nu = {eps_nu} (delta = {delta}, M = {m})",
                top + eps_nu),
        ));
    }
    let (mut lo, mut hi) = (0.0f64, nu);
    let mut mid = 0.5 * nu;
    for _ in 0..BISECTION_STEPS {
        mid = 0.5 * (lo + hi);
        let v = g(mid)?;
        if v.abs() < BISECTION_TOL * eps_nu.min(1.0) || hi - lo < 1e-17 {
            break;
        }
        if v > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let r = radius_r(delta, mid)?;
    Ok(LambdaSolution { lambda: mid, r, m })
}

/// The components of `{ |B| < r }`, one around each zero, with the local
/// inverses of `B` on them.
#[derive(Debug, Clone)]
pub struct LevelComponents {
    product: BlaschkeProduct,
    delta: f64,
    lambda: f64,
    r: f64,
}

impl LevelComponents {
    pub fn new(product: BlaschkeProduct, lambda: f64) -> Result<Self> {
        let delta = characteristic(product.zeros())?;
        let r = radius_r(delta, lambda)?;
        let lc = LevelComponents {
            product,
            delta,
            lambda,
            r,
        };
        lc.self_check()?;
        Ok(lc)
    }

    fn self_check(&self) -> Result<()> {
        for n in 0..self.product.degree() {
            for k in 0..4 {
                let w = Complex64::from_polar(0.9 * self.r, 0.3 + k as f64 * 1.5);
                self.local_inverse(n, w)
                    .map_err(|e| e.context(&format!("component {n}")))?;
            }
        }
        Ok(())
    }

    pub fn product(&self) -> &BlaschkeProduct {
        &self.product
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// Index of the component containing `z`, if `|B(z)| < r`.  The
    /// components lie in the pairwise disjoint disks `D(z_n, lambda)`.
    pub fn component_of(&self, z: Complex64) -> Option<usize> {
        if self.product.eval(z).norm() >= self.r {
            return None;
        }
        self.product
            .zero_values()
            .iter()
            .position(|&a| rho(z, a) < self.lambda)
    }

    /// The point of component `n` where `B` takes the value `w`.
    pub fn local_inverse(&self, n: usize, w: Complex64) -> Result<Complex64> {
        if n >= self.product.degree() {
            return Err(Error::invalid(format!("no component {n}")));
        }
        if w.norm() >= self.r {
            return Err(Error::invalid(format!("|w| = {} not below r = {}", w.norm(), self.r)));
        }
        let z0 = self.product.zero_values()[n];
        let mut segments = 1;
        while segments <= MAX_SEGMENTS {
            if let Some(z) = self.continue_along_ray(n, z0, w, segments) {
                return Ok(z);
            }
            segments *= 2;
        }
        Err(Error::numerical(format!(
            "Newton continuation for B(z) = {w} did not converge in component {n}"
        )))
    }

    fn continue_along_ray(&self, n: usize, z0: Complex64, w: Complex64, segments: usize) -> Option<Complex64> {
        let mut z = z0;
        for s in 1..=segments {
            let target = w * (s as f64 / segments as f64);
            z = self.newton(n, z, target)?;
        }
        Some(z)
    }

    fn newton(&self, n: usize, start: Complex64, target: Complex64) -> Option<Complex64> {
        let center = self.product.zero_values()[n];
        let mut z = start;
        for _ in 0..NEWTON_STEPS {
            let (b, db) = self.product.eval_with_derivative(z);
            let res = b - target;
            if res.norm() < NEWTON_TOL {
                return Some(z);
            }
            if db.norm() == 0.0 {
                return None;
            }
            z -= res / db;
            if !(z.norm() < 1.0) || rho(z, center) >= self.lambda {
                return None;
            }
        }
        let res = (self.product.eval(z) - target).norm();
        (res < NEWTON_TOL).then_some(z)
    }
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

    fn product(pts: &[Complex64]) -> BlaschkeProduct {
        BlaschkeProduct::new(FiniteSequence::from_complex(pts).unwrap())
    }

    #[test]
    fn eval_examples() {
        let b = product(&[c(0.0, 0.0)]);
        assert_eq!(b.eval(c(0.5, 0.0)), c(0.5, 0.0));
        assert_eq!(b.derivative(c(0.3, -0.2)), c(1.0, 0.0));
        let b = product(&[c(0.5, 0.0)]);
        assert!((b.eval(c(0.0, 0.0)) - c(0.5, 0.0)).norm() < 1e-15);
        let b = product(&[c(0.5, 0.1), c(-0.2, 0.7), c(0.0, -0.4)]);
        for &a in b.zero_values() {
            assert_eq!(b.eval(a).norm(), 0.0);
        }
    }

    #[test]
    fn unimodular_near_circle() {
        let b = product(&[c(0.5, 0.1), c(-0.2, 0.7), c(0.0, -0.4)]);
        for k in 0..32 {
            let z = Complex64::from_polar(1.0 - 1e-6, k as f64 * 0.2);
            assert!((b.eval(z).norm() - 1.0).abs() < 1e-4);
            let inner = Complex64::from_polar(0.99, k as f64 * 0.2);
            assert!(b.eval(inner).norm() < 1.0);
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let b = product(&[c(0.5, 0.1), c(-0.2, 0.7), c(0.0, -0.4), c(0.6, -0.6)]);
        let h = 1e-6;
        for &z in &[c(0.1, 0.1), c(-0.5, 0.2), c(0.5, 0.1)] {
            let fd = (b.eval(z + h) - b.eval(z - h)) / (2.0 * h);
            assert!((fd - b.derivative(z)).norm() < 1e-6);
        }
    }

    #[test]
    fn radius_examples() {
        assert!((radius_r(1.0, 0.5).unwrap() - 0.5).abs() < 1e-15);
        assert!(radius_r(1.0, 1e-9).unwrap() < 1e-8);
        let es = 0.5f64;
        let delta = 1.0 - (1.0 - es.sqrt()).powi(2) / 8.0;
        let lambda = es.sqrt() - (1.0 - es) / 4.0;
        assert!(radius_r(delta, lambda).unwrap() > 0.5);
        assert!(radius_r(0.5, 0.5).is_err());
    }

    #[test]
    fn margin_delta_above_half() {
        // delta_m = (r / lambda - lambda) / (1 - r) under the large-characteristic choice.
        for es in [0.5, 0.6, 0.8, 0.95] {
            let delta = 1.0 - (1.0 - f64::sqrt(es)).powi(2) / 8.0;
            let lambda = f64::sqrt(es) - (1.0 - es) / 4.0;
            let r = radius_r(delta, lambda).unwrap();
            assert!((r / lambda - lambda) / (1.0 - r) > 0.5);
        }
    }

    #[test]
    fn lambda_solver_matches_quadratic() {
        let nu = 2.0 - 3f64.sqrt();
        let eps_nu = (2.0 - 3f64.sqrt()).powi(3) * nu / 6.0;
        let sol = solve_lambda(1.0, nu, eps_nu).unwrap();
        assert_eq!(sol.m, 1.0);
        assert!(sol.lambda < nu);
        assert!((sol.r / (6.0 * sol.m) - eps_nu).abs() < 1e-12);
        // With delta = 1, r = lambda.
        assert!((sol.lambda - 6.0 * eps_nu).abs() < 1e-10);
        // General delta: lambda^2 - delta (1 + k) lambda + k = 0, k = 6 M eps_nu.
        let delta = 0.9;
        let sol = solve_lambda(delta, nu, eps_nu).unwrap();
        let k = 6.0 * sol.m * eps_nu;
        let b = delta * (1.0 + k);
        let root = (b - (b * b - 4.0 * k).sqrt()) / 2.0;
        assert!((sol.lambda - root).abs() < 1e-10);
        assert!((sol.r / (6.0 * sol.m) - eps_nu).abs() < 1e-12);
    }

    #[test]
    fn lambda_bracket_failure() {
        let nu = 2.0 - 3f64.sqrt();
        assert!(solve_lambda_with_constant(0.55, nu, 0.05, 10.0).is_err());
    }

    #[test]
    fn single_zero_level_set_is_disk() {
        let lc = LevelComponents::new(product(&[c(0.0, 0.0)]), 0.5).unwrap();
        assert_eq!(lc.r(), 0.5);
        let w = c(0.2, -0.3);
        assert!((lc.local_inverse(0, w).unwrap() - w).norm() < 1e-14);
        assert_eq!(lc.local_inverse(0, c(0.0, 0.0)).unwrap(), c(0.0, 0.0));
    }

    #[test]
    fn inverse_round_trip_and_containment() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = product(&[c(0.9, 0.0), c(-0.9, 0.0), c(0.0, 0.9)]);
        let delta = characteristic(b.zeros()).unwrap();
        let lambda = 0.3;
        assert!(2.0 * lambda / (1.0 + lambda * lambda) < delta);
        let lc = LevelComponents::new(b, lambda).unwrap();
        let m = interpolation_constant_bound(delta).unwrap().jones;
        for n in 0..3 {
            let zn = lc.product().zero_values()[n];
            assert_eq!(lc.local_inverse(n, c(0.0, 0.0)).unwrap(), zn);
            for _ in 0..100 {
                let w = Complex64::from_polar(lc.r() * rng.gen::<f64>().sqrt() * 0.999, rng.gen::<f64>() * 6.3);
                let z = lc.local_inverse(n, w).unwrap();
                assert!((lc.product().eval(z) - w).norm() < 1e-12);
                assert!(rho(z, zn) < lambda);
                assert_eq!(lc.component_of(z), Some(n));
            }
            // Schwarz-Pick sandwich at radius r / 6M.
            let s = lc.r() / (6.0 * m);
            for k in 0..24 {
                let w = Complex64::from_polar(s, k as f64 * 0.26);
                let z = lc.local_inverse(n, w).unwrap();
                assert!(rho(z, zn) >= s * (1.0 - 1e-12));
                assert!(rho(z, zn) < lambda / (6.0 * m));
            }
        }
    }

    #[test]
    fn components_are_separated() {
        let b = product(&[c(0.9, 0.0), c(-0.9, 0.0), c(0.0, 0.9)]);
        let lambda = 0.3;
        let lc = LevelComponents::new(b, lambda).unwrap();
        let bound = lc.delta() - 2.0 * lambda / (1.0 + lambda * lambda);
        let mut rims: Vec<Vec<Complex64>> = Vec::new();
        for n in 0..3 {
            rims.push(
                (0..40)
                    .map(|k| lc.local_inverse(n, Complex64::from_polar(0.999 * lc.r(), k as f64 * 0.157)).unwrap())
                    .collect(),
            );
        }
        for i in 0..3 {
            for j in 0..i {
                for &a in &rims[i] {
                    for &b in &rims[j] {
                        assert!(rho(a, b) >= bound);
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn derivative_product_identity(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(2..12);
            let pts: Vec<Complex64> = (0..n)
                .map(|_| Complex64::from_polar(0.95 * rng.gen::<f64>().sqrt(), rng.gen::<f64>() * 6.3))
                .collect();
            let b = product(&pts);
            for k in 0..n {
                let prod: f64 = (0..n).filter(|&j| j != k).map(|j| rho(pts[j], pts[k])).product();
                let lhs = (1.0 - pts[k].norm_sqr()) * b.derivative(pts[k]).norm();
                prop_assert!((lhs - prod).abs() <= 1e-10 * prod.max(1e-300));
            }
        }
    }
}
