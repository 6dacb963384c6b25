//! Pseudohyperbolic geometry of the unit disk: the metric, disk automorphisms,
//! pseudohyperbolic disks and their neighbourhoods.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points this close to the unit circle are refused: every formula downstream
/// divides by `1 - |z|^2`.
pub const BOUNDARY_GUARD: f64 = 1e-12;

/// A point of the open unit disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct DiskPoint(Complex64);

impl DiskPoint {
    pub fn new(z: Complex64) -> Result<Self> {
        if !z.re.is_finite() || !z.im.is_finite() {
            return Err(Error::invalid(format!("non-finite point {z}")));
        }
        if z.norm() >= 1.0 - BOUNDARY_GUARD {
            return Err(Error::invalid(format!(
                "point {z} is not strictly inside the unit disk"
            )));
        }
        Ok(DiskPoint(z))
    }

    pub fn from_parts(re: f64, im: f64) -> Result<Self> {
        Self::new(Complex64::new(re, im))
    }

    pub fn value(self) -> Complex64 {
        self.0
    }

    pub fn origin() -> Self {
        DiskPoint(Complex64::new(0.0, 0.0))
    }
}

impl TryFrom<[f64; 2]> for DiskPoint {
    type Error = Error;
    fn try_from(p: [f64; 2]) -> Result<Self> {
        DiskPoint::from_parts(p[0], p[1])
    }
}

impl From<DiskPoint> for [f64; 2] {
    fn from(p: DiskPoint) -> Self {
        [p.0.re, p.0.im]
    }
}

impl From<DiskPoint> for Complex64 {
    fn from(p: DiskPoint) -> Self {
        p.0
    }
}

/// `|(z - w) / (1 - conj(w) z)|` on raw complex numbers.
#[inline]
pub fn rho(z: Complex64, w: Complex64) -> f64 {
    let num = z - w;
    if num.re == 0.0 && num.im == 0.0 {
        return 0.0;
    }
    (num / (Complex64::new(1.0, 0.0) - w.conj() * z)).norm()
}

pub fn pseudo_distance(z: DiskPoint, w: DiskPoint) -> f64 {
    rho(z.0, w.0)
}

/// The automorphism `w -> (w + c) / (1 + conj(c) w)`, sending 0 to `c`.
#[inline]
pub fn shift(c: Complex64, w: Complex64) -> Complex64 {
    (w + c) / (Complex64::new(1.0, 0.0) + c.conj() * w)
}

/// Inverse of [`shift`]: `z -> (z - c) / (1 - conj(c) z)`.
#[inline]
pub fn unshift(c: Complex64, z: Complex64) -> Complex64 {
    (z - c) / (Complex64::new(1.0, 0.0) - c.conj() * z)
}

pub fn mobius_shift(center: DiskPoint, w: DiskPoint) -> DiskPoint {
    DiskPoint(shift(center.0, w.0))
}

pub fn mobius_inverse(center: DiskPoint, z: DiskPoint) -> DiskPoint {
    DiskPoint(unshift(center.0, z.0))
}

/// Pseudohyperbolic sum `(a + b) / (1 + ab)`: the radius reached by going
/// `a` then `b` in the metric.
#[inline]
pub fn rho_add(a: f64, b: f64) -> f64 {
    (a + b) / (1.0 + a * b)
}

/// Pseudohyperbolic difference `(a - b) / (1 - ab)`, clamped at zero.
#[inline]
pub fn rho_sub(a: f64, b: f64) -> f64 {
    ((a - b) / (1.0 - a * b)).max(0.0)
}

/// `D(center, radius) = { z : rho(z, center) < radius }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoDisk {
    pub center: DiskPoint,
    pub radius: f64,
}

impl PseudoDisk {
    pub fn new(center: DiskPoint, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius < 1.0) {
            return Err(Error::invalid(format!(
                "pseudohyperbolic radius {radius} outside (0, 1)"
            )));
        }
        Ok(PseudoDisk { center, radius })
    }

    #[inline]
    pub fn contains(&self, z: Complex64) -> bool {
        rho(z, self.center.0) < self.radius
    }

    /// The same set as a Euclidean disk: (center, radius).
    pub fn euclidean(&self) -> (Complex64, f64) {
        let z0 = self.center.0;
        let t = self.radius;
        let a = z0.norm_sqr();
        let denom = 1.0 - t * t * a;
        (z0 * ((1.0 - t * t) / denom), t * (1.0 - a) / denom)
    }

    pub fn hyperbolic_area(&self) -> f64 {
        hyperbolic_area(self.radius)
    }
}

/// Area of `D(x, s)` for the invariant form `dA / (1 - |z|^2)^2`.
pub fn hyperbolic_area(s: f64) -> f64 {
    std::f64::consts::PI * s * s / (1.0 - s * s)
}

/// The open neighbourhood `{ y : inf_{z in S} rho(y, z) < nu }` of a finite
/// union of pseudohyperbolic disks (points are disks of radius zero).
#[derive(Debug, Clone)]
pub struct Neighbourhood {
    base: Vec<(Complex64, f64)>,
    nu: f64,
}

impl Neighbourhood {
    pub fn of_disks(disks: &[PseudoDisk], nu: f64) -> Result<Self> {
        check_nu(nu)?;
        Ok(Neighbourhood {
            base: disks.iter().map(|d| (d.center.0, d.radius)).collect(),
            nu,
        })
    }

    pub fn of_points(points: &[DiskPoint], nu: f64) -> Result<Self> {
        check_nu(nu)?;
        Ok(Neighbourhood {
            base: points.iter().map(|p| (p.0, 0.0)).collect(),
            nu,
        })
    }

    /// The distance from `y` to `D(c, r)` is `rho_sub(rho(y, c), r)`, so `y`
    /// is within `nu` of that disk iff `rho(y, c) < rho_add(r, nu)`.
    pub fn contains(&self, y: Complex64) -> bool {
        self.base
            .iter()
            .any(|&(c, r)| rho(y, c) < rho_add(r, self.nu))
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }
}

fn check_nu(nu: f64) -> Result<()> {
    if nu > 0.0 && nu < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("neighbourhood radius {nu} outside (0, 1)")))
    }
}

pub fn neighbourhood_contains(n: &Neighbourhood, z: DiskPoint) -> bool {
    n.contains(z.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn p(re: f64, im: f64) -> DiskPoint {
        DiskPoint::from_parts(re, im).unwrap()
    }

    #[test]
    fn rejects_boundary_and_nan() {
        assert!(DiskPoint::from_parts(1.0, 0.0).is_err());
        assert!(DiskPoint::from_parts(0.0, 1.0 - 1e-13).is_err());
        assert!(DiskPoint::from_parts(f64::NAN, 0.0).is_err());
        assert!(DiskPoint::from_parts(0.0, 1.0 - 1e-9).is_ok());
    }

    #[test]
    fn distance_examples() {
        assert_eq!(pseudo_distance(p(0.0, 0.0), p(0.5, 0.0)), 0.5);
        assert_eq!(pseudo_distance(p(0.3, 0.2), p(0.3, 0.2)), 0.0);
        assert!((pseudo_distance(p(0.5, 0.0), p(-0.5, 0.0)) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn shift_examples() {
        assert_eq!(mobius_shift(p(0.3, 0.0), p(0.0, 0.0)).value(), c(0.3, 0.0));
        assert!((mobius_shift(p(0.5, 0.0), p(0.5, 0.0)).value() - c(0.8, 0.0)).norm() < 1e-15);
        assert!(mobius_inverse(p(0.3, 0.0), p(0.3, 0.0)).value().norm() < 1e-15);
        assert!((mobius_inverse(p(0.5, 0.0), p(0.8, 0.0)).value() - c(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn area_examples() {
        assert!((hyperbolic_area(1.0 / 2f64.sqrt()) - std::f64::consts::PI).abs() < 1e-14);
        assert!(hyperbolic_area(1e-9) < 1e-17);
    }

    #[test]
    fn area_matches_density_integral() {
        // Midpoint rule over the Euclidean image of D(0.4, 0.3).
        let d = PseudoDisk::new(p(0.4, 0.0), 0.3).unwrap();
        let (ec, er) = d.euclidean();
        let n = 400;
        let mut sum = 0.0;
        for i in 0..n {
            let r = (i as f64 + 0.5) * er / n as f64;
            for j in 0..n {
                let t = (j as f64 + 0.5) * std::f64::consts::TAU / n as f64;
                let z = ec + Complex64::from_polar(r, t);
                let w = 1.0 - z.norm_sqr();
                sum += r / (w * w);
            }
        }
        sum *= (er / n as f64) * (std::f64::consts::TAU / n as f64);
        let exact = d.hyperbolic_area();
        assert!((sum - exact).abs() / exact < 1e-2, "{sum} vs {exact}");
    }

    #[test]
    fn euclidean_image_boundary_is_level_set() {
        let d = PseudoDisk::new(p(0.6, -0.2), 0.35).unwrap();
        let (ec, er) = d.euclidean();
        for k in 0..16 {
            let z = ec + Complex64::from_polar(er, k as f64 * 0.4);
            assert!((rho(z, d.center.value()) - 0.35).abs() < 1e-12);
        }
    }

    #[test]
    fn neighbourhood_examples() {
        let n = Neighbourhood::of_points(&[p(0.0, 0.0)], 0.5).unwrap();
        assert!(neighbourhood_contains(&n, p(0.3, 0.0)));
        assert!(!neighbourhood_contains(&n, p(0.6, 0.0)));
        let n = Neighbourhood::of_points(&[p(0.0, 0.0), p(0.9, 0.0)], 0.2).unwrap();
        assert!(!neighbourhood_contains(&n, p(0.85, 0.0)));
    }

    #[test]
    fn neighbourhood_of_disk_is_larger_disk() {
        let d = PseudoDisk::new(p(0.2, 0.1), 0.3).unwrap();
        let n = Neighbourhood::of_disks(&[d], 0.2).unwrap();
        let r = rho_add(0.3, 0.2);
        let inner = shift(d.center.value(), c(r * 0.999, 0.0));
        let outer = shift(d.center.value(), c(r * 1.001, 0.0));
        assert!(n.contains(inner));
        assert!(!n.contains(outer));
    }

    fn disk_point() -> impl Strategy<Value = Complex64> {
        (0.0..0.98f64, 0.0..std::f64::consts::TAU).prop_map(|(r, t)| Complex64::from_polar(r, t))
    }

    proptest! {
        #[test]
        fn metric_is_symmetric_and_bounded(z in disk_point(), w in disk_point()) {
            let a = rho(z, w);
            prop_assert!((a - rho(w, z)).abs() < 1e-14);
            prop_assert!((0.0..1.0).contains(&a));
        }

        #[test]
        fn shift_is_isometry(cc in disk_point(), u in disk_point(), v in disk_point()) {
            let lhs = rho(shift(cc, u), shift(cc, v));
            prop_assert!((lhs - rho(u, v)).abs() < 1e-12 * (1.0 + 1.0 / (1.0 - rho(u, v))));
        }

        #[test]
        fn unshift_inverts_shift(cc in disk_point(), z in disk_point()) {
            prop_assert!((shift(cc, unshift(cc, z)) - z).norm() < 1e-12);
        }

        #[test]
        fn strong_triangle_inequality(x in disk_point(), y in disk_point(), z in disk_point()) {
            let bound = rho_add(rho(x, y), rho(y, z));
            prop_assert!(rho(x, z) <= bound + 1e-12);
        }
    }
}
