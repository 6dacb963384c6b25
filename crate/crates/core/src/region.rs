//! Sets `K` given as finite unions of pseudohyperbolic disks, with exact
//! membership, plus the restrictions and first-cover-wins exclusions used to
//! split them among operator parts.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rho, rho_add, shift, DiskPoint};
use crate::sequence::FiniteSequence;

/// `K = union of D(anchor_j, radius_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub anchors: FiniteSequence,
    pub radii: Vec<f64>,
}

impl RegionSpec {
    pub fn new(anchors: FiniteSequence, radii: Vec<f64>) -> Result<Self> {
        if anchors.is_empty() {
            return Err(Error::invalid("region needs at least one anchor"));
        }
        if radii.len() != anchors.len() {
            return Err(Error::invalid(format!(
                "{} radii for {} anchors",
                radii.len(),
                anchors.len()
            )));
        }
        if let Some(r) = radii.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
            return Err(Error::invalid(format!(
                "anchor radius {r} outside (0, 1); sets of measure zero are not supported"
            )));
        }
        Ok(RegionSpec { anchors, radii })
    }

    pub fn uniform(anchors: FiniteSequence, radius: f64) -> Result<Self> {
        let n = anchors.len();
        Self::new(anchors, vec![radius; n])
    }

    pub fn disks(&self) -> DiskUnion {
        DiskUnion::new(
            self.anchors
                .points()
                .iter()
                .zip(&self.radii)
                .map(|(a, &r)| (a.value(), r))
                .collect(),
        )
    }

    pub fn region(&self) -> Region {
        Region::new(self.disks())
    }

    pub fn max_radius(&self) -> f64 {
        self.radii.iter().copied().fold(0.0, f64::max)
    }
}

/// A finite union of open pseudohyperbolic disks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiskUnion {
    disks: Vec<(Complex64, f64)>,
}

impl DiskUnion {
    pub fn new(disks: Vec<(Complex64, f64)>) -> Self {
        DiskUnion { disks }
    }

    pub fn of_points(points: &[Complex64], radius: f64) -> Self {
        DiskUnion::new(points.iter().map(|&p| (p, radius)).collect())
    }

    pub fn disks(&self) -> &[(Complex64, f64)] {
        &self.disks
    }

    pub fn contains(&self, z: Complex64) -> bool {
        self.disks.iter().any(|&(c, r)| rho(z, c) < r)
    }

    /// Membership in the open `nu`-neighbourhood of the union.
    pub fn neighbourhood_contains(&self, z: Complex64, nu: f64) -> bool {
        self.disks.iter().any(|&(c, r)| rho(z, c) < rho_add(r, nu))
    }

    /// A radius `t <= cap` with `self ∩ D(c, cap) ⊂ D(c, t)`.
    pub fn enclosing_radius(&self, c: Complex64, cap: f64) -> f64 {
        let mut t: f64 = 0.0;
        for &(a, r) in &self.disks {
            let d = rho(c, a);
            if d < rho_add(cap, r) {
                t = t.max(rho_add(d, r));
            }
        }
        t.min(cap)
    }
}

/// `base ∩ restrict_1 ∩ ... \ (exclude_1 ∪ ...)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    base: DiskUnion,
    restrict: Vec<DiskUnion>,
    exclude: Vec<DiskUnion>,
}

impl Region {
    pub fn new(base: DiskUnion) -> Self {
        Region { base, restrict: Vec::new(), exclude: Vec::new() }
    }

    pub fn base(&self) -> &DiskUnion {
        &self.base
    }

    pub fn restricted_to(&self, u: DiskUnion) -> Region {
        let mut r = self.clone();
        r.restrict.push(u);
        r
    }

    pub fn excluding(&self, u: DiskUnion) -> Region {
        let mut r = self.clone();
        r.exclude.push(u);
        r
    }

    pub fn contains(&self, z: Complex64) -> bool {
        self.base.contains(z)
            && self.restrict.iter().all(|u| u.contains(z))
            && !self.exclude.iter().any(|u| u.contains(z))
    }

    /// A radius `t <= cap` such that the part of the region inside
    /// `D(c, cap)` lies in `D(c, t)`.
    pub fn enclosing_radius(&self, c: Complex64, cap: f64) -> f64 {
        self.restrict
            .iter()
            .fold(self.base.enclosing_radius(c, cap), |t, u| t.min(u.enclosing_radius(c, cap)))
    }

    /// Deterministic points of the region: for each base disk, a polar grid
    /// in the chart centred at its anchor, kept where the region holds.
    pub fn sample(&self, rings: usize, per_ring: usize) -> Vec<Complex64> {
        let mut out = Vec::new();
        for &(a, r) in self.base.disks() {
            for i in 0..rings {
                let t = r * (i as f64 + 0.5) / rings as f64;
                let count = (per_ring as f64 * (i as f64 + 0.5) / rings as f64).ceil().max(3.0) as usize;
                for j in 0..count {
                    let w = Complex64::from_polar(t, (j as f64 + 0.5 * (i % 2) as f64) * TAU / count as f64);
                    let z = shift(a, w);
                    if self.contains(z) {
                        out.push(z);
                    }
                }
            }
        }
        out
    }

    /// Candidates for an `eps`-chain of the region: a hexagonal lattice with
    /// spacing just over `eps` in each anchor chart (separated and, away from
    /// the edge, covering), followed by a finer sample that fills gaps near
    /// the boundary once fed to a greedy chain.
    pub fn chain_candidates(&self, eps: f64) -> Vec<DiskPoint> {
        let mut out = Vec::new();
        for &(a, r) in self.base.disks() {
            let h = eps * (1.0 + r * r) * (1.0 + 1e-9);
            let rows = (r / (h * 0.75f64.sqrt())).ceil() as i64 + 1;
            let cols = (r / h).ceil() as i64 + 1;
            for p in -rows..=rows {
                for q in -cols..=cols {
                    let x = (q as f64 + 0.5 * (p.rem_euclid(2)) as f64) * h;
                    let y = p as f64 * h * 0.75f64.sqrt();
                    let w = Complex64::new(x, y);
                    if w.norm() < r {
                        push_point(&mut out, shift(a, w), self);
                    }
                }
            }
        }
        let rings = ((4.0 * self.base.disks().iter().map(|d| d.1).fold(0.0, f64::max) / eps).ceil() as usize).clamp(4, 400);
        for z in self.sample(rings, 8 * rings) {
            push_point(&mut out, z, self);
        }
        out
    }
}

fn push_point(out: &mut Vec<DiskPoint>, z: Complex64, region: &Region) {
    if region.contains(z) {
        if let Ok(p) = DiskPoint::new(z) {
            out.push(p);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::greedy_chain;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn spec() -> RegionSpec {
        RegionSpec::uniform(FiniteSequence::from_complex(&[c(0.9, 0.0), c(-0.9, 0.0)]).unwrap(), 0.01).unwrap()
    }

    #[test]
    fn membership_is_exact() {
        let k = spec().region();
        assert!(k.contains(c(0.9, 0.0)));
        assert!(k.contains(shift(c(0.9, 0.0), c(0.0099, 0.0))));
        assert!(!k.contains(shift(c(0.9, 0.0), c(0.0101, 0.0))));
        assert!(!k.contains(c(0.0, 0.0)));
        let right = k.excluding(DiskUnion::of_points(&[c(-0.9, 0.0)], 0.5));
        assert!(!right.contains(c(-0.9, 0.0)));
        assert!(right.contains(c(0.9, 0.0)));
    }

    #[test]
    fn rejects_degenerate_radii() {
        let a = FiniteSequence::from_complex(&[c(0.0, 0.0)]).unwrap();
        assert!(RegionSpec::new(a.clone(), vec![0.0]).is_err());
        assert!(RegionSpec::new(a, vec![0.1, 0.2]).is_err());
    }

    #[test]
    fn enclosing_radius_contains_samples() {
        let k = spec().region();
        let centre = shift(c(0.9, 0.0), c(0.004, 0.002));
        let t = k.enclosing_radius(centre, 0.5);
        assert!(t <= 0.5 && t > 0.0);
        for z in k.sample(20, 60) {
            if rho(z, centre) < 0.5 {
                assert!(rho(z, centre) < t);
            }
        }
    }

    #[test]
    fn chain_covers_samples() {
        let k = spec().region();
        let eps = 0.003;
        let chain = greedy_chain(&k.chain_candidates(eps), eps).unwrap();
        let pts = chain.values();
        for z in k.sample(30, 120) {
            assert!(pts.iter().any(|&p| rho(p, z) < eps));
        }
        for (i, &p) in pts.iter().enumerate() {
            assert!(k.contains(p));
            for &q in &pts[..i] {
                assert!(rho(p, q) >= eps);
            }
        }
    }

    #[test]
    fn neighbourhood() {
        let u = DiskUnion::of_points(&[c(0.0, 0.0)], 0.1);
        assert!(u.neighbourhood_contains(c(0.25, 0.0), 0.2));
        assert!(!u.neighbourhood_contains(c(0.35, 0.0), 0.2));
    }
}
