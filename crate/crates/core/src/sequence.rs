//! Finite sequences in the disk: the Carleson characteristic, interpolation
//! constant bounds, greedy chains and the splittings used to raise the
//! characteristic of the parts.

use std::f64::consts::E;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rho, DiskPoint};

/// An ordered list of pairwise distinct disk points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<DiskPoint>", into = "Vec<DiskPoint>")]
pub struct FiniteSequence {
    points: Vec<DiskPoint>,
}

impl FiniteSequence {
    pub fn new(points: Vec<DiskPoint>) -> Result<Self> {
        for i in 0..points.len() {
            for j in 0..i {
                if points[i] == points[j] {
                    return Err(Error::invalid(format!(
                        "duplicate point {} at positions {j} and {i}",
                        points[i].value()
                    )));
                }
            }
        }
        Ok(FiniteSequence { points })
    }

    pub fn from_complex(points: &[Complex64]) -> Result<Self> {
        let pts = points
            .iter()
            .map(|&z| DiskPoint::new(z))
            .collect::<Result<Vec<_>>>()?;
        Self::new(pts)
    }

    pub fn empty() -> Self {
        FiniteSequence { points: Vec::new() }
    }

    pub fn points(&self) -> &[DiskPoint] {
        &self.points
    }

    pub fn values(&self) -> Vec<Complex64> {
        self.points.iter().map(|p| p.value()).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Subsequence by indices, in the given order.
    pub fn select(&self, idx: &[usize]) -> FiniteSequence {
        FiniteSequence {
            points: idx.iter().map(|&i| self.points[i]).collect(),
        }
    }

    pub fn characteristic(&self) -> Result<f64> {
        characteristic(self)
    }
}

impl TryFrom<Vec<DiskPoint>> for FiniteSequence {
    type Error = Error;
    fn try_from(v: Vec<DiskPoint>) -> Result<Self> {
        FiniteSequence::new(v)
    }
}

impl From<FiniteSequence> for Vec<DiskPoint> {
    fn from(s: FiniteSequence) -> Self {
        s.points
    }
}

/// `ln rho(z_i, z_j)` for all pairs; the diagonal is zero.
fn log_rho_matrix(z: &[Complex64]) -> Vec<Vec<f64>> {
    let n = z.len();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..i {
            let v = rho(z[i], z[j]).ln();
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    m
}

/// `min_k prod_{j != k} rho(z_j, z_k)`, accumulated in logarithms.
pub fn characteristic(seq: &FiniteSequence) -> Result<f64> {
    if seq.is_empty() {
        return Err(Error::invalid("characteristic of an empty sequence"));
    }
    let z = seq.values();
    Ok(characteristic_of(&z))
}

pub(crate) fn characteristic_of(z: &[Complex64]) -> f64 {
    let mut worst = 0.0f64;
    for k in 0..z.len() {
        let s: f64 = (0..z.len())
            .filter(|&j| j != k)
            .map(|j| rho(z[j], z[k]).ln())
            .sum();
        worst = worst.min(s);
    }
    worst.exp()
}

/// `min_n (1 - |z_n|^2) |B'(z_n)|` for the Blaschke product with these zeros.
pub fn characteristic_via_blaschke(seq: &FiniteSequence) -> Result<f64> {
    if seq.is_empty() {
        return Err(Error::invalid("characteristic of an empty sequence"));
    }
    let b = crate::blaschke::BlaschkeProduct::new(seq.clone());
    let mut worst = f64::INFINITY;
    for p in seq.points() {
        let z = p.value();
        let v = (1.0 - z.norm_sqr()) * b.derivative(z).norm();
        worst = worst.min(v);
    }
    Ok(worst)
}

/// Upper bounds for the constant of interpolation in terms of the
/// characteristic, plus the trivial lower bound `1/delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpolationBounds {
    pub delta: f64,
    /// `(2e / delta) ln(e / delta^2)`.
    pub jones: f64,
    /// `((1 + sqrt(1 - delta^2)) / delta)^2`.
    pub earl: f64,
    pub upper: f64,
    pub lower: f64,
}

pub fn interpolation_constant_bound(delta: f64) -> Result<InterpolationBounds> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid(format!("characteristic {delta} outside (0, 1]")));
    }
    let jones = 2.0 * E / delta * (E / (delta * delta)).ln();
    let earl = ((1.0 + (1.0 - delta * delta).max(0.0).sqrt()) / delta).powi(2);
    Ok(InterpolationBounds {
        delta,
        jones,
        earl,
        upper: jones.min(earl),
        lower: 1.0 / delta,
    })
}

/// Scan candidates in order, keeping a point iff it is at distance at least
/// `eps` from every point kept so far.
pub fn greedy_chain(candidates: &[DiskPoint], eps: f64) -> Result<FiniteSequence> {
    check_unit("chain separation", eps)?;
    let mut kept: Vec<DiskPoint> = Vec::new();
    for &c in candidates {
        if kept.iter().all(|k| rho(k.value(), c.value()) >= eps) {
            kept.push(c);
        }
    }
    Ok(FiniteSequence { points: kept })
}

/// Cardinality bounds for an `l`-chain of a pseudohyperbolic disk of radius `r`.
pub fn chain_count_bounds(r: f64, l: f64) -> Result<(f64, f64)> {
    check_unit("disk radius", r)?;
    check_unit("chain separation", l)?;
    let lower = r * r * (1.0 - l * l) / ((1.0 - r * r) * l * l);
    let upper = (2.0 * r + l).powi(2) / ((1.0 - r * r) * l * l);
    Ok((lower, upper))
}

/// Worst-case count of refinement points in one `D(z, eps)` cell.
pub fn refinement_count_bound(eps: f64, eps_nu: f64) -> f64 {
    (2.0 * eps + eps_nu).powi(2) / (eps_nu * eps_nu * (1.0 - eps * eps))
}

fn check_unit(what: &str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} {x} outside (0, 1)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionKind {
    Refinement,
    DeltaBoost,
}

/// A partition of a sequence into disjoint parts, with indices into it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainPartition {
    pub kind: PartitionKind,
    pub parts: Vec<FiniteSequence>,
    pub indices: Vec<Vec<usize>>,
    /// Largest number of points of the partitioned sequence in a single cell
    /// (refinement) or zero (delta boost).
    pub max_multiplicity: usize,
    /// `min_j delta(part_j)` (delta boost) or zero (refinement).
    pub certificate: f64,
}

impl ChainPartition {
    fn from_labels(seq: &FiniteSequence, labels: &[usize], kind: PartitionKind) -> Self {
        let count = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut indices = vec![Vec::new(); count];
        for (i, &l) in labels.iter().enumerate() {
            indices[l].push(i);
        }
        let parts = indices.iter().map(|ix| seq.select(ix)).collect();
        ChainPartition {
            kind,
            parts,
            indices,
            max_multiplicity: 0,
            certificate: 0.0,
        }
    }
}

/// Split a refinement chain `zeta_nu` into parts meeting every `D(z, eps)`,
/// `z` in `zeta`, at most once.  Greedy colouring in input order: each point
/// takes the smallest part index not already used inside one of its cells.
pub fn refine_partition(
    zeta: &FiniteSequence,
    zeta_nu: &FiniteSequence,
    eps: f64,
) -> Result<ChainPartition> {
    check_unit("chain separation", eps)?;
    let coarse = zeta.values();
    let fine = zeta_nu.values();
    let cells_of: Vec<Vec<usize>> = fine
        .iter()
        .map(|&w| {
            (0..coarse.len())
                .filter(|&c| rho(w, coarse[c]) < eps)
                .collect()
        })
        .collect();
    if let Some(i) = cells_of.iter().position(|c| c.is_empty()) {
        return Err(Error::precondition(
            "refinement of an eps-chain",
            format!("refinement point {} is not within {eps} of the chain", fine[i]),
        ));
    }
    let mut used: Vec<Vec<usize>> = vec![Vec::new(); coarse.len()];
    let mut labels = Vec::with_capacity(fine.len());
    for cells in &cells_of {
        let mut label = 0;
        while cells.iter().any(|&c| used[c].contains(&label)) {
            label += 1;
        }
        for &c in cells {
            used[c].push(label);
        }
        labels.push(label);
    }
    let mut part = ChainPartition::from_labels(zeta_nu, &labels, PartitionKind::Refinement);
    part.max_multiplicity = used.iter().map(Vec::len).max().unwrap_or(0);
    Ok(part)
}

/// Largest sequence length searched exhaustively by [`split_sqrt_delta`].
pub const EXHAUSTIVE_SPLIT_LIMIT: usize = 18;

/// Split into two parts, each with characteristic at least `sqrt(delta)`.
///
/// Up to [`EXHAUSTIVE_SPLIT_LIMIT`] points every bipartition is tried (point 0
/// always in the first part) and the one maximising the smaller part
/// characteristic wins; ties go to the smallest membership bitmask.  Longer
/// sequences use a local max-cut followed by single-point improving moves,
/// and the certificate is checked before returning.
pub fn split_sqrt_delta(seq: &FiniteSequence) -> Result<ChainPartition> {
    let n = seq.len();
    if n < 2 {
        return Err(Error::invalid("splitting needs at least two points"));
    }
    let z = seq.values();
    let lr = log_rho_matrix(&z);
    let log_delta = (0..n)
        .map(|k| lr[k].iter().sum::<f64>())
        .fold(0.0f64, f64::min);
    let labels = if n <= EXHAUSTIVE_SPLIT_LIMIT {
        exhaustive_split(&lr)
    } else {
        local_search_split(&lr)
    };
    let score = split_score(&lr, &labels);
    // The certificate is delta(part) >= sqrt(delta); compare in logs with a
    // rounding allowance.
    if score < 0.5 * log_delta - 1e-12 * (1.0 + log_delta.abs()) {
        return Err(Error::numerical(format!(
            "no bipartition certifying sqrt(delta) found for {n} points \
             (best ln-characteristic {score}, needed {})",
            0.5 * log_delta
        )));
    }
    let labels: Vec<usize> = labels.iter().map(|&b| b as usize).collect();
    let mut part = ChainPartition::from_labels(seq, &labels, PartitionKind::DeltaBoost);
    part.certificate = score.exp();
    Ok(part)
}

/// `min` over both parts of the part's log-characteristic (singletons give 0).
fn split_score(lr: &[Vec<f64>], side: &[bool]) -> f64 {
    let n = lr.len();
    let mut worst = 0.0f64;
    for k in 0..n {
        let s: f64 = (0..n).filter(|&j| side[j] == side[k]).map(|j| lr[k][j]).sum();
        worst = worst.min(s);
    }
    worst
}

fn exhaustive_split(lr: &[Vec<f64>]) -> Vec<bool> {
    let n = lr.len();
    let mut best_mask = 0u32;
    let mut best = f64::NEG_INFINITY;
    let full = 1u32 << (n - 1);
    let mut side = vec![false; n];
    // Bit i-1 of the mask puts point i in the second part; mask 0 and the
    // all-ones mask would leave a part empty.
    for mask in 1..full {
        for (i, s) in side.iter_mut().enumerate().skip(1) {
            *s = mask & (1 << (i - 1)) != 0;
        }
        let score = split_score(lr, &side);
        if score > best {
            best = score;
            best_mask = mask;
        }
    }
    if n == 2 {
        best_mask = 1;
    }
    (0..n)
        .map(|i| i > 0 && best_mask & (1 << (i - 1)) != 0)
        .collect()
}

/// Local max-cut on the weights `-ln rho`: moving a point whenever its
/// same-side weight exceeds its cross weight terminates with every point
/// keeping at most half its total weight on its own side, which is already
/// the `sqrt(delta)` certificate.  Improving moves on the actual objective
/// follow.
fn local_search_split(lr: &[Vec<f64>]) -> Vec<bool> {
    let n = lr.len();
    let mut side: Vec<bool> = (0..n).map(|i| i % 2 == 1).collect();
    loop {
        let mut moved = false;
        for k in 0..n {
            let (same, other) = (0..n).filter(|&j| j != k).fold((0.0, 0.0), |(s, o), j| {
                if side[j] == side[k] {
                    (s - lr[k][j], o)
                } else {
                    (s, o - lr[k][j])
                }
            });
            if same > other + 1e-15 {
                side[k] = !side[k];
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    let mut best = split_score(lr, &side);
    loop {
        let mut improved = false;
        for k in 0..n {
            side[k] = !side[k];
            let nonempty = side.iter().any(|&s| s) && side.iter().any(|&s| !s);
            let score = split_score(lr, &side);
            if nonempty && score > best + 1e-15 {
                best = score;
                improved = true;
            } else {
                side[k] = !side[k];
            }
        }
        if !improved {
            break;
        }
    }
    side
}

/// `eps_* = max(1/2, eps)`.
pub fn eps_star(eps: f64) -> f64 {
    eps.max(0.5)
}

/// The characteristic above which no splitting is needed:
/// `1 - (1 - sqrt(eps_*))^2 / 8`.
pub fn large_characteristic_threshold(eps: f64) -> f64 {
    let s = eps_star(eps).sqrt();
    1.0 - (1.0 - s) * (1.0 - s) / 8.0
}

/// Least `l` with `delta^(1/2^l)` at or above the large-characteristic
/// threshold.
pub fn split_depth(delta: f64, eps: f64) -> Result<u32> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid(format!("characteristic {delta} outside (0, 1]")));
    }
    check_unit("chain separation", eps)?;
    let t = large_characteristic_threshold(eps);
    if delta > t {
        return Ok(0);
    }
    let ratio = delta.ln() / t.ln();
    let mut l = 0u32;
    while (1u64 << l) as f64 * (1.0 + 1e-14) < ratio {
        l += 1;
    }
    Ok(l)
}

/// Apply [`split_sqrt_delta`] recursively `depth` times.  Parts that are
/// singletons or already have characteristic at least `target` are not
/// split further.  Returns index lists into `seq`.
pub fn split_recursive(seq: &FiniteSequence, depth: u32, target: f64) -> Result<Vec<Vec<usize>>> {
    let mut parts: Vec<Vec<usize>> = vec![(0..seq.len()).collect()];
    for _ in 0..depth {
        let mut next = Vec::new();
        for ix in parts {
            let sub = seq.select(&ix);
            if ix.len() < 2 || characteristic(&sub)? >= target {
                next.push(ix);
                continue;
            }
            let split = split_sqrt_delta(&sub)?;
            for part in split.indices {
                next.push(part.iter().map(|&k| ix[k]).collect());
            }
        }
        parts = next;
    }
    Ok(parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seq(pts: &[(f64, f64)]) -> FiniteSequence {
        FiniteSequence::from_complex(
            &pts.iter().map(|&(a, b)| Complex64::new(a, b)).collect::<Vec<_>>(),
        )
        .unwrap()
    }

    fn random_seq(rng: &mut ChaCha8Rng, n: usize, rmax: f64) -> FiniteSequence {
        let pts: Vec<Complex64> = (0..n)
            .map(|_| {
                Complex64::from_polar(
                    rmax * rng.gen::<f64>().sqrt(),
                    rng.gen::<f64>() * std::f64::consts::TAU,
                )
            })
            .collect();
        FiniteSequence::from_complex(&pts).unwrap()
    }

    #[test]
    fn characteristic_examples() {
        assert_eq!(characteristic(&seq(&[(0.3, 0.0)])).unwrap(), 1.0);
        assert!((characteristic(&seq(&[(0.0, 0.0), (0.5, 0.0)])).unwrap() - 0.5).abs() < 1e-15);
        let d = characteristic(&seq(&[(0.0, 0.0), (0.5, 0.0), (-0.5, 0.0)])).unwrap();
        assert!((d - 0.25).abs() < 1e-15);
        assert!(characteristic(&FiniteSequence::empty()).is_err());
    }

    #[test]
    fn duplicates_rejected() {
        let p = DiskPoint::from_parts(0.1, 0.2).unwrap();
        assert!(FiniteSequence::new(vec![p, p]).is_err());
    }

    #[test]
    fn derivative_form_agrees() {
        assert!((characteristic_via_blaschke(&seq(&[(0.3, 0.0)])).unwrap() - 1.0).abs() < 1e-15);
        let two = characteristic_via_blaschke(&seq(&[(0.0, 0.0), (0.5, 0.0)])).unwrap();
        assert!((two - 0.5).abs() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let s = random_seq(&mut rng, 10, 0.95);
            let a = characteristic(&s).unwrap();
            let b = characteristic_via_blaschke(&s).unwrap();
            assert!((a - b).abs() <= 1e-10 * a, "{a} vs {b}");
        }
    }

    #[test]
    fn bounds_examples() {
        let b = interpolation_constant_bound(0.5).unwrap();
        assert!((b.earl - (2.0 + 3f64.sqrt()).powi(2)).abs() < 1e-12);
        assert!((b.earl - 13.9282).abs() < 1e-4);
        assert_eq!(b.upper, b.earl);
        let one = interpolation_constant_bound(1.0).unwrap();
        assert_eq!(one.earl, 1.0);
        assert!((one.jones - 2.0 * E).abs() < 1e-14);
        assert_eq!(one.lower, 1.0);
        assert!(interpolation_constant_bound(0.0).is_err());
    }

    #[test]
    fn greedy_examples() {
        let c = |x: f64| DiskPoint::from_parts(x, 0.0).unwrap();
        assert_eq!(greedy_chain(&[c(0.0), c(0.5)], 0.6).unwrap().len(), 1);
        assert_eq!(greedy_chain(&[c(0.0), c(0.5)], 0.4).unwrap().len(), 2);
        assert!(greedy_chain(&[], 0.4).unwrap().is_empty());
    }

    #[test]
    fn greedy_is_separated_and_maximal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cands: Vec<DiskPoint> = random_seq(&mut rng, 400, 0.9).points().to_vec();
        let chain = greedy_chain(&cands, 0.3).unwrap();
        let v = chain.values();
        for i in 0..v.len() {
            for j in 0..i {
                assert!(rho(v[i], v[j]) >= 0.3);
            }
        }
        for c in &cands {
            assert!(v.iter().any(|&k| rho(k, c.value()) < 0.3));
        }
    }

    #[test]
    fn count_bound_examples() {
        let (lo, hi) = chain_count_bounds(0.5, 0.5).unwrap();
        assert!((lo - 1.0).abs() < 1e-14 && (hi - 12.0).abs() < 1e-13);
        let (lo, hi) = chain_count_bounds(0.5, 0.25).unwrap();
        assert!((lo - 5.0).abs() < 1e-13 && (hi - 100.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn refine_identity_is_one_part() {
        let s = seq(&[(0.0, 0.0), (0.5, 0.0), (-0.3, 0.4)]);
        let p = refine_partition(&s, &s, 0.2).unwrap();
        assert_eq!(p.parts.len(), 1);
        assert_eq!(p.max_multiplicity, 1);
    }

    #[test]
    fn refine_pigeonhole() {
        let coarse = seq(&[(0.0, 0.0), (0.8, 0.0)]);
        let fine = seq(&[(0.01, 0.0), (-0.01, 0.0), (0.0, 0.01), (0.8, 0.001)]);
        let p = refine_partition(&coarse, &fine, 0.1).unwrap();
        assert_eq!(p.parts.len(), 3);
        assert_eq!(p.max_multiplicity, 3);
        let mut all: Vec<usize> = p.indices.concat();
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 3]);
        let far = seq(&[(0.5, 0.0)]);
        assert!(refine_partition(&coarse, &far, 0.1).is_err());
    }

    #[test]
    fn split_examples() {
        let p = split_sqrt_delta(&seq(&[(0.0, 0.0), (0.5, 0.0)])).unwrap();
        assert_eq!(p.parts.len(), 2);
        assert_eq!(p.certificate, 1.0);
        let p = split_sqrt_delta(&seq(&[(0.0, 0.0), (0.5, 0.0), (-0.5, 0.0)])).unwrap();
        assert_eq!(p.indices, vec![vec![0], vec![1, 2]]);
        assert!((p.certificate - 0.8).abs() < 1e-14);
    }

    #[test]
    fn split_certifies_random_sequences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [3usize, 5, 8, 8, 8, 12] {
            let s = random_seq(&mut rng, n, 0.9);
            let d = characteristic(&s).unwrap();
            let p = split_sqrt_delta(&s).unwrap();
            for part in &p.parts {
                assert!(characteristic(part).unwrap() >= d.sqrt() * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn local_search_path_certifies() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_seq(&mut rng, 30, 0.9);
        let d = characteristic(&s).unwrap();
        let p = split_sqrt_delta(&s).unwrap();
        assert_eq!(p.parts.len(), 2);
        for part in &p.parts {
            assert!(characteristic(part).unwrap() >= d.sqrt() * (1.0 - 1e-12));
        }
    }

    #[test]
    fn depth_examples() {
        let t = large_characteristic_threshold(0.5);
        assert!((t - 0.98927).abs() < 1e-5);
        assert_eq!(split_depth(0.99, 0.5).unwrap(), 0);
        assert_eq!(split_depth(t * t, 0.5).unwrap(), 1);
    }

    #[test]
    fn recursive_split_meets_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = random_seq(&mut rng, 10, 0.9);
        let d = characteristic(&s).unwrap();
        let l = split_depth(d, 0.5).unwrap();
        let target = d.powf(0.5f64.powi(l as i32));
        let parts = split_recursive(&s, l, target).unwrap();
        assert!(parts.len() <= 1 << l);
        for ix in &parts {
            assert!(characteristic(&s.select(ix)).unwrap() >= target * (1.0 - 1e-12));
        }
    }

    proptest! {
        #[test]
        fn depth_reaches_threshold(delta in 1e-6..1.0f64, eps in 0.01..0.99f64) {
            let l = split_depth(delta, eps).unwrap();
            let t = large_characteristic_threshold(eps);
            prop_assert!(delta.powf(0.5f64.powi(l as i32)) >= t * (1.0 - 1e-12));
            if l > 0 {
                prop_assert!(delta.powf(0.5f64.powi(l as i32 - 1)) < t);
            }
        }

        #[test]
        fn jones_dominates_lower(delta in 1e-3..1.0f64) {
            let b = interpolation_constant_bound(delta).unwrap();
            prop_assert!(b.upper >= b.lower * (1.0 - 1e-12));
            prop_assert!(b.upper >= 1.0);
        }
    }
}
