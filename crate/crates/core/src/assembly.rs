//! Assembly of the full operator from small-width pieces: refinement of a
//! chain at scale `eps_nu` into well-separated parts, and the splitting of a
//! chain of small characteristic into groups of large characteristic.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::JonesBasis;
use crate::blaschke::{solve_lambda_with_constant, BlaschkeProduct};
use crate::cauchy::{euclidean_norm, par_map, Density};
use crate::error::{Error, Result};
use crate::geometry::{rho, shift};
use crate::region::{DiskUnion, Region, RegionSpec};
use crate::sequence::{
    eps_star, greedy_chain, large_characteristic_threshold, refine_partition, refinement_count_bound, split_depth,
    split_recursive, FiniteSequence,
};
use crate::small_width::{PipelineConfig, SmallWidthOperator, SmallWidthSolution, SmallWidthSummary};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// `2 - sqrt 3`, the refinement scale of the default assembly.
pub fn nu_default() -> f64 {
    2.0 - 3f64.sqrt()
}

/// `eps_nu = (2 - sqrt 3)^3 nu / 6`.
pub fn eps_nu(nu: f64) -> f64 {
    (2.0 - 3f64.sqrt()).powi(3) * nu / 6.0
}

fn check_nu(nu: f64) -> Result<()> {
    if nu > 0.0 && nu <= nu_default() + 1e-15 {
        Ok(())
    } else {
        Err(Error::invalid(format!("nu = {nu} outside (0, 2 - sqrt 3]")))
    }
}

/// Checks that `zeta` is an `eps`-chain of `k`: inside `k`, `eps`-separated,
/// and within `eps` of every sampled point of `k`.
pub fn check_chain(k: &Region, zeta: &FiniteSequence, eps: f64) -> Result<()> {
    if zeta.is_empty() {
        return Err(Error::invalid("empty chain"));
    }
    let z = zeta.values();
    for (i, &p) in z.iter().enumerate() {
        if !k.contains(p) {
            return Err(Error::precondition("chain of K", format!("point {p} is not in K")));
        }
        if let Some(&q) = z[..i].iter().find(|&&q| rho(p, q) < eps) {
            return Err(Error::precondition("chain of K", format!("points {q} and {p} closer than {eps}")));
        }
    }
    if let Some(p) = k.sample(24, 96).into_iter().find(|&p| z.iter().all(|&q| rho(p, q) >= eps)) {
        return Err(Error::precondition("chain of K", format!("{p} in K is not within {eps} of the chain")));
    }
    Ok(())
}

/// One group of the assembly: a chain of large characteristic together with
/// the piece of `K` it is responsible for.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Group {
    pub region: Region,
    pub chain: FiniteSequence,
    pub delta: f64,
    /// Size of the refinement chain, equal to the chain size when no
    /// refinement is needed.
    pub refined_len: usize,
    /// Number of parts, `k*`.
    pub parts: usize,
    /// Largest number of refinement points in one `D(z, eps)`.
    pub max_multiplicity: usize,
}

/// Norm certificates of an assembly, each a bound on `||L_K f|| / ||f||`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificates {
    /// Sum over parts of `12 c M / (1 - c^2)`.
    pub parts_sum: f64,
    /// `389423 eps / (1 - eps)` per group.
    pub large_characteristic: f64,
    /// `5^2 10^6 eps / (1 - eps) max(1, log(1/delta) / (1 - eps_*)^2)`.
    pub general: f64,
    /// Bound on the number of parts at `nu`:
    /// `5^3 10^5 / (nu^2 (1 - eps)) max(1, log(1/delta) / (1 - eps_*)^2)`.
    pub part_count: f64,
}

impl Certificates {
    fn new(eps: f64, delta: f64, nu: f64, parts_sum: f64) -> Self {
        let es = eps_star(eps);
        let growth = (delta.recip().ln() / (1.0 - es).powi(2)).max(1.0);
        Certificates {
            parts_sum,
            large_characteristic: 389423.0 * eps / (1.0 - eps),
            general: 25e6 * eps / (1.0 - eps) * growth,
            part_count: 125e5 / (nu * nu * (1.0 - eps)) * growth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssemblyKind {
    /// One group: the chain already has large characteristic.
    LargeCharacteristic,
    /// The chain was split into groups of large characteristic first.
    General,
}

/// The f-independent data of `L_K`.
#[derive(Debug, Clone)]
pub struct AssembledOperator {
    kind: AssemblyKind,
    region: Region,
    eps: f64,
    delta: f64,
    nu: f64,
    groups: Vec<Group>,
    /// `(group index, operator)`.
    parts: Vec<(usize, SmallWidthOperator)>,
    certificates: Certificates,
    config: PipelineConfig,
}

/// Serializable description of an assembled operator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: AssemblyKind,
    pub eps: f64,
    pub delta: f64,
    pub nu: f64,
    pub eps_nu: f64,
    pub config: PipelineConfig,
    pub groups: Vec<GroupManifest>,
    pub certificates: Certificates,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupManifest {
    pub chain: Vec<[f64; 2]>,
    pub delta: f64,
    pub refined_len: usize,
    pub max_multiplicity: usize,
    pub parts: Vec<SmallWidthSummary>,
}

fn build_group(
    region: Region,
    chain: FiniteSequence,
    eps: f64,
    nu: f64,
    config: &PipelineConfig,
) -> Result<(Group, Vec<SmallWidthOperator>)> {
    let delta = chain.characteristic()?;
    let e_nu = eps_nu(nu);
    let (parts, refined_len, max_multiplicity) = if eps <= e_nu {
        let n = chain.len();
        (vec![chain.clone()], n, 1)
    } else {
        let refined = greedy_chain(&region.chain_candidates(e_nu), e_nu)?;
        if refined.is_empty() {
            return Err(Error::precondition("refinement of an eps-chain", "K has no sampled points"));
        }
        let partition = refine_partition(&chain, &refined, eps)?;
        (partition.parts, refined.len(), partition.max_multiplicity)
    };
    let mut ops = Vec::with_capacity(parts.len());
    let mut earlier: Vec<DiskUnion> = Vec::new();
    for (i, part) in parts.iter().enumerate() {
        let ctx = format!("part {i} ({} points)", part.len());
        let d = part.characteristic()?;
        let m = JonesBasis::new(part.clone())?.m();
        let lambda = solve_lambda_with_constant(d, nu, e_nu, m).map_err(|e| e.context(&ctx))?;
        let cover = DiskUnion::of_points(&part.values(), e_nu);
        let mut support = region.restricted_to(cover.clone());
        for u in &earlier {
            support = support.excluding(u.clone());
        }
        earlier.push(cover);
        ops.push(SmallWidthOperator::new(part.clone(), lambda.lambda, &support, *config).map_err(|e| e.context(&ctx))?);
    }
    let group = Group { region, chain, delta, refined_len, parts: ops.len(), max_multiplicity };
    Ok((group, ops))
}

impl AssembledOperator {
    /// `L_K` for a chain of large characteristic, refined at `nu`
    /// (`nu = 2 - sqrt 3` for the default operator).
    pub fn large_characteristic(
        k: &RegionSpec,
        zeta: &FiniteSequence,
        eps: f64,
        nu: f64,
        config: PipelineConfig,
    ) -> Result<Self> {
        check_nu(nu)?;
        config.validate()?;
        let region = k.region();
        check_chain(&region, zeta, eps)?;
        let delta = zeta.characteristic()?;
        let threshold = large_characteristic_threshold(eps);
        if delta < threshold {
            return Err(Error::precondition(
                "large-characteristic hypothesis",
                format!("delta = {delta} below {threshold}; use the general assembly"),
            ));
        }
        let (group, ops) = build_group(region.clone(), zeta.clone(), eps, nu, &config)?;
        Ok(Self::finish(AssemblyKind::LargeCharacteristic, region, eps, delta, nu, vec![(group, ops)], config))
    }

    /// `L_K` for an `eps`-chain with `delta(zeta) >= delta`: split into
    /// groups of large characteristic, each assembled separately.
    pub fn general(
        k: &RegionSpec,
        zeta: &FiniteSequence,
        eps: f64,
        delta: f64,
        config: PipelineConfig,
    ) -> Result<Self> {
        Self::general_at(k, zeta, eps, delta, nu_default(), config)
    }

    pub fn general_at(
        k: &RegionSpec,
        zeta: &FiniteSequence,
        eps: f64,
        delta: f64,
        nu: f64,
        config: PipelineConfig,
    ) -> Result<Self> {
        check_nu(nu)?;
        config.validate()?;
        let region = k.region();
        check_chain(&region, zeta, eps)?;
        let actual = zeta.characteristic()?;
        if !(delta > 0.0) || actual < delta * (1.0 - 1e-12) {
            return Err(Error::precondition(
                "interpolating chain",
                format!("delta(zeta) = {actual} below the stated {delta}"),
            ));
        }
        let target = large_characteristic_threshold(eps);
        let depth = split_depth(delta, eps)?;
        let split = split_recursive(zeta, depth, target)?;
        let mut built = Vec::with_capacity(split.len());
        let mut earlier: Vec<DiskUnion> = Vec::new();
        for (j, ix) in split.iter().enumerate() {
            let chain = zeta.select(ix);
            let dj = chain.characteristic()?;
            if dj < target {
                return Err(Error::numerical(format!(
                    "group {j}: splitting reached delta = {dj}, below {target}"
                )));
            }
            let cover = DiskUnion::of_points(&chain.values(), eps);
            let mut r = region.restricted_to(cover.clone());
            for u in &earlier {
                r = r.excluding(u.clone());
            }
            earlier.push(cover);
            let g = build_group(r, chain, eps, nu, &config).map_err(|e| e.context(&format!("group {j}")))?;
            built.push(g);
        }
        Ok(Self::finish(AssemblyKind::General, region, eps, actual, nu, built, config))
    }

    fn finish(
        kind: AssemblyKind,
        region: Region,
        eps: f64,
        delta: f64,
        nu: f64,
        built: Vec<(Group, Vec<SmallWidthOperator>)>,
        config: PipelineConfig,
    ) -> Self {
        let mut groups = Vec::new();
        let mut parts = Vec::new();
        for (j, (g, ops)) in built.into_iter().enumerate() {
            groups.push(g);
            parts.extend(ops.into_iter().map(|o| (j, o)));
        }
        let parts_sum = parts.iter().map(|(_, o)| o.norm_bound()).sum();
        let certificates = Certificates::new(eps, delta, nu, parts_sum);
        AssembledOperator { kind, region, eps, delta, nu, groups, parts, certificates, config }
    }

    /// The same construction with every group refined at `nu` instead.
    pub fn refined(&self, nu: f64) -> Result<Self> {
        check_nu(nu)?;
        let mut built = Vec::with_capacity(self.groups.len());
        for (j, g) in self.groups.iter().enumerate() {
            built.push(
                build_group(g.region.clone(), g.chain.clone(), self.eps, nu, &self.config)
                    .map_err(|e| e.context(&format!("group {j}")))?,
            );
        }
        Ok(Self::finish(self.kind, self.region.clone(), self.eps, self.delta, nu, built, self.config))
    }

    pub fn kind(&self) -> AssemblyKind {
        self.kind
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn parts(&self) -> impl Iterator<Item = &SmallWidthOperator> {
        self.parts.iter().map(|(_, o)| o)
    }

    pub fn part_count(&self) -> usize {
        self.parts.len()
    }

    pub fn certificates(&self) -> &Certificates {
        &self.certificates
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    /// Index of the part whose support contains `z`, if any.  Supports are
    /// disjoint, so the indicator functions sum to one exactly on covered points.
    pub fn part_containing(&self, z: Complex64) -> Option<usize> {
        self.parts.iter().position(|(_, o)| o.support().contains(z))
    }

    /// Number of part supports containing `z`.
    pub fn cover_count(&self, z: Complex64) -> usize {
        self.parts.iter().filter(|(_, o)| o.support().contains(z)).count()
    }

    pub fn manifest(&self) -> Manifest {
        let groups = self
            .groups
            .iter()
            .enumerate()
            .map(|(j, g)| GroupManifest {
                chain: g.chain.values().iter().map(|z| [z.re, z.im]).collect(),
                delta: g.delta,
                refined_len: g.refined_len,
                max_multiplicity: g.max_multiplicity,
                parts: self.parts.iter().filter(|(i, _)| *i == j).map(|(_, o)| o.summary()).collect(),
            })
            .collect();
        Manifest {
            kind: self.kind,
            eps: self.eps,
            delta: self.delta,
            nu: self.nu,
            eps_nu: eps_nu(self.nu),
            config: self.config,
            groups,
            certificates: self.certificates,
        }
    }

    pub fn apply<'a>(&'a self, f: &dyn Density) -> Result<AssembledSolution<'a>> {
        let mut parts = Vec::with_capacity(self.parts.len());
        for (i, (_, op)) in self.parts.iter().enumerate() {
            parts.push(op.apply(f).map_err(|e| e.context(&format!("part {i}")))?);
        }
        let f_norm = parts.iter().map(|p| p.f_norm()).fold(0.0, f64::max);
        Ok(AssembledSolution { op: self, parts, dim: f.dim(), f_norm })
    }
}

/// `L_K f` as a sum over the parts.
#[derive(Debug, Clone)]
pub struct AssembledSolution<'a> {
    op: &'a AssembledOperator,
    parts: Vec<SmallWidthSolution<'a>>,
    dim: usize,
    f_norm: f64,
}

impl<'a> AssembledSolution<'a> {
    pub fn operator(&self) -> &'a AssembledOperator {
        self.op
    }

    pub fn parts(&self) -> &[SmallWidthSolution<'a>] {
        &self.parts
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Sampled sup of `|f|` over `K`.
    pub fn f_norm(&self) -> f64 {
        self.f_norm
    }

    pub fn eval(&self, z: Complex64) -> Result<Vec<Complex64>> {
        let mut out = vec![ZERO; self.dim];
        for (i, p) in self.parts.iter().enumerate() {
            let v = p.eval(z).map_err(|e| e.context(&format!("part {i}")))?;
            for (o, x) in out.iter_mut().zip(v) {
                *o += x;
            }
        }
        Ok(out)
    }

    pub fn eval_many(&self, zs: &[Complex64]) -> Result<Vec<Vec<Complex64>>> {
        par_map(zs, self.op.config.threads, |&z| self.eval(z)).into_iter().collect()
    }

    /// `sum_i (H_i(B_i(z)) f)(z)`: the parts' representations at infinity
    /// composed with their Blaschke products.
    pub fn h_sum(&self, z: Complex64) -> Result<Vec<Complex64>> {
        let mut out = vec![ZERO; self.dim];
        for p in &self.parts {
            let w = p.operator().product().eval(z);
            for (o, x) in out.iter_mut().zip(p.h_eval(w, z)?) {
                *o += x;
            }
        }
        Ok(out)
    }
}

/// Oscillation of `L_K f` at one pseudohyperbolic scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleOscillation {
    pub scale: f64,
    pub oscillation: f64,
}

/// Empirical modulus of continuity: at each scale `2^-k`, `k = 1..=scales`,
/// the largest `|L_K f(z) - L_K f(z')|` over `rho(z, z') = 2^-k` with `z`
/// among `base`.
pub fn continuity_report(sol: &AssembledSolution<'_>, base: &[Complex64], scales: u32) -> Result<Vec<ScaleOscillation>> {
    let mut out = Vec::with_capacity(scales as usize);
    for k in 1..=scales {
        let s = 0.5f64.powi(k as i32);
        let pairs: Vec<(Complex64, Complex64)> = base
            .iter()
            .enumerate()
            .map(|(i, &z)| (z, shift(z, Complex64::from_polar(s, 2.399963 * i as f64))))
            .collect();
        let diffs = par_map(&pairs, sol.op.config.threads, |&(a, b)| -> Result<f64> {
            let fa = sol.eval(a)?;
            let fb = sol.eval(b)?;
            Ok(euclidean_norm(&fa.iter().zip(&fb).map(|(x, y)| x - y).collect::<Vec<_>>()))
        });
        let mut m = 0.0f64;
        for d in diffs {
            m = m.max(d?);
        }
        out.push(ScaleOscillation { scale: s, oscillation: m });
    }
    Ok(out)
}

/// Data of the decomposition `L_K f = E0 f + sum_i H_i(B_i) f` outside the
/// `nu`-neighbourhood of `K`.
pub struct Decomposition<'a> {
    pub nu: f64,
    pub eps_nu: f64,
    full: AssembledSolution<'a>,
    refined: AssembledSolution<'a>,
}

impl<'a> Decomposition<'a> {
    /// `full` must be `L_K f` and `refined` the same density under the
    /// operator refined at `nu`.
    pub fn new(full: AssembledSolution<'a>, refined: AssembledSolution<'a>) -> Result<Self> {
        let nu = refined.op.nu;
        if full.op.groups.len() != refined.op.groups.len() || full.dim != refined.dim {
            return Err(Error::invalid("solutions of different operators"));
        }
        Ok(Decomposition { nu, eps_nu: eps_nu(nu), full, refined })
    }

    pub fn full(&self) -> &AssembledSolution<'a> {
        &self.full
    }

    pub fn refined(&self) -> &AssembledSolution<'a> {
        &self.refined
    }

    /// `E0 f = L_K f - L_{K;nu} f`, holomorphic on the disk.
    pub fn e0(&self, z: Complex64) -> Result<Vec<Complex64>> {
        let a = self.full.eval(z)?;
        let b = self.refined.eval(z)?;
        Ok(a.iter().zip(&b).map(|(x, y)| x - y).collect())
    }

    /// `E0 f(z) + sum_i (H_i(B_i(z)) f)(z)`.
    pub fn decomposed(&self, z: Complex64) -> Result<Vec<Complex64>> {
        let e = self.e0(z)?;
        let h = self.refined.h_sum(z)?;
        Ok(e.iter().zip(&h).map(|(x, y)| x + y).collect())
    }

    /// Products `B_i` of the refined parts.
    pub fn products(&self) -> Vec<&BlaschkeProduct> {
        self.refined.parts.iter().map(|p| p.operator().product()).collect()
    }

    /// `min_i |B_i(z)|`; outside the `nu`-neighbourhood of `K` this is at
    /// least `6 eps_nu`.
    pub fn min_level(&self, z: Complex64) -> f64 {
        self.products().iter().map(|b| b.eval(z).norm()).fold(f64::INFINITY, f64::min)
    }

    /// Is `z` in the open `nu`-neighbourhood of `K`?
    pub fn in_neighbourhood(&self, z: Complex64) -> bool {
        self.full.op.region.base().neighbourhood_contains(z, self.nu)
    }

    /// Checks `K ⊂ ∪ {|B_i| <= eps_nu} ⊂ ∪ {|B_i| < 6 eps_nu} ⊂ [K]_nu` on
    /// samples of `K` and on preimages `b_n(w)` given as
    /// `(part, component, w)` with `|w| < 6 eps_nu`.  Returns the number of
    /// violations.
    pub fn containment_violations(&self, k_samples: &[Complex64], preimages: &[(usize, usize, Complex64)]) -> Result<usize> {
        let mut bad = 0;
        for &z in k_samples {
            if !(self.min_level(z) <= self.eps_nu * (1.0 + 1e-9)) {
                bad += 1;
            }
        }
        for &(i, n, w) in preimages {
            let p = self.refined.parts.get(i).ok_or_else(|| Error::invalid(format!("no part {i}")))?;
            if w.norm() >= 6.0 * self.eps_nu {
                return Err(Error::invalid("level samples must satisfy |w| < 6 eps_nu"));
            }
            let z = p.operator().basis().level().local_inverse(n, w)?;
            if !self.in_neighbourhood(z) {
                bad += 1;
            }
        }
        Ok(bad)
    }

    /// `sup |H_i(w) f(z)| / ||f||` over `|w| = radius_factor` times the
    /// series radius of each part and the given `z`, maximised over parts.
    pub fn h_norm(&self, zs: &[Complex64], angles: usize, radius_factor: f64) -> Result<f64> {
        let fnorm = self.refined.f_norm;
        if fnorm == 0.0 {
            return Ok(0.0);
        }
        let mut worst = 0.0f64;
        for p in &self.refined.parts {
            let rad = p.operator().h_radius() * radius_factor.max(1.0);
            for a in 0..angles {
                let w = Complex64::from_polar(rad, a as f64 * std::f64::consts::TAU / angles as f64);
                for &z in zs {
                    worst = worst.max(euclidean_norm(&p.h_eval(w, z)?) / fnorm);
                }
            }
        }
        Ok(worst)
    }
}

/// Deterministic points of the disk: a polar grid with radii up to `r_max`.
pub fn disk_sample(rings: usize, per_ring: usize, r_max: f64) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(rings * per_ring);
    for i in 0..rings {
        let r = r_max * (i as f64 + 0.5) / rings as f64;
        for j in 0..per_ring {
            out.push(Complex64::from_polar(r, (j as f64 + 0.25 * i as f64) * std::f64::consts::TAU / per_ring as f64));
        }
    }
    out
}

/// The refinement count bound for one cell, reported alongside the
/// empirical multiplicity.
pub fn cell_count_bound(eps: f64, nu: f64) -> f64 {
    if eps <= eps_nu(nu) {
        1.0
    } else {
        refinement_count_bound(eps, eps_nu(nu))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cauchy::FnDensity;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn seq(p: &[Complex64]) -> FiniteSequence {
        FiniteSequence::from_complex(p).unwrap()
    }

    fn small_cfg() -> PipelineConfig {
        PipelineConfig { grid_nr: 24, grid_ntheta: 24, ..Default::default() }
    }

    #[test]
    fn eps_nu_value() {
        assert!((eps_nu(nu_default()) - (2.0 - 3f64.sqrt()).powi(4) / 6.0).abs() < 1e-16);
    }

    #[test]
    fn singleton_tiny_region_is_one_part() {
        let zeta = seq(&[c(0.0, 0.0)]);
        let k = RegionSpec::uniform(zeta.clone(), 5e-4).unwrap();
        let op = AssembledOperator::large_characteristic(&k, &zeta, 5e-4, nu_default(), small_cfg()).unwrap();
        assert_eq!(op.part_count(), 1);
        let f = FnDensity::new(1, |_| vec![c(1.0, 0.0)]);
        let sol = op.apply(&f).unwrap();
        let z = c(0.3, 0.1);
        assert_eq!(sol.eval(z).unwrap(), sol.parts()[0].eval(z).unwrap());
    }

    #[test]
    fn rejects_non_chain() {
        let zeta = seq(&[c(0.0, 0.0)]);
        let k = RegionSpec::uniform(zeta.clone(), 0.01).unwrap();
        assert!(AssembledOperator::large_characteristic(&k, &zeta, 0.005, nu_default(), small_cfg()).is_err());
    }

    #[test]
    fn refinement_covers_and_is_disjoint() {
        let zeta = seq(&[c(0.5, 0.0)]);
        let k = RegionSpec::uniform(zeta.clone(), 0.002).unwrap();
        let op = AssembledOperator::large_characteristic(&k, &zeta, 0.002, nu_default(), small_cfg()).unwrap();
        assert!(op.part_count() > 1);
        for z in op.region().sample(20, 80) {
            assert_eq!(op.cover_count(z), 1, "{z}");
        }
        let m = op.manifest();
        assert_eq!(m.groups[0].parts.len(), op.part_count());
        assert!(m.groups[0].max_multiplicity as f64 <= cell_count_bound(0.002, nu_default()));
    }

    #[test]
    fn general_splits_small_characteristic() {
        let zeta = seq(&[c(0.0, 0.0), c(0.6, 0.0), c(-0.6, 0.0), c(0.0, 0.6)]);
        let k = RegionSpec::uniform(zeta.clone(), 1e-4).unwrap();
        let delta = zeta.characteristic().unwrap();
        let op = AssembledOperator::general(&k, &zeta, 1e-4, delta, small_cfg()).unwrap();
        assert!(op.groups().len() >= 2);
        for g in op.groups() {
            assert!(g.delta >= large_characteristic_threshold(1e-4));
        }
        for z in op.region().sample(6, 24) {
            assert_eq!(op.cover_count(z), 1);
        }
        let f = FnDensity::new(1, |z: Complex64| vec![z]);
        let sol = op.apply(&f).unwrap();
        let v = sol.eval(c(0.3, 0.3)).unwrap();
        assert!(v[0].norm() <= op.certificates().general * sol.f_norm());
    }
}
