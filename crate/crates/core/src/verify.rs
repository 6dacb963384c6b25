//! A seeded battery of numerical checks with a machine-readable report.
//! Reports carry no timestamps, so a fixed seed reproduces them byte for byte.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assembly::{disk_sample, nu_default, AssembledOperator, Decomposition};
use crate::basis::TwoVariableBasis;
use crate::cauchy::{
    continuity_check, euclidean_norm, CauchyConfig, CauchySolver, Density, FnDensity, GridField, Lookup, PolarGrid,
};
use crate::error::{Error, Result};
use crate::region::RegionSpec;
use crate::sequence::{chain_count_bounds, characteristic_via_blaschke, greedy_chain, split_sqrt_delta, FiniteSequence};
use crate::small_width::{PipelineConfig, SmallWidthOperator};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Radial and angular grid size for every Cauchy solve.
    pub grid: usize,
    /// Random instances per randomized check.
    pub samples: usize,
    /// Flip the sign of one bound so that its check must fail; used to test
    /// the failure path of callers.
    pub sabotage: bool,
    /// Multiplies every numerical tolerance (not the proven constants).
    pub tolerance_scale: f64,
    pub threads: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { seed: 0, grid: 64, samples: 10, sabotage: false, tolerance_scale: 1.0, threads: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub id: String,
    /// What the bound is, in words.
    pub reference: String,
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub version: String,
    pub seed: u64,
    pub config: VerifyConfig,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

struct Checks {
    out: Vec<CheckResult>,
}

impl Checks {
    fn push(&mut self, id: &str, reference: &str, measured: f64, bound: f64) {
        self.out.push(CheckResult {
            id: id.to_string(),
            reference: reference.to_string(),
            measured,
            bound,
            pass: measured <= bound,
        });
    }
}

fn random_point(rng: &mut ChaCha8Rng, r_max: f64) -> Complex64 {
    Complex64::from_polar(r_max * rng.gen::<f64>().sqrt(), rng.gen::<f64>() * TAU)
}

fn random_sequence(rng: &mut ChaCha8Rng, n: usize, r_max: f64, min_delta: f64) -> FiniteSequence {
    loop {
        let pts: Vec<Complex64> = (0..n).map(|_| random_point(rng, r_max)).collect();
        if let Ok(s) = FiniteSequence::from_complex(&pts) {
            if s.characteristic().map_or(false, |d| d > min_delta) {
                return s;
            }
        }
    }
}

pub fn run_verification(config: &VerifyConfig) -> Result<VerificationReport> {
    if config.grid < 8 || config.samples == 0 || !(config.tolerance_scale > 0.0) {
        return Err(Error::invalid("verify needs grid >= 8, samples >= 1 and a positive tolerance scale"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut checks = Checks { out: Vec::new() };
    let tol = config.tolerance_scale;
    let n = config.grid;

    // Indicator of D_0.5: closed form conj(z) inside, s^2/z outside.
    let grid = PolarGrid::new(n, n, 0.5)?;
    let h = GridField::sample(grid, &FnDensity::new(1, |_| vec![Complex64::new(1.0, 0.0)]), |_| true)?;
    let solver = CauchySolver::new(h, CauchyConfig::default());
    let mut err = 0.0f64;
    for z in disk_sample(6, 12, 0.95) {
        if z.norm() < 0.05 {
            continue;
        }
        let exact = if z.norm() <= 0.5 { z.conj() } else { 0.25 / z };
        err = err.max((solver.eval(z)[0] - exact).norm() / exact.norm());
    }
    checks.push("cauchy-indicator", "relative error against the closed form, 4/n allowance", err, 4.0 * tol / n as f64);

    // Sup and continuity bounds on random fields.
    let mut sup = 0.0f64;
    let mut cont = 0.0f64;
    for _ in 0..config.samples {
        let s = rng.gen_range(0.1..0.9);
        let grid = PolarGrid::new(n.min(32), n.min(32), s)?;
        let values: Vec<Complex64> = (0..grid.len()).map(|_| random_point(&mut rng, 1.0)).collect();
        let h = GridField::from_parts(grid, 1, values, vec![true; grid.len()])?;
        let norm = h.sup_norm();
        // Bilinear lookup keeps the field continuous, so quadrature noise stays
        // well below the increments of close pairs.
        let solver = CauchySolver::new(h, CauchyConfig { lookup: Lookup::Bilinear, ..Default::default() });
        let pairs: Vec<(Complex64, Complex64)> = (0..20)
            .map(|k| {
                let a = random_point(&mut rng, 0.99);
                let d = if k % 2 == 0 { 0.5 } else { 10f64.powf(rng.gen_range(-4.0..-1.0)) };
                (a, a + Complex64::from_polar(d, rng.gen::<f64>() * TAU))
            })
            .collect();
        for &(a, _) in &pairs {
            sup = sup.max(solver.eval(a)[0].norm() / (2.0 * s * norm));
        }
        cont = cont.max(continuity_check(&solver, &pairs, config.threads)?.max_ratio);
    }
    let sup_bound = if config.sabotage { -1.02 } else { 1.02 };
    checks.push("cauchy-sup", "|E h| / (2 s ||h||)", sup, sup_bound);
    checks.push("cauchy-continuity", "|E h(z1) - E h(z2)| / (3 omega(|z1 - z2|) ||h||)", cont, 1.02);

    // Characteristic by the product formula and by derivatives of B.
    let mut diff = 0.0f64;
    for k in 0..config.samples {
        let s = random_sequence(&mut rng, 2 + k % 20, 0.95, 0.0);
        let a = s.characteristic()?;
        diff = diff.max((a - characteristic_via_blaschke(&s)?).abs() / a);
    }
    checks.push("characteristic", "relative difference of the two characteristic formulas", diff, 1e-10 * tol);

    // Two-variable interpolation basis.
    let mut ident = 0.0f64;
    let mut sum = 0.0f64;
    let zs = disk_sample(16, 16, 0.99);
    for _ in 0..config.samples.min(4) {
        let len = rng.gen_range(2..5);
        let s = random_sequence(&mut rng, len, 0.9, 0.5);
        let delta = s.characteristic()?;
        let lambda = 0.5 * (1.0 / delta - (1.0 / (delta * delta) - 1.0).sqrt());
        let basis = TwoVariableBasis::from_sequence(s, lambda)?;
        let m = basis.jones().m();
        for q in 0..4 {
            let w = Complex64::from_polar(basis.w_max() * (q as f64 + 0.5) / 4.0, q as f64);
            let inv = basis.inverse_matrix(w)?;
            for (k, &b) in basis.nodes(w)?.iter().enumerate() {
                for (j, v) in basis.f_all_with_inverse(&inv, b).iter().enumerate() {
                    ident = ident.max((v - if j == k { 1.0 } else { 0.0 }).norm());
                }
            }
            for &z in &zs {
                sum = sum.max(basis.f_all_with_inverse(&inv, z).iter().map(|v| v.norm()).sum::<f64>() / (2.0 * m));
            }
        }
    }
    checks.push("basis-interpolation", "|f_j(b_k(w), w) - [j = k]|", ident, 1e-10 * tol);
    checks.push("basis-sum", "sum_j |f_j(z, w)| / 2M", sum, 1.0);

    // Chain counting.
    let mut chain_excess = 0.0f64;
    for _ in 0..config.samples {
        let z = random_point(&mut rng, 0.8);
        let r = rng.gen_range(0.05..0.5);
        let l = rng.gen_range(r / 6.0..r / 2.0);
        let region = RegionSpec::uniform(FiniteSequence::from_complex(&[z])?, r)?.region();
        let chain = greedy_chain(&region.chain_candidates(l), l)?;
        let (lo, hi) = chain_count_bounds(r, l)?;
        let k = chain.len() as f64;
        chain_excess = chain_excess.max((lo - k).max(k - hi));
    }
    checks.push("chain-count", "distance of the chain size outside its counting bounds", chain_excess, 0.0);

    // sqrt(delta) splits.
    let mut split = 0.0f64;
    for _ in 0..config.samples {
        let len = rng.gen_range(2..=10);
        let s = random_sequence(&mut rng, len, 0.9, 0.0);
        let target = s.characteristic()?.sqrt();
        for part in split_sqrt_delta(&s)?.parts {
            split = split.max(target / part.characteristic()?);
        }
    }
    checks.push("split", "sqrt(delta) / delta_j over the parts", split, 1.0 + 1e-12);

    // Small-width operator: splitting identity, norms and the H series.
    let cfg = PipelineConfig { grid_nr: n, grid_ntheta: n, threads: config.threads, ..Default::default() };
    let zeros = FiniteSequence::from_complex(&[Complex64::new(0.5, 0.1), Complex64::new(-0.4, -0.2)])?;
    let wide = RegionSpec::uniform(zeros.clone(), 0.9)?.region();
    let op = SmallWidthOperator::new(zeros, 0.3, &wide, cfg)?;
    let a = Complex64::from_polar(1.0, rng.gen::<f64>() * TAU);
    let f = FnDensity::new(1, move |z: Complex64| vec![a + z * z.conj()]);
    let sol = op.apply(&f)?;
    let fnorm = sol.f_norm();
    let rho = sol.contour_radius();
    let mut split_err = 0.0f64;
    let mut h_err = 0.0f64;
    for k in 0..op.zeros().len() {
        for j in 0..12 {
            let w = Complex64::from_polar(rho * (0.85 + 0.05 * (j % 4) as f64), j as f64);
            let z = op.basis().level().local_inverse(k, w)?;
            let lhs = sol.t1(z)[0] + sol.t2(z)[0];
            split_err = split_err.max((lhs - sol.ek(z)?[0]).norm() / (op.ek_bound() * fnorm));
            let w = Complex64::from_polar(op.h_radius() * (1.0 + 0.2 * (j % 5) as f64), j as f64);
            let z = op.basis().level().local_inverse(k, w)?;
            h_err = h_err.max((sol.h_eval(w, z)?[0] - sol.eval(z)?[0]).norm() / (op.ek_bound() * fnorm));
        }
    }
    checks.push("splitting", "|T1 + T2 - E_K f| / (bound on E_K times ||f||)", split_err, 1e-8 * tol);
    checks.push("representation", "|H(B(z)) f(z) - L f(z)| / (bound on E_K times ||f||)", h_err, 1e-8 * tol);
    let mut norm = 0.0f64;
    for z in disk_sample(12, 24, 0.99) {
        norm = norm.max(euclidean_norm(&sol.eval(z)?) / fnorm);
    }
    checks.push("small-width-norm", "sampled ||L f|| / ||f|| against 6M times the bound on E_K", norm, op.norm_bound());

    // Partition of a refined set: every sample of K in exactly one part.
    let anchor = FiniteSequence::from_complex(&[Complex64::new(0.3, 0.4)])?;
    let k = RegionSpec::uniform(anchor.clone(), 2e-3)?;
    let small = PipelineConfig { grid_nr: 16, grid_ntheta: 16, ..cfg };
    let assembled = AssembledOperator::large_characteristic(&k, &anchor, 2e-3, nu_default(), small)?;
    let miscovered = k.region().sample(12, 36).into_iter().filter(|&z| assembled.cover_count(z) != 1).count();
    checks.push("partition", "samples of K not covered by exactly one part", miscovered as f64, 0.0);
    checks.push(
        "part-count",
        "parts against the counting certificate",
        assembled.part_count() as f64,
        assembled.certificates().part_count,
    );

    let checks = checks.out;
    let passed = checks.iter().all(|c| c.pass);
    Ok(VerificationReport { version: env!("CARGO_PKG_VERSION").to_string(), seed: config.seed, config: *config, checks, passed })
}

/// Checks of the decomposition `L_K f = E0 f + sum_i H_i(B_i(z)) f` for the
/// operator refined at `nu`: the series identity near each part, the
/// decomposition outside the `nu`-neighbourhood of `K`, the size of the `H_i`
/// and the level-set containments.  Points are drawn from `seed`.
pub fn decomposition_checks(
    op: &AssembledOperator,
    k: &RegionSpec,
    f: &dyn Density,
    nu: f64,
    samples: usize,
    seed: u64,
) -> Result<Vec<CheckResult>> {
    let refined = op.refined(nu)?;
    let full = op.apply(f)?;
    let fine = refined.apply(f)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Checks { out: Vec::new() };

    let mut id_err = 0.0f64;
    let mut scale = f64::MIN_POSITIVE;
    let mut negative = true;
    for p in full.parts().iter().chain(fine.parts()) {
        negative &= p.h_coefficients().is_empty() || p.h_coefficients().n_hi < 0;
        let o = p.operator();
        for q in 0..samples {
            let w = Complex64::from_polar(o.h_radius() * rng.gen_range(1.0..3.0), rng.gen::<f64>() * TAU);
            let z = o.basis().level().local_inverse(q % o.zeros().len(), w)?;
            let lhs = p.eval(z)?;
            let rhs = p.h_eval(o.product().eval(z), z)?;
            id_err = id_err.max(euclidean_norm(&lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect::<Vec<_>>()));
            scale = scale.max(euclidean_norm(&lhs));
        }
    }
    checks.push("series-identity", "|L f - H(B) f| / max |L f| near each part", id_err / scale, 1e-6);
    checks.push("negative-index", "parts with nonnegative series indices", if negative { 0.0 } else { 1.0 }, 0.0);

    let dec = Decomposition::new(full, fine)?;
    let mut exterior = Vec::with_capacity(samples);
    while exterior.len() < samples {
        let z = random_point(&mut rng, 0.99);
        if !dec.in_neighbourhood(z) {
            exterior.push(z);
        }
    }
    let mut dec_err = 0.0f64;
    let mut dec_scale = f64::MIN_POSITIVE;
    let mut low = 0usize;
    for &z in &exterior {
        let lhs = dec.full().eval(z)?;
        let rhs = dec.decomposed(z)?;
        dec_err = dec_err.max(euclidean_norm(&lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect::<Vec<_>>()));
        dec_scale = dec_scale.max(euclidean_norm(&lhs));
        if dec.min_level(z) < 6.0 * dec.eps_nu {
            low += 1;
        }
    }
    checks.push("decomposition", "|L f - E0 f - sum H_i(B_i) f| / max |L f| off the nu-neighbourhood", dec_err / dec_scale, 1e-6);
    checks.push("exterior-level", "exterior points with min |B_i| below 6 eps_nu", low as f64, 0.0);

    let mut zs = disk_sample(6, 12, 0.99);
    zs.extend(k.region().sample(4, 12));
    checks.push("series-norm", "sampled sup |H_i f| / ||f|| against 3 nu / 5", dec.h_norm(&zs, 24, 1.0)?, 0.6 * nu);

    let k_samples: Vec<Complex64> = k.region().sample(12, 36).into_iter().take(samples.max(1) * 10).collect();
    let parts = dec.refined().parts().len();
    let preimages: Vec<(usize, usize, Complex64)> = (0..samples * 10)
        .map(|_| {
            let i = rng.gen_range(0..parts);
            let n = rng.gen_range(0..dec.refined().parts()[i].operator().zeros().len());
            (i, n, random_point(&mut rng, 6.0 * dec.eps_nu * (1.0 - 1e-9)))
        })
        .collect();
    let bad = dec.containment_violations(&k_samples, &preimages)?;
    checks.push("containment", "samples breaking K within {|B_i| <= eps_nu} and {|B_i| < 6 eps_nu} within the nu-neighbourhood", bad as f64, 0.0);
    Ok(checks.out)
}
