mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dbar_core::assembly::{disk_sample, AssembledOperator};
use dbar_core::blaschke::BlaschkeProduct;
use dbar_core::cauchy::{weak_residual_relative, Bump, ResidualQuadrature};
use dbar_core::io;
use dbar_core::sequence::{
    chain_count_bounds, greedy_chain, interpolation_constant_bound, large_characteristic_threshold, split_sqrt_delta,
};
use dbar_core::verify::{decomposition_checks, run_verification, CheckResult};
use dbar_core::{Complex64, Error, Result};
use serde::Serialize;
use serde_json::json;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "dbar", version, about = "Bounded solutions of dF/dz-bar = f/(1-|z|^2) on the unit disk")]
struct Cli {
    #[command(flatten)]
    flags: Flags,
    #[command(subcommand)]
    command: Command,
}

/// Overrides for the configuration file.
#[derive(Args, Default)]
struct Flags {
    #[arg(long, global = true)]
    grid_nr: Option<usize>,
    #[arg(long, global = true)]
    grid_ntheta: Option<usize>,
    #[arg(long, global = true)]
    contour_q: Option<usize>,
    #[arg(long, global = true)]
    nmax: Option<usize>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    dim: Option<usize>,
    /// Worker threads for evaluation.
    #[arg(long, global = true)]
    parallel: Option<usize>,
    /// Output file, or directory for `solve`; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a configuration file with every default spelled out.
    Init,
    /// Characteristic, interpolation constant bounds, chain and split of a sequence file.
    AnalyzeSequence {
        path: PathBuf,
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Greedy eps-chain of a region file.
    Chain {
        #[arg(long)]
        region: PathBuf,
        #[arg(long)]
        eps: f64,
    },
    /// Blaschke products of a sequence file.
    Blaschke {
        #[command(subcommand)]
        action: BlaschkeAction,
    },
    /// Build L_K, sample L_K f and measure the weak residual.
    Solve {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the seeded verification battery.
    Verify {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Break one bound on purpose so the run must fail.
        #[arg(long)]
        sabotage: bool,
        #[arg(long)]
        tolerance_scale: Option<f64>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Check the decomposition L_K = E0 + sum H_i(B_i) for a refinement.
    Theorem13 {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Refinement parameter; a quarter of the default when absent.
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long, default_value_t = 50)]
        samples: usize,
    },
}

#[derive(Subcommand)]
enum BlaschkeAction {
    /// B and B' at points given as `re,im`.
    Eval {
        #[arg(long)]
        zeros: PathBuf,
        #[arg(long = "at", value_parser = parse_point, required = true)]
        points: Vec<Complex64>,
    },
    /// CSV of |B| on a polar sample of the disk.
    Levels {
        #[arg(long)]
        zeros: PathBuf,
        #[arg(long, default_value_t = 64)]
        rings: usize,
        #[arg(long, default_value_t = 128)]
        per_ring: usize,
        #[arg(long, default_value_t = 0.99)]
        r_max: f64,
    },
}

fn parse_point(s: &str) -> std::result::Result<Complex64, String> {
    let (re, im) = s.split_once(',').ok_or_else(|| format!("expected re,im, got {s:?}"))?;
    let re: f64 = re.trim().parse().map_err(|e| format!("{re:?}: {e}"))?;
    let im: f64 = im.trim().parse().map_err(|e| format!("{im:?}: {e}"))?;
    Ok(Complex64::new(re, im))
}

enum Outcome {
    Pass,
    Fail,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Numerical(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    let flags = cli.flags;
    match cli.command {
        Command::Init => {
            let cfg = load(None, &flags)?;
            emit(&flags.out, &pretty(&cfg))?;
            Ok(Outcome::Pass)
        }
        Command::AnalyzeSequence { path, eps } => analyze(&path, eps, &flags),
        Command::Chain { region, eps } => chain(&region, eps, &flags),
        Command::Blaschke { action } => blaschke(action, &flags),
        Command::Solve { config } => solve(config.as_deref(), &flags),
        Command::Verify { config, sabotage, tolerance_scale, samples } => {
            let cfg = load(config.as_deref(), &flags)?;
            let mut v = cfg.verify;
            v.seed = cfg.seed;
            v.threads = cfg.pipeline.threads;
            if let Some(n) = flags.grid_nr {
                v.grid = n;
            }
            if let Some(s) = samples {
                v.samples = s;
            }
            if let Some(t) = tolerance_scale {
                v.tolerance_scale = t;
            }
            v.sabotage |= sabotage;
            let report = run_verification(&v)?;
            for c in &report.checks {
                eprintln!("{} {}: {:.3e} vs {:.3e}", if c.pass { "pass" } else { "FAIL" }, c.id, c.measured, c.bound);
            }
            emit(&flags.out, &pretty(&report))?;
            Ok(if report.passed { Outcome::Pass } else { Outcome::Fail })
        }
        Command::Theorem13 { config, nu, samples } => theorem13(config.as_deref(), nu, samples, &flags),
    }
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => io::write_text(p, text),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn load(path: Option<&Path>, flags: &Flags) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let p = &mut cfg.pipeline;
    if let Some(v) = flags.grid_nr {
        p.grid_nr = v;
    }
    if let Some(v) = flags.grid_ntheta {
        p.grid_ntheta = v;
    }
    if let Some(v) = flags.contour_q {
        p.contour_q = v;
    }
    if let Some(v) = flags.nmax {
        p.nmax = v;
    }
    if let Some(v) = flags.tol {
        p.tol = v;
    }
    if let Some(v) = flags.parallel {
        p.threads = v.max(1);
    }
    if let Some(v) = flags.seed {
        cfg.seed = v;
    }
    if let Some(d) = flags.dim {
        if d != cfg.dim {
            // Widen or narrow the density value to the requested dimension.
            if let config::DensitySpec::Constant { value } | config::DensitySpec::Bump { value } = &mut cfg.density {
                let first = value.first().copied().unwrap_or([1.0, 0.0]);
                value.resize(d, first);
            }
            cfg.dim = d;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn analyze(path: &Path, eps: Option<f64>, flags: &Flags) -> Result<Outcome> {
    let seq = io::read_sequence(path)?;
    let delta = seq.characteristic()?;
    let bounds = interpolation_constant_bound(delta)?;
    let chain = match eps {
        Some(e) => {
            let c = greedy_chain(seq.points(), e)?;
            Some(json!({ "eps": e, "len": c.len(), "points": c }))
        }
        None => None,
    };
    let split = if seq.len() >= 2 {
        let s = split_sqrt_delta(&seq)?;
        let deltas = s.parts.iter().map(|p| p.characteristic()).collect::<Result<Vec<_>>>()?;
        let target = delta.sqrt();
        Some(json!({
            "indices": s.indices,
            "deltas": deltas,
            "sqrt_delta": target,
            "certified": deltas.iter().all(|&d| d >= target * (1.0 - 1e-12)),
        }))
    } else {
        None
    };
    let report = json!({
        "len": seq.len(),
        "delta": delta,
        "bounds": bounds,
        "large_characteristic": eps.map(|e| delta >= large_characteristic_threshold(e)),
        "chain": chain,
        "split": split,
    });
    emit(&flags.out, &pretty(&report))?;
    Ok(Outcome::Pass)
}

fn chain(region: &Path, eps: f64, flags: &Flags) -> Result<Outcome> {
    let spec = io::read_region(region)?;
    let chain = greedy_chain(&spec.region().chain_candidates(eps), eps)?;
    for (a, r) in spec.disks().disks() {
        let (lo, hi) = chain_count_bounds(*r, eps)?;
        let here = chain.values().iter().filter(|&&z| dbar_core::geometry::rho(z, *a) < *r).count();
        eprintln!("disk at {a} radius {r}: {here} chain points, counting bounds [{lo:.2}, {hi:.2}]");
    }
    eprintln!("{} chain points in total", chain.len());
    emit(&flags.out, &(io::sequence_json(&chain) + "\n"))?;
    Ok(Outcome::Pass)
}

fn blaschke(action: BlaschkeAction, flags: &Flags) -> Result<Outcome> {
    match action {
        BlaschkeAction::Eval { zeros, points } => {
            let b = BlaschkeProduct::new(io::read_sequence(&zeros)?);
            let rows: Vec<_> = points
                .iter()
                .map(|&z| {
                    let (v, d) = b.eval_with_derivative(z);
                    json!({ "z": [z.re, z.im], "value": [v.re, v.im], "abs": v.norm(), "derivative": [d.re, d.im] })
                })
                .collect();
            emit(&flags.out, &pretty(&rows))?;
        }
        BlaschkeAction::Levels { zeros, rings, per_ring, r_max } => {
            if !(r_max > 0.0 && r_max < 1.0) || rings == 0 || per_ring == 0 {
                return Err(Error::invalid("levels need rings, per-ring >= 1 and r-max in (0, 1)"));
            }
            let b = BlaschkeProduct::new(io::read_sequence(&zeros)?);
            let mut buf = Vec::new();
            io::write_level_csv(&mut buf, &b, &disk_sample(rings, per_ring, r_max))?;
            emit(&flags.out, &String::from_utf8(buf).expect("csv is utf-8"))?;
        }
    }
    Ok(Outcome::Pass)
}

fn build(cfg: &RunConfig) -> Result<AssembledOperator> {
    let zeta = cfg.chain();
    let delta = zeta.characteristic()?;
    if delta >= large_characteristic_threshold(cfg.eps) {
        AssembledOperator::large_characteristic(&cfg.region, &zeta, cfg.eps, cfg.nu(), cfg.pipeline)
    } else {
        AssembledOperator::general_at(&cfg.region, &zeta, cfg.eps, delta, cfg.nu(), cfg.pipeline)
    }
}

fn config_dir(path: Option<&Path>) -> PathBuf {
    path.and_then(|p| p.parent()).map(Path::to_path_buf).unwrap_or_default()
}

fn solve(path: Option<&Path>, flags: &Flags) -> Result<Outcome> {
    let cfg = load(path, flags)?;
    let f = cfg.density(&config_dir(path))?;
    let op = build(&cfg)?;
    let sol = op.apply(f.as_ref())?;
    let s = &cfg.samples;
    let mut zs = disk_sample(s.rings, s.per_ring, s.r_max);
    zs.extend(op.region().sample(s.region_rings, s.region_per_ring));
    let values = sol.eval_many(&zs)?;
    let samples = io::samples(&zs, &values);
    let sup = values.iter().map(|v| dbar_core::cauchy::euclidean_norm(v)).fold(0.0, f64::max);

    // Weak residual against bumps centred on the first anchor.
    let region = op.region().clone();
    let (a, r) = cfg.region.disks().disks()[0];
    let euclid = r * (1.0 - a.norm_sqr()) / (1.0 - a.norm_sqr() * r * r);
    let quad = ResidualQuadrature::new(cfg.residual.nodes, cfg.residual.nodes)?
        .with_breakpoints(&[euclid])
        .with_threads(cfg.pipeline.threads);
    let lhs = |z: Complex64| sol.eval(z).unwrap_or_else(|_| vec![Complex64::new(f64::NAN, 0.0); sol.dim()]);
    let rhs = |z: Complex64| -> Vec<Complex64> {
        if region.contains(z) {
            let w = 1.0 / (1.0 - z.norm_sqr());
            f.eval(z).into_iter().map(|v| v * w).collect()
        } else {
            vec![Complex64::new(0.0, 0.0); f.dim()]
        }
    };
    let mut residuals = Vec::new();
    for &scale in &cfg.residual.bump_scales {
        let bump = Bump::new(a, scale * euclid)?;
        let res = weak_residual_relative(&lhs, &rhs, &bump, &quad)?;
        let normalized = if sol.f_norm() > 0.0 { res / sol.f_norm() } else { res };
        residuals.push(json!({ "center": [a.re, a.im], "radius": scale * euclid, "residual": normalized }));
    }

    let summary = json!({
        "kind": op.kind(),
        "groups": op.groups().len(),
        "parts": op.part_count(),
        "f_norm": sol.f_norm(),
        "sampled_sup": sup,
        "certificates": op.certificates(),
        "residuals": residuals,
    });
    match &flags.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            io::write_text(&dir.join("manifest.json"), &pretty(&op.manifest()))?;
            io::write_text(&dir.join("solution.json"), &pretty(&samples))?;
            let mut csv = Vec::new();
            io::write_samples_csv(&mut csv, &samples)?;
            io::write_text(&dir.join("solution.csv"), &String::from_utf8(csv).expect("csv is utf-8"))?;
            io::write_text(&dir.join("residual.json"), &pretty(&summary))?;
            eprintln!("wrote manifest.json, solution.json, solution.csv and residual.json to {}", dir.display());
        }
        None => emit(&None, &pretty(&summary))?,
    }
    Ok(Outcome::Pass)
}

fn theorem13(path: Option<&Path>, nu: Option<f64>, samples: usize, flags: &Flags) -> Result<Outcome> {
    let cfg = load(path, flags)?;
    let f = cfg.density(&config_dir(path))?;
    let op = build(&cfg)?;
    let nu = nu.unwrap_or(cfg.nu() / 4.0);
    let checks: Vec<CheckResult> = decomposition_checks(&op, &cfg.region, f.as_ref(), nu, samples.max(1), cfg.seed)?;
    for c in &checks {
        eprintln!("{} {}: {:.3e} vs {:.3e}", if c.pass { "pass" } else { "FAIL" }, c.id, c.measured, c.bound);
    }
    let passed = checks.iter().all(|c| c.pass);
    let report = json!({ "nu": nu, "seed": cfg.seed, "checks": checks, "passed": passed });
    emit(&flags.out, &pretty(&report))?;
    Ok(if passed { Outcome::Pass } else { Outcome::Fail })
}
