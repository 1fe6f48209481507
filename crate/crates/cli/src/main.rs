//! `aatomo`: simulate boundary data, check range membership, reconstruct, run the
//! X-ray/Doppler confusion demo and validate the integrating factor.
//!
//! Exit codes: 0 success or PASS, 1 a gate failed, 2 usage, I/O or input error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use aatomo_core::attenuation::{exp_h_modes_with_derivatives, validate_h, FdOrder, HOptions, IntegratingFactor};
use aatomo_core::config::RunConfig;
use aatomo_core::fields::{random_vector_field, BumpKind, Profile, ScalarFieldGrid, VectorFieldGrid, VectorProfile};
use aatomo_core::geometry::{DiskDomain, InteriorGrid};
use aatomo_core::io;
use aatomo_core::reconstruct::{
    check_range_att, check_range_nonatt, check_range_scalar, confusion_field, curl_defect, reconstruct_att, reconstruct_nonatt,
    relative_l2_error, Outcome, RangeReport,
};
use aatomo_core::transport::{forward_doppler, forward_xray, DataTag, Sinogram, TransportConfig};
use aatomo_core::Error;
use clap::{Parser, Subcommand};

/// Thresholds of the h-machinery check that are not configurable.
const TOL_TRANSPORT: f64 = 1e-3;
const TOL_CAUCHY_PRODUCT: f64 = 1e-6;
const TOL_RECURRENCE: f64 = 5e-3;
const TOL_CONFUSION: f64 = 1e-6;
const H_RAYS: usize = 100;

#[derive(Parser)]
#[command(name = "aatomo", version, about = "Attenuated Doppler tomography on the unit disk")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Configuration file (`key = value` lines); defaults are used for missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the scenario of the configuration.
    #[arg(long, global = true)]
    scenario: Option<String>,
    /// Overrides the seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Writes boundary data and the ground truth for the configured scenario
    /// (doppler, random, xray, confusion).
    Simulate,
    /// Runs the range conditions on a sinogram file.
    CheckRange { sinogram: PathBuf },
    /// Rebuilds the vector field from a Doppler sinogram file.
    Reconstruct { sinogram: PathBuf },
    /// Forward X-ray data of `a psi` against Doppler data of `-grad psi`.
    Confuse,
    /// Checks the identities of the integrating factor for the configured attenuation.
    ValidateH {
        /// Builds `h` with the opposite perpendicular convention.
        #[arg(long)]
        debug_flip_perp: bool,
    },
    /// Prints the effective configuration.
    PrintConfig,
}

enum Failure {
    Gate(String),
    Input(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

type Status = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = std::env::var("AATOMO_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Gate(msg)) => {
            eprintln!("FAIL: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = &cli.scenario {
        cfg.scenario = s.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Status {
    let cfg = load_config(&cli)?;
    if let Cmd::PrintConfig = cli.cmd {
        print!("{}", cfg.render());
        return Ok(());
    }
    fs::create_dir_all(&cli.out)?;
    match &cli.cmd {
        Cmd::Simulate => simulate(&cfg, &cli.out),
        Cmd::CheckRange { sinogram } => check_range(&cfg, sinogram, &cli.out),
        Cmd::Reconstruct { sinogram } => reconstruct(&cfg, sinogram, &cli.out),
        Cmd::Confuse => confuse(&cfg, &cli.out),
        Cmd::ValidateH { debug_flip_perp } => validate(&cfg, *debug_flip_perp, &cli.out),
        Cmd::PrintConfig => Ok(()),
    }
}

fn grid(cfg: &RunConfig) -> Result<Arc<InteriorGrid>, Failure> {
    Ok(Arc::new(InteriorGrid::new(cfg.pitch, cfg.delta, cfg.halo)?))
}

fn transport(cfg: &RunConfig) -> Result<(DiskDomain, TransportConfig), Failure> {
    Ok((DiskDomain::new(cfg.n_b, cfg.delta)?, TransportConfig::new(cfg.n_phi, cfg.ray_step)?))
}

fn write_config(cfg: &RunConfig, out: &Path) -> Status {
    Ok(fs::write(out.join("config.txt"), cfg.render())?)
}

fn simulate(cfg: &RunConfig, out: &Path) -> Status {
    let (domain, tc) = transport(cfg)?;
    let grid = grid(cfg)?;
    let mut effective = cfg.clone();
    match cfg.scenario.as_str() {
        "doppler" | "random" => {
            if cfg.scenario == "random" {
                effective.field = random_vector_field(cfg.seed, BumpKind::GaussianTruncated, 0.9)?;
            }
            let g = forward_doppler(&effective.field, &cfg.attenuation, &domain, tc);
            io::write_sinogram(&out.join("sinogram.csv"), &g)?;
            io::write_vector_field(&out.join("truth_field.csv"), &VectorFieldGrid::from_profile(grid, &effective.field), true)?;
        }
        "xray" => {
            let g = forward_xray(&cfg.source, &cfg.attenuation, &domain, tc);
            io::write_sinogram(&out.join("sinogram.csv"), &g)?;
            io::write_scalar_field(&out.join("truth_source.csv"), &ScalarFieldGrid::from_profile(grid, cfg.source.clone()), true)?;
        }
        "confusion" => {
            let pair = confusion_pair(cfg)?;
            effective.source = pair.source.clone();
            effective.field = pair.field.clone();
            io::write_sinogram(&out.join("xray.csv"), &pair.xray)?;
            io::write_sinogram(&out.join("doppler.csv"), &pair.doppler)?;
            io::write_vector_field(&out.join("confusion_field.csv"), &VectorFieldGrid::from_profile(grid, &pair.field), true)?;
            io::write_metrics(&out.join("confusion.txt"), &[("max_abs_difference".into(), pair.difference)])?;
        }
        other => return Err(Failure::Input(format!("unknown scenario '{other}' (doppler, random, xray, confusion)"))),
    }
    write_config(&effective, out)
}

fn print_report(report: &RangeReport) {
    for c in &report.checks {
        let verdict = match (c.gating, c.passed()) {
            (false, _) => "INFO",
            (true, true) => "PASS",
            (true, false) => "FAIL",
        };
        println!("{verdict} {} = {:.3e} (tol {:.1e})", c.name, c.value, c.tol);
    }
}

fn gate(report: &RangeReport) -> Status {
    match report.worst_failure() {
        None => Ok(()),
        Some(c) => Err(Failure::Gate(format!("range condition '{}' violated: {:.3e} >= {:.1e}", c.name, c.value, c.tol))),
    }
}

fn attenuation_grid(cfg: &RunConfig) -> Result<ScalarFieldGrid, Failure> {
    Ok(ScalarFieldGrid::from_profile(grid(cfg)?, cfg.attenuation.clone()))
}

/// Range report of a sinogram: Doppler data without attenuation use the
/// non-attenuated gates, with attenuation the weighted ones; X-ray data the
/// scalar characterization.
fn range_of(cfg: &RunConfig, g: &Sinogram) -> Result<RangeReport, Failure> {
    let attenuated = !cfg.attenuation.is_zero();
    Ok(match (g.tag, attenuated) {
        (DataTag::Doppler, false) => check_range_nonatt(g, cfg)?,
        (DataTag::Doppler, true) => check_range_att(g, &attenuation_grid(cfg)?, cfg)?,
        (DataTag::Xray, false) => check_range_scalar(g, cfg)?,
        (DataTag::Xray, true) => {
            return Err(Failure::Input("range conditions for attenuated X-ray data are not implemented".into()));
        }
    })
}

fn read_data(cfg: &RunConfig, path: &Path) -> Result<Sinogram, Failure> {
    let g = io::read_sinogram(path)?;
    if g.n_b != cfg.n_b || g.n_phi != cfg.n_phi {
        return Err(Failure::Input(format!(
            "sinogram is {} x {}, configuration expects {} x {}",
            g.n_b, g.n_phi, cfg.n_b, cfg.n_phi
        )));
    }
    if g.attenuation != cfg.attenuation.descriptor() {
        eprintln!("warning: sinogram was simulated with attenuation '{}', checking against '{}'", g.attenuation, cfg.attenuation.descriptor());
    }
    Ok(g)
}

fn check_range(cfg: &RunConfig, path: &Path, out: &Path) -> Status {
    let g = read_data(cfg, path)?;
    let report = range_of(cfg, &g)?;
    print_report(&report);
    io::write_metrics(&out.join("range.txt"), &report.metrics())?;
    gate(&report)
}

fn merge(into: &mut Vec<(String, f64)>, more: Vec<(String, f64)>) {
    for (k, v) in more {
        if !into.iter().any(|(key, _)| *key == k) {
            into.push((k, v));
        }
    }
}

fn reconstruct(cfg: &RunConfig, path: &Path, out: &Path) -> Status {
    let g = read_data(cfg, path)?;
    if g.tag != DataTag::Doppler {
        return Err(Failure::Input("reconstruction needs Doppler data".into()));
    }
    let grid = grid(cfg)?;
    let attenuated = !cfg.attenuation.is_zero();
    let outcome = if attenuated {
        reconstruct_att(&g, &ScalarFieldGrid::from_profile(grid.clone(), cfg.attenuation.clone()), grid.clone(), cfg)?
    } else {
        reconstruct_nonatt(&g, grid.clone(), cfg)?
    };
    print_report(outcome.range());
    let rep = match outcome {
        Outcome::Accepted(rep) => rep,
        Outcome::Rejected(report) => {
            io::write_metrics(&out.join("metrics.txt"), &report.metrics())?;
            return gate(&report);
        }
    };
    let mut metrics = rep.range.metrics();
    merge(&mut metrics, rep.metrics.clone());
    if cfg.field != VectorProfile::Zero {
        let truth = VectorFieldGrid::from_profile(grid, &cfg.field);
        metrics.push(("curl_defect".into(), curl_defect(&rep.field, &truth)?));
        if attenuated {
            metrics.push(("rel_l2_error".into(), relative_l2_error(&rep.field, &truth)?));
        }
    }
    io::write_vector_field(&out.join("field.csv"), &rep.field, true)?;
    io::write_scalar_field(&out.join("u0.csv"), &rep.u0, true)?;
    io::write_metrics(&out.join("metrics.txt"), &metrics)?;
    for (k, v) in &metrics {
        println!("{k} = {v:.6e}");
    }
    Ok(())
}

struct ConfusionPair {
    source: Profile,
    field: VectorProfile,
    xray: Sinogram,
    doppler: Sinogram,
    difference: f64,
}

fn confusion_pair(cfg: &RunConfig) -> Result<ConfusionPair, Failure> {
    if cfg.attenuation.is_zero() || cfg.psi.is_zero() {
        return Err(Failure::Input("the confusion pair needs a nonzero attenuation and a nonzero psi".into()));
    }
    let (domain, tc) = transport(cfg)?;
    let source = Profile::Product { factors: vec![cfg.attenuation.clone(), cfg.psi.clone()] };
    let field = confusion_field(&source, &cfg.attenuation)?;
    let xray = forward_xray(&source, &cfg.attenuation, &domain, tc);
    let doppler = forward_doppler(&field, &cfg.attenuation, &domain, tc);
    let difference = xray.values.iter().zip(&doppler.values).fold(0.0f64, |m, (x, d)| m.max((x - d).abs()));
    Ok(ConfusionPair { source, field, xray, doppler, difference })
}

fn confuse(cfg: &RunConfig, out: &Path) -> Status {
    let pair = confusion_pair(cfg)?;
    io::write_sinogram(&out.join("xray.csv"), &pair.xray)?;
    io::write_sinogram(&out.join("doppler.csv"), &pair.doppler)?;
    io::write_metrics(&out.join("confusion.txt"), &[("max_abs_difference".into(), pair.difference)])?;
    println!("max_abs_difference = {:.3e}", pair.difference);
    if pair.difference < TOL_CONFUSION {
        Ok(())
    } else {
        Err(Failure::Gate(format!("X-ray and Doppler data differ by {:.3e}", pair.difference)))
    }
}

fn validate(cfg: &RunConfig, flip: bool, out: &Path) -> Status {
    let a = attenuation_grid(cfg)?;
    let opts = HOptions { flip_perp: flip, ..cfg.h_options() };
    let v = validate_h(&a, cfg.n_phi, cfg.k_h, opts, FdOrder::Second, H_RAYS, cfg.seed)?;
    let metrics = v.metrics();
    io::write_metrics(&out.join("h_metrics.txt"), &metrics)?;
    let factor = IntegratingFactor::new(&a, cfg.n_phi, opts)?;
    let coarse = InteriorGrid::new(1.0 / 8.0, cfg.delta, 0)?;
    let points: Vec<_> = coarse.mask_indices().map(|k| coarse.node(k)).collect();
    io::write_h_modes(&out.join("h_modes.csv"), &exp_h_modes_with_derivatives(&factor, &points, cfg.k_h)?)?;
    let r = &v.identities;
    let gates = [
        ("transport_defect", v.transport, TOL_TRANSPORT),
        ("negative_mass", r.negative_mass, cfg.tol_h),
        ("cauchy_product_defect", r.cauchy_product, TOL_CAUCHY_PRODUCT),
        ("recurrence_defect", r.worst_recurrence(), TOL_RECURRENCE),
    ];
    let mut failed = None;
    for (name, value, tol) in gates {
        let ok = value < tol;
        println!("{} {name} = {value:.3e} (tol {tol:.1e})", if ok { "PASS" } else { "FAIL" });
        if !ok && failed.is_none() {
            failed = Some(format!("h identity '{name}' violated: {value:.3e} >= {tol:.1e}"));
        }
    }
    match failed {
        None => Ok(()),
        Some(msg) => Err(Failure::Gate(msg)),
    }
}
