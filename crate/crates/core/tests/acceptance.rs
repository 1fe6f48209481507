//! Desk-scale acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::sync::Arc;
use std::time::Instant;

use aatomo_core::aanalytic::{bukhgeim_cauchy_all, range_residual, CauchyOptions, SeqBoundary, SeqKind};
use aatomo_core::attenuation::{validate_h, FdOrder};
use aatomo_core::config::RunConfig;
use aatomo_core::fields::{random_bump, random_vector_field, BumpKind, Profile, ScalarFieldGrid, VectorFieldGrid, VectorProfile};
use aatomo_core::geometry::{DiskDomain, InteriorGrid};
use aatomo_core::reconstruct::{
    check_range_att, check_range_nonatt, check_range_scalar, confusion_field, curl_defect, reconstruct_att, reconstruct_att_ungated,
    reconstruct_nonatt, relative_l2_error, RangeReport,
};
use aatomo_core::transport::{forward_doppler, forward_xray, Sinogram, TransportConfig};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const REACH: f64 = 0.9;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn canonical() -> Profile {
    Profile::canonical_attenuation(0.5)
}

fn grid(cfg: &RunConfig) -> Arc<InteriorGrid> {
    Arc::new(InteriorGrid::new(cfg.pitch, cfg.delta, cfg.halo).unwrap())
}

fn doppler(field: &VectorProfile, a: &Profile, cfg: &RunConfig) -> Sinogram {
    let domain = DiskDomain::new(cfg.n_b, cfg.delta).unwrap();
    forward_doppler(field, a, &domain, TransportConfig::new(cfg.n_phi, cfg.ray_step).unwrap())
}

fn xray(f: &Profile, a: &Profile, cfg: &RunConfig) -> Sinogram {
    let domain = DiskDomain::new(cfg.n_b, cfg.delta).unwrap();
    forward_xray(f, a, &domain, TransportConfig::new(cfg.n_phi, cfg.ray_step).unwrap())
}

fn field(seed: u64) -> VectorProfile {
    random_vector_field(seed, BumpKind::GaussianTruncated, REACH).unwrap()
}

fn a_grid(cfg: &RunConfig) -> ScalarFieldGrid {
    ScalarFieldGrid::from_profile(grid(cfg), canonical())
}

/// Adds `2 eps S cos(beta + n phi)`, i.e. `eps S e^{+-i beta}` to the modes `+-n`,
/// where `S` is the sup norm of the data.
fn perturb(g: &Sinogram, n: i64, eps: f64) -> Sinogram {
    let s = g.sup_norm();
    let mut out = g.clone();
    for j in 0..g.n_b {
        for k in 0..g.n_phi {
            out.values[j * g.n_phi + k] += 2.0 * eps * s * (g.beta(j) + n as f64 * g.phi(k)).cos();
        }
    }
    out
}

fn worst(report: &RangeReport, filter: impl Fn(&str) -> bool) -> f64 {
    report.checks.iter().filter(|c| filter(&c.name)).fold(0.0, |m, c| m.max(c.value))
}

fn criterion_1() -> Verdict {
    let cfg = RunConfig::default();
    let start = Instant::now();
    let mut max = 0.0f64;
    for seed in SEEDS {
        let g = doppler(&field(seed), &Profile::Zero, &cfg);
        let r = check_range_nonatt(&g, &cfg).unwrap();
        max = max.max(worst(&r, |n| n == "even" || n.starts_with("aug_")));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        max < 1e-3 && secs < 300.0,
        format!("non-attenuated range: max even/augmented residual {max:.2e} (< 1e-3) over 5 fields, {secs:.1} s (< 300 s)"),
    )
}

fn criterion_2() -> Verdict {
    let cfg = RunConfig::default();
    let a = a_grid(&cfg);
    let (mut res, mut g0) = (0.0f64, 0.0f64);
    for seed in SEEDS {
        let g = doppler(&field(seed), &canonical(), &cfg);
        let r = check_range_att(&g, &a, &cfg).unwrap();
        res = res.max(r.get("even_h").unwrap()).max(r.get("odd_h").unwrap());
        g0 = g0.max(r.get("g0_limit").unwrap());
    }
    verdict(
        res < 1e-3 && g0 < 5e-3,
        format!("attenuated range: max weighted residual {res:.2e} (< 1e-3), max g0-limit defect {g0:.2e} (< 5e-3) over 5 fields"),
    )
}

fn criterion_3() -> Verdict {
    let cfg = RunConfig::default();
    let eps = 1e-2;
    let g = doppler(&field(1), &Profile::Zero, &cfg);
    // Mode 0 is unconstrained without attenuation.
    let modes: Vec<i64> = (1..=20).chain([24, 31, 40, 48, 63]).collect();
    let mut weakest = (f64::INFINITY, 0i64);
    for &n in &modes {
        let r = check_range_nonatt(&perturb(&g, n, eps), &cfg).unwrap();
        let m = r.max_gating();
        if m < weakest.0 {
            weakest = (m, n);
        }
    }
    let a = a_grid(&cfg);
    let ga = doppler(&field(1), &canonical(), &cfg);
    let mut weakest_att = (f64::INFINITY, 0i64);
    for n in [0, 1, 2, 3, 5, 8, 16] {
        let r = check_range_att(&perturb(&ga, n, eps), &a, &cfg).unwrap();
        let m = r.max_gating();
        if m < weakest_att.0 {
            weakest_att = (m, n);
        }
    }
    verdict(
        weakest.0 > 1e-2 && weakest_att.0 > 1e-2,
        format!(
            "negative controls at relative 1e-2: weakest max residual {:.2e} (mode {}) without attenuation, {:.2e} (mode {}) with (> 1e-2)",
            weakest.0, weakest.1, weakest_att.0, weakest_att.1
        ),
    )
}

fn criterion_4() -> Verdict {
    let cfg = RunConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let f = random_bump(&mut rng, BumpKind::GaussianTruncated, (0.45, 0.6), REACH).unwrap();
    let gx = xray(&f, &Profile::Zero, &cfg);
    let rx = check_range_nonatt(&gx, &cfg).unwrap();
    let aug = worst(&rx, |n| n.starts_with("aug_"));
    let gd = doppler(&field(4), &Profile::Zero, &cfg);
    let rs = check_range_scalar(&gd, &cfg).unwrap();
    let (even0, odd) = (rs.get("even_from_zero").unwrap(), rs.get("odd").unwrap());
    verdict(
        aug > cfg.tol_range && even0 > cfg.tol_range && odd < cfg.tol_range,
        format!(
            "discrimination: X-ray data augmented residual {aug:.2e} (> 1e-3); Doppler data scalar even residual {even0:.2e} (> 1e-3), odd control {odd:.2e} (< 1e-3)"
        ),
    )
}

fn criterion_5() -> Verdict {
    let cfg = RunConfig::default();
    let a = canonical();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut max = 0.0f64;
    for kind in [BumpKind::Polynomial, BumpKind::GaussianTruncated, BumpKind::Polynomial] {
        let psi = random_bump(&mut rng, kind, (0.3, 0.6), REACH).unwrap();
        let f = Profile::Product { factors: vec![a.clone(), psi] };
        let gx = xray(&f, &a, &cfg);
        let gd = doppler(&confusion_field(&f, &a).unwrap(), &a, &cfg);
        let d = gx.values.iter().zip(&gd.values).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        max = max.max(d);
    }
    verdict(max < 1e-6, format!("confusion identity: max |Doppler(-grad psi) - X-ray(a psi)| {max:.2e} (< 1e-6) over 3 bumps"))
}

/// Desk scale refined (`level < 0`) or coarsened (`level > 0`) in boundary nodes,
/// directions, pitch and mode counts together.
fn ladder(level: i32) -> RunConfig {
    let d = RunConfig::default();
    let mut c = d.clone();
    let scale = |v: usize| if level >= 0 { v >> level } else { v << (-level) };
    c.n_b = scale(d.n_b);
    c.n_phi = scale(d.n_phi);
    c.n_mode = scale(d.n_mode);
    c.m_seq = scale(d.m_seq);
    c.pitch = d.pitch * 2f64.powi(level);
    c.validate().unwrap();
    c
}

fn criterion_6() -> Verdict {
    let truth_field = field(1);
    let cfg = RunConfig::default();
    let g = grid(&cfg);
    let data = doppler(&truth_field, &canonical(), &cfg);
    let rep = reconstruct_att(&data, &a_grid(&cfg), g.clone(), &cfg).unwrap().accepted();
    let desk = rep.map(|r| relative_l2_error(&r.field, &VectorFieldGrid::from_profile(g, &truth_field)).unwrap());
    let mut errors = Vec::new();
    for level in [1, 0, -1] {
        if let (0, Some(e)) = (level, desk) {
            // Level 0 is the desk configuration; the gated run already produced it.
            errors.push(e);
            continue;
        }
        let c = ladder(level);
        let g = grid(&c);
        let data = doppler(&truth_field, &canonical(), &c);
        let rep = reconstruct_att_ungated(&data, &a_grid(&c), g.clone(), &c).unwrap();
        errors.push(relative_l2_error(&rep.field, &VectorFieldGrid::from_profile(g, &truth_field)).unwrap());
    }
    let decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    let desk_ok = desk.is_some_and(|e| e <= 0.05);
    verdict(
        desk_ok && decreasing,
        format!(
            "attenuated reconstruction: relative L2 error {} (<= 5%); refinement ladder {:.2e} > {:.2e} > {:.2e}",
            desk.map_or("rejected by range gate".to_string(), |e| format!("{e:.2e}")),
            errors[0],
            errors[1],
            errors[2]
        ),
    )
}

fn criterion_7() -> Verdict {
    let cfg = RunConfig::default();
    let g = grid(&cfg);
    let f = field(2);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let psi = random_bump(&mut rng, BumpKind::GaussianTruncated, (0.45, 0.6), REACH).unwrap();
    let gauged = VectorProfile::Sum { terms: vec![f.clone(), VectorProfile::Gradient { psi, scale: 1.0 }] };
    let ra = reconstruct_nonatt(&doppler(&f, &Profile::Zero, &cfg), g.clone(), &cfg).unwrap().accepted();
    let rb = reconstruct_nonatt(&doppler(&gauged, &Profile::Zero, &cfg), g.clone(), &cfg).unwrap().accepted();
    let (Some(ra), Some(rb)) = (ra, rb) else {
        return verdict(false, "non-attenuated reconstruction rejected by the range gate");
    };
    let truth = VectorFieldGrid::from_profile(g, &f);
    let curl = curl_defect(&ra.field, &truth).unwrap();
    let gauge = curl_defect(&rb.field, &ra.field).unwrap();
    verdict(
        curl <= 0.05 && gauge < 1e-4,
        format!("non-attenuated reconstruction: curl defect {curl:.2e} (<= 5%); gauge pair mutual curl defect {gauge:.2e} (< 1e-4)"),
    )
}

fn criterion_8() -> Verdict {
    let cfg = RunConfig::default();
    let g = doppler(&field(3), &Profile::Zero, &cfg);
    let rep = reconstruct_nonatt(&g, grid(&cfg), &cfg).unwrap().accepted();
    let Some(rep) = rep else {
        return verdict(false, "non-attenuated reconstruction rejected by the range gate");
    };
    let d = rep.metric("conjugacy_defect").unwrap();
    verdict(d < 1e-4, format!("conjugation identity: defect {d:.2e} (< 1e-4) for m <= {}", cfg.m_max))
}

fn criterion_9() -> Verdict {
    let cfg = RunConfig::default();
    let opts = cfg.h_options();
    let desk = validate_h(&a_grid(&cfg), cfg.n_phi, cfg.k_h, opts, FdOrder::Second, 100, 9).unwrap();
    let r = desk.identities;
    let mut rec = Vec::new();
    for pitch in [1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0] {
        let c = RunConfig { pitch, ..cfg.clone() };
        let v = if pitch == cfg.pitch { desk } else { validate_h(&a_grid(&c), c.n_phi, c.k_h, opts, FdOrder::Second, 1, 9).unwrap() };
        rec.push(v.identities.worst_recurrence());
    }
    let rates: Vec<f64> = rec.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let second_order = rates.iter().all(|&p| p > 1.7);
    let pass = desk.transport < 1e-3 && r.negative_mass < 1e-4 && r.cauchy_product < 1e-6 && r.worst_recurrence() < 5e-3 && second_order;
    verdict(
        pass,
        format!(
            "h identities: transport {:.2e} (< 1e-3), negative mass {:.2e} (< 1e-4), alpha*beta {:.2e} (< 1e-6), recurrences {:.2e} (< 5e-3), observed orders {:.2} {:.2} (~2)",
            desk.transport,
            r.negative_mass,
            r.cauchy_product,
            r.worst_recurrence(),
            rates[0],
            rates[1]
        ),
    )
}

fn criterion_10() -> Verdict {
    let n_b = 512;
    let one = |_: Complex64| Complex64::new(1.0, 0.0);
    let id = |z: Complex64| z;
    let conj = |z: Complex64| z.conj();
    let neg = |z: Complex64| -z;
    type Trace<'a> = &'a dyn Fn(Complex64) -> Complex64;
    let cases: [(&str, Vec<Trace>); 3] = [("<1, 0, ...>", vec![&one]), ("<z, 0, ...>", vec![&id]), ("<conj z, -z, 0, ...>", vec![&conj, &neg])];
    let points: Vec<Complex64> = (0..40).map(|i| Complex64::from_polar(0.9 * ((i as f64 + 0.5) / 40.0).sqrt(), 2.4 * i as f64)).collect();
    let (mut cauchy, mut hilbert) = (0.0f64, 0.0f64);
    for (_, traces) in &cases {
        let seq = SeqBoundary::from_traces(SeqKind::Plain, n_b, traces, 6);
        hilbert = hilbert.max(range_residual(&seq));
        let t = bukhgeim_cauchy_all(&seq, &points, false, CauchyOptions::default());
        for (p, &z) in points.iter().enumerate() {
            for s in 0..6 {
                let exact = traces.get(s).map_or(Complex64::new(0.0, 0.0), |f| f(z));
                cauchy = cauchy.max((t.slot(s).unwrap()[p] - exact).norm());
            }
        }
    }
    verdict(
        cauchy < 1e-8 && hilbert < 1e-5,
        format!("operator oracles: Cauchy reproduction error {cauchy:.2e} (< 1e-8), Hilbert residual {hilbert:.2e} (< 1e-5)"),
    )
}

fn main() {
    let criteria: [(u32, fn() -> Verdict); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let only: Option<u32> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = Vec::new();
    for (n, run) in criteria {
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let start = Instant::now();
        let v = run();
        let status = if v.pass { "PASS" } else { "FAIL" };
        println!("{status} criterion {n:>2}: {} [{:.1} s]", v.detail, start.elapsed().as_secs_f64());
        if !v.pass {
            failed.push(n);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
