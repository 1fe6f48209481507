//! Range gates and reconstruction of vector fields from Doppler data, with and
//! without attenuation, plus the X-ray/Doppler confusion construction.

use std::sync::Arc;

use num_complex::Complex64;

use crate::aanalytic::{build_sequences, conjugacy_defect, range_residual, CauchyEvaluator, SeqBoundary, SeqKind, SlotRequest, TailField};
use crate::attenuation::{exp_h_modes_with_derivatives, mode_convolution, weighted_data_modes, ConvolutionDirection, IntegratingFactor, WeightedData};
use crate::config::RunConfig;
use crate::error::{config, domain, Result};
use crate::fields::{partials, wirtinger_complex, PoissonExtension, Profile, ScalarFieldGrid, VectorFieldGrid, VectorProfile};
use crate::geometry::InteriorGrid;
use crate::spectral::{angular_decompose, ModeBank};
use crate::transport::Sinogram;

/// One named condition with its measured value and threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeCheck {
    pub name: String,
    pub value: f64,
    pub tol: f64,
    /// Informational entries are reported but never fail the gate.
    pub gating: bool,
}

impl RangeCheck {
    pub fn passed(&self) -> bool {
        !self.gating || self.value < self.tol
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RangeReport {
    pub checks: Vec<RangeCheck>,
}

impl RangeReport {
    fn push(&mut self, name: impl Into<String>, value: f64, tol: f64, gating: bool) {
        self.checks.push(RangeCheck { name: name.into(), value, tol, gating });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(RangeCheck::passed)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.checks.iter().find(|c| c.name == name).map(|c| c.value)
    }

    /// The failing check furthest above its threshold.
    pub fn worst_failure(&self) -> Option<&RangeCheck> {
        self.checks.iter().filter(|c| !c.passed()).max_by(|a, b| (a.value / a.tol).total_cmp(&(b.value / b.tol)))
    }

    /// `key = value` pairs: `residual_<name>` for residuals, `g0_defect` for the boundary limit.
    pub fn metrics(&self) -> Vec<(String, f64)> {
        self.checks
            .iter()
            .map(|c| {
                let key = if c.name == "g0_limit" { "g0_defect".to_string() } else { format!("residual_{}", c.name) };
                (key, c.value)
            })
            .collect()
    }

    /// Largest gating value, whether or not it passes.
    pub fn max_gating(&self) -> f64 {
        self.checks.iter().filter(|c| c.gating).fold(0.0, |m, c| m.max(c.value))
    }
}

/// Range residuals of non-attenuated Doppler data: the even sequence and the
/// augmented odd sequences gate; the plain odd sequence is reported.
pub fn nonatt_range_from_bank(bank: &ModeBank, cfg: &RunConfig) -> Result<RangeReport> {
    let seqs = build_sequences(bank, cfg.m_max, cfg.m_seq)?;
    let mut report = RangeReport::default();
    report.push("even", range_residual(&seqs.even), cfg.tol_range, true);
    for (i, aug) in seqs.augmented.iter().enumerate() {
        report.push(format!("aug_{}", i + 1), range_residual(aug), cfg.tol_range, true);
    }
    report.push("odd", range_residual(&seqs.odd), cfg.tol_range, false);
    Ok(report)
}

pub fn check_range_nonatt(g: &Sinogram, cfg: &RunConfig) -> Result<RangeReport> {
    nonatt_range_from_bank(&angular_decompose(g, cfg.n_mode)?, cfg)
}

/// Residuals of the scalar (X-ray) characterization: `<g_0, g_-2, ...>` gates,
/// and the odd sequence is reported alongside.
pub fn check_range_scalar(g: &Sinogram, cfg: &RunConfig) -> Result<RangeReport> {
    let bank = angular_decompose(g, cfg.n_mode)?;
    let even0 = SeqBoundary::from_bank(&bank, SeqKind::EvenFromZero, cfg.m_seq)?;
    let odd = SeqBoundary::from_bank(&bank, SeqKind::Odd, cfg.m_seq)?;
    let mut report = RangeReport::default();
    report.push("even_from_zero", range_residual(&even0), cfg.tol_range, true);
    report.push("odd", range_residual(&odd), cfg.tol_range, true);
    Ok(report)
}

/// Evaluates the attenuated `u`-system at arbitrary points.
pub struct AttenuatedSolver<'a> {
    factor: &'a IntegratingFactor,
    a: &'a ScalarFieldGrid,
    even: CauchyEvaluator,
    odd: CauchyEvaluator,
    k_h: usize,
}

/// `u_{-1}`, `u_{-2}` with derivatives and `u_0 = -2 Re d u_{-1} / a` at a set of points.
pub struct AttenuatedModes {
    pub u: TailField,
    pub u0: Vec<f64>,
}

impl<'a> AttenuatedSolver<'a> {
    pub fn new(weighted: &WeightedData, factor: &'a IntegratingFactor, a: &'a ScalarFieldGrid, cfg: &RunConfig) -> Self {
        let opts = cfg.cauchy();
        Self {
            factor,
            a,
            even: CauchyEvaluator::new(&weighted.even, opts),
            odd: CauchyEvaluator::new(&weighted.odd, opts),
            k_h: cfg.k_h.min(2 * weighted.even.n_slots - 2),
        }
    }

    pub fn modes(&self, points: &[Complex64]) -> Result<AttenuatedModes> {
        let h = exp_h_modes_with_derivatives(self.factor, points, self.k_h)?;
        // plain slot p holds v_{-(p+1)}: odd slot p/2 for even p, even slot (p-1)/2 for odd p
        let n_plain = self.k_h + 2;
        let n_odd = n_plain.div_ceil(2);
        let n_even = n_plain / 2;
        let req = |n: usize| SlotRequest { values: (0..n).collect(), derivatives: (0..n).collect() };
        let odd = self.odd.evaluate(points, &req(n_odd));
        let even = self.even.evaluate(points, &req(n_even));
        let pick = |p: usize| if p.is_multiple_of(2) { (&odd, p / 2) } else { (&even, p / 2) };
        let np = points.len();
        let mut v = TailField {
            kind: SeqKind::Plain,
            points: points.to_vec(),
            slots: (0..n_plain).collect(),
            values: Vec::with_capacity(n_plain),
            deriv_slots: (0..n_plain).collect(),
            d: Vec::with_capacity(n_plain),
            dbar: Vec::with_capacity(n_plain),
            errors: odd.errors.iter().chain(&even.errors).cloned().collect(),
            quad_len: (0..np).map(|p| odd.quad_len[p].max(even.quad_len[p])).collect(),
        };
        for p in 0..n_plain {
            let (t, s) = pick(p);
            v.values.push(t.values[s].clone());
            v.d.push(t.d[s].clone());
            v.dbar.push(t.dbar[s].clone());
        }
        let u = mode_convolution(&v, &h, ConvolutionDirection::UFromV)?;
        let du1 = u.d_slot(0).unwrap_or(&[]).to_vec();
        let mut u0 = Vec::with_capacity(np);
        for (p, &z) in points.iter().enumerate() {
            let a = self.a.sample(z);
            if !(a > 0.0) {
                return domain(format!("attenuation must be positive inside the disk; a({z}) = {a}"));
            }
            u0.push(-2.0 * du1[p].re / a);
        }
        Ok(AttenuatedModes { u, u0 })
    }
}

/// Radial step of the g0 limit check, in units of `delta`. `u_0` divides by `a`,
/// which vanishes cubically at the boundary, so the nearest radius trades
/// amplified mode truncation against extrapolation error.
pub const G0_STEP: f64 = 1.5;

/// Largest `|3 u0(r1) - 3 u0(r2) + u0(r3) - g_0|` over boundary nodes, with
/// `r_i = 1 - i step` along each boundary radius, relative to the data sup norm.
pub fn g0_limit_defect(solver: &AttenuatedSolver<'_>, g: &Sinogram, g0: &[Complex64], step: f64) -> Result<f64> {
    let n_b = g.n_b;
    let mut points = Vec::with_capacity(3 * n_b);
    for i in 1..=3 {
        let r = 1.0 - i as f64 * step;
        for j in 0..n_b {
            points.push(Complex64::from_polar(r, g.beta(j)));
        }
    }
    let m = solver.modes(&points)?;
    let scale = g.sup_norm();
    if scale == 0.0 {
        return Ok(0.0);
    }
    let worst = (0..n_b)
        .map(|j| {
            let lim = 3.0 * m.u0[j] - 3.0 * m.u0[n_b + j] + m.u0[2 * n_b + j];
            (lim - g0[j].re).abs()
        })
        .fold(0.0, f64::max);
    Ok(worst / scale)
}

struct AttenuatedRange {
    report: RangeReport,
    weighted: WeightedData,
}

fn att_range(g: &Sinogram, factor: &IntegratingFactor, a: &ScalarFieldGrid, cfg: &RunConfig) -> Result<AttenuatedRange> {
    let weighted = weighted_data_modes(g, factor, cfg.n_mode, cfg.m_seq)?;
    let g0 = angular_decompose(g, cfg.n_mode)?.mode(0);
    let mut report = RangeReport::default();
    report.push("even_h", range_residual(&weighted.even), cfg.tol_range, true);
    report.push("odd_h", range_residual(&weighted.odd), cfg.tol_range, true);
    let solver = AttenuatedSolver::new(&weighted, factor, a, cfg);
    report.push("g0_limit", g0_limit_defect(&solver, g, &g0, G0_STEP * cfg.delta)?, cfg.tol_g0, true);
    Ok(AttenuatedRange { report, weighted })
}

/// Range residuals of attenuated Doppler data, including the boundary limit of `u_0`.
pub fn check_range_att(g: &Sinogram, a: &ScalarFieldGrid, cfg: &RunConfig) -> Result<RangeReport> {
    let factor = IntegratingFactor::new(a, g.n_phi, cfg.h_options())?;
    Ok(att_range(g, &factor, a, cfg)?.report)
}

/// A reconstructed field and the diagnostics gathered on the way.
#[derive(Debug, Clone)]
pub struct ReconstructionReport {
    pub field: VectorFieldGrid,
    pub u0: ScalarFieldGrid,
    pub range: RangeReport,
    pub metrics: Vec<(String, f64)>,
}

impl ReconstructionReport {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|m| m.0 == name).map(|m| m.1).or_else(|| self.range.get(name))
    }
}

#[derive(Debug, Clone)]
pub enum Outcome {
    Accepted(Box<ReconstructionReport>),
    /// The data failed a range gate; no field is produced.
    Rejected(RangeReport),
}

impl Outcome {
    pub fn accepted(self) -> Option<ReconstructionReport> {
        match self {
            Outcome::Accepted(r) => Some(*r),
            Outcome::Rejected(_) => None,
        }
    }

    pub fn range(&self) -> &RangeReport {
        match self {
            Outcome::Accepted(r) => &r.range,
            Outcome::Rejected(r) => r,
        }
    }
}

/// Coarse point set used for the conjugation diagnostic.
fn diagnostic_points(delta: f64) -> Result<Vec<Complex64>> {
    let coarse = InteriorGrid::new(1.0 / 32.0, delta, 0)?;
    Ok(coarse.mask_indices().map(|k| coarse.node(k)).collect())
}

/// Conjugation defect of the augmented tails against the odd tail on the given points.
pub fn conjugacy_from_bank(bank: &ModeBank, cfg: &RunConfig, points: &[Complex64]) -> Result<f64> {
    let seqs = build_sequences(bank, cfg.m_max, cfg.m_seq)?;
    let opts = cfg.cauchy();
    let odd = CauchyEvaluator::new(&seqs.odd, opts).evaluate(points, &SlotRequest { values: (0..cfg.m_max).collect(), derivatives: vec![] });
    let heads: Vec<TailField> = seqs
        .augmented
        .iter()
        .map(|s| CauchyEvaluator::new(s, opts).evaluate(points, &SlotRequest { values: vec![0], derivatives: vec![] }))
        .collect();
    Ok(conjugacy_defect(&heads, &odd))
}

/// Non-attenuated reconstruction: `u_0` is the harmonic extension of `g_0`,
/// `u_{-2}` the head of the Bukhgeim–Cauchy extension of the even sequence, and
/// `f_1 = dbar u_0 + d u_{-2}`. The result is determined up to a gradient.
pub fn reconstruct_nonatt(g: &Sinogram, grid: Arc<InteriorGrid>, cfg: &RunConfig) -> Result<Outcome> {
    let bank = angular_decompose(g, cfg.n_mode)?;
    let range = nonatt_range_from_bank(&bank, cfg)?;
    if !range.passed() {
        return Ok(Outcome::Rejected(range));
    }
    let seqs = build_sequences(&bank, cfg.m_max, cfg.m_seq)?;
    let nodes = grid.nodes();
    let even = CauchyEvaluator::new(&seqs.even, cfg.cauchy()).evaluate(nodes, &SlotRequest { values: vec![0], derivatives: vec![0] });
    if let Some((p, msg)) = even.errors.first() {
        return domain(format!("node {p}: {msg}"));
    }
    let poisson = PoissonExtension::new(&bank.mode(0))?;
    let d_um2 = even.d_slot(0).unwrap_or(&[]);
    let mut f1 = Vec::with_capacity(nodes.len());
    let mut u0 = Vec::with_capacity(nodes.len());
    for (k, &z) in nodes.iter().enumerate() {
        f1.push(poisson.dbar(z) + d_um2[k]);
        u0.push(poisson.value(z).re);
    }
    let mut metrics = vec![("conjugacy_defect".to_string(), conjugacy_from_bank(&bank, cfg, &diagnostic_points(cfg.delta)?)?)];
    metrics.push(("max_quadrature_length".into(), even.quad_len.iter().copied().max().unwrap_or(0) as f64));
    Ok(Outcome::Accepted(Box::new(ReconstructionReport {
        field: VectorFieldGrid::from_source(grid.clone(), &f1),
        u0: ScalarFieldGrid::from_values(grid, u0)?,
        range,
        metrics,
    })))
}

/// Attenuated reconstruction: `v` tails from the weighted data, `u = beta * v`,
/// `u_0 = -2 Re d u_{-1} / a` and `f_1 = dbar u_0 + d u_{-2} + a u_{-1}`.
pub fn reconstruct_att(g: &Sinogram, a: &ScalarFieldGrid, grid: Arc<InteriorGrid>, cfg: &RunConfig) -> Result<Outcome> {
    let factor = att_factor(g, a, &grid, cfg)?;
    let ar = att_range(g, &factor, a, cfg)?;
    if !ar.report.passed() {
        return Ok(Outcome::Rejected(ar.report));
    }
    Ok(Outcome::Accepted(Box::new(att_field(ar, &factor, a, grid, cfg)?)))
}

/// The attenuated inversion run whatever the range gates say, for convergence
/// studies at resolutions where the gates are known to be out of reach. The
/// report still carries the range checks.
pub fn reconstruct_att_ungated(g: &Sinogram, a: &ScalarFieldGrid, grid: Arc<InteriorGrid>, cfg: &RunConfig) -> Result<ReconstructionReport> {
    let factor = att_factor(g, a, &grid, cfg)?;
    let ar = att_range(g, &factor, a, cfg)?;
    att_field(ar, &factor, a, grid, cfg)
}

fn att_factor(g: &Sinogram, a: &ScalarFieldGrid, grid: &InteriorGrid, cfg: &RunConfig) -> Result<IntegratingFactor> {
    for k in grid.mask_indices() {
        let z = grid.node(k);
        if !(a.sample(z) > 0.0) {
            return domain(format!("attenuation must be positive on the mask; a({z}) = {}", a.sample(z)));
        }
    }
    IntegratingFactor::new(a, g.n_phi, cfg.h_options())
}

fn att_field(ar: AttenuatedRange, factor: &IntegratingFactor, a: &ScalarFieldGrid, grid: Arc<InteriorGrid>, cfg: &RunConfig) -> Result<ReconstructionReport> {
    let solver = AttenuatedSolver::new(&ar.weighted, factor, a, cfg);
    let nodes = grid.nodes();
    let m = solver.modes(nodes)?;
    if let Some((p, msg)) = m.u.errors.first() {
        return domain(format!("node {p}: {msg}"));
    }
    let u0c: Vec<Complex64> = m.u0.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let w = wirtinger_complex(&grid, &u0c);
    let (u1, u2) = (m.u.slot(0).unwrap_or(&[]), m.u.d_slot(1).unwrap_or(&[]));
    let nan = Complex64::new(f64::NAN, f64::NAN);
    let f1: Vec<Complex64> = nodes
        .iter()
        .enumerate()
        .map(|(k, &z)| match w.dbar[k] {
            Some(db) => db + u2[k] + u1[k] * a.sample(z),
            None => nan,
        })
        .collect();
    let mut metrics = vec![("g0_defect".to_string(), ar.report.get("g0_limit").unwrap_or(f64::NAN))];
    metrics.push(("max_quadrature_length".into(), m.u.quad_len.iter().copied().max().unwrap_or(0) as f64));
    Ok(ReconstructionReport {
        field: VectorFieldGrid::from_source(grid.clone(), &f1),
        u0: ScalarFieldGrid::from_values(grid, m.u0)?,
        range: ar.report,
        metrics,
    })
}

/// `F = -grad psi` for a source given in the factored form `f = a psi`.
pub fn confusion_field(f: &Profile, a: &Profile) -> Result<VectorProfile> {
    if f.is_zero() {
        return Ok(VectorProfile::Zero);
    }
    let Profile::Product { factors } = f else {
        return config("the source must be given as a product a * psi");
    };
    let Some(pos) = factors.iter().position(|p| p == a) else {
        return config("no factor of the source equals the attenuation");
    };
    let mut rest: Vec<Profile> = factors.clone();
    rest.remove(pos);
    let psi = match rest.len() {
        0 => Profile::Constant { value: 1.0 },
        1 => rest.pop().unwrap_or(Profile::Zero),
        _ => Profile::Product { factors: rest },
    };
    if psi.support().is_none() {
        return config("psi must be compactly supported in the disk");
    }
    Ok(VectorProfile::Gradient { psi, scale: -1.0 })
}

fn curl_at(grid: &InteriorGrid, values: &[Complex64], k: usize) -> Option<f64> {
    let (dx, dy, _) = partials(grid, values, k)?;
    // curl F = d1 F2 - d2 F1 with F packed as F1 + i F2
    Some(dx.im - dy.re)
}

fn shared_grid(a: &VectorFieldGrid, b: &VectorFieldGrid) -> Result<()> {
    if !Arc::ptr_eq(&a.grid, &b.grid) && (a.grid.len() != b.grid.len() || a.grid.pitch() != b.grid.pitch()) {
        return config("fields live on different grids");
    }
    Ok(())
}

/// `||curl(F_a - F_b)|| / ||curl F_b||` in discrete L2 over mask nodes with a stencil.
/// Falls back to `||curl F_a||`, then to the absolute norm, when the reference curl vanishes.
pub fn curl_defect(fa: &VectorFieldGrid, fb: &VectorFieldGrid) -> Result<f64> {
    shared_grid(fa, fb)?;
    let grid = &fa.grid;
    let diff: Vec<Complex64> = fa.values.iter().zip(&fb.values).map(|(a, b)| a - b).collect();
    let (mut num, mut den_a, mut den_b) = (0.0, 0.0, 0.0);
    for k in grid.mask_indices() {
        let (Some(cd), Some(ca), Some(cb)) = (curl_at(grid, &diff, k), curl_at(grid, &fa.values, k), curl_at(grid, &fb.values, k)) else {
            continue;
        };
        if !(cd.is_finite() && ca.is_finite() && cb.is_finite()) {
            continue;
        }
        num += cd * cd;
        den_a += ca * ca;
        den_b += cb * cb;
    }
    let den = if den_b > 0.0 { den_b } else { den_a };
    Ok(if den > 0.0 { (num / den).sqrt() } else { num.sqrt() })
}

/// `||F_rec - F_true|| / ||F_true||` in discrete L2 over the mask.
pub fn relative_l2_error(rec: &VectorFieldGrid, truth: &VectorFieldGrid) -> Result<f64> {
    shared_grid(rec, truth)?;
    let (mut num, mut den) = (0.0, 0.0);
    for k in rec.grid.mask_indices() {
        num += (rec.values[k] - truth.values[k]).norm_sqr();
        den += truth.values[k].norm_sqr();
    }
    Ok(if den > 0.0 { (num / den).sqrt() } else { num.sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn psi() -> Profile {
        Profile::parse("poly(0.1,-0.2,0.5,1)").unwrap()
    }

    #[test]
    fn confusion_examples() {
        let a = Profile::canonical_attenuation(0.5);
        assert_eq!(confusion_field(&Profile::Zero, &a).unwrap(), VectorProfile::Zero);
        let f = Profile::Product { factors: vec![a.clone(), psi()] };
        let field = confusion_field(&f, &a).unwrap();
        let z = Complex64::new(0.2, -0.1);
        assert!((field.value(z) + psi().gradient(z)).norm() < 1e-15);
        assert!(confusion_field(&psi(), &a).is_err());
        let radial = Profile::Product { factors: vec![a.clone(), Profile::parse("poly(0,0,0.5,1)").unwrap()] };
        let r = confusion_field(&radial, &a).unwrap();
        for z in [Complex64::new(0.2, 0.1), Complex64::new(-0.1, 0.3)] {
            let v = r.value(z);
            assert!((v.re * z.im - v.im * z.re).abs() < 1e-14);
        }
    }

    #[test]
    fn curl_defect_examples() {
        let grid = Arc::new(InteriorGrid::new(1.0 / 64.0, 0.05, 2).unwrap());
        let f = VectorProfile::Rotated { psi: psi(), scale: 1.0 };
        let fa = VectorFieldGrid::from_profile(grid.clone(), &f);
        assert_eq!(curl_defect(&fa, &fa).unwrap(), 0.0);
        let g = VectorProfile::Sum { terms: vec![f.clone(), VectorProfile::Gradient { psi: Profile::parse("gauss(0.3,0.1,0.5,2)").unwrap(), scale: 1.0 }] };
        let fb = VectorFieldGrid::from_profile(grid.clone(), &g);
        assert!(curl_defect(&fb, &fa).unwrap() < 1e-3);
        let other = VectorFieldGrid::from_profile(grid, &VectorProfile::Rotated { psi: Profile::parse("poly(-0.4,0.3,0.4,1)").unwrap(), scale: 1.0 });
        assert!(curl_defect(&other, &fa).unwrap() > 0.5);
    }
}
