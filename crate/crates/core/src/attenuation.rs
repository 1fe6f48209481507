//! The integrating factor `h = Da - (1/2)(I - iH) Ra(z . theta_perp, theta)`,
//! the angular modes of `exp(-h)` and `exp(h)`, their identities, and the mode
//! convolutions between the attenuated and non-attenuated systems.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::aanalytic::{SeqBoundary, SeqKind, TailField};
use crate::error::{config, Result};
use crate::fields::{partials, partials_second, wirtinger_from_partials, Profile, ScalarFieldGrid};
use crate::geometry::{chord_times, direction, perpendicular, InteriorGrid};
use crate::spectral::{decompose_rows, line_hilbert, line_transform, ModeBank, UniformTable, HILBERT_PAD};
use crate::transport::{line_integral, Layout, RayIntegrand, Sinogram};

/// Offsets tabulated for `Ra` and its Hilbert transform.
pub const DEFAULT_RADON_SAMPLES: usize = 4097;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HOptions {
    pub radon_samples: usize,
    pub ray_step: f64,
    /// Debug switch: use `-theta_perp` in place of `theta_perp`.
    pub flip_perp: bool,
}

impl Default for HOptions {
    fn default() -> Self {
        Self { radon_samples: DEFAULT_RADON_SAMPLES, ray_step: crate::transport::DEFAULT_RAY_STEP, flip_perp: false }
    }
}

struct GradComponent<'a> {
    profile: &'a Profile,
    axis: usize,
}

impl RayIntegrand for GradComponent<'_> {
    fn eval(&self, z: Complex64, _theta: Complex64) -> f64 {
        let g = self.profile.gradient(z);
        if self.axis == 0 {
            g.re
        } else {
            g.im
        }
    }

    fn layout(&self) -> Layout {
        self.profile.layout()
    }

    fn is_zero(&self) -> bool {
        self.profile.is_zero()
    }

    fn descriptor(&self) -> String {
        format!("grad{}({})", self.axis + 1, self.profile.descriptor())
    }
}

/// Tabulated ingredients of `h` for one attenuation and one direction grid.
pub struct IntegratingFactor {
    a: ScalarFieldGrid,
    n_phi: usize,
    ra: Vec<UniformTable>,
    hra: Vec<UniformTable>,
    dra: Vec<UniformTable>,
    hdra: Vec<UniformTable>,
    opts: HOptions,
    trivial: bool,
}

fn derivative_table(t: &UniformTable) -> UniformTable {
    let v = &t.values;
    let n = v.len();
    let h = t.ds;
    let values = (0..n)
        .map(|i| {
            if i >= 2 && i + 2 < n {
                (v[i - 2] - v[i + 2] + 8.0 * (v[i + 1] - v[i - 1])) / (12.0 * h)
            } else if i >= 1 && i + 1 < n {
                (v[i + 1] - v[i - 1]) / (2.0 * h)
            } else {
                0.0
            }
        })
        .collect();
    UniformTable { s0: t.s0, ds: t.ds, values }
}

impl IntegratingFactor {
    pub fn new(a: &ScalarFieldGrid, n_phi: usize, opts: HOptions) -> Result<Self> {
        if n_phi < 4 {
            return config(format!("direction count must be at least 4, got {n_phi}"));
        }
        let trivial = RayIntegrand::is_zero(a);
        let table = line_transform(a, n_phi, opts.radon_samples, 1.0, opts.ray_step)?;
        let mut ra = table.rows;
        if opts.flip_perp {
            // the flipped perpendicular maps the offset s to -s
            for row in &mut ra {
                row.values.reverse();
            }
        }
        let s = table_s(&ra[0]);
        let hilbert = |rows: &[UniformTable]| -> Result<Vec<UniformTable>> {
            rows.iter()
                .map(|r| Ok(UniformTable { s0: r.s0, ds: r.ds, values: line_hilbert(&s, &r.values, HILBERT_PAD)? }))
                .collect()
        };
        let hra = hilbert(&ra)?;
        let dra: Vec<UniformTable> = ra.iter().map(derivative_table).collect();
        let hdra = hilbert(&dra)?;
        Ok(Self { a: a.clone(), n_phi, ra, hra, dra, hdra, opts, trivial })
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    pub fn is_trivial(&self) -> bool {
        self.trivial
    }

    fn phi(&self, k: usize) -> f64 {
        2.0 * PI * k as f64 / self.n_phi as f64
    }

    fn perp(&self, k: usize) -> Complex64 {
        let p = perpendicular(self.phi(k));
        if self.opts.flip_perp {
            -p
        } else {
            p
        }
    }

    fn da(&self, z: Complex64, k: usize) -> Result<f64> {
        let phi = self.phi(k);
        let (_, tau) = chord_times(z, phi)?;
        Ok(line_integral(&self.a, z, direction(phi), 0.0, tau.max(0.0), self.opts.ray_step))
    }

    /// `h(z, theta_k)`.
    pub fn h(&self, z: Complex64, k: usize) -> Result<Complex64> {
        if self.trivial {
            return Ok(Complex64::new(0.0, 0.0));
        }
        let p = self.perp(k);
        let s = z.re * p.re + z.im * p.im;
        let da = self.da(z, k)?;
        Ok(Complex64::new(da - 0.5 * self.ra[k].eval(s), 0.5 * self.hra[k].eval(s)))
    }

    /// `(h, d h, dbar h)` at `(z, theta_k)`.
    pub fn h_with_derivatives(&self, z: Complex64, k: usize) -> Result<(Complex64, Complex64, Complex64)> {
        let zero = Complex64::new(0.0, 0.0);
        if self.trivial {
            return Ok((zero, zero, zero));
        }
        let h = self.h(z, k)?;
        let (grad_da, p) = match &self.a.profile {
            Some(profile) => (self.da_gradient(profile, z, k)?, self.perp(k)),
            None => {
                // sampled attenuation: centred differences of Da
                let eps = 1e-5;
                let dx = (self.da(z + eps, k)? - self.da(z - eps, k)?) / (2.0 * eps);
                let iy = Complex64::new(0.0, eps);
                let dy = (self.da(z + iy, k)? - self.da(z - iy, k)?) / (2.0 * eps);
                (Complex64::new(dx, dy), self.perp(k))
            }
        };
        let s = z.re * p.re + z.im * p.im;
        // s = x p1 + y p2, so d s = (p1 - i p2)/2 and dbar s = (p1 + i p2)/2
        let ds = Complex64::new(0.5 * p.re, -0.5 * p.im);
        let dbs = ds.conj();
        // h = Da - (Ra - i HRa)/2, differentiated through s
        let line = Complex64::new(self.dra[k].eval(s), -self.hdra[k].eval(s));
        let (dbar_da, d_da) = wirtinger_from_partials(Complex64::new(grad_da.re, 0.0), Complex64::new(grad_da.im, 0.0));
        Ok((h, d_da - 0.5 * ds * line, dbar_da - 0.5 * dbs * line))
    }

    /// Gradient of `Da` packed as `d1 + i d2`.
    fn da_gradient(&self, profile: &Profile, z: Complex64, k: usize) -> Result<Complex64> {
        let phi = self.phi(k);
        let theta = direction(phi);
        let (_, tau) = chord_times(z, phi)?;
        let tau = tau.max(0.0);
        let g1 = line_integral(&GradComponent { profile, axis: 0 }, z, theta, 0.0, tau, self.opts.ray_step);
        let g2 = line_integral(&GradComponent { profile, axis: 1 }, z, theta, 0.0, tau, self.opts.ray_step);
        let mut g = Complex64::new(g1, g2);
        let exit = z + theta * tau;
        let a_exit = profile.value(exit);
        let normal = exit.re * theta.re + exit.im * theta.im;
        if a_exit != 0.0 && normal > 0.0 {
            // grad tau_+ = -exit / (exit . theta)
            g -= exit * (a_exit / normal);
        }
        Ok(g)
    }

    /// `h(z, theta_k)` for all directions.
    pub fn row(&self, z: Complex64) -> Result<Vec<Complex64>> {
        (0..self.n_phi).map(|k| self.h(z, k)).collect()
    }
}

fn table_s(t: &UniformTable) -> Vec<f64> {
    (0..t.values.len()).map(|i| t.s(i)).collect()
}

/// `h` on a list of points and all direction angles, row-major by point.
#[derive(Debug, Clone)]
pub struct HField {
    pub points: Vec<Complex64>,
    pub n_phi: usize,
    pub values: Vec<Complex64>,
}

impl HField {
    pub fn get(&self, p: usize, k: usize) -> Complex64 {
        self.values[p * self.n_phi + k]
    }
}

pub fn compute_h(factor: &IntegratingFactor, points: &[Complex64]) -> Result<HField> {
    let rows: Vec<Vec<Complex64>> = points.par_iter().map(|&z| factor.row(z)).collect::<Result<_>>()?;
    Ok(HField { points: points.to_vec(), n_phi: factor.n_phi, values: rows.concat() })
}

/// Modes `alpha_k` of `exp(-h)` and `beta_k` of `exp(h)` for `k = 0..=K_h`,
/// optionally with their Wirtinger derivatives.
#[derive(Debug, Clone)]
pub struct HModeField {
    pub points: Vec<Complex64>,
    pub k_h: usize,
    pub alpha: Vec<Complex64>,
    pub beta: Vec<Complex64>,
    pub d_alpha: Option<Vec<Complex64>>,
    pub dbar_alpha: Option<Vec<Complex64>>,
    pub d_beta: Option<Vec<Complex64>>,
    pub dbar_beta: Option<Vec<Complex64>>,
    /// Largest `sum_{k<0} |alpha_k|` over the points.
    pub negative_mass_alpha: f64,
    /// Largest `sum_{k<0} |beta_k|` over the points.
    pub negative_mass_beta: f64,
    /// Largest discarded mass `sum_{k > K_h} (|alpha_k| + |beta_k|)`.
    pub tail_mass: f64,
}

impl HModeField {
    pub fn alpha(&self, p: usize, k: usize) -> Complex64 {
        self.alpha[p * (self.k_h + 1) + k]
    }

    pub fn beta(&self, p: usize, k: usize) -> Complex64 {
        self.beta[p * (self.k_h + 1) + k]
    }

    /// Largest of the two negative-mode masses.
    pub fn negative_mass(&self) -> f64 {
        self.negative_mass_alpha.max(self.negative_mass_beta)
    }

    fn plane(&self, which: Coefficients) -> &[Complex64] {
        match which {
            Coefficients::Alpha => &self.alpha,
            Coefficients::Beta => &self.beta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Coefficients {
    Alpha,
    Beta,
}

struct PointModes {
    alpha: Vec<Complex64>,
    beta: Vec<Complex64>,
    derivs: Option<[Vec<Complex64>; 4]>,
    neg_alpha: f64,
    neg_beta: f64,
    tail: f64,
}

fn modes_of(fft: &Arc<dyn Fft<f64>>, mut buf: Vec<Complex64>, k_h: usize) -> (Vec<Complex64>, f64, f64) {
    let n = buf.len();
    fft.process(&mut buf);
    let scale = 1.0 / n as f64;
    let keep = (0..=k_h).map(|k| buf[k] * scale).collect();
    let neg = (1..n / 2).map(|k| buf[n - k].norm() * scale).sum();
    let tail = (k_h + 1..n / 2).map(|k| buf[k].norm() * scale).sum();
    (keep, neg, tail)
}

fn point_modes(fft: &Arc<dyn Fft<f64>>, h: &[Complex64], grads: Option<(&[Complex64], &[Complex64])>, k_h: usize) -> PointModes {
    let em: Vec<Complex64> = h.iter().map(|v| (-v).exp()).collect();
    let ep: Vec<Complex64> = h.iter().map(|v| v.exp()).collect();
    let (alpha, neg_alpha, ta) = modes_of(fft, em.clone(), k_h);
    let (beta, neg_beta, tb) = modes_of(fft, ep.clone(), k_h);
    let derivs = grads.map(|(dh, dbh)| {
        let prod = |e: &[Complex64], g: &[Complex64], sign: f64| -> Vec<Complex64> {
            e.iter().zip(g).map(|(a, b)| a * b * sign).collect()
        };
        [
            modes_of(fft, prod(&em, dh, -1.0), k_h).0,
            modes_of(fft, prod(&em, dbh, -1.0), k_h).0,
            modes_of(fft, prod(&ep, dh, 1.0), k_h).0,
            modes_of(fft, prod(&ep, dbh, 1.0), k_h).0,
        ]
    });
    PointModes { alpha, beta, derivs, neg_alpha, neg_beta, tail: ta + tb }
}

fn check_k_h(n_phi: usize, k_h: usize) -> Result<()> {
    if n_phi < 2 * k_h + 2 {
        return config(format!("{n_phi} directions cannot resolve {k_h} modes of exp(h)"));
    }
    Ok(())
}

fn assemble(points: &[Complex64], k_h: usize, per: Vec<PointModes>, with_derivatives: bool) -> HModeField {
    let mut out = HModeField {
        points: points.to_vec(),
        k_h,
        alpha: Vec::with_capacity(points.len() * (k_h + 1)),
        beta: Vec::with_capacity(points.len() * (k_h + 1)),
        d_alpha: None,
        dbar_alpha: None,
        d_beta: None,
        dbar_beta: None,
        negative_mass_alpha: 0.0,
        negative_mass_beta: 0.0,
        tail_mass: 0.0,
    };
    let mut planes: [Vec<Complex64>; 4] = Default::default();
    for m in per {
        out.alpha.extend(m.alpha);
        out.beta.extend(m.beta);
        out.negative_mass_alpha = out.negative_mass_alpha.max(m.neg_alpha);
        out.negative_mass_beta = out.negative_mass_beta.max(m.neg_beta);
        out.tail_mass = out.tail_mass.max(m.tail);
        if let Some(d) = m.derivs {
            for (p, v) in planes.iter_mut().zip(d) {
                p.extend(v);
            }
        }
    }
    if with_derivatives {
        let [da, dba, db, dbb] = planes;
        out.d_alpha = Some(da);
        out.dbar_alpha = Some(dba);
        out.d_beta = Some(db);
        out.dbar_beta = Some(dbb);
    }
    out
}

/// Pointwise exponentiation and angular DFT of a tabulated `h`.
pub fn exp_h_modes(h: &HField, k_h: usize) -> Result<HModeField> {
    check_k_h(h.n_phi, k_h)?;
    let fft = FftPlanner::new().plan_fft_forward(h.n_phi);
    let per: Vec<PointModes> = (0..h.points.len())
        .into_par_iter()
        .map(|p| point_modes(&fft, &h.values[p * h.n_phi..(p + 1) * h.n_phi], None, k_h))
        .collect();
    Ok(assemble(&h.points, k_h, per, false))
}

/// Modes of `exp(-+h)` at the points, with derivatives from the analytic gradient of `h`.
pub fn exp_h_modes_with_derivatives(factor: &IntegratingFactor, points: &[Complex64], k_h: usize) -> Result<HModeField> {
    let n_phi = factor.n_phi;
    check_k_h(n_phi, k_h)?;
    let fft = FftPlanner::new().plan_fft_forward(n_phi);
    let per: Vec<PointModes> = points
        .par_iter()
        .map(|&z| {
            let mut h = Vec::with_capacity(n_phi);
            let mut dh = Vec::with_capacity(n_phi);
            let mut dbh = Vec::with_capacity(n_phi);
            for k in 0..n_phi {
                let (v, d, db) = factor.h_with_derivatives(z, k)?;
                h.push(v);
                dh.push(d);
                dbh.push(db);
            }
            Ok(point_modes(&fft, &h, Some((&dh, &dbh)), k_h))
        })
        .collect::<Result<_>>()?;
    Ok(assemble(points, k_h, per, true))
}

/// Finite-difference order for identity checks on grid planes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FdOrder {
    Second,
    Fourth,
}

/// Largest defects of the identities satisfied by the modes of `exp(-+h)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HIdentityReport {
    /// `dbar beta_0 = 0`
    pub beta0_holomorphic: f64,
    /// `dbar beta_1 = -a beta_0`
    pub beta1: f64,
    /// `dbar beta_{k+2} + d beta_k + a beta_{k+1} = 0`
    pub beta_recurrence: f64,
    /// `dbar alpha_0 = 0`
    pub alpha0_holomorphic: f64,
    /// `dbar alpha_1 = a alpha_0`
    pub alpha1: f64,
    /// `dbar alpha_{k+2} + d alpha_k - a alpha_{k+1} = 0`
    pub alpha_recurrence: f64,
    /// `sum_{m<=k} alpha_m beta_{k-m} = delta_{k0}` for `k <= 5`
    pub cauchy_product: f64,
    pub negative_mass: f64,
}

impl HIdentityReport {
    pub fn worst_recurrence(&self) -> f64 {
        [self.beta0_holomorphic, self.beta1, self.beta_recurrence, self.alpha0_holomorphic, self.alpha1, self.alpha_recurrence]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Checks the mode identities on the mask nodes of `grid`, differentiating the
/// mode planes by finite differences. `modes` must be tabulated at every grid node.
pub fn verify_h_identities(modes: &HModeField, grid: &InteriorGrid, a: &ScalarFieldGrid, order: FdOrder) -> Result<HIdentityReport> {
    if modes.points.len() != grid.len() {
        return config(format!("{} mode points for a grid of {} nodes", modes.points.len(), grid.len()));
    }
    let kk = modes.k_h + 1;
    let plane = |which: Coefficients, k: usize| -> Vec<Complex64> { modes.plane(which).iter().skip(k).step_by(kk).copied().collect() };
    let fd = |values: &[Complex64], node: usize| -> Option<(Complex64, Complex64)> {
        let (dx, dy) = match order {
            FdOrder::Second => partials_second(grid, values, node)?,
            FdOrder::Fourth => {
                let (dx, dy, _) = partials(grid, values, node)?;
                (dx, dy)
            }
        };
        let (dbar, d) = wirtinger_from_partials(dx, dy);
        Some((d, dbar))
    };
    let mut report = HIdentityReport { negative_mass: modes.negative_mass(), ..Default::default() };
    let mask: Vec<usize> = grid.mask_indices().collect();
    let a_val: Vec<f64> = grid.nodes().iter().map(|&z| a.sample(z)).collect();
    for (which, sign) in [(Coefficients::Beta, 1.0), (Coefficients::Alpha, -1.0)] {
        let planes: Vec<Vec<Complex64>> = (0..kk).map(|k| plane(which, k)).collect();
        let derivs: Vec<Vec<Option<(Complex64, Complex64)>>> =
            planes.iter().map(|p| mask.iter().map(|&node| fd(p, node)).collect()).collect();
        let (mut hol, mut one, mut rec) = (0.0f64, 0.0f64, 0.0f64);
        for (i, &node) in mask.iter().enumerate() {
            let a = a_val[node];
            if let Some((_, db0)) = derivs[0][i] {
                hol = hol.max(db0.norm());
            }
            if kk > 1 {
                if let Some((_, db1)) = derivs[1][i] {
                    // dbar beta_1 = -a beta_0, dbar alpha_1 = a alpha_0
                    one = one.max((db1 + planes[0][node] * (sign * a)).norm());
                }
            }
            for k in 0..kk.saturating_sub(2) {
                if let (Some((_, db2)), Some((d0, _))) = (derivs[k + 2][i], derivs[k][i]) {
                    rec = rec.max((db2 + d0 + planes[k + 1][node] * (sign * a)).norm());
                }
            }
        }
        match which {
            Coefficients::Beta => {
                report.beta0_holomorphic = hol;
                report.beta1 = one;
                report.beta_recurrence = rec;
            }
            Coefficients::Alpha => {
                report.alpha0_holomorphic = hol;
                report.alpha1 = one;
                report.alpha_recurrence = rec;
            }
        }
    }
    report.cauchy_product = cauchy_product_defect(modes, 5);
    Ok(report)
}

/// Largest `|theta . grad h + a|` over random interior rays, with the directional
/// derivative taken by central differences of step `1e-4`.
pub fn transport_defect(factor: &IntegratingFactor, a: &ScalarFieldGrid, n_rays: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = 1e-4;
    let mut worst: f64 = 0.0;
    for _ in 0..n_rays {
        let z = Complex64::from_polar(0.9 * rng.gen::<f64>().sqrt(), rng.gen::<f64>() * 2.0 * PI);
        let k = rng.gen_range(0..factor.n_phi);
        let theta = direction(2.0 * PI * k as f64 / factor.n_phi as f64);
        let fd = (factor.h(z + theta * eps, k)? - factor.h(z - theta * eps, k)?) / (2.0 * eps);
        worst = worst.max((fd + a.sample(z)).norm());
    }
    Ok(worst)
}

/// Everything the h-machinery promises, checked on one grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HValidation {
    pub transport: f64,
    pub identities: HIdentityReport,
}

impl HValidation {
    pub fn metrics(&self) -> Vec<(String, f64)> {
        let r = &self.identities;
        [
            ("transport_defect", self.transport),
            ("negative_mass", r.negative_mass),
            ("cauchy_product_defect", r.cauchy_product),
            ("beta0_holomorphic", r.beta0_holomorphic),
            ("beta1_defect", r.beta1),
            ("beta_recurrence_defect", r.beta_recurrence),
            ("alpha0_holomorphic", r.alpha0_holomorphic),
            ("alpha1_defect", r.alpha1),
            ("alpha_recurrence_defect", r.alpha_recurrence),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

/// Builds the factor for `a`, tabulates the modes of `exp(-+h)` on every node of
/// `a`'s grid and runs the identity checks with differences of the given order.
pub fn validate_h(a: &ScalarFieldGrid, n_phi: usize, k_h: usize, opts: HOptions, order: FdOrder, n_rays: usize, seed: u64) -> Result<HValidation> {
    let factor = IntegratingFactor::new(a, n_phi, opts)?;
    let transport = transport_defect(&factor, a, n_rays, seed)?;
    let modes = exp_h_modes(&compute_h(&factor, a.grid.nodes())?, k_h)?;
    let identities = verify_h_identities(&modes, &a.grid, a, order)?;
    Ok(HValidation { transport, identities })
}

/// Largest `|sum_{m<=k} alpha_m beta_{k-m} - delta_{k0}|` over points and `k <= k_max`.
pub fn cauchy_product_defect(modes: &HModeField, k_max: usize) -> f64 {
    let k_max = k_max.min(modes.k_h);
    let mut worst: f64 = 0.0;
    for p in 0..modes.points.len() {
        for k in 0..=k_max {
            let mut s: Complex64 = (0..=k).map(|m| modes.alpha(p, m) * modes.beta(p, k - m)).sum();
            if k == 0 {
                s -= 1.0;
            }
            worst = worst.max(s.norm());
        }
    }
    worst
}

/// Direction of a mode convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvolutionDirection {
    /// `u_n = sum_j beta_j v_{n-j}`
    UFromV,
    /// `v_n = sum_j alpha_j u_{n-j}`
    VFromU,
}

/// Pointwise convolution over the mode index of a plain tail (slot `s` is mode `-(s+1)`).
///
/// Output slot `s` uses input slots `s..=s+K_h`, truncated where the input ends.
/// Derivative planes are propagated when both inputs carry them.
pub fn mode_convolution(tail: &TailField, modes: &HModeField, dir: ConvolutionDirection) -> Result<TailField> {
    let np = tail.points.len();
    if modes.points.len() != np {
        return config(format!("tail has {np} points but the modes have {}", modes.points.len()));
    }
    let n_slots = tail.slots.len();
    if tail.slots.iter().enumerate().any(|(i, &s)| s != i) {
        return config("mode convolution needs a tail with contiguous slots from 0");
    }
    let kk = modes.k_h + 1;
    let (coef, d_coef, db_coef) = match dir {
        ConvolutionDirection::UFromV => (&modes.beta, modes.d_beta.as_ref(), modes.dbar_beta.as_ref()),
        ConvolutionDirection::VFromU => (&modes.alpha, modes.d_alpha.as_ref(), modes.dbar_alpha.as_ref()),
    };
    let window = |s: usize| (n_slots - 1 - s).min(modes.k_h);
    let zero = Complex64::new(0.0, 0.0);
    let values: Vec<Vec<Complex64>> = (0..n_slots)
        .map(|s| (0..np).map(|p| (0..=window(s)).map(|j| coef[p * kk + j] * tail.values[s + j][p]).sum()).collect())
        .collect();
    let mut deriv_slots = Vec::new();
    let mut d = Vec::new();
    let mut dbar = Vec::new();
    if let (Some(dc), Some(dbc)) = (d_coef, db_coef) {
        for s in 0..n_slots {
            let idx: Option<Vec<usize>> = (s..=s + window(s)).map(|t| tail.deriv_slots.iter().position(|&x| x == t)).collect();
            let Some(idx) = idx else { continue };
            let mut dp = vec![zero; np];
            let mut dbp = vec![zero; np];
            for p in 0..np {
                for (j, &i) in idx.iter().enumerate() {
                    let v = tail.values[s + j][p];
                    let c = coef[p * kk + j];
                    dp[p] += dc[p * kk + j] * v + c * tail.d[i][p];
                    dbp[p] += dbc[p * kk + j] * v + c * tail.dbar[i][p];
                }
            }
            deriv_slots.push(s);
            d.push(dp);
            dbar.push(dbp);
        }
    }
    Ok(TailField {
        kind: SeqKind::Plain,
        points: tail.points.clone(),
        slots: (0..n_slots).collect(),
        values,
        deriv_slots,
        d,
        dbar,
        errors: tail.errors.clone(),
        quad_len: tail.quad_len.clone(),
    })
}

/// Weighted boundary modes `gamma_n` of `exp(-h) g`, with the even and odd sequences.
#[derive(Debug, Clone)]
pub struct WeightedData {
    pub bank: ModeBank,
    pub even: SeqBoundary,
    pub odd: SeqBoundary,
}

pub fn weighted_data_modes(g: &Sinogram, factor: &IntegratingFactor, n_mode: usize, m_seq: usize) -> Result<WeightedData> {
    if factor.n_phi != g.n_phi {
        return config(format!("integrating factor on {} directions, data on {}", factor.n_phi, g.n_phi));
    }
    let rows: Vec<Vec<Complex64>> = (0..g.n_b)
        .into_par_iter()
        .map(|j| {
            let b = g.beta(j);
            let zeta = Complex64::new(b.cos(), b.sin());
            (0..g.n_phi)
                .map(|k| {
                    let v = g.get(j, k);
                    if v == 0.0 {
                        return Ok(Complex64::new(0.0, 0.0));
                    }
                    Ok((-factor.h(zeta, k)?).exp() * v)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let bank = decompose_rows(&rows.concat(), g.n_b, g.n_phi, n_mode)?;
    let even = SeqBoundary::from_bank(&bank, SeqKind::Even, m_seq)?;
    let odd = SeqBoundary::from_bank(&bank, SeqKind::Odd, m_seq)?;
    Ok(WeightedData { bank, even, odd })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn canonical(grid: &Arc<InteriorGrid>) -> ScalarFieldGrid {
        ScalarFieldGrid::from_profile(grid.clone(), Profile::canonical_attenuation(0.5))
    }

    fn factor(n_phi: usize, flip: bool) -> IntegratingFactor {
        let grid = Arc::new(InteriorGrid::new(1.0 / 16.0, 0.05, 0).unwrap());
        IntegratingFactor::new(&canonical(&grid), n_phi, HOptions { flip_perp: flip, ..Default::default() }).unwrap()
    }

    #[test]
    fn zero_attenuation_is_trivial() {
        let grid = Arc::new(InteriorGrid::new(1.0 / 16.0, 0.05, 0).unwrap());
        let a = ScalarFieldGrid::from_profile(grid, Profile::Zero);
        let f = IntegratingFactor::new(&a, 16, HOptions::default()).unwrap();
        let pts = [Complex64::new(0.2, 0.1), Complex64::new(-0.5, 0.3)];
        let m = exp_h_modes_with_derivatives(&f, &pts, 4).unwrap();
        for p in 0..2 {
            assert_eq!(m.alpha(p, 0), Complex64::new(1.0, 0.0));
            assert_eq!(m.beta(p, 0), Complex64::new(1.0, 0.0));
            for k in 1..=4 {
                assert_eq!(m.alpha(p, k).norm(), 0.0);
            }
        }
    }

    #[test]
    fn h_transports_minus_a() {
        let f = factor(64, false);
        let a = Profile::canonical_attenuation(0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let eps = 1e-4;
        for _ in 0..100 {
            let r = 0.9 * rng.gen::<f64>().sqrt();
            let t = rng.gen::<f64>() * 2.0 * PI;
            let z = Complex64::new(r * t.cos(), r * t.sin());
            let k = rng.gen_range(0..64);
            let theta = direction(2.0 * PI * k as f64 / 64.0);
            let fd = (f.h(z + theta * eps, k).unwrap() - f.h(z - theta * eps, k).unwrap()) / (2.0 * eps);
            assert!((fd + a.value(z)).norm() < 1e-3, "{fd} vs {}", -a.value(z));
        }
    }

    #[test]
    fn exp_h_has_no_negative_modes() {
        let f = factor(256, false);
        let pts: Vec<Complex64> = (0..12).map(|i| Complex64::from_polar(0.08 * i as f64, 0.7 * i as f64)).collect();
        let m = exp_h_modes(&compute_h(&f, &pts).unwrap(), 24).unwrap();
        assert!(m.negative_mass() < 1e-4, "{}", m.negative_mass());
        assert!(cauchy_product_defect(&m, 5) < 1e-6);
        for p in 0..pts.len() {
            assert!((m.alpha(p, 0) * m.beta(p, 0) - 1.0).norm() < 1e-8);
        }
    }

    #[test]
    fn flipped_perpendicular_breaks_the_factor() {
        let f = factor(256, true);
        let pts = [Complex64::new(0.3, 0.2)];
        let m = exp_h_modes(&compute_h(&f, &pts).unwrap(), 8).unwrap();
        assert!(m.negative_mass() > 1e-2);
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        let f = factor(64, false);
        let z = Complex64::new(0.31, -0.27);
        let eps = 1e-5;
        for k in [0, 5, 17, 40] {
            let (_, d, db) = f.h_with_derivatives(z, k).unwrap();
            let dx = (f.h(z + eps, k).unwrap() - f.h(z - eps, k).unwrap()) / (2.0 * eps);
            let iy = Complex64::new(0.0, eps);
            let dy = (f.h(z + iy, k).unwrap() - f.h(z - iy, k).unwrap()) / (2.0 * eps);
            let (fdb, fd) = wirtinger_from_partials(dx, dy);
            assert!((d - fd).norm() < 1e-5, "{d} vs {fd}");
            assert!((db - fdb).norm() < 1e-5, "{db} vs {fdb}");
        }
    }

    #[test]
    fn convolution_round_trip() {
        let f = factor(128, false);
        let pts = vec![Complex64::new(0.1, 0.2), Complex64::new(-0.4, 0.5)];
        let modes = exp_h_modes_with_derivatives(&f, &pts, 24).unwrap();
        let n_slots = 60;
        let values: Vec<Vec<Complex64>> =
            (0..n_slots).map(|s| pts.iter().map(|z| (z * (s as f64 + 1.0)).exp() * 0.5f64.powi(s as i32)).collect()).collect();
        let tail = TailField {
            kind: SeqKind::Plain,
            points: pts.clone(),
            slots: (0..n_slots).collect(),
            values,
            deriv_slots: vec![],
            d: vec![],
            dbar: vec![],
            errors: vec![],
            quad_len: vec![0; 2],
        };
        let u = mode_convolution(&tail, &modes, ConvolutionDirection::UFromV).unwrap();
        let v = mode_convolution(&u, &modes, ConvolutionDirection::VFromU).unwrap();
        // both windows are complete on the first n_slots - 2 K_h slots
        for s in 0..n_slots - 48 {
            for p in 0..2 {
                assert!((v.values[s][p] - tail.values[s][p]).norm() < 1e-6);
            }
        }
    }
}
