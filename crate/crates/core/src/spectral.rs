//! Angular Fourier analysis of boundary data, the line Hilbert transform and
//! the Radon transform of the attenuation.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{config, Result};
use crate::geometry::{direction, perpendicular};
use crate::transport::{line_integral, RayIntegrand, Sinogram};

/// Complex angular modes `g_n`, `n in [-N, N]`, per boundary node.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeBank {
    pub n_b: usize,
    pub n_mode: usize,
    coeffs: Vec<Complex64>,
}

impl ModeBank {
    pub fn zeros(n_b: usize, n_mode: usize) -> Self {
        Self { n_b, n_mode, coeffs: vec![Complex64::new(0.0, 0.0); n_b * (2 * n_mode + 1)] }
    }

    fn idx(&self, j: usize, n: i64) -> usize {
        assert!(n.unsigned_abs() as usize <= self.n_mode, "mode {n} outside bank of width {}", self.n_mode);
        j * (2 * self.n_mode + 1) + (n + self.n_mode as i64) as usize
    }

    pub fn get(&self, j: usize, n: i64) -> Complex64 {
        self.coeffs[self.idx(j, n)]
    }

    pub fn set(&mut self, j: usize, n: i64, v: Complex64) {
        let i = self.idx(j, n);
        self.coeffs[i] = v;
    }

    /// Mode `n` at every boundary node.
    pub fn mode(&self, n: i64) -> Vec<Complex64> {
        (0..self.n_b).map(|j| self.get(j, n)).collect()
    }

    /// Largest `|g_{-n} - conj(g_n)|`.
    pub fn conjugate_symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..self.n_b {
            for n in 1..=self.n_mode as i64 {
                worst = worst.max((self.get(j, -n) - self.get(j, n).conj()).norm());
            }
        }
        worst
    }
}

fn check_width(n_phi: usize, n_mode: usize) -> Result<()> {
    if n_phi < 2 * n_mode + 2 {
        return config(format!("{n_phi} directions cannot carry {n_mode} modes (need at least {})", 2 * n_mode + 2));
    }
    Ok(())
}

/// Normalized DFT of each row: `g_n = (1/N_phi) sum_k g_k e^{-i n phi_k}`.
pub fn decompose_rows(rows: &[Complex64], n_b: usize, n_phi: usize, n_mode: usize) -> Result<ModeBank> {
    check_width(n_phi, n_mode)?;
    if rows.len() != n_b * n_phi {
        return config(format!("expected {} samples, got {}", n_b * n_phi, rows.len()));
    }
    let fft = FftPlanner::new().plan_fft_forward(n_phi);
    let mut bank = ModeBank::zeros(n_b, n_mode);
    let scale = 1.0 / n_phi as f64;
    let width = 2 * n_mode + 1;
    bank.coeffs.par_chunks_mut(width).zip(rows.par_chunks(n_phi)).for_each(|(out, row)| {
        let mut buf = row.to_vec();
        fft.process(&mut buf);
        for (i, slot) in out.iter_mut().enumerate() {
            let n = i as i64 - n_mode as i64;
            *slot = buf[n.rem_euclid(n_phi as i64) as usize] * scale;
        }
    });
    Ok(bank)
}

pub fn angular_decompose(g: &Sinogram, n_mode: usize) -> Result<ModeBank> {
    let rows: Vec<Complex64> = g.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    decompose_rows(&rows, g.n_b, g.n_phi, n_mode)
}

/// `sum_n g_n e^{i n phi_k}` on `n_phi` equispaced angles, per node.
pub fn synthesize_rows(bank: &ModeBank, n_phi: usize) -> Result<Vec<Complex64>> {
    check_width(n_phi, bank.n_mode)?;
    let ifft = FftPlanner::new().plan_fft_inverse(n_phi);
    let width = 2 * bank.n_mode + 1;
    let mut out = vec![Complex64::new(0.0, 0.0); bank.n_b * n_phi];
    out.par_chunks_mut(n_phi).zip(bank.coeffs.par_chunks(width)).for_each(|(row, modes)| {
        for (i, &c) in modes.iter().enumerate() {
            let n = i as i64 - bank.n_mode as i64;
            row[n.rem_euclid(n_phi as i64) as usize] += c;
        }
        ifft.process(row);
    });
    Ok(out)
}

/// Real sinogram synthesized from a mode bank (imaginary residue discarded).
pub fn angular_synthesize(bank: &ModeBank, template: &Sinogram) -> Result<Sinogram> {
    let rows = synthesize_rows(bank, template.n_phi)?;
    let mut s = template.clone();
    s.values = rows.iter().map(|c| c.re).collect();
    Ok(s)
}

/// Samples on a uniform grid `s_i = s0 + i ds`, with four-point Lagrange interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformTable {
    pub s0: f64,
    pub ds: f64,
    pub values: Vec<f64>,
}

impl UniformTable {
    pub fn s(&self, i: usize) -> f64 {
        self.s0 + i as f64 * self.ds
    }

    /// Cubic interpolation; zero outside the tabulated range.
    pub fn eval(&self, s: f64) -> f64 {
        let n = self.values.len();
        let x = (s - self.s0) / self.ds;
        if !(x >= 0.0 && x <= (n - 1) as f64) {
            return 0.0;
        }
        let i = (x.floor() as usize).clamp(1, n.saturating_sub(3));
        let t = x - i as f64;
        let (p0, p1, p2, p3) = (self.values[i - 1], self.values[i], self.values[i + 1], self.values[i + 2]);
        // Lagrange basis on nodes -1, 0, 1, 2
        let l0 = -t * (t - 1.0) * (t - 2.0) / 6.0;
        let l1 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
        let l2 = -(t + 1.0) * t * (t - 2.0) / 2.0;
        let l3 = (t + 1.0) * t * (t - 1.0) / 6.0;
        p0 * l0 + p1 * l1 + p2 * l2 + p3 * l3
    }
}

/// `Ra(s, theta_k) = int a(s theta_perp + t theta) dt` on `s in [-L, L]`.
#[derive(Debug, Clone)]
pub struct RadonTable {
    pub half_width: f64,
    pub n_s: usize,
    pub n_phi: usize,
    /// One table per direction angle.
    pub rows: Vec<UniformTable>,
}

impl RadonTable {
    pub fn s_grid(&self) -> Vec<f64> {
        (0..self.n_s).map(|i| -self.half_width + i as f64 * self.ds()).collect()
    }

    pub fn ds(&self) -> f64 {
        2.0 * self.half_width / (self.n_s - 1) as f64
    }
}

/// Tabulates `int q(s theta_perp + t theta) dt` over full lines; `q` must vanish outside the disk.
pub fn line_transform(q: &dyn RayIntegrand, n_phi: usize, n_s: usize, half_width: f64, ray_step: f64) -> Result<RadonTable> {
    if half_width < 1.0 {
        return config(format!("Radon half width must be at least 1, got {half_width}"));
    }
    if n_s < 8 {
        return config(format!("need at least 8 offsets, got {n_s}"));
    }
    let ds = 2.0 * half_width / (n_s - 1) as f64;
    let rows = (0..n_phi)
        .into_par_iter()
        .map(|k| {
            let phi = 2.0 * PI * k as f64 / n_phi as f64;
            let (theta, perp) = (direction(phi), perpendicular(phi));
            let values = (0..n_s)
                .map(|i| {
                    let s = -half_width + i as f64 * ds;
                    if s.abs() >= 1.0 {
                        return 0.0;
                    }
                    let c = (1.0 - s * s).sqrt();
                    line_integral(q, perp * s, theta, -c, c, ray_step)
                })
                .collect();
            UniformTable { s0: -half_width, ds, values }
        })
        .collect();
    Ok(RadonTable { half_width, n_s, n_phi, rows })
}

/// Radon transform of a field supported in the disk.
pub fn radon_transform(a: &dyn RayIntegrand, n_phi: usize, n_s: usize, half_width: f64, ray_step: f64) -> Result<RadonTable> {
    line_transform(a, n_phi, n_s, half_width, ray_step)
}

/// Default zero-padding factor of [`line_hilbert`].
pub const HILBERT_PAD: usize = 4;

/// Principal-value Hilbert transform `(1/pi) PV int f(t)/(s-t) dt` of uniform samples.
///
/// Uses the alternating-point rule: at each sample the integral is taken over
/// the samples at odd offsets, whose kernel `2/(pi m)` has the exact symbol
/// `-i sign(omega)` below the Nyquist rate. The aperiodic convolution is
/// evaluated by a zero-padded FFT of length at least `pad` times the input.
pub fn line_hilbert(s: &[f64], values: &[f64], pad: usize) -> Result<Vec<f64>> {
    let n = values.len();
    if s.len() != n {
        return config(format!("{} abscissae for {} samples", s.len(), n));
    }
    if n < 2 {
        return Ok(vec![0.0; n]);
    }
    let ds = s[1] - s[0];
    if !(ds > 0.0) || s.windows(2).any(|w| ((w[1] - w[0]) - ds).abs() > 1e-9 * ds.abs().max(1.0)) {
        return config("line Hilbert transform needs a uniform increasing grid");
    }
    let len = (pad.max(2) * n).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let mut sig = vec![Complex64::new(0.0, 0.0); len];
    for (d, &v) in sig.iter_mut().zip(values) {
        d.re = v;
    }
    let mut ker = vec![Complex64::new(0.0, 0.0); len];
    for m in (1..n).step_by(2) {
        let k = 2.0 / (PI * m as f64);
        ker[m].re = k;
        ker[len - m].re = -k;
    }
    fwd.process(&mut sig);
    fwd.process(&mut ker);
    for (a, b) in sig.iter_mut().zip(&ker) {
        *a *= b;
    }
    inv.process(&mut sig);
    let scale = 1.0 / len as f64;
    Ok(sig[..n].iter().map(|c| c.re * scale).collect())
}
