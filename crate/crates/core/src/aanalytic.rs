//! A-analytic sequence machinery: sequence builders, the Bukhgeim–Cauchy
//! operator, the boundary Hilbert transform for sequences, range residuals
//! and the conjugation identity for augmented odd sequences.
//!
//! Sequences are stored slot-relative: slot `s` of any sequence plays the role
//! of the `-(s+1)`-th entry in the formulas, whatever angular mode it carries.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{config, Result};
use crate::spectral::ModeBank;

/// Which angular modes a sequence carries, slot by slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeqKind {
    /// `g_{-2}, g_{-4}, ...`
    Even,
    /// `g_{-1}, g_{-3}, ...`
    Odd,
    /// `g_{2m-1}, ..., g_1, g_{-1}, g_{-3}, ...`
    Augmented(usize),
    /// `g_{-1}, g_{-2}, ...`
    Plain,
    /// `g_0, g_{-2}, g_{-4}, ...`, the even sequence of the scalar problem.
    EvenFromZero,
}

impl SeqKind {
    /// Angular mode carried by slot `s`.
    pub fn mode(&self, s: usize) -> i64 {
        let s = s as i64;
        match *self {
            SeqKind::Even => -2 * (s + 1),
            SeqKind::Odd => -(2 * s + 1),
            SeqKind::Augmented(m) => {
                let m = m as i64;
                if s < m {
                    2 * (m - s) - 1
                } else {
                    -(2 * (s - m) + 1)
                }
            }
            SeqKind::Plain => -(s + 1),
            SeqKind::EvenFromZero => -2 * s,
        }
    }

    pub fn label(&self) -> String {
        match self {
            SeqKind::Even => "even".into(),
            SeqKind::Odd => "odd".into(),
            SeqKind::Augmented(m) => format!("aug_{m}"),
            SeqKind::Plain => "plain".into(),
            SeqKind::EvenFromZero => "even_from_zero".into(),
        }
    }
}

/// Truncated sequence of boundary functions, slot-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqBoundary {
    pub kind: SeqKind,
    pub n_b: usize,
    pub n_slots: usize,
    terms: Vec<Complex64>,
}

impl SeqBoundary {
    pub fn zeros(kind: SeqKind, n_b: usize, n_slots: usize) -> Self {
        Self { kind, n_b, n_slots, terms: vec![Complex64::new(0.0, 0.0); n_b * n_slots] }
    }

    /// Builds a sequence from boundary traces, one closure per slot, sampled at `e^{i beta_j}`.
    pub fn from_traces(kind: SeqKind, n_b: usize, traces: &[&dyn Fn(Complex64) -> Complex64], n_slots: usize) -> Self {
        let mut seq = Self::zeros(kind, n_b, n_slots);
        for (s, f) in traces.iter().enumerate().take(n_slots) {
            for j in 0..n_b {
                let b = 2.0 * PI * j as f64 / n_b as f64;
                seq.terms[s * n_b + j] = f(Complex64::new(b.cos(), b.sin()));
            }
        }
        seq
    }

    /// Slices a mode bank according to `kind`.
    pub fn from_bank(bank: &ModeBank, kind: SeqKind, n_slots: usize) -> Result<Self> {
        let mut seq = Self::zeros(kind, bank.n_b, n_slots);
        for s in 0..n_slots {
            let n = kind.mode(s);
            if n.unsigned_abs() as usize > bank.n_mode {
                return config(format!(
                    "{} sequence slot {s} needs mode {n} but the bank holds |n| <= {}",
                    kind.label(),
                    bank.n_mode
                ));
            }
            for j in 0..bank.n_b {
                seq.terms[s * bank.n_b + j] = bank.get(j, n);
            }
        }
        Ok(seq)
    }

    pub fn slot(&self, s: usize) -> &[Complex64] {
        &self.terms[s * self.n_b..(s + 1) * self.n_b]
    }

    pub fn slot_mut(&mut self, s: usize) -> &mut [Complex64] {
        &mut self.terms[s * self.n_b..(s + 1) * self.n_b]
    }

    pub fn get(&self, s: usize, j: usize) -> Complex64 {
        self.terms[s * self.n_b + j]
    }

    pub fn max_abs(&self) -> f64 {
        self.terms.iter().fold(0.0f64, |m, c| m.max(c.norm()))
    }

    /// Boundary RMS of each slot.
    pub fn slot_rms(&self) -> Vec<f64> {
        (0..self.n_slots)
            .map(|s| (self.slot(s).iter().map(|c| c.norm_sqr()).sum::<f64>() / self.n_b as f64).sqrt())
            .collect()
    }

    /// Drops the head slot (left translation).
    pub fn shifted(&self) -> Self {
        let kind = match self.kind {
            SeqKind::Augmented(m) if m > 1 => SeqKind::Augmented(m - 1),
            SeqKind::Augmented(_) => SeqKind::Odd,
            k => k,
        };
        Self { kind, n_b: self.n_b, n_slots: self.n_slots - 1, terms: self.terms[self.n_b..].to_vec() }
    }
}

/// Even, odd and augmented sequences of one data set.
#[derive(Debug, Clone)]
pub struct Sequences {
    pub even: SeqBoundary,
    pub odd: SeqBoundary,
    /// `augmented[m-1]` is the sequence augmented by `m` heads.
    pub augmented: Vec<SeqBoundary>,
}

/// Slices the mode bank into the even, odd and augmented sequences.
///
/// The even sequence reaches mode `-2 M_seq` and the odd ones `-(2 M_seq - 1)`;
/// the augmented heads reach mode `2 m_max - 1`.
pub fn build_sequences(bank: &ModeBank, m_max: usize, m_seq: usize) -> Result<Sequences> {
    if m_seq == 0 {
        return config("sequence length must be positive");
    }
    let need = (2 * m_seq).max(2 * m_max.max(1) - 1);
    if bank.n_mode < need {
        return config(format!("mode bank of width {} is too narrow: need {need} for {m_seq} slots and {m_max} augmentations", bank.n_mode));
    }
    let even = SeqBoundary::from_bank(bank, SeqKind::Even, m_seq)?;
    let odd = SeqBoundary::from_bank(bank, SeqKind::Odd, m_seq)?;
    let augmented = (1..=m_max).map(|m| SeqBoundary::from_bank(bank, SeqKind::Augmented(m), m_seq + m)).collect::<Result<_>>()?;
    Ok(Sequences { even, odd, augmented })
}

/// The Hilbert transform of a sequence on the boundary grid.
///
/// The principal-value Cauchy term uses the alternating-point rule (targets at
/// nodes, sources at odd offsets, spacing `2 dbeta`), which is a circular
/// convolution and is evaluated by FFT. On the circle the series kernel
/// reduces to `i dbeta sum_j g_{s+j}(zeta) (-conj(zeta xi))^j`, whose
/// trapezoid sum over all nodes is read off the discrete Fourier coefficients.
pub fn aanalytic_hilbert(seq: &SeqBoundary) -> SeqBoundary {
    let n = seq.n_b;
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    // Kernel of the scalar term as a function of the offset d = k - i.
    let dbeta = 2.0 * PI / n as f64;
    let mut kernel = vec![Complex64::new(0.0, 0.0); n];
    for (d, c) in kernel.iter_mut().enumerate() {
        if d % 2 == 1 {
            // (1/pi) i zeta_k 2 dbeta / (zeta_k - xi_i), with zeta_k = xi_i e^{i d dbeta}
            let e = Complex64::new(0.0, d as f64 * dbeta).exp();
            *c = Complex64::i() * e * (2.0 * dbeta / PI) / (e - 1.0);
        }
    }
    // Circular cross-correlation: out_i = sum_d kernel_d g_{i+d}.
    let mut kernel_hat = kernel.clone();
    fwd.process(&mut kernel_hat);
    let spectra: Vec<Vec<Complex64>> = (0..seq.n_slots)
        .map(|s| {
            let mut b = seq.slot(s).to_vec();
            fwd.process(&mut b);
            b
        })
        .collect();
    let mut out = SeqBoundary::zeros(seq.kind, n, seq.n_slots);
    let scale = 1.0 / n as f64;
    for s in 0..seq.n_slots {
        // correlation in Fourier: conj-free form since the index runs as g_{i+d}
        let mut buf: Vec<Complex64> = (0..n).map(|m| spectra[s][m] * kernel_hat[(n - m) % n]).collect();
        inv.process(&mut buf);
        let dst = out.slot_mut(s);
        for (d, v) in dst.iter_mut().zip(&buf) {
            *d = v * scale;
        }
    }
    // Series term: 2i sum_{j>=1} (-conj(xi))^j ghat_{s+j}[j].
    for s in 0..seq.n_slots {
        let terms: Vec<Complex64> = (1..seq.n_slots - s)
            .map(|j| spectra[s + j][j % n] * scale * if j % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        if terms.is_empty() {
            continue;
        }
        let dst = out.slot_mut(s);
        for (i, d) in dst.iter_mut().enumerate() {
            let xb = Complex64::new(0.0, -(i as f64) * dbeta).exp();
            let mut acc = Complex64::new(0.0, 0.0);
            for t in terms.iter().rev() {
                acc = (acc + t) * xb;
            }
            *d += acc * Complex64::new(0.0, 2.0);
        }
    }
    out
}

/// `(I + iH) g`.
pub fn range_defect(seq: &SeqBoundary) -> SeqBoundary {
    let mut h = aanalytic_hilbert(seq);
    for s in 0..seq.n_slots {
        let src = seq.slot(s);
        for (d, g) in h.slot_mut(s).iter_mut().zip(src) {
            *d = g + Complex64::i() * *d;
        }
    }
    h
}

/// Slot-max boundary RMS of `(I + iH) g`, relative to the slot-max boundary RMS of `g`.
/// Zero for the zero sequence.
pub fn range_residual(seq: &SeqBoundary) -> f64 {
    let norm = seq.slot_rms().into_iter().fold(0.0, f64::max);
    if norm == 0.0 {
        return 0.0;
    }
    let defect = range_defect(seq).slot_rms().into_iter().fold(0.0, f64::max);
    defect / norm
}

/// Accuracy controls of the Bukhgeim–Cauchy quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CauchyOptions {
    /// Target quadrature error relative to the largest datum.
    pub tol: f64,
    /// Largest resampling length as a multiple of the boundary node count.
    pub max_oversample: usize,
    /// Points with `|z|` at or beyond this radius are rejected.
    pub max_radius: f64,
}

impl Default for CauchyOptions {
    fn default() -> Self {
        Self { tol: 1e-11, max_oversample: 16, max_radius: 0.99 }
    }
}

/// Which slots of `B g` to evaluate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotRequest {
    pub values: Vec<usize>,
    /// Slots for which `d` and `dbar` are wanted.
    pub derivatives: Vec<usize>,
}

impl SlotRequest {
    pub fn all(n_slots: usize, with_derivatives: bool) -> Self {
        let values: Vec<usize> = (0..n_slots).collect();
        let derivatives = if with_derivatives { values.clone() } else { Vec::new() };
        Self { values, derivatives }
    }
}

/// Interior values of `B g` at requested slots, with optional derivative planes.
#[derive(Debug, Clone)]
pub struct TailField {
    pub kind: SeqKind,
    pub points: Vec<Complex64>,
    pub slots: Vec<usize>,
    /// `values[i][p]` for slot `slots[i]` at point `p`.
    pub values: Vec<Vec<Complex64>>,
    pub deriv_slots: Vec<usize>,
    pub d: Vec<Vec<Complex64>>,
    pub dbar: Vec<Vec<Complex64>>,
    /// Points that could not be evaluated, with the reason.
    pub errors: Vec<(usize, String)>,
    /// Resampling length used at each point.
    pub quad_len: Vec<usize>,
}

impl TailField {
    pub fn slot(&self, s: usize) -> Option<&[Complex64]> {
        self.slots.iter().position(|&x| x == s).map(|i| self.values[i].as_slice())
    }

    pub fn d_slot(&self, s: usize) -> Option<&[Complex64]> {
        self.deriv_slots.iter().position(|&x| x == s).map(|i| self.d[i].as_slice())
    }

    pub fn dbar_slot(&self, s: usize) -> Option<&[Complex64]> {
        self.deriv_slots.iter().position(|&x| x == s).map(|i| self.dbar[i].as_slice())
    }
}

struct Level {
    n: usize,
    zeta_re: Vec<f64>,
    zeta_im: Vec<f64>,
    /// Slot-major resampled data.
    g_re: Vec<f64>,
    g_im: Vec<f64>,
}

/// Precomputed resamplings of a sequence for repeated Bukhgeim–Cauchy evaluation.
pub struct CauchyEvaluator {
    kind: SeqKind,
    len: usize,
    levels: Vec<Level>,
    /// `ln` of the largest datum in each slot.
    log_amp: Vec<f64>,
    bandwidth: usize,
    log_tol: f64,
    max_radius: f64,
}

impl CauchyEvaluator {
    pub fn new(seq: &SeqBoundary, opts: CauchyOptions) -> Self {
        let n_b = seq.n_b;
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n_b);
        let spectra: Vec<Vec<Complex64>> = (0..seq.n_slots)
            .map(|s| {
                let mut b = seq.slot(s).to_vec();
                fwd.process(&mut b);
                b.iter_mut().for_each(|c| *c /= n_b as f64);
                b
            })
            .collect();
        let scale = seq.max_abs();
        let amps: Vec<f64> = (0..seq.n_slots).map(|s| seq.slot(s).iter().fold(0.0f64, |m, c| m.max(c.norm()))).collect();
        // Trailing slots below round-off do not contribute.
        let len = amps.iter().rposition(|&a| a > 1e-15 * scale).map_or(0, |p| p + 1);
        let mut bandwidth = 0usize;
        for spec in spectra.iter().take(len) {
            for (m, c) in spec.iter().enumerate() {
                let freq = if m <= n_b / 2 { m } else { n_b - m };
                if c.norm() > 1e-15 * scale {
                    bandwidth = bandwidth.max(freq);
                }
            }
        }
        let base = (2 * bandwidth + 2).next_power_of_two().max(32);
        let cap = (n_b * opts.max_oversample).max(base);
        let mut levels = Vec::new();
        let mut n = base;
        loop {
            levels.push(resample(&spectra, len, n_b, n, &mut planner));
            if n >= cap {
                break;
            }
            n *= 2;
        }
        let log_amp = amps.iter().map(|&a| if a > 0.0 { a.ln() } else { f64::NEG_INFINITY }).collect();
        let log_tol = (opts.tol * scale.max(f64::MIN_POSITIVE)).ln();
        Self { kind: seq.kind, len, levels, log_amp, bandwidth, log_tol, max_radius: opts.max_radius }
    }

    /// Number of slots that actually carry data.
    pub fn effective_len(&self) -> usize {
        self.len
    }

    /// Smallest resampling level whose aliasing estimate meets the tolerance at radius `r`.
    fn level_for(&self, r: f64, order: usize) -> usize {
        if r <= 0.0 {
            return 0;
        }
        let lr = r.ln();
        let l1r = (1.0 + r).ln();
        let slack = (self.len.max(1) as f64).ln() + ((self.len + 2) as f64).ln() * order as f64;
        for (li, level) in self.levels.iter().enumerate() {
            let mut worst = f64::NEG_INFINITY;
            for j in 0..self.len {
                let la = self.log_amp[j];
                if la == f64::NEG_INFINITY {
                    continue;
                }
                let np = level.n as f64 - self.bandwidth as f64 - (2 * j + order) as f64;
                if np <= 0.0 {
                    worst = f64::INFINITY;
                    break;
                }
                // ln binom(np + j + order, j + order)
                let k = j + order;
                let lb: f64 = (1..=k).map(|i| ((np + i as f64) / i as f64).ln()).sum();
                worst = worst.max(la + j as f64 * l1r + lb + np * lr);
            }
            if worst + slack <= self.log_tol {
                return li;
            }
        }
        self.levels.len() - 1
    }

    /// Evaluates the requested slots at the given points.
    pub fn evaluate(&self, points: &[Complex64], req: &SlotRequest) -> TailField {
        let n_slots_req = req.values.iter().chain(&req.derivatives).map(|&s| s + 1).max().unwrap_or(0);
        let mut want_val = vec![false; n_slots_req + 2];
        let mut want_d = vec![false; n_slots_req + 2];
        for &s in &req.values {
            want_val[s] = true;
        }
        for &s in &req.derivatives {
            want_d[s] = true;
            want_d[s + 1] = true;
        }
        let order = if req.derivatives.is_empty() { 0 } else { 1 };
        let results: Vec<(Option<(Vec<Complex64>, Vec<Complex64>)>, usize)> = points
            .par_iter()
            .map(|&z| {
                if !(z.norm() < self.max_radius) || !z.re.is_finite() || !z.im.is_finite() {
                    return (None, 0);
                }
                let li = self.level_for(z.norm(), order);
                let (v, d) = self.eval_point(&self.levels[li], z, &want_val, &want_d);
                (Some((v, d)), self.levels[li].n)
            })
            .collect();
        let nan = Complex64::new(f64::NAN, f64::NAN);
        let mut out = TailField {
            kind: self.kind,
            points: points.to_vec(),
            slots: req.values.clone(),
            values: vec![vec![nan; points.len()]; req.values.len()],
            deriv_slots: req.derivatives.clone(),
            d: vec![vec![nan; points.len()]; req.derivatives.len()],
            dbar: vec![vec![nan; points.len()]; req.derivatives.len()],
            errors: Vec::new(),
            quad_len: vec![0; points.len()],
        };
        for (p, (res, n)) in results.into_iter().enumerate() {
            out.quad_len[p] = n;
            match res {
                None => out.errors.push((p, format!("point {} lies outside the evaluation radius {}", points[p], self.max_radius))),
                Some((v, d)) => {
                    for (i, &s) in req.values.iter().enumerate() {
                        out.values[i][p] = v[s];
                    }
                    for (i, &s) in req.derivatives.iter().enumerate() {
                        out.d[i][p] = d[s];
                        // dbar B_s = -d B_{s+1}
                        out.dbar[i][p] = -d[s + 1];
                    }
                }
            }
        }
        out
    }

    /// Horner recurrences over the slots, vectorized across quadrature nodes:
    /// `T_s = g_s + w T_{s+1}`, `U_s = g_s + w (U_{s+1} + T_{s+1})`, with
    /// `D = 1/(zeta - z)` and `w = conj(zeta - z) D`. Then
    /// `B_s = (1/n) sum D (T_s zeta + T_{s+1} conj(zeta))` and
    /// `d B_s = (1/n) sum D^2 (U_s zeta + U_{s+1} conj(zeta))`.
    fn eval_point(&self, level: &Level, z: Complex64, want_val: &[bool], want_d: &[bool]) -> (Vec<Complex64>, Vec<Complex64>) {
        let n = level.n;
        let mut d_re = vec![0.0; n];
        let mut d_im = vec![0.0; n];
        let mut w_re = vec![0.0; n];
        let mut w_im = vec![0.0; n];
        for k in 0..n {
            let (a, b) = (level.zeta_re[k] - z.re, level.zeta_im[k] - z.im);
            let inv = 1.0 / (a * a + b * b);
            d_re[k] = a * inv;
            d_im[k] = -b * inv;
            // w = conj(zeta - z) / (zeta - z) = (a - ib)^2 / |.|^2
            w_re[k] = (a * a - b * b) * inv;
            w_im[k] = -2.0 * a * b * inv;
        }
        let need_u = want_d.iter().any(|&x| x);
        let top = want_val.len().max(want_d.len());
        let mut vals = vec![Complex64::new(0.0, 0.0); top];
        let mut ders = vec![Complex64::new(0.0, 0.0); top];
        let mut t_re = vec![0.0; n];
        let mut t_im = vec![0.0; n];
        let mut u_re = vec![0.0; n];
        let mut u_im = vec![0.0; n];
        for s in (0..self.len).rev() {
            let gr = &level.g_re[s * n..(s + 1) * n];
            let gi = &level.g_im[s * n..(s + 1) * n];
            let wv = s < top && want_val[s];
            let wd = s < top && want_d[s];
            let (mut vr, mut vi, mut dr, mut di) = (0.0, 0.0, 0.0, 0.0);
            for k in 0..n {
                let (tor, toi) = (t_re[k], t_im[k]);
                let (wr, wi) = (w_re[k], w_im[k]);
                let tnr = gr[k] + wr * tor - wi * toi;
                let tni = gi[k] + wr * toi + wi * tor;
                t_re[k] = tnr;
                t_im[k] = tni;
                let (zr, zi) = (level.zeta_re[k], level.zeta_im[k]);
                if wv {
                    // T_s zeta + T_{s+1} conj(zeta)
                    let qr = tnr * zr - tni * zi + tor * zr + toi * zi;
                    let qi = tnr * zi + tni * zr + toi * zr - tor * zi;
                    vr += d_re[k] * qr - d_im[k] * qi;
                    vi += d_re[k] * qi + d_im[k] * qr;
                }
                if need_u {
                    let (uor, uoi) = (u_re[k], u_im[k]);
                    let (sr, si) = (uor + tor, uoi + toi);
                    let unr = gr[k] + wr * sr - wi * si;
                    let uni = gi[k] + wr * si + wi * sr;
                    u_re[k] = unr;
                    u_im[k] = uni;
                    if wd {
                        let qr = unr * zr - uni * zi + uor * zr + uoi * zi;
                        let qi = unr * zi + uni * zr + uoi * zr - uor * zi;
                        let (d2r, d2i) = (d_re[k] * d_re[k] - d_im[k] * d_im[k], 2.0 * d_re[k] * d_im[k]);
                        dr += d2r * qr - d2i * qi;
                        di += d2r * qi + d2i * qr;
                    }
                }
            }
            if wv {
                vals[s] = Complex64::new(vr, vi) / n as f64;
            }
            if wd {
                ders[s] = Complex64::new(dr, di) / n as f64;
            }
        }
        (vals, ders)
    }
}

fn resample(spectra: &[Vec<Complex64>], len: usize, n_b: usize, n: usize, planner: &mut FftPlanner<f64>) -> Level {
    let inv = planner.plan_fft_inverse(n);
    let mut g_re = vec![0.0; len * n];
    let mut g_im = vec![0.0; len * n];
    let half = n_b / 2;
    for (s, spec) in spectra.iter().take(len).enumerate() {
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (m, &c) in spec.iter().enumerate() {
            let freq = if m < half { m as i64 } else if m > half { m as i64 - n_b as i64 } else { half as i64 };
            if m == half && n_b.is_multiple_of(2) {
                // split the Nyquist term between +N/2 and -N/2 when room allows
                if half < n / 2 {
                    buf[half] += c * 0.5;
                    buf[n - half] += c * 0.5;
                } else if half == n / 2 {
                    buf[half] += c;
                }
                continue;
            }
            if freq.unsigned_abs() as usize >= n / 2 + (n % 2) && freq.unsigned_abs() as usize > 0 {
                // cannot be represented; the bandwidth check keeps these negligible
                continue;
            }
            buf[freq.rem_euclid(n as i64) as usize] += c;
        }
        inv.process(&mut buf);
        for (k, c) in buf.iter().enumerate() {
            g_re[s * n + k] = c.re;
            g_im[s * n + k] = c.im;
        }
    }
    let (zeta_re, zeta_im) = (0..n)
        .map(|k| {
            let b = 2.0 * PI * k as f64 / n as f64;
            (b.cos(), b.sin())
        })
        .unzip();
    Level { n, zeta_re, zeta_im, g_re, g_im }
}

/// Bukhgeim–Cauchy operator at arbitrary interior points.
pub fn bukhgeim_cauchy(seq: &SeqBoundary, points: &[Complex64], req: &SlotRequest, opts: CauchyOptions) -> TailField {
    CauchyEvaluator::new(seq, opts).evaluate(points, req)
}

/// Bukhgeim–Cauchy operator on every slot, optionally with derivative planes.
pub fn bukhgeim_cauchy_all(seq: &SeqBoundary, points: &[Complex64], with_derivatives: bool, opts: CauchyOptions) -> TailField {
    let mut req = SlotRequest::all(seq.n_slots, with_derivatives);
    if with_derivatives {
        // the derivative of the last slot needs one more slot, which is zero
        req.derivatives.retain(|&s| s < seq.n_slots);
    }
    bukhgeim_cauchy(seq, points, &req, opts)
}

/// Largest `|u_{2m-1} - conj(u_{-(2m-1)})|` over the points, where the first
/// comes from the head of the augmented(m) tail and the second from slot
/// `m-1` of the odd tail.
pub fn conjugacy_defect(augmented_heads: &[TailField], odd: &TailField) -> f64 {
    let mut worst: f64 = 0.0;
    for tail in augmented_heads {
        let m = match tail.kind {
            SeqKind::Augmented(m) => m,
            _ => continue,
        };
        let (Some(head), Some(neg)) = (tail.slot(0), odd.slot(m - 1)) else { continue };
        for (a, b) in head.iter().zip(neg) {
            if a.re.is_finite() && b.re.is_finite() {
                worst = worst.max((a - b.conj()).norm());
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(kind: SeqKind, n_b: usize, m: usize, fs: &[&dyn Fn(Complex64) -> Complex64]) -> SeqBoundary {
        SeqBoundary::from_traces(kind, n_b, fs, m)
    }

    fn points() -> Vec<Complex64> {
        vec![
            Complex64::new(0.0, 0.0),
            Complex64::new(0.3, -0.2),
            Complex64::new(-0.5, 0.4),
            Complex64::new(0.1, 0.9),
            Complex64::new(-0.93, 0.0),
        ]
    }

    #[test]
    fn slot_modes() {
        assert_eq!(SeqKind::Even.mode(0), -2);
        assert_eq!(SeqKind::Odd.mode(2), -5);
        assert_eq!((0..4).map(|s| SeqKind::Augmented(2).mode(s)).collect::<Vec<_>>(), vec![3, 1, -1, -3]);
        assert_eq!(SeqKind::Plain.mode(3), -4);
        assert_eq!(SeqKind::EvenFromZero.mode(0), 0);
    }

    #[test]
    fn build_sequences_examples() {
        let mut bank = ModeBank::zeros(8, 8);
        for j in 0..8 {
            bank.set(j, -2, Complex64::new(1.0, 0.0));
            bank.set(j, 1, Complex64::new(0.5, 0.25));
            bank.set(j, -1, Complex64::new(0.5, -0.25));
            bank.set(j, 3, Complex64::new(7.0, 0.0));
        }
        let seqs = build_sequences(&bank, 2, 4).unwrap();
        assert_eq!(seqs.even.get(0, 0), Complex64::new(1.0, 0.0));
        assert!(seqs.even.slot(1).iter().all(|c| c.norm() == 0.0));
        assert_eq!(seqs.augmented[0].get(0, 3), Complex64::new(0.5, 0.25));
        assert_eq!(seqs.augmented[1].get(0, 3), Complex64::new(7.0, 0.0));
        assert_eq!(seqs.augmented[1].get(1, 3), Complex64::new(0.5, 0.25));
        for j in 0..8 {
            assert_eq!(seqs.augmented[0].get(0, j), seqs.odd.get(0, j).conj());
        }
        assert!(build_sequences(&bank, 2, 5).is_err());
    }

    #[test]
    fn cauchy_reproduces_constants_and_holomorphic_data() {
        let opts = CauchyOptions::default();
        let one = trace(SeqKind::Plain, 256, 4, &[&|_| Complex64::new(1.0, 0.0)]);
        let t = bukhgeim_cauchy_all(&one, &points(), false, opts);
        for p in 0..points().len() {
            assert!((t.values[0][p] - 1.0).norm() < 1e-10);
            for s in 1..4 {
                assert!(t.values[s][p].norm() < 1e-10);
            }
        }
        let z = trace(SeqKind::Plain, 256, 4, &[&|z| z]);
        let t = bukhgeim_cauchy_all(&z, &points(), false, opts);
        for (p, &x) in points().iter().enumerate() {
            assert!((t.values[0][p] - x).norm() < 1e-10);
        }
    }

    #[test]
    fn cauchy_reproduces_l_analytic_pair() {
        let seq = trace(SeqKind::Plain, 256, 4, &[&|z: Complex64| z.conj(), &|z: Complex64| -z]);
        let t = bukhgeim_cauchy_all(&seq, &points(), true, CauchyOptions::default());
        for (p, &x) in points().iter().enumerate() {
            assert!((t.values[0][p] - x.conj()).norm() < 1e-8, "{} vs {}", t.values[0][p], x.conj());
            assert!((t.values[1][p] + x).norm() < 1e-8);
            assert!(t.values[2][p].norm() < 1e-8);
            // d conj(z) = 0, dbar conj(z) = 1; d(-z) = -1
            assert!(t.d[0][p].norm() < 1e-8);
            assert!((t.dbar[0][p] - 1.0).norm() < 1e-8);
            assert!((t.d[1][p] + 1.0).norm() < 1e-8);
        }
    }

    #[test]
    fn outside_points_are_reported() {
        let seq = trace(SeqKind::Plain, 64, 2, &[&|_| Complex64::new(1.0, 0.0)]);
        let t = bukhgeim_cauchy_all(&seq, &[Complex64::new(0.995, 0.0), Complex64::new(0.1, 0.0)], false, CauchyOptions::default());
        assert_eq!(t.errors.len(), 1);
        assert_eq!(t.errors[0].0, 0);
        assert!((t.values[0][1] - 1.0).norm() < 1e-12);
    }

    #[test]
    fn hilbert_examples() {
        let one = trace(SeqKind::Plain, 512, 3, &[&|_| Complex64::new(1.0, 0.0)]);
        let h = aanalytic_hilbert(&one);
        assert!(h.slot(0).iter().all(|c| (c - Complex64::i()).norm() < 1e-12));
        assert!(range_residual(&one) < 1e-12);
        let zero = SeqBoundary::zeros(SeqKind::Plain, 64, 3);
        assert_eq!(range_residual(&zero), 0.0);
        let pair = trace(SeqKind::Plain, 512, 4, &[&|z: Complex64| z.conj(), &|z: Complex64| -z]);
        assert!(range_residual(&pair) < 1e-12);
        let bad = trace(SeqKind::Plain, 512, 4, &[&|z: Complex64| z.conj()]);
        assert!(range_residual(&bad) > 0.1);
    }

    #[test]
    fn conjugacy_of_zero_data_vanishes() {
        let seq = SeqBoundary::zeros(SeqKind::Augmented(1), 32, 3);
        let odd = SeqBoundary::zeros(SeqKind::Odd, 32, 2);
        let pts = points();
        let a = bukhgeim_cauchy(&seq, &pts, &SlotRequest { values: vec![0], derivatives: vec![] }, CauchyOptions::default());
        let o = bukhgeim_cauchy(&odd, &pts, &SlotRequest { values: vec![0, 1], derivatives: vec![] }, CauchyOptions::default());
        assert_eq!(conjugacy_defect(&[a], &o), 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn cplx() -> impl Strategy<Value = Complex64> {
            (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(re, im)| Complex64::new(re, im))
        }

        /// `<c zbar + p(z), -c z + d + e zbar, -e z>` satisfies `dbar v_s + d v_{s+1} = 0`.
        fn family(c: Complex64, d: Complex64, e: Complex64, p: Vec<Complex64>) -> [Box<dyn Fn(Complex64) -> Complex64>; 3] {
            [
                Box::new(move |z: Complex64| c * z.conj() + p.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &k| acc * z + k)),
                Box::new(move |z: Complex64| -c * z + d + e * z.conj()),
                Box::new(move |z: Complex64| -e * z),
            ]
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(16))]
            #[test]
            fn l_analytic_traces_are_in_the_range(c in cplx(), d in cplx(), e in cplx(), p in proptest::collection::vec(cplx(), 5), r in 0.0f64..0.8, t in 0.0f64..std::f64::consts::TAU) {
                let f = family(c, d, e, p);
                let seq = SeqBoundary::from_traces(SeqKind::Plain, 128, &[&*f[0], &*f[1], &*f[2]], 4);
                prop_assert!(range_residual(&seq) < 1e-10);
                // Left shifts of L-analytic sequences are L-analytic.
                prop_assert!(range_residual(&seq.shifted()) < 1e-10);
                let z = Complex64::from_polar(r, t);
                let tail = bukhgeim_cauchy_all(&seq, &[z], true, CauchyOptions::default());
                for s in 0..3 {
                    prop_assert!((tail.values[s][0] - f[s](z)).norm() < 1e-8);
                }
                prop_assert!(tail.values[3][0].norm() < 1e-8);
                // dbar v_0 = c, d v_1 = -c
                prop_assert!((tail.dbar[0][0] - c).norm() < 1e-7);
                prop_assert!((tail.d[1][0] + c).norm() < 1e-7);
            }

            #[test]
            fn hilbert_is_linear(c in cplx(), e in cplx(), w in -2.0f64..2.0) {
                let a = SeqBoundary::from_traces(SeqKind::Plain, 64, &[&|z: Complex64| c * z.conj() * z, &|z: Complex64| z * z], 3);
                let b = SeqBoundary::from_traces(SeqKind::Plain, 64, &[&|z: Complex64| e * z.conj().powi(2), &|_| c], 3);
                let mut sum = a.clone();
                for s in 0..3 {
                    for (x, y) in sum.slot_mut(s).iter_mut().zip(b.slot(s)) {
                        *x += w * y;
                    }
                }
                let (ha, hb, hs) = (aanalytic_hilbert(&a), aanalytic_hilbert(&b), aanalytic_hilbert(&sum));
                for s in 0..3 {
                    for j in 0..64 {
                        prop_assert!((hs.get(s, j) - ha.get(s, j) - w * hb.get(s, j)).norm() < 1e-12);
                    }
                }
            }

            #[test]
            fn a_trailing_antiholomorphic_term_leaves_the_range(c in cplx()) {
                prop_assume!(c.norm() > 0.1);
                let seq = SeqBoundary::from_traces(SeqKind::Plain, 128, &[&|_| Complex64::new(1.0, 0.0), &|z: Complex64| c * z.conj()], 2);
                prop_assert!(range_residual(&seq) > 1e-2);
            }
        }
    }
}
