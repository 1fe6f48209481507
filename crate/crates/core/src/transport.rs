//! Forward simulators for the attenuated X-ray and Doppler transforms.
//!
//! Data are produced in the canonical zero-inflow form: the value at an outflow
//! pair `(zeta, theta)` is the weighted integral over the chord ending at
//! `zeta`, and every inflow or tangential pair carries zero.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::fields::{Disk, Profile, ScalarFieldGrid, VectorFieldGrid, VectorProfile};
use crate::geometry::{chord_times, direction, DiskDomain};
use crate::quadrature::{for_each_node, simpson, PieceRule};

/// Rays with `theta . nu` at or below this are treated as tangential.
pub const TANGENT_EPS: f64 = 1e-10;

/// Default step of the Simpson rule used for grid-sampled fields.
pub const DEFAULT_RAY_STEP: f64 = 1.0 / 512.0;

/// How a field is integrated along rays.
#[derive(Debug, Clone)]
pub enum Layout {
    /// Closed form: piecewise smooth between `circles`, zero outside `support`.
    Closed { circles: Vec<Disk>, support: Option<Vec<Disk>>, degree: Option<usize>, scale: Option<f64> },
    /// Grid samples, integrated by Simpson's rule.
    Sampled,
}

/// An integrand along rays, possibly depending on the ray direction.
pub trait RayIntegrand: Sync {
    /// Value at `z` for direction `theta` (unit complex number).
    fn eval(&self, z: Complex64, theta: Complex64) -> f64;
    fn layout(&self) -> Layout;
    fn is_zero(&self) -> bool {
        false
    }
    fn descriptor(&self) -> String;
}

impl RayIntegrand for Profile {
    fn eval(&self, z: Complex64, _theta: Complex64) -> f64 {
        self.value(z)
    }

    fn layout(&self) -> Layout {
        let mut circles = Vec::new();
        self.breaks(&mut circles);
        Layout::Closed { circles, support: self.support(), degree: self.line_degree(), scale: self.min_gauss_width() }
    }

    fn is_zero(&self) -> bool {
        Profile::is_zero(self)
    }

    fn descriptor(&self) -> String {
        Profile::descriptor(self)
    }
}

impl RayIntegrand for ScalarFieldGrid {
    fn eval(&self, z: Complex64, _theta: Complex64) -> f64 {
        self.sample(z)
    }

    fn layout(&self) -> Layout {
        match &self.profile {
            Some(p) => p.layout(),
            None => Layout::Sampled,
        }
    }

    fn is_zero(&self) -> bool {
        match &self.profile {
            Some(p) => p.is_zero(),
            None => self.values.iter().all(|&v| v == 0.0),
        }
    }

    fn descriptor(&self) -> String {
        match &self.profile {
            Some(p) => p.descriptor(),
            None => "sampled".into(),
        }
    }
}

/// `theta . F` for a closed-form vector field.
pub struct Tangential<'a>(pub &'a VectorProfile);

impl RayIntegrand for Tangential<'_> {
    fn eval(&self, z: Complex64, theta: Complex64) -> f64 {
        let f = self.0.value(z);
        theta.re * f.re + theta.im * f.im
    }

    fn layout(&self) -> Layout {
        let mut circles = Vec::new();
        self.0.breaks(&mut circles);
        Layout::Closed { circles, support: self.0.support(), degree: self.0.line_degree(), scale: self.0.min_gauss_width() }
    }

    fn is_zero(&self) -> bool {
        matches!(self.0, VectorProfile::Zero)
    }

    fn descriptor(&self) -> String {
        serde_json::to_string(self.0).unwrap_or_default()
    }
}

/// `theta . F` for a grid-sampled vector field (bilinear interpolation).
pub struct TangentialSampled<'a>(pub &'a VectorFieldGrid);

impl RayIntegrand for TangentialSampled<'_> {
    fn eval(&self, z: Complex64, theta: Complex64) -> f64 {
        let grid = &self.0.grid;
        let p = grid.pitch();
        let (x, y) = (z.re / p, z.im / p);
        let (i0, j0) = (x.floor() as i64, y.floor() as i64);
        let (fx, fy) = (x - i0 as f64, y - j0 as f64);
        let at = |i: i64, j: i64| grid.find(i, j).map_or(Complex64::new(0.0, 0.0), |k| self.0.values[k]);
        let f = (at(i0, j0) * (1.0 - fy) + at(i0, j0 + 1) * fy) * (1.0 - fx) + (at(i0 + 1, j0) * (1.0 - fy) + at(i0 + 1, j0 + 1) * fy) * fx;
        theta.re * f.re + theta.im * f.im
    }

    fn layout(&self) -> Layout {
        Layout::Sampled
    }

    fn descriptor(&self) -> String {
        "sampled".into()
    }
}

/// `int_{t0}^{t1} q(base + t dir) dt`.
pub fn line_integral(q: &dyn RayIntegrand, base: Complex64, dir: Complex64, t0: f64, t1: f64, ray_step: f64) -> f64 {
    if t1 <= t0 || q.is_zero() {
        return 0.0;
    }
    match q.layout() {
        Layout::Closed { circles, support, degree, scale } => {
            let mut acc = 0.0;
            for_each_node(base, dir, t0, t1, &circles, support.as_deref(), PieceRule::for_integrand(degree, scale), |t, w| {
                acc += w * q.eval(base + dir * t, dir)
            });
            acc
        }
        Layout::Sampled => simpson(|t| q.eval(base + dir * t, dir), t0, t1, ray_step),
    }
}

/// Divergence beam transform `Da(x, theta) = int_0^{tau_+} a(x + t theta) dt`.
pub fn divergence_beam(a: &dyn RayIntegrand, x: Complex64, phi: f64, ray_step: f64) -> Result<f64> {
    let (_, tau_plus) = chord_times(x, phi)?;
    Ok(line_integral(a, x, direction(phi), 0.0, tau_plus, ray_step))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataTag {
    Xray,
    Doppler,
}

/// Boundary data on the `(beta_j, phi_k)` grid, stored row-major by boundary node.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub n_b: usize,
    pub n_phi: usize,
    pub values: Vec<f64>,
    pub tag: DataTag,
    pub attenuation: String,
    pub ray_step: f64,
}

impl Sinogram {
    pub fn zeros(n_b: usize, n_phi: usize, tag: DataTag, attenuation: String) -> Self {
        Self { n_b, n_phi, values: vec![0.0; n_b * n_phi], tag, attenuation, ray_step: 0.0 }
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.values[j * self.n_phi + k]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.n_phi..(j + 1) * self.n_phi]
    }

    pub fn phi(&self, k: usize) -> f64 {
        2.0 * std::f64::consts::PI * k as f64 / self.n_phi as f64
    }

    pub fn beta(&self, j: usize) -> f64 {
        2.0 * std::f64::consts::PI * j as f64 / self.n_b as f64
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Whether `(zeta_j, theta_k)` points out of the disk.
    pub fn is_outflow(&self, j: usize, k: usize) -> bool {
        let (b, p) = (self.beta(j), self.phi(k));
        (b - p).cos() > TANGENT_EPS
    }
}

/// Forward simulation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportConfig {
    pub n_phi: usize,
    pub ray_step: f64,
}

impl TransportConfig {
    pub fn new(n_phi: usize, ray_step: f64) -> Result<Self> {
        if n_phi < 4 {
            return config(format!("direction count must be at least 4, got {n_phi}"));
        }
        if !(ray_step > 0.0) {
            return config(format!("ray step must be positive, got {ray_step}"));
        }
        Ok(Self { n_phi, ray_step })
    }
}

/// `int_chord q(x) exp(-Da(x, theta)) dt` over the chord that leaves the disk at `zeta`.
pub fn attenuated_ray(q: &dyn RayIntegrand, a: &dyn RayIntegrand, zeta: Complex64, phi: f64, ray_step: f64) -> f64 {
    let theta = direction(phi);
    let outward = zeta.re * theta.re + zeta.im * theta.im;
    if outward <= TANGENT_EPS || q.is_zero() {
        return 0.0;
    }
    attenuated_segment(q, a, zeta, phi, 2.0 * outward, ray_step)
}

/// Zero-inflow solution `u(z, theta)` of `theta . grad u + a u = q` at an interior point.
pub fn transport_solution(q: &dyn RayIntegrand, a: &dyn RayIntegrand, z: Complex64, phi: f64, ray_step: f64) -> Result<f64> {
    let (tau_minus, _) = chord_times(z, phi)?;
    Ok(attenuated_segment(q, a, z, phi, tau_minus, ray_step))
}

/// `int_0^length q(x - t theta) exp(-int_0^t a(x - s theta) ds) dt`.
fn attenuated_segment(q: &dyn RayIntegrand, a: &dyn RayIntegrand, zeta: Complex64, phi: f64, length: f64, ray_step: f64) -> f64 {
    let theta = direction(phi);
    if length <= 0.0 || q.is_zero() {
        return 0.0;
    }
    // Parametrize backwards from the exit point: x(t) = zeta - t theta.
    let back = -theta;
    let a_zero = a.is_zero();
    let mut nodes: Vec<(f64, f64)> = Vec::new();
    match (q.layout(), a.layout()) {
        (Layout::Closed { mut circles, support, degree, scale }, a_layout) => {
            let rule = if a_zero {
                PieceRule::for_integrand(degree, scale)
            } else {
                let mut rule = PieceRule::smooth();
                if let Some(s) = scale {
                    rule.max_len = rule.max_len.min(0.5 * s);
                }
                if let Layout::Closed { circles: ac, scale: ascale, .. } = a_layout {
                    circles.extend(ac);
                    if let Some(s) = ascale {
                        rule.max_len = rule.max_len.min(0.5 * s);
                    }
                } else {
                    rule.max_len = rule.max_len.min(ray_step * 16.0);
                }
                rule
            };
            for_each_node(zeta, back, 0.0, length, &circles, support.as_deref(), rule, |t, w| nodes.push((t, w)));
        }
        (Layout::Sampled, _) => {
            let mut n = (length / ray_step).ceil().max(2.0) as usize;
            if n % 2 == 1 {
                n += 1;
            }
            let h = length / n as f64;
            for i in 0..=n {
                let w = if i == 0 || i == n {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                nodes.push((i as f64 * h, w * h / 3.0));
            }
        }
    }
    nodes.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut acc = 0.0;
    let mut depth = 0.0;
    let mut last = 0.0;
    for (t, w) in nodes {
        if !a_zero {
            depth += line_integral(a, zeta, back, last, t, ray_step);
            last = t;
        }
        acc += w * q.eval(zeta + back * t, theta) * (-depth).exp();
    }
    acc
}

fn forward(q: &dyn RayIntegrand, a: &dyn RayIntegrand, domain: &DiskDomain, cfg: TransportConfig, tag: DataTag) -> Sinogram {
    let n_b = domain.n_boundary();
    let n_phi = cfg.n_phi;
    let rows: Vec<Vec<f64>> = (0..n_b)
        .into_par_iter()
        .map(|j| {
            let zeta = domain.boundary_point(j);
            (0..n_phi)
                .map(|k| attenuated_ray(q, a, zeta, 2.0 * std::f64::consts::PI * k as f64 / n_phi as f64, cfg.ray_step))
                .collect()
        })
        .collect();
    Sinogram { n_b, n_phi, values: rows.concat(), tag, attenuation: a.descriptor(), ray_step: cfg.ray_step }
}

/// Attenuated X-ray data of a scalar source `f`.
pub fn forward_xray(f: &dyn RayIntegrand, a: &dyn RayIntegrand, domain: &DiskDomain, cfg: TransportConfig) -> Sinogram {
    forward(f, a, domain, cfg, DataTag::Xray)
}

/// Attenuated Doppler data of a closed-form vector field.
pub fn forward_doppler(field: &VectorProfile, a: &dyn RayIntegrand, domain: &DiskDomain, cfg: TransportConfig) -> Sinogram {
    forward(&Tangential(field), a, domain, cfg, DataTag::Doppler)
}

/// Attenuated Doppler data of a grid-sampled vector field.
pub fn forward_doppler_sampled(field: &VectorFieldGrid, a: &dyn RayIntegrand, domain: &DiskDomain, cfg: TransportConfig) -> Sinogram {
    forward(&TangentialSampled(field), a, domain, cfg, DataTag::Doppler)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn poly(text: &str) -> Profile {
        Profile::parse(text).unwrap()
    }

    #[test]
    fn divergence_beam_examples() {
        let z = Complex64::new(0.0, 0.0);
        assert_eq!(divergence_beam(&Profile::Zero, z, 0.7, DEFAULT_RAY_STEP).unwrap(), 0.0);
        let one = Profile::Constant { value: 1.0 };
        assert!((divergence_beam(&one, z, 0.7, DEFAULT_RAY_STEP).unwrap() - 1.0).abs() < 1e-14);
        let b = poly("poly(0,0,1,1)");
        let v = divergence_beam(&b, Complex64::new(-1.0, 0.0), 0.0, DEFAULT_RAY_STEP).unwrap();
        assert!((v - 32.0 / 35.0).abs() < 1e-14);
    }

    #[test]
    fn constant_source_gives_chord_length() {
        let domain = DiskDomain::new(16, 0.05).unwrap();
        let cfg = TransportConfig::new(16, DEFAULT_RAY_STEP).unwrap();
        let s = forward_xray(&Profile::Constant { value: 1.0 }, &Profile::Zero, &domain, cfg);
        for j in 0..16 {
            for k in 0..16 {
                let expect = if s.is_outflow(j, k) { 2.0 * (s.beta(j) - s.phi(k)).cos() } else { 0.0 };
                assert!((s.get(j, k) - expect).abs() < 1e-13);
            }
        }
        let f = VectorProfile::Components { f1: Profile::Constant { value: 1.0 }, f2: Profile::Zero };
        let d = forward_doppler(&f, &Profile::Zero, &domain, cfg);
        for j in 0..16 {
            for k in 0..16 {
                assert!((d.get(j, k) - s.phi(k).cos() * s.get(j, k)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn gradient_data_vanish_without_attenuation() {
        let domain = DiskDomain::new(32, 0.05).unwrap();
        let cfg = TransportConfig::new(32, DEFAULT_RAY_STEP).unwrap();
        let psi = poly("poly(0.2,-0.1,0.6,1)+poly(-0.3,0.3,0.4,-2)");
        let d = forward_doppler(&VectorProfile::Gradient { psi, scale: 1.0 }, &Profile::Zero, &domain, cfg);
        assert!(d.sup_norm() < 1e-12);
    }

    #[test]
    fn sampled_path_agrees_with_closed_form() {
        let a = poly("poly(0,0,1,0.5)");
        let f = poly("poly(0.1,0.2,0.5,1)");
        let grid = std::sync::Arc::new(crate::geometry::InteriorGrid::new(1.0 / 256.0, 0.01, 2).unwrap());
        let fs = ScalarFieldGrid::from_values(grid.clone(), grid.nodes().iter().map(|&z| f.value(z)).collect()).unwrap();
        let zeta = direction(0.3);
        let exact = attenuated_ray(&f, &a, zeta, 0.1, DEFAULT_RAY_STEP);
        let approx = attenuated_ray(&fs, &a, zeta, 0.1, DEFAULT_RAY_STEP);
        assert!((exact - approx).abs() < 1e-4 * exact.abs().max(1e-3), "{exact} {approx}");
        assert!(exact.abs() > 1e-3);
        let _ = PI;
    }
}
