//! Unit-disk geometry: chords, boundary nodes and interior lattices.
//!
//! Points of the plane are represented as `Complex64` (`z = x1 + i x2`), which
//! is the natural carrier for the Cauchy–Riemann calculus used elsewhere in the
//! crate. Directions are angles `phi` with `theta = (cos phi, sin phi)`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{config, domain, Result};

/// Points farther than this from the closed disk are rejected.
pub const DISK_SLACK: f64 = 1e-12;

/// Unit vector `theta = (cos phi, sin phi)` as a complex number.
#[inline]
pub fn direction(phi: f64) -> Complex64 {
    Complex64::new(phi.cos(), phi.sin())
}

/// `theta_perp = (-sin phi, cos phi)`, i.e. `theta` rotated by `+pi/2`.
#[inline]
pub fn perpendicular(phi: f64) -> Complex64 {
    Complex64::new(-phi.sin(), phi.cos())
}

/// Euclidean inner product of two plane vectors stored as complex numbers.
#[inline]
pub fn dot(a: Complex64, b: Complex64) -> f64 {
    a.re * b.re + a.im * b.im
}

/// The unit disk with a uniform boundary discretization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiskDomain {
    n_boundary: usize,
    margin: f64,
}

impl DiskDomain {
    pub fn new(n_boundary: usize, margin: f64) -> Result<Self> {
        if n_boundary < 8 || !n_boundary.is_multiple_of(2) {
            return config(format!("boundary node count must be even and >= 8, got {n_boundary}"));
        }
        if !(margin > 0.0 && margin < 0.5) {
            return config(format!("mask margin must lie in (0, 0.5), got {margin}"));
        }
        Ok(Self { n_boundary, margin })
    }

    pub fn radius(&self) -> f64 {
        1.0
    }

    pub fn n_boundary(&self) -> usize {
        self.n_boundary
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    /// Boundary parameter `beta_j = 2 pi j / N_b`.
    pub fn boundary_angle(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.n_boundary as f64
    }

    pub fn boundary_point(&self, j: usize) -> Complex64 {
        direction(self.boundary_angle(j))
    }

    pub fn boundary_points(&self) -> Vec<Complex64> {
        (0..self.n_boundary).map(|j| self.boundary_point(j)).collect()
    }

    /// True when `z` lies strictly inside the evaluation mask `|z| < 1 - margin`.
    pub fn in_mask(&self, z: Complex64) -> bool {
        z.norm() < 1.0 - self.margin
    }
}

/// A chord of the disk through a base point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chord {
    pub base: Complex64,
    pub phi: f64,
    pub tau_minus: f64,
    pub tau_plus: f64,
}

impl Chord {
    pub fn new(base: Complex64, phi: f64) -> Result<Self> {
        let (tau_minus, tau_plus) = chord_times(base, phi)?;
        Ok(Self { base, phi, tau_minus, tau_plus })
    }

    pub fn length(&self) -> f64 {
        self.tau_minus + self.tau_plus
    }

    pub fn entry(&self) -> Complex64 {
        self.base - self.tau_minus * direction(self.phi)
    }

    pub fn exit(&self) -> Complex64 {
        self.base + self.tau_plus * direction(self.phi)
    }

    /// Point at signed arclength `t` from the base point.
    pub fn at(&self, t: f64) -> Complex64 {
        self.base + t * direction(self.phi)
    }
}

/// Distances `(tau_minus, tau_plus)` from `x` to the unit circle along `-theta`
/// and `+theta`.
pub fn chord_times(x: Complex64, phi: f64) -> Result<(f64, f64)> {
    let r2 = x.norm_sqr();
    if r2.sqrt() > 1.0 + DISK_SLACK {
        return domain(format!("point ({}, {}) lies outside the unit disk", x.re, x.im));
    }
    // |x + t theta|^2 = 1  <=>  t^2 + 2 b t + c = 0
    let b = dot(x, direction(phi));
    let c = (r2 - 1.0).min(0.0);
    let s = (b * b - c).max(0.0).sqrt();
    // The product of the roots is c; use it to avoid cancellation in the small root.
    let (tau_minus, tau_plus) = if b >= 0.0 {
        let big = b + s;
        (big, if big > 0.0 { -c / big } else { 0.0 })
    } else {
        let big = s - b;
        (if big > 0.0 { -c / big } else { 0.0 }, big)
    };
    Ok((tau_minus, tau_plus))
}

/// Chord endpoints `(x - tau_minus theta, x + tau_plus theta)`.
pub fn chord_endpoints(x: Complex64, phi: f64) -> Result<(Complex64, Complex64)> {
    let chord = Chord::new(x, phi)?;
    Ok((chord.entry(), chord.exit()))
}

/// Uniform Cartesian lattice restricted to a disk.
///
/// Nodes with `|z| < 1 - margin` form the evaluation mask. Nodes in a thin halo
/// outside the mask are kept so that finite-difference stencils centred on
/// mask nodes can be completed; the halo never reaches the unit circle.
#[derive(Debug, Clone)]
pub struct InteriorGrid {
    pitch: f64,
    margin: f64,
    half_width: i64,
    nodes: Vec<Complex64>,
    lattice: Vec<(i64, i64)>,
    in_mask: Vec<bool>,
    lookup: Vec<usize>,
}

impl InteriorGrid {
    /// Lattice with `halo` extra rings of nodes (clipped to `|z| <= 1 - margin/2`).
    pub fn new(pitch: f64, margin: f64, halo: usize) -> Result<Self> {
        if !(pitch > 0.0 && pitch < 0.5) {
            return config(format!("grid pitch must lie in (0, 0.5), got {pitch}"));
        }
        if !(margin > 0.0 && margin < 0.5) {
            return config(format!("mask margin must lie in (0, 0.5), got {margin}"));
        }
        let mask_radius = 1.0 - margin;
        let outer = (mask_radius + halo as f64 * pitch).min(1.0 - 0.5 * margin);
        let half_width = (outer / pitch).floor() as i64 + 1;
        let side = (2 * half_width + 1) as usize;
        let mut lookup = vec![usize::MAX; side * side];
        let mut nodes = Vec::new();
        let mut lattice = Vec::new();
        let mut in_mask = Vec::new();
        for i in -half_width..=half_width {
            for j in -half_width..=half_width {
                let z = Complex64::new(i as f64 * pitch, j as f64 * pitch);
                let r = z.norm();
                let inside = r < mask_radius;
                if inside || (halo > 0 && r < outer) {
                    lookup[((i + half_width) as usize) * side + (j + half_width) as usize] = nodes.len();
                    nodes.push(z);
                    lattice.push((i, j));
                    in_mask.push(inside);
                }
            }
        }
        Ok(Self { pitch, margin, half_width, nodes, lattice, in_mask, lookup })
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Complex64] {
        &self.nodes
    }

    pub fn node(&self, k: usize) -> Complex64 {
        self.nodes[k]
    }

    pub fn lattice_index(&self, k: usize) -> (i64, i64) {
        self.lattice[k]
    }

    pub fn in_mask(&self, k: usize) -> bool {
        self.in_mask[k]
    }

    pub fn mask_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&k| self.in_mask[k])
    }

    pub fn mask_len(&self) -> usize {
        self.in_mask.iter().filter(|&&m| m).count()
    }

    /// Node index at lattice position `(i, j)`, if that node is present.
    pub fn find(&self, i: i64, j: i64) -> Option<usize> {
        let hw = self.half_width;
        if i < -hw || i > hw || j < -hw || j > hw {
            return None;
        }
        let side = (2 * hw + 1) as usize;
        let k = self.lookup[((i + hw) as usize) * side + (j + hw) as usize];
        (k != usize::MAX).then_some(k)
    }

    /// Neighbour of node `k` shifted by `(di, dj)` lattice steps.
    pub fn neighbour(&self, k: usize, di: i64, dj: i64) -> Option<usize> {
        let (i, j) = self.lattice[k];
        self.find(i + di, j + dj)
    }
}
