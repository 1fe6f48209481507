//! Test fields on the disk: closed-form scalar profiles, vector fields built
//! from them, grid sampling, Wirtinger derivatives and the harmonic extension
//! of boundary data.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};
use crate::geometry::InteriorGrid;

/// Closed disk, used to describe supports and smoothness breaks of profiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Disk {
    pub fn center(&self) -> Complex64 {
        Complex64::new(self.center[0], self.center[1])
    }

    pub fn contains(&self, z: Complex64) -> bool {
        (z - self.center()).norm() <= self.radius
    }

    /// Parameters `t` where `base + t dir` crosses the circle, if any.
    pub fn line_crossings(&self, base: Complex64, dir: Complex64) -> Option<(f64, f64)> {
        let d = base - self.center();
        let b = d.re * dir.re + d.im * dir.im;
        let c = d.norm_sqr() - self.radius * self.radius;
        let disc = b * b - c;
        if disc <= 0.0 {
            return None;
        }
        let s = disc.sqrt();
        Some((-b - s, -b + s))
    }
}

/// Ratio of the truncated-Gaussian width parameter to its standard deviation.
const GAUSS_SIGMAS: f64 = 4.0;

/// Closed-form scalar profile on the plane.
///
/// Gradients are returned packed as `d/dx1 + i d/dx2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Zero,
    /// Constant everywhere; only meaningful for tests since it is not compactly supported.
    Constant { value: f64 },
    /// `amp * max(0, 1 - |z-c|^2/w^2)^3`.
    Poly { center: [f64; 2], width: f64, amp: f64 },
    /// Polynomial cutoff times `exp(-|z-c|^2 / 2 sigma^2)` with `sigma = width / 4`.
    Gauss { center: [f64; 2], width: f64, amp: f64 },
    Sum { terms: Vec<Profile> },
    Product { factors: Vec<Profile> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BumpKind {
    Polynomial,
    GaussianTruncated,
}

impl Profile {
    /// Bump factory. Rejects supports that leave the closed unit disk.
    pub fn bump(center: Complex64, width: f64, amp: f64, kind: BumpKind) -> Result<Self> {
        if !(width > 0.0) || !width.is_finite() {
            return config(format!("bump width must be positive, got {width}"));
        }
        if center.norm() + width > 1.0 + 1e-12 {
            return domain(format!(
                "bump support (center ({}, {}), width {width}) escapes the unit disk",
                center.re, center.im
            ));
        }
        let center = [center.re, center.im];
        Ok(match kind {
            BumpKind::Polynomial => Profile::Poly { center, width, amp },
            BumpKind::GaussianTruncated => Profile::Gauss { center, width, amp },
        })
    }

    /// The attenuation `c (1 - |z|^2)^3`, positive inside the disk and vanishing on the circle.
    pub fn canonical_attenuation(c: f64) -> Self {
        Profile::Poly { center: [0.0, 0.0], width: 1.0, amp: c }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Profile::Zero => true,
            Profile::Constant { value } => *value == 0.0,
            Profile::Poly { amp, .. } | Profile::Gauss { amp, .. } => *amp == 0.0,
            Profile::Sum { terms } => terms.iter().all(Profile::is_zero),
            Profile::Product { factors } => factors.iter().any(Profile::is_zero),
        }
    }

    pub fn value(&self, z: Complex64) -> f64 {
        match self {
            Profile::Zero => 0.0,
            Profile::Constant { value } => *value,
            Profile::Poly { center, width, amp } => {
                let q = (z - c64(center)).norm_sqr() / (width * width);
                if q >= 1.0 {
                    0.0
                } else {
                    amp * (1.0 - q).powi(3)
                }
            }
            Profile::Gauss { center, width, amp } => {
                let q = (z - c64(center)).norm_sqr() / (width * width);
                if q >= 1.0 {
                    0.0
                } else {
                    amp * (-0.5 * GAUSS_SIGMAS * GAUSS_SIGMAS * q).exp() * (1.0 - q).powi(3)
                }
            }
            Profile::Sum { terms } => terms.iter().map(|t| t.value(z)).sum(),
            Profile::Product { factors } => factors.iter().map(|t| t.value(z)).product(),
        }
    }

    pub fn gradient(&self, z: Complex64) -> Complex64 {
        self.value_gradient(z).1
    }

    pub fn value_gradient(&self, z: Complex64) -> (f64, Complex64) {
        let zero = Complex64::new(0.0, 0.0);
        match self {
            Profile::Zero => (0.0, zero),
            Profile::Constant { value } => (*value, zero),
            Profile::Poly { center, width, amp } => {
                let d = z - c64(center);
                let w2 = width * width;
                let q = d.norm_sqr() / w2;
                if q >= 1.0 {
                    return (0.0, zero);
                }
                let m = 1.0 - q;
                (amp * m * m * m, d * (-6.0 * amp * m * m / w2))
            }
            Profile::Gauss { center, width, amp } => {
                let d = z - c64(center);
                let w2 = width * width;
                let q = d.norm_sqr() / w2;
                if q >= 1.0 {
                    return (0.0, zero);
                }
                let k = 0.5 * GAUSS_SIGMAS * GAUSS_SIGMAS;
                let e = (-k * q).exp();
                let m = 1.0 - q;
                let v = amp * e * m * m * m;
                // d/dq of e^{-kq} (1-q)^3, times dq/dz = 2 d / w^2
                let dq = amp * e * m * m * (-k * m - 3.0);
                (v, d * (2.0 * dq / w2))
            }
            Profile::Sum { terms } => terms.iter().fold((0.0, zero), |(v, g), t| {
                let (tv, tg) = t.value_gradient(z);
                (v + tv, g + tg)
            }),
            Profile::Product { factors } => {
                let parts: Vec<_> = factors.iter().map(|t| t.value_gradient(z)).collect();
                let v = parts.iter().map(|p| p.0).product();
                let mut g = zero;
                for i in 0..parts.len() {
                    let others: f64 = parts
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != i)
                        .map(|(_, p)| p.0)
                        .product();
                    g += parts[i].1 * others;
                }
                (v, g)
            }
        }
    }

    /// Disks covering the support, or `None` when the profile is not compactly supported.
    pub fn support(&self) -> Option<Vec<Disk>> {
        match self {
            Profile::Zero => Some(Vec::new()),
            Profile::Constant { .. } => None,
            Profile::Poly { center, width, .. } | Profile::Gauss { center, width, .. } => {
                Some(vec![Disk { center: *center, radius: *width }])
            }
            Profile::Sum { terms } => {
                let mut all = Vec::new();
                for t in terms {
                    all.extend(t.support()?);
                }
                Some(all)
            }
            Profile::Product { factors } => factors
                .iter()
                .filter_map(Profile::support)
                .min_by(|a, b| total_area(a).total_cmp(&total_area(b))),
        }
    }

    /// Circles across which the profile is only finitely smooth.
    pub fn breaks(&self, out: &mut Vec<Disk>) {
        match self {
            Profile::Zero | Profile::Constant { .. } => {}
            Profile::Poly { center, width, .. } | Profile::Gauss { center, width, .. } => {
                out.push(Disk { center: *center, radius: *width })
            }
            Profile::Sum { terms } => terms.iter().for_each(|t| t.breaks(out)),
            Profile::Product { factors } => factors.iter().for_each(|t| t.breaks(out)),
        }
    }

    /// Polynomial degree along lines between breaks, or `None` for transcendental profiles.
    pub fn line_degree(&self) -> Option<usize> {
        match self {
            Profile::Zero | Profile::Constant { .. } => Some(0),
            Profile::Poly { .. } => Some(6),
            Profile::Gauss { .. } => None,
            Profile::Sum { terms } => terms.iter().map(Profile::line_degree).try_fold(0, |m, d| d.map(|d| m.max(d))),
            Profile::Product { factors } => factors.iter().map(Profile::line_degree).try_fold(0, |m, d| d.map(|d| m + d)),
        }
    }

    /// Smallest width among Gaussian components; sets the subdivision length for quadrature.
    pub fn min_gauss_width(&self) -> Option<f64> {
        match self {
            Profile::Gauss { width, .. } => Some(*width),
            Profile::Sum { terms } => terms.iter().filter_map(Profile::min_gauss_width).reduce(f64::min),
            Profile::Product { factors } => factors.iter().filter_map(Profile::min_gauss_width).reduce(f64::min),
            _ => None,
        }
    }

    /// Textual descriptor, inverse of [`Profile::parse`].
    pub fn descriptor(&self) -> String {
        match self {
            Profile::Zero => "zero".into(),
            Profile::Constant { value } => format!("const({value})"),
            Profile::Poly { center, width, amp } => format!("poly({},{},{width},{amp})", center[0], center[1]),
            Profile::Gauss { center, width, amp } => format!("gauss({},{},{width},{amp})", center[0], center[1]),
            Profile::Sum { terms } if terms.is_empty() => "zero".into(),
            Profile::Sum { terms } => terms
                .iter()
                .map(|t| match t {
                    Profile::Sum { .. } => format!("({})", t.descriptor()),
                    _ => t.descriptor(),
                })
                .collect::<Vec<_>>()
                .join("+"),
            Profile::Product { factors } => factors
                .iter()
                .map(|t| match t {
                    Profile::Sum { terms } if terms.len() > 1 => format!("({})", t.descriptor()),
                    _ => t.descriptor(),
                })
                .collect::<Vec<_>>()
                .join("*"),
        }
    }

    /// Parse descriptors such as `poly(0,0,1,0.5)+gauss(0.2,0,0.3,1)*poly(0,0,0.9,1)`.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if text.is_empty() {
            return Err(Error::Format("empty profile descriptor".into()));
        }
        let terms = split_top(text, '+')?;
        if terms.len() > 1 {
            return Ok(Profile::Sum { terms: terms.iter().map(|t| Profile::parse(t)).collect::<Result<_>>()? });
        }
        let factors = split_top(text, '*')?;
        if factors.len() > 1 {
            return Ok(Profile::Product { factors: factors.iter().map(|t| Profile::parse(t)).collect::<Result<_>>()? });
        }
        if text.starts_with('(') && text.ends_with(')') {
            return Profile::parse(&text[1..text.len() - 1]);
        }
        if text == "zero" {
            return Ok(Profile::Zero);
        }
        let open = text.find('(').ok_or_else(|| Error::Format(format!("unknown profile '{text}'")))?;
        if !text.ends_with(')') {
            return Err(Error::Format(format!("unbalanced profile '{text}'")));
        }
        let name = &text[..open];
        let args: Vec<f64> = text[open + 1..text.len() - 1]
            .split(',')
            .map(|a| a.trim().parse::<f64>().map_err(|_| Error::Format(format!("bad number '{a}' in '{text}'"))))
            .collect::<Result<_>>()?;
        let arity = |n: usize| -> Result<()> {
            if args.len() == n {
                Ok(())
            } else {
                Err(Error::Format(format!("'{name}' takes {n} arguments, got {}", args.len())))
            }
        };
        match name {
            "const" => {
                arity(1)?;
                Ok(Profile::Constant { value: args[0] })
            }
            "poly" | "gauss" => {
                arity(4)?;
                let kind = if name == "poly" { BumpKind::Polynomial } else { BumpKind::GaussianTruncated };
                Profile::bump(Complex64::new(args[0], args[1]), args[2], args[3], kind)
            }
            _ => Err(Error::Format(format!("unknown profile '{name}'"))),
        }
    }

    /// Upper bound of `|value|` from the amplitudes.
    pub fn amplitude_bound(&self) -> f64 {
        match self {
            Profile::Zero => 0.0,
            Profile::Constant { value } => value.abs(),
            Profile::Poly { amp, .. } | Profile::Gauss { amp, .. } => amp.abs(),
            Profile::Sum { terms } => terms.iter().map(Profile::amplitude_bound).sum(),
            Profile::Product { factors } => factors.iter().map(Profile::amplitude_bound).product(),
        }
    }
}

fn total_area(disks: &[Disk]) -> f64 {
    disks.iter().map(|d| d.radius * d.radius).sum()
}

fn c64(p: &[f64; 2]) -> Complex64 {
    Complex64::new(p[0], p[1])
}

fn split_top(text: &str, sep: char) -> Result<Vec<&str>> {
    let mut depth = 0i32;
    let mut parts = Vec::new();
    let mut start = 0;
    let bytes = text.as_bytes();
    for (i, ch) in text.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth < 0 {
                    return Err(Error::Format(format!("unbalanced parentheses in '{text}'")));
                }
            }
            // An exponent sign such as `1e+3` never appears at depth 0.
            c if c == sep && depth == 0 && !(i > 0 && (bytes[i - 1] == b'e' || bytes[i - 1] == b'E') && sep == '+') => {
                parts.push(text[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(Error::Format(format!("unbalanced parentheses in '{text}'")));
    }
    parts.push(text[start..].trim());
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Format(format!("empty term in '{text}'")));
    }
    Ok(parts)
}

/// Closed-form planar vector field. Values are packed as `F1 + i F2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VectorProfile {
    Zero,
    Components { f1: Profile, f2: Profile },
    /// `scale * grad psi`.
    Gradient { psi: Profile, scale: f64 },
    /// `scale * (-d psi/dx2, d psi/dx1)`, divergence free.
    Rotated { psi: Profile, scale: f64 },
    Sum { terms: Vec<VectorProfile> },
}

impl VectorProfile {
    pub fn value(&self, z: Complex64) -> Complex64 {
        match self {
            VectorProfile::Zero => Complex64::new(0.0, 0.0),
            VectorProfile::Components { f1, f2 } => Complex64::new(f1.value(z), f2.value(z)),
            VectorProfile::Gradient { psi, scale } => psi.gradient(z) * *scale,
            VectorProfile::Rotated { psi, scale } => psi.gradient(z) * Complex64::new(0.0, *scale),
            VectorProfile::Sum { terms } => terms.iter().map(|t| t.value(z)).sum(),
        }
    }

    /// `f1 = (F1 + i F2)/2`.
    pub fn source(&self, z: Complex64) -> Complex64 {
        self.value(z) * 0.5
    }

    pub fn breaks(&self, out: &mut Vec<Disk>) {
        match self {
            VectorProfile::Zero => {}
            VectorProfile::Components { f1, f2 } => {
                f1.breaks(out);
                f2.breaks(out);
            }
            VectorProfile::Gradient { psi, .. } | VectorProfile::Rotated { psi, .. } => psi.breaks(out),
            VectorProfile::Sum { terms } => terms.iter().for_each(|t| t.breaks(out)),
        }
    }

    pub fn support(&self) -> Option<Vec<Disk>> {
        match self {
            VectorProfile::Zero => Some(Vec::new()),
            VectorProfile::Components { f1, f2 } => {
                let mut s = f1.support()?;
                s.extend(f2.support()?);
                Some(s)
            }
            VectorProfile::Gradient { psi, .. } | VectorProfile::Rotated { psi, .. } => psi.support(),
            VectorProfile::Sum { terms } => {
                let mut all = Vec::new();
                for t in terms {
                    all.extend(t.support()?);
                }
                Some(all)
            }
        }
    }

    /// Degree of `theta . F` along lines between breaks.
    pub fn line_degree(&self) -> Option<usize> {
        match self {
            VectorProfile::Zero => Some(0),
            VectorProfile::Components { f1, f2 } => Some(f1.line_degree()?.max(f2.line_degree()?)),
            VectorProfile::Gradient { psi, .. } | VectorProfile::Rotated { psi, .. } => {
                psi.line_degree().map(|d| d.saturating_sub(1))
            }
            VectorProfile::Sum { terms } => terms.iter().map(VectorProfile::line_degree).try_fold(0, |m, d| d.map(|d| m.max(d))),
        }
    }

    pub fn min_gauss_width(&self) -> Option<f64> {
        match self {
            VectorProfile::Zero => None,
            VectorProfile::Components { f1, f2 } => {
                [f1.min_gauss_width(), f2.min_gauss_width()].into_iter().flatten().reduce(f64::min)
            }
            VectorProfile::Gradient { psi, .. } | VectorProfile::Rotated { psi, .. } => psi.min_gauss_width(),
            VectorProfile::Sum { terms } => terms.iter().filter_map(VectorProfile::min_gauss_width).reduce(f64::min),
        }
    }
}

/// Seeded random bump of the given kind with width in `widths`, support inside `|z| <= reach`
/// and amplitude of magnitude in `[0.5, 1]` with random sign.
pub fn random_bump(rng: &mut impl Rng, kind: BumpKind, widths: (f64, f64), reach: f64) -> Result<Profile> {
    let width = rng.gen_range(widths.0..=widths.1).min(reach);
    let r = rng.gen_range(0.0..=(reach - width).max(0.0));
    let center = Complex64::from_polar(r, rng.gen_range(0.0..2.0 * PI));
    let amp = rng.gen_range(0.5..=1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    Profile::bump(center, width, amp, kind)
}

/// Seeded random vector field with a rotational part, a gradient part and two
/// independent components, all supported inside `|z| <= reach`.
pub fn random_vector_field(seed: u64, kind: BumpKind, reach: f64) -> Result<VectorProfile> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let widths = (0.45, 0.6);
    let mut bump = || random_bump(&mut rng, kind, widths, reach);
    Ok(VectorProfile::Sum {
        terms: vec![
            VectorProfile::Rotated { psi: bump()?, scale: 1.0 },
            VectorProfile::Gradient { psi: bump()?, scale: 1.0 },
            VectorProfile::Components { f1: bump()?, f2: bump()? },
        ],
    })
}

/// Real values on the nodes of an interior grid, with the generating profile when known.
#[derive(Debug, Clone)]
pub struct ScalarFieldGrid {
    pub grid: Arc<InteriorGrid>,
    pub values: Vec<f64>,
    pub profile: Option<Profile>,
}

impl ScalarFieldGrid {
    pub fn from_profile(grid: Arc<InteriorGrid>, profile: Profile) -> Self {
        let values = grid.nodes().iter().map(|&z| profile.value(z)).collect();
        Self { grid, values, profile: Some(profile) }
    }

    pub fn from_values(grid: Arc<InteriorGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return config(format!("{} values for a grid of {} nodes", values.len(), grid.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return domain("non-finite field value");
        }
        Ok(Self { grid, values, profile: None })
    }

    /// Value at an arbitrary point: the profile when known, else bilinear interpolation
    /// on the lattice, zero where the stencil leaves the grid.
    pub fn sample(&self, z: Complex64) -> f64 {
        match &self.profile {
            Some(p) => p.value(z),
            None => bilinear(&self.grid, &self.values, z),
        }
    }
}

fn bilinear(grid: &InteriorGrid, values: &[f64], z: Complex64) -> f64 {
    let p = grid.pitch();
    let (x, y) = (z.re / p, z.im / p);
    let (i0, j0) = (x.floor() as i64, y.floor() as i64);
    let (fx, fy) = (x - i0 as f64, y - j0 as f64);
    let at = |i: i64, j: i64| grid.find(i, j).map_or(0.0, |k| values[k]);
    (1.0 - fx) * ((1.0 - fy) * at(i0, j0) + fy * at(i0, j0 + 1)) + fx * ((1.0 - fy) * at(i0 + 1, j0) + fy * at(i0 + 1, j0 + 1))
}

/// Real vector field on grid nodes, packed as `F1 + i F2`.
#[derive(Debug, Clone)]
pub struct VectorFieldGrid {
    pub grid: Arc<InteriorGrid>,
    pub values: Vec<Complex64>,
}

impl VectorFieldGrid {
    pub fn from_profile(grid: Arc<InteriorGrid>, field: &VectorProfile) -> Self {
        let values = grid.nodes().iter().map(|&z| field.value(z)).collect();
        Self { grid, values }
    }

    /// Builds `F = (2 Re f1, 2 Im f1)` from the complex source.
    pub fn from_source(grid: Arc<InteriorGrid>, f1: &[Complex64]) -> Self {
        Self { grid, values: f1.iter().map(|v| v * 2.0).collect() }
    }

    pub fn source(&self) -> Vec<Complex64> {
        self.values.iter().map(|v| v * 0.5).collect()
    }
}

/// Finite-difference order actually used at a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stencil {
    Fourth,
    Second,
}

/// Centred partial derivatives `(d/dx1, d/dx2)` of nodal values at node `k`:
/// fourth order when the five-point stencil is present, second order otherwise,
/// `None` when not even the three-point stencil fits.
pub fn partials<T>(grid: &InteriorGrid, values: &[T], k: usize) -> Option<(T, T, Stencil)>
where
    T: Copy + std::ops::Sub<Output = T> + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let h = grid.pitch();
    let get = |di, dj| grid.neighbour(k, di, dj).map(|n| values[n]);
    let fourth = |m2: T, m1: T, p1: T, p2: T| (m2 - p2) * (1.0 / (12.0 * h)) + (p1 - m1) * (8.0 / (12.0 * h));
    if let (Some(xm2), Some(xm1), Some(xp1), Some(xp2), Some(ym2), Some(ym1), Some(yp1), Some(yp2)) =
        (get(-2, 0), get(-1, 0), get(1, 0), get(2, 0), get(0, -2), get(0, -1), get(0, 1), get(0, 2))
    {
        return Some((fourth(xm2, xm1, xp1, xp2), fourth(ym2, ym1, yp1, yp2), Stencil::Fourth));
    }
    let (xm1, xp1, ym1, yp1) = (get(-1, 0)?, get(1, 0)?, get(0, -1)?, get(0, 1)?);
    Some(((xp1 - xm1) * (0.5 / h), (yp1 - ym1) * (0.5 / h), Stencil::Second))
}

/// Second-order centred partials, used where a fixed convergence order is wanted.
pub fn partials_second<T>(grid: &InteriorGrid, values: &[T], k: usize) -> Option<(T, T)>
where
    T: Copy + std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T>,
{
    let h = grid.pitch();
    let get = |di, dj| grid.neighbour(k, di, dj).map(|n| values[n]);
    let (xm1, xp1, ym1, yp1) = (get(-1, 0)?, get(1, 0)?, get(0, -1)?, get(0, 1)?);
    Some(((xp1 - xm1) * (0.5 / h), (yp1 - ym1) * (0.5 / h)))
}

/// `dbar = (d1 + i d2)/2` and `d = (d1 - i d2)/2` from real or complex partials.
pub fn wirtinger_from_partials(dx: Complex64, dy: Complex64) -> (Complex64, Complex64) {
    let i = Complex64::i();
    ((dx + i * dy) * 0.5, (dx - i * dy) * 0.5)
}

/// Per-node Wirtinger derivatives; nodes without a usable stencil are listed in `dropped`.
#[derive(Debug, Clone)]
pub struct WirtingerPlanes {
    pub dbar: Vec<Option<Complex64>>,
    pub d: Vec<Option<Complex64>>,
    pub dropped: Vec<(usize, String)>,
}

/// Wirtinger derivatives of a scalar grid field, analytic when the profile is known.
pub fn wirtinger(field: &ScalarFieldGrid) -> WirtingerPlanes {
    let grid = &field.grid;
    let n = grid.len();
    let mut planes = WirtingerPlanes { dbar: vec![None; n], d: vec![None; n], dropped: Vec::new() };
    if let Some(profile) = &field.profile {
        for (k, &z) in grid.nodes().iter().enumerate() {
            let g = profile.gradient(z);
            // for real u: dbar u = (u_1 + i u_2)/2, d u = conj of that
            planes.dbar[k] = Some(g * 0.5);
            planes.d[k] = Some(g.conj() * 0.5);
        }
        return planes;
    }
    let complex: Vec<Complex64> = field.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let w = wirtinger_complex(grid, &complex);
    planes.dbar = w.dbar;
    planes.d = w.d;
    planes.dropped = w.dropped;
    planes
}

/// Finite-difference Wirtinger derivatives of complex nodal values.
pub fn wirtinger_complex(grid: &InteriorGrid, values: &[Complex64]) -> WirtingerPlanes {
    let n = grid.len();
    let mut planes = WirtingerPlanes { dbar: vec![None; n], d: vec![None; n], dropped: Vec::new() };
    for k in 0..n {
        match partials(grid, values, k) {
            Some((dx, dy, _)) => {
                let (db, d) = wirtinger_from_partials(dx, dy);
                planes.dbar[k] = Some(db);
                planes.d[k] = Some(d);
            }
            None => planes.dropped.push((k, "finite-difference stencil leaves the grid".into())),
        }
    }
    planes
}

/// Harmonic extension of boundary samples via the disk Poisson series.
#[derive(Debug, Clone)]
pub struct PoissonExtension {
    /// `c_n` for `n = 0..=N_b/2`, multiplying `z^n`.
    pos: Vec<Complex64>,
    /// `c_{-n}` for `n = 0..=N_b/2`, multiplying `conj(z)^n`; entry 0 unused.
    neg: Vec<Complex64>,
}

impl PoissonExtension {
    pub fn new(g0: &[Complex64]) -> Result<Self> {
        let nb = g0.len();
        if nb < 2 || !nb.is_multiple_of(2) {
            return config(format!("boundary sample count must be even, got {nb}"));
        }
        let mut buf = g0.to_vec();
        FftPlanner::new().plan_fft_forward(nb).process(&mut buf);
        let scale = 1.0 / nb as f64;
        let half = nb / 2;
        let mut pos = vec![Complex64::new(0.0, 0.0); half + 1];
        let mut neg = vec![Complex64::new(0.0, 0.0); half + 1];
        pos[0] = buf[0] * scale;
        for n in 1..half {
            pos[n] = buf[n] * scale;
            neg[n] = buf[nb - n] * scale;
        }
        // The Nyquist coefficient is shared evenly by the two directions.
        pos[half] = buf[half] * (0.5 * scale);
        neg[half] = buf[half] * (0.5 * scale);
        Ok(Self { pos, neg })
    }

    pub fn value(&self, z: Complex64) -> Complex64 {
        horner(&self.pos, z) + horner_from(&self.neg, 1, z.conj()) * z.conj()
    }

    /// `dbar u0 = sum_{n>0} n c_{-n} conj(z)^{n-1}`.
    pub fn dbar(&self, z: Complex64) -> Complex64 {
        derivative_series(&self.neg, z.conj())
    }

    /// `d u0 = sum_{n>0} n c_n z^{n-1}`.
    pub fn d(&self, z: Complex64) -> Complex64 {
        derivative_series(&self.pos, z)
    }
}

fn horner(c: &[Complex64], z: Complex64) -> Complex64 {
    c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &a| acc * z + a)
}

/// `sum_{n >= from} c_n z^{n-from}`.
fn horner_from(c: &[Complex64], from: usize, z: Complex64) -> Complex64 {
    horner(&c[from..], z)
}

fn derivative_series(c: &[Complex64], z: Complex64) -> Complex64 {
    c.iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, (n, &a)| acc * z + a * n as f64)
}

/// Harmonic extension evaluated at every grid node.
pub fn poisson_extension(g0: &[Complex64], grid: Arc<InteriorGrid>) -> Result<Vec<Complex64>> {
    let ext = PoissonExtension::new(g0)?;
    Ok(grid.nodes().iter().map(|&z| ext.value(z)).collect())
}

/// Boundary angle helper shared by tests and callers building boundary samples.
pub fn boundary_samples(nb: usize, f: impl Fn(f64) -> Complex64) -> Vec<Complex64> {
    (0..nb).map(|j| f(2.0 * PI * j as f64 / nb as f64)).collect()
}
