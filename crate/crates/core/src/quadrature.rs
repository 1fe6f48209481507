//! Line quadrature along rays: Gauss–Legendre on pieces between the circles
//! where a profile loses smoothness, plus a fixed-step Simpson rule for
//! grid-sampled fields.

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::GaussLegendre;
use num_complex::Complex64;

use crate::fields::Disk;

const MAX_ORDER: usize = 48;

fn table() -> &'static [Vec<(f64, f64)>] {
    static TABLE: OnceLock<Vec<Vec<(f64, f64)>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        (0..=MAX_ORDER)
            .map(|n| match NonZeroUsize::new(n) {
                None => Vec::new(),
                Some(n) => GaussLegendre::new(n).as_node_weight_pairs().to_vec(),
            })
            .collect()
    })
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> &'static [(f64, f64)] {
    &table()[n.clamp(1, MAX_ORDER)]
}

/// How many points per piece and the longest piece before subdividing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PieceRule {
    pub order: usize,
    pub max_len: f64,
}

impl PieceRule {
    /// Exact for polynomial integrands of the given degree; transcendental
    /// integrands get a high order on pieces no longer than `scale / 2`.
    pub fn for_integrand(degree: Option<usize>, scale: Option<f64>) -> Self {
        match degree {
            Some(d) => PieceRule { order: d / 2 + 1, max_len: f64::INFINITY },
            None => PieceRule { order: 20, max_len: 0.5 * scale.unwrap_or(0.5) },
        }
    }

    /// Rule for smooth non-polynomial integrands such as `f exp(-Da)`.
    pub fn smooth() -> Self {
        PieceRule { order: 16, max_len: 0.25 }
    }
}

/// Sorted parameters in `[t0, t1]` at which the ray crosses any of the circles,
/// including both ends.
pub fn breakpoints(base: Complex64, dir: Complex64, t0: f64, t1: f64, circles: &[Disk], out: &mut Vec<f64>) {
    out.clear();
    out.push(t0);
    for c in circles {
        if let Some((a, b)) = c.line_crossings(base, dir) {
            for t in [a, b] {
                if t > t0 && t < t1 {
                    out.push(t);
                }
            }
        }
    }
    out.push(t1);
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
}

/// Whether the midpoint of a piece can carry a nonzero integrand.
pub fn piece_active(base: Complex64, dir: Complex64, a: f64, b: f64, support: Option<&[Disk]>) -> bool {
    match support {
        None => true,
        Some(disks) => {
            let mid = base + dir * (0.5 * (a + b));
            disks.iter().any(|d| d.contains(mid))
        }
    }
}

/// Calls `visit(t, weight)` for every quadrature node of the rule over
/// the active pieces of `[t0, t1]`.
#[allow(clippy::too_many_arguments)]
pub fn for_each_node(
    base: Complex64,
    dir: Complex64,
    t0: f64,
    t1: f64,
    circles: &[Disk],
    support: Option<&[Disk]>,
    rule: PieceRule,
    mut visit: impl FnMut(f64, f64),
) {
    if t1 <= t0 {
        return;
    }
    let mut cuts = Vec::with_capacity(2 * circles.len() + 2);
    breakpoints(base, dir, t0, t1, circles, &mut cuts);
    let nodes = gauss_legendre(rule.order);
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a <= 0.0 || !piece_active(base, dir, a, b, support) {
            continue;
        }
        let parts = ((b - a) / rule.max_len).ceil().max(1.0) as usize;
        let step = (b - a) / parts as f64;
        for p in 0..parts {
            let lo = a + p as f64 * step;
            let half = 0.5 * step;
            let mid = lo + half;
            for &(x, wt) in nodes {
                visit(mid + half * x, half * wt);
            }
        }
    }
}

/// `int_{t0}^{t1} f(base + t dir) dt` with the piecewise Gauss–Legendre rule.
#[allow(clippy::too_many_arguments)]
pub fn integrate_line(
    f: impl Fn(Complex64) -> f64,
    base: Complex64,
    dir: Complex64,
    t0: f64,
    t1: f64,
    circles: &[Disk],
    support: Option<&[Disk]>,
    rule: PieceRule,
) -> f64 {
    let mut acc = 0.0;
    for_each_node(base, dir, t0, t1, circles, support, rule, |t, w| acc += w * f(base + dir * t));
    acc
}

/// Composite Simpson rule with step at most `max_step`.
pub fn simpson(f: impl Fn(f64) -> f64, t0: f64, t1: f64, max_step: f64) -> f64 {
    if t1 <= t0 {
        return 0.0;
    }
    let mut n = ((t1 - t0) / max_step).ceil() as usize;
    n = n.max(2);
    if n % 2 == 1 {
        n += 1;
    }
    let h = (t1 - t0) / n as f64;
    let mut acc = f(t0) + f(t1);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(t0 + i as f64 * h);
    }
    acc * h / 3.0
}
