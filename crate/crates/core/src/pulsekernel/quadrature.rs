//! Adaptive Gauss–Kronrod (7/15) quadrature and the quadrature route to the
//! segment moments and phase kernels. This path shares nothing with the
//! closed forms except the final assembly and exists to cross-check them.

use std::collections::BinaryHeap;

use num_complex::Complex64;

use super::{phase_kernel_from_tables, KernelTables, PhaseKernel, SegmentGrid};
use crate::crystal::ModeSet;
use nalgebra::DMatrix;

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { rel: 1e-10, abs: 1e-14, max_intervals: 20_000 }
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive integration of `f` over [a, b], starting from
/// `pieces` equal subintervals (use roughly one per half oscillation).
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, pieces: usize, tol: Tolerance) -> f64 {
    if a == b {
        return 0.0;
    }
    let pieces = pieces.max(1);
    let mut heap = BinaryHeap::with_capacity(pieces * 4);
    let (mut total, mut err) = (0.0, 0.0);
    for s in 0..pieces {
        let lo = a + (b - a) * s as f64 / pieces as f64;
        let hi = a + (b - a) * (s + 1) as f64 / pieces as f64;
        let (value, error) = gk15(&f, lo, hi);
        total += value;
        err += error;
        heap.push(Piece { a: lo, b: hi, value, error });
    }
    while err > tol.abs.max(tol.rel * total.abs()) && heap.len() < tol.max_intervals {
        let worst = heap.pop().expect("non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        let (v1, e1) = gk15(&f, worst.a, mid);
        let (v2, e2) = gk15(&f, mid, worst.b);
        total += v1 + v2 - worst.value;
        err += e1 + e2 - worst.error;
        heap.push(Piece { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Piece { a: mid, b: worst.b, value: v2, error: e2 });
    }
    // Re-sum to shed accumulated update round-off.
    heap.iter().map(|p| p.value).sum()
}

fn pieces_for(freq: f64, len: f64) -> usize {
    ((freq.abs() * len / std::f64::consts::PI).ceil() as usize).clamp(1, 4096)
}

/// ∫ sin(μt) e^{iωt} dt over [t_start, t_end] by quadrature.
pub fn segment_moment(mu: f64, omega: f64, t_start: f64, t_end: f64, tol: Tolerance) -> Complex64 {
    let n = pieces_for(mu.abs() + omega.abs(), t_end - t_start);
    let re = integrate(|t| (mu * t).sin() * (omega * t).cos(), t_start, t_end, n, tol);
    let im = integrate(|t| (mu * t).sin() * (omega * t).sin(), t_start, t_end, n, tol);
    Complex64::new(re, im)
}

/// ∫_{t_start}^{t_end} dt₂ ∫_{t_start}^{t₂} dt₁ sin(μt₂) sin(μt₁) sin ω(t₂−t₁), nested.
pub fn triangle_moment(mu: f64, omega: f64, t_start: f64, t_end: f64, tol: Tolerance) -> f64 {
    let freq = mu.abs() + omega.abs();
    let inner_tol = Tolerance { rel: tol.rel * 1e-2, abs: tol.abs * 1e-2, ..tol };
    let outer = |t2: f64| {
        if t2 <= t_start {
            return 0.0;
        }
        let inner = integrate(
            |t1| (mu * t1).sin() * (omega * (t2 - t1)).sin(),
            t_start,
            t2,
            pieces_for(freq, t2 - t_start),
            inner_tol,
        );
        (mu * t2).sin() * inner
    };
    integrate(outer, t_start, t_end, pieces_for(freq, t_end - t_start), tol)
}

pub fn kernel_tables(grid: SegmentGrid, modes: &ModeSet, tol: Tolerance) -> KernelTables {
    let (m, k) = (grid.segments, modes.len());
    let mut moments = DMatrix::zeros(m, k);
    let mut triangles = DMatrix::zeros(m, k);
    for p in 0..m {
        let (a, b) = grid.bounds(p);
        for (mode, &omega) in modes.frequencies.iter().enumerate() {
            moments[(p, mode)] = segment_moment(grid.mu, omega, a, b, tol);
            triangles[(p, mode)] = triangle_moment(grid.mu, omega, a, b, tol);
        }
    }
    KernelTables { grid, moments, triangles }
}

/// Phase kernel assembled from quadrature tables.
pub fn phase_kernel(grid: SegmentGrid, modes: &ModeSet, gi: &[f64], gj: &[f64], tol: Tolerance) -> PhaseKernel {
    phase_kernel_from_tables(&kernel_tables(grid, modes, tol), gi, gj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_and_trig_integrals() {
        let tol = Tolerance::default();
        assert!((integrate(|x| x * x, 0.0, 3.0, 1, tol) - 9.0).abs() < 1e-13);
        assert!((integrate(f64::sin, 0.0, PI, 1, tol) - 2.0).abs() < 1e-13);
        assert!((integrate(|x| (50.0 * x).cos(), 0.0, 1.0, 16, tol) - 50f64.sin() / 50.0).abs() < 1e-13);
        assert_eq!(integrate(|x| x, 1.0, 1.0, 4, tol), 0.0);
    }

    #[test]
    fn nested_triangle_simple_case() {
        // Against a fine midpoint rule on the triangle.
        let (mu, w, a, b) = (1.0, 1.0, 0.0, 2.0 * PI);
        let q = triangle_moment(mu, w, a, b, Tolerance::default());
        let n = 2000;
        let h = (b - a) / n as f64;
        let mut s = 0.0;
        for i in 0..n {
            let t2 = a + (i as f64 + 0.5) * h;
            for j in 0..n {
                let t1 = a + (j as f64 + 0.5) * h;
                let w8 = if j < i { 1.0 } else if j == i { 0.5 } else { 0.0 };
                s += w8 * (mu * t2).sin() * (mu * t1).sin() * (w * (t2 - t1)).sin();
            }
        }
        s *= h * h;
        assert!((q - s).abs() < 1e-5, "{q} vs {s}");
    }
}
