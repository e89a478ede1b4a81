//! Segmented sinusoidal forces and their oscillatory time integrals.
//!
//! For a force F(t) = Ω_p sin(μt) on segment p and a mode of frequency ω,
//! everything reduces to two kernels of f(t) = sin(μt) e^{iωt}:
//!
//! * the segment moment G_p = ∫_seg f(t) dt, and
//! * the triangle integral T_p = Im ∫_seg dt₂ f(t₂) ∫_{t_start}^{t₂} f̄(t₁) dt₁.
//!
//! Writing f as a sum of two complex exponentials turns both into divided
//! differences of `exp` at imaginary nodes, evaluated here without
//! cancellation at any detuning (including exact resonance μ = ω).

mod divided;
pub mod quadrature;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::crystal::ModeSet;
use crate::error::{invalid, Result};
pub use divided::{exp_dd1, exp_dd2, expm1_over};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Equal-length segmentation of [0, τ] driven at detuning μ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentGrid {
    pub tau: f64,
    pub mu: f64,
    pub segments: usize,
}

impl SegmentGrid {
    pub fn new(tau: f64, mu: f64, segments: usize) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(invalid(format!("gate time must be positive, got {tau}")));
        }
        if !mu.is_finite() {
            return Err(invalid("detuning must be finite"));
        }
        if segments == 0 {
            return Err(invalid("at least one segment is required"));
        }
        Ok(Self { tau, mu, segments })
    }

    /// Boundaries (t_{p}, t_{p+1}) of segment p (0-based), t_p = p·τ/m.
    pub fn bounds(&self, p: usize) -> (f64, f64) {
        let m = self.segments as f64;
        (self.tau * p as f64 / m, self.tau * (p + 1) as f64 / m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    pub tau: f64,
    pub mu: f64,
    pub amps: Vec<f64>,
}

impl PulseSchedule {
    pub fn new(tau: f64, mu: f64, amps: Vec<f64>) -> Result<Self> {
        SegmentGrid::new(tau, mu, amps.len())?;
        Ok(Self { tau, mu, amps })
    }

    pub fn segments(&self) -> usize {
        self.amps.len()
    }

    pub fn grid(&self) -> SegmentGrid {
        SegmentGrid { tau: self.tau, mu: self.mu, segments: self.amps.len() }
    }

    /// F(t) at time t; zero outside [0, τ).
    pub fn force(&self, t: f64) -> f64 {
        if !(0.0..self.tau).contains(&t) {
            return 0.0;
        }
        let p = ((t / self.tau) * self.segments() as f64) as usize;
        self.amps[p.min(self.segments() - 1)] * (self.mu * t).sin()
    }
}

/// sin(μt) e^{iωt} = Σ_a c_a e^{iν_a t}.
fn exponentials(mu: f64, omega: f64) -> [(Complex64, f64); 2] {
    [(Complex64::new(0.0, -0.5), omega + mu), (Complex64::new(0.0, 0.5), omega - mu)]
}

/// ∫_{t_start}^{t_end} sin(μt) e^{iωt} dt.
pub fn segment_moment(mu: f64, omega: f64, t_start: f64, t_end: f64) -> Complex64 {
    let len = t_end - t_start;
    exponentials(mu, omega)
        .iter()
        .map(|&(c, nu)| c * (I * nu * t_start).exp() * len * expm1_over(I * nu * len))
        .sum()
}

/// Antiderivative e^{iωt}(μ cos μt − iω sin μt)/(ω² − μ²). Loses accuracy
/// as μ → ω; kept for comparison against [`segment_moment`].
pub fn moment_antiderivative(mu: f64, omega: f64, t: f64) -> Complex64 {
    (I * omega * t).exp() * Complex64::new(mu * (mu * t).cos(), -omega * (mu * t).sin())
        / (omega * omega - mu * mu)
}

/// Antiderivative at exact resonance μ = ω: −e^{2iμt}/(4μ) + it/2.
pub fn resonant_antiderivative(mu: f64, t: f64) -> Complex64 {
    -(I * 2.0 * mu * t).exp() / (4.0 * mu) + I * t / 2.0
}

/// Im ∫_{t_start}^{t_end} dt₂ f(t₂) ∫_{t_start}^{t₂} f̄(t₁) dt₁ with
/// f(t) = sin(μt) e^{iωt}. Equals the same-segment double integral of
/// sin(μt₂) sin(μt₁) sin ω(t₂ − t₁) over t₁ < t₂.
pub fn triangle_moment(mu: f64, omega: f64, t_start: f64, t_end: f64) -> f64 {
    let len = t_end - t_start;
    let terms = exponentials(mu, omega);
    let mut acc = Complex64::new(0.0, 0.0);
    for &(ca, na) in &terms {
        for &(cb, nb) in &terms {
            let shift = (I * (na - nb) * t_start).exp();
            let dd = exp_dd2(I * (na - nb) * len, I * na * len, Complex64::new(0.0, 0.0));
            acc += ca * cb.conj() * shift * dd;
        }
    }
    (acc * len * len).im
}

/// Per-segment, per-mode kernel tables at one (τ, μ, m).
#[derive(Debug, Clone)]
pub struct KernelTables {
    pub grid: SegmentGrid,
    /// G_{p,k}, m × K.
    pub moments: DMatrix<Complex64>,
    /// T_{p,k}, m × K.
    pub triangles: DMatrix<f64>,
}

impl KernelTables {
    pub fn new(grid: SegmentGrid, modes: &ModeSet) -> Self {
        let (m, k) = (grid.segments, modes.len());
        let mut moments = DMatrix::zeros(m, k);
        let mut triangles = DMatrix::zeros(m, k);
        for p in 0..m {
            let (a, b) = grid.bounds(p);
            for (mode, &omega) in modes.frequencies.iter().enumerate() {
                moments[(p, mode)] = segment_moment(grid.mu, omega, a, b);
                triangles[(p, mode)] = triangle_moment(grid.mu, omega, a, b);
            }
        }
        Self { grid, moments, triangles }
    }

    pub fn segments(&self) -> usize {
        self.moments.nrows()
    }

    pub fn modes(&self) -> usize {
        self.moments.ncols()
    }

    /// Σ_p x_p G_{p,k} for every mode.
    pub fn drive(&self, amps: &[f64]) -> Vec<Complex64> {
        (0..self.modes())
            .map(|k| amps.iter().enumerate().map(|(p, &x)| self.moments[(p, k)] * x).sum())
            .collect()
    }

    /// Unweighted double integral ∫∫_{t₁<t₂} F(t₂)F(t₁) sin ω_k(t₂−t₁) for
    /// every mode.
    pub fn phase_integrals(&self, amps: &[f64]) -> Vec<f64> {
        (0..self.modes())
            .map(|k| {
                let mut earlier = Complex64::new(0.0, 0.0);
                let mut total = 0.0;
                for (p, &x) in amps.iter().enumerate() {
                    let g = self.moments[(p, k)];
                    total += x * x * self.triangles[(p, k)] + x * (g * earlier.conj()).im;
                    earlier += g * x;
                }
                total
            })
            .collect()
    }

    /// Symmetric per-mode kernel: x^T K x is the unweighted double integral
    /// for mode `k`.
    pub fn mode_kernel(&self, k: usize) -> DMatrix<f64> {
        let m = self.segments();
        DMatrix::from_fn(m, m, |p, q| {
            if p == q {
                self.triangles[(p, k)]
            } else {
                let (late, early) = if p > q { (p, q) } else { (q, p) };
                0.5 * (self.moments[(late, k)] * self.moments[(early, k)].conj()).im
            }
        })
    }
}

/// Phase kernel for one ion pair: x^T K x = φ_ij.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseKernel {
    pub matrix: DMatrix<f64>,
}

impl PhaseKernel {
    pub fn contract(&self, amps: &[f64]) -> f64 {
        let m = self.matrix.nrows();
        let mut s = 0.0;
        for p in 0..m {
            for q in 0..m {
                s += amps[p] * self.matrix[(p, q)] * amps[q];
            }
        }
        s
    }

    pub fn norm(&self) -> f64 {
        self.matrix.norm()
    }
}

/// K = Σ_k 2 g_i^k g_j^k K^{(k)}, symmetrized.
pub fn phase_kernel(grid: SegmentGrid, modes: &ModeSet, gi: &[f64], gj: &[f64]) -> PhaseKernel {
    phase_kernel_from_tables(&KernelTables::new(grid, modes), gi, gj)
}

pub fn phase_kernel_from_tables(tables: &KernelTables, gi: &[f64], gj: &[f64]) -> PhaseKernel {
    let m = tables.segments();
    let mut matrix = DMatrix::zeros(m, m);
    for k in 0..tables.modes() {
        let w = 2.0 * gi[k] * gj[k];
        if w != 0.0 {
            matrix += tables.mode_kernel(k) * w;
        }
    }
    let matrix = (&matrix + matrix.transpose()) * 0.5;
    PhaseKernel { matrix }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crystal::Crystal;
    use std::f64::consts::PI;

    #[test]
    fn empty_interval() {
        assert_eq!(segment_moment(2.0, 1.0, 0.7, 0.7), Complex64::new(0.0, 0.0));
        assert_eq!(triangle_moment(2.0, 1.0, 0.7, 0.7), 0.0);
    }

    #[test]
    fn resonant_moment_over_one_period() {
        let g = segment_moment(1.0, 1.0, 0.0, 2.0 * PI);
        assert!((g - Complex64::new(0.0, PI)).norm() < 1e-14);
        let via_limit = resonant_antiderivative(1.0, 2.0 * PI) - resonant_antiderivative(1.0, 0.0);
        assert!((g - via_limit).norm() < 1e-14);
    }

    #[test]
    fn matches_antiderivative_off_resonance() {
        for &(mu, w, a, b) in &[(2.0, 1.0, 0.0, PI), (0.5, 1.3, 1.0, 7.0), (10.0, 4.2, 0.3, 0.9)] {
            let g = segment_moment(mu, w, a, b);
            let f = moment_antiderivative(mu, w, b) - moment_antiderivative(mu, w, a);
            assert!((g - f).norm() < 1e-12 * (1.0 + f.norm()));
        }
    }

    #[test]
    fn near_resonance_agrees_with_generic_formula() {
        // Generic antiderivative is still accurate at |μ−ω| = 1e-5.
        for &delta in &[1e-5, -1e-5] {
            let (w, a, b) = (1.0, 0.0, 2.0 * PI);
            let mu = w + delta;
            let g = segment_moment(mu, w, a, b);
            let f = moment_antiderivative(mu, w, b) - moment_antiderivative(mu, w, a);
            assert!((g - f).norm() < 1e-9, "{g} vs {f}");
        }
        // And continuous through the resonance.
        let at = segment_moment(1.0, 1.0, 0.0, 2.0 * PI);
        let near = segment_moment(1.0 + 1e-9, 1.0, 0.0, 2.0 * PI);
        assert!((at - near).norm() < 1e-7);
    }

    #[test]
    fn segment_additivity() {
        let (mu, w) = (3.7, 2.2);
        let whole = segment_moment(mu, w, 0.4, 5.0);
        let split = segment_moment(mu, w, 0.4, 2.1) + segment_moment(mu, w, 2.1, 5.0);
        assert!((whole - split).norm() < 1e-12);

        let grid1 = SegmentGrid::new(4.0, mu, 1).unwrap();
        let c = Crystal::new(3).unwrap();
        let t1 = KernelTables::new(grid1, &c.modes);
        let grid2 = SegmentGrid::new(4.0, mu, 2).unwrap();
        let t2 = KernelTables::new(grid2, &c.modes);
        let p1 = t1.phase_integrals(&[1.3]);
        let p2 = t2.phase_integrals(&[1.3, 1.3]);
        for k in 0..3 {
            assert!((p1[k] - p2[k]).abs() < 1e-11 * (1.0 + p1[k].abs()));
        }
    }

    #[test]
    fn contraction_matches_phase_integrals() {
        let c = Crystal::new(4).unwrap();
        let grid = SegmentGrid::new(3.0, 2.5, 4).unwrap();
        let tables = KernelTables::new(grid, &c.modes);
        let x = [0.3, -1.1, 2.0, 0.7];
        let per_mode = tables.phase_integrals(&x);
        for (k, v) in per_mode.iter().enumerate() {
            let kk = PhaseKernel { matrix: tables.mode_kernel(k) };
            assert!((kk.contract(&x) - v).abs() < 1e-12);
        }
    }

    #[test]
    fn vanishing_gate_time() {
        let c = Crystal::new(3).unwrap();
        let gi = c.modes.couplings(0);
        let gj = c.modes.couplings(1);
        let k = phase_kernel(SegmentGrid::new(1e-9, 2.0, 3).unwrap(), &c.modes, &gi, &gj);
        assert!(k.norm() < 1e-20);
    }

    #[test]
    fn invalid_grids() {
        assert!(SegmentGrid::new(0.0, 1.0, 1).is_err());
        assert!(SegmentGrid::new(1.0, 1.0, 0).is_err());
        assert!(PulseSchedule::new(1.0, 1.0, vec![]).is_err());
    }

    #[test]
    fn force_follows_segments() {
        let s = PulseSchedule::new(3.0, 1.0, vec![1.0, -2.0, 0.5]).unwrap();
        assert_eq!(s.force(-0.1), 0.0);
        assert!((s.force(0.5) - 0.5f64.sin()).abs() < 1e-15);
        assert!((s.force(1.5) + 2.0 * 1.5f64.sin()).abs() < 1e-15);
        assert!((s.force(2.9) - 0.5 * 2.9f64.sin()).abs() < 1e-15);
        assert_eq!(s.force(3.0), 0.0);
    }
}
