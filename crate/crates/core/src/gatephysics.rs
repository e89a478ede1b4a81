//! Residual phase-space displacements, the conditional phase between the
//! two gate ions, and the thermal-state gate fidelity.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::crystal::{thermal_betas, ModeSet};
use crate::error::{invalid, Error, Result};
use crate::pulsekernel::{phase_kernel_from_tables, KernelTables, PhaseKernel, PulseSchedule, SegmentGrid};
use crate::TARGET_PHASE;

/// Two distinct ions driven by the same force. Stored 0-based; external
/// formats use 1-based indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatePair {
    i: usize,
    j: usize,
}

impl GatePair {
    pub fn new(i: usize, j: usize, n_ions: usize) -> Result<Self> {
        if i == j {
            return Err(invalid(format!("gate ions must differ, got {i} twice")));
        }
        if i >= n_ions || j >= n_ions {
            return Err(invalid(format!("gate pair ({i}, {j}) out of range for {n_ions} ions")));
        }
        Ok(Self { i: i.min(j), j: i.max(j) })
    }

    pub fn from_one_based(i: usize, j: usize, n_ions: usize) -> Result<Self> {
        if i == 0 || j == 0 {
            return Err(invalid("ion indices are 1-based"));
        }
        Self::new(i - 1, j - 1, n_ions)
    }

    /// The two middle ions (for odd N, the middle ion and its left neighbor).
    pub fn center(n_ions: usize) -> Result<Self> {
        if n_ions < 2 {
            return Err(invalid("need at least 2 ions"));
        }
        Self::new(n_ions / 2 - 1, n_ions / 2, n_ions)
    }

    /// Parses "I,J" with 1-based indices.
    pub fn parse(s: &str, n_ions: usize) -> Result<Self> {
        let mut parts = s.split(',').map(|p| p.trim().parse::<usize>());
        match (parts.next(), parts.next(), parts.next()) {
            (Some(Ok(i)), Some(Ok(j)), None) => Self::from_one_based(i, j, n_ions),
            _ => Err(invalid(format!("expected a pair like \"10,11\", got {s:?}"))),
        }
    }

    pub fn i(&self) -> usize {
        self.i
    }

    pub fn j(&self) -> usize {
        self.j
    }

    pub fn one_based(&self) -> (usize, usize) {
        (self.i + 1, self.j + 1)
    }
}

/// Weight `c` in Γ = exp(−c Σ_k |α^k|² β̄_k).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DecayWeight {
    /// c = 1/2. Default; every reference landscape value is computed with it.
    #[default]
    Half,
    /// c = 2: the exact overlap of the σᶻ = ±1 branches, whose displacements
    /// differ by 2α. The Fock-space oracle agrees with this weighting.
    Double,
}

impl DecayWeight {
    pub fn factor(self) -> f64 {
        match self {
            DecayWeight::Half => 0.5,
            DecayWeight::Double => 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateOutcome {
    /// Segment amplitudes Ω_p the outcome refers to (scaled when normalized).
    pub amps: Vec<f64>,
    pub alpha_i: Vec<Complex64>,
    pub alpha_j: Vec<Complex64>,
    pub phi_total: f64,
    pub phi_per_mode: Vec<f64>,
    pub fidelity: f64,
    pub amp_scale: f64,
    /// |Ω_1| after scaling.
    pub required_amp: f64,
    pub com_mode: Option<usize>,
}

impl GateOutcome {
    pub fn export(&self) -> GateOutcomeExport {
        GateOutcomeExport {
            alpha_i_re: self.alpha_i.iter().map(|a| a.re).collect(),
            alpha_i_im: self.alpha_i.iter().map(|a| a.im).collect(),
            alpha_j_re: self.alpha_j.iter().map(|a| a.re).collect(),
            alpha_j_im: self.alpha_j.iter().map(|a| a.im).collect(),
            phi_per_mode: self.phi_per_mode.clone(),
            phi_total: self.phi_total,
            fidelity: self.fidelity,
            amp_scale: self.amp_scale,
            required_amp: self.required_amp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateOutcomeExport {
    pub alpha_i_re: Vec<f64>,
    pub alpha_i_im: Vec<f64>,
    pub alpha_j_re: Vec<f64>,
    pub alpha_j_im: Vec<f64>,
    pub phi_per_mode: Vec<f64>,
    pub phi_total: f64,
    pub fidelity: f64,
    pub amp_scale: f64,
    pub required_amp: f64,
}

/// α_n^k(τ) = i g_n^k Σ_p Ω_p G_{p,k}.
pub fn alpha(schedule: &PulseSchedule, modes: &ModeSet, ion: usize) -> Vec<Complex64> {
    let tables = KernelTables::new(schedule.grid(), modes);
    alpha_from_drive(&tables.drive(&schedule.amps), &modes.couplings(ion))
}

fn alpha_from_drive(drive: &[Complex64], g: &[f64]) -> Vec<Complex64> {
    drive
        .iter()
        .zip(g)
        .map(|(d, &g)| Complex64::new(0.0, g) * d)
        .collect()
}

/// (φ_ij, per-mode contributions) for identical forces on both ions.
pub fn conditional_phase(schedule: &PulseSchedule, modes: &ModeSet, pair: GatePair) -> (f64, Vec<f64>) {
    let tables = KernelTables::new(schedule.grid(), modes);
    let per_mode = weighted_phases(&tables, &schedule.amps, &modes.couplings(pair.i), &modes.couplings(pair.j));
    (per_mode.iter().sum(), per_mode)
}

fn weighted_phases(tables: &KernelTables, amps: &[f64], gi: &[f64], gj: &[f64]) -> Vec<f64> {
    tables
        .phase_integrals(amps)
        .iter()
        .enumerate()
        .map(|(k, v)| 2.0 * gi[k] * gj[k] * v)
        .collect()
}

/// Rescales the amplitudes so |φ_ij| = π/4. A negative phase stays negative:
/// exp(−iπσᶻσᶻ/4) is the CPF gate up to single-qubit σᶻ rotations, and the
/// fidelity is taken against the ideal gate of the same sign.
pub fn normalize_phase(outcome: &GateOutcome) -> Result<GateOutcome> {
    if outcome.phi_total == 0.0 || !outcome.phi_total.is_finite() {
        return Err(Error::PhaseNull);
    }
    let s = (TARGET_PHASE / outcome.phi_total.abs()).sqrt();
    let amps: Vec<f64> = outcome.amps.iter().map(|a| a * s).collect();
    Ok(GateOutcome {
        required_amp: amps.first().map_or(0.0, |a| a.abs()),
        amps,
        alpha_i: outcome.alpha_i.iter().map(|a| a * s).collect(),
        alpha_j: outcome.alpha_j.iter().map(|a| a * s).collect(),
        phi_total: outcome.phi_total * s * s,
        phi_per_mode: outcome.phi_per_mode.iter().map(|p| p * s * s).collect(),
        fidelity: outcome.fidelity,
        amp_scale: outcome.amp_scale * s,
        com_mode: outcome.com_mode,
    })
}

fn decay(alpha: impl Iterator<Item = Complex64>, betas: &[f64], c: f64) -> f64 {
    let s: f64 = alpha.zip(betas).map(|(a, b)| a.norm_sqr() * b).sum();
    (-c * s).exp()
}

/// F_g = [2 + 2Γ_i + 2Γ_j + Γ_+ + Γ_−]/8 for the |+⟩|+⟩ initial state. Equals
/// 1 when every residual vanishes and tends to 1/4 for large residuals.
pub fn fidelity(outcome: &GateOutcome, betas: &[f64], weight: DecayWeight) -> f64 {
    let c = weight.factor();
    let (ai, aj) = (&outcome.alpha_i, &outcome.alpha_j);
    let gi = decay(ai.iter().copied(), betas, c);
    let gj = decay(aj.iter().copied(), betas, c);
    let gp = decay(ai.iter().zip(aj).map(|(a, b)| a + b), betas, c);
    let gm = decay(ai.iter().zip(aj).map(|(a, b)| a - b), betas, c);
    (2.0 + 2.0 * gi + 2.0 * gj + gp + gm) / 8.0
}

/// Share of φ_ij carried by every mode except the center-of-mass mode.
pub fn spectator_fraction(outcome: &GateOutcome) -> Result<f64> {
    let com = outcome.com_mode.ok_or(Error::NoComMode)?;
    if outcome.phi_total == 0.0 {
        return Err(Error::PhaseNull);
    }
    Ok((outcome.phi_total - outcome.phi_per_mode[com]) / outcome.phi_total)
}

/// Everything that stays fixed while amplitudes, detuning or gate time vary:
/// the mode set, the gate pair, couplings and thermal factors.
#[derive(Debug, Clone)]
pub struct GateModel {
    pub modes: ModeSet,
    pub pair: GatePair,
    pub gi: Vec<f64>,
    pub gj: Vec<f64>,
    pub betas: Vec<f64>,
    pub nbar: f64,
    pub weight: DecayWeight,
}

impl GateModel {
    pub fn new(modes: ModeSet, pair: GatePair, nbar: f64) -> Result<Self> {
        if pair.j >= modes.n_ions() {
            return Err(invalid("gate pair out of range for the mode set"));
        }
        let betas = thermal_betas(nbar, &modes)?;
        Ok(Self {
            gi: modes.couplings(pair.i),
            gj: modes.couplings(pair.j),
            modes,
            pair,
            betas,
            nbar,
            weight: DecayWeight::default(),
        })
    }

    pub fn with_weight(mut self, weight: DecayWeight) -> Self {
        self.weight = weight;
        self
    }

    /// Same model with every β̄_k multiplied by `factor`.
    pub fn with_scaled_betas(mut self, factor: f64) -> Self {
        self.betas.iter_mut().for_each(|b| *b *= factor);
        self
    }

    pub fn tables(&self, grid: SegmentGrid) -> KernelTables {
        KernelTables::new(grid, &self.modes)
    }

    pub fn phase_kernel(&self, tables: &KernelTables) -> PhaseKernel {
        phase_kernel_from_tables(tables, &self.gi, &self.gj)
    }

    /// M_pq = Σ_k β̄_k (g_i² + g_j²) Re[G_pk Ḡ_qk], so that
    /// x^T M x = Σ_k β̄_k (|α_i^k|² + |α_j^k|²).
    pub fn residual_matrix(&self, tables: &KernelTables) -> DMatrix<f64> {
        let m = tables.segments();
        let mut out = DMatrix::zeros(m, m);
        for k in 0..tables.modes() {
            let w = self.betas[k] * (self.gi[k] * self.gi[k] + self.gj[k] * self.gj[k]);
            if w == 0.0 {
                continue;
            }
            for p in 0..m {
                for q in p..m {
                    let v = w * (tables.moments[(p, k)] * tables.moments[(q, k)].conj()).re;
                    out[(p, q)] += v;
                    if p != q {
                        out[(q, p)] += v;
                    }
                }
            }
        }
        out
    }

    /// Outcome at the given amplitudes, without phase normalization.
    pub fn raw_outcome(&self, tables: &KernelTables, amps: &[f64]) -> GateOutcome {
        let drive = tables.drive(amps);
        let alpha_i = alpha_from_drive(&drive, &self.gi);
        let alpha_j = alpha_from_drive(&drive, &self.gj);
        let phi_per_mode = weighted_phases(tables, amps, &self.gi, &self.gj);
        let mut out = GateOutcome {
            amps: amps.to_vec(),
            alpha_i,
            alpha_j,
            phi_total: phi_per_mode.iter().sum(),
            phi_per_mode,
            fidelity: 0.0,
            amp_scale: 1.0,
            required_amp: amps.first().map_or(0.0, |a| a.abs()),
            com_mode: self.modes.com_index(),
        };
        out.fidelity = fidelity(&out, &self.betas, self.weight);
        out
    }

    /// Normalized outcome (|φ_ij| = π/4) with its fidelity.
    pub fn evaluate_tables(&self, tables: &KernelTables, amps: &[f64]) -> Result<GateOutcome> {
        let mut out = normalize_phase(&self.raw_outcome(tables, amps))?;
        out.fidelity = fidelity(&out, &self.betas, self.weight);
        Ok(out)
    }

    pub fn evaluate(&self, schedule: &PulseSchedule) -> Result<GateOutcome> {
        self.evaluate_tables(&self.tables(schedule.grid()), &schedule.amps)
    }

    /// Exact fidelity after normalization, or `None` for a phase-null schedule.
    pub fn normalized_fidelity(&self, tables: &KernelTables, amps: &[f64]) -> Option<f64> {
        self.evaluate_tables(tables, amps).ok().map(|o| o.fidelity)
    }
}
