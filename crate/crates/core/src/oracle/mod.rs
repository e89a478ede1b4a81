//! Brute-force check of the analytic gate formulas for two- and three-ion
//! crystals.
//!
//! σᶻ of each gate ion is conserved, so the joint evolution splits into four
//! branches (s_i, s_j) ∈ {±1}². In each branch mode k is a driven oscillator,
//!
//! H_k(t) = −(s_i g_i^k + s_j g_j^k) F(t) (a† e^{iω_k t} + a e^{−iω_k t}),
//!
//! integrated here in a truncated Fock space without using any Magnus-type
//! result. The gate fidelity for |+⟩|+⟩ and thermal motion is assembled from
//! Boltzmann-weighted branch overlaps.

mod dopri;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::crystal::{Crystal, ModeSet};
use crate::error::{invalid, Error, Result};
use crate::exec::Execution;
use crate::gatephysics::{DecayWeight, GateModel, GatePair};
use crate::pulsekernel::PulseSchedule;
use crate::TARGET_PHASE;

pub use dopri::{integrate, Stats, Tolerance};

/// The four spin branches in a fixed order.
pub const BRANCHES: [(f64, f64); 4] = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub n_ions: usize,
    pub pair: GatePair,
    /// Rescaled to |φ_ij| = π/4 before integration.
    pub schedule: PulseSchedule,
    pub nbar: f64,
    /// Starting Fock cutoff per mode (raised until converged).
    pub n_max: usize,
    /// Boltzmann tail weight dropped per mode before renormalizing.
    pub eps_th: f64,
    /// Local relative and absolute integrator tolerance.
    pub tol: f64,
    /// Successive cutoffs must agree to this before a result is reported.
    pub convergence: f64,
}

impl OracleConfig {
    pub fn new(n_ions: usize, pair: GatePair, schedule: PulseSchedule, nbar: f64) -> Result<Self> {
        let cfg = Self { n_ions, pair, schedule, nbar, n_max: 40, eps_th: 1e-6, tol: 1e-10, convergence: 1e-6 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.n_ions) {
            return Err(invalid(format!("oracle supports 2 or 3 ions, got {}", self.n_ions)));
        }
        if self.pair.j() >= self.n_ions {
            return Err(invalid("gate pair out of range"));
        }
        if self.n_max < 2 {
            return Err(invalid("Fock cutoff must be at least 2"));
        }
        if !(self.eps_th > 0.0 && self.eps_th < 0.1) {
            return Err(invalid(format!("thermal truncation weight must lie in (0, 0.1), got {}", self.eps_th)));
        }
        if !(self.tol > 0.0) || !(self.convergence > 0.0) {
            return Err(invalid("tolerances must be positive"));
        }
        if !(self.nbar >= 0.0) || !self.nbar.is_finite() {
            return Err(invalid("mean phonon number must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffStep {
    pub n_max: usize,
    pub fidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub fidelity_numeric: f64,
    /// Analytic fidelity with the default decay weight.
    pub fidelity_analytic: f64,
    pub abs_difference: f64,
    /// Analytic fidelity with the branch-overlap weight c = 2.
    pub fidelity_analytic_double: f64,
    pub abs_difference_double: f64,
    pub n_max: usize,
    pub convergence: Vec<CutoffStep>,
    pub amp_scale: f64,
}

/// Time-dependent drive of one mode in one spin branch.
#[derive(Debug, Clone, Copy)]
pub struct ModeDrive<'a> {
    pub omega: f64,
    /// s_i g_i^k + s_j g_j^k.
    pub coupling: f64,
    pub schedule: &'a PulseSchedule,
}

/// Evolves `cols` (column-major, `dim` rows) through the whole schedule.
/// Columns must be normalized; drift beyond 1e-6 is an error.
pub fn evolve_mode(drive: ModeDrive<'_>, cols: &mut [Complex64], dim: usize, tol: f64) -> Result<Stats> {
    let ncols = cols.len() / dim;
    let sq: Vec<f64> = (0..dim).map(|n| (n as f64).sqrt()).collect();
    let sched = drive.schedule;
    let grid = sched.grid();
    let mut total = Stats::default();
    for (p, &amp) in sched.amps.iter().enumerate() {
        let strength = amp * drive.coupling;
        if strength == 0.0 {
            continue;
        }
        let (a, b) = grid.bounds(p);
        let (mu, omega) = (sched.mu, drive.omega);
        let rhs = |t: f64, y: &[Complex64], dy: &mut [Complex64]| {
            // i f(t) (e^{iωt} a† + e^{−iωt} a)
            let f = strength * (mu * t).sin();
            let up = Complex64::from_polar(f, omega * t) * Complex64::i();
            let down = Complex64::from_polar(f, -omega * t) * Complex64::i();
            for c in 0..ncols {
                let (col, out) = (&y[c * dim..(c + 1) * dim], &mut dy[c * dim..(c + 1) * dim]);
                for n in 0..dim {
                    let mut v = Complex64::new(0.0, 0.0);
                    if n > 0 {
                        v += up * (sq[n] * col[n - 1]);
                    }
                    if n + 1 < dim {
                        v += down * (sq[n + 1] * col[n + 1]);
                    }
                    out[n] = v;
                }
            }
        };
        let t = Tolerance { rel: tol, abs: tol, ..Tolerance::default() };
        let stats = integrate(rhs, a, b, cols, t).ok_or(Error::NormDrift { drift: f64::NAN })?;
        total.accepted += stats.accepted;
        total.rejected += stats.rejected;
    }
    for c in 0..ncols {
        let norm: f64 = cols[c * dim..(c + 1) * dim].iter().map(|z| z.norm_sqr()).sum();
        let drift = (norm.sqrt() - 1.0).abs();
        if drift > 1e-6 {
            return Err(Error::NormDrift { drift });
        }
    }
    Ok(total)
}

fn fock(n: usize, dim: usize) -> Vec<Complex64> {
    let mut v = vec![Complex64::new(0.0, 0.0); dim];
    v[n] = Complex64::new(1.0, 0.0);
    v
}

fn branch_drive<'a>(modes: &ModeSet, pair: GatePair, signs: (f64, f64), k: usize, s: &'a PulseSchedule) -> ModeDrive<'a> {
    ModeDrive {
        omega: modes.frequencies[k],
        coupling: signs.0 * modes.coupling(pair.i(), k) + signs.1 * modes.coupling(pair.j(), k),
        schedule: s,
    }
}

/// Per-mode final states of one spin branch, each mode starting in the Fock
/// state `initial[k]`, truncated at `n_max` quanta.
pub fn evolve_branch(
    modes: &ModeSet,
    pair: GatePair,
    signs: (f64, f64),
    schedule: &PulseSchedule,
    initial: &[usize],
    n_max: usize,
    tol: f64,
) -> Result<Vec<Vec<Complex64>>> {
    if initial.len() != modes.len() {
        return Err(invalid("one initial Fock number per mode is required"));
    }
    let dim = n_max + 1;
    (0..modes.len())
        .map(|k| {
            if initial[k] > n_max {
                return Err(invalid("initial Fock state above the cutoff"));
            }
            let mut v = fock(initial[k], dim);
            evolve_mode(branch_drive(modes, pair, signs, k, schedule), &mut v, dim, tol)?;
            Ok(v)
        })
        .collect()
}

/// Two modes evolved together in the product space (index n₁·d + n₂), for
/// checking that per-mode evolution is exact.
pub fn evolve_two_modes_jointly(
    modes: &ModeSet,
    pair: GatePair,
    signs: (f64, f64),
    schedule: &PulseSchedule,
    initial: (usize, usize),
    n_max: usize,
    tol: f64,
) -> Result<Vec<Complex64>> {
    if modes.len() < 2 {
        return Err(invalid("need two modes"));
    }
    let d = n_max + 1;
    let d1 = branch_drive(modes, pair, signs, 0, schedule);
    let d2 = branch_drive(modes, pair, signs, 1, schedule);
    let sq: Vec<f64> = (0..d).map(|n| (n as f64).sqrt()).collect();
    let mut y = vec![Complex64::new(0.0, 0.0); d * d];
    y[initial.0 * d + initial.1] = Complex64::new(1.0, 0.0);
    let grid = schedule.grid();
    for (p, &amp) in schedule.amps.iter().enumerate() {
        if amp == 0.0 {
            continue;
        }
        let (a, b) = grid.bounds(p);
        let mu = schedule.mu;
        let rhs = |t: f64, y: &[Complex64], dy: &mut [Complex64]| {
            let f = amp * (mu * t).sin();
            let up1 = Complex64::from_polar(f * d1.coupling, d1.omega * t) * Complex64::i();
            let dn1 = Complex64::from_polar(f * d1.coupling, -d1.omega * t) * Complex64::i();
            let up2 = Complex64::from_polar(f * d2.coupling, d2.omega * t) * Complex64::i();
            let dn2 = Complex64::from_polar(f * d2.coupling, -d2.omega * t) * Complex64::i();
            for n1 in 0..d {
                for n2 in 0..d {
                    let mut v = Complex64::new(0.0, 0.0);
                    if n1 > 0 {
                        v += up1 * (sq[n1] * y[(n1 - 1) * d + n2]);
                    }
                    if n1 + 1 < d {
                        v += dn1 * (sq[n1 + 1] * y[(n1 + 1) * d + n2]);
                    }
                    if n2 > 0 {
                        v += up2 * (sq[n2] * y[n1 * d + n2 - 1]);
                    }
                    if n2 + 1 < d {
                        v += dn2 * (sq[n2 + 1] * y[n1 * d + n2 + 1]);
                    }
                    dy[n1 * d + n2] = v;
                }
            }
        };
        let t = Tolerance { rel: tol, abs: tol, ..Tolerance::default() };
        integrate(rhs, a, b, &mut y, t).ok_or(Error::NormDrift { drift: f64::NAN })?;
    }
    Ok(y)
}

/// Boltzmann occupation probabilities (1 − q) qⁿ of a mode, with
/// q = exp(−ω ln(1 + 1/n̄)), truncated once the dropped tail weight falls
/// below `eps` and renormalized.
pub fn thermal_weights(omega: f64, nbar: f64, eps: f64) -> Vec<f64> {
    if nbar == 0.0 {
        return vec![1.0];
    }
    let q = (-omega * (1.0 / nbar).ln_1p()).exp();
    let mut w = Vec::new();
    let mut p = 1.0 - q;
    let mut tail = 1.0;
    while tail > eps {
        w.push(p);
        tail -= p;
        p *= q;
        if w.len() > 100_000 {
            break;
        }
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

fn fidelity_at_cutoff(
    modes: &ModeSet,
    pair: GatePair,
    schedule: &PulseSchedule,
    weights: &[Vec<f64>],
    theta: f64,
    n_max: usize,
    tol: f64,
) -> Result<f64> {
    let dim = n_max + 1;
    let tasks: Vec<(usize, usize)> =
        (0..BRANCHES.len()).flat_map(|b| (0..modes.len()).map(move |k| (b, k))).collect();
    let states = Execution::default().map(&tasks, |&(b, k)| {
        let ncols = weights[k].len();
        let mut cols = vec![Complex64::new(0.0, 0.0); dim * ncols];
        for n in 0..ncols {
            cols[n * dim + n] = Complex64::new(1.0, 0.0);
        }
        evolve_mode(branch_drive(modes, pair, BRANCHES[b], k, schedule), &mut cols, dim, tol).map(|_| cols)
    });
    let states: Vec<Vec<Complex64>> = states.into_iter().collect::<Result<_>>()?;
    let state = |b: usize, k: usize| &states[b * modes.len() + k];

    let mut total = Complex64::new(0.0, 0.0);
    for (b, sb) in BRANCHES.iter().enumerate() {
        for (c, sc) in BRANCHES.iter().enumerate() {
            let mut prod = Complex64::new(1.0, 0.0);
            for (k, w) in weights.iter().enumerate() {
                let (x, y) = (state(b, k), state(c, k));
                // Σ_n p(n) ⟨ψ_{c,n}|ψ_{b,n}⟩, largest weights first.
                let mut overlap = Complex64::new(0.0, 0.0);
                for (n, &p) in w.iter().enumerate() {
                    let col = n * dim..(n + 1) * dim;
                    let dot: Complex64 = y[col.clone()].iter().zip(&x[col]).map(|(u, v)| u.conj() * v).sum();
                    overlap += dot * p;
                }
                prod *= overlap;
            }
            let ideal = Complex64::from_polar(1.0, -theta * (sb.0 * sb.1 - sc.0 * sc.1));
            total += ideal * prod;
        }
    }
    Ok(total.re / 16.0)
}

/// Thermally averaged fidelity of the normalized schedule, raising the Fock
/// cutoff until two successive cutoffs agree.
pub fn thermal_fidelity(config: &OracleConfig) -> Result<OracleReport> {
    config.validate()?;
    let crystal = Crystal::new(config.n_ions)?;
    let model = GateModel::new(crystal.modes.clone(), config.pair, config.nbar)?;
    let analytic = model.evaluate(&config.schedule)?;
    let analytic_double = model.clone().with_weight(DecayWeight::Double).evaluate(&config.schedule)?;
    let schedule = PulseSchedule::new(config.schedule.tau, config.schedule.mu, analytic.amps.clone())?;
    let theta = analytic.phi_total.signum() * TARGET_PHASE;

    let modes = &crystal.modes;
    let weights: Vec<Vec<f64>> = modes
        .frequencies
        .iter()
        .map(|&w| thermal_weights(w, config.nbar, config.eps_th))
        .collect();
    let longest = weights.iter().map(Vec::len).max().unwrap_or(1);
    let mut n_max = config.n_max.max(longest + 10);
    let mut trace = Vec::new();
    let mut prev: Option<f64> = None;
    loop {
        let f = fidelity_at_cutoff(modes, config.pair, &schedule, &weights, theta, n_max, config.tol)?;
        trace.push(CutoffStep { n_max, fidelity: f });
        if let Some(p) = prev {
            let change = (f - p).abs();
            if change < config.convergence {
                break;
            }
            if n_max > 2000 {
                return Err(Error::CutoffNotConverged { n_max, change });
            }
        }
        prev = Some(f);
        n_max += (n_max / 4).max(10);
    }
    let numeric = trace.last().expect("at least two cutoffs").fidelity;
    Ok(OracleReport {
        fidelity_numeric: numeric,
        fidelity_analytic: analytic.fidelity,
        abs_difference: (numeric - analytic.fidelity).abs(),
        fidelity_analytic_double: analytic_double.fidelity,
        abs_difference_double: (numeric - analytic_double.fidelity).abs(),
        n_max,
        convergence: trace,
        amp_scale: analytic.amp_scale,
    })
}
