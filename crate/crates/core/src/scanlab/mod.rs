//! Detuning sweeps, optimum location and figure/table reproduction.

pub mod csv;
mod reproduce;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::crystal::Crystal;
use crate::error::{invalid, Error, Result};
use crate::exec::Execution;
use crate::gatephysics::{spectator_fraction, GatePair};
use crate::optimizer::{ModeScope, OptimizeResult, Optimizer};
use crate::pulsekernel::SegmentGrid;
use crate::TAU0;

pub use reproduce::{fig2b_sequences, n40_checks, reproduce, tables, Check, Target};

/// A set of detuning sweeps. Field names double as the JSON config keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub ions: usize,
    /// 1-based gate ions.
    pub pair: [usize; 2],
    /// Gate times in units of τ₀.
    pub tau: Vec<f64>,
    pub mu_min: f64,
    pub mu_max: f64,
    pub points: usize,
    pub segments: usize,
    pub nbar: f64,
    #[serde(default)]
    pub scope: ModeScope,
    #[serde(default)]
    pub refine: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl SweepSpec {
    /// N ions, center pair, m = 1, n̄ = 3, μ ∈ [0.3, 12] on 2400 points.
    pub fn new(ions: usize, tau: Vec<f64>) -> Self {
        let pair = GatePair::center(ions.max(2)).map(|p| p.one_based()).unwrap_or((1, 2));
        Self {
            ions,
            pair: [pair.0, pair.1],
            tau,
            mu_min: 0.3,
            mu_max: 12.0,
            points: 2400,
            segments: 1,
            nbar: 3.0,
            scope: ModeScope::Full,
            refine: false,
            output: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ions < 2 {
            return Err(invalid("need at least 2 ions"));
        }
        self.gate_pair()?;
        if self.points < 2 {
            return Err(invalid("a sweep needs at least 2 grid points"));
        }
        if !(self.mu_min > 0.0) || !(self.mu_max > self.mu_min) || !self.mu_max.is_finite() {
            return Err(invalid(format!("bad detuning range [{}, {}]", self.mu_min, self.mu_max)));
        }
        if self.tau.is_empty() || self.tau.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(invalid("gate times must be positive"));
        }
        if self.segments == 0 {
            return Err(invalid("need at least one segment"));
        }
        Ok(())
    }

    pub fn gate_pair(&self) -> Result<GatePair> {
        GatePair::from_one_based(self.pair[0], self.pair[1], self.ions)
    }

    pub fn mu_grid(&self) -> Vec<f64> {
        linspace(self.mu_min, self.mu_max, self.points)
    }

    pub fn optimizer(&self, crystal: &Crystal) -> Result<Optimizer> {
        Ok(Optimizer::new(crystal, self.gate_pair()?, self.nbar, self.scope.clone())?.with_refine(self.refine))
    }
}

pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let step = (hi - lo) / (points - 1) as f64;
    (0..points)
        .map(|i| if i + 1 == points { hi } else { lo + step * i as f64 })
        .collect()
}

/// One grid point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub mu: f64,
    pub tau_over_tau0: f64,
    pub segments: usize,
    /// `None` where every amplitude choice is phase-null.
    pub fidelity: Option<f64>,
    pub required_amp: Option<f64>,
    pub spectator_fraction: Option<f64>,
    /// Normalized amplitudes (empty for phase-null points).
    pub amps: Vec<f64>,
}

impl ScanRecord {
    pub fn phase_null(&self) -> bool {
        self.fidelity.is_none()
    }

    fn from_result(r: &OptimizeResult) -> Self {
        Self {
            mu: r.mu,
            tau_over_tau0: r.tau_over_tau0,
            segments: r.segments,
            fidelity: Some(r.fidelity),
            required_amp: Some(r.required_amp()),
            spectator_fraction: spectator_fraction(&r.outcome).ok(),
            amps: r.amps.clone(),
        }
    }

    fn null(grid: SegmentGrid) -> Self {
        Self {
            mu: grid.mu,
            tau_over_tau0: grid.tau / TAU0,
            segments: grid.segments,
            fidelity: None,
            required_amp: None,
            spectator_fraction: None,
            amps: Vec::new(),
        }
    }
}

/// Optimizes one grid point; phase-null points become empty records.
pub fn scan_point(opt: &Optimizer, tau_over_tau0: f64, mu: f64, segments: usize) -> Result<ScanRecord> {
    let grid = SegmentGrid::new(tau_over_tau0 * TAU0, mu, segments)?;
    match opt.run(grid) {
        Ok(r) => Ok(ScanRecord::from_result(&r)),
        Err(Error::PhaseNull | Error::AllCandidatesPhaseNull) => Ok(ScanRecord::null(grid)),
        Err(e) => Err(e),
    }
}

/// Sweeps μ for one gate time with a prepared optimizer. Records come back
/// in grid order whatever the execution mode.
pub fn sweep_mu(opt: &Optimizer, tau_over_tau0: f64, mus: &[f64], segments: usize, exec: Execution) -> Result<Vec<ScanRecord>> {
    exec.map(mus, |&mu| scan_point(opt, tau_over_tau0, mu, segments))
        .into_iter()
        .collect()
}

/// Every gate time of `spec` in order, each sorted by μ.
pub fn sweep(spec: &SweepSpec, exec: Execution) -> Result<Vec<ScanRecord>> {
    spec.validate()?;
    let crystal = Crystal::new(spec.ions)?;
    let opt = spec.optimizer(&crystal)?;
    let mus = spec.mu_grid();
    let mut out = Vec::with_capacity(mus.len() * spec.tau.len());
    for &tau in &spec.tau {
        out.extend(sweep_mu(&opt, tau, &mus, spec.segments, exec)?);
    }
    Ok(out)
}

/// Full sweep table: scalar columns, a phase-null flag and one column per
/// segment amplitude.
pub fn records_table(records: &[ScanRecord]) -> csv::Table {
    let m = records.iter().map(|r| r.segments).max().unwrap_or(1);
    let mut header: Vec<String> = ["mu", "tau_over_tau0", "segments", "fidelity", "required_amp", "spectator_fraction", "phase_null"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=m).map(|p| format!("amp_{p}")));
    let mut t = csv::Table::new(&header);
    for r in records {
        let mut row = vec![
            csv::fmt12(r.mu),
            csv::fmt12(r.tau_over_tau0),
            r.segments.to_string(),
            csv::cell(r.fidelity),
            csv::cell(r.required_amp),
            csv::cell(r.spectator_fraction),
            u8::from(r.phase_null()).to_string(),
        ];
        row.extend((0..m).map(|p| csv::cell(r.amps.get(p).copied())));
        t.push(row);
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Optimum {
    pub mu: f64,
    pub fidelity: f64,
    /// Grid index of the sampled maximum.
    pub index: usize,
    /// The maximum sits at an end of the grid.
    pub boundary: bool,
}

/// Interior local maxima of fidelity above `floor`, with parabolic sub-grid
/// refinement of position and height. When the fidelity has no interior
/// maximum at all, the better endpoint is returned flagged as a boundary.
pub fn locate_optima(records: &[ScanRecord], floor: f64) -> Vec<Optimum> {
    let f: Vec<f64> = records.iter().map(|r| r.fidelity.unwrap_or(f64::NEG_INFINITY)).collect();
    let n = f.len();
    let mut out = Vec::new();
    let mut any_interior = false;
    for i in 1..n.saturating_sub(1) {
        if f[i] > f[i - 1] && f[i] >= f[i + 1] && f[i].is_finite() {
            any_interior = true;
            if f[i] <= floor {
                continue;
            }
            let (x0, x1, x2) = (records[i - 1].mu, records[i].mu, records[i + 1].mu);
            let (mu, fid) = parabola_peak([x0, x1, x2], [f[i - 1], f[i], f[i + 1]]);
            out.push(Optimum { mu, fidelity: fid.max(f[i]), index: i, boundary: false });
        }
    }
    if !any_interior && n > 0 {
        let i = if f[n - 1] > f[0] { n - 1 } else { 0 };
        if f[i].is_finite() {
            out.push(Optimum { mu: records[i].mu, fidelity: f[i], index: i, boundary: true });
        }
    }
    out
}

fn parabola_peak(x: [f64; 3], y: [f64; 3]) -> (f64, f64) {
    if !y.iter().all(|v| v.is_finite()) {
        return (x[1], y[1]);
    }
    let d1 = (y[1] - y[0]) / (x[1] - x[0]);
    let d2 = (y[2] - y[1]) / (x[2] - x[1]);
    let curv = (d2 - d1) / (x[2] - x[0]);
    if !(curv < 0.0) {
        return (x[1], y[1]);
    }
    // y = y1 + d (x − x1) + curv (x − x1)², d the slope at x1.
    let d = d1 + curv * (x[1] - x[0]);
    let shift = (-d / (2.0 * curv)).clamp(x[0] - x[1], x[2] - x[1]);
    (x[1] + shift, y[1] + d * shift + curv * shift * shift)
}

/// Golden-section search for the fidelity peak on [lo, hi]. Returns the
/// best record seen, never worse than the bracket ends.
pub fn refine_peak(opt: &Optimizer, tau_over_tau0: f64, segments: usize, lo: f64, hi: f64) -> Result<ScanRecord> {
    let eval = |mu: f64| scan_point(opt, tau_over_tau0, mu, segments);
    let score = |r: &ScanRecord| r.fidelity.unwrap_or(f64::NEG_INFINITY);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut best = eval(a)?;
    let end = eval(b)?;
    if score(&end) > score(&best) {
        best = end;
    }
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut rc, mut rd) = (eval(c)?, eval(d)?);
    while b - a > 1e-9 * (1.0 + a.abs()) {
        if score(&rc) >= score(&rd) {
            b = d;
            d = c;
            rd = rc;
            c = b - g * (b - a);
            rc = eval(c)?;
        } else {
            a = c;
            c = d;
            rc = rd;
            d = a + g * (b - a);
            rd = eval(d)?;
        }
        for r in [&rc, &rd] {
            if score(r) > score(&best) {
                best = r.clone();
            }
        }
    }
    Ok(best)
}

/// Best fidelity over a μ window: grid scan, then golden refinement around
/// the best grid point.
pub fn best_in_window(
    opt: &Optimizer,
    tau_over_tau0: f64,
    segments: usize,
    lo: f64,
    hi: f64,
    points: usize,
    exec: Execution,
) -> Result<ScanRecord> {
    let mus = linspace(lo, hi, points);
    let records = sweep_mu(opt, tau_over_tau0, &mus, segments, exec)?;
    let score = |r: &ScanRecord| r.fidelity.unwrap_or(f64::NEG_INFINITY);
    let i = (0..records.len())
        .max_by(|&a, &b| score(&records[a]).total_cmp(&score(&records[b])).then(b.cmp(&a)))
        .ok_or_else(|| invalid("empty window"))?;
    let a = mus[i.saturating_sub(1)];
    let b = mus[(i + 1).min(mus.len() - 1)];
    let refined = refine_peak(opt, tau_over_tau0, segments, a, b)?;
    Ok(if score(&refined) >= score(&records[i]) { refined } else { records[i].clone() })
}

/// μ window around the first red-sideband resonance of the COM mode,
/// μ = 1 − 2π/τ, half a resonance spacing on either side (clipped at the
/// bottom of the default grid).
pub fn first_sideband_window(tau_over_tau0: f64) -> (f64, f64) {
    let spacing = 1.0 / tau_over_tau0;
    ((1.0 - 1.5 * spacing).max(0.3), 1.0 - 0.5 * spacing)
}

/// Grid positions of maximum fidelity and minimum required amplitude among
/// records with μ in [lo, hi), and their distance in grid steps.
pub fn power_fidelity_alignment(records: &[ScanRecord], lo: f64, hi: f64) -> Option<(f64, f64, usize)> {
    let window: Vec<(usize, &ScanRecord)> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.mu >= lo && r.mu < hi && !r.phase_null())
        .collect();
    let fmax = window
        .iter()
        .max_by(|a, b| a.1.fidelity.partial_cmp(&b.1.fidelity).unwrap())?;
    let amin = window
        .iter()
        .min_by(|a, b| a.1.required_amp.partial_cmp(&b.1.required_amp).unwrap())?;
    Some((fmax.1.mu, amin.1.mu, fmax.0.abs_diff(amin.0)))
}

/// Least-squares slope of ln y against ln x.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|(x, y)| (x.ln(), y.ln())).unzip();
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
