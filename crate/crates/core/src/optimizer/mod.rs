//! Segment amplitude selection.
//!
//! For a fixed (τ, μ, m) the conditional phase is a quadratic form x^T K x in
//! the amplitudes and the thermally weighted residual is another, x^T M x.
//! After phase normalization the leading-order infidelity is
//!
//! δ(x) = (c/2) · x^T M x · (π/4) / |x^T K x|,
//!
//! which is minimized over the eigenvectors of the pencil (K, M). When
//! m > 2K the residual constraints have a null space and every mode can be
//! closed exactly; the phase is then maximized inside that null space.

mod nelder_mead;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::crystal::Crystal;
use crate::error::{invalid, Error, Result};
use crate::gatephysics::{DecayWeight, GateModel, GateOutcome, GatePair};
use crate::pulsekernel::{KernelTables, SegmentGrid};
use crate::{TARGET_PHASE, TAU0};

pub use nelder_mead::{minimize, Minimum, Settings as SimplexSettings};

/// Which modes the optimizer sees. Fidelities are always reported against
/// the full crystal.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum ModeScope {
    #[default]
    Full,
    /// The gate pair plus the `n` ions nearest to it; the rest are pinned.
    Neighbors(usize),
    /// An explicit moving set (0-based, must contain the gate pair).
    Restricted(Vec<usize>),
}

impl ModeScope {
    pub fn moving_set(&self, pair: GatePair, n_ions: usize) -> Vec<usize> {
        match self {
            ModeScope::Full => (0..n_ions).collect(),
            ModeScope::Neighbors(n) => neighbor_set(pair, n_ions, *n),
            ModeScope::Restricted(set) => set.clone(),
        }
    }

    /// "full" or "n=<k>".
    pub fn label(&self) -> String {
        match self {
            ModeScope::Full => "full".into(),
            ModeScope::Neighbors(n) => format!("n={n}"),
            ModeScope::Restricted(set) => format!("n={}", set.len().saturating_sub(2)),
        }
    }
}

impl fmt::Display for ModeScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModeScope::Restricted(set) => {
                let ions: Vec<String> = set.iter().map(|i| (i + 1).to_string()).collect();
                write!(f, "ions={}", ions.join(","))
            }
            other => f.write_str(&other.label()),
        }
    }
}

impl FromStr for ModeScope {
    type Err = Error;

    /// Accepts "full", "n=<k>" or "ions=<i>,<j>,..." (1-based).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "full" {
            return Ok(ModeScope::Full);
        }
        if let Some(k) = s.strip_prefix("n=") {
            return k
                .parse()
                .map(ModeScope::Neighbors)
                .map_err(|_| invalid(format!("bad neighbor count in scope {s:?}")));
        }
        if let Some(list) = s.strip_prefix("ions=") {
            let mut set = Vec::new();
            for item in list.split(',') {
                match item.trim().parse::<usize>() {
                    Ok(i) if i >= 1 => set.push(i - 1),
                    _ => return Err(invalid(format!("bad ion index {item:?} in scope"))),
                }
            }
            return Ok(ModeScope::Restricted(set));
        }
        Err(invalid(format!("scope must be \"full\", \"n=<k>\" or \"ions=...\", got {s:?}")))
    }
}

impl Serialize for ModeScope {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ModeScope {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The gate pair plus the `n` ions closest to it in index distance (distance
/// to the nearer gate ion; ties go to the lower index). Sorted ascending.
pub fn neighbor_set(pair: GatePair, n_ions: usize, n: usize) -> Vec<usize> {
    let (i, j) = (pair.i(), pair.j());
    let mut others: Vec<usize> = (0..n_ions).filter(|&l| l != i && l != j).collect();
    others.sort_by_key(|&l| (l.abs_diff(i).min(l.abs_diff(j)), l));
    let mut set: Vec<usize> = others.into_iter().take(n).collect();
    set.extend([i, j]);
    set.sort_unstable();
    set
}

/// How candidates are ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Smallest leading-order infidelity δ.
    Surrogate,
    /// Largest exact (normalized) fidelity on the modes in scope.
    #[default]
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeSpec {
    pub tau: f64,
    pub mu: f64,
    pub segments: usize,
    pub nbar: f64,
    #[serde(default)]
    pub scope: ModeScope,
    #[serde(default)]
    pub objective: Objective,
    /// Polish the best candidate with a simplex search on the exact fidelity.
    #[serde(default)]
    pub refine: bool,
    #[serde(default)]
    pub weight: DecayWeight,
}

impl OptimizeSpec {
    pub fn new(tau: f64, mu: f64, segments: usize, nbar: f64) -> Self {
        Self {
            tau,
            mu,
            segments,
            nbar,
            scope: ModeScope::Full,
            objective: Objective::Exact,
            refine: false,
            weight: DecayWeight::Half,
        }
    }

    pub fn grid(&self) -> Result<SegmentGrid> {
        SegmentGrid::new(self.tau, self.mu, self.segments)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    /// Candidates scored (excluding phase-null ones).
    pub candidates: usize,
    pub phase_null_skipped: usize,
    /// Dimension of the exact null space of the residual constraints.
    pub null_dimension: usize,
    /// δ of the returned amplitudes on the modes in scope.
    pub surrogate_delta: f64,
    /// Exact fidelity on the modes in scope.
    pub scope_fidelity: f64,
    /// Fidelity gained by the simplex polish (0 when not run or no gain).
    pub refine_gain: f64,
    pub refine_evals: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult {
    /// Amplitudes normalized to |φ_ij| = π/4, with Ω_1 ≥ 0.
    pub amps: Vec<f64>,
    /// Fidelity against the full crystal.
    pub fidelity: f64,
    pub mu: f64,
    pub tau_over_tau0: f64,
    pub segments: usize,
    pub scope: ModeScope,
    pub outcome: GateOutcome,
    pub diagnostics: Diagnostics,
}

impl OptimizeResult {
    pub fn required_amp(&self) -> f64 {
        self.outcome.required_amp
    }

    pub fn export(&self) -> OptimizeExport {
        OptimizeExport {
            amps: self.amps.clone(),
            fidelity: self.fidelity,
            mu: self.mu,
            tau_over_tau0: self.tau_over_tau0,
            segments: self.segments,
            scope: self.scope.label(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeExport {
    pub amps: Vec<f64>,
    pub fidelity: f64,
    pub mu: f64,
    pub tau_over_tau0: f64,
    pub segments: usize,
    pub scope: String,
}

#[derive(Debug, Clone)]
pub struct Candidate {
    pub amps: Vec<f64>,
    pub delta: f64,
    pub in_null_space: bool,
}

/// Candidate amplitude vectors for one grid: the generalized eigenvectors of
/// (K, M) on the range of M, then the phase-maximizing directions inside the
/// exact null space. Phase-null directions are dropped; the second value
/// counts them.
pub fn surrogate_candidates(model: &GateModel, tables: &KernelTables) -> (Vec<Candidate>, usize, usize) {
    let kernel = model.phase_kernel(tables).matrix;
    let resid = model.residual_matrix(tables);
    let c = model.weight.factor();
    let (range, null) = split_constraints(model, tables);

    let k_scale = kernel.norm().max(f64::MIN_POSITIVE);
    let mut out = Vec::new();
    let mut skipped = 0;
    let mut push = |x: DVector<f64>, in_null: bool, out: &mut Vec<Candidate>| {
        let norm2 = x.norm_squared();
        let phase = (x.transpose() * &kernel * &x)[(0, 0)];
        if !(phase.abs() > 1e-13 * k_scale * norm2) {
            skipped += 1;
            return;
        }
        let r = (x.transpose() * &resid * &x)[(0, 0)].max(0.0);
        let delta = 0.5 * c * r * TARGET_PHASE / phase.abs();
        out.push(Candidate { amps: x.iter().copied().collect(), delta, in_null_space: in_null });
    };

    if range.ncols() > 0 {
        let reduced = range.transpose() * &resid * &range;
        let eig = SymmetricEigen::new(symmetrize(reduced));
        let top = eig.eigenvalues.iter().fold(0.0_f64, |a, &b| a.max(b));
        let keep: Vec<usize> = (0..eig.eigenvalues.len())
            .filter(|&i| eig.eigenvalues[i] > 1e-14 * top)
            .collect();
        if !keep.is_empty() {
            let mut whiten = DMatrix::zeros(range.ncols(), keep.len());
            for (c_out, &i) in keep.iter().enumerate() {
                let s = 1.0 / eig.eigenvalues[i].sqrt();
                whiten.set_column(c_out, &(eig.eigenvectors.column(i) * s));
            }
            let w = &range * whiten;
            let pencil = SymmetricEigen::new(symmetrize(w.transpose() * &kernel * &w));
            for v in sorted_columns(&pencil) {
                push(&w * v, false, &mut out);
            }
        }
    }
    if null.ncols() > 0 {
        let pencil = SymmetricEigen::new(symmetrize(null.transpose() * &kernel * &null));
        for v in sorted_columns(&pencil) {
            push(&null * v, true, &mut out);
        }
    }
    let null_dim = null.ncols();
    (out, skipped, null_dim)
}

/// Eigenvectors ordered by decreasing |eigenvalue| (ties by index).
fn sorted_columns(eig: &SymmetricEigen<f64, nalgebra::Dyn>) -> Vec<DVector<f64>> {
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].abs().total_cmp(&eig.eigenvalues[a].abs()).then(a.cmp(&b)));
    idx.into_iter().map(|i| eig.eigenvectors.column(i).into_owned()).collect()
}

fn symmetrize(a: DMatrix<f64>) -> DMatrix<f64> {
    (&a + a.transpose()) * 0.5
}

/// Real constraint matrix: rows (Re G_pk, Im G_pk) for every mode that
/// couples to either gate ion.
fn constraint_matrix(model: &GateModel, tables: &KernelTables) -> DMatrix<f64> {
    let active: Vec<usize> = (0..tables.modes())
        .filter(|&k| model.gi[k] != 0.0 || model.gj[k] != 0.0)
        .collect();
    let m = tables.segments();
    DMatrix::from_fn(2 * active.len(), m, |r, p| {
        let g = tables.moments[(p, active[r / 2])];
        if r % 2 == 0 {
            g.re
        } else {
            g.im
        }
    })
}

/// Orthonormal bases (range, null) of the constraint matrix's row space and
/// its complement in amplitude space.
fn split_constraints(model: &GateModel, tables: &KernelTables) -> (DMatrix<f64>, DMatrix<f64>) {
    let m = tables.segments();
    let c = constraint_matrix(model, tables);
    let rows = c.nrows().max(m);
    let mut padded = DMatrix::zeros(rows, m);
    padded.view_mut((0, 0), (c.nrows(), m)).copy_from(&c);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let top = svd.singular_values.iter().fold(0.0_f64, |a, &b| a.max(b));
    let tol = 1e-11 * top;
    let (mut range, mut null) = (Vec::new(), Vec::new());
    for (s, row) in svd.singular_values.iter().zip(v_t.row_iter()) {
        let v = row.transpose();
        if *s > tol {
            range.push(v);
        } else {
            null.push(v);
        }
    }
    let to_matrix = |cols: Vec<DVector<f64>>| {
        if cols.is_empty() {
            DMatrix::zeros(m, 0)
        } else {
            DMatrix::from_columns(&cols)
        }
    };
    (to_matrix(range), to_matrix(null))
}

/// For m = 2K + 1 segments: the unique amplitudes with Ω_1 = 1 that close
/// every phase-space loop.
pub fn exact_null(tables: &KernelTables) -> Result<Vec<f64>> {
    let (m, k) = (tables.segments(), tables.modes());
    if m != 2 * k + 1 {
        return Err(invalid(format!("exact null needs {} segments for {k} modes, got {m}", 2 * k + 1)));
    }
    let a = DMatrix::from_fn(2 * k, 2 * k, |r, c| {
        let g = tables.moments[(c + 1, r / 2)];
        if r % 2 == 0 {
            g.re
        } else {
            g.im
        }
    });
    let b = DVector::from_fn(2 * k, |r, _| {
        let g = tables.moments[(0, r / 2)];
        if r % 2 == 0 {
            -g.re
        } else {
            -g.im
        }
    });
    let svd = a.svd(true, true);
    let top = svd.singular_values.max();
    let (low_idx, low) = svd.singular_values.argmin();
    if !(low > 1e-13 * top) {
        let u = svd.u.as_ref().expect("requested U");
        let row = u.column(low_idx).iamax();
        return Err(Error::SingularConstraints { mode: row / 2 });
    }
    let f = svd.solve(&b, 0.0).map_err(|e| invalid(e.to_string()))?;
    let mut out = Vec::with_capacity(m);
    out.push(1.0);
    out.extend(f.iter());
    Ok(out)
}

/// Optimizer bound to one crystal, gate pair, n̄ and scope. Reusable across
/// grids, so sweeps set up modes and thermal factors once.
#[derive(Debug, Clone)]
pub struct Optimizer {
    target: GateModel,
    design: Option<GateModel>,
    scope: ModeScope,
    objective: Objective,
    refine: bool,
}

impl Optimizer {
    pub fn new(crystal: &Crystal, pair: GatePair, nbar: f64, scope: ModeScope) -> Result<Self> {
        let target = GateModel::new(crystal.modes.clone(), pair, nbar)?;
        let moving = scope.moving_set(pair, crystal.n_ions());
        let design = if matches!(scope, ModeScope::Full) || moving.len() >= crystal.n_ions() {
            None
        } else {
            Some(GateModel::new(crystal.restricted_modes(&moving, pair)?, pair, nbar)?)
        };
        Ok(Self { target, design, scope, objective: Objective::Exact, refine: false })
    }

    pub fn from_spec(crystal: &Crystal, pair: GatePair, spec: &OptimizeSpec) -> Result<Self> {
        Ok(Self::new(crystal, pair, spec.nbar, spec.scope.clone())?
            .with_objective(spec.objective)
            .with_refine(spec.refine)
            .with_weight(spec.weight))
    }

    pub fn with_objective(mut self, objective: Objective) -> Self {
        self.objective = objective;
        self
    }

    pub fn with_refine(mut self, refine: bool) -> Self {
        self.refine = refine;
        self
    }

    pub fn with_weight(mut self, weight: DecayWeight) -> Self {
        self.target.weight = weight;
        if let Some(d) = self.design.as_mut() {
            d.weight = weight;
        }
        self
    }

    /// Same optimizer with every thermal factor multiplied by `factor`.
    pub fn with_scaled_betas(mut self, factor: f64) -> Self {
        self.target = self.target.with_scaled_betas(factor);
        self.design = self.design.map(|d| d.with_scaled_betas(factor));
        self
    }

    pub fn target(&self) -> &GateModel {
        &self.target
    }

    pub fn design(&self) -> &GateModel {
        self.design.as_ref().unwrap_or(&self.target)
    }

    pub fn scope(&self) -> &ModeScope {
        &self.scope
    }

    pub fn run(&self, grid: SegmentGrid) -> Result<OptimizeResult> {
        let design = self.design();
        let design_tables = design.tables(grid);
        let (candidates, skipped, null_dimension) = surrogate_candidates(design, &design_tables);
        if candidates.is_empty() {
            return Err(Error::AllCandidatesPhaseNull);
        }

        let mut best: Option<(Vec<f64>, f64, f64, f64)> = None; // amps, score, amp, delta
        for cand in &candidates {
            let Ok(out) = design.evaluate_tables(&design_tables, &cand.amps) else {
                continue;
            };
            let score = match self.objective {
                Objective::Exact => out.fidelity,
                Objective::Surrogate => -cand.delta,
            };
            let better = match &best {
                None => true,
                Some((_, s, a, _)) => {
                    score > *s + 1e-12 * s.abs().max(1e-300)
                        || ((score - s).abs() <= 1e-12 * s.abs().max(1e-300) && out.required_amp < *a)
                }
            };
            if better {
                best = Some((out.amps.clone(), score, out.required_amp, cand.delta));
            }
        }
        let (mut amps, _, _, delta) = best.ok_or(Error::AllCandidatesPhaseNull)?;

        let mut diagnostics = Diagnostics {
            candidates: candidates.len(),
            phase_null_skipped: skipped,
            null_dimension,
            surrogate_delta: delta,
            ..Diagnostics::default()
        };

        if self.refine && amps.len() > 1 {
            let start = design.evaluate_tables(&design_tables, &amps)?.fidelity;
            let (polished, evals) = refine(design, &design_tables, &amps);
            diagnostics.refine_evals = evals;
            if let Ok(out) = design.evaluate_tables(&design_tables, &polished) {
                if out.fidelity > start {
                    diagnostics.refine_gain = out.fidelity - start;
                    amps = out.amps;
                    diagnostics.surrogate_delta = surrogate_delta(design, &design_tables, &amps);
                }
            }
        }

        if amps.iter().find(|a| **a != 0.0).is_some_and(|a| *a < 0.0) {
            amps.iter_mut().for_each(|a| *a = -*a);
        }
        diagnostics.scope_fidelity = design.evaluate_tables(&design_tables, &amps)?.fidelity;
        let outcome = match &self.design {
            None => self.target.evaluate_tables(&design_tables, &amps)?,
            Some(_) => self.target.evaluate_tables(&self.target.tables(grid), &amps)?,
        };
        Ok(OptimizeResult {
            amps: outcome.amps.clone(),
            fidelity: outcome.fidelity,
            mu: grid.mu,
            tau_over_tau0: grid.tau / TAU0,
            segments: grid.segments,
            scope: self.scope.clone(),
            outcome,
            diagnostics,
        })
    }
}

/// δ(x) on the model's modes.
pub fn surrogate_delta(model: &GateModel, tables: &KernelTables, amps: &[f64]) -> f64 {
    let x = DVector::from_column_slice(amps);
    let k = model.phase_kernel(tables).matrix;
    let r = model.residual_matrix(tables);
    let phase = (x.transpose() * k * &x)[(0, 0)];
    let resid = (x.transpose() * r * &x)[(0, 0)];
    0.5 * model.weight.factor() * resid * TARGET_PHASE / phase.abs()
}

/// Simplex polish of the exact normalized fidelity over amplitude ratios,
/// with the largest component held fixed. Returns the polished amplitudes
/// (not normalized) and the number of evaluations.
pub fn refine(model: &GateModel, tables: &KernelTables, amps: &[f64]) -> (Vec<f64>, usize) {
    let anchor = (0..amps.len())
        .max_by(|&a, &b| amps[a].abs().total_cmp(&amps[b].abs()).then(b.cmp(&a)))
        .unwrap_or(0);
    let scale = amps[anchor];
    if scale == 0.0 {
        return (amps.to_vec(), 0);
    }
    let expand = |y: &[f64]| -> Vec<f64> {
        let mut x = Vec::with_capacity(amps.len());
        x.extend_from_slice(&y[..anchor]);
        x.push(1.0);
        x.extend_from_slice(&y[anchor..]);
        x
    };
    let y0: Vec<f64> = amps
        .iter()
        .enumerate()
        .filter(|&(p, _)| p != anchor)
        .map(|(_, a)| a / scale)
        .collect();
    let min = minimize(
        |y| model.normalized_fidelity(tables, &expand(y)).map_or(f64::NAN, |f| -f),
        &y0,
        0.05,
        SimplexSettings::default(),
    );
    (expand(&min.x), min.evals)
}

/// One-shot optimization at `spec`.
pub fn optimize(crystal: &Crystal, pair: GatePair, spec: &OptimizeSpec) -> Result<OptimizeResult> {
    Optimizer::from_spec(crystal, pair, spec)?.run(spec.grid()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crystal::ModeSet;

    fn residual_norm(tables: &KernelTables, amps: &[f64]) -> f64 {
        tables.drive(amps).iter().map(|d| d.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn scope_labels_and_parsing() {
        assert_eq!(ModeScope::Full.label(), "full");
        assert_eq!(ModeScope::Neighbors(4).label(), "n=4");
        assert_eq!("n=6".parse::<ModeScope>().unwrap(), ModeScope::Neighbors(6));
        assert_eq!("full".parse::<ModeScope>().unwrap(), ModeScope::Full);
        assert_eq!("ions=2,3".parse::<ModeScope>().unwrap(), ModeScope::Restricted(vec![1, 2]));
        assert!("n=x".parse::<ModeScope>().is_err());
        assert!("some".parse::<ModeScope>().is_err());
        let json = serde_json::to_string(&ModeScope::Restricted(vec![0, 4])).unwrap();
        assert_eq!(serde_json::from_str::<ModeScope>(&json).unwrap(), ModeScope::Restricted(vec![0, 4]));
    }

    #[test]
    fn neighbor_sets() {
        let pair = GatePair::center(20).unwrap();
        assert_eq!(neighbor_set(pair, 20, 0), vec![9, 10]);
        assert_eq!(neighbor_set(pair, 20, 2), vec![8, 9, 10, 11]);
        assert_eq!(neighbor_set(pair, 20, 3), vec![7, 8, 9, 10, 11]);
        assert_eq!(neighbor_set(pair, 20, 18), (0..20).collect::<Vec<_>>());
        let edge = GatePair::new(0, 1, 6).unwrap();
        assert_eq!(neighbor_set(edge, 6, 2), vec![0, 1, 2, 3]);
        let far = GatePair::new(0, 5, 6).unwrap();
        assert_eq!(neighbor_set(far, 6, 2), vec![0, 1, 4, 5]);
        assert_eq!(neighbor_set(far, 6, 1), vec![0, 1, 5]);
    }

    #[test]
    fn residual_matrix_is_psd_and_matches_alphas() {
        let c = Crystal::new(6).unwrap();
        let model = GateModel::new(c.modes, GatePair::center(6).unwrap(), 2.0).unwrap();
        let tables = model.tables(SegmentGrid::new(0.8 * TAU0, 3.1, 7).unwrap());
        let m = model.residual_matrix(&tables);
        let eig = SymmetricEigen::new(m.clone());
        assert!(eig.eigenvalues.iter().all(|&l| l > -1e-12 * m.norm()));
        let x = [0.3, -0.1, 0.7, 1.0, -0.4, 0.2, 0.5];
        let o = model.raw_outcome(&tables, &x);
        let direct: f64 = (0..6)
            .map(|k| model.betas[k] * (o.alpha_i[k].norm_sqr() + o.alpha_j[k].norm_sqr()))
            .sum();
        let xv = DVector::from_column_slice(&x);
        let quad = (xv.transpose() * m * xv)[(0, 0)];
        assert!((quad - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn exact_null_two_ions() {
        let c = Crystal::new(2).unwrap();
        let model = GateModel::new(c.modes, GatePair::new(0, 1, 2).unwrap(), 1.0).unwrap();
        for &(tau, mu) in &[(TAU0, 0.6), (0.3 * TAU0, 4.0), (2.0 * TAU0, 1.3)] {
            let tables = model.tables(SegmentGrid::new(tau, mu, 5).unwrap());
            let f = exact_null(&tables).unwrap();
            assert_eq!(f[0], 1.0);
            assert!(residual_norm(&tables, &f) < 1e-10);
            let out = model.evaluate_tables(&tables, &f).unwrap();
            assert!((out.fidelity - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn exact_null_twenty_ions() {
        let c = Crystal::new(20).unwrap();
        let model = GateModel::new(c.modes, GatePair::center(20).unwrap(), 3.0).unwrap();
        // Well conditioned for τ ≳ 2τ₀; much shorter gates make the 40 × 40
        // system numerically singular.
        let tables = model.tables(SegmentGrid::new(3.0 * TAU0, 5.0, 41).unwrap());
        let f = exact_null(&tables).unwrap();
        let scale = f.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
        let g_scale = tables.moments.iter().fold(0.0_f64, |a, b| a.max(b.norm()));
        assert!(residual_norm(&tables, &f) < 1e-10 * scale * g_scale * 41.0);
        let out = model.evaluate_tables(&tables, &f).unwrap();
        assert!((out.fidelity - 1.0).abs() < 1e-9, "{}", out.fidelity);
        assert!(exact_null(&model.tables(SegmentGrid::new(3.0 * TAU0, 5.0, 40).unwrap())).is_err());
        assert!(matches!(
            exact_null(&model.tables(SegmentGrid::new(0.5 * TAU0, 9.0, 41).unwrap())),
            Err(Error::SingularConstraints { .. })
        ));
    }

    #[test]
    fn degenerate_modes_make_constraints_singular() {
        let vectors = DMatrix::from_row_slice(2, 2, &[0.6, 0.8, 0.8, -0.6]);
        let modes = ModeSet {
            eigenvalues: vec![2.0, 2.0],
            frequencies: vec![2f64.sqrt(); 2],
            vectors,
            moving: vec![0, 1],
        };
        let model = GateModel::new(modes, GatePair::new(0, 1, 2).unwrap(), 0.0).unwrap();
        let tables = model.tables(SegmentGrid::new(TAU0, 0.7, 5).unwrap());
        match exact_null(&tables) {
            Err(Error::SingularConstraints { mode }) => assert!(mode < 2),
            other => panic!("expected singular constraints, got {other:?}"),
        }
    }

    #[test]
    fn optimizer_reaches_unit_fidelity_with_enough_segments() {
        let c = Crystal::new(2).unwrap();
        let pair = GatePair::new(0, 1, 2).unwrap();
        let opt = Optimizer::new(&c, pair, 1.0, ModeScope::Full).unwrap();
        for m in [5, 6, 9] {
            let r = opt.run(SegmentGrid::new(0.4 * TAU0, 3.0, m).unwrap()).unwrap();
            assert!((r.fidelity - 1.0).abs() < 1e-9, "m = {m}: {}", r.fidelity);
            assert!(r.diagnostics.null_dimension >= m - 4);
            assert!(r.amps[0] >= 0.0);
            assert!((r.outcome.phi_total.abs() - TARGET_PHASE).abs() < 1e-12);
        }
    }

    #[test]
    fn single_segment_has_one_candidate() {
        let c = Crystal::new(4).unwrap();
        let opt = Optimizer::new(&c, GatePair::center(4).unwrap(), 3.0, ModeScope::Full).unwrap();
        let grid = SegmentGrid::new(2.0 * TAU0, 0.5, 1).unwrap();
        let r = opt.run(grid).unwrap();
        let direct = opt.target().evaluate_tables(&opt.target().tables(grid), &[1.0]).unwrap();
        assert!((r.fidelity - direct.fidelity).abs() < 1e-14);
        assert!((r.amps[0] - direct.amps[0]).abs() < 1e-12);
        assert_eq!(r.diagnostics.candidates, 1);
    }

    #[test]
    fn surrogate_tracks_exact_infidelity_when_small() {
        let c = Crystal::new(8).unwrap();
        let opt = Optimizer::new(&c, GatePair::center(8).unwrap(), 1.0, ModeScope::Full)
            .unwrap()
            .with_objective(Objective::Surrogate);
        let r = opt.run(SegmentGrid::new(1.0 * TAU0, 4.5, 9).unwrap()).unwrap();
        let infid = 1.0 - r.fidelity;
        assert!(infid < 1e-2);
        assert!((r.diagnostics.surrogate_delta - infid).abs() < 0.05 * infid + 1e-12, "{} vs {infid}", r.diagnostics.surrogate_delta);
    }

    #[test]
    fn surrogate_choice_ignores_overall_beta_scale() {
        let c = Crystal::new(6).unwrap();
        let pair = GatePair::center(6).unwrap();
        let grid = SegmentGrid::new(0.7 * TAU0, 5.0, 5).unwrap();
        let base = Optimizer::new(&c, pair, 3.0, ModeScope::Full)
            .unwrap()
            .with_objective(Objective::Surrogate);
        let a = base.run(grid).unwrap();
        let b = base.clone().with_scaled_betas(7.5).run(grid).unwrap();
        for (x, y) in a.amps.iter().zip(&b.amps) {
            assert!((x - y).abs() < 1e-9 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn deterministic() {
        let c = Crystal::new(10).unwrap();
        let spec = OptimizeSpec { refine: true, ..OptimizeSpec::new(0.6 * TAU0, 4.0, 7, 3.0) };
        let pair = GatePair::center(10).unwrap();
        let a = optimize(&c, pair, &spec).unwrap();
        let b = optimize(&c, pair, &spec).unwrap();
        assert_eq!(a.amps, b.amps);
        assert_eq!(a.fidelity.to_bits(), b.fidelity.to_bits());
    }

    #[test]
    fn refinement_never_loses() {
        let c = Crystal::new(10).unwrap();
        let pair = GatePair::center(10).unwrap();
        let grid = SegmentGrid::new(0.6 * TAU0, 4.0, 5).unwrap();
        let plain = Optimizer::new(&c, pair, 3.0, ModeScope::Full).unwrap();
        let polished = plain.clone().with_refine(true);
        let (a, b) = (plain.run(grid).unwrap(), polished.run(grid).unwrap());
        assert!(b.fidelity >= a.fidelity);
        assert!(b.diagnostics.refine_evals > 0);
    }

    #[test]
    fn restricted_scope_is_reported_on_full_crystal() {
        let c = Crystal::new(12).unwrap();
        let pair = GatePair::center(12).unwrap();
        let opt = Optimizer::new(&c, pair, 3.0, ModeScope::Neighbors(2)).unwrap();
        assert_eq!(opt.design().modes.len(), 4);
        let grid = SegmentGrid::new(0.5 * TAU0, 8.0, 9).unwrap();
        let r = opt.run(grid).unwrap();
        assert!((r.diagnostics.scope_fidelity - 1.0).abs() < 1e-9);
        let full = opt.target().evaluate_tables(&opt.target().tables(grid), &r.amps).unwrap();
        assert!((r.fidelity - full.fidelity).abs() < 1e-12);
        assert_eq!(r.export().scope, "n=2");
    }

    #[test]
    fn phase_null_grid_is_reported() {
        // Neither gate ion couples to the only mode.
        let vectors = DMatrix::from_row_slice(3, 1, &[1.0, 0.0, 0.0]);
        let modes = ModeSet {
            eigenvalues: vec![1.0],
            frequencies: vec![1.0],
            vectors,
            moving: vec![0, 1, 2],
        };
        let model = GateModel::new(modes, GatePair::new(1, 2, 3).unwrap(), 0.0).unwrap();
        let tables = model.tables(SegmentGrid::new(TAU0, 0.7, 3).unwrap());
        let (cands, _, _) = surrogate_candidates(&model, &tables);
        assert!(cands.is_empty());
    }
}
