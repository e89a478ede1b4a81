//! Linear Coulomb crystal: equilibrium positions, the axial coupling matrix
//! and its normal modes.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gatephysics::GatePair;

const EQUILIBRIUM_TOL: f64 = 1e-12;
const MAX_NEWTON_ITERATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrystalConfig {
    pub n_ions: usize,
}

impl CrystalConfig {
    pub fn new(n_ions: usize) -> Result<Self> {
        if n_ions < 2 {
            return Err(invalid(format!("a crystal needs at least 2 ions, got {n_ions}")));
        }
        Ok(Self { n_ions })
    }
}

/// Normal modes of the crystal or of a subset of its ions.
#[derive(Debug, Clone)]
pub struct ModeSet {
    /// μ_k, ascending.
    pub eigenvalues: Vec<f64>,
    /// ω_k = √μ_k.
    pub frequencies: Vec<f64>,
    /// Column k holds b^k over all N ions. Rows of pinned ions are zero.
    pub vectors: DMatrix<f64>,
    /// Ions free to move, ascending.
    pub moving: Vec<usize>,
}

impl ModeSet {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn n_ions(&self) -> usize {
        self.vectors.nrows()
    }

    /// g_n^k = b_n^k / √(2ω_k).
    pub fn coupling(&self, ion: usize, mode: usize) -> f64 {
        self.vectors[(ion, mode)] / (2.0 * self.frequencies[mode]).sqrt()
    }

    pub fn couplings(&self, ion: usize) -> Vec<f64> {
        (0..self.len()).map(|k| self.coupling(ion, k)).collect()
    }

    /// Index of the center-of-mass mode (μ = 1, uniform over every ion), if
    /// this set contains it.
    pub fn com_index(&self) -> Option<usize> {
        let n = self.n_ions();
        if self.moving.len() != n {
            return None;
        }
        let uniform = 1.0 / (n as f64).sqrt();
        (0..self.len()).find(|&k| {
            (self.eigenvalues[k] - 1.0).abs() < 1e-8
                && self.vectors.column(k).iter().all(|b| (b - uniform).abs() < 1e-8)
        })
    }
}

#[derive(Debug, Clone)]
pub struct Crystal {
    pub positions: Vec<f64>,
    pub coupling: DMatrix<f64>,
    pub modes: ModeSet,
}

impl Crystal {
    pub fn new(n_ions: usize) -> Result<Self> {
        Self::from_config(&CrystalConfig::new(n_ions)?)
    }

    pub fn from_config(config: &CrystalConfig) -> Result<Self> {
        let positions = solve_equilibrium(config.n_ions)?;
        let coupling = build_coupling(&positions)?;
        let modes = solve_modes(&coupling);
        Ok(Self { positions, coupling, modes })
    }

    pub fn n_ions(&self) -> usize {
        self.positions.len()
    }

    /// Oscillation frequency of one ion with every other ion pinned, √A_ii.
    pub fn local_frequency(&self, ion: usize) -> f64 {
        self.coupling[(ion, ion)].sqrt()
    }

    pub fn local_frequencies(&self) -> Vec<f64> {
        (0..self.n_ions()).map(|i| self.local_frequency(i)).collect()
    }

    /// Modes of the principal submatrix of A on `moving_set`; all other ions
    /// stay at their equilibrium positions. Both gate ions must move.
    pub fn restricted_modes(&self, moving_set: &[usize], pair: GatePair) -> Result<ModeSet> {
        let n = self.n_ions();
        if moving_set.is_empty() {
            return Err(invalid("moving set is empty"));
        }
        let mut moving = moving_set.to_vec();
        moving.sort_unstable();
        moving.dedup();
        if let Some(&bad) = moving.iter().find(|&&i| i >= n) {
            return Err(invalid(format!("ion index {bad} out of range for {n} ions")));
        }
        for ion in [pair.i(), pair.j()] {
            if moving.binary_search(&ion).is_err() {
                return Err(Error::GateIonNotMoving(ion));
            }
        }
        let sub = DMatrix::from_fn(moving.len(), moving.len(), |r, c| {
            self.coupling[(moving[r], moving[c])]
        });
        let reduced = solve_modes(&sub);
        let mut vectors = DMatrix::zeros(n, reduced.len());
        for (r, &ion) in moving.iter().enumerate() {
            for k in 0..reduced.len() {
                vectors[(ion, k)] = reduced.vectors[(r, k)];
            }
        }
        Ok(ModeSet { vectors, moving, ..reduced })
    }

    pub fn export(&self) -> CrystalExport {
        CrystalExport {
            n: self.n_ions(),
            positions: self.positions.clone(),
            mode_eigenvalues: self.modes.eigenvalues.clone(),
            mode_vectors: (0..self.modes.len())
                .map(|k| self.modes.vectors.column(k).iter().copied().collect())
                .collect(),
            local_frequencies: self.local_frequencies(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrystalExport {
    pub n: usize,
    pub positions: Vec<f64>,
    pub mode_eigenvalues: Vec<f64>,
    pub mode_vectors: Vec<Vec<f64>>,
    pub local_frequencies: Vec<f64>,
}

/// Net force on each ion: trap restoring force plus Coulomb repulsion.
pub fn force_residual(u: &[f64]) -> Vec<f64> {
    (0..u.len())
        .map(|l| {
            let mut r = u[l];
            for (p, &up) in u.iter().enumerate() {
                let d = u[l] - up;
                match p.cmp(&l) {
                    std::cmp::Ordering::Less => r -= 1.0 / (d * d),
                    std::cmp::Ordering::Greater => r += 1.0 / (d * d),
                    std::cmp::Ordering::Equal => {}
                }
            }
            r
        })
        .collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn is_ascending(u: &[f64]) -> bool {
    u.windows(2).all(|w| w[0] < w[1])
}

/// Damped Newton iteration on the force balance. The Jacobian of the force
/// residual is exactly the coupling matrix A.
pub fn solve_equilibrium(n_ions: usize) -> Result<Vec<f64>> {
    if n_ions < 2 {
        return Err(invalid(format!("a crystal needs at least 2 ions, got {n_ions}")));
    }
    let n = n_ions as f64;
    let mut u: Vec<f64> = (1..=n_ions)
        .map(|i| 2.018 * (i as f64 - (n + 1.0) / 2.0) / n.powf(0.559))
        .collect();
    let mut residual = force_residual(&u);
    let mut norm = max_abs(&residual);

    for _ in 0..MAX_NEWTON_ITERATIONS {
        if norm < EQUILIBRIUM_TOL {
            break;
        }
        let jac = build_coupling(&u)?;
        let step = jac
            .lu()
            .solve(&DVector::from_column_slice(&residual))
            .ok_or_else(|| invalid("singular Jacobian in equilibrium solve"))?;
        let mut damping = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(x, d)| x - damping * d).collect();
            if is_ascending(&trial) {
                let r = force_residual(&trial);
                let rn = max_abs(&r);
                if rn < norm || damping < 1e-4 {
                    u = trial;
                    residual = r;
                    norm = rn;
                    break;
                }
            }
            damping *= 0.5;
            if damping < 1e-12 {
                return Err(Error::EquilibriumNotConverged {
                    iterations: MAX_NEWTON_ITERATIONS,
                    residual: norm,
                });
            }
        }
    }

    // The potential is reflection symmetric; remove round-off asymmetry.
    let sym: Vec<f64> = (0..n_ions).map(|i| 0.5 * (u[i] - u[n_ions - 1 - i])).collect();
    let sym_norm = max_abs(&force_residual(&sym));
    if sym_norm <= norm.max(EQUILIBRIUM_TOL) {
        u = sym;
        norm = sym_norm;
    }
    if norm >= EQUILIBRIUM_TOL {
        return Err(Error::EquilibriumNotConverged {
            iterations: MAX_NEWTON_ITERATIONS,
            residual: norm,
        });
    }
    Ok(u)
}

/// A_ll = 1 + 2 Σ_{p≠l} |u_l − u_p|⁻³ and A_ln = −2 |u_l − u_n|⁻³.
pub fn build_coupling(positions: &[f64]) -> Result<DMatrix<f64>> {
    if let Some(bad) = positions.windows(2).position(|w| !(w[0] < w[1])) {
        return Err(Error::CoincidentPositions(bad + 1));
    }
    let n = positions.len();
    let mut a = DMatrix::zeros(n, n);
    for l in 0..n {
        for m in (l + 1)..n {
            let d = positions[m] - positions[l];
            let v = -2.0 / (d * d * d);
            a[(l, m)] = v;
            a[(m, l)] = v;
        }
    }
    for l in 0..n {
        let off: f64 = (0..n).filter(|&m| m != l).map(|m| a[(l, m)]).sum();
        a[(l, l)] = 1.0 - off;
    }
    Ok(a)
}

/// Symmetric eigendecomposition, ascending eigenvalues. Each eigenvector's
/// sign is fixed so its largest-magnitude component (lowest index on ties)
/// is positive.
pub fn solve_modes(a: &DMatrix<f64>) -> ModeSet {
    let n = a.nrows();
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));

    let mut vectors = DMatrix::zeros(n, n);
    let mut eigenvalues = Vec::with_capacity(n);
    for (k, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let peak = col.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let lead = col
            .iter()
            .position(|x| x.abs() >= peak - 1e-9)
            .unwrap_or(0);
        let sign = if col[lead] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            vectors[(r, k)] = sign * col[r];
        }
        eigenvalues.push(eig.eigenvalues[src]);
    }
    let frequencies = eigenvalues.iter().map(|m: &f64| m.max(0.0).sqrt()).collect();
    ModeSet { eigenvalues, frequencies, vectors, moving: (0..n).collect() }
}

/// β̄_k = coth[(√μ_k / 2) ln(1 + 1/n̄_c)], parameterized by the mean phonon
/// number of the center-of-mass mode.
pub fn thermal_betas(nbar_com: f64, modes: &ModeSet) -> Result<Vec<f64>> {
    if !(nbar_com >= 0.0) || !nbar_com.is_finite() {
        return Err(invalid(format!("mean phonon number must be finite and >= 0, got {nbar_com}")));
    }
    if nbar_com == 0.0 {
        return Ok(vec![1.0; modes.len()]);
    }
    let x = (1.0 / nbar_com).ln_1p();
    Ok(modes
        .eigenvalues
        .iter()
        .map(|mu| 1.0 / (0.5 * mu.sqrt() * x).tanh())
        .collect())
}
