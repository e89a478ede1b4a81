//! Dormand–Prince 5(4) integrator for complex linear systems.

use num_complex::Complex64;

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
    pub max_steps: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { rel: 1e-10, abs: 1e-10, max_steps: 5_000_000 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order weights (identical to the last row of A).
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates y' = f(t, y) from `t0` to `t1` in place. `f` writes the
/// derivative into its third argument. Returns `None` if the step budget runs
/// out or the step size underflows.
pub fn integrate<F>(mut f: F, t0: f64, t1: f64, y: &mut [Complex64], tol: Tolerance) -> Option<Stats>
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
{
    let n = y.len();
    let mut stats = Stats::default();
    if t1 == t0 || n == 0 {
        return Some(stats);
    }
    let span = t1 - t0;
    let mut k: Vec<Vec<Complex64>> = vec![vec![Complex64::new(0.0, 0.0); n]; 7];
    let mut stage = vec![Complex64::new(0.0, 0.0); n];
    let mut y5 = vec![Complex64::new(0.0, 0.0); n];

    let mut t = t0;
    let mut h = (span.abs() * 1e-2).min(1e-2) * span.signum();
    f(t, y, &mut k[0]);
    while (t1 - t) * span.signum() > 0.0 {
        if stats.accepted + stats.rejected >= tol.max_steps {
            return None;
        }
        if (t + h - t1) * span.signum() > 0.0 {
            h = t1 - t;
        }
        for s in 1..7 {
            for idx in 0..n {
                let mut acc = y[idx];
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = A[s][j];
                    if a != 0.0 {
                        acc += kj[idx] * (h * a);
                    }
                }
                stage[idx] = acc;
            }
            f(t + C[s] * h, &stage, &mut k[s]);
        }
        let mut err: f64 = 0.0;
        for idx in 0..n {
            let mut hi = y[idx];
            let mut lo = y[idx];
            for s in 0..7 {
                hi += k[s][idx] * (h * B5[s]);
                lo += k[s][idx] * (h * B4[s]);
            }
            y5[idx] = hi;
            let scale = tol.abs + tol.rel * y[idx].norm().max(hi.norm());
            err = err.max((hi - lo).norm() / scale);
        }
        if err <= 1.0 {
            t += h;
            y.copy_from_slice(&y5);
            // First-same-as-last: the seventh stage is f at the new point.
            let last = k[6].clone();
            k[0] = last;
            stats.accepted += 1;
        } else {
            stats.rejected += 1;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h.abs() < 1e-14 * span.abs() {
            return None;
        }
    }
    Some(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_growth_and_rotation() {
        let lambda = Complex64::new(-0.3, 2.0);
        let mut y = vec![Complex64::new(1.0, 0.0)];
        integrate(|_, y, dy| dy[0] = lambda * y[0], 0.0, 5.0, &mut y, Tolerance::default()).unwrap();
        assert!((y[0] - (lambda * 5.0).exp()).norm() < 1e-9);
    }

    #[test]
    fn time_dependent_and_backwards() {
        // y' = i cos(t) y  ⇒  y = exp(i sin t).
        let mut y = vec![Complex64::new(1.0, 0.0)];
        let rhs = |t: f64, y: &[Complex64], dy: &mut [Complex64]| dy[0] = Complex64::new(0.0, t.cos()) * y[0];
        integrate(rhs, 0.0, 7.0, &mut y, Tolerance::default()).unwrap();
        assert!((y[0] - Complex64::new(0.0, 7f64.sin()).exp()).norm() < 1e-9);
        integrate(rhs, 7.0, 0.0, &mut y, Tolerance::default()).unwrap();
        assert!((y[0] - 1.0).norm() < 1e-9);
    }

    #[test]
    fn step_budget() {
        let mut y = vec![Complex64::new(1.0, 0.0)];
        let tol = Tolerance { max_steps: 3, ..Tolerance::default() };
        assert!(integrate(|_, y, dy| dy[0] = y[0] * 50.0, 0.0, 10.0, &mut y, tol).is_none());
    }
}
