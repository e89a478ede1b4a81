//! Deterministic Nelder–Mead simplex minimizer.

#[derive(Debug, Clone, Copy)]
pub struct Settings {
    /// Stop once every vertex lies within this distance of the best one.
    pub diameter: f64,
    pub max_evals: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self { diameter: 1e-8, max_evals: 2000 }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

/// Minimizes `f` from `x0`, with initial simplex edges of length `step`
/// along each axis. Non-finite values count as +∞.
pub fn minimize<F>(mut f: F, x0: &[f64], step: f64, settings: Settings) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    if n == 0 {
        let value = eval(x0, &mut evals);
        return Minimum { x: Vec::new(), value, evals };
    }

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = eval(x0, &mut evals);
    simplex.push((x0.to_vec(), v0));
    for d in 0..n {
        let mut x = x0.to_vec();
        x[d] += step;
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = &simplex[0].0;
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| dist(x, best))
            .fold(0.0, f64::max);
        if diameter < settings.diameter || evals >= settings.max_evals {
            break;
        }

        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&worst.0).map(|(c, w)| c + t * (c - w)).collect()
        };

        let xr = along(alpha);
        let vr = eval(&xr, &mut evals);
        if vr < simplex[0].1 {
            let xe = along(gamma);
            let ve = eval(&xe, &mut evals);
            simplex[n] = if ve < vr { (xe, ve) } else { (xr, vr) };
            continue;
        }
        if vr < simplex[n - 1].1 {
            simplex[n] = (xr, vr);
            continue;
        }
        let (xc, vc) = if vr < worst.1 {
            let xc = along(alpha * rho);
            let vc = eval(&xc, &mut evals);
            (xc, vc)
        } else {
            let xc = along(-rho);
            let vc = eval(&xc, &mut evals);
            (xc, vc)
        };
        if vc < worst.1.min(vr) {
            simplex[n] = (xc, vc);
            continue;
        }
        let x_best = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = x_best
                .iter()
                .zip(&vertex.0)
                .map(|(b, v)| b + sigma * (v - b))
                .collect();
            let v = eval(&x, &mut evals);
            *vertex = (x, v);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Minimum { x, value, evals }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = minimize(f, &[-1.2, 1.0], 0.1, Settings { diameter: 1e-10, max_evals: 5000 });
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{:?}", m.x);
    }

    #[test]
    fn quadratic_bowl_and_budget() {
        let f = |x: &[f64]| x.iter().enumerate().map(|(i, v)| (i + 1) as f64 * (v - 0.3).powi(2)).sum();
        let m = minimize(f, &[0.0; 4], 0.5, Settings::default());
        assert!(m.x.iter().all(|v| (v - 0.3).abs() < 1e-7));
        let capped = minimize(f, &[0.0; 4], 0.5, Settings { diameter: 0.0, max_evals: 50 });
        assert!(capped.evals < 60);
    }

    #[test]
    fn non_finite_values_are_avoided() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { (x[0] - 1.0).powi(2) };
        let m = minimize(f, &[0.5], 0.2, Settings::default());
        assert!((m.x[0] - 1.0).abs() < 1e-7);
    }
}
