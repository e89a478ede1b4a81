//! Divided differences of `exp`, accurate for clustered or repeated nodes.

use num_complex::Complex64;

const SERIES_RADIUS: f64 = 0.5;

/// (e^z − 1)/z, with the removable singularity at 0 filled in.
pub fn expm1_over(z: Complex64) -> Complex64 {
    if z.norm() < SERIES_RADIUS {
        // Σ_{n≥0} zⁿ/(n+1)!
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = term;
        for n in 2..30 {
            term *= z / n as f64;
            sum += term;
            if term.norm() < 1e-18 {
                break;
            }
        }
        sum
    } else {
        (z.exp() - 1.0) / z
    }
}

/// exp[x, y] = (eˣ − eʸ)/(x − y).
pub fn exp_dd1(x: Complex64, y: Complex64) -> Complex64 {
    y.exp() * expm1_over(x - y)
}

/// exp[x, y, z], the second divided difference. By Hermite–Genocchi this is
/// the integral of e^{s₀x + s₁y + s₂z} over the unit simplex.
pub fn exp_dd2(x: Complex64, y: Complex64, z: Complex64) -> Complex64 {
    let nodes = [x, y, z];
    let pairs = [(0, 1, 2), (0, 2, 1), (1, 2, 0)];
    let &(a, b, c) = pairs
        .iter()
        .max_by(|p, q| {
            let dp = (nodes[p.0] - nodes[p.1]).norm();
            let dq = (nodes[q.0] - nodes[q.1]).norm();
            dp.total_cmp(&dq)
        })
        .expect("three pairs");
    let spread = (nodes[a] - nodes[b]).norm();
    if spread >= SERIES_RADIUS {
        return (exp_dd1(nodes[a], nodes[c]) - exp_dd1(nodes[b], nodes[c])) / (nodes[a] - nodes[b]);
    }

    // All nodes within a small cluster: expand about the centroid,
    // exp[x,y,z] = e^m Σ_n h_n(x−m, y−m, z−m)/(n+2)!, h_n complete homogeneous.
    let m = (x + y + z) / 3.0;
    let (p, q, r) = (x - m, y - m, z - m);
    let (mut h1, mut h2, mut h3) = (Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0));
    let mut fact = 2.0;
    let mut sum = h3 / fact;
    // h_1 vanishes about the centroid, so stop on an a-priori bound instead
    // of the size of the last term: |h_n| ≤ C(n+2, 2) ρⁿ.
    let rho = p.norm().max(q.norm()).max(r.norm());
    let mut bound = 1.0;
    for n in 1..40 {
        h1 *= p;
        h2 = h2 * q + h1;
        h3 = h3 * r + h2;
        fact *= (n + 2) as f64;
        sum += h3 / fact;
        bound *= rho;
        if bound * ((n + 1) * (n + 2) / 2) as f64 / fact < 1e-18 {
            break;
        }
    }
    m.exp() * sum
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn first_difference_limits() {
        assert!((expm1_over(c(0.0, 0.0)) - 1.0).norm() < 1e-16);
        let z = c(0.3, -0.2);
        assert!((expm1_over(z) - (z.exp() - 1.0) / z).norm() < 1e-15);
        let z = c(0.0, 0.49);
        assert!((expm1_over(z) - (z.exp() - 1.0) / z).norm() < 1e-15);
    }

    #[test]
    fn second_difference_against_direct_formula() {
        let (x, y, z) = (c(0.0, 5.0), c(0.0, -2.0), c(0.0, 1.0));
        let direct = ((x.exp() - z.exp()) / (x - z) - (y.exp() - z.exp()) / (y - z)) / (x - y);
        assert!((exp_dd2(x, y, z) - direct).norm() < 1e-15);
    }

    #[test]
    fn confluent_nodes() {
        // exp[0,0,0] = 1/2 and exp[a,a,a] = e^a/2.
        let zero = c(0.0, 0.0);
        assert!((exp_dd2(zero, zero, zero) - 0.5).norm() < 1e-16);
        let a = c(0.0, 3.0);
        assert!((exp_dd2(a, a, a) - a.exp() / 2.0).norm() < 1e-15);
        // exp[a, 0, 0] = (e^a − 1 − a)/a².
        let want = (a.exp() - 1.0 - a) / (a * a);
        assert!((exp_dd2(a, zero, zero) - want).norm() < 1e-15);
        assert!((exp_dd2(zero, a, zero) - want).norm() < 1e-15);
    }

    #[test]
    fn continuity_across_series_switch() {
        let base = c(0.0, 0.2);
        let below = exp_dd2(base, c(0.0, 0.2 + 0.4999), c(0.0, 0.2 - 1e-7));
        let above = exp_dd2(base, c(0.0, 0.2 + 0.5001), c(0.0, 0.2 - 1e-7));
        assert!((below - above).norm() < 1e-4);
        let a = exp_dd2(c(0.0, 0.1), c(0.0, 0.3), c(0.0, -0.15));
        let x = [0.1, 0.3, -0.15].map(|v| c(0.0, v));
        let direct = ((x[0].exp() - x[2].exp()) / (x[0] - x[2]) - (x[1].exp() - x[2].exp()) / (x[1] - x[2]))
            / (x[0] - x[1]);
        assert!((a - direct).norm() < 1e-13);
    }
}
