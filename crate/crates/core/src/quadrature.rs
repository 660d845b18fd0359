//! Quadrature rules on the reference triangle and on the periodic circle.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on [0, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        // Chebyshev-like initial guess, then Newton on P_n.
        let mut t = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, t);
            dp = d;
            let dt = p / d;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, t);
        dp = if d != 0.0 { d } else { dp };
        x[i] = 0.5 * (1.0 - t);
        w[i] = 1.0 / ((1.0 - t * t) * dp * dp);
    }
    // Sort ascending for reproducible ordering.
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap());
    (idx.iter().map(|&k| x[k]).collect(), idx.iter().map(|&k| w[k]).collect())
}

fn legendre(n: usize, t: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = t;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * t * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (t * p1 - p0) / (t * t - 1.0);
    (p1, d)
}

/// Quadrature on the reference triangle {(x, y): x, y ≥ 0, x + y ≤ 1}.
///
/// Points are collapsed tensor Gauss rules, so every weight is positive and
/// the weights sum to the reference area 1/2.
#[derive(Debug, Clone)]
pub struct QuadRule {
    /// Polynomial degree integrated exactly.
    pub order: usize,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl QuadRule {
    pub fn triangle(order: usize) -> Self {
        let n = order / 2 + 1;
        let (g, gw) = gauss_legendre(n);
        let (s, sw) = gauss_legendre(n + 1);
        let mut points = Vec::with_capacity(n * (n + 1));
        let mut weights = Vec::with_capacity(n * (n + 1));
        for (a, wa) in s.iter().zip(&sw) {
            for (b, wb) in g.iter().zip(&gw) {
                points.push([*a, (1.0 - a) * b]);
                weights.push(wa * wb * (1.0 - a));
            }
        }
        Self { order, points, weights }
    }

    /// Barycentric coordinates of each point (λ0 = 1 - x - y, λ1 = x, λ2 = y).
    pub fn barycentric(&self) -> Vec<[f64; 3]> {
        self.points.iter().map(|p| [1.0 - p[0] - p[1], p[0], p[1]]).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Equispaced trapezoid rule on [0, 2π): nodes 2πj/m with weight 2π/m.
pub fn periodic_trapezoid(m: usize) -> (Vec<f64>, f64) {
    let h = 2.0 * PI / m as f64;
    ((0..m).map(|j| h * j as f64).collect(), h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn monomial_exact(a: u32, b: u32) -> f64 {
        // ∫_T x^a y^b = a! b! / (a + b + 2)!
        let f = |n: u32| (1..=n).map(|k| k as f64).product::<f64>();
        f(a) * f(b) / f(a + b + 2)
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in 1..8 {
            let (x, w) = gauss_legendre(n);
            for k in 0..(2 * n) {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k as i32)).sum();
                assert!((q - 1.0 / (k as f64 + 1.0)).abs() < 1e-14, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn triangle_rule_exactness() {
        for order in 1..=8 {
            let q = QuadRule::triangle(order);
            assert!(q.weights.iter().all(|&w| w > 0.0));
            let total: f64 = q.weights.iter().sum();
            assert!((total - 0.5).abs() < 1e-15);
            for a in 0..=order as u32 {
                for b in 0..=(order as u32 - a) {
                    let val: f64 = q
                        .points
                        .iter()
                        .zip(&q.weights)
                        .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                        .sum();
                    let ex = monomial_exact(a, b);
                    assert!(((val - ex) / ex).abs() < 1e-12, "order {order} x^{a} y^{b}");
                }
            }
        }
    }

    #[test]
    fn trapezoid_weights_sum_to_circumference() {
        let (z, w) = periodic_trapezoid(10);
        assert_eq!(z.len(), 10);
        assert!((w * 10.0 - 2.0 * PI).abs() < 1e-14);
    }
}
