//! Quadrature rules: Gauss–Legendre on intervals and symmetric rules on
//! triangles.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "need at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        if d != 0.0 {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// `P_n(z)` and `P_n'(z)` by the three-term recurrence.
fn legendre(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let (m, h) = ((a + b) / 2.0, (b - a) / 2.0);
    (
        x.iter().map(|t| m + h * t).collect(),
        w.iter().map(|v| v * h).collect(),
    )
}

/// A rule on the reference triangle: barycentric coordinates and weights that
/// sum to 1 (multiply by the triangle area).
#[derive(Debug, Clone)]
pub struct TriangleRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    /// Edge-midpoint rule, exact for quadratics.
    pub fn degree2() -> Self {
        Self {
            points: vec![[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]],
            weights: vec![1.0 / 3.0; 3],
        }
    }

    /// Seven-point rule exact for quintics.
    pub fn degree5() -> Self {
        let a1 = 0.059_715_871_789_769_82;
        let b1 = 0.470_142_064_105_115_1;
        let a2 = 0.797_426_985_353_087_3;
        let b2 = 0.101_286_507_323_456_3;
        let w1 = 0.132_394_152_788_506_2;
        let w2 = 0.125_939_180_544_827_2;
        Self {
            points: vec![
                [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
                [a1, b1, b1],
                [b1, a1, b1],
                [b1, b1, a1],
                [a2, b2, b2],
                [b2, a2, b2],
                [b2, b2, a2],
            ],
            weights: vec![0.225, w1, w1, w1, w2, w2, w2],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in 1..12 {
            let (x, w) = gauss_legendre(n);
            for deg in 0..2 * n {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
        let (x, w) = gauss_legendre_on(20, 0.0, PI);
        let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.sin()).sum();
        assert!((q - 2.0).abs() < 1e-14);
    }

    #[test]
    fn triangle_rules_are_exact() {
        // integral over the reference triangle of l1^a l2^b l3^c is
        // 2 a! b! c! / (a+b+c+2)! times the area
        let fact = |n: u32| (1..=n).product::<u32>() as f64;
        for (rule, deg) in [(TriangleRule::degree2(), 2), (TriangleRule::degree5(), 5)] {
            assert!((rule.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for a in 0..=deg {
                for b in 0..=(deg - a) {
                    let c = deg - a - b;
                    let q: f64 = rule
                        .points
                        .iter()
                        .zip(&rule.weights)
                        .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32) * p[2].powi(c as i32))
                        .sum();
                    let exact = 2.0 * fact(a) * fact(b) * fact(c) / fact(a + b + c + 2);
                    assert!((q - exact).abs() < 1e-12, "{a}{b}{c}");
                }
            }
        }
    }
}
