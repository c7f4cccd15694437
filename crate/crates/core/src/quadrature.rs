//! Gauss–Legendre rules and graded radial integration.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Gauss–Legendre integral of `f` over [a, b] split at `breaks`,
/// with dyadic grading towards `a` so that integrable power singularities
/// at the left end are resolved.
pub fn integrate_graded<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64]) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (xs, ws) = gauss_legendre(24);
    let mut cuts: Vec<f64> = vec![a, b];
    let span = b - a;
    for k in 1..=100 {
        cuts.push(a + span * 0.5f64.powi(k));
    }
    for &c in breaks {
        if c > a && c < b {
            cuts.push(c);
        }
    }
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup();
    let mut total = 0.0;
    for pair in cuts.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        total += half
            * xs.iter()
                .zip(&ws)
                .map(|(x, w)| w * f(mid + half * x))
                .sum::<f64>();
    }
    total
}

/// Surface area of the unit sphere in R^N.
pub fn unit_sphere_area(dimension: usize) -> f64 {
    match dimension {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        d => {
            // |S^{d-1}| = 2 pi^{d/2} / Gamma(d/2) via the recurrence |S^{d+1}| = 2 pi |S^{d-1}| / d
            2.0 * PI * unit_sphere_area(d - 2) / (d as f64 - 2.0)
        }
    }
}

/// Volume of the ball of radius `r` in R^N.
pub fn ball_volume(dimension: usize, r: f64) -> f64 {
    unit_sphere_area(dimension) * r.powi(dimension as i32) / dimension as f64
}

/// Integral of a radial function over the ball B(0, radius) in R^N.
pub fn radial_ball_integral<F: Fn(f64) -> f64>(
    dimension: usize,
    radius: f64,
    breaks: &[f64],
    f: F,
) -> f64 {
    let p = dimension as i32 - 1;
    unit_sphere_area(dimension) * integrate_graded(|r| f(r) * r.powi(p), 0.0, radius, breaks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(10);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(18)).sum();
        assert!((s - 2.0 / 19.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn graded_rule_handles_inverse_sqrt() {
        let v = integrate_graded(|r| r.powf(-0.5), 0.0, 1.0, &[]);
        assert!((v - 2.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn sphere_and_ball() {
        assert!((ball_volume(2, 1.0) - PI).abs() < 1e-15);
        assert!((ball_volume(3, 1.0) - 4.0 * PI / 3.0).abs() < 1e-14);
        assert!((unit_sphere_area(4) - 2.0 * PI * PI).abs() < 1e-13);
    }
}
