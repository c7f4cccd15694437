//! The degenerate weight |x|^alpha, its C^2 regularization psi_eps^alpha and
//! the explicit multiplier constants derived from them.
//!
//! Inside the ball B_eps the regularizer is the even quartic
//! `3eps/8 + 3r^2/(4eps) - r^4/(8eps^3)`, which meets `r` at `r = eps` with
//! matching first and second derivatives. `epsilon == 0` selects the raw
//! weight.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::quadrature::radial_ball_integral;

/// Guard band kept around the open interval (0, 2) for alpha.
pub const ALPHA_MIN: f64 = 0.05;
pub const ALPHA_MAX: f64 = 1.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightParams {
    pub alpha: f64,
    pub epsilon: f64,
    pub dimension: usize,
    pub half_width: f64,
    pub r0: f64,
}

impl WeightParams {
    pub fn new(alpha: f64, epsilon: f64, dimension: usize, half_width: f64, r0: f64) -> Result<Self> {
        let p = WeightParams {
            alpha,
            epsilon,
            dimension,
            half_width,
            r0,
        };
        p.validate()?;
        Ok(p)
    }

    /// N = 2, L = 1, R0 = 0.12.
    pub fn unit_square(alpha: f64, epsilon: f64) -> Result<Self> {
        Self::new(alpha, epsilon, 2, 1.0, 0.12)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(ALPHA_MIN..=ALPHA_MAX).contains(&self.alpha) {
            return bad(format!(
                "alpha = {} outside [{ALPHA_MIN}, {ALPHA_MAX}]",
                self.alpha
            ));
        }
        if !(2..=3).contains(&self.dimension) {
            return bad(format!("dimension must be 2 or 3, got {}", self.dimension));
        }
        if !(self.half_width > 0.0) || !(self.r0 > 0.0) {
            return bad("half width and R0 must be positive".into());
        }
        if 8.0 * self.r0 >= self.half_width {
            return bad(format!(
                "need 8 R0 < L (R0 = {}, L = {})",
                self.r0, self.half_width
            ));
        }
        if !(self.epsilon >= 0.0 && self.epsilon < self.r0) {
            return bad(format!(
                "epsilon = {} outside [0, R0 = {})",
                self.epsilon, self.r0
            ));
        }
        Ok(())
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(self.alpha, epsilon, self.dimension, self.half_width, self.r0)
    }

    /// Regularization used by the approximation sweep, which probes eps up
    /// to L/4 regardless of R0.
    pub(crate) fn sweep_epsilon(&self, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 0.25 * self.half_width) {
            return Err(Error::InvalidParameter(format!(
                "sweep epsilon = {epsilon} outside (0, L/4)"
            )));
        }
        Ok(WeightParams { epsilon, ..*self })
    }

    pub fn is_regularized(&self) -> bool {
        self.epsilon > 0.0
    }

    /// M = sup |x| + 1 over the box.
    pub fn m_const(&self) -> f64 {
        (self.dimension as f64).sqrt() * self.half_width + 1.0
    }
}

/// Inside-ball quartic and its first two radial derivatives.
pub fn psi_inside(eps: f64, r: f64) -> (f64, f64, f64) {
    let e3 = eps * eps * eps;
    let value = 3.0 * eps / 8.0 + 3.0 * r * r / (4.0 * eps) - r.powi(4) / (8.0 * e3);
    let d1 = 3.0 * r / (2.0 * eps) - r.powi(3) / (2.0 * e3);
    let d2 = 3.0 / (2.0 * eps) - 3.0 * r * r / (2.0 * e3);
    (value, d1, d2)
}

/// psi_eps and its first two radial derivatives, branch chosen by r vs eps.
pub fn psi_radial(eps: f64, r: f64) -> (f64, f64, f64) {
    if r < eps {
        psi_inside(eps, r)
    } else {
        (r, 1.0, 0.0)
    }
}

fn require_regularized(params: &WeightParams) -> Result<f64> {
    if params.epsilon > 0.0 {
        Ok(params.epsilon)
    } else {
        Err(Error::RequiresRegularization)
    }
}

fn radius(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn psi(params: &WeightParams, r: f64) -> Result<f64> {
    let eps = require_regularized(params)?;
    if !(r >= 0.0) {
        return Err(Error::InvalidParameter(format!("radius must be >= 0, got {r}")));
    }
    Ok(psi_radial(eps, r).0)
}

pub fn psi_gradient(params: &WeightParams, x: &[f64]) -> Result<Vec<f64>> {
    let eps = require_regularized(params)?;
    let r = radius(x);
    let factor = if r < eps {
        3.0 / (2.0 * eps) - r * r / (2.0 * eps.powi(3))
    } else {
        1.0 / r
    };
    Ok(x.iter().map(|xi| factor * xi).collect())
}

/// Weight at radius `r`: r^alpha, or psi_eps(r)^alpha when regularized.
pub fn weight_radial(params: &WeightParams, r: f64) -> f64 {
    if params.epsilon > 0.0 {
        psi_radial(params.epsilon, r).0.powf(params.alpha)
    } else {
        r.powf(params.alpha)
    }
}

pub fn weight(params: &WeightParams, x: &[f64]) -> f64 {
    weight_radial(params, radius(x))
}

pub fn weight_gradient(params: &WeightParams, x: &[f64]) -> Result<Vec<f64>> {
    let eps = require_regularized(params)?;
    let p = psi_radial(eps, radius(x)).0;
    let s = params.alpha * p.powf(params.alpha - 1.0);
    Ok(psi_gradient(params, x)?.into_iter().map(|g| s * g).collect())
}

/// m_eps(x) = 1 - (alpha/2) psi^{-1} x . grad psi, the scalar factor of the
/// covariant derivative of the radial field along itself.
pub fn multiplier_factor(params: &WeightParams, x: &[f64]) -> Result<f64> {
    let eps = require_regularized(params)?;
    let r = radius(x);
    let (p, d1, _) = psi_radial(eps, r);
    // x . grad psi = r psi'(r)
    Ok(1.0 - 0.5 * params.alpha * r * d1 / p)
}

/// a = (3/8) min{1, 2 - alpha}
pub fn multiplier_floor(alpha: f64) -> f64 {
    0.375 * (2.0 - alpha).min(1.0)
}

/// The quartic 3eps^4 + 6eps^2(1-alpha)r^2 - (1-2alpha)r^4 whose minimum on
/// [0, eps] is `hat_a`; equals 8 eps^3 psi_eps(r) m_eps(r) inside B_eps.
pub fn floor_quartic(alpha: f64, eps: f64, r: f64) -> f64 {
    let e2 = eps * eps;
    3.0 * e2 * e2 + 6.0 * e2 * (1.0 - alpha) * r * r - (1.0 - 2.0 * alpha) * r.powi(4)
}

/// Lower bound of `floor_quartic` on [0, eps].
pub fn hat_a(alpha: f64, eps: f64) -> f64 {
    let e4 = eps.powi(4);
    if alpha <= 1.0 {
        e4 * 3.0f64.min(4.0 * (2.0 - alpha))
    } else {
        e4 * 3.0f64.min(3.0 / (2.0 * alpha - 1.0) * (3.0 * alpha - 2.0) * (2.0 - alpha))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiplierConstants {
    pub a: f64,
    pub hat_a: f64,
    pub b: f64,
    pub c: f64,
    #[serde(rename = "P")]
    pub p: f64,
    pub theta: f64,
    pub t_star: f64,
    /// M = sup |x| + 1
    pub m: f64,
}

impl MultiplierConstants {
    /// 2 (aT - 2b) / theta, the weighted-flux observability constant.
    pub fn weighted_constant(&self, t: f64) -> f64 {
        2.0 * (self.a * t - 2.0 * self.b) / self.theta
    }

    /// 2 (aT - 2b) / (theta M^{2 alpha}), the unweighted-flux constant.
    pub fn unweighted_constant(&self, t: f64, alpha: f64) -> f64 {
        self.weighted_constant(t) / self.m.powf(2.0 * alpha)
    }
}

/// Multiplier constants with b and theta maximized over the grid: b over
/// every node of the closed box, theta over the face nodes.
pub fn constants(params: &WeightParams, grid: &Grid) -> Result<MultiplierConstants> {
    if grid.dimension() != params.dimension {
        return Err(Error::DimensionMismatch {
            what: "grid vs weight dimension",
            expected: params.dimension,
            got: grid.dimension(),
        });
    }
    if grid.boundary_count() == 0 {
        return Err(Error::EmptyBoundary);
    }
    let alpha = params.alpha;
    let n = params.dimension as f64;
    let a = multiplier_floor(alpha);
    let b = grid
        .closed_points()
        .iter()
        .map(|x| radius(x) / weight(params, x).sqrt())
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max);
    let theta = grid
        .boundary_nodes()
        .iter()
        .map(|node| node.radial_normal() / radius(&node.position).powf(alpha))
        .fold(f64::MIN, f64::max);
    let hat = if params.epsilon > 0.0 {
        hat_a(alpha, params.epsilon)
    } else {
        0.0
    };
    Ok(MultiplierConstants {
        a,
        hat_a: hat,
        b,
        c: n * n - a * a,
        p: n - a,
        theta,
        t_star: 2.0 * b / a,
        m: params.m_const(),
    })
}

/// (w(B_r), w_eps(B_r)) by graded radial quadrature.
pub fn weight_measure(params: &WeightParams, radius: f64) -> Result<(f64, f64)> {
    if !(radius > 0.0 && radius <= params.half_width) {
        return Err(Error::InvalidParameter(format!(
            "radius must lie in (0, L], got {radius}"
        )));
    }
    let n = params.dimension;
    let alpha = params.alpha;
    let raw = radial_ball_integral(n, radius, &[], |r| r.powf(alpha));
    let reg = if params.epsilon > 0.0 {
        radial_ball_integral(n, radius, &[params.epsilon], |r| weight_radial(params, r))
    } else {
        raw
    };
    Ok((raw, reg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::ball_volume;
    use proptest::prelude::*;

    fn p(alpha: f64, eps: f64) -> WeightParams {
        WeightParams::unit_square(alpha, eps).unwrap()
    }

    #[test]
    fn psi_values() {
        let q = p(1.0, 0.1);
        assert!((psi(&q, 0.1).unwrap() - 0.1).abs() < 1e-15);
        assert!((psi(&q, 0.0).unwrap() - 0.0375).abs() < 1e-15);
        assert!((psi(&q, 0.05).unwrap() - 0.05546875).abs() < 1e-15);
        assert!(psi(&q, -0.1).is_err());
        assert_eq!(psi(&p(1.0, 0.0), 0.1), Err(Error::RequiresRegularization));
    }

    #[test]
    fn psi_gradient_values() {
        let q = p(1.0, 0.1);
        assert_eq!(psi_gradient(&q, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        let g = psi_gradient(&q, &[0.1, 0.0]).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-14 && g[1] == 0.0);
        let g = psi_gradient(&q, &[0.05, 0.0]).unwrap();
        assert!((g[0] - 0.6875).abs() < 1e-14);
    }

    #[test]
    fn weight_values() {
        assert!((weight(&p(1.0, 0.0), &[0.3, 0.4]) - 0.5).abs() < 1e-15);
        assert!((weight(&p(1.0, 0.1), &[0.0, 0.0]) - 0.0375).abs() < 1e-15);
        assert!((weight(&p(0.5, 0.1), &[0.2, 0.0]) - 0.447_213_595_499_958).abs() < 1e-12);
    }

    #[test]
    fn weight_gradient_values() {
        let g = weight_gradient(&p(1.0, 0.1), &[0.0, 0.0]).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
        let g = weight_gradient(&p(1.0, 0.1), &[0.1, 0.0]).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-14);
        let g = weight_gradient(&p(1.5, 0.1), &[0.1, 0.0]).unwrap();
        assert!((g[0] - 1.5 * 0.1f64.sqrt()).abs() < 1e-12);
        assert!((g[0] - 0.474_341_6).abs() < 1e-7);
        assert!(weight_gradient(&p(1.0, 0.0), &[0.1, 0.0]).is_err());
    }

    #[test]
    fn weight_gradient_matches_finite_differences() {
        let q = p(1.3, 0.1);
        for x in [[0.03, 0.04], [0.07, -0.02], [0.3, 0.2]] {
            let g = weight_gradient(&q, &x).unwrap();
            for d in 0..2 {
                let h = 1e-6;
                let mut xp = x;
                let mut xm = x;
                xp[d] += h;
                xm[d] -= h;
                let fd = (weight(&q, &xp) - weight(&q, &xm)) / (2.0 * h);
                assert!((fd - g[d]).abs() < 1e-7, "{fd} vs {}", g[d]);
            }
        }
    }

    #[test]
    fn multiplier_factor_values() {
        let q = p(1.0, 0.1);
        assert!((multiplier_factor(&q, &[0.2, 0.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!((multiplier_factor(&q, &[0.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        // 1 - (1/2)(11 eps/32)/(71 eps/128) = 1 - 704/2272
        let oracle = 1.0 - 704.0 / 2272.0;
        assert!((multiplier_factor(&q, &[0.05, 0.0]).unwrap() - oracle).abs() < 1e-12);
        assert!((oracle - 0.690141).abs() < 1e-6);
    }

    #[test]
    fn floor_quartic_identity() {
        for &alpha in &[0.25, 1.0, 1.75] {
            let q = p(alpha, 0.1);
            for k in 0..=20 {
                let r = 0.1 * k as f64 / 20.0;
                let lhs = 8.0 * 0.1f64.powi(3) * psi(&q, r).unwrap() * multiplier_factor(&q, &[r, 0.0]).unwrap();
                let rhs = floor_quartic(alpha, 0.1, r);
                assert!((lhs - rhs).abs() < 1e-15, "{lhs} {rhs}");
                assert!(rhs >= hat_a(alpha, 0.1) * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn hat_a_branches() {
        assert!((hat_a(1.0, 0.1) - 3e-4).abs() < 1e-18);
        assert!((hat_a(0.5, 0.1) - 3e-4).abs() < 1e-18);
        let v = hat_a(1.9, 0.1);
        let expect = 1e-4 * 3.0 / 2.8 * 3.7 * 0.1;
        assert!((v - expect).abs() < 1e-16);
        for k in 1..200 {
            assert!(hat_a(0.01 * k as f64, 0.05) > 0.0);
        }
    }

    #[test]
    fn constants_on_unit_square() {
        let g = Grid::new(2, 61, 1.0).unwrap();
        let c = constants(&p(1.0, 0.1), &g).unwrap();
        assert_eq!(c.a, 0.375);
        assert!((c.p - 1.625).abs() < 1e-15);
        assert!((c.c - 3.859375).abs() < 1e-15);
        assert!((c.b - 2f64.powf(0.25)).abs() < 1e-12);
        assert!((c.theta - 1.0).abs() < 1e-12);
        assert!((c.t_star - 6.3425).abs() < 1e-4);
        assert!((c.hat_a - 3e-4).abs() < 1e-18);
        assert!(c.b > 0.12f64.powf(0.5) && c.b <= c.m.powf(0.5) + 1e-12);
        // Same b and theta for every epsilon.
        for eps in [0.0, 0.02, 0.05] {
            let d = constants(&p(1.0, eps), &g).unwrap();
            assert_eq!(d.b, c.b);
            assert_eq!(d.theta, c.theta);
        }
        let corollary = c.unweighted_constant(8.0, 1.0);
        let oracle = 2.0 / (1.0 + 2f64.sqrt()).powi(2) * (3.0 - 2.0 * 2f64.powf(0.25));
        assert!((corollary - oracle).abs() < 1e-12);
        assert!((corollary - 0.2133).abs() < 1e-4);
    }

    #[test]
    fn measure_values() {
        let (w, _) = weight_measure(&p(1.0, 0.0), 0.1).unwrap();
        assert!((w - 2.0 * std::f64::consts::PI * 1e-3 / 3.0).abs() < 1e-15);
        let q = p(1.0, 0.1);
        let (w, we) = weight_measure(&q, 0.1).unwrap();
        let bound = 0.1 * ball_volume(2, 0.1);
        assert!(w <= we && we <= bound, "{w} {we} {bound}");
        let (w, we) = weight_measure(&q, 1e-6).unwrap();
        assert!(w < 1e-17 && (we - 0.0375 * std::f64::consts::PI * 1e-12).abs() < 1e-6 * we);
        assert!(weight_measure(&q, 0.0).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(WeightParams::unit_square(0.0, 0.0).is_err());
        assert!(WeightParams::unit_square(2.0, 0.0).is_err());
        assert!(WeightParams::unit_square(1.0, 0.12).is_err());
        assert!(WeightParams::new(1.0, 0.0, 2, 1.0, 0.125).is_err());
        assert!((p(1.0, 0.0).m_const() - (1.0 + 2f64.sqrt())).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn domination_and_sandwich(alpha in 0.05f64..1.95, eps in 0.005f64..0.11, r in 0.0f64..1.4) {
            let q = p(alpha, eps);
            let raw = p(alpha, 0.0);
            let x = [r, 0.0];
            prop_assert!(weight(&raw, &x) <= weight(&q, &x) * (1.0 + 1e-14));
            if r >= eps {
                prop_assert_eq!(weight(&raw, &x), weight(&q, &x));
            }
            let s = psi(&q, r).unwrap();
            prop_assert!(s >= r.max(3.0 * eps / 8.0) * (1.0 - 1e-14));
            prop_assert!(s <= r.max(eps) * (1.0 + 1e-14));
            prop_assert!(multiplier_factor(&q, &x).unwrap() >= multiplier_floor(alpha) - 1e-12);
        }
    }
}
