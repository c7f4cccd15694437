//! Discrete point spectrum of A_h: smallest eigenpairs, modal projection,
//! series identities, and radial Hardy/Poincare quadrature checks.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, scale, BandCholesky};
use crate::operator::OperatorMatrix;
use crate::quadrature::integrate_graded;
use crate::weight::{psi_radial, WeightParams};

/// Interior counts up to this size use the dense decomposition.
pub const DENSE_LIMIT: usize = 4000;

/// Relative eigen-residual every returned pair must meet.
pub const RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EigenRoute {
    Auto,
    Dense,
    Lanczos,
}

#[derive(Debug, Clone)]
pub struct EigenBasis {
    values: Vec<f64>,
    /// Columns, orthonormal in the L^2_h product.
    vectors: Vec<Vec<f64>>,
    residuals: Vec<f64>,
    cell_volume: f64,
    params: Option<WeightParams>,
    route: EigenRoute,
}

impl EigenBasis {
    /// Assemble a basis from precomputed pairs (used by the on-disk cache).
    /// Vectors must already be L^2_h-orthonormal.
    pub fn from_parts(
        values: Vec<f64>,
        vectors: Vec<Vec<f64>>,
        residuals: Vec<f64>,
        cell_volume: f64,
        params: Option<WeightParams>,
    ) -> Result<Self> {
        if values.len() != vectors.len() || values.len() != residuals.len() {
            return Err(Error::DimensionMismatch {
                what: "eigenbasis parts",
                expected: values.len(),
                got: vectors.len(),
            });
        }
        Ok(EigenBasis {
            values,
            vectors,
            residuals,
            cell_volume,
            params,
            route: EigenRoute::Dense,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i]
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn params(&self) -> Option<&WeightParams> {
        self.params.as_ref()
    }

    pub fn route(&self) -> EigenRoute {
        self.route
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, |v| v.len())
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    pub fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        self.cell_volume * dot(a, b)
    }

    /// The leading `count` pairs.
    pub fn truncated(&self, count: usize) -> EigenBasis {
        let k = count.min(self.len());
        EigenBasis {
            values: self.values[..k].to_vec(),
            vectors: self.vectors[..k].to_vec(),
            residuals: self.residuals[..k].to_vec(),
            cell_volume: self.cell_volume,
            params: self.params,
            route: self.route,
        }
    }

    /// Modes with sqrt(lambda) h <= gamma.
    pub fn filtered(&self, spacing: f64, gamma: f64) -> EigenBasis {
        let k = self
            .values
            .iter()
            .take_while(|l| l.sqrt() * spacing <= gamma)
            .count();
        self.truncated(k)
    }

    /// max |<Phi_i, Phi_j>_h - delta_ij|
    pub fn gram_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.len() {
            for j in 0..=i {
                let g = self.dot(&self.vectors[i], &self.vectors[j]);
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        worst
    }

    /// max |<Phi_i, A Phi_j>_h - delta_ij lambda_i| / lambda_max
    pub fn weighted_gram_residual(&self, op: &OperatorMatrix) -> f64 {
        let images: Vec<Vec<f64>> = self.vectors.iter().map(|v| op.apply(v)).collect();
        let scale = self.values.last().copied().unwrap_or(1.0);
        let mut worst: f64 = 0.0;
        for i in 0..self.len() {
            for j in 0..=i {
                let g = self.dot(&self.vectors[i], &images[j]);
                let target = if i == j { self.values[i] } else { 0.0 };
                worst = worst.max((g - target).abs() / scale);
            }
        }
        worst
    }
}

/// The `m` smallest eigenpairs of A_h.
pub fn compute_eigs(op: &OperatorMatrix, m: usize) -> Result<EigenBasis> {
    compute_eigs_with(op, m, EigenRoute::Auto)
}

pub fn compute_eigs_with(op: &OperatorMatrix, m: usize, route: EigenRoute) -> Result<EigenBasis> {
    let n = op.size();
    if m == 0 || m > n {
        return Err(Error::InvalidParameter(format!(
            "requested {m} eigenpairs of a {n}x{n} operator"
        )));
    }
    let route = match route {
        EigenRoute::Auto if n <= DENSE_LIMIT => EigenRoute::Dense,
        EigenRoute::Auto => EigenRoute::Lanczos,
        r => r,
    };
    let (values, raw) = match route {
        EigenRoute::Dense => dense_pairs(op, m)?,
        _ => lanczos_pairs(op, m)?,
    };
    let cell = op.grid().cell_volume();
    let inv_sqrt = 1.0 / cell.sqrt();
    let mut vectors = Vec::with_capacity(m);
    let mut residuals = Vec::with_capacity(m);
    for (lambda, mut v) in values.iter().zip(raw) {
        // Unit Euclidean -> unit L^2_h, with a deterministic sign.
        let nv = norm(&v);
        scale(inv_sqrt / nv, &mut v);
        let big = v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-8 * big) {
            if *first < 0.0 {
                scale(-1.0, &mut v);
            }
        }
        let mut r = op.apply(&v);
        axpy(-lambda, &v, &mut r);
        residuals.push((cell * dot(&r, &r)).sqrt() / lambda);
        vectors.push(v);
    }
    if values.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::Solver(format!(
            "non-positive eigenvalue {:.3e}",
            values[0]
        )));
    }
    let worst = residuals.iter().fold(0.0f64, |a, b| a.max(*b));
    if worst > RESIDUAL_TOL {
        return Err(Error::EigenStall {
            iterations: 0,
            residual: worst,
        });
    }
    Ok(EigenBasis {
        values,
        vectors,
        residuals,
        cell_volume: cell,
        params: op.params().copied(),
        route,
    })
}

type Pairs = (Vec<f64>, Vec<Vec<f64>>);

fn dense_pairs(op: &OperatorMatrix, m: usize) -> Result<Pairs> {
    let n = op.size();
    let dense = op.matrix().to_dense();
    let a = faer::Mat::<f64>::from_fn(n, n, |i, j| dense[i * n + j]);
    drop(dense);
    let eig = a
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Solver(format!("dense eigendecomposition failed: {e:?}")))?;
    let s = eig.S().column_vector();
    let u = eig.U();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s[i].partial_cmp(&s[j]).unwrap());
    let values = order[..m].iter().map(|&i| s[i]).collect();
    let vectors = order[..m]
        .iter()
        .map(|&j| (0..n).map(|i| u[(i, j)]).collect())
        .collect();
    Ok((values, vectors))
}

/// Shift-invert Lanczos (shift 0) with full reorthogonalization. Largest
/// eigenvalues of A^{-1} are the wanted smallest of A.
fn lanczos_pairs(op: &OperatorMatrix, m: usize) -> Result<Pairs> {
    let n = op.size();
    let chol = BandCholesky::factor(op.matrix())?;
    let max_dim = n.min((4 * m + 60).max(2 * m + 100));
    let mut q: Vec<f64> = (0..n)
        .map(|i| 1.0 + ((i as f64 * 0.618_033_988_749_895).fract() - 0.5))
        .collect();
    let nq = norm(&q);
    scale(1.0 / nq, &mut q);
    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut worst = f64::INFINITY;
    let check_every = 10usize;
    loop {
        let j = alphas.len();
        let mut w = chol.solve(&basis[j]);
        let a = dot(&w, &basis[j]);
        alphas.push(a);
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&w, b);
                axpy(-c, b, &mut w);
            }
        }
        let beta = norm(&w);
        let k = alphas.len();
        let exhausted = beta < 1e-14 * a.abs() || k == max_dim;
        if k >= m && (k.is_multiple_of(check_every) || exhausted) {
            let t = faer::Mat::<f64>::from_fn(k, k, |r, c| {
                if r == c {
                    alphas[r]
                } else if r.abs_diff(c) == 1 {
                    betas[r.min(c)]
                } else {
                    0.0
                }
            });
            let eig = t
                .self_adjoint_eigen(faer::Side::Lower)
                .map_err(|e| Error::Solver(format!("tridiagonal eigen failed: {e:?}")))?;
            let s = eig.S().column_vector();
            let y = eig.U();
            // faer returns ascending order; wanted are the last m.
            let wanted: Vec<usize> = (k - m..k).rev().collect();
            worst = wanted
                .iter()
                .map(|&i| (beta * y[(k - 1, i)]).abs() / s[i].abs())
                .fold(0.0, f64::max);
            if worst < 1e-13 || exhausted {
                let values = wanted.iter().map(|&i| 1.0 / s[i]).collect();
                let vectors = wanted
                    .iter()
                    .map(|&i| {
                        let mut v = vec![0.0; n];
                        for (r, b) in basis.iter().enumerate().take(k) {
                            axpy(y[(r, i)], b, &mut v);
                        }
                        v
                    })
                    .collect();
                if worst < 1e-13 || beta < 1e-14 * a.abs() || k == n {
                    return Ok((values, vectors));
                }
                return Err(Error::EigenStall {
                    iterations: k,
                    residual: worst,
                });
            }
        }
        if exhausted {
            return Err(Error::EigenStall {
                iterations: k,
                residual: worst,
            });
        }
        scale(1.0 / beta, &mut w);
        betas.push(beta);
        basis.push(w);
    }
}

/// Coefficients <phi, Phi_i>_h.
pub fn project(basis: &EigenBasis, phi: &[f64]) -> Vec<f64> {
    basis.vectors.iter().map(|v| basis.dot(phi, v)).collect()
}

/// sum_i c_i Phi_i
pub fn synthesize(basis: &EigenBasis, coeffs: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; basis.dim()];
    for (c, v) in coeffs.iter().zip(&basis.vectors) {
        if *c != 0.0 {
            axpy(*c, v, &mut out);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesReport {
    /// |h1w(phi)^2 - sum u_i^2 lambda_i| / sum u_i^2 lambda_i
    pub energy_residual: f64,
    /// | ||A phi||_h - (sum u_i^2 lambda_i^2)^{1/2} | / (sum u_i^2 lambda_i^2)^{1/2}
    pub operator_residual: f64,
}

/// Check the H^1_w and A-norm series expansions on the projection of `phi`.
pub fn series_identities_check(op: &OperatorMatrix, basis: &EigenBasis, phi: &[f64]) -> SeriesReport {
    let coeffs = project(basis, phi);
    let inside = synthesize(basis, &coeffs);
    let energy_series: f64 = coeffs.iter().zip(&basis.values).map(|(u, l)| u * u * l).sum();
    let op_series: f64 = coeffs
        .iter()
        .zip(&basis.values)
        .map(|(u, l)| u * u * l * l)
        .sum::<f64>()
        .sqrt();
    let energy = op.energy_form(&inside);
    let a_phi = op.apply(&inside);
    let a_norm = basis.dot(&a_phi, &a_phi).sqrt();
    let rel = |x: f64, y: f64| {
        if x == 0.0 && y == 0.0 {
            0.0
        } else {
            (x - y).abs() / y.abs().max(x.abs())
        }
    };
    SeriesReport {
        energy_residual: rel(energy, energy_series),
        operator_residual: rel(a_norm, op_series),
    }
}

/// Radial test profiles u(r) on the ball of radius R, all vanishing at r = R.
#[derive(Debug, Clone, Copy)]
pub enum RadialTest {
    /// R - r
    Linear { radius: f64 },
    /// (R - r) r^beta
    PowerLinear { radius: f64, beta: f64 },
    /// R^2 - r^2
    Quadratic { radius: f64 },
    /// Identically zero.
    Zero { radius: f64 },
    /// Caller-supplied profile and derivative.
    Custom {
        radius: f64,
        u: fn(f64) -> f64,
        du: fn(f64) -> f64,
    },
}

impl RadialTest {
    pub fn radius(&self) -> f64 {
        match *self {
            RadialTest::Linear { radius }
            | RadialTest::PowerLinear { radius, .. }
            | RadialTest::Quadratic { radius }
            | RadialTest::Zero { radius }
            | RadialTest::Custom { radius, .. } => radius,
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        match *self {
            RadialTest::Linear { radius } => radius - r,
            RadialTest::PowerLinear { radius, beta } => (radius - r) * r.powf(beta),
            RadialTest::Quadratic { radius } => radius * radius - r * r,
            RadialTest::Zero { .. } => 0.0,
            RadialTest::Custom { u, .. } => u(r),
        }
    }

    pub fn derivative(&self, r: f64) -> f64 {
        match *self {
            RadialTest::Linear { .. } => -1.0,
            RadialTest::PowerLinear { radius, beta } => {
                -r.powf(beta) + (radius - r) * beta * r.powf(beta - 1.0)
            }
            RadialTest::Quadratic { .. } => -2.0 * r,
            RadialTest::Zero { .. } => 0.0,
            RadialTest::Custom { du, .. } => du(r),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HardyReport {
    /// (N - 2 + alpha)^2 int psi^{alpha-2} u^2
    pub lhs: f64,
    /// 4 int psi^alpha |u'|^2
    pub rhs: f64,
    pub ratio: f64,
    /// int u^2 / (4 M^{2-alpha} / (N-2+alpha)^2 int psi^alpha |u'|^2), M = R + 1
    pub poincare_ratio: f64,
    /// int u^2 / (M^{2-alpha} int psi^{alpha-2} u^2)
    pub weighted_l2_ratio: f64,
}

/// Evaluate the (regularized) Hardy inequality and its Poincare consequence
/// for a radial profile on B(0, R) in R^N by graded radial quadrature.
/// `epsilon = 0` uses psi = r.
pub fn hardy_check(alpha: f64, epsilon: f64, dimension: usize, test: RadialTest) -> Result<HardyReport> {
    let radius = test.radius();
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter("test radius must be positive".into()));
    }
    let scale_u = integrate_graded(|r| test.value(r).abs(), 0.0, radius, &[]).max(1e-300) / radius;
    if test.value(radius).abs() > 1e-12 * scale_u.max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "test profile does not vanish at r = R (u(R) = {:.3e})",
            test.value(radius)
        )));
    }
    if !(0.0..2.0).contains(&alpha) || alpha == 0.0 {
        return Err(Error::InvalidParameter(format!("alpha = {alpha} outside (0, 2)")));
    }
    if epsilon < 0.0 || (epsilon > 0.0 && epsilon >= radius) {
        return Err(Error::InvalidParameter(format!(
            "epsilon = {epsilon} must lie in [0, R)"
        )));
    }
    let psi = |r: f64| if epsilon > 0.0 { psi_radial(epsilon, r).0 } else { r };
    let p = dimension as i32 - 1;
    let breaks = if epsilon > 0.0 { vec![epsilon] } else { vec![] };
    let radial = |f: &dyn Fn(f64) -> f64| {
        crate::quadrature::unit_sphere_area(dimension)
            * integrate_graded(|r| f(r) * r.powi(p), 0.0, radius, &breaks)
    };
    let k = dimension as f64 - 2.0 + alpha;
    let weighted_l2 = radial(&|r| psi(r).powf(alpha - 2.0) * test.value(r).powi(2));
    let dirichlet = radial(&|r| psi(r).powf(alpha) * test.derivative(r).powi(2));
    let plain_l2 = radial(&|r| test.value(r).powi(2));
    let lhs = k * k * weighted_l2;
    let rhs = 4.0 * dirichlet;
    let m = radius + 1.0;
    let ratio_of = |a: f64, b: f64| if a == 0.0 { 0.0 } else { a / b };
    Ok(HardyReport {
        lhs,
        rhs,
        ratio: ratio_of(lhs, rhs),
        poincare_ratio: ratio_of(plain_l2, 4.0 * m.powf(2.0 - alpha) / (k * k) * dirichlet),
        weighted_l2_ratio: ratio_of(plain_l2, m.powf(2.0 - alpha) * weighted_l2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::operator::{assemble_operator, assemble_with};

    fn op(n: usize, alpha: f64, eps: f64) -> OperatorMatrix {
        assemble_operator(
            &Grid::new(2, n, 1.0).unwrap(),
            &WeightParams::unit_square(alpha, eps).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn dense_and_lanczos_agree_on_tiny_grid() {
        let a = op(9, 1.0, 0.1);
        let d = compute_eigs_with(&a, 20, EigenRoute::Dense).unwrap();
        let l = compute_eigs_with(&a, 20, EigenRoute::Lanczos).unwrap();
        for (x, y) in d.values().iter().zip(l.values()) {
            assert!((x - y).abs() <= 1e-10 * x, "{x} vs {y}");
        }
        let full = compute_eigs_with(&a, 81, EigenRoute::Dense).unwrap();
        let one = compute_eigs_with(&a, 1, EigenRoute::Lanczos).unwrap();
        assert!((full.values()[0] - one.values()[0]).abs() <= 1e-10 * one.values()[0]);
    }

    #[test]
    fn basis_is_orthonormal_and_diagonalizes() {
        let a = op(12, 0.6, 0.05);
        let b = compute_eigs(&a, 30).unwrap();
        assert!(b.gram_residual() < 1e-10);
        assert!(b.weighted_gram_residual(&a) < 1e-8);
        assert!(b.values().windows(2).all(|w| w[0] <= w[1]));
        assert!(b.values()[0] > 0.0);
    }

    #[test]
    fn project_unit_vectors_and_roundtrip() {
        let a = op(8, 1.0, 0.0);
        let b = compute_eigs(&a, 12).unwrap();
        let c = project(&b, b.vector(2));
        for (i, v) in c.iter().enumerate() {
            let t = if i == 2 { 1.0 } else { 0.0 };
            assert!((v - t).abs() < 1e-12);
        }
        assert!(project(&b, &vec![0.0; 64]).iter().all(|v| *v == 0.0));
        let coeffs: Vec<f64> = (0..12).map(|i| (i as f64 + 0.5).sin()).collect();
        let back = project(&b, &synthesize(&b, &coeffs));
        for (x, y) in coeffs.iter().zip(&back) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn series_identities_for_single_and_pair() {
        let a = op(10, 1.0, 0.1);
        let b = compute_eigs(&a, 10).unwrap();
        let r = series_identities_check(&a, &b, b.vector(0));
        assert!(r.energy_residual < 1e-10);
        let mut sum = b.vector(0).to_vec();
        axpy(1.0, b.vector(1), &mut sum);
        let r = series_identities_check(&a, &b, &sum);
        assert!(r.operator_residual < 1e-10);
        let ap = a.apply(&sum);
        let lhs = b.dot(&ap, &ap);
        let (l1, l2) = (b.values()[0], b.values()[1]);
        assert!((lhs - (l1 * l1 + l2 * l2)).abs() < 1e-9 * lhs);
    }

    #[test]
    fn unit_weight_spectrum_closed_form() {
        let g = Grid::new(2, 11, 1.0).unwrap();
        let a = assemble_with(&g, |_| 1.0);
        let b = compute_eigs(&a, 121).unwrap();
        let h = g.spacing();
        let mut exact: Vec<f64> = (1..=11)
            .flat_map(|j| (1..=11).map(move |k| (j, k)))
            .map(|(j, k)| {
                let s = |i: usize| (i as f64 * std::f64::consts::PI / 24.0).sin().powi(2);
                4.0 / (h * h) * (s(j) + s(k))
            })
            .collect();
        exact.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for (x, y) in exact.iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-9 * x);
        }
    }

    #[test]
    fn rejects_bad_counts() {
        let a = op(4, 1.0, 0.0);
        assert!(compute_eigs(&a, 0).is_err());
        assert!(compute_eigs(&a, 17).is_err());
    }

    #[test]
    fn hardy_closed_case() {
        let r = hardy_check(1.0, 0.0, 2, RadialTest::Linear { radius: 1.0 }).unwrap();
        let pi = std::f64::consts::PI;
        assert!((r.lhs - 2.0 * pi / 3.0).abs() < 1e-12);
        assert!((r.rhs - 8.0 * pi / 3.0).abs() < 1e-12);
        assert!((r.ratio - 0.25).abs() < 1e-12);
    }

    #[test]
    fn hardy_zero_and_rejects_nonvanishing() {
        let r = hardy_check(1.0, 0.0, 2, RadialTest::Zero { radius: 1.0 }).unwrap();
        assert_eq!(r.ratio, 0.0);
        let bad = RadialTest::Custom {
            radius: 1.0,
            u: |r| 1.0 + r,
            du: |_| 1.0,
        };
        assert!(hardy_check(1.0, 0.0, 2, bad).is_err());
    }

    #[test]
    fn hardy_regularized_ratio_below_one() {
        let r = hardy_check(1.5, 0.1, 2, RadialTest::Quadratic { radius: 1.0 }).unwrap();
        assert!(r.ratio <= 1.0 && r.ratio > 0.0);
        assert!(r.poincare_ratio <= 1.0);
    }
}
