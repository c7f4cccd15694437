//! Flux-form (midpoint-weight) finite-difference realization of
//! `-div(w grad .)` with homogeneous or lifted Dirichlet data.
//!
//! The weight is evaluated only at edge midpoints, so an interior node at the
//! origin never produces a zero pivot and the matrix is symmetric by
//! construction.

use std::fmt::Write as _;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg::{dot, largest_ritz_value, CsrMatrix};
use crate::weight::{weight, WeightParams};

#[derive(Debug)]
pub struct OperatorMatrix {
    matrix: CsrMatrix,
    grid: Grid,
    params: Option<WeightParams>,
    /// Weight at the midpoint between each boundary node and its interior neighbour.
    boundary_weights: Vec<f64>,
    lambda_max: OnceLock<f64>,
}

impl Clone for OperatorMatrix {
    fn clone(&self) -> Self {
        OperatorMatrix {
            matrix: self.matrix.clone(),
            grid: self.grid.clone(),
            params: self.params,
            boundary_weights: self.boundary_weights.clone(),
            lambda_max: OnceLock::new(),
        }
    }
}

fn midpoint(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect()
}

/// Assemble A_h for the weight |x|^alpha (epsilon = 0) or psi_eps^alpha.
pub fn assemble_operator(grid: &Grid, params: &WeightParams) -> Result<OperatorMatrix> {
    if grid.dimension() != params.dimension {
        return Err(Error::DimensionMismatch {
            what: "grid vs weight dimension",
            expected: params.dimension,
            got: grid.dimension(),
        });
    }
    let p = *params;
    let mut op = assemble_with(grid, move |x| weight(&p, x));
    op.params = Some(p);
    Ok(op)
}

/// Assemble A_h for an arbitrary positive coefficient (test hook: `|_| 1.0`
/// gives the standard Dirichlet Laplacian).
pub fn assemble_with<F: Fn(&[f64]) -> f64>(grid: &Grid, w: F) -> OperatorMatrix {
    let nd = grid.dimension();
    let n = grid.nodes_per_axis();
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    let count = grid.interior_count();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(count);
    for k in 0..count {
        let multi = grid.multi_index(k);
        let xk = grid.interior_point(k);
        let mut row = Vec::with_capacity(2 * nd + 1);
        let mut diag = 0.0;
        for d in 0..nd {
            let stride = grid.stride(d);
            for forward in [false, true] {
                let i = multi[d] + 1;
                let j = if forward { i + 1 } else { i - 1 };
                let mut xn = xk.clone();
                xn[d] = grid.coordinate(d, j);
                let wm = w(&midpoint(&xk, &xn)) * inv_h2;
                diag += wm;
                if (1..=n).contains(&j) {
                    let nb = if forward { k + stride } else { k - stride };
                    row.push((nb, -wm));
                }
            }
        }
        row.push((k, diag));
        rows.push(row);
    }
    let boundary_weights = grid
        .boundary_nodes()
        .iter()
        .map(|b| w(&midpoint(&b.position, &grid.interior_point(b.neighbor))))
        .collect();
    OperatorMatrix {
        matrix: CsrMatrix::from_rows(rows),
        grid: grid.clone(),
        params: None,
        boundary_weights,
        lambda_max: OnceLock::new(),
    }
}

impl OperatorMatrix {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn params(&self) -> Option<&WeightParams> {
        self.params.as_ref()
    }

    pub fn size(&self) -> usize {
        self.matrix.rows()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix.mul_vec(x)
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        self.matrix.mul_vec_into(x, y)
    }

    /// phi^T A_h phi h^N, the discrete weighted Dirichlet energy.
    pub fn energy_form(&self, phi: &[f64]) -> f64 {
        self.grid.cell_volume() * self.matrix.bilinear(phi, phi)
    }

    pub fn boundary_weights(&self) -> &[f64] {
        &self.boundary_weights
    }

    /// Largest Ritz value from a 60-step Lanczos run, cached.
    pub fn lambda_max_estimate(&self) -> f64 {
        *self
            .lambda_max
            .get_or_init(|| largest_ritz_value(&self.matrix, 60))
    }

    /// Forcing vector realizing Dirichlet data `u` on the boundary nodes:
    /// g_x = sum over boundary neighbours y of w(mid(x, y)) u(y) / h^2.
    pub fn boundary_lift(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut g = vec![0.0; self.size()];
        self.boundary_lift_into(u, &mut g)?;
        Ok(g)
    }

    pub fn boundary_lift_into(&self, u: &[f64], g: &mut [f64]) -> Result<()> {
        let nodes = self.grid.boundary_nodes();
        if u.len() != nodes.len() {
            return Err(Error::DimensionMismatch {
                what: "boundary trace",
                expected: nodes.len(),
                got: u.len(),
            });
        }
        g.iter_mut().for_each(|v| *v = 0.0);
        let h = self.grid.spacing();
        for ((b, &wb), &ub) in nodes.iter().zip(&self.boundary_weights).zip(u) {
            g[b.neighbor] += wb * ub / (h * h);
        }
        Ok(())
    }

    /// Transpose of `boundary_lift` between the L^2_h interior product and
    /// the h^{N-1} boundary product: w(mid) phi(x_1) / h. Its negative is the
    /// first-order conormal derivative w dphi/dnu.
    pub fn lift_adjoint(&self, phi: &[f64]) -> Vec<f64> {
        let h = self.grid.spacing();
        self.grid
            .boundary_nodes()
            .iter()
            .zip(&self.boundary_weights)
            .map(|(b, wb)| wb * phi[b.neighbor] / h)
            .collect()
    }

    /// Coordinate text export: one `row col value` line per stored entry.
    pub fn to_coordinate_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# rows={} cols={} nnz={}",
            self.size(),
            self.size(),
            self.matrix.nnz()
        );
        for (i, j, v) in self.matrix.triplets() {
            let _ = writeln!(s, "{i} {j} {v:.16e}");
        }
        s
    }
}

/// Outward normal derivative at each boundary node from the second-order
/// one-sided stencil (-4 phi_1 + phi_2) / (2h), using phi = 0 on the face.
/// With `weight` set the value is multiplied by w(x_b).
pub fn normal_flux(grid: &Grid, phi: &[f64], weight_params: Option<&WeightParams>) -> Vec<f64> {
    let h = grid.spacing();
    grid.boundary_nodes()
        .iter()
        .map(|b| {
            let d = (-4.0 * phi[b.neighbor] + phi[b.second_neighbor]) / (2.0 * h);
            match weight_params {
                Some(p) => weight(p, &b.position) * d,
                None => d,
            }
        })
        .collect()
}

/// Per-node multipliers turning `normal_flux` values into weighted ones.
pub fn boundary_node_weights(grid: &Grid, params: &WeightParams) -> Vec<f64> {
    grid.boundary_nodes()
        .iter()
        .map(|b| weight(params, &b.position))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteNorms {
    pub l2: f64,
    pub h1w: f64,
}

pub fn discrete_norms(op: &OperatorMatrix, phi: &[f64]) -> DiscreteNorms {
    DiscreteNorms {
        l2: op.grid().l2_norm(phi),
        h1w: op.energy_form(phi).max(0.0).sqrt(),
    }
}

/// Discrete integral of |grad phi|^2 over the edges whose midpoint lies in
/// the open ball B(0, radius); boundary edges use phi = 0 on the face.
pub fn gradient_energy_in_ball(grid: &Grid, phi: &[f64], radius: f64) -> f64 {
    let nd = grid.dimension();
    let n = grid.nodes_per_axis();
    let h = grid.spacing();
    let mut total = 0.0;
    for k in 0..grid.interior_count() {
        let multi = grid.multi_index(k);
        let xk = grid.interior_point(k);
        for d in 0..nd {
            // Each edge counted once: the edge towards +e_d, plus the edge to
            // the lower face for the first node on the axis.
            let i = multi[d] + 1;
            let mut edges = vec![(i + 1, true)];
            if i == 1 {
                edges.push((0, false));
            }
            for (j, forward) in edges {
                let mut xn = xk.clone();
                xn[d] = grid.coordinate(d, j);
                let m = midpoint(&xk, &xn);
                if m.iter().map(|v| v * v).sum::<f64>().sqrt() >= radius {
                    continue;
                }
                let other = if (1..=n).contains(&j) {
                    phi[if forward { k + grid.stride(d) } else { k - grid.stride(d) }]
                } else {
                    0.0
                };
                let g = (other - phi[k]) / h;
                total += g * g;
            }
        }
    }
    total * grid.cell_volume()
}

/// Quadratic-form value phi^T M psi h^N for two operators' difference.
pub fn form_difference(a: &OperatorMatrix, b: &OperatorMatrix, phi: &[f64]) -> f64 {
    let h = a.grid().cell_volume();
    h * (dot(phi, &a.apply(phi)) - dot(phi, &b.apply(phi)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid {
        Grid::new(2, n, 1.0).unwrap()
    }

    #[test]
    fn unit_weight_gives_five_point_laplacian() {
        let g = grid(5);
        let op = assemble_with(&g, |_| 1.0);
        let h2 = g.spacing().powi(2);
        assert!((op.matrix().get(12, 12) - 4.0 / h2).abs() < 1e-12);
        assert!((op.matrix().get(12, 13) + 1.0 / h2).abs() < 1e-12);
        assert!((op.matrix().get(12, 7) + 1.0 / h2).abs() < 1e-12);
        assert_eq!(op.matrix().get(12, 14), 0.0);
    }

    #[test]
    fn regularized_small_operator_is_exactly_symmetric() {
        let g = grid(3);
        let op = assemble_operator(&g, &WeightParams::unit_square(1.0, 0.1).unwrap()).unwrap();
        assert_eq!(op.size(), 9);
        assert_eq!(op.matrix().symmetry_residual(), 0.0);
        for n in [4, 7, 12] {
            let g = grid(n);
            for eps in [0.0, 0.05] {
                let op =
                    assemble_operator(&g, &WeightParams::unit_square(1.3, eps).unwrap()).unwrap();
                assert_eq!(op.matrix().symmetry_residual(), 0.0);
            }
        }
    }

    #[test]
    fn origin_node_has_finite_pivot() {
        let g = grid(5);
        let op = assemble_operator(&g, &WeightParams::unit_square(1.9, 0.0).unwrap()).unwrap();
        let center = g.flat_index(&[2, 2]);
        assert!(op.matrix().get(center, center) > 0.0);
    }

    #[test]
    fn lift_of_zero_and_single_node() {
        let g = grid(5);
        let params = WeightParams::unit_square(1.0, 0.1).unwrap();
        let op = assemble_operator(&g, &params).unwrap();
        assert!(op.boundary_lift(&vec![0.0; g.boundary_count()]).unwrap().iter().all(|v| *v == 0.0));
        let mut u = vec![0.0; g.boundary_count()];
        u[3] = 1.0;
        let lifted = op.boundary_lift(&u).unwrap();
        let b = &g.boundary_nodes()[3];
        let mid = midpoint(&b.position, &g.interior_point(b.neighbor));
        let expect = weight(&params, &mid) / g.spacing().powi(2);
        for (k, v) in lifted.iter().enumerate() {
            if k == b.neighbor {
                assert!((v - expect).abs() < 1e-12);
            } else {
                assert_eq!(*v, 0.0);
            }
        }
        assert!(op.boundary_lift(&[1.0]).is_err());
    }

    #[test]
    fn lift_adjoint_is_transpose() {
        let g = grid(6);
        let op = assemble_operator(&g, &WeightParams::unit_square(0.7, 0.05).unwrap()).unwrap();
        let u: Vec<f64> = (0..g.boundary_count()).map(|i| (i as f64 * 0.37).sin()).collect();
        let phi: Vec<f64> = (0..g.interior_count()).map(|i| (i as f64 * 0.11).cos()).collect();
        let lhs = g.dot(&op.boundary_lift(&u).unwrap(), &phi);
        let rhs = g.face_measure() * dot(&u, &op.lift_adjoint(&phi));
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn normal_flux_of_zero_and_quadratic() {
        let g = grid(9);
        assert!(normal_flux(&g, &vec![0.0; g.interior_count()], None).iter().all(|v| *v == 0.0));
        let phi = g.sample(|x| (1.0 - x[0] * x[0]) * (1.0 - x[1] * x[1]));
        let flux = normal_flux(&g, &phi, None);
        let idx = g
            .boundary_nodes()
            .iter()
            .position(|b| b.sign > 0.0 && b.axis == 0 && b.position[1].abs() < 1e-12)
            .unwrap();
        assert!((flux[idx] + 2.0).abs() < 1e-10);
    }
}
