//! Boundary null control by the Hilbert Uniqueness Method.
//!
//! Everything lives in modal coordinates of the filtered eigenmode span. A
//! vector `x` of length 2K holds adjoint data: displacement coefficients in
//! `x[..K]` and velocity coefficients in `x[K..]`. The HUM operator maps it
//! to (y'(0), -y(0)), where psi solves the free system from `x`, the control
//! is the discrete conormal flux u = -B* psi on Gamma_0, and y solves the
//! controlled system backward from rest at T. The schemes for psi and y are
//! the same leapfrog with exactly inverse end formulas, so
//! <Lambda x, z> = sum_j w_j <B* psi_x(t_j), B* psi_z(t_j)>
//! holds to rounding: Lambda is symmetric positive semidefinite.

use faer::linalg::solvers::Solve;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::observability::{gamma0, subset_mask, DEFAULT_GAMMA};
use crate::operator::OperatorMatrix;
use crate::spectral::{project, synthesize, EigenBasis};
use crate::wave::{
    cfl_limit, integrate, solve_controlled, steps_for, trapezoid_weights, ControlTrace, DataPair,
    Direction, SolveOptions,
};
use crate::weight::constants;

/// Default stop: mismatch energy below this fraction of E(0).
pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_MAX_ITERATIONS: usize = 200;

#[derive(Debug, Clone)]
pub struct HUMProblem<'a> {
    op: &'a OperatorMatrix,
    span: EigenBasis,
    data: DataPair,
    horizon: f64,
    gamma: f64,
    dt: f64,
    steps: usize,
    support: Vec<bool>,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl<'a> HUMProblem<'a> {
    /// `basis` must contain every mode passing the filter; the target data
    /// are projected onto the filtered span.
    pub fn new(op: &'a OperatorMatrix, basis: &EigenBasis, data: &DataPair, horizon: f64, gamma: f64) -> Result<Self> {
        let params = op
            .params()
            .ok_or_else(|| Error::InvalidParameter("HUM needs a weight-defined operator".into()))?;
        let grid = op.grid();
        let k = constants(params, grid)?;
        if !(horizon > k.t_star) {
            return Err(Error::HorizonTooShort {
                t: horizon,
                t_star: k.t_star,
            });
        }
        if data.displacement.len() != op.size() || data.velocity.len() != op.size() {
            return Err(Error::DimensionMismatch {
                what: "target data",
                expected: op.size(),
                got: data.displacement.len().min(data.velocity.len()),
            });
        }
        let span = basis.filtered(grid.spacing(), gamma);
        if span.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "no modes pass the filter sqrt(lambda) h <= {gamma}"
            )));
        }
        if span.len() == basis.len() && basis.len() < op.size() {
            return Err(Error::InvalidParameter(
                "every computed mode passes the filter; compute more eigenpairs".into(),
            ));
        }
        let data = DataPair::new(
            synthesize(&span, &project(&span, &data.displacement)),
            synthesize(&span, &project(&span, &data.velocity)),
        );
        let dt_max = cfl_limit(op);
        let steps = steps_for(horizon, dt_max).max(2);
        let support = subset_mask(grid.boundary_count(), &gamma0(grid)?);
        Ok(HUMProblem {
            op,
            span,
            data,
            horizon,
            gamma,
            dt: horizon / steps as f64,
            steps,
            support,
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        })
    }

    pub fn with_default_gamma(op: &'a OperatorMatrix, basis: &EigenBasis, data: &DataPair, horizon: f64) -> Result<Self> {
        Self::new(op, basis, data, horizon, DEFAULT_GAMMA)
    }

    pub fn operator(&self) -> &OperatorMatrix {
        self.op
    }

    pub fn span(&self) -> &EigenBasis {
        &self.span
    }

    /// Target data after projection onto the filtered span.
    pub fn data(&self) -> &DataPair {
        &self.data
    }

    pub fn modes(&self) -> usize {
        self.span.len()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn support(&self) -> &[bool] {
        &self.support
    }

    fn split(&self, x: &[f64]) -> DataPair {
        let k = self.span.len();
        DataPair::new(synthesize(&self.span, &x[..k]), synthesize(&self.span, &x[k..]))
    }

    fn modal(&self, d: &DataPair) -> Vec<f64> {
        let mut x = project(&self.span, &d.displacement);
        x.extend(project(&self.span, &d.velocity));
        x
    }

    /// Energy 1/2 sum (v_k^2 + lambda_k d_k^2) of modal data.
    pub fn modal_energy(&self, x: &[f64]) -> f64 {
        let k = self.span.len();
        0.5 * self
            .span
            .values()
            .iter()
            .enumerate()
            .map(|(i, l)| x[k + i] * x[k + i] + l * x[i] * x[i])
            .sum::<f64>()
    }

    /// Control -B* psi on Gamma_0 along the free solution from modal data.
    pub fn control_for(&self, x: &[f64]) -> ControlTrace {
        let mut trace = ControlTrace::zeros(self.horizon, self.steps, self.support.len());
        let start = self.split(x);
        integrate(self.op, &start, self.steps, self.dt, |_, _| false, |level, y, _, _| {
            let u = self.op.lift_adjoint(y);
            for ((dst, v), on) in trace.values[level].iter_mut().zip(u).zip(&self.support) {
                *dst = if *on { -v } else { 0.0 };
            }
        });
        trace
    }

    /// (y(0), y'(0)) of the controlled system run backward from rest.
    fn backward_from_rest(&self, control: &ControlTrace) -> DataPair {
        let rest = DataPair::zeros(self.op.size());
        integrate(
            self.op,
            &rest,
            self.steps,
            -self.dt,
            |level, buf| {
                self.op.boundary_lift_into(&control.values[level], buf).expect("trace length");
                true
            },
            |_, _, _, _| {},
        )
    }

    /// Lambda in modal coordinates.
    pub fn apply_modal(&self, x: &[f64]) -> Vec<f64> {
        let control = self.control_for(x);
        let y = self.backward_from_rest(&control);
        let mut out = project(&self.span, &y.velocity);
        out.extend(project(&self.span, &y.displacement).into_iter().map(|v| -v));
        out
    }

    /// Right-hand side (phi1, -phi0) in modal coordinates.
    pub fn rhs(&self) -> Vec<f64> {
        let k = self.span.len();
        let d = self.modal(&self.data);
        let mut b = d[k..].to_vec();
        b.extend(d[..k].iter().map(|v| -v));
        b
    }

    /// Dense Lambda built column by column (row-major 2K x 2K).
    pub fn assemble_dense(&self) -> Vec<f64> {
        let m = 2 * self.span.len();
        let mut dense = vec![0.0; m * m];
        for j in 0..m {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            for (i, v) in self.apply_modal(&e).into_iter().enumerate() {
                dense[i * m + j] = v;
            }
        }
        dense
    }
}

/// Lambda applied to full-vector adjoint data lying in the filtered span.
pub fn hum_apply(problem: &HUMProblem, sigma: &DataPair) -> Result<DataPair> {
    let x = problem.modal(sigma);
    let back = problem.split(&x);
    let mut off = 0.0;
    for (a, b) in [(&back.displacement, &sigma.displacement), (&back.velocity, &sigma.velocity)] {
        let d: Vec<f64> = a.iter().zip(b.iter()).map(|(p, q)| p - q).collect();
        off += norm(&d) / norm(b).max(1e-300);
    }
    if off > 1e-8 && (norm(&sigma.displacement) + norm(&sigma.velocity)) > 0.0 {
        return Err(Error::SpanViolation { residual: off });
    }
    let y = problem.apply_modal(&x);
    Ok(problem.split(&y))
}

#[derive(Debug, Clone, Serialize)]
pub struct HUMResult {
    #[serde(skip)]
    pub control: ControlTrace,
    #[serde(skip)]
    pub sigma: DataPair,
    /// Minimizer in modal coordinates.
    pub sigma_modal: Vec<f64>,
    pub iterations: usize,
    /// Mismatch energy / E(0) after each iteration (entry 0 is the start).
    pub residual_history: Vec<f64>,
    /// HUM functional 1/2 x.Lx - b.x after each iteration.
    pub objective_history: Vec<f64>,
    pub energy0: f64,
    /// E(T)/E(0) of the filtered projection in the closed-loop run.
    pub terminal_ratio: f64,
    /// Same ratio without the projection (reported, not controlled).
    pub terminal_ratio_unfiltered: f64,
    pub cost: f64,
    pub gamma: f64,
    pub modes: usize,
    pub horizon: f64,
    pub dt: f64,
    pub steps: usize,
    pub face_measure: f64,
}

/// Preconditioned conjugate gradient on Lambda x = (phi1, -phi0) with
/// preconditioner diag(1/lambda, 1), followed by a closed-loop forward run.
pub fn hum_solve(problem: &HUMProblem) -> Result<HUMResult> {
    let k = problem.span.len();
    let lambdas = problem.span.values();
    let b = problem.rhs();
    let e0 = problem.modal_energy(&problem.data_modal());
    let mismatch = |r: &[f64]| {
        0.5 * (0..k)
            .map(|i| r[i] * r[i] + lambdas[i] * r[k + i] * r[k + i])
            .sum::<f64>()
    };
    let precond = |r: &[f64]| -> Vec<f64> {
        (0..2 * k)
            .map(|i| if i < k { r[i] / lambdas[i] } else { r[i] })
            .collect()
    };
    let mut x = vec![0.0; 2 * k];
    let mut r = b.clone();
    let scale = if e0 > 0.0 { e0 } else { 1.0 };
    let mut residuals = vec![mismatch(&r) / scale];
    let mut objective = vec![0.0];
    let mut iterations = 0;
    if e0 > 0.0 {
        let b_norm = norm(&b);
        let mut z = precond(&r);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        loop {
            if residuals.last().unwrap() <= &problem.tolerance || norm(&r) <= 1e-15 * b_norm {
                break;
            }
            if iterations == problem.max_iterations {
                return Err(Error::CgExhausted {
                    iterations,
                    residual: *residuals.last().unwrap(),
                });
            }
            let q = problem.apply_modal(&p);
            let pq = dot(&p, &q);
            if !(pq > 0.0) {
                return Err(Error::Solver(format!("HUM operator not positive along search direction ({pq:.3e})")));
            }
            let step = rz / pq;
            for i in 0..2 * k {
                x[i] += step * p[i];
                r[i] -= step * q[i];
            }
            iterations += 1;
            residuals.push(mismatch(&r) / scale);
            objective.push(-0.5 * x.iter().zip(b.iter().zip(&r)).map(|(xi, (bi, ri))| xi * (bi + ri)).sum::<f64>());
            z = precond(&r);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..2 * k {
                p[i] = z[i] + beta * p[i];
            }
        }
    }
    let control = problem.control_for(&x);
    let (filtered, full) = closed_loop_ratios(problem, &control, e0)?;
    let cost = control_cost_trace(&control, problem.op.grid().face_measure());
    Ok(HUMResult {
        sigma: problem.split(&x),
        sigma_modal: x,
        control,
        iterations,
        residual_history: residuals,
        objective_history: objective,
        energy0: e0,
        terminal_ratio: filtered,
        terminal_ratio_unfiltered: full,
        cost,
        gamma: problem.gamma,
        modes: k,
        horizon: problem.horizon,
        dt: problem.dt,
        steps: problem.steps,
        face_measure: problem.op.grid().face_measure(),
    })
}

impl HUMProblem<'_> {
    fn data_modal(&self) -> Vec<f64> {
        self.modal(&self.data)
    }
}

/// Forward run from the target data under `control`; returns the terminal
/// energy ratios of the filtered projection and of the full state.
fn closed_loop_ratios(problem: &HUMProblem, control: &ControlTrace, e0: f64) -> Result<(f64, f64)> {
    if e0 == 0.0 {
        return Ok((0.0, 0.0));
    }
    let sol = solve_controlled(
        problem.op,
        control,
        &problem.support,
        &problem.data,
        Direction::Forward,
        problem.horizon,
        problem.dt,
        SolveOptions::with_states(),
    )?;
    let end = sol.final_state().expect("states kept");
    let terminal = DataPair::new(end.displacement.clone(), end.velocity.clone());
    let filtered = problem.modal_energy(&problem.modal(&terminal));
    let full = *sol.energy.values.last().unwrap();
    Ok((filtered / e0, full / e0))
}

/// Re-simulate the stored control from the problem data and report the
/// filtered terminal energy ratio.
pub fn verify_control(problem: &HUMProblem, result: &HUMResult) -> Result<f64> {
    let e0 = problem.modal_energy(&problem.data_modal());
    Ok(closed_loop_ratios(problem, &result.control, e0)?.0)
}

fn control_cost_trace(control: &ControlTrace, face_measure: f64) -> f64 {
    let samples = control.values.len();
    if samples < 2 {
        return 0.0;
    }
    let w = trapezoid_weights(samples, control.times[1] - control.times[0]);
    control
        .values
        .iter()
        .zip(&w)
        .map(|(u, wj)| wj * dot(u, u))
        .sum::<f64>()
        * face_measure
}

/// int int_{Sigma_0} u^2, trapezoidal in time.
pub fn control_cost(result: &HUMResult) -> f64 {
    control_cost_trace(&result.control, result.face_measure)
}

/// Solve the dense system Lambda x = b by LU with partial pivoting.
pub fn dense_solve(dense: &[f64], rhs: &[f64]) -> Vec<f64> {
    let m = rhs.len();
    let a = faer::Mat::<f64>::from_fn(m, m, |i, j| dense[i * m + j]);
    let b = faer::Mat::<f64>::from_fn(m, 1, |i, _| rhs[i]);
    let x = a.partial_piv_lu().solve(&b);
    (0..m).map(|i| x[(i, 0)]).collect()
}
