//! Observability experiments: the controlled boundary portion, boundary flux
//! integrals, quotient-versus-constant checks, the epsilon -> 0 approximation
//! sweep and the constant-multiplier identity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{BoundaryNode, Grid};
use crate::linalg::dot;
use crate::operator::{assemble_operator, gradient_energy_in_ball, OperatorMatrix};
use crate::quadrature::ball_volume;
use crate::spectral::{synthesize, EigenBasis};
use crate::wave::{
    cfl_limit, flux_distance, l2q_distance, solve_leapfrog, solve_spectral, trapezoid_weights,
    BoundaryFluxTrace, DataPair, Forcing, Solution, SolveOptions,
};
use crate::weight::{constants, weight_measure, WeightParams};

/// Relative slack granted to continuum inequalities checked on the grid.
pub const DISCRETE_SLACK: f64 = 0.05;
/// Default mode filter sqrt(lambda) h <= gamma.
pub const DEFAULT_GAMMA: f64 = 0.5;

/// Indices of boundary nodes with x . nu > 0.
pub fn gamma0(grid: &Grid) -> Result<Vec<usize>> {
    gamma0_of(grid.boundary_nodes())
}

pub fn gamma0_of(nodes: &[BoundaryNode]) -> Result<Vec<usize>> {
    let idx: Vec<usize> = nodes
        .iter()
        .enumerate()
        .filter(|(_, b)| b.radial_normal() > 0.0)
        .map(|(i, _)| i)
        .collect();
    if idx.is_empty() {
        return Err(Error::EmptyBoundary);
    }
    Ok(idx)
}

/// Membership mask of a node subset.
pub fn subset_mask(count: usize, subset: &[usize]) -> Vec<bool> {
    let mut m = vec![false; count];
    for &i in subset {
        m[i] = true;
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FluxKind {
    /// dphi/dnu
    Plain,
    /// w dphi/dnu
    Weighted,
}

/// Trapezoidal-in-time, h^{N-1}-in-space integral of the squared flux over
/// the given boundary nodes.
pub fn flux_integral(trace: &BoundaryFluxTrace, subset: &[usize], face_measure: f64, kind: FluxKind) -> f64 {
    let values = match kind {
        FluxKind::Plain => &trace.flux,
        FluxKind::Weighted => &trace.weighted,
    };
    if trace.times.len() < 2 {
        return 0.0;
    }
    let w = trapezoid_weights(trace.times.len(), trace.times[1] - trace.times[0]);
    values
        .iter()
        .zip(&w)
        .map(|(f, wj)| wj * subset.iter().map(|&i| f[i] * f[i]).sum::<f64>())
        .sum::<f64>()
        * face_measure
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObservabilitySetup {
    pub horizon: f64,
    pub gamma: f64,
    /// Keep at most this many of the filtered modes.
    pub modes: Option<usize>,
    pub steps: usize,
    pub slack: f64,
}

impl ObservabilitySetup {
    pub fn new(horizon: f64) -> Self {
        ObservabilitySetup {
            horizon,
            gamma: DEFAULT_GAMMA,
            modes: None,
            steps: 4000,
            slack: DISCRETE_SLACK,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataGenerator {
    /// phi0 = Phi_k, phi1 = 0 (k counts from 0 within the filtered span).
    Mode(usize),
    /// Uniform random coefficients on the filtered modes, both components.
    Random { seed: u64, draws: usize },
    /// Caller data, projected onto the filtered span.
    Given(DataPair),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservabilityReport {
    pub alpha: f64,
    pub epsilon: f64,
    pub dimension: usize,
    pub n: usize,
    pub horizon: f64,
    pub gamma: f64,
    pub modes: usize,
    pub steps: usize,
    pub slack: f64,
    pub t_star: f64,
    pub energy0: f64,
    pub flux_integral: f64,
    pub quotient: f64,
    /// 2 (aT - 2b) / (theta M^{2 alpha})
    pub predicted_bound: f64,
    pub weighted_flux_integral: f64,
    pub weighted_quotient: f64,
    /// 2 (aT - 2b) / theta
    pub weighted_bound: f64,
    pub pass: bool,
    pub pass_with_slack: bool,
    pub weighted_pass_with_slack: bool,
}

/// Run the homogeneous system from each generated datum with the spectral
/// solver on the filtered span and compare the Gamma_0 flux quotients with
/// the predicted observability constants.
pub fn observability_experiment(
    op: &OperatorMatrix,
    basis: &EigenBasis,
    setup: &ObservabilitySetup,
    generator: &DataGenerator,
) -> Result<Vec<ObservabilityReport>> {
    let params = op
        .params()
        .ok_or_else(|| Error::InvalidParameter("experiment needs a weight-defined operator".into()))?;
    let grid = op.grid();
    let k = constants(params, grid)?;
    if setup.horizon <= k.t_star {
        return Err(Error::HorizonTooShort {
            t: setup.horizon,
            t_star: k.t_star,
        });
    }
    let mut span = basis.filtered(grid.spacing(), setup.gamma);
    if let Some(m) = setup.modes {
        span = span.truncated(m);
    }
    if span.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "no modes pass the filter sqrt(lambda) h <= {}",
            setup.gamma
        )));
    }
    let data: Vec<DataPair> = match generator {
        DataGenerator::Mode(i) => {
            if *i >= span.len() {
                return Err(Error::InvalidParameter(format!(
                    "mode {i} outside the {} filtered modes",
                    span.len()
                )));
            }
            vec![DataPair::new(span.vector(*i).to_vec(), vec![0.0; op.size()])]
        }
        DataGenerator::Random { seed, draws } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            (0..*draws)
                .map(|_| {
                    let c: Vec<f64> = (0..span.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let d: Vec<f64> = (0..span.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    DataPair::new(synthesize(&span, &c), synthesize(&span, &d))
                })
                .collect()
        }
        DataGenerator::Given(d) => vec![d.clone()],
    };
    let subset = gamma0(grid)?;
    let face = grid.face_measure();
    let bound = k.unweighted_constant(setup.horizon, params.alpha);
    let wbound = k.weighted_constant(setup.horizon);
    let mut out = Vec::with_capacity(data.len());
    for d in &data {
        let sol = solve_spectral(op, &span, d, &Forcing::Zero, setup.horizon, setup.steps, SolveOptions::default())?;
        let e0 = sol.energy.values[0];
        let fi = flux_integral(&sol.flux, &subset, face, FluxKind::Plain);
        let wi = flux_integral(&sol.flux, &subset, face, FluxKind::Weighted);
        let (q, wq) = if e0 > 0.0 { (fi / e0, wi / e0) } else { (0.0, 0.0) };
        out.push(ObservabilityReport {
            alpha: params.alpha,
            epsilon: params.epsilon,
            dimension: grid.dimension(),
            n: grid.nodes_per_axis(),
            horizon: setup.horizon,
            gamma: setup.gamma,
            modes: span.len(),
            steps: setup.steps,
            slack: setup.slack,
            t_star: k.t_star,
            energy0: e0,
            flux_integral: fi,
            quotient: q,
            predicted_bound: bound,
            weighted_flux_integral: wi,
            weighted_quotient: wq,
            weighted_bound: wbound,
            pass: q >= bound,
            pass_with_slack: q >= (1.0 - setup.slack) * bound,
            weighted_pass_with_slack: wq >= (1.0 - setup.slack) * wbound,
        });
    }
    Ok(out)
}

/// Smooth bump exp(1 - 1/(1 - |x - c|^2/r^2)) supported in B(c, r).
pub fn smooth_bump(grid: &Grid, center: &[f64], radius: f64) -> Vec<f64> {
    grid.sample(|x| {
        let s: f64 = x
            .iter()
            .zip(center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / (radius * radius);
        if s < 1.0 {
            (1.0 - 1.0 / (1.0 - s)).exp()
        } else {
            0.0
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    /// ||phi_eps - phi||_{L^2(Q)}
    pub solution_distance: f64,
    /// ||dphi_eps/dnu - dphi/dnu||_{L^2(dQ)}
    pub flux_distance: f64,
    /// E_eps(0) - E(0)
    pub energy_gap: f64,
    /// 2 eps^alpha int_{B_eps} |grad phi0|^2
    pub energy_gap_bound: f64,
    /// w_eps(B_eps)
    pub measure: f64,
    /// eps^alpha vol(B_eps)
    pub measure_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproximationSweep {
    pub alpha: f64,
    pub n: usize,
    pub horizon: f64,
    pub dt: f64,
    pub energy0: f64,
    pub rows: Vec<SweepRow>,
}

impl ApproximationSweep {
    /// Rows ordered by decreasing epsilon.
    fn ordered(&self) -> Vec<&SweepRow> {
        let mut r: Vec<&SweepRow> = self.rows.iter().collect();
        r.sort_by(|a, b| b.epsilon.partial_cmp(&a.epsilon).unwrap());
        r
    }

    pub fn distances_nonincreasing(&self) -> bool {
        self.ordered()
            .windows(2)
            .all(|p| p[1].solution_distance <= p[0].solution_distance && p[1].flux_distance <= p[0].flux_distance)
    }

    pub fn energy_bounds_hold(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.energy_gap >= -1e-14 * self.energy0.abs() && r.energy_gap <= r.energy_gap_bound)
    }

    pub fn measure_bounds_hold(&self) -> bool {
        self.rows.iter().all(|r| r.measure <= r.measure_bound)
    }
}

/// Leapfrog runs of the regularized systems and the degenerate one on a
/// shared time grid from the same data (zero initial velocity), compared in
/// L^2(Q) and on the boundary.
pub fn approximation_sweep(
    alpha: f64,
    grid: &Grid,
    horizon: f64,
    data: &[f64],
    epsilons: &[f64],
) -> Result<ApproximationSweep> {
    let h = grid.spacing();
    if epsilons.is_empty() {
        return Err(Error::InvalidParameter("empty epsilon list".into()));
    }
    let base = WeightParams::new(alpha, 0.0, grid.dimension(), grid.half_width(), r0_for(grid))?;
    if let Some(e) = epsilons.iter().find(|e| **e < h) {
        return Err(Error::InvalidParameter(format!(
            "epsilon = {e} below the grid spacing h = {h}"
        )));
    }
    let raw = assemble_operator(grid, &base)?;
    let regs: Vec<OperatorMatrix> = epsilons
        .iter()
        .map(|e| assemble_operator(grid, &base.sweep_epsilon(*e)?))
        .collect::<Result<_>>()?;
    let dt = regs
        .iter()
        .map(cfl_limit)
        .fold(cfl_limit(&raw), f64::min);
    let init = DataPair::new(data.to_vec(), vec![0.0; data.len()]);
    let opts = SolveOptions::with_states();
    let reference = solve_leapfrog(&raw, &init, &Forcing::Zero, horizon, dt, opts)?;
    let e_raw = 0.5 * raw.energy_form(data);
    let mut rows = Vec::with_capacity(epsilons.len());
    for (eps, op) in epsilons.iter().zip(&regs) {
        let sol = solve_leapfrog(op, &init, &Forcing::Zero, horizon, dt, opts)?;
        let (_, measure) = weight_measure(op.params().unwrap(), *eps)?;
        rows.push(SweepRow {
            epsilon: *eps,
            solution_distance: l2q_distance(&sol, &reference)?,
            flux_distance: flux_distance(&sol.flux, &reference.flux, grid.face_measure()),
            energy_gap: 0.5 * op.energy_form(data) - e_raw,
            energy_gap_bound: 2.0 * eps.powf(alpha) * gradient_energy_in_ball(grid, data, *eps),
            measure,
            measure_bound: eps.powf(alpha) * ball_volume(grid.dimension(), *eps),
        });
    }
    Ok(ApproximationSweep {
        alpha,
        n: grid.nodes_per_axis(),
        horizon,
        dt: reference.dt(),
        energy0: e_raw,
        rows,
    })
}

/// Degeneracy radius used for a grid: R0 = 0.12 L, which keeps 8 R0 < L.
fn r0_for(grid: &Grid) -> f64 {
    0.12 * grid.half_width()
}

#[derive(Debug, Clone, PartialEq)]
pub enum MultiplierField {
    Constant(f64),
    /// Nodal values; accepted only when all equal.
    Nodal(Vec<f64>),
}

/// Relative mismatch in
/// P int_0^T (||phi_t||^2 - <A phi, phi>) dt = P [<phi_t, phi>]_0^T
/// for a homogeneous solution. Modal trajectories are used when present.
pub fn multiplier_identity_residual(op: &OperatorMatrix, solution: &Solution, p: &MultiplierField) -> Result<f64> {
    let p = match p {
        MultiplierField::Constant(c) => *c,
        MultiplierField::Nodal(v) => {
            let c = *v.first().ok_or_else(|| Error::InvalidParameter("empty multiplier field".into()))?;
            if v.iter().any(|x| *x != c) {
                return Err(Error::InvalidParameter("nonconstant multiplier field".into()));
            }
            c
        }
    };
    if !matches!(solution.forcing, Forcing::Zero) {
        return Err(Error::InvalidParameter("identity requires f = 0".into()));
    }
    let samples = solution.times.len();
    let w = trapezoid_weights(samples, solution.dt());
    let (lhs, rhs) = if !solution.modes.is_empty() {
        let mut l = 0.0;
        let mut r = 0.0;
        for m in &solution.modes {
            for j in 0..samples {
                l += w[j] * (m.velocity[j].powi(2) - m.lambda * m.displacement[j].powi(2));
            }
            r += m.velocity[samples - 1] * m.displacement[samples - 1] - m.velocity[0] * m.displacement[0];
        }
        (l, r)
    } else {
        let states = solution
            .states
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("solution was computed without states".into()))?;
        let cell = solution.cell_volume;
        let mut l = 0.0;
        for (st, wj) in states.iter().zip(&w) {
            l += wj * (cell * dot(&st.velocity, &st.velocity) - op.energy_form(&st.displacement));
        }
        let (a, b) = (&states[0], &states[samples - 1]);
        let r = cell * (dot(&b.velocity, &b.displacement) - dot(&a.velocity, &a.displacement));
        (l, r)
    };
    let (lhs, rhs) = (p * lhs, p * rhs);
    let scale = lhs.abs().max(rhs.abs());
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok((lhs - rhs).abs() / scale)
}

/// Closed forms for one mode d = A cos(wt) + B sin(wt), w^2 = lambda:
/// (int_0^T (d'^2 - lambda d^2) dt, d'(T) d(T) - d'(0) d(0)).
pub fn mode_identity_closed_form(lambda: f64, d0: f64, v0: f64, horizon: f64) -> (f64, f64) {
    let w = lambda.sqrt();
    let (a, b) = (d0, v0 / w);
    let (s2, c2) = (2.0 * w * horizon).sin_cos();
    let integral = 0.5 * w * ((b * b - a * a) * s2 - 2.0 * a * b * (1.0 - c2));
    let (s, c) = (w * horizon).sin_cos();
    let d = a * c + b * s;
    let dv = w * (-a * s + b * c);
    (integral, dv * d - v0 * d0)
}
