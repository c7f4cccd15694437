//! Semi-discrete wave solvers: exact-in-time spectral Galerkin and
//! central-difference (leapfrog) time stepping, with and without Dirichlet
//! boundary control, plus the weak-form residual.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot};
use crate::operator::{boundary_node_weights, normal_flux, OperatorMatrix};
use crate::spectral::{project, synthesize, EigenBasis};

/// CFL safety factor applied to the stability limit 2 / sqrt(lambda_max).
pub const CFL_SAFETY: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct WaveState {
    pub t: f64,
    pub displacement: Vec<f64>,
    pub velocity: Vec<f64>,
}

/// Displacement/velocity pair used for initial, terminal and adjoint data.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPair {
    pub displacement: Vec<f64>,
    pub velocity: Vec<f64>,
}

impl DataPair {
    pub fn new(displacement: Vec<f64>, velocity: Vec<f64>) -> Self {
        DataPair {
            displacement,
            velocity,
        }
    }

    pub fn zeros(n: usize) -> Self {
        DataPair::new(vec![0.0; n], vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.displacement.len()
    }

    pub fn is_empty(&self) -> bool {
        self.displacement.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeTrajectory {
    pub index: usize,
    pub lambda: f64,
    pub displacement: Vec<f64>,
    pub velocity: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyTrace {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl EnergyTrace {
    /// max_k |E(t_k) - E(0)| / E(0)
    pub fn max_relative_drift(&self) -> f64 {
        let e0 = self.values[0];
        if e0 == 0.0 {
            return 0.0;
        }
        self.values
            .iter()
            .map(|e| (e - e0).abs() / e0)
            .fold(0.0, f64::max)
    }
}

/// Per-time, per-boundary-node normal derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFluxTrace {
    pub times: Vec<f64>,
    /// dphi/dnu
    pub flux: Vec<Vec<f64>>,
    /// w(x_b) dphi/dnu
    pub weighted: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Forcing {
    Zero,
    /// Time-constant interior vector.
    Constant(Vec<f64>),
    /// One interior vector per time sample (steps + 1 entries).
    Sampled(Vec<Vec<f64>>),
}

impl Forcing {
    fn check(&self, n: usize, samples: usize) -> Result<()> {
        match self {
            Forcing::Zero => Ok(()),
            Forcing::Constant(f) if f.len() != n => Err(Error::DimensionMismatch {
                what: "forcing vector",
                expected: n,
                got: f.len(),
            }),
            Forcing::Constant(_) => Ok(()),
            Forcing::Sampled(s) => {
                if s.len() != samples {
                    return Err(Error::DimensionMismatch {
                        what: "forcing samples",
                        expected: samples,
                        got: s.len(),
                    });
                }
                match s.iter().find(|v| v.len() != n) {
                    Some(v) => Err(Error::DimensionMismatch {
                        what: "forcing vector",
                        expected: n,
                        got: v.len(),
                    }),
                    None => Ok(()),
                }
            }
        }
    }

    fn at(&self, level: usize) -> Option<&[f64]> {
        match self {
            Forcing::Zero => None,
            Forcing::Constant(f) => Some(f),
            Forcing::Sampled(s) => Some(&s[level]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SolveOptions {
    /// Store displacement and velocity at every time sample.
    pub keep_states: bool,
}

impl SolveOptions {
    pub fn with_states() -> Self {
        SolveOptions { keep_states: true }
    }
}

/// Output of every solver.
#[derive(Debug, Clone)]
pub struct Solution {
    pub times: Vec<f64>,
    pub states: Option<Vec<WaveState>>,
    /// Populated by the spectral solver only.
    pub modes: Vec<ModeTrajectory>,
    pub energy: EnergyTrace,
    pub flux: BoundaryFluxTrace,
    /// Initial data actually evolved (projected onto the basis for spectral runs).
    pub initial: DataPair,
    pub forcing: Forcing,
    pub cell_volume: f64,
}

impl Solution {
    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn final_state(&self) -> Option<&WaveState> {
        self.states.as_ref().and_then(|s| s.last())
    }

    fn require_states(&self) -> Result<&[WaveState]> {
        self.states
            .as_deref()
            .ok_or_else(|| Error::InvalidParameter("solution was computed without states".into()))
    }
}

/// Trapezoidal weights on a uniform grid of `samples` points.
pub fn trapezoid_weights(samples: usize, dt: f64) -> Vec<f64> {
    let mut w = vec![dt; samples];
    w[0] = 0.5 * dt;
    w[samples - 1] = 0.5 * dt;
    w
}

fn uniform_times(horizon: f64, steps: usize) -> Vec<f64> {
    (0..=steps)
        .map(|k| horizon * k as f64 / steps as f64)
        .collect()
}

fn check_horizon(horizon: f64, steps: usize) -> Result<()> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter(format!("T must be positive, got {horizon}")));
    }
    if steps < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 time steps, got {steps}")));
    }
    Ok(())
}

fn check_len(what: &'static str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::DimensionMismatch {
            what,
            expected: n,
            got: v.len(),
        });
    }
    Ok(())
}

/// Spectral Galerkin solve: every mode integrated in closed form, with
/// Duhamel's integral by cumulative trapezoidal sums for sampled forcing.
pub fn solve_spectral(
    op: &OperatorMatrix,
    basis: &EigenBasis,
    data: &DataPair,
    forcing: &Forcing,
    horizon: f64,
    steps: usize,
    opts: SolveOptions,
) -> Result<Solution> {
    check_horizon(horizon, steps)?;
    let n = op.size();
    check_len("initial displacement", &data.displacement, n)?;
    check_len("initial velocity", &data.velocity, n)?;
    forcing.check(n, steps + 1)?;
    if let Some(l) = basis.values().iter().find(|l| !(**l > 0.0)) {
        return Err(Error::InvalidParameter(format!("basis eigenvalue {l} is not positive")));
    }
    let times = uniform_times(horizon, steps);
    let dt = horizon / steps as f64;
    let d0 = project(basis, &data.displacement);
    let v0 = project(basis, &data.velocity);
    let modal_forcing: Vec<Vec<f64>> = match forcing {
        Forcing::Zero => Vec::new(),
        Forcing::Constant(f) => vec![project(basis, f)],
        Forcing::Sampled(s) => s.iter().map(|f| project(basis, f)).collect(),
    };

    let mut modes = Vec::with_capacity(basis.len());
    for (k, &lambda) in basis.values().iter().enumerate() {
        let omega = lambda.sqrt();
        let mut disp = Vec::with_capacity(steps + 1);
        let mut vel = Vec::with_capacity(steps + 1);
        let (mut cum_c, mut cum_s) = (0.0, 0.0);
        let (mut prev_c, mut prev_s) = (0.0, 0.0);
        for (j, &t) in times.iter().enumerate() {
            let (s, c) = (omega * t).sin_cos();
            let mut d = d0[k] * c + v0[k] * s / omega;
            let mut v = -d0[k] * omega * s + v0[k] * c;
            match forcing {
                Forcing::Zero => {}
                Forcing::Constant(_) => {
                    let fk = modal_forcing[0][k];
                    d += fk / lambda * (1.0 - c);
                    v += fk / omega * s;
                }
                Forcing::Sampled(_) => {
                    let fk = modal_forcing[j][k];
                    let (gc, gs) = (c * fk, s * fk);
                    if j > 0 {
                        cum_c += 0.5 * dt * (prev_c + gc);
                        cum_s += 0.5 * dt * (prev_s + gs);
                    }
                    prev_c = gc;
                    prev_s = gs;
                    d += (s * cum_c - c * cum_s) / omega;
                    v += c * cum_c + s * cum_s;
                }
            }
            disp.push(d);
            vel.push(v);
        }
        modes.push(ModeTrajectory {
            index: k,
            lambda,
            displacement: disp,
            velocity: vel,
        });
    }

    let energy = EnergyTrace {
        times: times.clone(),
        values: (0..=steps)
            .map(|j| {
                0.5 * modes
                    .iter()
                    .map(|m| m.velocity[j].powi(2) + m.lambda * m.displacement[j].powi(2))
                    .sum::<f64>()
            })
            .collect(),
    };

    let grid = op.grid();
    let mode_flux: Vec<Vec<f64>> = basis
        .vectors()
        .iter()
        .map(|v| normal_flux(grid, v, None))
        .collect();
    let node_w = node_weights(op);
    let mut flux = Vec::with_capacity(steps + 1);
    let mut weighted = Vec::with_capacity(steps + 1);
    for j in 0..=steps {
        let mut f = vec![0.0; grid.boundary_count()];
        for (m, mf) in modes.iter().zip(&mode_flux) {
            axpy(m.displacement[j], mf, &mut f);
        }
        weighted.push(f.iter().zip(&node_w).map(|(a, b)| a * b).collect());
        flux.push(f);
    }

    let states = opts.keep_states.then(|| {
        (0..=steps)
            .map(|j| {
                let dj: Vec<f64> = modes.iter().map(|m| m.displacement[j]).collect();
                let vj: Vec<f64> = modes.iter().map(|m| m.velocity[j]).collect();
                WaveState {
                    t: times[j],
                    displacement: synthesize(basis, &dj),
                    velocity: synthesize(basis, &vj),
                }
            })
            .collect()
    });

    let projected_forcing = match forcing {
        Forcing::Zero => Forcing::Zero,
        Forcing::Constant(_) => Forcing::Constant(synthesize(basis, &modal_forcing[0])),
        Forcing::Sampled(_) => {
            Forcing::Sampled(modal_forcing.iter().map(|c| synthesize(basis, c)).collect())
        }
    };

    Ok(Solution {
        times: times.clone(),
        states,
        modes,
        energy,
        flux: BoundaryFluxTrace {
            times,
            flux,
            weighted,
        },
        initial: DataPair::new(synthesize(basis, &d0), synthesize(basis, &v0)),
        forcing: projected_forcing,
        cell_volume: grid.cell_volume(),
    })
}

fn node_weights(op: &OperatorMatrix) -> Vec<f64> {
    match op.params() {
        Some(p) => boundary_node_weights(op.grid(), p),
        None => vec![1.0; op.grid().boundary_count()],
    }
}

/// Largest dt allowed: CFL_SAFETY * 2 / sqrt(lambda_max estimate).
pub fn cfl_limit(op: &OperatorMatrix) -> f64 {
    CFL_SAFETY * 2.0 / op.lambda_max_estimate().sqrt()
}

/// Number of uniform steps covering [0, T] with spacing at most `dt`.
pub fn steps_for(horizon: f64, dt: f64) -> usize {
    ((horizon / dt) - 1e-9).ceil().max(1.0) as usize
}

fn check_cfl(op: &OperatorMatrix, dt: f64) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    if dt > cfl_limit(op) {
        return Err(Error::Cfl {
            dt,
            lambda_max: op.lambda_max_estimate(),
        });
    }
    Ok(())
}

/// Central-difference integration over `steps` uniform steps of signed size
/// `tau`, starting from level `start` (0 going forward, `steps` going
/// backward). The first step is the Taylor half-step
/// y_1 = y_0 + tau v_0 + tau^2/2 (s_0 - A y_0); the velocity at the far end
/// is the exact inverse of that formula, so a reversed run retraces the
/// forward one. `source(level, buf)` writes the right-hand side at a level
/// into `buf` and returns false if it is zero. `observe(level, y, v, Ay)` is
/// called once per level in integration order.
pub(crate) fn integrate<S, O>(
    op: &OperatorMatrix,
    start: &DataPair,
    steps: usize,
    tau: f64,
    mut source: S,
    mut observe: O,
) -> DataPair
where
    S: FnMut(usize, &mut [f64]) -> bool,
    O: FnMut(usize, &[f64], &[f64], &[f64]),
{
    let n = op.size();
    let backward = tau < 0.0;
    let level = |k: usize| if backward { steps - k } else { k };
    let mut src = vec![0.0; n];
    let mut ay = vec![0.0; n];
    let mut prev = start.displacement.clone();
    let mut cur = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut vel = vec![0.0; n];
    let tau2 = tau * tau;

    let has = source(level(0), &mut src);
    op.apply_into(&prev, &mut ay);
    observe(level(0), &prev, &start.velocity, &ay);
    for i in 0..n {
        let s = if has { src[i] } else { 0.0 };
        cur[i] = prev[i] + tau * start.velocity[i] + 0.5 * tau2 * (s - ay[i]);
    }
    for k in 1..steps {
        let has = source(level(k), &mut src);
        op.apply_into(&cur, &mut ay);
        for i in 0..n {
            let s = if has { src[i] } else { 0.0 };
            next[i] = 2.0 * cur[i] - prev[i] + tau2 * (s - ay[i]);
            vel[i] = (next[i] - prev[i]) / (2.0 * tau);
        }
        observe(level(k), &cur, &vel, &ay);
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
    }
    let has = source(level(steps), &mut src);
    op.apply_into(&cur, &mut ay);
    for i in 0..n {
        let s = if has { src[i] } else { 0.0 };
        vel[i] = (cur[i] - prev[i] + 0.5 * tau2 * (s - ay[i])) / tau;
    }
    observe(level(steps), &cur, &vel, &ay);
    DataPair::new(cur, vel)
}

struct Recorder<'a> {
    op: &'a OperatorMatrix,
    keep_states: bool,
    times: Vec<f64>,
    states: Vec<Option<WaveState>>,
    energy: Vec<f64>,
    flux: Vec<Vec<f64>>,
    weighted: Vec<Vec<f64>>,
    node_w: Vec<f64>,
    /// Boundary values per level (controlled runs), None for homogeneous.
    trace: Option<&'a [Vec<f64>]>,
}

impl<'a> Recorder<'a> {
    fn new(op: &'a OperatorMatrix, horizon: f64, steps: usize, keep: bool) -> Self {
        Recorder {
            op,
            keep_states: keep,
            times: uniform_times(horizon, steps),
            states: vec![None; steps + 1],
            energy: vec![0.0; steps + 1],
            flux: vec![Vec::new(); steps + 1],
            weighted: vec![Vec::new(); steps + 1],
            node_w: node_weights(op),
            trace: None,
        }
    }

    fn observe(&mut self, level: usize, y: &[f64], v: &[f64], ay: &[f64]) {
        let grid = self.op.grid();
        let cell = grid.cell_volume();
        self.energy[level] = 0.5 * cell * (dot(v, v) + dot(y, ay));
        let mut f = normal_flux(grid, y, None);
        if let Some(trace) = self.trace {
            let h = grid.spacing();
            for (fi, u) in f.iter_mut().zip(&trace[level]) {
                *fi += 3.0 * u / (2.0 * h);
            }
        }
        self.weighted[level] = f.iter().zip(&self.node_w).map(|(a, b)| a * b).collect();
        self.flux[level] = f;
        if self.keep_states {
            self.states[level] = Some(WaveState {
                t: self.times[level],
                displacement: y.to_vec(),
                velocity: v.to_vec(),
            });
        }
    }

    fn finish(self, initial: DataPair, forcing: Forcing) -> Solution {
        let states = if self.keep_states {
            Some(self.states.into_iter().map(|s| s.unwrap()).collect())
        } else {
            None
        };
        Solution {
            times: self.times.clone(),
            states,
            modes: Vec::new(),
            energy: EnergyTrace {
                times: self.times.clone(),
                values: self.energy,
            },
            flux: BoundaryFluxTrace {
                times: self.times,
                flux: self.flux,
                weighted: self.weighted,
            },
            initial,
            forcing,
            cell_volume: self.op.grid().cell_volume(),
        }
    }
}

/// Leapfrog solve of y'' + A_h y = f from (phi0, phi1) on [0, T] with step
/// at most `dt` (the step is shrunk so that it divides T).
pub fn solve_leapfrog(
    op: &OperatorMatrix,
    data: &DataPair,
    forcing: &Forcing,
    horizon: f64,
    dt: f64,
    opts: SolveOptions,
) -> Result<Solution> {
    check_cfl(op, dt)?;
    let steps = steps_for(horizon, dt);
    check_horizon(horizon, steps.max(2))?;
    let steps = steps.max(2);
    let n = op.size();
    check_len("initial displacement", &data.displacement, n)?;
    check_len("initial velocity", &data.velocity, n)?;
    forcing.check(n, steps + 1)?;
    let tau = horizon / steps as f64;
    let mut rec = Recorder::new(op, horizon, steps, opts.keep_states);
    integrate(
        op,
        data,
        steps,
        tau,
        |level, buf| match forcing.at(level) {
            Some(f) => {
                buf.copy_from_slice(f);
                true
            }
            None => false,
        },
        |level, y, v, ay| rec.observe(level, y, v, ay),
    );
    Ok(rec.finish(data.clone(), forcing.clone()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    /// From initial data at t = 0.
    Forward,
    /// From terminal data at t = T.
    Backward,
}

/// Dirichlet control sampled per time level: `values[level][boundary node]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlTrace {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl ControlTrace {
    pub fn zeros(horizon: f64, steps: usize, nodes: usize) -> Self {
        ControlTrace {
            times: uniform_times(horizon, steps),
            values: vec![vec![0.0; nodes]; steps + 1],
        }
    }

    pub fn steps(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    pub fn horizon(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }
}

/// Validate a control trace against the solver grid and the support set.
pub fn check_control(op: &OperatorMatrix, control: &ControlTrace, support: &[bool]) -> Result<()> {
    let nb = op.grid().boundary_count();
    check_len("control support mask", &vec![0.0; support.len()], nb)?;
    if control.values.len() < 3 || control.times.len() != control.values.len() {
        return Err(Error::InvalidParameter(
            "control must be sampled on at least 3 uniform time levels".into(),
        ));
    }
    for v in &control.values {
        check_len("control trace", v, nb)?;
        if v.iter().zip(support).any(|(u, on)| !on && *u != 0.0) {
            return Err(Error::InvalidParameter(
                "control is nonzero outside the controlled boundary portion".into(),
            ));
        }
    }
    Ok(())
}

/// Leapfrog solve of y'' + A_h y = lift(u(t)) with Dirichlet data `u` on the
/// boundary. `end` is the initial pair (forward) or terminal pair (backward).
/// The time grid is the control's; `dt` must match it.
#[allow(clippy::too_many_arguments)]
pub fn solve_controlled(
    op: &OperatorMatrix,
    control: &ControlTrace,
    support: &[bool],
    end: &DataPair,
    direction: Direction,
    horizon: f64,
    dt: f64,
    opts: SolveOptions,
) -> Result<Solution> {
    check_cfl(op, dt)?;
    let steps = steps_for(horizon, dt);
    if control.steps() != steps || (control.horizon() - horizon).abs() > 1e-12 * horizon {
        return Err(Error::DimensionMismatch {
            what: "control time levels",
            expected: steps + 1,
            got: control.values.len(),
        });
    }
    check_control(op, control, support)?;
    let n = op.size();
    check_len("end displacement", &end.displacement, n)?;
    check_len("end velocity", &end.velocity, n)?;
    let tau = horizon / steps as f64;
    let mut rec = Recorder::new(op, horizon, steps, opts.keep_states);
    rec.trace = Some(&control.values);
    let signed = match direction {
        Direction::Forward => tau,
        Direction::Backward => -tau,
    };
    integrate(
        op,
        end,
        steps,
        signed,
        |level, buf| {
            let u = &control.values[level];
            if u.iter().all(|x| *x == 0.0) {
                return false;
            }
            op.boundary_lift_into(u, buf).expect("length checked");
            true
        },
        |level, y, v, ay| rec.observe(level, y, v, ay),
    );
    let forcing = Forcing::Zero;
    let initial = match direction {
        Direction::Forward => end.clone(),
        Direction::Backward => {
            let s = rec.states[0].clone();
            match s {
                Some(s) => DataPair::new(s.displacement, s.velocity),
                None => DataPair::zeros(0),
            }
        }
    };
    Ok(rec.finish(initial, forcing))
}

/// Smooth separable test function s(t) v(x) with s(T) = s'(T) = 0.
pub struct SeparableTest {
    pub s: Box<dyn Fn(f64) -> f64>,
    pub ds: Box<dyn Fn(f64) -> f64>,
    pub dds: Box<dyn Fn(f64) -> f64>,
    pub v: Vec<f64>,
}

impl SeparableTest {
    /// s(t) = (T - t)^2.
    pub fn quadratic(horizon: f64, v: Vec<f64>) -> Self {
        SeparableTest {
            s: Box::new(move |t| (horizon - t).powi(2)),
            ds: Box::new(move |t| -2.0 * (horizon - t)),
            dds: Box::new(|_| 2.0),
            v,
        }
    }
}

/// Relative mismatch of the weak formulation
/// int int phi psi_tt + int int w grad phi . grad psi
///   = int int f psi + int phi1 psi(0) - int phi0 psi_t(0)
/// for psi = s(t) v(x), time integrals by the trapezoidal rule.
pub fn weak_residual(op: &OperatorMatrix, solution: &Solution, test: &SeparableTest) -> Result<f64> {
    let horizon = solution.horizon();
    let scale = (test.s)(0.0).abs().max((test.ds)(0.0).abs()).max(1.0);
    if (test.s)(horizon).abs() > 1e-12 * scale || (test.ds)(horizon).abs() > 1e-12 * scale {
        return Err(Error::InvalidParameter(
            "test function must satisfy s(T) = s'(T) = 0".into(),
        ));
    }
    let states = solution.require_states()?;
    check_len("test vector", &test.v, op.size())?;
    let cell = solution.cell_volume;
    let av = op.apply(&test.v);
    let w = trapezoid_weights(solution.times.len(), solution.dt());
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for (j, st) in states.iter().enumerate() {
        let t = st.t;
        lhs += w[j] * cell * ((test.dds)(t) * dot(&st.displacement, &test.v) + (test.s)(t) * dot(&st.displacement, &av));
        if let Some(f) = solution.forcing.at(j) {
            rhs += w[j] * cell * (test.s)(t) * dot(f, &test.v);
        }
    }
    rhs += cell * ((test.s)(0.0) * dot(&solution.initial.velocity, &test.v)
        - (test.ds)(0.0) * dot(&solution.initial.displacement, &test.v));
    Ok((lhs - rhs).abs() / (lhs.abs() + rhs.abs() + 1e-300))
}

/// sqrt(int_0^T ||phi_a - phi_b||^2_h dt) on a shared time grid.
pub fn l2q_distance(a: &Solution, b: &Solution) -> Result<f64> {
    let (sa, sb) = (a.require_states()?, b.require_states()?);
    if sa.len() != sb.len() {
        return Err(Error::DimensionMismatch {
            what: "time levels",
            expected: sa.len(),
            got: sb.len(),
        });
    }
    let w = trapezoid_weights(sa.len(), a.dt());
    let total: f64 = sa
        .iter()
        .zip(sb)
        .zip(&w)
        .map(|((x, y), wj)| {
            let d: f64 = x
                .displacement
                .iter()
                .zip(&y.displacement)
                .map(|(p, q)| (p - q) * (p - q))
                .sum();
            wj * a.cell_volume * d
        })
        .sum();
    Ok(total.sqrt())
}

/// sqrt(int_0^T int_dOmega (flux_a - flux_b)^2) with face measure h^{N-1}.
pub fn flux_distance(a: &BoundaryFluxTrace, b: &BoundaryFluxTrace, face_measure: f64) -> f64 {
    let dt = a.times[1] - a.times[0];
    let w = trapezoid_weights(a.times.len(), dt);
    a.flux
        .iter()
        .zip(&b.flux)
        .zip(&w)
        .map(|((x, y), wj)| {
            wj * face_measure * x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>()
        })
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::operator::assemble_operator;
    use crate::spectral::{compute_eigs, EigenBasis};
    use crate::weight::WeightParams;

    fn setup(n: usize) -> (OperatorMatrix, EigenBasis) {
        let op = assemble_operator(
            &Grid::new(2, n, 1.0).unwrap(),
            &WeightParams::unit_square(1.0, 0.1).unwrap(),
        )
        .unwrap();
        let basis = compute_eigs(&op, op.size()).unwrap();
        (op, basis)
    }

    fn bump(op: &OperatorMatrix) -> DataPair {
        let g = op.grid();
        let d = g.sample(|x| (1.0 - x[0] * x[0]) * (1.0 - x[1] * x[1]) * (1.0 + x[0]));
        let v = g.sample(|x| (1.0 - x[0] * x[0]) * (1.0 - x[1] * x[1]) * x[1]);
        DataPair::new(d, v)
    }

    #[test]
    fn spectral_energy_is_conserved() {
        let (op, basis) = setup(9);
        let sol = solve_spectral(&op, &basis, &bump(&op), &Forcing::Zero, 3.0, 60, SolveOptions::default()).unwrap();
        assert!(sol.energy.max_relative_drift() < 1e-10);
    }

    #[test]
    fn spectral_rejects_bad_input() {
        let (op, basis) = setup(5);
        let data = bump(&op);
        assert!(solve_spectral(&op, &basis, &data, &Forcing::Zero, 1.0, 1, SolveOptions::default()).is_err());
        assert!(solve_spectral(&op, &basis, &data, &Forcing::Zero, 0.0, 10, SolveOptions::default()).is_err());
        let short = DataPair::zeros(3);
        assert!(solve_spectral(&op, &basis, &short, &Forcing::Zero, 1.0, 10, SolveOptions::default()).is_err());
    }

    #[test]
    fn sampled_constant_forcing_matches_closed_form() {
        let (op, basis) = setup(7);
        let f = op.grid().sample(|x| 1.0 + x[0]);
        let data = DataPair::zeros(op.size());
        let steps = 400;
        let closed = solve_spectral(&op, &basis, &data, &Forcing::Constant(f.clone()), 2.0, steps, SolveOptions::with_states()).unwrap();
        let sampled = solve_spectral(&op, &basis, &data, &Forcing::Sampled(vec![f; steps + 1]), 2.0, steps, SolveOptions::with_states()).unwrap();
        let a = &closed.final_state().unwrap().displacement;
        let b = &sampled.final_state().unwrap().displacement;
        let err = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let scale = a.iter().map(|x| x.abs()).fold(0.0, f64::max);
        assert!(err < 1e-3 * scale, "{err} vs {scale}");
        // y'' + lambda y = f, y(0) = y'(0) = 0 gives y = f/lambda (1 - cos)
        let m = &closed.modes[0];
        let fk = project(&basis, &closed_forcing(&closed))[0];
        let t = 2.0;
        let expect = fk / m.lambda * (1.0 - (m.lambda.sqrt() * t).cos());
        assert!((m.displacement[steps] - expect).abs() < 1e-12 * expect.abs().max(1.0));
    }

    fn closed_forcing(s: &Solution) -> Vec<f64> {
        match &s.forcing {
            Forcing::Constant(f) => f.clone(),
            _ => unreachable!(),
        }
    }

    #[test]
    fn leapfrog_is_second_order() {
        let (op, basis) = setup(7);
        let data = bump(&op);
        let t = 1.0;
        let exact = solve_spectral(&op, &basis, &data, &Forcing::Zero, t, 4, SolveOptions::with_states()).unwrap();
        let ex = &exact.final_state().unwrap().displacement;
        let limit = cfl_limit(&op);
        let errs: Vec<f64> = [1.0, 0.5, 0.25]
            .iter()
            .map(|s| {
                let sol = solve_leapfrog(&op, &data, &Forcing::Zero, t, limit * s, SolveOptions::with_states()).unwrap();
                let y = &sol.final_state().unwrap().displacement;
                op.grid().l2_norm(&y.iter().zip(ex).map(|(a, b)| a - b).collect::<Vec<_>>())
            })
            .collect();
        let r1 = errs[1] / errs[2];
        assert!(r1 > 3.0 && r1 < 5.0, "{errs:?}");
    }

    #[test]
    fn leapfrog_energy_drift_is_small() {
        let (op, _) = setup(9);
        let sol = solve_leapfrog(&op, &bump(&op), &Forcing::Zero, 4.0, 0.2 * cfl_limit(&op), SolveOptions::default()).unwrap();
        assert!(sol.energy.max_relative_drift() < 1e-2, "{}", sol.energy.max_relative_drift());
    }

    #[test]
    fn leapfrog_rejects_cfl_violation() {
        let (op, _) = setup(5);
        let err = solve_leapfrog(&op, &bump(&op), &Forcing::Zero, 1.0, 1.2 * cfl_limit(&op), SolveOptions::default());
        assert!(matches!(err, Err(Error::Cfl { .. })));
    }

    #[test]
    fn backward_run_retraces_forward_run() {
        let (op, _) = setup(7);
        let data = bump(&op);
        let dt = 0.5 * cfl_limit(&op);
        let t = 1.3;
        let steps = steps_for(t, dt);
        let nb = op.grid().boundary_count();
        let mut control = ControlTrace::zeros(t, steps, nb);
        for (j, u) in control.values.iter_mut().enumerate() {
            u[0] = (j as f64 * 0.1).sin();
        }
        let support = vec![true; nb];
        let fwd = solve_controlled(&op, &control, &support, &data, Direction::Forward, t, dt, SolveOptions::with_states()).unwrap();
        let end = fwd.final_state().unwrap();
        let terminal = DataPair::new(end.displacement.clone(), end.velocity.clone());
        let back = solve_controlled(&op, &control, &support, &terminal, Direction::Backward, t, dt, SolveOptions::with_states()).unwrap();
        let start = &back.states.as_ref().unwrap()[0];
        let err = start.displacement.iter().zip(&data.displacement).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
            + start.velocity.iter().zip(&data.velocity).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn control_off_support_is_rejected() {
        let (op, _) = setup(5);
        let dt = 0.5 * cfl_limit(&op);
        let steps = steps_for(1.0, dt);
        let nb = op.grid().boundary_count();
        let mut control = ControlTrace::zeros(1.0, steps, nb);
        control.values[3][0] = 1.0;
        let mut support = vec![true; nb];
        support[0] = false;
        let r = solve_controlled(&op, &control, &support, &DataPair::zeros(op.size()), Direction::Forward, 1.0, dt, SolveOptions::default());
        assert!(r.is_err());
        let other = assemble_operator(&Grid::new(2, 6, 1.0).unwrap(), &WeightParams::unit_square(1.0, 0.1).unwrap()).unwrap();
        let support = vec![true; nb];
        let r = solve_controlled(&other, &control, &support, &DataPair::zeros(other.size()), Direction::Forward, 1.0, dt, SolveOptions::default());
        assert!(r.is_err());
    }

    #[test]
    fn truncated_galerkin_energy_is_monotone() {
        let (op, basis) = setup(7);
        let data = bump(&op);
        let mut last = 0.0;
        for m in [1, 4, 10, 25, 49] {
            let sol = solve_spectral(&op, &basis.truncated(m), &data, &Forcing::Zero, 1.0, 10, SolveOptions::default()).unwrap();
            let e = sol.energy.values[0];
            assert!(e >= last - 1e-14);
            last = e;
        }
        let full = 0.5 * (op.grid().dot(&data.velocity, &data.velocity) + op.energy_form(&data.displacement));
        assert!((last - full).abs() < 1e-10 * full);
    }

    #[test]
    fn weak_residual_vanishes_for_spectral_solution() {
        let (op, basis) = setup(7);
        let data = bump(&op);
        let t = 1.5;
        let f = op.grid().sample(|x| x[0] * x[1]);
        let sol = solve_spectral(&op, &basis, &data, &Forcing::Constant(f), t, 2000, SolveOptions::with_states()).unwrap();
        let v = op.grid().sample(|x| (1.0 - x[0] * x[0]) * (1.0 - x[1] * x[1]));
        let r = weak_residual(&op, &sol, &SeparableTest::quadratic(t, v.clone())).unwrap();
        assert!(r < 1e-5, "{r}");
        let bad = SeparableTest {
            s: Box::new(|_| 1.0),
            ds: Box::new(|_| 0.0),
            dds: Box::new(|_| 0.0),
            v,
        };
        assert!(weak_residual(&op, &sol, &bad).is_err());
    }
}
