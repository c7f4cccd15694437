//! Subcommand bodies.

use degenwave_core::hum::{control_cost, hum_solve, verify_control, HUMProblem};
use degenwave_core::observability::{
    approximation_sweep, flux_integral, gamma0, observability_experiment, smooth_bump,
    DataGenerator, FluxKind, ObservabilityReport, ObservabilitySetup,
};
use degenwave_core::spectral::{compute_eigs_with, EigenRoute};
use degenwave_core::verify::{run_criterion, Workspace, FULL, QUICK};
use degenwave_core::wave::{
    cfl_limit, solve_leapfrog, solve_spectral, DataPair, Forcing, Solution, SolveOptions,
};
use degenwave_core::{
    assemble_operator, constants as multiplier_constants, EigenBasis, Grid, OperatorMatrix,
};
use serde::Serialize;

use crate::config::{basis_key, RunConfig};
use crate::output::{
    config_comment, gnuplot, load_basis, num, save_basis, save_json, write_atomic, Csv,
};
use crate::CliError;

fn setup(cfg: &RunConfig) -> Result<(Grid, OperatorMatrix), CliError> {
    let grid = Grid::new(cfg.dimension, cfg.n, cfg.half_width)?;
    let op = assemble_operator(&grid, &cfg.weight_params()?)?;
    Ok((grid, op))
}

enum BasisRequest {
    Lowest(usize),
    /// Every mode with sqrt(lambda) h <= gamma, plus the first one above.
    Filter(f64),
}

fn basis_for(
    cfg: &RunConfig,
    op: &OperatorMatrix,
    request: BasisRequest,
) -> Result<EigenBasis, CliError> {
    let tag = match request {
        BasisRequest::Lowest(m) => format!("lowest={m}"),
        BasisRequest::Filter(g) => format!("filter={g:e}"),
    };
    let path = cfg
        .out
        .join("cache")
        .join(format!("basis-{}.txt", basis_key(cfg, &tag)));
    if cfg.cache {
        if let Some(b) = load_basis(&path, cfg, op.grid().cell_volume()) {
            return Ok(b);
        }
    }
    let size = op.size();
    let h = op.grid().spacing();
    let basis = match request {
        BasisRequest::Lowest(m) => {
            if m > size {
                return Err(CliError::Config(format!(
                    "modes = {m} exceeds the {size} interior nodes"
                )));
            }
            let route = if 4 * m <= size {
                EigenRoute::Lanczos
            } else {
                EigenRoute::Auto
            };
            compute_eigs_with(op, m, route)?
        }
        BasisRequest::Filter(gamma) => {
            let mut m = 64.min(size);
            loop {
                let route = if 4 * m <= size {
                    EigenRoute::Lanczos
                } else {
                    EigenRoute::Auto
                };
                let b = compute_eigs_with(op, m, route)?;
                let kept = b.filtered(h, gamma).len();
                if kept < b.len() || m == size {
                    break b.truncated((kept + 1).min(b.len()));
                }
                m = if 4 * (2 * m) > size { size } else { 2 * m };
            }
        }
    };
    if cfg.cache {
        save_basis(&path, cfg, &basis)?;
    }
    Ok(basis)
}

pub fn constants(cfg: &RunConfig) -> Result<(), CliError> {
    let (grid, _) = setup(cfg)?;
    let params = cfg.weight_params()?;
    let k = multiplier_constants(&params, &grid)?;
    #[derive(Serialize)]
    struct Table {
        a: f64,
        hat_a: f64,
        b: f64,
        c: f64,
        #[serde(rename = "P")]
        p: f64,
        theta: f64,
        t_star: f64,
        m: f64,
        weighted_constant: Option<f64>,
        unweighted_constant: Option<f64>,
    }
    let t = Table {
        a: k.a,
        hat_a: k.hat_a,
        b: k.b,
        c: k.c,
        p: k.p,
        theta: k.theta,
        t_star: k.t_star,
        m: k.m,
        weighted_constant: cfg.horizon.map(|t| k.weighted_constant(t)),
        unweighted_constant: cfg.horizon.map(|t| k.unweighted_constant(t, cfg.alpha)),
    };
    println!("a = {}", t.a);
    println!("hat_a = {}", t.hat_a);
    println!("b = {}", t.b);
    println!("c = {}", t.c);
    println!("P = {}", t.p);
    println!("theta = {}", t.theta);
    println!("T* = {}", t.t_star);
    println!("M = {}", t.m);
    if let (Some(w), Some(u)) = (t.weighted_constant, t.unweighted_constant) {
        println!("weighted constant (T = {}) = {w}", cfg.horizon.unwrap());
        println!("unweighted constant (T = {}) = {u}", cfg.horizon.unwrap());
    }
    save_json(cfg, "constants.json", &t)?;
    Ok(())
}

pub fn eigen(cfg: &RunConfig, export_matrix: bool) -> Result<(), CliError> {
    let (_, op) = setup(cfg)?;
    let m = cfg.modes.unwrap_or(20);
    let basis = basis_for(cfg, &op, BasisRequest::Lowest(m))?;
    let mut csv = Csv::new(cfg, &["index", "lambda", "residual"]);
    for (i, (l, r)) in basis.values().iter().zip(basis.residuals()).enumerate() {
        csv.row(&[(i + 1).to_string(), num(*l), num(*r)]);
    }
    csv.save(&cfg.out.join("eigenvalues.csv"))?;
    if export_matrix {
        let mut text = config_comment(cfg);
        text.push_str(&op.to_coordinate_text());
        write_atomic(&cfg.out.join("operator.coo.txt"), &text)?;
    }
    println!(
        "lambda_1 = {}, lambda_{m} = {}",
        basis.values()[0],
        basis.values()[m - 1]
    );
    Ok(())
}

fn trace_outputs(cfg: &RunConfig, sol: &Solution) -> Result<(), CliError> {
    let mut energy = Csv::new(cfg, &["t", "energy"]);
    for (t, e) in sol.energy.times.iter().zip(&sol.energy.values) {
        energy.row(&[num(*t), num(*e)]);
    }
    energy.save(&cfg.out.join("energy.csv"))?;
    let mut flux = Csv::new(cfg, &["t", "node", "flux", "weighted_flux"]);
    for (j, t) in sol.flux.times.iter().enumerate() {
        for (b, (f, w)) in sol.flux.flux[j]
            .iter()
            .zip(&sol.flux.weighted[j])
            .enumerate()
        {
            flux.row(&[num(*t), b.to_string(), num(*f), num(*w)]);
        }
    }
    flux.save(&cfg.out.join("flux.csv"))
}

pub fn simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let (grid, op) = setup(cfg)?;
    let horizon = cfg.horizon.unwrap_or(2.0);
    let data = DataPair::new(
        smooth_bump(&grid, &vec![0.0; grid.dimension()], 0.5 * cfg.half_width),
        vec![0.0; op.size()],
    );
    let sol = match cfg.solver.as_str() {
        "spectral" => {
            let basis = basis_for(cfg, &op, BasisRequest::Lowest(cfg.modes.unwrap_or(100)))?;
            solve_spectral(
                &op,
                &basis,
                &data,
                &Forcing::Zero,
                horizon,
                cfg.steps.unwrap_or(400),
                SolveOptions::default(),
            )?
        }
        _ => {
            let dt = match (cfg.dt, cfg.steps) {
                (Some(dt), _) => dt,
                (None, Some(s)) => horizon / s as f64,
                (None, None) => 0.5 * cfl_limit(&op),
            };
            solve_leapfrog(
                &op,
                &data,
                &Forcing::Zero,
                horizon,
                dt,
                SolveOptions::default(),
            )?
        }
    };
    trace_outputs(cfg, &sol)?;
    let subset = gamma0(&grid)?;
    #[derive(Serialize)]
    struct Summary {
        solver: String,
        horizon: f64,
        dt: f64,
        steps: usize,
        energy0: f64,
        max_relative_energy_drift: f64,
        flux_integral: f64,
        weighted_flux_integral: f64,
    }
    let s = Summary {
        solver: cfg.solver.clone(),
        horizon,
        dt: sol.dt(),
        steps: sol.times.len() - 1,
        energy0: sol.energy.values[0],
        max_relative_energy_drift: sol.energy.max_relative_drift(),
        flux_integral: flux_integral(&sol.flux, &subset, grid.face_measure(), FluxKind::Plain),
        weighted_flux_integral: flux_integral(
            &sol.flux,
            &subset,
            grid.face_measure(),
            FluxKind::Weighted,
        ),
    };
    save_json(cfg, "simulate.json", &s)?;
    println!(
        "E(0) = {}, max relative energy drift = {}, flux integral = {}",
        s.energy0, s.max_relative_energy_drift, s.flux_integral
    );
    Ok(())
}

pub fn approx(cfg: &RunConfig) -> Result<(), CliError> {
    let grid = Grid::new(cfg.dimension, cfg.n, cfg.half_width)?;
    let horizon = cfg.horizon.unwrap_or(2.0);
    let bump = smooth_bump(&grid, &vec![0.0; grid.dimension()], 0.5 * cfg.half_width);
    let sweep = approximation_sweep(cfg.alpha, &grid, horizon, &bump, &cfg.epsilons)?;
    let mut csv = Csv::new(
        cfg,
        &[
            "epsilon",
            "solution_distance",
            "flux_distance",
            "energy_gap",
            "energy_gap_bound",
            "measure",
            "measure_bound",
        ],
    );
    for r in &sweep.rows {
        csv.row(&[
            num(r.epsilon),
            num(r.solution_distance),
            num(r.flux_distance),
            num(r.energy_gap),
            num(r.energy_gap_bound),
            num(r.measure),
            num(r.measure_bound),
        ]);
    }
    csv.save(&cfg.out.join("approx.csv"))?;
    #[derive(Serialize)]
    struct Report<'a> {
        sweep: &'a degenwave_core::observability::ApproximationSweep,
        distances_nonincreasing: bool,
        energy_bounds_hold: bool,
        measure_bounds_hold: bool,
    }
    save_json(
        cfg,
        "approx.json",
        &Report {
            sweep: &sweep,
            distances_nonincreasing: sweep.distances_nonincreasing(),
            energy_bounds_hold: sweep.energy_bounds_hold(),
            measure_bounds_hold: sweep.measure_bounds_hold(),
        },
    )?;
    write_atomic(
        &cfg.out.join("approx.gp"),
        &gnuplot(
            cfg,
            "approx.csv",
            "distance to the degenerate solution",
            "epsilon",
            "distance",
            &[(1, 2, "L2(Q)"), (1, 3, "boundary flux")],
            true,
        ),
    )?;
    for r in &sweep.rows {
        println!(
            "epsilon = {}: L2(Q) = {}, flux = {}",
            r.epsilon, r.solution_distance, r.flux_distance
        );
    }
    Ok(())
}

pub fn observe(cfg: &RunConfig) -> Result<(), CliError> {
    let (grid, op) = setup(cfg)?;
    let k = multiplier_constants(&cfg.weight_params()?, &grid)?;
    let horizons = if !cfg.horizons.is_empty() {
        cfg.horizons.clone()
    } else {
        vec![cfg.horizon.unwrap_or(1.25 * k.t_star)]
    };
    if let Some(t) = horizons.iter().find(|t| **t <= k.t_star) {
        return Err(CliError::Config(format!(
            "T = {t} must exceed T* = {}",
            k.t_star
        )));
    }
    let basis = match cfg.modes {
        Some(m) => basis_for(cfg, &op, BasisRequest::Lowest(m + 1))?,
        None => basis_for(cfg, &op, BasisRequest::Filter(cfg.gamma))?,
    };
    let mut reports: Vec<ObservabilityReport> = Vec::new();
    let mut csv = Csv::new(
        cfg,
        &[
            "T",
            "draw",
            "quotient",
            "predicted_bound",
            "weighted_quotient",
            "weighted_bound",
            "pass_with_slack",
        ],
    );
    for &t in &horizons {
        let mut s = ObservabilitySetup::new(t);
        s.gamma = cfg.gamma;
        s.modes = cfg.modes;
        s.slack = cfg.slack;
        if let Some(steps) = cfg.steps {
            s.steps = steps;
        }
        let mut batch = observability_experiment(&op, &basis, &s, &DataGenerator::Mode(0))?;
        batch.extend(observability_experiment(
            &op,
            &basis,
            &s,
            &DataGenerator::Random {
                seed: cfg.seed,
                draws: cfg.draws,
            },
        )?);
        for (i, r) in batch.iter().enumerate() {
            csv.row(&[
                num(t),
                i.to_string(),
                num(r.quotient),
                num(r.predicted_bound),
                num(r.weighted_quotient),
                num(r.weighted_bound),
                r.pass_with_slack.to_string(),
            ]);
        }
        let minq = batch
            .iter()
            .map(|r| r.quotient)
            .fold(f64::INFINITY, f64::min);
        let passed = batch.iter().filter(|r| r.pass_with_slack).count();
        println!(
            "T = {t}: min quotient = {minq}, predicted bound = {}, {passed}/{} pass with slack {} on {} modes",
            batch[0].predicted_bound,
            batch.len(),
            cfg.slack,
            batch[0].modes
        );
        reports.extend(batch);
    }
    csv.save(&cfg.out.join("observe.csv"))?;
    save_json(cfg, "observe.json", &reports)?;
    write_atomic(
        &cfg.out.join("observe.gp"),
        &gnuplot(
            cfg,
            "observe.csv",
            "observability quotient",
            "T",
            "quotient",
            &[(1, 3, "quotient"), (1, 4, "predicted bound")],
            false,
        ),
    )?;
    Ok(())
}

pub fn hum(cfg: &RunConfig) -> Result<(), CliError> {
    let (grid, op) = setup(cfg)?;
    let k = multiplier_constants(&cfg.weight_params()?, &grid)?;
    let horizon = cfg.horizon.unwrap_or(1.25 * k.t_star);
    if horizon <= k.t_star {
        return Err(CliError::Config(format!(
            "T = {horizon} must exceed T* = {}",
            k.t_star
        )));
    }
    let basis = basis_for(cfg, &op, BasisRequest::Filter(cfg.gamma))?;
    let data = DataPair::new(basis.vector(0).to_vec(), vec![0.0; op.size()]);
    let problem = HUMProblem::new(&op, &basis, &data, horizon, cfg.gamma)?;
    let result = hum_solve(&problem)?;
    let replay = verify_control(&problem, &result)?;
    let mut csv = Csv::new(cfg, &["t", "node", "u"]);
    for (t, u) in result.control.times.iter().zip(&result.control.values) {
        for (b, v) in u.iter().enumerate() {
            if problem.support()[b] {
                csv.row(&[num(*t), b.to_string(), num(*v)]);
            }
        }
    }
    csv.save(&cfg.out.join("control.csv"))?;
    #[derive(Serialize)]
    struct Report<'a> {
        hum: &'a degenwave_core::hum::HUMResult,
        control_cost: f64,
        replay_terminal_ratio: f64,
    }
    save_json(
        cfg,
        "hum.json",
        &Report {
            hum: &result,
            control_cost: control_cost(&result),
            replay_terminal_ratio: replay,
        },
    )?;
    println!(
        "E(T)/E(0) = {} after {} CG iterations on {} modes; control cost = {}",
        result.terminal_ratio,
        result.iterations,
        result.modes,
        control_cost(&result)
    );
    Ok(())
}

pub fn verify(cfg: &RunConfig, full: bool) -> Result<(), CliError> {
    let ws = Workspace::new();
    let ids: &[u32] = if full { &FULL } else { &QUICK };
    #[derive(Serialize)]
    struct Line {
        id: u32,
        name: &'static str,
        pass: bool,
        detail: String,
    }
    let mut lines = Vec::new();
    for &id in ids {
        let r = run_criterion(id, &ws);
        println!("{}", r.line());
        lines.push(Line {
            id: r.id,
            name: r.name,
            pass: r.pass,
            detail: r.detail,
        });
    }
    save_json(cfg, "verify.json", &lines)?;
    let failed: Vec<String> = lines
        .iter()
        .filter(|l| !l.pass)
        .map(|l| l.id.to_string())
        .collect();
    if failed.is_empty() {
        println!("all {} criteria pass", lines.len());
        Ok(())
    } else {
        Err(CliError::Verify(format!(
            "criteria {} failed",
            failed.join(", ")
        )))
    }
}
