use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use infgame::field::{ScalarField, SmoothField};
use infgame::geometry::{Domain, Grid, GridFunction};
use infgame::isaacs::{lambda_bounded, lambda_inf, IsaacsQuery, OperatorTolerances, Side};
use infgame::linalg::SymMatrix;
use infgame::sdg::{mc_paths, summarize, Game, SimOptions, StrategySpec};
use infgame::tugofwar::{dpp_residual, solve_tow_with, SolveOptions, TowProblem, TowSolution};
use infgame::verify::{exact_solution, viscosity_residual, FdField};
use infgame::isaacs::ControlAtom;
use rayon::prelude::*;
use serde_json::json;

use crate::config::{
    output_stem, section, ExperimentConfig, ProblemConfig, SideChoice, SolverConfig,
    StrategyConfig, ValueSource,
};
use crate::fail::{Failure, Status};
use crate::output::{num, with_suffix, write_atomic, write_json};

fn grid_for(problem: &ProblemConfig, spacing: f64, layer: Option<f64>) -> Result<Arc<Grid>, Failure> {
    let domain = problem.domain()?;
    Ok(Arc::new(Grid::with_boundary_layer(domain, spacing, layer.unwrap_or(spacing))?))
}

fn solve_on(problem: &ProblemConfig, solver: &SolverConfig, eps: f64, spacing: f64) -> Result<(TowProblem, TowSolution), Failure> {
    let layer = solver.boundary_layer.map(|l| l * spacing / solver.spacing());
    let grid = grid_for(problem, spacing, layer)?;
    let dim = grid.dim();
    let prob = TowProblem::new(
        grid,
        eps,
        &*problem.h_field(dim)?,
        &*problem.g_field(dim)?,
        solver.moves,
    )?;
    let opts = SolveOptions::new(solver.tol, solver.max_sweeps).with_relaxation(solver.relaxation);
    let sol = solve_tow_with(&prob, &opts)?;
    Ok((prob, sol))
}

fn csv_bytes(values: &GridFunction) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    values.write_csv(&mut buf)?;
    Ok(buf)
}

/// Fills every defaulted field so the echoed config reproduces the run.
fn resolved(cfg: &ExperimentConfig, command: &str) -> Result<serde_json::Value, Failure> {
    let mut cfg = cfg.clone();
    if let Some(s) = cfg.solver.as_mut() {
        let spacing = s.spacing();
        s.spacing = Some(spacing);
        s.boundary_layer = Some(s.boundary_layer.unwrap_or(spacing));
    }
    if let (Some(sim), Some(problem)) = (cfg.simulate.as_mut(), cfg.problem.as_ref()) {
        let domain = problem.domain()?;
        sim.t_max = Some(sim.t_max.unwrap_or_else(|| 50.0 * domain.diameter().powi(2)));
    }
    if cfg.output.prefix.is_none() {
        cfg.output.prefix = Some(command.to_string());
    }
    serde_json::to_value(&cfg).map_err(|e| Failure::runtime(e.to_string()))
}

pub fn solve(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let problem = section(&cfg.problem, "problem")?;
    let solver = section(&cfg.solver, "solver")?;
    let start = Instant::now();
    let (prob, sol) = solve_on(problem, solver, solver.eps, solver.spacing())?;
    let wall_time = start.elapsed().as_secs_f64();
    let residual = dpp_residual(&sol.values, &prob)?;
    let stem = output_stem(cfg, "solve");
    write_atomic(&with_suffix(&stem, ".csv"), &csv_bytes(&sol.values)?)?;
    write_json(
        &with_suffix(&stem, ".json"),
        &json!({
            "eps": sol.eps,
            "spacing": prob.grid().spacing(),
            "nodes": prob.grid().len(),
            "sweeps": sol.sweeps,
            "residual": sol.final_residual,
            "dpp_residual": residual,
            "wall_time": wall_time,
            "config": resolved(cfg, "solve")?,
        }),
    )
}

pub fn isaacs(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let ic = section(&cfg.isaacs, "isaacs")?;
    let m = ic.p.len();
    if m == 0 || ic.s.len() != m * m {
        return Err(Failure::invalid(format!(
            "isaacs: p has {} entries, so S needs {} row-major entries, got {}",
            m,
            m * m,
            ic.s.len()
        )));
    }
    if ic.n_max == 0 {
        return Err(Failure::invalid("isaacs.n_max must be at least 1"));
    }
    let s = SymMatrix::from_row_major(m, &ic.s)?;
    let tols = OperatorTolerances::default();
    let limit = lambda_inf(&ic.p, &s, tols.tol_grad, tols.tol_iso(&s))?;
    let rows: Vec<(usize, Option<f64>, Option<f64>)> = (1..=ic.n_max)
        .into_par_iter()
        .map(|n| {
            let q = IsaacsQuery::new(ic.p.clone(), s.clone(), ic.k * n as f64, ic.l * n as f64)?;
            let plus = match ic.side {
                SideChoice::Minus => None,
                _ => Some(lambda_bounded(&q, Side::Plus)?.value),
            };
            let minus = match ic.side {
                SideChoice::Plus => None,
                _ => Some(lambda_bounded(&q, Side::Minus)?.value),
            };
            Ok((n, plus, minus))
        })
        .collect::<Result<_, infgame::Error>>()?;
    let cell = |v: Option<f64>| v.map(num).unwrap_or_default();
    let mut text = String::from("n,lambda_plus,lambda_minus,lambda_limit\n");
    for (n, plus, minus) in &rows {
        let _ = writeln!(text, "{n},{},{},{}", cell(*plus), cell(*minus), num(limit));
    }
    let stem = output_stem(cfg, "isaacs");
    write_atomic(&with_suffix(&stem, ".csv"), text.as_bytes())?;
    if let Some(tol) = ic.diag_tol {
        let (_, plus, minus) = rows[rows.len() - 1];
        let gap = [plus, minus]
            .iter()
            .flatten()
            .map(|v| (v - limit).abs())
            .fold(0.0, f64::max);
        if gap > tol {
            return Err(Failure::new(
                Status::NotConverged,
                format!("isaacs: gap {gap:.3e} at n = {} exceeds diag_tol {tol:e}", ic.n_max),
            ));
        }
    }
    Ok(())
}

fn value_field(cfg: &ExperimentConfig, source: &ValueSource, domain: &Domain) -> Result<Arc<dyn SmoothField>, Failure> {
    match source {
        ValueSource::Exact { oracle } => {
            let u = exact_solution(oracle.clone())?;
            if u.domain() != domain {
                return Err(Failure::invalid("simulate.value: oracle domain differs from problem.domain"));
            }
            Ok(u.u_field())
        }
        ValueSource::Solution { path, fd_step } => {
            let problem = section(&cfg.problem, "problem")?;
            let solver = section(&cfg.solver, "solver")?;
            let grid = grid_for(problem, solver.spacing(), solver.boundary_layer)?;
            let u = read_solution(grid, path)?;
            let step = fd_step.unwrap_or(4.0 * solver.spacing());
            Ok(Arc::new(FdField::new(Arc::new(u), step)?))
        }
    }
}

fn read_solution(grid: Arc<Grid>, path: &Path) -> Result<GridFunction, Failure> {
    let file = std::fs::File::open(path).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
    GridFunction::read_csv(grid, file).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

fn strategy(
    cfg: &ExperimentConfig,
    sc: &StrategyConfig,
    maximizer: bool,
    domain: &Domain,
    x0: &[f64],
) -> Result<StrategySpec, Failure> {
    let sim = section(&cfg.simulate, "simulate")?;
    Ok(match sc {
        StrategyConfig::Constant { a, c } => StrategySpec::constant(ControlAtom::new(a.clone(), *c)?, *c)?,
        StrategyConfig::NearOptimal { bound } => {
            let source = sim
                .value
                .as_ref()
                .ok_or_else(|| Failure::invalid("near_optimal strategies need simulate.value"))?;
            let u = value_field(cfg, source, domain)?;
            if maximizer {
                StrategySpec::near_optimal_max(u, *bound)?
            } else {
                StrategySpec::near_optimal_min(u, *bound)?
            }
        }
        StrategyConfig::ExitForcing { anchor, c0 } => {
            StrategySpec::exit_forcing(domain, anchor.clone().unwrap_or_else(|| x0.to_vec()), *c0)?
        }
    })
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let problem = section(&cfg.problem, "problem")?;
    let sim = section(&cfg.simulate, "simulate")?;
    let domain = problem.domain()?;
    let dim = domain.dim();
    let game = Game::new(domain.clone(), problem.h_field(dim)?, problem.g_field(dim)?)?;
    let smax = strategy(cfg, &sim.strategy_max, true, &domain, &sim.x0)?;
    let smin = strategy(cfg, &sim.strategy_min, false, &domain, &sim.x0)?;
    let mut opts = SimOptions::new(sim.dt).with_gamma(sim.gamma).with_bridge(sim.bridge);
    if let Some(t) = sim.t_max {
        opts = opts.with_t_max(t);
    }
    let start = Instant::now();
    let records = mc_paths(&game, &sim.x0, &smax, &smin, sim.n_paths, &opts, sim.seed)?;
    let est = summarize(&records);
    let wall_time = start.elapsed().as_secs_f64();
    let stem = output_stem(cfg, "simulate");
    if cfg.output.paths_csv {
        let mut text = String::from("path_id,exit_time,payoff,censored\n");
        for r in &records {
            let _ = writeln!(
                text,
                "{},{},{},{}",
                r.path_id,
                if r.censored { "inf".to_string() } else { num(r.exit_time) },
                r.payoff.map(num).unwrap_or_default(),
                u8::from(r.censored)
            );
        }
        write_atomic(&with_suffix(&stem, "_paths.csv"), text.as_bytes())?;
    }
    write_json(
        &with_suffix(&stem, ".json"),
        &json!({
            "mean": est.mean,
            "std_error": est.std_error,
            "exit_fraction": est.exit_fraction,
            "mean_exit_time": est.mean_exit_time,
            "mean_sq_max_displacement": est.mean_sq_max_displacement,
            "n_paths": est.n_paths,
            "censored": est.censored,
            "reliable": est.reliable,
            "seed": sim.seed,
            "wall_time": wall_time,
            "config": resolved(cfg, "simulate")?,
        }),
    )?;
    if !est.reliable {
        eprintln!(
            "warning: only {:.1}% of paths exited before t_max; the estimate is unreliable",
            100.0 * est.exit_fraction
        );
    }
    Ok(())
}

/// Interior nodes of `grid` at least `margin` inside, thinned evenly to at
/// most `count`.
fn sample_nodes(grid: &Grid, margin: f64, count: usize) -> Vec<Vec<f64>> {
    let all: Vec<usize> = grid
        .interior_nodes()
        .filter(|&k| grid.domain().level(grid.node(k)) >= margin)
        .collect();
    if all.len() <= count {
        return all.iter().map(|&k| grid.node(k).to_vec()).collect();
    }
    (0..count)
        .map(|i| grid.node(all[i * all.len() / count]).to_vec())
        .collect()
}

pub fn verify(cfg: &ExperimentConfig, solution: Option<&Path>) -> Result<(), Failure> {
    let vc = section(&cfg.verify, "verify")?;
    let tols = OperatorTolerances::default();
    let (u, h, domain, spacing): (Arc<dyn ScalarField>, Arc<dyn ScalarField>, Domain, f64) =
        match (solution.or(vc.solution.as_deref()), &vc.oracle) {
            (Some(path), _) => {
                let problem = section(&cfg.problem, "problem")?;
                let solver = section(&cfg.solver, "solver")?;
                let grid = grid_for(problem, solver.spacing(), solver.boundary_layer)?;
                let dim = grid.dim();
                let u = read_solution(grid.clone(), path)?;
                (Arc::new(u), problem.h_field(dim)?, grid.domain().clone(), solver.spacing())
            }
            (None, Some(oracle)) => {
                let u = exact_solution(oracle.clone())?;
                let domain = u.domain().clone();
                let spacing = cfg
                    .solver
                    .as_ref()
                    .map(|s| s.spacing())
                    .unwrap_or(domain.thickness() / 64.0);
                (Arc::new(u.clone()), u.h_field(), domain, spacing)
            }
            (None, None) => {
                return Err(Failure::invalid(
                    "verify needs --solution, verify.solution or verify.oracle",
                ))
            }
        };
    let step = vc.step.unwrap_or(4.0 * spacing);
    let sampling = Grid::new(domain.clone(), spacing)?;
    // Diagonal stencil points sit up to √2 · step away from the sample.
    let samples = sample_nodes(&sampling, 1.5 * step, vc.sample_count);
    if samples.is_empty() {
        return Err(Failure::invalid(format!("no sample nodes lie {step} inside the domain")));
    }
    let stats = viscosity_residual(&*u, &*h, &domain, step, &samples, &tols, vc.skip_policy)?;
    let mut echo = cfg.clone();
    if let Some(v) = echo.verify.as_mut() {
        v.step = Some(step);
        if let Some(p) = solution {
            v.solution = Some(p.to_path_buf());
        }
    }
    write_json(
        &with_suffix(&output_stem(cfg, "verify"), ".json"),
        &json!({
            "max_residual": stats.max_residual,
            "mean_abs_residual": stats.mean_abs_residual,
            "skipped": stats.skipped,
            "evaluated": stats.evaluated,
            "step": stats.step,
            "skip_policy": stats.skip_policy,
            "config": resolved(&echo, "verify")?,
        }),
    )
}

pub fn converge(cfg: &ExperimentConfig) -> Result<(), Failure> {
    let problem = section(&cfg.problem, "problem")?;
    let solver = section(&cfg.solver, "solver")?;
    let cc = section(&cfg.converge, "converge")?;
    let levels: Vec<(TowProblem, TowSolution)> = cc
        .eps
        .par_iter()
        .map(|&eps| solve_on(problem, solver, eps, eps / cc.refine))
        .collect::<Result<_, Failure>>()?;
    let errors: Vec<f64> = match &cc.oracle {
        Some(spec) => {
            let u = exact_solution(spec.clone())?;
            levels
                .iter()
                .map(|(prob, sol)| {
                    let g = prob.grid();
                    (0..g.len())
                        .map(|k| (sol.values.get(k) - u.value(g.node(k))).abs())
                        .fold(0.0, f64::max)
                })
                .collect()
        }
        None => {
            let finest = (0..levels.len())
                .min_by(|&a, &b| cc.eps[a].total_cmp(&cc.eps[b]))
                .unwrap();
            let reference = &levels[finest].1.values;
            levels
                .iter()
                .map(|(prob, sol)| {
                    let g = prob.grid();
                    (0..g.len())
                        .map(|k| (sol.values.get(k) - reference.interpolate(g.node(k))).abs())
                        .fold(0.0, f64::max)
                })
                .collect()
        }
    };
    let mut text = String::from("eps,spacing,sup_error,sweeps\n");
    let mut rows = Vec::new();
    for ((prob, sol), err) in levels.iter().zip(&errors) {
        let _ = writeln!(text, "{},{},{},{}", num(sol.eps), num(prob.grid().spacing()), num(*err), sol.sweeps);
        rows.push(json!({"eps": sol.eps, "spacing": prob.grid().spacing(), "sup_error": err, "sweeps": sol.sweeps}));
    }
    let stem = output_stem(cfg, "converge");
    write_atomic(&with_suffix(&stem, ".csv"), text.as_bytes())?;
    write_json(
        &with_suffix(&stem, ".json"),
        &json!({
            "reference": if cc.oracle.is_some() { "oracle" } else { "finest" },
            "rows": rows,
            "config": resolved(cfg, "converge")?,
        }),
    )
}
