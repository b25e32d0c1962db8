//! Command dispatch: turns a merged [`RunConfig`] into a [`Payload`].

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use anyhow::Result;
use nalgebra::DMatrix;
use qoc_core::analytic::*;
use qoc_core::grape::*;
use qoc_core::models::*;
use qoc_core::numerics::*;
use qoc_core::pontryagin::*;
use qoc_core::search::*;
use rayon::prelude::*;

use crate::config::*;
use crate::output::{Payload, Table};

/// A configuration problem found while dispatching (exit status 2).
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Usage(msg.into()))
}

pub fn run(cfg: &RunConfig) -> Result<Payload> {
    let command = cfg.command.ok_or_else(|| usage("no command given on the command line or in the config file"))?;
    match command {
        Command::Bands => bands(cfg),
        Command::Simulate => simulate(cfg),
        Command::Grape => grape(cfg),
        Command::Shoot => shoot(cfg),
        Command::Analytic => analytic(cfg),
        Command::Landscape => landscape(cfg),
        Command::Scan => scan(cfg),
        Command::Search => search(cfg),
    }
}

fn lattice(cfg: &RunConfig) -> Result<BecLattice> {
    let l = &cfg.lattice;
    Ok(BecLattice::new(l.s.unwrap_or(5.0), l.q.unwrap_or(0.0), l.n_max.unwrap_or(10))?)
}

fn bands(cfg: &RunConfig) -> Result<Payload> {
    let lat = lattice(cfg)?;
    let count = cfg.bands.bands.unwrap_or(3);
    let energies = band_structure(lat.s(), lat.q(), lat.n_max(), count)?;
    let mut out = Payload::default();
    let mut table = Table::new(["band", "energy"]);
    for (b, e) in energies.iter().enumerate() {
        out.scalar(&format!("E{b}"), e);
        table.push(vec![b as f64, *e]);
    }
    if energies.len() >= 2 {
        out.scalar("gap_01", energies[1] - energies[0]);
    }
    out.table("bands", table);
    Ok(out)
}

/// Model a GRAPE or simulation run acts on.
enum Model {
    TwoLevel { system: TwoLevelSystem, bounded: bool },
    Bec { system: BecSystem, lattice: BecLattice },
}

impl Model {
    fn from_config(name: Option<&str>, cfg: &RunConfig) -> Result<Self> {
        match name.unwrap_or("two-level") {
            "two-level" => {
                let t = &cfg.two_level;
                let (delta, u0) = (t.delta.unwrap_or(0.5), t.u0.unwrap_or(1.0));
                let bounded = t.bounded.unwrap_or(true);
                let system = if bounded {
                    TwoLevelSystem::with_drift(delta, u0)?
                } else {
                    TwoLevelSystem::new(delta, vec![(Axis::X, f64::INFINITY)])?
                };
                Ok(Model::TwoLevel { system, bounded })
            }
            "bec" => {
                let lattice = lattice(cfg)?;
                Ok(Model::Bec { system: BecSystem::new(lattice), lattice })
            }
            other => Err(usage(format!("unknown model `{other}` (expected two-level or bec)"))),
        }
    }

    fn system(&self) -> &dyn ControlSystem {
        match self {
            Model::TwoLevel { system, .. } => system,
            Model::Bec { system, .. } => system,
        }
    }

    fn bounds(&self) -> Option<ControlBounds> {
        match self {
            Model::TwoLevel { system, bounded: true } => Some(system.bounds()),
            _ => None,
        }
    }

    fn initial(&self) -> Result<ComplexVector> {
        match self {
            Model::TwoLevel { .. } => Ok(spin_up()),
            Model::Bec { lattice, .. } => Ok(plane_wave(lattice, 0)?),
        }
    }

    fn target(&self, spec: Option<&str>) -> Result<ComplexVector> {
        match self {
            Model::TwoLevel { .. } => match spec.unwrap_or("down") {
                "down" => Ok(spin_down()),
                "up" => Ok(spin_up()),
                other => Err(usage(format!("two-level target must be `down` or `up`, got `{other}`"))),
            },
            Model::Bec { lattice, .. } => bec_target(spec.unwrap_or("plane:2"), lattice),
        }
    }

    /// Time of the analytic optimum, a natural horizon for two-level runs.
    fn default_horizon(&self) -> f64 {
        match self {
            Model::TwoLevel { system, bounded } => {
                let u0 = if *bounded { system.channel_list()[0].1 } else { 1.0 };
                let delta = system.delta();
                if delta == 0.0 {
                    PI / u0
                } else {
                    2.0 * PI / (u0 * u0 + delta * delta).sqrt()
                }
            }
            Model::Bec { .. } => 7.6,
        }
    }

    fn default_steps(&self) -> usize {
        match self {
            Model::TwoLevel { .. } => 100,
            Model::Bec { .. } => 400,
        }
    }

    fn state_table(&self, grid: &TimeGrid, states: &[ComplexVector]) -> (&'static str, Table) {
        match self {
            Model::TwoLevel { .. } => ("trajectory", bloch_table(grid, states)),
            Model::Bec { lattice, .. } => {
                let mut cols = vec!["t".to_owned()];
                cols.extend((0..lattice.dim()).map(|i| format!("n_{}", lattice.momentum_index(i))));
                let mut t = Table::new(cols);
                for (n, psi) in states.iter().enumerate() {
                    let mut row = vec![n as f64 * grid.dt()];
                    row.extend(momentum_distribution(psi));
                    t.push(row);
                }
                ("populations", t)
            }
        }
    }
}

/// `plane:n` or `gaussian:x_c,p_c,xi`.
fn bec_target(spec: &str, lattice: &BecLattice) -> Result<ComplexVector> {
    let (kind, args) = spec.split_once(':').unwrap_or((spec, ""));
    let numbers = || -> Result<Vec<f64>> {
        args.split(',').map(|a| a.trim().parse::<f64>().map_err(|_| usage(format!("bad number `{a}` in target `{spec}`")))).collect()
    };
    match kind {
        "plane" => {
            let n: i64 = args.trim().parse().map_err(|_| usage(format!("plane-wave target needs an integer index, got `{spec}`")))?;
            Ok(plane_wave(lattice, n)?)
        }
        "gaussian" => match numbers()?.as_slice() {
            &[x_c, p_c, xi] => Ok(gaussian_coefficients(&GaussianStateSpec::new(x_c, p_c, xi)?, lattice)?),
            _ => Err(usage(format!("gaussian target takes x_c,p_c,xi, got `{spec}`"))),
        },
        _ => Err(usage(format!("unknown target `{spec}` (expected plane:n or gaussian:x_c,p_c,xi)"))),
    }
}

fn bloch_table(grid: &TimeGrid, states: &[ComplexVector]) -> Table {
    let mut t = Table::new(["t", "x", "y", "z"]);
    for (n, psi) in states.iter().enumerate() {
        let [x, y, z] = BlochVector::from_state(psi).as_array();
        t.push(vec![n as f64 * grid.dt(), x, y, z]);
    }
    t
}

fn control_table(grid: &TimeGrid, control: &PiecewiseControl) -> Table {
    let mut cols = vec!["t_start".to_owned()];
    cols.extend((1..=control.channels()).map(|k| format!("u_{k}")));
    let mut t = Table::new(cols);
    for n in 0..control.steps() {
        let mut row = vec![grid.interval_start(n)];
        row.extend(control.row(n));
        t.push(row);
    }
    t
}

/// Reads a control exported by `grape`. Without `t_f` the horizon is `N·(t_1 − t_0)`.
fn read_control(path: &Path, t_f: Option<f64>) -> Result<(PiecewiseControl, TimeGrid)> {
    let table = Table::read_csv(path)?;
    if table.columns.first().map(String::as_str) != Some("t_start") || table.columns.len() < 2 {
        return Err(usage(format!("{}: expected columns t_start, u_1, …", path.display())));
    }
    let steps = table.rows.len();
    let t_f = match (t_f, steps) {
        (Some(t), _) => t,
        (None, n) if n >= 2 => n as f64 * (table.rows[1][0] - table.rows[0][0]),
        _ => return Err(usage(format!("{}: give t_f for a single-interval control", path.display()))),
    };
    let grid = TimeGrid::new(t_f, steps)?;
    for (n, row) in table.rows.iter().enumerate() {
        if (row[0] - grid.interval_start(n)).abs() > 1e-9 * t_f.max(1.0) {
            return Err(usage(format!("{}: row {} starts at {}, not on a uniform grid over [0, {t_f}]", path.display(), n + 1, row[0])));
        }
    }
    let values = DMatrix::from_fn(steps, table.columns.len() - 1, |n, k| table.rows[n][k + 1]);
    Ok((PiecewiseControl::new(values)?, grid))
}

fn simulate(cfg: &RunConfig) -> Result<Payload> {
    let sec = &cfg.simulate;
    let model = Model::from_config(sec.model.as_deref(), cfg)?;
    let source = sec.control.as_deref().unwrap_or("guess");
    let (control, grid) = match source {
        "guess" | "bangbang" => {
            let mut t_f = sec.t_f.unwrap_or(model.default_horizon());
            let steps = sec.steps.unwrap_or(model.default_steps());
            if source == "guess" {
                let grid = TimeGrid::new(t_f, steps)?;
                (default_guess(&grid, model.system().channels(), model.bounds().as_ref()), grid)
            } else {
                let Model::TwoLevel { system, .. } = &model else {
                    return Err(usage("the bang-bang control exists for the two-level model only"));
                };
                let u0 = cfg.two_level.u0.unwrap_or(1.0);
                let bang = if system.delta() == 0.0 { pi_pulse(u0)? } else { bang_bang_two_level(system.delta(), u0)? };
                t_f = sec.t_f.unwrap_or(bang.total_time());
                let grid = TimeGrid::new(t_f, steps)?;
                // Midpoint sampling; switches between nodes cost O(dt) in fidelity.
                (PiecewiseControl::from_fn(&grid, 1, |t, _| bang.amplitude_at(t + 0.5 * grid.dt())), grid)
            }
        }
        path => read_control(Path::new(path), sec.t_f)?,
    };
    let psi0 = model.initial()?;
    let target = model.target(sec.target.as_deref())?;
    let states = propagate_forward(model.system(), &psi0, &control, &grid)?;
    let last = states.last().expect("non-empty trajectory");
    let mut out = Payload::default();
    out.scalar("fidelity", inner(&target, last).norm_sqr());
    out.scalar("norm_defect", (inner(last, last).re - 1.0).abs());
    out.scalar("t_f", grid.t_final());
    out.scalar("steps", grid.steps());
    out.table("control", control_table(&grid, &control));
    let (name, table) = model.state_table(&grid, &states);
    out.table(name, table);
    Ok(out)
}

fn parameterization(spec: &str) -> Result<Parameterization> {
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    let n = || arg.trim().parse::<usize>().map_err(|_| usage(format!("`{spec}` needs a non-negative integer after the colon")));
    match kind {
        "piecewise" => Ok(Parameterization::Piecewise),
        "fourier" => Ok(Parameterization::Fourier { k_max: n()? }),
        "polynomial" => Ok(Parameterization::Polynomial { degree: n()? }),
        _ => Err(usage(format!("unknown parameterization `{spec}` (piecewise, fourier:K, polynomial:D)"))),
    }
}

/// Library defaults, except that lattice runs use Polak–Ribière with `c2 = 0.1`,
/// 200 iterations and stop at cost `1e-4`.
fn grape_config(g: &GrapeSection, model: &Model) -> Result<GrapeConfig> {
    let mut c = GrapeConfig::default();
    let (mut c1, mut c2) = (1e-4, 0.9);
    if matches!(model, Model::Bec { .. }) {
        c.max_iter = 200;
        c.cost_tol = 1e-4;
        c.direction = Direction::PolakRibiere;
        c2 = 0.1;
    }
    c1 = g.c1.unwrap_or(c1);
    c2 = g.c2.unwrap_or(c2);
    c.line_search = if g.line_search.unwrap_or(true) { LineSearch::Wolfe { c1, c2 } } else { LineSearch::Off };
    c.epsilon = g.epsilon.unwrap_or(c.epsilon);
    c.max_iter = g.max_iter.unwrap_or(c.max_iter);
    c.cost_tol = g.cost_tol.unwrap_or(c.cost_tol);
    c.grad_tol = g.grad_tol.unwrap_or(c.grad_tol);
    if let Some(d) = g.direction.as_deref() {
        c.direction = match d {
            "steepest" => Direction::Steepest,
            "polak-ribiere" => Direction::PolakRibiere,
            _ => return Err(usage(format!("unknown direction `{d}` (steepest, polak-ribiere)"))),
        };
    }
    if let Some(m) = g.grad_mode.as_deref() {
        c.grad_mode = match m {
            "exact" => GradMode::Exact,
            "approximate" => GradMode::Approximate,
            _ => return Err(usage(format!("unknown gradient mode `{m}` (exact, approximate)"))),
        };
    }
    Ok(c)
}

struct GrapeRun {
    model: Model,
    grid: TimeGrid,
    target: ComplexVector,
    trace: OptimizationTrace,
    eval: Evaluation,
}

fn run_grape(cfg: &RunConfig, model: Model) -> Result<GrapeRun> {
    let g = &cfg.grape;
    let grid = TimeGrid::new(g.t_f.unwrap_or(model.default_horizon()), g.steps.unwrap_or(model.default_steps()))?;
    let kind = match g.cost.as_deref().unwrap_or("g1") {
        "g1" => CostKind::G1,
        "g2" => CostKind::G2,
        other => return Err(usage(format!("unknown cost `{other}` (g1, g2)"))),
    };
    let target = model.target(g.target.as_deref())?;
    let p0 = g.p0.unwrap_or(0.0);
    let running = if p0 == 0.0 { RunningCost::none() } else { RunningCost::energy(p0)? };
    let objective = Objective { terminal: TerminalCost::new(kind, target.clone())?, running };
    let psi0 = model.initial()?;
    let bounds = model.bounds();
    let problem = GrapeProblem { system: model.system(), psi0: &psi0, grid, objective: &objective, bounds: bounds.as_ref() };
    let param = parameterization(g.parameterization.as_deref().unwrap_or("piecewise"))?;
    let guess = param.project(&default_guess(&grid, model.system().channels(), bounds.as_ref()), &grid)?;
    let config = grape_config(g, &model)?;
    let trace = grape_optimize(&problem, &param, &guess, &config)?;
    let eval = evaluate(&problem, &trace.final_control)?;
    Ok(GrapeRun { model, grid, target, trace, eval })
}

fn grape(cfg: &RunConfig) -> Result<Payload> {
    let model = Model::from_config(cfg.grape.model.as_deref(), cfg)?;
    let GrapeRun { model, grid, target, trace, eval } = run_grape(cfg, model)?;
    let mut out = Payload::default();
    out.scalar("final_cost", trace.final_cost());
    out.scalar("terminal_cost", eval.terminal_cost);
    out.scalar("running_cost", eval.running_cost);
    out.scalar("fidelity", inner(&target, eval.states.last().expect("non-empty")).norm_sqr());
    out.scalar("iterations", trace.iterations);
    out.scalar("terminated_by", trace.terminated_by);
    out.scalar("t_f", grid.t_final());
    out.scalar("steps", grid.steps());
    out.series("cost_history", trace.cost_history.clone());
    out.series("grad_norm_history", trace.grad_norm_history.clone());
    out.series("step_history", trace.step_history.clone());
    out.table("control", control_table(&grid, &trace.final_control));
    let (name, table) = model.state_table(&grid, &eval.states);
    out.table(name, table);
    Ok(out)
}

fn shoot(cfg: &RunConfig) -> Result<Payload> {
    let s = &cfg.shoot;
    let tol = s.tol.unwrap_or(1e-10);
    let max_iter = s.max_iter.unwrap_or(50);
    let mut out = Payload::default();
    let (result, traj, columns): (ShootingResult, ExtremalTrajectory, &[&str]) = match s.problem.as_deref().unwrap_or("two-controls") {
        "two-controls" => {
            let problem = BlochTimeOptimal::two_controls();
            let setup = ShootingSetup {
                template: Adjoint::new(vec![s.p_x.unwrap_or(0.0), 0.0, 0.0], -1.0)?,
                free: vec![1, 2],
                steps: s.steps.unwrap_or(2000),
            };
            let (result, traj) = shoot_with(&problem, &setup, s.guess.clone().unwrap_or(vec![0.5, 0.9, 2.5]), tol, max_iter)?;
            (result, traj, &["t", "x", "y", "z", "p_x", "p_y", "p_z", "u_x", "u_y"])
        }
        "particle-energy" => {
            let problem = PointParticleEnergy { m: s.m.unwrap_or(1.0), alpha: s.alpha.unwrap_or(1.0), t_f: s.t_f.unwrap_or(10.0) };
            let setup =
                ShootingSetup { template: Adjoint::new(vec![0.0, 0.0], -1.0)?, free: vec![0, 1], steps: s.steps.unwrap_or(200) };
            let (result, traj) = shoot_with(&problem, &setup, s.guess.clone().unwrap_or(vec![0.0, 0.0]), tol, max_iter)?;
            (result, traj, &["t", "x", "p", "lambda_x", "lambda_p", "f"])
        }
        other => return Err(usage(format!("unknown shooting problem `{other}` (two-controls, particle-energy)"))),
    };
    out.scalar("converged", result.converged);
    out.scalar("t_f", result.t_f);
    out.scalar("residual_norm", result.residual_norm);
    out.scalar("iterations", result.iterations);
    out.scalar("adjoint", &result.lambda0_init.lambda);
    out.scalar("lambda0", result.lambda0_init.lambda0);
    out.scalar("hp_spread", traj.hp_spread());
    out.series("residual_history", result.residual_history.clone());
    let mut table = Table::new(columns.iter().copied());
    for i in 0..traj.times.len() {
        let mut row = vec![traj.times[i]];
        row.extend(&traj.states[i]);
        row.extend(&traj.adjoints[i]);
        row.extend(&traj.controls[i]);
        table.push(row);
    }
    out.table("extremal", table);
    Ok(out)
}

fn shoot_with(
    problem: &dyn ControlProblem,
    setup: &ShootingSetup,
    guess: Vec<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(ShootingResult, ExtremalTrajectory)> {
    let n = setup.unknowns(problem);
    if guess.len() != n {
        return Err(usage(format!("this problem has {n} shooting unknowns, the guess has {}", guess.len())));
    }
    let result = solve_shooting(problem, setup, &guess, tol, max_iter)?;
    if !result.converged {
        log::warn!("shooting stopped after {} iterations at residual {:e}", result.iterations, result.residual_norm);
    }
    let (adj, grid) = setup.unpack(problem, &result.unknowns)?;
    let traj = extremal_flow(problem, &adj, &grid)?;
    Ok((result, traj))
}

fn segments_table(bang: &BangBang) -> Table {
    let mut t = Table::new(["t_start", "amplitude", "duration"]);
    let mut start = 0.0;
    for &(a, d) in &bang.segments {
        t.push(vec![start, a, d]);
        start += d;
    }
    t
}

fn analytic(cfg: &RunConfig) -> Result<Payload> {
    let a = &cfg.analytic;
    let kind = a.kind.as_deref().unwrap_or("bangbang");
    let delta = cfg.two_level.delta.unwrap_or(0.5);
    let u0 = cfg.two_level.u0.unwrap_or(if kind == "emulation" { 0.5 } else { 1.0 });
    let mut out = Payload::default();
    match kind {
        "pi-pulse" => {
            let bang = pi_pulse(u0)?;
            out.scalar("t_star", bang.total_time());
            out.scalar("transfer", bang.transfer_probability(0.0)?);
            out.table("segments", segments_table(&bang));
        }
        "bangbang" => {
            let bang = bang_bang_two_level(delta, u0)?;
            out.scalar("t1", bang.segments[0].1);
            out.scalar("t2", bang.segments[1].1);
            out.scalar("t_f", bang.total_time());
            out.scalar("omega", bang.omega);
            out.scalar("transfer", bang.transfer_probability(delta)?);
            out.table("segments", segments_table(&bang));
        }
        "qsl" => {
            let r = qsl_two_level(delta, u0, delta != 0.0)?;
            out.scalar("variance_max", r.variance_max);
            out.scalar("t_qsl", r.t_qsl);
            out.scalar("t_star", r.t_star);
            out.scalar("ratio", r.ratio);
        }
        "particle-time" => {
            let (x0, p0, m) = (a.x0.unwrap_or(1.0), a.p0.unwrap_or(0.0), a.m.unwrap_or(1.0));
            let bang = point_particle_bang_bang(x0, p0, a.f0.unwrap_or(1.0), m)?;
            let (x, p) = point_particle_endpoint(&bang, x0, p0, m);
            out.scalar("total_time", bang.total_time());
            out.scalar("switching_times", bang.switching_times());
            out.scalar("x_final", x);
            out.scalar("p_final", p);
            out.table("segments", segments_table(&bang));
        }
        "particle-energy" => {
            let sol = point_particle_energy_optimal(a.t_f.unwrap_or(10.0), a.m.unwrap_or(1.0), a.alpha.unwrap_or(1.0))?;
            let (x, p) = sol.endpoint();
            out.scalar("lambda_x", sol.lambda_x);
            out.scalar("lambda_p0", sol.lambda_p0);
            out.scalar("x_final", x);
            out.scalar("p_final", p);
            let samples = 200;
            let mut table = Table::new(["t", "x", "p", "f"]);
            for i in 0..=samples {
                let t = sol.t_f * i as f64 / samples as f64;
                let (x, p) = sol.state(t);
                table.push(vec![t, x, p, sol.control(t)]);
            }
            out.table("trajectory", table);
        }
        "emulation" => {
            let s = a.s.unwrap_or(0.57);
            let el_hz = a.el_hz.unwrap_or(8.111e3);
            let system = landau_zener_two_level(s, u0)?;
            let bang = bang_bang_two_level(system.delta(), u0)?;
            out.scalar("delta", system.delta());
            out.scalar("t1", bang.segments[0].1);
            out.scalar("t2", bang.segments[1].1);
            out.scalar("t1_us", physical_time(bang.segments[0].1, el_hz)? * 1e6);
            out.scalar("t2_us", physical_time(bang.segments[1].1, el_hz)? * 1e6);
            out.table("segments", segments_table(&bang));
        }
        other => {
            return Err(usage(format!(
                "unknown analytic kind `{other}` (pi-pulse, bangbang, qsl, particle-time, particle-energy, emulation)"
            )))
        }
    }
    Ok(out)
}

fn landscape(cfg: &RunConfig) -> Result<Payload> {
    let l = &cfg.landscape;
    let nt = l.theta_points.unwrap_or(61);
    let np = l.phi_points.unwrap_or(120);
    if nt < 2 || np < 1 {
        return Err(usage("landscape needs at least 2 theta points and 1 phi point"));
    }
    let theta: Vec<f64> = (0..nt).map(|i| PI * i as f64 / (nt - 1) as f64).collect();
    let phi: Vec<f64> = (0..np).map(|j| 2.0 * PI * j as f64 / np as f64).collect();
    let t_f = l.t_f.unwrap_or(PI * 3f64.sqrt() / 2.0);
    let map = landscape_scan(&BlochTimeOptimal::two_controls(), &theta, &phi, t_f, l.steps.unwrap_or(400))?;
    let (i, j) = argmin(&map);
    let mut out = Payload::default();
    out.scalar("min_distance", map[(i, j)]);
    out.scalar("theta_min", theta[i]);
    out.scalar("phi_min", phi[j]);
    out.scalar("t_f", t_f);
    out.series("theta", theta);
    out.series("phi", phi);
    out.table("landscape", Table::heatmap(&map));
    Ok(out)
}

fn argmin(map: &DMatrix<f64>) -> (usize, usize) {
    (0..map.nrows())
        .flat_map(|i| (0..map.ncols()).map(move |j| (i, j)))
        .min_by(|a, b| map[*a].total_cmp(&map[*b]))
        .expect("non-empty grid")
}

fn robustness_parameter(name: &str) -> Result<RobustnessParameter> {
    match name {
        "depth" => Ok(RobustnessParameter::Depth),
        "quasimomentum" => Ok(RobustnessParameter::Quasimomentum),
        "timescale" => Ok(RobustnessParameter::Timescale),
        _ => Err(usage(format!("unknown scan parameter `{name}` (depth, quasimomentum, timescale)"))),
    }
}

fn linspace(from: f64, to: f64, points: usize) -> Result<Vec<f64>> {
    match points {
        0 => Err(usage("a scan needs at least one point")),
        1 => Ok(vec![from]),
        n => Ok((0..n).map(|i| from + (to - from) * i as f64 / (n - 1) as f64).collect()),
    }
}

fn scan_axis(p: RobustnessParameter, nominal: &BecLattice, from: Option<f64>, to: Option<f64>, points: Option<usize>) -> Result<Vec<f64>> {
    let (lo, hi) = match p {
        RobustnessParameter::Depth => (0.9 * nominal.s(), 1.1 * nominal.s()),
        RobustnessParameter::Quasimomentum => (-0.1, 0.1),
        RobustnessParameter::Timescale => (0.9, 1.1),
    };
    linspace(from.unwrap_or(lo), to.unwrap_or(hi), points.unwrap_or(21))
}

/// Fidelity of a fixed lattice control under perturbed depth, quasimomentum or timescale.
fn scan(cfg: &RunConfig) -> Result<Payload> {
    let sc = &cfg.scan;
    let nominal = lattice(cfg)?;
    let mut out = Payload::default();
    let (control, grid, target) = match sc.control.as_deref() {
        Some(path) => {
            let (control, grid) = read_control(Path::new(path), cfg.grape.t_f)?;
            (control, grid, bec_target(cfg.grape.target.as_deref().unwrap_or("plane:2"), &nominal)?)
        }
        None => {
            let run = run_grape(cfg, Model::Bec { system: BecSystem::new(nominal), lattice: nominal })?;
            out.scalar("nominal_cost", run.trace.final_cost());
            (run.trace.final_control, run.grid, run.target)
        }
    };
    let psi0 = plane_wave(&nominal, 0)?;
    let p1 = robustness_parameter(sc.parameter.as_deref().unwrap_or("depth"))?;
    let values = scan_axis(p1, &nominal, sc.from, sc.to, sc.points)?;
    match sc.parameter2.as_deref() {
        None => {
            let fid = robustness_scan(&control, &grid, &nominal, &psi0, &target, p1, &values)?;
            let mut t = Table::new(["value", "fidelity"]);
            for (v, f) in values.iter().zip(&fid) {
                t.push(vec![*v, *f]);
            }
            out.scalar("min_fidelity", fid.iter().cloned().fold(f64::INFINITY, f64::min));
            out.table("scan", t);
        }
        Some(name) => {
            let p2 = robustness_parameter(name)?;
            if p2 == p1 {
                return Err(usage("the two scan parameters must differ"));
            }
            let values2 = scan_axis(p2, &nominal, sc.from2, sc.to2, sc.points2)?;
            let columns = values2
                .par_iter()
                .map(|&v2| {
                    let (lat, g) = match p2 {
                        RobustnessParameter::Depth => (nominal.with_depth(v2)?, grid),
                        RobustnessParameter::Quasimomentum => (nominal.with_quasimomentum(v2)?, grid),
                        RobustnessParameter::Timescale => (nominal, grid.rescaled(v2)?),
                    };
                    robustness_scan(&control, &g, &lat, &psi0, &target, p1, &values)
                })
                .collect::<qoc_core::Result<Vec<_>>>()?;
            let map = DMatrix::from_fn(values.len(), values2.len(), |i, j| columns[j][i]);
            out.scalar("min_fidelity", map.min());
            out.series("values2", values2);
            out.table("scan", Table::heatmap(&map));
        }
    }
    out.series("values", values);
    Ok(out)
}

fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn search(cfg: &RunConfig) -> Result<Payload> {
    let s = &cfg.search;
    let objective: &SearchObjective = match s.function.as_deref().unwrap_or("test") {
        "test" => &test_function,
        "sphere" => &sphere,
        other => return Err(usage(format!("unknown objective `{other}` (test, sphere)"))),
    };
    let domain = BoxDomain::cube(2, -2.0, 2.0)?;
    let seed = cfg.seed.unwrap_or(0);
    let mut base = SearchConfig { seed, initial_temperature: s.t0, ..SearchConfig::default() };
    base.population_size = s.population.unwrap_or(base.population_size);
    base.iterations = s.iterations.unwrap_or(base.iterations);
    base.cooling = s.cooling.unwrap_or(base.cooling);
    let method = s.method.as_deref().unwrap_or("all");
    if !matches!(method, "jaya" | "sa" | "nm" | "all") {
        return Err(usage(format!("unknown search method `{method}` (jaya, sa, nm, all)")));
    }
    let mut out = Payload::default();
    let record = |prefix: &str, o: &SearchOutcome, out: &mut Payload| {
        out.scalar(&format!("{prefix}_best_value"), o.best_value);
        out.scalar(&format!("{prefix}_best_point"), &o.best_point);
        out.scalar(&format!("{prefix}_evaluations"), o.trace.evaluations);
        out.series(&format!("{prefix}_best_history"), o.trace.best_history.clone());
    };
    if matches!(method, "jaya" | "all") {
        record("jaya", &jaya_optimize(objective, &domain, &base)?, &mut out);
    }
    if matches!(method, "sa" | "all") {
        record("sa", &simulated_annealing(objective, &domain, &base)?, &mut out);
    }
    if matches!(method, "nm" | "all") {
        let nm_cfg = SearchConfig { iterations: s.iterations.unwrap_or(1000), ..base };
        let starts = random_starts(&domain, s.starts.unwrap_or(20), seed);
        let runs = starts
            .par_iter()
            .map(|x0| nelder_mead(objective, x0, Some(&domain), &nm_cfg))
            .collect::<qoc_core::Result<Vec<_>>>()?;
        let mut table = Table::new(["start", "x0_1", "x0_2", "best_value", "x_1", "x_2"]);
        for (k, (x0, o)) in starts.iter().zip(&runs).enumerate() {
            table.push(vec![k as f64, x0[0], x0[1], o.best_value, o.best_point[0], o.best_point[1]]);
        }
        let best = runs
            .iter()
            .min_by(|a, b| a.best_value.total_cmp(&b.best_value))
            .ok_or_else(|| usage("Nelder–Mead needs at least one start"))?;
        record("nm", best, &mut out);
        out.table("nm_starts", table);
    }
    Ok(out)
}
