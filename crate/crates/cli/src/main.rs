//! `qoc`: command-line front end to the optimal control toolkit.

mod config;
mod output;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use config::{merge, Command, Format, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "qoc", version, about = "Quantum optimal control: GRAPE, shooting, analytic pulses, lattice BEC models")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for scan-type commands (default: all cores).
    #[arg(long, global = true, env = "QOC_THREADS")]
    threads: Option<usize>,
    /// Output directory (default `qoc-out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Lowest Bloch bands of the lattice.
    Bands {
        #[command(flatten)]
        lattice: LatticeFlags,
        #[arg(long)]
        bands: Option<usize>,
    },
    /// Propagate a given control (`guess`, `bangbang` or a CSV file).
    Simulate {
        /// two-level | bec
        model: Option<String>,
        #[arg(long)]
        control: Option<String>,
        #[arg(long)]
        target: Option<String>,
        #[arg(long = "tf")]
        t_f: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        #[command(flatten)]
        lattice: LatticeFlags,
        #[command(flatten)]
        two_level: TwoLevelFlags,
    },
    /// Gradient pulse optimization.
    Grape {
        /// two-level | bec
        model: Option<String>,
        #[command(flatten)]
        grape: GrapeFlags,
        #[command(flatten)]
        lattice: LatticeFlags,
        #[command(flatten)]
        two_level: TwoLevelFlags,
    },
    /// Solve the boundary-value problem of the maximum principle.
    Shoot {
        /// two-controls | particle-energy
        problem: Option<String>,
        /// Initial unknowns, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        guess: Option<Vec<f64>>,
        #[arg(long)]
        p_x: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long)]
        m: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long = "tf")]
        t_f: Option<f64>,
    },
    /// Closed-form solutions.
    Analytic {
        /// pi-pulse | bangbang | qsl | particle-time | particle-energy | emulation
        kind: Option<String>,
        #[command(flatten)]
        two_level: TwoLevelFlags,
        #[arg(long)]
        x0: Option<f64>,
        #[arg(long)]
        p0: Option<f64>,
        #[arg(long)]
        f0: Option<f64>,
        #[arg(long)]
        m: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long = "tf")]
        t_f: Option<f64>,
        /// Lattice depth of the emulation.
        #[arg(long)]
        s: Option<f64>,
        /// Lattice energy E_L/h in Hz.
        #[arg(long)]
        el_hz: Option<f64>,
    },
    /// Distance to the target over initial adjoint directions.
    Landscape {
        #[arg(long)]
        theta_points: Option<usize>,
        #[arg(long)]
        phi_points: Option<usize>,
        #[arg(long = "tf")]
        t_f: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Robustness of a lattice control against parameter changes.
    Scan {
        #[arg(long)]
        parameter: Option<String>,
        #[arg(long)]
        from: Option<f64>,
        #[arg(long)]
        to: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        parameter2: Option<String>,
        #[arg(long)]
        from2: Option<f64>,
        #[arg(long)]
        to2: Option<f64>,
        #[arg(long)]
        points2: Option<usize>,
        /// Control CSV; optimized first when absent.
        #[arg(long)]
        control: Option<String>,
        #[command(flatten)]
        grape: GrapeFlags,
        #[command(flatten)]
        lattice: LatticeFlags,
    },
    /// Gradient-free optimizers on a test landscape.
    Search {
        /// jaya | sa | nm | all
        #[arg(long)]
        method: Option<String>,
        /// test | sphere
        #[arg(long)]
        function: Option<String>,
        #[arg(long)]
        population: Option<usize>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        starts: Option<usize>,
        #[arg(long)]
        t0: Option<f64>,
        #[arg(long)]
        cooling: Option<f64>,
    },
    /// Run whatever command the config file names.
    Run,
}

#[derive(Args, Debug, Default)]
struct LatticeFlags {
    #[arg(long)]
    s: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    n_max: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct TwoLevelFlags {
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    u0: Option<f64>,
    #[arg(long)]
    bounded: Option<bool>,
}

#[derive(Args, Debug, Default)]
struct GrapeFlags {
    #[arg(long)]
    target: Option<String>,
    /// g1 | g2
    #[arg(long)]
    cost: Option<String>,
    #[arg(long = "tf")]
    t_f: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Weight of the energy penalty.
    #[arg(long)]
    p0: Option<f64>,
    /// piecewise | fourier:K | polynomial:D
    #[arg(long = "param")]
    parameterization: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    line_search: Option<bool>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    c2: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// exact | approximate
    #[arg(long)]
    grad_mode: Option<String>,
    /// steepest | polak-ribiere
    #[arg(long)]
    direction: Option<String>,
    #[arg(long)]
    cost_tol: Option<f64>,
    #[arg(long)]
    grad_tol: Option<f64>,
}

impl LatticeFlags {
    fn apply(self, cfg: &mut RunConfig) {
        merge(&mut cfg.lattice.s, self.s);
        merge(&mut cfg.lattice.q, self.q);
        merge(&mut cfg.lattice.n_max, self.n_max);
    }
}

impl TwoLevelFlags {
    fn apply(self, cfg: &mut RunConfig) {
        merge(&mut cfg.two_level.delta, self.delta);
        merge(&mut cfg.two_level.u0, self.u0);
        merge(&mut cfg.two_level.bounded, self.bounded);
    }
}

impl GrapeFlags {
    fn apply(self, cfg: &mut RunConfig) {
        let g = &mut cfg.grape;
        merge(&mut g.target, self.target);
        merge(&mut g.cost, self.cost);
        merge(&mut g.t_f, self.t_f);
        merge(&mut g.steps, self.steps);
        merge(&mut g.p0, self.p0);
        merge(&mut g.parameterization, self.parameterization);
        merge(&mut g.epsilon, self.epsilon);
        merge(&mut g.line_search, self.line_search);
        merge(&mut g.c1, self.c1);
        merge(&mut g.c2, self.c2);
        merge(&mut g.max_iter, self.max_iter);
        merge(&mut g.grad_mode, self.grad_mode);
        merge(&mut g.direction, self.direction);
        merge(&mut g.cost_tol, self.cost_tol);
        merge(&mut g.grad_tol, self.grad_tol);
    }
}

/// File values first, then global flags, then the subcommand's own flags.
fn resolve(cli: Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    merge(&mut cfg.seed, cli.seed);
    merge(&mut cfg.threads, cli.threads);
    merge(&mut cfg.output.dir, cli.out);
    merge(&mut cfg.output.format, cli.format);
    match cli.command {
        Cmd::Bands { lattice, bands } => {
            cfg.set_command(Command::Bands)?;
            lattice.apply(&mut cfg);
            merge(&mut cfg.bands.bands, bands);
        }
        Cmd::Simulate { model, control, target, t_f, steps, lattice, two_level } => {
            cfg.set_command(Command::Simulate)?;
            let s = &mut cfg.simulate;
            merge(&mut s.model, model);
            merge(&mut s.control, control);
            merge(&mut s.target, target);
            merge(&mut s.t_f, t_f);
            merge(&mut s.steps, steps);
            lattice.apply(&mut cfg);
            two_level.apply(&mut cfg);
        }
        Cmd::Grape { model, grape, lattice, two_level } => {
            cfg.set_command(Command::Grape)?;
            merge(&mut cfg.grape.model, model);
            grape.apply(&mut cfg);
            lattice.apply(&mut cfg);
            two_level.apply(&mut cfg);
        }
        Cmd::Shoot { problem, guess, p_x, steps, tol, max_iter, m, alpha, t_f } => {
            cfg.set_command(Command::Shoot)?;
            let s = &mut cfg.shoot;
            merge(&mut s.problem, problem);
            merge(&mut s.guess, guess);
            merge(&mut s.p_x, p_x);
            merge(&mut s.steps, steps);
            merge(&mut s.tol, tol);
            merge(&mut s.max_iter, max_iter);
            merge(&mut s.m, m);
            merge(&mut s.alpha, alpha);
            merge(&mut s.t_f, t_f);
        }
        Cmd::Analytic { kind, two_level, x0, p0, f0, m, alpha, t_f, s, el_hz } => {
            cfg.set_command(Command::Analytic)?;
            let a = &mut cfg.analytic;
            merge(&mut a.kind, kind);
            merge(&mut a.x0, x0);
            merge(&mut a.p0, p0);
            merge(&mut a.f0, f0);
            merge(&mut a.m, m);
            merge(&mut a.alpha, alpha);
            merge(&mut a.t_f, t_f);
            merge(&mut a.s, s);
            merge(&mut a.el_hz, el_hz);
            two_level.apply(&mut cfg);
        }
        Cmd::Landscape { theta_points, phi_points, t_f, steps } => {
            cfg.set_command(Command::Landscape)?;
            let l = &mut cfg.landscape;
            merge(&mut l.theta_points, theta_points);
            merge(&mut l.phi_points, phi_points);
            merge(&mut l.t_f, t_f);
            merge(&mut l.steps, steps);
        }
        Cmd::Scan { parameter, from, to, points, parameter2, from2, to2, points2, control, grape, lattice } => {
            cfg.set_command(Command::Scan)?;
            let s = &mut cfg.scan;
            merge(&mut s.parameter, parameter);
            merge(&mut s.from, from);
            merge(&mut s.to, to);
            merge(&mut s.points, points);
            merge(&mut s.parameter2, parameter2);
            merge(&mut s.from2, from2);
            merge(&mut s.to2, to2);
            merge(&mut s.points2, points2);
            merge(&mut s.control, control);
            grape.apply(&mut cfg);
            lattice.apply(&mut cfg);
        }
        Cmd::Search { method, function, population, iterations, starts, t0, cooling } => {
            cfg.set_command(Command::Search)?;
            let s = &mut cfg.search;
            merge(&mut s.method, method);
            merge(&mut s.function, function);
            merge(&mut s.population, population);
            merge(&mut s.iterations, iterations);
            merge(&mut s.starts, starts);
            merge(&mut s.t0, t0);
            merge(&mut s.cooling, cooling);
        }
        Cmd::Run => {
            if cfg.command.is_none() {
                anyhow::bail!("`run` needs a config file that sets `command`");
            }
        }
    }
    Ok(cfg)
}

fn execute(cfg: &RunConfig) -> Result<()> {
    let command = cfg.command.expect("resolved");
    let name = format!("{command:?}").to_lowercase();
    let start = Instant::now();
    let payload = run::run(cfg)?;
    let wall = start.elapsed().as_secs_f64();
    let dir = cfg.output.dir.clone().unwrap_or_else(|| PathBuf::from("qoc-out"));
    let files = output::export(&payload, &dir, cfg.output.format.unwrap_or_default(), &name, cfg, wall)?;
    print!("{}", payload.summary());
    for f in files {
        log::info!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // Lets `--q -0.25` and `--guess -1,2` through as values.
    let matches = Cli::command().mut_subcommands(|c| c.allow_negative_numbers(true)).get_matches();
    let cli = Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit());
    let cfg = match resolve(cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    if let Some(n) = cfg.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("setting the thread budget") {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    }
    match execute(&cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<run::Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
