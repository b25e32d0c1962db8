//! Pontryagin maximum principle: Hamiltonian, maximized control, extremal flow,
//! shooting and adjoint landscapes for finite-dimensional real problems.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{rk4_step, ControlBounds, TimeGrid};

/// Switching functions below this magnitude count as vanishing.
pub const SINGULAR_THRESHOLD: f64 = 1e-9;
/// Consecutive vanishing steps tolerated before a singular arc is reported.
pub const SINGULAR_STEPS: usize = 3;

/// Costate `(Λ, Λ0)` with `Λ0 ≤ 0`, not both zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adjoint {
    pub lambda: Vec<f64>,
    pub lambda0: f64,
}

impl Adjoint {
    pub fn new(lambda: Vec<f64>, lambda0: f64) -> Result<Self> {
        if lambda0 > 0.0 {
            return Err(Error::Parameter(format!("abnormal multiplier must be <= 0, got {lambda0}")));
        }
        if lambda0 == 0.0 && lambda.iter().all(|l| *l == 0.0) {
            return Err(Error::DegenerateAdjoint("adjoint and abnormal multiplier both vanish".into()));
        }
        if lambda.iter().any(|l| !l.is_finite()) || !lambda0.is_finite() {
            return Err(Error::NumericInput("adjoint components must be finite".into()));
        }
        Ok(Self { lambda, lambda0 })
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { lambda: self.lambda.iter().map(|l| c * l).collect(), lambda0: c * self.lambda0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Admissible {
    Unbounded,
    /// Per-channel interval; maximized by the bang rule.
    Box(ControlBounds),
    /// `‖u‖ ≤ radius`; maximized along the switching vector.
    Ball(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    /// Reach this state exactly.
    Exact(Vec<f64>),
    /// Final condition from the terminal cost (transversality).
    Cost,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Horizon {
    Fixed(f64),
    Free,
}

/// `min G(X(t_f)) + ∫F0` subject to `Ẋ = F(X, u, t)`, `u ∈ U`.
pub trait ControlProblem: Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn initial_state(&self) -> Vec<f64>;
    fn dynamics(&self, x: &[f64], u: &[f64], t: f64) -> Vec<f64>;
    fn running_cost(&self, x: &[f64], u: &[f64], t: f64) -> f64;
    /// `∂H_P/∂X`; the adjoint obeys `Λ̇ = −∂H_P/∂X`.
    fn hamiltonian_state_gradient(&self, x: &[f64], adj: &Adjoint, u: &[f64], t: f64) -> Vec<f64>;
    fn admissible(&self) -> Admissible;
    fn target(&self) -> Target;
    fn horizon(&self) -> Horizon;

    /// `∂G/∂X`; only used with [`Target::Cost`].
    fn terminal_gradient(&self, x: &[f64]) -> Vec<f64> {
        vec![0.0; x.len()]
    }

    /// Coefficients of the controls in `Λ·F` for control-affine problems.
    fn switching(&self, _x: &[f64], _adj: &Adjoint, _t: f64) -> Vec<f64> {
        Vec::new()
    }

    /// `argmax_u H_P`. The default covers control-affine problems with box or ball sets.
    fn maximize(&self, x: &[f64], adj: &Adjoint, t: f64) -> Result<Vec<f64>> {
        let s = self.switching(x, adj, t);
        match self.admissible() {
            Admissible::Box(b) => Ok(s
                .iter()
                .enumerate()
                .map(|(k, &sk)| {
                    let centre = 0.5 * (b.lower()[k] + b.upper()[k]);
                    centre + b.half_width(k) * sign(sk)
                })
                .collect()),
            Admissible::Ball(r) => {
                let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm == 0.0 {
                    Ok(vec![0.0; s.len()])
                } else {
                    Ok(s.iter().map(|v| r * v / norm).collect())
                }
            }
            Admissible::Unbounded => {
                Err(Error::Unsupported("unbounded control-affine problems need a custom maximizer".into()))
            }
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `H_P = Λ·F(X, u) + Λ0·F0(X, u)`.
pub fn pontryagin_hamiltonian(problem: &dyn ControlProblem, x: &[f64], adj: &Adjoint, u: &[f64], t: f64) -> Result<f64> {
    if x.len() != problem.state_dim() || adj.lambda.len() != x.len() || u.len() != problem.control_dim() {
        return Err(Error::Shape(format!(
            "state {}, adjoint {}, control {} for a problem with dims ({}, {})",
            x.len(),
            adj.lambda.len(),
            u.len(),
            problem.state_dim(),
            problem.control_dim()
        )));
    }
    let f = problem.dynamics(x, u, t);
    Ok(adj.lambda.iter().zip(&f).map(|(l, fi)| l * fi).sum::<f64>() + adj.lambda0 * problem.running_cost(x, u, t))
}

/// Control maximizing `H_P` at `(X, Λ)`.
pub fn maximized_control(problem: &dyn ControlProblem, x: &[f64], adj: &Adjoint, t: f64) -> Result<Vec<f64>> {
    problem.maximize(x, adj, t)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtremalTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub adjoints: Vec<Vec<f64>>,
    pub lambda0: f64,
    /// Maximized control at every node.
    pub controls: Vec<Vec<f64>>,
    pub hp_trace: Vec<f64>,
}

impl ExtremalTrajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has nodes")
    }

    pub fn final_adjoint(&self) -> &[f64] {
        self.adjoints.last().expect("trajectory has nodes")
    }

    pub fn hp_spread(&self) -> f64 {
        let max = self.hp_trace.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = self.hp_trace.iter().cloned().fold(f64::INFINITY, f64::min);
        max - min
    }
}

/// Integrates the state and adjoint equations with the maximized control
/// substituted, using fixed-step RK4 on `grid`.
///
/// Bang (box) controls are held over each step so the flow is exact on every
/// bang; smooth maximizers are re-evaluated at every stage.
pub fn extremal_flow(problem: &dyn ControlProblem, adj0: &Adjoint, grid: &TimeGrid) -> Result<ExtremalTrajectory> {
    flow(problem, adj0, grid, true)
}

fn flow(problem: &dyn ControlProblem, adj0: &Adjoint, grid: &TimeGrid, detect_singular: bool) -> Result<ExtremalTrajectory> {
    let n = problem.state_dim();
    if adj0.lambda.len() != n {
        return Err(Error::Shape(format!("adjoint has {} components, state has {n}", adj0.lambda.len())));
    }
    let lambda0 = adj0.lambda0;
    let admissible = problem.admissible();
    let hold = matches!(admissible, Admissible::Box(_));
    let affine = !matches!(admissible, Admissible::Unbounded);
    let split = |y: &[f64]| -> (Vec<f64>, Adjoint) {
        (y[..n].to_vec(), Adjoint { lambda: y[n..].to_vec(), lambda0 })
    };
    let rhs = |t: f64, y: &[f64], u: &[f64]| -> Vec<f64> {
        let (x, adj) = split(y);
        let mut out = problem.dynamics(&x, u, t);
        out.extend(problem.hamiltonian_state_gradient(&x, &adj, u, t).into_iter().map(|g| -g));
        out
    };

    let dt = grid.dt();
    let mut y: Vec<f64> = problem.initial_state();
    y.extend_from_slice(&adj0.lambda);
    let mut out = ExtremalTrajectory {
        times: Vec::with_capacity(grid.steps() + 1),
        states: Vec::with_capacity(grid.steps() + 1),
        adjoints: Vec::with_capacity(grid.steps() + 1),
        lambda0,
        controls: Vec::with_capacity(grid.steps() + 1),
        hp_trace: Vec::with_capacity(grid.steps() + 1),
    };
    let mut vanishing = 0usize;
    let mut vanishing_since = 0.0;
    for step in 0..=grid.steps() {
        let t = grid.interval_start(step);
        let (x, adj) = split(&y);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp(t));
        }
        if detect_singular && affine {
            let s = problem.switching(&x, &adj, t);
            if s.iter().all(|v| v.abs() < SINGULAR_THRESHOLD) {
                if vanishing == 0 {
                    vanishing_since = t;
                }
                vanishing += 1;
                if vanishing > SINGULAR_STEPS {
                    return Err(Error::SingularArc { time: vanishing_since, threshold: SINGULAR_THRESHOLD });
                }
            } else {
                vanishing = 0;
            }
        }
        let u = problem.maximize(&x, &adj, t)?;
        out.hp_trace.push(pontryagin_hamiltonian(problem, &x, &adj, &u, t)?);
        out.times.push(t);
        out.states.push(x);
        out.adjoints.push(adj.lambda);
        out.controls.push(u.clone());
        if step == grid.steps() {
            break;
        }
        let mut f = |s: f64, z: &[f64]| -> Vec<f64> {
            if hold {
                rhs(s, z, &u)
            } else {
                let (xs, adjs) = split(z);
                match problem.maximize(&xs, &adjs, s) {
                    Ok(us) => rhs(s, z, &us),
                    Err(_) => vec![f64::NAN; z.len()],
                }
            }
        };
        y = rk4_step(&mut f, t, &y, dt);
    }
    Ok(out)
}

/// Shooting conditions at the end of the extremal started from `adj0`:
/// `X(t_f) − X_f` for exact targets, `Λ(t_f) − Λ0·∂G/∂X` for cost-defined
/// ones, followed by `H_P(0)` when the horizon is free.
pub fn shooting_residual(problem: &dyn ControlProblem, adj0: &Adjoint, grid: &TimeGrid) -> Result<Vec<f64>> {
    let traj = extremal_flow(problem, adj0, grid)?;
    let mut r = match problem.target() {
        Target::Exact(xf) => traj.final_state().iter().zip(&xf).map(|(a, b)| a - b).collect::<Vec<_>>(),
        Target::Cost => {
            let g = problem.terminal_gradient(traj.final_state());
            traj.final_adjoint().iter().zip(&g).map(|(l, gi)| l - adj0.lambda0 * gi).collect()
        }
    };
    if problem.horizon() == Horizon::Free {
        r.push(traj.hp_trace[0]);
    }
    Ok(r)
}

/// Which initial adjoint components the shooting iteration varies.
#[derive(Clone, Debug, PartialEq)]
pub struct ShootingSetup {
    /// Fixed components and the normalization `Λ0`.
    pub template: Adjoint,
    /// Indices of `template.lambda` that are unknowns, in order.
    pub free: Vec<usize>,
    /// RK4 steps over the horizon; a free `t_f` rescales the step.
    pub steps: usize,
}

impl ShootingSetup {
    /// Unknown vector `(Λ_free…, t_f if free)` → initial adjoint and horizon.
    pub fn unpack(&self, problem: &dyn ControlProblem, z: &[f64]) -> Result<(Adjoint, TimeGrid)> {
        let mut lambda = self.template.lambda.clone();
        for (i, &k) in self.free.iter().enumerate() {
            lambda[k] = z[i];
        }
        let t_f = match problem.horizon() {
            Horizon::Fixed(t) => t,
            Horizon::Free => z[self.free.len()],
        };
        Ok((Adjoint::new(lambda, self.template.lambda0)?, TimeGrid::new(t_f, self.steps)?))
    }

    pub fn unknowns(&self, problem: &dyn ControlProblem) -> usize {
        self.free.len() + usize::from(problem.horizon() == Horizon::Free)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShootingResult {
    /// Initial adjoint of the best iterate.
    pub lambda0_init: Adjoint,
    pub t_f: f64,
    pub unknowns: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Residual norm of every iterate, starting with the guess.
    pub residual_history: Vec<f64>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Damped Gauss–Newton iteration on the shooting residual with a forward
/// finite-difference Jacobian (`h_j = 1e-7·max(1, |z_j|)`). Each step is halved
/// up to 10 times until the residual norm decreases. With as many residuals as
/// unknowns this is Newton's method; with more it solves in the least-squares sense.
pub fn solve_shooting(
    problem: &dyn ControlProblem,
    setup: &ShootingSetup,
    guess: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<ShootingResult> {
    let m = setup.unknowns(problem);
    if guess.len() != m {
        return Err(Error::Shape(format!("{} guess values for {m} unknowns", guess.len())));
    }
    let residual = |z: &[f64]| -> Result<Vec<f64>> {
        let (adj, grid) = setup.unpack(problem, z)?;
        shooting_residual(problem, &adj, &grid)
    };
    let mut z = guess.to_vec();
    let mut r = residual(&z)?;
    if r.len() < m {
        return Err(Error::Shape(format!("{} residuals for {m} unknowns; the problem is underdetermined", r.len())));
    }
    let mut history = vec![norm(&r)];
    let mut iterations = 0;
    let mut converged = history[0] <= tol;
    while !converged && iterations < max_iter {
        let mut jac = DMatrix::zeros(r.len(), m);
        for j in 0..m {
            let h = 1e-7 * z[j].abs().max(1.0);
            let mut zp = z.clone();
            zp[j] += h;
            let rp = residual(&zp)?;
            for i in 0..r.len() {
                jac[(i, j)] = (rp[i] - r[i]) / h;
            }
        }
        let svd = jac.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > 1e-12 * smax.max(f64::MIN_POSITIVE)) {
            return Err(Error::RankDeficient(format!("singular values span [{smin:e}, {smax:e}]")));
        }
        let rhs = -DVector::from_column_slice(&r);
        let delta = svd.solve(&rhs, 0.0).map_err(|e| Error::RankDeficient(e.to_string()))?;

        let current = *history.last().expect("non-empty");
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=10 {
            let trial: Vec<f64> = z.iter().zip(delta.iter()).map(|(a, d)| a + scale * d).collect();
            if let Ok(rt) = residual(&trial) {
                let nt = norm(&rt);
                if nt.is_finite() && nt < current {
                    accepted = Some((trial, rt, nt));
                    break;
                }
            }
            scale *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some((zt, rt, nt)) => {
                z = zt;
                r = rt;
                history.push(nt);
                converged = nt <= tol;
            }
            None => break,
        }
    }
    let (adj, grid) = setup.unpack(problem, &z)?;
    Ok(ShootingResult {
        lambda0_init: adj,
        t_f: grid.t_final(),
        unknowns: z,
        residual_norm: *history.last().expect("non-empty"),
        iterations,
        converged,
        residual_history: history,
    })
}

/// Distance `‖X(t_f) − X_f‖` for unit initial adjoints
/// `p = (sinΘ cosΦ, sinΘ sinΦ, cosΘ)`, rows over `theta`, columns over `phi`.
///
/// The control only depends on the direction of `p`, so `Λ0` is irrelevant and
/// fixed to `−1`. Points whose switching function vanishes keep the zero control.
pub fn landscape_scan(
    problem: &dyn ControlProblem,
    theta: &[f64],
    phi: &[f64],
    t_f: f64,
    steps: usize,
) -> Result<DMatrix<f64>> {
    if problem.state_dim() != 3 {
        return Err(Error::Shape("landscape scans parameterize a 3-component adjoint".into()));
    }
    let Target::Exact(target) = problem.target() else {
        return Err(Error::Unsupported("landscape scans need an exact target state".into()));
    };
    let grid = TimeGrid::new(t_f, steps)?;
    let cells: Vec<(usize, usize)> = (0..theta.len()).flat_map(|i| (0..phi.len()).map(move |j| (i, j))).collect();
    let values = cells
        .par_iter()
        .map(|&(i, j)| {
            let (st, ct) = theta[i].sin_cos();
            let (sp, cp) = phi[j].sin_cos();
            let adj = Adjoint::new(vec![st * cp, st * sp, ct], -1.0)?;
            let traj = flow(problem, &adj, &grid, false)?;
            Ok(norm(&traj.final_state().iter().zip(&target).map(|(a, b)| a - b).collect::<Vec<_>>()))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(DMatrix::from_row_slice(theta.len(), phi.len(), &values))
}

/// Time-optimal Bloch-vector transfer under `H = (Δσz + u_xσx + u_yσy)/2`,
/// `Ḃ = Ω × B` with `Ω = (u_x, u_y, Δ)`. With `L = B × p`,
/// `H_P = Ω·L + Λ0` and the switching functions are `L_x` (and `L_y`).
#[derive(Clone, Debug, PartialEq)]
pub struct BlochTimeOptimal {
    pub delta: f64,
    pub two_channels: bool,
    pub admissible: Admissible,
    pub initial: [f64; 3],
    pub target: [f64; 3],
}

impl BlochTimeOptimal {
    /// Two controls in the unit disc, no drift, `(1,0,0) → (0,1,0)`.
    pub fn two_controls() -> Self {
        Self { delta: 0.0, two_channels: true, admissible: Admissible::Ball(1.0), initial: [1.0, 0.0, 0.0], target: [0.0, 1.0, 0.0] }
    }

    /// One bounded `σx` control with drift `Δ`, north to south pole.
    pub fn drift(delta: f64, u0: f64) -> Result<Self> {
        Ok(Self {
            delta,
            two_channels: false,
            admissible: Admissible::Box(ControlBounds::symmetric(&[u0])?),
            initial: [0.0, 0.0, 1.0],
            target: [0.0, 0.0, -1.0],
        })
    }

    fn omega(&self, u: &[f64]) -> [f64; 3] {
        [u[0], if self.two_channels { u[1] } else { 0.0 }, self.delta]
    }
}

fn cross(a: &[f64], b: &[f64]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

impl ControlProblem for BlochTimeOptimal {
    fn state_dim(&self) -> usize {
        3
    }

    fn control_dim(&self) -> usize {
        if self.two_channels {
            2
        } else {
            1
        }
    }

    fn initial_state(&self) -> Vec<f64> {
        self.initial.to_vec()
    }

    fn dynamics(&self, x: &[f64], u: &[f64], _t: f64) -> Vec<f64> {
        cross(&self.omega(u), x).to_vec()
    }

    fn running_cost(&self, _x: &[f64], _u: &[f64], _t: f64) -> f64 {
        1.0
    }

    fn hamiltonian_state_gradient(&self, _x: &[f64], adj: &Adjoint, u: &[f64], _t: f64) -> Vec<f64> {
        cross(&adj.lambda, &self.omega(u)).to_vec()
    }

    fn admissible(&self) -> Admissible {
        self.admissible.clone()
    }

    fn target(&self) -> Target {
        Target::Exact(self.target.to_vec())
    }

    fn horizon(&self) -> Horizon {
        Horizon::Free
    }

    fn switching(&self, x: &[f64], adj: &Adjoint, _t: f64) -> Vec<f64> {
        let l = cross(x, &adj.lambda);
        if self.two_channels {
            vec![l[0], l[1]]
        } else {
            vec![l[0]]
        }
    }
}

/// Point particle `ẋ = p/m`, `ṗ = f` from rest at the origin with cost
/// `((1 − x)² + p²)/2 + (α/2)∫f²` over a fixed horizon.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointParticleEnergy {
    pub m: f64,
    pub alpha: f64,
    pub t_f: f64,
}

impl ControlProblem for PointParticleEnergy {
    fn state_dim(&self) -> usize {
        2
    }

    fn control_dim(&self) -> usize {
        1
    }

    fn initial_state(&self) -> Vec<f64> {
        vec![0.0, 0.0]
    }

    fn dynamics(&self, x: &[f64], u: &[f64], _t: f64) -> Vec<f64> {
        vec![x[1] / self.m, u[0]]
    }

    fn running_cost(&self, _x: &[f64], u: &[f64], _t: f64) -> f64 {
        0.5 * self.alpha * u[0] * u[0]
    }

    fn hamiltonian_state_gradient(&self, _x: &[f64], adj: &Adjoint, _u: &[f64], _t: f64) -> Vec<f64> {
        vec![0.0, adj.lambda[0] / self.m]
    }

    fn admissible(&self) -> Admissible {
        Admissible::Unbounded
    }

    fn target(&self) -> Target {
        Target::Cost
    }

    fn horizon(&self) -> Horizon {
        Horizon::Fixed(self.t_f)
    }

    fn terminal_gradient(&self, x: &[f64]) -> Vec<f64> {
        vec![x[0] - 1.0, x[1]]
    }

    /// `f = −Λp/(Λ0 α)`, i.e. `Λp/α` for `Λ0 = −1`.
    fn maximize(&self, _x: &[f64], adj: &Adjoint, _t: f64) -> Result<Vec<f64>> {
        if adj.lambda0 == 0.0 {
            return Err(Error::DegenerateAdjoint("abnormal extremal: H_P is linear in an unbounded control".into()));
        }
        Ok(vec![-adj.lambda[1] / (adj.lambda0 * self.alpha)])
    }
}

/// Point particle steered to rest at the origin in minimum time with `|f| ≤ f0`.
#[derive(Clone, Debug, PartialEq)]
pub struct PointParticleTime {
    pub m: f64,
    pub f0: f64,
    pub x0: [f64; 2],
}

impl ControlProblem for PointParticleTime {
    fn state_dim(&self) -> usize {
        2
    }

    fn control_dim(&self) -> usize {
        1
    }

    fn initial_state(&self) -> Vec<f64> {
        self.x0.to_vec()
    }

    fn dynamics(&self, x: &[f64], u: &[f64], _t: f64) -> Vec<f64> {
        vec![x[1] / self.m, u[0]]
    }

    fn running_cost(&self, _x: &[f64], _u: &[f64], _t: f64) -> f64 {
        1.0
    }

    fn hamiltonian_state_gradient(&self, _x: &[f64], adj: &Adjoint, _u: &[f64], _t: f64) -> Vec<f64> {
        vec![0.0, adj.lambda[0] / self.m]
    }

    fn admissible(&self) -> Admissible {
        Admissible::Box(ControlBounds::symmetric(&[self.f0]).expect("f0 >= 0"))
    }

    fn target(&self) -> Target {
        Target::Exact(vec![0.0, 0.0])
    }

    fn horizon(&self) -> Horizon {
        Horizon::Free
    }

    fn switching(&self, _x: &[f64], adj: &Adjoint, _t: f64) -> Vec<f64> {
        vec![adj.lambda[1]]
    }
}
