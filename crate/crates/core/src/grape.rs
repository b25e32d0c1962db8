//! Gradient-based pulse optimization.
//!
//! Conventions: the abnormal multiplier is fixed to `χ0 = −1/2`, so the final
//! adjoint is `χ_N = ∂G/∂⟨ψ(t_f)|` and the gradient of the discretized cost with
//! respect to the amplitude of interval `n` is `2 Re⟨a_n|∂U_n|ψ_{n−1}⟩`, where
//! `a_n` is the backward-propagated adjoint including running-cost sources.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    check_system, forward_with, inner, step_spectra, ComplexVector, ControlBounds, ControlSystem, HermitianEigen,
    PiecewiseControl, TimeGrid, C64,
};

/// Fixed abnormal multiplier.
pub const CHI0: f64 = -0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostKind {
    /// `1 − |⟨ψ_f|ψ⟩|²`, blind to the global phase.
    G1,
    /// `1 − Re⟨ψ_f|ψ⟩`.
    G2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TerminalCost {
    pub kind: CostKind,
    pub target: ComplexVector,
}

impl TerminalCost {
    pub fn new(kind: CostKind, target: ComplexVector) -> Result<Self> {
        if (target.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!("target state must be normalized (norm {})", target.norm())));
        }
        Ok(Self { kind, target })
    }

    pub fn value(&self, psi: &ComplexVector) -> f64 {
        let overlap = inner(&self.target, psi);
        match self.kind {
            CostKind::G1 => (1.0 - overlap.norm_sqr()).max(0.0),
            CostKind::G2 => (1.0 - overlap.re).clamp(0.0, 2.0),
        }
    }

    /// `∂G/∂⟨ψ|`.
    fn bra_derivative(&self, psi: &ComplexVector) -> ComplexVector {
        match self.kind {
            CostKind::G1 => &self.target * -inner(&self.target, psi),
            CostKind::G2 => &self.target * C64::new(-0.5, 0.0),
        }
    }
}

/// `χ(t_f) = −2χ0·∂G/∂⟨ψ(t_f)|`.
pub fn adjoint_final_condition(cost: &TerminalCost, psi_tf: &ComplexVector, chi0: f64) -> ComplexVector {
    cost.bra_derivative(psi_tf) * C64::new(-2.0 * chi0, 0.0)
}

/// Penalties accumulated along the trajectory, discretized as
/// `Σ_n dt·(p0/2)|u_n|² + Σ_{n≥1} dt·w·|⟨ψ_1|ψ_n⟩|²`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunningCost {
    pub energy_weight: f64,
    pub forbidden: Option<(ComplexVector, f64)>,
}

impl RunningCost {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn energy(p0: f64) -> Result<Self> {
        if !(p0 >= 0.0) {
            return Err(Error::Parameter(format!("energy weight must be non-negative, got {p0}")));
        }
        Ok(Self { energy_weight: p0, forbidden: None })
    }

    pub fn with_forbidden_state(mut self, state: ComplexVector, weight: f64) -> Result<Self> {
        if !(weight >= 0.0) {
            return Err(Error::Parameter(format!("forbidden-state weight must be non-negative, got {weight}")));
        }
        self.forbidden = Some((state, weight));
        Ok(self)
    }

    pub fn value(&self, control: &PiecewiseControl, dt: f64, states: &[ComplexVector]) -> f64 {
        let energy = 0.5 * self.energy_weight * dt * control.values().iter().map(|u| u * u).sum::<f64>();
        let forbidden = match &self.forbidden {
            Some((phi, w)) => dt * w * states.iter().skip(1).map(|s| inner(phi, s).norm_sqr()).sum::<f64>(),
            None => 0.0,
        };
        energy + forbidden
    }

    /// Backward source `∂/∂⟨ψ_n|` of the forbidden-state penalty.
    fn source(&self, dt: f64, psi: &ComplexVector) -> Option<ComplexVector> {
        self.forbidden.as_ref().map(|(phi, w)| phi * (inner(phi, psi) * (dt * w)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Objective {
    pub terminal: TerminalCost,
    pub running: RunningCost,
}

impl Objective {
    pub fn terminal(terminal: TerminalCost) -> Self {
        Self { terminal, running: RunningCost::none() }
    }
}

/// State transfer problem handed to the optimizer.
#[derive(Clone, Copy)]
pub struct GrapeProblem<'a> {
    pub system: &'a dyn ControlSystem,
    pub psi0: &'a ComplexVector,
    pub grid: TimeGrid,
    pub objective: &'a Objective,
    pub bounds: Option<&'a ControlBounds>,
}

/// Forward and backward sweep of one control.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub cost: f64,
    pub terminal_cost: f64,
    pub running_cost: f64,
    /// `ψ_0, …, ψ_N`.
    pub states: Vec<ComplexVector>,
    /// `a_0, …, a_N`; `a_N = χ_N` plus the running-cost source at `t_f`.
    pub costates: Vec<ComplexVector>,
    spectra: Vec<HermitianEigen>,
}

pub fn evaluate(problem: &GrapeProblem, control: &PiecewiseControl) -> Result<Evaluation> {
    let GrapeProblem { system, psi0, grid, objective, .. } = *problem;
    check_system(system, psi0, control, &grid)?;
    let dt = grid.dt();
    let spectra = step_spectra(system, control);
    let states = forward_with(&spectra, dt, psi0);
    let last = states.last().expect("non-empty");
    let terminal_cost = objective.terminal.value(last);
    let running_cost = objective.running.value(control, dt, &states);

    let n = spectra.len();
    let mut costates = vec![adjoint_final_condition(&objective.terminal, last, CHI0); n + 1];
    if let Some(s) = objective.running.source(dt, last) {
        costates[n] += s;
    }
    for m in (0..n).rev() {
        let mut a = spectra[m].apply_adjoint_propagator(dt, &costates[m + 1]);
        if m > 0 {
            if let Some(s) = objective.running.source(dt, &states[m]) {
                a += s;
            }
        }
        costates[m] = a;
    }
    Ok(Evaluation { cost: terminal_cost + running_cost, terminal_cost, running_cost, states, costates, spectra })
}

/// First-order gradient: entry `(n, k)` is `2·dt·Im⟨a_{n+1}|H_k|ψ_{n+1}⟩ + dt·p0·u_{n,k}`,
/// with `H_k = ∂H/∂u_k` at `u_n` and states taken at the end of interval `n`.
pub fn gradient_piecewise(
    system: &dyn ControlSystem,
    states: &[ComplexVector],
    costates: &[ComplexVector],
    control: &PiecewiseControl,
    dt: f64,
    running: &RunningCost,
) -> Result<DMatrix<f64>> {
    let steps = control.steps();
    if states.len() != steps + 1 || costates.len() != steps + 1 {
        return Err(Error::Shape(format!(
            "{} states and {} costates for {steps} intervals",
            states.len(),
            costates.len()
        )));
    }
    let mut grad = DMatrix::zeros(steps, control.channels());
    for n in 0..steps {
        let u = control.row(n);
        for k in 0..control.channels() {
            let hk = system.hamiltonian_derivative(&u, k);
            let value = costates[n + 1].dotc(&(hk * &states[n + 1]));
            grad[(n, k)] = 2.0 * dt * value.im + dt * running.energy_weight * u[k];
        }
    }
    Ok(grad)
}

/// Exact gradient of the discretized cost, from the exact derivative of every
/// step propagator.
pub fn gradient_exact(problem: &GrapeProblem, control: &PiecewiseControl) -> Result<DMatrix<f64>> {
    let eval = evaluate(problem, control)?;
    Ok(exact_from(problem, control, &eval))
}

fn exact_from(problem: &GrapeProblem, control: &PiecewiseControl, eval: &Evaluation) -> DMatrix<f64> {
    let dt = problem.grid.dt();
    let p0 = problem.objective.running.energy_weight;
    let mut grad = DMatrix::zeros(control.steps(), control.channels());
    for (n, eig) in eval.spectra.iter().enumerate() {
        let u = control.row(n);
        let weights = eig.derivative_weights(dt);
        let alpha = eig.vectors.ad_mul(&eval.costates[n + 1]);
        let beta = eig.vectors.ad_mul(&eval.states[n]);
        for k in 0..control.channels() {
            let m = problem.system.rotated_derivative(&u, k, eig);
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..m.ncols() {
                let mut col = C64::new(0.0, 0.0);
                for i in 0..m.nrows() {
                    col += alpha[i].conj() * weights[(i, j)] * m[(i, j)];
                }
                acc += col * beta[j];
            }
            grad[(n, k)] = 2.0 * acc.re + dt * p0 * u[k];
        }
    }
    grad
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradMode {
    Approximate,
    Exact,
}

/// Gradient of the cost for `control`, in the requested mode.
pub fn cost_gradient(problem: &GrapeProblem, control: &PiecewiseControl, mode: GradMode) -> Result<(f64, DMatrix<f64>)> {
    let eval = evaluate(problem, control)?;
    let grad = match mode {
        GradMode::Exact => exact_from(problem, control, &eval),
        GradMode::Approximate => gradient_piecewise(
            problem.system,
            &eval.states,
            &eval.costates,
            control,
            problem.grid.dt(),
            &problem.objective.running,
        )?,
    };
    Ok((eval.cost, grad))
}

/// How amplitudes are generated from optimization coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Parameterization {
    /// One coefficient per interval.
    Piecewise,
    /// `a_0 + Σ_{k≤k_max} a_k cos(kωt) + b_k sin(kωt)`, `ω = 2π/t_f`; coefficients
    /// ordered `a_0, a_1..a_kmax, b_1..b_kmax`.
    Fourier { k_max: usize },
    /// `Σ_j c_j τ^j` in the normalized time `τ = t/t_f`.
    Polynomial { degree: usize },
}

impl Parameterization {
    pub fn coefficients(&self, grid: &TimeGrid) -> usize {
        match *self {
            Parameterization::Piecewise => grid.steps(),
            Parameterization::Fourier { k_max } => 2 * k_max + 1,
            Parameterization::Polynomial { degree } => degree + 1,
        }
    }

    /// Basis functions sampled at every interval start, `steps × coefficients`.
    pub fn basis(&self, grid: &TimeGrid) -> DMatrix<f64> {
        let steps = grid.steps();
        match *self {
            Parameterization::Piecewise => DMatrix::identity(steps, steps),
            Parameterization::Fourier { k_max } => {
                let omega = 2.0 * std::f64::consts::PI / grid.t_final();
                DMatrix::from_fn(steps, 2 * k_max + 1, |n, j| {
                    let t = grid.interval_start(n);
                    match j {
                        0 => 1.0,
                        j if j <= k_max => (j as f64 * omega * t).cos(),
                        j => ((j - k_max) as f64 * omega * t).sin(),
                    }
                })
            }
            Parameterization::Polynomial { degree } => DMatrix::from_fn(steps, degree + 1, |n, j| {
                (grid.interval_start(n) / grid.t_final()).powi(j as i32)
            }),
        }
    }

    /// Amplitudes `basis · coefficients` (one column per channel), unclipped.
    pub fn render(&self, coefficients: &DMatrix<f64>, grid: &TimeGrid) -> Result<PiecewiseControl> {
        if coefficients.nrows() != self.coefficients(grid) {
            return Err(Error::Shape(format!(
                "{} coefficients per channel, parameterization expects {}",
                coefficients.nrows(),
                self.coefficients(grid)
            )));
        }
        PiecewiseControl::new(self.basis(grid) * coefficients)
    }

    /// Least-squares coefficients reproducing `control` on `grid`.
    pub fn project(&self, control: &PiecewiseControl, grid: &TimeGrid) -> Result<DMatrix<f64>> {
        control.check_grid(grid)?;
        if *self == Parameterization::Piecewise {
            return Ok(control.values().clone());
        }
        let basis = self.basis(grid);
        basis
            .svd(true, true)
            .solve(control.values(), 1e-12)
            .map_err(|e| Error::Degeneracy(e.to_string()))
    }
}

/// Chain rule `∂C/∂c_j = Σ_n (∂C/∂u_n) f_j(t_n)`, one column per channel.
pub fn gradient_parameterized(grad_piecewise: &DMatrix<f64>, param: &Parameterization, grid: &TimeGrid) -> Result<DMatrix<f64>> {
    if grad_piecewise.nrows() != grid.steps() {
        return Err(Error::Shape(format!("gradient has {} rows for {} steps", grad_piecewise.nrows(), grid.steps())));
    }
    Ok(param.basis(grid).tr_mul(grad_piecewise))
}

/// `u(t) = c + A·cos(2πt/t_f)` with `A` half of the box half-width (or `0.5`
/// unconstrained) and `c` the box centre.
pub fn default_guess(grid: &TimeGrid, channels: usize, bounds: Option<&ControlBounds>) -> PiecewiseControl {
    let omega = 2.0 * std::f64::consts::PI / grid.t_final();
    PiecewiseControl::from_fn(grid, channels, |t, k| {
        let (centre, amplitude) = match bounds {
            Some(b) => (0.5 * (b.lower()[k] + b.upper()[k]), 0.5 * b.half_width(k)),
            None => (0.0, 0.5),
        };
        centre + amplitude * (omega * t).cos()
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LineSearch {
    Off,
    Wolfe { c1: f64, c2: f64 },
}

impl Default for LineSearch {
    fn default() -> Self {
        LineSearch::Wolfe { c1: 1e-4, c2: 0.9 }
    }
}

/// Search direction rule. Steepest descent is the plain update `u' = u − ε∇C`;
/// the Polak–Ribière variant mixes in the previous direction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    #[default]
    Steepest,
    PolakRibiere,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrapeConfig {
    /// Fixed step without line search; initial trial step with it.
    pub epsilon: f64,
    pub line_search: LineSearch,
    pub max_iter: usize,
    pub grad_mode: GradMode,
    pub cost_tol: f64,
    pub grad_tol: f64,
    pub direction: Direction,
}

impl Default for GrapeConfig {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            line_search: LineSearch::default(),
            max_iter: 1000,
            grad_mode: GradMode::Exact,
            cost_tol: 1e-6,
            grad_tol: 1e-8,
            direction: Direction::Steepest,
        }
    }
}

impl GrapeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Parameter(format!("step size must be finite and non-negative, got {}", self.epsilon)));
        }
        if let LineSearch::Wolfe { c1, c2 } = self.line_search {
            if !(0.0 < c1 && c1 < c2 && c2 < 1.0) {
                return Err(Error::Parameter(format!("Wolfe constants need 0 < c1 < c2 < 1, got {c1}, {c2}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    CostTol,
    GradTol,
    MaxIter,
    LineSearchFailure,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimizationTrace {
    /// Cost of every iterate, starting with the guess.
    pub cost_history: Vec<f64>,
    /// `‖∇C‖_∞` over the coefficients of every iterate.
    pub grad_norm_history: Vec<f64>,
    /// Accepted step of every update.
    pub step_history: Vec<f64>,
    #[serde(skip)]
    pub final_coefficients: DMatrix<f64>,
    #[serde(skip)]
    pub final_control: PiecewiseControl,
    pub iterations: usize,
    pub terminated_by: Termination,
}

impl OptimizationTrace {
    pub fn final_cost(&self) -> f64 {
        *self.cost_history.last().expect("at least the guess is recorded")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSearchOutcome {
    pub step: f64,
    pub value: f64,
    pub evaluations: usize,
}

/// Bracketing search for a step `ε` satisfying the sufficient-decrease condition
/// `c(ε) ≤ c(0) + c1·ε·c'(0)` (with `c(ε) < c(0)`) and the strong curvature
/// condition `|c'(ε)| ≤ c2·|c'(0)|`. `along(ε)` returns `(c(ε), c'(ε))`.
///
/// The step doubles until a bracket is found, which is then shrunk by
/// safeguarded cubic interpolation, at worst halving it. After 30 reductions the
/// best sufficient-decrease step is returned, or `Ok(None)` if there is none.
pub fn wolfe_line_search(
    mut along: impl FnMut(f64) -> Result<(f64, f64)>,
    value0: f64,
    slope0: f64,
    initial_step: f64,
    c1: f64,
    c2: f64,
) -> Result<Option<LineSearchOutcome>> {
    if !(slope0 < 0.0) {
        return Err(Error::Direction(slope0));
    }
    // Bracket ends as (step, value, slope).
    let mut lo = (0.0, value0, slope0);
    let mut hi: Option<(f64, f64, f64)> = None;
    let mut step = initial_step;
    let mut best: Option<LineSearchOutcome> = None;
    let (mut reductions, mut expansions, mut evaluations) = (0usize, 0usize, 0usize);
    loop {
        let (value, slope) = along(step)?;
        evaluations += 1;
        let decreased = value.is_finite() && value < value0 && value <= value0 + c1 * step * slope0;
        if decreased {
            if best.is_none_or(|b| value < b.value) {
                best = Some(LineSearchOutcome { step, value, evaluations });
            }
            if slope.abs() <= c2 * slope0.abs() {
                return Ok(Some(LineSearchOutcome { step, value, evaluations }));
            }
        }
        if !decreased || !slope.is_finite() || slope > 0.0 || value >= lo.1 {
            hi = Some((step, value, slope));
        } else {
            lo = (step, value, slope);
            if hi.is_none() {
                expansions += 1;
                if expansions > 30 {
                    return Ok(best.map(|b| LineSearchOutcome { evaluations, ..b }));
                }
                step *= 2.0;
                continue;
            }
        }
        reductions += 1;
        if reductions > 30 {
            return Ok(best.map(|b| LineSearchOutcome { evaluations, ..b }));
        }
        step = bracket_trial(lo, hi.expect("bracket closed above"));
    }
}

/// Minimizer of the cubic through both bracket ends, kept at least a tenth of the
/// bracket away from either end; bisection when the data are unusable.
fn bracket_trial(a: (f64, f64, f64), b: (f64, f64, f64)) -> f64 {
    let (x0, f0, g0) = a;
    let (x1, f1, g1) = b;
    let width = x1 - x0;
    let mid = 0.5 * (x0 + x1);
    if !(f1.is_finite() && g1.is_finite()) || width == 0.0 {
        return mid;
    }
    let d1 = g0 + g1 - 3.0 * (f0 - f1) / (x0 - x1);
    let disc = d1 * d1 - g0 * g1;
    if disc < 0.0 {
        return mid;
    }
    let d2 = width.signum() * disc.sqrt();
    let x = x1 - width * (g1 + d2 - d1) / (g1 - g0 + 2.0 * d2);
    let (lo, hi) = (x0.min(x1), x0.max(x1));
    let margin = 0.1 * (hi - lo);
    if x.is_finite() {
        x.clamp(lo + margin, hi - margin)
    } else {
        mid
    }
}

struct Iterate {
    coefficients: DMatrix<f64>,
    control: PiecewiseControl,
    cost: f64,
    gradient: DMatrix<f64>,
}

fn mask_and_chain(
    problem: &GrapeProblem,
    param: &Parameterization,
    raw: &PiecewiseControl,
    grad: DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let mut grad = grad;
    if let Some(b) = problem.bounds {
        for n in 0..grad.nrows() {
            for k in 0..grad.ncols() {
                let u = raw.values()[(n, k)];
                if u < b.lower()[k] || u > b.upper()[k] {
                    grad[(n, k)] = 0.0;
                }
            }
        }
    }
    gradient_parameterized(&grad, param, &problem.grid)
}

fn clip(control: PiecewiseControl, bounds: Option<&ControlBounds>) -> Result<PiecewiseControl> {
    match bounds {
        Some(b) => control.clipped_to(b.clone()),
        None => Ok(control),
    }
}

fn evaluate_coefficients(
    problem: &GrapeProblem,
    param: &Parameterization,
    coefficients: DMatrix<f64>,
    mode: GradMode,
) -> Result<Iterate> {
    let raw = param.render(&coefficients, &problem.grid)?;
    let control = clip(raw.clone(), problem.bounds)?;
    let (cost, grad) = cost_gradient(problem, &control, mode)?;
    let gradient = mask_and_chain(problem, param, &raw, grad)?;
    Ok(Iterate { coefficients, control, cost, gradient })
}

fn project_coefficients(param: &Parameterization, bounds: Option<&ControlBounds>, mut c: DMatrix<f64>) -> DMatrix<f64> {
    if let (Parameterization::Piecewise, Some(b)) = (param, bounds) {
        for k in 0..c.ncols() {
            for z in c.column_mut(k).iter_mut() {
                *z = b.clip(k, *z);
            }
        }
    }
    c
}

fn sup_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Iterates `c' = c + ε·d` with `d = −∇C` (or a Polak–Ribière direction),
/// clipping to the box after every update, until a termination rule fires.
pub fn grape_optimize(
    problem: &GrapeProblem,
    param: &Parameterization,
    guess: &DMatrix<f64>,
    config: &GrapeConfig,
) -> Result<OptimizationTrace> {
    config.validate()?;
    let mode = config.grad_mode;
    let start = project_coefficients(param, problem.bounds, guess.clone());
    let mut current = evaluate_coefficients(problem, param, start, mode)?;
    let mut cost_history = vec![current.cost];
    let mut grad_norm_history = vec![sup_norm(&current.gradient)];
    let mut step_history = Vec::new();
    let mut previous: Option<(DMatrix<f64>, DMatrix<f64>)> = None;
    let mut step = config.epsilon;
    let mut previous_slope: Option<f64> = None;
    let mut iterations = 0;

    let terminated_by = loop {
        if current.cost <= config.cost_tol {
            break Termination::CostTol;
        }
        if sup_norm(&current.gradient) <= config.grad_tol {
            break Termination::GradTol;
        }
        if iterations >= config.max_iter {
            break Termination::MaxIter;
        }

        let steepest = -&current.gradient;
        let mut direction = steepest.clone();
        if let (Direction::PolakRibiere, Some((g_prev, d_prev))) = (config.direction, &previous) {
            let g = &current.gradient;
            let beta = (g.dot(&(g - g_prev)) / g_prev.dot(g_prev)).max(0.0);
            if beta.is_finite() {
                direction += d_prev * beta;
            }
            if direction.dot(&current.gradient) >= 0.0 {
                direction = steepest;
            }
        }

        let next = match config.line_search {
            LineSearch::Off => {
                let c = project_coefficients(param, problem.bounds, &current.coefficients + &direction * step);
                evaluate_coefficients(problem, param, c, mode)?
            }
            LineSearch::Wolfe { c1, c2 } => {
                if step == 0.0 {
                    evaluate_coefficients(problem, param, current.coefficients.clone(), mode)?
                } else {
                    let slope0 = current.gradient.dot(&direction);
                    // Carry the previous step over, scaled by the change of the
                    // directional derivative.
                    if let Some(prev) = previous_slope {
                        step = (step * prev / slope0).clamp(0.1 * step, 10.0 * step);
                    }
                    previous_slope = Some(slope0);
                    let mut accepted: Option<Iterate> = None;
                    let outcome = wolfe_line_search(
                        |eps| {
                            let c = project_coefficients(param, problem.bounds, &current.coefficients + &direction * eps);
                            let trial = evaluate_coefficients(problem, param, c, mode)?;
                            let out = (trial.cost, trial.gradient.dot(&direction));
                            if accepted.as_ref().is_none_or(|a| trial.cost < a.cost) {
                                accepted = Some(trial);
                            }
                            Ok(out)
                        },
                        current.cost,
                        slope0,
                        step,
                        c1,
                        c2,
                    )?;
                    match (outcome, accepted) {
                        (Some(o), Some(best)) if best.cost < current.cost => {
                            step = o.step;
                            best
                        }
                        _ => break Termination::LineSearchFailure,
                    }
                }
            }
        };

        previous = Some((current.gradient.clone(), direction));
        iterations += 1;
        step_history.push(step);
        cost_history.push(next.cost);
        grad_norm_history.push(sup_norm(&next.gradient));
        current = next;
    };

    Ok(OptimizationTrace {
        cost_history,
        grad_norm_history,
        step_history,
        final_coefficients: current.coefficients,
        final_control: current.control,
        iterations,
        terminated_by,
    })
}
