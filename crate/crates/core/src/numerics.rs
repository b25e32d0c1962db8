//! Complex linear algebra, piecewise-constant Schrödinger propagation and exact
//! propagator derivatives.
//!
//! Hamiltonians are dense `dim × dim` complex matrices. Physical Hamiltonians are
//! Hermitian and are exponentiated through their eigendecomposition; everything
//! else (notably the block matrix used for exact derivatives) goes through a
//! Padé(13) scaling-and-squaring exponential.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type ComplexVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

const HERMITIAN_TOL: f64 = 1e-12;

/// A square complex matrix together with a flag recording whether it is Hermitian.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    entries: CMatrix,
    hermitian: bool,
}

impl Operator {
    /// Wraps a general square matrix. The Hermitian flag is detected.
    pub fn new(entries: CMatrix) -> Result<Self> {
        check_square(&entries)?;
        check_finite_matrix(&entries)?;
        let hermitian = is_hermitian(&entries, HERMITIAN_TOL);
        Ok(Self { entries, hermitian })
    }

    /// Wraps a matrix that must be Hermitian within `1e-12`.
    pub fn hermitian(entries: CMatrix) -> Result<Self> {
        let op = Self::new(entries)?;
        if !op.hermitian {
            return Err(Error::Parameter("matrix is not Hermitian".into()));
        }
        Ok(op)
    }

    pub fn zeros(dim: usize) -> Self {
        Self { entries: CMatrix::zeros(dim, dim), hermitian: true }
    }

    pub fn identity(dim: usize) -> Self {
        Self { entries: CMatrix::identity(dim, dim), hermitian: true }
    }

    pub fn pauli_x() -> Self {
        Self {
            entries: CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
            hermitian: true,
        }
    }

    pub fn pauli_y() -> Self {
        Self {
            entries: CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]),
            hermitian: true,
        }
    }

    pub fn pauli_z() -> Self {
        Self {
            entries: CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
            hermitian: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_entries(self) -> CMatrix {
        self.entries
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// Multiplies by a real scalar; Hermiticity is preserved.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            entries: &self.entries * C64::new(factor, 0.0),
            hermitian: self.hermitian,
        }
    }

    pub fn plus(&self, other: &Operator) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::Shape(format!(
                "operator dims {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(Self {
            entries: &self.entries + &other.entries,
            hermitian: self.hermitian && other.hermitian,
        })
    }

    /// `max |U†U − I|` over all entries.
    pub fn unitarity_defect(&self) -> f64 {
        let n = self.dim();
        let prod = self.entries.adjoint() * &self.entries;
        max_abs_diff(&prod, &CMatrix::identity(n, n))
    }
}

fn check_square(m: &CMatrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Shape(format!("matrix is {}x{}, expected square", m.nrows(), m.ncols())));
    }
    Ok(())
}

fn check_finite_matrix(m: &CMatrix) -> Result<()> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NumericInput("matrix has non-finite entries".into()));
    }
    Ok(())
}

pub fn is_hermitian(m: &CMatrix, tol: f64) -> bool {
    m.nrows() == m.ncols() && max_abs_diff(m, &m.adjoint()) <= tol
}

/// Largest elementwise modulus of `a − b`.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// `⟨a|b⟩`, antilinear in the first argument.
pub fn inner(a: &ComplexVector, b: &ComplexVector) -> C64 {
    a.dotc(b)
}

/// Returns a unit-norm copy of `v`.
pub fn normalized(v: &ComplexVector) -> Result<ComplexVector> {
    let n = v.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::NumericInput("cannot normalize a zero or non-finite vector".into()));
    }
    Ok(v.unscale(n))
}

/// Canonical basis vector `|index⟩` of dimension `dim`.
pub fn basis_state(dim: usize, index: usize) -> ComplexVector {
    let mut v = ComplexVector::zeros(dim);
    v[index] = ONE;
    v
}

/// Uniform time discretization of `[0, t_final]` into `steps` intervals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    t_final: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Parameter("time grid needs at least one step".into()));
        }
        if !(t_final > 0.0) || !t_final.is_finite() {
            return Err(Error::Parameter(format!("time grid duration must be positive, got {t_final}")));
        }
        Ok(Self { t_final, steps })
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.steps as f64
    }

    /// Start of interval `n` (0-based), `n · dt`.
    pub fn interval_start(&self, n: usize) -> f64 {
        n as f64 * self.dt()
    }

    /// The `steps + 1` grid nodes `0, dt, …, t_final`.
    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.steps).map(|n| self.interval_start(n)).collect()
    }

    /// Same number of steps with every duration multiplied by `factor`.
    pub fn rescaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.t_final * factor, self.steps)
    }
}

/// Lower/upper amplitude bound per control channel.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlBounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ControlBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Shape("bound vectors differ in length".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::Parameter("lower bound exceeds upper bound".into()));
        }
        Ok(Self { lower, upper })
    }

    /// `|u_k| ≤ bound` for each channel.
    pub fn symmetric(bounds: &[f64]) -> Result<Self> {
        Self::new(bounds.iter().map(|b| -b).collect(), bounds.to_vec())
    }

    pub fn channels(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, k: usize, value: f64) -> bool {
        value >= self.lower[k] && value <= self.upper[k]
    }

    pub fn clip(&self, k: usize, value: f64) -> f64 {
        value.clamp(self.lower[k], self.upper[k])
    }

    /// Half the width of channel `k`'s admissible interval.
    pub fn half_width(&self, k: usize) -> f64 {
        0.5 * (self.upper[k] - self.lower[k])
    }
}

/// Piecewise-constant control: row `n` holds the channel amplitudes on
/// `[n·dt, (n+1)·dt)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseControl {
    values: DMatrix<f64>,
    bounds: Option<ControlBounds>,
}

impl PiecewiseControl {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::Shape("control needs at least one step and one channel".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericInput("control has non-finite values".into()));
        }
        Ok(Self { values, bounds: None })
    }

    pub fn zeros(steps: usize, channels: usize) -> Self {
        Self { values: DMatrix::zeros(steps, channels), bounds: None }
    }

    /// Samples `f(t)` at the start of every interval of `grid`.
    pub fn from_fn(grid: &TimeGrid, channels: usize, f: impl Fn(f64, usize) -> f64) -> Self {
        let values = DMatrix::from_fn(grid.steps(), channels, |n, k| f(grid.interval_start(n), k));
        Self { values, bounds: None }
    }

    /// Attaches a box constraint; every value must already lie inside it.
    pub fn with_bounds(mut self, bounds: ControlBounds) -> Result<Self> {
        if bounds.channels() != self.channels() {
            return Err(Error::Shape("bounds and control differ in channel count".into()));
        }
        for n in 0..self.steps() {
            for k in 0..self.channels() {
                if !bounds.contains(k, self.values[(n, k)]) {
                    return Err(Error::Parameter(format!(
                        "control value {} at step {n}, channel {k} is outside the admissible box",
                        self.values[(n, k)]
                    )));
                }
            }
        }
        self.bounds = Some(bounds);
        Ok(self)
    }

    /// Clips into `bounds` and attaches them.
    pub fn clipped_to(mut self, bounds: ControlBounds) -> Result<Self> {
        if bounds.channels() != self.channels() {
            return Err(Error::Shape("bounds and control differ in channel count".into()));
        }
        for n in 0..self.steps() {
            for k in 0..self.channels() {
                self.values[(n, k)] = bounds.clip(k, self.values[(n, k)]);
            }
        }
        self.bounds = Some(bounds);
        Ok(self)
    }

    pub fn steps(&self) -> usize {
        self.values.nrows()
    }

    pub fn channels(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn bounds(&self) -> Option<&ControlBounds> {
        self.bounds.as_ref()
    }

    pub fn row(&self, n: usize) -> Vec<f64> {
        self.values.row(n).iter().copied().collect()
    }

    pub fn check_grid(&self, grid: &TimeGrid) -> Result<()> {
        if self.steps() != grid.steps() {
            return Err(Error::Shape(format!(
                "control has {} rows but the grid has {} steps",
                self.steps(),
                grid.steps()
            )));
        }
        Ok(())
    }
}

/// Eigendecomposition `H = V diag(λ) V†` of a Hermitian matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: DVector<f64>,
    pub vectors: CMatrix,
}

impl HermitianEigen {
    pub fn new(h: &CMatrix) -> Self {
        if h.nrows() == 2 {
            return eigen_2x2(h);
        }
        let eig = h.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
        let vectors = CMatrix::from_columns(
            &order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect::<Vec<_>>(),
        );
        Self { values, vectors }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `exp(scale · H)`.
    pub fn exp(&self, scale: C64) -> CMatrix {
        let phases: Vec<C64> = self.values.iter().map(|&l| (scale * l).exp()).collect();
        self.reconstruct(&phases)
    }

    /// `exp(−i·dt·H)`.
    pub fn propagator(&self, dt: f64) -> CMatrix {
        self.exp(C64::new(0.0, -dt))
    }

    /// Exact derivative of `exp(−i·dt·H(u))` along a perturbation `dH = ∂H/∂u`,
    /// from the divided differences of `λ ↦ exp(−i·dt·λ)` in the eigenbasis.
    pub fn propagator_derivative(&self, dt: f64, dh: &CMatrix) -> CMatrix {
        let v = &self.vectors;
        let rotated = (v.adjoint() * dh * v).component_mul(&self.derivative_weights(dt));
        v * rotated * v.adjoint()
    }

    /// Divided differences `W_ij` of `λ ↦ exp(−i·dt·λ)`, so that
    /// `∂U = V (W ∘ V†∂H V) V†`.
    pub fn derivative_weights(&self, dt: f64) -> CMatrix {
        let n = self.dim();
        CMatrix::from_fn(n, n, |i, j| {
            let (li, lj) = (self.values[i], self.values[j]);
            C64::new(0.0, -dt) * C64::new(0.0, -dt * 0.5 * (li + lj)).exp() * sinc(0.5 * dt * (li - lj))
        })
    }

    /// `exp(−i·dt·H) v` without forming the propagator.
    pub fn apply_propagator(&self, dt: f64, v: &ComplexVector) -> ComplexVector {
        let mut coords = self.vectors.ad_mul(v);
        for (c, &l) in coords.iter_mut().zip(self.values.iter()) {
            *c *= C64::new(0.0, -dt * l).exp();
        }
        &self.vectors * coords
    }

    /// `exp(−i·dt·H)† v`.
    pub fn apply_adjoint_propagator(&self, dt: f64, v: &ComplexVector) -> ComplexVector {
        self.apply_propagator(-dt, v)
    }

    fn reconstruct(&self, diag: &[C64]) -> CMatrix {
        let mut scaled = self.vectors.clone();
        for (j, d) in diag.iter().enumerate() {
            for z in scaled.column_mut(j).iter_mut() {
                *z *= *d;
            }
        }
        scaled * self.vectors.adjoint()
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

fn eigen_2x2(h: &CMatrix) -> HermitianEigen {
    let a = h[(0, 0)].re;
    let d = h[(1, 1)].re;
    let b = h[(0, 1)];
    let mean = 0.5 * (a + d);
    let radius = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
    let values = [mean - radius, mean + radius];
    if b.norm() == 0.0 {
        let vectors = if a <= d {
            CMatrix::identity(2, 2)
        } else {
            CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
        };
        return HermitianEigen { values: DVector::from_row_slice(&[a.min(d), a.max(d)]), vectors };
    }
    // Both rows of (H − λ) give an eigenvector; keep the better-conditioned one.
    let column = |l: f64| {
        let from_first = [b, C64::new(l - a, 0.0)];
        let from_second = [C64::new(l - d, 0.0), b.conj()];
        let n1 = (from_first[0].norm_sqr() + from_first[1].norm_sqr()).sqrt();
        let n2 = (from_second[0].norm_sqr() + from_second[1].norm_sqr()).sqrt();
        if n1 >= n2 {
            [from_first[0] / n1, from_first[1] / n1]
        } else {
            [from_second[0] / n2, from_second[1] / n2]
        }
    };
    let v0 = column(values[0]);
    let v1 = column(values[1]);
    HermitianEigen {
        values: DVector::from_row_slice(&values),
        vectors: CMatrix::from_row_slice(2, 2, &[v0[0], v1[0], v0[1], v1[1]]),
    }
}

/// `exp(scale · A)`.
///
/// Hermitian inputs with a purely real or purely imaginary scale go through the
/// eigendecomposition; all others through Padé(13) scaling and squaring.
pub fn matrix_exponential(a: &Operator, scale: C64) -> Result<Operator> {
    if !scale.re.is_finite() || !scale.im.is_finite() {
        return Err(Error::NumericInput(format!("exponential scale {scale} is not finite")));
    }
    let entries = if a.is_hermitian() && (scale.re == 0.0 || scale.im == 0.0) {
        HermitianEigen::new(a.entries()).exp(scale)
    } else {
        expm_pade(&(a.entries() * scale))
    };
    check_finite_matrix(&entries)?;
    let hermitian = is_hermitian(&entries, HERMITIAN_TOL);
    Ok(Operator { entries, hermitian })
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Padé(13) scaling-and-squaring exponential of a general complex matrix.
pub fn expm_pade(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    if n == 0 {
        return a.clone();
    }
    let norm1 = (0..n)
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    const THETA13: f64 = 5.371920351148152;
    let squarings = if norm1 > THETA13 { (norm1 / THETA13).log2().ceil() as i32 } else { 0 };
    let a = a * C64::new(0.5f64.powi(squarings), 0.0);

    let ident = CMatrix::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let c = |k: usize| C64::new(PADE13[k], 0.0);
    let u_inner = &a6 * c(13) + &a4 * c(11) + &a2 * c(9);
    let u = &a * (&a6 * u_inner + &a6 * c(7) + &a4 * c(5) + &a2 * c(3) + &ident * c(1));
    let v_inner = &a6 * c(12) + &a4 * c(10) + &a2 * c(8);
    let v = &a6 * v_inner + &a6 * c(6) + &a4 * c(4) + &a2 * c(2) + &ident * c(0);

    let numerator = &v + &u;
    let denominator = &v - &u;
    let mut result = denominator
        .lu()
        .solve(&numerator)
        .expect("Padé denominator is nonsingular for scaled arguments");
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// A controlled Hamiltonian `H(u)` on a finite Hilbert space.
///
/// Implementors provide `H(u)` and `∂H/∂u_k`; the eigendecomposition hook can be
/// overridden when structure allows something cheaper than a dense solve.
pub trait ControlSystem: Sync {
    fn dim(&self) -> usize;

    fn channels(&self) -> usize;

    fn hamiltonian(&self, u: &[f64]) -> CMatrix;

    fn hamiltonian_derivative(&self, u: &[f64], channel: usize) -> CMatrix;

    fn eigen(&self, u: &[f64]) -> HermitianEigen {
        HermitianEigen::new(&self.hamiltonian(u))
    }

    /// `V† ∂H/∂u_k V` in the eigenbasis `eigen` returned for the same `u`.
    fn rotated_derivative(&self, u: &[f64], channel: usize, eigen: &HermitianEigen) -> CMatrix {
        let v = &eigen.vectors;
        v.adjoint() * self.hamiltonian_derivative(u, channel) * v
    }
}

/// `H(u) = H0 + Σ_k u_k H_k`.
#[derive(Clone, Debug)]
pub struct BilinearSystem {
    drift: Operator,
    controls: Vec<Operator>,
}

impl BilinearSystem {
    pub fn new(drift: Operator, controls: Vec<Operator>) -> Result<Self> {
        if !drift.is_hermitian() || controls.iter().any(|h| !h.is_hermitian()) {
            return Err(Error::Parameter("Hamiltonian terms must be Hermitian".into()));
        }
        if controls.iter().any(|h| h.dim() != drift.dim()) {
            return Err(Error::Shape("control Hamiltonians differ in dimension from the drift".into()));
        }
        Ok(Self { drift, controls })
    }

    pub fn drift(&self) -> &Operator {
        &self.drift
    }

    pub fn controls(&self) -> &[Operator] {
        &self.controls
    }
}

impl ControlSystem for BilinearSystem {
    fn dim(&self) -> usize {
        self.drift.dim()
    }

    fn channels(&self) -> usize {
        self.controls.len()
    }

    fn hamiltonian(&self, u: &[f64]) -> CMatrix {
        let mut h = self.drift.entries().clone();
        for (hk, &uk) in self.controls.iter().zip(u) {
            h += hk.entries() * C64::new(uk, 0.0);
        }
        h
    }

    fn hamiltonian_derivative(&self, _u: &[f64], channel: usize) -> CMatrix {
        self.controls[channel].entries().clone()
    }
}

/// `exp(−i·dt·(H0 + Σ u_k H_k))`.
pub fn step_propagator(h0: &Operator, hk: &[Operator], u: &[f64], dt: f64) -> Result<Operator> {
    if hk.len() != u.len() {
        return Err(Error::Shape(format!("{} control Hamiltonians but {} amplitudes", hk.len(), u.len())));
    }
    if !(dt > 0.0) {
        return Err(Error::Parameter(format!("time step must be positive, got {dt}")));
    }
    let system = BilinearSystem::new(h0.clone(), hk.to_vec())?;
    let entries = system.eigen(u).propagator(dt);
    Ok(Operator { entries, hermitian: false })
}

pub(crate) fn check_system(system: &dyn ControlSystem, state: &ComplexVector, control: &PiecewiseControl, grid: &TimeGrid) -> Result<()> {
    control.check_grid(grid)?;
    if control.channels() != system.channels() {
        return Err(Error::Shape(format!(
            "control has {} channels, system expects {}",
            control.channels(),
            system.channels()
        )));
    }
    if state.len() != system.dim() {
        return Err(Error::Shape(format!("state has dim {}, system has dim {}", state.len(), system.dim())));
    }
    Ok(())
}

/// Eigendecompositions of `H(u_n)` for every interval.
pub fn step_spectra(system: &dyn ControlSystem, control: &PiecewiseControl) -> Vec<HermitianEigen> {
    (0..control.steps()).map(|n| system.eigen(&control.row(n))).collect()
}

/// Propagates `ψ_0` through every interval; returns `ψ_0, …, ψ_N`.
pub fn propagate_forward(
    system: &dyn ControlSystem,
    psi0: &ComplexVector,
    control: &PiecewiseControl,
    grid: &TimeGrid,
) -> Result<Vec<ComplexVector>> {
    check_system(system, psi0, control, grid)?;
    Ok(forward_with(&step_spectra(system, control), grid.dt(), psi0))
}

pub(crate) fn forward_with(spectra: &[HermitianEigen], dt: f64, psi0: &ComplexVector) -> Vec<ComplexVector> {
    let mut states = Vec::with_capacity(spectra.len() + 1);
    states.push(psi0.clone());
    for e in spectra {
        let next = e.apply_propagator(dt, states.last().expect("non-empty"));
        states.push(next);
    }
    states
}

/// Propagates `χ(t_f)` backwards; returns `χ_0, …, χ_N` in time order, with
/// `χ_n = U_{n+1}† ⋯ U_N† χ_N`.
pub fn propagate_backward(
    system: &dyn ControlSystem,
    chi_tf: &ComplexVector,
    control: &PiecewiseControl,
    grid: &TimeGrid,
) -> Result<Vec<ComplexVector>> {
    check_system(system, chi_tf, control, grid)?;
    let spectra = step_spectra(system, control);
    let mut states = vec![chi_tf.clone(); spectra.len() + 1];
    for n in (0..spectra.len()).rev() {
        states[n] = spectra[n].apply_adjoint_propagator(grid.dt(), &states[n + 1]);
    }
    Ok(states)
}

/// Returns `(U, ∂U/∂u)` read off the blocks of `exp(−i·dt·[[H, 0], [∂H/∂u, H]])`.
pub fn augmented_step(h: &Operator, dh_du: &Operator, dt: f64) -> Result<(Operator, Operator)> {
    if h.dim() != dh_du.dim() {
        return Err(Error::Shape(format!("H has dim {}, dH/du has dim {}", h.dim(), dh_du.dim())));
    }
    let d = h.dim();
    let mut block = CMatrix::zeros(2 * d, 2 * d);
    block.view_mut((0, 0), (d, d)).copy_from(h.entries());
    block.view_mut((d, d), (d, d)).copy_from(h.entries());
    block.view_mut((d, 0), (d, d)).copy_from(dh_du.entries());
    let full = expm_pade(&(block * C64::new(0.0, -dt)));
    check_finite_matrix(&full)?;
    let u = full.view((0, 0), (d, d)).into_owned();
    let du = full.view((d, 0), (d, d)).into_owned();
    Ok((
        Operator { entries: u, hermitian: false },
        Operator { hermitian: is_hermitian(&du, HERMITIAN_TOL), entries: du },
    ))
}

/// One classical fourth-order Runge-Kutta step for `ẏ = f(t, y)`.
pub fn rk4_step(f: &mut impl FnMut(f64, &[f64]) -> Vec<f64>, t: f64, y: &[f64], dt: f64) -> Vec<f64> {
    let shifted = |base: &[f64], k: &[f64], h: f64| -> Vec<f64> { base.iter().zip(k).map(|(a, b)| a + h * b).collect() };
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * dt, &shifted(y, &k1, 0.5 * dt));
    let k3 = f(t + 0.5 * dt, &shifted(y, &k2, 0.5 * dt));
    let k4 = f(t + dt, &shifted(y, &k3, dt));
    (0..y.len())
        .map(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}
