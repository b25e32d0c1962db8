//! Concrete control systems: the driven two-level system and a condensate in a
//! phase-modulated 1-D optical lattice, plus target-state factories and
//! robustness sweeps.
//!
//! Units are dimensionless. For the lattice, energies are in units of the lattice
//! energy `E_L`, time in `ħ/E_L` and position in `1/k_L`, so one lattice cell is
//! `x ∈ [−π, π)`.

use std::f64::consts::PI;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    inner, propagate_forward, CMatrix, ComplexVector, ControlBounds, ControlSystem, HermitianEigen, Operator,
    PiecewiseControl, TimeGrid, C64, ONE, ZERO,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn pauli(self) -> Operator {
        match self {
            Axis::X => Operator::pauli_x(),
            Axis::Y => Operator::pauli_y(),
            Axis::Z => Operator::pauli_z(),
        }
    }
}

/// `H = (Δ/2)σz + Σ_k (u_k/2)σ_{axis_k}` with `|u_k| ≤ bound_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoLevelSystem {
    delta: f64,
    channels: Vec<(Axis, f64)>,
}

impl TwoLevelSystem {
    pub fn new(delta: f64, channels: Vec<(Axis, f64)>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::Parameter("a two-level system needs at least one control channel".into()));
        }
        if !delta.is_finite() || channels.iter().any(|(_, b)| !(*b >= 0.0)) {
            return Err(Error::Parameter("drift must be finite and channel bounds non-negative".into()));
        }
        Ok(Self { delta, channels })
    }

    /// One `σx` channel bounded by `u0`, drift `Δ`.
    pub fn with_drift(delta: f64, u0: f64) -> Result<Self> {
        Self::new(delta, vec![(Axis::X, u0)])
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn channel_list(&self) -> &[(Axis, f64)] {
        &self.channels
    }

    pub fn bounds(&self) -> ControlBounds {
        let b: Vec<f64> = self.channels.iter().map(|(_, b)| *b).collect();
        ControlBounds::symmetric(&b).expect("bounds validated at construction")
    }
}

pub fn two_level_hamiltonian(sys: &TwoLevelSystem, u: &[f64]) -> Result<Operator> {
    if u.len() != sys.channels.len() {
        return Err(Error::Shape(format!("{} amplitudes for {} channels", u.len(), sys.channels.len())));
    }
    Operator::hermitian(sys.hamiltonian(u))
}

impl ControlSystem for TwoLevelSystem {
    fn dim(&self) -> usize {
        2
    }

    fn channels(&self) -> usize {
        self.channels.len()
    }

    fn hamiltonian(&self, u: &[f64]) -> CMatrix {
        let mut h = Operator::pauli_z().into_entries() * C64::new(0.5 * self.delta, 0.0);
        for ((axis, _), &uk) in self.channels.iter().zip(u) {
            h += axis.pauli().entries() * C64::new(0.5 * uk, 0.0);
        }
        h
    }

    fn hamiltonian_derivative(&self, _u: &[f64], channel: usize) -> CMatrix {
        self.channels[channel].0.pauli().into_entries() * C64::new(0.5, 0.0)
    }
}

/// `|↑⟩ = (1, 0)`.
pub fn spin_up() -> ComplexVector {
    ComplexVector::from_row_slice(&[ONE, ZERO])
}

/// `|↓⟩ = (0, 1)`.
pub fn spin_down() -> ComplexVector {
    ComplexVector::from_row_slice(&[ZERO, ONE])
}

/// Bloch coordinates `(⟨σx⟩, ⟨σy⟩, ⟨σz⟩)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let b = Self { x, y, z };
        if b.norm() > 1.0 + 1e-9 {
            return Err(Error::Parameter(format!("Bloch vector norm {} exceeds 1", b.norm())));
        }
        Ok(b)
    }

    pub fn from_state(psi: &ComplexVector) -> Self {
        let (a, b) = (psi[0], psi[1]);
        let cross = a.conj() * b;
        Self { x: 2.0 * cross.re, y: 2.0 * cross.im, z: a.norm_sqr() - b.norm_sqr() }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn distance(&self, other: &BlochVector) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2)).sqrt()
    }
}

/// Time derivative of the Bloch vector under `H = (Δσz + u_x σx + u_y σy)/2`.
pub fn bloch_rhs(b: &BlochVector, delta: f64, u_x: f64, u_y: f64) -> [f64; 3] {
    [
        -delta * b.y + u_y * b.z,
        delta * b.x - u_x * b.z,
        u_x * b.y - u_y * b.x,
    ]
}

/// Lattice parameters for one quasimomentum block, truncated to `|n| ≤ n_max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BecLattice {
    s: f64,
    q: f64,
    n_max: usize,
}

impl BecLattice {
    pub fn new(s: f64, q: f64, n_max: usize) -> Result<Self> {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(Error::Parameter(format!("lattice depth must be non-negative, got {s}")));
        }
        if !(-0.5..=0.5).contains(&q) {
            return Err(Error::Parameter(format!("quasimomentum {q} outside [-0.5, 0.5]")));
        }
        if n_max < 1 {
            return Err(Error::Parameter("truncation order n_max must be at least 1".into()));
        }
        Ok(Self { s, q, n_max })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        2 * self.n_max + 1
    }

    /// Momentum index `n` of basis position `i`.
    pub fn momentum_index(&self, i: usize) -> i64 {
        i as i64 - self.n_max as i64
    }

    /// Basis position of momentum index `n`, if inside the truncation.
    pub fn position_of(&self, n: i64) -> Option<usize> {
        let i = n + self.n_max as i64;
        (0..self.dim() as i64).contains(&i).then_some(i as usize)
    }

    pub fn with_depth(&self, s: f64) -> Result<Self> {
        Self::new(s, self.q, self.n_max)
    }

    pub fn with_quasimomentum(&self, q: f64) -> Result<Self> {
        Self::new(self.s, q, self.n_max)
    }
}

/// `(H0, H1, H2)` such that `H(φ) = H0 + cos φ·H1 + sin φ·H2` in the plane-wave basis.
pub fn bec_hamiltonians(lat: &BecLattice) -> (Operator, Operator, Operator) {
    let d = lat.dim();
    let quarter = lat.s / 4.0;
    let h0 = CMatrix::from_fn(d, d, |i, j| {
        if i == j {
            let k = lat.momentum_index(i) as f64 + lat.q;
            C64::new(k * k, 0.0)
        } else {
            ZERO
        }
    });
    let h1 = CMatrix::from_fn(d, d, |i, j| {
        if i.abs_diff(j) == 1 {
            C64::new(-quarter, 0.0)
        } else {
            ZERO
        }
    });
    let h2 = CMatrix::from_fn(d, d, |i, j| {
        if i == j + 1 {
            C64::new(0.0, -quarter)
        } else if j == i + 1 {
            C64::new(0.0, quarter)
        } else {
            ZERO
        }
    });
    (
        Operator::hermitian(h0).expect("diagonal real"),
        Operator::hermitian(h1).expect("real symmetric"),
        Operator::hermitian(h2).expect("Hermitian by construction"),
    )
}

/// The lattice driven through its phase, `u = φ`.
///
/// `H(φ) = D(φ) H(0) D(φ)†` with `D = diag(e^{inφ})`, so a single eigendecomposition
/// of `H(0)` serves every control value. Likewise `∂H/∂φ = i[N, H(φ)]` with
/// `N = diag(n)` has a φ-independent matrix in the co-rotating eigenbasis.
#[derive(Clone, Debug)]
pub struct BecSystem {
    lattice: BecLattice,
    h0: CMatrix,
    h1: CMatrix,
    h2: CMatrix,
    rest: HermitianEigen,
    rotated_generator: CMatrix,
}

impl BecSystem {
    pub fn new(lattice: BecLattice) -> Self {
        let (h0, h1, h2) = bec_hamiltonians(&lattice);
        let (h0, h1, h2) = (h0.into_entries(), h1.into_entries(), h2.into_entries());
        let rest = HermitianEigen::new(&(&h0 + &h1));
        let number = CMatrix::from_fn(lattice.dim(), lattice.dim(), |i, j| {
            if i == j {
                C64::new(lattice.momentum_index(i) as f64, 0.0)
            } else {
                ZERO
            }
        });
        let k = rest.vectors.adjoint() * number * &rest.vectors;
        let l = &rest.values;
        let rotated_generator = CMatrix::from_fn(k.nrows(), k.ncols(), |i, j| k[(i, j)] * C64::new(0.0, l[j] - l[i]));
        Self { lattice, h0, h1, h2, rest, rotated_generator }
    }

    pub fn lattice(&self) -> &BecLattice {
        &self.lattice
    }
}

impl ControlSystem for BecSystem {
    fn dim(&self) -> usize {
        self.lattice.dim()
    }

    fn channels(&self) -> usize {
        1
    }

    fn hamiltonian(&self, u: &[f64]) -> CMatrix {
        let (s, c) = u[0].sin_cos();
        &self.h0 + &self.h1 * C64::new(c, 0.0) + &self.h2 * C64::new(s, 0.0)
    }

    fn hamiltonian_derivative(&self, u: &[f64], _channel: usize) -> CMatrix {
        let (s, c) = u[0].sin_cos();
        &self.h1 * C64::new(-s, 0.0) + &self.h2 * C64::new(c, 0.0)
    }

    fn eigen(&self, u: &[f64]) -> HermitianEigen {
        let mut vectors = self.rest.vectors.clone();
        for i in 0..vectors.nrows() {
            let phase = C64::new(0.0, self.lattice.momentum_index(i) as f64 * u[0]).exp();
            for z in vectors.row_mut(i).iter_mut() {
                *z *= phase;
            }
        }
        HermitianEigen { values: self.rest.values.clone(), vectors }
    }

    fn rotated_derivative(&self, _u: &[f64], _channel: usize, _eigen: &HermitianEigen) -> CMatrix {
        self.rotated_generator.clone()
    }
}

/// Plane wave `|φ_{q+n}⟩` as a basis vector of the truncated lattice space.
pub fn plane_wave(lat: &BecLattice, n: i64) -> Result<ComplexVector> {
    let i = lat
        .position_of(n)
        .ok_or_else(|| Error::Parameter(format!("plane wave index {n} outside |n| <= {}", lat.n_max)))?;
    let mut v = ComplexVector::zeros(lat.dim());
    v[i] = ONE;
    Ok(v)
}

/// Lowest `bands` eigenvalues of `H0 + H1` (phase zero), ascending, in units of `E_L`.
///
/// Fails when any of them moves by more than `1e-6` when the truncation grows to `n_max + 2`.
pub fn band_structure(s: f64, q: f64, n_max: usize, bands: usize) -> Result<Vec<f64>> {
    if !q.is_finite() {
        return Err(Error::NumericInput(format!("quasimomentum must be finite, got {q}")));
    }
    // Quasimomenta an integer apart describe the same Bloch block.
    let q = q - q.round();
    let lat = BecLattice::new(s, q, n_max)?;
    if bands == 0 || bands > lat.dim() {
        return Err(Error::Parameter(format!("requested {bands} bands from a {}-dimensional truncation", lat.dim())));
    }
    let coarse = sorted_bands(&lat);
    let fine = sorted_bands(&BecLattice::new(s, q, n_max + 2)?);
    for b in 0..bands {
        let drift = (coarse[b] - fine[b]).abs();
        if drift > 1e-6 {
            return Err(Error::Convergence(format!(
                "band {b} moved by {drift:e} between n_max = {n_max} and {}; increase n_max",
                n_max + 2
            )));
        }
    }
    Ok(coarse[..bands].to_vec())
}

/// All eigenvalues at phase zero; exact ties ordered by the `|n|` of the dominant component.
fn sorted_bands(lat: &BecLattice) -> Vec<f64> {
    let (h0, h1, _) = bec_hamiltonians(lat);
    let eig = HermitianEigen::new(&(h0.entries() + h1.entries()));
    let dominant = |col: usize| -> i64 {
        let v = eig.vectors.column(col);
        let i = (0..v.len()).max_by(|&a, &b| v[a].norm().total_cmp(&v[b].norm())).unwrap_or(0);
        lat.momentum_index(i).abs()
    };
    let mut idx: Vec<usize> = (0..lat.dim()).collect();
    idx.sort_by(|&a, &b| {
        let (ea, eb) = (eig.values[a], eig.values[b]);
        if (ea - eb).abs() <= 1e-12 * (1.0 + ea.abs()) {
            dominant(a).cmp(&dominant(b))
        } else {
            ea.total_cmp(&eb)
        }
    });
    idx.into_iter().map(|i| eig.values[i]).collect()
}

/// Gaussian or squeezed target inside one lattice cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianStateSpec {
    pub x_c: f64,
    pub p_c: f64,
    pub xi: f64,
}

impl GaussianStateSpec {
    pub fn new(x_c: f64, p_c: f64, xi: f64) -> Result<Self> {
        if !(xi > 0.0) {
            return Err(Error::Parameter(format!("squeezing parameter must be positive, got {xi}")));
        }
        Ok(Self { x_c, p_c, xi })
    }

    /// Position width of the unsqueezed Gaussian, `s^{-1/4}`.
    pub fn sigma_x0(s: f64) -> f64 {
        s.powf(-0.25)
    }

    /// Momentum width of the unsqueezed Gaussian, `s^{1/4}/2`.
    pub fn sigma_p0(s: f64) -> f64 {
        0.5 * s.powf(0.25)
    }
}

/// Plane-wave coefficients of the continuum Gaussian formula, before renormalization.
pub fn gaussian_raw_coefficients(spec: &GaussianStateSpec, lat: &BecLattice) -> Result<ComplexVector> {
    if lat.q != 0.0 {
        return Err(Error::Unsupported(format!("Gaussian targets are defined at q = 0, got q = {}", lat.q)));
    }
    if !(lat.s > 0.0) {
        return Err(Error::Parameter("Gaussian targets need a positive lattice depth".into()));
    }
    let GaussianStateSpec { x_c, p_c, xi } = *spec;
    let root_s = lat.s.sqrt();
    let prefactor = (2.0 * xi * xi / (PI * root_s)).powf(0.25);
    Ok(ComplexVector::from_fn(lat.dim(), |i, _| {
        let n = lat.momentum_index(i) as f64;
        let phase = C64::new(0.0, 0.5 * x_c * p_c - n * x_c).exp();
        phase * (prefactor * (-xi * xi * (n - p_c).powi(2) / root_s).exp())
    }))
}

/// Unit-norm plane-wave coefficients of the Gaussian target `g(x_c, p_c, ξ)`.
pub fn gaussian_coefficients(spec: &GaussianStateSpec, lat: &BecLattice) -> Result<ComplexVector> {
    let raw = gaussian_raw_coefficients(spec, lat)?;
    let norm = raw.norm();
    Ok(raw.unscale(norm))
}

/// `|c_n|²` for every basis index.
pub fn momentum_distribution(psi: &ComplexVector) -> Vec<f64> {
    psi.iter().map(|c| c.norm_sqr()).collect()
}

/// Sample points `x_j = −π + 2πj/points` covering one lattice cell.
pub fn cell_positions(points: usize) -> Vec<f64> {
    (0..points).map(|j| -PI + 2.0 * PI * j as f64 / points as f64).collect()
}

/// `|Σ_n c_n e^{i(n+q)x}/√(2π)|²` at [`cell_positions`]`(x_points)`.
pub fn position_density(psi: &ComplexVector, lat: &BecLattice, x_points: usize) -> Result<Vec<f64>> {
    if x_points < 2 {
        return Err(Error::Parameter("position density needs at least two sample points".into()));
    }
    if psi.len() != lat.dim() {
        return Err(Error::Shape(format!("state dim {} vs lattice dim {}", psi.len(), lat.dim())));
    }
    let norm = 1.0 / (2.0 * PI).sqrt();
    Ok(cell_positions(x_points)
        .into_iter()
        .map(|x| {
            let amp: C64 = psi
                .iter()
                .enumerate()
                .map(|(i, c)| c * C64::new(0.0, (lat.momentum_index(i) as f64 + lat.q) * x).exp())
                .sum();
            (amp * norm).norm_sqr()
        })
        .collect())
}

/// Effective two-level description of a shallow lattice driven by the phase velocity:
/// offset `Δ = s/2`, one `σx` control of bound `u0`.
///
/// Valid for `s ≪ 1`; depths above 1 are accepted but leave the regime where the
/// two lowest bands decouple from the rest.
pub fn landau_zener_two_level(s: f64, u0: f64) -> Result<TwoLevelSystem> {
    if !(s > 0.0) {
        return Err(Error::Parameter(format!("lattice depth must be positive, got {s}")));
    }
    if s > 1.0 {
        warn!("depth s = {s} is outside the shallow-lattice regime of the two-level reduction");
    }
    TwoLevelSystem::with_drift(0.5 * s, u0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RobustnessParameter {
    Depth,
    Quasimomentum,
    Timescale,
}

/// Fidelity `|⟨target|ψ(t_f)⟩|²` of a fixed control when one model parameter is
/// perturbed. The timescale factor multiplies every step duration.
pub fn robustness_scan(
    control: &PiecewiseControl,
    grid: &TimeGrid,
    nominal: &BecLattice,
    initial: &ComplexVector,
    target: &ComplexVector,
    parameter: RobustnessParameter,
    values: &[f64],
) -> Result<Vec<f64>> {
    values
        .par_iter()
        .map(|&v| {
            let (lattice, grid) = match parameter {
                RobustnessParameter::Depth => (nominal.with_depth(v)?, *grid),
                RobustnessParameter::Quasimomentum => (nominal.with_quasimomentum(v)?, *grid),
                RobustnessParameter::Timescale => (*nominal, grid.rescaled(v)?),
            };
            let system = BecSystem::new(lattice);
            let states = propagate_forward(&system, initial, control, &grid)?;
            Ok(inner(target, states.last().expect("non-empty trajectory")).norm_sqr())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::max_abs_diff;

    #[test]
    fn two_level_hamiltonian_cases() {
        let sys = TwoLevelSystem::with_drift(0.0, 1.0).unwrap();
        let h = two_level_hamiltonian(&sys, &[1.0]).unwrap();
        assert!(max_abs_diff(h.entries(), Operator::pauli_x().scaled(0.5).entries()) < 1e-15);

        let sys = TwoLevelSystem::with_drift(1.0, 1.0).unwrap();
        let h = two_level_hamiltonian(&sys, &[0.0]).unwrap();
        assert!(max_abs_diff(h.entries(), Operator::pauli_z().scaled(0.5).entries()) < 1e-15);

        let sys = TwoLevelSystem::with_drift(0.5, 1.0).unwrap();
        let h = two_level_hamiltonian(&sys, &[1.0]).unwrap();
        let e = HermitianEigen::new(h.entries());
        let omega = (1.25f64).sqrt();
        assert!((e.values[0] + omega / 2.0).abs() < 1e-14);
        assert!((e.values[1] - omega / 2.0).abs() < 1e-14);

        assert!(matches!(two_level_hamiltonian(&sys, &[1.0, 2.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn two_level_system_validation() {
        assert!(TwoLevelSystem::new(0.0, vec![]).is_err());
        assert!(TwoLevelSystem::new(0.0, vec![(Axis::X, -1.0)]).is_err());
    }

    #[test]
    fn bloch_rhs_cases() {
        let north = BlochVector::new(0.0, 0.0, 1.0).unwrap();
        assert_eq!(bloch_rhs(&north, 0.7, 1.0, 0.0), [0.0, -1.0, 0.0]);
        let east = BlochVector::new(1.0, 0.0, 0.0).unwrap();
        assert_eq!(bloch_rhs(&east, 1.0, 0.0, 0.0), [0.0, 1.0, 0.0]);
        assert!(BlochVector::new(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn bloch_vector_of_basis_states() {
        let up = BlochVector::from_state(&spin_up());
        assert_eq!(up.as_array(), [0.0, 0.0, 1.0]);
        let plus = ComplexVector::from_row_slice(&[ONE, ONE]).unscale(2f64.sqrt());
        let b = BlochVector::from_state(&plus);
        assert!((b.x - 1.0).abs() < 1e-15 && b.z.abs() < 1e-15);
    }

    #[test]
    fn bec_matrices_at_zero_depth() {
        let lat = BecLattice::new(0.0, 0.2, 3).unwrap();
        let (h0, h1, h2) = bec_hamiltonians(&lat);
        assert!(h1.entries().iter().all(|z| z.norm() == 0.0));
        assert!(h2.entries().iter().all(|z| z.norm() == 0.0));
        for i in 0..lat.dim() {
            let k = lat.momentum_index(i) as f64 + 0.2;
            assert!((h0.entries()[(i, i)].re - k * k).abs() < 1e-15);
        }
    }

    #[test]
    fn bec_matrices_small_truncation() {
        let lat = BecLattice::new(5.0, 0.0, 1).unwrap();
        let (h0, h1, h2) = bec_hamiltonians(&lat);
        let diag: Vec<f64> = (0..3).map(|i| h0.entries()[(i, i)].re).collect();
        assert_eq!(diag, vec![1.0, 0.0, 1.0]);
        for (i, j) in [(0, 1), (1, 0), (1, 2), (2, 1)] {
            assert_eq!(h1.entries()[(i, j)], C64::new(-1.25, 0.0));
        }
        assert_eq!(h2.entries()[(1, 0)], C64::new(0.0, -1.25));
        assert_eq!(h2.entries()[(0, 1)], C64::new(0.0, 1.25));
    }

    #[test]
    fn assembled_bec_hamiltonian_phases() {
        let system = BecSystem::new(BecLattice::new(3.0, 0.1, 4).unwrap());
        let h = system.hamiltonian(&[0.0]);
        assert!(h.iter().all(|z| z.im == 0.0));
        let h = system.hamiltonian(&[PI / 2.0]);
        for i in 0..h.nrows() {
            for j in 0..h.ncols() {
                if i != j {
                    assert!(h[(i, j)].re.abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn gauge_eigen_matches_dense_eigen() {
        let system = BecSystem::new(BecLattice::new(5.0, 0.0, 10).unwrap());
        for phi in [0.0, 0.3, -1.7, 2.9] {
            let fast = system.eigen(&[phi]).propagator(0.019);
            let dense = HermitianEigen::new(&system.hamiltonian(&[phi])).propagator(0.019);
            assert!(max_abs_diff(&fast, &dense) < 1e-12, "phi = {phi}");
        }
    }

    #[test]
    fn rotated_derivative_matches_dense() {
        let system = BecSystem::new(BecLattice::new(5.0, 0.2, 6).unwrap());
        for phi in [0.0, 0.8, -2.2] {
            let eig = system.eigen(&[phi]);
            let dense = eig.vectors.adjoint() * system.hamiltonian_derivative(&[phi], 0) * &eig.vectors;
            assert!(max_abs_diff(&system.rotated_derivative(&[phi], 0, &eig), &dense) < 1e-12);
        }
    }

    #[test]
    fn lattice_validation() {
        assert!(BecLattice::new(-1.0, 0.0, 3).is_err());
        assert!(BecLattice::new(1.0, 0.6, 3).is_err());
        assert!(BecLattice::new(1.0, 0.0, 0).is_err());
        let lat = BecLattice::new(1.0, 0.0, 2).unwrap();
        assert_eq!(lat.position_of(-2), Some(0));
        assert_eq!(lat.position_of(3), None);
        assert!(plane_wave(&lat, 3).is_err());
    }

    #[test]
    fn free_particle_bands() {
        let bands = band_structure(0.0, 0.0, 10, 5).unwrap();
        assert_eq!(bands, vec![0.0, 1.0, 1.0, 4.0, 4.0]);
    }

    #[test]
    fn band_request_validation() {
        assert!(band_structure(5.0, 0.0, 2, 6).is_err());
        assert!(band_structure(5.0, 0.0, 2, 0).is_err());
        assert!(matches!(band_structure(40.0, 0.0, 2, 5), Err(Error::Convergence(_))));
    }

    #[test]
    fn gaussian_reference_value() {
        let lat = BecLattice::new(5.0, 0.0, 10).unwrap();
        let spec = GaussianStateSpec::new(0.0, 0.0, 1.0).unwrap();
        let raw = gaussian_raw_coefficients(&spec, &lat).unwrap();
        let c0 = raw[lat.position_of(0).unwrap()];
        assert!((c0.re - (2.0 / (PI * 5f64.sqrt())).powf(0.25)).abs() < 1e-14);
        assert!((c0.re - 0.7305).abs() < 5e-5);
        let total: f64 = raw.iter().map(|c| c.norm_sqr()).sum();
        assert!((0.99..=1.01).contains(&total), "raw norm² = {total}");
    }

    #[test]
    fn centered_gaussian_is_real_positive_even() {
        let lat = BecLattice::new(5.0, 0.0, 10).unwrap();
        let c = gaussian_coefficients(&GaussianStateSpec::new(0.0, 0.0, 1.0 / 3.0).unwrap(), &lat).unwrap();
        assert!((c.norm() - 1.0).abs() < 1e-12);
        for n in 0..=10i64 {
            let a = c[lat.position_of(n).unwrap()];
            let b = c[lat.position_of(-n).unwrap()];
            assert!(a.im == 0.0 && a.re > 0.0);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn gaussian_rejects_nonzero_quasimomentum() {
        let lat = BecLattice::new(5.0, 0.1, 10).unwrap();
        let spec = GaussianStateSpec::new(0.0, 0.0, 1.0).unwrap();
        assert!(matches!(gaussian_coefficients(&spec, &lat), Err(Error::Unsupported(_))));
        assert!(GaussianStateSpec::new(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn momentum_distribution_cases() {
        let lat = BecLattice::new(5.0, 0.0, 2).unwrap();
        assert_eq!(momentum_distribution(&plane_wave(&lat, 0).unwrap()), vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        let sup = (plane_wave(&lat, 0).unwrap() + plane_wave(&lat, 1).unwrap()).unscale(2f64.sqrt());
        let dist = momentum_distribution(&sup);
        assert!((dist[2] - 0.5).abs() < 1e-15 && (dist[3] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn position_density_cases() {
        let lat = BecLattice::new(5.0, 0.0, 3).unwrap();
        let flat = position_density(&plane_wave(&lat, 2).unwrap(), &lat, 16).unwrap();
        assert!(flat.iter().all(|r| (r - 1.0 / (2.0 * PI)).abs() < 1e-14));

        let sup = (plane_wave(&lat, 0).unwrap() + plane_wave(&lat, 1).unwrap()).unscale(2f64.sqrt());
        let xs = cell_positions(32);
        let rho = position_density(&sup, &lat, 32).unwrap();
        for (x, r) in xs.iter().zip(&rho) {
            assert!((r - (1.0 + x.cos()) / (2.0 * PI)).abs() < 1e-14);
        }
        assert!(position_density(&sup, &lat, 1).is_err());
    }

    #[test]
    fn gaussian_density_is_centered_and_symmetric() {
        let lat = BecLattice::new(5.0, 0.0, 10).unwrap();
        let g = gaussian_coefficients(&GaussianStateSpec::new(0.0, 0.0, 1.0).unwrap(), &lat).unwrap();
        let points = 200;
        let rho = position_density(&g, &lat, points).unwrap();
        let peak = (0..points).max_by(|&a, &b| rho[a].total_cmp(&rho[b])).unwrap();
        assert_eq!(peak, points / 2);
        for j in 1..points / 2 {
            assert!((rho[points / 2 + j] - rho[points / 2 - j]).abs() < 1e-9);
        }
        let integral: f64 = rho.iter().sum::<f64>() * 2.0 * PI / points as f64;
        assert!((integral - 1.0).abs() < 1e-3);
    }

    #[test]
    fn landau_zener_offsets() {
        assert_eq!(landau_zener_two_level(0.5, 0.5).unwrap().delta(), 0.25);
        assert!((landau_zener_two_level(0.57, 0.5).unwrap().delta() - 0.285).abs() < 1e-15);
        assert!(landau_zener_two_level(1e-9, 0.5).unwrap().delta() < 1e-9);
        assert!(landau_zener_two_level(0.0, 0.5).is_err());
    }

    #[test]
    fn robustness_scan_rejects_bad_quasimomentum() {
        let lat = BecLattice::new(5.0, 0.0, 4).unwrap();
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let control = PiecewiseControl::zeros(10, 1);
        let psi = plane_wave(&lat, 0).unwrap();
        let res = robustness_scan(&control, &grid, &lat, &psi, &psi, RobustnessParameter::Quasimomentum, &[0.7]);
        assert!(matches!(res, Err(Error::Parameter(_))));
    }
}
