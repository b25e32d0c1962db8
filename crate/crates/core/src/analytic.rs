//! Closed-form optimal solutions: the π-pulse, the two-bang solution of the
//! drifted two-level system, the point-particle problems, plus the
//! Mandelstam–Tamm speed limit and a unit conversion helper.

use std::f64::consts::PI;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{spin_up, Axis, TwoLevelSystem};
use crate::numerics::{CMatrix, ComplexVector, ControlSystem, HermitianEigen, Operator, C64};

/// Piecewise-constant control given as `(amplitude, duration)` segments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BangBang {
    pub segments: Vec<(f64, f64)>,
    /// `Ω = √(u0² + Δ²)` for two-level solutions.
    pub omega: Option<f64>,
}

impl BangBang {
    pub fn total_time(&self) -> f64 {
        self.segments.iter().map(|(_, d)| d).sum()
    }

    /// Switching instants, excluding `0` and the final time.
    pub fn switching_times(&self) -> Vec<f64> {
        let mut t = 0.0;
        let mut out = Vec::new();
        for (_, d) in self.segments.iter().take(self.segments.len().saturating_sub(1)) {
            t += d;
            out.push(t);
        }
        out
    }

    /// Amplitude at time `t` (the last segment is closed on the right).
    pub fn amplitude_at(&self, t: f64) -> f64 {
        let mut end = 0.0;
        for &(a, d) in &self.segments {
            end += d;
            if t < end {
                return a;
            }
        }
        self.segments.last().map_or(0.0, |s| s.0)
    }

    /// Same bangs in reverse order.
    pub fn reversed(&self) -> Self {
        Self { segments: self.segments.iter().rev().copied().collect(), omega: self.omega }
    }

    /// Opposite amplitudes.
    pub fn negated(&self) -> Self {
        Self { segments: self.segments.iter().map(|&(a, d)| (-a, d)).collect(), omega: self.omega }
    }

    /// Propagates `ψ0` through the segments with one exact step per bang, for
    /// `H = (Δ/2)σz + (u/2)σx`.
    pub fn propagate_two_level(&self, delta: f64, psi0: &ComplexVector) -> Result<ComplexVector> {
        let system = TwoLevelSystem::new(delta, vec![(Axis::X, f64::INFINITY)])?;
        let mut psi = psi0.clone();
        for &(a, d) in &self.segments {
            psi = HermitianEigen::new(&system.hamiltonian(&[a])).propagator(d) * psi;
        }
        Ok(psi)
    }

    /// `|⟨↓|ψ(t_f)⟩|²` starting from `|↑⟩`.
    pub fn transfer_probability(&self, delta: f64) -> Result<f64> {
        Ok(self.propagate_two_level(delta, &spin_up())?[1].norm_sqr())
    }
}

/// Resonant π-pulse: one bang of amplitude `u0` and duration `π/u0`.
pub fn pi_pulse(u0: f64) -> Result<BangBang> {
    if !(u0 > 0.0) || !u0.is_finite() {
        return Err(Error::Parameter(format!("pulse amplitude must be positive, got {u0}")));
    }
    Ok(BangBang { segments: vec![(u0, PI / u0)], omega: Some(u0) })
}

/// Time-optimal two-bang transfer `|↑⟩ → |↓⟩` with drift `Δ` and `|u| ≤ u0`,
/// `+u0` first. Use [`BangBang::reversed`] or [`BangBang::negated`] for the
/// equivalent mirror solutions.
pub fn bang_bang_two_level(delta: f64, u0: f64) -> Result<BangBang> {
    if !(u0 > 0.0) || !delta.is_finite() {
        return Err(Error::Parameter(format!("need finite drift and positive bound, got delta = {delta}, u0 = {u0}")));
    }
    if delta.abs() >= u0 {
        return Err(Error::OutOfRegime { delta, u0 });
    }
    if delta.abs() < 1e-6 {
        warn!("drift {delta:e} is below 1e-6; the resonant problem is solved by a single pi-pulse");
    }
    let omega = (u0 * u0 + delta * delta).sqrt();
    let angle = (delta * delta / (u0 * u0)).clamp(-1.0, 1.0).acos();
    let t1 = (PI - angle) / omega;
    let t2 = (PI + angle) / omega;
    Ok(BangBang { segments: vec![(u0, t1), (-u0, t2)], omega: Some(omega) })
}

/// `exp(−i t (Δσz + uσx)/2)` in closed form.
pub fn bang_propagator(delta: f64, u: f64, t: f64) -> Operator {
    let omega = (delta * delta + u * u).sqrt();
    if omega == 0.0 {
        return Operator::identity(2);
    }
    let (s, c) = (0.5 * omega * t).sin_cos();
    let nz = delta / omega * s;
    let nx = u / omega * s;
    let entries = CMatrix::from_row_slice(
        2,
        2,
        &[C64::new(c, -nz), C64::new(0.0, -nx), C64::new(0.0, -nx), C64::new(c, nz)],
    );
    Operator::new(entries).expect("finite entries")
}

/// Duration until the switching function `H_x` next vanishes, starting from a
/// switching point with `H_x = 0` and `(H_y, H_z)` given.
pub fn switching_interval(hy: f64, hz: f64, u: f64, delta: f64) -> Result<f64> {
    if hy == 0.0 && hz == 0.0 {
        return Err(Error::DegenerateAdjoint("H_y and H_z both vanish at the switching point".into()));
    }
    let omega = (u * u + delta * delta).sqrt();
    if !(omega > 0.0) {
        return Err(Error::Parameter("switching interval needs a non-zero rotation rate".into()));
    }
    if u * hz == 0.0 {
        return Ok(PI / omega);
    }
    let base = (omega * hy / (u * hz)).atan();
    // atan ∈ (−π/2, π/2): n = 0 suffices for a positive base, n = 1 otherwise.
    let n = if base > 0.0 { 0.0 } else { 1.0 };
    Ok(2.0 / omega * (PI * n + base))
}

/// Mandelstam–Tamm bound for the `|↑⟩ → |↓⟩` transfer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QslReport {
    pub variance_max: f64,
    pub t_qsl: f64,
    pub t_star: f64,
    pub ratio: f64,
}

/// Without drift the two resonant controls saturate the bound; with drift the
/// time-optimal two-bang solution takes twice as long as the bound.
pub fn qsl_two_level(delta: f64, u0: f64, with_drift: bool) -> Result<QslReport> {
    if !(u0 > 0.0) {
        return Err(Error::Parameter(format!("control bound must be positive, got {u0}")));
    }
    let (variance_max, t_star) = if with_drift {
        let omega = (u0 * u0 + delta * delta).sqrt();
        (omega * omega / 4.0, 2.0 * PI / omega)
    } else {
        (u0 * u0 / 4.0, PI / u0)
    };
    let t_qsl = 0.5 * PI / variance_max.sqrt();
    Ok(QslReport { variance_max, t_qsl, t_star, ratio: t_star / t_qsl })
}

/// Time-optimal bounded force `|f| ≤ f0` steering `m ẍ = f` from `(x0, p0)` to rest at the origin.
pub fn point_particle_bang_bang(x0: f64, p0: f64, f0: f64, m: f64) -> Result<BangBang> {
    if !(f0 > 0.0) || !(m > 0.0) {
        return Err(Error::Parameter(format!("need f0 > 0 and m > 0, got f0 = {f0}, m = {m}")));
    }
    if x0 == 0.0 && p0 == 0.0 {
        return Ok(BangBang { segments: Vec::new(), omega: None });
    }
    // Switching curve P: x = −p|p|/(2 m f0). Above it push with −f0 first.
    let sigma = x0 + p0 * p0.abs() / (2.0 * m * f0);
    let scale = 1e-14 * (1.0 + x0.abs() + p0 * p0 / (m * f0));
    if sigma.abs() <= scale {
        return Ok(BangBang { segments: vec![(-p0.signum() * f0, p0.abs() / f0)], omega: None });
    }
    // Mirror (x, p, f) → (−x, −p, −f) so that the first bang is always −f0.
    let sign = sigma.signum();
    let (x, p) = (sign * x0, sign * p0);
    let energy = x + p * p / (2.0 * m * f0);
    let p_switch = -(m * f0 * energy).sqrt();
    let first = (p - p_switch) / f0;
    let second = -p_switch / f0;
    Ok(BangBang { segments: vec![(-sign * f0, first), (sign * f0, second)], omega: None })
}

/// State `(x, p)` after applying the segments of `control` from `(x0, p0)`.
pub fn point_particle_endpoint(control: &BangBang, x0: f64, p0: f64, m: f64) -> (f64, f64) {
    control.segments.iter().fold((x0, p0), |(x, p), &(f, d)| (x + (p * d + 0.5 * f * d * d) / m, p + f * d))
}

/// Energy-optimal extremal of the point particle driven from rest at the origin
/// towards `x = 1`, with cost `(1 − x(t_f))²/2 + p(t_f)²/2 + (α/2)∫f²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyOptimal {
    pub t_f: f64,
    pub m: f64,
    pub alpha: f64,
    pub lambda_x: f64,
    pub lambda_p0: f64,
}

impl EnergyOptimal {
    pub fn control(&self, t: f64) -> f64 {
        -self.lambda_x / (self.alpha * self.m) * t + self.lambda_p0 / self.alpha
    }

    pub fn state(&self, t: f64) -> (f64, f64) {
        let (a, m, lx, lp) = (self.alpha, self.m, self.lambda_x, self.lambda_p0);
        let p = -lx / (2.0 * a * m) * t * t + lp / a * t;
        let x = -lx / (6.0 * a * m * m) * t.powi(3) + lp / (2.0 * a * m) * t * t;
        (x, p)
    }

    pub fn adjoint(&self, t: f64) -> (f64, f64) {
        (self.lambda_x, self.lambda_p0 - self.lambda_x / self.m * t)
    }

    /// `(x(t_f), p(t_f))`.
    pub fn endpoint(&self) -> (f64, f64) {
        self.state(self.t_f)
    }
}

/// Solves the transversality conditions `Λx = 1 − x(t_f)`, `Λp(t_f) = −p(t_f)`
/// for `(Λx, Λp(0))`.
pub fn point_particle_energy_optimal(t_f: f64, m: f64, alpha: f64) -> Result<EnergyOptimal> {
    if !(t_f > 0.0 && m > 0.0 && alpha > 0.0) {
        return Err(Error::Parameter(format!("need t_f, m, alpha > 0, got {t_f}, {m}, {alpha}")));
    }
    let a11 = 1.0 - t_f.powi(3) / (6.0 * alpha * m * m);
    let a12 = t_f * t_f / (2.0 * alpha * m);
    let a21 = -t_f * t_f / (2.0 * alpha * m) - t_f / m;
    let a22 = t_f / alpha + 1.0;
    let det = a11 * a22 - a12 * a21;
    if det.abs() <= 1e-14 * (a11.abs() * a22.abs() + a12.abs() * a21.abs()) {
        return Err(Error::Degeneracy(format!("transversality system is singular (det = {det:e})")));
    }
    let lambda_x = a22 / det;
    let lambda_p0 = -a21 / det;
    Ok(EnergyOptimal { t_f, m, alpha, lambda_x, lambda_p0 })
}

/// Converts a time in units of `ħ/E_L` to seconds, given `E_L/h` in hertz.
pub fn physical_time(t_dimensionless: f64, e_l_over_h_hz: f64) -> Result<f64> {
    if !(e_l_over_h_hz > 0.0) {
        return Err(Error::Parameter(format!("lattice energy must be positive, got {e_l_over_h_hz} Hz")));
    }
    Ok(t_dimensionless / (2.0 * PI * e_l_over_h_hz))
}
