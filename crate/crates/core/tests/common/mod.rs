//! Invariants shared by the `properties` and `acceptance` targets. Each property
//! runs through proptest's runner so failures are shrunk the same way in both.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Mutex;

use nalgebra::DMatrix;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use qoc_core::analytic::*;
use qoc_core::grape::*;
use qoc_core::models::*;
use qoc_core::numerics::*;
use qoc_core::pontryagin::*;
use qoc_core::search::*;

pub type Check = fn(u32) -> Result<(), String>;

fn run<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), TestCaseError> {
    if ok {
        Ok(())
    } else {
        Err(TestCaseError::fail(msg()))
    }
}

fn hermitian(dim: usize) -> impl Strategy<Value = Operator> {
    prop::collection::vec(-1.0..1.0f64, 2 * dim * dim).prop_map(move |v| {
        let a = CMatrix::from_fn(dim, dim, |i, j| C64::new(v[i * dim + j], v[dim * dim + i * dim + j]));
        Operator::hermitian((&a + a.adjoint()) * C64::new(0.5, 0.0)).unwrap()
    })
}

fn state(dim: usize) -> impl Strategy<Value = ComplexVector> {
    prop::collection::vec(-1.0..1.0f64, 2 * dim)
        .prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
        .prop_map(move |v| normalized(&ComplexVector::from_fn(dim, |i, _| C64::new(v[i], v[dim + i]))).unwrap())
}

fn two_level_control(steps: usize) -> impl Strategy<Value = PiecewiseControl> {
    prop::collection::vec(-2.0..2.0f64, 2 * steps)
        .prop_map(move |v| PiecewiseControl::new(DMatrix::from_row_slice(steps, 2, &v)).unwrap())
}

fn two_axis() -> TwoLevelSystem {
    TwoLevelSystem::new(0.7, vec![(Axis::X, 2.0), (Axis::Y, 2.0)]).unwrap()
}

pub fn unitarity(cases: u32) -> Result<(), String> {
    run(cases, (1usize..=6).prop_flat_map(|d| (hermitian(d), hermitian(d), -10.0..10.0f64, 1e-4..0.1f64)), |(h0, h1, u, dt)| {
        let step = step_propagator(&h0, &[h1], &[u], dt).unwrap();
        ensure(step.unitarity_defect() <= 1e-10, || format!("defect {:e}", step.unitarity_defect()))
    })
}

pub fn exp_round_trip(cases: u32) -> Result<(), String> {
    run(cases, (1usize..=8).prop_flat_map(|d| (hermitian(d), 1e-3..2.0f64)), |(a, dt)| {
        let fwd = matrix_exponential(&a, C64::new(0.0, -dt)).unwrap();
        let back = matrix_exponential(&a, C64::new(0.0, dt)).unwrap();
        let id = CMatrix::identity(a.dim(), a.dim());
        let err = max_abs_diff(&(fwd.entries() * back.entries()), &id);
        ensure(err <= 1e-10, || format!("round trip error {err:e}"))
    })
}

pub fn norm_conservation(cases: u32) -> Result<(), String> {
    run(cases, (state(2), two_level_control(40), 0.1..10.0f64), |(psi, control, tf)| {
        let grid = TimeGrid::new(tf, 40).unwrap();
        let states = propagate_forward(&two_axis(), &psi, &control, &grid).unwrap();
        let worst = states.iter().map(|s| (s.norm() - 1.0).abs()).fold(0.0, f64::max);
        ensure(worst <= 1e-8, || format!("norm drift {worst:e}"))
    })
}

pub fn overlap_conservation(cases: u32) -> Result<(), String> {
    run(cases, (state(2), state(2), two_level_control(40), 0.1..10.0f64), |(psi, chi, control, tf)| {
        let grid = TimeGrid::new(tf, 40).unwrap();
        let sys = two_axis();
        let a = propagate_forward(&sys, &psi, &control, &grid).unwrap();
        let b = propagate_forward(&sys, &chi, &control, &grid).unwrap();
        let first = inner(&b[0], &a[0]);
        let worst = a.iter().zip(&b).map(|(x, y)| (inner(y, x) - first).norm()).fold(0.0, f64::max);
        ensure(worst <= 1e-10, || format!("overlap drift {worst:e}"))
    })
}

pub fn augmented_derivative(cases: u32) -> Result<(), String> {
    let strat = prop_oneof![
        (1usize..=6).prop_flat_map(|d| (hermitian(d), hermitian(d))).boxed(),
        (0.0..2.0 * PI).prop_map(|phi| {
            let (h0, h1, h2) = bec_hamiltonians(&BecLattice::new(5.0, 0.0, 10).unwrap());
            let h = h0.plus(&h1.scaled(phi.cos())).unwrap().plus(&h2.scaled(phi.sin())).unwrap();
            let dh = h1.scaled(-phi.sin()).plus(&h2.scaled(phi.cos())).unwrap();
            (h, dh)
        }).boxed(),
    ];
    run(cases, (strat, -10.0..10.0f64, 1e-3..0.1f64), |((h0, h1), u, dt)| {
        let h = h0.plus(&h1.scaled(u)).unwrap();
        let (_, du) = augmented_step(&h, &h1, dt).unwrap();
        // Fourth-order central stencil: BEC derivatives can be 1e-3 of |U|, so a
        // plain two-point difference would be dominated by rounding.
        let eps = 1e-3;
        let at = |v: f64| step_propagator(&h0, &[h1.clone()], &[v], dt).unwrap().into_entries();
        let fd = (at(u - 2.0 * eps) - at(u + 2.0 * eps) + (at(u + eps) - at(u - eps)) * C64::new(8.0, 0.0))
            / C64::new(12.0 * eps, 0.0);
        let scale = fd.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
        let err = max_abs_diff(du.entries(), &fd) / scale;
        ensure(err <= 1e-8, || format!("relative mismatch {err:e}"))
    })
}

pub fn bloch_rhs_tangent(cases: u32) -> Result<(), String> {
    let comp = -1.0..1.0f64;
    run(cases, (comp.clone(), comp.clone(), comp, -5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64), |(x, y, z, d, ux, uy)| {
        let n = (x * x + y * y + z * z).sqrt().max(1.0);
        let b = BlochVector::new(x / n, y / n, z / n).unwrap();
        let r = bloch_rhs(&b, d, ux, uy);
        let dot = b.x * r[0] + b.y * r[1] + b.z * r[2];
        ensure(dot.abs() <= 1e-14, || format!("B·Ḃ = {dot:e}"))
    })
}

pub fn bec_hermitian(cases: u32) -> Result<(), String> {
    run(cases, (0.0..20.0f64, -0.5..=0.5f64, 1usize..=10, -10.0..10.0f64), |(s, q, n, phi)| {
        let sys = BecSystem::new(BecLattice::new(s, q, n).unwrap());
        ensure(is_hermitian(&sys.hamiltonian(&[phi]), 1e-12), || "non-Hermitian lattice Hamiltonian".into())
    })
}

pub fn quasimomentum_equivalence(cases: u32) -> Result<(), String> {
    run(cases, (0.0..10.0f64, -0.5..0.5f64), |(s, q)| {
        let a = band_structure(s, q, 10, 4).unwrap();
        let b = band_structure(s, q + 1.0, 10, 4).unwrap();
        let err = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        ensure(err <= 1e-10, || format!("spectra at q and q+1 differ by {err:e}"))
    })
}

pub fn band_convergence(cases: u32) -> Result<(), String> {
    run(cases, (0.0..10.0f64, -0.5..0.5f64, 10usize..=14), |(s, q, n)| {
        let a = band_structure(s, q, n, 6).unwrap();
        let b = band_structure(s, q, n + 2, 6).unwrap();
        ensure(a.windows(2).all(|w| w[1] >= w[0]), || format!("bands out of order {a:?}"))?;
        let err = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        ensure(err <= 1e-6, || format!("n_max {n} → {} moves bands by {err:e}", n + 2))
    })
}

pub fn gaussian_norm(cases: u32) -> Result<(), String> {
    run(cases, (0.5..10.0f64, -0.4..0.4f64, -2.0..2.0f64, 0.2..3.0f64), |(s, xc, pc, xi)| {
        let lat = BecLattice::new(s, 0.0, 10).unwrap();
        let c = gaussian_coefficients(&GaussianStateSpec::new(xc, pc, xi).unwrap(), &lat).unwrap();
        ensure((c.norm() - 1.0).abs() <= 1e-12, || format!("norm {}", c.norm()))
    })
}

/// Unit-sphere adjoints scaled by `r`, keeping `|cos Θ| ≥ cos 1.2` so the
/// two-control extremal from `(1,0,0)` stays away from the singular set `p_z = 0`.
fn sphere_adjoint() -> impl Strategy<Value = Adjoint> {
    (prop_oneof![0.1..1.2f64, PI - 1.2..PI - 0.1], 0.0..2.0 * PI, 0.1..3.0f64)
        .prop_map(|(t, p, r)| Adjoint::new(vec![r * t.sin() * p.cos(), r * t.sin() * p.sin(), r * t.cos()], -1.0).unwrap())
}

pub fn hp_constancy(cases: u32) -> Result<(), String> {
    run(cases, (sphere_adjoint(), 0.5..3.0f64, -3.0..3.0f64, -3.0..3.0f64), |(adj, tf, lx, lp)| {
        let two = BlochTimeOptimal::two_controls();
        let traj = extremal_flow(&two, &adj, &TimeGrid::new(tf, 1000).unwrap()).unwrap();
        ensure(traj.hp_spread() <= 1e-6, || format!("two-control H_P spread {:e}", traj.hp_spread()))?;

        let pp = PointParticleEnergy { m: 1.0, alpha: 0.5, t_f: tf };
        let adj = Adjoint::new(vec![lx, lp], -1.0).unwrap();
        let traj = extremal_flow(&pp, &adj, &TimeGrid::new(tf, 200).unwrap()).unwrap();
        ensure(traj.hp_spread() <= 1e-6, || format!("energy-optimal H_P spread {:e}", traj.hp_spread()))
    })
}

fn bloch_l(x: &[f64], p: &[f64]) -> f64 {
    let l = [x[1] * p[2] - x[2] * p[1], x[2] * p[0] - x[0] * p[2], x[0] * p[1] - x[1] * p[0]];
    l.iter().map(|v| v * v).sum()
}

pub fn switching_vector_norm(cases: u32) -> Result<(), String> {
    run(cases, (sphere_adjoint(), 0.1..0.9f64, 1.0..5.0f64), |(adj, delta, tf)| {
        for problem in [BlochTimeOptimal::two_controls(), BlochTimeOptimal::drift(delta, 1.0).unwrap()] {
            let traj = match extremal_flow(&problem, &adj, &TimeGrid::new(tf, 2000).unwrap()) {
                Ok(t) => t,
                Err(qoc_core::Error::SingularArc { .. }) => continue,
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            };
            let l0 = bloch_l(&traj.states[0], &traj.adjoints[0]);
            let worst = traj.states.iter().zip(&traj.adjoints).map(|(x, p)| (bloch_l(x, p) - l0).abs()).fold(0.0, f64::max);
            ensure(worst <= 1e-8, || format!("|L|² drift {worst:e}"))?;
        }
        Ok(())
    })
}

pub fn scaling_covariance(cases: u32) -> Result<(), String> {
    run(cases, (sphere_adjoint(), 0.1..10.0f64, -2.0..2.0f64, -2.0..2.0f64), |(adj, c, lx, lp)| {
        let grid = TimeGrid::new(2.0, 400).unwrap();
        let cmp = |a: &ExtremalTrajectory, b: &ExtremalTrajectory| {
            a.controls.iter().zip(&b.controls).flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs())).fold(0.0, f64::max)
        };
        let two = BlochTimeOptimal::two_controls();
        let a = extremal_flow(&two, &adj, &grid).unwrap();
        let b = extremal_flow(&two, &adj.scaled(c), &grid).unwrap();
        ensure(cmp(&a, &b) <= 1e-10, || format!("two-control controls differ by {:e}", cmp(&a, &b)))?;

        let pp = PointParticleEnergy { m: 1.0, alpha: 0.5, t_f: 2.0 };
        let adj = Adjoint::new(vec![lx, lp], -1.0).unwrap();
        let a = extremal_flow(&pp, &adj, &grid).unwrap();
        let b = extremal_flow(&pp, &adj.scaled(c), &grid).unwrap();
        ensure(cmp(&a, &b) <= 1e-10, || format!("energy-optimal controls differ by {:e}", cmp(&a, &b)))
    })
}

/// `H_P = p·Ḃ` equals `Im⟨χ|Ĥ|ψ⟩` for `|χ⟩ = 2(p·σ)|ψ⟩`.
pub fn bloch_ket_correspondence(cases: u32) -> Result<(), String> {
    let p = prop::array::uniform3(-2.0..2.0f64);
    run(cases, (state(2), p, -2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64), |(psi, p, delta, ux, uy)| {
        let sys = TwoLevelSystem::new(delta, vec![(Axis::X, 3.0), (Axis::Y, 3.0)]).unwrap();
        let h = two_level_hamiltonian(&sys, &[ux, uy]).unwrap();
        let sigma = Operator::pauli_x()
            .scaled(p[0])
            .plus(&Operator::pauli_y().scaled(p[1]))
            .unwrap()
            .plus(&Operator::pauli_z().scaled(p[2]))
            .unwrap();
        let chi = sigma.entries() * &psi * C64::new(2.0, 0.0);
        let ket = inner(&chi, &(h.entries() * &psi)).im;
        let b = BlochVector::from_state(&psi);
        let problem = BlochTimeOptimal { delta, ..BlochTimeOptimal::two_controls() };
        let adj = Adjoint::new(p.to_vec(), 0.0).unwrap();
        let bloch = pontryagin_hamiltonian(&problem, &b.as_array(), &adj, &[ux, uy], 0.0).unwrap();
        ensure((ket - bloch).abs() <= 1e-10, || format!("ket {ket} vs Bloch {bloch}"))
    })
}

pub fn monotone_descent(cases: u32) -> Result<(), String> {
    run(cases, (state(2), 1.0..5.0f64, prop::bool::ANY), |(target, tf, g2)| {
        let sys = two_axis();
        let kind = if g2 { CostKind::G2 } else { CostKind::G1 };
        let obj = Objective::terminal(TerminalCost::new(kind, target).unwrap());
        let grid = TimeGrid::new(tf, 30).unwrap();
        let psi0 = spin_up();
        let problem = GrapeProblem { system: &sys, psi0: &psi0, grid, objective: &obj, bounds: None };
        let guess = default_guess(&grid, 2, None);
        let cfg = GrapeConfig { max_iter: 30, cost_tol: 0.0, ..GrapeConfig::default() };
        let trace = grape_optimize(&problem, &Parameterization::Piecewise, guess.values(), &cfg).unwrap();
        let h = &trace.cost_history;
        ensure(h.windows(2).all(|w| w[1] < w[0]), || format!("cost history not decreasing: {h:?}"))?;
        let hi = if g2 { 2.0 } else { 1.0 };
        ensure(h.iter().all(|c| (0.0..=hi).contains(c)), || format!("cost outside [0, {hi}]"))
    })
}

pub fn parameterization_linearity(cases: u32) -> Result<(), String> {
    let param = prop_oneof![
        Just(Parameterization::Piecewise),
        (0usize..6).prop_map(|k_max| Parameterization::Fourier { k_max }),
        (0usize..5).prop_map(|degree| Parameterization::Polynomial { degree }),
    ];
    run(cases, (param, -3.0..3.0f64, prop::collection::vec(-1.0..1.0f64, 64)), |(param, lambda, raw)| {
        let grid = TimeGrid::new(3.0, 32).unwrap();
        let k = param.coefficients(&grid);
        let c = DMatrix::from_fn(k, 1, |i, _| raw[i]);
        let a = param.render(&(&c * lambda), &grid).unwrap();
        let b = param.render(&c, &grid).unwrap();
        let err = (a.values() - b.values() * lambda).abs().max();
        ensure(err <= 1e-12 * (1.0 + b.values().abs().max() * lambda.abs()), || format!("render not linear: {err:e}"))
    })
}

pub fn analytic_transfer(cases: u32) -> Result<(), String> {
    run(cases, (0.1..3.0f64, 0.0..0.95f64, prop::bool::ANY), |(u0, ratio, mirror)| {
        let delta = ratio * u0;
        let mut bang = bang_bang_two_level(delta, u0).unwrap();
        if mirror {
            bang = bang.negated();
        }
        let sys = TwoLevelSystem::with_drift(delta, u0).unwrap();
        let mut psi = spin_up();
        for &(u, d) in &bang.segments {
            let step = step_propagator(&Operator::pauli_z().scaled(0.5 * delta), &[Operator::pauli_x().scaled(0.5)], &[u], d).unwrap();
            psi = step.entries() * psi;
        }
        let _ = sys;
        let p = inner(&spin_down(), &psi).norm_sqr();
        ensure(p >= 1.0 - 1e-9, || format!("transfer {p}"))?;
        let q = qsl_two_level(delta, u0, true).unwrap();
        ensure(q.t_qsl <= q.t_star, || "t_qsl above t*".into())
    })
}

pub fn bang_composition(cases: u32) -> Result<(), String> {
    run(cases, (-2.0..2.0f64, -2.0..2.0f64, 0.0..5.0f64, 0.0..5.0f64), |(d, u, t1, t2)| {
        let ab = bang_propagator(d, u, t1).entries() * bang_propagator(d, u, t2).entries();
        let err = max_abs_diff(&ab, bang_propagator(d, u, t1 + t2).entries());
        ensure(err <= 1e-12, || format!("composition error {err:e}"))
    })
}

pub fn particle_continuity(cases: u32) -> Result<(), String> {
    run(cases, (-3.0..3.0f64, -3.0..3.0f64, 0.2..3.0f64, 0.2..3.0f64), |(x0, p0, f0, m)| {
        let bang = point_particle_bang_bang(x0, p0, f0, m).unwrap();
        // Integrate each parabola from its own start and compare with the closed form at the switch.
        let mut x = x0;
        let mut p = p0;
        for &(f, d) in &bang.segments {
            let (xe, pe) = point_particle_endpoint(&BangBang { segments: vec![(f, d)], omega: None }, x, p, m);
            let xm = x + p * d / m + 0.5 * f * d * d / m;
            ensure((xe - xm).abs() <= 1e-12 * (1.0 + xm.abs()), || format!("position mismatch {}", xe - xm))?;
            x = xe;
            p = pe;
        }
        ensure(x.abs() <= 1e-8 && p.abs() <= 1e-8, || format!("ends at ({x}, {p})"))
    })
}

pub fn search_invariants(cases: u32) -> Result<(), String> {
    run(cases, (any::<u64>(), 2usize..10, 1usize..20), |(seed, pop, iters)| {
        let domain = BoxDomain::cube(2, -2.0, 2.0).unwrap();
        let cfg = SearchConfig { seed, population_size: pop, iterations: iters, proposals_per_temperature: 10, ..SearchConfig::default() };
        let seen = Mutex::new(Vec::new());
        let recorded = |x: &[f64]| {
            seen.lock().unwrap().push(x.to_vec());
            test_function(x)
        };
        let start = random_starts(&domain, 1, seed).remove(0);
        let runs = [
            jaya_optimize(&recorded, &domain, &cfg).unwrap(),
            simulated_annealing(&recorded, &domain, &cfg).unwrap(),
            nelder_mead(&recorded, &start, Some(&domain), &cfg).unwrap(),
        ];
        for r in &runs {
            ensure(r.trace.best_history.windows(2).all(|w| w[1] <= w[0]), || "best value increased".into())?;
        }
        ensure(seen.lock().unwrap().iter().all(|x| domain.contains(x)), || "evaluated a point outside the box".into())?;
        let again = [
            jaya_optimize(&test_function, &domain, &cfg).unwrap(),
            simulated_annealing(&test_function, &domain, &cfg).unwrap(),
            nelder_mead(&test_function, &start, Some(&domain), &cfg).unwrap(),
        ];
        ensure(runs == again, || "same seed gave a different trace".into())
    })
}

pub const ALL: &[(&str, Check)] = &[
    ("unitarity", unitarity),
    ("exp_round_trip", exp_round_trip),
    ("norm_conservation", norm_conservation),
    ("overlap_conservation", overlap_conservation),
    ("augmented_derivative", augmented_derivative),
    ("bloch_rhs_tangent", bloch_rhs_tangent),
    ("bec_hermitian", bec_hermitian),
    ("quasimomentum_equivalence", quasimomentum_equivalence),
    ("band_convergence", band_convergence),
    ("gaussian_norm", gaussian_norm),
    ("hp_constancy", hp_constancy),
    ("switching_vector_norm", switching_vector_norm),
    ("scaling_covariance", scaling_covariance),
    ("bloch_ket_correspondence", bloch_ket_correspondence),
    ("monotone_descent", monotone_descent),
    ("parameterization_linearity", parameterization_linearity),
    ("analytic_transfer", analytic_transfer),
    ("bang_composition", bang_composition),
    ("particle_continuity", particle_continuity),
    ("search_invariants", search_invariants),
];
