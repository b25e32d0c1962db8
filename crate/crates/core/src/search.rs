//! Gradient-free global optimizers over box domains: JAYA, simulated annealing
//! and the Nelder–Mead simplex. All randomness comes from a seeded ChaCha stream,
//! so a configuration reproduces its trace bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Objective minimized by every method; must be pure so evaluations can run in parallel.
pub type SearchObjective<'a> = dyn Fn(&[f64]) -> f64 + Sync + 'a;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::Shape(format!("box bounds of length {} and {}", lower.len(), upper.len())));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::Parameter("box needs finite lower < upper in every component".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn span(&self, k: usize) -> f64 {
        self.upper[k] - self.lower[k]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().enumerate().all(|(k, v)| *v >= self.lower[k] && *v <= self.upper[k])
    }

    pub fn clip(&self, x: &mut [f64]) {
        for (k, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[k], self.upper[k]);
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim()).map(|k| self.lower[k] + rng.random::<f64>() * self.span(k)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplexCoefficients {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
}

impl Default for SimplexCoefficients {
    fn default() -> Self {
        Self { reflection: 1.0, expansion: 2.0, contraction: 0.5, shrink: 0.5 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub population_size: usize,
    /// JAYA generations, annealing temperature levels or simplex iterations.
    pub iterations: usize,
    pub seed: u64,
    /// `T0`; `None` uses the objective spread over 10 random samples.
    pub initial_temperature: Option<f64>,
    pub cooling: f64,
    pub proposals_per_temperature: usize,
    pub simplex: SimplexCoefficients,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            population_size: 30,
            iterations: 200,
            seed: 0,
            initial_temperature: None,
            cooling: 0.95,
            proposals_per_temperature: 100,
            simplex: SimplexCoefficients::default(),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cooling > 0.0 && self.cooling < 1.0) {
            return Err(Error::Parameter(format!("cooling factor must lie in (0, 1), got {}", self.cooling)));
        }
        if let Some(t0) = self.initial_temperature {
            if !(t0 >= 0.0) || !t0.is_finite() {
                return Err(Error::Parameter(format!("initial temperature must be finite and >= 0, got {t0}")));
            }
        }
        let s = self.simplex;
        if !(s.reflection > 0.0 && s.expansion > 1.0 && s.contraction > 0.0 && s.contraction < 1.0 && s.shrink > 0.0 && s.shrink < 1.0) {
            return Err(Error::Parameter(format!("invalid simplex coefficients {s:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Population {
    /// One row per particle.
    pub positions: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub best_index: usize,
    pub worst_index: usize,
}

impl Population {
    fn new(positions: Vec<Vec<f64>>, values: Vec<f64>) -> Self {
        let mut p = Self { positions, values, best_index: 0, worst_index: 0 };
        p.rank();
        p
    }

    fn rank(&mut self) {
        let (mut best, mut worst) = (0, 0);
        for (i, v) in self.values.iter().enumerate() {
            if *v < self.values[best] {
                best = i;
            }
            if *v > self.values[worst] {
                worst = i;
            }
        }
        self.best_index = best;
        self.worst_index = worst;
    }

    pub fn best_value(&self) -> f64 {
        self.values[self.best_index]
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SearchTrace {
    /// Best-ever value after each iteration (index 0 is the initialization).
    pub best_history: Vec<f64>,
    pub evaluations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchOutcome {
    pub best_point: Vec<f64>,
    pub best_value: f64,
    pub trace: SearchTrace,
}

fn evaluate(objective: &SearchObjective, x: &[f64]) -> Result<f64> {
    let v = objective(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Objective(x.to_vec()))
    }
}

fn evaluate_all(objective: &SearchObjective, points: &[Vec<f64>]) -> Result<Vec<f64>> {
    points.par_iter().map(|x| evaluate(objective, x)).collect()
}

/// JAYA: every particle moves towards the best and away from the worst,
/// `x' = x + r1⊙(best − |x|) − r2⊙(worst − |x|)`, and keeps the move only if it improves.
pub fn jaya_optimize(objective: &SearchObjective, domain: &BoxDomain, config: &SearchConfig) -> Result<SearchOutcome> {
    config.validate()?;
    if config.population_size < 2 {
        return Err(Error::Parameter("JAYA needs at least two particles".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let d = domain.dim();
    let start: Vec<Vec<f64>> = (0..config.population_size).map(|_| domain.sample(&mut rng)).collect();
    let values = evaluate_all(objective, &start)?;
    let mut pop = Population::new(start, values);
    let mut trace = SearchTrace { best_history: vec![pop.best_value()], evaluations: config.population_size };

    for _ in 0..config.iterations {
        let best = pop.positions[pop.best_index].clone();
        let worst = pop.positions[pop.worst_index].clone();
        let trials: Vec<Vec<f64>> = pop
            .positions
            .iter()
            .map(|x| {
                let mut y: Vec<f64> = (0..d)
                    .map(|k| {
                        let (r1, r2): (f64, f64) = (rng.random(), rng.random());
                        x[k] + r1 * (best[k] - x[k].abs()) - r2 * (worst[k] - x[k].abs())
                    })
                    .collect();
                domain.clip(&mut y);
                y
            })
            .collect();
        let trial_values = evaluate_all(objective, &trials)?;
        trace.evaluations += trials.len();
        for (i, (y, v)) in trials.into_iter().zip(trial_values).enumerate() {
            if v < pop.values[i] {
                pop.positions[i] = y;
                pop.values[i] = v;
            }
        }
        pop.rank();
        trace.best_history.push(pop.best_value());
    }
    Ok(SearchOutcome { best_point: pop.positions[pop.best_index].clone(), best_value: pop.best_value(), trace })
}

/// Metropolis walk with geometric cooling. Proposals are Gaussian with a
/// standard deviation of 10% of the box span, shrinking proportionally to the
/// temperature (floored at 1e-3 of the initial width).
pub fn simulated_annealing(objective: &SearchObjective, domain: &BoxDomain, config: &SearchConfig) -> Result<SearchOutcome> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trace = SearchTrace::default();
    let t0 = match config.initial_temperature {
        Some(t) => t,
        None => {
            let samples: Vec<Vec<f64>> = (0..10).map(|_| domain.sample(&mut rng)).collect();
            let v = evaluate_all(objective, &samples)?;
            trace.evaluations += 10;
            v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min)
        }
    };
    let mut x = domain.sample(&mut rng);
    let mut fx = evaluate(objective, &x)?;
    trace.evaluations += 1;
    let (mut best, mut best_value) = (x.clone(), fx);
    trace.best_history.push(best_value);

    let mut t = t0;
    for _ in 0..config.iterations {
        let shrink = if t0 > 0.0 { (t / t0).max(1e-3) } else { 1.0 };
        for _ in 0..config.proposals_per_temperature {
            let mut y: Vec<f64> = x
                .iter()
                .enumerate()
                .map(|(k, v)| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    v + 0.1 * domain.span(k) * shrink * z
                })
                .collect();
            domain.clip(&mut y);
            let fy = evaluate(objective, &y)?;
            trace.evaluations += 1;
            let dc = fy - fx;
            let u: f64 = rng.random();
            if dc <= 0.0 || (t > 0.0 && u < (-dc / t).exp()) {
                x = y;
                fx = fy;
                if fx < best_value {
                    best_value = fx;
                    best.clone_from(&x);
                }
            }
        }
        trace.best_history.push(best_value);
        t *= config.cooling;
    }
    Ok(SearchOutcome { best_point: best, best_value, trace })
}

/// Downhill simplex from `start`. The initial simplex offsets each coordinate by
/// 5% of the box span (or 0.1 without a box); points are clipped before evaluation.
/// Stops when every vertex is within 1e-8 of the best one or after `config.iterations`.
pub fn nelder_mead(
    objective: &SearchObjective,
    start: &[f64],
    domain: Option<&BoxDomain>,
    config: &SearchConfig,
) -> Result<SearchOutcome> {
    config.validate()?;
    let d = start.len();
    if d == 0 {
        return Err(Error::Shape("empty start point".into()));
    }
    if let Some(b) = domain {
        if !b.contains(start) {
            return Err(Error::Parameter("start point lies outside the box".into()));
        }
    }
    let clip = |mut x: Vec<f64>| {
        if let Some(b) = domain {
            b.clip(&mut x);
        }
        x
    };
    let c = config.simplex;
    let mut trace = SearchTrace::default();
    let mut simplex = vec![start.to_vec()];
    for k in 0..d {
        let mut v = start.to_vec();
        let step = domain.map_or(0.1, |b| 0.05 * b.span(k));
        v[k] += step;
        if domain.is_some_and(|b| v[k] > b.upper()[k]) {
            v[k] = start[k] - step;
        }
        simplex.push(v);
    }
    let mut values = evaluate_all(objective, &simplex)?;
    trace.evaluations += d + 1;

    let order = |simplex: &mut Vec<Vec<f64>>, values: &mut Vec<f64>| {
        let mut idx: Vec<usize> = (0..values.len()).collect();
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        *simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        *values = idx.iter().map(|&i| values[i]).collect();
    };
    order(&mut simplex, &mut values);
    trace.best_history.push(values[0]);

    for _ in 0..config.iterations {
        let diameter = simplex[1..]
            .iter()
            .map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        if diameter <= 1e-8 {
            break;
        }
        let centroid: Vec<f64> = (0..d).map(|k| simplex[..d].iter().map(|v| v[k]).sum::<f64>() / d as f64).collect();
        let along = |coef: f64| -> Vec<f64> {
            clip((0..d).map(|k| centroid[k] + coef * (simplex[d][k] - centroid[k])).collect())
        };
        let reflected = along(-c.reflection);
        let fr = evaluate(objective, &reflected)?;
        trace.evaluations += 1;
        if fr < values[0] {
            let expanded = along(-c.reflection * c.expansion);
            let fe = evaluate(objective, &expanded)?;
            trace.evaluations += 1;
            if fe < fr {
                simplex[d] = expanded;
                values[d] = fe;
            } else {
                simplex[d] = reflected;
                values[d] = fr;
            }
        } else if fr < values[d - 1] {
            simplex[d] = reflected;
            values[d] = fr;
        } else {
            let (contracted, fc) = if fr < values[d] {
                let p = along(-c.reflection * c.contraction);
                let f = evaluate(objective, &p)?;
                (p, f)
            } else {
                let p = along(c.contraction);
                let f = evaluate(objective, &p)?;
                (p, f)
            };
            trace.evaluations += 1;
            if fc < values[d].min(fr) {
                simplex[d] = contracted;
                values[d] = fc;
            } else {
                let best = simplex[0].clone();
                for v in simplex.iter_mut().skip(1) {
                    *v = clip(v.iter().zip(&best).map(|(a, b)| b + c.shrink * (a - b)).collect());
                }
                let shrunk = evaluate_all(objective, &simplex[1..])?;
                trace.evaluations += d;
                values[1..].copy_from_slice(&shrunk);
            }
        }
        order(&mut simplex, &mut values);
        trace.best_history.push(values[0]);
    }
    Ok(SearchOutcome { best_point: simplex[0].clone(), best_value: values[0], trace })
}

/// `n` uniform points in the box from a seeded stream, for multistart runs.
pub fn random_starts(domain: &BoxDomain, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| domain.sample(&mut rng)).collect()
}

/// Two-dimensional test landscape `−(x² + xy − y³/2)·e^{−(x⁴+y⁴)/2}` with several local minima.
pub fn test_function(p: &[f64]) -> f64 {
    let (x, y) = (p[0], p[1]);
    -(x * x + x * y - 0.5 * y.powi(3)) * (-(x.powi(4) + y.powi(4)) / 2.0).exp()
}
