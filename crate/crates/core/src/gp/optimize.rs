//! Empirical-Bayes hyperparameter selection.
//!
//! Every start runs a box-constrained Nelder-Mead search in log-parameter
//! space, then a compass search that ends only when no coordinate probe at any
//! of [`PROBE_STEPS`] improves the marginal likelihood. The returned point is
//! therefore a certified coordinate-wise local maximum within the bounds.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kernel::{dot, rows_of, sq_dist};
use super::model::{factorize, log_marginal_from};
use super::{Dataset, Hyperparams, KernelSpec};
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Log-space step sizes at which the local-maximum certificate is checked.
pub const PROBE_STEPS: [f64; 3] = [1e-2, 1e-3, 1e-4];

const IMPROVEMENT_EPS: f64 = 1e-12;
const MAX_POLISH_ROUNDS: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo > 0.0 && self.lo <= self.hi) {
            return Err(Error::invalid(format!(
                "{name} bounds must satisfy 0 < lo <= hi, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub beta: Interval,
    pub lengthscale: Interval,
    pub noise_var: Interval,
}

impl Default for Bounds {
    fn default() -> Self {
        Self {
            beta: Interval::new(1e-2, 1e2),
            lengthscale: Interval::new(1e-2, 10.0),
            noise_var: Interval::new(1e-4, 1.0),
        }
    }
}

impl Bounds {
    pub fn validate(&self) -> Result<()> {
        self.beta.validate("beta")?;
        self.lengthscale.validate("lengthscale")?;
        self.noise_var.validate("noise_var")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub theta: Hyperparams,
    pub log_marginal: f64,
    /// Index of the start that produced the optimum.
    pub start: usize,
    pub evaluations: usize,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Param {
    Beta,
    Lengthscale,
    NoiseVar,
}

fn active_params(spec: KernelSpec) -> &'static [Param] {
    match spec {
        KernelSpec::Linear => &[Param::NoiseVar],
        KernelSpec::SquaredExp => &[Param::Lengthscale, Param::NoiseVar],
        KernelSpec::Combined => &[Param::Beta, Param::Lengthscale, Param::NoiseVar],
    }
}

/// Marginal likelihood evaluator over log-parameters with cached pairwise terms.
struct Objective<'a> {
    spec: KernelSpec,
    params: &'static [Param],
    lo: Vec<f64>,
    hi: Vec<f64>,
    raw: Vec<Interval>,
    inner: DMatrix<f64>,
    sqdist: DMatrix<f64>,
    y: &'a DVector<f64>,
    cache: HashMap<Vec<u64>, f64>,
    evaluations: usize,
}

impl<'a> Objective<'a> {
    fn new(dataset: &'a Dataset, spec: KernelSpec, bounds: &Bounds) -> Self {
        let rows = rows_of(dataset.inputs());
        let n = rows.len();
        let mut inner = DMatrix::zeros(n, n);
        let mut sqdist = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let ip = dot(&rows[i], &rows[j]);
                let sd = sq_dist(&rows[i], &rows[j]);
                inner[(i, j)] = ip;
                inner[(j, i)] = ip;
                sqdist[(i, j)] = sd;
                sqdist[(j, i)] = sd;
            }
        }
        let params = active_params(spec);
        let interval = |p: Param| match p {
            Param::Beta => bounds.beta,
            Param::Lengthscale => bounds.lengthscale,
            Param::NoiseVar => bounds.noise_var,
        };
        Self {
            spec,
            params,
            lo: params.iter().map(|&p| interval(p).lo.ln()).collect(),
            raw: params.iter().map(|&p| interval(p)).collect(),
            hi: params.iter().map(|&p| interval(p).hi.ln()).collect(),
            inner,
            sqdist,
            y: dataset.outputs(),
            cache: HashMap::new(),
            evaluations: 0,
        }
    }

    fn dim(&self) -> usize {
        self.params.len()
    }

    fn theta(&self, u: &[f64]) -> Hyperparams {
        let mut theta = match self.spec {
            KernelSpec::Linear => Hyperparams { beta: 0.0, lengthscale: 1.0, noise_var: 0.0 },
            KernelSpec::SquaredExp | KernelSpec::Combined => {
                Hyperparams { beta: 1.0, lengthscale: 1.0, noise_var: 0.0 }
            }
        };
        for (i, (p, v)) in self.params.iter().zip(u).enumerate() {
            // Coordinates on a bound map to the exact bound value.
            let value = if *v <= self.lo[i] {
                self.raw[i].lo
            } else if *v >= self.hi[i] {
                self.raw[i].hi
            } else {
                v.exp()
            };
            match p {
                Param::Beta => theta.beta = value,
                Param::Lengthscale => theta.lengthscale = value,
                Param::NoiseVar => theta.noise_var = value,
            }
        }
        theta
    }

    fn to_log(&self, theta: &Hyperparams) -> Vec<f64> {
        self.params
            .iter()
            .map(|p| match p {
                Param::Beta => theta.beta.ln(),
                Param::Lengthscale => theta.lengthscale.ln(),
                Param::NoiseVar => theta.noise_var.ln(),
            })
            .collect()
    }

    fn clamp(&self, u: &mut [f64]) {
        for (i, v) in u.iter_mut().enumerate() {
            *v = v.clamp(self.lo[i], self.hi[i]);
        }
    }

    /// Negative log marginal likelihood; `+inf` where the Gramian cannot be factorized.
    fn cost(&mut self, u: &[f64]) -> f64 {
        let key: Vec<u64> = u.iter().map(|v| v.to_bits()).collect();
        if let Some(&c) = self.cache.get(&key) {
            return c;
        }
        self.evaluations += 1;
        let theta = self.theta(u);
        let n = self.y.len();
        let k = match self.spec {
            KernelSpec::Linear => self.inner.clone(),
            KernelSpec::SquaredExp | KernelSpec::Combined => {
                let amp = if self.spec == KernelSpec::Combined { theta.beta } else { 1.0 };
                let inv = 1.0 / (2.0 * theta.lengthscale * theta.lengthscale);
                let mut k = DMatrix::zeros(n, n);
                for j in 0..n {
                    for i in 0..n {
                        let base = if self.spec == KernelSpec::Combined { self.inner[(i, j)] } else { 0.0 };
                        k[(i, j)] = base + amp * (-self.sqdist[(i, j)] * inv).exp();
                    }
                }
                k
            }
        };
        let c = match factorize(&k, theta.noise_var, self.y) {
            Ok(f) => -log_marginal_from(&f, self.y),
            Err(_) => f64::INFINITY,
        };
        let c = if c.is_finite() { c } else { f64::INFINITY };
        self.cache.insert(key, c);
        c
    }
}

/// Box-constrained Nelder-Mead on the objective's log-parameters.
fn nelder_mead(obj: &mut Objective<'_>, start: &[f64], max_evals: usize) -> (Vec<f64>, f64) {
    let dim = start.len();
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..dim {
        let mut v = start.to_vec();
        let step = 0.5_f64.min(0.25 * (obj.hi[i] - obj.lo[i]).max(1e-12));
        v[i] = if v[i] + step <= obj.hi[i] { v[i] + step } else { v[i] - step };
        obj.clamp(&mut v);
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| obj.cost(v)).collect();
    let budget_start = obj.evaluations;

    loop {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = values[dim] - values[0];
        let diameter = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if (spread.is_finite() && spread < 1e-10) || diameter < 1e-7 {
            break;
        }
        if obj.evaluations - budget_start >= max_evals {
            break;
        }

        let centroid: Vec<f64> = (0..dim)
            .map(|j| simplex[..dim].iter().map(|v| v[j]).sum::<f64>() / dim as f64)
            .collect();
        let along = |t: f64, obj: &Objective<'_>| {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(&simplex[dim])
                .map(|(c, w)| c + t * (c - w))
                .collect();
            obj.clamp(&mut p);
            p
        };

        let reflected = along(1.0, obj);
        let fr = obj.cost(&reflected);
        if fr < values[0] {
            let expanded = along(2.0, obj);
            let fe = obj.cost(&expanded);
            if fe < fr {
                simplex[dim] = expanded;
                values[dim] = fe;
            } else {
                simplex[dim] = reflected;
                values[dim] = fr;
            }
            continue;
        }
        if fr < values[dim - 1] {
            simplex[dim] = reflected;
            values[dim] = fr;
            continue;
        }
        let (contracted, fc) = if fr < values[dim] {
            let p = along(0.5, obj);
            let f = obj.cost(&p);
            (p, f)
        } else {
            let p = along(-0.5, obj);
            let f = obj.cost(&p);
            (p, f)
        };
        if fc < values[dim].min(fr) {
            simplex[dim] = contracted;
            values[dim] = fc;
            continue;
        }
        // Shrink toward the best vertex.
        for i in 1..=dim {
            let mut p: Vec<f64> = simplex[0]
                .iter()
                .zip(&simplex[i])
                .map(|(b, v)| b + 0.5 * (v - b))
                .collect();
            obj.clamp(&mut p);
            values[i] = obj.cost(&p);
            simplex[i] = p;
        }
    }
    let best = (0..=dim)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)))
        .unwrap();
    (simplex[best].clone(), values[best])
}

/// Best strictly improving coordinate probe at step `step`, if any.
fn best_probe(obj: &mut Objective<'_>, x: &[f64], fx: f64, step: f64) -> Option<(Vec<f64>, f64)> {
    let mut best: Option<(Vec<f64>, f64)> = None;
    for i in 0..x.len() {
        for sign in [1.0, -1.0] {
            let mut p = x.to_vec();
            p[i] += sign * step;
            obj.clamp(&mut p);
            if p[i] == x[i] {
                continue;
            }
            let fp = obj.cost(&p);
            let threshold = best.as_ref().map_or(fx - IMPROVEMENT_EPS, |b| b.1);
            if fp < threshold {
                best = Some((p, fp));
            }
        }
    }
    best
}

/// Compass search followed by the certificate sweep over [`PROBE_STEPS`].
fn polish(obj: &mut Objective<'_>, mut x: Vec<f64>, mut fx: f64) -> (Vec<f64>, f64) {
    for _ in 0..MAX_POLISH_ROUNDS {
        let mut step = 0.25;
        while step >= 0.5 * PROBE_STEPS[PROBE_STEPS.len() - 1] {
            match best_probe(obj, &x, fx, step) {
                Some((p, fp)) => {
                    x = p;
                    fx = fp;
                }
                None => step *= 0.5,
            }
        }
        let mut moved = false;
        for &step in &PROBE_STEPS {
            if let Some((p, fp)) = best_probe(obj, &x, fx, step) {
                x = p;
                fx = fp;
                moved = true;
                break;
            }
        }
        if !moved {
            break;
        }
    }
    (x, fx)
}

/// Runs the local search from each given start and returns the best optimum.
/// Ties are broken toward the earlier start.
pub fn optimize_from_starts(
    dataset: &Dataset,
    spec: KernelSpec,
    bounds: &Bounds,
    starts: &[Hyperparams],
) -> Result<Optimum> {
    bounds.validate()?;
    if starts.is_empty() {
        return Err(Error::invalid("at least one optimizer start is required"));
    }
    let mut obj = Objective::new(dataset, spec, bounds);
    let max_evals = 150 * obj.dim();
    let mut best: Option<(Vec<f64>, f64, usize)> = None;
    for (idx, start) in starts.iter().enumerate() {
        let mut u0 = obj.to_log(start);
        if u0.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("optimizer start {idx} is not strictly positive")));
        }
        obj.clamp(&mut u0);
        let (u, f) = nelder_mead(&mut obj, &u0, max_evals);
        if !f.is_finite() {
            continue;
        }
        let (u, f) = polish(&mut obj, u, f);
        if best.as_ref().map_or(true, |b| f < b.1) {
            best = Some((u, f, idx));
        }
    }
    match best {
        Some((u, f, idx)) => Ok(Optimum {
            theta: obj.theta(&u),
            log_marginal: -f,
            start: idx,
            evaluations: obj.evaluations,
        }),
        None => Err(Error::OptimizationFailure { best: None }),
    }
}

/// Multi-start maximization of the marginal likelihood. Starts are drawn
/// log-uniformly within the bounds from `seed`.
pub fn optimize_hyperparams(
    dataset: &Dataset,
    spec: KernelSpec,
    bounds: &Bounds,
    n_starts: usize,
    seed: u64,
) -> Result<Optimum> {
    bounds.validate()?;
    if n_starts == 0 {
        return Err(Error::invalid("n_starts must be at least 1"));
    }
    let mut rng = rng_from_seed(seed);
    let mut draw = |iv: Interval| -> f64 {
        let (a, b) = (iv.lo.ln(), iv.hi.ln());
        (a + (b - a) * rng.random::<f64>()).exp()
    };
    let starts: Vec<Hyperparams> = (0..n_starts)
        .map(|_| Hyperparams {
            beta: draw(bounds.beta),
            lengthscale: draw(bounds.lengthscale),
            noise_var: draw(bounds.noise_var),
        })
        .collect();
    optimize_from_starts(dataset, spec, bounds, &starts)
}
