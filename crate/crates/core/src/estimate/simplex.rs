use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Box constraint for one coordinate, enforced by a smooth reparametrisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bound {
    Free,
    /// x > 0, mapped as x = exp(u).
    Positive,
    /// lo < x < hi, mapped as x = lo + (hi - lo)·σ(u).
    Interval(f64, f64),
}

impl Bound {
    fn contains(&self, x: f64) -> bool {
        match *self {
            Bound::Free => x.is_finite(),
            Bound::Positive => x >= 0.0 && x.is_finite(),
            Bound::Interval(lo, hi) => x >= lo && x <= hi,
        }
    }

    fn to_internal(&self, x: f64) -> f64 {
        match *self {
            Bound::Free => x,
            Bound::Positive => x.max(1e-300).ln(),
            Bound::Interval(lo, hi) => {
                let s = ((x - lo) / (hi - lo)).clamp(1e-12, 1.0 - 1e-12);
                (s / (1.0 - s)).ln()
            }
        }
    }

    fn to_external(&self, u: f64) -> f64 {
        match *self {
            Bound::Free => u,
            Bound::Positive => u.clamp(-700.0, 700.0).exp(),
            Bound::Interval(lo, hi) => lo + (hi - lo) / (1.0 + (-u).exp()),
        }
    }

    /// dx/du at internal coordinate u.
    fn jacobian(&self, u: f64) -> f64 {
        match *self {
            Bound::Free => 1.0,
            Bound::Positive => u.clamp(-700.0, 700.0).exp(),
            Bound::Interval(lo, hi) => {
                let s = 1.0 / (1.0 + (-u).exp());
                (hi - lo) * s * (1.0 - s)
            }
        }
    }
}

/// A scalar function with per-coordinate bounds.
pub struct Objective<F> {
    pub func: F,
    pub bounds: Vec<Bound>,
}

impl<F: Fn(&[f64]) -> f64> Objective<F> {
    pub fn new(func: F, bounds: Vec<Bound>) -> Self {
        Self { func, bounds }
    }

    pub fn dimension(&self) -> usize {
        self.bounds.len()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.func)(x)
    }

    fn external(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.bounds)
            .map(|(&ui, b)| b.to_external(ui))
            .collect()
    }

    fn eval_internal(&self, u: &[f64]) -> (Vec<f64>, f64) {
        let x = self.external(u);
        let v = (self.func)(&x);
        (x, if v.is_nan() { f64::INFINITY } else { v })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOptions {
    /// Number of additional simplex runs started from the incumbent.
    pub restarts: usize,
    /// Convergence threshold on simplex diameter (internal coordinates) and
    /// on the value spread relative to max(1, |f_best|).
    pub tol: f64,
    pub max_evals_per_run: usize,
    /// Initial simplex edge in internal coordinates.
    pub initial_step: f64,
    pub seed: u64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            restarts: 4,
            tol: 1e-9,
            max_evals_per_run: 20_000,
            initial_step: 0.25,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub point: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub restart_index: usize,
}

struct Vertex {
    u: Vec<f64>,
    x: Vec<f64>,
    f: f64,
}

struct RunOutcome {
    best: Vertex,
    iterations: usize,
    evaluations: usize,
    converged: bool,
}

fn nelder_mead<F: Fn(&[f64]) -> f64>(
    obj: &Objective<F>,
    start: Vec<Vertex>,
    opts: &MinimizeOptions,
) -> RunOutcome {
    const ALPHA: f64 = 1.0;
    const GAMMA: f64 = 2.0;
    const RHO: f64 = 0.5;
    const SIGMA: f64 = 0.5;

    let dim = obj.dimension();
    let mut simplex = start;
    let mut evaluations = simplex.len();
    let mut iterations = 0;
    let mut converged = false;

    let eval = |u: Vec<f64>, evaluations: &mut usize| {
        *evaluations += 1;
        let (x, f) = obj.eval_internal(&u);
        Vertex { u, x, f }
    };

    loop {
        // Stable sort keeps earlier vertices ahead on ties.
        simplex.sort_by(|a, b| a.f.total_cmp(&b.f));

        let best_f = simplex[0].f;
        let worst_f = simplex[dim].f;
        let diameter = simplex[1..]
            .iter()
            .map(|v| {
                v.u.iter()
                    .zip(&simplex[0].u)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        let spread = if worst_f.is_finite() {
            worst_f - best_f
        } else {
            f64::INFINITY
        };
        if diameter < opts.tol && spread <= opts.tol * best_f.abs().max(1.0) {
            converged = true;
            break;
        }
        if evaluations >= opts.max_evals_per_run {
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..dim)
            .map(|j| simplex[..dim].iter().map(|v| v.u[j]).sum::<f64>() / dim as f64)
            .collect();
        let along = |coef: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[dim].u)
                .map(|(c, w)| c + coef * (c - w))
                .collect()
        };

        let reflected = eval(along(ALPHA), &mut evaluations);
        if reflected.f < simplex[0].f {
            let expanded = eval(along(GAMMA), &mut evaluations);
            simplex[dim] = if expanded.f < reflected.f {
                expanded
            } else {
                reflected
            };
            continue;
        }
        if reflected.f < simplex[dim - 1].f {
            simplex[dim] = reflected;
            continue;
        }
        if reflected.f < simplex[dim].f {
            let outside = eval(along(RHO * ALPHA), &mut evaluations);
            if outside.f <= reflected.f {
                simplex[dim] = outside;
                continue;
            }
        } else {
            let inside = eval(along(-RHO), &mut evaluations);
            if inside.f < simplex[dim].f {
                simplex[dim] = inside;
                continue;
            }
        }
        // Shrink towards the best vertex.
        let best_u = simplex[0].u.clone();
        for v in simplex.iter_mut().skip(1) {
            let u: Vec<f64> = best_u
                .iter()
                .zip(&v.u)
                .map(|(b, x)| b + SIGMA * (x - b))
                .collect();
            *v = eval(u, &mut evaluations);
        }
    }
    simplex.sort_by(|a, b| a.f.total_cmp(&b.f));
    let best = simplex.swap_remove(0);
    RunOutcome {
        best,
        iterations,
        evaluations,
        converged,
    }
}

/// Nelder–Mead in transformed coordinates with restarts.
///
/// Run 0 starts from `x0` with an axis-aligned simplex. Every restart begins
/// at the incumbent with a simplex whose edges have random signs and lengths
/// in [0.5, 1.5]·`initial_step`, drawn from a generator seeded by
/// `opts.seed`. The incumbent is replaced only on strict improvement.
pub fn minimize<F: Fn(&[f64]) -> f64>(
    obj: &Objective<F>,
    x0: &[f64],
    opts: &MinimizeOptions,
) -> Result<FitResult> {
    let dim = obj.dimension();
    if x0.len() != dim {
        return Err(Error::Domain(format!(
            "start point has {} coordinates, objective has {dim}",
            x0.len()
        )));
    }
    if dim == 0 {
        return Err(Error::Domain("zero-dimensional objective".into()));
    }
    for (i, (&x, b)) in x0.iter().zip(&obj.bounds).enumerate() {
        if !b.contains(x) {
            return Err(Error::Domain(format!(
                "start coordinate {i} = {x} violates bound {b:?}"
            )));
        }
    }

    let mut rng = rng_from_seed(opts.seed);
    let u0: Vec<f64> = x0
        .iter()
        .zip(&obj.bounds)
        .map(|(&x, b)| b.to_internal(x))
        .collect();

    let build = |origin: &[f64], steps: &[f64], evals: &mut usize| -> Vec<Vertex> {
        let mut out = Vec::with_capacity(dim + 1);
        let (x, f) = obj.eval_internal(origin);
        *evals += 1;
        out.push(Vertex {
            u: origin.to_vec(),
            x,
            f,
        });
        for j in 0..dim {
            let mut u = origin.to_vec();
            u[j] += steps[j];
            let (x, f) = obj.eval_internal(&u);
            *evals += 1;
            out.push(Vertex { u, x, f });
        }
        out
    };

    let mut total_iters = 0;
    let mut total_evals = 0;
    let mut setup_evals = 0;
    let first = build(&u0, &vec![opts.initial_step; dim], &mut setup_evals);
    let mut run = nelder_mead(obj, first, opts);
    total_iters += run.iterations;
    total_evals += run.evaluations;
    let mut best = run.best;
    let mut converged = run.converged;
    let mut restart_index = 0;

    for k in 1..=opts.restarts {
        let steps: Vec<f64> = (0..dim)
            .map(|_| {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                sign * opts.initial_step * rng.random_range(0.5..1.5)
            })
            .collect();
        let start = build(&best.u, &steps, &mut setup_evals);
        run = nelder_mead(obj, start, opts);
        total_iters += run.iterations;
        total_evals += run.evaluations;
        if run.best.f < best.f {
            best = run.best;
            converged = run.converged;
            restart_index = k;
        }
    }

    Ok(FitResult {
        point: best.x,
        value: best.f,
        iterations: total_iters,
        evaluations: total_evals,
        converged,
        restart_index,
    })
}

/// Covariance of the parameters of a minimised negative log-likelihood: the
/// inverse finite-difference Hessian in internal coordinates, mapped back
/// through the bound transforms (delta method). `None` when the Hessian is
/// not positive definite.
pub fn covariance<F: Fn(&[f64]) -> f64>(obj: &Objective<F>, x: &[f64]) -> Option<DMatrix<f64>> {
    let dim = obj.dimension();
    let u: Vec<f64> = x
        .iter()
        .zip(&obj.bounds)
        .map(|(&xi, b)| b.to_internal(xi))
        .collect();
    let f = |v: &[f64]| obj.eval_internal(v).1;
    let h: Vec<f64> = u.iter().map(|ui| 1e-4 * ui.abs().max(1.0)).collect();
    let f0 = f(&u);
    let mut hess = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..dim {
        let mut up = u.clone();
        up[i] += h[i];
        let mut dn = u.clone();
        dn[i] -= h[i];
        hess[(i, i)] = (f(&up) - 2.0 * f0 + f(&dn)) / (h[i] * h[i]);
        for j in 0..i {
            let shifted = |si: f64, sj: f64| {
                let mut v = u.clone();
                v[i] += si * h[i];
                v[j] += sj * h[j];
                f(&v)
            };
            let d = (shifted(1.0, 1.0) - shifted(1.0, -1.0) - shifted(-1.0, 1.0)
                + shifted(-1.0, -1.0))
                / (4.0 * h[i] * h[j]);
            hess[(i, j)] = d;
            hess[(j, i)] = d;
        }
    }
    if hess.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let cov = hess.cholesky()?.inverse();
    let jac: Vec<f64> = (0..dim).map(|i| obj.bounds[i].jacobian(u[i])).collect();
    Some(DMatrix::from_fn(dim, dim, |i, j| cov[(i, j)] * jac[i] * jac[j]))
}

/// Square roots of the diagonal of [`covariance`].
pub fn standard_errors<F: Fn(&[f64]) -> f64>(obj: &Objective<F>, x: &[f64]) -> Option<Vec<f64>> {
    let cov = covariance(obj, x)?;
    Some((0..obj.dimension()).map(|i| cov[(i, i)].sqrt()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeastSquaresFit {
    pub fit: FitResult,
    pub residual_sum_squares: f64,
    /// Fewer data points than parameters.
    pub underdetermined: bool,
}

/// Minimises Σ (y - model(params, x))².
pub fn least_squares_fit<M: Fn(&[f64], f64) -> f64>(
    model: M,
    xs: &[f64],
    ys: &[f64],
    x0: &[f64],
    bounds: Vec<Bound>,
    opts: &MinimizeOptions,
) -> Result<LeastSquaresFit> {
    if xs.len() != ys.len() {
        return Err(Error::Domain(format!(
            "{} abscissae but {} ordinates",
            xs.len(),
            ys.len()
        )));
    }
    let obj = Objective::new(
        |p: &[f64]| {
            xs.iter()
                .zip(ys)
                .map(|(&x, &y)| {
                    let r = y - model(p, x);
                    r * r
                })
                .sum::<f64>()
        },
        bounds,
    );
    let fit = minimize(&obj, x0, opts)?;
    Ok(LeastSquaresFit {
        residual_sum_squares: fit.value,
        underdetermined: xs.len() < x0.len(),
        fit,
    })
}
