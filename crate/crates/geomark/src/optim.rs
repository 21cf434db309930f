//! Bound-constrained limited-memory quasi-Newton minimizer.
//!
//! Limited-memory BFGS directions (two-loop recursion) combined with a
//! projected backtracking Armijo line search onto box constraints. Accepted
//! steps strictly decrease the objective, iterates stay feasible, and runs
//! are bit-deterministic for fixed inputs, which makes the early-stopping
//! iteration cap a well-defined regularizer.

use crate::error::{Error, Result};
use std::collections::VecDeque;

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

/// Objective with joint value/gradient evaluation; the line search only needs
/// values.
pub trait Objective {
    fn value(&self, x: &[f64]) -> Result<f64>;
    fn value_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

/// Box bounds applied to every coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl Bounds {
    pub const NONE: Bounds = Bounds { lower: None, upper: None };

    pub fn nonnegative() -> Self {
        Bounds { lower: Some(0.0), upper: None }
    }

    fn clip(&self, v: f64) -> f64 {
        let mut v = v;
        if let Some(lo) = self.lower {
            v = v.max(lo);
        }
        if let Some(hi) = self.upper {
            v = v.min(hi);
        }
        v
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    pub max_iterations: usize,
    /// Number of stored curvature pairs.
    pub memory: usize,
    /// Stationarity threshold on the projected gradient sup-norm.
    pub gradient_tolerance: f64,
    pub bounds: Bounds,
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::config("max_iterations must be at least 1"));
        }
        if self.memory < 1 {
            return Err(Error::config("quasi-Newton memory must be at least 1"));
        }
        if !(self.gradient_tolerance >= 0.0) {
            return Err(Error::config("gradient tolerance must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Minimization {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// True when the projected gradient met the tolerance (rather than the
    /// iteration cap binding).
    pub converged: bool,
}

/// Gradient with bound-active components zeroed.
fn projected_gradient(x: &[f64], g: &[f64], bounds: &Bounds) -> Vec<f64> {
    x.iter()
        .zip(g)
        .map(|(&xi, &gi)| {
            if let Some(lo) = bounds.lower {
                if xi <= lo && gi > 0.0 {
                    return 0.0;
                }
            }
            if let Some(hi) = bounds.upper {
                if xi >= hi && gi < 0.0 {
                    return 0.0;
                }
            }
            gi
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Two-loop recursion: returns the quasi-Newton descent direction `-H g`.
fn two_loop(pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>, g: &[f64]) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let alpha = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= alpha * yi;
        }
        alphas.push(alpha);
    }
    if let Some((s, y, _)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for ((s, y, rho), alpha) in pairs.iter().zip(alphas.iter().rev()) {
        let beta = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (alpha - beta) * si;
        }
    }
    for qi in q.iter_mut() {
        *qi = -*qi;
    }
    q
}

struct LineSearchOutcome {
    x: Vec<f64>,
    f: f64,
    moved: bool,
}

fn line_search<O: Objective>(
    obj: &O,
    x: &[f64],
    f: f64,
    g: &[f64],
    direction: &[f64],
    alpha0: f64,
    bounds: &Bounds,
) -> Result<Option<LineSearchOutcome>> {
    let mut alpha = alpha0;
    for _ in 0..MAX_BACKTRACKS {
        let candidate: Vec<f64> = x
            .iter()
            .zip(direction)
            .map(|(&xi, &di)| bounds.clip(xi + alpha * di))
            .collect();
        let step: Vec<f64> = candidate.iter().zip(x).map(|(c, xi)| c - xi).collect();
        let deriv = dot(g, &step);
        if step.iter().all(|s| *s == 0.0) {
            return Ok(None);
        }
        if deriv < 0.0 {
            let f_new = obj.value(&candidate)?;
            if !f_new.is_finite() {
                return Err(Error::numerical("objective became non-finite during line search"));
            }
            if f_new <= f + ARMIJO_C1 * deriv {
                return Ok(Some(LineSearchOutcome { x: candidate, f: f_new, moved: true }));
            }
        }
        alpha *= 0.5;
    }
    Ok(None)
}

/// Minimize from `x0`, invoking `on_iterate` after every accepted step.
/// Returns the final iterate; early stopping by `max_iterations` is the
/// caller's regularizer, so no best-iterate bookkeeping is done.
pub fn minimize<O: Objective>(
    obj: &O,
    x0: &[f64],
    cfg: &OptimizerConfig,
    mut on_iterate: impl FnMut(usize, &[f64], f64),
) -> Result<Minimization> {
    cfg.validate()?;
    let bounds = cfg.bounds;
    let mut x: Vec<f64> = x0.iter().map(|&v| bounds.clip(v)).collect();
    let (mut f, mut g) = obj.value_grad(&x)?;
    if !f.is_finite() {
        return Err(Error::numerical("objective non-finite at the initial point"));
    }

    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut iterations = 0;
    let mut converged = false;

    for k in 1..=cfg.max_iterations {
        let pg = projected_gradient(&x, &g, &bounds);
        let pg_norm = sup_norm(&pg);
        if pg_norm <= cfg.gradient_tolerance {
            converged = true;
            break;
        }

        let (direction, alpha0) = if pairs.is_empty() {
            (pg.iter().map(|v| -v).collect::<Vec<f64>>(), 1.0 / pg_norm)
        } else {
            (two_loop(&pairs, &pg), 1.0)
        };

        let mut outcome = line_search(obj, &x, f, &g, &direction, alpha0, &bounds)?;
        if outcome.is_none() && !pairs.is_empty() {
            // Quasi-Newton direction failed; restart from steepest descent.
            pairs.clear();
            let steepest: Vec<f64> = pg.iter().map(|v| -v).collect();
            outcome = line_search(obj, &x, f, &g, &steepest, 1.0 / pg_norm, &bounds)?;
        }
        let Some(step) = outcome else {
            break; // no feasible descent step
        };
        debug_assert!(step.moved);

        let (f_new, g_new) = obj.value_grad(&step.x)?;
        let s: Vec<f64> = step.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        let s_norm = sup_norm(&s);
        let y_norm = sup_norm(&yv);
        if sy > 1e-10 * s_norm * y_norm && sy > 0.0 {
            if pairs.len() == cfg.memory {
                pairs.pop_front();
            }
            let rho = 1.0 / sy;
            pairs.push_back((s, yv, rho));
        }
        x = step.x;
        f = f_new;
        g = g_new;
        iterations = k;
        on_iterate(k, &x, f);
    }

    Ok(Minimization { x, objective: f, iterations, converged })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic {
        center: Vec<f64>,
    }

    impl Objective for Quadratic {
        fn value(&self, x: &[f64]) -> Result<f64> {
            Ok(x.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum())
        }
        fn value_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
            let v = self.value(x)?;
            Ok((v, x.iter().zip(&self.center).map(|(a, c)| 2.0 * (a - c)).collect()))
        }
    }

    struct Rosenbrock;

    impl Objective for Rosenbrock {
        fn value(&self, x: &[f64]) -> Result<f64> {
            Ok((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2))
        }
        fn value_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
            let v = self.value(x)?;
            let g = vec![
                -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
                200.0 * (x[1] - x[0] * x[0]),
            ];
            Ok((v, g))
        }
    }

    fn cfg(max_iterations: usize, bounds: Bounds) -> OptimizerConfig {
        OptimizerConfig { max_iterations, memory: 10, gradient_tolerance: 1e-10, bounds }
    }

    #[test]
    fn solves_unconstrained_rosenbrock() {
        let res = minimize(&Rosenbrock, &[-1.2, 1.0], &cfg(500, Bounds::NONE), |_, _, _| {}).unwrap();
        assert!(res.converged, "not converged after {} iterations", res.iterations);
        assert!((res.x[0] - 1.0).abs() < 1e-6 && (res.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn respects_bounds_on_quadratic() {
        let obj = Quadratic { center: vec![-2.0, 3.0] };
        let bounds = Bounds { lower: Some(0.0), upper: Some(2.5) };
        let res = minimize(&obj, &[1.0, 1.0], &cfg(200, bounds), |_, _, _| {}).unwrap();
        assert!((res.x[0] - 0.0).abs() < 1e-9);
        assert!((res.x[1] - 2.5).abs() < 1e-9);
        assert!(res.converged);
    }

    #[test]
    fn descent_is_monotone_and_capped() {
        let mut values = Vec::new();
        let res = minimize(&Rosenbrock, &[-1.2, 1.0], &cfg(7, Bounds::NONE), |_, _, f| values.push(f)).unwrap();
        assert_eq!(res.iterations, 7);
        assert_eq!(values.len(), 7);
        let mut prev = f64::INFINITY;
        for v in values {
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn single_iteration_takes_one_step() {
        let mut count = 0;
        let res = minimize(&Rosenbrock, &[-1.2, 1.0], &cfg(1, Bounds::NONE), |_, _, _| count += 1).unwrap();
        assert_eq!(count, 1);
        assert_eq!(res.iterations, 1);
        assert!(res.objective < Rosenbrock.value(&[-1.2, 1.0]).unwrap());
    }

    #[test]
    fn stationary_start_does_not_move() {
        let obj = Quadratic { center: vec![0.5, 0.25] };
        let res = minimize(&obj, &[0.5, 0.25], &cfg(50, Bounds::nonnegative()), |_, _, _| {
            panic!("no iterate expected")
        })
        .unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 0);
        assert_eq!(res.x, vec![0.5, 0.25]);
    }

    #[test]
    fn zero_max_iterations_is_rejected() {
        let obj = Quadratic { center: vec![0.0] };
        assert!(minimize(&obj, &[1.0], &cfg(0, Bounds::NONE), |_, _, _| {}).is_err());
    }

    #[test]
    fn runs_are_deterministic() {
        let run = || {
            let mut trace = Vec::new();
            let res =
                minimize(&Rosenbrock, &[-1.2, 1.0], &cfg(40, Bounds::NONE), |_, x, f| trace.push((x.to_vec(), f)))
                    .unwrap();
            (res.x, trace)
        };
        let (x1, t1) = run();
        let (x2, t2) = run();
        assert_eq!(x1, x2);
        assert_eq!(t1.len(), t2.len());
        for (a, b) in t1.iter().zip(&t2) {
            assert_eq!(a.0, b.0);
            assert_eq!(a.1.to_bits(), b.1.to_bits());
        }
    }
}
