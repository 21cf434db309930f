//! Mark reconstruction: recover per-point marks whose first-order scattering
//! moments match a target vector.
//!
//! The objective is the squared moment mismatch; its value uses the exact
//! modulus so that the global minimum at the true marks is numerically zero,
//! while gradients smooth the modulus as `sqrt(|z|^2 + eps)`. Minimization
//! runs the bounded limited-memory quasi-Newton descent of [`crate::optim`]
//! with the iteration cap as the regularizer: the final iterate is returned,
//! tuned caps come from the RMSE-versus-cap curve on a validation set.

use crate::error::{Error, Result};
use crate::geometry::PointPattern;
use crate::optim::{self, Bounds, Objective, OptimizerConfig};
use crate::raster::{image_from_marks, pixel_indices};
use crate::scattering::{first_order_moments, first_order_with_gradient, FilterBank};
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionConfig {
    /// Iteration cap; the primary regularizer.
    pub max_iterations: usize,
    /// Modulus smoothing inside gradients.
    pub eps: f64,
    pub lower_bound: f64,
    pub upper_bound: Option<f64>,
    /// Constant initial mark value, normally the training mean mark.
    pub init: f64,
    /// Quasi-Newton history length.
    pub memory: usize,
    /// Stationarity threshold; kept loose so the cap binds.
    pub gradient_tolerance: f64,
}

impl ReconstructionConfig {
    pub fn with_cap(max_iterations: usize, init: f64) -> Self {
        ReconstructionConfig {
            max_iterations,
            eps: 1e-12,
            lower_bound: 0.0,
            upper_bound: None,
            init,
            memory: 10,
            gradient_tolerance: 1e-12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::config("max_iterations must be at least 1"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::config(format!("modulus smoothing must be positive, got {}", self.eps)));
        }
        if self.memory < 1 {
            return Err(Error::config("quasi-Newton memory must be at least 1"));
        }
        if let Some(hi) = self.upper_bound {
            if hi <= self.lower_bound {
                return Err(Error::config("upper bound must exceed lower bound"));
            }
        }
        Ok(())
    }

    fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            max_iterations: self.max_iterations,
            memory: self.memory,
            gradient_tolerance: self.gradient_tolerance,
            bounds: Bounds { lower: Some(self.lower_bound), upper: self.upper_bound },
        }
    }
}

/// Moment-matching objective over the marks at fixed pixels.
struct MomentMatch<'a> {
    pixels: &'a [(usize, usize)],
    bank: &'a FilterBank,
    target: &'a [f64],
    eps: f64,
}

impl Objective for MomentMatch<'_> {
    fn value(&self, marks: &[f64]) -> Result<f64> {
        let img = image_from_marks(marks, self.pixels, self.bank.n())?;
        let m = first_order_moments(&img, self.bank)?;
        Ok(m.iter().zip(self.target).map(|(a, t)| (a - t) * (a - t)).sum())
    }

    fn value_grad(&self, marks: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (m, jac) = first_order_with_gradient(marks, self.pixels, self.bank, self.eps)?;
        let residuals: Vec<f64> = m.iter().zip(self.target).map(|(a, t)| a - t).collect();
        let value = residuals.iter().map(|r| r * r).sum();
        let mut grad = vec![0.0; marks.len()];
        for (p, r) in residuals.iter().enumerate() {
            for (i, g) in grad.iter_mut().enumerate() {
                *g += 2.0 * r * jac[[p, i]];
            }
        }
        Ok((value, grad))
    }
}

/// Squared moment mismatch and its gradient with respect to the marks.
pub fn objective(
    marks: &[f64],
    pixels: &[(usize, usize)],
    bank: &FilterBank,
    target: &[f64],
    eps: f64,
) -> Result<(f64, Vec<f64>)> {
    if target.len() != bank.first_order_len() {
        return Err(Error::Dimension { expected: bank.first_order_len(), got: target.len() });
    }
    MomentMatch { pixels, bank, target, eps }.value_grad(marks)
}

/// Full reconstruction record: final marks plus the iterates at the
/// requested snapshot caps (used for cap tuning without re-running).
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub marks: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// `snapshots[k]` is the iterate after `caps[k]` iterations (the final
    /// iterate when the run stopped earlier).
    pub snapshots: Vec<Vec<f64>>,
    /// Objective values aligned with `snapshots`.
    pub snapshot_objectives: Vec<f64>,
}

fn run_reconstruction(
    p: &PointPattern,
    target: &[f64],
    bank: &FilterBank,
    cfg: &ReconstructionConfig,
    snapshot_caps: &[usize],
) -> Result<Reconstruction> {
    cfg.validate()?;
    if target.len() != bank.first_order_len() {
        return Err(Error::Dimension { expected: bank.first_order_len(), got: target.len() });
    }
    let pixels = pixel_indices(p, bank.n())?;
    let problem = MomentMatch { pixels: &pixels, bank, target, eps: cfg.eps };
    let x0 = vec![cfg.init; p.len()];

    let max_cap = snapshot_caps.iter().copied().max().unwrap_or(0).max(cfg.max_iterations);
    let opt_cfg = OptimizerConfig { max_iterations: max_cap, ..cfg.optimizer() };

    let f0 = problem.value(&x0)?;
    let mut trace: Vec<(Vec<f64>, f64)> = Vec::new();
    let result = optim::minimize(&problem, &x0, &opt_cfg, |_, x, f| trace.push((x.to_vec(), f)))?;
    if !result.objective.is_finite() {
        return Err(Error::numerical("reconstruction objective is not finite"));
    }

    let at_cap = |cap: usize| -> (Vec<f64>, f64) {
        if cap == 0 || trace.is_empty() {
            (x0.clone(), f0)
        } else {
            trace[cap.min(trace.len()) - 1].clone()
        }
    };
    let mut snapshots = Vec::with_capacity(snapshot_caps.len());
    let mut snapshot_objectives = Vec::with_capacity(snapshot_caps.len());
    for &c in snapshot_caps {
        let (x, f) = at_cap(c);
        snapshots.push(x);
        snapshot_objectives.push(f);
    }
    let (marks, obj) = at_cap(cfg.max_iterations);
    Ok(Reconstruction {
        marks,
        objective: obj,
        iterations: result.iterations.min(cfg.max_iterations),
        snapshots,
        snapshot_objectives,
    })
}

/// Reconstruct the marks of a pattern from a target first-order moment
/// vector. Returns the final iterate after at most `cfg.max_iterations`
/// bounded quasi-Newton steps.
pub fn reconstruct_marks(
    p: &PointPattern,
    target: &[f64],
    bank: &FilterBank,
    cfg: &ReconstructionConfig,
) -> Result<Reconstruction> {
    run_reconstruction(p, target, bank, cfg, &[])
}

/// Reconstruct with iterates recorded at each candidate cap, in one run at
/// the largest cap.
pub fn reconstruct_with_snapshots(
    p: &PointPattern,
    target: &[f64],
    bank: &FilterBank,
    cfg: &ReconstructionConfig,
    caps: &[usize],
) -> Result<Reconstruction> {
    if caps.is_empty() {
        return Err(Error::config("snapshot cap list must not be empty"));
    }
    run_reconstruction(p, target, bank, cfg, caps)
}

/// One validation case for cap tuning.
#[derive(Debug, Clone)]
pub struct ReconstructionCase {
    pub pattern: PointPattern,
    pub true_marks: Vec<f64>,
    pub target: Vec<f64>,
}

/// RMSE-versus-cap curve over a validation set.
#[derive(Debug, Clone)]
pub struct CapCurve {
    pub caps: Vec<usize>,
    pub rmse: Vec<f64>,
    /// Candidate minimizing the pooled RMSE (ties favor the earlier entry).
    pub best_cap: usize,
}

impl CapCurve {
    /// True when the minimum is strictly interior: the curve first decreases
    /// and then increases.
    pub fn is_non_monotone(&self) -> bool {
        let best = self
            .rmse
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).expect("finite rmse"))
            .map(|(i, _)| i)
            .expect("nonempty curve");
        best > 0
            && best + 1 < self.rmse.len()
            && self.rmse[best] < self.rmse[0]
            && self.rmse[best] < self.rmse[self.rmse.len() - 1]
    }
}

/// Cap tuning with the per-case reconstructions kept, so callers can read
/// the marks at the chosen cap without re-running.
pub fn tune_with_details(
    validation: &[ReconstructionCase],
    bank: &FilterBank,
    cfg: &ReconstructionConfig,
    caps: &[usize],
) -> Result<(CapCurve, Vec<Reconstruction>)> {
    if validation.is_empty() {
        return Err(Error::config("cap tuning needs a nonempty validation set"));
    }
    if caps.is_empty() {
        return Err(Error::config("cap tuning needs a nonempty candidate list"));
    }
    if caps.iter().any(|c| *c < 1) {
        return Err(Error::config("iteration caps must be at least 1"));
    }

    let runs: Vec<Reconstruction> = validation
        .par_iter()
        .map(|case| reconstruct_with_snapshots(&case.pattern, &case.target, bank, cfg, caps))
        .collect::<Result<Vec<_>>>()?;

    let mut rmse = Vec::with_capacity(caps.len());
    for (k, _cap) in caps.iter().enumerate() {
        let mut sse = 0.0;
        let mut count = 0usize;
        for (case, run) in validation.iter().zip(&runs) {
            for (rec, truth) in run.snapshots[k].iter().zip(&case.true_marks) {
                sse += (rec - truth) * (rec - truth);
                count += 1;
            }
        }
        rmse.push((sse / count as f64).sqrt());
    }
    let mut best = 0;
    for i in 1..caps.len() {
        if rmse[i] < rmse[best] {
            best = i;
        }
    }
    Ok((CapCurve { caps: caps.to_vec(), rmse, best_cap: caps[best] }, runs))
}

/// Choose the iteration cap minimizing mark RMSE over a validation set.
/// Each pattern is reconstructed once at the largest candidate with iterates
/// recorded at every candidate.
pub fn tune_iteration_cap(
    validation: &[ReconstructionCase],
    bank: &FilterBank,
    cfg: &ReconstructionConfig,
    caps: &[usize],
) -> Result<CapCurve> {
    Ok(tune_with_details(validation, bank, cfg, caps)?.0)
}
