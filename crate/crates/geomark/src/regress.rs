//! Per-output linear ridge regression with cross-validated regularization,
//! and the local-distance-matrix benchmark.
//!
//! Each output is fit by the closed-form solve of the augmented normal
//! equations with an unpenalized intercept; features are z-scored on the
//! training rows and the standardization is stored in the model. When the
//! system is singular at `lambda = 0` the fit falls back to the min-norm
//! pseudoinverse solution with a warning.

use crate::error::{Error, Result};
use crate::geometry::{MarkedPattern, PointPattern};
use nalgebra::{Cholesky, DMatrix, DVector};
use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// Multi-output ridge model: one coefficient row, intercept, and lambda per
/// output, plus the feature standardization applied before the fit.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    feature_labels: Vec<String>,
    output_labels: Vec<String>,
    lambdas: Vec<f64>,
    intercepts: Vec<f64>,
    coefficients: Array2<f64>, // outputs x features, on the standardized scale
    feature_means: Vec<f64>,
    feature_stds: Vec<f64>,
}

impl RidgeModel {
    pub fn n_features(&self) -> usize {
        self.coefficients.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.coefficients.nrows()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn intercepts(&self) -> &[f64] {
        &self.intercepts
    }

    pub fn coefficients(&self) -> &Array2<f64> {
        &self.coefficients
    }

    pub fn feature_labels(&self) -> &[String] {
        &self.feature_labels
    }

    pub fn output_labels(&self) -> &[String] {
        &self.output_labels
    }

    pub fn set_labels(&mut self, features: Vec<String>, outputs: Vec<String>) -> Result<()> {
        if features.len() != self.n_features() {
            return Err(Error::Dimension { expected: self.n_features(), got: features.len() });
        }
        if outputs.len() != self.n_outputs() {
            return Err(Error::Dimension { expected: self.n_outputs(), got: outputs.len() });
        }
        self.feature_labels = features;
        self.output_labels = outputs;
        Ok(())
    }

    /// Affine prediction `B z + b0` on the standardized feature vector.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_features() {
            return Err(Error::Dimension { expected: self.n_features(), got: x.len() });
        }
        let mut out = self.intercepts.clone();
        for (p, row) in self.coefficients.outer_iter().enumerate() {
            let mut acc = 0.0;
            for ((b, &xv), (m, s)) in row
                .iter()
                .zip(x)
                .zip(self.feature_means.iter().zip(&self.feature_stds))
            {
                acc += b * (xv - m) / s;
            }
            out[p] += acc;
        }
        Ok(out)
    }

    pub fn predict_rows(&self, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((x.nrows(), self.n_outputs()));
        for (i, row) in x.outer_iter().enumerate() {
            let pred = self.predict(row.as_slice().expect("contiguous row"))?;
            out.row_mut(i).assign(&ndarray::Array1::from(pred));
        }
        Ok(out)
    }

    pub fn to_json<W: Write>(&self, out: W) -> Result<()> {
        let file = RidgeModelFile {
            feature_labels: self.feature_labels.clone(),
            output_labels: self.output_labels.clone(),
            lambdas: self.lambdas.clone(),
            intercepts: self.intercepts.clone(),
            coefficients: self.coefficients.iter().copied().collect(),
            standardization: StandardizationFile {
                means: self.feature_means.clone(),
                stds: self.feature_stds.clone(),
            },
        };
        serde_json::to_writer_pretty(out, &file).map_err(|e| Error::parse(e.to_string()))
    }

    pub fn from_json<R: Read>(input: R) -> Result<Self> {
        let file: RidgeModelFile =
            serde_json::from_reader(input).map_err(|e| Error::parse(e.to_string()))?;
        let p = file.output_labels.len();
        let d = file.feature_labels.len();
        if file.coefficients.len() != p * d
            || file.lambdas.len() != p
            || file.intercepts.len() != p
            || file.standardization.means.len() != d
            || file.standardization.stds.len() != d
        {
            return Err(Error::parse("inconsistent ridge model dimensions"));
        }
        Ok(RidgeModel {
            feature_labels: file.feature_labels,
            output_labels: file.output_labels,
            lambdas: file.lambdas,
            intercepts: file.intercepts,
            coefficients: Array2::from_shape_vec((p, d), file.coefficients)
                .map_err(|e| Error::parse(e.to_string()))?,
            feature_means: file.standardization.means,
            feature_stds: file.standardization.stds,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct StandardizationFile {
    means: Vec<f64>,
    stds: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RidgeModelFile {
    feature_labels: Vec<String>,
    output_labels: Vec<String>,
    lambdas: Vec<f64>,
    intercepts: Vec<f64>,
    coefficients: Vec<f64>,
    standardization: StandardizationFile,
}

/// Raw sufficient statistics of a row block: `X^T X`, column sums, `X^T Y`,
/// `Y` column sums, and the row count. Subtracting a block from the full
/// statistics yields the complementary training fold cheaply.
struct Stats {
    gram: DMatrix<f64>,
    xsum: DVector<f64>,
    xty: DMatrix<f64>,
    ysum: DVector<f64>,
    rows: usize,
}

fn stats_of(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Stats {
    Stats {
        gram: x.tr_mul(x),
        xsum: x.row_sum_tr(),
        xty: x.tr_mul(y),
        ysum: y.row_sum_tr(),
        rows: x.nrows(),
    }
}

fn stats_minus(full: &Stats, part: &Stats) -> Stats {
    Stats {
        gram: &full.gram - &part.gram,
        xsum: &full.xsum - &part.xsum,
        xty: &full.xty - &part.xty,
        ysum: &full.ysum - &part.ysum,
        rows: full.rows - part.rows,
    }
}

struct Standardized {
    /// Augmented normal matrix of `[1 | Z]` with Z the z-scored features.
    a0: DMatrix<f64>,
    /// Right-hand sides, one column per output.
    c0: DMatrix<f64>,
    means: Vec<f64>,
    stds: Vec<f64>,
    rows: usize,
}

fn standardized_normal_equations(s: &Stats) -> Standardized {
    let d = s.gram.nrows();
    let p = s.xty.ncols();
    let nf = s.rows as f64;
    let means: Vec<f64> = (0..d).map(|j| s.xsum[j] / nf).collect();
    let stds: Vec<f64> = (0..d)
        .map(|j| {
            let var = (s.gram[(j, j)] - nf * means[j] * means[j]) / nf;
            let sd = var.max(0.0).sqrt();
            if sd > 0.0 {
                sd
            } else {
                1.0
            }
        })
        .collect();

    let mut a0 = DMatrix::zeros(d + 1, d + 1);
    a0[(0, 0)] = nf;
    // Centered columns: the intercept row/column vanishes exactly.
    for i in 0..d {
        for j in 0..d {
            a0[(i + 1, j + 1)] =
                (s.gram[(i, j)] - nf * means[i] * means[j]) / (stds[i] * stds[j]);
        }
    }
    let mut c0 = DMatrix::zeros(d + 1, p);
    for q in 0..p {
        c0[(0, q)] = s.ysum[q];
        for i in 0..d {
            c0[(i + 1, q)] = (s.xty[(i, q)] - means[i] * s.ysum[q]) / stds[i];
        }
    }
    Standardized { a0, c0, means, stds, rows: s.rows }
}

/// Solve `(A0 + lambda diag(0, 1, ..., 1)) W = C0` for all outputs sharing
/// one lambda. `fallback` provides the raw standardized design matrix for the
/// min-norm pseudoinverse path when the system is singular.
fn solve_lambda(
    eq: &Standardized,
    lambda: f64,
    columns: &[usize],
    fallback: Option<(&DMatrix<f64>, &DMatrix<f64>)>,
) -> Result<DMatrix<f64>> {
    let d1 = eq.a0.nrows();
    let mut a = eq.a0.clone();
    for i in 1..d1 {
        a[(i, i)] += lambda;
    }
    let rhs = DMatrix::from_fn(d1, columns.len(), |r, k| eq.c0[(r, columns[k])]);
    if let Some(chol) = Cholesky::new(a) {
        return Ok(chol.solve(&rhs));
    }
    let Some((design, y)) = fallback else {
        return Err(Error::numerical(format!(
            "singular ridge system at lambda = {lambda}"
        )));
    };
    eprintln!(
        "warning: ill-conditioned ridge system at lambda = {lambda}; solving via pseudoinverse"
    );
    let svd = design.clone().svd(true, true);
    let eps = svd.singular_values.max() * 1e-12;
    let mut w = DMatrix::zeros(d1, columns.len());
    for (k, &q) in columns.iter().enumerate() {
        let sol = svd
            .solve(&y.column(q).into_owned(), eps)
            .map_err(|e| Error::numerical(format!("pseudoinverse solve failed: {e}")))?;
        w.set_column(k, &sol);
    }
    Ok(w)
}

fn to_dmatrix(x: &ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |r, c| x[[r, c]])
}

fn standardized_design(x: &DMatrix<f64>, means: &[f64], stds: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols() + 1, |r, c| {
        if c == 0 {
            1.0
        } else {
            (x[(r, c - 1)] - means[c - 1]) / stds[c - 1]
        }
    })
}

fn check_finite(x: &ArrayView2<f64>, what: &str) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain(format!("{what} contains non-finite entries")));
    }
    Ok(())
}

/// Closed-form ridge fit with one regularization weight per output.
pub fn fit_ridge(x: ArrayView2<f64>, y: ArrayView2<f64>, lambdas: &[f64]) -> Result<RidgeModel> {
    let (n, d) = x.dim();
    let p = y.ncols();
    if y.nrows() != n {
        return Err(Error::Dimension { expected: n, got: y.nrows() });
    }
    if lambdas.len() != p {
        return Err(Error::Dimension { expected: p, got: lambdas.len() });
    }
    if n == 0 {
        return Err(Error::domain("ridge fit needs at least one sample"));
    }
    check_finite(&x, "feature matrix")?;
    check_finite(&y, "output matrix")?;
    if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::domain("lambdas must be finite and nonnegative"));
    }

    let xm = to_dmatrix(&x);
    let ym = to_dmatrix(&y);
    let eq = standardized_normal_equations(&stats_of(&xm, &ym));
    let design = standardized_design(&xm, &eq.means, &eq.stds);

    let mut intercepts = vec![0.0; p];
    let mut coefficients = Array2::zeros((p, d));
    // Group outputs sharing a lambda so each factorization is reused.
    let mut remaining: Vec<usize> = (0..p).collect();
    while let Some(&first) = remaining.first() {
        let lambda = lambdas[first];
        let group: Vec<usize> = remaining.iter().copied().filter(|&q| lambdas[q] == lambda).collect();
        remaining.retain(|q| lambdas[*q] != lambda);
        let w = solve_lambda(&eq, lambda, &group, Some((&design, &ym)))?;
        for (k, &q) in group.iter().enumerate() {
            intercepts[q] = w[(0, k)];
            for j in 0..d {
                coefficients[[q, j]] = w[(j + 1, k)];
            }
        }
    }

    Ok(RidgeModel {
        feature_labels: (0..d).map(|j| format!("x{j}")).collect(),
        output_labels: (0..p).map(|q| format!("y{q}")).collect(),
        lambdas: lambdas.to_vec(),
        intercepts,
        coefficients,
        feature_means: eq.means,
        feature_stds: eq.stds,
    })
}

/// The default candidate grid: thirteen decades from 1e-6 to 1e6.
pub fn default_lambda_grid() -> Vec<f64> {
    (-6..=6).map(|e| 10f64.powi(e)).collect()
}

/// Deterministic fold assignment: a seeded shuffle split into near-equal
/// contiguous chunks. Every sample lands in exactly one fold.
pub fn cv_fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut assignment = vec![0usize; n];
    for f in 0..folds {
        let start = f * n / folds;
        let end = (f + 1) * n / folds;
        for &i in &order[start..end] {
            assignment[i] = f;
        }
    }
    assignment
}

/// Per-output cross-validation summary.
#[derive(Debug, Clone)]
pub struct CvReport {
    pub grid: Vec<f64>,
    /// Mean validation MSE across folds, outputs x grid.
    pub mean_mse: Array2<f64>,
    /// The grid value minimizing mean MSE for each output (ties favor the
    /// earlier grid entry).
    pub selected: Vec<f64>,
}

/// K-fold cross-validation of the ridge regularization, one selection per
/// output over a shared fold partition.
pub fn cross_validate(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    folds: usize,
    grid: &[f64],
    seed: u64,
) -> Result<CvReport> {
    let (n, _d) = x.dim();
    let p = y.ncols();
    if folds < 2 {
        return Err(Error::config(format!("cross-validation needs at least 2 folds, got {folds}")));
    }
    if n < folds {
        return Err(Error::config(format!("{n} samples cannot fill {folds} folds")));
    }
    if grid.is_empty() {
        return Err(Error::config("lambda grid must not be empty"));
    }
    if grid.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::config("lambda grid entries must be finite and nonnegative"));
    }
    check_finite(&x, "feature matrix")?;
    check_finite(&y, "output matrix")?;

    let xm = to_dmatrix(&x);
    let ym = to_dmatrix(&y);
    let full = stats_of(&xm, &ym);
    let assignment = cv_fold_assignment(n, folds, seed);

    let mut fold_mse = Array2::<f64>::zeros((p, grid.len()));
    for f in 0..folds {
        let val_rows: Vec<usize> = (0..n).filter(|i| assignment[*i] == f).collect();
        let xv = DMatrix::from_fn(val_rows.len(), xm.ncols(), |r, c| xm[(val_rows[r], c)]);
        let yv = DMatrix::from_fn(val_rows.len(), p, |r, c| ym[(val_rows[r], c)]);
        let train = stats_minus(&full, &stats_of(&xv, &yv));
        let eq = standardized_normal_equations(&train);
        // Fallback design for singular folds is built on demand.
        let train_rows: Vec<usize> = (0..n).filter(|i| assignment[*i] != f).collect();
        let xt = DMatrix::from_fn(train_rows.len(), xm.ncols(), |r, c| xm[(train_rows[r], c)]);
        let yt = DMatrix::from_fn(train_rows.len(), p, |r, c| ym[(train_rows[r], c)]);
        let design = standardized_design(&xt, &eq.means, &eq.stds);
        let val_design = standardized_design(&xv, &eq.means, &eq.stds);

        let all: Vec<usize> = (0..p).collect();
        for (li, &lambda) in grid.iter().enumerate() {
            let w = solve_lambda(&eq, lambda, &all, Some((&design, &yt)))?;
            let pred = &val_design * &w;
            for q in 0..p {
                let mut sse = 0.0;
                for r in 0..val_rows.len() {
                    let e = pred[(r, q)] - yv[(r, q)];
                    sse += e * e;
                }
                fold_mse[[q, li]] += sse / val_rows.len() as f64 / folds as f64;
            }
        }
    }

    let selected = (0..p)
        .map(|q| {
            let mut best = 0;
            for li in 1..grid.len() {
                if fold_mse[[q, li]] < fold_mse[[q, best]] {
                    best = li;
                }
            }
            grid[best]
        })
        .collect();
    Ok(CvReport { grid: grid.to_vec(), mean_mse: fold_mse, selected })
}

/// The spec'd operation: just the selected lambdas.
pub fn cross_validate_lambdas(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    folds: usize,
    grid: &[f64],
    seed: u64,
) -> Result<Vec<f64>> {
    Ok(cross_validate(x, y, folds, grid, seed)?.selected)
}

/// Local-distance benchmark model: single-output ridge on the flattened
/// neighborhood distance matrix.
#[derive(Debug, Clone)]
pub struct BaselineModel {
    k_neighbors: usize,
    ridge: RidgeModel,
}

impl BaselineModel {
    pub fn k_neighbors(&self) -> usize {
        self.k_neighbors
    }

    pub fn ridge(&self) -> &RidgeModel {
        &self.ridge
    }

    pub fn predict_mark(&self, p: &PointPattern, center: usize) -> Result<f64> {
        let features = local_distance_features(p, center, self.k_neighbors)?;
        Ok(self.ridge.predict(&features)?[0])
    }
}

/// Neighborhood descriptor of one point: the central point plus its `k - 1`
/// nearest torus neighbours, ordered by distance to the center (center
/// first), flattened to the `k(k-1)` off-diagonal distances in row-major
/// order.
pub fn local_distance_features(p: &PointPattern, center: usize, k: usize) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::config(format!("neighborhood size must be at least 2, got {k}")));
    }
    if center >= p.len() {
        return Err(Error::domain(format!("center index {center} out of range")));
    }
    if p.len() < k {
        return Err(Error::domain(format!(
            "pattern has {} points, neighborhood needs {k}",
            p.len()
        )));
    }
    let mut others: Vec<(f64, [f64; 2], usize)> = (0..p.len())
        .filter(|&j| j != center)
        .map(|j| (p.distance(center, j), p.points()[j], j))
        .collect();
    others.sort_by(|a, b| {
        (a.0, a.1[0], a.1[1])
            .partial_cmp(&(b.0, b.1[0], b.1[1]))
            .expect("finite coordinates")
    });
    let mut member = Vec::with_capacity(k);
    member.push(center);
    member.extend(others.iter().take(k - 1).map(|t| t.2));

    let mut features = Vec::with_capacity(k * (k - 1));
    for &a in &member {
        for &b in &member {
            if a != b {
                features.push(p.distance(a, b));
            }
        }
    }
    Ok(features)
}

/// Fit the benchmark on a per-point dataset built from the training
/// patterns: every marked point of a pattern with at least `k` points is one
/// sample, capped at `max_points` in pattern order.
pub fn fit_baseline(
    training: &[MarkedPattern],
    k: usize,
    folds: usize,
    grid: &[f64],
    seed: u64,
    max_points: usize,
    min_points: usize,
) -> Result<BaselineModel> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut targets: Vec<f64> = Vec::new();
    'outer: for mp in training {
        if mp.len() < k {
            continue;
        }
        for i in 0..mp.len() {
            rows.push(local_distance_features(mp.pattern(), i, k)?);
            targets.push(mp.marks()[i]);
            if rows.len() >= max_points {
                break 'outer;
            }
        }
    }
    if rows.len() < min_points.max(folds) {
        return Err(Error::domain(format!(
            "baseline has {} usable points, needs at least {}",
            rows.len(),
            min_points.max(folds)
        )));
    }
    let d = k * (k - 1);
    let n = rows.len();
    let mut x = Array2::zeros((n, d));
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            x[[i, j]] = *v;
        }
    }
    let y = Array2::from_shape_vec((n, 1), targets).expect("consistent shape");

    let selected = cross_validate_lambdas(x.view(), y.view(), folds, grid, seed)?;
    let mut ridge = fit_ridge(x.view(), y.view(), &selected)?;
    ridge.set_labels(
        (0..d).map(|j| format!("d{j}")).collect(),
        vec!["mark".to_string()],
    )?;
    Ok(BaselineModel { k_neighbors: k, ridge })
}
