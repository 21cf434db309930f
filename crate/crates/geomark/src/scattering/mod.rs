//! Morlet filter bank and empirical scattering moments on the torus.
//!
//! Filters are grid samplings of dilated, rotated zero-mean Morlet wavelets
//! `K (exp(i w.x) - kappa) exp(-|x|^2 / (2 sigma_j^2))`, periodized over the
//! grid and stored in the frequency domain, so every convolution is exactly
//! circular. First-order moments average the modulus of one wavelet
//! transform over the grid; second-order moments cascade a second transform
//! over the modulus field. The minimal-scale first-order moment does not
//! depend on the angle and is collapsed to a single angle-averaged entry.

mod fft;

pub use fft::Fft2;

use crate::error::{Error, Result};
use crate::raster::{image_from_marks, RasterImage};
use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Construction parameters of a [`FilterBank`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterBankParams {
    /// Grid size; must match the raster size.
    pub n: usize,
    /// Smallest dyadic scale (the angle-collapsed one).
    pub j_min: usize,
    /// Largest dyadic scale; `2^j_max` must not exceed `n`.
    pub j_max: usize,
    /// Rotation angles of the mother wavelet, normally a uniform grid of
    /// `[0, pi)`.
    pub angles: Vec<f64>,
    /// Spatial frequency magnitude of the mother wavelet at unit scale.
    pub omega: f64,
    /// Gaussian width of the mother wavelet at unit scale, in pixels.
    pub sigma: f64,
}

impl FilterBankParams {
    /// Paper-scale defaults: `j in [0, 7]`, eight angles, Morlet at
    /// `|omega| = 5.5`, `sigma = 1`.
    pub fn default_for(n: usize) -> Self {
        FilterBankParams {
            n,
            j_min: 0,
            j_max: 7,
            angles: uniform_angles(8),
            omega: 5.5,
            sigma: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.n.is_power_of_two() || self.n < 16 {
            return Err(Error::config(format!("grid size must be a power of two >= 16, got {}", self.n)));
        }
        let log2n = self.n.trailing_zeros() as usize;
        if self.j_max > log2n {
            return Err(Error::config(format!(
                "j_max = {} exceeds log2(n) = {log2n}",
                self.j_max
            )));
        }
        if self.j_min > self.j_max {
            return Err(Error::config(format!("j_min = {} exceeds j_max = {}", self.j_min, self.j_max)));
        }
        if self.angles.is_empty() {
            return Err(Error::config("angle list must not be empty"));
        }
        if !(self.omega > 0.0) || !(self.sigma > 0.0) {
            return Err(Error::config(format!(
                "omega = {} and sigma = {} must be positive",
                self.omega, self.sigma
            )));
        }
        Ok(())
    }
}

/// `count` angles uniformly covering `[0, pi)`.
pub fn uniform_angles(count: usize) -> Vec<f64> {
    (0..count).map(|t| t as f64 * PI / count as f64).collect()
}

/// Periodized 1D sampling of `exp(i w x) exp(-x^2 / (2 sigma^2))` on the
/// signed grid `{0, 1, ..., n/2-1, -n/2, ..., -1}`.
fn periodized_profile(n: usize, omega: f64, sigma: f64) -> Vec<Complex64> {
    let half = (n / 2) as i64;
    // Gaussian tails beyond 9.3 sigma are below f64 resolution of the sum.
    let k_max = ((9.3 * sigma + 0.5 * n as f64) / n as f64).ceil() as i64;
    (0..n as i64)
        .map(|r| {
            let x0 = if r < half { r as f64 } else { (r - n as i64) as f64 };
            let mut acc = Complex64::new(0.0, 0.0);
            for k in -k_max..=k_max {
                let x = x0 + (k * n as i64) as f64;
                let env = (-x * x / (2.0 * sigma * sigma)).exp();
                if env > 0.0 {
                    acc += Complex64::from_polar(env, omega * x);
                }
            }
            acc
        })
        .collect()
}

/// One sampled filter in the spatial domain, as an outer product of 1D
/// profiles, with the DC correction `kappa` applied.
fn sample_filter(n: usize, omega_vec: [f64; 2], sigma: f64, amplitude: f64) -> Array2<Complex64> {
    let u = periodized_profile(n, omega_vec[0], sigma);
    let v = periodized_profile(n, omega_vec[1], sigma);
    let g = periodized_profile(n, 0.0, sigma);
    let sum_h: Complex64 = u.iter().sum::<Complex64>() * v.iter().sum::<Complex64>();
    let sum_g: Complex64 = g.iter().sum::<Complex64>() * g.iter().sum::<Complex64>();
    let kappa = sum_h / sum_g;
    Array2::from_shape_fn((n, n), |(r, c)| {
        amplitude * (u[r] * v[c] - kappa * g[r] * g[c])
    })
}

/// Frequency-domain Morlet filter bank over dyadic scales and a fixed angle
/// constellation.
#[derive(Debug, Clone)]
pub struct FilterBank {
    params: FilterBankParams,
    filters_hat: Vec<Array2<Complex64>>,
    fft: Fft2,
}

impl FilterBank {
    pub fn build(params: FilterBankParams) -> Result<Self> {
        params.validate()?;
        let n = params.n;
        let fft = Fft2::new(n);

        let mut filters_hat = Vec::with_capacity((params.j_max - params.j_min + 1) * params.angles.len());
        for j in params.j_min..=params.j_max {
            let scale = (1u64 << j) as f64;
            for &theta in &params.angles {
                let omega_vec = [
                    params.omega * theta.cos() / scale,
                    params.omega * theta.sin() / scale,
                ];
                let mut filt = sample_filter(n, omega_vec, params.sigma * scale, 1.0);
                // L1-normalize each sampled filter on the grid. Dilation
                // preserves the continuum L1 norm, so away from the extreme
                // scales this matches a single global constant.
                let l1: f64 = filt.iter().map(|z| z.norm_sqr().sqrt()).sum();
                if !(l1.is_finite() && l1 > 0.0) {
                    return Err(Error::numerical(format!("degenerate filter at (j={j}, theta={theta})")));
                }
                filt.mapv_inplace(|z| z / l1);
                fft.forward(&mut filt);
                // The spatial kappa correction already nulls the mean; pin
                // the DC bin to exactly zero past FFT rounding.
                filt[[0, 0]] = Complex64::new(0.0, 0.0);
                filters_hat.push(filt);
            }
        }
        Ok(FilterBank { params, filters_hat, fft })
    }

    pub fn params(&self) -> &FilterBankParams {
        &self.params
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn n_angles(&self) -> usize {
        self.params.angles.len()
    }

    pub fn n_scales(&self) -> usize {
        self.params.j_max - self.params.j_min + 1
    }

    fn filter_index(&self, j: usize, t: usize) -> Result<usize> {
        if j < self.params.j_min || j > self.params.j_max {
            return Err(Error::config(format!("scale j = {j} outside bank range")));
        }
        if t >= self.n_angles() {
            return Err(Error::config(format!("angle index {t} outside bank range")));
        }
        Ok((j - self.params.j_min) * self.n_angles() + t)
    }

    /// Frequency response of filter `(j, t)`.
    pub fn filter_hat(&self, j: usize, t: usize) -> Result<&Array2<Complex64>> {
        Ok(&self.filters_hat[self.filter_index(j, t)?])
    }

    /// Spatial samples of filter `(j, t)` (inverse transform of the stored
    /// frequency response).
    pub fn spatial_filter(&self, j: usize, t: usize) -> Result<Array2<Complex64>> {
        let mut f = self.filters_hat[self.filter_index(j, t)?].clone();
        self.fft.inverse_normalized(&mut f);
        Ok(f)
    }

    pub fn fft(&self) -> &Fft2 {
        &self.fft
    }

    /// Number of first-order moments: one angle-collapsed entry at `j_min`
    /// plus a full angle grid per larger scale.
    pub fn first_order_len(&self) -> usize {
        1 + self.n_angles() * (self.params.j_max - self.params.j_min)
    }

    /// Number of second-order moments over
    /// `j_min + 1 <= j1 < j2 <= j_max` and all angle pairs.
    pub fn second_order_len(&self) -> usize {
        let m = self.params.j_max - self.params.j_min;
        let a = self.n_angles();
        a * a * m * (m.saturating_sub(1)) / 2
    }

    pub fn first_order_labels(&self) -> Vec<String> {
        let mut labels = Vec::with_capacity(self.first_order_len());
        labels.push(format!("s1:j={}", self.params.j_min));
        for j in self.params.j_min + 1..=self.params.j_max {
            for t in 0..self.n_angles() {
                labels.push(format!("s1:j={j},t={t}"));
            }
        }
        labels
    }

    pub fn second_order_labels(&self) -> Vec<String> {
        let mut labels = Vec::with_capacity(self.second_order_len());
        for j1 in self.params.j_min + 1..=self.params.j_max {
            for t1 in 0..self.n_angles() {
                for j2 in j1 + 1..=self.params.j_max {
                    for t2 in 0..self.n_angles() {
                        labels.push(format!("s2:j1={j1},t1={t1},j2={j2},t2={t2}"));
                    }
                }
            }
        }
        labels
    }

    /// Labels of the feature vector of the given order (1 or 2).
    pub fn labels(&self, order: u32) -> Result<Vec<String>> {
        match order {
            1 => Ok(self.first_order_labels()),
            2 => {
                let mut l = self.first_order_labels();
                l.extend(self.second_order_labels());
                Ok(l)
            }
            _ => Err(Error::config(format!("scattering order must be 1 or 2, got {order}"))),
        }
    }
}

/// Ordered first-order and (optionally) second-order empirical moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringVector {
    pub first_order: Vec<f64>,
    pub second_order: Vec<f64>,
}

impl ScatteringVector {
    pub fn len(&self) -> usize {
        self.first_order.len() + self.second_order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Concatenation in canonical index order.
    pub fn values(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&self.first_order);
        v.extend_from_slice(&self.second_order);
        v
    }
}

fn to_complex(img: &RasterImage) -> Array2<f64> {
    img.values().clone()
}

fn img_hat(img: &RasterImage, bank: &FilterBank) -> Result<Array2<Complex64>> {
    if img.n() != bank.n() {
        return Err(Error::Dimension { expected: bank.n(), got: img.n() });
    }
    let real = to_complex(img);
    let mut hat = real.mapv(|v| Complex64::new(v, 0.0));
    bank.fft().forward(&mut hat);
    Ok(hat)
}

fn convolve_hat(hat: &Array2<Complex64>, filter_hat: &Array2<Complex64>, fft: &Fft2) -> Array2<Complex64> {
    let mut field = hat * filter_hat;
    fft.inverse_normalized(&mut field);
    field
}

fn mean_modulus(field: &Array2<Complex64>) -> f64 {
    let sum: f64 = field.iter().map(|z| z.norm_sqr().sqrt()).sum();
    sum / field.len() as f64
}

/// Periodic wavelet transform of an image with filter `(j, t)`.
pub fn wavelet_transform(img: &RasterImage, bank: &FilterBank, j: usize, t: usize) -> Result<Array2<Complex64>> {
    let hat = img_hat(img, bank)?;
    Ok(convolve_hat(&hat, bank.filter_hat(j, t)?, bank.fft()))
}

/// Collapse the per-(j, t) moment table into the canonical first-order
/// vector: the `j_min` row angle-averaged, larger scales flattened.
fn collapse_first_order(raw: &[Vec<f64>], bank: &FilterBank) -> Vec<f64> {
    let a = bank.n_angles() as f64;
    let mut out = Vec::with_capacity(bank.first_order_len());
    out.push(raw[0].iter().sum::<f64>() / a);
    for row in &raw[1..] {
        out.extend_from_slice(row);
    }
    out
}

fn first_order_raw(hat: &Array2<Complex64>, bank: &FilterBank) -> Result<Vec<Vec<f64>>> {
    let mut raw = Vec::with_capacity(bank.n_scales());
    for j in bank.params.j_min..=bank.params.j_max {
        let mut row = Vec::with_capacity(bank.n_angles());
        for t in 0..bank.n_angles() {
            let field = convolve_hat(hat, bank.filter_hat(j, t)?, bank.fft());
            row.push(mean_modulus(&field));
        }
        raw.push(row);
    }
    Ok(raw)
}

/// First-order empirical scattering moments of an image.
pub fn first_order_moments(img: &RasterImage, bank: &FilterBank) -> Result<Vec<f64>> {
    let hat = img_hat(img, bank)?;
    Ok(collapse_first_order(&first_order_raw(&hat, bank)?, bank))
}

/// Second-order empirical scattering moments of an image.
pub fn second_order_moments(img: &RasterImage, bank: &FilterBank) -> Result<Vec<f64>> {
    let hat = img_hat(img, bank)?;
    second_order_from_hat(&hat, bank)
}

fn second_order_from_hat(hat: &Array2<Complex64>, bank: &FilterBank) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(bank.second_order_len());
    for j1 in bank.params.j_min + 1..=bank.params.j_max {
        for t1 in 0..bank.n_angles() {
            let field = convolve_hat(hat, bank.filter_hat(j1, t1)?, bank.fft());
            let mut modulus_hat = field.mapv(|z| Complex64::new(z.norm_sqr().sqrt(), 0.0));
            bank.fft().forward(&mut modulus_hat);
            for j2 in j1 + 1..=bank.params.j_max {
                for t2 in 0..bank.n_angles() {
                    let second = convolve_hat(&modulus_hat, bank.filter_hat(j2, t2)?, bank.fft());
                    out.push(mean_modulus(&second));
                }
            }
        }
    }
    Ok(out)
}

/// Joint scattering feature vector of order 1 or 2.
pub fn scattering_features(img: &RasterImage, bank: &FilterBank, order: u32) -> Result<ScatteringVector> {
    if order != 1 && order != 2 {
        return Err(Error::config(format!("scattering order must be 1 or 2, got {order}")));
    }
    let hat = img_hat(img, bank)?;
    let first_order = collapse_first_order(&first_order_raw(&hat, bank)?, bank);
    let second_order = if order == 2 {
        second_order_from_hat(&hat, bank)?
    } else {
        Vec::new()
    };
    Ok(ScatteringVector { first_order, second_order })
}

/// First-order moments plus their Jacobian with respect to the mark values
/// at the given pixels. The modulus is smoothed as `sqrt(|z|^2 + eps)` in
/// the gradient denominators only; the returned moments use the exact
/// modulus.
pub fn first_order_with_gradient(
    marks: &[f64],
    pixels: &[(usize, usize)],
    bank: &FilterBank,
    eps: f64,
) -> Result<(Vec<f64>, Array2<f64>)> {
    if !(eps > 0.0) {
        return Err(Error::config(format!("modulus smoothing must be positive, got {eps}")));
    }
    let n = bank.n();
    let img = image_from_marks(marks, pixels, n)?;
    {
        // Distinct points in one pixel would alias their gradients.
        let mut seen = std::collections::HashSet::new();
        for &px in pixels {
            if !seen.insert(px) {
                return Err(Error::Collision { row: px.0, col: px.1 });
            }
        }
    }
    let hat = img_hat(&img, bank)?;
    let n_points = pixels.len();
    let n2 = (n * n) as f64;
    let a = bank.n_angles();

    let mut moments_raw: Vec<Vec<f64>> = Vec::with_capacity(bank.n_scales());
    let mut grads_raw: Vec<Vec<Vec<f64>>> = Vec::with_capacity(bank.n_scales());
    for j in bank.params.j_min..=bank.params.j_max {
        let mut m_row = Vec::with_capacity(a);
        let mut g_row = Vec::with_capacity(a);
        for t in 0..a {
            let filter_hat = bank.filter_hat(j, t)?;
            let field = convolve_hat(&hat, filter_hat, bank.fft());
            m_row.push(mean_modulus(&field));

            // d moment / d u_i = (1/n^2) sum_x Re(conj(F)/|F|_eps psi(x - x_i)),
            // evaluated at all pixels at once through one correlation.
            let mut weight = field.mapv(|z| z.conj() / (z.norm_sqr() + eps).sqrt());
            bank.fft().forward(&mut weight);
            let mut corr_hat = Array2::from_elem((n, n), Complex64::new(0.0, 0.0));
            for r in 0..n {
                for c in 0..n {
                    let fr = (n - r) % n;
                    let fc = (n - c) % n;
                    corr_hat[[r, c]] = weight[[r, c]] * filter_hat[[fr, fc]];
                }
            }
            bank.fft().inverse_normalized(&mut corr_hat);
            let g: Vec<f64> = pixels.iter().map(|&px| corr_hat[px].re / n2).collect();
            g_row.push(g);
        }
        moments_raw.push(m_row);
        grads_raw.push(g_row);
    }

    let moments = collapse_first_order(&moments_raw, bank);
    let p = bank.first_order_len();
    let mut jac = Array2::zeros((p, n_points));
    for i in 0..n_points {
        jac[[0, i]] = grads_raw[0].iter().map(|g| g[i]).sum::<f64>() / a as f64;
    }
    let mut row = 1;
    for g_row in &grads_raw[1..] {
        for g in g_row {
            for i in 0..n_points {
                jac[[row, i]] = g[i];
            }
            row += 1;
        }
    }
    Ok((moments, jac))
}

/// Jacobian of the first-order moments with respect to the marks.
pub fn first_order_gradient(
    marks: &[f64],
    pixels: &[(usize, usize)],
    bank: &FilterBank,
    eps: f64,
) -> Result<Array2<f64>> {
    Ok(first_order_with_gradient(marks, pixels, bank, eps)?.1)
}
