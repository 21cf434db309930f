//! Geometric marking functions on torus point patterns.
//!
//! Five models: shot-noise, nearest-neighbour distance, Voronoi cell area,
//! Voronoi cell moment of inertia, and Voronoi shot-noise. All marks are
//! nonnegative, translation invariant, and permutation equivariant; sums over
//! other points are accumulated in a canonical (distance, coordinates) order
//! so reordering the pattern permutes marks bit-exactly.

mod voronoi;

pub use voronoi::{voronoi_tessellation, VoronoiCell, VoronoiTessellation};

use crate::error::{Error, Result};
use crate::geometry::{MarkedPattern, PointPattern};
use serde::{Deserialize, Serialize};

/// Distance response of the shot-noise models.
///
/// The truncated form is `max(a*r, c)^(-beta)`; the pure power law `r^(-beta)`
/// diverges at zero and is rejected there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResponseFunction {
    PowerLaw { beta: f64 },
    TruncatedPowerLaw { a: f64, c: f64, beta: f64 },
}

impl ResponseFunction {
    /// The experimental default `max(10r, 0.6)^(-3)`.
    pub fn default_truncated() -> Self {
        ResponseFunction::TruncatedPowerLaw { a: 10.0, c: 0.6, beta: 3.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ResponseFunction::PowerLaw { beta } => {
                if !(beta > 2.0) {
                    return Err(Error::domain(format!("path-loss exponent must exceed 2, got {beta}")));
                }
            }
            ResponseFunction::TruncatedPowerLaw { a, c, beta } => {
                if !(beta > 2.0) {
                    return Err(Error::domain(format!("path-loss exponent must exceed 2, got {beta}")));
                }
                if !(a > 0.0) || !(c > 0.0) {
                    return Err(Error::domain(format!("scale {a} and floor {c} must be positive")));
                }
            }
        }
        Ok(())
    }
}

/// Evaluate the response at distance `r >= 0`.
pub fn response_eval(resp: &ResponseFunction, r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::domain(format!("distance must be nonnegative, got {r}")));
    }
    match *resp {
        ResponseFunction::PowerLaw { beta } => {
            if r == 0.0 {
                return Err(Error::domain("pure power law diverges at distance 0"));
            }
            Ok(r.powf(-beta))
        }
        ResponseFunction::TruncatedPowerLaw { a, c, beta } => Ok((a * r).max(c).powf(-beta)),
    }
}

/// Contributions of all other points to point `i`, in canonical order
/// (squared distance, then coordinates), so that summation is independent of
/// the pattern's point ordering.
fn ordered_neighbors(p: &PointPattern, i: usize) -> Vec<(f64, usize)> {
    let mut terms: Vec<(f64, [f64; 2], usize)> = (0..p.len())
        .filter(|&j| j != i)
        .map(|j| {
            let d = p.distance(i, j);
            (d * d, p.points()[j], j)
        })
        .collect();
    terms.sort_by(|a, b| {
        (a.0, a.1[0], a.1[1])
            .partial_cmp(&(b.0, b.1[0], b.1[1]))
            .expect("finite coordinates")
    });
    terms.into_iter().map(|(d2, _, j)| (d2.sqrt(), j)).collect()
}

/// Shot-noise marks: `S_i = sum_{j != i} l(d(x_i, x_j))`.
pub fn shot_noise_marks(p: &PointPattern, resp: &ResponseFunction) -> Result<MarkedPattern> {
    resp.validate()?;
    let marks = (0..p.len())
        .map(|i| {
            ordered_neighbors(p, i)
                .into_iter()
                .try_fold(0.0, |acc, (d, _)| Ok(acc + response_eval(resp, d)?))
        })
        .collect::<Result<Vec<f64>>>()?;
    MarkedPattern::new(p.clone(), marks)
}

/// Nearest-neighbour distance marks. Requires at least two points.
pub fn nearest_neighbor_marks(p: &PointPattern) -> Result<MarkedPattern> {
    if p.len() < 2 {
        return Err(Error::domain(format!(
            "nearest-neighbour marks need at least 2 points, got {}",
            p.len()
        )));
    }
    let marks = (0..p.len())
        .map(|i| {
            (0..p.len())
                .filter(|&j| j != i)
                .map(|j| p.distance(i, j))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    MarkedPattern::new(p.clone(), marks)
}

/// Voronoi cell surface areas.
pub fn voronoi_area_marks(p: &PointPattern) -> Result<MarkedPattern> {
    let tess = voronoi_tessellation(p)?;
    MarkedPattern::new(p.clone(), tess.areas())
}

/// Voronoi cell moments of inertia about their generators.
pub fn voronoi_inertia_marks(p: &PointPattern) -> Result<MarkedPattern> {
    let tess = voronoi_tessellation(p)?;
    MarkedPattern::new(p.clone(), tess.inertias(p))
}

/// Voronoi shot-noise marks: `Z_i = sum_{j != i} l(d(x_i, x_j)) * A_j`.
pub fn voronoi_shot_noise_marks(p: &PointPattern, resp: &ResponseFunction) -> Result<MarkedPattern> {
    resp.validate()?;
    let areas = voronoi_tessellation(p)?.areas();
    let marks = (0..p.len())
        .map(|i| {
            ordered_neighbors(p, i)
                .into_iter()
                .try_fold(0.0, |acc, (d, j)| Ok(acc + response_eval(resp, d)? * areas[j]))
        })
        .collect::<Result<Vec<f64>>>()?;
    MarkedPattern::new(p.clone(), marks)
}

/// Mark model selector used by experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkModel {
    ShotNoise,
    NearestNeighbor,
    VoronoiArea,
    VoronoiInertia,
    VoronoiShotNoise,
}

impl MarkModel {
    pub const ALL: [MarkModel; 5] = [
        MarkModel::ShotNoise,
        MarkModel::NearestNeighbor,
        MarkModel::VoronoiArea,
        MarkModel::VoronoiInertia,
        MarkModel::VoronoiShotNoise,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MarkModel::ShotNoise => "shot_noise",
            MarkModel::NearestNeighbor => "nearest_neighbor",
            MarkModel::VoronoiArea => "voronoi_area",
            MarkModel::VoronoiInertia => "voronoi_inertia",
            MarkModel::VoronoiShotNoise => "voronoi_shot_noise",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::config(format!("unknown mark model `{name}`")))
    }

    /// Compute the marks of a pattern under this model.
    pub fn compute(&self, p: &PointPattern, resp: &ResponseFunction) -> Result<MarkedPattern> {
        match self {
            MarkModel::ShotNoise => shot_noise_marks(p, resp),
            MarkModel::NearestNeighbor => nearest_neighbor_marks(p),
            MarkModel::VoronoiArea => voronoi_area_marks(p),
            MarkModel::VoronoiInertia => voronoi_inertia_marks(p),
            MarkModel::VoronoiShotNoise => voronoi_shot_noise_marks(p, resp),
        }
    }
}

impl std::fmt::Display for MarkModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_poisson, translate, PointPattern, TorusWindow};
    use approx::assert_relative_eq;

    fn resp() -> ResponseFunction {
        ResponseFunction::default_truncated()
    }

    #[test]
    fn response_plateau_and_unit_values() {
        assert_relative_eq!(response_eval(&resp(), 0.0).unwrap(), 0.6f64.powi(-3), epsilon = 1e-12);
        assert_relative_eq!(response_eval(&resp(), 0.06).unwrap(), 0.6f64.powi(-3), epsilon = 1e-12);
        assert_relative_eq!(response_eval(&resp(), 0.1).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn pure_power_law_rejects_zero() {
        let r = ResponseFunction::PowerLaw { beta: 3.0 };
        assert!(response_eval(&r, 0.0).is_err());
        assert_relative_eq!(response_eval(&r, 2.0).unwrap(), 0.125, epsilon = 1e-15);
    }

    #[test]
    fn shot_noise_symmetric_pair() {
        let w = TorusWindow::unit();
        let p = PointPattern::new(w, vec![[0.1, 0.5], [0.3, 0.5]]).unwrap();
        let mp = shot_noise_marks(&p, &resp()).unwrap();
        assert_relative_eq!(mp.marks()[0], 0.125, epsilon = 1e-12);
        assert_relative_eq!(mp.marks()[1], 0.125, epsilon = 1e-12);
    }

    #[test]
    fn shot_noise_single_point_is_zero() {
        let w = TorusWindow::unit();
        let p = PointPattern::new(w, vec![[0.5, 0.5]]).unwrap();
        let mp = shot_noise_marks(&p, &resp()).unwrap();
        assert_eq!(mp.marks(), &[0.0]);
    }

    #[test]
    fn shot_noise_collinear_triple() {
        let w = TorusWindow::unit();
        let p = PointPattern::new(w, vec![[0.1, 0.5], [0.2, 0.5], [0.3, 0.5]]).unwrap();
        let mp = shot_noise_marks(&p, &resp()).unwrap();
        assert_relative_eq!(mp.marks()[0], 1.125, epsilon = 1e-12);
        assert_relative_eq!(mp.marks()[1], 2.0, epsilon = 1e-12);
        assert_relative_eq!(mp.marks()[2], 1.125, epsilon = 1e-12);
    }

    #[test]
    fn nearest_neighbor_pair_and_triple() {
        let w = TorusWindow::unit();
        let p = PointPattern::new(w, vec![[0.1, 0.5], [0.3, 0.5]]).unwrap();
        let mp = nearest_neighbor_marks(&p).unwrap();
        assert_relative_eq!(mp.marks()[0], 0.2, epsilon = 1e-12);
        assert_relative_eq!(mp.marks()[1], 0.2, epsilon = 1e-12);

        // Equilateral triple: all marks equal the common side length.
        let d = 0.2;
        let h = d * 3f64.sqrt() / 2.0;
        let t = PointPattern::new(w, vec![[0.4, 0.4], [0.4 + d, 0.4], [0.4 + d / 2.0, 0.4 + h]]).unwrap();
        let mt = nearest_neighbor_marks(&t).unwrap();
        for m in mt.marks() {
            assert_relative_eq!(*m, d, epsilon = 1e-12);
        }
    }

    #[test]
    fn nearest_neighbor_needs_two_points() {
        let w = TorusWindow::unit();
        let p = PointPattern::new(w, vec![[0.5, 0.5]]).unwrap();
        assert!(nearest_neighbor_marks(&p).is_err());
    }

    #[test]
    fn nearest_neighbor_matches_brute_force() {
        let w = TorusWindow::unit();
        let p = sample_poisson(40.0, &w, 404).unwrap();
        let mp = nearest_neighbor_marks(&p).unwrap();
        for i in 0..p.len() {
            let mut best = f64::INFINITY;
            for j in 0..p.len() {
                if i != j {
                    best = best.min(crate::geometry::torus_distance(p.points()[i], p.points()[j], p.window()).unwrap());
                }
            }
            assert_eq!(mp.marks()[i], best);
        }
    }

    #[test]
    fn voronoi_shot_noise_pair() {
        let w = TorusWindow::unit();
        let p = PointPattern::new(w, vec![[0.1, 0.5], [0.3, 0.5]]).unwrap();
        let mp = voronoi_shot_noise_marks(&p, &resp()).unwrap();
        assert_relative_eq!(mp.marks()[0], 0.0625, epsilon = 1e-12);
        assert_relative_eq!(mp.marks()[1], 0.0625, epsilon = 1e-12);
    }

    #[test]
    fn voronoi_shot_noise_factorizes_on_grid() {
        // Constant cell areas A turn Z_i into A * S_i.
        let w = TorusWindow::unit();
        let p = PointPattern::new(
            w,
            vec![[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]],
        )
        .unwrap();
        let z = voronoi_shot_noise_marks(&p, &resp()).unwrap();
        let s = shot_noise_marks(&p, &resp()).unwrap();
        for (zi, si) in z.marks().iter().zip(s.marks()) {
            assert_relative_eq!(*zi, 0.25 * si, epsilon = 1e-12);
        }
    }

    #[test]
    fn voronoi_shot_noise_matches_double_loop() {
        let w = TorusWindow::unit();
        let p = sample_poisson(30.0, &w, 2024).unwrap();
        let z = voronoi_shot_noise_marks(&p, &resp()).unwrap();
        let areas = voronoi_tessellation(&p).unwrap().areas();
        for i in 0..p.len() {
            let mut acc = 0.0;
            for j in 0..p.len() {
                if i != j {
                    acc += response_eval(&resp(), p.distance(i, j)).unwrap() * areas[j];
                }
            }
            assert_relative_eq!(z.marks()[i], acc, epsilon = 1e-10, max_relative = 1e-10);
        }
    }

    #[test]
    fn marks_are_translation_invariant() {
        let w = TorusWindow::unit();
        let p = sample_poisson(30.0, &w, 515).unwrap();
        let q = translate(&p, [0.613, 0.287]);
        let r = resp();
        for model in MarkModel::ALL {
            let a = model.compute(&p, &r).unwrap();
            let b = model.compute(&q, &r).unwrap();
            for (ma, mb) in a.marks().iter().zip(b.marks()) {
                assert_relative_eq!(*ma, *mb, epsilon = 1e-9, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn marks_are_permutation_equivariant() {
        let w = TorusWindow::unit();
        let p = sample_poisson(30.0, &w, 616).unwrap();
        let n = p.len();
        let perm: Vec<usize> = (0..n).rev().collect();
        let shuffled = PointPattern::new(*p.window(), perm.iter().map(|&i| p.points()[i]).collect()).unwrap();
        let r = resp();
        for model in MarkModel::ALL {
            let a = model.compute(&p, &r).unwrap();
            let b = model.compute(&shuffled, &r).unwrap();
            for (k, &i) in perm.iter().enumerate() {
                assert_eq!(b.marks()[k], a.marks()[i], "model {model} not exactly equivariant");
            }
        }
    }

    #[test]
    fn adding_a_point_never_increases_nn_marks() {
        let w = TorusWindow::unit();
        let p = sample_poisson(30.0, &w, 717).unwrap();
        let before = nearest_neighbor_marks(&p).unwrap();
        let mut pts = p.points().to_vec();
        pts.push([0.123_456, 0.654_321]);
        let q = PointPattern::new(w, pts).unwrap();
        let after = nearest_neighbor_marks(&q).unwrap();
        for i in 0..p.len() {
            assert!(after.marks()[i] <= before.marks()[i]);
        }
    }

    #[test]
    fn all_marks_nonnegative() {
        let w = TorusWindow::unit();
        let p = sample_poisson(30.0, &w, 818).unwrap();
        let r = resp();
        for model in MarkModel::ALL {
            let mp = model.compute(&p, &r).unwrap();
            assert!(mp.marks().iter().all(|&m| m >= 0.0), "negative mark under {model}");
        }
    }

    #[test]
    fn model_names_round_trip() {
        for m in MarkModel::ALL {
            assert_eq!(MarkModel::parse(m.name()).unwrap(), m);
        }
        assert!(MarkModel::parse("bogus").is_err());
    }
}
