//! Periodic Voronoi tessellation via 3x3 replication and half-plane clipping.
//!
//! Each cell is computed in the generator's local chart: the convex polygon
//! of points closer to the central copy of the generator than to any other
//! replicated copy. For simple patterns with at least two points every torus
//! cell has circumradius below `side`, so competitors from the 3x3 block are
//! sufficient and the clipped polygons form an exact partition of the torus.

use crate::error::{Error, Result};
use crate::geometry::PointPattern;

/// One Voronoi cell, vertices in counter-clockwise order around the
/// generator, expressed in the generator's local chart (coordinates may
/// leave `[0, side)`).
#[derive(Debug, Clone)]
pub struct VoronoiCell {
    pub generator: usize,
    pub vertices: Vec<[f64; 2]>,
}

impl VoronoiCell {
    /// Polygon area via the shoelace formula.
    pub fn area(&self) -> f64 {
        let v = &self.vertices;
        let n = v.len();
        let mut acc = 0.0;
        for i in 0..n {
            let a = v[i];
            let b = v[(i + 1) % n];
            acc += a[0] * b[1] - b[0] * a[1];
        }
        0.5 * acc.abs()
    }

    /// Second moment about a point `p` (the generator), computed exactly by
    /// fan triangulation: each triangle `(p, a, b)` contributes
    /// `area/6 * (|a-p|^2 + |b-p|^2 + (a-p).(b-p))`.
    pub fn second_moment_about(&self, p: [f64; 2]) -> f64 {
        let v = &self.vertices;
        let n = v.len();
        let mut acc = 0.0;
        for i in 0..n {
            let a = [v[i][0] - p[0], v[i][1] - p[1]];
            let b = [v[(i + 1) % n][0] - p[0], v[(i + 1) % n][1] - p[1]];
            let cross = a[0] * b[1] - a[1] * b[0];
            let tri_area = 0.5 * cross;
            acc += tri_area / 6.0 * (a[0] * a[0] + a[1] * a[1] + b[0] * b[0] + b[1] * b[1] + a[0] * b[0] + a[1] * b[1]);
        }
        acc
    }
}

/// Periodic Voronoi tessellation of a point pattern.
#[derive(Debug, Clone)]
pub struct VoronoiTessellation {
    cells: Vec<VoronoiCell>,
}

impl VoronoiTessellation {
    pub fn cells(&self) -> &[VoronoiCell] {
        &self.cells
    }

    pub fn areas(&self) -> Vec<f64> {
        self.cells.iter().map(VoronoiCell::area).collect()
    }

    pub fn inertias(&self, pattern: &PointPattern) -> Vec<f64> {
        self.cells
            .iter()
            .map(|c| c.second_moment_about(pattern.points()[c.generator]))
            .collect()
    }
}

/// Clip a convex polygon by the half-plane of points no farther from `center`
/// than from `site` (points on the bisector are kept).
fn clip_by_bisector(poly: &[[f64; 2]], center: [f64; 2], site: [f64; 2]) -> Vec<[f64; 2]> {
    let normal = [site[0] - center[0], site[1] - center[1]];
    let mid = [0.5 * (site[0] + center[0]), 0.5 * (site[1] + center[1])];
    let side_of = |p: [f64; 2]| (p[0] - mid[0]) * normal[0] + (p[1] - mid[1]) * normal[1];

    let mut out = Vec::with_capacity(poly.len() + 1);
    let n = poly.len();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let fa = side_of(a);
        let fb = side_of(b);
        if fa <= 0.0 {
            out.push(a);
        }
        if (fa < 0.0 && fb > 0.0) || (fa > 0.0 && fb <= 0.0) {
            let t = fa / (fa - fb);
            out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    out
}

/// Tessellate the torus. The one-point pattern is special-cased to the full
/// window centered at the generator.
pub fn voronoi_tessellation(p: &PointPattern) -> Result<VoronoiTessellation> {
    if p.is_empty() {
        return Err(Error::domain("voronoi tessellation of an empty pattern"));
    }
    let side = p.window().side();
    let points = p.points();

    if points.len() == 1 {
        let g = points[0];
        let h = 0.5 * side;
        let cell = VoronoiCell {
            generator: 0,
            vertices: vec![
                [g[0] - h, g[1] - h],
                [g[0] + h, g[1] - h],
                [g[0] + h, g[1] + h],
                [g[0] - h, g[1] + h],
            ],
        };
        return Ok(VoronoiTessellation { cells: vec![cell] });
    }

    let cells = points
        .iter()
        .enumerate()
        .map(|(i, &gen)| {
            // Competitor copies sorted near-to-far with a lexicographic
            // tie-break; the fixed order makes cells independent of the
            // point indexing and lets the clip loop stop early.
            let mut competitors: Vec<(f64, f64, f64)> = Vec::with_capacity(points.len() * 9 - 1);
            for (j, &q) in points.iter().enumerate() {
                for kx in -1i32..=1 {
                    for ky in -1i32..=1 {
                        if j == i && kx == 0 && ky == 0 {
                            continue;
                        }
                        let cx = q[0] + f64::from(kx) * side;
                        let cy = q[1] + f64::from(ky) * side;
                        let dx = cx - gen[0];
                        let dy = cy - gen[1];
                        competitors.push((dx * dx + dy * dy, cx, cy));
                    }
                }
            }
            competitors.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));

            // Bounding square contains every admissible cell (cover radius
            // of a torus with >= 1 point is side * sqrt(2) / 2 < side).
            let mut poly = vec![
                [gen[0] - side, gen[1] - side],
                [gen[0] + side, gen[1] - side],
                [gen[0] + side, gen[1] + side],
                [gen[0] - side, gen[1] + side],
            ];
            let mut reach = poly
                .iter()
                .map(|v| (v[0] - gen[0]).hypot(v[1] - gen[1]))
                .fold(0.0f64, f64::max);
            for &(d2, cx, cy) in &competitors {
                if 0.5 * d2.sqrt() >= reach {
                    break;
                }
                poly = clip_by_bisector(&poly, gen, [cx, cy]);
                if poly.len() < 3 {
                    return Err(Error::numerical(format!("degenerate voronoi cell for point {i}")));
                }
                reach = poly
                    .iter()
                    .map(|v| (v[0] - gen[0]).hypot(v[1] - gen[1]))
                    .fold(0.0f64, f64::max);
            }
            Ok(VoronoiCell { generator: i, vertices: poly })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(VoronoiTessellation { cells })
}
