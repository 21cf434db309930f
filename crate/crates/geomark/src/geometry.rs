//! Square torus window, toroidal metric, and Poisson pattern simulation.
//!
//! All coordinates are kept in canonical form `[0, side)` per axis; the
//! toroidal metric and every translation re-reduce into that range so that
//! equality and distance tests are unambiguous.

use crate::error::{Error, Result};
use rand::Rng as _;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use std::io::{BufRead, Write};

/// Square observation window with opposite edges identified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusWindow {
    side: f64,
}

impl TorusWindow {
    pub fn new(side: f64) -> Result<Self> {
        if !(side.is_finite() && side > 0.0) {
            return Err(Error::domain(format!("window side must be positive, got {side}")));
        }
        Ok(TorusWindow { side })
    }

    /// The unit square, the default experimental window.
    pub fn unit() -> Self {
        TorusWindow { side: 1.0 }
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn area(&self) -> f64 {
        self.side * self.side
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p.iter().all(|&c| c.is_finite() && (0.0..self.side).contains(&c))
    }

    /// Reduce a coordinate into `[0, side)`.
    pub fn wrap(&self, x: f64) -> f64 {
        let mut r = x.rem_euclid(self.side);
        // rem_euclid can round up to `side` for tiny negative inputs
        if r >= self.side {
            r -= self.side;
        }
        r
    }
}

/// Shortest wrapped displacement along one axis, in `[0, side/2]`.
fn axis_distance(a: f64, b: f64, side: f64) -> f64 {
    let d = (a - b).abs();
    d.min(side - d)
}

/// Toroidal Euclidean distance between two window points.
///
/// Equals the minimum over the nine periodic translates of `|a - b|`; the
/// per-axis reduction used here realizes that minimum directly.
pub fn torus_distance(a: [f64; 2], b: [f64; 2], w: &TorusWindow) -> Result<f64> {
    if !w.contains(a) || !w.contains(b) {
        return Err(Error::domain(format!(
            "coordinates outside window of side {}: {a:?}, {b:?}",
            w.side
        )));
    }
    let dx = axis_distance(a[0], b[0], w.side);
    let dy = axis_distance(a[1], b[1], w.side);
    Ok(dx.hypot(dy))
}

/// Finite simple point configuration in a torus window.
///
/// Point order is stable and index-addressable; marks align by index.
#[derive(Debug, Clone, PartialEq)]
pub struct PointPattern {
    window: TorusWindow,
    points: Vec<[f64; 2]>,
}

impl PointPattern {
    /// Build a pattern, checking that every point lies in the window and
    /// that no two points coincide.
    pub fn new(window: TorusWindow, points: Vec<[f64; 2]>) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if !window.contains(*p) {
                return Err(Error::domain(format!("point {i} {p:?} outside window")));
            }
        }
        let mut sorted: Vec<[f64; 2]> = points.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
        for w in sorted.windows(2) {
            if w[0] == w[1] {
                return Err(Error::domain(format!("pattern is not simple: duplicate point {:?}", w[0])));
            }
        }
        Ok(PointPattern { window, points })
    }

    pub fn window(&self) -> &TorusWindow {
        &self.window
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let dx = axis_distance(self.points[i][0], self.points[j][0], self.window.side);
        let dy = axis_distance(self.points[i][1], self.points[j][1], self.window.side);
        dx.hypot(dy)
    }
}

/// Point pattern with one real mark per point, aligned by index.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkedPattern {
    pattern: PointPattern,
    marks: Vec<f64>,
}

impl MarkedPattern {
    pub fn new(pattern: PointPattern, marks: Vec<f64>) -> Result<Self> {
        if marks.len() != pattern.len() {
            return Err(Error::Dimension { expected: pattern.len(), got: marks.len() });
        }
        if marks.iter().any(|m| !m.is_finite()) {
            return Err(Error::domain("marks must be finite"));
        }
        Ok(MarkedPattern { pattern, marks })
    }

    /// Attach unit marks, the encoding used for non-marked patterns.
    pub fn with_unit_marks(pattern: PointPattern) -> Self {
        let marks = vec![1.0; pattern.len()];
        MarkedPattern { pattern, marks }
    }

    pub fn pattern(&self) -> &PointPattern {
        &self.pattern
    }

    pub fn marks(&self) -> &[f64] {
        &self.marks
    }

    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }
}

/// Deterministic sub-seed for a named stream, so that independent stages of
/// an experiment draw from independent generators.
pub fn derive_seed(master: u64, stream: &str, index: u64) -> u64 {
    // FNV-1a over the stream name, then splitmix64 finalization.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stream.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = master ^ h.rotate_left(17) ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Sample a homogeneous Poisson point pattern in the window.
///
/// The point count is Poisson(intensity * side^2) and coordinates are i.i.d.
/// uniform; the result is fully determined by the seed.
pub fn sample_poisson(intensity: f64, w: &TorusWindow, seed: u64) -> Result<PointPattern> {
    if !(intensity.is_finite() && intensity > 0.0) {
        return Err(Error::domain(format!("intensity must be positive, got {intensity}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean = intensity * w.area();
    let count = Poisson::new(mean)
        .map_err(|e| Error::domain(format!("invalid Poisson mean {mean}: {e}")))?
        .sample(&mut rng) as usize;
    let mut points = Vec::with_capacity(count);
    for _ in 0..count {
        let x = rng.gen_range(0.0..w.side);
        let y = rng.gen_range(0.0..w.side);
        points.push([x, y]);
    }
    PointPattern::new(*w, points)
}

/// Translate every point by `v` modulo the torus, preserving count and order.
pub fn translate(p: &PointPattern, v: [f64; 2]) -> PointPattern {
    let w = p.window;
    let points = p
        .points
        .iter()
        .map(|q| [w.wrap(q[0] + v[0]), w.wrap(q[1] + v[1])])
        .collect();
    PointPattern { window: w, points }
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Serialize patterns as NDJSON, one object per line with fields `side`,
/// `points`, and (for marked patterns) `marks`, all printed with 17
/// significant digits.
pub fn write_ndjson<W: Write>(out: &mut W, patterns: &[MarkedPattern], with_marks: bool) -> Result<()> {
    for mp in patterns {
        let mut line = String::new();
        line.push_str("{\"side\":");
        line.push_str(&fmt_f64(mp.pattern.window.side));
        line.push_str(",\"points\":[");
        for (i, p) in mp.pattern.points.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push('[');
            line.push_str(&fmt_f64(p[0]));
            line.push(',');
            line.push_str(&fmt_f64(p[1]));
            line.push(']');
        }
        line.push(']');
        if with_marks {
            line.push_str(",\"marks\":[");
            for (i, m) in mp.marks.iter().enumerate() {
                if i > 0 {
                    line.push(',');
                }
                line.push_str(&fmt_f64(*m));
            }
            line.push(']');
        }
        line.push('}');
        writeln!(out, "{line}")?;
    }
    Ok(())
}

#[derive(serde::Deserialize)]
struct PatternRecord {
    side: f64,
    points: Vec<[f64; 2]>,
    #[serde(default)]
    marks: Option<Vec<f64>>,
}

/// Read patterns back from NDJSON. Patterns without a `marks` field get
/// unit marks.
pub fn read_ndjson<R: BufRead>(input: R) -> Result<Vec<MarkedPattern>> {
    let mut out = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PatternRecord = serde_json::from_str(&line)
            .map_err(|e| Error::parse(format!("line {}: {e}", lineno + 1)))?;
        let window = TorusWindow::new(rec.side)?;
        let pattern = PointPattern::new(window, rec.points)?;
        let mp = match rec.marks {
            Some(marks) => MarkedPattern::new(pattern, marks)?,
            None => MarkedPattern::with_unit_marks(pattern),
        };
        out.push(mp);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn torus_distance_wraps_around() {
        let w = TorusWindow::unit();
        let d = torus_distance([0.1, 0.1], [0.9, 0.1], &w).unwrap();
        assert_relative_eq!(d, 0.2, epsilon = 1e-15);
    }

    #[test]
    fn torus_distance_identity() {
        let w = TorusWindow::unit();
        assert_eq!(torus_distance([0.3, 0.7], [0.3, 0.7], &w).unwrap(), 0.0);
    }

    #[test]
    fn torus_distance_farthest_point() {
        let w = TorusWindow::unit();
        let d = torus_distance([0.0, 0.0], [0.5, 0.5], &w).unwrap();
        assert_relative_eq!(d, 0.5f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn torus_distance_rejects_outside() {
        let w = TorusWindow::unit();
        assert!(torus_distance([1.5, 0.0], [0.0, 0.0], &w).is_err());
    }

    #[test]
    fn poisson_count_mean() {
        let w = TorusWindow::unit();
        let runs = 1000;
        let intensity = 40.0;
        let total: usize = (0..runs)
            .map(|k| sample_poisson(intensity, &w, derive_seed(7, "mean-test", k)).unwrap().len())
            .sum();
        let mean = total as f64 / runs as f64;
        let band = 3.0 * (intensity / runs as f64).sqrt();
        assert!((mean - intensity).abs() < band, "mean {mean} outside {intensity} +- {band}");
    }

    #[test]
    fn poisson_is_simple_and_deterministic() {
        let w = TorusWindow::unit();
        let a = sample_poisson(30.0, &w, 42).unwrap();
        let b = sample_poisson(30.0, &w, 42).unwrap();
        assert_eq!(a, b);
        // PointPattern::new would have rejected duplicates already.
        assert!(a.len() > 0);
    }

    #[test]
    fn poisson_rejects_nonpositive_intensity() {
        let w = TorusWindow::unit();
        assert!(sample_poisson(0.0, &w, 1).is_err());
        assert!(sample_poisson(-3.0, &w, 1).is_err());
    }

    #[test]
    fn quadrant_counts_chi_square() {
        // Counts in the four quadrants are independent Poisson(mean/4);
        // aggregate chi-square over 1000 samples, p > 0.001.
        let w = TorusWindow::unit();
        let runs = 1000;
        let expected = 10.0; // 40 / 4
        let mut stat = 0.0;
        for k in 0..runs {
            let p = sample_poisson(40.0, &w, derive_seed(12345, "chi2", k)).unwrap();
            let mut counts = [0usize; 4];
            for q in p.points() {
                let ix = usize::from(q[0] >= 0.5);
                let iy = usize::from(q[1] >= 0.5);
                counts[2 * ix + iy] += 1;
            }
            for c in counts {
                let d = c as f64 - expected;
                stat += d * d / expected;
            }
        }
        // chi^2 with 4000 degrees of freedom, 0.999 quantile (Wilson-Hilferty).
        assert!(stat < 4282.0, "chi-square statistic {stat} too large");
    }

    #[test]
    fn translate_identity_and_full_wrap() {
        let w = TorusWindow::unit();
        let p = sample_poisson(30.0, &w, 5).unwrap();
        assert_eq!(translate(&p, [0.0, 0.0]), p);
        let wrapped = translate(&p, [1.0, 1.0]);
        for (a, b) in wrapped.points().iter().zip(p.points()) {
            assert_relative_eq!(a[0], b[0], epsilon = 1e-15);
            assert_relative_eq!(a[1], b[1], epsilon = 1e-15);
        }
    }

    #[test]
    fn translate_is_group_action() {
        let w = TorusWindow::unit();
        let p = sample_poisson(30.0, &w, 11).unwrap();
        let u = [0.37, 0.81];
        let v = [0.55, 0.23];
        let lhs = translate(&translate(&p, u), v);
        let rhs = translate(&p, [u[0] + v[0], u[1] + v[1]]);
        for (a, b) in lhs.points().iter().zip(rhs.points()) {
            for k in 0..2 {
                let d = axis_distance(a[k], b[k], 1.0);
                assert!(d < 1e-15, "coordinate drift {d}");
            }
        }
    }

    #[test]
    fn ndjson_round_trip() {
        let w = TorusWindow::unit();
        let p = sample_poisson(30.0, &w, 3).unwrap();
        let marks: Vec<f64> = (0..p.len()).map(|i| i as f64 * 0.125 + 0.01).collect();
        let mp = MarkedPattern::new(p, marks).unwrap();
        let mut buf = Vec::new();
        write_ndjson(&mut buf, std::slice::from_ref(&mp), true).unwrap();
        let back = read_ndjson(&buf[..]).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0], mp);
    }

    #[test]
    fn marked_pattern_requires_aligned_marks() {
        let w = TorusWindow::unit();
        let p = PointPattern::new(w, vec![[0.1, 0.1], [0.5, 0.5]]).unwrap();
        assert!(MarkedPattern::new(p, vec![1.0]).is_err());
    }
}
