//! Error measures of a reconstruction against a known test function.

use rayon::prelude::*;

use super::PiecewiseReconstruction;
use crate::catalog::{Interface, TestFunction};
use crate::curve::ImplicitCurve;
use crate::geometry::{dist, BinGrid, Polyline, SegmentIndex};

/// Sample points taken along each curve for the graph distance.
pub const CURVE_BASE_POINTS: usize = 10_000;
/// Uniform offsets per normal line, spanning `[-2h, 2h]`.
const NORMAL_OFFSETS: usize = 16;
/// Offset used for the points placed on either side of a curve crossing.
const SIDE_EPS: f64 = 1e-9;

/// Which cell-centered sample points enter [`field_error`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldRegion {
    All,
    /// Distance to the true curve at least this large.
    Far(f64),
    /// Distance to the true curve within `[lo, hi]`.
    Band(f64, f64),
}

/// Largest `|f - f̃|` over the cell-centered `m × m` sample points in
/// `region`, with the number of points used.
pub fn field_error(r: &PiecewiseReconstruction, f: &TestFunction, m: usize, region: FieldRegion) -> (f64, usize) {
    let results: Vec<Option<f64>> = (0..m * m)
        .into_par_iter()
        .map(|k| {
            let x = ((k % m) as f64 + 0.5) / m as f64;
            let y = ((k / m) as f64 + 0.5) / m as f64;
            let d = f.interface.map_or(f64::INFINITY, |c| c.distance(x, y));
            let inside = match region {
                FieldRegion::All => true,
                FieldRegion::Far(t) => d >= t,
                FieldRegion::Band(lo, hi) => d >= lo && d <= hi,
            };
            inside.then(|| (r.evaluate(x, y).expect("sample inside the square") - f.eval(x, y)).abs())
        })
        .collect();
    let used = results.iter().flatten().count();
    (results.into_iter().flatten().fold(0.0, f64::max), used)
}

fn in_square(p: [f64; 2]) -> bool {
    (0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1])
}

fn unit(g: [f64; 2]) -> Option<[f64; 2]> {
    let l = g[0].hypot(g[1]);
    (l > 0.0 && l.is_finite()).then(|| [g[0] / l, g[1] / l])
}

/// Points on normal lines through `base`: uniform offsets in `[-w, w]`,
/// points just either side of the base point, and just either side of
/// every sign change of `other` along the line.
fn normal_line_points(base: &[([f64; 2], [f64; 2])], w: f64, other: &(dyn Fn(f64, f64) -> f64 + Sync)) -> Vec<[f64; 2]> {
    base.par_iter()
        .flat_map_iter(|&(p, nrm)| {
            let at = |t: f64| [p[0] + t * nrm[0], p[1] + t * nrm[1]];
            let mut ts: Vec<f64> = (0..NORMAL_OFFSETS)
                .map(|k| -w + 2.0 * w * k as f64 / (NORMAL_OFFSETS - 1) as f64)
                .collect();
            ts.push(-SIDE_EPS);
            ts.push(SIDE_EPS);
            let grid: Vec<f64> = (0..=NORMAL_OFFSETS).map(|k| -w + 2.0 * w * k as f64 / NORMAL_OFFSETS as f64).collect();
            for s in grid.windows(2) {
                let (mut a, mut b) = (s[0], s[1]);
                let sa = other(at(a)[0], at(a)[1]) >= 0.0;
                if sa == (other(at(b)[0], at(b)[1]) >= 0.0) {
                    continue;
                }
                for _ in 0..80 {
                    let mid = 0.5 * (a + b);
                    if (other(at(mid)[0], at(mid)[1]) >= 0.0) == sa {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                let tc = 0.5 * (a + b);
                ts.push(tc - SIDE_EPS);
                ts.push(tc + SIDE_EPS);
            }
            ts.into_iter().map(at).filter(|q| in_square(*q)).collect::<Vec<_>>()
        })
        .collect()
}

/// Points at arc-length multiples of `spacing`, plus the end of an open
/// polyline.
fn uniform_points(l: &Polyline, spacing: f64) -> Vec<[f64; 2]> {
    let mut out = Vec::new();
    let mut next = 0.0;
    let mut walked = 0.0;
    for (a, b) in l.segments() {
        let len = dist(a, b);
        while next <= walked + len {
            let t = if len > 0.0 { (next - walked) / len } else { 0.0 };
            out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
            next += spacing;
        }
        walked += len;
    }
    if !l.closed {
        if let Some(&last) = l.points.last() {
            out.push(last);
        }
    }
    out
}

/// One-sided discrete Hausdorff distance from `a` to `b` in R³.
fn directed(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    let mut index = BinGrid::new([0.0, 1.0, 0.0, 1.0], b.len().max(1) / 4 + 1);
    for (k, p) in b.iter().enumerate() {
        index.insert(k as u32, [p[0], p[0], p[1], p[1]]);
    }
    a.par_iter()
        .map(|p| {
            index
                .nearest([p[0], p[1]], |id| {
                    let q = b[id as usize];
                    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt()
                })
                .map_or(f64::INFINITY, |r| r.1)
        })
        .reduce(|| 0.0, f64::max)
}

/// Symmetric Hausdorff distance between the graphs of two functions over
/// `[0,1]²`, both sampled at the same locations.
///
/// The locations are the cell-centered `m × m` grid outside the tube of
/// half-width `2h` around either curve, plus normal lines through
/// [`CURVE_BASE_POINTS`] points of each curve that cover that tube,
/// including points just either side of both curves.
pub fn graph_distance(
    f: &(dyn Fn(f64, f64) -> f64 + Sync),
    g: &(dyn Fn(f64, f64) -> f64 + Sync),
    truth: Option<&Interface>,
    approx: Option<&ImplicitCurve>,
    m: usize,
    h: f64,
) -> f64 {
    let w = 2.0 * h;
    let approx_index = approx.map(|c| SegmentIndex::new(&c.polylines));
    let mut locations: Vec<[f64; 2]> = (0..m * m)
        .into_par_iter()
        .map(|k| [((k % m) as f64 + 0.5) / m as f64, ((k / m) as f64 + 0.5) / m as f64])
        .filter(|p| {
            truth.map_or(true, |c| c.distance(p[0], p[1]) > w)
                && approx_index.as_ref().map_or(true, |ix| !ix.within(*p, w))
        })
        .collect();
    let level_truth = |x: f64, y: f64| truth.map_or(1.0, |c| c.level(x, y));
    let level_approx = |x: f64, y: f64| approx.map_or(1.0, |c| c.level(x, y));
    if let Some(c) = truth {
        // The parameter range may leave the square; ask for enough samples
        // that about CURVE_BASE_POINTS remain inside.
        let mut pts = c.sample_points(CURVE_BASE_POINTS);
        if !pts.is_empty() && pts.len() < CURVE_BASE_POINTS {
            pts = c.sample_points(CURVE_BASE_POINTS * CURVE_BASE_POINTS / pts.len());
        }
        let base: Vec<([f64; 2], [f64; 2])> = pts
            .into_iter()
            .filter_map(|p| unit(c.gradient(p[0], p[1])).map(|nrm| (p, nrm)))
            .collect();
        locations.extend(normal_line_points(&base, w, &level_approx));
    }
    if let Some(c) = approx {
        let total: f64 = c.polylines.iter().map(|l| l.length()).sum();
        let spacing = total / CURVE_BASE_POINTS as f64;
        let base: Vec<([f64; 2], [f64; 2])> = c
            .polylines
            .iter()
            .flat_map(|l| uniform_points(l, spacing))
            .filter_map(|p| unit(c.spline.gradient(p[0], p[1])).map(|nrm| (p, nrm)))
            .collect();
        locations.extend(normal_line_points(&base, w, &level_truth));
    }
    let a: Vec<[f64; 3]> = locations.par_iter().map(|p| [p[0], p[1], f(p[0], p[1])]).collect();
    let b: Vec<[f64; 3]> = locations.par_iter().map(|p| [p[0], p[1], g(p[0], p[1])]).collect();
    directed(&a, &b).max(directed(&b, &a))
}

/// Graph Hausdorff distance between `f` and the reconstruction.
pub fn graph_hausdorff(r: &PiecewiseReconstruction, f: &TestFunction, m: usize) -> f64 {
    let approx = |x: f64, y: f64| r.evaluate(x, y).expect("sample inside the square");
    let truth = |x: f64, y: f64| f.eval(x, y);
    graph_distance(&truth, &approx, f.interface.as_ref(), r.curve.as_ref(), m, 1.0 / r.n as f64)
}
