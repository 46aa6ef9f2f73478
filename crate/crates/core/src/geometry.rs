//! Polylines, a uniform bin index for nearest-item queries, and
//! curve-to-curve distances.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::catalog::Interface;
use crate::grid::fmt17;

/// Ordered vertex list; `closed` adds the segment from last to first.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub points: Vec<[f64; 2]>,
    pub closed: bool,
}

impl Polyline {
    pub fn open(points: Vec<[f64; 2]>) -> Self {
        Polyline { points, closed: false }
    }

    pub fn segments(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        let n = self.points.len();
        let count = if self.closed && n > 2 { n } else { n.saturating_sub(1) };
        (0..count).map(move |k| (self.points[k], self.points[(k + 1) % n]))
    }

    pub fn length(&self) -> f64 {
        self.segments().map(|(a, b)| dist(a, b)).sum()
    }

    /// Vertices plus segment midpoints.
    pub fn probe_points(&self) -> Vec<[f64; 2]> {
        let mut out = self.points.clone();
        out.extend(self.segments().map(|(a, b)| [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]));
        out
    }

    /// Points spaced at most `spacing` apart along the polyline.
    pub fn resample(&self, spacing: f64) -> Vec<[f64; 2]> {
        let mut out = Vec::new();
        for (a, b) in self.segments() {
            let k = (dist(a, b) / spacing).ceil().max(1.0) as usize;
            for s in 0..k {
                let t = s as f64 / k as f64;
                out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
            }
        }
        if !self.closed {
            if let Some(&last) = self.points.last() {
                out.push(last);
            }
        }
        out
    }
}

#[inline]
pub fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Closest point of segment `ab` to `p` and its distance.
#[inline]
pub fn point_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> ([f64; 2], f64) {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = [a[0] + t * dx, a[1] + t * dy];
    (q, dist(p, q))
}

/// Uniform bins over a bounding box; items are registered by their
/// bounding boxes and searched ring by ring.
#[derive(Debug, Clone)]
pub struct BinGrid {
    x0: f64,
    y0: f64,
    cell: f64,
    nx: usize,
    ny: usize,
    bins: Vec<Vec<u32>>,
}

impl BinGrid {
    /// Bins covering `[x0,x1]×[y0,y1]` with roughly `target` bins.
    pub fn new(bbox: [f64; 4], target: usize) -> Self {
        let [x0, x1, y0, y1] = bbox;
        let target = target.max(1) as f64;
        let w = (x1 - x0).max(1e-12);
        let hgt = (y1 - y0).max(1e-12);
        // Square bins, but never more than `target` along the long side.
        let cell = (w * hgt / target).sqrt().max(w.max(hgt) / target);
        let nx = ((w / cell).ceil() as usize).max(1);
        let ny = ((hgt / cell).ceil() as usize).max(1);
        BinGrid {
            x0,
            y0,
            cell,
            nx,
            ny,
            bins: vec![Vec::new(); nx * ny],
        }
    }

    fn coord(&self, x: f64, y: f64) -> (usize, usize) {
        let i = ((x - self.x0) / self.cell).floor().clamp(0.0, (self.nx - 1) as f64) as usize;
        let j = ((y - self.y0) / self.cell).floor().clamp(0.0, (self.ny - 1) as f64) as usize;
        (i, j)
    }

    pub fn insert(&mut self, id: u32, bbox: [f64; 4]) {
        let (i0, j0) = self.coord(bbox[0], bbox[2]);
        let (i1, j1) = self.coord(bbox[1], bbox[3]);
        for j in j0..=j1 {
            for i in i0..=i1 {
                self.bins[j * self.nx + i].push(id);
            }
        }
    }

    /// Calls `visit` for every item stored in a bin meeting `bbox`. Items
    /// spanning several bins are reported once per bin.
    pub fn for_each_in(&self, bbox: [f64; 4], mut visit: impl FnMut(u32)) {
        let (i0, j0) = self.coord(bbox[0], bbox[2]);
        let (i1, j1) = self.coord(bbox[1], bbox[3]);
        for j in j0..=j1 {
            for i in i0..=i1 {
                self.bins[j * self.nx + i].iter().for_each(|&id| visit(id));
            }
        }
    }

    /// Item minimizing `metric`, which must never be smaller than the
    /// planar distance from `q` to the item's bounding box.
    pub fn nearest(&self, q: [f64; 2], metric: impl Fn(u32) -> f64) -> Option<(u32, f64)> {
        let (ci, cj) = self.coord(q[0], q[1]);
        let (ci, cj) = (ci as i64, cj as i64);
        let (nx, ny) = (self.nx as i64, self.ny as i64);
        let mut best: Option<(u32, f64)> = None;
        let visit = |i: i64, j: i64, best: &mut Option<(u32, f64)>| {
            for &id in &self.bins[(j * nx + i) as usize] {
                let d = metric(id);
                if best.map_or(true, |(bid, bd)| d < bd || (d == bd && id < bid)) {
                    *best = Some((id, d));
                }
            }
        };
        for r in 0.. {
            let (ilo, ihi) = (ci - r, ci + r);
            let (jlo, jhi) = (cj - r, cj + r);
            for j in jlo.max(0)..=jhi.min(ny - 1) {
                if j == jlo || j == jhi {
                    for i in ilo.max(0)..=ihi.min(nx - 1) {
                        visit(i, j, &mut best);
                    }
                } else {
                    if ilo >= 0 {
                        visit(ilo, j, &mut best);
                    }
                    if ihi < nx && ihi != ilo {
                        visit(ihi, j, &mut best);
                    }
                }
            }
            // Every unvisited bin lies in the part of the grid beyond one of
            // the block's open sides.
            let gx1 = self.x0 + nx as f64 * self.cell;
            let gy1 = self.y0 + ny as f64 * self.cell;
            let xs = |k: i64| self.x0 + k as f64 * self.cell;
            let ys = |k: i64| self.y0 + k as f64 * self.cell;
            let mut bound = f64::INFINITY;
            if ilo > 0 {
                bound = bound.min(rect_distance(q, [self.x0, xs(ilo), self.y0, gy1]));
            }
            if ihi < nx - 1 {
                bound = bound.min(rect_distance(q, [xs(ihi + 1), gx1, self.y0, gy1]));
            }
            if jlo > 0 {
                bound = bound.min(rect_distance(q, [self.x0, gx1, self.y0, ys(jlo)]));
            }
            if jhi < ny - 1 {
                bound = bound.min(rect_distance(q, [self.x0, gx1, ys(jhi + 1), gy1]));
            }
            if bound == f64::INFINITY || best.map_or(false, |(_, bd)| bd <= bound) {
                break;
            }
        }
        best
    }
}

fn rect_distance(q: [f64; 2], r: [f64; 4]) -> f64 {
    let dx = (r[0] - q[0]).max(q[0] - r[1]).max(0.0);
    let dy = (r[2] - q[1]).max(q[1] - r[3]).max(0.0);
    dx.hypot(dy)
}

fn bbox_of(points: impl Iterator<Item = [f64; 2]>) -> [f64; 4] {
    let mut b = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
    for p in points {
        b[0] = b[0].min(p[0]);
        b[1] = b[1].max(p[0]);
        b[2] = b[2].min(p[1]);
        b[3] = b[3].max(p[1]);
    }
    b
}

/// Nearest-segment queries over a set of polylines.
#[derive(Debug, Clone)]
pub struct SegmentIndex {
    segments: Vec<([f64; 2], [f64; 2])>,
    owner: Vec<u32>,
    grid: BinGrid,
}

impl SegmentIndex {
    pub fn new(lines: &[Polyline]) -> Self {
        let mut segments = Vec::new();
        let mut owner = Vec::new();
        for (k, l) in lines.iter().enumerate() {
            if l.points.len() == 1 {
                segments.push((l.points[0], l.points[0]));
                owner.push(k as u32);
            }
            for s in l.segments() {
                segments.push(s);
                owner.push(k as u32);
            }
        }
        Self::from_segments(segments, owner)
    }

    pub fn from_segments(segments: Vec<([f64; 2], [f64; 2])>, owner: Vec<u32>) -> Self {
        let bbox = bbox_of(segments.iter().flat_map(|s| [s.0, s.1]));
        let bbox = if bbox[0].is_finite() { bbox } else { [0.0, 1.0, 0.0, 1.0] };
        let mut grid = BinGrid::new(bbox, segments.len().max(1));
        for (k, s) in segments.iter().enumerate() {
            grid.insert(k as u32, bbox_of([s.0, s.1].into_iter()));
        }
        SegmentIndex { segments, owner, grid }
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Distance, closest point, and owning polyline of the nearest segment.
    pub fn nearest(&self, p: [f64; 2]) -> Option<(f64, [f64; 2], usize)> {
        let (id, d) = self.grid.nearest(p, |id| {
            let s = self.segments[id as usize];
            point_segment(p, s.0, s.1).1
        })?;
        let s = self.segments[id as usize];
        Some((d, point_segment(p, s.0, s.1).0, self.owner[id as usize] as usize))
    }

    pub fn distance(&self, p: [f64; 2]) -> f64 {
        self.nearest(p).map_or(f64::INFINITY, |r| r.0)
    }

    /// Whether some segment passes within `r` of `p`. Cheaper than
    /// [`distance`](Self::distance) for points far from every segment.
    pub fn within(&self, p: [f64; 2], r: f64) -> bool {
        let mut hit = false;
        self.grid.for_each_in([p[0] - r, p[0] + r, p[1] - r, p[1] + r], |id| {
            if !hit {
                let s = self.segments[id as usize];
                hit = point_segment(p, s.0, s.1).1 <= r;
            }
        });
        hit
    }
}

/// Nearest-point queries over a fixed point set.
#[derive(Debug, Clone)]
pub struct PointIndex {
    points: Vec<[f64; 2]>,
    grid: BinGrid,
}

impl PointIndex {
    pub fn new(points: Vec<[f64; 2]>) -> Self {
        let bbox = bbox_of(points.iter().copied());
        let bbox = if bbox[0].is_finite() { bbox } else { [0.0, 1.0, 0.0, 1.0] };
        let mut grid = BinGrid::new(bbox, points.len().max(1) / 2 + 1);
        for (k, p) in points.iter().enumerate() {
            grid.insert(k as u32, [p[0], p[0], p[1], p[1]]);
        }
        PointIndex { points, grid }
    }

    pub fn nearest(&self, q: [f64; 2]) -> Option<(usize, f64)> {
        self.grid
            .nearest(q, |id| dist(q, self.points[id as usize]))
            .map(|(id, d)| (id as usize, d))
    }

    pub fn point(&self, k: usize) -> [f64; 2] {
        self.points[k]
    }
}

/// Error between two curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveMetrics {
    pub hausdorff: f64,
    pub mean: f64,
    /// Hausdorff distance over probe points at least `clip` from the
    /// boundary of the unit square.
    pub clipped_hausdorff: f64,
    pub n_points: usize,
}

/// Comparison target for [`curve_distance`].
#[derive(Debug, Clone, Copy)]
pub enum CurveTarget<'a> {
    Polylines(&'a [Polyline]),
    Analytic(&'a Interface),
}

/// Minimum number of points used to resample an analytic curve.
pub const ANALYTIC_SAMPLES: usize = 10_000;

fn inside_clip(p: [f64; 2], clip: f64) -> bool {
    p[0] >= clip && p[0] <= 1.0 - clip && p[1] >= clip && p[1] <= 1.0 - clip
}

/// Symmetric Hausdorff and mean point-to-curve distance between `a` and
/// `b`. Probe points are polyline vertices and segment midpoints; analytic
/// curves are resampled at [`ANALYTIC_SAMPLES`] points or more and measured
/// exactly in the other direction.
pub fn curve_distance(a: &[Polyline], b: CurveTarget<'_>, clip: f64) -> CurveMetrics {
    let probes_a: Vec<[f64; 2]> = a.iter().flat_map(|l| l.probe_points()).collect();
    let index_a = SegmentIndex::new(a);
    let (d_ab, probes_b): (Vec<f64>, Vec<[f64; 2]>) = match b {
        CurveTarget::Analytic(curve) => {
            let d = probes_a.par_iter().map(|p| curve.distance(p[0], p[1])).collect();
            (d, curve.sample_points(ANALYTIC_SAMPLES))
        }
        CurveTarget::Polylines(lines) => {
            let index_b = SegmentIndex::new(lines);
            let d = probes_a.par_iter().map(|&p| index_b.distance(p)).collect();
            (d, lines.iter().flat_map(|l| l.probe_points()).collect())
        }
    };
    let d_ba: Vec<f64> = probes_b.par_iter().map(|&p| index_a.distance(p)).collect();

    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let clipped = |probes: &[[f64; 2]], d: &[f64]| {
        probes
            .iter()
            .zip(d)
            .filter(|(p, _)| inside_clip(**p, clip))
            .map(|(_, &d)| d)
            .fold(0.0, f64::max)
    };
    CurveMetrics {
        hausdorff: max(&d_ab).max(max(&d_ba)),
        mean: 0.5 * (mean(&d_ab) + mean(&d_ba)),
        clipped_hausdorff: clipped(&probes_a, &d_ab).max(clipped(&probes_b, &d_ba)),
        n_points: probes_a.len() + probes_b.len(),
    }
}

/// Polyline CSV: `x,y` per line, blank line between polylines. Closed
/// polylines repeat their first point at the end.
pub fn polylines_to_csv(lines: &[Polyline]) -> String {
    let mut out = String::new();
    for (k, l) in lines.iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        let extra = l.closed.then(|| l.points.first().copied()).flatten();
        for p in l.points.iter().chain(extra.iter()) {
            writeln!(out, "{},{}", fmt17(p[0]), fmt17(p[1])).unwrap();
        }
    }
    out
}

/// Point CSV: `x,y` per line.
pub fn points_to_csv(points: &[[f64; 2]]) -> String {
    let mut out = String::new();
    for p in points {
        writeln!(out, "{},{}", fmt17(p[0]), fmt17(p[1])).unwrap();
    }
    out
}
