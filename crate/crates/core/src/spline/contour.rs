//! Zero level set of a smooth field on `[0,1]²` as polylines.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{dist, Polyline};
use crate::quadrature::LevelSet;

/// Largest distance, relative to the unit square, that a refined chord may
/// leave the curve by.
pub const CHORD_TOL: f64 = 1e-10;
const MAX_REFINE_DEPTH: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum EdgeId {
    /// Edge from node `(a, b)` to `(a+1, b)`.
    H(usize, usize),
    /// Edge from node `(a, b)` to `(a, b+1)`.
    V(usize, usize),
}

fn bisect(f: &dyn LevelSet, mut p: [f64; 2], mut q: [f64; 2], pos_p: bool) -> [f64; 2] {
    for _ in 0..80 {
        let mid = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
        if mid == p || mid == q {
            break;
        }
        let v = f.level(mid[0], mid[1]);
        if v == 0.0 {
            return mid;
        }
        if (v >= 0.0) == pos_p {
            p = mid;
        } else {
            q = mid;
        }
    }
    let (vp, vq) = (f.level(p[0], p[1]).abs(), f.level(q[0], q[1]).abs());
    if vp <= vq {
        p
    } else {
        q
    }
}

/// Newton projection onto the zero set along the gradient. Returns `None`
/// when the iteration wanders farther than `reach`.
pub fn project_to_zero(f: &dyn LevelSet, start: [f64; 2], reach: f64) -> Option<[f64; 2]> {
    let mut p = start;
    for _ in 0..30 {
        let v = f.level(p[0], p[1]);
        let g = f.gradient(p[0], p[1]);
        let g2 = g[0] * g[0] + g[1] * g[1];
        if g2 == 0.0 || !g2.is_finite() {
            return None;
        }
        let step = [v * g[0] / g2, v * g[1] / g2];
        p = [p[0] - step[0], p[1] - step[1]];
        if dist(p, start) > reach {
            return None;
        }
        if step[0].hypot(step[1]) <= 1e-15 {
            break;
        }
    }
    Some(p)
}

/// Zero set of `field` traced by marching squares on an `m × m` node mesh
/// over `[0,1]²`, then refined by projecting chord midpoints until every
/// chord stays within [`CHORD_TOL`] of the curve.
///
/// Nodes with `field >= 0` count as positive. Saddle cells are split
/// according to the value at the cell center. Polylines that reach the
/// boundary are open and start at the boundary; the rest are closed.
pub fn zero_level_curve(field: &dyn LevelSet, m: usize) -> Result<Vec<Polyline>> {
    if m < 2 {
        return Err(Error::InvalidSize(m));
    }
    let d = 1.0 / (m - 1) as f64;
    let node = |a: usize, b: usize| [a as f64 * d, b as f64 * d];
    let pos: Vec<bool> = (0..m * m)
        .into_par_iter()
        .map(|k| {
            let p = node(k % m, k / m);
            field.level(p[0], p[1]) >= 0.0
        })
        .collect();
    let is_pos = |a: usize, b: usize| pos[b * m + a];
    if pos.iter().all(|&s| s) || pos.iter().all(|&s| !s) {
        return Err(Error::EmptyContour);
    }

    // Segments as pairs of crossed edges.
    let mut segments: Vec<(EdgeId, EdgeId)> = Vec::new();
    for b in 0..m - 1 {
        for a in 0..m - 1 {
            let s = [is_pos(a, b), is_pos(a + 1, b), is_pos(a + 1, b + 1), is_pos(a, b + 1)];
            let e = [EdgeId::H(a, b), EdgeId::V(a + 1, b), EdgeId::H(a, b + 1), EdgeId::V(a, b)];
            let crossed: Vec<usize> = (0..4).filter(|&k| s[k] != s[(k + 1) % 4]).collect();
            match crossed.len() {
                0 => {}
                2 => segments.push((e[crossed[0]], e[crossed[1]])),
                _ => {
                    let c = node(a, b);
                    let center = field.level(c[0] + 0.5 * d, c[1] + 0.5 * d) >= 0.0;
                    if center == s[0] {
                        // Corners 0 and 2 connect through the center.
                        segments.push((e[0], e[1]));
                        segments.push((e[2], e[3]));
                    } else {
                        segments.push((e[3], e[0]));
                        segments.push((e[1], e[2]));
                    }
                }
            }
        }
    }

    let mut incident: HashMap<EdgeId, Vec<usize>> = HashMap::new();
    for (k, &(e1, e2)) in segments.iter().enumerate() {
        incident.entry(e1).or_default().push(k);
        incident.entry(e2).or_default().push(k);
    }
    let mut roots: HashMap<EdgeId, [f64; 2]> = HashMap::with_capacity(incident.len());
    for &e in incident.keys() {
        let (p, q, pp) = match e {
            EdgeId::H(a, b) => (node(a, b), node(a + 1, b), is_pos(a, b)),
            EdgeId::V(a, b) => (node(a, b), node(a, b + 1), is_pos(a, b)),
        };
        roots.insert(e, bisect(field, p, q, pp));
    }

    let mut used = vec![false; segments.len()];
    let mut chains: Vec<(Vec<EdgeId>, bool)> = Vec::new();
    let walk = |start_edge: EdgeId, first_seg: usize, used: &mut Vec<bool>| {
        let mut chain = vec![start_edge];
        let mut edge = start_edge;
        let mut seg = first_seg;
        loop {
            used[seg] = true;
            let (e1, e2) = segments[seg];
            edge = if e1 == edge { e2 } else { e1 };
            chain.push(edge);
            match incident[&edge].iter().find(|&&s| !used[s]) {
                Some(&next) => seg = next,
                None => break,
            }
        }
        chain
    };
    let mut ends: Vec<EdgeId> = incident
        .iter()
        .filter(|(_, v)| v.len() == 1)
        .map(|(&e, _)| e)
        .collect();
    ends.sort();
    for e in ends {
        let seg = incident[&e][0];
        if !used[seg] {
            chains.push((walk(e, seg, &mut used), false));
        }
    }
    for seg in 0..segments.len() {
        if !used[seg] {
            let mut chain = walk(segments[seg].0, seg, &mut used);
            if chain.first() == chain.last() {
                chain.pop();
            }
            chains.push((chain, true));
        }
    }

    let lines: Vec<Polyline> = chains
        .into_par_iter()
        .map(|(chain, closed)| {
            let points: Vec<[f64; 2]> = chain.iter().map(|e| roots[e]).collect();
            refine(field, Polyline { points, closed }, d)
        })
        .collect();
    Ok(lines)
}

fn refine(field: &dyn LevelSet, line: Polyline, d: f64) -> Polyline {
    let mut out = Vec::with_capacity(line.points.len() * 4);
    let n = line.points.len();
    let count = if line.closed { n } else { n.saturating_sub(1) };
    for k in 0..count {
        let a = line.points[k];
        let b = line.points[(k + 1) % n];
        out.push(a);
        subdivide(field, a, b, d, 0, &mut out);
    }
    if !line.closed {
        if let Some(&last) = line.points.last() {
            out.push(last);
        }
    }
    out.dedup();
    Polyline { points: out, closed: line.closed }
}

fn subdivide(field: &dyn LevelSet, a: [f64; 2], b: [f64; 2], d: f64, depth: usize, out: &mut Vec<[f64; 2]>) {
    if depth >= MAX_REFINE_DEPTH {
        return;
    }
    let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
    let len = dist(a, b);
    let Some(p) = project_to_zero(field, mid, len.max(d)) else {
        return;
    };
    if !(0.0..=1.0).contains(&p[0]) || !(0.0..=1.0).contains(&p[1]) {
        return;
    }
    if dist(p, mid) <= CHORD_TOL {
        return;
    }
    subdivide(field, a, p, d, depth + 1, out);
    out.push(p);
    subdivide(field, p, b, d, depth + 1, out);
}
