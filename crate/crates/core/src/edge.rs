//! Local quadratic edge models.
//!
//! Around each irregular anchor cell a 3×8 block of cells is mapped to a
//! local frame in which the block occupies `[h,4h]×[h,9h]`, side U1 lies
//! below and the curve crosses rows 4–7. Linear functions are fitted to
//! the clean rows on each side and the curve `η = q(ξ)` is recovered from
//! the column sums over rows 4–7 by Newton's method.
//!
//! Internally everything is in the unit frame `ξ = x/h`, `η = y/h`, where
//! `q(ξ) = Aξ² + Bξ + C` with `A = a·h`, `B = b`, `C = c` for the
//! physical-frame curve `y = a x² + b x + c·h`.

use std::fmt::Write as _;

use log::debug;
use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{points_to_csv, Polyline};
use crate::grid::CellGrid;
use crate::signature::{CellPartition, Label};

pub const NEWTON_TOL: f64 = 1e-12;
pub const NEWTON_MAX_ITERS: usize = 25;
/// Residual increases in a row that count as divergence.
const DIVERGENCE_RUN: usize = 3;
const RECENTER_PASSES: usize = 2;
/// Steepest local slope, in cells per cell, that keeps a line through
/// the window center inside rows 4–7 across all three columns.
const MAX_WINDOW_SLOPE: f64 = 4.0 / 3.0;
/// Arcs are sampled over the middle column; windows at the domain edge
/// extend their samples this many columns past it.
const BOUNDARY_EXTENSION: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Orientation {
    /// The curve is locally a graph over x.
    #[serde(rename = "y-of-x")]
    YofX,
    /// The curve is locally a graph over y.
    #[serde(rename = "x-of-y")]
    XofY,
}

/// Map between global coordinates and a window's physical local frame.
///
/// With `u`, `v` the global along/across coordinates, local
/// `x = u - a_off·h` and `y = v - c_off·h`, or `y = c_off·h - v` when
/// `flip` is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Frame {
    pub orientation: Orientation,
    pub flip: bool,
    pub a_off: i64,
    pub c_off: i64,
    #[serde(skip)]
    n: usize,
}

impl Frame {
    /// Frame in which local and global coordinates coincide.
    pub fn identity(n: usize) -> Self {
        Frame {
            orientation: Orientation::YofX,
            flip: false,
            a_off: 0,
            c_off: 0,
            n,
        }
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    fn split(&self, x: f64, y: f64) -> (f64, f64) {
        match self.orientation {
            Orientation::YofX => (x, y),
            Orientation::XofY => (y, x),
        }
    }

    fn join(&self, u: f64, v: f64) -> [f64; 2] {
        match self.orientation {
            Orientation::YofX => [u, v],
            Orientation::XofY => [v, u],
        }
    }

    pub fn to_local(&self, x: f64, y: f64) -> [f64; 2] {
        let h = self.h();
        let (u, v) = self.split(x, y);
        let ly = if self.flip { self.c_off as f64 * h - v } else { v - self.c_off as f64 * h };
        [u - self.a_off as f64 * h, ly]
    }

    pub fn to_global(&self, lx: f64, ly: f64) -> [f64; 2] {
        let h = self.h();
        let u = lx + self.a_off as f64 * h;
        let v = if self.flip { self.c_off as f64 * h - ly } else { ly + self.c_off as f64 * h };
        self.join(u, v)
    }

    /// `[m11, m12, m21, m22, t1, t2]` with `local = M·global + t`.
    pub fn affine(&self) -> [f64; 6] {
        let t = self.to_local(0.0, 0.0);
        let e1 = self.to_local(1.0, 0.0);
        let e2 = self.to_local(0.0, 1.0);
        [e1[0] - t[0], e2[0] - t[0], e1[1] - t[1], e2[1] - t[1], t[0], t[1]]
    }

    /// Global index of local cell `(il, jl)`.
    pub fn global_cell(&self, il: i64, jl: i64) -> (i64, i64) {
        let along = self.a_off + il;
        let across = if self.flip { self.c_off - jl + 1 } else { self.c_off + jl };
        match self.orientation {
            Orientation::YofX => (along, across),
            Orientation::XofY => (across, along),
        }
    }

    fn shifted(&self, rows: i64) -> Self {
        let mut f = *self;
        f.c_off += if f.flip { -rows } else { rows };
        f
    }
}

/// The 3×8 block of cell averages of one edge window.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWindow {
    pub anchor: (usize, usize),
    pub frame: Frame,
    /// `cells[il - 2][jl - 2]` for local columns 2..=4 and rows 2..=9.
    pub cells: [[f64; 8]; 3],
}

impl EdgeWindow {
    /// Window with the identity frame, from local cell averages.
    pub fn from_local_cells(n: usize, cells: [[f64; 8]; 3]) -> Self {
        EdgeWindow {
            anchor: (3, 5),
            frame: Frame::identity(n),
            cells,
        }
    }

    fn gather(g: &CellGrid, frame: Frame, anchor: (usize, usize)) -> Option<Self> {
        let mut cells = [[0.0; 8]; 3];
        for (c, col) in cells.iter_mut().enumerate() {
            for (r, v) in col.iter_mut().enumerate() {
                let (i, j) = frame.global_cell(c as i64 + 2, r as i64 + 2);
                *v = g.try_get(i, j)?;
            }
        }
        Some(EdgeWindow { anchor, frame, cells })
    }

    #[inline]
    pub fn cell(&self, il: usize, jl: usize) -> f64 {
        self.cells[il - 2][jl - 2]
    }

    pub fn h(&self) -> f64 {
        self.frame.h()
    }
}

/// `α x + β y + γ` in the physical local frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearPiece {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl LinearPiece {
    fn unit(&self, h: f64) -> [f64; 3] {
        [self.alpha * h, self.beta * h, self.gamma]
    }

    fn from_unit(u: [f64; 3], h: f64) -> Self {
        LinearPiece {
            alpha: u[0] / h,
            beta: u[1] / h,
            gamma: u[2],
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.alpha * x + self.beta * y + self.gamma
    }
}

/// Linear functions matching the averages of local cells (3,2), (3,3),
/// (4,3) below the curve and (3,9), (3,8), (4,8) above it. Averages of a
/// linear function equal its value at the cell center, so the two 3×3
/// systems have closed-form solutions.
pub fn fit_linear_pieces(w: &EdgeWindow) -> (LinearPiece, LinearPiece) {
    let h = w.h();
    let b1 = w.cell(3, 3) - w.cell(3, 2);
    let a1 = w.cell(4, 3) - w.cell(3, 3);
    let g1 = w.cell(3, 3) - 2.5 * a1 - 2.5 * b1;
    let b2 = w.cell(3, 9) - w.cell(3, 8);
    let a2 = w.cell(4, 8) - w.cell(3, 8);
    let g2 = w.cell(3, 8) - 2.5 * a2 - 7.5 * b2;
    (LinearPiece::from_unit([a1, b1, g1], h), LinearPiece::from_unit([a2, b2, g2], h))
}

/// `∫ ξ^k dξ` over `[lo, lo+1]`, `k = 0..=4`.
fn column_moments(lo: f64) -> [f64; 5] {
    let hi = lo + 1.0;
    std::array::from_fn(|k| {
        let e = k as i32 + 1;
        (hi.powi(e) - lo.powi(e)) / e as f64
    })
}

/// The three column equations `Q_i(A,B,C) = F̄_i` in the unit frame.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSystem {
    pub h: f64,
    /// Unit-frame coefficients of `L1 - L2`.
    pub diff: [f64; 3],
    /// Unit-frame coefficients of `L2`.
    pub upper: [f64; 3],
    /// Unit-frame coefficients of `L1`.
    pub lower: [f64; 3],
    pub moments: [[f64; 5]; 3],
    /// `F̄_i`, the sums of rows 4–7 in columns 2, 3, 4.
    pub fbar: [f64; 3],
}

/// Builds the column equations. Each `Q_i` is the exact integral over
/// column `i`, rows 4–7, of the model with `L1` below `q` and `L2` above,
/// expanded through monomial moments of the column.
pub fn assemble_quadratic_system(w: &EdgeWindow, l1: &LinearPiece, l2: &LinearPiece) -> QuadraticSystem {
    let h = w.h();
    let lower = l1.unit(h);
    let upper = l2.unit(h);
    let diff = [lower[0] - upper[0], lower[1] - upper[1], lower[2] - upper[2]];
    let moments = [column_moments(1.0), column_moments(2.0), column_moments(3.0)];
    let fbar = std::array::from_fn(|c| (4..=7).map(|r| w.cell(c + 2, r)).sum());
    QuadraticSystem {
        h,
        diff,
        upper,
        lower,
        moments,
        fbar,
    }
}

impl QuadraticSystem {
    /// `Q(A, B, C)`.
    pub fn eval(&self, v: [f64; 3]) -> [f64; 3] {
        let [a, b, c] = v;
        let [al, be, ga] = self.diff;
        let [a2, b2, g2] = self.upper;
        std::array::from_fn(|i| {
            let m = &self.moments[i];
            let lin = al * (a * m[3] + b * m[2] + (c - 3.0) * m[1]) + ga * (a * m[2] + b * m[1] + (c - 3.0) * m[0]);
            let q2 = a * a * m[4] + 2.0 * a * b * m[3] + (b * b + 2.0 * a * c) * m[2] + 2.0 * b * c * m[1] + c * c * m[0];
            let quad = 0.5 * be * (q2 - 9.0 * m[0]);
            let band = 4.0 * a2 * m[1] + 4.0 * g2 * m[0] + 20.0 * b2 * m[0];
            lin + quad + band
        })
    }

    pub fn residual(&self, v: [f64; 3]) -> [f64; 3] {
        let q = self.eval(v);
        std::array::from_fn(|i| q[i] - self.fbar[i])
    }

    /// `∂Q_i/∂(A, B, C)` as rows.
    pub fn jacobian(&self, v: [f64; 3]) -> Matrix3<f64> {
        let [a, b, c] = v;
        let [al, be, ga] = self.diff;
        let mut j = Matrix3::zeros();
        for i in 0..3 {
            let m = &self.moments[i];
            j[(i, 0)] = al * m[3] + ga * m[2] + be * (a * m[4] + b * m[3] + c * m[2]);
            j[(i, 1)] = al * m[2] + ga * m[1] + be * (a * m[3] + b * m[2] + c * m[1]);
            j[(i, 2)] = al * m[1] + ga * m[0] + be * (a * m[2] + b * m[1] + c * m[0]);
        }
        j
    }

    /// Largest max-norm of the constant Hessians `β·[M_{k+l}]`.
    pub fn hessian_bound(&self) -> f64 {
        let be = self.diff[1].abs();
        self.moments
            .iter()
            .map(|m| {
                (0..3)
                    .map(|r| (0..3).map(|s| m[4 - r - s].abs()).sum::<f64>())
                    .fold(0.0, f64::max)
                    * be
            })
            .fold(0.0, f64::max)
    }

    /// Magnitude of the data, used to judge the Jacobian determinant.
    pub fn scale(&self) -> f64 {
        let f = self.fbar.iter().map(|v| v.abs() / 4.0).fold(0.0, f64::max);
        let d = self.diff[2].abs() + 4.0 * self.diff[0].abs() + 9.0 * self.diff[1].abs();
        f.max(d).max(f64::MIN_POSITIVE)
    }

    /// Starting point from the mean curve height in each column, obtained
    /// by treating `L1` and `L2` as constant within the column.
    pub fn column_height_guess(&self) -> Option<[f64; 3]> {
        let mut means = [0.0; 3];
        for (c, m) in means.iter_mut().enumerate() {
            let xi = c as f64 + 1.5;
            let l1 = self.lower[0] * xi + self.lower[1] * 5.0 + self.lower[2];
            let l2 = self.upper[0] * xi + self.upper[1] * 5.0 + self.upper[2];
            let jump = l1 - l2;
            if jump.abs() <= 1e-12 * self.scale() {
                return None;
            }
            *m = ((self.fbar[c] + 3.0 * l1 - 7.0 * l2) / jump).clamp(3.0, 7.0);
        }
        // Column means of Aξ² + Bξ + C at centers 1.5, 2.5, 3.5.
        let a = 0.5 * (means[0] - 2.0 * means[1] + means[2]);
        let b = 0.5 * (means[2] - means[0] - 10.0 * a);
        let c = means[1] - a * (6.25 + 1.0 / 12.0) - 2.5 * b;
        Some([a, b, c])
    }
}

fn inf_norm(v: [f64; 3]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSolution {
    /// Unit-frame `(A, B, C)`.
    pub coeffs: [f64; 3],
    pub iters: usize,
    /// `‖Q(v) - F̄‖∞` at the returned point.
    pub residual: f64,
    /// Jacobian determinant at the returned point.
    pub det: f64,
}

/// Newton's method for `Q(v) = F̄`, stopping once `‖Δv‖∞ ≤ tol`.
pub fn newton_solve(sys: &QuadraticSystem, init: [f64; 3], tol: f64, max_iters: usize) -> Result<NewtonSolution> {
    let scale = sys.scale();
    let mut v = init;
    let mut r = sys.residual(v);
    let mut res = inf_norm(r);
    let mut rising = 0;
    for it in 1..=max_iters {
        let j = sys.jacobian(v);
        let det = j.determinant();
        if !(det.abs() >= 1e-14 * scale.powi(3)) {
            return Err(Error::SingularJacobian { det });
        }
        let step = j
            .lu()
            .solve(&Vector3::from(r))
            .ok_or(Error::SingularJacobian { det })?;
        v = [v[0] - step[0], v[1] - step[1], v[2] - step[2]];
        r = sys.residual(v);
        let next = inf_norm(r);
        if !next.is_finite() {
            return Err(Error::NewtonDivergence { iters: it, residual: next });
        }
        if step.amax() <= tol {
            let det = sys.jacobian(v).determinant();
            return Ok(NewtonSolution {
                coeffs: v,
                iters: it,
                residual: next,
                det,
            });
        }
        rising = if next >= res { rising + 1 } else { 0 };
        if rising >= DIVERGENCE_RUN {
            return Err(Error::NewtonDivergence { iters: it, residual: next });
        }
        res = next;
    }
    Err(Error::NewtonDivergence {
        iters: max_iters,
        residual: res,
    })
}

/// One solved window: the curve `y = a x² + b x + c·h` in the window's
/// physical frame.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadraticArc {
    pub anchor: (usize, usize),
    pub frame: Frame,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Local x-range sampled for the global point set.
    pub x_range: [f64; 2],
    pub l1: LinearPiece,
    pub l2: LinearPiece,
    pub residual: f64,
    pub iters: usize,
    /// Jacobian determinant in the unit frame.
    pub det: f64,
    /// Whether `q` stays strictly inside `(3h, 7h)` over `x_range`.
    pub valid: bool,
}

impl QuadraticArc {
    pub fn h(&self) -> f64 {
        self.frame.h()
    }

    /// `q(x)` in the physical local frame.
    pub fn q(&self, x: f64) -> f64 {
        self.a * x * x + self.b * x + self.c * self.h()
    }

    /// Points on the arc over `x_range`, at most `spacing` apart along the
    /// arc and at least 16 of them, in global coordinates.
    pub fn sample(&self, spacing: f64) -> Vec<[f64; 2]> {
        let [x0, x1] = self.x_range;
        let slope = (2.0 * self.a * x0 + self.b).abs().max((2.0 * self.a * x1 + self.b).abs());
        let dx = spacing / (1.0 + slope * slope).sqrt();
        let k = (((x1 - x0) / dx).ceil() as usize).max(15);
        (0..=k)
            .map(|s| {
                let x = x0 + (x1 - x0) * s as f64 / k as f64;
                self.frame.to_global(x, self.q(x))
            })
            .collect()
    }

    /// Whether a global point lies on the U1 side of the arc's parabola.
    pub fn below(&self, x: f64, y: f64) -> bool {
        let l = self.frame.to_local(x, y);
        l[1] < self.q(l[0])
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "anchor": [self.anchor.0, self.anchor.1],
            "orientation": self.frame.orientation,
            "frame": self.frame.affine(),
            "a": self.a,
            "b": self.b,
            "c": self.c,
            "x_range": self.x_range,
            "l1": self.l1,
            "l2": self.l2,
            "residual": self.residual,
            "iters": self.iters,
            "det": self.det,
            "valid": self.valid,
        })
    }
}

fn unit_q(v: [f64; 3], xi: f64) -> f64 {
    v[0] * xi * xi + v[1] * xi + v[2]
}

/// Extremes of `q` over `[lo, hi]` in the unit frame.
fn unit_q_range(v: [f64; 3], lo: f64, hi: f64) -> (f64, f64) {
    let mut vals = vec![unit_q(v, lo), unit_q(v, hi)];
    if v[0] != 0.0 {
        let t = -v[1] / (2.0 * v[0]);
        if t > lo && t < hi {
            vals.push(unit_q(v, t));
        }
    }
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

fn along_across(o: Orientation, i: i64, j: i64) -> (i64, i64) {
    match o {
        Orientation::YofX => (i, j),
        Orientation::XofY => (j, i),
    }
}

fn cell_at(o: Orientation, along: i64, across: i64) -> (i64, i64) {
    along_across(o, along, across)
}

/// Orientation whose along axis follows the principal direction of the
/// irregular cells near the anchor; ties go to y-of-x.
fn preferred_orientation(part: &CellPartition, anchor: (usize, usize)) -> Orientation {
    let (ai, aj) = (anchor.0 as i64, anchor.1 as i64);
    let mut pts = Vec::new();
    for j in aj - 3..=aj + 3 {
        for i in ai - 3..=ai + 3 {
            if part.try_label(i, j) == Some(Label::U0) {
                pts.push((i as f64, j as f64));
            }
        }
    }
    let k = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |s, p| (s.0 + p.0 / k, s.1 + p.1 / k));
    let (mut cxx, mut cyy, mut cxy) = (0.0, 0.0, 0.0);
    for p in &pts {
        cxx += (p.0 - mx) * (p.0 - mx);
        cyy += (p.1 - my) * (p.1 - my);
        cxy += (p.0 - mx) * (p.1 - my);
    }
    let theta = 0.5 * (2.0 * cxy).atan2(cxx - cyy);
    if theta.cos().abs() >= theta.sin().abs() {
        Orientation::YofX
    } else {
        Orientation::XofY
    }
}

/// Least-squares line `across = m·along + k` through the centers of the
/// irregular cells near the anchor, in cell units.
fn local_line(part: &CellPartition, o: Orientation, anchor: (i64, i64)) -> Option<(f64, f64)> {
    let (ua, va) = anchor;
    let mut pts = Vec::new();
    for du in -3..=3 {
        for dv in -5..=5 {
            let (i, j) = cell_at(o, ua + du, va + dv);
            if part.try_label(i, j) == Some(Label::U0) {
                pts.push(((ua + du) as f64 - 0.5, (va + dv) as f64 - 0.5));
            }
        }
    }
    if pts.is_empty() {
        return None;
    }
    let k = pts.len() as f64;
    let (mu, mv) = pts.iter().fold((0.0, 0.0), |s, p| (s.0 + p.0 / k, s.1 + p.1 / k));
    let suu: f64 = pts.iter().map(|p| (p.0 - mu) * (p.0 - mu)).sum();
    let suv: f64 = pts.iter().map(|p| (p.0 - mu) * (p.1 - mv)).sum();
    let m = if suu > 0.0 { suv / suu } else { 0.0 };
    Some((m, mv - m * mu))
}

/// Whether U1 lies toward decreasing across index, by walking across the
/// band from the anchor's column and its two neighbors.
fn u1_below(part: &CellPartition, o: Orientation, anchor: (i64, i64)) -> Option<bool> {
    let (ua, va) = anchor;
    let mut votes = 0i32;
    for du in -1..=1 {
        for dir in [1i64, -1] {
            let found = (1..=12).find_map(|s| {
                let (i, j) = cell_at(o, ua + du, va + dir * s);
                match part.try_label(i, j) {
                    None => Some(None),
                    Some(Label::U0) => None,
                    Some(l) => Some(Some(l)),
                }
            });
            if let Some(Some(l)) = found {
                // U1 reached going up means U1 is above.
                let above = (l == Label::U1) == (dir == 1);
                votes += if above { -1 } else { 1 };
                break;
            }
        }
    }
    (votes != 0).then_some(votes > 0)
}

/// Candidate frames for an anchor, most preferred first.
fn candidate_frames(part: &CellPartition, anchor: (usize, usize)) -> Vec<(Frame, [f64; 3])> {
    let n = part.n();
    let first = preferred_orientation(part, anchor);
    let second = match first {
        Orientation::YofX => Orientation::XofY,
        Orientation::XofY => Orientation::YofX,
    };
    let mut out = Vec::new();
    for o in [first, second] {
        let (ua, va) = along_across(o, anchor.0 as i64, anchor.1 as i64);
        let Some((m, k)) = local_line(part, o, (ua, va)) else { continue };
        if m.abs() >= MAX_WINDOW_SLOPE {
            continue;
        }
        let Some(below) = u1_below(part, o, (ua, va)) else { continue };
        let flip = !below;
        for a_off in [ua - 3, ua - 2, ua - 4] {
            // Across coordinate of the line at the middle column's center.
            let v_mid = m * (a_off as f64 + 2.5) + k;
            let c_off = if flip { (v_mid + 5.0).round() as i64 } else { (v_mid - 5.0).round() as i64 };
            let frame = Frame {
                orientation: o,
                flip,
                a_off,
                c_off,
                n,
            };
            // Initial guess: the fitted line mapped into the unit frame.
            let h = frame.h();
            let eta = |xi: f64| {
                let u = (xi + a_off as f64) * h;
                let v = (m * (u / h) + k) * h;
                let p = frame.join(u, v);
                frame.to_local(p[0], p[1])[1] / h
            };
            let c0 = eta(0.0);
            let init = [0.0, eta(1.0) - c0, c0];
            out.push((frame, init));
        }
    }
    out
}

fn window_is_clean(part: &CellPartition, frame: &Frame) -> bool {
    let mut below_u1 = false;
    let mut above_u2 = false;
    for il in 2..=4 {
        for jl in 2..=9 {
            let (i, j) = frame.global_cell(il, jl);
            let Some(l) = part.try_label(i, j) else { return false };
            match (jl, l) {
                (2 | 3, Label::U2) | (8 | 9, Label::U1) => return false,
                (2 | 3, Label::U1) => below_u1 = true,
                (8 | 9, Label::U2) => above_u2 = true,
                _ => {}
            }
        }
    }
    below_u1 && above_u2
}

/// First window around `anchor` whose placement satisfies the clean-row
/// rule: all 24 cells inside the grid, no U2 cell in rows 2–3, no U1 cell
/// in rows 8–9, and at least one regular cell of the expected side in
/// each pair of rows.
pub fn build_window(part: &CellPartition, g: &CellGrid, anchor: (usize, usize)) -> Result<EdgeWindow> {
    candidate_frames(part, anchor)
        .into_iter()
        .filter(|(f, _)| window_is_clean(part, f))
        .find_map(|(f, _)| EdgeWindow::gather(g, f, anchor))
        .ok_or(Error::NoValidWindow(anchor.0, anchor.1))
}

fn solve_window(w: &EdgeWindow, init: [f64; 3]) -> Result<(NewtonSolution, LinearPiece, LinearPiece)> {
    let (l1, l2) = fit_linear_pieces(w);
    let sys = assemble_quadratic_system(w, &l1, &l2);
    let first = newton_solve(&sys, init, NEWTON_TOL, NEWTON_MAX_ITERS);
    let sol = match first {
        Ok(s) => s,
        Err(Error::SingularJacobian { det }) if sys.column_height_guess().is_none() => {
            return Err(Error::SingularJacobian { det })
        }
        Err(e) => match sys.column_height_guess() {
            Some(g) => newton_solve(&sys, g, NEWTON_TOL, NEWTON_MAX_ITERS).map_err(|_| e)?,
            None => return Err(e),
        },
    };
    Ok((sol, l1, l2))
}

fn make_arc(w: &EdgeWindow, sol: &NewtonSolution, l1: LinearPiece, l2: LinearPiece) -> QuadraticArc {
    let h = w.h();
    let n = w.frame.n as i64;
    let (first_along, _) = along_across(w.frame.orientation, w.frame.global_cell(2, 2).0, w.frame.global_cell(2, 2).1);
    let (last_along, _) = along_across(w.frame.orientation, w.frame.global_cell(4, 2).0, w.frame.global_cell(4, 2).1);
    let mut lo = 2.0;
    let mut hi = 3.0;
    if first_along == 1 {
        lo = 1.0 - BOUNDARY_EXTENSION;
    }
    if last_along == n {
        hi = 4.0 + BOUNDARY_EXTENSION;
    }
    let v = sol.coeffs;
    let (qmin, qmax) = unit_q_range(v, 2.0, 3.0);
    QuadraticArc {
        anchor: w.anchor,
        frame: w.frame,
        a: v[0] / h,
        b: v[1],
        c: v[2],
        x_range: [lo * h, hi * h],
        l1,
        l2,
        residual: sol.residual,
        iters: sol.iters,
        det: sol.det,
        valid: qmin > 3.0 && qmax < 7.0,
    }
}

/// Fits the edge model around one anchor, trying candidate windows in
/// order and re-centering a window vertically when the solved curve
/// leaves the band `(3, 7)` over columns 2–4.
pub fn solve_anchor(part: &CellPartition, g: &CellGrid, anchor: (usize, usize)) -> Result<QuadraticArc> {
    let mut last = Error::NoValidWindow(anchor.0, anchor.1);
    for (frame, init) in candidate_frames(part, anchor) {
        let mut frame = frame;
        let mut init = init;
        for _ in 0..=RECENTER_PASSES {
            if !window_is_clean(part, &frame) {
                break;
            }
            let Some(w) = EdgeWindow::gather(g, frame, anchor) else { break };
            match solve_window(&w, init) {
                Ok((sol, l1, l2)) => {
                    let (qmin, qmax) = unit_q_range(sol.coeffs, 1.0, 4.0);
                    if qmin > 3.0 && qmax < 7.0 {
                        return Ok(make_arc(&w, &sol, l1, l2));
                    }
                    let shift = (unit_q(sol.coeffs, 2.5) - 5.0).round() as i64;
                    if shift == 0 || !(qmin.is_finite() && qmax.is_finite()) {
                        last = Error::NoValidWindow(anchor.0, anchor.1);
                        break;
                    }
                    frame = frame.shifted(shift);
                    let c = sol.coeffs;
                    init = [c[0], c[1], c[2] - shift as f64];
                }
                Err(e) => {
                    last = e;
                    break;
                }
            }
        }
    }
    Err(last)
}

/// Arcs fitted along the irregular band, with the anchors that failed.
#[derive(Debug, Clone)]
pub struct ArcChain {
    pub arcs: Vec<QuadraticArc>,
    pub skipped: Vec<((usize, usize), Error)>,
    pub n: usize,
}

impl ArcChain {
    /// Sample spacing for the point set `G`: `h²`.
    pub fn spacing(&self) -> f64 {
        let h = 1.0 / self.n as f64;
        h * h
    }

    /// One polyline per arc.
    pub fn polylines(&self) -> Vec<Polyline> {
        let s = self.spacing();
        self.arcs.iter().map(|a| Polyline::open(a.sample(s))).collect()
    }

    /// The global point set `G`.
    pub fn points(&self) -> Vec<[f64; 2]> {
        let s = self.spacing();
        self.arcs.iter().flat_map(|a| a.sample(s)).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "n": self.n,
            "arcs": self.arcs.iter().map(|a| a.to_json()).collect::<Vec<_>>(),
            "skipped": self.skipped.iter().map(|(a, e)| serde_json::json!({
                "anchor": [a.0, a.1],
                "reason": e.to_string(),
            })).collect::<Vec<_>>(),
        })
    }

    /// `G` as `x,y` lines.
    pub fn points_csv(&self) -> String {
        points_to_csv(&self.points())
    }

    /// One-line-per-reason summary of skipped anchors.
    pub fn skip_summary(&self) -> String {
        let mut counts: Vec<(String, usize)> = Vec::new();
        for (_, e) in &self.skipped {
            let key = format!("{e:?}").split(['(', ' ', '{']).next().unwrap_or("").to_string();
            match counts.iter_mut().find(|c| c.0 == key) {
                Some(c) => c.1 += 1,
                None => counts.push((key, 1)),
            }
        }
        let mut s = String::new();
        for (k, c) in counts {
            let _ = write!(s, "{k}: {c}; ");
        }
        s
    }
}

/// Solves the edge model at every irregular cell, in row-major anchor
/// order, keeps one arc per distinct window and then every `stride`-th
/// of those.
pub fn chain_arcs(part: &CellPartition, g: &CellGrid, stride: usize) -> Result<ArcChain> {
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be positive".into()));
    }
    if g.n() != part.n() {
        return Err(Error::InvalidArgument("grid and partition sizes differ".into()));
    }
    let anchors = part.cells(Label::U0);
    let results: Vec<Result<QuadraticArc>> = anchors.par_iter().map(|&a| solve_anchor(part, g, a)).collect();
    let mut seen = std::collections::HashSet::new();
    let mut arcs = Vec::new();
    let mut skipped = Vec::new();
    for (a, r) in anchors.into_iter().zip(results) {
        match r {
            Ok(arc) => {
                if seen.insert(arc.frame) {
                    arcs.push(arc);
                }
            }
            Err(e) => {
                debug!("anchor ({}, {}) skipped: {e}", a.0, a.1);
                skipped.push((a, e));
            }
        }
    }
    let arcs: Vec<QuadraticArc> = arcs.into_iter().step_by(stride).collect();
    if arcs.is_empty() {
        return Err(Error::EmptyChain);
    }
    let chain = ArcChain { arcs, skipped, n: g.n() };
    if !chain.skipped.is_empty() {
        debug!("{} anchors skipped: {}", chain.skipped.len(), chain.skip_summary());
    }
    Ok(chain)
}
