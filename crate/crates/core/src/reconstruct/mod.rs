//! Piecewise reconstruction: split the cells by the sign of the implicit
//! curve, extend each side's cell averages across the curve and beyond
//! the domain by one-dimensional cubic extrapolation, and quasi-interpolate
//! each side with `Q_3`.
//!
//! Side 1 is where the curve spline is `>= 0` (side U1 of the partition),
//! side 2 where it is negative.

mod lsq;
mod metrics;

use log::debug;
use rayon::prelude::*;
use serde::Serialize;

use crate::curve::ImplicitCurve;
use crate::error::{Error, Result};
use crate::grid::CellGrid;
use crate::quadrature::LevelSet;
use crate::spline::{quasi_interpolant, TensorSpline};

pub use lsq::{fit_cell_average_ls, LS_LAMBDA};
pub use metrics::{field_error, graph_hausdorff, FieldRegion};

/// Cells of padding around the grid: `Q_3` coefficients `-1..=n+2` read
/// cells two further out.
pub const PAD: i64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    One,
    Two,
}

/// Dense storage for cell indices `1-PAD ..= n+PAD` on both axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Padded<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Clone> Padded<T> {
    pub fn new(n: usize, fill: T) -> Self {
        let w = n + 2 * PAD as usize;
        Padded { n, data: vec![fill; w * w] }
    }

    fn width(&self) -> i64 {
        self.n as i64 + 2 * PAD
    }

    pub fn contains(&self, i: i64, j: i64) -> bool {
        let lo = 1 - PAD;
        let hi = self.n as i64 + PAD;
        (lo..=hi).contains(&i) && (lo..=hi).contains(&j)
    }

    #[inline]
    fn slot(&self, i: i64, j: i64) -> usize {
        ((j - 1 + PAD) * self.width() + (i - 1 + PAD)) as usize
    }

    pub fn get(&self, i: i64, j: i64) -> Option<&T> {
        self.contains(i, j).then(|| &self.data[self.slot(i, j)])
    }

    pub fn set(&mut self, i: i64, j: i64, v: T) {
        let s = self.slot(i, j);
        self.data[s] = v;
    }

    /// All indices in row-major order.
    pub fn indices(&self) -> impl Iterator<Item = (i64, i64)> {
        let lo = 1 - PAD;
        let hi = self.n as i64 + PAD;
        (lo..=hi).flat_map(move |j| (lo..=hi).map(move |i| (i, j)))
    }
}

/// Per-side validity from the five-point sign test.
#[derive(Debug, Clone, PartialEq)]
pub struct CellValidity {
    pub n: usize,
    /// Row-major, rows by `j`.
    pub side1: Vec<bool>,
    pub side2: Vec<bool>,
}

impl CellValidity {
    /// All cells valid for side 1.
    pub fn single(n: usize) -> Self {
        CellValidity {
            n,
            side1: vec![true; n * n],
            side2: vec![false; n * n],
        }
    }

    pub fn valid(&self, side: Side, i: usize, j: usize) -> bool {
        let k = (j - 1) * self.n + (i - 1);
        match side {
            Side::One => self.side1[k],
            Side::Two => self.side2[k],
        }
    }

    /// Whether the cell is valid for neither side.
    pub fn crossed(&self, i: usize, j: usize) -> bool {
        !self.valid(Side::One, i, j) && !self.valid(Side::Two, i, j)
    }

    pub fn count(&self, side: Side) -> usize {
        match side {
            Side::One => self.side1.iter().filter(|&&v| v).count(),
            Side::Two => self.side2.iter().filter(|&&v| v).count(),
        }
    }
}

/// A cell is valid for side 1 when the curve level is `>= 0` at its four
/// corners and `> 0` at its center, and valid for side 2 when it is `<= 0`
/// at the corners and `< 0` at the center.
pub fn classify_cells(level: &dyn LevelSet, n: usize) -> CellValidity {
    let h = 1.0 / n as f64;
    let flags: Vec<(bool, bool)> = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let (i, j) = ((k % n) as f64, (k / n) as f64);
            let pts = [
                (i * h, j * h),
                ((i + 1.0) * h, j * h),
                (i * h, (j + 1.0) * h),
                ((i + 1.0) * h, (j + 1.0) * h),
                ((i + 0.5) * h, (j + 0.5) * h),
            ];
            // A zero sample touches the curve and is compatible with both
            // sides; the center decides.
            let s: Vec<f64> = pts.iter().map(|p| level.level(p.0, p.1)).collect();
            let center = s[4];
            (s.iter().all(|&v| v >= 0.0) && center > 0.0, s.iter().all(|&v| v <= 0.0) && center < 0.0)
        })
        .collect();
    CellValidity {
        n,
        side1: flags.iter().map(|f| f.0).collect(),
        side2: flags.iter().map(|f| f.1).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    #[serde(rename = "+x")]
    PlusX,
    #[serde(rename = "-x")]
    MinusX,
    #[serde(rename = "+y")]
    PlusY,
    #[serde(rename = "-y")]
    MinusY,
}

impl Direction {
    /// Tie-breaking order.
    pub const ALL: [Direction; 4] = [Direction::PlusX, Direction::MinusX, Direction::PlusY, Direction::MinusY];

    fn step(self) -> (i64, i64) {
        match self {
            Direction::PlusX => (1, 0),
            Direction::MinusX => (-1, 0),
            Direction::PlusY => (0, 1),
            Direction::MinusY => (0, -1),
        }
    }
}

/// How one extended cell was filled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Provenance {
    pub cell: (i64, i64),
    pub direction: Direction,
    /// Offset of the first source cell from the target.
    pub start: i64,
    /// Polynomial degree, one less than the number of source cells.
    pub degree: usize,
    pub pass: usize,
}

/// One side's cell averages: valid originals plus filled cells.
#[derive(Debug, Clone)]
pub struct ExtendedSide {
    pub n: usize,
    /// `None` where the value is neither original nor needed.
    pub values: Padded<Option<f64>>,
    pub provenance: Vec<Provenance>,
}

impl ExtendedSide {
    pub fn get(&self, i: i64, j: i64) -> Option<f64> {
        self.values.get(i, j).copied().flatten()
    }

    /// Values over the padded index range, missing ones as NaN, as CSV
    /// rows `i,j,value`.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::from("i,j,value\n");
        for (i, j) in self.values.indices() {
            if let Some(v) = self.get(i, j) {
                writeln!(s, "{i},{j},{}", crate::grid::fmt17(v)).unwrap();
            }
        }
        s
    }
}

/// Lagrange weights extrapolating values at offsets `start..start+len` to 0.
fn extrapolation_weights(start: i64, len: usize) -> Vec<f64> {
    let xs: Vec<f64> = (0..len).map(|r| (start + r as i64) as f64).collect();
    (0..len)
        .map(|r| {
            let mut w = 1.0;
            for (s, &xs_s) in xs.iter().enumerate() {
                if s != r {
                    w *= (0.0 - xs_s) / (xs[r] - xs_s);
                }
            }
            w
        })
        .collect()
}

/// Fills every needed cell that is not valid for the side.
///
/// For each cell the nearest run of four consecutive available cells along
/// the four axis directions is chosen (ties in the order +x, −x, +y, −y)
/// and the cubic through them is extrapolated, with the cell index as
/// abscissa. Filling proceeds as a front: the first pass uses only valid
/// cells, each pass fills only the cells whose run starts closest, and
/// later passes may draw on cells filled before them. When no cell has a
/// run, the pass is retried with runs of three, two and finally one cell.
pub fn extend_side(g: &CellGrid, valid: &dyn Fn(usize, usize) -> bool, need: &Padded<bool>) -> Result<ExtendedSide> {
    let n = g.n();
    let mut values: Padded<Option<f64>> = Padded::new(n, None);
    let mut avail: Padded<bool> = Padded::new(n, false);
    for j in 1..=n {
        for i in 1..=n {
            if valid(i, j) {
                values.set(i as i64, j as i64, Some(g.get(i, j)));
                avail.set(i as i64, j as i64, true);
            }
        }
    }
    let mut remaining: Vec<(i64, i64)> = need
        .indices()
        .filter(|&(i, j)| *need.get(i, j).unwrap() && !*avail.get(i, j).unwrap())
        .collect();
    let max_reach = n as i64 + 2 * PAD;
    let mut provenance = Vec::new();
    let mut pass = 0;
    let mut run = 4;
    while !remaining.is_empty() {
        pass += 1;
        let fills: Vec<Option<(f64, Provenance)>> = remaining
            .par_iter()
            .map(|&(i, j)| {
                let mut best: Option<(i64, Direction)> = None;
                for dir in Direction::ALL {
                    let (di, dj) = dir.step();
                    let hit = (1..=max_reach).find(|&k| {
                        (0..run as i64).all(|r| *avail.get(i + di * (k + r), j + dj * (k + r)).unwrap_or(&false))
                    });
                    if let Some(k) = hit {
                        if best.map_or(true, |(bk, _)| k < bk) {
                            best = Some((k, dir));
                        }
                    }
                }
                best.map(|(k, dir)| {
                    let (di, dj) = dir.step();
                    let w = extrapolation_weights(k, run);
                    let v = (0..run)
                        .map(|r| {
                            let s = k + r as i64;
                            w[r] * values.get(i + di * s, j + dj * s).copied().flatten().unwrap()
                        })
                        .sum();
                    let p = Provenance {
                        cell: (i, j),
                        direction: dir,
                        start: k,
                        degree: run - 1,
                        pass,
                    };
                    (v, p)
                })
            })
            .collect();
        // Only the cells closest to their source run are filled in this
        // pass; the rest may find a nearer run once these are available.
        let closest = fills.iter().flatten().map(|(_, p)| p.start).min();
        let mut left = Vec::new();
        let mut progressed = false;
        for (cell, fill) in remaining.into_iter().zip(fills) {
            match fill {
                Some((v, p)) if Some(p.start) == closest => {
                    values.set(cell.0, cell.1, Some(v));
                    avail.set(cell.0, cell.1, true);
                    provenance.push(p);
                    progressed = true;
                }
                _ => left.push(cell),
            }
        }
        remaining = left;
        if progressed {
            run = 4;
        } else if run > 1 {
            run -= 1;
            debug!("extension pass {pass} stalled, retrying with runs of {run}");
        } else {
            let (i, j) = remaining[0];
            return Err(Error::InsufficientValidRun(i, j));
        }
    }
    Ok(ExtendedSide { n, values, provenance })
}

/// Cells whose data some nonzero `Q_3` coefficient on the side's region
/// reads, and the coefficients themselves.
///
/// The region is approximated by the side's valid cells plus the crossed
/// cells, grown by one cell. A point in cell `i` sees coefficients
/// `i-2..=i+2`, and coefficient `k` reads cells `k-2..=k+2`.
pub fn stencil_need(validity: &CellValidity, side: Side) -> (Padded<bool>, Padded<bool>) {
    let n = validity.n;
    let mut touched = Padded::new(n, false);
    for j in 1..=n {
        for i in 1..=n {
            if validity.valid(side, i, j) || validity.crossed(i, j) {
                for dj in -1..=1 {
                    for di in -1..=1 {
                        let (a, b) = (i as i64 + di, j as i64 + dj);
                        if (1..=n as i64).contains(&a) && (1..=n as i64).contains(&b) {
                            touched.set(a, b, true);
                        }
                    }
                }
            }
        }
    }
    let dilate = |src: &Padded<bool>, r: i64, lo: i64, hi: i64| {
        let mut out = Padded::new(n, false);
        for (i, j) in src.indices() {
            if *src.get(i, j).unwrap() {
                for b in (j - r).max(lo)..=(j + r).min(hi) {
                    for a in (i - r).max(lo)..=(i + r).min(hi) {
                        out.set(a, b, true);
                    }
                }
            }
        }
        out
    };
    let coeffs = dilate(&touched, 2, -1, n as i64 + 2);
    let cells = dilate(&coeffs, 2, 1 - PAD, n as i64 + PAD);
    (cells, coeffs)
}

/// One side of the reconstruction.
#[derive(Debug, Clone)]
pub struct SideModel {
    pub spline: TensorSpline,
    /// Extended data; absent for the least-squares path.
    pub extended: Option<ExtendedSide>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReconMethod {
    Quasi,
    Ls,
}

/// `f̃ = Q_3(f̄_1)` where the curve level is `>= 0`, `Q_3(f̄_2)` elsewhere.
#[derive(Debug, Clone)]
pub struct PiecewiseReconstruction {
    pub n: usize,
    pub method: ReconMethod,
    pub curve: Option<ImplicitCurve>,
    pub validity: CellValidity,
    pub side1: Option<SideModel>,
    pub side2: Option<SideModel>,
    /// Euclidean norm of the cell-average residual (least-squares path).
    pub residual: Option<f64>,
}

impl PiecewiseReconstruction {
    /// Side assigned to a point: 1 where the level is `>= 0` or there is no
    /// curve.
    pub fn side_at(&self, x: f64, y: f64) -> Side {
        match &self.curve {
            Some(c) if c.level(x, y) < 0.0 => Side::Two,
            _ => Side::One,
        }
    }

    pub fn model(&self, side: Side) -> Option<&SideModel> {
        match side {
            Side::One => self.side1.as_ref(),
            Side::Two => self.side2.as_ref(),
        }
    }

    /// Evaluates `f̃` on `[0,1]²`.
    pub fn evaluate(&self, x: f64, y: f64) -> Result<f64> {
        if !((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y)) {
            return Err(Error::OutOfDomain(x, y));
        }
        let side = self.side_at(x, y);
        let model = self
            .model(side)
            .or(self.side1.as_ref())
            .or(self.side2.as_ref())
            .expect("reconstruction has at least one side");
        Ok(model.spline.eval(x, y))
    }

    /// Provenance and flags as JSON.
    pub fn manifest(&self) -> serde_json::Value {
        let prov = |m: &Option<SideModel>| {
            m.as_ref()
                .and_then(|s| s.extended.as_ref())
                .map(|e| serde_json::to_value(&e.provenance).unwrap_or_default())
                .unwrap_or(serde_json::Value::Null)
        };
        serde_json::json!({
            "n": self.n,
            "method": self.method,
            "membership": "side1 where curve level >= 0 (U1 side), side2 where < 0",
            "valid_cells": [self.validity.count(Side::One), self.validity.count(Side::Two)],
            "residual": self.residual,
            "provenance_side1": prov(&self.side1),
            "provenance_side2": prov(&self.side2),
        })
    }
}

fn quasi_side(g: &CellGrid, validity: &CellValidity, side: Side) -> Result<Option<SideModel>> {
    if validity.count(side) == 0 {
        return Ok(None);
    }
    let (cells, coeffs) = stencil_need(validity, side);
    let ext = extend_side(g, &|i, j| validity.valid(side, i, j), &cells)?;
    let fetch = |i: i64, j: i64| ext.get(i, j);
    let mask = |k1: i64, k2: i64| *coeffs.get(k1, k2).unwrap_or(&false);
    let spline = quasi_interpolant(g.n(), 3, &fetch, Some(&mask))?;
    debug!("side {side:?}: {} cells extended", ext.provenance.len());
    Ok(Some(SideModel {
        spline,
        extended: Some(ext),
    }))
}

/// Builds the reconstruction from cell averages and, when the data has a
/// jump, the implicit curve.
pub fn build_reconstruction(g: &CellGrid, curve: Option<ImplicitCurve>) -> Result<PiecewiseReconstruction> {
    let n = g.n();
    let validity = match &curve {
        Some(c) => classify_cells(c, n),
        None => CellValidity::single(n),
    };
    let side1 = quasi_side(g, &validity, Side::One)?;
    let side2 = quasi_side(g, &validity, Side::Two)?;
    if side1.is_none() && side2.is_none() {
        return Err(Error::InsufficientValidRun(1, 1));
    }
    Ok(PiecewiseReconstruction {
        n,
        method: ReconMethod::Quasi,
        curve,
        validity,
        side1,
        side2,
        residual: None,
    })
}
