//! Implicit spline approximations of the jump curve.
//!
//! The first stage fits a bicubic spline by least squares to a signed
//! distance built from the cell partition. The enhanced stage samples the
//! signed distance to the arc point set `G` on a coarse mesh and fits it
//! by quasi-interpolation. In both, side U1 is positive.

use log::debug;
use rayon::prelude::*;
use serde::Serialize;

use crate::edge::ArcChain;
use crate::error::{Error, Result};
use crate::geometry::{polylines_to_csv, PointIndex, Polyline, SegmentIndex};
use crate::grid::{cell_center, containing_index};
use crate::quadrature::LevelSet;
use crate::signature::{CellPartition, Label};
use crate::spline::{fit_least_squares, quasi_fit_on_mesh, zero_level_curve, TensorSpline};

pub use crate::geometry::{curve_distance, CurveMetrics, CurveTarget};

/// Default knot spacing of the first-stage fit.
pub const FIRST_STAGE_SPACING: f64 = 0.25;
/// Tikhonov weight of the first-stage fit.
pub const FIRST_STAGE_LAMBDA: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveStage {
    First,
    Enhanced,
}

/// How the enhanced stage turns mesh values into a spline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeshFit {
    QuasiInterpolation,
    LeastSquares,
}

/// Bicubic spline whose zero set approximates the curve, with the
/// extracted polylines.
#[derive(Debug, Clone)]
pub struct ImplicitCurve {
    pub spline: TensorSpline,
    pub stage: CurveStage,
    pub polylines: Vec<Polyline>,
    /// Cell grid size for the first stage, mesh size for the enhanced one.
    pub mesh: usize,
}

impl ImplicitCurve {
    /// Wraps a spline and extracts its zero level at resolution `m`.
    pub fn from_spline(spline: TensorSpline, stage: CurveStage, mesh: usize, m: usize) -> Result<Self> {
        let polylines = zero_level_curve(&spline, m)?;
        Ok(ImplicitCurve {
            spline,
            stage,
            polylines,
            mesh,
        })
    }

    pub fn level(&self, x: f64, y: f64) -> f64 {
        self.spline.eval(x, y)
    }

    pub fn to_csv(&self) -> String {
        polylines_to_csv(&self.polylines)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "stage": self.stage,
            "mesh": self.mesh,
            "polylines": self.polylines.len(),
            "spline": self.spline.to_json(),
        })
    }
}

impl LevelSet for ImplicitCurve {
    fn level(&self, x: f64, y: f64) -> f64 {
        self.spline.eval(x, y)
    }

    fn gradient(&self, x: f64, y: f64) -> [f64; 2] {
        self.spline.gradient(x, y)
    }

    fn may_cross(&self, rect: &crate::quadrature::Rect) -> bool {
        self.spline.may_cross(rect)
    }
}

fn contour_resolution(k: usize) -> usize {
    (4 * k).max(256)
}

/// First-stage curve: U1 centers carry `dist(p, U0) + h`, U2 centers
/// `-(dist(p, U0) + h)`, distances taken to the nearest U0 cell center,
/// fitted by a bicubic least-squares spline with knot spacing `d`.
pub fn first_stage_curve(part: &CellPartition, d: f64) -> Result<ImplicitCurve> {
    let n = part.n();
    let h = part.h();
    let center = |(i, j): (usize, usize)| {
        let c = cell_center(h, i as i64, j as i64);
        [c.0, c.1]
    };
    let u0: Vec<[f64; 2]> = part.cells(Label::U0).into_iter().map(center).collect();
    if u0.is_empty() {
        return Err(Error::EmptyContour);
    }
    let index = PointIndex::new(u0);
    let mut samples = Vec::with_capacity(n * n);
    for (label, sign) in [(Label::U1, 1.0), (Label::U2, -1.0)] {
        let cells = part.cells(label);
        if cells.is_empty() {
            return Err(Error::EmptyContour);
        }
        samples.par_extend(cells.into_par_iter().map(|c| {
            let p = center(c);
            let dist = index.nearest(p).map_or(0.0, |r| r.1);
            (p[0], p[1], sign * (dist + h))
        }));
    }
    let fit = fit_least_squares(&samples, 3, d, 0.0, FIRST_STAGE_LAMBDA)?;
    debug!("first-stage fit: residual {:e}, condition {:e}", fit.residual, fit.condition);
    ImplicitCurve::from_spline(fit.spline, CurveStage::First, n, contour_resolution(n))
}

/// Mesh size `ceil(mult · h^(-3/4))` of the enhanced stage, at least 4.
pub fn enhanced_mesh_size(n: usize, mult: f64) -> usize {
    ((mult * (n as f64).powf(0.75)).ceil() as usize).max(4)
}

/// Signed distance to `G` on the mesh `k/(m-1)`.
///
/// Within `3h` of `G`, and in irregular cells, the sign comes from the
/// side of the nearest arc's parabola; elsewhere from the label of the
/// containing cell.
pub fn signed_distance_mesh(chain: &ArcChain, part: &CellPartition, m: usize) -> Result<Vec<f64>> {
    if chain.arcs.is_empty() {
        return Err(Error::EmptyChain);
    }
    let n = part.n();
    let h = part.h();
    let index = SegmentIndex::new(&chain.polylines());
    let d = 1.0 / (m - 1) as f64;
    Ok((0..m * m)
        .into_par_iter()
        .map(|k| {
            let p = [(k % m) as f64 * d, (k / m) as f64 * d];
            let (dist, _, owner) = index.nearest(p).expect("non-empty arc set");
            let label = part.label(containing_index(p[0], h, n), containing_index(p[1], h, n));
            let positive = if dist <= 3.0 * h || label == Label::U0 {
                chain.arcs[owner].below(p[0], p[1])
            } else {
                label == Label::U1
            };
            if positive {
                dist
            } else {
                -dist
            }
        })
        .collect())
}

/// Enhanced curve from the arc point set: signed distance to `G` on a
/// mesh of [`enhanced_mesh_size`] points per axis, fitted by bicubic
/// quasi-interpolation (or least squares on the same mesh), zero level
/// extracted at resolution `max(4m, 256)`.
pub fn enhanced_curve(chain: &ArcChain, part: &CellPartition, mesh_mult: f64, fit: MeshFit) -> Result<ImplicitCurve> {
    if !(mesh_mult > 0.0) {
        return Err(Error::InvalidArgument(format!("mesh multiplier {mesh_mult} must be positive")));
    }
    let m = enhanced_mesh_size(part.n(), mesh_mult);
    let values = signed_distance_mesh(chain, part, m)?;
    let spline = match fit {
        MeshFit::QuasiInterpolation => quasi_fit_on_mesh(&values, m)?,
        MeshFit::LeastSquares => {
            let d = 1.0 / (m - 1) as f64;
            let samples: Vec<(f64, f64, f64)> = values
                .iter()
                .enumerate()
                .map(|(k, &v)| ((k % m) as f64 * d, (k / m) as f64 * d, v))
                .collect();
            fit_least_squares(&samples, 3, d, 0.0, FIRST_STAGE_LAMBDA)?.spline
        }
    };
    ImplicitCurve::from_spline(spline, CurveStage::Enhanced, m, contour_resolution(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{discretize, Interface, TestFunction};
    use crate::edge::chain_arcs;
    use crate::signature::{compute_signature, detect, estimate_delta, Threshold};

    fn partition(f: &TestFunction, n: usize) -> (crate::grid::CellGrid, CellPartition) {
        let g = discretize(f, n, 6).unwrap();
        let sig = compute_signature(&g).unwrap();
        let delta = estimate_delta(&g, 0.04).unwrap();
        let p = detect(&g, &sig, Threshold::Theoretical { delta }).unwrap();
        (g, p)
    }

    #[test]
    fn first_stage_vertical_step() {
        let f = TestFunction::step();
        let (_, part) = partition(&f, 40);
        let c = first_stage_curve(&part, FIRST_STAGE_SPACING).unwrap();
        let line = Interface::Line { nx: 1.0, ny: 0.0, c: -0.5 };
        let m = curve_distance(&c.polylines, CurveTarget::Analytic(&line), 0.0);
        assert!(m.hausdorff <= 2.0 / 40.0, "{m:?}");
    }

    #[test]
    fn first_stage_signs_match_labels() {
        let f = TestFunction::closed_circle();
        let (_, part) = partition(&f, 40);
        let c = first_stage_curve(&part, FIRST_STAGE_SPACING).unwrap();
        let h = part.h();
        for (label, sign) in [(Label::U1, 1.0), (Label::U2, -1.0)] {
            let cells = part.cells(label);
            let ok = cells
                .iter()
                .filter(|&&(i, j)| {
                    let p = cell_center(h, i as i64, j as i64);
                    sign * c.level(p.0, p.1) > 0.0
                })
                .count();
            assert!(ok as f64 >= 0.99 * cells.len() as f64);
        }
        let circle = f.interface.unwrap();
        let m = curve_distance(&c.polylines, CurveTarget::Analytic(&circle), 0.0);
        assert!(m.hausdorff <= 3.0 * h, "{m:?}");
        assert!(c.polylines.iter().all(|l| l.closed));
    }

    #[test]
    fn enhanced_beats_first_stage_on_the_circle() {
        let f = TestFunction::closed_circle();
        let (g, part) = partition(&f, 40);
        let chain = chain_arcs(&part, &g, 1).unwrap();
        let e = enhanced_curve(&chain, &part, 1.0, MeshFit::QuasiInterpolation).unwrap();
        let first = first_stage_curve(&part, FIRST_STAGE_SPACING).unwrap();
        let circle = f.interface.unwrap();
        let me = curve_distance(&e.polylines, CurveTarget::Analytic(&circle), 0.0);
        let mf = curve_distance(&first.polylines, CurveTarget::Analytic(&circle), 0.0);
        assert!(me.hausdorff < mf.hausdorff, "{me:?} {mf:?}");
        for l in &e.polylines {
            for p in &l.points {
                assert!(e.level(p[0], p[1]).abs() <= 1e-10);
            }
        }
    }
}
