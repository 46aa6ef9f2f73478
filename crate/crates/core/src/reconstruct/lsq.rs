//! Cell-average least squares: bicubic B-splines restricted to each side,
//! fitted so their exact cell averages match the data.

use log::debug;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{classify_cells, CellValidity, PiecewiseReconstruction, ReconMethod, Side, SideModel};
use crate::curve::ImplicitCurve;
use crate::error::{Error, Result};
use crate::grid::CellGrid;
use crate::quadrature::{cut_cell_rule, tensor_rule, CutOptions, GaussLegendre, Rect};
use crate::spline::{axis_basis, TensorSpline};

/// Tikhonov weight relative to the mean diagonal of the normal matrix.
pub const LS_LAMBDA: f64 = 1e-14;

struct Unknowns {
    /// Per side, slot of each lattice coefficient or `usize::MAX`.
    slot: [Vec<usize>; 2],
    len: usize,
}

fn side_index(s: Side) -> usize {
    match s {
        Side::One => 0,
        Side::Two => 1,
    }
}

/// Fits `f̃ = Σ a_k B_k 1_{Ω̃1} + Σ b_k B_k 1_{Ω̃2}` with bicubic B-splines of
/// knot spacing `d` (knots on multiples of `d`) by minimizing the squared
/// misfit of exact cell averages over all cells.
///
/// Averages over cells crossed by the curve are integrated with the
/// adaptive cut-cell rule; the others with a tensor Gauss rule, which is
/// exact for the bicubic pieces.
pub fn fit_cell_average_ls(g: &CellGrid, curve: Option<ImplicitCurve>, d: f64) -> Result<PiecewiseReconstruction> {
    let n = g.n();
    let h = g.h();
    let template = TensorSpline::covering_unit_square(3, d, 0.0)?;
    let c = template.count;
    let validity = match &curve {
        Some(cv) => classify_cells(cv, n),
        None => CellValidity::single(n),
    };

    // Active basis functions: support meets a cell the side touches.
    let mut active = [vec![false; c * c], vec![false; c * c]];
    for j in 1..=n {
        for i in 1..=n {
            let rect = Rect::new((i - 1) as f64 * h, i as f64 * h, (j - 1) as f64 * h, j as f64 * h);
            let (a1, b1) = template.support_range(rect.x0, rect.x1);
            let (a2, b2) = template.support_range(rect.y0, rect.y1);
            for side in [Side::One, Side::Two] {
                if validity.valid(side, i, j) || validity.crossed(i, j) {
                    for k2 in a2.max(template.k_min)..=b2.min(template.k_max()) {
                        for k1 in a1.max(template.k_min)..=b1.min(template.k_max()) {
                            let s = ((k2 - template.k_min) as usize) * c + (k1 - template.k_min) as usize;
                            active[side_index(side)][s] = true;
                        }
                    }
                }
            }
        }
    }
    let mut len = 0;
    let slot = active.map(|a| {
        a.iter()
            .map(|&on| {
                if on {
                    len += 1;
                    len - 1
                } else {
                    usize::MAX
                }
            })
            .collect::<Vec<_>>()
    });
    let unknowns = Unknowns { slot, len };
    if unknowns.len == 0 {
        return Err(Error::SingularSystem { condition: f64::INFINITY });
    }

    let gl = GaussLegendre::new(4);
    let rows: Vec<Vec<(usize, f64)>> = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k % n + 1, k / n + 1);
            let rect = Rect::new((i - 1) as f64 * h, i as f64 * h, (j - 1) as f64 * h, j as f64 * h);
            let points = match (&curve, validity.valid(Side::One, i, j), validity.valid(Side::Two, i, j)) {
                (_, true, _) => tensor_rule(&rect, &gl, false),
                (_, _, true) => tensor_rule(&rect, &gl, true),
                (Some(cv), _, _) => cut_cell_rule(cv, &rect, &gl, CutOptions::default()).0,
                (None, _, _) => tensor_rule(&rect, &gl, false),
            };
            let mut row: Vec<(usize, f64)> = Vec::new();
            for p in points {
                // Cut-cell nodes are tagged negative where the level is < 0.
                let side = if p.negative { 1 } else { 0 };
                let bx = axis_basis(3, template.param(p.x));
                let by = axis_basis(3, template.param(p.y));
                for ry in 0..4 {
                    let k2 = by.first - ry as i64 - template.k_min;
                    for rx in 0..4 {
                        let k1 = bx.first - rx as i64 - template.k_min;
                        if k1 < 0 || k2 < 0 || k1 >= c as i64 || k2 >= c as i64 {
                            continue;
                        }
                        let s = unknowns.slot[side][k2 as usize * c + k1 as usize];
                        let w = p.w * bx.values[rx] * by.values[ry] / (h * h);
                        if s != usize::MAX && w != 0.0 {
                            match row.iter_mut().find(|e| e.0 == s) {
                                Some(e) => e.1 += w,
                                None => row.push((s, w)),
                            }
                        }
                    }
                }
            }
            row
        })
        .collect();

    let dim = unknowns.len;
    let mut ata = DMatrix::<f64>::zeros(dim, dim);
    let mut atb = DVector::<f64>::zeros(dim);
    for (k, row) in rows.iter().enumerate() {
        let v = g.values()[k];
        for &(p, wp) in row {
            atb[p] += wp * v;
            for &(q, wq) in row {
                ata[(p, q)] += wp * wq;
            }
        }
    }
    let mean_diag = (0..dim).map(|k| ata[(k, k)]).sum::<f64>() / dim as f64;
    let lambda = LS_LAMBDA * mean_diag;
    for k in 0..dim {
        ata[(k, k)] += lambda;
    }
    let diag_max = (0..dim).map(|k| ata[(k, k)]).fold(0.0, f64::max);
    let diag_min = (0..dim).map(|k| ata[(k, k)]).fold(f64::INFINITY, f64::min);
    let chol = ata.cholesky().ok_or(Error::SingularSystem {
        condition: diag_max / diag_min,
    })?;
    let sol = chol.solve(&atb);
    let residual = rows
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let fit: f64 = row.iter().map(|&(p, w)| w * sol[p]).sum();
            (fit - g.values()[k]).powi(2)
        })
        .sum::<f64>()
        .sqrt();
    debug!("cell-average least squares: {dim} unknowns, residual {residual:e}");

    let build = |side: Side| -> Option<SideModel> {
        let slots = &unknowns.slot[side_index(side)];
        if slots.iter().all(|&s| s == usize::MAX) {
            return None;
        }
        let mut spline = template.clone();
        for (k, &s) in slots.iter().enumerate() {
            if s != usize::MAX {
                spline.coeff[k] = sol[s];
            }
        }
        Some(SideModel { spline, extended: None })
    };
    let side1 = build(Side::One);
    let side2 = if curve.is_some() { build(Side::Two) } else { None };
    Ok(PiecewiseReconstruction {
        n,
        method: ReconMethod::Ls,
        curve,
        validity,
        side1,
        side2,
        residual: Some(residual),
    })
}
