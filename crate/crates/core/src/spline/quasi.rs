//! Quasi-interpolants: `Q_p` from cell averages and a bicubic fit from
//! point values on a uniform mesh.

use rayon::prelude::*;

use super::basis::TensorSpline;
use super::coeffs::{local_op_l, quasi_coeffs};
use crate::error::{Error, Result};

/// `Q_p` on an `n × n` grid: degree-`p` spline with knot spacing `h`,
/// basis `k` centered at the center of cell `k`, coefficient `L_{p+1}` at
/// cell `k`.
///
/// `fetch` supplies cell averages for any needed index, including
/// extended cells outside `1..=n`. When `mask` is given only coefficients
/// it accepts are computed; the rest stay zero.
pub fn quasi_interpolant(
    n: usize,
    p: usize,
    fetch: &(dyn Fn(i64, i64) -> Option<f64> + Sync),
    mask: Option<&(dyn Fn(i64, i64) -> bool + Sync)>,
) -> Result<TensorSpline> {
    if !(1..=4).contains(&p) {
        return Err(Error::InvalidArgument(format!("Q_p needs 1 <= p <= 4, got {p}")));
    }
    let h = 1.0 / n as f64;
    let table = quasi_coeffs(p + 1)?;
    let mut spline = TensorSpline::covering_unit_square(p, h, -0.5 * h)?;
    let (k_min, count) = (spline.k_min, spline.count);
    let rows: Vec<Vec<f64>> = (0..count)
        .into_par_iter()
        .map(|b| {
            let k2 = k_min + b as i64;
            (0..count)
                .map(|a| {
                    let k1 = k_min + a as i64;
                    if mask.map_or(true, |m| m(k1, k2)) {
                        local_op_l(&table, k1, k2, fetch)
                    } else {
                        Ok(0.0)
                    }
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    spline.coeff = rows.into_iter().flatten().collect();
    Ok(spline)
}

/// Coefficient indices of `Q_3` (cell-centered, knot spacing `h`) that are
/// nonzero at points of cell `i`: `i-2..=i+2`.
pub const Q3_REACH: i64 = 2;

/// Cubic Lagrange weights extrapolating values at `0, 1, 2, 3` to `-1`
/// and `-2`.
const EXTRAP_1: [f64; 4] = [4.0, -6.0, 4.0, -1.0];
const EXTRAP_2: [f64; 4] = [10.0, -20.0, 15.0, -4.0];

/// Fills positions `0, 1, m+2, m+3` of a padded line of `m + 4` values
/// from the interior `2..m+2`; `at` maps line positions to buffer slots.
fn extrapolate_line(buf: &mut [f64], m: usize, at: impl Fn(usize) -> usize) {
    let lo: [f64; 4] = std::array::from_fn(|r| buf[at(2 + r)]);
    let hi: [f64; 4] = std::array::from_fn(|r| buf[at(m + 1 - r)]);
    let dot = |w: &[f64; 4], v: &[f64; 4]| w.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    buf[at(1)] = dot(&EXTRAP_1, &lo);
    buf[at(0)] = dot(&EXTRAP_2, &lo);
    buf[at(m + 2)] = dot(&EXTRAP_1, &hi);
    buf[at(m + 3)] = dot(&EXTRAP_2, &hi);
}

/// Bicubic spline from point values on the uniform mesh `k/(m-1)`,
/// `k = 0..m`, given row-major with rows along y.
///
/// Coefficient `k` is `-f_{k-1}/6 + 4f_k/3 - f_{k+1}/6` per axis, which
/// reproduces cubics. Two layers of mesh values beyond each side are
/// filled by cubic extrapolation through the four nearest values.
pub fn quasi_fit_on_mesh(values: &[f64], m: usize) -> Result<TensorSpline> {
    if m < 4 {
        return Err(Error::InvalidSize(m));
    }
    if values.len() != m * m {
        return Err(Error::InvalidArgument(format!("mesh needs {} values, got {}", m * m, values.len())));
    }
    let d = 1.0 / (m - 1) as f64;
    let w = m + 4;
    // Padded mesh, index offset 2.
    let mut pad = vec![0.0; w * w];
    for b in 0..m {
        for a in 0..m {
            pad[(b + 2) * w + a + 2] = values[b * m + a];
        }
    }
    for b in 2..m + 2 {
        extrapolate_line(&mut pad, m, |k| b * w + k);
    }
    for a in 0..w {
        extrapolate_line(&mut pad, m, |k| k * w + a);
    }

    let mut spline = TensorSpline::covering_unit_square(3, d, 0.0)?;
    const C: [f64; 3] = [-1.0 / 6.0, 4.0 / 3.0, -1.0 / 6.0];
    for k2 in spline.k_min..=spline.k_max() {
        for k1 in spline.k_min..=spline.k_max() {
            let mut sum = 0.0;
            for (j2, c2) in C.iter().enumerate() {
                let row = (k2 + j2 as i64 - 1 + 2) as usize;
                let mut acc = 0.0;
                for (j1, c1) in C.iter().enumerate() {
                    let col = (k1 + j1 as i64 - 1 + 2) as usize;
                    acc += c1 * pad[row * w + col];
                }
                sum += c2 * acc;
            }
            spline.set(k1, k2, sum);
        }
    }
    Ok(spline)
}

/// Samples `f` on the mesh `k/(m-1)` in the layout expected by
/// [`quasi_fit_on_mesh`].
pub fn sample_mesh(m: usize, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let d = 1.0 / (m - 1) as f64;
    let mut v = Vec::with_capacity(m * m);
    for b in 0..m {
        for a in 0..m {
            v.push(f(a as f64 * d, b as f64 * d));
        }
    }
    v
}
