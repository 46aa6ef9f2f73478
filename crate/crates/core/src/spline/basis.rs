//! Uniform tensor-product B-splines.
//!
//! Basis function `k` along an axis is the centered cardinal B-spline
//! `B_p(t - k)` with `t = (x - origin) / spacing`, so it is centered at
//! `origin + k·spacing`. Coefficients cover `k_min..k_min+count` on both
//! axes; indices outside that range contribute zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{LevelSet, Rect};

pub const MAX_DEGREE: usize = 5;

/// Values `N_p(frac + r)`, `r = 0..=p`, of the cardinal B-spline supported
/// on `[0, p+1]`.
pub fn cardinal_values(p: usize, frac: f64, out: &mut [f64; MAX_DEGREE + 1]) {
    out.fill(0.0);
    out[0] = 1.0;
    for q in 1..=p {
        let qf = q as f64;
        for r in (0..=q).rev() {
            let x = frac + r as f64;
            let left = if r < q { x * out[r] } else { 0.0 };
            let right = if r > 0 { (qf + 1.0 - x) * out[r - 1] } else { 0.0 };
            out[r] = (left + right) / qf;
        }
    }
}

/// Centered cardinal B-spline `B_p(t)` (support `[-(p+1)/2, (p+1)/2]`).
pub fn centered_bspline(p: usize, t: f64) -> f64 {
    let u = t + 0.5 * (p + 1) as f64;
    if u <= 0.0 || u >= (p + 1) as f64 {
        return 0.0;
    }
    let m = u.floor();
    let mut v = [0.0; MAX_DEGREE + 1];
    cardinal_values(p, u - m, &mut v);
    v[m as usize]
}

/// Nonzero basis functions at parameter `t`: indices `first - r` for
/// `r = 0..=p` carry `values[r]`.
#[derive(Debug, Clone, Copy)]
pub struct AxisBasis {
    pub first: i64,
    pub values: [f64; MAX_DEGREE + 1],
    pub derivs: [f64; MAX_DEGREE + 1],
}

pub fn axis_basis(p: usize, t: f64) -> AxisBasis {
    let u = t + 0.5 * (p + 1) as f64;
    let m = u.floor();
    let frac = u - m;
    let mut values = [0.0; MAX_DEGREE + 1];
    cardinal_values(p, frac, &mut values);
    let mut derivs = [0.0; MAX_DEGREE + 1];
    if p > 0 {
        let mut lower = [0.0; MAX_DEGREE + 1];
        cardinal_values(p - 1, frac, &mut lower);
        for r in 0..=p {
            let a = if r < p { lower[r] } else { 0.0 };
            let b = if r > 0 { lower[r - 1] } else { 0.0 };
            derivs[r] = a - b;
        }
    }
    AxisBasis {
        first: m as i64,
        values,
        derivs,
    }
}

/// Bivariate spline with the same uniform knot lattice on both axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorSpline {
    pub degree: usize,
    pub spacing: f64,
    /// Coordinate where basis index 0 is centered.
    pub origin: f64,
    pub k_min: i64,
    pub count: usize,
    /// Row-major: `coeff[(k2 - k_min) * count + (k1 - k_min)]`.
    pub coeff: Vec<f64>,
}

impl TensorSpline {
    /// Zero spline whose basis covers `[0,1]²`.
    pub fn covering_unit_square(degree: usize, spacing: f64, origin: f64) -> Result<Self> {
        if degree == 0 || degree > MAX_DEGREE {
            return Err(Error::InvalidArgument(format!("spline degree {degree} outside 1..=5")));
        }
        if !(spacing > 0.0) {
            return Err(Error::InvalidArgument(format!("knot spacing {spacing} must be positive")));
        }
        let (k_min, k_max) = index_range(degree, spacing, origin);
        let count = (k_max - k_min + 1) as usize;
        Ok(TensorSpline {
            degree,
            spacing,
            origin,
            k_min,
            count,
            coeff: vec![0.0; count * count],
        })
    }

    pub fn k_max(&self) -> i64 {
        self.k_min + self.count as i64 - 1
    }

    #[inline]
    fn slot(&self, k1: i64, k2: i64) -> Option<usize> {
        let a = k1 - self.k_min;
        let b = k2 - self.k_min;
        let c = self.count as i64;
        (a >= 0 && b >= 0 && a < c && b < c).then(|| (b * c + a) as usize)
    }

    pub fn get(&self, k1: i64, k2: i64) -> f64 {
        self.slot(k1, k2).map_or(0.0, |s| self.coeff[s])
    }

    pub fn set(&mut self, k1: i64, k2: i64, v: f64) {
        let s = self.slot(k1, k2).expect("coefficient index outside the spline lattice");
        self.coeff[s] = v;
    }

    /// Parameter of coordinate `x`.
    #[inline]
    pub fn param(&self, x: f64) -> f64 {
        (x - self.origin) / self.spacing
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let p = self.degree;
        let bx = axis_basis(p, self.param(x));
        let by = axis_basis(p, self.param(y));
        let mut sum = 0.0;
        for ry in 0..=p {
            let k2 = by.first - ry as i64;
            let mut row = 0.0;
            for rx in 0..=p {
                row += bx.values[rx] * self.get(bx.first - rx as i64, k2);
            }
            sum += by.values[ry] * row;
        }
        sum
    }

    pub fn gradient(&self, x: f64, y: f64) -> [f64; 2] {
        let p = self.degree;
        let bx = axis_basis(p, self.param(x));
        let by = axis_basis(p, self.param(y));
        let (mut gx, mut gy) = (0.0, 0.0);
        for ry in 0..=p {
            let k2 = by.first - ry as i64;
            for rx in 0..=p {
                let c = self.get(bx.first - rx as i64, k2);
                gx += bx.derivs[rx] * by.values[ry] * c;
                gy += bx.values[rx] * by.derivs[ry] * c;
            }
        }
        [gx / self.spacing, gy / self.spacing]
    }

    /// Sum of all basis functions at `(x, y)`, counting every index.
    pub fn basis_sum(&self, x: f64, y: f64) -> f64 {
        let p = self.degree;
        let bx = axis_basis(p, self.param(x));
        let by = axis_basis(p, self.param(y));
        let sx: f64 = bx.values[..=p].iter().sum();
        let sy: f64 = by.values[..=p].iter().sum();
        sx * sy
    }

    /// Index range of basis functions that do not vanish on `[a, b]`.
    pub fn support_range(&self, a: f64, b: f64) -> (i64, i64) {
        let half = 0.5 * (self.degree + 1) as f64;
        let lo = (self.param(a) - half).floor() as i64 + 1;
        let hi = (self.param(b) + half).ceil() as i64 - 1;
        (lo, hi)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut s = self.clone();
        s.coeff.iter_mut().for_each(|c| *c *= factor);
        s
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "degree": self.degree,
            "knot_spacing": self.spacing,
            "origin": self.origin,
            "k_min": self.k_min,
            "count": self.count,
            "offset_convention": "basis k is B_p((x - origin)/knot_spacing - k); coefficients row-major with k2 (y) outer",
            "coefficients": self.coeff,
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let get = |k: &str| v.get(k).ok_or_else(|| Error::Parse(format!("spline json missing '{k}'")));
        let spline = TensorSpline {
            degree: serde_json::from_value(get("degree")?.clone())?,
            spacing: serde_json::from_value(get("knot_spacing")?.clone())?,
            origin: serde_json::from_value(get("origin")?.clone())?,
            k_min: serde_json::from_value(get("k_min")?.clone())?,
            count: serde_json::from_value(get("count")?.clone())?,
            coeff: serde_json::from_value(get("coefficients")?.clone())?,
        };
        if spline.coeff.len() != spline.count * spline.count {
            return Err(Error::Parse("coefficient count mismatch".into()));
        }
        Ok(spline)
    }
}

/// Basis indices needed to cover `[0, 1]`.
pub fn index_range(degree: usize, spacing: f64, origin: f64) -> (i64, i64) {
    let half = 0.5 * (degree + 1) as f64;
    let t_lo = (0.0 - origin) / spacing;
    let t_hi = (1.0 - origin) / spacing;
    ((t_lo - half).floor() as i64 + 1, (t_hi + half).ceil() as i64 - 1)
}

impl LevelSet for TensorSpline {
    fn level(&self, x: f64, y: f64) -> f64 {
        self.eval(x, y)
    }

    fn gradient(&self, x: f64, y: f64) -> [f64; 2] {
        TensorSpline::gradient(self, x, y)
    }

    /// Convex-hull test on the coefficients active over `rect`.
    fn may_cross(&self, rect: &Rect) -> bool {
        let (a1, b1) = self.support_range(rect.x0, rect.x1);
        let (a2, b2) = self.support_range(rect.y0, rect.y1);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for k2 in a2..=b2 {
            for k1 in a1..=b1 {
                let c = self.get(k1, k2);
                lo = lo.min(c);
                hi = hi.max(c);
            }
        }
        lo < 0.0 && hi >= 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cardinal_cubic_values() {
        let mut v = [0.0; MAX_DEGREE + 1];
        cardinal_values(3, 0.0, &mut v);
        assert_eq!(&v[..4], &[0.0, 1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0]);
        assert!((centered_bspline(3, 0.0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((centered_bspline(1, 0.25) - 0.75).abs() < 1e-15);
        assert_eq!(centered_bspline(2, 1.5), 0.0);
    }

    #[test]
    fn derivative_matches_difference_quotient() {
        for p in 1..=5 {
            for &t in &[0.13, 0.71, -1.2, 2.05] {
                let b = axis_basis(p, t);
                for r in 0..=p {
                    let k = b.first - r as i64;
                    let e = 1e-6;
                    let fd = (centered_bspline(p, t + e - k as f64) - centered_bspline(p, t - e - k as f64)) / (2.0 * e);
                    assert!((fd - b.derivs[r]).abs() < 1e-7, "p={p} t={t} r={r}");
                    assert!((centered_bspline(p, t - k as f64) - b.values[r]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn json_roundtrip() {
        let mut s = TensorSpline::covering_unit_square(3, 0.25, 0.0).unwrap();
        s.set(1, 2, 0.5);
        let back = TensorSpline::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
        assert_eq!((s.k_min, s.k_max()), (-1, 5));
    }

    #[test]
    fn cell_centered_range() {
        let n = 10;
        let h = 0.1;
        let s = TensorSpline::covering_unit_square(3, h, -0.5 * h).unwrap();
        assert_eq!((s.k_min, s.k_max()), (-1, n + 2));
    }

    #[test]
    fn gradient_of_linear_spline_data() {
        // Coefficients k·d reproduce x exactly for any degree (odd or even).
        for p in 1..=5 {
            let mut s = TensorSpline::covering_unit_square(p, 0.2, 0.0).unwrap();
            for k2 in s.k_min..=s.k_max() {
                for k1 in s.k_min..=s.k_max() {
                    s.set(k1, k2, 0.2 * k1 as f64 - 0.5);
                }
            }
            for &(x, y) in &[(0.3, 0.4), (0.0, 1.0), (0.77, 0.01)] {
                assert!((s.eval(x, y) - (x - 0.5)).abs() < 1e-13);
                if p == 1 && y == 1.0 {
                    // Linear splines have one-sided derivatives at knots.
                    continue;
                }
                let g = s.gradient(x, y);
                assert!((g[0] - 1.0).abs() < 1e-12 && g[1].abs() < 1e-12, "p={p} ({x},{y}) {g:?}");
            }
        }
    }
}
