//! Oracles shared by the integration tests. They deliberately avoid the
//! library's own quadrature so that checks against them are independent.

#![allow(dead_code)]

use cellrecon::edge::{assemble_quadratic_system, fit_linear_pieces, EdgeWindow};
use cellrecon::grid::{aggregate, difference, CellGrid};
use cellrecon::signature::compute_signature;
use cellrecon::spline::{quasi_interpolant, TensorSpline};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Four-point Gauss–Legendre rule on `[-1, 1]`, exact through degree 7.
const GAUSS4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_8),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_2),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_2),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_8),
];

fn gauss4(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (m, r) = (0.5 * (a + b), 0.5 * (b - a));
    GAUSS4.iter().map(|&(t, w)| w * f(m + r * t)).sum::<f64>() * r
}

/// Edge model in window units (cell side 1): `lower` below the curve
/// `η = q(ξ)`, `upper` above it. Linear pieces are `[a, b, c]` meaning
/// `a ξ + b η + c`; `q` is `[A, B, C]` meaning `A ξ² + B ξ + C`.
#[derive(Debug, Clone, Copy)]
pub struct EdgeModel {
    pub lower: [f64; 3],
    pub upper: [f64; 3],
    pub q: [f64; 3],
}

impl EdgeModel {
    pub fn q_at(&self, xi: f64) -> f64 {
        self.q[0] * xi * xi + self.q[1] * xi + self.q[2]
    }

    /// Averages of local cells `(2..=4) × (2..=9)` as `cells[col][row]`.
    /// Each column is split where `q` meets a row boundary; between those
    /// points the integral over `η` is a polynomial in `ξ` of degree at
    /// most five, which the four-point rule integrates exactly.
    pub fn cells(&self) -> [[f64; 8]; 3] {
        let inner = |l: [f64; 3], xi: f64, e0: f64, e1: f64| (l[0] * xi + l[2]) * (e1 - e0) + 0.5 * l[1] * (e1 * e1 - e0 * e0);
        std::array::from_fn(|c| {
            let (x0, x1) = (c as f64 + 1.0, c as f64 + 2.0);
            std::array::from_fn(|r| {
                let (y0, y1) = (r as f64 + 1.0, r as f64 + 2.0);
                let mut cuts: Vec<f64> = [y0, y1]
                    .iter()
                    .flat_map(|level| quadratic_roots(self.q[0], self.q[1], self.q[2] - level))
                    .filter(|t| *t > x0 && *t < x1)
                    .collect();
                cuts.extend([x0, x1]);
                cuts.sort_by(f64::total_cmp);
                cuts.windows(2)
                    .map(|w| {
                        gauss4(w[0], w[1], |xi| {
                            let t = self.q_at(xi).clamp(y0, y1);
                            inner(self.lower, xi, y0, t) + inner(self.upper, xi, t, y1)
                        })
                    })
                    .sum()
            })
        })
    }
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a == 0.0 {
        return if b != 0.0 { vec![-c / b] } else { vec![] };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return vec![];
    }
    let s = disc.sqrt();
    vec![(-b + s) / (2.0 * a), (-b - s) / (2.0 * a)]
}

/// A random model whose curve stays in rows 4–7 over the three window
/// columns with at least `0.5` jump along it. Pieces are drawn in
/// physical units at cell size `h` and converted to window units.
pub fn random_edge_model(rng: &mut ChaCha8Rng, h: f64) -> EdgeModel {
    loop {
        let a = rng.gen_range(-6.0..6.0);
        let b = rng.gen_range(-0.7..0.7);
        let mid = rng.gen_range(4.0..6.0);
        let qa = a * h;
        let q = [qa, b, mid - qa * 6.25 - 2.5 * b];
        let offset = rng.gen_range(0.5..2.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let mut piece = |offset: f64| [rng.gen_range(-2.0..2.0) * h, rng.gen_range(-2.0..2.0) * h, rng.gen_range(-1.0..1.0) + offset];
        let lower = piece(0.0);
        let upper = piece(offset);
        let m = EdgeModel { lower, upper, q };
        let ok = (0..=60).all(|k| {
            let xi = 1.0 + 3.0 * k as f64 / 60.0;
            let eta = m.q_at(xi);
            let jump = (0..3).map(|t| [xi, eta, 1.0][t] * (upper[t] - lower[t])).sum::<f64>();
            eta > 3.2 && eta < 6.8 && jump.abs() >= 0.5
        });
        if ok {
            return m;
        }
    }
}

/// `∫ t^k dt / (b - a)` over `[a, b]`, expanded as `Σ a^m b^(k-m) / (k+1)`
/// to avoid cancellation on short intervals.
pub fn mean_power(k: u32, a: f64, b: f64) -> f64 {
    (0..=k).map(|m| a.powi(m as i32) * b.powi((k - m) as i32)).sum::<f64>() / (k + 1) as f64
}

/// Exact cell average of `Σ c_{a,b} x^a y^b` over cell `(i, j)` with side
/// `h`; indices may fall outside the grid.
pub fn poly_average(coeffs: &[[f64; 4]; 4], h: f64, i: i64, j: i64) -> f64 {
    let (x0, y0) = ((i - 1) as f64 * h, (j - 1) as f64 * h);
    let mut s = 0.0;
    for (a, row) in coeffs.iter().enumerate() {
        for (b, c) in row.iter().enumerate() {
            s += c * mean_power(a as u32, x0, x0 + h) * mean_power(b as u32, y0, y0 + h);
        }
    }
    s
}

pub fn poly_eval(coeffs: &[[f64; 4]; 4], x: f64, y: f64) -> f64 {
    let mut s = 0.0;
    for (a, row) in coeffs.iter().enumerate() {
        for (b, c) in row.iter().enumerate() {
            s += c * x.powi(a as i32) * y.powi(b as i32);
        }
    }
    s
}

pub fn grid_from_averages(n: usize, avg: impl Fn(i64, i64) -> f64) -> CellGrid {
    CellGrid::from_fn(n, |i, j| avg(i as i64, j as i64)).unwrap()
}

/// Order of convergence between consecutive `(n, error)` pairs.
pub fn orders(rows: &[(usize, f64)]) -> Vec<f64> {
    rows.windows(2)
        .map(|w| (w[0].1 / w[1].1).log2() / (w[1].0 as f64 / w[0].0 as f64).log2())
        .collect()
}

/// Largest `|s_{i,j}|` for the averages of `c0 + c1 x + c2 y + c3 xy`.
pub fn signature_of_bilinear(c: [f64; 4], n: usize) -> f64 {
    let h = 1.0 / n as f64;
    let g = grid_from_averages(n, |i, j| {
        let (x, y) = ((i as f64 - 0.5) * h, (j as f64 - 0.5) * h);
        c[0] + c[1] * x + c[2] * y + c[3] * x * y
    });
    compute_signature(&g).unwrap().max_abs()
}

/// Largest change of a grid under aggregation followed by differencing.
pub fn round_trip_error(g: &CellGrid) -> f64 {
    difference(&aggregate(g)).max_abs_diff(g)
}

/// Largest pointwise error of `Q_3` built from exact averages of a
/// bicubic polynomial, over an `m × m` sample of the square.
pub fn q3_error(coeffs: &[[f64; 4]; 4], n: usize, m: usize) -> f64 {
    let h = 1.0 / n as f64;
    let fetch = |i: i64, j: i64| Some(poly_average(coeffs, h, i, j));
    let s = quasi_interpolant(n, 3, &fetch, None).unwrap();
    let mut worst: f64 = 0.0;
    for b in 0..=m {
        for a in 0..=m {
            let (x, y) = (a as f64 / m as f64, b as f64 / m as f64);
            worst = worst.max((s.eval(x, y) - poly_eval(coeffs, x, y)).abs());
        }
    }
    worst
}

/// `‖J_fd - J‖∞ / ‖J‖∞` for the edge system of `model` at `v`, with
/// central differences of step `1e-6`.
pub fn jacobian_fd_error(model: &EdgeModel, n: usize, v: [f64; 3]) -> f64 {
    let w = EdgeWindow::from_local_cells(n, model.cells());
    let (l1, l2) = fit_linear_pieces(&w);
    let sys = assemble_quadratic_system(&w, &l1, &l2);
    let j = sys.jacobian(v);
    let e = 1e-6;
    let mut diff: f64 = 0.0;
    for k in 0..3 {
        let (mut p, mut m) = (v, v);
        p[k] += e;
        m[k] -= e;
        let (qp, qm) = (sys.eval(p), sys.eval(m));
        for i in 0..3 {
            diff = diff.max(((qp[i] - qm[i]) / (2.0 * e) - j[(i, k)]).abs());
        }
    }
    assert!(j.amax() > 0.0, "degenerate Jacobian");
    diff / j.amax()
}

/// Largest `|Σ_k B_k - 1|` over `points` for a degree-`p` spline family.
pub fn partition_error(p: usize, spacing: f64, points: &[[f64; 2]]) -> f64 {
    let s = TensorSpline::covering_unit_square(p, spacing, -0.5 * spacing).unwrap();
    points.iter().map(|q| (s.basis_sum(q[0], q[1]) - 1.0).abs()).fold(0.0, f64::max)
}
