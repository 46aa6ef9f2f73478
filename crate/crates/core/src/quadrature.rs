//! Gauss–Legendre rules and cut-cell quadrature.
//!
//! A cut cell is a rectangle crossed by the zero set of a level function.
//! The rule integrates along one axis exactly up to the crossings of the
//! zero set and adaptively along the other, splitting the outer axis at
//! the points where the zero set meets the rectangle's edges. The outer
//! axis is the one along which the zero set is locally a graph.

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Legendre order must be positive");
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for k in 0..(n + 1) / 2 {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[k] = -x;
            nodes[n - 1 - k] = x;
            weights[k] = w;
            weights[n - 1 - k] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&t, &w)| (mid + half * t, half * w))
    }

    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Rect { x0, x1, y0, y1 }
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }

    pub fn half_diagonal(&self) -> f64 {
        0.5 * (self.x1 - self.x0).hypot(self.y1 - self.y0)
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

/// A scalar field whose zero set splits the plane into a negative and a
/// non-negative side.
pub trait LevelSet: Sync {
    fn level(&self, x: f64, y: f64) -> f64;
    fn gradient(&self, x: f64, y: f64) -> [f64; 2];
    /// Returns `false` only when the zero set certainly misses `rect`.
    fn may_cross(&self, rect: &Rect) -> bool;
}

/// One weighted quadrature node, tagged with the side of the zero set it
/// lies on (`negative` means `level < 0`).
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub negative: bool,
}

/// Options for [`cut_cell_rule`].
#[derive(Debug, Clone, Copy)]
pub struct CutOptions {
    /// Relative tolerance on the side areas and first moments.
    pub rel_tol: f64,
    pub max_depth: usize,
}

impl Default for CutOptions {
    fn default() -> Self {
        CutOptions {
            rel_tol: 1e-13,
            max_depth: 12,
        }
    }
}

/// Roots of `f` on `(lo, hi)`, located by sign sampling and bisection on
/// the predicate `f < 0`.
pub fn roots_on_segment(f: impl Fn(f64) -> f64, lo: f64, hi: f64, samples: usize) -> Vec<f64> {
    let mut roots = Vec::new();
    if hi <= lo {
        return roots;
    }
    let step = (hi - lo) / samples as f64;
    let mut prev_t = lo;
    let mut prev_neg = f(lo) < 0.0;
    for k in 1..=samples {
        let t = if k == samples { hi } else { lo + step * k as f64 };
        let neg = f(t) < 0.0;
        if neg != prev_neg {
            let (mut a, mut b) = (prev_t, t);
            for _ in 0..80 {
                let m = 0.5 * (a + b);
                if m <= a || m >= b {
                    break;
                }
                if (f(m) < 0.0) == prev_neg {
                    a = m;
                } else {
                    b = m;
                }
            }
            roots.push(0.5 * (a + b));
        }
        prev_t = t;
        prev_neg = neg;
    }
    roots
}

/// Quadrature rule for a rectangle cut by the zero set of `ls`.
///
/// Returns the nodes and the number of outer intervals that hit
/// `max_depth` without meeting the tolerance.
pub fn cut_cell_rule(
    ls: &dyn LevelSet,
    rect: &Rect,
    gl: &GaussLegendre,
    opts: CutOptions,
) -> (Vec<QuadPoint>, usize) {
    let (cx, cy) = rect.center();
    let g = ls.gradient(cx, cy);
    // Outer axis along x when the zero set is locally a graph y(x).
    let outer_x = g[1].abs() >= g[0].abs();
    let (o0, o1, i0, i1) = if outer_x {
        (rect.x0, rect.x1, rect.y0, rect.y1)
    } else {
        (rect.y0, rect.y1, rect.x0, rect.x1)
    };
    let eval = move |outer: f64, inner: f64| {
        if outer_x {
            ls.level(outer, inner)
        } else {
            ls.level(inner, outer)
        }
    };

    let mut breaks = vec![o0, o1];
    for edge in [i0, i1] {
        breaks.extend(roots_on_segment(|t| eval(t, edge), o0, o1, 8));
    }
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * (o1 - o0));

    let tol = opts.rel_tol * rect.area().max(f64::MIN_POSITIVE);
    let mut points = Vec::new();
    let mut warnings = 0;
    let ctx = Ctx {
        eval: &eval,
        outer_x,
        i0,
        i1,
        gl,
        tol,
        max_depth: opts.max_depth,
    };
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            ctx.adapt(w[0], w[1], 0, &mut points, &mut warnings);
        }
    }
    (points, warnings)
}

struct Ctx<'a, F: Fn(f64, f64) -> f64> {
    eval: &'a F,
    outer_x: bool,
    i0: f64,
    i1: f64,
    gl: &'a GaussLegendre,
    tol: f64,
    max_depth: usize,
}

impl<F: Fn(f64, f64) -> f64> Ctx<'_, F> {
    fn strip(&self, a: f64, b: f64, out: &mut Vec<QuadPoint>) {
        for (t, wt) in self.gl.mapped(a, b) {
            let mut cuts = vec![self.i0];
            cuts.extend(roots_on_segment(|s| (self.eval)(t, s), self.i0, self.i1, 8));
            cuts.push(self.i1);
            for c in cuts.windows(2) {
                if c[1] <= c[0] {
                    continue;
                }
                let negative = (self.eval)(t, 0.5 * (c[0] + c[1])) < 0.0;
                for (s, ws) in self.gl.mapped(c[0], c[1]) {
                    let (x, y) = if self.outer_x { (t, s) } else { (s, t) };
                    out.push(QuadPoint {
                        x,
                        y,
                        w: wt * ws,
                        negative,
                    });
                }
            }
        }
    }

    fn adapt(&self, a: f64, b: f64, depth: usize, out: &mut Vec<QuadPoint>, warnings: &mut usize) {
        let mut coarse = Vec::new();
        self.strip(a, b, &mut coarse);
        let m = 0.5 * (a + b);
        let mut fine = Vec::new();
        self.strip(a, m, &mut fine);
        self.strip(m, b, &mut fine);
        let mc = moments(&coarse);
        let mf = moments(&fine);
        let diff = mc
            .iter()
            .zip(&mf)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        if diff <= self.tol {
            out.extend(fine);
        } else if depth >= self.max_depth {
            *warnings += 1;
            out.extend(fine);
        } else {
            self.adapt(a, m, depth + 1, out, warnings);
            self.adapt(m, b, depth + 1, out, warnings);
        }
    }
}

fn moments(points: &[QuadPoint]) -> [f64; 4] {
    let mut m = [0.0; 4];
    for p in points.iter().filter(|p| p.negative) {
        m[0] += p.w;
        m[1] += p.w * p.x;
        m[2] += p.w * p.y;
    }
    m[3] = points.iter().filter(|p| !p.negative).map(|p| p.w).sum();
    m
}

/// Tensor Gauss rule on a rectangle, all nodes tagged with `negative`.
pub fn tensor_rule(rect: &Rect, gl: &GaussLegendre, negative: bool) -> Vec<QuadPoint> {
    let mut out = Vec::with_capacity(gl.order() * gl.order());
    for (y, wy) in gl.mapped(rect.y0, rect.y1) {
        for (x, wx) in gl.mapped(rect.x0, rect.x1) {
            out.push(QuadPoint {
                x,
                y,
                w: wx * wy,
                negative,
            });
        }
    }
    out
}
