//! Jump curves and the piecewise-smooth test functions used throughout the
//! test suite and the benchmark harness.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::CellGrid;
use crate::quadrature::{cut_cell_rule, tensor_rule, CutOptions, GaussLegendre, LevelSet, Rect};

/// Analytic jump curve. The level function is negative on the side of
/// the first piece.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Interface {
    /// `(x-cx)² + (y-cy)² = r²`, first piece inside.
    Circle { cx: f64, cy: f64, r: f64 },
    /// `nx·x + ny·y + c = 0` with `(nx, ny)` a unit normal; first piece
    /// where the expression is negative.
    Line { nx: f64, ny: f64, c: f64 },
    /// `y = a·x² + b·x + c`, first piece below.
    Parabola { a: f64, b: f64, c: f64 },
}

impl Interface {
    /// Line through `(x0, y0)` with direction `(dx, dy)`; first piece to
    /// the right of the direction.
    pub fn line_through(x0: f64, y0: f64, dx: f64, dy: f64) -> Self {
        let len = dx.hypot(dy);
        let (nx, ny) = (dy / len, -dx / len);
        Interface::Line {
            nx: -nx,
            ny: -ny,
            c: nx * x0 + ny * y0,
        }
    }

    pub fn level(&self, x: f64, y: f64) -> f64 {
        match *self {
            Interface::Circle { cx, cy, r } => (x - cx).hypot(y - cy) - r,
            Interface::Line { nx, ny, c } => nx * x + ny * y + c,
            Interface::Parabola { a, b, c } => y - (a * x * x + b * x + c),
        }
    }

    pub fn gradient(&self, x: f64, y: f64) -> [f64; 2] {
        match *self {
            Interface::Circle { cx, cy, .. } => {
                let d = (x - cx).hypot(y - cy).max(f64::MIN_POSITIVE);
                [(x - cx) / d, (y - cy) / d]
            }
            Interface::Line { nx, ny, .. } => [nx, ny],
            Interface::Parabola { a, b, .. } => [-(2.0 * a * x + b), 1.0],
        }
    }

    pub fn is_closed(&self) -> bool {
        matches!(self, Interface::Circle { .. })
    }

    /// Closest point of the (unbounded) curve to `(x, y)`.
    pub fn closest_point(&self, x: f64, y: f64) -> [f64; 2] {
        match *self {
            Interface::Circle { cx, cy, r } => {
                let d = (x - cx).hypot(y - cy);
                if d == 0.0 {
                    [cx + r, cy]
                } else {
                    [cx + r * (x - cx) / d, cy + r * (y - cy) / d]
                }
            }
            Interface::Line { nx, ny, c } => {
                let s = nx * x + ny * y + c;
                [x - s * nx, y - s * ny]
            }
            Interface::Parabola { a, b, c } => {
                let q = |t: f64| a * t * t + b * t + c;
                // Stationary points of the squared distance solve a cubic.
                let g = |t: f64| (t - x) + (q(t) - y) * (2.0 * a * t + b);
                let dg = |t: f64| {
                    let s = 2.0 * a * t + b;
                    1.0 + s * s + (q(t) - y) * 2.0 * a
                };
                let span = 2.0 + x.abs() + y.abs();
                let mut best = [x, q(x)];
                let mut best_d = (q(x) - y).abs();
                let samples = 64;
                let mut prev = g(x - span);
                for k in 1..=samples {
                    let lo = x - span + 2.0 * span * (k - 1) as f64 / samples as f64;
                    let hi = x - span + 2.0 * span * k as f64 / samples as f64;
                    let cur = g(hi);
                    if prev == 0.0 || prev.signum() != cur.signum() {
                        let (mut u, mut v) = (lo, hi);
                        for _ in 0..200 {
                            let m = 0.5 * (u + v);
                            if (g(m) < 0.0) == (g(u) < 0.0) {
                                u = m;
                            } else {
                                v = m;
                            }
                        }
                        let mut t = 0.5 * (u + v);
                        for _ in 0..3 {
                            let d = dg(t);
                            if d != 0.0 {
                                let step = g(t) / d;
                                if (t - step) > lo && (t - step) < hi {
                                    t -= step;
                                }
                            }
                        }
                        let d = (t - x).hypot(q(t) - y);
                        if d < best_d {
                            best_d = d;
                            best = [t, q(t)];
                        }
                    }
                    prev = cur;
                }
                best
            }
        }
    }

    /// Euclidean distance from `(x, y)` to the curve.
    pub fn distance(&self, x: f64, y: f64) -> f64 {
        match *self {
            Interface::Circle { .. } | Interface::Line { .. } => self.level(x, y).abs(),
            Interface::Parabola { .. } => {
                let p = self.closest_point(x, y);
                (p[0] - x).hypot(p[1] - y)
            }
        }
    }

    /// About `m` points of the curve inside `[0,1]²`, grouped into
    /// connected runs in parameter order.
    pub fn sample(&self, m: usize) -> Vec<Vec<[f64; 2]>> {
        let inside = |p: &[f64; 2]| (0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1]);
        let raw: Vec<[f64; 2]> = match *self {
            Interface::Circle { cx, cy, r } => (0..m)
                .map(|k| {
                    let t = 2.0 * PI * k as f64 / m as f64;
                    [cx + r * t.cos(), cy + r * t.sin()]
                })
                .collect(),
            Interface::Line { nx, ny, c } => {
                let (x0, y0) = (-c * nx, -c * ny);
                let (dx, dy) = (-ny, nx);
                (0..m)
                    .map(|k| {
                        let t = -2.0 + 4.0 * k as f64 / (m - 1) as f64;
                        [x0 + t * dx, y0 + t * dy]
                    })
                    .collect()
            }
            Interface::Parabola { a, b, c } => (0..m)
                .map(|k| {
                    let t = k as f64 / (m - 1) as f64;
                    [t, a * t * t + b * t + c]
                })
                .collect(),
        };
        let mut runs: Vec<Vec<[f64; 2]>> = Vec::new();
        let mut current = Vec::new();
        for p in raw {
            if inside(&p) {
                current.push(p);
            } else if !current.is_empty() {
                runs.push(std::mem::take(&mut current));
            }
        }
        if !current.is_empty() {
            // A closed curve may wrap around its parameter origin.
            if self.is_closed() && !runs.is_empty() && {
                let first = &runs[0][0];
                let last = current.last().unwrap();
                (first[0] - last[0]).hypot(first[1] - last[1]) < 8.0 * PI / m as f64
            } {
                current.extend(runs.remove(0));
                runs.insert(0, current);
            } else {
                runs.push(current);
            }
        }
        runs
    }

    /// [`sample`](Self::sample) flattened into one point list.
    pub fn sample_points(&self, min_points: usize) -> Vec<[f64; 2]> {
        self.sample(min_points).into_iter().flatten().collect()
    }
}

impl LevelSet for Interface {
    fn level(&self, x: f64, y: f64) -> f64 {
        Interface::level(self, x, y)
    }

    fn gradient(&self, x: f64, y: f64) -> [f64; 2] {
        Interface::gradient(self, x, y)
    }

    fn may_cross(&self, rect: &Rect) -> bool {
        let (cx, cy) = rect.center();
        let reach = rect.half_diagonal() * (1.0 + 1e-9);
        match self {
            Interface::Parabola { a, .. } => {
                // |level| is not a distance for the parabola; bound its
                // variation over the rectangle instead.
                let g = self.gradient(cx, cy);
                let w = rect.x1 - rect.x0;
                let bound = reach * g[0].hypot(g[1]) + a.abs() * w * w;
                self.level(cx, cy).abs() <= bound
            }
            _ => self.level(cx, cy).abs() <= reach,
        }
    }
}

/// Catalog entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FunctionKind {
    OpenQuarterCircle,
    ClosedCircle,
    Step,
    Smooth,
    Custom,
}

impl FunctionKind {
    pub const ALL: [FunctionKind; 4] = [
        FunctionKind::OpenQuarterCircle,
        FunctionKind::ClosedCircle,
        FunctionKind::Step,
        FunctionKind::Smooth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FunctionKind::OpenQuarterCircle => "open-quarter-circle",
            FunctionKind::ClosedCircle => "closed-circle",
            FunctionKind::Step => "step",
            FunctionKind::Smooth => "smooth",
            FunctionKind::Custom => "custom",
        }
    }
}

impl fmt::Display for FunctionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FunctionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FunctionKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown function kind '{s}'")))
    }
}

pub type Piece = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A piecewise-smooth function on the unit square: `piece1` where the
/// interface level is negative, `piece2` elsewhere.
#[derive(Clone)]
pub struct TestFunction {
    pub kind: FunctionKind,
    pub piece1: Piece,
    pub piece2: Piece,
    pub interface: Option<Interface>,
    /// Lower bound on `|f1 - f2|` along the curve.
    pub jump_bound: f64,
    /// `sup|f_xx| + sup|f_yy|` over both pieces.
    pub curvature_bound: f64,
    /// Lipschitz constant of each piece on its side.
    pub lipschitz: f64,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("kind", &self.kind)
            .field("interface", &self.interface)
            .field("jump_bound", &self.jump_bound)
            .finish_non_exhaustive()
    }
}

impl TestFunction {
    pub fn from_kind(kind: FunctionKind) -> Result<Self> {
        Ok(match kind {
            FunctionKind::OpenQuarterCircle => Self::open_quarter_circle(),
            FunctionKind::ClosedCircle => Self::closed_circle(),
            FunctionKind::Step => Self::step(),
            FunctionKind::Smooth => Self::smooth(),
            FunctionKind::Custom => {
                return Err(Error::InvalidArgument("custom functions need explicit pieces".into()))
            }
        })
    }

    /// `x + y` inside `x² + y² < 0.5`, `1 + 0.5 sin 3y` outside.
    pub fn open_quarter_circle() -> Self {
        TestFunction {
            kind: FunctionKind::OpenQuarterCircle,
            piece1: Arc::new(|x, y| x + y),
            piece2: Arc::new(|_, y| 1.0 + 0.5 * (3.0 * y).sin()),
            interface: Some(Interface::Circle {
                cx: 0.0,
                cy: 0.0,
                r: 0.5f64.sqrt(),
            }),
            jump_bound: 1.0 - 0.5f64.sqrt(),
            curvature_bound: 4.5,
            lipschitz: 1.5,
        }
    }

    /// `1 + xy` inside the circle `(x-0.5)² + (y-0.5)² = 0.1`,
    /// `0.3 sin(2x + y)` outside.
    pub fn closed_circle() -> Self {
        TestFunction {
            kind: FunctionKind::ClosedCircle,
            piece1: Arc::new(|x, y| 1.0 + x * y),
            piece2: Arc::new(|x, y| 0.3 * (2.0 * x + y).sin()),
            interface: Some(Interface::Circle {
                cx: 0.5,
                cy: 0.5,
                r: 0.1f64.sqrt(),
            }),
            jump_bound: 0.7,
            curvature_bound: 0.3 * 5.0,
            lipschitz: 0.3 * 5f64.sqrt(),
        }
    }

    /// `0` for `x < 0.5`, `1` otherwise.
    pub fn step() -> Self {
        Self::piecewise_constant(Interface::Line { nx: 1.0, ny: 0.0, c: -0.5 }, 0.0, 1.0)
            .with_kind(FunctionKind::Step)
    }

    /// `sin(πx) sin(πy)`, no curve.
    pub fn smooth() -> Self {
        TestFunction {
            kind: FunctionKind::Smooth,
            piece1: Arc::new(|x, y| (PI * x).sin() * (PI * y).sin()),
            piece2: Arc::new(|x, y| (PI * x).sin() * (PI * y).sin()),
            interface: None,
            jump_bound: 0.0,
            curvature_bound: 2.0 * PI * PI,
            lipschitz: PI * 2f64.sqrt(),
        }
    }

    /// `v1` on the negative side of `interface`, `v2` on the other.
    pub fn piecewise_constant(interface: Interface, v1: f64, v2: f64) -> Self {
        TestFunction {
            kind: FunctionKind::Custom,
            piece1: Arc::new(move |_, _| v1),
            piece2: Arc::new(move |_, _| v2),
            interface: Some(interface),
            jump_bound: (v2 - v1).abs(),
            curvature_bound: 0.0,
            lipschitz: 0.0,
        }
    }

    pub fn custom(piece1: Piece, piece2: Piece, interface: Option<Interface>) -> Self {
        TestFunction {
            kind: FunctionKind::Custom,
            piece1,
            piece2,
            interface,
            jump_bound: 0.0,
            curvature_bound: 0.0,
            lipschitz: 0.0,
        }
    }

    pub fn with_kind(mut self, kind: FunctionKind) -> Self {
        self.kind = kind;
        self
    }

    /// Whether `(x, y)` lies in the region of the first piece.
    pub fn in_first(&self, x: f64, y: f64) -> bool {
        self.interface.map_or(true, |c| c.level(x, y) < 0.0)
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        if self.in_first(x, y) {
            (self.piece1)(x, y)
        } else {
            (self.piece2)(x, y)
        }
    }

    /// `|f1 - f2|` at a point (meaningful on the curve).
    pub fn jump_at(&self, x: f64, y: f64) -> f64 {
        ((self.piece1)(x, y) - (self.piece2)(x, y)).abs()
    }
}

/// Cell averages of `f` with the number of crossed cells whose adaptive
/// quadrature stopped at the depth limit.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub grid: CellGrid,
    pub warnings: usize,
}

/// Cell averages of `f` on an `n × n` grid.
pub fn discretize(f: &TestFunction, n: usize, quad_order: usize) -> Result<CellGrid> {
    let d = discretize_with_report(f, n, quad_order)?;
    if d.warnings > 0 {
        log::warn!("{} crossed cell(s) hit the quadrature depth limit", d.warnings);
    }
    Ok(d.grid)
}

pub fn discretize_with_report(f: &TestFunction, n: usize, quad_order: usize) -> Result<Discretization> {
    if n < 4 {
        return Err(Error::InvalidSize(n));
    }
    if quad_order < 2 {
        return Err(Error::InvalidArgument(format!("quad_order {quad_order} < 2")));
    }
    let h = 1.0 / n as f64;
    let gl = GaussLegendre::new(quad_order);
    let results: Vec<(f64, usize)> = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k % n + 1, k / n + 1);
            let rect = Rect::new((i - 1) as f64 * h, i as f64 * h, (j - 1) as f64 * h, j as f64 * h);
            cell_average(f, &rect, &gl)
        })
        .collect();
    let warnings = results.iter().map(|r| r.1).sum();
    let grid = CellGrid::new(n, results.into_iter().map(|r| r.0).collect())?;
    Ok(Discretization { grid, warnings })
}

/// Average of `f` over `rect` and the number of depth-limit warnings.
pub fn cell_average(f: &TestFunction, rect: &Rect, gl: &GaussLegendre) -> (f64, usize) {
    let (points, warnings) = match &f.interface {
        Some(c) if c.may_cross(rect) => cut_cell_rule(c, rect, gl, CutOptions::default()),
        Some(c) => {
            let (cx, cy) = rect.center();
            (tensor_rule(rect, gl, c.level(cx, cy) < 0.0), 0)
        }
        None => (tensor_rule(rect, gl, true), 0),
    };
    let sum: f64 = points
        .iter()
        .map(|p| {
            let v = if p.negative { (f.piece1)(p.x, p.y) } else { (f.piece2)(p.x, p.y) };
            p.w * v
        })
        .sum();
    (sum / rect.area(), warnings)
}
