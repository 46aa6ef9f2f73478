//! Cell-average grids on the unit square and their 2-D primitive.
//!
//! Cells are indexed `(i, j)`, 1-based, with `i` along x and `j` along y:
//! cell `(i, j)` is `[(i-1)h, ih] × [(j-1)h, jh]` and its center is
//! `((i-1/2)h, (j-1/2)h)`. Storage is row-major with rows indexed by `j`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// `n × n` cell averages of a function on `[0,1]²`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGrid {
    n: usize,
    h: f64,
    values: Vec<f64>,
}

impl CellGrid {
    /// Builds a grid from row-major values (row `j` holds cells `(1..=n, j)`).
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSize(n));
        }
        if values.len() != n * n {
            return Err(Error::InvalidArgument(format!(
                "expected {} values, got {}",
                n * n,
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite value at cell ({}, {})",
                k % n + 1,
                k / n + 1
            )));
        }
        Ok(CellGrid {
            n,
            h: 1.0 / n as f64,
            values,
        })
    }

    /// Builds a grid from a function of the 1-based cell index.
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(n * n);
        for j in 1..=n {
            for i in 1..=n {
                values.push(f(i, j));
            }
        }
        Self::new(n, values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Average over cell `(i, j)`, 1-based.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!((1..=self.n).contains(&i) && (1..=self.n).contains(&j));
        self.values[(j - 1) * self.n + (i - 1)]
    }

    /// Like [`get`](Self::get) but `None` outside `1..=n`.
    pub fn try_get(&self, i: i64, j: i64) -> Option<f64> {
        let n = self.n as i64;
        if (1..=n).contains(&i) && (1..=n).contains(&j) {
            Some(self.get(i as usize, j as usize))
        } else {
            None
        }
    }

    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        cell_center(self.h, i as i64, j as i64)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> CellGrid {
        CellGrid {
            n: self.n,
            h: self.h,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &CellGrid) -> f64 {
        assert_eq!(self.n, other.n);
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// CSV text: header `n=<n>,h=<h>`, then `n` lines, line `j` holding
    /// row `j` with column `i` the x-index; reals at 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = format!("n={},h={:?}\n", self.n, self.h);
        for j in 1..=self.n {
            for i in 1..=self.n {
                if i > 1 {
                    out.push(',');
                }
                write!(out, "{}", fmt17(self.get(i, j))).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty grid file".into()))?;
        let mut n = None;
        for part in header.split(',') {
            if let Some(v) = part.trim().strip_prefix("n=") {
                n = Some(v.parse::<usize>().map_err(|e| Error::Parse(format!("bad n: {e}")))?);
            }
        }
        let n = n.ok_or_else(|| Error::Parse("missing n= in header".into()))?;
        let mut values = Vec::with_capacity(n * n);
        for (row, line) in lines.enumerate() {
            let before = values.len();
            for tok in line.split(',') {
                values.push(
                    tok.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("row {}: {e}", row + 1)))?,
                );
            }
            if values.len() - before != n {
                return Err(Error::Parse(format!("row {} has {} values", row + 1, values.len() - before)));
            }
        }
        Self::new(n, values)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

/// Center of cell `(i, j)` for any integer index (cells outside the unit
/// square included).
#[inline]
pub fn cell_center(h: f64, i: i64, j: i64) -> (f64, f64) {
    ((i as f64 - 0.5) * h, (j as f64 - 0.5) * h)
}

/// 1-based index of the cell containing coordinate `t`, clamped to `1..=n`.
pub fn containing_index(t: f64, h: f64, n: usize) -> usize {
    let k = (t / h).floor() as i64 + 1;
    k.clamp(1, n as i64) as usize
}

/// Formats a real with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Point values `F_{k,l}`, `0 ≤ k,l ≤ n`, of the 2-D primitive.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateGrid {
    n: usize,
    values: Vec<f64>,
}

impl AggregateGrid {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != (n + 1) * (n + 1) {
            return Err(Error::InvalidArgument("aggregate grid needs (n+1)^2 values".into()));
        }
        Ok(AggregateGrid { n, values })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity((n + 1) * (n + 1));
        for l in 0..=n {
            for k in 0..=n {
                values.push(f(k, l));
            }
        }
        AggregateGrid { n, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.values[l * (self.n + 1) + k]
    }
}

/// Running sum with Neumaier compensation.
#[derive(Debug, Clone, Copy, Default)]
struct Compensated {
    sum: f64,
    c: f64,
}

impl Compensated {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.c += (self.sum - t) + v;
        } else {
            self.c += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.c
    }
}

/// `F_{k,l} = h² Σ_{i≤k} Σ_{j≤l} f̄_{i,j}` with compensated summation.
pub fn aggregate(g: &CellGrid) -> AggregateGrid {
    let n = g.n();
    let h2 = g.h() * g.h();
    let mut values = vec![0.0; (n + 1) * (n + 1)];
    let mut prefix = vec![Compensated::default(); (n + 1) * (n + 1)];
    for l in 1..=n {
        let mut row = Compensated::default();
        for k in 1..=n {
            row.add(g.get(k, l));
            let mut cell = prefix[(l - 1) * (n + 1) + k];
            cell.add(row.sum);
            cell.add(row.c);
            prefix[l * (n + 1) + k] = cell;
        }
    }
    for (v, p) in values.iter_mut().zip(&prefix) {
        *v = h2 * p.value();
    }
    AggregateGrid { n, values }
}

/// `f̄_{i,j} = (F_{i,j} − F_{i−1,j} − F_{i,j−1} + F_{i−1,j−1}) / h²`.
pub fn difference(f: &AggregateGrid) -> CellGrid {
    let n = f.n();
    let h = 1.0 / n as f64;
    let inv_h2 = 1.0 / (h * h);
    let mut values = Vec::with_capacity(n * n);
    for j in 1..=n {
        for i in 1..=n {
            let d = (f.get(i, j) - f.get(i - 1, j)) - (f.get(i, j - 1) - f.get(i - 1, j - 1));
            values.push(d * inv_h2);
        }
    }
    CellGrid { n, h, values }
}
