//! Convergence benchmark: error measures per resolution and observed
//! orders between consecutive resolutions.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::catalog::{discretize, TestFunction};
use crate::curve::{curve_distance, CurveTarget};
use crate::grid::fmt17;
use crate::pipeline::{run_pipeline, PipelineConfig, PipelineOutput, StageError};
use crate::reconstruct::{field_error, graph_hausdorff, FieldRegion};

/// Default Gauss–Legendre order used to discretize catalog functions.
pub const DEFAULT_QUAD_ORDER: usize = 6;

/// Errors measured for one resolution. Curve columns are absent for data
/// without a jump.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub first_hausdorff: Option<f64>,
    pub enhanced_hausdorff: Option<f64>,
    /// Curve points within `3h` of the boundary of the square excluded.
    pub enhanced_clipped_hausdorff: Option<f64>,
    /// Max `|f - f̃|` at sample points at least `3h` from the true curve.
    pub far_field_error: f64,
    /// Max `|f - f̃|` at sample points between `h/2` and `3h` from it.
    pub near_band_error: Option<f64>,
    pub graph_hausdorff: f64,
}

/// `log2(e_prev / e) / log2(n / n_prev)`.
pub fn observed_order(n_prev: usize, e_prev: f64, n: usize, e: f64) -> f64 {
    (e_prev / e).log2() / (n as f64 / n_prev as f64).log2()
}

/// Measures one pipeline output against the function it was built from.
/// Field errors use the cell-centered `4n × 4n` sample grid; the graph
/// distance uses `4n + 1` points per axis.
pub fn measure(f: &TestFunction, n: usize, out: &PipelineOutput) -> BenchRow {
    let h = 1.0 / n as f64;
    let clip = 3.0 * h;
    let truth = f.interface.as_ref();
    let curve = |c: &crate::curve::ImplicitCurve| truth.map(|t| curve_distance(&c.polylines, CurveTarget::Analytic(t), clip));
    let first = out.first_stage.as_ref().and_then(curve);
    let enhanced = out.curve.as_ref().and_then(curve);
    let r = &out.reconstruction;
    let m = 4 * n;
    let (far_field_error, _) = field_error(r, f, m, FieldRegion::Far(3.0 * h));
    let near_band_error = truth.map(|_| field_error(r, f, m, FieldRegion::Band(0.5 * h, 3.0 * h)).0);
    BenchRow {
        n,
        first_hausdorff: first.map(|c| c.hausdorff),
        enhanced_hausdorff: enhanced.map(|c| c.hausdorff),
        enhanced_clipped_hausdorff: enhanced.map(|c| c.clipped_hausdorff),
        far_field_error,
        near_band_error,
        graph_hausdorff: graph_hausdorff(r, f, m + 1),
    }
}

/// Rows for every resolution that completed, in the order given, and the
/// first failure if any. Resolutions run concurrently.
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub failure: Option<(usize, StageError)>,
}

pub fn run_benchmark(f: &TestFunction, ns: &[usize], cfg: &PipelineConfig, quad_order: usize) -> BenchReport {
    let results: Vec<Result<BenchRow, StageError>> = ns
        .par_iter()
        .map(|&n| {
            let g = discretize(f, n, quad_order).map_err(|source| StageError {
                stage: crate::pipeline::Stage::Detection,
                source,
            })?;
            let out = run_pipeline(&g, cfg)?;
            Ok(measure(f, n, &out))
        })
        .collect();
    let mut rows = Vec::new();
    for (&n, r) in ns.iter().zip(results) {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => {
                return BenchReport {
                    rows,
                    failure: Some((n, e)),
                }
            }
        }
    }
    BenchReport { rows, failure: None }
}

/// Column names of [`report_csv`].
pub const CSV_HEADER: &str = "n,first_hausdorff,enhanced_hausdorff,enhanced_clipped_hausdorff,far_field_error,\
near_band_error,graph_hausdorff,order_first,order_enhanced,order_enhanced_clipped,order_far_field,\
order_near_band,order_graph";

/// Plot-ready CSV. Orders compare each row with the previous one and are
/// empty on the first row or where a value is missing.
pub fn report_csv(rows: &[BenchRow]) -> String {
    let cell = |v: Option<f64>| v.map(fmt17).unwrap_or_default();
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for (k, r) in rows.iter().enumerate() {
        let values = |row: &BenchRow| {
            [
                row.first_hausdorff,
                row.enhanced_hausdorff,
                row.enhanced_clipped_hausdorff,
                Some(row.far_field_error),
                row.near_band_error,
                Some(row.graph_hausdorff),
            ]
        };
        let cur = values(r);
        let orders: Vec<Option<f64>> = match k.checked_sub(1).map(|p| &rows[p]) {
            Some(prev) => values(prev)
                .iter()
                .zip(&cur)
                .map(|(a, b)| match (a, b) {
                    (Some(a), Some(b)) => Some(observed_order(prev.n, *a, r.n, *b)),
                    _ => None,
                })
                .collect(),
            None => vec![None; cur.len()],
        };
        write!(s, "{}", r.n).unwrap();
        for v in cur.iter().chain(&orders) {
            write!(s, ",{}", cell(*v)).unwrap();
        }
        s.push('\n');
    }
    s
}
