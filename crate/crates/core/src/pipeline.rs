//! Staged pipeline from cell averages to the piecewise reconstruction, and
//! the on-disk bundle it produces.

use std::fs;
use std::path::Path;

use log::{info, warn};
use serde::Serialize;

use crate::curve::{enhanced_curve, first_stage_curve, CurveStage, ImplicitCurve, MeshFit, FIRST_STAGE_SPACING};
use crate::edge::{chain_arcs, ArcChain};
use crate::error::Error;
use crate::grid::{fmt17, CellGrid};
use crate::reconstruct::{build_reconstruction, fit_cell_average_ls, PiecewiseReconstruction, ReconMethod, Side};
use crate::signature::{compute_signature, detect, estimate_delta, CellPartition, Threshold};

/// Pipeline stage, used to classify failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Detection,
    Edge,
    Curve,
    Reconstruction,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Detection => "detection",
            Stage::Edge => "edge",
            Stage::Curve => "curve",
            Stage::Reconstruction => "reconstruction",
        }
    }

    /// Process exit code reported by the command-line driver.
    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Detection => 2,
            Stage::Edge => 3,
            Stage::Curve => 4,
            Stage::Reconstruction => 5,
        }
    }
}

/// A failure tagged with the stage it came from.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{} stage failed: {source}", .stage.name())]
pub struct StageError {
    pub stage: Stage,
    pub source: Error,
}

fn at(stage: Stage) -> impl Fn(Error) -> StageError {
    move |source| StageError { stage, source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    Theoretical,
    Relative,
}

/// Parameters of one pipeline run.
#[derive(Debug, Clone, Serialize)]
pub struct PipelineConfig {
    pub threshold_mode: ThresholdMode,
    pub hc_prime: f64,
    pub rho: f64,
    pub stride: usize,
    pub mesh_mult: f64,
    pub mesh_fit: MeshFit,
    pub curve_stage: CurveStage,
    pub first_stage_spacing: f64,
    pub recon: ReconMethod,
    /// Knot spacing of the least-squares path; `2h` when absent.
    pub ls_spacing: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            threshold_mode: ThresholdMode::Theoretical,
            hc_prime: 0.04,
            rho: 0.1,
            stride: 1,
            mesh_mult: 1.0,
            mesh_fit: MeshFit::QuasiInterpolation,
            curve_stage: CurveStage::Enhanced,
            first_stage_spacing: FIRST_STAGE_SPACING,
            recon: ReconMethod::Quasi,
            ls_spacing: None,
        }
    }
}

/// Everything a run produced. Detection artifacts are absent when the data
/// has no detectable jump and the reconstruction is a single side.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub partition: Option<CellPartition>,
    pub chain: Option<ArcChain>,
    pub first_stage: Option<ImplicitCurve>,
    pub curve: Option<ImplicitCurve>,
    pub reconstruction: PiecewiseReconstruction,
}

fn is_constant(g: &CellGrid) -> bool {
    let v0 = g.values()[0];
    g.values().iter().all(|&v| v == v0)
}

/// Runs detection, edge fitting, curve construction and reconstruction.
///
/// When no neighbour difference exceeds the jump floor (theoretical mode)
/// the data is treated as smooth and reconstructed as a single side. A
/// constant grid carries no information about a jump either way and fails
/// at detection.
pub fn run_pipeline(g: &CellGrid, cfg: &PipelineConfig) -> Result<PipelineOutput, StageError> {
    let detect_err = at(Stage::Detection);
    let sig = compute_signature(g).map_err(&detect_err)?;
    let threshold = match cfg.threshold_mode {
        ThresholdMode::Theoretical => match estimate_delta(g, cfg.hc_prime) {
            Ok(delta) => Some(Threshold::Theoretical { delta }),
            Err(Error::NoJumpDetected { .. }) if !is_constant(g) => None,
            Err(e) => return Err(detect_err(e)),
        },
        ThresholdMode::Relative => Some(Threshold::Relative { rho: cfg.rho }),
    };
    let Some(threshold) = threshold else {
        info!("no jump above the floor; reconstructing a single side");
        let reconstruction = reconstruct(g, None, cfg)?;
        return Ok(PipelineOutput {
            partition: None,
            chain: None,
            first_stage: None,
            curve: None,
            reconstruction,
        });
    };
    let partition = detect(g, &sig, threshold).map_err(&detect_err)?;
    info!(
        "detection: {} irregular cells, delta {}",
        partition.cells(crate::signature::Label::U0).len(),
        partition.delta_est
    );

    let first_stage = first_stage_curve(&partition, cfg.first_stage_spacing).map_err(at(Stage::Curve))?;
    let (chain, curve) = match cfg.curve_stage {
        CurveStage::First => (None, first_stage.clone()),
        CurveStage::Enhanced => {
            let chain = chain_arcs(&partition, g, cfg.stride).map_err(at(Stage::Edge))?;
            if !chain.skipped.is_empty() {
                warn!("edge fitting skipped anchors: {}", chain.skip_summary());
            }
            info!("edge fitting: {} arcs", chain.arcs.len());
            let curve = enhanced_curve(&chain, &partition, cfg.mesh_mult, cfg.mesh_fit).map_err(at(Stage::Curve))?;
            (Some(chain), curve)
        }
    };
    info!("curve: {} polylines", curve.polylines.len());
    let reconstruction = reconstruct(g, Some(curve.clone()), cfg)?;
    Ok(PipelineOutput {
        partition: Some(partition),
        chain,
        first_stage: Some(first_stage),
        curve: Some(curve),
        reconstruction,
    })
}

fn reconstruct(g: &CellGrid, curve: Option<ImplicitCurve>, cfg: &PipelineConfig) -> Result<PiecewiseReconstruction, StageError> {
    match cfg.recon {
        ReconMethod::Quasi => build_reconstruction(g, curve),
        ReconMethod::Ls => fit_cell_average_ls(g, curve, cfg.ls_spacing.unwrap_or(2.0 * g.h())),
    }
    .map_err(at(Stage::Reconstruction))
}

/// Versions recorded in every manifest.
pub fn versions() -> serde_json::Value {
    serde_json::json!({ "cellrecon": env!("CARGO_PKG_VERSION") })
}

/// Samples `f̃` at the vertices of a `(m+1) × (m+1)` grid as `x,y,value`.
pub fn evaluation_csv(r: &PiecewiseReconstruction, m: usize) -> String {
    let mut out = String::from("x,y,value\n");
    for j in 0..=m {
        for i in 0..=m {
            let (x, y) = (i as f64 / m as f64, j as f64 / m as f64);
            let v = r.evaluate(x, y).expect("vertex inside the square");
            out.push_str(&format!("{},{},{}\n", fmt17(x), fmt17(y), fmt17(v)));
        }
    }
    out
}

fn write_json(path: &Path, v: &serde_json::Value) -> crate::error::Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)? + "\n")?;
    Ok(())
}

/// Writes the stage artifacts and the reconstruction bundle to `dir`.
/// `config` is echoed into the manifest.
pub fn write_bundle(dir: &Path, g: &CellGrid, out: &PipelineOutput, config: &serde_json::Value) -> crate::error::Result<()> {
    fs::create_dir_all(dir)?;
    g.write_csv(&dir.join("grid.csv"))?;
    let mut files = vec!["grid.csv"];
    if let Some(p) = &out.partition {
        write_json(&dir.join("partition.json"), &p.to_json())?;
        files.push("partition.json");
    }
    if let Some(c) = &out.chain {
        write_json(&dir.join("arcs.json"), &c.to_json())?;
        fs::write(dir.join("points.csv"), c.points_csv())?;
        files.extend(["arcs.json", "points.csv"]);
    }
    if let Some(c) = &out.first_stage {
        fs::write(dir.join("curve_first.csv"), c.to_csv())?;
        files.push("curve_first.csv");
    }
    if let Some(c) = &out.curve {
        fs::write(dir.join("curve.csv"), c.to_csv())?;
        write_json(&dir.join("curve_spline.json"), &c.to_json())?;
        files.extend(["curve.csv", "curve_spline.json"]);
    }
    let r = &out.reconstruction;
    for (side, tag) in [(Side::One, "side1"), (Side::Two, "side2")] {
        if let Some(m) = r.model(side) {
            write_json(&dir.join(format!("{tag}_spline.json")), &m.spline.to_json())?;
            files.push(if side == Side::One { "side1_spline.json" } else { "side2_spline.json" });
            if let Some(e) = &m.extended {
                fs::write(dir.join(format!("{tag}_extended.csv")), e.to_csv())?;
                files.push(if side == Side::One { "side1_extended.csv" } else { "side2_extended.csv" });
            }
        }
    }
    fs::write(dir.join("evaluation.csv"), evaluation_csv(r, 4 * g.n()))?;
    files.push("evaluation.csv");
    let manifest = serde_json::json!({
        "config": config,
        "versions": versions(),
        "files": files,
        "reconstruction": r.manifest(),
        "skipped_anchors": out.chain.as_ref().map(|c| c.skipped.len()),
    });
    write_json(&dir.join("manifest.json"), &manifest)
}
