//! Machine-readable results of an experiment run.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use subflow::geodesics::Scheme;
use subflow::Result;

use crate::config::ExperimentConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeSummary {
    pub scheme: Scheme,
    /// Mean and standard deviation of `|p|` over every stored geodesic point.
    pub mean_norm: f64,
    pub sd_norm: f64,
    /// Mean distance of the endpoints to the antipode of the base point.
    pub mean_endpoint_distance: f64,
    /// Mean and largest relative Hamiltonian drift over the geodesics.
    pub mean_relative_drift: f64,
    pub max_relative_drift: f64,
    pub geodesics: usize,
    /// Geodesics stopped early by a numerical failure.
    pub truncated: usize,
    /// Wall-clock time of this scheme's integrations.
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceRow {
    pub replicate: usize,
    pub distance: f64,
    pub residual: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceSummary {
    pub target: f64,
    pub rows: Vec<DistanceRow>,
    pub mean: f64,
    pub sd: f64,
    /// `|mean - target| / target`.
    pub relative_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub replicate: usize,
    pub base_index: usize,
    pub radius: f64,
    pub sse_centered: Option<f64>,
    pub sse_uncentered: Option<f64>,
    pub sse_tangent_pca: Option<f64>,
    /// Failures of individual fits, prefixed with the method name.
    pub failures: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub rows: Vec<CurveRow>,
    /// Medians over the replicates where the method succeeded.
    pub median_centered: f64,
    pub median_uncentered: f64,
    pub median_tangent_pca: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubmanifoldSummary {
    pub base: Vec<f64>,
    pub radius: f64,
    pub points: usize,
    pub truncated: usize,
    /// Mean distance of the generated points to the true surface, when known.
    pub mean_surface_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartSummary {
    pub submanifold: SubmanifoldSummary,
    /// Spearman correlation of each chart coordinate with the surface profile parameter.
    pub spearman: Vec<f64>,
    pub mean_projection_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSummary {
    pub submanifolds: Vec<SubmanifoldSummary>,
    /// Observations with a combined estimate.
    pub combined: usize,
    /// Observations farther than `epsilon` from every submanifold.
    pub out_of_range: usize,
    pub mean_combined_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Metrics {
    Geodesics { schemes: Vec<SchemeSummary> },
    Distance(DistanceSummary),
    Curves(CurveSummary),
    Chart(ChartSummary),
    Surface(SurfaceSummary),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub wall_clock_s: f64,
    pub metrics: Metrics,
}

/// A report together with the CSV tables produced alongside it.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: RunReport,
    /// `(file name, contents)`.
    pub artifacts: Vec<(String, Vec<u8>)>,
}

impl RunOutput {
    /// Write `report.json` and every artifact into `dir`, creating it if needed.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(&self.report).expect("reports are always serializable");
        fs::write(dir.join("report.json"), json)?;
        for (name, bytes) in &self.artifacts {
            fs::write(dir.join(name), bytes)?;
        }
        Ok(())
    }
}
