//! Bundled metrics for one explanation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::{ExplainerConfig, ExplanationResult};
use crate::image::Image;
use crate::metrics::edges::{detect_edges_with, hallucination_score, EdgeParams};
use crate::metrics::{cp_entropy_retained_info, cp_l1_pixel_retained_info, cp_l1_retained_info, cp_score};

pub const SCHEMA_VERSION: u32 = 1;

/// Metric values are `None` exactly when the metric is undefined; the reason
/// is listed in `degenerate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub method: String,
    pub seed: u64,
    pub target_class: usize,
    pub original_probability: f64,
    pub retained_probability: f64,
    pub retained_probability_basis: String,
    pub cp_entropy: Option<f64>,
    pub cp_l1: Option<f64>,
    pub cp_l1_pixel: Option<f64>,
    pub retained_info_entropy: Option<f64>,
    pub retained_info_l1: Option<f64>,
    pub retained_info_l1_pixel: Option<f64>,
    pub hallucination_score: Option<f64>,
    pub hallucination_tolerance: usize,
    pub edge_params: EdgeParams,
    pub degenerate: Vec<String>,
    pub config: ExplainerConfig,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidArgument(format!("bad report json: {e}")))
    }
}

fn keep(name: &str, value: Result<f64>, degenerate: &mut Vec<String>) -> Result<Option<f64>> {
    match value {
        Ok(v) => Ok(Some(v)),
        Err(Error::Degenerate(reason)) => {
            degenerate.push(format!("{name}: {reason}"));
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// Computes every metric for `result`, an explanation of `x`.
pub fn metrics_report(
    x: &Image,
    result: &ExplanationResult,
    cfg: &ExplainerConfig,
    edges: &EdgeParams,
    tolerance: usize,
) -> Result<MetricsReport> {
    let mut degenerate = Vec::new();
    let rp = result.retained_probability;
    let info_entropy = keep(
        "retained_info_entropy",
        cp_entropy_retained_info(&result.coefficients, &result.mask),
        &mut degenerate,
    )?;
    let info_l1 = keep(
        "retained_info_l1",
        cp_l1_retained_info(&result.coefficients, &result.mask),
        &mut degenerate,
    )?;
    let info_pixel = keep(
        "retained_info_l1_pixel",
        cp_l1_pixel_retained_info(x, &result.explanation),
        &mut degenerate,
    )?;
    let mut score = |name: &str, info: Option<f64>| -> Result<Option<f64>> {
        match info {
            Some(i) => keep(name, cp_score(rp, i), &mut degenerate),
            None => Ok(None),
        }
    };
    let cp_entropy = score("cp_entropy", info_entropy)?;
    let cp_l1 = score("cp_l1", info_l1)?;
    let cp_l1_pixel = score("cp_l1_pixel", info_pixel)?;
    let img_edges = detect_edges_with(x, edges)?;
    let expl_edges = detect_edges_with(&result.explanation, edges)?;
    let hs = keep(
        "hallucination_score",
        hallucination_score(&expl_edges, &img_edges, tolerance),
        &mut degenerate,
    )?;
    Ok(MetricsReport {
        schema_version: SCHEMA_VERSION,
        method: result.method.name().to_string(),
        seed: cfg.seed,
        target_class: result.target_class,
        original_probability: result.original_probability,
        retained_probability: rp,
        retained_probability_basis: "perturbation-free explanation".into(),
        cp_entropy,
        cp_l1,
        cp_l1_pixel,
        retained_info_entropy: info_entropy,
        retained_info_l1: info_l1,
        retained_info_l1_pixel: info_pixel,
        hallucination_score: hs,
        hallucination_tolerance: tolerance,
        edge_params: *edges,
        degenerate,
        config: cfg.clone(),
    })
}
