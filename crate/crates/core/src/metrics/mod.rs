//! Explanation quality metrics.

mod curves;
mod edges;
mod report;

pub use curves::{deletion_curve, insertion_curve, Curve, CurveMode, PIXEL_BLUR_SIGMA};
pub use edges::{
    detect_edges, detect_edges_with, gaussian_blur, gaussian_blur_plane, hallucination_score, EdgeMap, EdgeParams,
};
pub use report::{metrics_report, MetricsReport, SCHEMA_VERSION};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::linear::Coefficients;
use crate::model::Classifier;

/// `Φ_c(x̂) / Φ_c(x)`. May exceed 1.
pub fn retained_probability(model: &dyn Classifier, x: &Image, x_hat: &Image, class: usize) -> Result<f64> {
    model.check_class(class)?;
    let base = model.predict(x)?[class];
    if !(base > 0.0) {
        return Err(Error::Degenerate(format!("class {class} has zero probability on the input")));
    }
    Ok(model.predict(x_hat)?[class] / base)
}

fn check_mask(coeffs: &Coefficients, mask: &[f64]) -> Result<()> {
    if mask.len() != coeffs.len() {
        return Err(Error::shape(coeffs.len(), mask.len()));
    }
    Ok(())
}

/// `exp` of the Shannon entropy (natural log) of the squared magnitudes
/// normalized to sum 1.
fn extent(energies: impl Iterator<Item = f64> + Clone) -> Option<f64> {
    let total: f64 = energies.clone().sum();
    if !(total > 0.0) {
        return None;
    }
    let h: f64 = energies
        .filter(|&e| e > 0.0)
        .map(|e| {
            let p = e / total;
            -p * p.ln()
        })
        .sum();
    Some(h.exp())
}

/// Ratio of entropy extents of the masked and unmasked coefficients. The mask
/// is shared across color channels.
pub fn cp_entropy_retained_info(coeffs: &Coefficients, mask: &[f64]) -> Result<f64> {
    check_mask(coeffs, mask)?;
    let n = coeffs.len();
    let full = extent(coeffs.data().iter().map(|c| c * c))
        .ok_or_else(|| Error::Degenerate("coefficients have zero energy".into()))?;
    let masked = extent(
        coeffs
            .data()
            .iter()
            .enumerate()
            .map(move |(i, c)| (mask[i % n] * c).powi(2)),
    )
    .ok_or_else(|| Error::Degenerate("masked coefficients have zero energy".into()))?;
    Ok(masked / full)
}

/// `‖m⊙c‖₁ / ‖c‖₁`.
pub fn cp_l1_retained_info(coeffs: &Coefficients, mask: &[f64]) -> Result<f64> {
    check_mask(coeffs, mask)?;
    let n = coeffs.len();
    let total: f64 = coeffs.data().iter().map(|c| c.abs()).sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("coefficients have zero l1 norm".into()));
    }
    let kept: f64 = coeffs
        .data()
        .iter()
        .enumerate()
        .map(|(i, c)| (mask[i % n] * c).abs())
        .sum();
    Ok(kept / total)
}

/// `‖x̂‖₁ / ‖x‖₁` in pixel space.
pub fn cp_l1_pixel_retained_info(x: &Image, x_hat: &Image) -> Result<f64> {
    x.check_shape(x_hat)?;
    let total = x.l1_norm();
    if !(total > 0.0) {
        return Err(Error::Degenerate("input image has zero l1 norm".into()));
    }
    Ok(x_hat.l1_norm() / total)
}

pub fn cp_score(retained_prob: f64, retained_info: f64) -> Result<f64> {
    if !(retained_info > 0.0) {
        return Err(Error::Degenerate("retained information is zero".into()));
    }
    Ok(retained_prob / retained_info)
}
