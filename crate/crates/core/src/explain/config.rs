use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Shearletx,
    Waveletx,
    Cartoonx,
    Pixel,
    SmoothPixel,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Shearletx,
        Method::Waveletx,
        Method::Cartoonx,
        Method::Pixel,
        Method::SmoothPixel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Shearletx => "shearletx",
            Method::Waveletx => "waveletx",
            Method::Cartoonx => "cartoonx",
            Method::Pixel => "pixel",
            Method::SmoothPixel => "smooth_pixel",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shearletx" => Ok(Method::Shearletx),
            "waveletx" => Ok(Method::Waveletx),
            "cartoonx" => Ok(Method::Cartoonx),
            "pixel" => Ok(Method::Pixel),
            "smooth" | "smooth_pixel" => Ok(Method::SmoothPixel),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
        }
    }
}

/// How the two sparsity penalties are scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyNorm {
    /// `λ₁·mean(m)` over mask entries and `λ₂·mean|x̂|` over pixel values.
    Mean,
    /// `λ₁·Σm` and `λ₂·Σ|x̂|`.
    Sum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainerConfig {
    pub method: Method,
    /// Weight of the mask sparsity penalty.
    pub lambda1: f64,
    /// Weight of the spatial ℓ1 penalty on the masked image.
    pub lambda2: f64,
    pub steps: usize,
    pub lr: f64,
    pub mc_samples: usize,
    /// Target mask area, smooth pixel masks only.
    pub area: f64,
    pub seed: u64,
    pub penalty_norm: PenaltyNorm,
    /// Shearlet scales; `None` picks a size-dependent default.
    pub shearlet_scales: Option<usize>,
    pub wavelet_family: String,
    /// Wavelet depth; `None` picks a size-dependent default.
    pub wavelet_levels: Option<usize>,
    /// Side of the latent grid of smooth pixel masks.
    pub smooth_grid: usize,
    /// Weight of the area penalty of smooth pixel masks.
    pub area_weight: f64,
}

impl ExplainerConfig {
    pub fn defaults(method: Method) -> Self {
        let (lambda1, lambda2) = match method {
            Method::Shearletx => (1.0, 2.0),
            Method::Waveletx => (1.0, 10.0),
            Method::Cartoonx => (1.0, 0.0),
            Method::Pixel => (1.0, 0.0),
            Method::SmoothPixel => (0.0, 0.0),
        };
        Self {
            method,
            lambda1,
            lambda2,
            steps: 300,
            lr: 0.1,
            mc_samples: 16,
            area: 0.2,
            seed: 0,
            penalty_norm: PenaltyNorm::Mean,
            shearlet_scales: None,
            wavelet_family: "db3".into(),
            wavelet_levels: None,
            smooth_grid: 16,
            area_weight: 10.0,
        }
    }

    /// Weight actually applied to the spatial penalty: CartoonX has none.
    pub fn effective_lambda2(&self) -> f64 {
        match self.method {
            Method::Cartoonx | Method::Pixel | Method::SmoothPixel => 0.0,
            _ => self.lambda2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) {
            return bad("lambda1 must be finite and non-negative");
        }
        if !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return bad("lambda2 must be finite and non-negative");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.mc_samples == 0 {
            return bad("mc_samples must be at least 1");
        }
        if !(self.area > 0.0 && self.area <= 1.0) {
            return bad("area must lie in (0, 1]");
        }
        if self.smooth_grid < 2 {
            return bad("smooth grid must be at least 2");
        }
        Ok(())
    }
}
