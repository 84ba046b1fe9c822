use std::ops::Range;

use super::config::{ExplainerConfig, Method};
use super::noise::NoiseModel;
use super::objective::MaskProblem;
use super::smooth::smooth_pixel_mask_explain;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::linear::{Coefficients, LinearRep, PixelRep};
use crate::model::{argmax, Classifier};
use crate::transforms::{build_shearlet_system, build_wavelet_basis, ShearletSystem, WaveletRep};

/// Adam on a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    /// Moves `params` along `grad` (ascent) or against it (descent).
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], ascend: bool) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let dir = if ascend { 1.0 } else { -1.0 };
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p += dir * self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplanationResult {
    pub method: Method,
    pub target_class: usize,
    /// Class probability of the unmasked input.
    pub original_probability: f64,
    /// One value per coefficient, shared across color channels.
    pub mask: Vec<f64>,
    /// Coefficients of the input in the representation the mask lives in.
    pub coefficients: Coefficients,
    /// `synthesize(mask ⊙ coefficients)`.
    pub explanation: Image,
    /// Objective value at every optimizer step.
    pub loss_trace: Vec<f64>,
    /// `Φ_c(explanation) / Φ_c(input)`.
    pub retained_probability: f64,
}

/// The representation a method's mask lives in.
pub enum Representation {
    Shearlet(ShearletSystem),
    Wavelet(WaveletRep),
    Pixel(PixelRep),
}

impl Representation {
    pub fn for_config(cfg: &ExplainerConfig, height: usize, width: usize) -> Result<Self> {
        Ok(match cfg.method {
            Method::Shearletx => {
                let scales = cfg.shearlet_scales.unwrap_or_else(|| default_shearlet_scales(height, width));
                Representation::Shearlet(build_shearlet_system(height, width, scales)?)
            }
            Method::Waveletx | Method::Cartoonx => {
                let levels = cfg.wavelet_levels.unwrap_or_else(|| default_wavelet_levels(height, width));
                let basis = build_wavelet_basis(&cfg.wavelet_family, levels)?;
                Representation::Wavelet(WaveletRep::new(basis, height, width)?)
            }
            Method::Pixel | Method::SmoothPixel => Representation::Pixel(PixelRep::new(height, width)),
        })
    }

    /// Renders a mask as one image plane: the per-pixel maximum over
    /// shearlet channels, the pyramid in its usual nested-quadrant layout
    /// for wavelets, and the mask itself for pixels.
    pub fn mask_heatmap(&self, mask: &[f64]) -> Result<Image> {
        let rep = self.as_rep();
        if mask.len() != rep.coeff_len() {
            return Err(Error::shape(rep.coeff_len(), mask.len()));
        }
        let (h, w) = (rep.height(), rep.width());
        let plane = match self {
            Representation::Shearlet(s) => {
                let n = s.plane_len();
                let mut out = vec![0.0f64; n];
                for channel in mask.chunks_exact(n) {
                    for (o, &m) in out.iter_mut().zip(channel) {
                        *o = o.max(m);
                    }
                }
                out
            }
            Representation::Wavelet(wr) => {
                let layout = wr.layout();
                let levels = wr.basis().levels();
                let mut out = vec![0.0; h * w];
                let mut place = |range: Range<usize>, bw: usize, (y0, x0): (usize, usize)| {
                    for (i, &m) in mask[range].iter().enumerate() {
                        out[(y0 + i / bw) * w + x0 + i % bw] = m;
                    }
                };
                place(layout.approx(), layout.block_dims(levels).1, (0, 0));
                for level in 1..=levels {
                    let (bh, bw) = layout.block_dims(level);
                    for (orientation, origin) in [(0, (0, bw)), (1, (bh, 0)), (2, (bh, bw))] {
                        place(layout.detail(level, orientation), bw, origin);
                    }
                }
                out
            }
            Representation::Pixel(_) => mask.to_vec(),
        };
        Image::from_vec(h, w, 1, plane)
    }

    pub fn as_rep(&self) -> &dyn LinearRep {
        match self {
            Representation::Shearlet(s) => s,
            Representation::Wavelet(w) => w,
            Representation::Pixel(p) => p,
        }
    }
}

/// Four scales at 256 pixels, one fewer per halving.
pub fn default_shearlet_scales(height: usize, width: usize) -> usize {
    let side = height.min(width).max(1);
    (side.ilog2() as usize).saturating_sub(4).clamp(1, 6)
}

/// Five levels at 256 pixels, one fewer per halving.
pub fn default_wavelet_levels(height: usize, width: usize) -> usize {
    let side = height.min(width).max(1);
    (side.ilog2() as usize).saturating_sub(3).max(1)
}

fn target(model: &dyn Classifier, x: &Image) -> Result<(usize, f64)> {
    let probs = model.predict(x)?;
    let class = argmax(&probs);
    let p = probs[class];
    if !(p > 0.0) {
        return Err(Error::Degenerate("class probability of the input is 0".into()));
    }
    Ok((class, p))
}

/// Optimizes a mask over `rep` by Adam ascent from all ones, clamping to
/// `[0, 1]` after every step and drawing a fresh perturbation batch per
/// step. The explained class is the model's prediction on `x`.
pub fn optimize_mask(
    rep: &dyn LinearRep,
    model: &dyn Classifier,
    x: &Image,
    cfg: &ExplainerConfig,
) -> Result<ExplanationResult> {
    cfg.validate()?;
    let (class, p0) = target(model, x)?;
    let problem = MaskProblem::new(rep, model, x, class)?;
    let noise_model = NoiseModel::fit(&problem.coeffs, &rep.groups())?;
    let len = rep.coeff_len();
    let mut mask = vec![1.0; len];
    let mut adam = Adam::new(len, cfg.lr);
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let noise = noise_model.batch_for_step(cfg.seed, step, cfg.mc_samples);
        let (parts, grad) = problem.evaluate(&mask, &noise, cfg)?;
        trace.push(parts.value);
        adam.step(&mut mask, &grad, true);
        for m in &mut mask {
            *m = m.clamp(0.0, 1.0);
        }
    }
    let explanation = problem.masked_image(&mask);
    let p = model.predict(&explanation)?[class];
    Ok(ExplanationResult {
        method: cfg.method,
        target_class: class,
        original_probability: p0,
        mask,
        coefficients: problem.coeffs,
        explanation,
        loss_trace: trace,
        retained_probability: p / p0,
    })
}

/// Unconstrained pixel mask: [`optimize_mask`] over the identity
/// representation with one noise group per color and no spatial penalty.
pub fn pixel_mask_explain(model: &dyn Classifier, x: &Image, cfg: &ExplainerConfig) -> Result<ExplanationResult> {
    let cfg = ExplainerConfig {
        method: Method::Pixel,
        ..cfg.clone()
    };
    optimize_mask(&PixelRep::new(x.height(), x.width()), model, x, &cfg)
}

/// Runs the method named in `cfg`.
pub fn explain(model: &dyn Classifier, x: &Image, cfg: &ExplainerConfig) -> Result<ExplanationResult> {
    match cfg.method {
        Method::Pixel => pixel_mask_explain(model, x, cfg),
        Method::SmoothPixel => smooth_pixel_mask_explain(model, x, cfg),
        _ => {
            let rep = Representation::for_config(cfg, x.height(), x.width())?;
            optimize_mask(rep.as_rep(), model, x, cfg)
        }
    }
}
