//! Smooth pixel masks: a coarse latent grid squashed by a logistic,
//! upsampled bilinearly and blurred, optimized for class probability under
//! a soft area constraint.

use super::config::{ExplainerConfig, Method};
use super::noise::NoiseModel;
use super::optimize::{Adam, ExplanationResult};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::linear::{LinearRep, PixelRep};
use crate::model::{argmax, Classifier};
use crate::parallel;

/// Dense `n × grid` matrix taking a latent axis to pixels: bilinear
/// upsampling with half-pixel centers followed by a row-normalized
/// Gaussian blur. Every row is a convex combination.
pub fn upsampling_operator(n: usize, grid: usize, sigma: f64) -> Vec<f64> {
    let mut up = vec![0.0; n * grid];
    let scale = grid as f64 / n as f64;
    for i in 0..n {
        let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (grid - 1) as f64);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(grid - 1);
        let t = pos - lo as f64;
        up[i * grid + lo] += 1.0 - t;
        up[i * grid + hi] += t;
    }
    let mut out = vec![0.0; n * grid];
    for i in 0..n {
        let weights: Vec<f64> = (0..n)
            .map(|j| (-((i as f64 - j as f64).powi(2)) / (2.0 * sigma * sigma)).exp())
            .collect();
        let total: f64 = weights.iter().sum();
        for (j, w) in weights.iter().enumerate() {
            let w = w / total;
            if w < 1e-300 {
                continue;
            }
            for g in 0..grid {
                out[i * grid + g] += w * up[j * grid + g];
            }
        }
    }
    out
}

/// `M = L_y · S · L_xᵀ` with `S` of shape `grid × grid`.
struct SmoothMask {
    height: usize,
    width: usize,
    grid: usize,
    ly: Vec<f64>,
    lx: Vec<f64>,
}

impl SmoothMask {
    fn new(height: usize, width: usize, grid: usize) -> Self {
        let sigma_y = height as f64 / grid as f64 / 2.0;
        let sigma_x = width as f64 / grid as f64 / 2.0;
        Self {
            height,
            width,
            grid,
            ly: upsampling_operator(height, grid, sigma_y),
            lx: upsampling_operator(width, grid, sigma_x),
        }
    }

    fn render(&self, s: &[f64]) -> Vec<f64> {
        let (h, w, g) = (self.height, self.width, self.grid);
        // t = S · L_xᵀ, grid × width
        let mut t = vec![0.0; g * w];
        for a in 0..g {
            for x in 0..w {
                t[a * w + x] = (0..g).map(|b| s[a * g + b] * self.lx[x * g + b]).sum();
            }
        }
        let mut m = vec![0.0; h * w];
        for y in 0..h {
            for a in 0..g {
                let coef = self.ly[y * g + a];
                if coef == 0.0 {
                    continue;
                }
                for (mv, tv) in m[y * w..(y + 1) * w].iter_mut().zip(&t[a * w..(a + 1) * w]) {
                    *mv += coef * tv;
                }
            }
        }
        m
    }

    /// `L_yᵀ · D · L_x`, the gradient with respect to `S` given `D = ∂/∂M`.
    fn pullback(&self, d: &[f64]) -> Vec<f64> {
        let (h, w, g) = (self.height, self.width, self.grid);
        // r = L_yᵀ · D, grid × width
        let mut r = vec![0.0; g * w];
        for y in 0..h {
            for a in 0..g {
                let coef = self.ly[y * g + a];
                if coef == 0.0 {
                    continue;
                }
                for (rv, dv) in r[a * w..(a + 1) * w].iter_mut().zip(&d[y * w..(y + 1) * w]) {
                    *rv += coef * dv;
                }
            }
        }
        let mut out = vec![0.0; g * g];
        for a in 0..g {
            for b in 0..g {
                out[a * g + b] = (0..w).map(|x| r[a * w + x] * self.lx[x * g + b]).sum();
            }
        }
        out
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Minimizes `−mean_u Φ(x⊙m + (1−m)⊙u) + w·(mean(m) − area)²` over the
/// latent grid with Adam from a zero latent. The explanation is `x ⊙ m`;
/// the loss trace holds this (minimized) loss.
pub fn smooth_pixel_mask_explain(
    model: &dyn Classifier,
    x: &Image,
    cfg: &ExplainerConfig,
) -> Result<ExplanationResult> {
    cfg.validate()?;
    model.check_input(x)?;
    let probs = model.predict(x)?;
    let class = argmax(&probs);
    let p0 = probs[class];
    if !(p0 > 0.0) {
        return Err(Error::Degenerate("class probability of the input is 0".into()));
    }
    let (h, w, channels) = x.shape();
    let n = h * w;
    let rep = PixelRep::new(h, w);
    let coeffs = rep.analyze(x)?;
    let noise_model = NoiseModel::fit(&coeffs, &rep.groups())?;
    let smooth = SmoothMask::new(h, w, cfg.smooth_grid);
    let g = cfg.smooth_grid;
    let mut latent = vec![0.0; g * g];
    let mut adam = Adam::new(g * g, cfg.lr);
    let mut trace = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        let squashed: Vec<f64> = latent.iter().map(|&z| sigmoid(z)).collect();
        let mask = smooth.render(&squashed);
        let noise = noise_model.batch_for_step(cfg.seed, step, cfg.mc_samples);
        let mc = cfg.mc_samples;
        let (prob_sum, mut d_mask, failure) = parallel::map_fold_ordered(
            mc,
            (0.0, vec![0.0; n], None),
            |s| -> Result<(f64, Vec<f64>)> {
                let u = noise.draw(s);
                let mut data = vec![0.0; n * channels];
                for c in 0..channels {
                    let (xc, uc) = (x.plane(c), u.block(c));
                    for i in 0..n {
                        data[c * n + i] = mask[i] * xc[i] + (1.0 - mask[i]) * uc[i];
                    }
                }
                let x_hat = Image::from_vec(h, w, channels, data)?;
                let (p, grad) = model.predict_with_gradient(&x_hat, class)?;
                let mut d = vec![0.0; n];
                for c in 0..channels {
                    let (xc, uc, gc) = (x.plane(c), u.block(c), grad.plane(c));
                    for i in 0..n {
                        d[i] -= gc[i] * (xc[i] - uc[i]);
                    }
                }
                Ok((p[class], d))
            },
            |acc: &mut (f64, Vec<f64>, Option<Error>), item| match item {
                Ok((p, d)) => {
                    acc.0 += p;
                    for (a, v) in acc.1.iter_mut().zip(&d) {
                        *a += v;
                    }
                }
                Err(e) => {
                    acc.2.get_or_insert(e);
                }
            },
        );
        if let Some(e) = failure {
            return Err(e);
        }
        let scale = 1.0 / mc as f64;
        let gap = mask.iter().sum::<f64>() / n as f64 - cfg.area;
        let area_grad = 2.0 * cfg.area_weight * gap / n as f64;
        for d in &mut d_mask {
            *d = *d * scale + area_grad;
        }
        let loss = -prob_sum * scale + cfg.area_weight * gap * gap;
        if !loss.is_finite() {
            return Err(Error::Divergence {
                step,
                context: "non-finite smooth mask loss".into(),
            });
        }
        trace.push(loss);
        let d_squashed = smooth.pullback(&d_mask);
        let d_latent: Vec<f64> = d_squashed
            .iter()
            .zip(&squashed)
            .map(|(d, s)| d * s * (1.0 - s))
            .collect();
        adam.step(&mut latent, &d_latent, false);
    }

    let squashed: Vec<f64> = latent.iter().map(|&z| sigmoid(z)).collect();
    let mask = smooth.render(&squashed);
    let explanation = Image::from_planes(
        h,
        w,
        (0..channels)
            .map(|c| x.plane(c).iter().zip(&mask).map(|(v, m)| v * m).collect())
            .collect(),
    )?;
    let p = model.predict(&explanation)?[class];
    Ok(ExplanationResult {
        method: Method::SmoothPixel,
        target_class: class,
        original_probability: p0,
        mask,
        coefficients: coeffs,
        explanation,
        loss_trace: trace,
        retained_probability: p / p0,
    })
}

/// The mask produced by a latent grid, exposed for inspection.
pub fn smooth_mask_from_latent(height: usize, width: usize, latent: &[f64]) -> Vec<f64> {
    let g = (latent.len() as f64).sqrt() as usize;
    assert_eq!(g * g, latent.len(), "latent must be square");
    let squashed: Vec<f64> = latent.iter().map(|&z| sigmoid(z)).collect();
    SmoothMask::new(height, width, g).render(&squashed)
}
