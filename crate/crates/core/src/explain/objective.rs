use super::config::{ExplainerConfig, PenaltyNorm};
use super::noise::PerturbationBatch;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::linear::{Coefficients, LinearRep};
use crate::model::Classifier;
use crate::parallel;

/// One image prepared for mask optimization: its coefficients in the chosen
/// representation and the class being explained.
pub struct MaskProblem<'a> {
    pub rep: &'a dyn LinearRep,
    pub model: &'a dyn Classifier,
    pub coeffs: Coefficients,
    pub class: usize,
}

/// Objective value with its pieces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveParts {
    /// Monte Carlo mean of the class probability under perturbation.
    pub probability: f64,
    /// Mask penalty before weighting.
    pub mask_penalty: f64,
    /// Spatial penalty before weighting (0 when its weight is 0).
    pub spatial_penalty: f64,
    pub value: f64,
}

impl<'a> MaskProblem<'a> {
    pub fn new(rep: &'a dyn LinearRep, model: &'a dyn Classifier, x: &Image, class: usize) -> Result<Self> {
        rep.check_image(x)?;
        model.check_input(x)?;
        model.check_class(class)?;
        Ok(Self {
            rep,
            model,
            coeffs: rep.analyze(x)?,
            class,
        })
    }

    fn image(&self, planes: Vec<Vec<f64>>) -> Image {
        Image::from_planes(self.rep.height(), self.rep.width(), planes).expect("representation shape")
    }

    /// The perturbation-free masked image `synthesize(m ⊙ c)`.
    pub fn masked_image(&self, mask: &[f64]) -> Image {
        let planes = self
            .coeffs
            .blocks()
            .map(|c| {
                self.rep.synthesize_plane_streamed(&mut |range, out| {
                    for ((o, &m), &v) in out.iter_mut().zip(&mask[range.clone()]).zip(&c[range]) {
                        *o = m * v;
                    }
                })
            })
            .collect();
        self.image(planes)
    }

    /// Objective and its gradient with respect to the mask:
    /// `mean_u Φ(synth(m⊙c + (1−m)⊙u)) − λ₁·P(m) − λ₂·S(synth(m⊙c))`.
    pub fn evaluate(
        &self,
        mask: &[f64],
        noise: &PerturbationBatch,
        cfg: &ExplainerConfig,
    ) -> Result<(ObjectiveParts, Vec<f64>)> {
        let len = self.rep.coeff_len();
        if mask.len() != len {
            return Err(Error::shape(len, mask.len()));
        }
        if noise.len() != len || noise.channels() != self.coeffs.channels() {
            return Err(Error::shape(
                format!("{}x{len}", self.coeffs.channels()),
                format!("{}x{}", noise.channels(), noise.len()),
            ));
        }
        let mc = noise.samples();
        let channels = self.coeffs.channels();
        let (prob_sum, mut grad) = if channels == 1 && !parallel::is_parallel() {
            // Same sums in the same order as the folded path, without the
            // per-sample buffer.
            let mut buf = vec![0.0; len];
            let mut grad = vec![0.0; len];
            let mut prob_sum = 0.0;
            for s in 0..mc {
                prob_sum += self.sample_term(mask, noise, s, &mut buf, &mut grad, true)?;
            }
            (prob_sum, grad)
        } else {
            let (prob_sum, grad, failure) = parallel::fold_with_scratch(
                mc,
                || SampleScratch {
                    noise: vec![0.0; len * channels],
                    contrib: vec![0.0; len],
                },
                |s, scratch| self.sample_term(mask, noise, s, &mut scratch.noise, &mut scratch.contrib, false),
                (0.0, vec![0.0; len], None),
                |acc: &mut (f64, Vec<f64>, Option<Error>), item, scratch| match item {
                    Ok(p) => {
                        acc.0 += p;
                        for (a, v) in acc.1.iter_mut().zip(&scratch.contrib) {
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
            (prob_sum, grad)
        };
        let scale = 1.0 / mc as f64;
        for g in &mut grad {
            *g *= scale;
        }
        let probability = prob_sum * scale;

        let (w1, w2) = match cfg.penalty_norm {
            PenaltyNorm::Mean => (
                1.0 / len as f64,
                1.0 / (self.rep.height() * self.rep.width() * self.coeffs.channels()) as f64,
            ),
            PenaltyNorm::Sum => (1.0, 1.0),
        };
        let mask_penalty = w1 * mask.iter().sum::<f64>();
        let lambda1 = cfg.lambda1;
        for g in &mut grad {
            *g -= lambda1 * w1;
        }

        let lambda2 = cfg.effective_lambda2();
        let mut spatial_penalty = 0.0;
        if lambda2 != 0.0 {
            let base = self.masked_image(mask);
            spatial_penalty = w2 * base.l1_norm();
            for (color, c) in self.coeffs.blocks().enumerate() {
                let signs: Vec<f64> = base.plane(color).iter().map(|&v| sign(v)).collect();
                self.rep.synthesize_adjoint_plane_streamed(&signs, &mut |range, a| {
                    for ((g, &av), &cv) in grad[range.clone()].iter_mut().zip(a).zip(&c[range]) {
                        *g -= lambda2 * w2 * av * cv;
                    }
                });
            }
        }

        let value = probability - lambda1 * mask_penalty - lambda2 * spatial_penalty;
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence {
                step: noise.step(),
                context: "non-finite mask objective".into(),
            });
        }
        Ok((
            ObjectiveParts {
                probability,
                mask_penalty,
                spatial_penalty,
                value,
            },
            grad,
        ))
    }

    /// Returns `Φ(x̂_s)` for draw `s` and writes
    /// `synth*(∂Φ/∂x̂_s) ⊙ (c − u_s)` to `contrib`, or adds it when
    /// `accumulate` is set. `noise_buf` holds the draw between the passes.
    fn sample_term(
        &self,
        mask: &[f64],
        noise: &PerturbationBatch,
        s: usize,
        noise_buf: &mut [f64],
        contrib: &mut [f64],
        accumulate: bool,
    ) -> Result<f64> {
        let len = self.rep.coeff_len();
        let mut planes = Vec::with_capacity(self.coeffs.channels());
        for (color, c) in self.coeffs.blocks().enumerate() {
            let u_color = &mut noise_buf[color * len..(color + 1) * len];
            planes.push(self.rep.synthesize_plane_streamed(&mut |range, out| {
                let u_block = &mut u_color[range.clone()];
                noise.fill(s, color, range.clone(), u_block);
                for (((o, &m), &cv), &uv) in out.iter_mut().zip(&mask[range.clone()]).zip(&c[range.clone()]).zip(&*u_block) {
                    *o = m * cv + (1.0 - m) * uv;
                }
            }));
        }
        let x_hat = self.image(planes);
        let (probs, g) = self.model.predict_with_gradient(&x_hat, self.class)?;
        for (color, c) in self.coeffs.blocks().enumerate() {
            let u_color = &noise_buf[color * len..(color + 1) * len];
            self.rep.synthesize_adjoint_plane_streamed(g.plane(color), &mut |range, a| {
                let terms = contrib[range.clone()]
                    .iter_mut()
                    .zip(a)
                    .zip(&c[range.clone()])
                    .zip(&u_color[range.clone()]);
                if color == 0 && !accumulate {
                    for (((d, &av), &cv), &uv) in terms {
                        *d = av * (cv - uv);
                    }
                } else {
                    for (((d, &av), &cv), &uv) in terms {
                        *d += av * (cv - uv);
                    }
                }
            });
        }
        Ok(probs[self.class])
    }
}

struct SampleScratch {
    noise: Vec<f64>,
    contrib: Vec<f64>,
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Objective value and mask gradient for one fixed perturbation batch.
pub fn objective_and_grad(
    rep: &dyn LinearRep,
    model: &dyn Classifier,
    x: &Image,
    mask: &[f64],
    noise: &PerturbationBatch,
    cfg: &ExplainerConfig,
    class: usize,
) -> Result<(f64, Vec<f64>)> {
    let problem = MaskProblem::new(rep, model, x, class)?;
    let (parts, grad) = problem.evaluate(mask, noise, cfg)?;
    Ok((parts.value, grad))
}
