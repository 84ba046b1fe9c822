//! The classifier contract, a small trainable conv net, and the synthetic
//! pattern dataset it is trained on.

mod checkpoint;
mod convnet;
mod dataset;
mod train;

pub use checkpoint::{checkpoint_bytes, load_checkpoint, parse_checkpoint, save_checkpoint};
pub use convnet::{ConvNetShape, TinyConvNet};
pub use dataset::{generate_dataset, generate_scene, Clutter, PatchBox, Scene, SyntheticSample, PATTERN_NAMES};
pub use train::{accuracy, train, TrainConfig, TrainReport};

use crate::error::{Error, Result};
use crate::image::Image;

/// A differentiable image classifier returning class probabilities.
pub trait Classifier: Send + Sync {
    fn num_classes(&self) -> usize;

    /// `(height, width, channels)` the model accepts.
    fn input_shape(&self) -> (usize, usize, usize);

    fn predict(&self, img: &Image) -> Result<Vec<f64>>;

    /// Gradient of the probability of `class` with respect to the pixels.
    fn input_gradient(&self, img: &Image, class: usize) -> Result<Image>;

    /// Probabilities and the gradient of `class` in one pass.
    fn predict_with_gradient(&self, img: &Image, class: usize) -> Result<(Vec<f64>, Image)> {
        Ok((self.predict(img)?, self.input_gradient(img, class)?))
    }

    fn check_input(&self, img: &Image) -> Result<()> {
        let want = self.input_shape();
        if img.shape() != want {
            return Err(Error::shape(format!("{want:?}"), format!("{:?}", img.shape())));
        }
        Ok(())
    }

    fn check_class(&self, class: usize) -> Result<()> {
        if class >= self.num_classes() {
            return Err(Error::InvalidArgument(format!(
                "class {class} out of range for {} classes",
                self.num_classes()
            )));
        }
        Ok(())
    }
}

/// Probabilities from the model; same as [`Classifier::predict`].
pub fn predict<C: Classifier + ?Sized>(model: &C, img: &Image) -> Result<Vec<f64>> {
    model.predict(img)
}

pub fn input_gradient<C: Classifier + ?Sized>(model: &C, img: &Image, class: usize) -> Result<Image> {
    model.input_gradient(img, class)
}

pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
