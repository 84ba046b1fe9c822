//! Mask explanations for image classifiers over shearlet, wavelet and pixel
//! representations, with the metrics used to judge them.

pub mod error;
pub mod explain;
pub mod image;
pub mod linear;
pub mod metrics;
pub mod model;
pub mod parallel;
pub mod rng;
pub mod transforms;

pub use error::{Error, Result};
pub use image::{load_image, save_image, Image};
pub use linear::{Coefficients, LinearRep, PixelRep};
pub use rng::Rng;
