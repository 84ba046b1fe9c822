//! Insertion and deletion curves.

use std::fmt::{self, Display};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::linear::{Coefficients, LinearRep};
use crate::metrics::edges::gaussian_blur;
use crate::model::{argmax, Classifier};
use crate::parallel;

/// Blur applied to pixels that are not yet inserted in pixel mode.
pub const PIXEL_BLUR_SIGMA: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveMode {
    Representation,
    Pixel,
}

impl Display for CurveMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CurveMode::Representation => "representation",
            CurveMode::Pixel => "pixel",
        })
    }
}

impl FromStr for CurveMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "representation" => Ok(CurveMode::Representation),
            "pixel" => Ok(CurveMode::Pixel),
            _ => Err(Error::InvalidArgument(format!("unknown curve mode {s:?}"))),
        }
    }
}

/// `(fraction, retained probability)` pairs on an even grid from 0 to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub points: Vec<(f64, f64)>,
}

impl Curve {
    pub fn fractions(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.0)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.1)
    }

    /// Smallest fraction whose retained probability is at least `level`.
    pub fn first_reaching(&self, level: f64) -> Option<f64> {
        self.points.iter().find(|p| p.1 >= level).map(|p| p.0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("fraction,retained_probability\n");
        for (f, v) in &self.points {
            out.push_str(&format!("{f},{v}\n"));
        }
        out
    }
}

/// Indices sorted by descending score; equal scores keep flat index order.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

fn grid(steps: usize) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(Error::InvalidArgument("curve needs at least one step".into()));
    }
    Ok((0..=steps).map(|i| i as f64 / steps as f64).collect())
}

struct CurveSetup {
    class: usize,
    base: f64,
    coeffs: Coefficients,
    scores: Vec<f64>,
    blurred: Option<Image>,
}

fn setup(model: &dyn Classifier, rep: &dyn LinearRep, x: &Image, mask: &[f64], mode: CurveMode) -> Result<CurveSetup> {
    rep.check_image(x)?;
    if mask.len() != rep.coeff_len() {
        return Err(Error::shape(rep.coeff_len(), mask.len()));
    }
    let probs = model.predict(x)?;
    let class = argmax(&probs);
    let base = probs[class];
    if !(base > 0.0) {
        return Err(Error::Degenerate("class probability of the input is 0".into()));
    }
    let coeffs = rep.analyze(x)?;
    let (scores, blurred) = match mode {
        CurveMode::Representation => (mask.to_vec(), None),
        CurveMode::Pixel => {
            let expl = rep.synthesize(&coeffs.masked(mask))?;
            let (h, w, _) = expl.shape();
            let mut mag = vec![0.0; h * w];
            for plane in expl.planes() {
                for (m, v) in mag.iter_mut().zip(plane) {
                    *m += v.abs();
                }
            }
            (mag, Some(gaussian_blur(x, PIXEL_BLUR_SIGMA)))
        }
    };
    Ok(CurveSetup {
        class,
        base,
        coeffs,
        scores,
        blurred,
    })
}

/// Builds the image in which exactly the entries flagged in `keep` come from
/// the input.
fn compose(rep: &dyn LinearRep, x: &Image, s: &CurveSetup, keep: &[bool]) -> Result<Image> {
    match &s.blurred {
        None => {
            let mut c = s.coeffs.clone();
            let n = c.len();
            for (i, v) in c.data_mut().iter_mut().enumerate() {
                if !keep[i % n] {
                    *v = 0.0;
                }
            }
            rep.synthesize(&c)
        }
        Some(blurred) => {
            let mut img = blurred.clone();
            let n = img.plane_len();
            for (i, v) in img.data_mut().iter_mut().enumerate() {
                if keep[i % n] {
                    *v = x.data()[i];
                }
            }
            Ok(img)
        }
    }
}

fn curve(
    model: &dyn Classifier,
    rep: &dyn LinearRep,
    x: &Image,
    mask: &[f64],
    steps: usize,
    mode: CurveMode,
    insert: bool,
) -> Result<Curve> {
    let fractions = grid(steps)?;
    let s = setup(model, rep, x, mask, mode)?;
    let order = ranking(&s.scores);
    let n = order.len();
    let values = parallel::map_indexed(fractions.len(), |i| -> Result<f64> {
        let k = (fractions[i] * n as f64).round() as usize;
        let mut keep = vec![!insert; n];
        for &j in &order[..k] {
            keep[j] = insert;
        }
        let img = compose(rep, x, &s, &keep)?;
        Ok(model.predict(&img)?[s.class] / s.base)
    });
    let points = fractions
        .into_iter()
        .zip(values)
        .map(|(f, v)| v.map(|v| (f, v)))
        .collect::<Result<_>>()?;
    Ok(Curve { points })
}

/// Retained probability as the most relevant coefficients (or pixels) are
/// inserted into an empty (or blurred) image.
pub fn insertion_curve(
    model: &dyn Classifier,
    rep: &dyn LinearRep,
    x: &Image,
    mask: &[f64],
    steps: usize,
    mode: CurveMode,
) -> Result<Curve> {
    curve(model, rep, x, mask, steps, mode, true)
}

/// Retained probability as the most relevant coefficients (or pixels) are
/// removed first.
pub fn deletion_curve(
    model: &dyn Classifier,
    rep: &dyn LinearRep,
    x: &Image,
    mask: &[f64],
    steps: usize,
    mode: CurveMode,
) -> Result<Curve> {
    curve(model, rep, x, mask, steps, mode, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranking_is_stable_on_ties() {
        assert_eq!(ranking(&[0.5, 1.0, 0.5, 1.0]), vec![1, 3, 0, 2]);
    }

    #[test]
    fn grid_contract() {
        let g = grid(4).unwrap();
        assert_eq!(g, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(grid(0).is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let c = Curve {
            points: vec![(0.0, 0.25), (1.0, 1.0)],
        };
        assert_eq!(c.to_csv(), "fraction,retained_probability\n0,0.25\n1,1\n");
        assert_eq!(c.first_reaching(0.5), Some(1.0));
    }
}
