//! Canny-style edge detection and the hallucination score built on it.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeParams {
    pub sigma: f64,
    /// Hysteresis thresholds relative to the largest gradient magnitude.
    pub low: f64,
    pub high: f64,
}

impl Default for EdgeParams {
    fn default() -> Self {
        Self {
            sigma: 1.4,
            low: 0.1,
            high: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMap {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl EdgeMap {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape(height * width, data.len()));
        }
        Ok(Self { height, width, data })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&e| e).count()
    }

    /// Marks every pixel within Chebyshev distance `r` of an edge pixel.
    pub fn dilated(&self, r: usize) -> EdgeMap {
        if r == 0 {
            return self.clone();
        }
        let (h, w) = (self.height, self.width);
        let mut rows = vec![false; h * w];
        for y in 0..h {
            for x in 0..w {
                if self.data[y * w + x] {
                    for xx in x.saturating_sub(r)..(x + r + 1).min(w) {
                        rows[y * w + xx] = true;
                    }
                }
            }
        }
        let mut out = vec![false; h * w];
        for y in 0..h {
            for x in 0..w {
                if rows[y * w + x] {
                    for yy in y.saturating_sub(r)..(y + r + 1).min(h) {
                        out[yy * w + x] = true;
                    }
                }
            }
        }
        EdgeMap {
            height: h,
            width: w,
            data: out,
        }
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.into_iter().map(|v| v / total).collect()
}

/// Separable Gaussian blur of one plane with clamped borders.
pub fn gaussian_blur_plane(plane: &[f64], height: usize, width: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
    let mut tmp = vec![0.0; height * width];
    for y in 0..height {
        for x in 0..width {
            tmp[y * width + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * plane[y * width + clamp(x as i64 + i as i64 - r, width)])
                .sum();
        }
    }
    let mut out = vec![0.0; height * width];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * tmp[clamp(y as i64 + i as i64 - r, height) * width + x])
                .sum();
        }
    }
    out
}

pub fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    let (h, w, _) = img.shape();
    let planes = img.planes().map(|p| gaussian_blur_plane(p, h, w, sigma)).collect();
    Image::from_planes(h, w, planes).expect("same shape")
}

/// Gaussian blur, Sobel gradients, non-maximum suppression and hysteresis
/// on the luminance of `img`. Thresholds are fractions of the largest
/// gradient magnitude.
pub fn detect_edges(img: &Image, low: f64, high: f64, sigma: f64) -> Result<EdgeMap> {
    if !(low > 0.0 && low <= high) {
        return Err(Error::InvalidArgument(format!(
            "edge thresholds need 0 < low <= high, got low={low} high={high}"
        )));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("edge sigma must be positive, got {sigma}")));
    }
    let (h, w) = (img.height(), img.width());
    let lum = img.luminance();
    let smooth = gaussian_blur_plane(lum.plane(0), h, w, sigma);
    let at = |y: i64, x: i64| smooth[y.clamp(0, h as i64 - 1) as usize * w + x.clamp(0, w as i64 - 1) as usize];

    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let i = y as usize * w + x as usize;
            gx[i] = (at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1))
                - (at(y - 1, x - 1) + 2.0 * at(y, x - 1) + at(y + 1, x - 1));
            gy[i] = (at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1))
                - (at(y - 1, x - 1) + 2.0 * at(y - 1, x) + at(y - 1, x + 1));
        }
    }
    let raw: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    let max = raw.iter().copied().fold(0.0, f64::max);
    if !(max >= 1e-9) {
        return Ok(EdgeMap::empty(h, w));
    }
    // Quantizing the normalized magnitude removes rounding noise, so that
    // adding a constant to the image cannot change the result.
    let mag: Vec<f64> = raw.iter().map(|v| (v / max * 1e9).round() / 1e9).collect();
    let m = |y: i64, x: i64| {
        if y < 0 || x < 0 || y >= h as i64 || x >= w as i64 {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };

    let mut thin = vec![0.0; h * w];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let i = y as usize * w + x as usize;
            let v = mag[i];
            if v == 0.0 {
                continue;
            }
            let angle = gy[i].atan2(gx[i]).to_degrees().rem_euclid(180.0);
            let (dy, dx) = if !(22.5..157.5).contains(&angle) {
                (0, 1)
            } else if angle < 67.5 {
                (1, 1)
            } else if angle < 112.5 {
                (1, 0)
            } else {
                (1, -1)
            };
            // Ties keep the pixel on the negative side only, so a plateau of
            // two equal maxima yields one line.
            if v > m(y - dy, x - dx) && v >= m(y + dy, x + dx) {
                thin[i] = v;
            }
        }
    }

    let mut edges = vec![false; h * w];
    let mut queue: VecDeque<usize> = VecDeque::new();
    for (i, &v) in thin.iter().enumerate() {
        if v >= high {
            edges[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (y, x) = ((i / w) as i64, (i % w) as i64);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (ny, nx) = (y + dy, x + dx);
                if ny < 0 || nx < 0 || ny >= h as i64 || nx >= w as i64 {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !edges[j] && thin[j] >= low {
                    edges[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    EdgeMap::new(h, w, edges)
}

pub fn detect_edges_with(img: &Image, params: &EdgeParams) -> Result<EdgeMap> {
    detect_edges(img, params.low, params.high, params.sigma)
}

/// Explanation edge pixels farther than `tolerance` (Chebyshev) from every
/// image edge pixel, divided by the number of image edge pixels.
/// `tolerance = 0` compares the sets exactly.
pub fn hallucination_score(expl_edges: &EdgeMap, img_edges: &EdgeMap, tolerance: usize) -> Result<f64> {
    if expl_edges.height != img_edges.height || expl_edges.width != img_edges.width {
        return Err(Error::shape(
            format!("{}x{}", img_edges.height, img_edges.width),
            format!("{}x{}", expl_edges.height, expl_edges.width),
        ));
    }
    let total = img_edges.count();
    if total == 0 {
        return Err(Error::Degenerate("original image has no edges".into()));
    }
    let near = img_edges.dilated(tolerance);
    let new = expl_edges
        .data
        .iter()
        .zip(&near.data)
        .filter(|(&e, &n)| e && !n)
        .count();
    Ok(new as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_has_no_edges() {
        let e = detect_edges(&Image::filled(32, 32, 1, 0.4), 0.1, 0.2, 1.4).unwrap();
        assert_eq!(e.count(), 0);
    }

    #[test]
    fn invalid_parameters_rejected() {
        let img = Image::zeros(16, 16, 1);
        assert!(detect_edges(&img, 0.0, 0.2, 1.4).is_err());
        assert!(detect_edges(&img, 0.3, 0.2, 1.4).is_err());
        assert!(detect_edges(&img, 0.1, 0.2, 0.0).is_err());
    }

    #[test]
    fn identical_maps_score_zero() {
        let mut img = Image::zeros(32, 32, 1);
        for y in 8..24 {
            for x in 8..24 {
                img.set(0, y, x, 1.0);
            }
        }
        let e = detect_edges(&img, 0.1, 0.2, 1.4).unwrap();
        assert!(e.count() > 0);
        assert_eq!(hallucination_score(&e, &e, 1).unwrap(), 0.0);
        assert_eq!(hallucination_score(&e, &e, 0).unwrap(), 0.0);
    }

    #[test]
    fn empty_reference_is_degenerate() {
        let e = EdgeMap::empty(8, 8);
        assert!(matches!(hallucination_score(&e, &e, 1), Err(Error::Degenerate(_))));
    }
}
