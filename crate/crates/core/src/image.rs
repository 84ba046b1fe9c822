//! Planar floating-point rasters and their PNG/PGM IO.

use std::path::Path;

use image::{DynamicImage, GrayImage, RgbImage};

use crate::error::{Error, Result};

pub const MIN_SIDE: usize = 8;

/// An `H×W×C` raster stored channel-planar, each plane row-major.
///
/// Loaded values lie in `[0, 1]`; arithmetic on images may leave that range
/// and [`save_image`] clamps.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::shape(
                format!("{height}x{width}x{channels}"),
                format!("{} values", data.len()),
            ));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Stacks equally sized planes into an image.
    pub fn from_planes(height: usize, width: usize, planes: Vec<Vec<f64>>) -> Result<Self> {
        let channels = planes.len();
        let data: Vec<f64> = planes.into_iter().flatten().collect();
        Self::from_vec(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn planes(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.plane_len())
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.shape() == other.shape()
    }

    pub fn check_shape(&self, other: &Image) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    pub fn clamped(&self) -> Image {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Per-pixel channel mean, as a single-channel image.
    pub fn luminance(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let n = self.plane_len();
        let mut out = vec![0.0; n];
        for plane in self.planes() {
            for (o, &v) in out.iter_mut().zip(plane) {
                *o += v;
            }
        }
        let inv = 1.0 / self.channels as f64;
        out.iter_mut().for_each(|v| *v *= inv);
        Image {
            height: self.height,
            width: self.width,
            channels: 1,
            data: out,
        }
    }

    /// Bilinear resize with half-pixel-center alignment and edge clamping.
    pub fn resize_bilinear(&self, height: usize, width: usize) -> Image {
        let sy = self.height as f64 / height as f64;
        let sx = self.width as f64 / width as f64;
        let taps = |dst: usize, scale: f64, src_len: usize| {
            let s = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src_len - 1);
            (i0, i1, s - i0 as f64)
        };
        let xs: Vec<_> = (0..width).map(|x| taps(x, sx, self.width)).collect();
        let mut data = Vec::with_capacity(height * width * self.channels);
        for plane in self.planes() {
            for y in 0..height {
                let (y0, y1, ty) = taps(y, sy, self.height);
                let r0 = &plane[y0 * self.width..(y0 + 1) * self.width];
                let r1 = &plane[y1 * self.width..(y1 + 1) * self.width];
                for &(x0, x1, tx) in &xs {
                    let top = r0[x0] * (1.0 - tx) + r0[x1] * tx;
                    let bot = r1[x0] * (1.0 - tx) + r1[x1] * tx;
                    data.push(top * (1.0 - ty) + bot * ty);
                }
            }
        }
        Image {
            height,
            width,
            channels: self.channels,
            data,
        }
    }
}

/// Loads an 8-bit grayscale/RGB PNG or binary PGM into `[0, 1]`, optionally
/// resizing to `target_size = (height, width)`.
pub fn load_image(path: impl AsRef<Path>, target_size: Option<(usize, usize)>) -> Result<Image> {
    let path = path.as_ref();
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let decoded = reader.decode().map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let img = match decoded {
        DynamicImage::ImageLuma8(buf) => {
            let (w, h) = buf.dimensions();
            let data = buf.into_raw().into_iter().map(byte_to_unit).collect();
            Image::from_vec(h as usize, w as usize, 1, data)?
        }
        DynamicImage::ImageRgb8(buf) => {
            let (w, h) = buf.dimensions();
            let (h, w) = (h as usize, w as usize);
            let raw = buf.into_raw();
            let mut data = vec![0.0; h * w * 3];
            for (i, px) in raw.chunks_exact(3).enumerate() {
                for c in 0..3 {
                    data[c * h * w + i] = byte_to_unit(px[c]);
                }
            }
            Image::from_vec(h, w, 3, data)?
        }
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "{}: color type {:?} (need 8-bit gray or RGB)",
                path.display(),
                other.color()
            )))
        }
    };
    if img.height < MIN_SIDE || img.width < MIN_SIDE {
        return Err(Error::InvalidArgument(format!(
            "image {}x{} smaller than {MIN_SIDE}x{MIN_SIDE}",
            img.height, img.width
        )));
    }
    Ok(match target_size {
        Some((h, w)) if (h, w) != (img.height, img.width) => img.resize_bilinear(h, w),
        _ => img,
    })
}

fn byte_to_unit(b: u8) -> f64 {
    f64::from(b) / 255.0
}

/// Clamps to `[0, 1]` and quantizes with round-half-up.
pub fn quantize(v: f64) -> u8 {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (v * 255.0 + 0.5).floor().min(255.0) as u8
}

/// Writes an 8-bit PNG (gray for one channel, RGB for three).
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (h, w) = (img.height as u32, img.width as u32);
    let n = img.plane_len();
    let result = match img.channels {
        1 => {
            let bytes = img.data.iter().map(|&v| quantize(v)).collect();
            GrayImage::from_raw(w, h, bytes)
                .expect("buffer length matches dimensions")
                .save_with_format(path, image::ImageFormat::Png)
        }
        3 => {
            let mut bytes = Vec::with_capacity(n * 3);
            for i in 0..n {
                for c in 0..3 {
                    bytes.push(quantize(img.data[c * n + i]));
                }
            }
            RgbImage::from_raw(w, h, bytes)
                .expect("buffer length matches dimensions")
                .save_with_format(path, image::ImageFormat::Png)
        }
        c => unreachable!("image with {c} channels"),
    };
    result.map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Decode {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn write_pgm(path: &Path, w: usize, h: usize, bytes: &[u8]) {
        let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
        out.extend_from_slice(bytes);
        std::fs::write(path, out).unwrap();
    }

    #[test]
    fn pgm_extremes_scale_to_unit_range() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("white.pgm");
        write_pgm(&p, 8, 8, &[255; 64]);
        let img = load_image(&p, None).unwrap();
        assert_eq!(img.shape(), (8, 8, 1));
        assert!(img.data().iter().all(|&v| v == 1.0));

        let p = dir.path().join("black.pgm");
        write_pgm(&p, 8, 8, &[0; 64]);
        let img = load_image(&p, None).unwrap();
        assert!(img.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn quantization_rule() {
        assert_eq!(quantize(1.0), 255);
        assert_eq!(quantize(0.5), 128);
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(-3.0), 0);
        assert_eq!(quantize(7.0), 255);
    }

    #[test]
    fn save_load_error_bounded_by_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = Rng::new(3);
        for channels in [1, 3] {
            let data = rng.uniform(0.0, 1.0, 16 * 12 * channels).unwrap();
            let img = Image::from_vec(16, 12, channels, data).unwrap();
            let p = dir.path().join(format!("r{channels}.png"));
            save_image(&img, &p).unwrap();
            let back = load_image(&p, None).unwrap();
            assert_eq!(back.shape(), img.shape());
            // Round-half-up leaves at most half a quantization step.
            assert!(back.max_abs_diff(&img) <= 1.0 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn missing_file_and_bad_depth_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_image(dir.path().join("nope.png"), None),
            Err(Error::Io { .. })
        ));
        let p = dir.path().join("deep.pgm");
        let mut out = b"P5\n8 8\n65535\n".to_vec();
        out.extend_from_slice(&[0u8; 128]);
        std::fs::write(&p, out).unwrap();
        assert!(matches!(
            load_image(&p, None),
            Err(Error::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn resize_identity_and_constant() {
        let mut rng = Rng::new(5);
        let img = Image::from_vec(9, 10, 1, rng.uniform(0.0, 1.0, 90).unwrap()).unwrap();
        assert_eq!(img.resize_bilinear(9, 10), img);
        let c = Image::filled(8, 8, 3, 0.25).resize_bilinear(13, 5);
        assert!(c.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }
}
