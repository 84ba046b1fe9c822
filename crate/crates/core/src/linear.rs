//! The analysis/synthesis contract shared by every representation.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::image::Image;

/// Coefficients of a multi-channel image: one block of `len` values per
/// color channel, blocks stored back to back.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    len: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Coefficients {
    pub fn zeros(len: usize, channels: usize) -> Self {
        Self {
            len,
            channels,
            data: vec![0.0; len * channels],
        }
    }

    pub fn from_blocks(blocks: Vec<Vec<f64>>) -> Self {
        let channels = blocks.len();
        let len = blocks.first().map_or(0, Vec::len);
        assert!(blocks.iter().all(|b| b.len() == len), "ragged blocks");
        Self {
            len,
            channels,
            data: blocks.into_iter().flatten().collect(),
        }
    }

    pub fn from_vec(len: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != len * channels {
            return Err(Error::shape(
                format!("{channels}x{len}"),
                format!("{} values", data.len()),
            ));
        }
        Ok(Self {
            len,
            channels,
            data,
        })
    }

    /// Coefficients per color channel.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn block(&self, c: usize) -> &[f64] {
        &self.data[c * self.len..(c + 1) * self.len]
    }

    pub fn block_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.len..(c + 1) * self.len]
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.len.max(1))
    }

    /// Multiplies every block by a shared mask.
    pub fn masked(&self, mask: &[f64]) -> Coefficients {
        assert_eq!(mask.len(), self.len, "mask length");
        let mut out = self.clone();
        for block in out.data.chunks_exact_mut(self.len) {
            for (v, &m) in block.iter_mut().zip(mask) {
                *v *= m;
            }
        }
        out
    }
}

/// A linear image representation with an exact adjoint of its synthesis
/// map. Implementors work on single planes; color images are handled one
/// channel at a time with the same coefficient layout.
pub trait LinearRep: Send + Sync {
    fn height(&self) -> usize;
    fn width(&self) -> usize;

    /// Coefficients per plane (the mask length).
    fn coeff_len(&self) -> usize;

    /// Coefficient groups that receive their own noise statistics.
    fn groups(&self) -> Vec<Range<usize>>;

    fn analyze_plane(&self, plane: &[f64]) -> Vec<f64>;
    fn synthesize_plane(&self, coeffs: &[f64]) -> Vec<f64>;
    fn synthesize_adjoint_plane(&self, plane: &[f64]) -> Vec<f64>;

    /// Contiguous coefficient ranges that the streamed methods visit in
    /// order. Each range is a union of whole groups.
    fn blocks(&self) -> Vec<Range<usize>> {
        vec![0..self.coeff_len()]
    }

    /// Synthesizes one plane whose coefficients are produced block by
    /// block: `fill(range, out)` writes the coefficients in `range`.
    fn synthesize_plane_streamed(&self, fill: &mut dyn FnMut(Range<usize>, &mut [f64])) -> Vec<f64> {
        let mut coeffs = vec![0.0; self.coeff_len()];
        fill(0..self.coeff_len(), &mut coeffs);
        self.synthesize_plane(&coeffs)
    }

    /// Hands the adjoint synthesis of `plane` to `sink` block by block.
    fn synthesize_adjoint_plane_streamed(&self, plane: &[f64], sink: &mut dyn FnMut(Range<usize>, &[f64])) {
        let coeffs = self.synthesize_adjoint_plane(plane);
        sink(0..self.coeff_len(), &coeffs);
    }

    /// Synthesizes several planes at once. Implementations may override
    /// this to share transform work between planes.
    fn synthesize_planes(&self, coeffs: &[&[f64]]) -> Vec<Vec<f64>> {
        coeffs.iter().map(|c| self.synthesize_plane(c)).collect()
    }

    fn check_image(&self, img: &Image) -> Result<()> {
        if img.height() != self.height() || img.width() != self.width() {
            return Err(Error::shape(
                format!("{}x{}", self.height(), self.width()),
                format!("{}x{}", img.height(), img.width()),
            ));
        }
        Ok(())
    }

    fn analyze(&self, img: &Image) -> Result<Coefficients> {
        self.check_image(img)?;
        Ok(Coefficients::from_blocks(
            img.planes().map(|p| self.analyze_plane(p)).collect(),
        ))
    }

    fn synthesize(&self, coeffs: &Coefficients) -> Result<Image> {
        if coeffs.len() != self.coeff_len() {
            return Err(Error::shape(self.coeff_len(), coeffs.len()));
        }
        let planes = coeffs.blocks().map(|b| self.synthesize_plane(b)).collect();
        Image::from_planes(self.height(), self.width(), planes)
    }

    fn synthesize_adjoint(&self, img: &Image) -> Result<Coefficients> {
        self.check_image(img)?;
        Ok(Coefficients::from_blocks(
            img.planes()
                .map(|p| self.synthesize_adjoint_plane(p))
                .collect(),
        ))
    }
}

/// The identity representation: coefficients are pixels.
#[derive(Debug, Clone)]
pub struct PixelRep {
    height: usize,
    width: usize,
}

impl PixelRep {
    pub fn new(height: usize, width: usize) -> Self {
        Self { height, width }
    }
}

impl LinearRep for PixelRep {
    fn height(&self) -> usize {
        self.height
    }

    fn width(&self) -> usize {
        self.width
    }

    fn coeff_len(&self) -> usize {
        self.height * self.width
    }

    fn groups(&self) -> Vec<Range<usize>> {
        vec![0..self.coeff_len()]
    }

    fn analyze_plane(&self, plane: &[f64]) -> Vec<f64> {
        plane.to_vec()
    }

    fn synthesize_plane(&self, coeffs: &[f64]) -> Vec<f64> {
        coeffs.to_vec()
    }

    fn synthesize_adjoint_plane(&self, plane: &[f64]) -> Vec<f64> {
        plane.to_vec()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
