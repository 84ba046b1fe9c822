//! Periodic orthonormal 2-D discrete wavelet transform.
//!
//! Coefficients of one plane are stored flat: the coarsest approximation
//! block first, then for each level from coarsest to finest the three
//! detail blocks (horizontal, vertical, diagonal). The count equals the
//! pixel count.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::linear::{Coefficients, LinearRep};

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Daubechies scaling filters, synthesis order.
const HAAR: [f64; 2] = [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2];
const DB4: [f64; 8] = [
    0.230_377_813_308_855_23,
    0.714_846_570_552_541_5,
    0.630_880_767_929_590_4,
    -0.027_983_769_416_983_85,
    -0.187_034_811_718_881_14,
    0.030_841_381_835_986_965,
    0.032_883_011_666_982_945,
    -0.010_597_401_784_997_278,
];

fn db2_filter() -> [f64; 4] {
    let r3 = 3f64.sqrt();
    let d = 4.0 * SQRT2;
    [(1.0 + r3) / d, (3.0 + r3) / d, (3.0 - r3) / d, (1.0 - r3) / d]
}

fn db3_filter() -> [f64; 6] {
    let a = 10f64.sqrt();
    let b = (5.0 + 2.0 * a).sqrt();
    let d = 16.0 * SQRT2;
    [
        (1.0 + a + b) / d,
        (5.0 + a + 3.0 * b) / d,
        (10.0 - 2.0 * a + 2.0 * b) / d,
        (10.0 - 2.0 * a - 2.0 * b) / d,
        (5.0 + a - 3.0 * b) / d,
        (1.0 + a - b) / d,
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveletBasis {
    family: String,
    levels: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

/// Builds an orthonormal Daubechies basis (`haar`/`db1`, `db2`, `db3`,
/// `db4`) of depth `levels`.
pub fn build_wavelet_basis(family: &str, levels: usize) -> Result<WaveletBasis> {
    let (db2, db3) = (db2_filter(), db3_filter());
    let lo: &[f64] = match family {
        "haar" | "db1" => &HAAR,
        "db2" => &db2,
        "db3" => &db3,
        "db4" => &DB4,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown wavelet family {other:?}"
            )))
        }
    };
    if levels == 0 {
        return Err(Error::InvalidArgument("wavelet levels must be >= 1".into()));
    }
    let n = lo.len();
    let hi = (0..n)
        .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 } * lo[n - 1 - i])
        .collect();
    let basis = WaveletBasis {
        family: family.to_string(),
        levels,
        lo: lo.to_vec(),
        hi,
    };
    basis.check_orthonormal(1e-10)?;
    Ok(basis)
}

impl WaveletBasis {
    pub fn family(&self) -> &str {
        &self.family
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn lowpass(&self) -> &[f64] {
        &self.lo
    }

    pub fn highpass(&self) -> &[f64] {
        &self.hi
    }

    fn check_orthonormal(&self, tol: f64) -> Result<()> {
        let h = &self.lo;
        let sum: f64 = h.iter().sum();
        let mut worst = (sum - SQRT2).abs();
        for shift in (0..h.len()).step_by(2) {
            let ip: f64 = (0..h.len() - shift).map(|i| h[i] * h[i + shift]).sum();
            let want = if shift == 0 { 1.0 } else { 0.0 };
            worst = worst.max((ip - want).abs());
        }
        if worst > tol {
            return Err(Error::InvalidArgument(format!(
                "{} filters not orthonormal (err {worst:e})",
                self.family
            )));
        }
        Ok(())
    }

    pub fn check_dims(&self, height: usize, width: usize) -> Result<()> {
        let step = 1usize << self.levels;
        if height % step != 0 || width % step != 0 || height < step || width < step {
            return Err(Error::shape(
                format!("dimensions divisible by {step}"),
                format!("{height}x{width}"),
            ));
        }
        Ok(())
    }

    fn analyze_1d(&self, x: &[f64], lo: &mut [f64], hi: &mut [f64]) {
        let n = x.len();
        for k in 0..n / 2 {
            let (mut a, mut d) = (0.0, 0.0);
            for (t, (&hl, &hh)) in self.lo.iter().zip(&self.hi).enumerate() {
                let v = x[(2 * k + t) % n];
                a += hl * v;
                d += hh * v;
            }
            lo[k] = a;
            hi[k] = d;
        }
    }

    fn synthesize_1d(&self, lo: &[f64], hi: &[f64], x: &mut [f64]) {
        let n = x.len();
        x.fill(0.0);
        for k in 0..n / 2 {
            for (t, (&hl, &hh)) in self.lo.iter().zip(&self.hi).enumerate() {
                x[(2 * k + t) % n] += hl * lo[k] + hh * hi[k];
            }
        }
    }

    /// One analysis level on an `h×w` block: returns `(ll, [lh, hl, hh])`.
    fn analyze_level(&self, cur: &[f64], h: usize, w: usize) -> (Vec<f64>, [Vec<f64>; 3]) {
        let (h2, w2) = (h / 2, w / 2);
        let mut rows_lo = vec![0.0; h * w2];
        let mut rows_hi = vec![0.0; h * w2];
        for y in 0..h {
            self.analyze_1d(
                &cur[y * w..(y + 1) * w],
                &mut rows_lo[y * w2..(y + 1) * w2],
                &mut rows_hi[y * w2..(y + 1) * w2],
            );
        }
        let columns = |src: &[f64]| {
            let mut lo = vec![0.0; h2 * w2];
            let mut hi = vec![0.0; h2 * w2];
            let mut col = vec![0.0; h];
            let (mut cl, mut ch) = (vec![0.0; h2], vec![0.0; h2]);
            for x in 0..w2 {
                for y in 0..h {
                    col[y] = src[y * w2 + x];
                }
                self.analyze_1d(&col, &mut cl, &mut ch);
                for y in 0..h2 {
                    lo[y * w2 + x] = cl[y];
                    hi[y * w2 + x] = ch[y];
                }
            }
            (lo, hi)
        };
        let (ll, lh) = columns(&rows_lo);
        let (hl, hh) = columns(&rows_hi);
        (ll, [lh, hl, hh])
    }

    fn synthesize_level(&self, ll: &[f64], details: [&[f64]; 3], h: usize, w: usize) -> Vec<f64> {
        let (h2, w2) = (h / 2, w / 2);
        let columns = |lo: &[f64], hi: &[f64]| {
            let mut out = vec![0.0; h * w2];
            let mut col = vec![0.0; h];
            let (mut cl, mut ch) = (vec![0.0; h2], vec![0.0; h2]);
            for x in 0..w2 {
                for y in 0..h2 {
                    cl[y] = lo[y * w2 + x];
                    ch[y] = hi[y * w2 + x];
                }
                self.synthesize_1d(&cl, &ch, &mut col);
                for y in 0..h {
                    out[y * w2 + x] = col[y];
                }
            }
            out
        };
        let rows_lo = columns(ll, details[0]);
        let rows_hi = columns(details[1], details[2]);
        let mut out = vec![0.0; h * w];
        for y in 0..h {
            self.synthesize_1d(
                &rows_lo[y * w2..(y + 1) * w2],
                &rows_hi[y * w2..(y + 1) * w2],
                &mut out[y * w..(y + 1) * w],
            );
        }
        out
    }

    /// Flat-layout block boundaries for an `height×width` plane.
    pub fn layout(&self, height: usize, width: usize) -> PyramidLayout {
        PyramidLayout::new(height, width, self.levels)
    }

    pub fn analyze_plane(&self, plane: &[f64], height: usize, width: usize) -> Vec<f64> {
        let layout = self.layout(height, width);
        let mut out = vec![0.0; height * width];
        let mut cur = plane.to_vec();
        let (mut h, mut w) = (height, width);
        for level in 1..=self.levels {
            let (ll, details) = self.analyze_level(&cur, h, w);
            for (o, d) in details.iter().enumerate() {
                out[layout.detail(level, o)].copy_from_slice(d);
            }
            cur = ll;
            h /= 2;
            w /= 2;
        }
        out[layout.approx()].copy_from_slice(&cur);
        out
    }

    pub fn synthesize_plane(&self, coeffs: &[f64], height: usize, width: usize) -> Vec<f64> {
        let layout = self.layout(height, width);
        let mut cur = coeffs[layout.approx()].to_vec();
        for level in (1..=self.levels).rev() {
            let (h, w) = (height >> (level - 1), width >> (level - 1));
            let details = [0, 1, 2].map(|o| &coeffs[layout.detail(level, o)]);
            cur = self.synthesize_level(&cur, details, h, w);
        }
        cur
    }
}

/// Offsets of the blocks of one plane in the flat coefficient layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PyramidLayout {
    pub height: usize,
    pub width: usize,
    pub levels: usize,
}

impl PyramidLayout {
    pub fn new(height: usize, width: usize, levels: usize) -> Self {
        Self {
            height,
            width,
            levels,
        }
    }

    /// `(rows, cols)` of the blocks at `level` (1 = finest).
    pub fn block_dims(&self, level: usize) -> (usize, usize) {
        (self.height >> level, self.width >> level)
    }

    pub fn approx(&self) -> Range<usize> {
        let (h, w) = self.block_dims(self.levels);
        0..h * w
    }

    /// Range of detail block `orientation` (0 horizontal, 1 vertical,
    /// 2 diagonal) at `level`.
    pub fn detail(&self, level: usize, orientation: usize) -> Range<usize> {
        assert!((1..=self.levels).contains(&level) && orientation < 3);
        let mut start = self.approx().end;
        for l in (level + 1..=self.levels).rev() {
            let (h, w) = self.block_dims(l);
            start += 3 * h * w;
        }
        let (h, w) = self.block_dims(level);
        start += orientation * h * w;
        start..start + h * w
    }

    /// All detail blocks of `level` as one contiguous range.
    pub fn level(&self, level: usize) -> Range<usize> {
        self.detail(level, 0).start..self.detail(level, 2).end
    }
}

/// Critically sampled multi-channel wavelet coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletPyramid {
    layout: PyramidLayout,
    coeffs: Coefficients,
}

impl WaveletPyramid {
    pub fn layout(&self) -> PyramidLayout {
        self.layout
    }

    pub fn coefficients(&self) -> &Coefficients {
        &self.coeffs
    }

    pub fn into_coefficients(self) -> Coefficients {
        self.coeffs
    }

    pub fn from_coefficients(layout: PyramidLayout, coeffs: Coefficients) -> Result<Self> {
        if coeffs.len() != layout.height * layout.width {
            return Err(Error::shape(layout.height * layout.width, coeffs.len()));
        }
        Ok(Self { layout, coeffs })
    }

    pub fn approx(&self, channel: usize) -> &[f64] {
        &self.coeffs.block(channel)[self.layout.approx()]
    }

    pub fn detail(&self, channel: usize, level: usize, orientation: usize) -> &[f64] {
        &self.coeffs.block(channel)[self.layout.detail(level, orientation)]
    }

    /// Total coefficient count over all channels.
    pub fn count(&self) -> usize {
        self.coeffs.data().len()
    }
}

pub fn dwt_analyze(basis: &WaveletBasis, img: &Image) -> Result<WaveletPyramid> {
    let (h, w) = (img.height(), img.width());
    basis.check_dims(h, w)?;
    let blocks = img.planes().map(|p| basis.analyze_plane(p, h, w)).collect();
    Ok(WaveletPyramid {
        layout: basis.layout(h, w),
        coeffs: Coefficients::from_blocks(blocks),
    })
}

pub fn dwt_synthesize(basis: &WaveletBasis, pyr: &WaveletPyramid) -> Result<Image> {
    let PyramidLayout {
        height,
        width,
        levels,
    } = pyr.layout;
    if levels != basis.levels {
        return Err(Error::shape(
            format!("{} levels", basis.levels),
            format!("{levels} levels"),
        ));
    }
    basis.check_dims(height, width)?;
    let planes = pyr
        .coeffs
        .blocks()
        .map(|b| basis.synthesize_plane(b, height, width))
        .collect();
    Image::from_planes(height, width, planes)
}

/// A wavelet basis bound to an image size.
#[derive(Debug, Clone)]
pub struct WaveletRep {
    basis: WaveletBasis,
    height: usize,
    width: usize,
}

impl WaveletRep {
    pub fn new(basis: WaveletBasis, height: usize, width: usize) -> Result<Self> {
        basis.check_dims(height, width)?;
        Ok(Self {
            basis,
            height,
            width,
        })
    }

    pub fn basis(&self) -> &WaveletBasis {
        &self.basis
    }

    pub fn layout(&self) -> PyramidLayout {
        self.basis.layout(self.height, self.width)
    }
}

impl LinearRep for WaveletRep {
    fn height(&self) -> usize {
        self.height
    }

    fn width(&self) -> usize {
        self.width
    }

    fn coeff_len(&self) -> usize {
        self.height * self.width
    }

    /// The approximation block, then one group per level.
    fn groups(&self) -> Vec<Range<usize>> {
        let layout = self.layout();
        std::iter::once(layout.approx())
            .chain((1..=self.basis.levels).rev().map(|l| layout.level(l)))
            .collect()
    }

    fn analyze_plane(&self, plane: &[f64]) -> Vec<f64> {
        self.basis.analyze_plane(plane, self.height, self.width)
    }

    fn synthesize_plane(&self, coeffs: &[f64]) -> Vec<f64> {
        self.basis.synthesize_plane(coeffs, self.height, self.width)
    }

    // Orthonormal: the adjoint of synthesis is analysis.
    fn synthesize_adjoint_plane(&self, plane: &[f64]) -> Vec<f64> {
        self.analyze_plane(plane)
    }
}
