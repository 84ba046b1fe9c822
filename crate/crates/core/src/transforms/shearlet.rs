//! Band-limited cone-adapted digital shearlet system.
//!
//! Filters live in the frequency domain. Each highpass filter is a product
//! of a Meyer-type radial band `W_j` and a directional window
//! `V(2^sl · slope - shear)` over the horizontal or vertical cone. The
//! directional windows of one scale form a squared partition of unity over
//! the half circle, and the radial bands one over the plane, so the dual
//! weights `Σ_k |ψ̂_k|²` stay close to one and are strictly positive.
//!
//! Scale `j` carries `2^(sl_j + 2)` filters: `2^(sl_j + 1) + 1` shears in
//! the horizontal cone and `2^(sl_j + 1) - 1` in the vertical one (the two
//! diagonal shears are shared).

use std::f64::consts::FRAC_PI_2;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use rustfft::num_complex::Complex64;

use super::fft::Fft2;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::linear::{Coefficients, LinearRep};

/// Shearlet coefficients: one block of `K·H·W` values per color channel.
pub type CoeffStack = Coefficients;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    Low,
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShearletIndex {
    /// `None` for the lowpass channel; 0 is the coarsest scale.
    pub scale: Option<usize>,
    pub cone: Cone,
    pub shear: i64,
}

#[derive(Debug)]
pub struct ShearletSystem {
    height: usize,
    width: usize,
    shear_levels: Vec<usize>,
    indices: Vec<ShearletIndex>,
    /// Frequency responses in the transposed spectrum layout of [`Fft2`].
    filters: Vec<Vec<f64>>,
    /// Filters divided by the dual weights.
    /// Analysis filters packed two per table as `a + i·b`.
    analysis_pairs: Vec<PairTable>,
    /// Synthesis filters (`filter / dual_weight`) packed the same way.
    synthesis_pairs: Vec<PairTable>,
    dual_weights: Vec<f64>,
    fft: Fft2,
}

/// Default shearing depth per scale, `⌈(j + 1) / 2⌉`.
pub fn default_shear_levels(scales: usize) -> Vec<usize> {
    (0..scales).map(|j| (j + 2) / 2).collect()
}

/// Channel count `1 + Σ_j 2^(sl_j + 2)`.
pub fn channel_count(shear_levels: &[usize]) -> usize {
    1 + shear_levels.iter().map(|&sl| 1usize << (sl + 2)).sum::<usize>()
}

pub fn build_shearlet_system(height: usize, width: usize, scales: usize) -> Result<ShearletSystem> {
    if !(1..=6).contains(&scales) {
        return Err(Error::InvalidArgument(format!(
            "shearlet scales must be in 1..=6, got {scales}"
        )));
    }
    build_shearlet_system_with(height, width, &default_shear_levels(scales))
}

pub fn build_shearlet_system_with(
    height: usize,
    width: usize,
    shear_levels: &[usize],
) -> Result<ShearletSystem> {
    for side in [height, width] {
        if side < 32 || !side.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "shearlet system needs power-of-two sides >= 32, got {height}x{width}"
            )));
        }
    }
    if shear_levels.is_empty() || shear_levels.len() > 6 || shear_levels.iter().any(|&s| s > 6) {
        return Err(Error::InvalidArgument(format!(
            "unsupported shear levels {shear_levels:?}"
        )));
    }
    let fft = Fft2::new(height, width);
    let n = fft.len();
    let scales = shear_levels.len();

    let mut indices = vec![ShearletIndex {
        scale: None,
        cone: Cone::Low,
        shear: 0,
    }];
    for (j, &sl) in shear_levels.iter().enumerate() {
        let dirs = 1usize << (sl + 2);
        let half = 1i64 << sl;
        for i in 0..dirs {
            let i = i as i64;
            let (cone, shear) = if i <= 2 * half {
                (Cone::Horizontal, i - half)
            } else {
                (Cone::Vertical, 3 * half - i)
            };
            indices.push(ShearletIndex {
                scale: Some(j),
                cone,
                shear,
            });
        }
    }

    let mut filters = vec![vec![0.0; n]; indices.len()];
    for idx in 0..n {
        let (fy, fx) = fft.frequency(idx);
        let nu_x = fx as f64 / (width / 2) as f64;
        let nu_y = fy as f64 / (height / 2) as f64;
        let r = nu_x.abs().max(nu_y.abs());
        let theta = direction_coordinate(nu_x, nu_y);

        filters[0][idx] = meyer_low(r, cutoff(0, scales));
        let mut k = 1;
        for (j, &sl) in shear_levels.iter().enumerate() {
            let inner = meyer_low(r, cutoff(j, scales));
            let outer = if j + 1 == scales {
                1.0
            } else {
                meyer_low(r, cutoff(j + 1, scales))
            };
            let band = (outer * outer - inner * inner).max(0.0).sqrt();
            let dirs = 1usize << (sl + 2);
            let spacing = 4.0 / dirs as f64;
            for i in 0..dirs {
                filters[k][idx] = if band > 0.0 {
                    band * angular_window(theta, i as f64 * spacing, spacing)
                } else {
                    0.0
                };
                k += 1;
            }
        }
    }

    // On the Nyquist row/column -ξ aliases onto a different direction;
    // averaging the squared responses restores evenness without changing
    // the dual weights.
    let negated: Vec<usize> = (0..n).map(|i| fft.negated(i)).collect();
    for f in &mut filters {
        let sym: Vec<f64> = (0..n)
            .map(|i| ((f[i] * f[i] + f[negated[i]] * f[negated[i]]) / 2.0).sqrt())
            .collect();
        *f = sym;
    }

    let mut dual_weights = vec![0.0; n];
    for f in &filters {
        for (w, v) in dual_weights.iter_mut().zip(f) {
            *w += v * v;
        }
    }
    if let Some(min) = dual_weights.iter().copied().reduce(f64::min) {
        if !(min > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "shearlet frame does not cover the plane (min weight {min})"
            )));
        }
    }
    let dual_filters: Vec<Vec<f64>> = filters
        .iter()
        .map(|f| f.iter().zip(&dual_weights).map(|(v, w)| v / w).collect())
        .collect();
    // Inverse transforms run unnormalized, so the tables absorb 1/n.
    let unscale = 1.0 / n as f64;
    let analysis_pairs = pack_pairs(&filters, height, unscale);
    let synthesis_pairs = pack_pairs(&dual_filters, height, unscale);

    Ok(ShearletSystem {
        height,
        width,
        shear_levels: shear_levels.to_vec(),
        indices,
        filters,
        analysis_pairs,
        synthesis_pairs,
        dual_weights,
        fft,
    })
}

/// Two channel tables packed as `a + i·b`, stored only on the spectrum
/// columns where either is nonzero.
#[derive(Debug, Clone)]
struct PairTable {
    columns: Vec<Range<usize>>,
    values: Vec<Complex64>,
}

fn pack_pairs(tables: &[Vec<f64>], height: usize, scale: f64) -> Vec<PairTable> {
    tables
        .chunks(2)
        .map(|chunk| {
            let packed: Vec<Complex64> = match chunk {
                [a, b] => a.iter().zip(b).map(|(&x, &y)| Complex64::new(x, y) * scale).collect(),
                [a] => a.iter().map(|&x| Complex64::new(x * scale, 0.0)).collect(),
                _ => unreachable!(),
            };
            let mut columns: Vec<Range<usize>> = Vec::new();
            for (kx, col) in packed.chunks(height).enumerate() {
                if col.iter().any(|v| *v != Complex64::default()) {
                    match columns.last_mut() {
                        Some(r) if r.end == kx => r.end += 1,
                        _ => columns.push(kx..kx + 1),
                    }
                }
            }
            let values = columns
                .iter()
                .flat_map(|r| packed[r.start * height..r.end * height].iter().copied())
                .collect();
            PairTable { columns, values }
        })
        .collect()
}

/// Lower edge of the transition band of radial window `j`.
fn cutoff(j: usize, scales: usize) -> f64 {
    2f64.powi(j as i32 - scales as i32)
}

/// Meyer auxiliary function: smooth step with `v(t) + v(1 - t) = 1`.
fn meyer_aux(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t.powi(4) * (35.0 - 84.0 * t + 70.0 * t * t - 20.0 * t.powi(3))
    }
}

/// One up to `c`, zero from `2c`, Meyer transition in between.
fn meyer_low(r: f64, c: f64) -> f64 {
    if r <= c {
        1.0
    } else if r >= 2.0 * c {
        0.0
    } else {
        (FRAC_PI_2 * meyer_aux((r - c) / c)).cos()
    }
}

/// Position on the half circle of directions, in `[0, 4)`: the horizontal
/// cone maps its slope `ν_y/ν_x ∈ [-1, 1]` to `[0, 2]`, the vertical cone
/// maps `ν_x/ν_y` to `[2, 4]`.
fn direction_coordinate(nu_x: f64, nu_y: f64) -> f64 {
    if nu_x == 0.0 && nu_y == 0.0 {
        0.0
    } else if nu_y.abs() <= nu_x.abs() {
        1.0 + nu_y / nu_x
    } else {
        (3.0 - nu_x / nu_y).rem_euclid(4.0)
    }
}

fn angular_window(theta: f64, center: f64, spacing: f64) -> f64 {
    let d = (theta - center).rem_euclid(4.0);
    let d = d.min(4.0 - d) / spacing;
    if d >= 1.0 {
        0.0
    } else {
        (FRAC_PI_2 * meyer_aux(d)).cos()
    }
}

impl ShearletSystem {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn scales(&self) -> usize {
        self.shear_levels.len()
    }

    pub fn shear_levels(&self) -> &[usize] {
        &self.shear_levels
    }

    /// Number of channels `K`.
    pub fn channels(&self) -> usize {
        self.filters.len()
    }

    pub fn indices(&self) -> &[ShearletIndex] {
        &self.indices
    }

    pub fn filter(&self, k: usize) -> &[f64] {
        &self.filters[k]
    }

    pub fn dual_weights(&self) -> &[f64] {
        &self.dual_weights
    }

    pub fn fft(&self) -> &Fft2 {
        &self.fft
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn channel_range(&self, k: usize) -> Range<usize> {
        let n = self.plane_len();
        k * n..(k + 1) * n
    }

    /// Coefficient range of the channel pair behind table `pair`.
    fn pair_range(&self, pair: usize) -> Range<usize> {
        let n = self.plane_len();
        2 * pair * n..(2 * pair + 2).min(self.channels()) * n
    }

    /// `c_k = IFFT(X · table_k)` for every channel, handed to `sink` one
    /// channel pair at a time. Channels are packed two per inverse
    /// transform as `a + i·b`; since `X` is Hermitian and both tables are
    /// real and even, the real and imaginary parts of the result are the
    /// two channels.
    fn filter_bank(
        &self,
        spectrum: &[Complex64],
        tables: &[PairTable],
        sink: &mut dyn FnMut(Range<usize>, &[f64]),
    ) {
        let n = self.plane_len();
        let h = self.height;
        let mut buf = vec![Complex64::default(); n];
        let mut planes = vec![Complex64::default(); n];
        let mut real = vec![0.0; 2 * n];
        for (pair, table) in tables.iter().enumerate() {
            let mut values = table.values.iter();
            for r in &table.columns {
                let span = r.start * h..r.end * h;
                for ((b, x), t) in buf[span.clone()].iter_mut().zip(&spectrum[span]).zip(&mut values) {
                    *b = x * t;
                }
            }
            self.fft.inverse_columns_unscaled(&mut buf, &mut planes, &table.columns);
            let range = self.pair_range(pair);
            let (re, im) = real.split_at_mut(n);
            for ((a, b), z) in re.iter_mut().zip(im.iter_mut()).zip(&planes) {
                *a = z.re;
                *b = z.im;
            }
            sink(range.clone(), &real[..range.len()]);
        }
    }

    /// `Re IFFT(Σ_k FFT(c_k) · table_k)` with the coefficients produced one
    /// channel pair at a time by `fill`. With `z = c_a + i·c_b`, the real
    /// part of `IFFT(FFT(z)·(a − i·b))` equals the sum of the two filtered
    /// channels, so no spectrum splitting is needed.
    fn combine(&self, tables: &[PairTable], fill: &mut dyn FnMut(Range<usize>, &mut [f64])) -> Vec<f64> {
        let n = self.plane_len();
        let h = self.height;
        let mut acc = vec![Complex64::default(); n];
        let mut z = vec![Complex64::default(); n];
        let mut spectrum = vec![Complex64::default(); n];
        let mut real = vec![0.0; 2 * n];
        for (pair, table) in tables.iter().enumerate() {
            let range = self.pair_range(pair);
            let block = &mut real[..range.len()];
            fill(range, block);
            let (ca, cb) = block.split_at(n);
            if cb.is_empty() {
                for (zi, &a) in z.iter_mut().zip(ca) {
                    *zi = Complex64::new(a, 0.0);
                }
            } else {
                for ((zi, &a), &b) in z.iter_mut().zip(ca).zip(cb) {
                    *zi = Complex64::new(a, b);
                }
            }
            self.fft.forward_columns(&mut z, &mut spectrum, &table.columns);
            let mut values = table.values.iter();
            for r in &table.columns {
                let span = r.start * h..r.end * h;
                for ((a, zi), t) in acc[span.clone()].iter_mut().zip(&spectrum[span]).zip(&mut values) {
                    *a += zi * t.conj();
                }
            }
        }
        let all = [0..self.width];
        self.fft.inverse_columns_unscaled(&mut acc, &mut z, &all);
        z.into_iter().map(|c| c.re).collect()
    }

    fn collect_bank(&self, spectrum: &[Complex64], tables: &[PairTable]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.channels() * self.plane_len());
        self.filter_bank(spectrum, tables, &mut |_, block| out.extend_from_slice(block));
        out
    }

    pub fn analyze_plane(&self, plane: &[f64]) -> Vec<f64> {
        let spectrum = self.fft.forward_real(plane);
        self.collect_bank(&spectrum, &self.analysis_pairs)
    }

    pub fn synthesize_plane(&self, coeffs: &[f64]) -> Vec<f64> {
        self.combine(&self.synthesis_pairs, &mut |range, out| out.copy_from_slice(&coeffs[range]))
    }

    pub fn synthesize_adjoint_plane(&self, plane: &[f64]) -> Vec<f64> {
        let spectrum = self.fft.forward_real(plane);
        self.collect_bank(&spectrum, &self.synthesis_pairs)
    }

    /// Channel `k` of color channel `color` in a coefficient stack.
    pub fn channel<'a>(&self, stack: &'a CoeffStack, color: usize, k: usize) -> &'a [f64] {
        &stack.block(color)[self.channel_range(k)]
    }
}

impl LinearRep for ShearletSystem {
    fn height(&self) -> usize {
        self.height
    }

    fn width(&self) -> usize {
        self.width
    }

    fn coeff_len(&self) -> usize {
        self.channels() * self.plane_len()
    }

    /// One group per (scale, shearing) channel.
    fn groups(&self) -> Vec<Range<usize>> {
        (0..self.channels()).map(|k| self.channel_range(k)).collect()
    }

    fn analyze_plane(&self, plane: &[f64]) -> Vec<f64> {
        ShearletSystem::analyze_plane(self, plane)
    }

    fn synthesize_plane(&self, coeffs: &[f64]) -> Vec<f64> {
        ShearletSystem::synthesize_plane(self, coeffs)
    }

    fn synthesize_adjoint_plane(&self, plane: &[f64]) -> Vec<f64> {
        ShearletSystem::synthesize_adjoint_plane(self, plane)
    }

    /// One block per channel pair.
    fn blocks(&self) -> Vec<Range<usize>> {
        (0..self.channels().div_ceil(2)).map(|p| self.pair_range(p)).collect()
    }

    fn synthesize_plane_streamed(&self, fill: &mut dyn FnMut(Range<usize>, &mut [f64])) -> Vec<f64> {
        self.combine(&self.synthesis_pairs, fill)
    }

    fn synthesize_adjoint_plane_streamed(&self, plane: &[f64], sink: &mut dyn FnMut(Range<usize>, &[f64])) {
        let spectrum = self.fft.forward_real(plane);
        self.filter_bank(&spectrum, &self.synthesis_pairs, sink);
    }
}

pub fn sh_analyze(sys: &ShearletSystem, img: &Image) -> Result<CoeffStack> {
    sys.analyze(img)
}

pub fn sh_synthesize(sys: &ShearletSystem, c: &CoeffStack) -> Result<Image> {
    sys.synthesize(c)
}

pub fn sh_synthesize_adjoint(sys: &ShearletSystem, y: &Image) -> Result<CoeffStack> {
    sys.synthesize_adjoint(y)
}

const DUMP_MAGIC: [u8; 4] = *b"SHCF";

/// Writes a stack as a 16-byte header (magic, K, H, W as little-endian
/// u32) followed by little-endian f64 values in `[color][k][y][x]` order.
pub fn write_coeff_dump(path: impl AsRef<Path>, sys: &ShearletSystem, stack: &CoeffStack) -> Result<()> {
    let path = path.as_ref();
    if stack.len() != sys.coeff_len() {
        return Err(Error::shape(sys.coeff_len(), stack.len()));
    }
    let mut out = Vec::with_capacity(16 + 8 * stack.data().len());
    out.extend_from_slice(&DUMP_MAGIC);
    for v in [sys.channels(), sys.height, sys.width] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in stack.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| Error::io(path, e))
}

/// Reads a dump back as `((K, H, W), stack)`.
pub fn read_coeff_dump(path: impl AsRef<Path>) -> Result<((usize, usize, usize), CoeffStack)> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |why: &str| Error::Decode {
        path: path.to_path_buf(),
        reason: why.to_string(),
    };
    if bytes.len() < 16 || bytes[..4] != DUMP_MAGIC {
        return Err(bad("missing coefficient dump header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap()) as usize;
    let (k, h, w) = (word(1), word(2), word(3));
    let per_channel = k * h * w;
    let payload = &bytes[16..];
    if per_channel == 0 || payload.len() % (8 * per_channel) != 0 {
        return Err(bad("payload size does not match header"));
    }
    let data = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect::<Vec<_>>();
    let channels = data.len() / per_channel;
    Ok(((k, h, w), Coefficients::from_vec(per_channel, channels, data)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::{dot, norm2};
    use crate::rng::Rng;

    fn random_plane(rng: &mut Rng, n: usize) -> Vec<f64> {
        rng.uniform(0.0, 1.0, n).unwrap()
    }

    #[test]
    fn channel_counts() {
        assert_eq!(build_shearlet_system(256, 256, 4).unwrap().channels(), 49);
        assert_eq!(build_shearlet_system(64, 64, 2).unwrap().channels(), 17);
        assert_eq!(channel_count(&default_shear_levels(4)), 49);
    }

    #[test]
    fn unsupported_sizes_rejected() {
        assert!(build_shearlet_system(48, 64, 2).is_err());
        assert!(build_shearlet_system(16, 16, 1).is_err());
        assert!(build_shearlet_system(64, 64, 0).is_err());
        assert!(build_shearlet_system(64, 64, 7).is_err());
    }

    #[test]
    fn filters_even_and_weights_positive() {
        let sys = build_shearlet_system(64, 32, 3).unwrap();
        let n = sys.plane_len();
        for k in 0..sys.channels() {
            let f = sys.filter(k);
            for i in 0..n {
                assert_eq!(f[i], f[sys.fft().negated(i)]);
            }
        }
        let min = sys.dual_weights().iter().copied().fold(f64::INFINITY, f64::min);
        assert!(min > 0.5, "min dual weight {min}");
    }

    #[test]
    fn zero_in_zero_out() {
        let sys = build_shearlet_system(32, 32, 2).unwrap();
        assert!(sys.analyze_plane(&vec![0.0; 1024]).iter().all(|&v| v == 0.0));
        assert!(sys
            .synthesize_plane(&vec![0.0; sys.coeff_len()])
            .iter()
            .all(|&v| v == 0.0));
        assert!(sys
            .synthesize_adjoint_plane(&vec![0.0; 1024])
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn constant_image_stays_in_lowpass() {
        let sys = build_shearlet_system(64, 64, 3).unwrap();
        let c = sys.analyze_plane(&vec![0.4; 64 * 64]);
        let low = norm2(&c[sys.channel_range(0)]);
        assert!(low > 0.0);
        for k in 1..sys.channels() {
            assert!(norm2(&c[sys.channel_range(k)]) <= 1e-8 * low);
        }
    }

    #[test]
    fn round_trip_linearity_adjoint() {
        let sys = build_shearlet_system(64, 64, 2).unwrap();
        let mut rng = Rng::new(4);
        let x = random_plane(&mut rng, 4096);
        let back = sys.synthesize_plane(&sys.analyze_plane(&x));
        let err: Vec<f64> = back.iter().zip(&x).map(|(a, b)| a - b).collect();
        assert!(norm2(&err) <= 1e-6 * norm2(&x));

        let c1 = rng.uniform(-1.0, 1.0, sys.coeff_len()).unwrap();
        let c2 = rng.uniform(-1.0, 1.0, sys.coeff_len()).unwrap();
        let sum: Vec<f64> = c1.iter().zip(&c2).map(|(a, b)| a + b).collect();
        let lhs = sys.synthesize_plane(&sum);
        let (s1, s2) = (sys.synthesize_plane(&c1), sys.synthesize_plane(&c2));
        for i in 0..lhs.len() {
            assert!((lhs[i] - s1[i] - s2[i]).abs() < 1e-12);
        }

        let y = rng.uniform(-1.0, 1.0, 4096).unwrap();
        let a = dot(&s1, &y);
        let b = dot(&c1, &sys.synthesize_adjoint_plane(&y));
        assert!((a - b).abs() <= 1e-10 * norm2(&c1) * norm2(&y));
    }

    #[test]
    fn dump_round_trip() {
        let sys = build_shearlet_system(32, 32, 1).unwrap();
        let img = Image::from_vec(32, 32, 3, Rng::new(8).uniform(0.0, 1.0, 3072).unwrap()).unwrap();
        let stack = sh_analyze(&sys, &img).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.bin");
        write_coeff_dump(&p, &sys, &stack).unwrap();
        assert_eq!(std::fs::metadata(&p).unwrap().len(), 16 + 8 * 9 * 1024 * 3);
        let ((k, h, w), back) = read_coeff_dump(&p).unwrap();
        assert_eq!((k, h, w), (9, 32, 32));
        assert_eq!(back, stack);
    }
}
