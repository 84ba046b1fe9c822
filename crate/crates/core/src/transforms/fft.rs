//! Two-dimensional complex FFT on row-major planes.
//!
//! Spectra are kept in transposed layout (`kx * height + ky`): the forward
//! transform finishes on columns and the inverse starts there, which saves
//! two transposes per round trip. Any per-frequency table that multiplies a
//! spectrum must use the same layout.

use std::cell::RefCell;
use std::ops::Range;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct Fft2 {
    height: usize,
    width: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2")
            .field("height", &self.height)
            .field("width", &self.width)
            .finish()
    }
}

impl Fft2 {
    pub fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            height,
            width,
            row_fwd: planner.plan_fft_forward(width),
            col_fwd: planner.plan_fft_forward(height),
            row_inv: planner.plan_fft_inverse(width),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Signed frequency of spectrum index `idx` in transposed layout, as
    /// `(fy, fx)`.
    pub fn frequency(&self, idx: usize) -> (i64, i64) {
        let kx = idx / self.height;
        let ky = idx % self.height;
        (signed(ky, self.height), signed(kx, self.width))
    }

    /// Spectrum index of `-ξ` for the spectrum index of `ξ`.
    pub fn negated(&self, idx: usize) -> usize {
        let kx = idx / self.height;
        let ky = idx % self.height;
        ((self.width - kx) % self.width) * self.height + (self.height - ky) % self.height
    }

    fn with_workspace<R>(&self, f: impl FnOnce(&mut Workspace) -> R) -> R {
        let scratch_len = [&self.row_fwd, &self.col_fwd, &self.row_inv, &self.col_inv]
            .iter()
            .map(|f| f.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        WORKSPACE.with(|ws| {
            let mut ws = ws.borrow_mut();
            ws.ensure(self.len(), scratch_len);
            f(&mut ws)
        })
    }

    /// In-place forward transform; output in transposed layout.
    pub fn forward(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.len());
        self.with_workspace(|ws| {
            let tmp = &mut ws.tmp[..buf.len()];
            self.row_fwd.process_with_scratch(buf, &mut ws.scratch);
            transpose(buf, tmp, self.height, self.width);
            self.col_fwd.process_with_scratch(tmp, &mut ws.scratch);
            buf.copy_from_slice(tmp);
        })
    }

    /// In-place normalized inverse of [`Fft2::forward`].
    pub fn inverse(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.len());
        self.with_workspace(|ws| {
            let tmp = &mut ws.tmp[..buf.len()];
            self.col_inv.process_with_scratch(buf, &mut ws.scratch);
            transpose(buf, tmp, self.width, self.height);
            self.row_inv.process_with_scratch(tmp, &mut ws.scratch);
            let scale = 1.0 / self.len() as f64;
            for (b, t) in buf.iter_mut().zip(tmp.iter()) {
                *b = t * scale;
            }
        })
    }

    /// Forward transform of the row-major plane `input` (overwritten)
    /// that only produces the spectrum columns `kx` in `cols`, written to
    /// `out` in transposed layout; other entries of `out` are untouched.
    pub fn forward_columns(&self, input: &mut [Complex64], out: &mut [Complex64], cols: &[Range<usize>]) {
        assert!(input.len() == self.len() && out.len() == self.len());
        let (h, w) = (self.height, self.width);
        self.with_workspace(|ws| {
            self.row_fwd.process_with_scratch(input, &mut ws.scratch);
            let tmp = &mut ws.tmp[..h];
            for kx in cols.iter().flat_map(|r| r.clone()) {
                for (y, t) in tmp.iter_mut().enumerate() {
                    *t = input[y * w + kx];
                }
                self.col_fwd.process_outofplace_with_scratch(tmp, &mut out[kx * h..(kx + 1) * h], &mut ws.scratch);
            }
        })
    }

    /// Unnormalized inverse of a spectrum (overwritten) that is zero outside
    /// the columns in `cols`; `out` receives `len()` times the true inverse
    /// in row-major order.
    pub fn inverse_columns_unscaled(&self, spectrum: &mut [Complex64], out: &mut [Complex64], cols: &[Range<usize>]) {
        assert!(spectrum.len() == self.len() && out.len() == self.len());
        let (h, w) = (self.height, self.width);
        self.with_workspace(|ws| {
            let mut next = 0;
            for r in cols {
                for row in out.chunks_exact_mut(w) {
                    row[next..r.start].fill(Complex64::default());
                }
                next = r.end;
                for kx in r.clone() {
                    let col = &mut spectrum[kx * h..(kx + 1) * h];
                    self.col_inv.process_with_scratch(col, &mut ws.scratch);
                    for (y, v) in col.iter().enumerate() {
                        out[y * w + kx] = *v;
                    }
                }
            }
            for row in out.chunks_exact_mut(w) {
                row[next..].fill(Complex64::default());
            }
            self.row_inv.process_with_scratch(out, &mut ws.scratch);
        })
    }

    pub fn forward_real(&self, plane: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = plane.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    /// Forward transforms of two real planes with a single complex FFT.
    pub fn forward_real_pair(&self, a: &[f64], b: &[f64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let mut z: Vec<Complex64> = a.iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)).collect();
        self.forward(&mut z);
        let mut fa = vec![Complex64::default(); z.len()];
        let mut fb = vec![Complex64::default(); z.len()];
        for i in 0..z.len() {
            let zc = z[self.negated(i)].conj();
            fa[i] = (z[i] + zc) * 0.5;
            // (z - conj(z(-ξ))) / 2i
            let d = (z[i] - zc) * 0.5;
            fb[i] = Complex64::new(d.im, -d.re);
        }
        (fa, fb)
    }
}

#[derive(Default)]
struct Workspace {
    tmp: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Workspace {
    fn ensure(&mut self, len: usize, scratch_len: usize) {
        if self.tmp.len() < len {
            self.tmp.resize(len, Complex64::default());
        }
        if self.scratch.len() < scratch_len {
            self.scratch.resize(scratch_len, Complex64::default());
        }
    }
}

thread_local! {
    static WORKSPACE: RefCell<Workspace> = RefCell::new(Workspace::default());
}

fn signed(k: usize, n: usize) -> i64 {
    if k < n.div_ceil(2) {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// `src` is `rows × cols` row-major; `dst` becomes `cols × rows`.
fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    const B: usize = 16;
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                for c in c0..(c0 + B).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn naive_dft(plane: &[f64], h: usize, w: usize, ky: usize, kx: usize) -> Complex64 {
        let mut acc = Complex64::default();
        for y in 0..h {
            for x in 0..w {
                let phase = -std::f64::consts::TAU
                    * ((ky * y) as f64 / h as f64 + (kx * x) as f64 / w as f64);
                acc += Complex64::from_polar(plane[y * w + x], phase);
            }
        }
        acc
    }

    #[test]
    fn matches_naive_dft_in_transposed_layout() {
        let (h, w) = (8, 16);
        let plane = Rng::new(1).uniform(-1.0, 1.0, h * w).unwrap();
        let fft = Fft2::new(h, w);
        let spec = fft.forward_real(&plane);
        for kx in 0..w {
            for ky in 0..h {
                let want = naive_dft(&plane, h, w, ky, kx);
                assert!((spec[kx * h + ky] - want).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn round_trip_and_pair_split() {
        let (h, w) = (16, 8);
        let mut rng = Rng::new(2);
        let a = rng.uniform(-1.0, 1.0, h * w).unwrap();
        let b = rng.uniform(-1.0, 1.0, h * w).unwrap();
        let fft = Fft2::new(h, w);
        let (fa, fb) = fft.forward_real_pair(&a, &b);
        let ra = fft.forward_real(&a);
        let rb = fft.forward_real(&b);
        for i in 0..h * w {
            assert!((fa[i] - ra[i]).norm() < 1e-12);
            assert!((fb[i] - rb[i]).norm() < 1e-12);
        }
        let mut back = ra.clone();
        fft.inverse(&mut back);
        for (x, y) in back.iter().zip(&a) {
            assert!((x.re - y).abs() < 1e-14 && x.im.abs() < 1e-14);
        }
    }

    #[test]
    fn column_restricted_passes_match_full() {
        let (h, w) = (16, 8);
        let fft = Fft2::new(h, w);
        let mut rng = Rng::new(3);
        let a: Vec<Complex64> = (0..h * w)
            .map(|_| Complex64::new(rng.next_f64(), rng.next_f64()))
            .collect();
        let cols = [1..3, 5..6];
        let mut full = a.clone();
        fft.forward(&mut full);
        let mut part = vec![Complex64::default(); h * w];
        fft.forward_columns(&mut a.clone(), &mut part, &cols);
        for kx in cols.iter().flat_map(|r| r.clone()) {
            for ky in 0..h {
                assert!((full[kx * h + ky] - part[kx * h + ky]).norm() < 1e-12);
            }
        }

        let mut sparse = vec![Complex64::default(); h * w];
        for kx in cols.iter().flat_map(|r| r.clone()) {
            sparse[kx * h..(kx + 1) * h].copy_from_slice(&full[kx * h..(kx + 1) * h]);
        }
        let mut want = sparse.clone();
        fft.inverse(&mut want);
        let mut back = vec![Complex64::new(9.0, 9.0); h * w];
        fft.inverse_columns_unscaled(&mut sparse, &mut back, &cols);
        for (x, y) in back.iter().zip(&want) {
            assert!((x / (h * w) as f64 - y).norm() < 1e-12);
        }
    }
}
