//! Two stride-2 5×5 convolutions with rectifiers, global average pooling,
//! an affine layer and softmax, with hand-written backpropagation.
//!
//! Convolutions run on the four polyphase components of the zero-padded
//! input so every inner loop is a unit-stride axpy.

use super::{softmax, Classifier};
use crate::error::Result;
use crate::image::Image;
use crate::rng::Rng;

const K: usize = 5;
const PAD: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvNetShape {
    pub height: usize,
    pub width: usize,
    pub in_channels: usize,
    pub conv1: usize,
    pub conv2: usize,
    pub classes: usize,
}

impl ConvNetShape {
    /// 128×128 grayscale, three classes.
    pub fn toy() -> Self {
        Self {
            height: 128,
            width: 128,
            in_channels: 1,
            conv1: 8,
            conv2: 16,
            classes: 3,
        }
    }

    fn offsets(&self) -> [usize; 7] {
        let w1 = self.conv1 * self.in_channels * K * K;
        let b1 = self.conv1;
        let w2 = self.conv2 * self.conv1 * K * K;
        let b2 = self.conv2;
        let w3 = self.classes * self.conv2;
        let b3 = self.classes;
        let mut o = [0; 7];
        for (i, len) in [w1, b1, w2, b2, w3, b3].into_iter().enumerate() {
            o[i + 1] = o[i] + len;
        }
        o
    }

    pub fn param_count(&self) -> usize {
        self.offsets()[6]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinyConvNet {
    shape: ConvNetShape,
    params: Vec<f64>,
}

/// Polyphase split of a zero-padded `h×w` plane: four planes of
/// `(h/2 + PAD) × (w/2 + PAD)`, indexed `py * 2 + px`.
struct Phases {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Phases {
    fn split(planes: &[f64], channels: usize, h: usize, w: usize) -> Self {
        let (rows, cols) = (h / 2 + PAD, w / 2 + PAD);
        let mut data = vec![0.0; channels * 4 * rows * cols];
        for c in 0..channels {
            let plane = &planes[c * h * w..(c + 1) * h * w];
            for y in 0..h {
                let py = (y + PAD) % 2;
                let iy = (y + PAD) / 2;
                for x in 0..w {
                    let px = (x + PAD) % 2;
                    let ix = (x + PAD) / 2;
                    data[((c * 4 + py * 2 + px) * rows + iy) * cols + ix] = plane[y * w + x];
                }
            }
        }
        Self { rows, cols, data }
    }

    fn phase(&self, c: usize, p: usize) -> &[f64] {
        let n = self.rows * self.cols;
        &self.data[(c * 4 + p) * n..(c * 4 + p + 1) * n]
    }

    fn phase_mut(&mut self, c: usize, p: usize) -> &mut [f64] {
        let n = self.rows * self.cols;
        &mut self.data[(c * 4 + p) * n..(c * 4 + p + 1) * n]
    }

    /// Inverse of [`Phases::split`] restricted to the unpadded interior.
    fn merge(&self, channels: usize, h: usize, w: usize) -> Vec<f64> {
        let mut out = vec![0.0; channels * h * w];
        for c in 0..channels {
            for y in 0..h {
                let (py, iy) = ((y + PAD) % 2, (y + PAD) / 2);
                for x in 0..w {
                    let (px, ix) = ((x + PAD) % 2, (x + PAD) / 2);
                    out[(c * h + y) * w + x] =
                        self.data[((c * 4 + py * 2 + px) * self.rows + iy) * self.cols + ix];
                }
            }
        }
        out
    }
}

fn conv_forward(
    input: &Phases,
    cin: usize,
    weights: &[f64],
    bias: &[f64],
    cout: usize,
    ho: usize,
    wo: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; cout * ho * wo];
    for oc in 0..cout {
        let plane = &mut out[oc * ho * wo..(oc + 1) * ho * wo];
        plane.fill(bias[oc]);
        for ic in 0..cin {
            let kern = &weights[(oc * cin + ic) * K * K..(oc * cin + ic + 1) * K * K];
            for ky in 0..K {
                for kx in 0..K {
                    let wv = kern[ky * K + kx];
                    let ph = input.phase(ic, (ky % 2) * 2 + kx % 2);
                    let (a, b) = (ky / 2, kx / 2);
                    for oy in 0..ho {
                        let src = &ph[(oy + a) * input.cols + b..][..wo];
                        let dst = &mut plane[oy * wo..(oy + 1) * wo];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += wv * s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight/bias gradients and, when `grad_input` is given, the
/// gradient with respect to the (polyphase) input.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &Phases,
    cin: usize,
    weights: &[f64],
    grad_out: &[f64],
    cout: usize,
    ho: usize,
    wo: usize,
    mut grad_wb: Option<(&mut [f64], &mut [f64])>,
    mut grad_input: Option<&mut Phases>,
) {
    for oc in 0..cout {
        let g = &grad_out[oc * ho * wo..(oc + 1) * ho * wo];
        if let Some((_, gb)) = grad_wb.as_mut() {
            gb[oc] += g.iter().sum::<f64>();
        }
        for ic in 0..cin {
            let base = (oc * cin + ic) * K * K;
            for ky in 0..K {
                for kx in 0..K {
                    let p = (ky % 2) * 2 + kx % 2;
                    let (a, b) = (ky / 2, kx / 2);
                    if let Some((gw, _)) = grad_wb.as_mut() {
                        let ph = input.phase(ic, p);
                        let mut acc = 0.0;
                        for oy in 0..ho {
                            let src = &ph[(oy + a) * input.cols + b..][..wo];
                            let gr = &g[oy * wo..(oy + 1) * wo];
                            acc += src.iter().zip(gr).map(|(s, d)| s * d).sum::<f64>();
                        }
                        gw[base + ky * K + kx] += acc;
                    }
                    if let Some(gi) = grad_input.as_mut() {
                        let wv = weights[base + ky * K + kx];
                        let cols = gi.cols;
                        let ph = gi.phase_mut(ic, p);
                        for oy in 0..ho {
                            let dst = &mut ph[(oy + a) * cols + b..][..wo];
                            let gr = &g[oy * wo..(oy + 1) * wo];
                            for (d, s) in dst.iter_mut().zip(gr) {
                                *d += wv * s;
                            }
                        }
                    }
                }
            }
        }
    }
}

struct Forward {
    x: Phases,
    a1: Phases,
    z1: Vec<f64>,
    z2: Vec<f64>,
    pooled: Vec<f64>,
    probs: Vec<f64>,
}

impl TinyConvNet {
    /// He-initialized network.
    pub fn new(shape: ConvNetShape, rng: &mut Rng) -> Self {
        let o = shape.offsets();
        let mut params = vec![0.0; shape.param_count()];
        let fill = |slice: &mut [f64], std: f64, rng: &mut Rng| {
            slice.iter_mut().for_each(|v| *v = std * rng.normal());
        };
        fill(
            &mut params[o[0]..o[1]],
            (2.0 / (shape.in_channels * K * K) as f64).sqrt(),
            rng,
        );
        fill(&mut params[o[2]..o[3]], (2.0 / (shape.conv1 * K * K) as f64).sqrt(), rng);
        fill(&mut params[o[4]..o[5]], (1.0 / shape.conv2 as f64).sqrt(), rng);
        Self { shape, params }
    }

    pub fn from_params(shape: ConvNetShape, params: Vec<f64>) -> Result<Self> {
        if params.len() != shape.param_count() {
            return Err(crate::Error::shape(shape.param_count(), params.len()));
        }
        Ok(Self { shape, params })
    }

    pub fn shape(&self) -> ConvNetShape {
        self.shape
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn forward(&self, img: &Image) -> Forward {
        let s = self.shape;
        let o = s.offsets();
        let p = &self.params;
        let (h, w) = (s.height, s.width);
        let (h1, w1, h2, w2) = (h / 2, w / 2, h / 4, w / 4);

        let centered: Vec<f64> = img.data().iter().map(|v| v - 0.5).collect();
        let x = Phases::split(&centered, s.in_channels, h, w);
        let z1 = conv_forward(&x, s.in_channels, &p[o[0]..o[1]], &p[o[1]..o[2]], s.conv1, h1, w1);
        let r1: Vec<f64> = z1.iter().map(|&v| v.max(0.0)).collect();
        let a1 = Phases::split(&r1, s.conv1, h1, w1);
        let z2 = conv_forward(&a1, s.conv1, &p[o[2]..o[3]], &p[o[3]..o[4]], s.conv2, h2, w2);
        let area = (h2 * w2) as f64;
        let pooled: Vec<f64> = z2
            .chunks_exact(h2 * w2)
            .map(|plane| plane.iter().map(|&v| v.max(0.0)).sum::<f64>() / area)
            .collect();
        let fc_w = &p[o[4]..o[5]];
        let fc_b = &p[o[5]..o[6]];
        let logits: Vec<f64> = (0..s.classes)
            .map(|c| {
                fc_b[c]
                    + fc_w[c * s.conv2..(c + 1) * s.conv2]
                        .iter()
                        .zip(&pooled)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            })
            .collect();
        Forward {
            x,
            a1,
            z1,
            z2,
            pooled,
            probs: softmax(&logits),
        }
    }

    /// Backpropagates `d_logits`; returns the parameter gradient (when
    /// `want_params`) and the input gradient (when `want_input`).
    fn backward(
        &self,
        fwd: &Forward,
        d_logits: &[f64],
        want_params: bool,
        want_input: bool,
    ) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
        let s = self.shape;
        let o = s.offsets();
        let p = &self.params;
        let (h, w) = (s.height, s.width);
        let (h1, w1, h2, w2) = (h / 2, w / 2, h / 4, w / 4);
        let mut grads = want_params.then(|| vec![0.0; s.param_count()]);

        let fc_w = &p[o[4]..o[5]];
        let mut d_pooled = vec![0.0; s.conv2];
        for c in 0..s.classes {
            for j in 0..s.conv2 {
                d_pooled[j] += d_logits[c] * fc_w[c * s.conv2 + j];
            }
        }
        if let Some(g) = grads.as_mut() {
            for c in 0..s.classes {
                for j in 0..s.conv2 {
                    g[o[4] + c * s.conv2 + j] = d_logits[c] * fwd.pooled[j];
                }
                g[o[5] + c] = d_logits[c];
            }
        }

        let area = (h2 * w2) as f64;
        let mut d_z2 = vec![0.0; fwd.z2.len()];
        for (j, (dz, z)) in d_z2
            .chunks_exact_mut(h2 * w2)
            .zip(fwd.z2.chunks_exact(h2 * w2))
            .enumerate()
        {
            let gj = d_pooled[j] / area;
            for (d, &v) in dz.iter_mut().zip(z) {
                *d = if v > 0.0 { gj } else { 0.0 };
            }
        }

        let mut d_a1 = Phases {
            rows: fwd.a1.rows,
            cols: fwd.a1.cols,
            data: vec![0.0; fwd.a1.data.len()],
        };
        {
            let (w2_grad, b2_grad) = match grads.as_mut() {
                Some(g) => {
                    let (lo, hi) = g.split_at_mut(o[3]);
                    (Some(&mut lo[o[2]..]), Some(&mut hi[..o[4] - o[3]]))
                }
                None => (None, None),
            };
            conv_backward(
                &fwd.a1,
                s.conv1,
                &p[o[2]..o[3]],
                &d_z2,
                s.conv2,
                h2,
                w2,
                w2_grad.zip(b2_grad),
                Some(&mut d_a1),
            );
        }
        let mut d_z1 = d_a1.merge(s.conv1, h1, w1);
        for (d, &z) in d_z1.iter_mut().zip(&fwd.z1) {
            if z <= 0.0 {
                *d = 0.0;
            }
        }

        let mut d_x = want_input.then(|| Phases {
            rows: fwd.x.rows,
            cols: fwd.x.cols,
            data: vec![0.0; fwd.x.data.len()],
        });
        let (w1_grad, b1_grad) = match grads.as_mut() {
            Some(g) => {
                let (lo, hi) = g.split_at_mut(o[1]);
                (Some(&mut lo[o[0]..]), Some(&mut hi[..o[2] - o[1]]))
            }
            None => (None, None),
        };
        if w1_grad.is_some() || d_x.is_some() {
            conv_backward(
                &fwd.x,
                s.in_channels,
                &p[o[0]..o[1]],
                &d_z1,
                s.conv1,
                h1,
                w1,
                w1_grad.zip(b1_grad),
                d_x.as_mut(),
            );
        }
        (grads, d_x.map(|d| d.merge(s.in_channels, h, w)))
    }

    /// Cross-entropy loss against `label` and its parameter gradient.
    pub fn loss_and_grad(&self, img: &Image, label: usize) -> (f64, Vec<f64>, Vec<f64>) {
        let fwd = self.forward(img);
        let mut d_logits = fwd.probs.clone();
        d_logits[label] -= 1.0;
        let loss = -fwd.probs[label].max(f64::MIN_POSITIVE).ln();
        let (grads, _) = self.backward(&fwd, &d_logits, true, false);
        (loss, grads.expect("requested"), fwd.probs)
    }

    fn image_from(&self, data: Vec<f64>) -> Image {
        let s = self.shape;
        Image::from_vec(s.height, s.width, s.in_channels, data).expect("model shape")
    }
}

impl Classifier for TinyConvNet {
    fn num_classes(&self) -> usize {
        self.shape.classes
    }

    fn input_shape(&self) -> (usize, usize, usize) {
        (self.shape.height, self.shape.width, self.shape.in_channels)
    }

    fn predict(&self, img: &Image) -> Result<Vec<f64>> {
        self.check_input(img)?;
        Ok(self.forward(img).probs)
    }

    fn input_gradient(&self, img: &Image, class: usize) -> Result<Image> {
        Ok(self.predict_with_gradient(img, class)?.1)
    }

    fn predict_with_gradient(&self, img: &Image, class: usize) -> Result<(Vec<f64>, Image)> {
        self.check_input(img)?;
        self.check_class(class)?;
        let fwd = self.forward(img);
        let pc = fwd.probs[class];
        // ∂p_c/∂z_j = p_c (δ_cj - p_j)
        let d_logits: Vec<f64> = fwd
            .probs
            .iter()
            .enumerate()
            .map(|(j, &pj)| pc * (if j == class { 1.0 } else { 0.0 } - pj))
            .collect();
        let (_, dx) = self.backward(&fwd, &d_logits, false, true);
        Ok((fwd.probs.clone(), self.image_from(dx.expect("requested"))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ConvNetShape {
        ConvNetShape {
            height: 16,
            width: 12,
            in_channels: 3,
            conv1: 3,
            conv2: 4,
            classes: 3,
        }
    }

    fn random_image(rng: &mut Rng, s: ConvNetShape) -> Image {
        let n = s.height * s.width * s.in_channels;
        Image::from_vec(s.height, s.width, s.in_channels, rng.uniform(0.0, 1.0, n).unwrap()).unwrap()
    }

    /// Direct strided convolution on the padded input.
    fn naive_conv(input: &[f64], cin: usize, h: usize, w: usize, wts: &[f64], b: &[f64], cout: usize) -> Vec<f64> {
        let (ho, wo) = (h / 2, w / 2);
        let mut out = vec![0.0; cout * ho * wo];
        for oc in 0..cout {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = b[oc];
                    for ic in 0..cin {
                        for ky in 0..K {
                            for kx in 0..K {
                                let y = (2 * oy + ky) as i64 - PAD as i64;
                                let x = (2 * ox + kx) as i64 - PAD as i64;
                                if y >= 0 && x >= 0 && (y as usize) < h && (x as usize) < w {
                                    acc += wts[((oc * cin + ic) * K + ky) * K + kx]
                                        * input[(ic * h + y as usize) * w + x as usize];
                                }
                            }
                        }
                    }
                    out[(oc * ho + oy) * wo + ox] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn polyphase_conv_matches_direct() {
        let mut rng = Rng::new(1);
        let (cin, cout, h, w) = (2, 3, 10, 14);
        let input = rng.uniform(-1.0, 1.0, cin * h * w).unwrap();
        let wts = rng.uniform(-1.0, 1.0, cout * cin * K * K).unwrap();
        let b = rng.uniform(-1.0, 1.0, cout).unwrap();
        let fast = conv_forward(&Phases::split(&input, cin, h, w), cin, &wts, &b, cout, h / 2, w / 2);
        let slow = naive_conv(&input, cin, h, w, &wts, &b, cout);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn probabilities_normalized_and_deterministic() {
        let mut rng = Rng::new(2);
        let net = TinyConvNet::new(small(), &mut rng);
        let img = random_image(&mut rng, small());
        let p = net.predict(&img).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(p.iter().all(|&v| v >= 0.0));
        assert_eq!(p, net.predict(&img).unwrap());
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = Rng::new(3);
        let net = TinyConvNet::new(small(), &mut rng);
        let img = random_image(&mut rng, small());
        for class in 0..3 {
            let g = net.input_gradient(&img, class).unwrap();
            for _ in 0..20 {
                let i = rng.below(img.data().len());
                let h = 1e-4;
                let mut plus = img.clone();
                plus.data_mut()[i] += h;
                let mut minus = img.clone();
                minus.data_mut()[i] -= h;
                let fd = (net.predict(&plus).unwrap()[class] - net.predict(&minus).unwrap()[class]) / (2.0 * h);
                let an = g.data()[i];
                assert!(
                    (fd - an).abs() <= 1e-4 * fd.abs().max(an.abs()).max(1e-6),
                    "class {class} pixel {i}: fd {fd} vs {an}"
                );
            }
        }
    }

    #[test]
    fn class_gradients_sum_to_zero() {
        let mut rng = Rng::new(4);
        let net = TinyConvNet::new(small(), &mut rng);
        let img = random_image(&mut rng, small());
        let mut total = vec![0.0; img.data().len()];
        for c in 0..3 {
            for (t, g) in total.iter_mut().zip(net.input_gradient(&img, c).unwrap().data()) {
                *t += g;
            }
        }
        assert!(total.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        let mut rng = Rng::new(5);
        let mut net = TinyConvNet::new(small(), &mut rng);
        let img = random_image(&mut rng, small());
        let (_, grad, _) = net.loss_and_grad(&img, 1);
        for _ in 0..30 {
            let i = rng.below(net.params().len());
            let h = 1e-5;
            net.params_mut()[i] += h;
            let up = net.loss_and_grad(&img, 1).0;
            net.params_mut()[i] -= 2.0 * h;
            let down = net.loss_and_grad(&img, 1).0;
            net.params_mut()[i] += h;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - grad[i]).abs() <= 1e-5 * fd.abs().max(grad[i].abs()).max(1e-4), "param {i}");
        }
    }

    #[test]
    fn wrong_shape_and_class_rejected() {
        let mut rng = Rng::new(6);
        let net = TinyConvNet::new(small(), &mut rng);
        assert!(net.predict(&Image::zeros(16, 16, 3)).is_err());
        assert!(net.input_gradient(&Image::zeros(16, 12, 3), 3).is_err());
    }
}
