//! Synthetic scenes whose class is fixed by one small patterned patch
//! (horizontal stripes, vertical stripes, or a filled disk) placed among
//! label-independent clutter (thin rectangle outlines and arcs) on a tilted,
//! noisy background.

use std::f64::consts::PI;

use crate::image::Image;
use crate::rng::Rng;

pub const PATTERN_NAMES: [&str; 3] = ["horizontal_stripes", "vertical_stripes", "disk"];
pub const DEFAULT_SIZE: usize = 128;

const DATASET_STREAM: u64 = 0xDA7A;
const PATCH_MARGIN: i64 = 3;
const PERIODS: [f64; 3] = [8.0, 10.0, 12.0];
const DISK_EDGE: f64 = 2.0;
const CLUTTER_MARGIN: i64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PatchBox {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl PatchBox {
    pub fn contains(&self, y: usize, x: usize) -> bool {
        y >= self.y && y < self.y + self.height && x >= self.x && x < self.x + self.width
    }

    fn overlaps(&self, other: &Bounds, margin: i64) -> bool {
        let own = Bounds {
            x0: self.x as i64,
            y0: self.y as i64,
            x1: (self.x + self.width) as i64,
            y1: (self.y + self.height) as i64,
        };
        own.overlaps(other, margin)
    }
}

/// Half-open integer bounding box; may extend past the image.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Bounds {
    x0: i64,
    y0: i64,
    x1: i64,
    y1: i64,
}

impl Bounds {
    fn overlaps(&self, other: &Bounds, margin: i64) -> bool {
        self.x0 < other.x1 + margin
            && other.x0 < self.x1 + margin
            && self.y0 < other.y1 + margin
            && other.y0 < self.y1 + margin
    }

    fn inside(&self, size: usize) -> bool {
        self.x0 >= 0 && self.y0 >= 0 && self.x1 <= size as i64 && self.y1 <= size as i64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Clutter {
    RectOutline {
        x: f64,
        y: f64,
        width: f64,
        height: f64,
        thickness: f64,
        delta: f64,
    },
    Arc {
        cx: f64,
        cy: f64,
        radius: f64,
        start: f64,
        sweep: f64,
        thickness: f64,
        delta: f64,
    },
}

impl Clutter {
    fn bounds(&self) -> Bounds {
        match *self {
            Clutter::RectOutline {
                x, y, width, height, ..
            } => Bounds {
                x0: x.floor() as i64,
                y0: y.floor() as i64,
                x1: (x + width).ceil() as i64,
                y1: (y + height).ceil() as i64,
            },
            Clutter::Arc {
                cx,
                cy,
                radius,
                thickness,
                ..
            } => {
                let r = radius + thickness;
                Bounds {
                    x0: (cx - r).floor() as i64,
                    y0: (cy - r).floor() as i64,
                    x1: (cx + r).ceil() as i64 + 1,
                    y1: (cy + r).ceil() as i64 + 1,
                }
            }
        }
    }

    fn translated(&self, dx: f64, dy: f64) -> Clutter {
        let mut out = self.clone();
        match &mut out {
            Clutter::RectOutline { x, y, .. } => {
                *x += dx;
                *y += dy;
            }
            Clutter::Arc { cx, cy, .. } => {
                *cx += dx;
                *cy += dy;
            }
        }
        out
    }

    /// Intensity offset at pixel center `(py, px)`, if covered.
    fn offset_at(&self, py: f64, px: f64) -> Option<f64> {
        match *self {
            Clutter::RectOutline {
                x,
                y,
                width,
                height,
                thickness,
                delta,
            } => {
                let inside_outer = px >= x && px < x + width && py >= y && py < y + height;
                let inside_inner = px >= x + thickness
                    && px < x + width - thickness
                    && py >= y + thickness
                    && py < y + height - thickness;
                (inside_outer && !inside_inner).then_some(delta)
            }
            Clutter::Arc {
                cx,
                cy,
                radius,
                start,
                sweep,
                thickness,
                delta,
            } => {
                let (dy, dx) = (py - cy, px - cx);
                let dist = (dx * dx + dy * dy).sqrt();
                if (dist - radius).abs() > thickness / 2.0 {
                    return None;
                }
                let angle = (dy.atan2(dx) - start).rem_euclid(2.0 * PI);
                (angle <= sweep).then_some(delta)
            }
        }
    }
}

/// Everything needed to render one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub size: usize,
    pub label: usize,
    pub patch: PatchBox,
    pub background: f64,
    pub tilt_x: f64,
    pub tilt_y: f64,
    pub noise_std: f64,
    pub noise_seed: u64,
    /// Stripe period in pixels.
    pub period: f64,
    /// Stripe offset in pixels.
    pub phase: f64,
    pub amplitude: f64,
    pub radius: f64,
    pub clutter: Vec<Clutter>,
}

impl Scene {
    /// Pattern intensity in `[0, 1]` at pixel `(y, x)`; zero outside the
    /// patch box. Stripes have a raised-cosine profile and the disk a
    /// linear edge ramp of `DISK_EDGE` pixels.
    pub fn pattern_value(&self, y: usize, x: usize) -> f64 {
        if !self.patch.contains(y, x) {
            return 0.0;
        }
        let (ly, lx) = ((y - self.patch.y) as f64, (x - self.patch.x) as f64);
        let wave = |t: f64| 0.5 + 0.5 * (2.0 * PI * (t + self.phase) / self.period).cos();
        match self.label {
            0 => wave(ly),
            1 => wave(lx),
            _ => {
                let cy = self.patch.height as f64 / 2.0 - 0.5;
                let cx = self.patch.width as f64 / 2.0 - 0.5;
                let d = (ly - cy).hypot(lx - cx);
                ((self.radius - d) / DISK_EDGE + 0.5).clamp(0.0, 1.0)
            }
        }
    }

    pub fn render(&self) -> Image {
        let n = self.size;
        let mut noise = Rng::new(self.noise_seed);
        let mut data = Vec::with_capacity(n * n);
        for y in 0..n {
            for x in 0..n {
                let fy = y as f64 / n as f64 - 0.5;
                let fx = x as f64 / n as f64 - 0.5;
                let mut v = self.background + self.tilt_x * fx + self.tilt_y * fy;
                v += self.noise_std * noise.normal();
                let (py, px) = (y as f64 + 0.5, x as f64 + 0.5);
                if let Some(d) = self.clutter.iter().find_map(|c| c.offset_at(py, px)) {
                    v += d;
                }
                v += self.amplitude * self.pattern_value(y, x);
                data.push(v.clamp(0.0, 1.0));
            }
        }
        Image::from_vec(n, n, 1, data).expect("square grayscale")
    }

    /// The same scene with all clutter moved by `(dx, dy)`, or `None` when
    /// the moved clutter would leave the image or touch the patch.
    pub fn shift_clutter(&self, dx: i64, dy: i64) -> Option<Scene> {
        let clutter: Vec<Clutter> = self
            .clutter
            .iter()
            .map(|c| c.translated(dx as f64, dy as f64))
            .collect();
        let ok = clutter.iter().all(|c| {
            let b = c.bounds();
            b.inside(self.size) && !self.patch.overlaps(&b, PATCH_MARGIN)
        });
        ok.then(|| Scene {
            clutter,
            ..self.clone()
        })
    }

    pub fn sample(&self) -> SyntheticSample {
        SyntheticSample {
            image: self.render(),
            label: self.label,
            patch_box: self.patch,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub image: Image,
    pub label: usize,
    pub patch_box: PatchBox,
}

pub fn generate_scene(rng: &mut Rng, label: usize, size: usize) -> Scene {
    assert!(label < 3, "label {label}");
    let side = 32 + rng.below(9);
    let patch = PatchBox {
        x: 4 + rng.below(size - side - 8),
        y: 4 + rng.below(size - side - 8),
        width: side,
        height: side,
    };
    let period = PERIODS[rng.below(PERIODS.len())];
    let mut scene = Scene {
        size,
        label,
        patch,
        background: rng.uniform_one(0.1, 0.6),
        tilt_x: rng.uniform_one(-0.15, 0.15),
        tilt_y: rng.uniform_one(-0.15, 0.15),
        noise_std: rng.uniform_one(0.01, 0.04),
        noise_seed: rng.next_u64(),
        period,
        phase: rng.uniform_one(0.0, period),
        amplitude: rng.uniform_one(0.3, 0.45),
        radius: rng.uniform_one(0.3, 0.45) * side as f64,
        clutter: Vec::new(),
    };

    let count = 2 + rng.below(3);
    let mut placed: Vec<Bounds> = Vec::new();
    for _ in 0..count {
        for _attempt in 0..30 {
            let sign = if rng.below(2) == 0 { 1.0 } else { -1.0 };
            let delta = sign * rng.uniform_one(0.15, 0.3);
            let thickness = 1.0 + rng.below(2) as f64;
            let item = if rng.below(2) == 0 {
                let width = rng.uniform_one(10.0, 30.0).round();
                let height = rng.uniform_one(10.0, 30.0).round();
                Clutter::RectOutline {
                    x: rng.uniform_one(0.0, size as f64 - width).floor(),
                    y: rng.uniform_one(0.0, size as f64 - height).floor(),
                    width,
                    height,
                    thickness,
                    delta,
                }
            } else {
                let radius = rng.uniform_one(6.0, 16.0);
                let reach = radius + thickness + 1.0;
                Clutter::Arc {
                    cx: rng.uniform_one(reach, size as f64 - reach),
                    cy: rng.uniform_one(reach, size as f64 - reach),
                    radius,
                    start: rng.uniform_one(0.0, 2.0 * PI),
                    sweep: rng.uniform_one(0.5 * PI, 1.5 * PI),
                    thickness,
                    delta,
                }
            };
            let b = item.bounds();
            if b.inside(size)
                && !patch.overlaps(&b, PATCH_MARGIN)
                && placed.iter().all(|p| !p.overlaps(&b, CLUTTER_MARGIN))
            {
                placed.push(b);
                scene.clutter.push(item);
                break;
            }
        }
    }
    scene
}

/// `n` samples with labels cycling `0, 1, 2, …`; sample `i` draws from its
/// own child stream of `rng`'s seed.
pub fn generate_dataset(rng: &Rng, n: usize) -> Vec<SyntheticSample> {
    let seed = rng.seed();
    crate::parallel::map_indexed(n, |i| {
        let mut r = Rng::child(seed, &[DATASET_STREAM, i as u64]);
        generate_scene(&mut r, i % 3, DEFAULT_SIZE).sample()
    })
}
