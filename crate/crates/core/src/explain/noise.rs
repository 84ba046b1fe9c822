//! Perturbations drawn uniformly from `[μ − σ, μ + σ]` per coefficient
//! group, where `μ`, `σ` are the mean and standard deviation of the image's
//! own coefficients in that group.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::linear::Coefficients;
use crate::rng::{counter_unit, derive_stream, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupStats {
    pub mean: f64,
    pub std: f64,
}

/// Per-color, per-group statistics of an image's coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    len: usize,
    groups: Vec<Range<usize>>,
    /// `stats[color][group]`.
    stats: Vec<Vec<GroupStats>>,
}

impl NoiseModel {
    pub fn fit(coeffs: &Coefficients, groups: &[Range<usize>]) -> Result<Self> {
        let len = coeffs.len();
        let mut covered = 0;
        for g in groups {
            if g.start != covered || g.end > len || g.is_empty() {
                return Err(Error::InvalidArgument("groups must tile the coefficients".into()));
            }
            covered = g.end;
        }
        if covered != len {
            return Err(Error::InvalidArgument("groups must tile the coefficients".into()));
        }
        let stats = coeffs
            .blocks()
            .map(|block| {
                groups
                    .iter()
                    .map(|g| {
                        let vals = &block[g.clone()];
                        let n = vals.len() as f64;
                        let mean = vals.iter().sum::<f64>() / n;
                        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                        GroupStats { mean, std: var.sqrt() }
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            len,
            groups: groups.to_vec(),
            stats,
        })
    }

    pub fn stats(&self, color: usize) -> &[GroupStats] {
        &self.stats[color]
    }

    pub fn groups(&self) -> &[Range<usize>] {
        &self.groups
    }

    pub fn channels(&self) -> usize {
        self.stats.len()
    }

    /// The batch used at optimizer step `step`.
    pub fn batch_for_step(&self, seed: u64, step: usize, samples: usize) -> PerturbationBatch {
        let key = Rng::child(seed, &[0x15E5, step as u64]).next_u64();
        PerturbationBatch {
            model: self.clone(),
            key,
            samples,
            step,
        }
    }
}

/// `samples` coefficient-shaped noise draws, evaluated lazily so that any
/// block of any draw can be produced on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationBatch {
    model: NoiseModel,
    key: u64,
    samples: usize,
    step: usize,
}

impl PerturbationBatch {
    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn len(&self) -> usize {
        self.model.len
    }

    pub fn is_empty(&self) -> bool {
        self.model.len == 0
    }

    pub fn channels(&self) -> usize {
        self.model.channels()
    }

    pub fn model(&self) -> &NoiseModel {
        &self.model
    }

    /// Writes coefficients `range` of draw `sample` for color `color`.
    pub fn fill(&self, sample: usize, color: usize, range: Range<usize>, out: &mut [f64]) {
        assert_eq!(out.len(), range.len());
        let key = self.key ^ derive_stream(&[sample as u64, color as u64]);
        let stats = &self.model.stats[color];
        let first = self.model.groups.partition_point(|g| g.end <= range.start);
        for (g, st) in self.model.groups[first..].iter().zip(&stats[first..]) {
            if g.start >= range.end {
                break;
            }
            let (lo, hi) = (st.mean - st.std, st.mean + st.std);
            let span = g.start.max(range.start)..g.end.min(range.end);
            let dst = &mut out[span.start - range.start..span.end - range.start];
            if hi > lo {
                for (i, d) in span.zip(dst.iter_mut()) {
                    let v = lo + (hi - lo) * counter_unit(key, i as u64);
                    *d = if v < hi { v } else { lo };
                }
            } else {
                dst.fill(lo);
            }
        }
    }

    /// Draw `sample` in full.
    pub fn draw(&self, sample: usize) -> Coefficients {
        let mut out = Coefficients::zeros(self.len(), self.channels());
        for color in 0..self.channels() {
            self.fill(sample, color, 0..self.len(), out.block_mut(color));
        }
        out
    }
}

/// Fits group statistics to `coeffs` and draws a fresh batch of `mc`
/// perturbations keyed from `rng`.
pub fn adapted_noise(
    coeffs: &Coefficients,
    groups: &[Range<usize>],
    rng: &mut Rng,
    mc: usize,
) -> Result<PerturbationBatch> {
    if mc == 0 {
        return Err(Error::InvalidArgument("mc must be at least 1".into()));
    }
    let model = NoiseModel::fit(coeffs, groups)?;
    Ok(PerturbationBatch {
        model,
        key: rng.next_u64(),
        samples: mc,
        step: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_group_gives_constant_noise() {
        let c = Coefficients::from_vec(6, 1, vec![5.0, 5.0, 5.0, 1.0, 2.0, 3.0]).unwrap();
        let batch = adapted_noise(&c, &[0..3, 3..6], &mut Rng::new(1), 4).unwrap();
        for s in 0..4 {
            let d = batch.draw(s);
            assert!(d.data()[..3].iter().all(|&v| v == 5.0));
        }
    }

    #[test]
    fn zero_coefficients_give_zero_noise() {
        let c = Coefficients::zeros(10, 2);
        let batch = adapted_noise(&c, &[0..4, 4..10], &mut Rng::new(1), 2).unwrap();
        assert!(batch.draw(1).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn blockwise_fill_matches_full_draw() {
        let mut rng = Rng::new(5);
        let c = Coefficients::from_vec(12, 1, rng.uniform(-1.0, 1.0, 12).unwrap()).unwrap();
        let batch = adapted_noise(&c, &[0..5, 5..12], &mut rng, 3).unwrap();
        let full = batch.draw(2);
        let mut part = vec![0.0; 6];
        batch.fill(2, 0, 3..9, &mut part);
        assert_eq!(&full.data()[3..9], &part[..]);
    }

    #[test]
    fn rejects_zero_samples_and_bad_groups() {
        let c = Coefficients::zeros(4, 1);
        assert!(adapted_noise(&c, &[0..4], &mut Rng::new(1), 0).is_err());
        assert!(adapted_noise(&c, &[0..3], &mut Rng::new(1), 1).is_err());
    }
}
