use super::convnet::TinyConvNet;
use super::dataset::SyntheticSample;
use super::{argmax, Classifier};
use crate::error::{Error, Result};
use crate::parallel;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            learning_rate: 0.05,
            momentum: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainReport {
    /// Mean cross-entropy over the training set before any update.
    pub initial_loss: f64,
    /// Mean minibatch loss seen during each epoch.
    pub epoch_losses: Vec<f64>,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

pub fn accuracy(model: &dyn Classifier, samples: &[SyntheticSample]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let hits = parallel::map_slice(samples, |s| {
        model.predict(&s.image).map(|p| usize::from(argmax(&p) == s.label))
    });
    let mut correct = 0;
    for h in hits {
        correct += h?;
    }
    Ok(correct as f64 / samples.len() as f64)
}

/// Minibatch SGD with momentum on the cross-entropy loss. Per-sample
/// gradients are summed in batch order, so results do not depend on the
/// thread count.
pub fn train(
    model: &mut TinyConvNet,
    train_set: &[SyntheticSample],
    test_set: &[SyntheticSample],
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<TrainReport> {
    if train_set.len() < 100 {
        return Err(Error::InvalidArgument(format!(
            "training needs at least 100 samples, got {}",
            train_set.len()
        )));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let initial: Vec<f64> = parallel::map_slice(train_set, |s| model.loss_and_grad(&s.image, s.label).0);
    let initial_loss = initial.iter().sum::<f64>() / train_set.len() as f64;

    let n_params = model.params().len();
    let mut velocity = vec![0.0; n_params];
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let net = &*model;
            let parts = parallel::map_slice(batch, |&i| {
                let s = &train_set[i];
                let (loss, grad, _) = net.loss_and_grad(&s.image, s.label);
                (loss, grad)
            });
            let mut grad = vec![0.0; n_params];
            let mut batch_loss = 0.0;
            for (loss, g) in &parts {
                batch_loss += loss;
                for (a, b) in grad.iter_mut().zip(g) {
                    *a += b;
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::Divergence {
                    step,
                    context: format!("training loss in epoch {epoch}"),
                });
            }
            loss_sum += batch_loss;
            let scale = 1.0 / batch.len() as f64;
            for ((p, v), g) in model.params_mut().iter_mut().zip(&mut velocity).zip(&grad) {
                *v = cfg.momentum * *v + g * scale;
                *p -= cfg.learning_rate * *v;
            }
            step += 1;
        }
        epoch_losses.push(loss_sum / train_set.len() as f64);
    }
    Ok(TrainReport {
        initial_loss,
        epoch_losses,
        train_accuracy: accuracy(model, train_set)?,
        test_accuracy: accuracy(model, test_set)?,
    })
}
