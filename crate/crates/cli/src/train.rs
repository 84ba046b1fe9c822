//! `maskx train`: fits the toy classifier to a dataset directory.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Args;
use maskx::model::{checkpoint_bytes, train, ConvNetShape, TinyConvNet, TrainConfig};
use maskx::Rng;
use serde::Serialize;

use crate::dataset::load_samples;
use crate::output::{OutputDir, RunManifest};

const INIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    /// Dataset directory written by `maskx dataset`.
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fraction of the images, taken from the end, held out for testing.
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    /// Channels of the first convolution.
    #[arg(long, default_value_t = ConvNetShape::toy().conv1)]
    pub conv1: usize,
    /// Channels of the second convolution.
    #[arg(long, default_value_t = ConvNetShape::toy().conv2)]
    pub conv2: usize,
}

pub fn run(args: &TrainArgs, threads: usize) -> Result<()> {
    if !(0.0..1.0).contains(&args.holdout) {
        bail!("--holdout must lie in [0, 1), got {}", args.holdout);
    }
    let start = Instant::now();
    let samples = load_samples(&args.data, None)?;
    let first = samples.first().context("dataset is empty")?;
    let (height, width, channels) = first.image.shape();
    if let Some(bad) = samples.iter().position(|s| s.image.shape() != (height, width, channels)) {
        bail!("image {bad} has a different shape than image 0");
    }
    let test_len = (samples.len() as f64 * args.holdout).round() as usize;
    let (train_set, test_set) = samples.split_at(samples.len() - test_len);
    let load_time = start.elapsed();

    let shape = ConvNetShape {
        height,
        width,
        in_channels: channels,
        conv1: args.conv1,
        conv2: args.conv2,
        ..ConvNetShape::toy()
    };
    let mut net = TinyConvNet::new(shape, &mut Rng::child(args.seed, &[INIT_STREAM]));
    let cfg = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.lr,
        momentum: args.momentum,
    };
    let fit_start = Instant::now();
    let report = train(&mut net, train_set, test_set, &cfg, &mut Rng::child(args.seed, &[SHUFFLE_STREAM]))?;
    let fit_time = fit_start.elapsed();

    let parent = match args.out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = args
        .out
        .file_name()
        .and_then(|n| n.to_str())
        .context("--out needs a file name")?
        .to_string();
    let stem = args
        .out
        .file_stem()
        .and_then(|n| n.to_str())
        .unwrap_or("model")
        .to_string();
    let mut out = OutputDir::create(&parent)?;
    out.write(&name, checkpoint_bytes(&net))?;
    out.time("load", load_time);
    out.time("train", fit_time);

    let mut manifest = RunManifest::new("train", args.seed, args)?;
    manifest.results = serde_json::json!({
        "train_samples": train_set.len(),
        "test_samples": test_set.len(),
        "shape": {
            "height": shape.height,
            "width": shape.width,
            "in_channels": shape.in_channels,
            "conv1": shape.conv1,
            "conv2": shape.conv2,
            "classes": shape.classes,
        },
        "report": report,
    });
    println!(
        "train accuracy {:.4}, held-out accuracy {:.4}",
        report.train_accuracy, report.test_accuracy
    );
    out.finish_with_prefix(manifest, threads, &format!("{stem}."))
}
