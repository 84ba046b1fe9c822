//! `maskx explain` and the helpers it shares with `bench` and `curves`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Args;
use maskx::explain::{explain, ExplainerConfig, ExplanationResult, Method, PenaltyNorm, Representation};
use maskx::metrics::{metrics_report, EdgeParams, MetricsReport};
use maskx::model::{load_checkpoint, Classifier, TinyConvNet};
use maskx::{load_image, save_image, Image};
use serde::Serialize;

use crate::output::{OutputDir, RunManifest};
use crate::Outcome;

/// Optimizer settings shared by every command that computes explanations.
/// Unset values fall back to the method's defaults.
#[derive(Debug, Clone, Args, Serialize)]
pub struct HyperArgs {
    /// Weight of the mask sparsity penalty.
    #[arg(long)]
    pub lambda1: Option<f64>,
    /// Weight of the spatial penalty on the explanation.
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Monte Carlo perturbation samples per step.
    #[arg(long)]
    pub mc: Option<usize>,
    /// Target area of smooth pixel masks.
    #[arg(long)]
    pub area: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Penalty normalization: `mean` or `sum`.
    #[arg(long, value_parser = parse_penalty_norm)]
    pub penalty_norm: Option<PenaltyNorm>,
    /// Shearlet scales.
    #[arg(long)]
    pub scales: Option<usize>,
    /// Wavelet family (haar, db2, db3, db4).
    #[arg(long)]
    pub wavelet: Option<String>,
    /// Wavelet decomposition depth.
    #[arg(long)]
    pub levels: Option<usize>,
    /// Edge tolerance of the hallucination score in pixels; 0 compares edge
    /// sets exactly.
    #[arg(long, default_value_t = 1)]
    pub edge_tolerance: usize,
}

fn parse_penalty_norm(s: &str) -> Result<PenaltyNorm, String> {
    match s {
        "mean" => Ok(PenaltyNorm::Mean),
        "sum" => Ok(PenaltyNorm::Sum),
        _ => Err(format!("expected `mean` or `sum`, got {s:?}")),
    }
}

impl HyperArgs {
    pub fn config(&self, method: Method, steps: Option<usize>) -> Result<ExplainerConfig> {
        let mut cfg = ExplainerConfig::defaults(method);
        cfg.seed = self.seed;
        if let Some(v) = self.lambda1 {
            cfg.lambda1 = v;
        }
        if let Some(v) = self.lambda2 {
            cfg.lambda2 = v;
        }
        if let Some(v) = self.lr {
            cfg.lr = v;
        }
        if let Some(v) = self.mc {
            cfg.mc_samples = v;
        }
        if let Some(v) = self.area {
            cfg.area = v;
        }
        if let Some(v) = self.penalty_norm {
            cfg.penalty_norm = v;
        }
        if let Some(v) = &self.wavelet {
            cfg.wavelet_family = v.clone();
        }
        cfg.shearlet_scales = self.scales.or(cfg.shearlet_scales);
        cfg.wavelet_levels = self.levels.or(cfg.wavelet_levels);
        if let Some(v) = steps {
            cfg.steps = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExplainArgs {
    /// Checkpoint written by `maskx train`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    /// shearletx, waveletx, cartoonx, pixel or smooth.
    #[arg(long)]
    pub method: Method,
    /// Optimizer steps.
    #[arg(long)]
    pub steps: Option<usize>,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn load_model(path: &Path) -> Result<TinyConvNet> {
    load_checkpoint(path).with_context(|| format!("loading model {}", path.display()))
}

/// Loads an image at the model's input size, converting color to gray when
/// the model expects one channel.
pub fn load_input(model: &dyn Classifier, path: &Path) -> Result<Image> {
    let (h, w, c) = model.input_shape();
    let img = load_image(path, Some((h, w))).with_context(|| format!("loading image {}", path.display()))?;
    match (img.channels(), c) {
        (a, b) if a == b => Ok(img),
        (3, 1) => Ok(img.luminance()),
        (a, b) => bail!("image has {a} channels, model expects {b}"),
    }
}

/// Runs one explanation and computes its report.
pub fn explain_with_report(
    model: &dyn Classifier,
    x: &Image,
    cfg: &ExplainerConfig,
    tolerance: usize,
) -> Result<(ExplanationResult, MetricsReport)> {
    let result = explain(model, x, cfg)?;
    let report = metrics_report(x, &result, cfg, &EdgeParams::default(), tolerance)?;
    Ok((result, report))
}

pub fn loss_trace_csv(trace: &[f64]) -> String {
    let mut s = String::from("step,loss\n");
    for (i, v) in trace.iter().enumerate() {
        s.push_str(&format!("{i},{v}\n"));
    }
    s
}

pub fn mask_heatmap(cfg: &ExplainerConfig, result: &ExplanationResult) -> Result<Image> {
    let (h, w, _) = result.explanation.shape();
    Ok(Representation::for_config(cfg, h, w)?.mask_heatmap(&result.mask)?)
}

pub fn run(args: &ExplainArgs, threads: usize) -> Result<Outcome> {
    let cfg = args.hyper.config(args.method, args.steps)?;
    let net = load_model(&args.model)?;
    let x = load_input(&net, &args.image)?;
    let mut out = OutputDir::create(&args.out)?;

    let start = Instant::now();
    let (result, report) = explain_with_report(&net, &x, &cfg, args.hyper.edge_tolerance)?;
    out.time("explain", start.elapsed());

    save_image(&result.explanation, out.path("explanation.png"))?;
    save_image(&mask_heatmap(&cfg, &result)?, out.path("mask.png"))?;
    out.write("loss_trace.csv", loss_trace_csv(&result.loss_trace))?;
    out.write_json("report.json", &report)?;

    let mut manifest = RunManifest::new("explain", cfg.seed, args)?;
    manifest.results = serde_json::json!({
        "explainer": cfg,
        "target_class": result.target_class,
        "retained_probability": result.retained_probability,
    });
    out.finish(manifest, threads)?;
    Ok(Outcome::from_degenerate(report.degenerate))
}
