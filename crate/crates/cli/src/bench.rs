//! `maskx bench`: explains a batch of dataset images with several methods
//! and tabulates their metrics.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Result};
use clap::Args;
use maskx::explain::Method;
use maskx::metrics::MetricsReport;
use maskx::parallel;
use serde::Serialize;

use crate::dataset::{load_samples, read_labels};
use crate::explain::{explain_with_report, load_model, HyperArgs};
use crate::output::{csv_value, OutputDir, RunManifest};
use crate::Outcome;

#[derive(Debug, Clone, Args, Serialize)]
pub struct BenchArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset directory written by `maskx dataset`.
    #[arg(long)]
    pub data: PathBuf,
    /// Number of images, taken from the start of the dataset.
    #[arg(long)]
    pub n: usize,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',', default_value = "shearletx,pixel,smooth")]
    pub methods: Vec<Method>,
    /// Optimizer steps.
    #[arg(long)]
    pub steps: Option<usize>,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Default, Serialize)]
pub struct MethodSummary {
    pub images: usize,
    pub hallucination_score: Option<f64>,
    pub cp_entropy: Option<f64>,
    pub cp_l1: Option<f64>,
    pub cp_l1_pixel: Option<f64>,
    pub retained_probability: Option<f64>,
    /// Images where at least one metric was undefined.
    pub degenerate_images: usize,
}

/// Arithmetic mean over defined values.
fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn summarize(reports: &[&MetricsReport]) -> MethodSummary {
    MethodSummary {
        images: reports.len(),
        hallucination_score: mean(reports.iter().map(|r| r.hallucination_score)),
        cp_entropy: mean(reports.iter().map(|r| r.cp_entropy)),
        cp_l1: mean(reports.iter().map(|r| r.cp_l1)),
        cp_l1_pixel: mean(reports.iter().map(|r| r.cp_l1_pixel)),
        retained_probability: mean(reports.iter().map(|r| Some(r.retained_probability))),
        degenerate_images: reports.iter().filter(|r| !r.degenerate.is_empty()).count(),
    }
}

pub fn run(args: &BenchArgs, threads: usize) -> Result<Outcome> {
    if args.n == 0 {
        bail!("--n must be positive");
    }
    if args.methods.is_empty() {
        bail!("--methods is empty");
    }
    let net = load_model(&args.model)?;
    let files: Vec<String> = read_labels(&args.data)?.into_iter().map(|r| r.file).collect();
    let samples = load_samples(&args.data, Some(args.n))?;
    let configs = args
        .methods
        .iter()
        .map(|&m| args.hyper.config(m, args.steps))
        .collect::<Result<Vec<_>>>()?;
    let mut out = OutputDir::create(&args.out)?;

    let jobs: Vec<(usize, usize)> = (0..samples.len())
        .flat_map(|i| (0..configs.len()).map(move |m| (i, m)))
        .collect();
    let start = Instant::now();
    let results = parallel::map_slice(&jobs, |&(i, m)| {
        let mut cfg = configs[m].clone();
        cfg.seed ^= i as u64;
        let t = Instant::now();
        explain_with_report(&net, &samples[i].image, &cfg, args.hyper.edge_tolerance).map(|(_, r)| (r, t.elapsed()))
    });
    let mut reports = Vec::with_capacity(results.len());
    for (&(i, m), r) in jobs.iter().zip(results) {
        let (report, elapsed) = r?;
        out.time(&format!("{} {}", files[i], configs[m].method), elapsed);
        reports.push(report);
    }
    out.time("total", start.elapsed());

    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record([
        "image",
        "method",
        "target_class",
        "hallucination_score",
        "cp_entropy",
        "cp_l1",
        "cp_l1_pixel",
        "retained_probability",
    ])?;
    for (&(i, _), r) in jobs.iter().zip(&reports) {
        writer.write_record([
            files[i].clone(),
            r.method.clone(),
            r.target_class.to_string(),
            csv_value(r.hallucination_score),
            csv_value(r.cp_entropy),
            csv_value(r.cp_l1),
            csv_value(r.cp_l1_pixel),
            r.retained_probability.to_string(),
        ])?;
    }
    out.write("per_image.csv", writer.into_inner()?)?;

    let mut summary = BTreeMap::new();
    for cfg in &configs {
        let name = cfg.method.name();
        let mine: Vec<&MetricsReport> = reports.iter().filter(|r| r.method == name).collect();
        summary.insert(name.to_string(), summarize(&mine));
    }
    out.write_json("summary.json", &summary)?;

    let mut degenerate = Vec::new();
    for (&(i, _), r) in jobs.iter().zip(&reports) {
        degenerate.extend(r.degenerate.iter().map(|d| format!("{} {}: {d}", files[i], r.method)));
    }
    let mut manifest = RunManifest::new("bench", args.hyper.seed, args)?;
    manifest.results = serde_json::json!({
        "explainers": configs,
        "per_image_seed": "seed xor image index",
        "degenerate": degenerate,
    });
    out.finish(manifest, threads)?;
    Ok(Outcome::from_degenerate(degenerate))
}
