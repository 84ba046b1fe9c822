//! `maskx curves`: insertion and deletion curves for one explanation.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::Result;
use clap::Args;
use maskx::explain::{explain, Method, Representation};
use maskx::metrics::{deletion_curve, insertion_curve, CurveMode};
use serde::Serialize;

use crate::explain::{load_input, load_model, HyperArgs};
use crate::output::{OutputDir, RunManifest};
use crate::Outcome;

#[derive(Debug, Clone, Args, Serialize)]
pub struct CurvesArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub method: Method,
    /// `representation` orders mask coefficients, `pixel` orders pixels of
    /// the explanation.
    #[arg(long, default_value = "representation")]
    pub mode: CurveMode,
    /// Grid intervals; each curve has this many points plus one.
    #[arg(long, default_value_t = 20)]
    pub steps: usize,
    /// Optimizer steps of the explanation.
    #[arg(long)]
    pub explain_steps: Option<usize>,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &CurvesArgs, threads: usize) -> Result<Outcome> {
    let cfg = args.hyper.config(args.method, args.explain_steps)?;
    let net = load_model(&args.model)?;
    let x = load_input(&net, &args.image)?;
    let mut out = OutputDir::create(&args.out)?;

    let start = Instant::now();
    let result = explain(&net, &x, &cfg)?;
    out.time("explain", start.elapsed());
    let repr = Representation::for_config(&cfg, x.height(), x.width())?;
    let start = Instant::now();
    let insertion = insertion_curve(&net, repr.as_rep(), &x, &result.mask, args.steps, args.mode)?;
    let deletion = deletion_curve(&net, repr.as_rep(), &x, &result.mask, args.steps, args.mode)?;
    out.time("curves", start.elapsed());

    out.write("insertion.csv", insertion.to_csv())?;
    out.write("deletion.csv", deletion.to_csv())?;
    let mut manifest = RunManifest::new("curves", cfg.seed, args)?;
    manifest.results = serde_json::json!({
        "explainer": cfg,
        "target_class": result.target_class,
    });
    out.finish(manifest, threads)?;
    Ok(Outcome::Clean)
}
