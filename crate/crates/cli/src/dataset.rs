//! `maskx dataset`: writes a synthetic dataset to disk, and reads it back.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Args;
use maskx::model::{generate_dataset, SyntheticSample, PATTERN_NAMES};
use maskx::{load_image, save_image, Rng};
use serde::{Deserialize, Serialize};

use crate::output::{OutputDir, RunManifest};

pub const LABELS_FILE: &str = "labels.csv";

#[derive(Debug, Clone, Args, Serialize)]
pub struct DatasetArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of images.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelRow {
    pub file: String,
    pub label: usize,
    pub class: String,
    pub patch_x: usize,
    pub patch_y: usize,
    pub patch_width: usize,
    pub patch_height: usize,
}

pub fn run(args: &DatasetArgs, threads: usize) -> Result<()> {
    if args.n == 0 {
        bail!("--n must be positive");
    }
    let mut out = OutputDir::create(&args.out)?;
    let start = Instant::now();
    let samples = generate_dataset(&Rng::new(args.seed), args.n);
    out.time("generate", start.elapsed());

    let width = (args.n - 1).to_string().len().max(5);
    let mut rows = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let file = format!("image_{i:0width$}.png");
        save_image(&s.image, out.path(&file))?;
        rows.push(LabelRow {
            file,
            label: s.label,
            class: PATTERN_NAMES[s.label].to_string(),
            patch_x: s.patch_box.x,
            patch_y: s.patch_box.y,
            patch_width: s.patch_box.width,
            patch_height: s.patch_box.height,
        });
    }
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in &rows {
        writer.serialize(row)?;
    }
    out.write(LABELS_FILE, writer.into_inner()?)?;
    out.time("total", start.elapsed());

    let mut manifest = RunManifest::new("dataset", args.seed, args)?;
    manifest.results = serde_json::json!({ "images": args.n });
    out.finish(manifest, threads)
}

pub fn read_labels(dir: &Path) -> Result<Vec<LabelRow>> {
    let path = dir.join(LABELS_FILE);
    let mut reader = csv::Reader::from_path(&path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, row) in reader.deserialize().enumerate() {
        let row: LabelRow = row.with_context(|| format!("{} row {}", path.display(), i + 1))?;
        if row.label >= PATTERN_NAMES.len() {
            bail!("{} row {}: label {} out of range", path.display(), i + 1, row.label);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Loads the first `limit` images of a dataset directory (all when `None`).
pub fn load_samples(dir: &Path, limit: Option<usize>) -> Result<Vec<SyntheticSample>> {
    let rows = read_labels(dir)?;
    let take = limit.unwrap_or(rows.len());
    if rows.len() < take {
        bail!("{} holds {} images, {} requested", dir.display(), rows.len(), take);
    }
    rows[..take]
        .iter()
        .map(|row| {
            let image = load_image(dir.join(&row.file), None).with_context(|| format!("loading {}", row.file))?;
            Ok(SyntheticSample {
                image,
                label: row.label,
                patch_box: maskx::model::PatchBox {
                    x: row.patch_x,
                    y: row.patch_y,
                    width: row.patch_width,
                    height: row.patch_height,
                },
            })
        })
        .collect()
}
