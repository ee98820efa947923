use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{Context, Result};
use boxforge_core::coco::{load_annotations, load_results_with, save_results};
use boxforge_core::tta::merge;
use boxforge_core::{Detection, FusionConfig, ImageMeta, TtaBundle, TtaTransform};
use clap::Args;
use rayon::prelude::*;

use crate::manifest::{sibling_path, ManifestBuilder};
use crate::UsageError;

#[derive(Debug, Args)]
pub struct TtaArgs {
    /// JSON list of {"width", "height", "flipped"}, one per input file.
    #[arg(long)]
    manifest: PathBuf,
    /// Results files, in manifest order, in the pixel frame of each transform.
    #[arg(long, num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    /// COCO instances file providing original image sizes.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = FusionConfig::DEFAULT_WBF_IOU)]
    iou_thr: f64,
    #[arg(long, default_value_t = 0.0)]
    score_thr: f64,
    #[arg(long)]
    run_manifest: Option<PathBuf>,
}

pub fn run(args: TtaArgs) -> Result<()> {
    let manifest = ManifestBuilder::start("tta-merge");
    let text = std::fs::read_to_string(&args.manifest)
        .with_context(|| format!("reading transform manifest {}", args.manifest.display()))?;
    let transforms: Vec<TtaTransform> = serde_json::from_str(&text)
        .with_context(|| format!("parsing transform manifest {}", args.manifest.display()))?;
    if transforms.len() != args.inputs.len() {
        return Err(UsageError(format!(
            "transform manifest has {} entries but {} input files were given",
            transforms.len(),
            args.inputs.len()
        ))
        .into());
    }
    if transforms.is_empty() {
        return Err(UsageError("transform manifest is empty".into()).into());
    }
    for t in &transforms {
        t.validate()?;
    }
    let cfg = FusionConfig::wbf(transforms.len())
        .with_iou_threshold(args.iou_thr)
        .with_score_threshold(args.score_thr);
    cfg.validate()?;

    let index = load_annotations(&args.gt)?;
    let mut per_image: BTreeMap<u64, Vec<Vec<Detection>>> = BTreeMap::new();
    for (k, (path, t)) in args.inputs.iter().zip(&transforms).enumerate() {
        let dets = load_results_with(path, k as u32, |id| {
            index.images.get(&id).map(|m| ImageMeta {
                width: t.scale_w,
                height: t.scale_h,
                ..m.clone()
            })
        })?;
        for d in dets {
            per_image
                .entry(d.image_id)
                .or_insert_with(|| vec![Vec::new(); transforms.len()])[k]
                .push(d);
        }
    }

    let bundles: Vec<TtaBundle> = per_image
        .into_iter()
        .map(|(image_id, lists)| TtaBundle {
            image_id,
            entries: transforms.iter().copied().zip(lists).collect(),
        })
        .collect();
    let merged: Vec<Vec<Detection>> = bundles
        .par_iter()
        .map(|b| Ok(merge(b, &cfg)?.iter().map(|f| f.to_detection(0)).collect()))
        .collect::<boxforge_core::Result<_>>()?;
    let merged: Vec<Detection> = merged.into_iter().flatten().collect();
    save_results(&merged, &index, &args.out)?;

    let mut inputs = vec![args.manifest.clone(), args.gt.clone()];
    inputs.extend(args.inputs.iter().cloned());
    #[derive(serde::Serialize)]
    struct Snapshot<'a> {
        transforms: &'a [TtaTransform],
        fusion: &'a FusionConfig,
    }
    manifest
        .finish(
            Snapshot { transforms: &transforms, fusion: &cfg },
            None,
            inputs,
            vec![args.out.clone()],
        )?
        .emit(Some(&args.run_manifest.unwrap_or_else(|| sibling_path(&args.out))))
}
