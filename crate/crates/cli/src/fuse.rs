use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::Result;
use boxforge_core::coco::{load_annotations, load_results, save_results};
use boxforge_core::fusion::{nms, wbf};
use boxforge_core::{Detection, FusionConfig};
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::manifest::{sibling_path, ManifestBuilder};
use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Nms,
    Wbf,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[arg(long, value_enum, default_value_t = Method::Wbf)]
    method: Method,
    /// IoU threshold (default 0.55 for wbf, 0.5 for nms).
    #[arg(long)]
    iou_thr: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    score_thr: f64,
    /// Comma-separated per-input weights (wbf only).
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    /// COCO results files, one per model.
    #[arg(long, num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    /// COCO instances file providing image sizes.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Where to write the run manifest (default: <out stem>.manifest.json).
    #[arg(long)]
    run_manifest: Option<PathBuf>,
}

/// Groups detections by image and fuses each group on the worker pool.
pub fn fuse_per_image(
    dets: Vec<Detection>,
    f: impl Fn(&[Detection]) -> boxforge_core::Result<Vec<Detection>> + Sync,
) -> Result<Vec<Detection>> {
    let mut by_image: BTreeMap<u64, Vec<Detection>> = BTreeMap::new();
    for d in dets {
        by_image.entry(d.image_id).or_default().push(d);
    }
    let groups: Vec<Vec<Detection>> = by_image.into_values().collect();
    let fused: Vec<Vec<Detection>> = groups
        .par_iter()
        .map(|g| f(g))
        .collect::<boxforge_core::Result<_>>()?;
    Ok(fused.into_iter().flatten().collect())
}

pub fn run(args: FuseArgs) -> Result<()> {
    let manifest = ManifestBuilder::start("fuse");
    if let Some(w) = &args.weights {
        if w.len() != args.inputs.len() {
            return Err(UsageError(format!(
                "{} weights given for {} input files",
                w.len(),
                args.inputs.len()
            ))
            .into());
        }
    }
    let default_iou = match args.method {
        Method::Nms => FusionConfig::DEFAULT_NMS_IOU,
        Method::Wbf => FusionConfig::DEFAULT_WBF_IOU,
    };
    let cfg = FusionConfig {
        iou_threshold: args.iou_thr.unwrap_or(default_iou),
        score_threshold: args.score_thr,
        num_models: args.inputs.len(),
        model_weights: args.weights.clone(),
    };
    cfg.validate()?;

    let index = load_annotations(&args.gt)?;
    let mut dets = Vec::new();
    for (model_id, path) in args.inputs.iter().enumerate() {
        dets.extend(load_results(path, &index, model_id as u32)?);
    }
    log::info!("fusing {} detections from {} files", dets.len(), args.inputs.len());

    let fused = match args.method {
        Method::Nms => fuse_per_image(dets, |g| nms(g, &cfg))?,
        Method::Wbf => fuse_per_image(dets, |g| {
            Ok(wbf(g, &cfg)?.iter().map(|f| f.to_detection(0)).collect())
        })?,
    };
    save_results(&fused, &index, &args.out)?;

    #[derive(Serialize)]
    struct Snapshot<'a> {
        method: Method,
        fusion: &'a FusionConfig,
    }
    let mut inputs = args.inputs.clone();
    inputs.push(args.gt.clone());
    manifest
        .finish(
            Snapshot { method: args.method, fusion: &cfg },
            None,
            inputs,
            vec![args.out.clone()],
        )?
        .emit(Some(&args.run_manifest.unwrap_or_else(|| sibling_path(&args.out))))
}
