use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use boxforge_core::augment::{
    bbox_jitter, crop_and_flip, grid_mask, mix_up, oversample_rare_classes, GridMaskConfig,
    JitterConfig, MixupConfig, OversampleConfig,
};
use boxforge_core::coco::{load_annotations, load_image, save_annotations, save_image};
use boxforge_core::rng::{derive_seed, substream};
use boxforge_core::{DatasetIndex, GroundTruth, ImageBuffer};
use clap::{Args, ValueEnum};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::manifest::ManifestBuilder;
use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Op {
    BboxJitter,
    GridMask,
    MixUp,
    Oversample,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long, value_enum)]
    op: Op,
    /// COCO instances file.
    #[arg(long)]
    ann: PathBuf,
    /// Directory the `file_name` entries are relative to.
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// bbox-jitter: scale range as lo:hi.
    #[arg(long, default_value = "0.95:1.05", value_parser = parse_amp)]
    amp: (f64, f64),
    /// grid-mask: smallest grid period in pixels.
    #[arg(long, default_value_t = 32)]
    d_min: u32,
    #[arg(long, default_value_t = 96)]
    d_max: u32,
    #[arg(long, default_value_t = 0.5)]
    keep_ratio: f64,
    /// grid-mask / mix-up: probability of applying the op to an image
    /// (defaults 0.7 and 0.5).
    #[arg(long)]
    apply_prob: Option<f64>,
    /// mix-up: Beta(alpha, alpha) shape.
    #[arg(long, default_value_t = 1.5)]
    alpha: f64,
    /// oversample: categories with fewer instances are rare.
    #[arg(long)]
    min_count: Option<usize>,
    #[arg(long, default_value_t = 6)]
    copies: usize,
    #[arg(long)]
    run_manifest: Option<PathBuf>,
}

fn parse_amp(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("expected lo:hi, got {s:?}"))?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    Ok((num(lo)?, num(hi)?))
}

/// Files and directories created by this run, removed again on failure.
#[derive(Default)]
struct Outputs {
    created: Mutex<Vec<PathBuf>>,
}

impl Outputs {
    fn create_dir(&self, dir: &Path) -> Result<()> {
        let mut missing = Vec::new();
        let mut cur = Some(dir);
        while let Some(d) = cur {
            if d.as_os_str().is_empty() || d.exists() {
                break;
            }
            missing.push(d.to_path_buf());
            cur = d.parent();
        }
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        self.created.lock().unwrap().extend(missing.into_iter().rev());
        Ok(())
    }

    fn track(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            self.create_dir(parent)?;
        }
        self.created.lock().unwrap().push(path.to_path_buf());
        Ok(())
    }

    fn save_image(&self, img: &ImageBuffer, path: &Path) -> Result<()> {
        self.track(path)?;
        save_image(img, path)?;
        Ok(())
    }

    fn copy(&self, from: &Path, to: &Path) -> Result<()> {
        self.track(to)?;
        fs::copy(from, to).with_context(|| format!("copying {} to {}", from.display(), to.display()))?;
        Ok(())
    }

    fn rollback(self) {
        let created = self.created.into_inner().unwrap();
        for p in created.iter().rev() {
            let _ = if p.is_dir() { fs::remove_dir(p) } else { fs::remove_file(p) };
        }
    }
}

struct Job<'a> {
    args: &'a AugmentArgs,
    index: &'a DatasetIndex,
    out: &'a Outputs,
    out_images: PathBuf,
}

impl Job<'_> {
    fn source(&self, file_name: &str) -> PathBuf {
        self.args.images.join(file_name)
    }

    fn target(&self, file_name: &str) -> PathBuf {
        self.out_images.join(file_name)
    }

    fn jitter(&self) -> Result<DatasetIndex> {
        let cfg = JitterConfig {
            amp_lo: self.args.amp.0,
            amp_hi: self.args.amp.1,
            seed: self.args.seed,
        };
        cfg.validate()?;
        let groups = group_by_image(self.index);
        let jittered: Vec<(Vec<usize>, Vec<GroundTruth>)> = groups
            .into_par_iter()
            .map(|(image_id, members)| {
                let gts: Vec<GroundTruth> = members.iter().map(|&i| self.index.annotations[i]).collect();
                let out = bbox_jitter(&gts, &self.index.images[&image_id], &cfg)?;
                Ok((members, out))
            })
            .collect::<boxforge_core::Result<_>>()?;
        let mut result = self.index.clone();
        for (members, gts) in jittered {
            for (i, gt) in members.into_iter().zip(gts) {
                result.annotations[i] = gt;
            }
        }
        Ok(result)
    }

    fn grid_mask(&self) -> Result<DatasetIndex> {
        let base = GridMaskConfig {
            d_min: self.args.d_min,
            d_max: self.args.d_max,
            keep_ratio: self.args.keep_ratio,
            apply_prob: self.args.apply_prob.unwrap_or(0.7),
            seed: self.args.seed,
        };
        base.validate()?;
        self.index.images.values().collect::<Vec<_>>().par_iter().try_for_each(|meta| {
            let img = load_image(self.source(&meta.file_name))?;
            let cfg = GridMaskConfig {
                seed: derive_seed(self.args.seed, "grid-mask", meta.image_id),
                ..base
            };
            self.out.save_image(&grid_mask(&img, &cfg)?, &self.target(&meta.file_name))
        })?;
        Ok(self.index.clone())
    }

    fn mix_up(&self) -> Result<DatasetIndex> {
        let base = MixupConfig {
            alpha: self.args.alpha,
            apply_prob: self.args.apply_prob.unwrap_or(0.5),
            seed: self.args.seed,
        };
        base.validate()?;
        let ids: Vec<u64> = self.index.images.keys().copied().collect();
        let groups = group_by_image(self.index);
        let empty = Vec::new();
        let members = |id: u64| groups.get(&id).unwrap_or(&empty);

        let results: Vec<(u64, Vec<(GroundTruth, f64)>)> = ids
            .par_iter()
            .map(|&id| {
                let meta = &self.index.images[&id];
                let a = load_image(self.source(&meta.file_name))?;
                let a_gts: Vec<GroundTruth> = members(id).iter().map(|&i| self.index.annotations[i]).collect();
                let partner = if ids.len() > 1 {
                    let k = substream(self.args.seed, "mix-up-partner", id).random_range(0..ids.len() - 1);
                    Some(ids.iter().copied().filter(|&o| o != id).nth(k).expect("in range"))
                } else {
                    None
                };
                let Some(pid) = partner else {
                    self.out.save_image(&a, &self.target(&meta.file_name))?;
                    let kept = members(id).iter().map(|&i| (self.index.annotations[i], self.index.weights[i])).collect();
                    return Ok((id, kept));
                };
                let pmeta = &self.index.images[&pid];
                let b = fit_to(load_image(self.source(&pmeta.file_name))?, a.width(), a.height())?;
                let b_gts: Vec<GroundTruth> = members(pid).iter().map(|&i| self.index.annotations[i]).collect();
                let cfg = MixupConfig {
                    seed: derive_seed(self.args.seed, "mix-up", id),
                    ..base
                };
                let (img, anns, lambda) = mix_up(&a, &a_gts, &b, &b_gts, &cfg)?;
                self.out.save_image(&img, &self.target(&meta.file_name))?;
                // carry any existing soft labels through the blend
                let prior: Vec<f64> = members(id)
                    .iter()
                    .map(|&i| self.index.weights[i])
                    .chain(members(pid).iter().map(|&i| self.index.weights[i]))
                    .collect();
                let offset = if lambda > 0.0 { 0 } else { a_gts.len() };
                let weighted = anns
                    .into_iter()
                    .enumerate()
                    .map(|(k, w)| (GroundTruth { image_id: id, ..w.gt }, w.weight * prior[k + offset]))
                    .collect();
                Ok((id, weighted))
            })
            .collect::<Result<_>>()?;

        let mut result = self.index.clone();
        result.annotations.clear();
        result.weights.clear();
        for (_, anns) in results {
            for (gt, w) in anns {
                result.push_annotation(gt, w);
            }
        }
        result.recount();
        Ok(result)
    }

    fn oversample(&self) -> Result<DatasetIndex> {
        let Some(min_count) = self.args.min_count else {
            return Err(UsageError("--min-count is required for --op oversample".into()).into());
        };
        let cfg = OversampleConfig {
            min_count,
            copies: self.args.copies,
            seed: self.args.seed,
        };
        let output = oversample_rare_classes(self.index, &cfg)?;
        self.index.images.values().collect::<Vec<_>>().par_iter().try_for_each(|meta| {
            self.out.copy(&self.source(&meta.file_name), &self.target(&meta.file_name))
        })?;
        output.plans.par_iter().try_for_each(|plan| {
            let src_meta = &self.index.images[&plan.source_image_id];
            let src = load_image(self.source(&src_meta.file_name))?;
            if (src.width(), src.height()) != (src_meta.width, src_meta.height) {
                bail!(
                    "{} is {}x{} but the annotations say {}x{}",
                    src_meta.file_name,
                    src.width(),
                    src.height(),
                    src_meta.width,
                    src_meta.height
                );
            }
            self.out.save_image(&crop_and_flip(&src, plan)?, &self.target(&plan.image.file_name))
        })?;
        log::info!("{} synthetic images for rare categories", output.plans.len());
        Ok(output.dataset)
    }
}

fn group_by_image(index: &DatasetIndex) -> BTreeMap<u64, Vec<usize>> {
    let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, a) in index.annotations.iter().enumerate() {
        groups.entry(a.image_id).or_default().push(i);
    }
    groups
}

/// Resizes `img` to `w` x `h` when needed. Boxes are normalized, so they are unaffected.
fn fit_to(img: ImageBuffer, w: u32, h: u32) -> Result<ImageBuffer> {
    if (img.width(), img.height()) == (w, h) {
        return Ok(img);
    }
    let rgb = image::RgbImage::from_raw(img.width(), img.height(), img.into_pixels())
        .context("image buffer size")?;
    let resized = image::imageops::resize(&rgb, w, h, image::imageops::FilterType::Triangle);
    Ok(ImageBuffer::new(w, h, resized.into_raw())?)
}

pub fn run(args: AugmentArgs) -> Result<()> {
    let manifest = ManifestBuilder::start("augment");
    let index = load_annotations(&args.ann)?;
    let out = Outputs::default();
    let result = (|| -> Result<PathBuf> {
        out.create_dir(&args.out_dir)?;
        let job = Job {
            args: &args,
            index: &index,
            out: &out,
            out_images: args.out_dir.join("images"),
        };
        let dataset = match args.op {
            Op::BboxJitter => job.jitter()?,
            Op::GridMask => job.grid_mask()?,
            Op::MixUp => job.mix_up()?,
            Op::Oversample => job.oversample()?,
        };
        let ann_path = args.out_dir.join("annotations.json");
        out.track(&ann_path)?;
        save_annotations(&dataset, &ann_path)?;
        Ok(ann_path)
    })();
    let ann_path = match result {
        Ok(p) => p,
        Err(e) => {
            out.rollback();
            return Err(e);
        }
    };

    #[derive(Serialize)]
    struct Snapshot {
        op: Op,
        amp: (f64, f64),
        d_min: u32,
        d_max: u32,
        keep_ratio: f64,
        apply_prob: Option<f64>,
        alpha: f64,
        min_count: Option<usize>,
        copies: usize,
    }
    let snapshot = Snapshot {
        op: args.op,
        amp: args.amp,
        d_min: args.d_min,
        d_max: args.d_max,
        keep_ratio: args.keep_ratio,
        apply_prob: args.apply_prob,
        alpha: args.alpha,
        min_count: args.min_count,
        copies: args.copies,
    };
    let mut outputs = vec![ann_path];
    if args.op != Op::BboxJitter {
        outputs.push(args.out_dir.join("images"));
    }
    manifest
        .finish(snapshot, Some(args.seed), vec![args.ann.clone(), args.images.clone()], outputs)?
        .emit(Some(&args.run_manifest.unwrap_or_else(|| args.out_dir.join("run_manifest.json"))))
}
