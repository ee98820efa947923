use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use boxforge_core::coco::{load_annotations, load_results};
use boxforge_core::eval::{evaluate, render_table};
use boxforge_core::{DatasetIndex, EvalConfig, EvalReport, EvalSummary};
use clap::{Args, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use crate::manifest::ManifestBuilder;
use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    dt: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    #[arg(long, default_value_t = 100)]
    max_dets: usize,
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    run_manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Needed whenever a `--dt` file holds raw results.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// `label=path`, repeatable. The file is either a COCO results array or a
    /// report previously written by `evaluate --format json`.
    #[arg(long = "dt", required = true, value_parser = parse_labeled)]
    dts: Vec<(String, PathBuf)>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    #[arg(long, default_value_t = 100)]
    max_dets: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    run_manifest: Option<PathBuf>,
}

fn parse_labeled(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((label, path)) if !label.is_empty() && !path.is_empty() => {
            Ok((label.to_string(), PathBuf::from(path)))
        }
        _ => Err(format!("expected label=path, got {s:?}")),
    }
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn label_of(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("detections")
        .to_string()
}

pub fn run_evaluate(args: EvalArgs) -> Result<()> {
    let manifest = ManifestBuilder::start("evaluate");
    let cfg = EvalConfig {
        max_dets: args.max_dets,
        ..Default::default()
    };
    cfg.validate()?;
    let index = load_annotations(&args.gt)?;
    let dets = load_results(&args.dt, &index, 0)?;
    let report = evaluate(&dets, &index, &cfg)?;
    let text = match args.format {
        Format::Table => render_table(&[(label_of(&args.dt), report.summary)]),
        Format::Json => serde_json::to_string_pretty(&report)? + "\n",
    };
    write_output(args.out.as_deref(), &text)?;
    manifest
        .finish(&cfg, None, vec![args.gt, args.dt], args.out.into_iter().collect())?
        .emit(args.run_manifest.as_deref())
}

enum Source {
    Results,
    Report(EvalSummary),
}

fn classify(path: &Path) -> Result<Source> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    match value {
        Value::Array(_) => Ok(Source::Results),
        Value::Object(ref m) if m.contains_key("ap_50_95") => Ok(Source::Report(
            serde_json::from_value(value).with_context(|| format!("reading report {}", path.display()))?,
        )),
        _ => anyhow::bail!(
            "{}: expected a COCO results array or an evaluation report",
            path.display()
        ),
    }
}

#[derive(Serialize)]
struct Row<'a> {
    label: &'a str,
    #[serde(flatten)]
    summary: EvalSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<EvalReport>,
}

pub fn run_compare(args: CompareArgs) -> Result<()> {
    let manifest = ManifestBuilder::start("compare");
    let cfg = EvalConfig {
        max_dets: args.max_dets,
        ..Default::default()
    };
    cfg.validate()?;
    let mut index: Option<DatasetIndex> = None;
    let mut rows = Vec::with_capacity(args.dts.len());
    for (label, path) in &args.dts {
        let row = match classify(path)? {
            Source::Report(summary) => Row { label, summary, report: None },
            Source::Results => {
                if index.is_none() {
                    let gt = args.gt.as_ref().ok_or_else(|| {
                        UsageError(format!("--gt is required to evaluate {}", path.display()))
                    })?;
                    index = Some(load_annotations(gt)?);
                }
                let index = index.as_ref().expect("loaded above");
                let report = evaluate(&load_results(path, index, 0)?, index, &cfg)?;
                Row { label, summary: report.summary, report: Some(report) }
            }
        };
        rows.push(row);
    }
    let text = match args.format {
        Format::Table => {
            let table: Vec<(&str, EvalSummary)> = rows.iter().map(|r| (r.label, r.summary)).collect();
            render_table(&table)
        }
        Format::Json => serde_json::to_string_pretty(&rows)? + "\n",
    };
    write_output(args.out.as_deref(), &text)?;

    let mut inputs: Vec<PathBuf> = args.gt.iter().cloned().collect();
    inputs.extend(args.dts.iter().map(|(_, p)| p.clone()));
    manifest
        .finish(&cfg, None, inputs, args.out.iter().cloned().collect())?
        .emit(args.run_manifest.as_deref())
}
