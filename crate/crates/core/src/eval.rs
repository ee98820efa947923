//! COCO-style average precision.
//!
//! Matching is greedy per `(image, category)`: detections are visited by
//! descending score and take the unmatched, non-ignored ground truth with
//! the highest IoU at or above the threshold. Detections that only overlap
//! ignored (crowd) regions are dropped from scoring. AP is the mean of the
//! interpolated precision sampled at evenly spaced recall levels.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::coco::DatasetIndex;
use crate::error::{Error, Result};
use crate::geometry::{iou, Detection, GroundTruth};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub iou_thresholds: Vec<f64>,
    /// Detections kept per image and category, best first.
    pub max_dets: usize,
    pub recall_points: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_thresholds: (0..10).map(|i| f64::from(50 + 5 * i) / 100.0).collect(),
            max_dets: 100,
            recall_points: 101,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        let t = &self.iou_thresholds;
        if t.is_empty() || t.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
            return Err(Error::Config(format!(
                "IoU thresholds must be non-empty and inside (0, 1), got {t:?}"
            )));
        }
        if t.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "IoU thresholds must be strictly increasing, got {t:?}"
            )));
        }
        if self.max_dets < 1 || self.recall_points < 1 {
            return Err(Error::Config("max_dets and recall_points must be at least 1".into()));
        }
        Ok(())
    }

    fn threshold_index(&self, t: f64) -> Option<usize> {
        self.iou_thresholds.iter().position(|v| (v - t).abs() < 1e-9)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchLabel {
    Tp,
    Fp,
    /// Matched an ignore region; excluded from precision and recall.
    Ignored,
}

/// Labels each detection of one image and category. The result is aligned
/// with `dets`, not with score order.
pub fn match_detections(dets: &[Detection], gts: &[GroundTruth], threshold: f64) -> Vec<MatchLabel> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    let mut taken = vec![false; gts.len()];
    let mut labels = vec![MatchLabel::Fp; dets.len()];
    for i in order {
        let d = &dets[i].bbox;
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if gt.ignore || taken[g] {
                continue;
            }
            let v = iou(d, &gt.bbox);
            if v >= threshold && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        labels[i] = match best {
            Some((g, _)) => {
                taken[g] = true;
                MatchLabel::Tp
            }
            None if gts.iter().any(|gt| gt.ignore && iou(d, &gt.bbox) >= threshold) => {
                MatchLabel::Ignored
            }
            None => MatchLabel::Fp,
        };
    }
    labels
}

/// Evenly spaced recall levels in `[0, 1]`.
pub fn recall_levels(points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![0.0];
    }
    (0..points).map(|i| i as f64 / (points - 1) as f64).collect()
}

/// Interpolated AP of a ranked label list. `None` when there is no ground
/// truth, which excludes the category from averages.
pub fn average_precision(labels: &[MatchLabel], num_gt: usize, recall_points: usize) -> Option<f64> {
    if num_gt == 0 {
        return None;
    }
    let mut recall = Vec::with_capacity(labels.len());
    let mut precision = Vec::with_capacity(labels.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for l in labels {
        match l {
            MatchLabel::Tp => tp += 1,
            MatchLabel::Fp => fp += 1,
            MatchLabel::Ignored => continue,
        }
        recall.push(tp as f64 / num_gt as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for i in (1..precision.len()).rev() {
        if precision[i] > precision[i - 1] {
            precision[i - 1] = precision[i];
        }
    }
    let levels = recall_levels(recall_points);
    let sum: f64 = levels
        .iter()
        .map(|&r| {
            let k = recall.partition_point(|&rc| rc < r);
            precision.get(k).copied().unwrap_or(0.0)
        })
        .sum();
    Some(sum / levels.len() as f64)
}

/// The three headline numbers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    /// Mean over all configured thresholds (0.50:0.95 by default).
    pub ap_50_95: Option<f64>,
    pub ap_50: Option<f64>,
    pub ap_75: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryAp {
    pub category_id: u64,
    /// Non-ignored ground-truth instances.
    pub num_gt: usize,
    /// One entry per IoU threshold.
    pub ap: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub summary: EvalSummary,
    pub iou_thresholds: Vec<f64>,
    pub per_category: Vec<CategoryAp>,
    /// TP/FP/FN totals at each threshold.
    pub counts: Vec<MatchCounts>,
}

impl EvalReport {
    pub fn ap_at(&self, category_id: u64, threshold: f64) -> Option<f64> {
        let t = self.iou_thresholds.iter().position(|v| (v - threshold).abs() < 1e-9)?;
        self.per_category
            .iter()
            .find(|c| c.category_id == category_id)
            .and_then(|c| c.ap[t])
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// A scored label, ordered globally by score then by (image, rank).
struct Ranked {
    score: f64,
    image_id: u64,
    rank: usize,
    labels: Vec<MatchLabel>,
}

pub fn evaluate(dets: &[Detection], index: &DatasetIndex, cfg: &EvalConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let unknown: Vec<u64> = dets
        .iter()
        .map(|d| d.image_id)
        .filter(|id| !index.images.contains_key(id))
        .collect();
    if !unknown.is_empty() {
        return Err(Error::referential(unknown, Vec::new()));
    }

    let mut gt_groups: HashMap<(u64, u64), Vec<GroundTruth>> = HashMap::new();
    for gt in &index.annotations {
        gt_groups.entry((gt.image_id, gt.category_id)).or_default().push(*gt);
    }
    let mut dt_groups: HashMap<(u64, u64), Vec<Detection>> = HashMap::new();
    for d in dets {
        dt_groups.entry((d.image_id, d.category_id)).or_default().push(*d);
    }
    let categories: BTreeSet<u64> = gt_groups
        .keys()
        .chain(dt_groups.keys())
        .map(|&(_, c)| c)
        .collect();
    let keys: BTreeSet<(u64, u64)> = gt_groups.keys().chain(dt_groups.keys()).copied().collect();

    let nt = cfg.iou_thresholds.len();
    let mut ranked: BTreeMap<u64, Vec<Ranked>> = BTreeMap::new();
    let mut num_gt: BTreeMap<u64, usize> = categories.iter().map(|&c| (c, 0)).collect();
    for &(image_id, category_id) in &keys {
        let gts = gt_groups.get(&(image_id, category_id)).map_or(&[][..], Vec::as_slice);
        *num_gt.get_mut(&category_id).expect("category collected") +=
            gts.iter().filter(|g| !g.ignore).count();
        let mut ds = dt_groups.remove(&(image_id, category_id)).unwrap_or_default();
        ds.sort_by(|a, b| b.score.total_cmp(&a.score));
        ds.truncate(cfg.max_dets);
        let per_threshold: Vec<Vec<MatchLabel>> = cfg
            .iou_thresholds
            .iter()
            .map(|&t| match_detections(&ds, gts, t))
            .collect();
        let bucket = ranked.entry(category_id).or_default();
        for (rank, d) in ds.iter().enumerate() {
            bucket.push(Ranked {
                score: d.score,
                image_id,
                rank,
                labels: per_threshold.iter().map(|l| l[rank]).collect(),
            });
        }
    }

    let mut counts = vec![MatchCounts { tp: 0, fp: 0, fn_: 0 }; nt];
    let mut per_category = Vec::with_capacity(categories.len());
    for &category_id in &categories {
        let mut items = ranked.remove(&category_id).unwrap_or_default();
        items.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(a.image_id.cmp(&b.image_id))
                .then(a.rank.cmp(&b.rank))
        });
        let n = num_gt[&category_id];
        let mut ap = Vec::with_capacity(nt);
        for (t, c) in counts.iter_mut().enumerate() {
            let labels: Vec<MatchLabel> = items.iter().map(|r| r.labels[t]).collect();
            let tp = labels.iter().filter(|l| **l == MatchLabel::Tp).count();
            c.tp += tp;
            c.fp += labels.iter().filter(|l| **l == MatchLabel::Fp).count();
            c.fn_ += n - tp;
            ap.push(average_precision(&labels, n, cfg.recall_points));
        }
        per_category.push(CategoryAp {
            category_id,
            num_gt: n,
            ap,
        });
    }

    let at = |t: Option<usize>| t.and_then(|t| mean(per_category.iter().filter_map(|c| c.ap[t])));
    let summary = EvalSummary {
        ap_50_95: mean(
            per_category
                .iter()
                .filter(|c| c.num_gt > 0)
                .flat_map(|c| c.ap.iter().flatten().copied()),
        ),
        ap_50: at(cfg.threshold_index(0.5)),
        ap_75: at(cfg.threshold_index(0.75)),
    };
    Ok(EvalReport {
        summary,
        iou_thresholds: cfg.iou_thresholds.clone(),
        per_category,
        counts,
    })
}

fn percent(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{:.1}", v * 100.0))
}

/// Renders rows as `Methods  AP@0.50:0.95  AP@0.50  AP@0.75`, values in
/// percent with one decimal, rows in input order.
pub fn render_table<S: AsRef<str>>(rows: &[(S, EvalSummary)]) -> String {
    const HEADERS: [&str; 4] = ["Methods", "AP@0.50:0.95", "AP@0.50", "AP@0.75"];
    let label_w = rows
        .iter()
        .map(|(l, _)| l.as_ref().chars().count())
        .chain([HEADERS[0].len()])
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    let mut line = |cells: [&str; 4]| {
        let mut s = format!("{:<label_w$}", cells[0]);
        for (cell, header) in cells[1..].iter().zip(&HEADERS[1..]) {
            s.push_str(&format!("  {:>w$}", cell, w = header.len()));
        }
        out.push_str(s.trim_end());
        out.push('\n');
    };
    line(HEADERS);
    for (label, s) in rows {
        let cells = [percent(s.ap_50_95), percent(s.ap_50), percent(s.ap_75)];
        line([label.as_ref(), &cells[0], &cells[1], &cells[2]]);
    }
    out
}
