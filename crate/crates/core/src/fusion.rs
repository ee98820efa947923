//! Box ensembling: greedy non-maximum suppression and weighted boxes fusion.
//!
//! Both algorithms treat every `(image_id, category_id)` pair as an
//! independent group, so a mixed list of detections can be passed in one
//! call. Degenerate boxes and boxes scoring below the configured threshold
//! are dropped on entry. Score ties are broken by input order.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, BBox, Detection};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub iou_threshold: f64,
    pub score_threshold: f64,
    pub num_models: usize,
    /// One positive weight per model, indexed by `Detection::model_id`.
    pub model_weights: Option<Vec<f64>>,
}

impl FusionConfig {
    pub const DEFAULT_WBF_IOU: f64 = 0.55;
    pub const DEFAULT_NMS_IOU: f64 = 0.5;

    pub fn wbf(num_models: usize) -> Self {
        Self {
            iou_threshold: Self::DEFAULT_WBF_IOU,
            score_threshold: 0.0,
            num_models,
            model_weights: None,
        }
    }

    pub fn nms() -> Self {
        Self {
            iou_threshold: Self::DEFAULT_NMS_IOU,
            score_threshold: 0.0,
            num_models: 1,
            model_weights: None,
        }
    }

    pub fn with_iou_threshold(mut self, t: f64) -> Self {
        self.iou_threshold = t;
        self
    }

    pub fn with_score_threshold(mut self, t: f64) -> Self {
        self.score_threshold = t;
        self
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        self.model_weights = Some(weights);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold < 1.0) {
            return Err(Error::Config(format!(
                "iou threshold must lie in (0, 1), got {}",
                self.iou_threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.score_threshold) {
            return Err(Error::Config(format!(
                "score threshold must lie in [0, 1], got {}",
                self.score_threshold
            )));
        }
        if self.num_models < 1 {
            return Err(Error::Config("number of models must be at least 1".into()));
        }
        if let Some(w) = &self.model_weights {
            if w.len() != self.num_models {
                return Err(Error::Config(format!(
                    "{} model weights given for {} models",
                    w.len(),
                    self.num_models
                )));
            }
            if let Some(bad) = w.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                return Err(Error::Config(format!(
                    "model weights must be positive, got {bad}"
                )));
            }
        }
        Ok(())
    }

    fn weight(&self, model_id: u32) -> Result<f64> {
        match &self.model_weights {
            None => Ok(1.0),
            Some(w) => w.get(model_id as usize).copied().ok_or_else(|| {
                Error::Config(format!(
                    "detection from model {model_id} but only {} weights given",
                    w.len()
                ))
            }),
        }
    }
}

/// A WBF output box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusedBox {
    pub bbox: BBox,
    pub score: f64,
    pub category_id: u64,
    pub image_id: u64,
    /// Number of member boxes.
    pub cluster_size: usize,
}

impl FusedBox {
    pub fn to_detection(&self, model_id: u32) -> Detection {
        Detection {
            bbox: self.bbox,
            score: self.score,
            category_id: self.category_id,
            model_id,
            image_id: self.image_id,
        }
    }
}

/// Indices of the detections that pass the entry filters, ordered by
/// descending score with ties in input order.
fn ranked(dets: &[Detection], score_threshold: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len())
        .filter(|&i| dets[i].score >= score_threshold && !dets[i].bbox.is_degenerate())
        .collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    order
}

/// Greedy NMS, returning indices into `dets` of the kept boxes in output order.
pub fn nms_indices(dets: &[Detection], cfg: &FusionConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    let mut kept_by_group: HashMap<(u64, u64), Vec<BBox>> = HashMap::new();
    let mut kept = Vec::new();
    for i in ranked(dets, cfg.score_threshold) {
        let d = &dets[i];
        let group = kept_by_group.entry((d.image_id, d.category_id)).or_default();
        if group.iter().all(|k| iou(k, &d.bbox) < cfg.iou_threshold) {
            group.push(d.bbox);
            kept.push(i);
        }
    }
    Ok(kept)
}

/// Greedy NMS. Kept detections are returned unchanged, best first.
pub fn nms(dets: &[Detection], cfg: &FusionConfig) -> Result<Vec<Detection>> {
    Ok(nms_indices(dets, cfg)?
        .into_iter()
        .map(|i| dets[i])
        .collect())
}

/// One WBF cluster with its members, exposed for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct WbfCluster {
    pub image_id: u64,
    pub category_id: u64,
    /// Member detections with their scores already multiplied by the model weight.
    pub members: Vec<Detection>,
    /// Score-weighted mean of the member boxes.
    pub bbox: BBox,
    /// Arithmetic mean of member scores, before rescaling.
    pub raw_score: f64,
    /// `raw_score * min(T, N) / N`.
    pub score: f64,
}

/// Running WBF sums. Coordinates are accumulated as offsets from the first
/// member, so clusters of identical boxes reproduce them exactly.
#[derive(Debug, Clone)]
struct Accumulator {
    anchor: [f64; 4],
    weighted: [f64; 4],
    plain: [f64; 4],
    score_sum: f64,
    members: Vec<Detection>,
    fused: BBox,
}

impl Accumulator {
    fn new(d: Detection) -> Self {
        let mut acc = Self {
            anchor: d.bbox.coords(),
            weighted: [0.0; 4],
            plain: [0.0; 4],
            score_sum: 0.0,
            members: Vec::new(),
            fused: d.bbox,
        };
        acc.push(d);
        acc
    }

    fn push(&mut self, d: Detection) {
        for (k, c) in d.bbox.coords().into_iter().enumerate() {
            let offset = c - self.anchor[k];
            self.weighted[k] += d.score * offset;
            self.plain[k] += offset;
        }
        self.score_sum += d.score;
        self.members.push(d);
        // all-zero scores fall back to the unweighted mean
        let (sums, total) = if self.score_sum > 0.0 {
            (self.weighted, self.score_sum)
        } else {
            (self.plain, self.members.len() as f64)
        };
        let mut fused = self.anchor;
        for k in 0..4 {
            fused[k] += sums[k] / total;
        }
        self.fused = BBox::from_coords(fused);
    }
}

/// The factor `min(T, N) / N` applied to a cluster's mean score.
pub fn rescale_factor(cluster_size: usize, num_models: usize) -> f64 {
    cluster_size.min(num_models) as f64 / num_models as f64
}

/// Runs WBF clustering and returns every cluster, best final score first.
pub fn wbf_clusters(dets: &[Detection], cfg: &FusionConfig) -> Result<Vec<WbfCluster>> {
    cfg.validate()?;
    let mut weighted = Vec::with_capacity(dets.len());
    for d in dets {
        let mut w = *d;
        w.score = d.score * cfg.weight(d.model_id)?;
        weighted.push(w);
    }
    // the score threshold applies to raw scores, ranking to weighted ones
    let mut order: Vec<usize> = (0..dets.len())
        .filter(|&i| dets[i].score >= cfg.score_threshold && !dets[i].bbox.is_degenerate())
        .collect();
    order.sort_by(|&a, &b| weighted[b].score.total_cmp(&weighted[a].score));

    let mut clusters: Vec<Accumulator> = Vec::new();
    let mut by_group: HashMap<(u64, u64), Vec<usize>> = HashMap::new();
    for i in order {
        let d = weighted[i];
        let group = by_group.entry((d.image_id, d.category_id)).or_default();
        match group
            .iter()
            .copied()
            .find(|&c| iou(&clusters[c].fused, &d.bbox) >= cfg.iou_threshold)
        {
            Some(c) => clusters[c].push(d),
            None => {
                group.push(clusters.len());
                clusters.push(Accumulator::new(d));
            }
        }
    }

    let mut out: Vec<WbfCluster> = clusters
        .into_iter()
        .map(|acc| {
            let t = acc.members.len();
            let raw_score = acc.score_sum / t as f64;
            let first = acc.members[0];
            WbfCluster {
                image_id: first.image_id,
                category_id: first.category_id,
                bbox: acc.fused,
                raw_score,
                score: raw_score * rescale_factor(t, cfg.num_models),
                members: acc.members,
            }
        })
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(out)
}

/// Weighted boxes fusion.
pub fn wbf(dets: &[Detection], cfg: &FusionConfig) -> Result<Vec<FusedBox>> {
    Ok(wbf_clusters(dets, cfg)?
        .into_iter()
        .map(|c| FusedBox {
            bbox: c.bbox,
            score: c.score,
            category_id: c.category_id,
            image_id: c.image_id,
            cluster_size: c.members.len(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(c: [f64; 4], score: f64, category_id: u64, model_id: u32) -> Detection {
        Detection {
            bbox: BBox::from_coords(c),
            score,
            category_id,
            model_id,
            image_id: 1,
        }
    }

    #[test]
    fn nms_identical_boxes_keeps_best() {
        let a = det([0.1, 0.1, 0.4, 0.4], 0.8, 1, 0);
        let b = det([0.1, 0.1, 0.4, 0.4], 0.9, 1, 0);
        let out = nms(&[a, b], &FusionConfig::nms()).unwrap();
        assert_eq!(out, vec![b]);
    }

    #[test]
    fn nms_disjoint_and_cross_category() {
        let a = det([0.0, 0.0, 0.2, 0.2], 0.5, 1, 0);
        let b = det([0.5, 0.5, 0.9, 0.9], 0.7, 1, 0);
        let c = det([0.0, 0.0, 0.2, 0.2], 0.6, 2, 0);
        let out = nms(&[a, b, c], &FusionConfig::nms()).unwrap();
        assert_eq!(out, vec![b, c, a]);
        assert!(nms(&[], &FusionConfig::nms()).unwrap().is_empty());
    }

    #[test]
    fn nms_filters_on_entry() {
        let a = det([0.0, 0.0, 0.2, 0.2], 0.1, 1, 0);
        let z = det([0.3, 0.3, 0.3, 0.5], 0.9, 1, 0);
        let cfg = FusionConfig::nms().with_score_threshold(0.2);
        assert!(nms(&[a, z], &cfg).unwrap().is_empty());
    }

    #[test]
    fn nms_ties_follow_input_order() {
        let a = det([0.1, 0.1, 0.4, 0.4], 0.5, 1, 0);
        let b = det([0.1, 0.1, 0.4, 0.41], 0.5, 1, 1);
        assert_eq!(nms_indices(&[a, b], &FusionConfig::nms()).unwrap(), vec![0]);
        assert_eq!(nms_indices(&[b, a], &FusionConfig::nms()).unwrap(), vec![0]);
    }

    #[test]
    fn config_validation() {
        assert!(FusionConfig::wbf(0).validate().is_err());
        assert!(FusionConfig::wbf(2).with_weights(vec![1.0]).validate().is_err());
        assert!(FusionConfig::wbf(2).with_weights(vec![1.0, 0.0]).validate().is_err());
        assert!(FusionConfig::wbf(2).with_iou_threshold(1.0).validate().is_err());
        assert!(FusionConfig::wbf(2).with_score_threshold(1.5).validate().is_err());
        assert!(FusionConfig::wbf(2).with_weights(vec![1.0, 2.0]).validate().is_ok());
        let d = det([0.0, 0.0, 0.5, 0.5], 0.5, 1, 3);
        let cfg = FusionConfig::wbf(2).with_weights(vec![1.0, 2.0]);
        assert!(matches!(wbf(&[d], &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn wbf_single_detection_is_identity() {
        let d = det([0.1, 0.2, 0.3, 0.4], 0.7, 3, 0);
        let out = wbf(&[d], &FusionConfig::wbf(1)).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].bbox, d.bbox);
        assert_eq!(out[0].score, 0.7);
        assert_eq!(out[0].cluster_size, 1);
    }

    #[test]
    fn wbf_two_model_example() {
        let a = det([0.0, 0.0, 0.5, 0.5], 0.6, 1, 0);
        let b = det([0.05, 0.0, 0.55, 0.5], 0.4, 1, 1);
        let out = wbf(&[a, b], &FusionConfig::wbf(2)).unwrap();
        assert_eq!(out.len(), 1);
        let f = out[0];
        for (got, want) in f.bbox.coords().iter().zip([0.02, 0.0, 0.52, 0.5]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        assert!((f.score - 0.5).abs() < 1e-12);
        assert_eq!(f.cluster_size, 2);
    }

    #[test]
    fn wbf_unmatched_box_is_downweighted() {
        let d = det([0.1, 0.1, 0.3, 0.3], 0.9, 1, 2);
        let out = wbf(&[d], &FusionConfig::wbf(3)).unwrap();
        assert!((out[0].score - 0.3).abs() < 1e-12);
        assert_eq!(rescale_factor(1, 3), 1.0 / 3.0);
        assert_eq!(rescale_factor(5, 3), 1.0);
    }

    #[test]
    fn wbf_weights_scale_scores() {
        let a = det([0.0, 0.0, 0.5, 0.5], 0.8, 1, 0);
        let b = det([0.0, 0.0, 0.5, 0.5], 0.8, 1, 1);
        let cfg = FusionConfig::wbf(2).with_weights(vec![1.0, 0.5]);
        let c = &wbf_clusters(&[a, b], &cfg).unwrap()[0];
        assert_eq!(c.members[1].score, 0.4);
        assert!((c.raw_score - 0.6).abs() < 1e-12);
    }

    #[test]
    fn wbf_zero_scores_use_plain_mean() {
        let a = det([0.0, 0.0, 0.5, 0.5], 0.0, 1, 0);
        let b = det([0.0, 0.0, 0.5, 0.6], 0.0, 1, 1);
        let out = wbf(&[a, b], &FusionConfig::wbf(2)).unwrap();
        assert_eq!(out.len(), 1);
        assert!((out[0].bbox.y2 - 0.55).abs() < 1e-12);
        assert_eq!(out[0].score, 0.0);
    }

    #[test]
    fn wbf_matches_against_running_fused_box() {
        // c overlaps the fused a+b box but would not overlap a alone enough
        let a = det([0.0, 0.0, 0.4, 0.4], 0.5, 1, 0);
        let b = det([0.2, 0.0, 0.6, 0.4], 0.5, 1, 1);
        let c = det([0.25, 0.0, 0.65, 0.4], 0.4, 1, 2);
        let cfg = FusionConfig::wbf(3).with_iou_threshold(0.3);
        assert!(iou(&a.bbox, &c.bbox) < 0.3);
        let out = wbf(&[a, b, c], &cfg).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].cluster_size, 3);
    }
}
