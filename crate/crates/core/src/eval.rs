//! COCO-protocol box evaluation: greedy matching, 101-point interpolated AP,
//! AP50 / AP75 and per-category breakdown.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, rank_order, CategoryId, Detection, GroundTruth, ImageId};

/// `0.50, 0.55, ..., 0.95`.
pub fn coco_iou_thresholds() -> Vec<f64> {
    (0..10).map(|k| (50 + 5 * k) as f64 / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalParams {
    /// Thresholds averaged into `ap`; must be ascending within `[0, 1]`.
    pub iou_thresholds: Vec<f64>,
    /// Keep only the top detections per (image, category). `None` = no cap.
    pub max_dets: Option<usize>,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            iou_thresholds: coco_iou_thresholds(),
            max_dets: None,
        }
    }
}

impl EvalParams {
    pub fn validate(&self) -> Result<()> {
        let t = &self.iou_thresholds;
        if t.is_empty() {
            return Err(Error::config("at least one IoU threshold is required"));
        }
        if t.iter().any(|v| !(0.0..=1.0).contains(v)) || t.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config(
                "IoU thresholds must be strictly ascending within [0, 1]",
            ));
        }
        Ok(())
    }
}

/// Known images and categories; detections referring to anything else are
/// rejected.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    pub images: BTreeSet<ImageId>,
    pub categories: BTreeSet<CategoryId>,
}

impl Vocabulary {
    pub fn new(
        images: impl IntoIterator<Item = ImageId>,
        categories: impl IntoIterator<Item = CategoryId>,
    ) -> Self {
        Self {
            images: images.into_iter().collect(),
            categories: categories.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryAp {
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    /// Only categories with ground truth or detections appear here.
    pub per_category: BTreeMap<CategoryId, CategoryAp>,
    /// Wall-clock seconds per original image, when measured.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_image_seconds: Option<f64>,
}

impl EvalResult {
    pub fn empty() -> Self {
        Self {
            ap: 0.0,
            ap50: 0.0,
            ap75: 0.0,
            per_category: BTreeMap::new(),
            per_image_seconds: None,
        }
    }
}

/// Renders `(method, result)` rows as an aligned table in percent.
///
/// A `s/img` column is added when any row carries a timing.
pub fn format_table(rows: &[(&str, &EvalResult)]) -> String {
    let timed = rows.iter().any(|(_, r)| r.per_image_seconds.is_some());
    let name_w = rows
        .iter()
        .map(|(n, _)| n.len())
        .chain(["Method".len()])
        .max()
        .unwrap_or(6);
    let mut out = String::new();
    let _ = write!(out, "{:<name_w$}  {:>6}  {:>6}  {:>6}", "Method", "AP", "AP50", "AP75");
    if timed {
        let _ = write!(out, "  {:>8}", "s/img");
    }
    out.push('\n');
    for (name, r) in rows {
        let _ = write!(
            out,
            "{:<name_w$}  {:>6.1}  {:>6.1}  {:>6.1}",
            name,
            100.0 * r.ap,
            100.0 * r.ap50,
            100.0 * r.ap75
        );
        if timed {
            match r.per_image_seconds {
                Some(s) => {
                    let _ = write!(out, "  {s:>8.4}");
                }
                None => {
                    let _ = write!(out, "  {:>8}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}

/// Greedy COCO matching for one image and one category.
///
/// Detections are visited in [`rank_order`]; each claims the still-unmatched
/// ground truth with the highest IoU `>= iou_t` (lowest index on ties).
/// Returns the detections in visiting order with their TP flag.
pub fn match_greedy(
    dets: &[Detection],
    gts: &[GroundTruth],
    iou_t: f64,
) -> Result<Vec<(Detection, bool)>> {
    let key = dets
        .first()
        .map(|d| (d.image_id, d.category_id))
        .or_else(|| gts.first().map(|g| (g.image_id, g.category_id)));
    if let Some(key) = key {
        let mixed = dets.iter().any(|d| (d.image_id, d.category_id) != key)
            || gts.iter().any(|g| (g.image_id, g.category_id) != key);
        if mixed {
            return Err(Error::input(
                "match_greedy needs detections and ground truth from a single image and category",
            ));
        }
    }
    let mut order: Vec<Detection> = dets.to_vec();
    order.sort_by(rank_order);
    Ok(match_sorted(&order, gts, iou_t))
}

fn match_sorted(sorted: &[Detection], gts: &[GroundTruth], iou_t: f64) -> Vec<(Detection, bool)> {
    let mut taken = vec![false; gts.len()];
    sorted
        .iter()
        .map(|d| {
            let mut best: Option<(usize, f64)> = None;
            for (g, gt) in gts.iter().enumerate() {
                if taken[g] {
                    continue;
                }
                let o = iou(&d.bbox, &gt.bbox);
                if o >= iou_t && best.is_none_or(|(_, b)| o > b) {
                    best = Some((g, o));
                }
            }
            if let Some((g, _)) = best {
                taken[g] = true;
            }
            (*d, best.is_some())
        })
        .collect()
}

/// 101-point interpolated AP of a ranked TP/FP list.
///
/// `None` when there is nothing to evaluate (no ground truth and no
/// detections); `Some(0.0)` for detections without ground truth.
pub fn average_precision(labels: &[bool], n_gt: usize) -> Option<f64> {
    if n_gt == 0 {
        return if labels.is_empty() { None } else { Some(0.0) };
    }
    let mut precision = Vec::with_capacity(labels.len());
    let mut recall = Vec::with_capacity(labels.len());
    let mut tp = 0usize;
    for (k, &is_tp) in labels.iter().enumerate() {
        tp += is_tp as usize;
        precision.push(tp as f64 / (k + 1) as f64);
        recall.push(tp as f64 / n_gt as f64);
    }
    for k in (1..precision.len()).rev() {
        if precision[k] > precision[k - 1] {
            precision[k - 1] = precision[k];
        }
    }
    let sum: f64 = (0..=100)
        .map(|r| {
            let level = r as f64 / 100.0;
            let idx = recall.partition_point(|&v| v < level);
            precision.get(idx).copied().unwrap_or(0.0)
        })
        .sum();
    Some(sum / 101.0)
}

fn same_threshold(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

/// Evaluates detections against ground truth over every category that has
/// either.
pub fn coco_ap(
    dets: &[Detection],
    gts: &[GroundTruth],
    vocab: &Vocabulary,
    params: &EvalParams,
) -> Result<EvalResult> {
    params.validate()?;
    for d in dets {
        if !vocab.images.contains(&d.image_id) {
            return Err(Error::input(format!("detection references unknown image {}", d.image_id)));
        }
        if !vocab.categories.contains(&d.category_id) {
            return Err(Error::input(format!(
                "detection references unknown category {}",
                d.category_id
            )));
        }
    }
    for g in gts {
        if !vocab.images.contains(&g.image_id) || !vocab.categories.contains(&g.category_id) {
            return Err(Error::input(format!(
                "annotation {} references an unknown image or category",
                g.annotation_id
            )));
        }
    }

    // the averaged thresholds plus 0.5 / 0.75 for the fixed-threshold columns
    let mut thresholds = params.iou_thresholds.clone();
    for fixed in [0.5, 0.75] {
        if !thresholds.iter().any(|&t| same_threshold(t, fixed)) {
            thresholds.push(fixed);
        }
    }

    type Groups<T> = BTreeMap<CategoryId, BTreeMap<ImageId, Vec<T>>>;
    let mut det_groups: Groups<Detection> = BTreeMap::new();
    let mut gt_groups: Groups<GroundTruth> = BTreeMap::new();
    for d in dets {
        det_groups
            .entry(d.category_id)
            .or_default()
            .entry(d.image_id)
            .or_default()
            .push(*d);
    }
    for g in gts {
        gt_groups
            .entry(g.category_id)
            .or_default()
            .entry(g.image_id)
            .or_default()
            .push(*g);
    }
    for per_image in det_groups.values_mut() {
        for list in per_image.values_mut() {
            list.sort_by(rank_order);
            if let Some(cap) = params.max_dets {
                list.truncate(cap);
            }
        }
    }

    let categories: BTreeSet<CategoryId> =
        det_groups.keys().chain(gt_groups.keys()).copied().collect();
    let empty_d = BTreeMap::new();
    let empty_g = BTreeMap::new();
    let mut per_category = BTreeMap::new();
    for cat in categories {
        let cat_dets = det_groups.get(&cat).unwrap_or(&empty_d);
        let cat_gts = gt_groups.get(&cat).unwrap_or(&empty_g);
        let n_gt: usize = cat_gts.values().map(Vec::len).sum();

        let ap_at = |t: f64| -> Option<f64> {
            let mut pooled: Vec<(Detection, bool)> = Vec::new();
            for (img, list) in cat_dets {
                let img_gts = cat_gts.get(img).map(Vec::as_slice).unwrap_or(&[]);
                pooled.extend(match_sorted(list, img_gts, t));
            }
            pooled.sort_by(|a, b| rank_order(&a.0, &b.0));
            let labels: Vec<bool> = pooled.iter().map(|p| p.1).collect();
            average_precision(&labels, n_gt)
        };

        let per_t: Vec<(f64, Option<f64>)> = thresholds.iter().map(|&t| (t, ap_at(t))).collect();
        if per_t.iter().all(|(_, v)| v.is_none()) {
            continue;
        }
        let value = |t: f64| {
            per_t
                .iter()
                .find(|(x, _)| same_threshold(*x, t))
                .and_then(|(_, v)| *v)
                .unwrap_or(0.0)
        };
        let averaged: f64 = params.iou_thresholds.iter().map(|&t| value(t)).sum::<f64>()
            / params.iou_thresholds.len() as f64;
        per_category.insert(
            cat,
            CategoryAp {
                ap: averaged,
                ap50: value(0.5),
                ap75: value(0.75),
            },
        );
    }

    if per_category.is_empty() {
        return Ok(EvalResult::empty());
    }
    let n = per_category.len() as f64;
    let mean = |f: fn(&CategoryAp) -> f64| per_category.values().map(f).sum::<f64>() / n;
    Ok(EvalResult {
        ap: mean(|c| c.ap),
        ap50: mean(|c| c.ap50),
        ap75: mean(|c| c.ap75),
        per_category,
        per_image_seconds: None,
    })
}
