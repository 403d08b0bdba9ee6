//! Axis-aligned box arithmetic, overlap metrics and greedy per-category NMS.
//!
//! Boxes use the COCO convention: top-left corner plus width/height in
//! continuous pixel coordinates. Corner form is only used internally.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Opaque image identifier (COCO `image_id`).
pub type ImageId = u64;

/// Category identifier, `>= 1` as in COCO.
pub type CategoryId = u32;

/// Axis-aligned box with strictly positive, finite extent.
///
/// Serializes as `[x, y, w, h]`; deserialization runs the same validation as
/// [`BoundingBox::new`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let finite = x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite();
        if !finite || w <= 0.0 || h <= 0.0 {
            return Err(Error::InvalidBox { x, y, w, h });
        }
        Ok(Self { x, y, w, h })
    }

    /// Builds a box from corners; `None` when the corners span no area.
    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Option<Self> {
        Self::new(x1, y1, x2 - x1, y2 - y1).ok()
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }

    /// True when `other` lies entirely inside `self` (edges may touch).
    pub fn contains(&self, other: &BoundingBox) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    pub fn contains_point(&self, px: f64, py: f64) -> bool {
        px >= self.x && px <= self.right() && py >= self.y && py <= self.bottom()
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        b.to_array()
    }
}

/// A scored detector output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: ImageId,
    pub category_id: CategoryId,
    pub bbox: BoundingBox,
    pub score: f64,
}

impl Detection {
    pub fn new(
        image_id: ImageId,
        category_id: CategoryId,
        bbox: BoundingBox,
        score: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::input(format!("detection score {score} outside [0, 1]")));
        }
        if category_id == 0 {
            return Err(Error::input("category_id must be >= 1"));
        }
        Ok(Self {
            image_id,
            category_id,
            bbox,
            score,
        })
    }
}

/// An annotated object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub annotation_id: u64,
    pub image_id: ImageId,
    pub category_id: CategoryId,
    pub bbox: BoundingBox,
}

/// Anything carrying a box; lets heatmap splatting accept detections and
/// ground truth alike.
pub trait HasBox {
    fn bbox(&self) -> &BoundingBox;
}

impl HasBox for BoundingBox {
    fn bbox(&self) -> &BoundingBox {
        self
    }
}

impl HasBox for Detection {
    fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }
}

impl HasBox for GroundTruth {
    fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }
}

fn intersection_area(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = a.right().min(b.right()) - a.x.max(b.x);
    let ih = a.bottom().min(b.bottom()) - a.y.max(b.y);
    if iw <= 0.0 || ih <= 0.0 {
        0.0
    } else {
        iw * ih
    }
}

// Area from the same corner differences the intersection uses, so a box
// compared with itself gives exactly 1 despite rounding in `x + w`.
fn extent_area(b: &BoundingBox) -> f64 {
    (b.right() - b.x) * (b.bottom() - b.y)
}

pub fn area(b: &BoundingBox) -> f64 {
    b.area()
}

/// Intersection over union, in `[0, 1]`.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = intersection_area(a, b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = extent_area(a) + extent_area(b) - inter;
    (inter / union).min(1.0)
}

/// Generalized IoU: `iou - |C \ (A ∪ B)| / |C|` with `C` the smallest
/// enclosing box. Lies in `(-1, 1]` and never exceeds [`iou`].
pub fn giou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = intersection_area(a, b);
    let union = extent_area(a) + extent_area(b) - inter;
    let cw = a.right().max(b.right()) - a.x.min(b.x);
    let ch = a.bottom().max(b.bottom()) - a.y.min(b.y);
    let hull = cw * ch;
    let overlap = if inter == 0.0 { 0.0 } else { (inter / union).min(1.0) };
    overlap - (hull - union).max(0.0) / hull
}

/// Intersection of `b` with `bounds`; `None` when it has zero area.
pub fn clip(b: &BoundingBox, bounds: &BoundingBox) -> Option<BoundingBox> {
    BoundingBox::from_corners(
        b.x.max(bounds.x),
        b.y.max(bounds.y),
        b.right().min(bounds.right()),
        b.bottom().min(bounds.bottom()),
    )
}

/// Deterministic detection ranking: score descending, then lower x, lower y,
/// smaller w, smaller h, lower category and lower image id.
///
/// Callers sort stably, so detections equal under this key keep input order.
pub fn rank_order(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.bbox.x.total_cmp(&b.bbox.x))
        .then_with(|| a.bbox.y.total_cmp(&b.bbox.y))
        .then_with(|| a.bbox.w.total_cmp(&b.bbox.w))
        .then_with(|| a.bbox.h.total_cmp(&b.bbox.h))
        .then_with(|| a.category_id.cmp(&b.category_id))
        .then_with(|| a.image_id.cmp(&b.image_id))
}

/// Stable sort by [`rank_order`].
pub fn sort_ranked(dets: &mut [Detection]) {
    dets.sort_by(rank_order);
}

pub(crate) fn ensure_single_image(dets: &[Detection]) -> Result<()> {
    if let Some(first) = dets.first() {
        if let Some(other) = dets.iter().find(|d| d.image_id != first.image_id) {
            return Err(Error::input(format!(
                "detections span several images ({} and {})",
                first.image_id, other.image_id
            )));
        }
    }
    Ok(())
}

/// Greedy per-category non-maximum suppression.
///
/// A detection survives iff its IoU with every already-kept detection of the
/// same category is `<= iou_threshold`. Output is ordered by [`rank_order`].
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Result<Vec<Detection>> {
    if !(0.0..=1.0).contains(&iou_threshold) {
        return Err(Error::input(format!(
            "NMS IoU threshold {iou_threshold} outside [0, 1]"
        )));
    }
    ensure_single_image(dets)?;
    Ok(nms_indices(dets, iou_threshold)
        .into_iter()
        .map(|i| dets[i])
        .collect())
}

/// Indices of the detections kept by [`nms`], in output order.
pub(crate) fn nms_indices(dets: &[Detection], iou_threshold: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| rank_order(&dets[a], &dets[b]));

    let mut kept_per_category: BTreeMap<CategoryId, Vec<usize>> = BTreeMap::new();
    let mut kept = Vec::new();
    for idx in order {
        let d = &dets[idx];
        let same_cat = kept_per_category.entry(d.category_id).or_default();
        if same_cat
            .iter()
            .all(|&k| iou(&dets[k].bbox, &d.bbox) <= iou_threshold)
        {
            same_cat.push(idx);
            kept.push(idx);
        }
    }
    kept
}
