//! Crop-to-image coordinate mapping and merging of coarse and per-crop
//! detections.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{clip, ensure_single_image, nms_indices, BoundingBox, Detection};
use crate::scm::CropPlan;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub nms_iou: f64,
    /// Fine detections closer than this to an interior crop edge are dropped.
    pub boundary_margin: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            nms_iou: 0.5,
            boundary_margin: 2.0,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.nms_iou) {
            return Err(Error::config(format!("nms_iou {} outside [0, 1]", self.nms_iou)));
        }
        if !(self.boundary_margin >= 0.0 && self.boundary_margin.is_finite()) {
            return Err(Error::config("boundary_margin must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Maps an image-space detection onto the crop canvas.
pub fn to_crop(d: &Detection, plan: &CropPlan) -> Detection {
    let b = &d.bbox;
    let bbox = BoundingBox::new(
        (b.x() - plan.source.x()) * plan.scale + plan.pad_x,
        (b.y() - plan.source.y()) * plan.scale + plan.pad_y,
        b.w() * plan.scale,
        b.h() * plan.scale,
    )
    .expect("positive scale preserves a valid box");
    Detection { bbox, ..*d }
}

/// Maps a crop-canvas detection back to image space, clipped to the crop
/// source. `None` when nothing of the box falls on source pixels.
pub fn to_global(d: &Detection, plan: &CropPlan) -> Option<Detection> {
    let b = &d.bbox;
    let x1 = (b.x() - plan.pad_x) / plan.scale + plan.source.x();
    let y1 = (b.y() - plan.pad_y) / plan.scale + plan.source.y();
    let x2 = (b.right() - plan.pad_x) / plan.scale + plan.source.x();
    let y2 = (b.bottom() - plan.pad_y) / plan.scale + plan.source.y();
    let mapped = BoundingBox::from_corners(x1, y1, x2, y2)?;
    match clip(&mapped, &plan.source) {
        Some(bbox) => Some(Detection { bbox, ..*d }),
        None => {
            log::debug!(
                "dropping detection {:?}: it lies entirely in the letterbox padding",
                b.to_array()
            );
            None
        }
    }
}

/// Drops image-space detections that touch an interior edge of the crop
/// source. Edges lying on the image border (within `margin`) do not count.
pub fn filter_boundary(
    dets: &[Detection],
    plan: &CropPlan,
    image_w: f64,
    image_h: f64,
    margin: f64,
) -> Vec<Detection> {
    let s = &plan.source;
    let left_inner = s.x() > margin;
    let top_inner = s.y() > margin;
    let right_inner = s.right() < image_w - margin;
    let bottom_inner = s.bottom() < image_h - margin;
    dets.iter()
        .filter(|d| {
            let b = &d.bbox;
            let touches = (left_inner && b.x() - s.x() <= margin)
                || (top_inner && b.y() - s.y() <= margin)
                || (right_inner && s.right() - b.right() <= margin)
                || (bottom_inner && s.bottom() - b.bottom() <= margin);
            !touches
        })
        .copied()
        .collect()
}

/// Where a fused detection came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Origin {
    Coarse,
    /// Index into the `fine` list passed to [`fuse_tagged`].
    Crop(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusedDetection {
    pub detection: Detection,
    pub origin: Origin,
}

/// [`fuse`] that also reports the origin of every surviving detection.
pub fn fuse_tagged(
    coarse: &[Detection],
    fine: &[(CropPlan, Vec<Detection>)],
    cfg: &FusionConfig,
    image_w: f64,
    image_h: f64,
) -> Result<Vec<FusedDetection>> {
    cfg.validate()?;
    let image = BoundingBox::new(0.0, 0.0, image_w, image_h)?;

    let mut pool: Vec<FusedDetection> = Vec::new();
    for d in coarse {
        match clip(&d.bbox, &image) {
            Some(bbox) => pool.push(FusedDetection {
                detection: Detection { bbox, ..*d },
                origin: Origin::Coarse,
            }),
            None => log::debug!("dropping coarse detection outside the image"),
        }
    }
    for (k, (plan, dets)) in fine.iter().enumerate() {
        let global: Vec<Detection> = dets.iter().filter_map(|d| to_global(d, plan)).collect();
        let kept = filter_boundary(&global, plan, image_w, image_h, cfg.boundary_margin);
        pool.extend(kept.into_iter().filter_map(|d| {
            clip(&d.bbox, &image).map(|bbox| FusedDetection {
                detection: Detection { bbox, ..d },
                origin: Origin::Crop(k),
            })
        }));
    }

    let flat: Vec<Detection> = pool.iter().map(|f| f.detection).collect();
    ensure_single_image(&flat)?;
    Ok(nms_indices(&flat, cfg.nms_iou)
        .into_iter()
        .map(|i| pool[i])
        .collect())
}

/// Maps fine detections to image space, drops crop-edge artifacts, and
/// resolves duplicates against the coarse pass with per-category NMS.
pub fn fuse(
    coarse: &[Detection],
    fine: &[(CropPlan, Vec<Detection>)],
    cfg: &FusionConfig,
    image_w: f64,
    image_h: f64,
) -> Result<Vec<Detection>> {
    Ok(fuse_tagged(coarse, fine, cfg, image_w, image_h)?
        .into_iter()
        .map(|f| f.detection)
        .collect())
}
