//! Deterministic synthetic traffic scenes and a resolution-limited
//! pseudo-detector, used to check end to end that dense-region crops recover
//! vehicles a whole-image pass misses.
//!
//! Every random draw that concerns a ground-truth object comes from a ChaCha
//! stream keyed by `(detector seed, annotation id)`, so the same vehicle gets
//! the same draws in every view. Detection is `u < logistic((apparent - s50) /
//! slope)` with a per-object `u`, which makes recall monotone in view scale.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{coco_ap, EvalParams, EvalResult, Vocabulary};
use crate::fusion::{fuse_tagged, to_crop, FusedDetection, FusionConfig};
use crate::geometry::{clip, BoundingBox, CategoryId, Detection, GroundTruth, ImageId};
use crate::heatmap::{splat, Heatmap, HeatmapConfig};
use crate::scm::{propose_detailed, CropPlan, Proposal, ScmConfig};

/// Image id given to simulated scenes.
pub const SIM_IMAGE_ID: ImageId = 1;
/// Single simulated category ("car").
pub const SIM_CATEGORY: CategoryId = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    pub center: [f64; 2],
    pub spread_sigma: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub image_w: u32,
    pub image_h: u32,
    pub clusters: Vec<ClusterSpec>,
    /// Vehicles scattered uniformly over the image.
    pub background_count: usize,
    /// Log-normal parameters of the vehicle's shorter side, in pixels.
    pub size_log_mean: f64,
    pub size_log_sigma: f64,
    /// Long side / short side, drawn uniformly.
    pub aspect_min: f64,
    pub aspect_max: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            image_w: 2000,
            image_h: 1500,
            clusters: Vec::new(),
            background_count: 0,
            size_log_mean: 14f64.ln(),
            size_log_sigma: 0.4,
            aspect_min: 1.0,
            aspect_max: 2.5,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.image_w == 0 || self.image_h == 0 {
            return Err(Error::config("scene image dimensions must be positive"));
        }
        if let Some(c) = self.clusters.iter().find(|c| !(c.spread_sigma > 0.0)) {
            return Err(Error::config(format!(
                "cluster spread_sigma {} must be > 0",
                c.spread_sigma
            )));
        }
        if !(self.size_log_sigma >= 0.0 && self.size_log_mean.is_finite()) {
            return Err(Error::config("size distribution parameters are invalid"));
        }
        let aspect_ok = (0.2..=5.0).contains(&self.aspect_min)
            && (0.2..=5.0).contains(&self.aspect_max)
            && self.aspect_min <= self.aspect_max;
        if !aspect_ok {
            return Err(Error::config("aspect bounds must satisfy 0.2 <= min <= max <= 5"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorModel {
    /// Apparent shorter side (viewed pixels) detected with probability 0.5.
    pub s50: f64,
    /// Logistic width in viewed pixels.
    pub slope: f64,
    /// Corner noise std as a fraction of the apparent size.
    pub loc_sigma_frac: f64,
    pub score_tp_mean: f64,
    pub score_fp_mean: f64,
    pub score_sigma: f64,
    /// Expected false positives per megapixel of detector input.
    pub fp_rate_per_megapixel: f64,
    /// Log-normal shorter side of false-positive boxes, in image pixels.
    pub fp_size_log_mean: f64,
    pub fp_size_log_sigma: f64,
    pub seed: u64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self {
            s50: 24.0,
            slope: 6.0,
            loc_sigma_frac: 0.05,
            score_tp_mean: 0.7,
            score_fp_mean: 0.35,
            score_sigma: 0.1,
            fp_rate_per_megapixel: 2.0,
            fp_size_log_mean: 14f64.ln(),
            fp_size_log_sigma: 0.4,
            seed: 0,
        }
    }
}

impl DetectorModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.s50 > 0.0 && self.slope > 0.0) {
            return Err(Error::config("detector s50 and slope must be > 0"));
        }
        if !(0.0..0.5).contains(&self.loc_sigma_frac) {
            return Err(Error::config("loc_sigma_frac must be in [0, 0.5)"));
        }
        if !(self.fp_rate_per_megapixel >= 0.0 && self.fp_rate_per_megapixel.is_finite()) {
            return Err(Error::config("fp_rate_per_megapixel must be >= 0"));
        }
        if !(self.score_sigma >= 0.0 && self.fp_size_log_sigma >= 0.0) {
            return Err(Error::config("score and size sigmas must be >= 0"));
        }
        Ok(())
    }

    /// Probability of detecting an object whose shorter side appears as
    /// `apparent` pixels.
    pub fn detection_probability(&self, apparent: f64) -> f64 {
        1.0 / (1.0 + (-(apparent - self.s50) / self.slope).exp())
    }
}

/// One detector pass: which part of the image is looked at and how much it
/// is magnified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct View {
    pub image_id: ImageId,
    pub scale: f64,
    pub bounds: BoundingBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image_w: u32,
    pub image_h: u32,
    pub ground_truth: Vec<GroundTruth>,
    /// Cluster index of each ground truth (`None` for background vehicles).
    pub cluster_of: Vec<Option<usize>>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn object_rng(seed: u64, annotation_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(annotation_id);
    rng
}

fn view_rng(seed: u64, view: &View) -> ChaCha8Rng {
    let mut key = splitmix64(seed ^ 0x5EED_F00D);
    for v in view.bounds.to_array().into_iter().chain([view.scale]) {
        key = splitmix64(key ^ v.to_bits());
    }
    key = splitmix64(key ^ view.image_id);
    ChaCha8Rng::seed_from_u64(key)
}

fn lognormal(mu: f64, sigma: f64) -> LogNormal<f64> {
    LogNormal::new(mu, sigma).expect("validated log-normal parameters")
}

/// Draws an oriented vehicle box of the given shorter side around a center.
fn vehicle_box(rng: &mut ChaCha8Rng, cx: f64, cy: f64, short: f64, aspect: (f64, f64)) -> (f64, f64, f64, f64) {
    let a = if aspect.0 < aspect.1 {
        rng.random_range(aspect.0..aspect.1)
    } else {
        aspect.0
    };
    let long = short * a;
    let (w, h) = if rng.random_bool(0.5) { (long, short) } else { (short, long) };
    (cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
}

/// Generates the ground truth of a scene. Clustered vehicles come first, in
/// cluster order, then background vehicles; annotation ids count from 1.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let (iw, ih) = (spec.image_w as f64, spec.image_h as f64);
    let image = BoundingBox::new(0.0, 0.0, iw, ih)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let size = lognormal(spec.size_log_mean, spec.size_log_sigma);
    let aspect = (spec.aspect_min, spec.aspect_max);

    let mut centers: Vec<(f64, f64, Option<usize>)> = Vec::new();
    for (k, c) in spec.clusters.iter().enumerate() {
        let spread = Normal::new(0.0, c.spread_sigma).expect("validated spread");
        for _ in 0..c.count {
            let cx = (c.center[0] + spread.sample(&mut rng)).clamp(0.0, iw);
            let cy = (c.center[1] + spread.sample(&mut rng)).clamp(0.0, ih);
            centers.push((cx, cy, Some(k)));
        }
    }
    for _ in 0..spec.background_count {
        centers.push((rng.random_range(0.0..iw), rng.random_range(0.0..ih), None));
    }

    let mut ground_truth = Vec::new();
    let mut cluster_of = Vec::new();
    for (cx, cy, cluster) in centers {
        let short = size.sample(&mut rng);
        let (x1, y1, x2, y2) = vehicle_box(&mut rng, cx, cy, short, aspect);
        let Some(b) = BoundingBox::from_corners(x1, y1, x2, y2).and_then(|b| clip(&b, &image))
        else {
            continue;
        };
        if b.w() < 1.0 || b.h() < 1.0 {
            continue;
        }
        ground_truth.push(GroundTruth {
            annotation_id: ground_truth.len() as u64 + 1,
            image_id: SIM_IMAGE_ID,
            category_id: SIM_CATEGORY,
            bbox: b,
        });
        cluster_of.push(cluster);
    }
    Ok(Scene {
        image_w: spec.image_w,
        image_h: spec.image_h,
        ground_truth,
        cluster_of,
    })
}

/// Runs the pseudo-detector over one view. Output boxes are in image
/// coordinates and lie inside `view.bounds`.
pub fn simulate_detector(
    gts: &[GroundTruth],
    model: &DetectorModel,
    view: &View,
) -> Result<Vec<Detection>> {
    model.validate()?;
    if !(view.scale > 0.0 && view.scale.is_finite()) {
        return Err(Error::input(format!("view scale {} must be > 0", view.scale)));
    }
    let score = |rng: &mut ChaCha8Rng, mean: f64| {
        let z: f64 = rng.sample(StandardNormal);
        (mean + model.score_sigma * z).clamp(0.01, 1.0)
    };

    let mut out = Vec::new();
    for g in gts {
        let (cx, cy) = g.bbox.center();
        if !view.bounds.contains_point(cx, cy) {
            continue;
        }
        let Some(visible) = clip(&g.bbox, &view.bounds) else {
            continue;
        };
        let mut rng = object_rng(model.seed, g.annotation_id);
        let u: f64 = rng.random();
        let noise: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let s = score(&mut rng, model.score_tp_mean);

        let apparent = visible.w().min(visible.h()) * view.scale;
        if u >= model.detection_probability(apparent) {
            continue;
        }
        // std of loc_sigma_frac * apparent viewed pixels, in image pixels
        let sigma = model.loc_sigma_frac * apparent / view.scale;
        let noisy = BoundingBox::from_corners(
            visible.x() + sigma * noise[0],
            visible.y() + sigma * noise[1],
            visible.right() + sigma * noise[2],
            visible.bottom() + sigma * noise[3],
        );
        if let Some(bbox) = noisy.and_then(|b| clip(&b, &view.bounds)) {
            out.push(Detection::new(g.image_id, g.category_id, bbox, s)?);
        }
    }

    let viewed_mpx = view.bounds.area() * view.scale * view.scale / 1e6;
    let lambda = model.fp_rate_per_megapixel * viewed_mpx;
    if lambda > 0.0 {
        let mut rng = view_rng(model.seed, view);
        let n = Poisson::new(lambda).expect("positive rate").sample(&mut rng) as usize;
        let size = lognormal(model.fp_size_log_mean, model.fp_size_log_sigma);
        let b = &view.bounds;
        for _ in 0..n {
            let cx = rng.random_range(b.x()..b.right());
            let cy = rng.random_range(b.y()..b.bottom());
            let short = size.sample(&mut rng);
            let (x1, y1, x2, y2) = vehicle_box(&mut rng, cx, cy, short, (1.0, 2.5));
            let s = score(&mut rng, model.score_fp_mean);
            let boxed = BoundingBox::from_corners(x1, y1, x2, y2).and_then(|fp| clip(&fp, b));
            if let Some(bbox) = boxed {
                out.push(Detection::new(view.image_id, SIM_CATEGORY, bbox, s)?);
            }
        }
    }
    Ok(out)
}

/// Everything produced by one simulated rough-then-fine run.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub scene: Scene,
    pub coarse_scale: f64,
    /// Raw whole-image detections.
    pub coarse: Vec<Detection>,
    pub heatmap: Heatmap,
    pub proposal: Proposal,
    /// Per-crop detections in crop-canvas coordinates.
    pub fine: Vec<(CropPlan, Vec<Detection>)>,
    pub coarse_only: Vec<Detection>,
    pub fused: Vec<FusedDetection>,
    pub coarse_eval: EvalResult,
    pub fused_eval: EvalResult,
}

impl PipelineRun {
    pub fn fused_detections(&self) -> Vec<Detection> {
        self.fused.iter().map(|f| f.detection).collect()
    }

    /// Fraction of clustered vehicles whose center lies in some crop source.
    pub fn cluster_coverage(&self) -> f64 {
        let clustered: Vec<&GroundTruth> = self
            .scene
            .ground_truth
            .iter()
            .zip(&self.scene.cluster_of)
            .filter(|(_, c)| c.is_some())
            .map(|(g, _)| g)
            .collect();
        if clustered.is_empty() {
            return 1.0;
        }
        let covered = clustered
            .iter()
            .filter(|g| {
                let (cx, cy) = g.bbox.center();
                self.proposal
                    .plans
                    .iter()
                    .any(|p| p.source.contains_point(cx, cy))
            })
            .count();
        covered as f64 / clustered.len() as f64
    }
}

/// Non-simulation settings of a pipeline run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PipelineSettings {
    pub scm: ScmConfig,
    pub heatmap: HeatmapConfig,
    pub fusion: FusionConfig,
    pub eval: EvalParams,
}

/// Coarse pass, heatmap, crop proposal, fine passes, fusion and evaluation of
/// both the coarse-only and the fused detections.
pub fn run_pipeline(
    scene_spec: &SceneSpec,
    model: &DetectorModel,
    settings: &PipelineSettings,
) -> Result<PipelineRun> {
    let scm_cfg = &settings.scm;
    scm_cfg.validate()?;
    settings.heatmap.validate()?;
    settings.fusion.validate()?;

    let scene = generate_scene(scene_spec)?;
    let (iw, ih) = (scene.image_w as f64, scene.image_h as f64);
    let vocab = Vocabulary::new([SIM_IMAGE_ID], [SIM_CATEGORY]);

    let started = Instant::now();
    let coarse_scale = (scm_cfg.target_w as f64 / iw).min(scm_cfg.target_h as f64 / ih);
    let whole = View {
        image_id: SIM_IMAGE_ID,
        scale: coarse_scale,
        bounds: BoundingBox::new(0.0, 0.0, iw, ih)?,
    };
    let coarse = simulate_detector(&scene.ground_truth, model, &whole)?;
    let coarse_only: Vec<Detection> = fuse_tagged(&coarse, &[], &settings.fusion, iw, ih)?
        .into_iter()
        .map(|f| f.detection)
        .collect();
    let coarse_seconds = started.elapsed().as_secs_f64();

    let heatmap = splat(&coarse, scene.image_w, scene.image_h, &settings.heatmap)?;
    let proposal = propose_detailed(
        &heatmap,
        scm_cfg,
        settings.heatmap.binarize_threshold,
        scene.image_w,
        scene.image_h,
    )?;
    let mut fine = Vec::with_capacity(proposal.plans.len());
    for plan in &proposal.plans {
        let view = View {
            image_id: SIM_IMAGE_ID,
            scale: plan.scale,
            bounds: plan.source,
        };
        let global = simulate_detector(&scene.ground_truth, model, &view)?;
        fine.push((*plan, global.iter().map(|d| to_crop(d, plan)).collect()));
    }
    let fused = fuse_tagged(&coarse, &fine, &settings.fusion, iw, ih)?;
    let total_seconds = started.elapsed().as_secs_f64();

    let fused_dets: Vec<Detection> = fused.iter().map(|f| f.detection).collect();
    let mut coarse_eval = coco_ap(&coarse_only, &scene.ground_truth, &vocab, &settings.eval)?;
    let mut fused_eval = coco_ap(&fused_dets, &scene.ground_truth, &vocab, &settings.eval)?;
    coarse_eval.per_image_seconds = Some(coarse_seconds);
    fused_eval.per_image_seconds = Some(total_seconds);

    Ok(PipelineRun {
        scene,
        coarse_scale,
        coarse,
        heatmap,
        proposal,
        fine,
        coarse_only,
        fused,
        coarse_eval,
        fused_eval,
    })
}
