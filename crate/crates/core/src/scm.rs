//! Segmentation clustering: turns a density heatmap into a small number of
//! letterboxed crop plans around the densest regions.
//!
//! The stages are exposed individually so they can be tested and scripted on
//! their own:
//!
//! 1. [`binarize`](crate::heatmap::binarize) the heatmap and zero every
//!    sub-threshold cell,
//! 2. sum the masked heatmap over a coarse grid ([`grid_densities`]) and keep
//!    the `top_k` densest cells ([`select_topk`]),
//! 3. merge eight-connected cells into regions ([`merge_8connected`]) and map
//!    them back to image pixels ([`region_bbox`]),
//! 4. keep the `crop_budget` heaviest regions ([`pick_crops`]) and compute an
//!    aspect-preserving resize for each ([`plan_crop`]).
//!
//! [`propose`] runs the whole chain.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::heatmap::{binarize, grid_densities, grid_window, DensityGrid, Heatmap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScmConfig {
    pub grid_x: usize,
    pub grid_y: usize,
    pub top_k: usize,
    /// Maximum number of crops per image. Zero disables fine detection.
    pub crop_budget: usize,
    /// Pixels added around each merged region before clipping to the image.
    pub pad: f64,
    pub target_w: u32,
    pub target_h: u32,
    pub min_region_cells: usize,
}

impl Default for ScmConfig {
    fn default() -> Self {
        Self {
            grid_x: 16,
            grid_y: 10,
            top_k: 30,
            crop_budget: 2,
            pad: 16.0,
            target_w: 1024,
            target_h: 640,
            min_region_cells: 1,
        }
    }
}

impl ScmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_x == 0 || self.grid_y == 0 {
            return Err(Error::config("grid dimensions must be positive"));
        }
        if self.top_k == 0 || self.top_k > self.grid_x * self.grid_y {
            return Err(Error::config(format!(
                "top_k {} must be in 1..={}",
                self.top_k,
                self.grid_x * self.grid_y
            )));
        }
        if self.target_w == 0 || self.target_h == 0 {
            return Err(Error::config("crop target dimensions must be positive"));
        }
        if !(self.pad >= 0.0 && self.pad.is_finite()) {
            return Err(Error::config("pad must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Grid cell index: column `i`, row `j`. Ordered row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridCell {
    pub i: usize,
    pub j: usize,
}

impl GridCell {
    pub fn new(i: usize, j: usize) -> Self {
        Self { i, j }
    }

    pub fn is_adjacent(&self, other: &GridCell) -> bool {
        self != other && self.i.abs_diff(other.i) <= 1 && self.j.abs_diff(other.j) <= 1
    }
}

impl Ord for GridCell {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.j, self.i).cmp(&(other.j, other.i))
    }
}

impl PartialOrd for GridCell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRegion {
    /// Member cells, sorted row-major.
    pub cells: Vec<GridCell>,
    pub aggregate_density: f64,
    /// Padded pixel hull of the member cells, clipped to the image.
    pub bbox_px: BoundingBox,
}

/// Sizes needed to map grid cells back to image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridGeometry {
    pub grid_x: usize,
    pub grid_y: usize,
    pub heatmap_w: usize,
    pub heatmap_h: usize,
    pub downsample: u32,
    pub image_w: u32,
    pub image_h: u32,
}

/// The `top_k` densest cells with positive density, densest first.
/// Ties go to the earlier cell in row-major order.
pub fn select_topk(densities: &DensityGrid, top_k: usize) -> Vec<GridCell> {
    let mut cells: Vec<(GridCell, f64)> = (0..densities.grid_y())
        .flat_map(|j| (0..densities.grid_x()).map(move |i| GridCell::new(i, j)))
        .map(|c| (c, densities.get(c.i, c.j)))
        .filter(|&(_, d)| d > 0.0)
        .collect();
    // stable sort keeps row-major order among equal densities
    cells.sort_by(|a, b| b.1.total_cmp(&a.1));
    cells.truncate(top_k);
    cells.into_iter().map(|(c, _)| c).collect()
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Partitions `cells` into maximal eight-connected components.
///
/// Duplicates are collapsed. Each component is sorted row-major and
/// components are ordered by their first cell.
pub fn merge_8connected(cells: &[GridCell]) -> Vec<Vec<GridCell>> {
    let mut unique = cells.to_vec();
    unique.sort();
    unique.dedup();

    let index: HashMap<GridCell, usize> = unique.iter().enumerate().map(|(n, &c)| (c, n)).collect();
    let mut parent: Vec<usize> = (0..unique.len()).collect();
    for (n, c) in unique.iter().enumerate() {
        // forward half of the neighbourhood is enough for an undirected union
        let forward = [(1isize, 0isize), (-1, 1), (0, 1), (1, 1)];
        for (di, dj) in forward {
            let (Some(i), Some(j)) = (c.i.checked_add_signed(di), c.j.checked_add_signed(dj)) else {
                continue;
            };
            if let Some(&m) = index.get(&GridCell::new(i, j)) {
                let (a, b) = (find(&mut parent, n), find(&mut parent, m));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }

    let mut groups: Vec<Vec<GridCell>> = Vec::new();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    for (n, &c) in unique.iter().enumerate() {
        let root = find(&mut parent, n);
        let g = *slot.entry(root).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(c);
    }
    groups
}

/// Completes a merged region: pixel hull of its grid windows, padded and
/// clipped to the image, plus its summed density.
pub fn region_bbox(
    cells: &[GridCell],
    densities: &DensityGrid,
    geom: &GridGeometry,
    pad: f64,
) -> Result<ClusterRegion> {
    if cells.is_empty() {
        return Err(Error::input("cannot build a region from zero cells"));
    }
    let mut cells = cells.to_vec();
    cells.sort();
    let (mut c0, mut c1, mut r0, mut r1) = (usize::MAX, 0, usize::MAX, 0);
    for c in &cells {
        if c.i >= geom.grid_x || c.j >= geom.grid_y {
            return Err(Error::input(format!("cell ({}, {}) outside the grid", c.i, c.j)));
        }
        let (a, b) = grid_window(c.i, geom.heatmap_w, geom.grid_x);
        let (p, q) = grid_window(c.j, geom.heatmap_h, geom.grid_y);
        c0 = c0.min(a);
        c1 = c1.max(b);
        r0 = r0.min(p);
        r1 = r1.max(q);
    }
    let r = geom.downsample as f64;
    let (iw, ih) = (geom.image_w as f64, geom.image_h as f64);
    let x0 = (c0 as f64 * r - pad).max(0.0);
    let y0 = (r0 as f64 * r - pad).max(0.0);
    let x1 = (c1 as f64 * r + pad).min(iw);
    let y1 = (r1 as f64 * r + pad).min(ih);
    let bbox_px = BoundingBox::from_corners(x0, y0, x1, y1)
        .ok_or_else(|| Error::input("region does not overlap the image"))?;
    let aggregate_density = cells.iter().map(|c| densities.get(c.i, c.j)).sum();
    Ok(ClusterRegion {
        cells,
        aggregate_density,
        bbox_px,
    })
}

/// Keeps at most `budget` regions, heaviest first. Regions smaller than
/// `min_region_cells` are dropped before ranking; ties prefer more cells,
/// then the earlier minimum cell.
pub fn pick_crops(
    regions: &[ClusterRegion],
    budget: usize,
    min_region_cells: usize,
) -> Vec<ClusterRegion> {
    let mut kept: Vec<ClusterRegion> = regions
        .iter()
        .filter(|r| r.cells.len() >= min_region_cells)
        .cloned()
        .collect();
    kept.sort_by(|a, b| {
        b.aggregate_density
            .total_cmp(&a.aggregate_density)
            .then_with(|| b.cells.len().cmp(&a.cells.len()))
            .then_with(|| a.cells.iter().min().cmp(&b.cells.iter().min()))
    });
    kept.truncate(budget);
    kept
}

/// Letterbox mapping from an image region onto the detector canvas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CropPlanRecord", into = "CropPlanRecord")]
pub struct CropPlan {
    pub source: BoundingBox,
    pub scale: f64,
    pub pad_x: f64,
    pub pad_y: f64,
    pub target_w: u32,
    pub target_h: u32,
}

#[derive(Serialize, Deserialize)]
struct CropPlanRecord {
    source: BoundingBox,
    scale: f64,
    pad_x: f64,
    pad_y: f64,
    target: [u32; 2],
}

impl From<CropPlan> for CropPlanRecord {
    fn from(p: CropPlan) -> Self {
        Self {
            source: p.source,
            scale: p.scale,
            pad_x: p.pad_x,
            pad_y: p.pad_y,
            target: [p.target_w, p.target_h],
        }
    }
}

impl TryFrom<CropPlanRecord> for CropPlan {
    type Error = Error;

    fn try_from(r: CropPlanRecord) -> Result<Self> {
        let plan = CropPlan {
            source: r.source,
            scale: r.scale,
            pad_x: r.pad_x,
            pad_y: r.pad_y,
            target_w: r.target[0],
            target_h: r.target[1],
        };
        plan.validate()?;
        Ok(plan)
    }
}

impl CropPlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::input(format!("crop scale {} must be > 0", self.scale)));
        }
        if !(self.pad_x >= 0.0 && self.pad_y >= 0.0) {
            return Err(Error::input("crop pads must be >= 0"));
        }
        if self.target_w == 0 || self.target_h == 0 {
            return Err(Error::input("crop target dimensions must be positive"));
        }
        let fit_w = self.scale * self.source.w() + 2.0 * self.pad_x;
        let fit_h = self.scale * self.source.h() + 2.0 * self.pad_y;
        if (fit_w - self.target_w as f64).abs() > 1.0 || (fit_h - self.target_h as f64).abs() > 1.0 {
            return Err(Error::input(format!(
                "crop plan maps to {fit_w:.2}x{fit_h:.2}, not the {}x{} target",
                self.target_w, self.target_h
            )));
        }
        Ok(())
    }
}

/// Aspect-preserving fit of `source` into the target canvas, centered on the
/// slack axis.
pub fn plan_crop(source: &BoundingBox, target_w: u32, target_h: u32) -> Result<CropPlan> {
    if target_w == 0 || target_h == 0 {
        return Err(Error::input("crop target dimensions must be positive"));
    }
    let (tw, th) = (target_w as f64, target_h as f64);
    let sx = tw / source.w();
    let sy = th / source.h();
    let (scale, pad_x, pad_y) = if sx <= sy {
        (sx, 0.0, ((th - sx * source.h()) / 2.0).max(0.0))
    } else {
        (sy, ((tw - sy * source.w()) / 2.0).max(0.0), 0.0)
    };
    Ok(CropPlan {
        source: *source,
        scale,
        pad_x,
        pad_y,
        target_w,
        target_h,
    })
}

/// Everything [`propose`] computes, for reporting and debugging.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub densities: DensityGrid,
    pub selected: Vec<GridCell>,
    /// All merged regions, in [`merge_8connected`] order.
    pub regions: Vec<ClusterRegion>,
    /// The regions that received a crop, heaviest first.
    pub picked: Vec<ClusterRegion>,
    pub plans: Vec<CropPlan>,
}

pub fn propose_detailed(
    h: &Heatmap,
    cfg: &ScmConfig,
    tau: f64,
    image_w: u32,
    image_h: u32,
) -> Result<Proposal> {
    cfg.validate()?;
    let expected = Heatmap::dims_for_image(image_w, image_h, h.downsample());
    if (h.width(), h.height()) != expected {
        return Err(Error::input(format!(
            "heatmap is {}x{} but a {image_w}x{image_h} image at downsample {} needs {}x{}",
            h.width(),
            h.height(),
            h.downsample(),
            expected.0,
            expected.1
        )));
    }
    let mask = binarize(h, tau)?;
    let densities = grid_densities(&h.masked(&mask)?, cfg.grid_x, cfg.grid_y)?;
    let selected = select_topk(&densities, cfg.top_k);
    let geom = GridGeometry {
        grid_x: cfg.grid_x,
        grid_y: cfg.grid_y,
        heatmap_w: h.width(),
        heatmap_h: h.height(),
        downsample: h.downsample(),
        image_w,
        image_h,
    };
    let regions = merge_8connected(&selected)
        .iter()
        .map(|cells| region_bbox(cells, &densities, &geom, cfg.pad))
        .collect::<Result<Vec<_>>>()?;
    let picked = pick_crops(&regions, cfg.crop_budget, cfg.min_region_cells);
    let plans = picked
        .iter()
        .map(|r| plan_crop(&r.bbox_px, cfg.target_w, cfg.target_h))
        .collect::<Result<Vec<_>>>()?;
    Ok(Proposal {
        densities,
        selected,
        regions,
        picked,
        plans,
    })
}

/// Runs the full clustering chain and returns at most `cfg.crop_budget`
/// crop plans.
pub fn propose(
    h: &Heatmap,
    cfg: &ScmConfig,
    tau: f64,
    image_w: u32,
    image_h: u32,
) -> Result<Vec<CropPlan>> {
    Ok(propose_detailed(h, cfg, tau, image_w, image_h)?.plans)
}
