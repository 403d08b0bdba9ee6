//! Splats a handful of detections into a center heatmap and walks the crop
//! proposal stages: grid densities, top-K cells, merged regions, crop plans.
//!
//! ```bash
//! cargo run --example propose_crops
//! ```

use scmkit::geometry::BoundingBox;
use scmkit::heatmap::{splat, HeatmapConfig};
use scmkit::scm::{propose_detailed, ScmConfig};

fn main() -> anyhow::Result<()> {
    let (iw, ih) = (1000, 750);
    // a parking lot in the upper left and one lone car
    let mut boxes = Vec::new();
    for row in 0..4 {
        for col in 0..6 {
            boxes.push(BoundingBox::new(120.0 + 22.0 * col as f64, 90.0 + 14.0 * row as f64, 16.0, 9.0)?);
        }
    }
    boxes.push(BoundingBox::new(820.0, 600.0, 18.0, 10.0)?);

    let hcfg = HeatmapConfig::default();
    let heatmap = splat(&boxes, iw, ih, &hcfg)?;
    println!("heatmap {}x{} (R = {}), max {:.2}", heatmap.width(), heatmap.height(), hcfg.downsample, heatmap.max());

    let cfg = ScmConfig::default();
    let p = propose_detailed(&heatmap, &cfg, hcfg.binarize_threshold, iw, ih)?;
    println!("masked mass {:.1} over {} grid cells", p.densities.total(), cfg.grid_x * cfg.grid_y);
    println!("top-{} cells merge into {} regions", p.selected.len(), p.regions.len());
    for (region, plan) in p.picked.iter().zip(&p.plans) {
        println!(
            "  {} cells, density {:.2} -> source {:?}, scale {:.2}, pad ({:.0}, {:.0})",
            region.cells.len(),
            region.aggregate_density,
            plan.source.to_array().map(|v| v.round()),
            plan.scale,
            plan.pad_x,
            plan.pad_y
        );
    }
    Ok(())
}
