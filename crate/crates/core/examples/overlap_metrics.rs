//! IoU, GIoU and class-wise NMS on a few hand-picked boxes.
//!
//! ```bash
//! cargo run --example overlap_metrics
//! ```

use scmkit::geometry::{giou, iou, nms, BoundingBox, Detection};

fn main() -> anyhow::Result<()> {
    let a = BoundingBox::new(0.0, 0.0, 10.0, 10.0)?;
    for (label, b) in [
        ("same box", a),
        ("half shifted", BoundingBox::new(5.0, 0.0, 10.0, 10.0)?),
        ("touching", BoundingBox::new(10.0, 0.0, 10.0, 10.0)?),
        ("far away", BoundingBox::new(100.0, 100.0, 10.0, 10.0)?),
    ] {
        println!("{label:>12}: IoU {:.3}  GIoU {:+.3}", iou(&a, &b), giou(&a, &b));
    }

    let det = |cat, x, s| Detection::new(1, cat, BoundingBox::new(x, 0.0, 10.0, 10.0).unwrap(), s).unwrap();
    let dets = [det(1, 0.0, 0.9), det(1, 1.0, 0.8), det(2, 1.0, 0.7), det(1, 30.0, 0.6)];
    let kept = nms(&dets, 0.5)?;
    println!("NMS at 0.5 keeps {} of {}:", kept.len(), dets.len());
    for d in kept {
        println!("  category {} at x={} score {}", d.category_id, d.bbox.x(), d.score);
    }
    Ok(())
}
