//! Scores the bundled three-image fixture with COCO-style AP and prints the
//! per-category breakdown.
//!
//! ```bash
//! cargo run --example evaluate_coco
//! ```

use std::path::Path;

use scmkit::eval::{coco_ap, format_table, EvalParams};
use scmkit::io::{load_dataset, load_results};

fn main() -> anyhow::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden");
    let gt = load_dataset(dir.join("annotations.json"))?;
    let dets = load_results(dir.join("results.json"))?;
    println!("{} images, {} objects, {} detections", gt.images.len(), gt.annotations.len(), dets.len());

    let all = coco_ap(&dets, &gt.annotations, &gt.vocabulary(), &EvalParams::default())?;
    let one_each = EvalParams { max_dets: Some(1), ..EvalParams::default() };
    let capped = coco_ap(&dets, &gt.annotations, &gt.vocabulary(), &one_each)?;
    print!("{}", format_table(&[("all", &all), ("maxDets=1", &capped)]));
    for (cat, ap) in &all.per_category {
        println!("category {cat}: AP {:.3}  AP50 {:.3}  AP75 {:.3}", ap.ap, ap.ap50, ap.ap75);
    }
    Ok(())
}
