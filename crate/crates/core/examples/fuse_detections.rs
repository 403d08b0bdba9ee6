//! Maps detections from a letterboxed crop back to the full image and merges
//! them with the whole-image pass.
//!
//! ```bash
//! cargo run --example fuse_detections
//! ```

use scmkit::fusion::{fuse_tagged, to_crop, FusionConfig};
use scmkit::geometry::{BoundingBox, Detection};
use scmkit::scm::plan_crop;

fn main() -> anyhow::Result<()> {
    let (iw, ih) = (2000.0, 1500.0);
    let plan = plan_crop(&BoundingBox::new(400.0, 300.0, 320.0, 320.0)?, 1024, 640)?;
    println!("crop {:?}: scale {}, pad ({}, {})", plan.source.to_array(), plan.scale, plan.pad_x, plan.pad_y);

    let car = |x, y, s| Detection::new(1, 1, BoundingBox::new(x, y, 14.0, 8.0).unwrap(), s).unwrap();
    // the coarse pass saw one car of the cluster
    let coarse = vec![car(500.0, 400.0, 0.55)];
    // the fine pass sees it again plus two more, one cut by the crop edge
    let fine: Vec<Detection> = [car(500.5, 400.0, 0.82), car(540.0, 420.0, 0.77), car(712.0, 500.0, 0.6)]
        .iter()
        .map(|d| to_crop(d, &plan))
        .collect();

    for f in fuse_tagged(&coarse, &[(plan, fine)], &FusionConfig::default(), iw, ih)? {
        println!("{:?} score {:.2} from {:?}", f.detection.bbox.to_array(), f.detection.score, f.origin);
    }
    Ok(())
}
