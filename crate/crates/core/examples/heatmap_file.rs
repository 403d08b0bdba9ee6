//! Writes a heatmap in the SCMH binary format, reads it back and shows how a
//! corrupted file is reported.
//!
//! ```bash
//! cargo run --example heatmap_file
//! ```

use scmkit::geometry::BoundingBox;
use scmkit::heatmap::{load_heatmap, save_heatmap, splat, Heatmap, HeatmapConfig};

fn main() -> anyhow::Result<()> {
    let boxes = [BoundingBox::new(40.0, 40.0, 24.0, 24.0)?, BoundingBox::new(300.0, 200.0, 60.0, 30.0)?];
    let h = splat(&boxes, 500, 375, &HeatmapConfig::default())?;

    let dir = std::env::temp_dir().join("scmkit-heatmap-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("example.scmh");
    save_heatmap(&h, &path)?;
    let back = load_heatmap(&path)?;
    println!(
        "{} -> {}x{} cells, {} bytes, round trip {}",
        path.display(),
        back.width(),
        back.height(),
        std::fs::metadata(&path)?.len(),
        if back == h { "exact" } else { "differs" }
    );

    let mut bytes = h.to_bytes();
    bytes.truncate(bytes.len() - 3);
    match Heatmap::from_bytes(&bytes) {
        Ok(_) => println!("truncated file loaded?"),
        Err(e) => println!("truncated file: {e}"),
    }
    Ok(())
}
