//! Renders the toysprites dataset, writes it to disk and reads it back.
//!
//! ```text
//! cargo run --release --example generate_dataset -- [output dir] [side]
//! ```

use std::path::PathBuf;

use dava_lab::synthdata::{build_toysprites, GroundTruthDataset, ToySpritesConfig};

fn main() -> dava_lab::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map_or_else(|| std::env::temp_dir().join("toysprites"), PathBuf::from);
    let side = args.next().map_or(32, |s| s.parse().expect("side"));

    let dataset = build_toysprites(&ToySpritesConfig { side, ..Default::default() })?;
    dataset.save(&out)?;
    let loaded = GroundTruthDataset::load(&out)?;
    assert_eq!(loaded.len(), dataset.len());

    println!("{} images of {} in {}", loaded.len(), loaded.shape(), out.display());
    for f in loaded.space().factors() {
        println!("  {:<12} {} values", f.name, f.values.len());
    }
    let tuple = vec![1, 2, 3, 4, 0];
    let img = loaded.render(&tuple)?;
    let lit = img.iter().filter(|&&p| p > 0.0).count();
    println!("factor tuple {tuple:?} lights {lit} pixels");
    Ok(())
}
