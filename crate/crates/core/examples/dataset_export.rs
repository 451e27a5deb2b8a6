//! Writes the synthetic glyphs as an alphabet/character PNG tree, loads the
//! tree back the way an Omniglot download is loaded, and builds rotated
//! classes.
//!
//! cargo run --release --example dataset_export -- /tmp/glyphs

use std::path::PathBuf;

use ma3::data::{export_png, load_image_directory, make_synthetic};

fn main() -> ma3::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("ma3-glyphs"));
    let ds = make_synthetic(12, 5, 28, 0)?;
    export_png(&ds, &out)?;
    println!("wrote {} images to {}", ds.num_images(), out.display());

    let loaded = load_image_directory(&out, 28, 28, false, 5)?;
    let max_err = ds
        .classes
        .iter()
        .zip(&loaded.classes)
        .flat_map(|((_, a), (_, b))| a.iter().zip(b))
        .flat_map(|(a, b)| a.data.iter().zip(&b.data).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max);
    println!(
        "reloaded {} classes, max 8-bit quantization error {max_err:.4}",
        loaded.num_classes()
    );
    for (id, _) in loaded.classes.iter().take(3) {
        println!("  {id}");
    }
    let rotated = loaded.with_rotated_classes()?;
    println!("with rotated classes: {} classes", rotated.num_classes());
    Ok(())
}
