//! Write a synthetic slide as a DZI pyramid plus ASAP XML, then reopen it from disk.
//!
//! `cargo run --release --example generate_slide -- [out_dir]`

use histogym::annotations::AnnotationSet;
use histogym::pyramid::VirtualSlide;
use histogym::rollout::generate_to_dir;

fn main() -> histogym::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "synthetic_slide".into());
    let (files, slide, lesions) = generate_to_dir(42, 2048, 128, 2, &out)?;
    println!("wrote {} and {}", files.descriptor.display(), files.annotations.display());

    let reopened = VirtualSlide::open_dzi(&files.descriptor)?;
    let g = reopened.geometry();
    println!(
        "{}x{} px, {} levels, usable {}..={}",
        g.base_width,
        g.base_height,
        g.level_count,
        g.coarsest_usable_level(),
        g.finest_level()
    );
    assert_eq!(reopened.identity_hash()?, slide.identity_hash()?);

    let parsed = AnnotationSet::from_path(&files.annotations)?;
    assert_eq!(parsed.polygons, lesions.polygons);
    for p in &parsed.polygons {
        let (cx, cy) = p.centroid();
        println!("{:<14} area {:>10.0}  centroid ({cx:.0}, {cy:.0})", p.label, p.area());
    }
    Ok(())
}
