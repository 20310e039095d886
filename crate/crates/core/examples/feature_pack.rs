//! Build a feature pack from a toy colour embedding and run the env on it.

use std::sync::Arc;

use histogym::env::{make_env, DiscreteAction, EnvConfig, ObservationMode};
use histogym::featurepack::FeaturePack;
use histogym::pyramid::{TileAddress, VirtualSlide};

/// Per-channel mean and standard deviation.
fn embed(bytes: &[u8]) -> Vec<f32> {
    (0..3)
        .flat_map(|c| {
            let v: Vec<f32> = bytes.iter().skip(c).step_by(3).map(|&b| b as f32 / 255.0).collect();
            let mean = v.iter().sum::<f32>() / v.len() as f32;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f32>() / v.len() as f32;
            [mean, var.sqrt()]
        })
        .collect()
}

fn main() -> histogym::Result<()> {
    let (slide, lesions) = VirtualSlide::generate_synthetic(42, 2048, 128, 1)?;
    let g = *slide.geometry();
    let mut records = Vec::new();
    for level in g.coarsest_usable_level()..g.finest_level() {
        let (cols, rows) = g.level_tiles(level);
        for row in 0..rows {
            for col in 0..cols {
                let addr = TileAddress::new(level, col, row);
                records.push((addr, embed(slide.read_tile(addr)?.bytes())));
            }
        }
    }
    let dir = std::env::temp_dir().join("histogym_feature_pack");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("slide.hfp");
    let pack = histogym::featurepack::build_pack(&path, records, 6, &slide.identity_hash()?, "colour-stats")?;
    println!("{} vectors over levels {:?} -> {}", pack.len(), pack.manifest().levels, path.display());

    // the finest level is left out on purpose: those lookups come back as missing
    let reopened = FeaturePack::open(&path)?;
    assert_eq!(reopened.len(), pack.len());
    let config = EnvConfig {
        observation_mode: ObservationMode::Features,
        feature_pack: Some(path),
        ..EnvConfig::default()
    };
    let mut env = make_env(Arc::new(slide), Arc::new(lesions), config)?;
    let (obs, _) = env.reset(Some(0))?;
    println!("reset: shape {:?} {:?}", obs.shape(), obs.normalized());
    for a in [DiscreteAction::ZoomIn, DiscreteAction::ZoomIn] {
        let s = env.step(a.into())?;
        println!(
            "{a:?}: level {} missing {} {:?}",
            s.info.level,
            s.info.missing_feature,
            s.observation.normalized()
        );
    }
    Ok(())
}
