//! Shared fixtures for the benchmarks.

use facecsr::features::{FeatureConfig, HogConfig, LbpConfig};
use facecsr::geometry::shape_bbox;
use facecsr::io::synth::{generate_synthetic, SyntheticFaceSpec, SyntheticSample};
use facecsr::markup::Layout;
use facecsr::regression::ShapeSample;

pub fn faces(count: usize, seed: u64) -> Vec<SyntheticSample> {
    generate_synthetic(&SyntheticFaceSpec::for_layout(Layout::SemiFrontal), count, seed).expect("synthetic faces")
}

/// Training samples started from the tight box of their own landmarks.
pub fn shape_samples(count: usize, seed: u64) -> Vec<ShapeSample> {
    faces(count, seed)
        .into_iter()
        .map(|s| ShapeSample {
            init_box: shape_bbox(&s.shape).expect("non-degenerate shape"),
            image: s.image,
            shape: s.shape,
        })
        .collect()
}

/// The lean feature set used by the desk config.
pub fn desk_features() -> FeatureConfig {
    FeatureConfig {
        patch_size: 24,
        scales: vec![1.0],
        hog: HogConfig { cells: 2, bins: 8, signed: false },
        lbp: LbpConfig { radius: 1, bins: 59 },
        context: None,
        ..FeatureConfig::default()
    }
}
