use facecsr::bbox_regression::{box_features, BoxFeatureConfig};
use facecsr::features::{hog_patch, lbp_patch, FeatureConfig, HogConfig, LbpConfig};
use facecsr::geometry::{BoundingBox, Point, Shape};
use facecsr::image::GrayImage;
use facecsr::io::config::{emit_config, parse_config, Config};
use facecsr::io::pts::{format_pts, parse_pts};
use facecsr::markup::Layout;
use facecsr::regression::{cascade_trajectory, train_cascade_traced, train_weak, ShapeSample, WeakRegressor};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noise_image(w: usize, h: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GrayImage::from_fn(w, h, |_, _| rng.random::<f64>())
}

#[test]
fn box_features_on_a_pixel_aligned_box_match_the_patch_descriptors() {
    // With the grid side equal to the box side every sample lands on a pixel,
    // so the box descriptor is the plain patch descriptor.
    let image = noise_image(60, 50, 11);
    let hog = HogConfig { cells: 3, bins: 7, signed: true };
    let lbp = LbpConfig { radius: 2, bins: 59 };
    let cfg = BoxFeatureConfig { canonical: 24, scales: vec![1.0], hog: hog.clone(), lbp: lbp.clone() };
    let bbox = BoundingBox::new(13.0, 9.0, 24.0, 24.0).unwrap();
    let got = box_features(&image, &bbox, &cfg).unwrap();

    let centre = (13.0 + 12.0, 9.0 + 12.0);
    let mut want = hog_patch(&image, centre, 24, &hog).unwrap();
    want.extend(lbp_patch(&image, centre, 24, &lbp).unwrap());
    assert_eq!(got.len(), cfg.dimension());
    for (i, (g, w)) in got.iter().zip(&want).enumerate() {
        assert!((g - w).abs() < 1e-12, "component {i}: {g} vs {w}");
    }
}

#[test]
fn box_features_clip_to_the_image() {
    let image = noise_image(40, 40, 5);
    let cfg = BoxFeatureConfig { canonical: 16, scales: vec![0.5, 1.0], ..Default::default() };
    let outside = BoundingBox::new(-10.0, -6.0, 30.0, 26.0).unwrap();
    let inside = BoundingBox::new(0.0, 0.0, 20.0, 20.0).unwrap();
    assert_eq!(box_features(&image, &outside, &cfg).unwrap(), box_features(&image, &inside, &cfg).unwrap());
}

fn small_features() -> FeatureConfig {
    FeatureConfig {
        patch_size: 12,
        scales: vec![1.0],
        relative_to: None,
        hog: HogConfig { cells: 1, bins: 6, signed: false },
        lbp: LbpConfig { radius: 1, bins: 59 },
        context: None,
        bias: false,
    }
}

#[test]
fn training_trace_matches_inference_trajectory() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let base = [(20.0, 22.0), (40.0, 22.0), (30.0, 32.0), (22.0, 42.0), (38.0, 42.0)];
    let samples: Vec<ShapeSample> = (0..12)
        .map(|i| {
            let image = noise_image(64, 64, 100 + i);
            let (dx, dy) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let shape = Shape::from_xy(&base.map(|(x, y)| (x + dx, y + dy))).unwrap();
            let init_box = BoundingBox::new(16.0 + rng.random_range(-2.0..2.0), 18.0, 28.0, 28.0).unwrap();
            ShapeSample { image, shape, init_box }
        })
        .collect();
    let (model, trace) = train_cascade_traced(&samples, 3, Some(1.0), &small_features()).unwrap();
    assert_eq!(trace.len(), 4);
    for (n, s) in samples.iter().enumerate() {
        let traj = cascade_trajectory(&model, &s.image, &s.init_box).unwrap();
        for (m, est) in traj.iter().enumerate() {
            for (a, b) in est.points().iter().zip(trace[m][n].points()) {
                assert!((a.x - b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9, "sample {n} stage {m}");
            }
        }
    }
}

#[test]
fn every_layout_round_trips_through_the_config_text() {
    for layout in [Layout::SemiFrontal, Layout::Profile] {
        let c = Config::default_for(layout);
        assert_eq!(parse_config(&emit_config(&c), "mem").unwrap(), c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pts_text_round_trips_to_six_decimals(coords in prop::collection::vec((-1e4..1e4f64, -1e4..1e4f64), 1..80)) {
        let shape = Shape::new(coords.iter().map(|&(x, y)| Point { x, y }).collect()).unwrap();
        let back = parse_pts(&format_pts(&shape), "mem").unwrap();
        prop_assert_eq!(back.len(), shape.len());
        for (a, b) in back.points().iter().zip(shape.points()) {
            prop_assert!((a.x - b.x).abs() <= 5e-7 + 1e-12 * b.x.abs());
            prop_assert!((a.y - b.y).abs() <= 5e-7 + 1e-12 * b.y.abs());
        }
    }

    #[test]
    fn pts_text_is_exact_on_eighths(coords in prop::collection::vec((-80000i32..80000, -80000i32..80000), 1..80)) {
        let shape = Shape::new(coords.iter().map(|&(x, y)| Point { x: x as f64 / 8.0, y: y as f64 / 8.0 }).collect()).unwrap();
        prop_assert_eq!(parse_pts(&format_pts(&shape), "mem").unwrap(), shape);
    }

    #[test]
    fn config_round_trips_after_edits(
        stages in 1usize..20,
        lambda in prop::option::of(1e-6..1e3f64),
        magnitude in 0.0..0.2f64,
        count in 1usize..30,
        seed in any::<u64>(),
        threshold in 0.01..0.5f64,
    ) {
        let mut c = Config::default_for(Layout::SemiFrontal);
        c.final_stages = stages;
        c.final_lambda = lambda;
        c.perturbation.magnitude = magnitude;
        c.perturbation.count = count;
        c.perturbation.seed = seed;
        c.auc_threshold = threshold;
        prop_assert_eq!(parse_config(&emit_config(&c), "mem").unwrap(), c);
    }

    #[test]
    fn ridge_solution_is_a_local_minimum(
        seed in any::<u64>(),
        n in 3usize..30,
        d in 1usize..12,
        lambda in 1e-3..10.0f64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let y: Vec<Vec<f64>> = (0..n).map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let w = train_weak(&x, &y, lambda).unwrap();
        let best = w.objective(&x, &y, lambda);
        for _ in 0..8 {
            let mut a = w.a.clone();
            let mut e = w.e.clone();
            a.iter_mut().for_each(|v| *v += rng.random_range(-1e-3..1e-3));
            e.iter_mut().for_each(|v| *v += rng.random_range(-1e-3..1e-3));
            let moved = WeakRegressor::new(a, e).unwrap().objective(&x, &y, lambda);
            prop_assert!(moved >= best - 1e-12 * best.max(1.0), "{moved} < {best}");
        }
    }
}
