//! Pose estimation from rough landmarks and pose normalisation.
//!
//! Semi-frontal faces are de-rotated when their roll exceeds a threshold;
//! profile faces looking right are mirrored so every profile looks left.

use crate::error::{Error, Result};
use crate::geometry::{apply_transform, BoundingBox, PlanarTransform, Shape};
use crate::image::{apply_transform_image, GrayImage};
use crate::markup::{Layout, LandmarkPermutation};
use crate::regression::{apply_cascade, CascadeModel};

/// Stage count of the rough landmarking cascade.
pub const ROUGH_STAGES: usize = 2;

// 0-based: nose bridge top (28) and nose tip (34) of the 68-point markup,
// landmarks 3 and 20 of the 39-point profile markup.
const NOSE_BRIDGE: usize = 27;
const NOSE_TIP: usize = 33;
const PROFILE_A: usize = 2;
const PROFILE_B: usize = 19;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum YawSide {
    Left,
    Right,
    NotApplicable,
}

impl YawSide {
    pub fn as_str(&self) -> &'static str {
        match self {
            YawSide::Left => "left",
            YawSide::Right => "right",
            YawSide::NotApplicable => "not-applicable",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseConfig {
    /// Semi-frontal faces with `|roll|` above this many degrees are rotated.
    pub roll_threshold: f64,
    /// Profile side rule: `right` when x of landmark 3 is below x of
    /// landmark 20. Setting this to false swaps the comparison.
    pub right_if_x3_less: bool,
}

impl Default for PoseConfig {
    fn default() -> Self {
        PoseConfig {
            roll_threshold: 45.0,
            right_if_x3_less: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseEstimate {
    pub layout: Layout,
    /// Degrees in (-180, 180]; zero for profile faces.
    pub roll: f64,
    /// True when the roll landmarks coincided.
    pub roll_degenerate: bool,
    pub side: YawSide,
    /// Normalisation applied to the image, possibly the identity.
    pub transform: PlanarTransform,
}

/// Runs the 2-stage rough cascade from `bbox`.
pub fn rough_landmarks(model: &CascadeModel, image: &GrayImage, bbox: &BoundingBox) -> Result<Shape> {
    if model.num_stages() != ROUGH_STAGES {
        return Err(Error::InvalidConfig(format!(
            "rough landmarking needs {ROUGH_STAGES} stages, model has {}",
            model.num_stages()
        )));
    }
    apply_cascade(model, image, bbox)
}

/// In-plane rotation from the nose bridge to the nose tip, in degrees.
///
/// Returns the angle and whether the two points coincided (angle 0 then).
pub fn roll_from_landmarks(shape: &Shape) -> Result<(f64, bool)> {
    if shape.len() != 68 {
        return Err(Error::InvalidInput(format!(
            "roll needs a 68-point shape, got {}",
            shape.len()
        )));
    }
    let (a, b) = (shape.point(NOSE_BRIDGE), shape.point(NOSE_TIP));
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    if dx == 0.0 && dy == 0.0 {
        log::warn!("nose bridge and tip coincide, assuming zero roll");
        return Ok((0.0, true));
    }
    let deg = dx.atan2(dy).to_degrees();
    Ok((if deg <= -180.0 { 180.0 } else { deg }, false))
}

/// Which way a 39-point profile face looks. Ties count as left.
pub fn yaw_side(shape: &Shape, cfg: &PoseConfig) -> Result<YawSide> {
    if shape.len() != 39 {
        return Err(Error::InvalidInput(format!(
            "yaw side needs a 39-point shape, got {}",
            shape.len()
        )));
    }
    let (x3, x20) = (shape.point(PROFILE_A).x, shape.point(PROFILE_B).x);
    let right = if cfg.right_if_x3_less { x3 < x20 } else { x3 > x20 };
    Ok(if right { YawSide::Right } else { YawSide::Left })
}

/// Estimates the pose of `rough` without touching any image.
pub fn estimate_pose(rough: &Shape, layout: Layout, size: (usize, usize), cfg: &PoseConfig) -> Result<PoseEstimate> {
    let (w, h) = size;
    match layout {
        Layout::SemiFrontal => {
            let (roll, degenerate) = roll_from_landmarks(rough)?;
            let transform = if roll.abs() > cfg.roll_threshold {
                PlanarTransform::rotation_about_centre(-roll, w, h)
            } else {
                PlanarTransform::identity()
            };
            Ok(PoseEstimate {
                layout,
                roll,
                roll_degenerate: degenerate,
                side: YawSide::NotApplicable,
                transform,
            })
        }
        Layout::Profile => {
            let side = yaw_side(rough, cfg)?;
            let transform = if side == YawSide::Right {
                PlanarTransform::horizontal_flip(w, h)
            } else {
                PlanarTransform::identity()
            };
            Ok(PoseEstimate {
                layout,
                roll: 0.0,
                roll_degenerate: false,
                side,
                transform,
            })
        }
    }
}

/// Estimates the pose from `rough` and warps `image` and `bbox` into the
/// normalised frame.
pub fn normalize_pose(
    image: &GrayImage,
    bbox: &BoundingBox,
    rough: &Shape,
    layout: Layout,
    cfg: &PoseConfig,
) -> Result<(GrayImage, BoundingBox, PoseEstimate)> {
    let pose = estimate_pose(rough, layout, image.size(), cfg)?;
    if pose.transform.is_identity() {
        return Ok((image.clone(), *bbox, pose));
    }
    let warped = apply_transform_image(image, &pose.transform)?;
    let b = pose.transform.apply_box(bbox);
    Ok((warped, b, pose))
}

/// Maps landmarks found in the normalised frame back to the original image.
pub fn back_transform_landmarks(shape: &Shape, pose: &PoseEstimate, perm: &LandmarkPermutation) -> Result<Shape> {
    let back = apply_transform(shape, &pose.transform.inverse())?;
    if pose.transform.is_mirroring() {
        if perm.len() != shape.len() {
            return Err(Error::DimensionMismatch {
                expected: shape.len(),
                got: perm.len(),
            });
        }
        back.permuted(perm.as_slice())
    } else {
        Ok(back)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureConfig;
    use crate::geometry::Point;
    use proptest::prelude::*;

    fn face_68(p28: (f64, f64), p34: (f64, f64)) -> Shape {
        let mut pts: Vec<(f64, f64)> = (0..68).map(|i| (i as f64, (i * 2) as f64)).collect();
        pts[NOSE_BRIDGE] = p28;
        pts[NOSE_TIP] = p34;
        Shape::from_xy(&pts).unwrap()
    }

    fn profile_39(x3: f64, x20: f64) -> Shape {
        let mut pts: Vec<(f64, f64)> = (0..39).map(|i| (i as f64, 1.0)).collect();
        pts[PROFILE_A].0 = x3;
        pts[PROFILE_B].0 = x20;
        Shape::from_xy(&pts).unwrap()
    }

    #[test]
    fn roll_examples() {
        assert_eq!(roll_from_landmarks(&face_68((50.0, 40.0), (50.0, 60.0))).unwrap(), (0.0, false));
        assert_eq!(roll_from_landmarks(&face_68((60.0, 50.0), (40.0, 50.0))).unwrap().0, -90.0);
        assert_eq!(roll_from_landmarks(&face_68((50.0, 60.0), (50.0, 40.0))).unwrap().0, 180.0);
        assert_eq!(roll_from_landmarks(&face_68((5.0, 5.0), (5.0, 5.0))).unwrap(), (0.0, true));
        assert!(roll_from_landmarks(&profile_39(1.0, 2.0)).is_err());
    }

    #[test]
    fn yaw_examples() {
        let cfg = PoseConfig::default();
        assert_eq!(yaw_side(&profile_39(10.0, 30.0), &cfg).unwrap(), YawSide::Right);
        assert_eq!(yaw_side(&profile_39(30.0, 10.0), &cfg).unwrap(), YawSide::Left);
        assert_eq!(yaw_side(&profile_39(20.0, 20.0), &cfg).unwrap(), YawSide::Left);
        let flipped = PoseConfig {
            right_if_x3_less: false,
            ..cfg
        };
        assert_eq!(yaw_side(&profile_39(30.0, 10.0), &flipped).unwrap(), YawSide::Right);
        assert_eq!(yaw_side(&profile_39(20.0, 20.0), &flipped).unwrap(), YawSide::Left);
        assert!(yaw_side(&face_68((0.0, 0.0), (0.0, 1.0)), &cfg).is_err());
    }

    #[test]
    fn rough_landmarks_requires_two_stages() {
        let mean = face_68((30.0, 20.0), (30.0, 50.0));
        let cfg = FeatureConfig {
            patch_size: 8,
            scales: vec![1.0],
            context: None,
            ..FeatureConfig::default()
        };
        let img = GrayImage::zeros(80, 80);
        let b = BoundingBox::new(10.0, 10.0, 50.0, 50.0).unwrap();
        let two = CascadeModel::zero_stages(mean.clone(), cfg.clone(), 2).unwrap();
        let got = rough_landmarks(&two, &img, &b).unwrap();
        assert_eq!(got, crate::geometry::align_mean_shape(&mean, &b).unwrap());
        let three = CascadeModel::zero_stages(mean, cfg, 3).unwrap();
        assert!(matches!(rough_landmarks(&three, &img, &b), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn normalisation_branches() {
        let img = GrayImage::from_fn(60, 40, |x, y| ((x + 2 * y) % 7) as f64 / 6.0);
        let b = BoundingBox::new(10.0, 10.0, 20.0, 20.0).unwrap();
        let cfg = PoseConfig::default();

        // 10 degrees of roll stays put.
        let d = 20.0 * 10f64.to_radians().sin();
        let small = face_68((30.0, 10.0), (30.0 + d, 10.0 + 20.0 * 10f64.to_radians().cos()));
        let (out, ob, pose) = normalize_pose(&img, &b, &small, Layout::SemiFrontal, &cfg).unwrap();
        assert!(pose.transform.is_identity());
        assert_eq!((out, ob), (img.clone(), b));
        assert!((pose.roll - 10.0).abs() < 1e-9);

        // 90 degrees of roll is undone by a -90 rotation.
        let sideways = face_68((30.0, 20.0), (50.0, 20.0));
        let (out, _, pose) = normalize_pose(&img, &b, &sideways, Layout::SemiFrontal, &cfg).unwrap();
        assert_eq!(pose.roll, 90.0);
        match pose.transform.steps() {
            [crate::geometry::TransformStep::Rotation { degrees, .. }] => assert_eq!(*degrees, -90.0),
            other => panic!("unexpected transform {other:?}"),
        }
        assert_eq!(out.size(), (40, 60));
        assert_eq!(pose.side, YawSide::NotApplicable);

        let (_, _, right) = normalize_pose(&img, &b, &profile_39(10.0, 30.0), Layout::Profile, &cfg).unwrap();
        assert!(right.transform.is_mirroring());
        assert_eq!(right.side, YawSide::Right);
        let (_, _, left) = normalize_pose(&img, &b, &profile_39(30.0, 10.0), Layout::Profile, &cfg).unwrap();
        assert!(left.transform.is_identity());
    }

    #[test]
    fn flip_then_back_restores_points_and_indexing() {
        let shape = Shape::from_xy(&(0..68).map(|i| (i as f64 * 1.3, (i % 9) as f64 * 2.1)).collect::<Vec<_>>()).unwrap();
        let perm = LandmarkPermutation::mirror_68();
        let pose = PoseEstimate {
            layout: Layout::SemiFrontal,
            roll: 0.0,
            roll_degenerate: false,
            side: YawSide::NotApplicable,
            transform: PlanarTransform::horizontal_flip(100, 80),
        };
        let forward = apply_transform(&shape, &pose.transform)
            .unwrap()
            .permuted(perm.as_slice())
            .unwrap();
        let back = back_transform_landmarks(&forward, &pose, &perm).unwrap();
        for (p, q) in back.points().iter().zip(shape.points()) {
            assert!(p.distance(q) < 1e-12);
        }
    }

    #[test]
    fn identity_pose_leaves_shape_alone() {
        let shape = face_68((1.0, 2.0), (3.0, 4.0));
        let pose = estimate_pose(&shape, Layout::SemiFrontal, (50, 50), &PoseConfig::default()).unwrap();
        let back = back_transform_landmarks(&shape, &pose, &LandmarkPermutation::mirror_68()).unwrap();
        assert_eq!(back, shape);
    }

    fn rotate(shape: &Shape, deg: f64) -> Shape {
        let (s, c) = deg.to_radians().sin_cos();
        shape
            .map_points(|p| Point::new(p.x * c + p.y * s, -p.x * s + p.y * c))
            .unwrap()
    }

    proptest! {
        #[test]
        fn roll_is_similarity_equivariant(
            bx in -50.0..50.0f64, by in -50.0..50.0f64,
            len in 1.0..40.0f64, theta in -170.0..170.0f64,
            scale in 0.2..5.0f64, shift in (-300.0..300.0f64, -300.0..300.0f64),
        ) {
            let base = face_68((bx, by), (bx, by + len));
            let turned = rotate(&base, theta);
            let moved = turned
                .map_points(|p| Point::new(p.x * scale + shift.0, p.y * scale + shift.1))
                .unwrap();
            let (r, _) = roll_from_landmarks(&moved).unwrap();
            prop_assert!((r - theta).abs() < 1e-9, "{r} vs {theta}");
        }

        #[test]
        fn normalised_roll_is_within_threshold(
            theta in -179.9..180.0f64, w in 20usize..120, h in 20usize..120,
        ) {
            let base = face_68((w as f64 / 2.0, h as f64 / 3.0), (w as f64 / 2.0, h as f64 / 2.0));
            let t = PlanarTransform::rotation_about_centre(theta, w, h);
            let rough = apply_transform(&base, &t).unwrap();
            let (ow, oh) = t.output_size((w, h));
            let pose = estimate_pose(&rough, Layout::SemiFrontal, (ow, oh), &PoseConfig::default()).unwrap();
            let fixed = apply_transform(&rough, &pose.transform).unwrap();
            let (r, _) = roll_from_landmarks(&fixed).unwrap();
            prop_assert!(r.abs() <= 45.0 + 1e-6);
        }

        #[test]
        fn back_transform_inverts_rotation(
            theta in -180.0..180.0f64, w in 10usize..200, h in 10usize..200,
            pts in proptest::collection::vec((-100.0..300.0f64, -100.0..300.0f64), 68),
        ) {
            let shape = Shape::from_xy(&pts).unwrap();
            let pose = PoseEstimate {
                layout: Layout::SemiFrontal,
                roll: -theta,
                roll_degenerate: false,
                side: YawSide::NotApplicable,
                transform: PlanarTransform::rotation_about_centre(theta, w, h),
            };
            let fwd = apply_transform(&shape, &pose.transform).unwrap();
            let back = back_transform_landmarks(&fwd, &pose, &LandmarkPermutation::mirror_68()).unwrap();
            for (p, q) in back.points().iter().zip(shape.points()) {
                prop_assert!(p.distance(q) < 1e-9);
            }
        }
    }
}
