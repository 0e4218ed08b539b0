use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use facecsr::bbox_regression::{train_box_cascade, BoxSample, InitPolicy};
use facecsr::evaluation::{ced_csv, ced_svg, normalized_rmse_subset, results_csv, threshold_grid};
use facecsr::io::config::read_config;
use facecsr::io::container::{read_box_cascade, read_cascade, write_box_cascade, write_cascade};
use facecsr::io::dataset::{
    list_images, load_annotated_images, load_annotations, load_manifest, read_pts_dir, write_dataset, ANNOTATIONS_DIR,
};
use facecsr::io::manifest::read_manifest;
use facecsr::io::pgm::{load_image, DecoderHook};
use facecsr::io::permutation::read_permutation;
use facecsr::io::pts::write_pts;
use facecsr::pipeline::{train_final_model, train_pose_model};
use facecsr::{
    auc, ced, generate_synthetic, localize, shape_bbox, AnnotatedImage, AnnotationRecord, CascadeModel, Config,
    DetectionsBySource, ErrorRecord, GrayImage, LandmarkPermutation, Normalizer, PipelineModel, Subset,
};
use indexmap::IndexMap;
use rayon::prelude::*;

use crate::{Command, Common};

pub const FINAL_MODEL: &str = "final.csr";
pub const POSE_MODEL: &str = "pose.csr";
pub const BOX_MODEL: &str = "box_regression.csr";
const REFINER_PREFIX: &str = "refiner_";

/// A failed command. Usage failures exit with 1, data failures with 2.
pub enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Data(e.into())
    }
}

type CmdResult<T = ()> = Result<T, Failure>;

pub fn run(command: Command) -> CmdResult {
    match command {
        Command::TrainFinal { data, common } => train_final(&data, &common),
        Command::TrainPose { data, common } => train_pose(&data, &common),
        Command::TrainBoxes { data, common } => train_boxes(&data, &common),
        Command::Localize {
            data,
            models,
            manifest,
            common,
        } => run_localize(&data, &models, manifest.as_deref(), &common),
        Command::Evaluate {
            pred,
            gt,
            label,
            common,
        } => evaluate(&pred, &gt, label.as_deref(), &common),
        Command::Synth { count, common } => synth(count, &common),
    }
}

fn load_config(common: &Common) -> CmdResult<Config> {
    let config = match &common.config {
        Some(path) => read_config(path).map_err(|e| Failure::Usage(e.into()))?,
        None => Config::default(),
    };
    config
        .validate()
        .map_err(|e| Failure::Usage(anyhow!(e).context("invalid configuration")))?;
    Ok(config)
}

fn prepare_out(common: &Common) -> CmdResult<&Path> {
    fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    Ok(&common.out)
}

fn decode_other(path: &Path) -> facecsr::Result<GrayImage> {
    let img = image::open(path)
        .map_err(|e| facecsr::Error::InvalidInput(format!("{}: {e}", path.display())))?
        .to_luma8();
    let (w, h) = img.dimensions();
    GrayImage::new(
        w as usize,
        h as usize,
        img.into_raw().into_iter().map(|v| v as f32 / 255.0).collect(),
    )
}

fn hook() -> Option<&'static DecoderHook> {
    Some(&decode_other)
}

fn permutation(config: &Config) -> CmdResult<LandmarkPermutation> {
    Ok(match &config.permutation_file {
        Some(path) => read_permutation(path, config.layout.landmarks())?,
        None => LandmarkPermutation::default_for(config.layout),
    })
}

fn load_training_data(dir: &Path, config: &Config) -> CmdResult<(Vec<AnnotationRecord>, Vec<AnnotatedImage>)> {
    let records = load_annotations(dir, config.layout)?;
    if records.is_empty() {
        return Err(anyhow!("{}: no training images", dir.display()).into());
    }
    let images = load_annotated_images(&records, hook())?;
    log::info!("loaded {} annotated images from {}", records.len(), dir.display());
    Ok((records, images))
}

fn log_header(command: &str, config: &Config, images: usize, seed: u64) -> String {
    format!("command {command}\nlayout {}\nimages {images}\nseed {seed}\n", config.layout)
}

fn log_residuals(log: &mut String, model: &CascadeModel) {
    let _ = writeln!(log, "lambda {}", model.lambda());
    for (m, r) in model.residuals().iter().enumerate() {
        let _ = writeln!(log, "stage {m} rms_residual {r}");
    }
}

fn write_log(out: &Path, command: &str, text: &str) -> CmdResult {
    let path = out.join(format!("{command}.log"));
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn train_final(data: &Path, common: &Common) -> CmdResult {
    let config = load_config(common)?;
    let perm = permutation(&config)?;
    let seed = common.seed.unwrap_or(0);
    let (_, images) = load_training_data(data, &config)?;
    let out = prepare_out(common)?;
    let model = train_final_model(
        &images,
        &config.final_augmentation,
        &perm,
        &config.pose,
        &config.final_features,
        config.final_stages,
        config.final_lambda,
        seed,
    )?;
    write_cascade(&out.join(FINAL_MODEL), &model)?;
    let mut log = log_header("train-final", &config, images.len(), seed);
    log_residuals(&mut log, &model);
    write_log(out, "train-final", &log)
}

fn train_pose(data: &Path, common: &Common) -> CmdResult {
    let config = load_config(common)?;
    let perm = permutation(&config)?;
    let seed = common.seed.unwrap_or(0);
    let (_, images) = load_training_data(data, &config)?;
    let out = prepare_out(common)?;
    let model = train_pose_model(
        &images,
        &config.pose_augmentation,
        &perm,
        &config.pose_features,
        config.pose_lambda,
        seed,
    )?;
    write_cascade(&out.join(POSE_MODEL), &model)?;
    let mut log = log_header("train-pose", &config, images.len(), seed);
    log_residuals(&mut log, &model);
    write_log(out, "train-pose", &log)
}

/// Trains a refiner for every detector source in the manifest and the
/// whole-image regressor used when no detector fires.
fn train_boxes(data: &Path, common: &Common) -> CmdResult {
    let config = load_config(common)?;
    let seed = common.seed.unwrap_or(0);
    let (records, images) = load_training_data(data, &config)?;
    let manifest = load_manifest(data)?;
    let out = prepare_out(common)?;
    let mut log = log_header("train-boxes", &config, images.len(), seed);

    let gt_boxes = images
        .iter()
        .map(|a| shape_bbox(&a.shape))
        .collect::<facecsr::Result<Vec<_>>>()?;
    let mut by_source: IndexMap<String, Vec<BoxSample>> = IndexMap::new();
    for ((rec, img), gt) in records.iter().zip(&images).zip(&gt_boxes) {
        for (source, dets) in manifest.get(&rec.id).into_iter().flatten() {
            if source == facecsr::aggregation::REGRESSION_SOURCE {
                continue;
            }
            for d in dets {
                by_source.entry(source.clone()).or_default().push(BoxSample {
                    image: img.image.clone(),
                    gt_box: *gt,
                    init_box: Some(d.bbox),
                });
            }
        }
    }
    for (source, samples) in &by_source {
        let model = train_box_cascade(
            samples,
            config.box_stages,
            InitPolicy::ExternalBox,
            config.box_lambda,
            &config.box_features,
        )?;
        write_box_cascade(&out.join(format!("{REFINER_PREFIX}{source}.csr")), &model)?;
        let _ = writeln!(log, "refiner {source} samples {} mean_iou {}", samples.len(), join(model.mean_iou()));
    }

    let whole: Vec<BoxSample> = images
        .iter()
        .zip(&gt_boxes)
        .map(|(a, gt)| BoxSample {
            image: a.image.clone(),
            gt_box: *gt,
            init_box: None,
        })
        .collect();
    let model = train_box_cascade(
        &whole,
        config.box_stages,
        InitPolicy::WholeImage,
        config.box_lambda,
        &config.box_features,
    )?;
    write_box_cascade(&out.join(BOX_MODEL), &model)?;
    let _ = writeln!(log, "box_regression samples {} mean_iou {}", whole.len(), join(model.mean_iou()));
    write_log(out, "train-boxes", &log)
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn load_pipeline(models: &Path, config: &Config) -> CmdResult<PipelineModel> {
    let pose_csr = read_cascade(&models.join(POSE_MODEL))?;
    let final_csr = read_cascade(&models.join(FINAL_MODEL))?;
    let mut refiners = IndexMap::new();
    let mut fallback = None;
    let entries = fs::read_dir(models).with_context(|| format!("reading {}", models.display()))?;
    let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    for path in paths {
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if name == BOX_MODEL {
            fallback = Some(read_box_cascade(&path)?);
        } else if let Some(source) = name.strip_prefix(REFINER_PREFIX).and_then(|n| n.strip_suffix(".csr")) {
            refiners.insert(source.to_string(), read_box_cascade(&path)?);
        }
    }
    let model = PipelineModel {
        layout: config.layout,
        pose_csr,
        final_csr,
        aggregation: config.aggregation.with_models(refiners, fallback),
        perturbation: config.perturbation.clone(),
        pose: config.pose.clone(),
        pose_enabled: config.pose_enabled,
        permutation: permutation(config)?,
    };
    model.validate()?;
    Ok(model)
}

const DIAGNOSTICS_HEADER: &str =
    "image_id,status,branch,box_x,box_y,box_w,box_h,roll,roll_degenerate,side,final_x,final_y,final_w,final_h\n";

fn run_localize(data: &Path, models: &Path, manifest: Option<&Path>, common: &Common) -> CmdResult {
    let mut config = load_config(common)?;
    if let Some(seed) = common.seed {
        config.perturbation.seed = seed;
    }
    let model = load_pipeline(models, &config)?;
    let manifest = match manifest {
        Some(p) => read_manifest(p)?,
        None => load_manifest(data)?,
    };
    let images = list_images(data)?;
    for id in manifest.keys() {
        if images.binary_search_by(|(i, _)| i.as_str().cmp(id)).is_err() {
            log::warn!("manifest lists {id:?} but there is no such image");
        }
    }
    let out = prepare_out(common)?;
    let empty = DetectionsBySource::new();

    let results: Vec<(String, String)> = images
        .par_iter()
        .map(|(id, path)| -> CmdResult<(String, String)> {
            let image = load_image(path, hook())?;
            let dets = manifest.get(id).unwrap_or(&empty);
            match localize(&model, &image, dets) {
                Ok((shape, d)) => {
                    write_pts(&shape, &out.join(format!("{id}.pts")))?;
                    let (a, f) = (d.aggregated_box, d.final_box);
                    let row = format!(
                        "{id},ok,{},{},{},{},{},{},{},{},{},{},{},{}\n",
                        d.branch,
                        a.x,
                        a.y,
                        a.w,
                        a.h,
                        d.pose.roll,
                        d.pose.roll_degenerate,
                        d.pose.side.as_str(),
                        f.x,
                        f.y,
                        f.w,
                        f.h
                    );
                    Ok((id.clone(), row))
                }
                Err(facecsr::Error::NoFace) => {
                    log::warn!("{id}: no face found");
                    Ok((id.clone(), format!("{id},no-face,,,,,,,,,,,,\n")))
                }
                Err(e) => Err(anyhow!(e).context(format!("localising {}", path.display())).into()),
            }
        })
        .collect::<CmdResult<_>>()?;

    let mut csv = String::from(DIAGNOSTICS_HEADER);
    let mut found = 0;
    for (_, row) in &results {
        found += usize::from(row.contains(",ok,"));
        csv.push_str(row);
    }
    let path = out.join("diagnostics.csv");
    fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
    log::info!("localised {found} of {} images", results.len());
    Ok(())
}

fn evaluate(pred: &Path, gt: &Path, label: Option<&str>, common: &Common) -> CmdResult {
    let config = load_config(common)?;
    let gt_dir = if gt.join(ANNOTATIONS_DIR).is_dir() {
        gt.join(ANNOTATIONS_DIR)
    } else {
        gt.to_path_buf()
    };
    let truth = read_pts_dir(&gt_dir)?;
    let predictions = read_pts_dir(pred)?;
    if truth.is_empty() {
        return Err(anyhow!("{}: no ground-truth .pts files", gt_dir.display()).into());
    }
    for id in predictions.keys() {
        if !truth.contains_key(id) {
            log::warn!("prediction {id:?} has no ground truth and is ignored");
        }
    }
    let landmarks = truth[0].len();
    let subsets = Subset::for_landmarks(landmarks)?;
    let normalizer = config.normalizer.unwrap_or(Normalizer::default_for(landmarks));

    let mut records = Vec::new();
    for (id, g) in &truth {
        for &subset in &subsets {
            // A missing prediction counts as a failure at every threshold.
            let error = match predictions.get(id) {
                Some(p) => normalized_rmse_subset(p, g, subset, normalizer)
                    .with_context(|| format!("scoring {id}"))?,
                None => f64::INFINITY,
            };
            records.push(ErrorRecord {
                image_id: id.clone(),
                subset,
                error,
            });
        }
    }
    let missing = truth.keys().filter(|id| !predictions.contains_key(*id)).count();
    if missing > 0 {
        log::warn!("{missing} ground-truth shapes have no prediction");
    }

    let out = prepare_out(common)?;
    fs::write(out.join("errors.csv"), results_csv(&records)).context("writing errors.csv")?;
    let thresholds = threshold_grid(config.auc_threshold, config.ced_points);
    let mut curves = Vec::new();
    let mut summary = format!("normalizer {normalizer}\nthreshold {}\n", config.auc_threshold);
    for &subset in &subsets {
        let errors: Vec<f64> = records.iter().filter(|r| r.subset == subset).map(|r| r.error).collect();
        let fractions = ced(&errors, &thresholds)?;
        let area = auc(&errors, config.auc_threshold)?;
        let _ = writeln!(summary, "auc {subset} {area}");
        fs::write(out.join(format!("ced_{subset}.csv")), ced_csv(&thresholds, &fractions))
            .context("writing CED table")?;
        let name = match label {
            Some(l) => format!("{l} {subset}"),
            None => subset.to_string(),
        };
        curves.push((name, fractions));
        println!("{subset}: AUC@{} = {area:.4}", config.auc_threshold);
    }
    let refs: Vec<(&str, &[f64], &[f64])> = curves
        .iter()
        .map(|(n, f)| (n.as_str(), thresholds.as_slice(), f.as_slice()))
        .collect();
    fs::write(out.join("ced.svg"), ced_svg(&refs, config.auc_threshold)).context("writing ced.svg")?;
    fs::write(out.join("auc.txt"), summary).context("writing auc.txt")?;
    Ok(())
}

fn synth(count: usize, common: &Common) -> CmdResult {
    let config = load_config(common)?;
    if count == 0 {
        return Err(Failure::Usage(anyhow!("--count must be positive")));
    }
    let samples = generate_synthetic(&config.synth, count, common.seed.unwrap_or(0))?;
    let out = prepare_out(common)?;
    write_dataset(out, &samples)?;
    log::info!("wrote {count} synthetic {} faces to {}", config.layout, out.display());
    Ok(())
}
