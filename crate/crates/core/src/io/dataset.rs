//! On-disk datasets.
//!
//! A dataset directory holds `images/<id>.pgm`, `annotations/<id>.pts` and an
//! optional `detections.tsv` manifest. Annotations are matched to images by
//! file stem. Records are returned sorted by id.

use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Shape;
use crate::io::manifest::{read_manifest, write_manifest, Manifest};
use crate::io::pgm::{load_image, write_pgm, DecoderHook};
use crate::io::pts::{read_pts, write_pts};
use crate::io::synth::SyntheticSample;
use crate::markup::Layout;
use crate::pipeline::AnnotatedImage;

pub const IMAGES_DIR: &str = "images";
pub const ANNOTATIONS_DIR: &str = "annotations";
pub const MANIFEST_FILE: &str = "detections.tsv";

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRecord {
    pub id: String,
    pub image_path: PathBuf,
    pub shape: Shape,
    pub layout: Layout,
}

fn stem(path: &Path) -> Option<String> {
    path.file_stem().and_then(|s| s.to_str()).map(str::to_string)
}

fn sorted_files(dir: &Path, extension: Option<&str>) -> Result<Vec<(String, PathBuf)>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if !path.is_file() {
            continue;
        }
        let ext_ok = extension.is_none_or(|want| {
            path.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case(want))
        });
        if let (true, Some(id)) = (ext_ok, stem(&path)) {
            out.push((id, path));
        }
    }
    out.sort();
    if let Some(w) = out.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::InvalidInput(format!(
            "{} and {} share the id {:?}",
            w[0].1.display(),
            w[1].1.display(),
            w[0].0
        )));
    }
    Ok(out)
}

/// Image files under `dir/images`, keyed by stem.
pub fn list_images(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    sorted_files(&dir.join(IMAGES_DIR), None)
}

/// All `.pts` files in a directory, keyed by stem.
pub fn read_pts_dir(dir: &Path) -> Result<IndexMap<String, Shape>> {
    sorted_files(dir, Some("pts"))?
        .into_iter()
        .map(|(id, p)| Ok((id, read_pts(&p)?)))
        .collect()
}

/// Pairs every image with its annotation. A missing annotation or a
/// landmark count other than the layout's is an error naming the file.
pub fn load_annotations(dir: &Path, layout: Layout) -> Result<Vec<AnnotationRecord>> {
    let ann_dir = dir.join(ANNOTATIONS_DIR);
    list_images(dir)?
        .into_iter()
        .map(|(id, image_path)| {
            let pts = ann_dir.join(format!("{id}.pts"));
            if !pts.is_file() {
                return Err(Error::InvalidInput(format!("{}: missing annotation for image {id:?}", pts.display())));
            }
            let shape = read_pts(&pts)?;
            if shape.len() != layout.landmarks() {
                return Err(Error::InvalidInput(format!(
                    "{}: {} landmarks, the {layout} layout needs {}",
                    pts.display(),
                    shape.len(),
                    layout.landmarks()
                )));
            }
            Ok(AnnotationRecord { id, image_path, shape, layout })
        })
        .collect()
}

/// Decodes the images of `records` in parallel.
pub fn load_annotated_images(records: &[AnnotationRecord], hook: Option<&DecoderHook>) -> Result<Vec<AnnotatedImage>> {
    records
        .par_iter()
        .map(|r| {
            Ok(AnnotatedImage {
                image: load_image(&r.image_path, hook)?,
                shape: r.shape.clone(),
            })
        })
        .collect()
}

/// The dataset manifest, or an empty one if the file is absent.
pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    if path.exists() {
        read_manifest(&path)
    } else {
        Ok(Manifest::new())
    }
}

pub fn sample_id(index: usize) -> String {
    format!("synth_{index:05}")
}

/// Writes samples as a dataset directory with ids from [`sample_id`].
pub fn write_dataset(dir: &Path, samples: &[SyntheticSample]) -> Result<()> {
    let images = dir.join(IMAGES_DIR);
    let annotations = dir.join(ANNOTATIONS_DIR);
    for d in [&images, &annotations] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut manifest = Manifest::new();
    for (i, s) in samples.iter().enumerate() {
        let id = sample_id(i);
        write_pgm(&s.image, &images.join(format!("{id}.pgm")))?;
        write_pts(&s.shape, &annotations.join(format!("{id}.pts")))?;
        let by_source: &mut IndexMap<_, Vec<_>> = manifest.entry(id).or_default();
        for d in &s.detections {
            by_source.entry(d.source.clone()).or_default().push(d.clone());
        }
    }
    write_manifest(&manifest, &dir.join(MANIFEST_FILE))
}
