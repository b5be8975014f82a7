use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use facefatigue::fatigue_model::{parse_manifest, CompositeModel, FaceDescriptors, RatedFace, Reject, TrainingExample};
use facefatigue::landmark_io::parse_landmark_file;
use facefatigue::roi::extract_all;
use facefatigue::{FaceRecord, GrayImage, RegionKind, RoiPatch};
use rayon::prelude::*;

use crate::error::{CliError, CliResult};

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::input(format!(
            "{what} {} is not a readable file",
            path.display()
        )))
    }
}

pub fn require_dir(path: &Path, what: &str) -> CliResult<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::input(format!("{what} {} is not a directory", path.display())))
    }
}

pub fn load_landmarks(path: &Path) -> CliResult<Vec<FaceRecord>> {
    parse_landmark_file(&read_text(path)?).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

pub fn load_manifest(path: &Path) -> CliResult<Vec<RatedFace>> {
    parse_manifest(&read_text(path)?).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

pub fn load_model(path: &Path) -> CliResult<CompositeModel> {
    Ok(CompositeModel::from_json(&read_text(path)?)?)
}

pub fn load_image(path: &Path) -> Result<GrayImage, String> {
    image::open(path)
        .map(|img| GrayImage::from_dynamic(&img))
        .map_err(|e| format!("{}: {e}", path.display()))
}

/// Writes every patch as `<face>_<region>.png`.
pub fn dump_rois(dir: &Path, face_id: &str, patches: &BTreeMap<RegionKind, RoiPatch>) -> Result<(), String> {
    let stem: String = face_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    for (kind, patch) in patches {
        let path = dir.join(format!("{stem}_{kind}.png"));
        patch
            .to_luma8()
            .save(&path)
            .map_err(|e| format!("{}: {e}", path.display()))?;
    }
    Ok(())
}

pub type Described = (BTreeMap<RegionKind, RoiPatch>, FaceDescriptors);

/// Crops and describes one face. Failures carry a reject reason and detail.
pub fn describe_face(
    image: &GrayImage,
    record: &FaceRecord,
    dump: Option<&Path>,
) -> Result<Described, (&'static str, String)> {
    let patches = extract_all(image, &record.landmarks).map_err(|e| ("extraction_failed", e.to_string()))?;
    if let Some(dir) = dump {
        dump_rois(dir, &record.face_id, &patches).map_err(|e| ("roi_dump_failed", e))?;
    }
    let descriptors = FaceDescriptors::from_patches(&patches).map_err(|e| ("extraction_failed", e.to_string()))?;
    Ok((patches, descriptors))
}

/// Rated faces joined with their landmarks and images.
pub struct Prepared {
    pub examples: Vec<TrainingExample>,
    pub rejects: Vec<Reject>,
}

/// Joins manifest faces to landmark records by face id, falling back to the
/// first record on the same image, then extracts descriptors. Faces that
/// cannot be used become rejects; input order is kept.
pub fn prepare_rated(manifest: &[RatedFace], records: &[FaceRecord], images: &Path, dump: Option<&Path>) -> Prepared {
    let by_id: HashMap<&str, &FaceRecord> = records.iter().map(|r| (r.face_id.as_str(), r)).collect();
    let mut by_image: HashMap<&str, &FaceRecord> = HashMap::new();
    for r in records {
        by_image.entry(r.image.as_str()).or_insert(r);
    }
    let outcomes: Vec<Result<TrainingExample, Reject>> = manifest
        .par_iter()
        .map(|face| {
            let reject = |reason: &str, detail: Option<String>| Reject {
                face_id: face.face_id.clone(),
                reason: reason.to_string(),
                detail,
            };
            let record = by_id
                .get(face.face_id.as_str())
                .or_else(|| by_image.get(face.image.as_str()))
                .ok_or_else(|| reject("no_landmarks", None))?;
            let image = load_image(&images.join(&face.image)).map_err(|e| reject("unreadable_image", Some(e)))?;
            let (_, descriptors) =
                describe_face(&image, record, dump).map_err(|(reason, detail)| reject(reason, Some(detail)))?;
            Ok(TrainingExample {
                face_id: face.face_id.clone(),
                truth: face.truth(),
                descriptors,
            })
        })
        .collect();
    let mut examples = Vec::new();
    let mut rejects = Vec::new();
    for o in outcomes {
        match o {
            Ok(e) => examples.push(e),
            Err(r) => rejects.push(r),
        }
    }
    Prepared { examples, rejects }
}

/// Image files directly inside `dir`, sorted by name.
pub fn list_images(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && matches!(ext.as_deref(), Some("png" | "jpg" | "jpeg")) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn jsonl<T: serde::Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("serializable"));
        out.push('\n');
    }
    out
}
