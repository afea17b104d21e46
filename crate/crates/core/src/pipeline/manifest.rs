use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::face_detect::FaceBox;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ManifestError {
    #[error("manifest row {row}: duplicate id {id:?}")]
    DuplicateId { row: usize, id: String },
    #[error("manifest row {row} ({id}): {field} file not found: {}", path.display())]
    MissingFile {
        row: usize,
        id: String,
        field: &'static str,
        path: PathBuf,
    },
    #[error("manifest row {row}: empty id")]
    EmptyId { row: usize },
    #[error("manifest row {row}: face box needs all of face_x, face_y, face_w, face_h")]
    PartialFaceBox { row: usize },
    #[error("manifest row {row}: {message}")]
    Syntax { row: usize, message: String },
    #[error("manifest has no rows")]
    Empty,
}

/// Serialized form shared by the CSV and JSON layouts. Paths are relative
/// to the manifest's directory unless absolute.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub photo: String,
    #[serde(default, deserialize_with = "empty_as_none")]
    pub albedo: Option<String>,
    #[serde(default, deserialize_with = "empty_as_none")]
    pub landmarks: Option<String>,
    #[serde(default)]
    pub face_x: Option<u32>,
    #[serde(default)]
    pub face_y: Option<u32>,
    #[serde(default)]
    pub face_w: Option<u32>,
    #[serde(default)]
    pub face_h: Option<u32>,
    #[serde(default, deserialize_with = "empty_as_none")]
    pub sh: Option<String>,
}

fn empty_as_none<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<String>, D::Error> {
    let v: Option<String> = Option::deserialize(d)?;
    Ok(v.filter(|s| !s.trim().is_empty()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub id: String,
    pub photo: PathBuf,
    pub albedo: Option<PathBuf>,
    pub landmarks: Option<PathBuf>,
    pub face: Option<FaceBox>,
    pub sh: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub path: PathBuf,
    pub rows: Vec<ManifestRow>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum JsonManifest {
    Wrapped { images: Vec<serde_json::Value> },
    Bare(Vec<serde_json::Value>),
}

fn parse_json(text: &str) -> std::result::Result<Vec<ManifestRecord>, ManifestError> {
    let values = match serde_json::from_str::<JsonManifest>(text) {
        Ok(JsonManifest::Wrapped { images }) | Ok(JsonManifest::Bare(images)) => images,
        Err(e) => {
            return Err(ManifestError::Syntax {
                row: 0,
                message: e.to_string(),
            })
        }
    };
    values
        .into_iter()
        .enumerate()
        .map(|(i, mut v)| {
            // Accept a nested {"face": {x, y, w, h}} as well as flat fields.
            if let Some(obj) = v.as_object_mut() {
                if let Some(face) = obj.remove("face") {
                    for k in ["x", "y", "w", "h"] {
                        if let Some(val) = face.get(k) {
                            obj.insert(format!("face_{k}"), val.clone());
                        }
                    }
                }
            }
            serde_json::from_value(v).map_err(|e| ManifestError::Syntax {
                row: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn parse_csv(text: &str) -> std::result::Result<Vec<ManifestRecord>, ManifestError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| ManifestError::Syntax {
                row: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Validates records against the filesystem; `row` numbers are 1-based
/// data rows (the CSV header is not counted).
pub fn validate_records(
    records: Vec<ManifestRecord>,
    base: &Path,
) -> std::result::Result<Vec<ManifestRow>, ManifestError> {
    if records.is_empty() {
        return Err(ManifestError::Empty);
    }
    let mut ids = HashSet::new();
    let mut rows = Vec::with_capacity(records.len());
    for (i, rec) in records.into_iter().enumerate() {
        let row = i + 1;
        let id = rec.id.trim().to_string();
        if id.is_empty() {
            return Err(ManifestError::EmptyId { row });
        }
        if !ids.insert(id.clone()) {
            return Err(ManifestError::DuplicateId { row, id });
        }
        let check = |field: &'static str, p: &str| {
            let path = resolve(base, p);
            if path.is_file() {
                Ok(path)
            } else {
                Err(ManifestError::MissingFile {
                    row,
                    id: id.clone(),
                    field,
                    path,
                })
            }
        };
        let photo = check("photo", &rec.photo)?;
        let albedo = rec.albedo.as_deref().map(|p| check("albedo", p)).transpose()?;
        let landmarks = rec.landmarks.as_deref().map(|p| check("landmarks", p)).transpose()?;
        let sh = rec.sh.as_deref().map(|p| check("sh", p)).transpose()?;
        let face = match (rec.face_x, rec.face_y, rec.face_w, rec.face_h) {
            (Some(x), Some(y), Some(w), Some(h)) => Some(FaceBox::new(x, y, w, h)),
            (None, None, None, None) => None,
            _ => return Err(ManifestError::PartialFaceBox { row }),
        };
        rows.push(ManifestRow {
            id,
            photo,
            albedo,
            landmarks,
            face,
            sh,
        });
    }
    Ok(rows)
}

/// Loads a `.json` manifest or (any other extension) a CSV manifest.
pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let records = if is_json { parse_json(&text)? } else { parse_csv(&text)? };
    let base = path.parent().unwrap_or(Path::new("."));
    let rows = validate_records(records, base)?;
    Ok(Manifest {
        path: path.to_path_buf(),
        rows,
    })
}

/// Writes records as a CSV manifest.
pub fn write_manifest_csv(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path.display().to_string(), e))?;
    for r in records {
        w.serialize(r).map_err(|e| Error::format(path.display().to_string(), e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
