//! Manifest files and image files on disk.

use std::fs;
use std::path::{Path, PathBuf};

use facepress_core::dataset::{DatasetError, DatasetManifest, ImageRecord, Variant};
use facepress_core::geometry::Landmarks;
use facepress_core::ImagePlane;

use crate::codecs::{decode_file_bytes, encode_png};

const BASE_COLUMNS: [&str; 4] = ["image_id", "subject_id", "capture_id", "path"];
const LANDMARK_COLUMNS: [&str; 10] = ["x1", "y1", "x2", "y2", "x3", "y3", "x4", "y4", "x5", "y5"];

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} row {row}: {message}")]
    Row {
        path: PathBuf,
        row: usize,
        message: String,
    },
    #[error("{path}: missing column {column}")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: {source}")]
    Dataset {
        path: PathBuf,
        #[source]
        source: DatasetError,
    },
    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> IoError + '_ {
    move |source| IoError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Loads a comma-separated manifest with a header line. Landmark columns
/// `x1,y1..x5,y5` are optional; rows may leave all ten empty.
///
/// Row numbers in errors count the header as row 1.
pub fn load_manifest(path: &Path, variant: Variant) -> Result<DatasetManifest, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_manifest(&text, path, variant)
}

pub fn parse_manifest(text: &str, path: &Path, variant: Variant) -> Result<DatasetManifest, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(csv_err(path))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mut base = [0usize; 4];
    for (slot, name) in base.iter_mut().zip(BASE_COLUMNS) {
        *slot = col(name).ok_or_else(|| IoError::MissingColumn {
            path: path.to_path_buf(),
            column: name.into(),
        })?;
    }
    let lm_cols: Vec<Option<usize>> = LANDMARK_COLUMNS.iter().map(|c| col(c)).collect();
    let has_landmarks = match lm_cols.iter().filter(|c| c.is_some()).count() {
        0 => false,
        10 => true,
        _ => {
            let missing = LANDMARK_COLUMNS
                .iter()
                .zip(&lm_cols)
                .find(|(_, c)| c.is_none())
                .map(|(n, _)| *n)
                .unwrap_or_default();
            return Err(IoError::MissingColumn {
                path: path.to_path_buf(),
                column: missing.into(),
            });
        }
    };

    let mut records = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (k, row) in reader.records().enumerate() {
        let row_no = k + 2;
        let row_err = |message: String| IoError::Row {
            path: path.to_path_buf(),
            row: row_no,
            message,
        };
        let row = row.map_err(|e| row_err(e.to_string()))?;
        if row.len() != headers.len() {
            return Err(row_err(format!("expected {} fields, found {}", headers.len(), row.len())));
        }
        let field = |i: usize| row.get(i).unwrap_or_default().to_string();
        let landmarks = if has_landmarks {
            let raw: Vec<&str> = lm_cols.iter().map(|c| row.get(c.unwrap()).unwrap_or_default()).collect();
            if raw.iter().all(|s| s.is_empty()) {
                None
            } else {
                let mut flat = [0.0; 10];
                for (slot, (s, name)) in flat.iter_mut().zip(raw.iter().zip(LANDMARK_COLUMNS)) {
                    *slot = s
                        .parse::<f64>()
                        .map_err(|_| row_err(format!("{name}: not a number: {s:?}")))?;
                }
                Some(Landmarks::from_flat(flat).map_err(|e| row_err(e.to_string()))?)
            }
        } else {
            None
        };
        let record = ImageRecord {
            image_id: field(base[0]),
            subject_id: field(base[1]),
            capture_id: field(base[2]),
            path: field(base[3]),
            landmarks,
        };
        for (name, v) in BASE_COLUMNS.iter().zip([&record.image_id, &record.subject_id, &record.capture_id, &record.path]) {
            if v.is_empty() {
                return Err(row_err(format!("empty {name}")));
            }
        }
        if !seen.insert(record.image_id.clone()) {
            return Err(row_err(format!("duplicate image_id {}", record.image_id)));
        }
        records.push(record);
    }
    DatasetManifest::new(records, variant).map_err(|source| IoError::Dataset {
        path: path.to_path_buf(),
        source,
    })
}

/// Serializes a manifest; landmark columns are written when any record has
/// landmarks.
pub fn manifest_to_string(manifest: &DatasetManifest) -> String {
    let with_lm = manifest.records().iter().any(|r| r.landmarks.is_some());
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let mut header: Vec<&str> = BASE_COLUMNS.to_vec();
    if with_lm {
        header.extend(LANDMARK_COLUMNS);
    }
    w.write_record(&header).expect("in-memory write");
    for r in manifest.records() {
        let mut row = vec![r.image_id.clone(), r.subject_id.clone(), r.capture_id.clone(), r.path.clone()];
        if with_lm {
            match &r.landmarks {
                Some(lm) => row.extend(lm.to_flat().iter().map(|v| format!("{v}"))),
                None => row.extend(std::iter::repeat_n(String::new(), 10)),
            }
        }
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<(), IoError> {
    write_file(path, manifest_to_string(manifest).as_bytes())
}

/// Resolves a record path relative to the manifest's directory.
pub fn resolve(manifest_path: &Path, record_path: &str) -> PathBuf {
    let p = Path::new(record_path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        manifest_path.parent().unwrap_or(Path::new(".")).join(p)
    }
}

pub fn load_image(path: &Path) -> Result<ImagePlane, IoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_file_bytes(&bytes).map_err(|e| IoError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn save_png(image: &ImagePlane, path: &Path) -> Result<(), IoError> {
    let bytes = encode_png(image).map_err(|e| IoError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    write_file(path, &bytes)
}

/// Writes `bytes`, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, bytes).map_err(io_err(path))
}
