use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::geometry::Landmarks;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DatasetError {
    #[error("manifest contains no records")]
    Empty,
    #[error("duplicate image_id `{0}`")]
    DuplicateImageId(String),
    #[error("record `{0}` has non-finite landmarks")]
    NonFiniteLandmarks(String),
    #[error("record {index} has an empty {field}")]
    EmptyField { index: usize, field: &'static str },
}

/// Which preprocessing produced the images a manifest points at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Variant {
    #[default]
    Roi,
    Portrait,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Roi => "roi",
            Variant::Portrait => "portrait",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "roi" => Some(Variant::Roi),
            "portrait" => Some(Variant::Portrait),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub image_id: String,
    pub subject_id: String,
    pub capture_id: String,
    pub path: String,
    pub landmarks: Option<Landmarks>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    records: Vec<ImageRecord>,
    variant: Variant,
}

impl DatasetManifest {
    pub fn new(records: Vec<ImageRecord>, variant: Variant) -> Result<Self, DatasetError> {
        if records.is_empty() {
            return Err(DatasetError::Empty);
        }
        let mut seen = BTreeSet::new();
        for (index, r) in records.iter().enumerate() {
            for (field, value) in [
                ("image_id", &r.image_id),
                ("subject_id", &r.subject_id),
                ("capture_id", &r.capture_id),
            ] {
                if value.is_empty() {
                    return Err(DatasetError::EmptyField { index, field });
                }
            }
            if !seen.insert(r.image_id.as_str()) {
                return Err(DatasetError::DuplicateImageId(r.image_id.clone()));
            }
            if let Some(lm) = &r.landmarks {
                if lm.validate().is_err() {
                    return Err(DatasetError::NonFiniteLandmarks(r.image_id.clone()));
                }
            }
        }
        Ok(Self { records, variant })
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, image_id: &str) -> Option<&ImageRecord> {
        self.records.iter().find(|r| r.image_id == image_id)
    }

    /// Records grouped by subject; subjects and their records are sorted by id.
    pub fn by_subject(&self) -> BTreeMap<&str, Vec<&ImageRecord>> {
        let mut groups: BTreeMap<&str, Vec<&ImageRecord>> = BTreeMap::new();
        for r in &self.records {
            groups.entry(r.subject_id.as_str()).or_default().push(r);
        }
        for v in groups.values_mut() {
            v.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        }
        groups
    }

    pub fn subject_count(&self) -> usize {
        self.by_subject().len()
    }

    /// Same records, ordered by image id.
    pub fn canonical(&self) -> Self {
        let mut records = self.records.clone();
        records.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        Self {
            records,
            variant: self.variant,
        }
    }

    /// Keeps the records for which `keep` holds. Fails if nothing remains.
    pub fn filtered(&self, mut keep: impl FnMut(&ImageRecord) -> bool) -> Result<Self, DatasetError> {
        Self::new(
            self.records.iter().filter(|r| keep(r)).cloned().collect(),
            self.variant,
        )
    }
}
