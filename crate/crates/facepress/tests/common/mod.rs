#![allow(dead_code)]

use std::path::{Path, PathBuf};

use facepress::config::{Resolved, RunConfig};
use facepress::io::{save_manifest, save_png};
use facepress_core::dataset::{DatasetManifest, ImageRecord, Variant};
use facepress_core::synth::synth_face;

/// Writes `subjects x captures` synthetic faces of side `size` plus a
/// manifest with landmarks into `dir`; returns the manifest path.
pub fn write_faces(dir: &Path, subjects: u64, captures: u64, size: u32) -> PathBuf {
    let mut records = Vec::new();
    for s in 0..subjects {
        for c in 0..captures {
            let face = synth_face(size, s, c);
            let id = format!("s{s:02}_c{c}");
            save_png(&face.image, &dir.join("src").join(format!("{id}.png"))).unwrap();
            records.push(ImageRecord {
                image_id: id.clone(),
                subject_id: format!("s{s:02}"),
                capture_id: format!("c{c}"),
                path: format!("src/{id}.png"),
                landmarks: Some(face.landmarks),
            });
        }
    }
    let path = dir.join("manifest.csv");
    save_manifest(&DatasetManifest::new(records, Variant::Roi).unwrap(), &path).unwrap();
    path
}

/// A config writing into `out` with the given codecs and ladder.
pub fn config(manifest: &Path, out: &Path, codecs: &[&str], ladder: &[u64]) -> (RunConfig, Resolved) {
    let mut cfg = RunConfig {
        manifest: manifest.to_path_buf(),
        out_root: out.to_path_buf(),
        codecs: codecs.iter().map(|c| c.to_string()).collect(),
        ladder: ladder.to_vec(),
        ..RunConfig::default()
    };
    let r = cfg.finalize().unwrap();
    (cfg, r)
}
