//! External scorers and embedders.
//!
//! Subprocess protocol: the harness writes one absolute image path per line
//! to the plugin's stdin; the plugin answers with `path<TAB>value` lines on
//! stdout and exits with status 0. Scorers emit one decimal number, embedders
//! a comma-separated vector. Precomputed files use the same line format.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use facepress_core::budget::CodecId;
use facepress_core::trials::{EmbeddingKey, EmbeddingStore, EmbeddingVariant};
use serde::{Deserialize, Serialize};

use crate::io::{io_err, write_file, IoError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PluginSource {
    /// Program plus arguments.
    Command(Vec<String>),
    /// File of `path<TAB>value` lines.
    Precomputed(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorerPlugin {
    pub name: String,
    pub source: PluginSource,
    /// Images are bilinear-resized to this square size before scoring.
    #[serde(default)]
    pub expected_input_size: Option<u32>,
}

#[derive(Debug, thiserror::Error)]
pub enum PluginError {
    #[error("plugin {name}: empty command")]
    EmptyCommand { name: String },
    #[error("plugin {name}: launch of {program} failed: {source}")]
    Launch {
        name: String,
        program: String,
        #[source]
        source: std::io::Error,
    },
    #[error("plugin {name}: exited with {status}: {stderr}")]
    Exit {
        name: String,
        status: std::process::ExitStatus,
        stderr: String,
    },
    #[error("plugin {name}: output is not UTF-8")]
    Encoding { name: String },
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Per-image failure of a plugin call.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ItemFailure {
    #[error("no output line for this path")]
    Missing,
    #[error("path reported {0} times")]
    Duplicate(usize),
    #[error("malformed value {0:?}")]
    Malformed(String),
}

/// Outcome of one plugin call: exactly one entry per requested path.
#[derive(Debug, Clone, PartialEq)]
pub struct PluginOutput<T> {
    pub results: Vec<(PathBuf, Result<T, ItemFailure>)>,
    /// Output lines naming paths that were not requested.
    pub unexpected: Vec<String>,
}

fn run_command(name: &str, argv: &[String], paths: &[PathBuf]) -> Result<String, PluginError> {
    let (program, args) = argv.split_first().ok_or_else(|| PluginError::EmptyCommand { name: name.into() })?;
    let mut child = Command::new(program)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|source| PluginError::Launch {
            name: name.into(),
            program: program.clone(),
            source,
        })?;
    let mut input = String::new();
    for p in paths {
        input.push_str(&p.to_string_lossy());
        input.push('\n');
    }
    let mut stdin = child.stdin.take().expect("stdin is piped");
    let writer = std::thread::spawn(move || {
        // A plugin may exit without reading all input; that shows up as a
        // missing-path failure rather than a write error.
        let _ = stdin.write_all(input.as_bytes());
    });
    let out = child.wait_with_output().map_err(|source| PluginError::Launch {
        name: name.into(),
        program: program.clone(),
        source,
    })?;
    let _ = writer.join();
    if !out.status.success() {
        return Err(PluginError::Exit {
            name: name.into(),
            status: out.status,
            stderr: String::from_utf8_lossy(&out.stderr).trim().to_string(),
        });
    }
    String::from_utf8(out.stdout).map_err(|_| PluginError::Encoding { name: name.into() })
}

fn read_source(name: &str, source: &PluginSource, paths: &[PathBuf]) -> Result<(String, Option<PathBuf>), PluginError> {
    match source {
        PluginSource::Command(argv) => Ok((run_command(name, argv, paths)?, None)),
        PluginSource::Precomputed(file) => {
            let text = std::fs::read_to_string(file).map_err(io_err(file))?;
            Ok((text, file.parent().map(Path::to_path_buf)))
        }
    }
}

/// Matches `path<TAB>value` lines to `paths`. Relative paths in the output
/// are resolved against `base` when given.
fn match_lines<T>(
    text: &str,
    paths: &[PathBuf],
    base: Option<&Path>,
    parse: impl Fn(&str) -> Option<T>,
) -> PluginOutput<T> {
    let mut by_path: BTreeMap<PathBuf, Vec<&str>> = BTreeMap::new();
    let mut unexpected = Vec::new();
    let wanted: std::collections::BTreeSet<&PathBuf> = paths.iter().collect();
    for line in text.lines() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let Some((p, v)) = line.rsplit_once('\t') else {
            unexpected.push(line.to_string());
            continue;
        };
        let mut key = PathBuf::from(p);
        if let (false, Some(b)) = (key.is_absolute(), base) {
            let joined = b.join(&key);
            if !wanted.contains(&key) && wanted.contains(&joined) {
                key = joined;
            }
        }
        if wanted.contains(&key) {
            by_path.entry(key).or_default().push(v);
        } else {
            unexpected.push(line.to_string());
        }
    }
    let results = paths
        .iter()
        .map(|p| {
            let r = match by_path.get(p).map(Vec::as_slice) {
                None | Some([]) => Err(ItemFailure::Missing),
                Some([v]) => parse(v.trim()).ok_or_else(|| ItemFailure::Malformed(v.to_string())),
                Some(vs) => Err(ItemFailure::Duplicate(vs.len())),
            };
            (p.clone(), r)
        })
        .collect();
    PluginOutput { results, unexpected }
}

fn parse_score(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn parse_vector(s: &str) -> Option<Vec<f64>> {
    let v: Option<Vec<f64>> = s.split(',').map(|x| parse_score(x.trim())).collect();
    v.filter(|v| !v.is_empty())
}

/// Scores `images` with an external scorer.
pub fn score_with_plugin(plugin: &ScorerPlugin, images: &[PathBuf]) -> Result<PluginOutput<f64>, PluginError> {
    if images.is_empty() {
        return Ok(PluginOutput {
            results: Vec::new(),
            unexpected: Vec::new(),
        });
    }
    let (text, base) = read_source(&plugin.name, &plugin.source, images)?;
    Ok(match_lines(&text, images, base.as_deref(), parse_score))
}

/// Embeds `images` with an external embedder. Vectors of inconsistent
/// length are reported as malformed.
pub fn embed_with_plugin(name: &str, source: &PluginSource, images: &[PathBuf]) -> Result<PluginOutput<Vec<f64>>, PluginError> {
    if images.is_empty() {
        return Ok(PluginOutput {
            results: Vec::new(),
            unexpected: Vec::new(),
        });
    }
    let (text, base) = read_source(name, source, images)?;
    let mut out = match_lines(&text, images, base.as_deref(), parse_vector);
    let dim = out.results.iter().find_map(|(_, r)| r.as_ref().ok().map(Vec::len));
    if let Some(d) = dim {
        for (_, r) in &mut out.results {
            if let Ok(v) = r {
                if v.len() != d {
                    *r = Err(ItemFailure::Malformed(format!("dimension {} != {d}", v.len())));
                }
            }
        }
    }
    Ok(out)
}

const LOSSLESS: &str = "LOSSLESS";

fn format_vector(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",")
}

/// Serializes a store as `image_id<TAB>codec<TAB>target_bytes|LOSSLESS<TAB>v1,..`
/// lines in key order. Lossless rows carry `-` as codec.
pub fn store_to_string(store: &EmbeddingStore) -> String {
    let mut s = String::new();
    for (k, v) in store {
        let (codec, target) = match k.variant {
            EmbeddingVariant::Lossless => ("-".to_string(), LOSSLESS.to_string()),
            EmbeddingVariant::Lossy { codec, target_bytes } => (codec.name().to_string(), target_bytes.to_string()),
        };
        s.push_str(&format!("{}\t{codec}\t{target}\t{}\n", k.image_id, format_vector(v)));
    }
    s
}

pub fn parse_store(text: &str, path: &Path) -> Result<EmbeddingStore, IoError> {
    let mut store = EmbeddingStore::new();
    for (i, line) in text.lines().enumerate() {
        let row_err = |message: String| IoError::Row {
            path: path.to_path_buf(),
            row: i + 1,
            message,
        };
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let [id, codec, target, vec] = f.as_slice() else {
            return Err(row_err(format!("expected 4 tab-separated fields, found {}", f.len())));
        };
        let variant = if *target == LOSSLESS {
            EmbeddingVariant::Lossless
        } else {
            EmbeddingVariant::Lossy {
                codec: codec.parse::<CodecId>().map_err(|e| row_err(e.to_string()))?,
                target_bytes: target.parse().map_err(|_| row_err(format!("bad target {target:?}")))?,
            }
        };
        let v = parse_vector(vec).ok_or_else(|| row_err("malformed vector".into()))?;
        if store.insert(EmbeddingKey::new(id, variant), v).is_some() {
            return Err(row_err(format!("duplicate entry for {id}")));
        }
    }
    Ok(store)
}

pub fn load_store(path: &Path) -> Result<EmbeddingStore, IoError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_store(&text, path)
}

pub fn save_store(store: &EmbeddingStore, path: &Path) -> Result<(), IoError> {
    write_file(path, store_to_string(store).as_bytes())
}
