//! Compression of every (image, codec, budget) cell with persisted output.

use std::fs;
use std::path::{Path, PathBuf};

use facepress_core::budget::{ByteBudget, CodecId, CodecParam, ParamGrid, SearchMode};
use facepress_core::dataset::DatasetManifest;
use facepress_core::{CompressionOutcome, ImagePlane};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::codecs::{adapter, compress_to_budgets};
use crate::io::{csv_err, io_err, load_image, resolve, write_file, IoError};

/// Location of one compressed cell under `out_root`.
pub fn cell_path(out_root: &Path, image_id: &str, codec: CodecId, target_bytes: u64) -> PathBuf {
    out_root
        .join(codec.name())
        .join(target_bytes.to_string())
        .join(format!("{image_id}.{}", codec.extension()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub chosen_param: CodecParam,
    pub achieved_bytes: usize,
    pub out_dims: (u32, u32),
    pub cached: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LadderRow {
    pub image_id: String,
    pub codec: CodecId,
    pub target_bytes: u64,
    pub result: Result<CellSummary, String>,
}

impl LadderRow {
    pub fn status(&self) -> String {
        match &self.result {
            Ok(_) => "ok".into(),
            Err(e) => format!("error: {e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LadderReport {
    pub rows: Vec<LadderRow>,
    /// `(codec name, encoder version)` for every codec in the run.
    pub encoder_versions: Vec<(String, String)>,
}

impl LadderReport {
    pub fn failures(&self) -> impl Iterator<Item = &LadderRow> {
        self.rows.iter().filter(|r| r.result.is_err())
    }
}

#[derive(Debug, Clone)]
pub struct LadderOptions {
    pub mode: SearchMode,
    /// Directory for content-addressed cell results; `None` disables caching.
    pub cache_dir: Option<PathBuf>,
}

impl Default for LadderOptions {
    fn default() -> Self {
        Self {
            mode: SearchMode::Bisection,
            cache_dir: None,
        }
    }
}

/// Cache key over the source pixels, codec, parameter grid, budget, search
/// mode and encoder version.
pub fn cache_key(image: &ImagePlane, codec: CodecId, budget: ByteBudget, mode: SearchMode) -> String {
    let grid = ParamGrid::new(codec, image.dims());
    let mut h = Sha256::new();
    h.update(image.width().to_le_bytes());
    h.update(image.height().to_le_bytes());
    h.update(image.samples());
    h.update(codec.name().as_bytes());
    h.update((grid.len() as u64).to_le_bytes());
    h.update(grid.param(0).value().to_le_bytes());
    h.update(grid.param(grid.len() - 1).value().to_le_bytes());
    h.update(budget.bytes().to_le_bytes());
    h.update([matches!(mode, SearchMode::Exhaustive) as u8]);
    h.update(adapter(codec).version().as_bytes());
    h.update(env!("CARGO_PKG_VERSION").as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn cache_lookup(dir: &Path, key: &str, codec: CodecId, budget: ByteBudget) -> Option<(CodecParam, Vec<u8>, (u32, u32))> {
    let meta = fs::read_to_string(dir.join(format!("{key}.meta"))).ok()?;
    let mut it = meta.split_whitespace();
    let param = CodecParam::from_value(codec, it.next()?.parse().ok()?).ok()?;
    let w = it.next()?.parse().ok()?;
    let h = it.next()?.parse().ok()?;
    let payload = fs::read(dir.join(format!("{key}.{}", codec.extension()))).ok()?;
    budget.fits(payload.len()).then_some((param, payload, (w, h)))
}

fn cache_store(dir: &Path, key: &str, o: &CompressionOutcome) -> Result<(), IoError> {
    write_file(&dir.join(format!("{key}.{}", o.codec.extension())), &o.payload)?;
    let meta = format!("{} {} {}\n", o.chosen_param.value(), o.out_dims.0, o.out_dims.1);
    write_file(&dir.join(format!("{key}.meta")), meta.as_bytes())
}

/// Compresses one image with one codec at every budget, consulting the
/// cache first. The flag tells whether a result came from the cache.
pub fn compress_cells(
    image_id: &str,
    image: &ImagePlane,
    codec: CodecId,
    budgets: &[ByteBudget],
    options: &LadderOptions,
) -> Vec<Result<(CompressionOutcome, bool), String>> {
    let keys: Vec<Option<(&PathBuf, String)>> = budgets
        .iter()
        .map(|&b| options.cache_dir.as_ref().map(|d| (d, cache_key(image, codec, b, options.mode))))
        .collect();
    let mut results: Vec<Option<Result<(CompressionOutcome, bool), String>>> = budgets
        .iter()
        .zip(&keys)
        .map(|(&budget, key)| {
            let (dir, key) = key.as_ref()?;
            let (chosen_param, payload, out_dims) = cache_lookup(dir, key, codec, budget)?;
            Some(Ok((
                CompressionOutcome {
                    image_id: image_id.to_string(),
                    codec,
                    budget,
                    chosen_param,
                    achieved_bytes: payload.len(),
                    payload,
                    out_dims,
                },
                true,
            )))
        })
        .collect();
    let pending: Vec<usize> = (0..budgets.len()).filter(|&k| results[k].is_none()).collect();
    let pending_budgets: Vec<ByteBudget> = pending.iter().map(|&k| budgets[k]).collect();
    let fresh = compress_to_budgets(image_id, image, codec, &pending_budgets, options.mode);
    for (k, outcome) in pending.into_iter().zip(fresh) {
        let outcome = outcome.map_err(|e| e.to_string());
        if let (Ok(o), Some((dir, key))) = (&outcome, &keys[k]) {
            if let Err(e) = cache_store(dir, key, o) {
                log::warn!("cache write failed: {e}");
            }
        }
        results[k] = Some(outcome.map(|o| (o, false)));
    }
    results.into_iter().map(|r| r.expect("every budget handled")).collect()
}

/// Compresses every (record, codec, budget) cell and writes the payloads
/// under `out_root`. Per-cell failures are recorded, not raised.
///
/// Image paths are resolved against `manifest_path`'s directory.
pub fn run_ladder(
    manifest: &DatasetManifest,
    manifest_path: &Path,
    codecs: &[CodecId],
    ladder: &[ByteBudget],
    out_root: &Path,
    options: &LadderOptions,
) -> LadderReport {
    let jobs: Vec<(usize, CodecId)> = (0..manifest.len())
        .flat_map(|i| codecs.iter().map(move |&c| (i, c)))
        .collect();
    let mut rows: Vec<LadderRow> = jobs
        .par_iter()
        .flat_map_iter(|&(i, codec)| {
            let record = &manifest.records()[i];
            let cells = match load_image(&resolve(manifest_path, &record.path)) {
                Ok(img) => compress_cells(&record.image_id, &img, codec, ladder, options),
                Err(e) => vec![Err(e.to_string()); ladder.len()],
            };
            ladder
                .iter()
                .zip(cells)
                .map(|(&budget, cell)| {
                    let result = cell.and_then(|(o, cached)| {
                        write_file(&cell_path(out_root, &record.image_id, codec, budget.bytes()), &o.payload)
                            .map_err(|e| e.to_string())?;
                        Ok(CellSummary {
                            chosen_param: o.chosen_param,
                            achieved_bytes: o.achieved_bytes,
                            out_dims: o.out_dims,
                            cached,
                        })
                    });
                    LadderRow {
                        image_id: record.image_id.clone(),
                        codec,
                        target_bytes: budget.bytes(),
                        result,
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    rows.sort_by(|a, b| {
        (&a.image_id, a.codec.name(), a.target_bytes).cmp(&(&b.image_id, b.codec.name(), b.target_bytes))
    });
    LadderReport {
        rows,
        encoder_versions: codecs.iter().map(|&c| (c.name().to_string(), adapter(c).version())).collect(),
    }
}

const REPORT_HEADER: [&str; 8] = [
    "image_id",
    "codec",
    "target_bytes",
    "chosen_param",
    "achieved_bytes",
    "out_w",
    "out_h",
    "status",
];

/// Report text: `#` comment lines with the unit and encoder versions, then
/// a CSV table. The cache flag is deliberately omitted so reruns match.
pub fn report_to_string(report: &LadderReport) -> String {
    let mut s = String::from("# target sizes in bytes; 1 kB = 1000 bytes\n");
    for (codec, version) in &report.encoder_versions {
        s.push_str(&format!("# encoder {codec}: {version}\n"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_HEADER).expect("in-memory write");
    for r in &report.rows {
        let (param, bytes, ow, oh) = match &r.result {
            Ok(c) => (
                format!("{}", c.chosen_param.value()),
                c.achieved_bytes.to_string(),
                c.out_dims.0.to_string(),
                c.out_dims.1.to_string(),
            ),
            Err(_) => Default::default(),
        };
        w.write_record([
            r.image_id.clone(),
            r.codec.name().to_string(),
            r.target_bytes.to_string(),
            param,
            bytes,
            ow,
            oh,
            r.status(),
        ])
        .expect("in-memory write");
    }
    s.push_str(std::str::from_utf8(&w.into_inner().expect("in-memory flush")).expect("utf-8"));
    s
}

pub fn parse_report(text: &str, path: &Path) -> Result<LadderReport, IoError> {
    let mut report = LadderReport::default();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("# encoder ") {
            if let Some((c, v)) = rest.split_once(": ") {
                report.encoder_versions.push((c.to_string(), v.to_string()));
            }
        }
    }
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    for (k, rec) in rd.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let row_err = |m: String| IoError::Row {
            path: path.to_path_buf(),
            row: k + 2,
            message: m,
        };
        let f = |i: usize| rec.get(i).unwrap_or_default();
        let codec: CodecId = f(1).parse().map_err(|e: facepress_core::budget::UnknownCodec| row_err(e.to_string()))?;
        let target_bytes = f(2).parse().map_err(|_| row_err("bad target_bytes".into()))?;
        let status = f(7);
        let result = if status == "ok" {
            let num = |i: usize| f(i).parse::<f64>().map_err(|_| row_err(format!("bad {}", REPORT_HEADER[i])));
            Ok(CellSummary {
                chosen_param: CodecParam::from_value(codec, num(3)?).map_err(|e| row_err(e.to_string()))?,
                achieved_bytes: num(4)? as usize,
                out_dims: (num(5)? as u32, num(6)? as u32),
                cached: false,
            })
        } else {
            Err(status.strip_prefix("error: ").unwrap_or(status).to_string())
        };
        report.rows.push(LadderRow {
            image_id: f(0).to_string(),
            codec,
            target_bytes,
            result,
        });
    }
    Ok(report)
}

pub fn load_report(path: &Path) -> Result<LadderReport, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_report(&text, path)
}
