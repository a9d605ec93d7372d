//! Stage orchestration: prep, run, table and plot.
//!
//! Layout under `out_root`:
//! - `prep/`: preprocessed images and `manifest.csv`
//! - `<codec>/<target_bytes>/<image_id>.<ext>`: compressed cells
//! - `decoded/`, `staging/`: plugin inputs, only written when plugins run
//! - `cache/`: content-addressed compression results
//! - `reports/`: tables, figures and `run_report.toml`

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use facepress_core::analysis::{
    aggregate, distance_table, mean_curves, normalize_curves, AnalysisError, DistanceTable, NormalizationScope,
    RawRetention, ScoreCurve, ScoreSample, SizePointStats, XAxis,
};
use facepress_core::budget::CodecId;
use facepress_core::dataset::{DatasetManifest, ImageRecord, Variant};
use facepress_core::fiqa::QualityScore;
use facepress_core::geometry::{align_to_roi, crop_portrait};
use facepress_core::resample::bilinear_resize;
use facepress_core::trials::{
    generate_mated_other, generate_mated_self, generate_non_mated, mated_other_count, score_trials, toy_embed,
    ComparisonScore, EmbeddingKey, EmbeddingStore, EmbeddingVariant, TrialKind, TrialSet,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::codecs::decode_to_source_dims;
use crate::config::{NonMatedCount, Resolved, RunConfig};
use crate::io::{load_image, load_manifest, resolve, save_manifest, save_png, write_file, IoError};
use crate::ladder::{cell_path, report_to_string, run_ladder, LadderOptions};
use crate::plugins::{embed_with_plugin, load_store, save_store, score_with_plugin, PluginError, PluginSource};
use crate::svg::{render_panel, Panel, Series};
use crate::tables::{
    comparison_table, distance_table_text, load_comparison_table, load_score_table, score_table, stats_table,
    write_table, CellScore,
};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Plugin(#[from] PluginError),
    #[error("missing artifact {0}; run the producing stage first")]
    MissingArtifact(PathBuf),
    #[error("image_id {0:?} cannot be used as a file name")]
    UnsafeImageId(String),
    #[error("no record survived preprocessing")]
    NothingPrepared,
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// One non-fatal failure, attributed to a stage and item.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Failure {
    pub stage: String,
    pub item: String,
    pub message: String,
}

fn failure(stage: &str, item: impl Into<String>, message: impl ToString) -> Failure {
    Failure {
        stage: stage.into(),
        item: item.into(),
        message: message.to_string(),
    }
}

pub fn prep_dir(out_root: &Path) -> PathBuf {
    out_root.join("prep")
}

pub fn prep_manifest_path(out_root: &Path) -> PathBuf {
    prep_dir(out_root).join("manifest.csv")
}

pub fn reports_dir(out_root: &Path) -> PathBuf {
    out_root.join("reports")
}

pub const SCORES_FILE: &str = "scores.csv";
pub const COMPARISONS_FILE: &str = "comparisons.csv";
pub const STATS_FILE: &str = "stats.csv";
pub const CURVES_FILE: &str = "curves.csv";
pub const DISTANCE_FILE: &str = "distance.csv";
pub const LADDER_FILE: &str = "ladder_report.csv";
pub const EMBEDDINGS_FILE: &str = "embeddings.tsv";
pub const RUN_REPORT_FILE: &str = "run_report.toml";
pub const PREP_FAILURES_FILE: &str = "failures.csv";

fn check_ids(manifest: &DatasetManifest) -> Result<(), PipelineError> {
    for r in manifest.records() {
        let id = &r.image_id;
        if id.contains(['/', '\\']) || id == "." || id == ".." || id.contains('\0') {
            return Err(PipelineError::UnsafeImageId(id.clone()));
        }
    }
    Ok(())
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| PipelineError::ThreadPool(e.to_string()))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrepReport {
    pub written: usize,
    pub failures: Vec<Failure>,
    pub manifest_path: PathBuf,
}

fn failures_csv(failures: &[Failure]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["stage", "item", "message"]).expect("in-memory write");
    for f in failures {
        w.write_record([&f.stage, &f.item, &f.message]).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn read_failures_csv(path: &Path) -> Vec<Failure> {
    let Ok(text) = std::fs::read_to_string(path) else {
        return Vec::new();
    };
    csv::Reader::from_reader(text.as_bytes())
        .records()
        .filter_map(Result::ok)
        .map(|r| failure(&r[0], &r[1], &r[2]))
        .collect()
}

/// Aligns (ROI) or crops (portrait) every record with landmarks and writes
/// the results plus a manifest referencing them. Records without landmarks
/// or with degenerate geometry are skipped and reported.
pub fn cmd_prep(cfg: &RunConfig, r: &Resolved) -> Result<PrepReport, PipelineError> {
    let manifest = load_manifest(&cfg.manifest, r.variant)?;
    check_ids(&manifest)?;
    let dir = prep_dir(&cfg.out_root);
    let results: Vec<Result<ImageRecord, Failure>> = with_pool(cfg.jobs, || {
        manifest
            .records()
            .par_iter()
            .map(|rec| {
                let Some(lm) = &rec.landmarks else {
                    log::warn!("{}: no landmarks, skipped", rec.image_id);
                    return Err(failure("prep", &rec.image_id, "no landmarks"));
                };
                let src = load_image(&resolve(&cfg.manifest, &rec.path)).map_err(|e| failure("prep", &rec.image_id, e))?;
                let out = match r.variant {
                    Variant::Roi => align_to_roi(&src, lm, cfg.roi_size),
                    Variant::Portrait => crop_portrait(&src, lm, &r.geometry),
                }
                .map_err(|e| failure("prep", &rec.image_id, e))?;
                let file = format!("{}.png", rec.image_id);
                save_png(&out, &dir.join(&file)).map_err(|e| failure("prep", &rec.image_id, e))?;
                Ok(ImageRecord {
                    path: file,
                    landmarks: None,
                    ..rec.clone()
                })
            })
            .collect()
    })?;
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for res in results {
        match res {
            Ok(rec) => records.push(rec),
            Err(f) => {
                log::warn!("prep {}: {}", f.item, f.message);
                failures.push(f);
            }
        }
    }
    if records.is_empty() {
        return Err(PipelineError::NothingPrepared);
    }
    let written = records.len();
    let prepared = DatasetManifest::new(records, r.variant).expect("subset of a valid manifest");
    let manifest_path = prep_manifest_path(&cfg.out_root);
    save_manifest(&prepared, &manifest_path)?;
    write_file(&dir.join(PREP_FAILURES_FILE), failures_csv(&failures).as_bytes())?;
    Ok(PrepReport {
        written,
        failures,
        manifest_path,
    })
}

/// Identity of an image variant to be scored or embedded.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct ItemKey {
    image_id: String,
    variant: EmbeddingVariant,
}

impl ItemKey {
    fn label(&self) -> String {
        match self.variant {
            EmbeddingVariant::Lossless => format!("{} lossless", self.image_id),
            EmbeddingVariant::Lossy { codec, target_bytes } => format!("{} {codec} {target_bytes}", self.image_id),
        }
    }
}

#[derive(Default)]
struct ImageResults {
    scores: Vec<CellScore>,
    embeddings: Vec<(ItemKey, Vec<f64>)>,
    plugin_inputs: Vec<(ItemKey, PathBuf)>,
    failures: Vec<Failure>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EncoderVersion {
    pub codec: String,
    pub version: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialCount {
    pub kind: String,
    pub pairs: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub facepress_version: String,
    pub size_unit: String,
    pub config: RunConfig,
    pub timing: Vec<StageTiming>,
    pub encoders: Vec<EncoderVersion>,
    pub trials: Vec<TrialCount>,
    pub failures: Vec<Failure>,
    /// Files under `out_root`, relative paths; compressed cells are counted
    /// in the ladder report instead of listed.
    pub files: Vec<String>,
}

struct Timer(Vec<StageTiming>, Instant);

impl Timer {
    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.0.push(StageTiming {
            stage: stage.into(),
            seconds: (now - self.1).as_secs_f64(),
        });
        self.1 = now;
    }
}

fn run_manifest(cfg: &RunConfig, variant: Variant) -> Result<(DatasetManifest, PathBuf), PipelineError> {
    let path = if cfg.preprocessed {
        cfg.manifest.clone()
    } else {
        prep_manifest_path(&cfg.out_root)
    };
    if !path.exists() {
        return Err(PipelineError::MissingArtifact(path));
    }
    Ok((load_manifest(&path, variant)?, path))
}

fn plugins_need_files(cfg: &RunConfig, r: &Resolved) -> bool {
    !r.scorers.is_empty() || cfg.embedder.kind == "plugin"
}

/// Scores and embeds one source image and every compressed cell of it.
#[allow(clippy::too_many_arguments)]
fn process_image(
    cfg: &RunConfig,
    r: &Resolved,
    rec: &ImageRecord,
    manifest_path: &Path,
    cells: &[(CodecId, u64)],
    toy: bool,
    write_decoded: bool,
) -> ImageResults {
    let mut out = ImageResults::default();
    let src_path = resolve(manifest_path, &rec.path);
    let source = match load_image(&src_path) {
        Ok(img) => img,
        Err(e) => {
            out.failures.push(failure("score", &rec.image_id, e));
            return out;
        }
    };
    let lossless = ItemKey {
        image_id: rec.image_id.clone(),
        variant: EmbeddingVariant::Lossless,
    };
    if toy {
        out.embeddings.push((lossless.clone(), toy_embed(&source)));
    }
    out.plugin_inputs.push((lossless, src_path));
    for &(codec, target_bytes) in cells {
        let key = ItemKey {
            image_id: rec.image_id.clone(),
            variant: EmbeddingVariant::Lossy { codec, target_bytes },
        };
        let file = cell_path(&cfg.out_root, &rec.image_id, codec, target_bytes);
        let decoded = std::fs::read(&file)
            .map_err(|e| e.to_string())
            .and_then(|p| decode_to_source_dims(&p, codec, source.dims()).map_err(|e| e.to_string()));
        let img = match decoded {
            Ok(img) => img,
            Err(e) => {
                out.failures.push(failure("decode", key.label(), e));
                continue;
            }
        };
        for m in &r.builtin_metrics {
            out.scores.push(CellScore {
                codec,
                target_bytes,
                score: m.score_record(&rec.image_id, &img),
            });
        }
        if toy {
            out.embeddings.push((key.clone(), toy_embed(&img)));
        }
        if write_decoded {
            let path = cfg
                .out_root
                .join("decoded")
                .join(codec.name())
                .join(target_bytes.to_string())
                .join(format!("{}.png", rec.image_id));
            match save_png(&img, &path) {
                Ok(()) => out.plugin_inputs.push((key, path)),
                Err(e) => out.failures.push(failure("decode", key.label(), e)),
            }
        }
    }
    out
}

/// Bilinear-resized copies for plugins with a fixed input size. Returns the
/// path handed to the plugin for each input.
fn stage_inputs(out_root: &Path, size: Option<u32>, inputs: &[(ItemKey, PathBuf)]) -> Vec<Result<PathBuf, String>> {
    let Some(size) = size else {
        return inputs.iter().map(|(_, p)| Ok(p.clone())).collect();
    };
    inputs
        .par_iter()
        .map(|(key, p)| {
            let sub = match key.variant {
                EmbeddingVariant::Lossless => PathBuf::from("lossless"),
                EmbeddingVariant::Lossy { codec, target_bytes } => {
                    PathBuf::from(codec.name()).join(target_bytes.to_string())
                }
            };
            let dst = out_root
                .join("staging")
                .join(size.to_string())
                .join(sub)
                .join(format!("{}.png", key.image_id));
            let img = load_image(p).map_err(|e| e.to_string())?;
            let resized = bilinear_resize(&img, size, size).map_err(|e| e.to_string())?;
            save_png(&resized, &dst).map_err(|e| e.to_string())?;
            Ok(absolute(&dst))
        })
        .collect()
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

/// Builds the configured trial sets. A non-mated set that cannot be sampled
/// is recorded in `failures` and left out.
pub fn trial_sets(manifest: &DatasetManifest, cfg: &RunConfig, kinds: &[TrialKind], failures: &mut Vec<Failure>) -> Vec<TrialSet> {
    let mut sets = Vec::new();
    for &kind in kinds {
        match kind {
            TrialKind::MatedOther => sets.push(generate_mated_other(manifest)),
            TrialKind::MatedSelf => sets.push(generate_mated_self(manifest)),
            TrialKind::NonMated => {
                let count = match cfg.non_mated_count {
                    NonMatedCount::Explicit(n) => n,
                    NonMatedCount::Policy(_) => mated_other_count(manifest),
                };
                match generate_non_mated(manifest, count, cfg.non_mated_seed) {
                    Ok(t) => sets.push(t),
                    Err(e) => failures.push(failure("trials", kind.name(), e)),
                }
            }
        }
    }
    sets
}

/// Results of the analysis stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub stats: Vec<SizePointStats>,
    pub normalized: Vec<ScoreCurve>,
    pub table: Result<DistanceTable, AnalysisError>,
}

/// Aggregates quality and comparison scores, normalizes the mean curves
/// and computes the distance table for the mated trial kinds.
#[allow(clippy::too_many_arguments)]
pub fn analyze(
    scores: &[CellScore],
    comparisons: &[ComparisonScore],
    quality_methods: &[String],
    kinds: &[TrialKind],
    codecs: &[CodecId],
    scope: NormalizationScope,
    axis: XAxis,
    retention: RawRetention,
) -> Analysis {
    let mut samples: Vec<ScoreSample> = scores
        .iter()
        .filter(|s| codecs.contains(&s.codec))
        .map(|s| ScoreSample {
            method: s.score.method.clone(),
            codec: s.codec,
            target_bytes: s.target_bytes,
            value: s.score.value,
        })
        .collect();
    samples.extend(comparisons.iter().filter(|c| codecs.contains(&c.codec)).map(|c| ScoreSample {
        method: c.pair.kind.name().into(),
        codec: c.codec,
        target_bytes: c.target_bytes,
        value: c.value,
    }));
    let stats = aggregate(&samples, retention);
    let normalized = normalize_curves(&mean_curves(&stats), scope);
    let mated: Vec<TrialKind> = kinds
        .iter()
        .copied()
        .filter(|k| matches!(k, TrialKind::MatedOther | TrialKind::MatedSelf))
        .collect();
    let table = distance_table(&normalized, quality_methods, &mated, codecs, axis);
    Analysis {
        stats,
        normalized,
        table,
    }
}

fn curves_table(curves: &[ScoreCurve]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "codec", "target_bytes", "normalized_mean"]).expect("in-memory write");
    for c in curves {
        for (x, y) in &c.points {
            w.write_record([c.method.clone(), c.codec.name().into(), x.to_string(), format!("{y}")])
                .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// Writes stats, curves and (when computable) the distance table. Returns
/// written file names.
fn write_analysis_tables(dir: &Path, a: &Analysis) -> Result<Vec<String>, PipelineError> {
    let mut files = vec![STATS_FILE.to_string(), CURVES_FILE.to_string()];
    write_table(&dir.join(STATS_FILE), &stats_table(&a.stats))?;
    write_table(&dir.join(CURVES_FILE), &curves_table(&a.normalized))?;
    if let Ok(t) = &a.table {
        write_table(&dir.join(DISTANCE_FILE), &distance_table_text(t))?;
        files.push(DISTANCE_FILE.into());
    }
    Ok(files)
}

/// One comparison-score panel and one normalized-curve panel per codec.
pub fn figures(a: &Analysis, kinds: &[TrialKind], codecs: &[CodecId]) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for &codec in codecs {
        let comparison: Vec<Series> = kinds
            .iter()
            .filter_map(|k| {
                let rows: Vec<&SizePointStats> =
                    a.stats.iter().filter(|s| s.codec == codec && s.method == k.name()).collect();
                (!rows.is_empty()).then(|| Series {
                    label: k.name().into(),
                    points: rows.iter().map(|s| (s.target_bytes, s.mean)).collect(),
                    scatter: rows
                        .iter()
                        .flat_map(|s| s.raw_values.iter().flatten().map(move |&v| (s.target_bytes, v)))
                        .collect(),
                    extremes: rows.iter().map(|s| (s.target_bytes, s.min, s.max)).collect(),
                })
            })
            .collect();
        if !comparison.is_empty() {
            out.push((
                format!("comparison_{}.svg", codec.name()),
                render_panel(&Panel {
                    title: format!("{}: comparison scores", codec.label()),
                    y_label: "similarity".into(),
                    y_range: None,
                    series: comparison,
                }),
            ));
        }
        let normalized: Vec<Series> = a
            .normalized
            .iter()
            .filter(|c| c.codec == codec)
            .map(|c| Series {
                label: c.method.clone(),
                points: c.points.clone(),
                ..Default::default()
            })
            .collect();
        if !normalized.is_empty() {
            out.push((
                format!("normalized_{}.svg", codec.name()),
                render_panel(&Panel {
                    title: format!("{}: normalized mean curves", codec.label()),
                    y_label: "normalized mean".into(),
                    y_range: Some((0.0, 1.0)),
                    series: normalized,
                }),
            ));
        }
    }
    out
}

fn write_figures(dir: &Path, a: &Analysis, kinds: &[TrialKind], codecs: &[CodecId]) -> Result<Vec<String>, PipelineError> {
    let mut files = Vec::new();
    for (name, svg) in figures(a, kinds, codecs) {
        write_file(&dir.join("figures").join(&name), svg.as_bytes())?;
        files.push(format!("figures/{name}"));
    }
    Ok(files)
}

/// Quality method names in column order: built-ins, then scorer plugins.
pub fn quality_methods(cfg: &RunConfig) -> Vec<String> {
    let mut m = cfg.fiqa_methods.clone();
    m.extend(cfg.scorers.iter().map(|s| s.name.clone()));
    m
}

/// Runs compress, decode, quality scoring, embedding, trial scoring and
/// analysis. Writes everything under `out_root` and returns the report.
pub fn cmd_run(cfg: &RunConfig, r: &Resolved) -> Result<RunReport, PipelineError> {
    with_pool(cfg.jobs, || run_inner(cfg, r))?
}

fn run_inner(cfg: &RunConfig, r: &Resolved) -> Result<RunReport, PipelineError> {
    let mut timer = Timer(Vec::new(), Instant::now());
    let (manifest, manifest_path) = run_manifest(cfg, r.variant)?;
    check_ids(&manifest)?;
    let reports = reports_dir(&cfg.out_root);
    let mut failures = read_failures_csv(&prep_dir(&cfg.out_root).join(PREP_FAILURES_FILE));
    let mut files = Vec::new();

    let options = LadderOptions {
        mode: r.search,
        cache_dir: cfg.cache.then(|| cfg.out_root.join("cache")),
    };
    let ladder = run_ladder(&manifest, &manifest_path, &r.codecs, &r.ladder, &cfg.out_root, &options);
    write_table(&reports.join(LADDER_FILE), &report_to_string(&ladder))?;
    files.push(format!("reports/{LADDER_FILE}"));
    let mut cells: BTreeMap<&str, Vec<(CodecId, u64)>> = BTreeMap::new();
    for row in &ladder.rows {
        match &row.result {
            Ok(_) => cells.entry(row.image_id.as_str()).or_default().push((row.codec, row.target_bytes)),
            Err(e) => failures.push(failure("compress", format!("{} {} {}", row.image_id, row.codec, row.target_bytes), e)),
        }
    }
    timer.lap("compress");

    let toy = cfg.embedder.kind == "toy";
    let write_decoded = plugins_need_files(cfg, r);
    let per_image: Vec<ImageResults> = manifest
        .records()
        .par_iter()
        .map(|rec| {
            let c = cells.get(rec.image_id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
            process_image(cfg, r, rec, &manifest_path, c, toy, write_decoded)
        })
        .collect();
    let mut scores = Vec::new();
    let mut embedded: Vec<(ItemKey, Vec<f64>)> = Vec::new();
    let mut inputs: Vec<(ItemKey, PathBuf)> = Vec::new();
    for res in per_image {
        scores.extend(res.scores);
        embedded.extend(res.embeddings);
        inputs.extend(res.plugin_inputs);
        failures.extend(res.failures);
    }
    let lossy_inputs: Vec<(ItemKey, PathBuf)> =
        inputs.iter().filter(|(k, _)| k.variant != EmbeddingVariant::Lossless).cloned().collect();
    for plugin in &r.scorers {
        let staged = stage_inputs(&cfg.out_root, plugin.expected_input_size, &lossy_inputs);
        let mut keyed: BTreeMap<PathBuf, &ItemKey> = BTreeMap::new();
        let mut paths = Vec::new();
        for ((key, _), s) in lossy_inputs.iter().zip(staged) {
            match s {
                Ok(p) => {
                    keyed.insert(p.clone(), key);
                    paths.push(p);
                }
                Err(e) => failures.push(failure(&format!("score:{}", plugin.name), key.label(), e)),
            }
        }
        let out = score_with_plugin(plugin, &paths)?;
        for (path, res) in out.results {
            let key = keyed[&path];
            let EmbeddingVariant::Lossy { codec, target_bytes } = key.variant else {
                continue;
            };
            match res {
                Ok(value) => scores.push(CellScore {
                    codec,
                    target_bytes,
                    score: QualityScore {
                        image_id: key.image_id.clone(),
                        method: plugin.name.clone(),
                        value,
                    },
                }),
                Err(e) => failures.push(failure(&format!("score:{}", plugin.name), key.label(), e)),
            }
        }
        for line in out.unexpected {
            log::warn!("scorer {}: unexpected output line {line:?}", plugin.name);
        }
    }
    scores.sort_by(|a, b| {
        (&a.score.image_id, a.codec.name(), a.target_bytes, &a.score.method)
            .cmp(&(&b.score.image_id, b.codec.name(), b.target_bytes, &b.score.method))
    });
    write_table(&reports.join(SCORES_FILE), &score_table(&scores))?;
    files.push(format!("reports/{SCORES_FILE}"));
    timer.lap("quality");

    let store: EmbeddingStore = match cfg.embedder.kind.as_str() {
        "precomputed" => load_store(cfg.embedder.path.as_ref().expect("validated"))?,
        "plugin" => {
            let staged = stage_inputs(&cfg.out_root, cfg.embedder.expected_input_size, &inputs);
            let mut keyed: BTreeMap<PathBuf, &ItemKey> = BTreeMap::new();
            let mut paths = Vec::new();
            for ((key, _), s) in inputs.iter().zip(staged) {
                match s {
                    Ok(p) => {
                        keyed.insert(p.clone(), key);
                        paths.push(p);
                    }
                    Err(e) => failures.push(failure("embed", key.label(), e)),
                }
            }
            let source = PluginSource::Command(cfg.embedder.command.clone().expect("validated"));
            let out = embed_with_plugin("embedder", &source, &paths)?;
            let mut store = EmbeddingStore::new();
            for (path, res) in out.results {
                let key = keyed[&path];
                match res {
                    Ok(v) => {
                        store.insert(EmbeddingKey::new(&key.image_id, key.variant), v);
                    }
                    Err(e) => failures.push(failure("embed", key.label(), e)),
                }
            }
            store
        }
        _ => embedded
            .into_iter()
            .map(|(k, v)| (EmbeddingKey::new(&k.image_id, k.variant), v))
            .collect(),
    };
    if cfg.embedder.kind != "precomputed" {
        save_store(&store, &reports.join(EMBEDDINGS_FILE))?;
        files.push(format!("reports/{EMBEDDINGS_FILE}"));
    }
    timer.lap("embed");

    let sets = trial_sets(&manifest, cfg, &r.trial_kinds, &mut failures);
    let mut comparisons = Vec::new();
    for set in &sets {
        for &codec in &r.codecs {
            for b in &r.ladder {
                let scored = score_trials(set, &store, codec, b.bytes());
                comparisons.extend(scored.scores);
                failures.extend(scored.failures.into_iter().map(|f| {
                    failure(
                        "trials",
                        format!("{} {} {} {} {}", f.pair.kind.name(), codec, b.bytes(), f.pair.probe_id, f.pair.reference_id),
                        f.error,
                    )
                }));
            }
        }
    }
    write_table(&reports.join(COMPARISONS_FILE), &comparison_table(&comparisons))?;
    files.push(format!("reports/{COMPARISONS_FILE}"));
    timer.lap("trials");

    let methods = quality_methods(cfg);
    let a = analyze(&scores, &comparisons, &methods, &r.trial_kinds, &r.codecs, r.normalization, r.x_axis, r.retention);
    if let Err(e) = &a.table {
        failures.push(failure("analysis", "distance table", e));
    }
    files.extend(write_analysis_tables(&reports, &a)?.into_iter().map(|f| format!("reports/{f}")));
    files.extend(write_figures(&reports, &a, &r.trial_kinds, &r.codecs)?.into_iter().map(|f| format!("reports/{f}")));
    timer.lap("analysis");

    files.push(format!("reports/{RUN_REPORT_FILE}"));
    files.sort();
    let report = RunReport {
        facepress_version: env!("CARGO_PKG_VERSION").into(),
        size_unit: "1 kB = 1000 bytes".into(),
        config: cfg.clone(),
        timing: timer.0,
        encoders: ladder
            .encoder_versions
            .iter()
            .map(|(c, v)| EncoderVersion {
                codec: c.clone(),
                version: v.clone(),
            })
            .collect(),
        trials: sets
            .iter()
            .map(|s| TrialCount {
                kind: s.kind.name().into(),
                pairs: s.len(),
            })
            .collect(),
        failures,
        files,
    };
    let text = toml::to_string(&report).expect("report is serializable");
    write_file(&reports.join(RUN_REPORT_FILE), text.as_bytes())?;
    Ok(report)
}

/// Optional subset of codecs for re-rendering.
#[derive(Debug, Clone, Default)]
pub struct Selection {
    pub codecs: Option<Vec<CodecId>>,
}

fn load_stores(cfg: &RunConfig) -> Result<(Vec<CellScore>, Vec<ComparisonScore>), PipelineError> {
    let dir = reports_dir(&cfg.out_root);
    let need = |name: &str| {
        let p = dir.join(name);
        if p.exists() {
            Ok(p)
        } else {
            Err(PipelineError::MissingArtifact(p))
        }
    };
    let scores = load_score_table(&need(SCORES_FILE)?)?;
    let comparisons = load_comparison_table(&need(COMPARISONS_FILE)?)?;
    Ok((scores, comparisons))
}

fn selected_codecs(r: &Resolved, sel: &Selection) -> Vec<CodecId> {
    match &sel.codecs {
        Some(c) => r.codecs.iter().copied().filter(|x| c.contains(x)).collect(),
        None => r.codecs.clone(),
    }
}

/// Re-renders stats, curves and distance tables from persisted score
/// stores. Returns written paths.
pub fn cmd_table(cfg: &RunConfig, r: &Resolved, sel: &Selection) -> Result<Vec<PathBuf>, PipelineError> {
    let (scores, comparisons) = load_stores(cfg)?;
    let codecs = selected_codecs(r, sel);
    let a = analyze(&scores, &comparisons, &quality_methods(cfg), &r.trial_kinds, &codecs, r.normalization, r.x_axis, r.retention);
    if let Err(e) = &a.table {
        log::warn!("distance table not written: {e}");
    }
    let dir = reports_dir(&cfg.out_root);
    Ok(write_analysis_tables(&dir, &a)?.into_iter().map(|f| dir.join(f)).collect())
}

/// Re-renders figures from persisted score stores.
pub fn cmd_plot(cfg: &RunConfig, r: &Resolved, sel: &Selection) -> Result<Vec<PathBuf>, PipelineError> {
    let (scores, comparisons) = load_stores(cfg)?;
    let codecs = selected_codecs(r, sel);
    let a = analyze(&scores, &comparisons, &quality_methods(cfg), &r.trial_kinds, &codecs, r.normalization, r.x_axis, r.retention);
    let dir = reports_dir(&cfg.out_root);
    Ok(write_figures(&dir, &a, &r.trial_kinds, &codecs)?.into_iter().map(|f| dir.join(f)).collect())
}
