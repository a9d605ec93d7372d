//! Run configuration (TOML).

use std::path::{Path, PathBuf};

use facepress_core::analysis::{NormalizationScope, RawRetention, XAxis};
use facepress_core::budget::{portrait_ladder, roi_ladder, ByteBudget, CodecId, SearchMode};
use facepress_core::dataset::Variant;
use facepress_core::fiqa::BuiltinMetric;
use facepress_core::geometry::{PortraitGeometry, DEFAULT_ROI_SIZE};
use facepress_core::trials::TrialKind;
use serde::{Deserialize, Serialize};

use crate::plugins::{PluginSource, ScorerPlugin};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NonMatedCount {
    /// Only `"equal_to_mated_other"` is accepted.
    Policy(String),
    Explicit(usize),
}

pub const EQUAL_TO_MATED_OTHER: &str = "equal_to_mated_other";

impl Default for NonMatedCount {
    fn default() -> Self {
        NonMatedCount::Policy(EQUAL_TO_MATED_OTHER.into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScorerConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precomputed: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_input_size: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedderConfig {
    /// `toy`, `plugin` or `precomputed`.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Vec<String>>,
    /// Embedding store file for `precomputed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_input_size: Option<u32>,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            kind: "toy".into(),
            command: None,
            path: None,
            expected_input_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PortraitConfig {
    pub width_per_ied: f64,
    pub height_per_emd: f64,
    pub eye_line_fraction: f64,
    pub fill: [u8; 3],
}

impl Default for PortraitConfig {
    fn default() -> Self {
        let g = PortraitGeometry::default();
        Self {
            width_per_ied: g.width_per_ied,
            height_per_emd: g.height_per_emd,
            eye_line_fraction: g.eye_line_fraction,
            fill: g.fill,
        }
    }
}

impl PortraitConfig {
    pub fn geometry(&self) -> PortraitGeometry {
        PortraitGeometry {
            width_per_ied: self.width_per_ied,
            height_per_emd: self.height_per_emd,
            eye_line_fraction: self.eye_line_fraction,
            fill: self.fill,
        }
    }
}

/// Everything needed to re-execute a run. [`RunConfig::finalize`] fills
/// variant-dependent defaults so the echoed file is self-contained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub manifest: PathBuf,
    /// `roi` or `portrait`.
    pub variant: String,
    pub out_root: PathBuf,
    /// Treat the manifest images as already preprocessed.
    pub preprocessed: bool,
    pub roi_size: u32,
    pub portrait: PortraitConfig,
    pub codecs: Vec<String>,
    /// Target sizes in bytes, strictly decreasing. Empty selects the
    /// variant's default ladder.
    pub ladder: Vec<u64>,
    pub trial_kinds: Vec<String>,
    pub non_mated_seed: u64,
    pub non_mated_count: NonMatedCount,
    /// Built-in metric names.
    pub fiqa_methods: Vec<String>,
    pub scorers: Vec<ScorerConfig>,
    pub embedder: EmbedderConfig,
    /// `per_method_global` or `per_curve`.
    pub normalization: String,
    /// `target_bytes` or `equal_spacing`.
    pub x_axis: String,
    /// Raw values kept per stats row for scatter plots; absent keeps all.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_values_cap: Option<usize>,
    /// `bisection` or `exhaustive`.
    pub search: String,
    pub cache: bool,
    /// Worker threads; 0 uses all cores.
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            manifest: PathBuf::from("manifest.csv"),
            variant: Variant::Roi.as_str().into(),
            out_root: PathBuf::from("out"),
            preprocessed: false,
            roi_size: DEFAULT_ROI_SIZE,
            portrait: PortraitConfig::default(),
            codecs: CodecId::ALL.iter().map(|c| c.name().to_string()).collect(),
            ladder: Vec::new(),
            trial_kinds: TrialKind::ALL.iter().map(|k| k.name().to_string()).collect(),
            non_mated_seed: 0,
            non_mated_count: NonMatedCount::default(),
            fiqa_methods: BuiltinMetric::ALL.iter().map(|m| m.name().to_string()).collect(),
            scorers: Vec::new(),
            embedder: EmbedderConfig::default(),
            normalization: "per_method_global".into(),
            x_axis: "target_bytes".into(),
            raw_values_cap: None,
            search: "bisection".into(),
            cache: true,
            jobs: 0,
        }
    }
}

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out_root: Option<PathBuf>,
    pub codecs: Option<Vec<String>>,
    pub ladder: Option<Vec<u64>>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub variant: Option<String>,
}

/// Typed view of a validated config.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub variant: Variant,
    pub codecs: Vec<CodecId>,
    pub ladder: Vec<ByteBudget>,
    pub trial_kinds: Vec<TrialKind>,
    pub builtin_metrics: Vec<BuiltinMetric>,
    pub scorers: Vec<ScorerPlugin>,
    pub normalization: NormalizationScope,
    pub x_axis: XAxis,
    pub retention: RawRetention,
    pub search: SearchMode,
    pub geometry: PortraitGeometry,
}

fn absolutize(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Reads a config file; relative paths are taken relative to its
    /// directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase(base);
        Ok(cfg)
    }

    /// Makes every relative path absolute against `base`.
    pub fn rebase(&mut self, base: &Path) {
        self.manifest = absolutize(base, &self.manifest);
        self.out_root = absolutize(base, &self.out_root);
        for s in &mut self.scorers {
            if let Some(p) = &s.precomputed {
                s.precomputed = Some(absolutize(base, p));
            }
        }
        if let Some(p) = &self.embedder.path {
            self.embedder.path = Some(absolutize(base, p));
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = &o.out_root {
            self.out_root = v.clone();
        }
        if let Some(v) = &o.codecs {
            self.codecs = v.clone();
        }
        if let Some(v) = &o.ladder {
            self.ladder = v.clone();
        }
        if let Some(v) = o.seed {
            self.non_mated_seed = v;
        }
        if let Some(v) = o.jobs {
            self.jobs = v;
        }
        if let Some(v) = &o.variant {
            self.variant = v.clone();
        }
    }

    /// Fills the default ladder for the variant and validates.
    pub fn finalize(&mut self) -> Result<Resolved, ConfigError> {
        let variant = Variant::parse(&self.variant).ok_or_else(|| invalid(format!("unknown variant {:?}", self.variant)))?;
        if self.ladder.is_empty() {
            let l = match variant {
                Variant::Roi => roi_ladder(),
                Variant::Portrait => portrait_ladder(),
            };
            self.ladder = l.iter().map(|b| b.bytes()).collect();
        }
        self.resolve()
    }

    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        let variant = Variant::parse(&self.variant).ok_or_else(|| invalid(format!("unknown variant {:?}", self.variant)))?;
        let codecs = self
            .codecs
            .iter()
            .map(|c| c.parse::<CodecId>().map_err(|e| invalid(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        if codecs.is_empty() {
            return Err(invalid("at least one codec is required"));
        }
        if has_duplicates(&codecs) {
            return Err(invalid("duplicate codec"));
        }
        if self.ladder.windows(2).any(|w| w[0] <= w[1]) {
            return Err(invalid("ladder must be strictly decreasing"));
        }
        let ladder = self
            .ladder
            .iter()
            .map(|&b| ByteBudget::new(b).map_err(|_| invalid("ladder entries must be positive")))
            .collect::<Result<Vec<_>, _>>()?;
        if ladder.is_empty() {
            return Err(invalid("empty ladder"));
        }
        let trial_kinds = self
            .trial_kinds
            .iter()
            .map(|k| TrialKind::parse(k).ok_or_else(|| invalid(format!("unknown trial kind {k:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if trial_kinds.is_empty() {
            return Err(invalid("at least one trial kind is required"));
        }
        if has_duplicates(&trial_kinds) {
            return Err(invalid("duplicate trial kind"));
        }
        if let NonMatedCount::Policy(p) = &self.non_mated_count {
            if p != EQUAL_TO_MATED_OTHER {
                return Err(invalid(format!("unknown non_mated_count policy {p:?}")));
            }
        }
        if self.non_mated_count == NonMatedCount::Explicit(0) {
            return Err(invalid("non_mated_count must be positive"));
        }
        let builtin_metrics = self
            .fiqa_methods
            .iter()
            .map(|m| BuiltinMetric::from_name(m).ok_or_else(|| invalid(format!("unknown built-in metric {m:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let mut names: Vec<String> = self.fiqa_methods.clone();
        let mut scorers = Vec::new();
        for s in &self.scorers {
            let source = match (&s.command, &s.precomputed) {
                (Some(c), None) if !c.is_empty() => PluginSource::Command(c.clone()),
                (None, Some(p)) => PluginSource::Precomputed(p.clone()),
                _ => return Err(invalid(format!("scorer {:?} needs exactly one of command, precomputed", s.name))),
            };
            names.push(s.name.clone());
            scorers.push(ScorerPlugin {
                name: s.name.clone(),
                source,
                expected_input_size: s.expected_input_size,
            });
        }
        let mut sorted = names.clone();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("quality method names must be unique"));
        }
        if names.iter().any(|n| TrialKind::parse(n).is_some()) {
            return Err(invalid("quality method names may not reuse trial kind names"));
        }
        match self.embedder.kind.as_str() {
            "toy" => {}
            "plugin" if self.embedder.command.as_ref().is_some_and(|c| !c.is_empty()) => {}
            "precomputed" if self.embedder.path.is_some() => {}
            k => return Err(invalid(format!("embedder {k:?} is unknown or incomplete"))),
        }
        let normalization = NormalizationScope::parse(&self.normalization)
            .ok_or_else(|| invalid(format!("unknown normalization {:?}", self.normalization)))?;
        let x_axis = match self.x_axis.as_str() {
            "target_bytes" => XAxis::TargetBytes,
            "equal_spacing" => XAxis::EqualSpacing,
            a => return Err(invalid(format!("unknown x_axis {a:?}"))),
        };
        let search = match self.search.as_str() {
            "bisection" => SearchMode::Bisection,
            "exhaustive" => SearchMode::Exhaustive,
            s => return Err(invalid(format!("unknown search mode {s:?}"))),
        };
        let geometry = self.portrait.geometry();
        geometry.validate().map_err(|e| invalid(e.to_string()))?;
        if self.roi_size == 0 {
            return Err(invalid("roi_size must be positive"));
        }
        Ok(Resolved {
            variant,
            codecs,
            ladder,
            trial_kinds,
            builtin_metrics,
            scorers,
            normalization,
            x_axis,
            retention: self.raw_values_cap.map_or(RawRetention::All, RawRetention::AtMost),
            search,
            geometry,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }
}

fn has_duplicates<T: Ord + Clone>(v: &[T]) -> bool {
    let mut s = v.to_vec();
    s.sort();
    s.windows(2).any(|w| w[0] == w[1])
}

/// Parses a comma-separated list.
pub fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(String::from).collect()
}
