//! Comparison trials: embeddings, cosine similarity and the mated-other,
//! mated-self and non-mated trial configurations.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::budget::CodecId;
use crate::dataset::DatasetManifest;
use crate::fiqa::to_gray;
use crate::image::ImagePlane;
use crate::resample::bilinear_resize_luma;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimilarityError {
    #[error("embedding dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("zero-norm embedding; similarity undefined")]
    ZeroNorm,
    #[error("embedding contains non-finite components")]
    NonFinite,
}

/// `<a, b> / (|a| |b|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, SimilarityError> {
    if a.len() != b.len() {
        return Err(SimilarityError::DimensionMismatch(a.len(), b.len()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(SimilarityError::NonFinite);
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(SimilarityError::ZeroNorm);
    }
    Ok((dot / (libm::sqrt(na) * libm::sqrt(nb))).clamp(-1.0, 1.0))
}

pub const TOY_EMBEDDING_SIDE: u32 = 8;

/// Built-in stand-in for a recognition model: the luma plane bilinearly
/// downsampled to 8x8, flattened, mean-subtracted and L2-normalized.
/// Images without luma variation map to the zero vector.
pub fn toy_embed(image: &ImagePlane) -> Vec<f64> {
    let small = bilinear_resize_luma(&to_gray(image), TOY_EMBEDDING_SIDE, TOY_EMBEDDING_SIDE)
        .expect("nonzero target size");
    let mut v: Vec<f64> = small.values().to_vec();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
    if norm > 1e-12 {
        v.iter_mut().for_each(|x| *x /= norm);
    } else {
        v.iter_mut().for_each(|x| *x = 0.0);
    }
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrialKind {
    MatedOther,
    MatedSelf,
    NonMated,
}

impl TrialKind {
    pub const ALL: [TrialKind; 3] = [TrialKind::MatedOther, TrialKind::MatedSelf, TrialKind::NonMated];

    pub fn name(self) -> &'static str {
        match self {
            TrialKind::MatedOther => "mated-other",
            TrialKind::MatedSelf => "mated-self",
            TrialKind::NonMated => "non-mated",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "mated-other" => Some(TrialKind::MatedOther),
            "mated-self" => Some(TrialKind::MatedSelf),
            "non-mated" => Some(TrialKind::NonMated),
            _ => None,
        }
    }

    /// Which image variant each side of a pair uses.
    pub fn sources(self) -> (Source, Source) {
        match self {
            TrialKind::MatedSelf => (Source::Lossless, Source::Lossy),
            TrialKind::MatedOther | TrialKind::NonMated => (Source::Lossy, Source::Lossy),
        }
    }
}

impl fmt::Display for TrialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Source {
    /// The preprocessed image before any budget compression.
    Lossless,
    /// The decoded image compressed at the trial's codec and budget.
    Lossy,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TrialPair {
    pub probe_id: String,
    pub reference_id: String,
    pub kind: TrialKind,
}

impl TrialPair {
    pub fn probe_source(&self) -> Source {
        self.kind.sources().0
    }

    pub fn reference_source(&self) -> Source {
        self.kind.sources().1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialSet {
    pub kind: TrialKind,
    pub pairs: Vec<TrialPair>,
}

impl TrialSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

fn pair(a: &str, b: &str, kind: TrialKind) -> TrialPair {
    let (p, r) = if a <= b { (a, b) } else { (b, a) };
    TrialPair {
        probe_id: String::from(p),
        reference_id: String::from(r),
        kind,
    }
}

/// All unordered pairs of distinct records within each subject.
pub fn generate_mated_other(manifest: &DatasetManifest) -> TrialSet {
    let mut pairs = Vec::new();
    for records in manifest.by_subject().values() {
        for (i, a) in records.iter().enumerate() {
            for b in &records[i + 1..] {
                pairs.push(pair(&a.image_id, &b.image_id, TrialKind::MatedOther));
            }
        }
    }
    pairs.sort();
    TrialSet {
        kind: TrialKind::MatedOther,
        pairs,
    }
}

/// `sum n_i (n_i - 1) / 2` over subjects.
pub fn mated_other_count(manifest: &DatasetManifest) -> usize {
    manifest
        .by_subject()
        .values()
        .map(|r| r.len() * (r.len() - 1) / 2)
        .sum()
}

/// One lossless-vs-lossy pair per record.
pub fn generate_mated_self(manifest: &DatasetManifest) -> TrialSet {
    let mut pairs: Vec<TrialPair> = manifest
        .records()
        .iter()
        .map(|r| TrialPair {
            probe_id: r.image_id.clone(),
            reference_id: r.image_id.clone(),
            kind: TrialKind::MatedSelf,
        })
        .collect();
    pairs.sort();
    TrialSet {
        kind: TrialKind::MatedSelf,
        pairs,
    }
}

/// Number of unordered cross-subject pairs.
pub fn cross_subject_pair_count(manifest: &DatasetManifest) -> u64 {
    let n = manifest.len() as u64;
    let same: u64 = manifest
        .by_subject()
        .values()
        .map(|r| (r.len() as u64) * (r.len() as u64))
        .sum();
    (n * n - same) / 2
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SampleError {
    #[error("non-mated sampling needs at least two subjects")]
    TooFewSubjects,
    #[error("requested {requested} non-mated pairs but only {available} exist")]
    Infeasible { requested: usize, available: u64 },
    #[error("non-mated pair count must be at least 1")]
    ZeroCount,
}

/// Generator behind [`generate_non_mated`]: ChaCha8 seeded from a `u64`.
pub fn trial_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Samples `count` distinct cross-subject pairs uniformly without
/// replacement.
///
/// Records are put in image-id order first, so the result depends only on
/// manifest content, `count` and `seed`. When at most half of all
/// cross-subject pairs are requested, ordered record pairs are drawn
/// uniformly and same-subject or repeated pairs are rejected; otherwise all
/// pairs are enumerated and a partial Fisher-Yates shuffle picks `count`.
pub fn generate_non_mated(
    manifest: &DatasetManifest,
    count: usize,
    seed: u64,
) -> Result<TrialSet, SampleError> {
    if count == 0 {
        return Err(SampleError::ZeroCount);
    }
    if manifest.subject_count() < 2 {
        return Err(SampleError::TooFewSubjects);
    }
    let available = cross_subject_pair_count(manifest);
    if count as u64 > available {
        return Err(SampleError::Infeasible {
            requested: count,
            available,
        });
    }
    let canonical = manifest.canonical();
    let records = canonical.records();
    let n = records.len();
    let mut rng = trial_rng(seed);
    let mut chosen: BTreeSet<(usize, usize)> = BTreeSet::new();

    if (count as u64) * 2 <= available {
        while chosen.len() < count {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if records[i].subject_id == records[j].subject_id {
                continue;
            }
            chosen.insert((i.min(j), i.max(j)));
        }
    } else {
        let mut all = Vec::with_capacity(available as usize);
        for i in 0..n {
            for j in i + 1..n {
                if records[i].subject_id != records[j].subject_id {
                    all.push((i, j));
                }
            }
        }
        for k in 0..count {
            let pick = rng.random_range(k..all.len());
            all.swap(k, pick);
            chosen.insert(all[k]);
        }
    }

    let mut pairs: Vec<TrialPair> = chosen
        .into_iter()
        .map(|(i, j)| pair(&records[i].image_id, &records[j].image_id, TrialKind::NonMated))
        .collect();
    pairs.sort();
    Ok(TrialSet {
        kind: TrialKind::NonMated,
        pairs,
    })
}

/// Which stored image an embedding was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EmbeddingVariant {
    Lossless,
    Lossy { codec: CodecId, target_bytes: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EmbeddingKey {
    pub image_id: String,
    pub variant: EmbeddingVariant,
}

impl EmbeddingKey {
    pub fn new(image_id: &str, variant: EmbeddingVariant) -> Self {
        Self {
            image_id: String::from(image_id),
            variant,
        }
    }
}

pub type EmbeddingStore = BTreeMap<EmbeddingKey, Vec<f64>>;

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonScore {
    pub pair: TrialPair,
    pub codec: CodecId,
    pub target_bytes: u64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrialError {
    #[error("missing embedding for {image_id} ({variant:?})")]
    MissingEmbedding {
        image_id: String,
        variant: EmbeddingVariant,
    },
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialFailure {
    pub pair: TrialPair,
    pub codec: CodecId,
    pub target_bytes: u64,
    pub error: TrialError,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoredTrials {
    pub scores: Vec<ComparisonScore>,
    pub failures: Vec<TrialFailure>,
}

/// Scores every pair of `trials` at one (codec, budget) cell. Missing or
/// degenerate embeddings are collected as failures.
pub fn score_trials(
    trials: &TrialSet,
    store: &EmbeddingStore,
    codec: CodecId,
    target_bytes: u64,
) -> ScoredTrials {
    let lookup = |id: &str, source: Source| {
        let variant = match source {
            Source::Lossless => EmbeddingVariant::Lossless,
            Source::Lossy => EmbeddingVariant::Lossy {
                codec,
                target_bytes,
            },
        };
        store
            .get(&EmbeddingKey::new(id, variant))
            .ok_or_else(|| TrialError::MissingEmbedding {
                image_id: String::from(id),
                variant,
            })
    };
    let mut out = ScoredTrials::default();
    for p in &trials.pairs {
        let result = lookup(&p.probe_id, p.probe_source()).and_then(|a| {
            let b = lookup(&p.reference_id, p.reference_source())?;
            Ok(cosine_similarity(a, b)?)
        });
        match result {
            Ok(value) => out.scores.push(ComparisonScore {
                pair: p.clone(),
                codec,
                target_bytes,
                value,
            }),
            Err(error) => out.failures.push(TrialFailure {
                pair: p.clone(),
                codec,
                target_bytes,
                error,
            }),
        }
    }
    out
}
