//! Score aggregation and curve-distance analytics.
//!
//! Mean score curves run over descending target sizes. After min-max
//! normalization, each curve is reduced to its mean height (trapezoidal
//! area divided by the x extent), and the distance between a quality curve
//! and a comparison curve is the absolute difference of those heights as a
//! rounded percentage.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::budget::CodecId;
use crate::round_half_away;
use crate::trials::TrialKind;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("curve needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("curve must be normalized before computing areas")]
    NotNormalized,
    #[error("curves have different x grids")]
    GridMismatch,
    #[error("curves belong to different codecs")]
    CodecMismatch,
    #[error("x values must be strictly decreasing")]
    UnsortedPoints,
    #[error("missing {codec} cell for {method} / {kind}")]
    MissingCodec {
        codec: CodecId,
        method: String,
        kind: TrialKind,
    },
    #[error("duplicate {codec} cell for {method} / {kind}")]
    DuplicateCodec {
        codec: CodecId,
        method: String,
        kind: TrialKind,
    },
    #[error("no cells to combine")]
    Empty,
}

/// One raw observation: a quality score of one image or a comparison score
/// of one pair, at one (codec, target size) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSample {
    pub method: String,
    pub codec: CodecId,
    pub target_bytes: u64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizePointStats {
    pub method: String,
    pub codec: CodecId,
    pub target_bytes: u64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub n: usize,
    /// Sorted raw values, when retained.
    pub raw_values: Option<Vec<f64>>,
}

/// How many raw values each stats row keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RawRetention {
    #[default]
    All,
    None,
    /// Keep an evenly spaced subset of at most this many sorted values.
    AtMost(usize),
}

fn retain(sorted: Vec<f64>, policy: RawRetention) -> Option<Vec<f64>> {
    match policy {
        RawRetention::All => Some(sorted),
        RawRetention::None => None,
        RawRetention::AtMost(k) if sorted.len() <= k => Some(sorted),
        RawRetention::AtMost(0) => Some(Vec::new()),
        RawRetention::AtMost(k) => {
            let n = sorted.len();
            Some((0..k).map(|i| sorted[i * (n - 1) / (k - 1).max(1)]).collect())
        }
    }
}

/// Per (method, codec, target size) mean, min, max and count.
///
/// Values inside each group are sorted before summation, so the result does
/// not depend on input order. Rows come out sorted by method, codec, then
/// descending target size.
pub fn aggregate(samples: &[ScoreSample], retention: RawRetention) -> Vec<SizePointStats> {
    let mut groups: BTreeMap<(&str, CodecId, core::cmp::Reverse<u64>), Vec<f64>> = BTreeMap::new();
    for s in samples {
        groups
            .entry((s.method.as_str(), s.codec, core::cmp::Reverse(s.target_bytes)))
            .or_default()
            .push(s.value);
    }
    groups
        .into_iter()
        .map(|((method, codec, size), mut values)| {
            values.sort_by(f64::total_cmp);
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n as f64;
            // Sorted, so the extremes are the ends; clamp the mean against rounding drift.
            let (min, max) = (values[0], values[n - 1]);
            SizePointStats {
                method: String::from(method),
                codec,
                target_bytes: size.0,
                mean: mean.clamp(min, max),
                min,
                max,
                n,
                raw_values: retain(values, retention),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreCurve {
    pub codec: CodecId,
    pub method: String,
    /// `(target_bytes, value)`, strictly decreasing in target size.
    pub points: Vec<(u64, f64)>,
    pub normalized: bool,
}

impl ScoreCurve {
    pub fn new(codec: CodecId, method: &str, mut points: Vec<(u64, f64)>) -> Result<Self, AnalysisError> {
        points.sort_by(|a, b| b.0.cmp(&a.0));
        if points.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(AnalysisError::UnsortedPoints);
        }
        Ok(Self {
            codec,
            method: String::from(method),
            points,
            normalized: false,
        })
    }

    pub fn xs(&self) -> impl Iterator<Item = u64> + '_ {
        self.points.iter().map(|p| p.0)
    }
}

/// Mean curves, one per (method, codec), from aggregated stats.
pub fn mean_curves(stats: &[SizePointStats]) -> Vec<ScoreCurve> {
    let mut grouped: BTreeMap<(&str, CodecId), Vec<(u64, f64)>> = BTreeMap::new();
    for s in stats {
        grouped
            .entry((s.method.as_str(), s.codec))
            .or_default()
            .push((s.target_bytes, s.mean));
    }
    grouped
        .into_iter()
        .map(|((method, codec), pts)| {
            ScoreCurve::new(codec, method, pts).expect("stats rows are unique per target size")
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormalizationScope {
    /// One (lo, hi) per method, pooled over all codecs and sizes.
    #[default]
    PerMethodGlobal,
    /// One (lo, hi) per curve.
    PerCurve,
}

impl NormalizationScope {
    pub fn name(self) -> &'static str {
        match self {
            NormalizationScope::PerMethodGlobal => "per_method_global",
            NormalizationScope::PerCurve => "per_curve",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "per_method_global" => Some(Self::PerMethodGlobal),
            "per_curve" => Some(Self::PerCurve),
            _ => None,
        }
    }
}

fn min_max<'a>(values: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

fn rescale(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.5
    }
}

/// Min-max normalization into `[0, 1]`; a degenerate range maps to 0.5.
pub fn normalize_curves(curves: &[ScoreCurve], scope: NormalizationScope) -> Vec<ScoreCurve> {
    let mut ranges: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    if scope == NormalizationScope::PerMethodGlobal {
        for c in curves {
            let (lo, hi) = min_max(c.points.iter().map(|p| &p.1));
            let e = ranges.entry(c.method.as_str()).or_insert((lo, hi));
            *e = (e.0.min(lo), e.1.max(hi));
        }
    }
    curves
        .iter()
        .map(|c| {
            let (lo, hi) = match scope {
                NormalizationScope::PerMethodGlobal => ranges[c.method.as_str()],
                NormalizationScope::PerCurve => min_max(c.points.iter().map(|p| &p.1)),
            };
            ScoreCurve {
                codec: c.codec,
                method: c.method.clone(),
                points: c.points.iter().map(|&(x, v)| (x, rescale(v, lo, hi))).collect(),
                normalized: true,
            }
        })
        .collect()
}

/// Placement of target sizes on the x axis when integrating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum XAxis {
    /// Actual byte values.
    #[default]
    TargetBytes,
    /// Equally spaced positions, for sensitivity checks.
    EqualSpacing,
}

/// Trapezoidal area under the linearly interpolated curve divided by the x
/// extent: the mean height, in `[0, 1]` for a normalized curve.
pub fn curve_area(curve: &ScoreCurve, axis: XAxis) -> Result<f64, AnalysisError> {
    if curve.points.len() < 2 {
        return Err(AnalysisError::TooFewPoints(curve.points.len()));
    }
    if !curve.normalized {
        return Err(AnalysisError::NotNormalized);
    }
    if curve.points.windows(2).any(|w| w[0].0 <= w[1].0) {
        return Err(AnalysisError::UnsortedPoints);
    }
    let x = |i: usize| match axis {
        XAxis::TargetBytes => curve.points[i].0 as f64,
        XAxis::EqualSpacing => i as f64,
    };
    let n = curve.points.len();
    let mut area = 0.0;
    for i in 0..n - 1 {
        let dx = libm::fabs(x(i) - x(i + 1));
        area += dx * (curve.points[i].1 + curve.points[i + 1].1) / 2.0;
    }
    Ok(area / libm::fabs(x(0) - x(n - 1)))
}

/// `100 * |area(q) - area(c)|` before rounding.
pub fn curve_distance_real(q: &ScoreCurve, c: &ScoreCurve, axis: XAxis) -> Result<f64, AnalysisError> {
    if q.codec != c.codec {
        return Err(AnalysisError::CodecMismatch);
    }
    if !q.xs().eq(c.xs()) {
        return Err(AnalysisError::GridMismatch);
    }
    Ok(100.0 * libm::fabs(curve_area(q, axis)? - curve_area(c, axis)?))
}

/// Table column or row slot: one codec or the combined mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CodecSlot {
    Codec(CodecId),
    Combined,
}

impl fmt::Display for CodecSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodecSlot::Codec(c) => f.write_str(c.name()),
            CodecSlot::Combined => f.write_str("combined"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceCell {
    pub trial_kind: TrialKind,
    pub codec: CodecSlot,
    pub method: String,
    /// Unrounded percentage distance.
    pub real: f64,
    /// Rounded percentage in `[0, 100]`.
    pub value: u32,
}

fn percent(real: f64) -> u32 {
    round_half_away(real).clamp(0.0, 100.0) as u32
}

/// Distance between a normalized quality curve `q` and a normalized
/// comparison-score curve `c` of the same codec.
pub fn curve_distance(
    q: &ScoreCurve,
    c: &ScoreCurve,
    trial_kind: TrialKind,
    axis: XAxis,
) -> Result<DistanceCell, AnalysisError> {
    let real = curve_distance_real(q, c, axis)?;
    Ok(DistanceCell {
        trial_kind,
        codec: CodecSlot::Codec(q.codec),
        method: q.method.clone(),
        real,
        value: percent(real),
    })
}

/// Mean of the unrounded per-codec distances, rounded once.
pub fn combine_distances(cells: &[DistanceCell], codecs: &[CodecId]) -> Result<DistanceCell, AnalysisError> {
    let first = cells.first().ok_or(AnalysisError::Empty)?;
    let mut sum = 0.0;
    for &codec in codecs {
        let mut matching = cells.iter().filter(|c| c.codec == CodecSlot::Codec(codec));
        let cell = matching.next().ok_or_else(|| AnalysisError::MissingCodec {
            codec,
            method: first.method.clone(),
            kind: first.trial_kind,
        })?;
        if matching.next().is_some() {
            return Err(AnalysisError::DuplicateCodec {
                codec,
                method: first.method.clone(),
                kind: first.trial_kind,
            });
        }
        sum += cell.real;
    }
    if codecs.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let real = sum / codecs.len() as f64;
    Ok(DistanceCell {
        trial_kind: first.trial_kind,
        codec: CodecSlot::Combined,
        method: first.method.clone(),
        real,
        value: percent(real),
    })
}

/// Distances between every quality method and every comparison
/// configuration, per codec plus the combined row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DistanceTable {
    pub methods: Vec<String>,
    pub codecs: Vec<CodecId>,
    pub kinds: Vec<TrialKind>,
    pub cells: Vec<DistanceCell>,
}

impl DistanceTable {
    pub fn get(&self, kind: TrialKind, codec: CodecSlot, method: &str) -> Option<&DistanceCell> {
        self.cells
            .iter()
            .find(|c| c.trial_kind == kind && c.codec == codec && c.method == method)
    }

    /// Row slots in display order: every codec, then combined.
    pub fn rows(&self) -> Vec<(TrialKind, CodecSlot)> {
        let mut rows = Vec::new();
        for &k in &self.kinds {
            for &c in &self.codecs {
                rows.push((k, CodecSlot::Codec(c)));
            }
            rows.push((k, CodecSlot::Combined));
        }
        rows
    }
}

/// Builds the distance table from normalized curves.
///
/// `quality_methods` name the quality curves; comparison curves are looked
/// up under each trial kind's name. Codecs lacking a curve for a method are
/// an error, so every combined cell averages the same codec set.
pub fn distance_table(
    normalized: &[ScoreCurve],
    quality_methods: &[String],
    kinds: &[TrialKind],
    codecs: &[CodecId],
    axis: XAxis,
) -> Result<DistanceTable, AnalysisError> {
    let find = |method: &str, codec: CodecId| {
        normalized
            .iter()
            .find(|c| c.method == method && c.codec == codec)
    };
    let mut cells = Vec::new();
    for &kind in kinds {
        for method in quality_methods {
            let mut row = Vec::new();
            for &codec in codecs {
                let missing = |m: &str| AnalysisError::MissingCodec {
                    codec,
                    method: String::from(m),
                    kind,
                };
                let q = find(method, codec).ok_or_else(|| missing(method))?;
                let c = find(kind.name(), codec).ok_or_else(|| missing(kind.name()))?;
                row.push(curve_distance(q, c, kind, axis)?);
            }
            let combined = combine_distances(&row, codecs)?;
            cells.extend(row);
            cells.push(combined);
        }
    }
    Ok(DistanceTable {
        methods: quality_methods.to_vec(),
        codecs: codecs.to_vec(),
        kinds: kinds.to_vec(),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn sample(method: &str, codec: CodecId, size: u64, value: f64) -> ScoreSample {
        ScoreSample {
            method: String::from(method),
            codec,
            target_bytes: size,
            value,
        }
    }

    fn normalized(codec: CodecId, method: &str, pts: &[(u64, f64)]) -> ScoreCurve {
        ScoreCurve {
            codec,
            method: String::from(method),
            points: pts.to_vec(),
            normalized: true,
        }
    }

    #[test]
    fn aggregate_basic() {
        let s = aggregate(
            &[
                sample("m", CodecId::Jpeg, 3000, 0.9),
                sample("m", CodecId::Jpeg, 3000, 0.2),
                sample("m", CodecId::Jpeg, 3000, 0.4),
                sample("m", CodecId::JpegXl, 3000, 0.7),
            ],
            RawRetention::All,
        );
        assert_eq!(s.len(), 2);
        assert!((s[0].mean - 0.5).abs() < 1e-15);
        assert_eq!((s[0].min, s[0].max, s[0].n), (0.2, 0.9, 3));
        assert_eq!((s[1].mean, s[1].min, s[1].max), (0.7, 0.7, 0.7));
        assert_eq!(s[0].raw_values.as_deref(), Some(&[0.2, 0.4, 0.9][..]));
    }

    #[test]
    fn retention_caps() {
        let v: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert_eq!(retain(v.clone(), RawRetention::AtMost(3)), Some(vec![0.0, 4.0, 9.0]));
        assert_eq!(retain(v, RawRetention::None), None);
    }

    #[test]
    fn normalize_examples() {
        let c = ScoreCurve::new(CodecId::Jpeg, "m", vec![(3, 2.0), (2, 4.0), (1, 6.0)]).unwrap();
        let n = normalize_curves(&[c], NormalizationScope::PerCurve);
        assert_eq!(n[0].points, vec![(3, 0.0), (2, 0.5), (1, 1.0)]);
        let flat = ScoreCurve::new(CodecId::Jpeg, "m", vec![(2, 3.0), (1, 3.0)]).unwrap();
        let n = normalize_curves(&[flat], NormalizationScope::PerMethodGlobal);
        assert_eq!(n[0].points, vec![(2, 0.5), (1, 0.5)]);
    }

    #[test]
    fn global_scope_shares_range() {
        let a = ScoreCurve::new(CodecId::Jpeg, "m", vec![(2, 0.0), (1, 1.0)]).unwrap();
        let b = ScoreCurve::new(CodecId::JpegXl, "m", vec![(2, 2.0), (1, 4.0)]).unwrap();
        let n = normalize_curves(&[a, b], NormalizationScope::PerMethodGlobal);
        assert_eq!(n[0].points, vec![(2, 0.0), (1, 0.25)]);
        assert_eq!(n[1].points, vec![(2, 0.5), (1, 1.0)]);
    }

    #[test]
    fn area_examples() {
        let flat = normalized(CodecId::Jpeg, "m", &[(5000, 0.5), (3000, 0.5), (2200, 0.5)]);
        assert_eq!(curve_area(&flat, XAxis::TargetBytes).unwrap(), 0.5);
        let ramp = normalized(CodecId::Jpeg, "m", &[(5000, 0.0), (2200, 1.0)]);
        assert_eq!(curve_area(&ramp, XAxis::TargetBytes).unwrap(), 0.5);
        let three = normalized(CodecId::Jpeg, "m", &[(5000, 1.0), (3600, 1.0), (2200, 0.0)]);
        assert!((curve_area(&three, XAxis::TargetBytes).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn area_errors() {
        let one = normalized(CodecId::Jpeg, "m", &[(5000, 0.5)]);
        assert_eq!(curve_area(&one, XAxis::TargetBytes), Err(AnalysisError::TooFewPoints(1)));
        let mut raw = normalized(CodecId::Jpeg, "m", &[(5000, 0.5), (10, 0.1)]);
        raw.normalized = false;
        assert_eq!(curve_area(&raw, XAxis::TargetBytes), Err(AnalysisError::NotNormalized));
    }

    #[test]
    fn equal_spacing_axis() {
        let c = normalized(CodecId::Jpeg, "m", &[(5000, 1.0), (4900, 1.0), (2200, 0.0)]);
        assert!((curve_area(&c, XAxis::EqualSpacing).unwrap() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn distance_examples() {
        let q = normalized(CodecId::Jpeg, "q", &[(5000, 0.9), (2200, 0.9)]);
        let c = normalized(CodecId::Jpeg, "c", &[(5000, 0.21), (2200, 0.21)]);
        let d = curve_distance(&q, &c, TrialKind::MatedOther, XAxis::TargetBytes).unwrap();
        assert_eq!(d.value, 69);
        let same = curve_distance(&q, &q, TrialKind::MatedOther, XAxis::TargetBytes).unwrap();
        assert_eq!(same.value, 0);
        let other_grid = normalized(CodecId::Jpeg, "c", &[(5000, 0.2), (2500, 0.2)]);
        assert_eq!(
            curve_distance(&q, &other_grid, TrialKind::MatedOther, XAxis::TargetBytes),
            Err(AnalysisError::GridMismatch)
        );
    }

    fn cell(codec: CodecId, real: f64) -> DistanceCell {
        DistanceCell {
            trial_kind: TrialKind::MatedOther,
            codec: CodecSlot::Codec(codec),
            method: String::from("m"),
            real,
            value: percent(real),
        }
    }

    #[test]
    fn combine_examples() {
        let cells: Vec<_> = CodecId::ALL
            .iter()
            .zip([2.0, 5.0, 2.0, 2.0])
            .map(|(&c, v)| cell(c, v))
            .collect();
        assert_eq!(combine_distances(&cells, &CodecId::ALL).unwrap().value, 3);
        let zeros: Vec<_> = CodecId::ALL.iter().map(|&c| cell(c, 0.0)).collect();
        assert_eq!(combine_distances(&zeros, &CodecId::ALL).unwrap().value, 0);
        assert!(matches!(
            combine_distances(&cells[..3], &CodecId::ALL),
            Err(AnalysisError::MissingCodec { codec: CodecId::JpegXl, .. })
        ));
    }

    #[test]
    fn table_shape() {
        let mut curves = Vec::new();
        for codec in CodecId::ALL {
            for (m, v) in [("q1", 0.3), ("q2", 0.6), ("mated-other", 0.5), ("mated-self", 0.1)] {
                curves.push(normalized(codec, m, &[(5000, v), (2200, v)]));
            }
        }
        let methods = vec![String::from("q1"), String::from("q2")];
        let kinds = [TrialKind::MatedOther, TrialKind::MatedSelf];
        let t = distance_table(&curves, &methods, &kinds, &CodecId::ALL, XAxis::TargetBytes).unwrap();
        assert_eq!(t.rows().len(), 10);
        assert_eq!(t.cells.len(), 2 * 2 * 5);
        assert_eq!(t.get(TrialKind::MatedSelf, CodecSlot::Combined, "q2").unwrap().value, 50);
        assert_eq!(t.get(TrialKind::MatedOther, CodecSlot::Codec(CodecId::Jpeg), "q1").unwrap().value, 20);
    }
}
