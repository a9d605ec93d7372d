//! Codec identities, their searched parameter grids, and the byte-budget
//! search.
//!
//! Every codec exposes one fidelity scalar. The scalar is discretized into a
//! [`ParamGrid`] whose index 0 is the most aggressive setting and whose last
//! index is the highest-fidelity setting, so encoded size is (nearly)
//! nondecreasing in the index. [`search_budget`] finds the index whose
//! payload is the largest one that still fits the budget; the budget is an
//! inclusive upper limit.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use thiserror::Error;

use crate::round_half_away;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CodecId {
    PngResized,
    Jpeg,
    Jpeg2000,
    JpegXl,
}

impl CodecId {
    pub const ALL: [CodecId; 4] = [
        CodecId::PngResized,
        CodecId::Jpeg,
        CodecId::Jpeg2000,
        CodecId::JpegXl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CodecId::PngResized => "png_resized",
            CodecId::Jpeg => "jpeg",
            CodecId::Jpeg2000 => "jpeg2000",
            CodecId::JpegXl => "jpegxl",
        }
    }

    /// Human-readable label used in figures.
    pub fn label(self) -> &'static str {
        match self {
            CodecId::PngResized => "PNG-resized",
            CodecId::Jpeg => "JPEG",
            CodecId::Jpeg2000 => "JPEG 2000",
            CodecId::JpegXl => "JPEG XL",
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            CodecId::PngResized => "png",
            CodecId::Jpeg => "jpg",
            CodecId::Jpeg2000 => "jp2",
            CodecId::JpegXl => "jxl",
        }
    }
}

impl fmt::Display for CodecId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown codec `{0}` (expected png_resized, jpeg, jpeg2000 or jpegxl)")]
pub struct UnknownCodec(pub String);

impl FromStr for CodecId {
    type Err = UnknownCodec;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "png_resized" | "png-resized" => Ok(CodecId::PngResized),
            "jpeg" | "jpg" => Ok(CodecId::Jpeg),
            "jpeg2000" | "jp2" | "j2k" => Ok(CodecId::Jpeg2000),
            "jpegxl" | "jxl" => Ok(CodecId::JpegXl),
            _ => Err(UnknownCodec(String::from(s))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("{codec} parameter {value} outside [{min}, {max}]")]
    OutOfRange {
        codec: CodecId,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("scale {scale} collapses a {width}x{height} image below 1x1")]
    EmptyScale { scale: f64, width: u32, height: u32 },
}

/// The single searched encoder knob. All other encoder settings stay at
/// their defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CodecParam {
    /// Downscale factor in (0, 1] applied before lossless PNG encoding.
    PngScale(f64),
    /// JPEG quality, 1..=100.
    JpegQuality(u8),
    /// JPEG 2000 compression ratio, 1..=2000.
    Jpeg2000Ratio(f64),
    /// JPEG XL butteraugli distance, 0.1..=25.
    JpegXlDistance(f64),
}

pub const JPEG_QUALITY_RANGE: (u8, u8) = (1, 100);
pub const JPEGXL_DISTANCE_RANGE: (f64, f64) = (0.1, 25.0);
pub const JPEG2000_RATIO_RANGE: (f64, f64) = (1.0, 2000.0);

impl CodecParam {
    pub fn codec(&self) -> CodecId {
        match self {
            CodecParam::PngScale(_) => CodecId::PngResized,
            CodecParam::JpegQuality(_) => CodecId::Jpeg,
            CodecParam::Jpeg2000Ratio(_) => CodecId::Jpeg2000,
            CodecParam::JpegXlDistance(_) => CodecId::JpegXl,
        }
    }

    pub fn value(&self) -> f64 {
        match *self {
            CodecParam::PngScale(v) | CodecParam::Jpeg2000Ratio(v) | CodecParam::JpegXlDistance(v) => v,
            CodecParam::JpegQuality(q) => q as f64,
        }
    }

    /// Builds the parameter for `codec` from a plain number, as stored in reports.
    pub fn from_value(codec: CodecId, value: f64) -> Result<Self, ParamError> {
        let p = match codec {
            CodecId::PngResized => CodecParam::PngScale(value),
            CodecId::Jpeg => {
                let q = round_half_away(value);
                if !(1.0..=100.0).contains(&q) {
                    return Err(out_of_range(codec, value, 1.0, 100.0));
                }
                CodecParam::JpegQuality(q as u8)
            }
            CodecId::Jpeg2000 => CodecParam::Jpeg2000Ratio(value),
            CodecId::JpegXl => CodecParam::JpegXlDistance(value),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let codec = self.codec();
        let v = self.value();
        let (min, max) = match self {
            CodecParam::PngScale(s) => {
                return if s.is_finite() && *s > 0.0 && *s <= 1.0 {
                    Ok(())
                } else {
                    Err(out_of_range(codec, v, 0.0, 1.0))
                };
            }
            CodecParam::JpegQuality(_) => (JPEG_QUALITY_RANGE.0 as f64, JPEG_QUALITY_RANGE.1 as f64),
            CodecParam::Jpeg2000Ratio(_) => JPEG2000_RATIO_RANGE,
            CodecParam::JpegXlDistance(_) => JPEGXL_DISTANCE_RANGE,
        };
        if v.is_finite() && v >= min && v <= max {
            Ok(())
        } else {
            Err(out_of_range(codec, v, min, max))
        }
    }
}

fn out_of_range(codec: CodecId, value: f64, min: f64, max: f64) -> ParamError {
    ParamError::OutOfRange {
        codec,
        value,
        min,
        max,
    }
}

impl fmt::Display for CodecParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodecParam::JpegQuality(q) => write!(f, "{q}"),
            CodecParam::PngScale(v) | CodecParam::Jpeg2000Ratio(v) | CodecParam::JpegXlDistance(v) => {
                write!(f, "{v}")
            }
        }
    }
}

/// Rounds a positive product that may carry representation error from a
/// rational scale factor. True ties (`k + 0.5`) round up.
fn round_scaled(v: f64) -> f64 {
    libm::floor(v + 0.5 + 1e-7)
}

/// Output dimensions of the png_resized downscale for `scale`.
pub fn png_resized_dims(width: u32, height: u32, scale: f64) -> Result<(u32, u32), ParamError> {
    CodecParam::PngScale(scale).validate()?;
    let w = round_scaled(scale * width as f64);
    let h = round_scaled(scale * height as f64);
    if w < 1.0 || h < 1.0 {
        return Err(ParamError::EmptyScale { scale, width, height });
    }
    Ok((w as u32, h as u32))
}

/// Target size in bytes, an inclusive maximum. One kB is 1000 bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ByteBudget(u64);

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("byte budget must be a positive number of bytes")]
pub struct InvalidBudget;

impl ByteBudget {
    pub fn new(bytes: u64) -> Result<Self, InvalidBudget> {
        if bytes == 0 {
            Err(InvalidBudget)
        } else {
            Ok(Self(bytes))
        }
    }

    /// Decimal kilobytes: `from_kb(2.2)` is 2200 bytes.
    pub fn from_kb(kb: f64) -> Result<Self, InvalidBudget> {
        if !kb.is_finite() || kb <= 0.0 {
            return Err(InvalidBudget);
        }
        Self::new(round_half_away(kb * 1000.0) as u64)
    }

    #[inline]
    pub fn bytes(self) -> u64 {
        self.0
    }

    #[inline]
    pub fn fits(self, len: usize) -> bool {
        len as u64 <= self.0
    }
}

impl fmt::Display for ByteBudget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

fn ladder(kb: &[u64]) -> Vec<ByteBudget> {
    kb.iter().map(|&b| ByteBudget(b)).collect()
}

/// Primary ROI ladder: 5, 4.5, 4, 3.5, 3, 2.5 and 2.2 kB.
pub fn roi_ladder() -> Vec<ByteBudget> {
    ladder(&[5000, 4500, 4000, 3500, 3000, 2500, 2200])
}

/// Higher ROI target sizes: 27, 22, 17, 12 and 10 kB.
pub fn roi_extended_ladder() -> Vec<ByteBudget> {
    ladder(&[27000, 22000, 17000, 12000, 10000])
}

/// Portrait ladder: 30, 24, 18, 12, 10, 9, 8 and 7.7 kB.
pub fn portrait_ladder() -> Vec<ByteBudget> {
    ladder(&[30000, 24000, 18000, 12000, 10000, 9000, 8000, 7700])
}

const JXL_GRID_STEPS: usize = 2491; // 25.00 down to 0.10 in 0.01 steps
const J2K_GRID_STEP: f64 = 1.02;
const J2K_GRID_STEPS: usize = 385; // 2000 / 1.02^k until it reaches 1

/// Finite, ordered parameter grid of one codec for one source image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamGrid {
    codec: CodecId,
    source_width: u32,
    /// Smallest png_resized output width whose height still rounds to 1.
    min_width: u32,
}

impl ParamGrid {
    /// Source dimensions only matter for png_resized, whose grid steps
    /// change the output width by exactly one pixel, from the narrowest
    /// non-empty downscale up to the full width.
    pub fn new(codec: CodecId, (source_width, source_height): (u32, u32)) -> Self {
        let source_width = source_width.max(1);
        let source_height = source_height.max(1);
        let min_width = (1..=source_width)
            .find(|&w| png_resized_dims(source_width, source_height, w as f64 / source_width as f64).is_ok())
            .unwrap_or(source_width);
        Self {
            codec,
            source_width,
            min_width,
        }
    }

    pub fn codec(&self) -> CodecId {
        self.codec
    }

    pub fn len(&self) -> usize {
        match self.codec {
            CodecId::Jpeg => 100,
            CodecId::JpegXl => JXL_GRID_STEPS,
            CodecId::Jpeg2000 => J2K_GRID_STEPS,
            CodecId::PngResized => (self.source_width - self.min_width + 1) as usize,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Parameter at `index`; 0 is the most aggressive setting.
    pub fn param(&self, index: usize) -> CodecParam {
        assert!(index < self.len(), "grid index out of range");
        match self.codec {
            CodecId::Jpeg => CodecParam::JpegQuality(index as u8 + 1),
            CodecId::JpegXl => CodecParam::JpegXlDistance((2500 - index) as f64 / 100.0),
            CodecId::Jpeg2000 => {
                let r = 2000.0 / libm::pow(J2K_GRID_STEP, index as f64);
                CodecParam::Jpeg2000Ratio(if index + 1 == J2K_GRID_STEPS { 1.0 } else { r.max(1.0) })
            }
            CodecId::PngResized => CodecParam::PngScale(
                (index as u32 + self.min_width) as f64 / self.source_width as f64,
            ),
        }
    }

    /// Grid index of `param`, if it lies on this grid.
    pub fn index_of(&self, param: &CodecParam) -> Option<usize> {
        if param.codec() != self.codec {
            return None;
        }
        let idx = match *param {
            CodecParam::JpegQuality(q) => (q as usize).checked_sub(1)?,
            CodecParam::JpegXlDistance(d) => {
                let k = round_half_away(d * 100.0);
                if !(10.0..=2500.0).contains(&k) {
                    return None;
                }
                2500 - k as usize
            }
            CodecParam::Jpeg2000Ratio(r) => {
                if !(r >= 1.0 && r <= 2000.0) {
                    return None;
                }
                let k = round_half_away(libm::log(2000.0 / r) / libm::log(J2K_GRID_STEP));
                (k as usize).min(J2K_GRID_STEPS - 1)
            }
            CodecParam::PngScale(s) => {
                let w = round_scaled(s * self.source_width as f64);
                if w < self.min_width as f64 {
                    return None;
                }
                (w as u32 - self.min_width) as usize
            }
        };
        (idx < self.len() && self.param(idx) == *param).then_some(idx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SearchMode {
    /// Bisection plus boundary verification, falling back to a local scan
    /// when size is not monotone around the boundary.
    #[default]
    Bisection,
    /// Probe every grid step. Meant for auditing.
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError<E> {
    #[error("budget {budget} B infeasible: most aggressive setting yields {min_bytes} B")]
    Infeasible { budget: u64, min_bytes: usize },
    #[error(transparent)]
    Encoder(E),
}

/// Result of [`search_budget`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub index: usize,
    pub payload: Vec<u8>,
    /// Number of encoder invocations spent.
    pub probes: usize,
    /// Whether the local scan around the boundary was needed.
    pub local_scan: bool,
}

/// Grid steps scanned when size is not monotone near the boundary.
pub const LOCAL_SCAN_STEPS: usize = 8;

struct Prober<'a, F> {
    encode: &'a mut F,
    cache: &'a mut BTreeMap<usize, Vec<u8>>,
    /// Steps this search has looked at, cached or not.
    touched: BTreeSet<usize>,
}

impl<F, E> Prober<'_, F>
where
    F: FnMut(usize) -> Result<Vec<u8>, E>,
{
    fn size(&mut self, index: usize) -> Result<usize, SearchError<E>> {
        self.touched.insert(index);
        if let Some(p) = self.cache.get(&index) {
            return Ok(p.len());
        }
        let payload = (self.encode)(index).map_err(SearchError::Encoder)?;
        let len = payload.len();
        self.cache.insert(index, payload);
        Ok(len)
    }

    fn finish(&self, index: usize, local_scan: bool) -> Selection {
        Selection {
            index,
            payload: self.cache[&index].clone(),
            probes: self.touched.len(),
            local_scan,
        }
    }

    fn smallest_touched(&self) -> usize {
        self.touched.iter().map(|i| self.cache[i].len()).min().unwrap_or(0)
    }

    /// Largest fitting size among `range`, ties toward the higher index.
    fn best_in(
        &mut self,
        range: core::ops::RangeInclusive<usize>,
        budget: ByteBudget,
    ) -> Result<Option<usize>, SearchError<E>> {
        let mut best: Option<(usize, usize)> = None;
        for i in range {
            let s = self.size(i)?;
            if budget.fits(s) && best.is_none_or(|(_, bs)| s >= bs) {
                best = Some((i, s));
            }
        }
        Ok(best.map(|(i, _)| i))
    }

    /// Like [`Self::best_in`], restricted to boundary steps: fitting steps
    /// whose next higher-fidelity step does not fit (or that are the top).
    fn best_boundary_in(
        &mut self,
        range: core::ops::RangeInclusive<usize>,
        top: usize,
        budget: ByteBudget,
    ) -> Result<Option<usize>, SearchError<E>> {
        let mut best: Option<(usize, usize)> = None;
        for i in range {
            let s = self.size(i)?;
            if !budget.fits(s) || (i < top && budget.fits(self.size(i + 1)?)) {
                continue;
            }
            if best.is_none_or(|(_, bs)| s >= bs) {
                best = Some((i, s));
            }
        }
        Ok(best.map(|(i, _)| i))
    }

    fn search(&mut self, top: usize, budget: ByteBudget, mode: SearchMode) -> Result<Selection, SearchError<E>> {
        if mode == SearchMode::Exhaustive {
            return match self.best_in(0..=top, budget)? {
                Some(i) => Ok(self.finish(i, false)),
                None => Err(SearchError::Infeasible {
                    budget: budget.bytes(),
                    min_bytes: self.smallest_touched(),
                }),
            };
        }

        if budget.fits(self.size(top)?) {
            return Ok(self.finish(top, false));
        }
        let floor = self.size(0)?;
        if !budget.fits(floor) {
            return Err(SearchError::Infeasible {
                budget: budget.bytes(),
                min_bytes: floor,
            });
        }

        // Invariant: `lo` fits, `hi` does not.
        let (mut lo, mut hi) = (0, top);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if budget.fits(self.size(mid)?) {
                lo = mid;
            } else {
                hi = mid;
            }
        }

        // Verification probes on both sides of the boundary.
        if lo + 2 <= top {
            self.size(lo + 2)?;
        }
        if lo >= 1 {
            self.size(lo - 1)?;
        }
        let start = lo.saturating_sub(LOCAL_SCAN_STEPS / 2 - 1);
        let end = (start + LOCAL_SCAN_STEPS - 1).min(top);
        let start = end.saturating_sub(LOCAL_SCAN_STEPS - 1).min(start);
        let window: Vec<(usize, usize)> = self
            .touched
            .range(start..=end)
            .map(|i| (*i, self.cache[i].len()))
            .collect();
        let monotone = window.windows(2).all(|w| w[0].1 <= w[1].1);
        let fits_above = window.iter().any(|&(i, s)| i > lo && budget.fits(s));
        if monotone && !fits_above {
            return Ok(self.finish(lo, false));
        }
        let best = self
            .best_boundary_in(start..=end, top, budget)?
            .expect("window contains the fitting boundary step");
        Ok(self.finish(best, true))
    }
}

/// Finds the grid index whose payload is the largest that fits `budget`.
///
/// `encode(index)` must be deterministic. Ties on size go to the higher
/// (higher-fidelity) index. In bisection mode the result is always a
/// boundary step: the next step up, when it exists, exceeds the budget. When
/// sizes are not monotone near the boundary, the largest payload among the
/// boundary steps of the local window is taken. Exhaustive mode returns the
/// largest fitting payload over the whole grid.
pub fn search_budget<F, E>(
    grid_len: usize,
    budget: ByteBudget,
    mode: SearchMode,
    encode: F,
) -> Result<Selection, SearchError<E>>
where
    F: FnMut(usize) -> Result<Vec<u8>, E>,
{
    search_budgets(grid_len, &[budget], mode, encode)
        .pop()
        .expect("one result per budget")
}

/// [`search_budget`] for several budgets over the same grid. Payloads are
/// shared between the searches; each search visits the same steps and
/// returns the same result as it would alone.
pub fn search_budgets<F, E>(
    grid_len: usize,
    budgets: &[ByteBudget],
    mode: SearchMode,
    mut encode: F,
) -> Vec<Result<Selection, SearchError<E>>>
where
    F: FnMut(usize) -> Result<Vec<u8>, E>,
{
    assert!(grid_len > 0, "empty parameter grid");
    let mut cache = BTreeMap::new();
    budgets
        .iter()
        .map(|&budget| {
            Prober {
                encode: &mut encode,
                cache: &mut cache,
                touched: BTreeSet::new(),
            }
            .search(grid_len - 1, budget, mode)
        })
        .collect()
}

/// One compressed (image, codec, budget) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressionOutcome {
    pub image_id: String,
    pub codec: CodecId,
    pub budget: ByteBudget,
    pub chosen_param: CodecParam,
    pub achieved_bytes: usize,
    pub payload: Vec<u8>,
    pub out_dims: (u32, u32),
}
