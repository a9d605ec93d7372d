//! Codec adapters and byte-budget compression.

use std::io::Cursor;

use facepress_core::budget::{
    png_resized_dims, search_budgets, ByteBudget, CodecId, CodecParam, ParamError, ParamGrid,
    SearchError, SearchMode,
};
use facepress_core::resample::bilinear_resize;
use facepress_core::{CompressionOutcome, ImagePlane};
use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ExtendedColorType, ImageEncoder, ImageFormat};

use crate::j2k;

#[derive(Debug, thiserror::Error)]
pub enum CodecError {
    #[error("{codec} encode at {param} failed: {message}")]
    Encode {
        codec: CodecId,
        param: String,
        message: String,
    },
    #[error("{codec} decode failed: {message}")]
    Decode { codec: CodecId, message: String },
    #[error("parameter for {expected} given to {actual} adapter")]
    WrongCodec { expected: CodecId, actual: CodecId },
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("budget {budget} B infeasible for {codec}: smallest payload is {min_bytes} B")]
    BudgetInfeasible {
        codec: CodecId,
        budget: u64,
        min_bytes: usize,
    },
}

/// One codec binding: a deterministic `param -> bytes` encoder plus decoder.
pub trait CodecAdapter: Sync {
    fn id(&self) -> CodecId;
    /// Encoder identification recorded in reports.
    fn version(&self) -> String;
    fn encode(&self, image: &ImagePlane, param: &CodecParam) -> Result<Vec<u8>, CodecError>;
    fn decode(&self, payload: &[u8]) -> Result<ImagePlane, CodecError>;
}

pub struct PngResized;
pub struct Jpeg;
pub struct Jpeg2000;
pub struct JpegXl;

static PNG_RESIZED: PngResized = PngResized;
static JPEG: Jpeg = Jpeg;
static JPEG2000: Jpeg2000 = Jpeg2000;
static JPEG_XL: JpegXl = JpegXl;

/// The built-in adapter for `codec`.
pub fn adapter(codec: CodecId) -> &'static dyn CodecAdapter {
    match codec {
        CodecId::PngResized => &PNG_RESIZED,
        CodecId::Jpeg => &JPEG,
        CodecId::Jpeg2000 => &JPEG2000,
        CodecId::JpegXl => &JPEG_XL,
    }
}

fn encode_err(codec: CodecId, param: &CodecParam, e: impl ToString) -> CodecError {
    CodecError::Encode {
        codec,
        param: param.to_string(),
        message: e.to_string(),
    }
}

fn decode_err(codec: CodecId, e: impl ToString) -> CodecError {
    CodecError::Decode {
        codec,
        message: e.to_string(),
    }
}

fn check(codec: CodecId, param: &CodecParam) -> Result<(), CodecError> {
    if param.codec() != codec {
        return Err(CodecError::WrongCodec {
            expected: param.codec(),
            actual: codec,
        });
    }
    param.validate()?;
    Ok(())
}

fn decode_raster(codec: CodecId, payload: &[u8], format: ImageFormat) -> Result<ImagePlane, CodecError> {
    let img = image::load_from_memory_with_format(payload, format)
        .map_err(|e| decode_err(codec, e))?
        .into_rgb8();
    let (w, h) = img.dimensions();
    ImagePlane::new(w, h, img.into_raw()).map_err(|e| decode_err(codec, e))
}

/// Lossless PNG at maximum compression effort.
pub fn encode_png(image: &ImagePlane) -> Result<Vec<u8>, image::ImageError> {
    let mut out = Vec::new();
    PngEncoder::new_with_quality(&mut out, CompressionType::Best, FilterType::Adaptive).write_image(
        image.samples(),
        image.width(),
        image.height(),
        ExtendedColorType::Rgb8,
    )?;
    Ok(out)
}

impl CodecAdapter for PngResized {
    fn id(&self) -> CodecId {
        CodecId::PngResized
    }

    fn version(&self) -> String {
        "image-rs png (best compression, adaptive filter) + bilinear downscale".into()
    }

    fn encode(&self, image: &ImagePlane, param: &CodecParam) -> Result<Vec<u8>, CodecError> {
        check(self.id(), param)?;
        let (w, h) = png_resized_dims(image.width(), image.height(), param.value())?;
        let small = bilinear_resize(image, w, h).map_err(|e| encode_err(self.id(), param, e))?;
        encode_png(&small).map_err(|e| encode_err(self.id(), param, e))
    }

    fn decode(&self, payload: &[u8]) -> Result<ImagePlane, CodecError> {
        decode_raster(self.id(), payload, ImageFormat::Png)
    }
}

impl CodecAdapter for Jpeg {
    fn id(&self) -> CodecId {
        CodecId::Jpeg
    }

    fn version(&self) -> String {
        "jpeg-encoder 0.7 (baseline, 4:2:0 box-averaged chroma, standard Huffman tables)".into()
    }

    fn encode(&self, image: &ImagePlane, param: &CodecParam) -> Result<Vec<u8>, CodecError> {
        check(self.id(), param)?;
        let dim = |v: u32| u16::try_from(v).map_err(|_| encode_err(self.id(), param, "dimension exceeds 65535"));
        let (w, h) = (dim(image.width())?, dim(image.height())?);
        let mut out = Vec::new();
        let mut enc = jpeg_encoder::Encoder::new(&mut out, param.value() as u8);
        enc.set_sampling_factor(jpeg_encoder::SamplingFactor::F_2_2);
        enc.set_chroma_subsampling_method(jpeg_encoder::ChromaSubsamplingMethod::Average);
        enc.encode(image.samples(), w, h, jpeg_encoder::ColorType::Rgb)
            .map_err(|e| encode_err(self.id(), param, e))?;
        Ok(out)
    }

    fn decode(&self, payload: &[u8]) -> Result<ImagePlane, CodecError> {
        decode_raster(self.id(), payload, ImageFormat::Jpeg)
    }
}

impl CodecAdapter for Jpeg2000 {
    fn id(&self) -> CodecId {
        CodecId::Jpeg2000
    }

    fn version(&self) -> String {
        j2k::version()
    }

    fn encode(&self, image: &ImagePlane, param: &CodecParam) -> Result<Vec<u8>, CodecError> {
        check(self.id(), param)?;
        j2k::encode(image, param.value()).map_err(|e| encode_err(self.id(), param, e))
    }

    fn decode(&self, payload: &[u8]) -> Result<ImagePlane, CodecError> {
        j2k::decode(payload).map_err(|e| decode_err(self.id(), e))
    }
}

impl CodecAdapter for JpegXl {
    fn id(&self) -> CodecId {
        CodecId::JpegXl
    }

    fn version(&self) -> String {
        "libjxl 0.12 via jpegxl-rs 0.16 (effort 7, single thread)".into()
    }

    fn encode(&self, image: &ImagePlane, param: &CodecParam) -> Result<Vec<u8>, CodecError> {
        check(self.id(), param)?;
        let mut enc = jpegxl_rs::encoder_builder()
            .quality(param.value() as f32)
            .build()
            .map_err(|e| encode_err(self.id(), param, e))?;
        enc.encode::<u8>(image.samples(), image.width(), image.height())
            .map_err(|e| encode_err(self.id(), param, e))
    }

    fn decode(&self, payload: &[u8]) -> Result<ImagePlane, CodecError> {
        let dec = jpegxl_rs::decoder_builder()
            .pixel_format(jpegxl_rs::decode::PixelFormat {
                num_channels: 3,
                ..Default::default()
            })
            .build()
            .map_err(|e| decode_err(self.id(), e))?;
        let (meta, pixels) = dec.decode_with::<u8>(payload).map_err(|e| decode_err(self.id(), e))?;
        ImagePlane::new(meta.width, meta.height, pixels).map_err(|e| decode_err(self.id(), e))
    }
}

pub fn encode_with_param(image: &ImagePlane, codec: CodecId, param: &CodecParam) -> Result<Vec<u8>, CodecError> {
    adapter(codec).encode(image, param)
}

pub fn decode(payload: &[u8], codec: CodecId) -> Result<ImagePlane, CodecError> {
    adapter(codec).decode(payload)
}

/// Decodes and, for `png_resized`, upsamples back to `source_dims` so
/// downstream scoring sees the same raster size for every codec.
pub fn decode_to_source_dims(
    payload: &[u8],
    codec: CodecId,
    source_dims: (u32, u32),
) -> Result<ImagePlane, CodecError> {
    let img = decode(payload, codec)?;
    if img.dims() == source_dims {
        return Ok(img);
    }
    bilinear_resize(&img, source_dims.0, source_dims.1).map_err(|e| decode_err(codec, e))
}

/// Compresses `image` to the largest payload that fits `budget`.
pub fn compress_to_budget(
    image_id: &str,
    image: &ImagePlane,
    codec: CodecId,
    budget: ByteBudget,
    mode: SearchMode,
) -> Result<CompressionOutcome, CodecError> {
    compress_to_budgets(image_id, image, codec, &[budget], mode)
        .pop()
        .expect("one result per budget")
}

/// [`compress_to_budget`] for several budgets, sharing encoder runs between
/// them. Each result equals the single-budget result.
pub fn compress_to_budgets(
    image_id: &str,
    image: &ImagePlane,
    codec: CodecId,
    budgets: &[ByteBudget],
    mode: SearchMode,
) -> Vec<Result<CompressionOutcome, CodecError>> {
    let grid = ParamGrid::new(codec, image.dims());
    let adapter = adapter(codec);
    let selections = search_budgets(grid.len(), budgets, mode, |i| adapter.encode(image, &grid.param(i)));
    budgets
        .iter()
        .zip(selections)
        .map(|(&budget, sel)| {
            let sel = sel.map_err(|e| match e {
                SearchError::Infeasible { budget, min_bytes } => CodecError::BudgetInfeasible {
                    codec,
                    budget,
                    min_bytes,
                },
                SearchError::Encoder(e) => e,
            })?;
            let chosen_param = grid.param(sel.index);
            let out_dims = match chosen_param {
                CodecParam::PngScale(s) => png_resized_dims(image.width(), image.height(), s)?,
                _ => image.dims(),
            };
            log::debug!(
                "{image_id} {codec} {} B: {chosen_param} -> {} B ({} probes{})",
                budget.bytes(),
                sel.payload.len(),
                sel.probes,
                if sel.local_scan { ", local scan" } else { "" }
            );
            Ok(CompressionOutcome {
                image_id: image_id.to_string(),
                codec,
                budget,
                chosen_param,
                achieved_bytes: sel.payload.len(),
                payload: sel.payload,
                out_dims,
            })
        })
        .collect()
}

/// Decodes any losslessly stored image file content (PNG, BMP, ...).
pub fn decode_file_bytes(bytes: &[u8]) -> Result<ImagePlane, image::ImageError> {
    let img = image::ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()?
        .decode()?
        .into_rgb8();
    let (w, h) = img.dimensions();
    Ok(ImagePlane::new(w, h, img.into_raw()).expect("rgb8 buffer matches its dimensions"))
}
