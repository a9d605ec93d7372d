//! JPEG 2000 (JP2 container) through OpenJPEG, using in-memory streams.

use openjpeg_sys as opj;
use std::ffi::{c_void, CStr};
use std::ptr;

use facepress_core::ImagePlane;

/// Resolution levels used when the image is large enough (library default).
const DEFAULT_RESOLUTIONS: u32 = 6;
const STREAM_CHUNK: usize = 1 << 16;

#[derive(Debug, thiserror::Error)]
pub enum J2kError {
    #[error("openjpeg: {0}")]
    Library(&'static str),
    #[error("unsupported jpeg2000 layout: {0}")]
    Layout(String),
}

pub fn version() -> String {
    // SAFETY: opj_version returns a static NUL-terminated string.
    let v = unsafe { CStr::from_ptr(opj::opj_version()) };
    format!("openjpeg {}", v.to_string_lossy())
}

struct WriteBuf {
    data: Vec<u8>,
    pos: usize,
}

struct ReadBuf<'a> {
    data: &'a [u8],
    pos: usize,
}

unsafe extern "C" fn write_fn(buf: *mut c_void, n: usize, user: *mut c_void) -> usize {
    let w = &mut *(user as *mut WriteBuf);
    let src = std::slice::from_raw_parts(buf as *const u8, n);
    let end = w.pos + n;
    if w.data.len() < end {
        w.data.resize(end, 0);
    }
    w.data[w.pos..end].copy_from_slice(src);
    w.pos = end;
    n
}

unsafe extern "C" fn write_skip_fn(n: i64, user: *mut c_void) -> i64 {
    let w = &mut *(user as *mut WriteBuf);
    let target = w.pos as i64 + n;
    if target < 0 {
        return -1;
    }
    w.pos = target as usize;
    if w.data.len() < w.pos {
        w.data.resize(w.pos, 0);
    }
    n
}

unsafe extern "C" fn write_seek_fn(n: i64, user: *mut c_void) -> i32 {
    let w = &mut *(user as *mut WriteBuf);
    if n < 0 {
        return 0;
    }
    w.pos = n as usize;
    if w.data.len() < w.pos {
        w.data.resize(w.pos, 0);
    }
    1
}

unsafe extern "C" fn read_fn(buf: *mut c_void, n: usize, user: *mut c_void) -> usize {
    let r = &mut *(user as *mut ReadBuf);
    let remaining = r.data.len().saturating_sub(r.pos);
    if remaining == 0 {
        return usize::MAX;
    }
    let k = n.min(remaining);
    ptr::copy_nonoverlapping(r.data.as_ptr().add(r.pos), buf as *mut u8, k);
    r.pos += k;
    k
}

unsafe extern "C" fn read_skip_fn(n: i64, user: *mut c_void) -> i64 {
    let r = &mut *(user as *mut ReadBuf);
    let target = (r.pos as i64 + n).clamp(0, r.data.len() as i64);
    let moved = target - r.pos as i64;
    r.pos = target as usize;
    moved
}

unsafe extern "C" fn read_seek_fn(n: i64, user: *mut c_void) -> i32 {
    let r = &mut *(user as *mut ReadBuf);
    if n < 0 || n as usize > r.data.len() {
        return 0;
    }
    r.pos = n as usize;
    1
}

/// Owns the codec, stream and image handles for one call.
struct Handles {
    codec: *mut opj::opj_codec_t,
    stream: *mut opj::opj_stream_t,
    image: *mut opj::opj_image_t,
}

impl Drop for Handles {
    fn drop(&mut self) {
        // SAFETY: each pointer is either null or owned by this struct.
        unsafe {
            if !self.stream.is_null() {
                opj::opj_stream_destroy(self.stream);
            }
            if !self.codec.is_null() {
                opj::opj_destroy_codec(self.codec);
            }
            if !self.image.is_null() {
                opj::opj_image_destroy(self.image);
            }
        }
    }
}

fn resolutions_for(width: u32, height: u32) -> u32 {
    let mut n = DEFAULT_RESOLUTIONS;
    while n > 1 && (width.min(height) >> (n - 1)) == 0 {
        n -= 1;
    }
    n
}

/// Encodes `image` as a single-layer JP2 at compression `ratio`, otherwise
/// with the library's default settings (reversible 5/3 wavelet).
pub fn encode(image: &ImagePlane, ratio: f64) -> Result<Vec<u8>, J2kError> {
    let (w, h) = image.dims();
    let mut out = WriteBuf {
        data: Vec::new(),
        pos: 0,
    };
    // SAFETY: all handles are created and released within this call; the
    // component buffers are sized w*h by opj_image_create.
    unsafe {
        let mut params: opj::opj_cparameters_t = std::mem::zeroed();
        opj::opj_set_default_encoder_parameters(&mut params);
        params.tcp_numlayers = 1;
        params.tcp_rates[0] = ratio as f32;
        params.cp_disto_alloc = 1;
        params.numresolution = resolutions_for(w, h) as i32;

        let mut comps: [opj::opj_image_cmptparm_t; 3] = std::mem::zeroed();
        for c in &mut comps {
            c.dx = 1;
            c.dy = 1;
            c.w = w;
            c.h = h;
            c.prec = 8;
            c.sgnd = 0;
        }
        let mut hd = Handles {
            codec: ptr::null_mut(),
            stream: ptr::null_mut(),
            image: opj::opj_image_create(3, comps.as_mut_ptr(), opj::OPJ_COLOR_SPACE::OPJ_CLRSPC_SRGB),
        };
        if hd.image.is_null() {
            return Err(J2kError::Library("image allocation failed"));
        }
        let img = &mut *hd.image;
        img.x0 = 0;
        img.y0 = 0;
        img.x1 = w;
        img.y1 = h;
        let comps_out = std::slice::from_raw_parts_mut(img.comps, 3);
        for (c, comp) in comps_out.iter_mut().enumerate() {
            let data = std::slice::from_raw_parts_mut(comp.data, (w * h) as usize);
            for (i, v) in data.iter_mut().enumerate() {
                *v = image.samples()[i * 3 + c] as i32;
            }
        }

        hd.codec = opj::opj_create_compress(opj::CODEC_FORMAT::OPJ_CODEC_JP2);
        if hd.codec.is_null() {
            return Err(J2kError::Library("codec creation failed"));
        }
        if opj::opj_setup_encoder(hd.codec, &mut params, hd.image) == 0 {
            return Err(J2kError::Library("encoder setup rejected parameters"));
        }
        hd.stream = opj::opj_stream_create(STREAM_CHUNK, 0);
        if hd.stream.is_null() {
            return Err(J2kError::Library("stream creation failed"));
        }
        opj::opj_stream_set_write_function(hd.stream, Some(write_fn));
        opj::opj_stream_set_skip_function(hd.stream, Some(write_skip_fn));
        opj::opj_stream_set_seek_function(hd.stream, Some(write_seek_fn));
        opj::opj_stream_set_user_data(hd.stream, &mut out as *mut WriteBuf as *mut c_void, None);

        if opj::opj_start_compress(hd.codec, hd.image, hd.stream) == 0
            || opj::opj_encode(hd.codec, hd.stream) == 0
            || opj::opj_end_compress(hd.codec, hd.stream) == 0
        {
            return Err(J2kError::Library("encoding failed"));
        }
        drop(hd);
    }
    Ok(out.data)
}

pub fn decode(payload: &[u8]) -> Result<ImagePlane, J2kError> {
    let mut input = ReadBuf {
        data: payload,
        pos: 0,
    };
    // SAFETY: handles are owned by `hd`; the stream reads only from `input`,
    // which outlives it.
    unsafe {
        let mut hd = Handles {
            codec: opj::opj_create_decompress(opj::CODEC_FORMAT::OPJ_CODEC_JP2),
            stream: opj::opj_stream_create(STREAM_CHUNK, 1),
            image: ptr::null_mut(),
        };
        if hd.codec.is_null() || hd.stream.is_null() {
            return Err(J2kError::Library("decoder creation failed"));
        }
        let mut dparams: opj::opj_dparameters_t = std::mem::zeroed();
        opj::opj_set_default_decoder_parameters(&mut dparams);
        if opj::opj_setup_decoder(hd.codec, &mut dparams) == 0 {
            return Err(J2kError::Library("decoder setup failed"));
        }
        opj::opj_stream_set_read_function(hd.stream, Some(read_fn));
        opj::opj_stream_set_skip_function(hd.stream, Some(read_skip_fn));
        opj::opj_stream_set_seek_function(hd.stream, Some(read_seek_fn));
        opj::opj_stream_set_user_data(hd.stream, &mut input as *mut ReadBuf as *mut c_void, None);
        opj::opj_stream_set_user_data_length(hd.stream, payload.len() as u64);

        if opj::opj_read_header(hd.stream, hd.codec, &mut hd.image) == 0 || hd.image.is_null() {
            return Err(J2kError::Library("header parse failed"));
        }
        if opj::opj_decode(hd.codec, hd.stream, hd.image) == 0
            || opj::opj_end_decompress(hd.codec, hd.stream) == 0
        {
            return Err(J2kError::Library("decode failed"));
        }
        let img = &*hd.image;
        if img.numcomps != 3 {
            return Err(J2kError::Layout(format!("{} components", img.numcomps)));
        }
        let comps = std::slice::from_raw_parts(img.comps, 3);
        let (w, h) = (comps[0].w, comps[0].h);
        for c in comps {
            if c.w != w || c.h != h || c.prec != 8 || c.data.is_null() {
                return Err(J2kError::Layout("subsampled or non 8-bit component".into()));
            }
        }
        let n = (w * h) as usize;
        let planes: Vec<&[i32]> = comps.iter().map(|c| std::slice::from_raw_parts(c.data, n)).collect();
        let mut samples = Vec::with_capacity(n * 3);
        for i in 0..n {
            for p in &planes {
                samples.push(p[i].clamp(0, 255) as u8);
            }
        }
        ImagePlane::new(w, h, samples).map_err(|e| J2kError::Layout(e.to_string()))
    }
}
