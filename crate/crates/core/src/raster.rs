//! RGB rasters with unit-interval intensities, PNG I/O and the small amount of
//! pixel arithmetic the rest of the crate needs.

use std::io::Cursor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("malformed image: {0}")]
    MalformedImage(String),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("invalid raster: {0}")]
    Invalid(String),
    #[error("png encoding failed: {0}")]
    Encode(String),
}

pub const CHANNELS: usize = 3;

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];

/// Row-major RGB image, each intensity in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::Invalid(format!("empty raster {width}x{height}")));
        }
        if data.len() != width * height * CHANNELS {
            return Err(RasterError::Invalid(format!(
                "expected {} intensities, got {}",
                width * height * CHANNELS,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(RasterError::Invalid(format!("intensity {v} outside [0,1]")));
        }
        Ok(Self { width, height, data })
    }

    /// Builds a raster from arbitrary values, clamping each into [0, 1].
    /// NaN becomes 0.
    pub fn from_clamped(width: usize, height: usize, mut data: Vec<f64>) -> Result<Self, RasterError> {
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Self::new(width, height, data)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self, RasterError> {
        Self::new(width, height, vec![value; width * height * CHANNELS])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self, RasterError> {
        let mut data = Vec::with_capacity(width * height * CHANNELS);
        for y in 0..height {
            for x in 0..width {
                for c in 0..CHANNELS {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::from_clamped(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * CHANNELS;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn same_dims(&self, other: &RasterImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Rounds every intensity to the nearest representable 8-bit level.
    pub fn quantized(&self) -> RasterImage {
        RasterImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f64::from(to_u8(v)) / 255.0).collect(),
        }
    }

    pub fn luminance(&self) -> Vec<f64> {
        self.data
            .chunks_exact(CHANNELS)
            .map(|p| LUMA_R * p[0] + LUMA_G * p[1] + LUMA_B * p[2])
            .collect()
    }
}

#[inline]
fn to_u8(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Decodes an 8-bit RGB or grayscale PNG.
pub fn decode_image(bytes: &[u8]) -> Result<RasterImage, RasterError> {
    if bytes.len() < PNG_SIGNATURE.len() || bytes[..8] != PNG_SIGNATURE {
        return Err(RasterError::UnsupportedFormat("not a PNG stream".into()));
    }
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder
        .read_info()
        .map_err(|e| RasterError::MalformedImage(e.to_string()))?;
    let (color, depth) = {
        let info = reader.info();
        (info.color_type, info.bit_depth)
    };
    if depth != png::BitDepth::Eight {
        return Err(RasterError::UnsupportedFormat(format!("bit depth {depth:?}")));
    }
    let samples = match color {
        png::ColorType::Rgb => 3,
        png::ColorType::Grayscale => 1,
        other => return Err(RasterError::UnsupportedFormat(format!("color type {other:?}"))),
    };
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| RasterError::MalformedImage(e.to_string()))?;
    let (width, height) = (frame.width as usize, frame.height as usize);
    let mut data = Vec::with_capacity(width * height * CHANNELS);
    for row in buf[..frame.buffer_size()].chunks_exact(frame.line_size) {
        let row = &row[..width * samples];
        if samples == 3 {
            data.extend(row.iter().map(|&b| f64::from(b) / 255.0));
        } else {
            for &b in row {
                let v = f64::from(b) / 255.0;
                data.extend_from_slice(&[v, v, v]);
            }
        }
    }
    RasterImage::new(width, height, data)
}

/// Encodes as an 8-bit RGB PNG. Output is deterministic for a given raster.
pub fn encode_image(img: &RasterImage) -> Result<Vec<u8>, RasterError> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder
            .write_header()
            .map_err(|e| RasterError::Encode(e.to_string()))?;
        let bytes: Vec<u8> = img.data.iter().map(|&v| to_u8(v)).collect();
        writer
            .write_image_data(&bytes)
            .map_err(|e| RasterError::Encode(e.to_string()))?;
    }
    Ok(out)
}

/// Per-pixel `(1 - alpha) * a + alpha * b`, clamped to [0, 1].
pub fn blend(a: &RasterImage, b: &RasterImage, alpha: f64) -> Result<RasterImage, RasterError> {
    if !a.same_dims(b) {
        return Err(RasterError::DimensionMismatch(a.width, a.height, b.width, b.height));
    }
    let keep = 1.0 - alpha;
    let data = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| (keep * x + alpha * y).clamp(0.0, 1.0))
        .collect();
    Ok(RasterImage { width: a.width, height: a.height, data })
}

/// Nearest-neighbour RGB resize.
pub fn resize_nearest(img: &RasterImage, width: usize, height: usize) -> RasterImage {
    if img.width == width && img.height == height {
        return img.clone();
    }
    let mut data = Vec::with_capacity(width * height * CHANNELS);
    for y in 0..height {
        let sy = (y * img.height + img.height / 2) / height;
        for x in 0..width {
            let sx = (x * img.width + img.width / 2) / width;
            let i = (sy.min(img.height - 1) * img.width + sx.min(img.width - 1)) * CHANNELS;
            data.extend_from_slice(&img.data[i..i + CHANNELS]);
        }
    }
    RasterImage { width, height, data }
}

pub const LUMA_R: f64 = 0.299;
pub const LUMA_G: f64 = 0.587;
pub const LUMA_B: f64 = 0.114;

/// Half-open source span covered by destination cell `k` of `cells`.
/// Spans partition `0..len` as evenly as possible; when upsampling, every
/// cell still covers at least one source sample.
fn cell_span(k: usize, cells: usize, len: usize) -> (usize, usize) {
    let start = (k * len / cells).min(len - 1);
    let end = ((k + 1) * len / cells).max(start + 1);
    (start, end)
}

/// Box-filters BT.601 luminance onto a `side` x `side` grid (row-major).
pub fn resample_grayscale(img: &RasterImage, side: usize) -> Vec<f64> {
    assert!(side >= 1, "side must be at least 1");
    let luma = img.luminance();
    let x_spans: Vec<(usize, usize)> = (0..side).map(|k| cell_span(k, side, img.width)).collect();
    let mut out = Vec::with_capacity(side * side);
    for gy in 0..side {
        let (y0, y1) = cell_span(gy, side, img.height);
        for &(x0, x1) in &x_spans {
            let mut acc = 0.0;
            for y in y0..y1 {
                let row = &luma[y * img.width..(y + 1) * img.width];
                acc += row[x0..x1].iter().sum::<f64>();
            }
            out.push(acc / ((y1 - y0) * (x1 - x0)) as f64);
        }
    }
    out
}
