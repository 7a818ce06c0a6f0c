//! Image decoding, resizing, patch grids and patch features.
//!
//! Pixels are held as `f64` RGB in `[0, 1]`, row-major and interleaved.
//! Patches are enumerated row-major from the top-left corner; that order is
//! what pair ranks and stored watermarks are built on.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use image::{ImageFormat, RgbImage};

use crate::{Error, Result};

pub const DEFAULT_IMAGE_SIDE: usize = 224;
pub const DEFAULT_PATCH_SIDE: usize = 16;

/// An RGB image with channel values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage("zero-dimension image".into()));
        }
        if data.len() != width * height * 3 {
            return Err(Error::InvalidImage(format!(
                "expected {} channel values for {width}x{height}, got {}",
                width * height * 3,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidImage(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image from a per-pixel closure. Values are clipped to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                let px = f(x, y);
                data.extend(px.iter().map(|v| clip01(*v)));
            }
        }
        Self::new(width, height, data)
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Result<Self> {
        Self::from_fn(width, height, |_, _| rgb)
    }

    pub(crate) fn from_raw_clipped(width: usize, height: usize, mut data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height * 3);
        for v in &mut data {
            *v = clip01(*v);
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Interleaved RGB values, row-major.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * 3 + c]
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Swaps the x and y axes.
    pub fn transposed(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for x in 0..self.width {
            for y in 0..self.height {
                data.extend_from_slice(&self.pixel(x, y));
            }
        }
        Self {
            width: self.height,
            height: self.width,
            data,
        }
    }

    pub fn from_rgb8(img: &RgbImage) -> Result<Self> {
        let (w, h) = img.dimensions();
        let data = img.as_raw().iter().map(|v| f64::from(*v) / 255.0).collect();
        Self::new(w as usize, h as usize, data)
    }

    /// Quantizes to 8 bits per channel with round-half-away-from-zero.
    pub fn to_rgb8(&self) -> RgbImage {
        let raw = self.data.iter().map(|v| quantize_u8(*v)).collect();
        RgbImage::from_raw(self.width as u32, self.height as u32, raw).expect("buffer size matches dimensions")
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.to_rgb8()
            .save_with_format(path, ImageFormat::Png)
            .map_err(|e| Error::Encode(format!("{}: {e}", path.display())))
    }
}

#[inline]
pub(crate) fn clip01(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

#[inline]
pub(crate) fn quantize_u8(v: f64) -> u8 {
    (clip01(v) * 255.0).round() as u8
}

/// Decodes a PNG or JPEG file without resizing.
pub fn load_image_native(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes)
}

/// Decodes PNG or JPEG bytes.
pub fn decode_image(bytes: &[u8]) -> Result<ImageBuffer> {
    let format = image::guess_format(bytes).map_err(|e| Error::Decode(e.to_string()))?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Jpeg) {
        return Err(Error::Decode(format!("unsupported format {format:?}")));
    }
    let img = image::load_from_memory_with_format(bytes, format).map_err(|e| Error::Decode(e.to_string()))?;
    if img.width() == 0 || img.height() == 0 {
        return Err(Error::InvalidImage("zero-dimension image".into()));
    }
    ImageBuffer::from_rgb8(&img.to_rgb8())
}

/// Decodes an image and resizes it to `target_side` × `target_side`.
///
/// Aspect ratio is not preserved. An image that already has the target size
/// is returned untouched.
pub fn load_image(path: impl AsRef<Path>, target_side: usize) -> Result<ImageBuffer> {
    if target_side == 0 {
        return Err(Error::InvalidArgument("target side must be positive".into()));
    }
    let img = load_image_native(path)?;
    Ok(resize_bilinear(&img, target_side, target_side))
}

/// Bilinear resampling with half-pixel centers and edge clamping.
pub fn resize_bilinear(img: &ImageBuffer, width: usize, height: usize) -> ImageBuffer {
    if width == img.width && height == img.height {
        return img.clone();
    }
    let xs = sample_axis(img.width, width);
    let ys = sample_axis(img.height, height);
    let mut data = Vec::with_capacity(width * height * 3);
    for &(y0, y1, ty) in &ys {
        for &(x0, x1, tx) in &xs {
            for c in 0..3 {
                let top = lerp(img.get(x0, y0, c), img.get(x1, y0, c), tx);
                let bottom = lerp(img.get(x0, y1, c), img.get(x1, y1, c), tx);
                data.push(lerp(top, bottom, ty));
            }
        }
    }
    ImageBuffer::from_raw_clipped(width, height, data)
}

fn sample_axis(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

/// `a + (b - a) * t`; exact when `a == b`.
#[inline]
pub(crate) fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSource {
    MeanRgb,
    External,
}

impl FeatureSource {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSource::MeanRgb => "mean_rgb",
            FeatureSource::External => "external",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mean_rgb" => Ok(FeatureSource::MeanRgb),
            "external" => Ok(FeatureSource::External),
            other => Err(Error::InvalidArgument(format!("unknown feature source {other:?}"))),
        }
    }
}

/// One feature vector per patch, plus the patch-grid geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchFeatureMap {
    rows: usize,
    cols: usize,
    dim: usize,
    features: Vec<f64>,
    source: FeatureSource,
}

impl PatchFeatureMap {
    /// `features` holds `rows * cols` vectors of `dim` values back to back.
    pub fn new(rows: usize, cols: usize, dim: usize, features: Vec<f64>, source: FeatureSource) -> Result<Self> {
        if rows == 0 || cols == 0 || dim == 0 {
            return Err(Error::InvalidArgument("feature map needs at least one patch and one dimension".into()));
        }
        if features.len() != rows * cols * dim {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} patches of dimension {dim} need {} values, got {}",
                rows * cols * dim,
                features.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite feature value".into()));
        }
        if source == FeatureSource::MeanRgb {
            if dim != 3 {
                return Err(Error::DimensionMismatch("mean-RGB features have dimension 3".into()));
            }
            if features.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidArgument("mean-RGB feature outside [0, 1]".into()));
            }
        }
        Ok(Self {
            rows,
            cols,
            dim,
            features,
            source,
        })
    }

    /// Patch count.
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn source(&self) -> FeatureSource {
        self.source
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.features
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.dim)
    }

    /// Same geometry, every value multiplied by `factor`. The source becomes
    /// `External` since scaled values may leave `[0, 1]`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.rows,
            self.cols,
            self.dim,
            self.features.iter().map(|v| v * factor).collect(),
            FeatureSource::External,
        )
    }

    /// Serializes to the `RELZERO-EMB 1` text format.
    pub fn to_embedding_text(&self) -> String {
        let mut out = String::with_capacity(self.features.len() * 16 + 64);
        out.push_str(EMB_MAGIC);
        out.push('\n');
        let _ = writeln!(out, "{} {}", self.len(), self.dim);
        let _ = writeln!(out, "{} {}", self.rows, self.cols);
        for row in self.iter() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.8e}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn save_embeddings(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_embedding_text()).map_err(|e| Error::io(path, e))
    }
}

const EMB_MAGIC: &str = "RELZERO-EMB 1";

/// Mean RGB of every non-overlapping `patch_side` × `patch_side` patch.
pub fn extract_mean_rgb(img: &ImageBuffer, patch_side: usize) -> Result<PatchFeatureMap> {
    if patch_side == 0 || img.width % patch_side != 0 || img.height % patch_side != 0 {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} image is not divisible into {patch_side}px patches",
            img.width, img.height
        )));
    }
    let rows = img.height / patch_side;
    let cols = img.width / patch_side;
    let n = (patch_side * patch_side) as f64;
    let mut features = Vec::with_capacity(rows * cols * 3);
    for r in 0..rows {
        for c in 0..cols {
            let mut sum = [0.0f64; 3];
            for y in r * patch_side..(r + 1) * patch_side {
                for x in c * patch_side..(c + 1) * patch_side {
                    let px = img.pixel(x, y);
                    for k in 0..3 {
                        sum[k] += px[k];
                    }
                }
            }
            // Rounding can push the mean of a saturated patch past 1.0 by an ulp.
            features.extend(sum.iter().map(|s| clip01(s / n)));
        }
    }
    PatchFeatureMap::new(rows, cols, 3, features, FeatureSource::MeanRgb)
}

/// Parses the `RELZERO-EMB 1` text format.
///
/// ```text
/// RELZERO-EMB 1
/// P D
/// R C
/// <P lines of D space-separated reals>
/// ```
pub fn parse_embeddings(text: &str) -> Result<PatchFeatureMap> {
    let mut lines = text.lines();
    let bad = |msg: &str| Error::Embedding(msg.to_string());
    if lines.next().map(str::trim_end) != Some(EMB_MAGIC) {
        return Err(bad("malformed header: expected \"RELZERO-EMB 1\""));
    }
    let (p, d) = parse_int_pair(lines.next()).ok_or_else(|| bad("malformed header: expected \"P D\""))?;
    let (rows, cols) = parse_int_pair(lines.next()).ok_or_else(|| bad("malformed header: expected \"R C\""))?;
    if p == 0 || d == 0 {
        return Err(bad("malformed header: P and D must be positive"));
    }
    if rows * cols != p {
        return Err(bad("malformed header: grid shape does not match P"));
    }
    let mut features = Vec::with_capacity(p * d);
    let mut count = 0;
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        count += 1;
        if count > p {
            return Err(bad("row count mismatch"));
        }
        let mut width = 0;
        for tok in line.split_ascii_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::Embedding(format!("non-numeric entry {tok:?} on data row {}", lineno + 1)))?;
            if !v.is_finite() {
                return Err(Error::Embedding(format!("non-finite value on data row {}", lineno + 1)));
            }
            features.push(v);
            width += 1;
        }
        if width != d {
            return Err(Error::Embedding(format!(
                "data row {} has {width} entries, expected {d}",
                lineno + 1
            )));
        }
    }
    if count != p {
        return Err(Error::Embedding(format!("row count mismatch: header says {p}, found {count}")));
    }
    PatchFeatureMap::new(rows, cols, d, features, FeatureSource::External)
}

fn parse_int_pair(line: Option<&str>) -> Option<(usize, usize)> {
    let mut it = line?.split_ascii_whitespace();
    let a = it.next()?.parse().ok()?;
    let b = it.next()?.parse().ok()?;
    it.next().is_none().then_some((a, b))
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<PatchFeatureMap> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(&text)
}
