//! Raster types, image I/O, colour conversion and the seven-channel input stack.
//!
//! Pixel data is stored interleaved (`(y * width + x) * channels + c`) as `f32`
//! values in `[0, 1]` unless a function documents otherwise.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, ImageFormat, ImageReader, RgbImage};

/// Side length of the segmentation network input.
pub const STACK_SIZE: u32 = 380;

/// Magic bytes heading an exported seven-channel stack.
pub const STACK_MAGIC: &[u8; 4] = b"D7ST";

#[derive(Debug, thiserror::Error)]
pub enum ImagingError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: unsupported image format")]
    UnsupportedFormat { path: PathBuf },
    #[error("{path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("{path}: 16-bit and floating point images are not supported")]
    UnsupportedDepth { path: PathBuf },
    #[error("{path}: {message}")]
    Encode { path: PathBuf, message: String },
    #[error("expected a {expected}-channel image, got {actual} channels")]
    ChannelCount { expected: usize, actual: usize },
    #[error("dimensions must be at least 1x1, got {width}x{height}")]
    ZeroDimension { width: u32, height: u32 },
    #[error("dimension mismatch: {left_width}x{left_height} vs {right_width}x{right_height}")]
    DimensionMismatch {
        left_width: u32,
        left_height: u32,
        right_width: u32,
        right_height: u32,
    },
    #[error("raster data has {actual} values, expected {expected}")]
    DataLength { expected: usize, actual: usize },
    #[error("non-finite value in raster data")]
    NonFinite,
    #[error("{path}: not a seven-channel stack file")]
    BadStack { path: PathBuf },
}

pub type Result<T> = std::result::Result<T, ImagingError>;

/// A multi-channel floating point raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: u32,
    height: u32,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: u32, height: u32, channels: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(ImagingError::ZeroDimension { width, height });
        }
        let expected = width as usize * height as usize * channels;
        if data.len() != expected {
            return Err(ImagingError::DataLength {
                expected,
                actual: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(ImagingError::NonFinite);
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Image with every sample set to `value`.
    pub fn filled(width: u32, height: u32, channels: usize, value: f32) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be nonzero");
        Self {
            width,
            height,
            channels,
            data: vec![value; width as usize * height as usize * channels],
        }
    }

    /// Builds an image by evaluating `f(x, y, channel)` for every sample.
    pub fn from_fn(
        width: u32,
        height: u32,
        channels: usize,
        mut f: impl FnMut(u32, u32, usize) -> f32,
    ) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be nonzero");
        let mut data = Vec::with_capacity(width as usize * height as usize * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    pub fn index(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * self.channels
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32, c: usize) -> f32 {
        self.data[self.index(x, y) + c]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, c: usize, value: f32) {
        let i = self.index(x, y) + c;
        self.data[i] = value;
    }

    pub fn pixel(&self, x: u32, y: u32) -> &[f32] {
        let i = self.index(x, y);
        &self.data[i..i + self.channels]
    }

    pub fn pixel_mut(&mut self, x: u32, y: u32) -> &mut [f32] {
        let i = self.index(x, y);
        &mut self.data[i..i + self.channels]
    }

    /// One channel extracted as a single-channel image.
    pub fn channel(&self, c: usize) -> Image {
        assert!(c < self.channels, "channel {c} out of range");
        let data = self
            .data
            .chunks_exact(self.channels)
            .map(|px| px[c])
            .collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    /// Concatenates the channels of equally sized images, in order.
    pub fn concat_channels(parts: &[&Image]) -> Result<Image> {
        let first = parts.first().expect("at least one image to concatenate");
        for p in parts {
            same_dims(first, p)?;
        }
        let channels: usize = parts.iter().map(|p| p.channels).sum();
        let mut data = Vec::with_capacity(first.pixel_count() * channels);
        for i in 0..first.pixel_count() {
            for p in parts {
                data.extend_from_slice(&p.data[i * p.channels..(i + 1) * p.channels]);
            }
        }
        Ok(Image {
            width: first.width,
            height: first.height,
            channels,
            data,
        })
    }

    /// Applies `f` to every sample.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Image {
        Image {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Quantises a 1- or 3-channel image to 8 bits (`round(v * 255)`, clamped).
    pub fn to_dynamic(&self) -> Result<DynamicImage> {
        let bytes: Vec<u8> = self.data.iter().map(|&v| quantize(v)).collect();
        match self.channels {
            1 => Ok(DynamicImage::ImageLuma8(
                GrayImage::from_raw(self.width, self.height, bytes).expect("buffer size"),
            )),
            3 => Ok(DynamicImage::ImageRgb8(
                RgbImage::from_raw(self.width, self.height, bytes).expect("buffer size"),
            )),
            n => Err(ImagingError::ChannelCount {
                expected: 3,
                actual: n,
            }),
        }
    }

    fn require_channels(&self, expected: usize) -> Result<()> {
        if self.channels != expected {
            return Err(ImagingError::ChannelCount {
                expected,
                actual: self.channels,
            });
        }
        Ok(())
    }
}

#[inline]
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn same_dims(a: &Image, b: &Image) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(ImagingError::DimensionMismatch {
            left_width: a.width,
            left_height: a.height,
            right_width: b.width,
            right_height: b.height,
        });
    }
    Ok(())
}

/// Single-channel boolean raster, `true` marking foreground.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be nonzero");
        Self {
            width,
            height,
            data: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_vec(width: u32, height: u32, data: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(ImagingError::ZeroDimension { width, height });
        }
        let expected = width as usize * height as usize;
        if data.len() != expected {
            return Err(ImagingError::DataLength {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                m.set(x, y, f(x, y));
            }
        }
        m
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize]
    }

    /// Like [`get`](Self::get) but `false` outside the raster.
    #[inline]
    pub fn get_padded(&self, x: i64, y: i64) -> bool {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            false
        } else {
            self.data[y as usize * self.width as usize + x as usize]
        }
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        let w = self.width as usize;
        self.data[y as usize * w + x as usize] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn none(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn same_size(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn matches_image(&self, img: &Image) -> bool {
        self.width == img.width && self.height == img.height
    }

    pub fn not(&self) -> BinaryMask {
        self.zip_map(self, |a, _| !a)
    }

    pub fn and(&self, other: &BinaryMask) -> BinaryMask {
        self.zip_map(other, |a, b| a && b)
    }

    pub fn or(&self, other: &BinaryMask) -> BinaryMask {
        self.zip_map(other, |a, b| a || b)
    }

    pub fn and_not(&self, other: &BinaryMask) -> BinaryMask {
        self.zip_map(other, |a, b| a && !b)
    }

    /// True when every foreground pixel of `self` is foreground in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        assert!(self.same_size(other), "mask dimensions differ");
        self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    fn zip_map(&self, other: &BinaryMask, f: impl Fn(bool, bool) -> bool) -> BinaryMask {
        assert!(self.same_size(other), "mask dimensions differ");
        BinaryMask {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Strictly binary 8-bit raster: 0 or 255.
    pub fn to_gray(&self) -> GrayImage {
        let bytes = self.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
        GrayImage::from_raw(self.width, self.height, bytes).expect("buffer size")
    }

    /// Samples `>= 128` decode as foreground.
    pub fn from_gray(gray: &GrayImage) -> Self {
        Self {
            width: gray.width(),
            height: gray.height(),
            data: gray.as_raw().iter().map(|&v| v >= 128).collect(),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ImagingError + '_ {
    move |source| ImagingError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn open_dynamic(path: &Path) -> Result<DynamicImage> {
    let mut head = [0u8; 16];
    let n = File::open(path)
        .and_then(|mut f| f.read(&mut head))
        .map_err(io_err(path))?;
    // sniff the content only; the extension is not trusted
    let format = match image::guess_format(&head[..n]) {
        Ok(f @ (ImageFormat::Png | ImageFormat::Jpeg)) => f,
        _ => {
            return Err(ImagingError::UnsupportedFormat {
                path: path.to_path_buf(),
            })
        }
    };
    let mut reader = ImageReader::open(path).map_err(io_err(path))?;
    reader.set_format(format);
    let img = reader.decode().map_err(|e| match e {
        image::ImageError::IoError(source) => ImagingError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => ImagingError::Decode {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })?;
    use image::ColorType::*;
    match img.color() {
        L8 | La8 | Rgb8 | Rgba8 => Ok(img),
        _ => Err(ImagingError::UnsupportedDepth {
            path: path.to_path_buf(),
        }),
    }
}

/// Decodes an 8-bit PNG or JPEG into a 3-channel image, mapping `v` to `v / 255`.
///
/// Grayscale inputs are replicated across channels and alpha is discarded.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let rgb = open_dynamic(path)?.to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
    Image::new(w, h, 3, data)
}

/// Writes a 1- or 3-channel image as an 8-bit PNG.
pub fn save_png(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let dynamic = img.to_dynamic()?;
    dynamic
        .save_with_format(path, ImageFormat::Png)
        .map_err(|e| ImagingError::Encode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    Ok(BinaryMask::from_gray(&open_dynamic(path)?.to_luma8()))
}

pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    mask.to_gray()
        .save_with_format(path, ImageFormat::Png)
        .map_err(|e| ImagingError::Encode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

/// Hexcone RGB to HSV; hue is reported as `angle / 360`.
pub fn rgb_to_hsv(img: &Image) -> Result<Image> {
    img.require_channels(3)?;
    let mut out = img.clone();
    for px in out.data.chunks_exact_mut(3) {
        let (h, s, v) = hsv_of(px[0], px[1], px[2]);
        px[0] = h;
        px[1] = s;
        px[2] = v;
    }
    Ok(out)
}

fn hsv_of(r: f32, g: f32, b: f32) -> (f32, f32, f32) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    if delta <= 0.0 {
        return (0.0, s, max);
    }
    let sector = if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    let h = sector / 6.0;
    // rem_euclid can land exactly on 6.0 for tiny negative inputs
    let h = if h >= 1.0 { 0.0 } else { h };
    (h, s, max)
}

#[inline]
fn srgb_to_linear(c: f32) -> f64 {
    let c = c as f64;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

/// CIE L* of an sRGB triple (D65), scaled to `[0, 1]`.
pub fn lightness(r: f32, g: f32, b: f32) -> f32 {
    // Y row of the sRGB -> XYZ matrix, normalised so that white has Y = 1
    let y = 0.2126 * srgb_to_linear(r) + 0.7152 * srgb_to_linear(g) + 0.0722 * srgb_to_linear(b);
    const EPSILON: f64 = 216.0 / 24389.0;
    const KAPPA: f64 = 24389.0 / 27.0;
    let l = if y > EPSILON {
        116.0 * y.cbrt() - 16.0
    } else {
        KAPPA * y
    };
    (l / 100.0).clamp(0.0, 1.0) as f32
}

/// The L* channel of CIELUV, single channel in `[0, 1]`.
pub fn luminance_luv(img: &Image) -> Result<Image> {
    img.require_channels(3)?;
    let data = img
        .data
        .chunks_exact(3)
        .map(|px| lightness(px[0], px[1], px[2]))
        .collect();
    Ok(Image {
        width: img.width,
        height: img.height,
        channels: 1,
        data,
    })
}

/// Bilinear resampling with pixel-centre alignment and edge clamping.
///
/// Resizing to the current dimensions returns an exact copy.
pub fn resize(img: &Image, width: u32, height: u32) -> Result<Image> {
    if width == 0 || height == 0 {
        return Err(ImagingError::ZeroDimension { width, height });
    }
    if width == img.width && height == img.height {
        return Ok(img.clone());
    }
    let xs = sample_positions(img.width, width);
    let ys = sample_positions(img.height, height);
    let ch = img.channels;
    let mut data = Vec::with_capacity(width as usize * height as usize * ch);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for c in 0..ch {
                let a = img.get(x0, y0, c) as f64;
                let b = img.get(x1, y0, c) as f64;
                let d = img.get(x0, y1, c) as f64;
                let e = img.get(x1, y1, c) as f64;
                let top = a + (b - a) * fx;
                let bottom = d + (e - d) * fx;
                data.push((top + (bottom - top) * fy) as f32);
            }
        }
    }
    Ok(Image {
        width,
        height,
        channels: ch,
        data,
    })
}

/// For each destination index: the two source taps and the weight of the second.
fn sample_positions(src: u32, dst: u32) -> Vec<(u32, u32, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = pos.floor() as u32;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

/// Builds the normalised `[R, G, B, H, S, V, L]` network input at 380x380.
///
/// Colour conversions run at the native resolution; the result is then
/// resized and every channel mapped through `(x - 0.5) / 0.5`.
pub fn stack_seven(img: &Image) -> Result<Image> {
    img.require_channels(3)?;
    let hsv = rgb_to_hsv(img)?;
    let lum = luminance_luv(img)?;
    let stacked = Image::concat_channels(&[img, &hsv, &lum])?;
    let resized = resize(&stacked, STACK_SIZE, STACK_SIZE)?;
    Ok(resized.map(|v| ((v - 0.5) / 0.5).clamp(-1.0, 1.0)))
}

/// Writes `"D7ST"`, `u32` width, `u32` height, then little-endian `f32`
/// samples one channel plane at a time.
pub fn write_stack(stack: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    stack.require_channels(7)?;
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    write_stack_to(stack, &mut w).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn write_stack_to(stack: &Image, w: &mut impl Write) -> std::io::Result<()> {
    w.write_all(STACK_MAGIC)?;
    w.write_all(&stack.width.to_le_bytes())?;
    w.write_all(&stack.height.to_le_bytes())?;
    for c in 0..stack.channels {
        for px in stack.data.chunks_exact(stack.channels) {
            w.write_all(&px[c].to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_stack(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(io_err(path))?;
    let bad = || ImagingError::BadStack {
        path: path.to_path_buf(),
    };
    if bytes.len() < 12 || &bytes[..4] != STACK_MAGIC {
        return Err(bad());
    }
    let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let plane = width as usize * height as usize;
    if bytes.len() != 12 + plane * 7 * 4 {
        return Err(bad());
    }
    let values: Vec<f32> = bytes[12..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let mut data = vec![0.0; plane * 7];
    for c in 0..7 {
        for i in 0..plane {
            data[i * 7 + c] = values[c * plane + i];
        }
    }
    Image::new(width, height, 7, data)
}
