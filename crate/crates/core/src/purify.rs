//! Occlusion removal: find hairs and ruler marks, keep lesion pixels out of
//! the repair mask, and fill the occluded pixels from their surroundings.
//!
//! Detection works on the CIELUV lightness channel. For each line length the
//! image is closed with line elements at every configured angle; a thin dark
//! structure is filled by most orientations (everything except those running
//! along it), whereas the rim of a large dark blob is only filled by the few
//! orientations close to its tangent. The per-length response is therefore a
//! rank statistic over orientations rather than their maximum.

use std::fmt;
use std::str::FromStr;

use crate::config::{parse_list, ConfigError};
use crate::imaging::{luminance_luv, BinaryMask, Image, ImagingError};
use crate::maskops::{self, MaskError, StructuringElement};

/// Image width the default element sizes are expressed at.
pub const REFERENCE_WIDTH: f64 = 380.0;

/// Lower bound on the automatic threshold, in lightness units. Smooth shading
/// and sensor noise produce small closing residues that Otsu would otherwise
/// split in two on occlusion-free images.
pub const MIN_AUTO_THRESHOLD: f32 = 0.05;

const INPAINT_RADIUS: i64 = 2;
const PROTECTION_RADIUS: u32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum PurifyError {
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("invalid purification config: {0}")]
    Config(String),
    #[error("occlusion mask covers the entire image, nothing to inpaint from")]
    FullMask,
    #[error("image is {0}x{1} but mask is {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
}

pub type Result<T> = std::result::Result<T, PurifyError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Otsu,
    Fixed(f32),
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::Otsu => f.write_str("otsu"),
            Threshold::Fixed(t) => write!(f, "{t}"),
        }
    }
}

impl FromStr for Threshold {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("otsu") {
            return Ok(Threshold::Otsu);
        }
        let t: f32 = s
            .parse()
            .map_err(|_| format!("expected `otsu` or a number, got `{s}`"))?;
        if !(0.0..=1.0).contains(&t) {
            return Err(format!("threshold {t} outside [0, 1]"));
        }
        Ok(Threshold::Fixed(t))
    }
}

/// Parameters of the purification stage. Lengths and the closing radius are
/// given at a 380-pixel image width and scaled with the actual width.
#[derive(Debug, Clone, PartialEq)]
pub struct PurifyConfig {
    pub luminance_threshold: Threshold,
    pub line_lengths: Vec<u32>,
    pub line_angles: Vec<f64>,
    pub closing_radius: u32,
    pub inpaint_iterations: u32,
    pub min_component_area: usize,
}

impl Default for PurifyConfig {
    fn default() -> Self {
        Self {
            luminance_threshold: Threshold::Otsu,
            line_lengths: vec![9, 15, 21, 41],
            line_angles: (0..8).map(|i| i as f64 * 22.5).collect(),
            closing_radius: 5,
            inpaint_iterations: 2,
            min_component_area: 30,
        }
    }
}

impl PurifyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.line_lengths.is_empty() {
            return Err(PurifyError::Config("line_lengths is empty".into()));
        }
        if let Some(l) = self.line_lengths.iter().find(|&&l| l < 3) {
            return Err(PurifyError::Config(format!(
                "line length {l} is shorter than 3"
            )));
        }
        if self.line_angles.is_empty() {
            return Err(PurifyError::Config("line_angles is empty".into()));
        }
        if self.line_angles.iter().any(|a| !a.is_finite()) {
            return Err(PurifyError::Config("line angle is not finite".into()));
        }
        if self.inpaint_iterations < 1 {
            return Err(PurifyError::Config(
                "inpaint_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Sets one field from its textual `key = value` form.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), ConfigError> {
        let bad = |msg: String| ConfigError::InvalidValue {
            key: key.to_string(),
            message: msg,
        };
        match key {
            "luminance_threshold" => self.luminance_threshold = value.parse().map_err(bad)?,
            "line_lengths" => self.line_lengths = parse_list(key, value)?,
            "line_angles" => self.line_angles = parse_list(key, value)?,
            "closing_radius" => {
                self.closing_radius = value.parse().map_err(|e| bad(format!("{e}")))?
            }
            "inpaint_iterations" => {
                self.inpaint_iterations = value.parse().map_err(|e| bad(format!("{e}")))?
            }
            "min_component_area" => {
                self.min_component_area = value.parse().map_err(|e| bad(format!("{e}")))?
            }
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// `key = value` lines that [`set`](Self::set) reads back unchanged.
    pub fn to_kv_lines(&self) -> Vec<(String, String)> {
        let join = |v: Vec<String>| v.join(", ");
        vec![
            (
                "luminance_threshold".into(),
                self.luminance_threshold.to_string(),
            ),
            (
                "line_lengths".into(),
                join(self.line_lengths.iter().map(|l| l.to_string()).collect()),
            ),
            (
                "line_angles".into(),
                join(self.line_angles.iter().map(|a| a.to_string()).collect()),
            ),
            ("closing_radius".into(), self.closing_radius.to_string()),
            (
                "inpaint_iterations".into(),
                self.inpaint_iterations.to_string(),
            ),
            (
                "min_component_area".into(),
                self.min_component_area.to_string(),
            ),
        ]
    }

    fn scale(width: u32) -> f64 {
        width as f64 / REFERENCE_WIDTH
    }

    /// Line lengths for an image of the given width: odd, at least 3.
    pub fn scaled_lengths(&self, width: u32) -> Vec<u32> {
        let s = Self::scale(width);
        let mut out: Vec<u32> = self
            .line_lengths
            .iter()
            .map(|&l| {
                let v = ((l as f64 * s).round() as u32).max(3);
                if v % 2 == 0 {
                    v + 1
                } else {
                    v
                }
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn scaled_closing_radius(&self, width: u32) -> u32 {
        (self.closing_radius as f64 * Self::scale(width)).round() as u32
    }
}

fn require_rgb(img: &Image) -> Result<()> {
    if img.channels() != 3 {
        return Err(ImagingError::ChannelCount {
            expected: 3,
            actual: img.channels(),
        }
        .into());
    }
    Ok(())
}

fn require_match(img: &Image, m: &BinaryMask) -> Result<()> {
    if !m.matches_image(img) {
        return Err(PurifyError::DimensionMismatch(
            img.width(),
            img.height(),
            m.width(),
            m.height(),
        ));
    }
    Ok(())
}

/// Grayscale dilation then erosion of a single-channel image; samples
/// outside the raster are ignored.
fn gray_close(values: &[f32], w: usize, h: usize, offsets: &[(i32, i32)]) -> Vec<f32> {
    let dilated = gray_filter(values, w, h, offsets, -1, f32::max, f32::NEG_INFINITY);
    gray_filter(&dilated, w, h, offsets, 1, f32::min, f32::INFINITY)
}

fn gray_filter(
    values: &[f32],
    w: usize,
    h: usize,
    offsets: &[(i32, i32)],
    sign: i32,
    pick: fn(f32, f32) -> f32,
    init: f32,
) -> Vec<f32> {
    let mut out = vec![0.0; values.len()];
    for y in 0..h as i32 {
        for x in 0..w as i32 {
            let mut acc = init;
            for &(dx, dy) in offsets {
                let (sx, sy) = (x + sign * dx, y + sign * dy);
                if sx >= 0 && sy >= 0 && (sx as usize) < w && (sy as usize) < h {
                    acc = pick(acc, values[sy as usize * w + sx as usize]);
                }
            }
            out[y as usize * w + x as usize] = acc;
        }
    }
    out
}

/// Bottom-hat response of thin dark structures, one value per pixel.
pub fn occlusion_response(img: &Image, cfg: &PurifyConfig) -> Result<Vec<f32>> {
    require_rgb(img)?;
    cfg.validate()?;
    let lum = luminance_luv(img)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values = lum.data();
    let n_angles = cfg.line_angles.len();
    // at most a quarter of the orientations may run along a detected structure
    let rank = n_angles - n_angles / 4;
    let mut response = vec![0.0f32; values.len()];
    let mut closings: Vec<Vec<f32>> = Vec::with_capacity(n_angles);
    for length in cfg.scaled_lengths(img.width()) {
        closings.clear();
        for &angle in &cfg.line_angles {
            let offsets = StructuringElement::line(length, angle).offsets();
            closings.push(gray_close(values, w, h, &offsets));
        }
        let mut column = vec![0.0f32; n_angles];
        for i in 0..values.len() {
            for (slot, c) in column.iter_mut().zip(&closings) {
                *slot = c[i];
            }
            column.sort_unstable_by(|a, b| b.total_cmp(a));
            let r = column[rank - 1] - values[i];
            if r > response[i] {
                response[i] = r;
            }
        }
    }
    Ok(response)
}

const OTSU_BINS: usize = 256;

/// 256-bin histogram spanning `[0, max]`, with `max`; `None` when nothing is positive.
fn response_histogram(values: &[f32]) -> Option<([f64; OTSU_BINS], f32)> {
    let max = values.iter().copied().fold(0.0f32, f32::max);
    if max <= 0.0 {
        return None;
    }
    let mut hist = [0.0f64; OTSU_BINS];
    for &v in values {
        let b = ((v.max(0.0) / max) * (OTSU_BINS - 1) as f32).round() as usize;
        hist[b.min(OTSU_BINS - 1)] += 1.0;
    }
    Some((hist, max))
}

/// Value just above bin `b`: pixels strictly greater are foreground.
fn bin_upper_edge(b: usize, max: f32) -> f32 {
    (b as f32 + 0.5) / (OTSU_BINS - 1) as f32 * max
}

/// Otsu's two-class threshold over a 256-bin histogram spanning `[0, max]`.
pub fn otsu_threshold(values: &[f32]) -> f32 {
    let Some((hist, max)) = response_histogram(values) else {
        return 0.0;
    };
    let total: f64 = hist.iter().sum();
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c).sum();
    let (mut w0, mut sum0) = (0.0f64, 0.0f64);
    let (mut best, mut best_var) = (0usize, -1.0f64);
    for (i, &c) in hist.iter().enumerate() {
        w0 += c;
        sum0 += i as f64 * c;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best_var {
            best_var = between;
            best = i;
        }
    }
    bin_upper_edge(best, max)
}

/// Lower cut of a three-class Otsu split over the same histogram.
///
/// Faint (blonde) and dark hairs give two separate response modes above the
/// background. A two-class split lands between the hair modes whenever both
/// are present; the lower of two cuts separates background from either.
pub fn otsu_lower_threshold(values: &[f32]) -> f32 {
    let Some((hist, max)) = response_histogram(values) else {
        return 0.0;
    };
    // prefix weights and first moments; class [a, b) is w[b]-w[a]
    let mut w = [0.0f64; OTSU_BINS + 1];
    let mut m = [0.0f64; OTSU_BINS + 1];
    for (i, &c) in hist.iter().enumerate() {
        w[i + 1] = w[i] + c;
        m[i + 1] = m[i] + i as f64 * c;
    }
    // between-class variance up to constants: sum of mass^2 / weight
    let term = |a: usize, b: usize| {
        let wt = w[b] - w[a];
        if wt == 0.0 {
            None
        } else {
            Some((m[b] - m[a]).powi(2) / wt)
        }
    };
    let (mut best, mut best_score) = (0usize, f64::NEG_INFINITY);
    for t1 in 1..OTSU_BINS - 1 {
        let Some(low) = term(0, t1) else { continue };
        for t2 in t1 + 1..OTSU_BINS {
            let (Some(mid), Some(high)) = (term(t1, t2), term(t2, OTSU_BINS)) else {
                continue;
            };
            let score = low + mid + high;
            if score > best_score {
                best_score = score;
                best = t1 - 1;
            }
        }
    }
    if best_score == f64::NEG_INFINITY {
        // fewer than three occupied bins
        return otsu_threshold(values);
    }
    bin_upper_edge(best, max)
}

/// Candidate hair and ruler pixels.
pub fn detect_occlusions(img: &Image, cfg: &PurifyConfig) -> Result<BinaryMask> {
    let response = occlusion_response(img, cfg)?;
    let threshold = match cfg.luminance_threshold {
        Threshold::Fixed(t) => t,
        Threshold::Otsu => otsu_lower_threshold(&response).max(MIN_AUTO_THRESHOLD),
    };
    let raw = BinaryMask::from_vec(
        img.width(),
        img.height(),
        response.iter().map(|&r| r > threshold).collect(),
    )?;
    let kept = maskops::remove_small_components(&raw, cfg.min_component_area);
    let radius = cfg.scaled_closing_radius(img.width());
    Ok(maskops::close(&kept, &StructuringElement::disk(radius))?)
}

/// Clears occlusion pixels that lie inside the slightly eroded lesion.
pub fn protect_lesion(occ: &BinaryMask, lesion: &BinaryMask) -> Result<BinaryMask> {
    maskops::check_same(occ, lesion)?;
    let interior = maskops::erode(lesion, &StructuringElement::disk(PROTECTION_RADIUS))?;
    Ok(occ.and_not(&interior))
}

fn median(values: &mut [f32]) -> f32 {
    values.sort_unstable_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        // equal middles must reproduce the value exactly
        let (a, b) = (values[n / 2 - 1], values[n / 2]);
        if a == b {
            a
        } else {
            ((a as f64 + b as f64) / 2.0) as f32
        }
    }
}

/// Repairs the pixels under `occ` with 5x5 masked medians.
///
/// The first pass fills the mask from its boundary inwards, one ring per
/// sweep, each pixel taking the per-channel median of the already known
/// pixels around it. Every further pass (up to `inpaint_iterations` in
/// total) re-estimates each masked pixel from its whole window. Pixels
/// outside the mask are copied unchanged.
pub fn inpaint(img: &Image, occ: &BinaryMask, cfg: &PurifyConfig) -> Result<Image> {
    require_rgb(img)?;
    require_match(img, occ)?;
    cfg.validate()?;
    let covered = occ.count();
    if covered == 0 {
        return Ok(img.clone());
    }
    if covered == occ.len() {
        return Err(PurifyError::FullMask);
    }
    if covered as f64 >= 0.6 * occ.len() as f64 {
        log::warn!(
            "occlusion mask covers {:.0}% of the image",
            100.0 * covered as f64 / occ.len() as f64
        );
    }
    let (w, h) = (img.width() as i64, img.height() as i64);
    let ch = img.channels();
    let mut out = img.clone();
    let mut known: Vec<bool> = occ.data().iter().map(|&b| !b).collect();
    let mut pending: Vec<usize> = (0..known.len()).filter(|&i| !known[i]).collect();
    let mut samples: Vec<Vec<f32>> = vec![Vec::with_capacity(25); ch];

    while !pending.is_empty() {
        let mut assigned = Vec::new();
        let mut still = Vec::new();
        for &i in &pending {
            let (x, y) = (i as i64 % w, i as i64 / w);
            for s in samples.iter_mut() {
                s.clear();
            }
            for ny in (y - INPAINT_RADIUS).max(0)..=(y + INPAINT_RADIUS).min(h - 1) {
                for nx in (x - INPAINT_RADIUS).max(0)..=(x + INPAINT_RADIUS).min(w - 1) {
                    let j = (ny * w + nx) as usize;
                    if known[j] {
                        for (c, s) in samples.iter_mut().enumerate() {
                            s.push(out.data()[j * ch + c]);
                        }
                    }
                }
            }
            if samples[0].is_empty() {
                still.push(i);
            } else {
                let px: Vec<f32> = samples.iter_mut().map(|s| median(s)).collect();
                assigned.push((i, px));
            }
        }
        // the mask is not full, so every sweep reaches at least one pixel
        debug_assert!(!assigned.is_empty());
        for (i, px) in assigned {
            out.data_mut()[i * ch..(i + 1) * ch].copy_from_slice(&px);
            known[i] = true;
        }
        pending = still;
    }

    let masked: Vec<usize> = occ
        .data()
        .iter()
        .enumerate()
        .filter_map(|(i, &b)| b.then_some(i))
        .collect();
    for _ in 1..cfg.inpaint_iterations {
        let snapshot = out.data().to_vec();
        for &i in &masked {
            let (x, y) = (i as i64 % w, i as i64 / w);
            for s in samples.iter_mut() {
                s.clear();
            }
            for ny in (y - INPAINT_RADIUS).max(0)..=(y + INPAINT_RADIUS).min(h - 1) {
                for nx in (x - INPAINT_RADIUS).max(0)..=(x + INPAINT_RADIUS).min(w - 1) {
                    let j = (ny * w + nx) as usize;
                    for (c, s) in samples.iter_mut().enumerate() {
                        s.push(snapshot[j * ch + c]);
                    }
                }
            }
            for c in 0..ch {
                out.data_mut()[i * ch + c] = median(&mut samples[c]);
            }
        }
    }
    Ok(out)
}

/// Full purification: returns the repaired image and the mask that was inpainted.
pub fn purify(img: &Image, lesion: &BinaryMask, cfg: &PurifyConfig) -> Result<(Image, BinaryMask)> {
    require_rgb(img)?;
    require_match(img, lesion)?;
    let occ = detect_occlusions(img, cfg)?;
    let occ = protect_lesion(&occ, lesion)?;
    let repaired = inpaint(img, &occ, cfg)?;
    Ok((repaired, occ))
}
