//! Binary morphology, hole filling, connected components and the Jaccard index.
//!
//! Pixels outside the raster read as `false` for both dilation and erosion.

use std::collections::VecDeque;

use crate::imaging::BinaryMask;

#[derive(Debug, thiserror::Error)]
pub enum MaskError {
    #[error("mask dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("structuring element must have a nonempty footprint")]
    EmptyElement,
}

fn check_dims(a: &BinaryMask, b: &BinaryMask) -> Result<(), MaskError> {
    if !a.same_size(b) {
        return Err(MaskError::DimensionMismatch(
            a.width(),
            a.height(),
            b.width(),
            b.height(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StructuringElement {
    /// Offsets with `dx² + dy² <= radius²`.
    Disk { radius: u32 },
    /// Offsets with `max(|dx|, |dy|) <= radius`.
    Square { radius: u32 },
    /// A digital segment of `length` pixels centred on the origin.
    Line { length: u32, angle_deg: f64 },
}

impl StructuringElement {
    pub fn disk(radius: u32) -> Self {
        Self::Disk { radius }
    }

    pub fn square(radius: u32) -> Self {
        Self::Square { radius }
    }

    pub fn line(length: u32, angle_deg: f64) -> Self {
        Self::Line { length, angle_deg }
    }

    /// Footprint offsets `(dx, dy)`, sorted and deduplicated.
    pub fn offsets(&self) -> Vec<(i32, i32)> {
        let mut out = Vec::new();
        match *self {
            Self::Disk { radius } => {
                let r = radius as i32;
                for dy in -r..=r {
                    for dx in -r..=r {
                        if dx * dx + dy * dy <= r * r {
                            out.push((dx, dy));
                        }
                    }
                }
            }
            Self::Square { radius } => {
                let r = radius as i32;
                for dy in -r..=r {
                    for dx in -r..=r {
                        out.push((dx, dy));
                    }
                }
            }
            Self::Line { length, angle_deg } => {
                if length > 0 {
                    let (sin, cos) = angle_deg.to_radians().sin_cos();
                    let half = (length as f64 - 1.0) / 2.0;
                    for i in 0..length {
                        let t = i as f64 - half;
                        // image rows grow downwards, so positive angles point up
                        // f64::round is half-away-from-zero, which keeps the set symmetric
                        out.push(((t * cos).round() as i32, (-t * sin).round() as i32));
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

fn footprint(se: &StructuringElement) -> Result<Vec<(i32, i32)>, MaskError> {
    let offsets = se.offsets();
    if offsets.is_empty() {
        return Err(MaskError::EmptyElement);
    }
    Ok(offsets)
}

/// Minkowski sum: a pixel is set when some `p - b` is set, `b` in the footprint.
pub fn dilate(m: &BinaryMask, se: &StructuringElement) -> Result<BinaryMask, MaskError> {
    let offsets = footprint(se)?;
    let mut out = BinaryMask::new(m.width(), m.height());
    for y in 0..m.height() {
        for x in 0..m.width() {
            let hit = offsets
                .iter()
                .any(|&(dx, dy)| m.get_padded(x as i64 - dx as i64, y as i64 - dy as i64));
            out.set(x, y, hit);
        }
    }
    Ok(out)
}

/// Minkowski difference: a pixel is set when every `p + b` is set.
pub fn erode(m: &BinaryMask, se: &StructuringElement) -> Result<BinaryMask, MaskError> {
    let offsets = footprint(se)?;
    let mut out = BinaryMask::new(m.width(), m.height());
    for y in 0..m.height() {
        for x in 0..m.width() {
            let all = offsets
                .iter()
                .all(|&(dx, dy)| m.get_padded(x as i64 + dx as i64, y as i64 + dy as i64));
            out.set(x, y, all);
        }
    }
    Ok(out)
}

pub fn close(m: &BinaryMask, se: &StructuringElement) -> Result<BinaryMask, MaskError> {
    erode(&dilate(m, se)?, se)
}

pub fn open(m: &BinaryMask, se: &StructuringElement) -> Result<BinaryMask, MaskError> {
    dilate(&erode(m, se)?, se)
}

/// Sets every background pixel not 4-connected to the border.
pub fn fill_holes(m: &BinaryMask) -> BinaryMask {
    let (w, h) = (m.width() as usize, m.height() as usize);
    let data = m.data();
    let mut outside = vec![false; w * h];
    let mut queue = VecDeque::new();
    let seed = |i: usize, outside: &mut Vec<bool>, queue: &mut VecDeque<usize>| {
        if !data[i] && !outside[i] {
            outside[i] = true;
            queue.push_back(i);
        }
    };
    for x in 0..w {
        seed(x, &mut outside, &mut queue);
        seed((h - 1) * w + x, &mut outside, &mut queue);
    }
    for y in 0..h {
        seed(y * w, &mut outside, &mut queue);
        seed(y * w + w - 1, &mut outside, &mut queue);
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % w, i / w);
        if x > 0 {
            seed(i - 1, &mut outside, &mut queue);
        }
        if x + 1 < w {
            seed(i + 1, &mut outside, &mut queue);
        }
        if y > 0 {
            seed(i - w, &mut outside, &mut queue);
        }
        if y + 1 < h {
            seed(i + w, &mut outside, &mut queue);
        }
    }
    BinaryMask::from_vec(m.width(), m.height(), outside.iter().map(|&o| !o).collect())
        .expect("same dimensions")
}

/// 8-connected foreground components: a label per pixel (0 = background) and
/// the pixel count of each label, indexed from 1.
pub fn label_components(m: &BinaryMask) -> (Vec<u32>, Vec<usize>) {
    let (w, h) = (m.width() as i64, m.height() as i64);
    let data = m.data();
    let mut labels = vec![0u32; data.len()];
    let mut sizes = vec![0usize];
    let mut stack = Vec::new();
    for start in 0..data.len() {
        if !data[start] || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32;
        let mut size = 0;
        labels[start] = label;
        stack.push(start);
        while let Some(i) = stack.pop() {
            size += 1;
            let (x, y) = ((i as i64) % w, (i as i64) / w);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w || ny >= h {
                        continue;
                    }
                    let j = (ny * w + nx) as usize;
                    if data[j] && labels[j] == 0 {
                        labels[j] = label;
                        stack.push(j);
                    }
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Clears 8-connected components with fewer than `min_area` pixels.
pub fn remove_small_components(m: &BinaryMask, min_area: usize) -> BinaryMask {
    let (labels, sizes) = label_components(m);
    let data = labels
        .iter()
        .map(|&l| l != 0 && sizes[l as usize] >= min_area)
        .collect();
    BinaryMask::from_vec(m.width(), m.height(), data).expect("same dimensions")
}

/// `|a ∧ b| / |a ∨ b|`, taken as 1 when both masks are empty.
pub fn jaccard(a: &BinaryMask, b: &BinaryMask) -> Result<f64, MaskError> {
    let (inter, union) = overlap_counts(a, b)?;
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

fn overlap_counts(a: &BinaryMask, b: &BinaryMask) -> Result<(usize, usize), MaskError> {
    check_dims(a, b)?;
    let mut inter = 0;
    let mut union = 0;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok((inter, union))
}

/// Jaccard agreement over a set of (prediction, truth) pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JaccardSummary {
    /// Mean of the per-image indices.
    pub per_image_mean: f64,
    /// Total intersection over total union across all pairs.
    pub pooled: f64,
    pub count: usize,
}

pub fn jaccard_summary(pairs: &[(BinaryMask, BinaryMask)]) -> Result<JaccardSummary, MaskError> {
    let mut sum = 0.0;
    let mut inter_total = 0usize;
    let mut union_total = 0usize;
    for (a, b) in pairs {
        let (inter, union) = overlap_counts(a, b)?;
        sum += if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        };
        inter_total += inter;
        union_total += union;
    }
    let n = pairs.len();
    Ok(JaccardSummary {
        per_image_mean: if n == 0 { f64::NAN } else { sum / n as f64 },
        pooled: if union_total == 0 {
            1.0
        } else {
            inter_total as f64 / union_total as f64
        },
        count: n,
    })
}

pub(crate) fn check_same(a: &BinaryMask, b: &BinaryMask) -> Result<(), MaskError> {
    check_dims(a, b)
}
