//! Flip and crop primitives plus the class-balancing planner.
//!
//! Balancing runs in two stages. A horizontal-flip stage lifts classes that
//! received generated images towards a stage target (at most twice their
//! pool). A global stage then multiplies every image by
//! `[identity, flip_v, crop1, crop2, ...]` truncated to the multiplier.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::imaging::{self, BinaryMask, Image, ImagingError};
use crate::manifest::{DatasetManifest, ManifestRow, Provenance};

#[derive(Debug, thiserror::Error)]
pub enum AugmentError {
    #[error("crop fraction {frac} gives an empty window on a {w}x{h} image")]
    DegenerateCrop { frac: f64, w: u32, h: u32 },
    #[error("multiplier must be at least 1")]
    ZeroMultiplier,
    #[error("class `{0}` is not in the manifest class list")]
    UnknownClass(String),
    #[error("manifest already contains augmented row `{0}`")]
    AlreadyAugmented(String),
    #[error("infeasible plan:\n{}", .0.join("\n"))]
    Infeasible(Vec<String>),
    #[error("class `{class}`: plan expects a pool of {expected} images, manifest has {found}")]
    PoolMismatch {
        class: String,
        expected: usize,
        found: usize,
    },
    #[error("derived id `{0}` collides with an existing row")]
    IdCollision(String),
    #[error("{id}: {source}")]
    Image {
        id: String,
        #[source]
        source: ImagingError,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub fn flip_h(img: &Image) -> Image {
    let w = img.width();
    Image::from_fn(w, img.height(), img.channels(), |x, y, c| {
        img.get(w - 1 - x, y, c)
    })
}

pub fn flip_v(img: &Image) -> Image {
    let h = img.height();
    Image::from_fn(img.width(), h, img.channels(), |x, y, c| {
        img.get(x, h - 1 - y, c)
    })
}

/// Crop rectangle `(x, y, w, h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropWindow {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

/// Window of size `(ceil(frac*w), ceil(frac*h))`; offsets are drawn x first,
/// then y, each uniform over the valid range, from ChaCha8 seeded with `seed`.
pub fn crop_window(w: u32, h: u32, frac: f64, seed: u64) -> Result<CropWindow, AugmentError> {
    let degenerate = AugmentError::DegenerateCrop { frac, w, h };
    if !(frac > 0.0 && frac <= 1.0) || frac * (w.min(h) as f64) < 1.0 {
        return Err(degenerate);
    }
    let cw = ((frac * w as f64).ceil() as u32).min(w);
    let ch = ((frac * h as f64).ceil() as u32).min(h);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = rng.gen_range(0..=w - cw);
    let y = rng.gen_range(0..=h - ch);
    Ok(CropWindow {
        x,
        y,
        width: cw,
        height: ch,
    })
}

fn apply_crop(img: &Image, win: CropWindow) -> Result<Image, ImagingError> {
    let cropped = Image::from_fn(win.width, win.height, img.channels(), |x, y, c| {
        img.get(win.x + x, win.y + y, c)
    });
    imaging::resize(&cropped, img.width(), img.height())
}

/// Seeded crop resized back to the input size.
pub fn random_crop(img: &Image, frac: f64, seed: u64) -> Result<Image, AugmentError> {
    let win = crop_window(img.width(), img.height(), frac, seed)?;
    apply_crop(img, win).map_err(|source| AugmentError::Image {
        id: String::new(),
        source,
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-item seed keyed by `(seed, image_id, transform index)`, independent of
/// processing order.
pub fn item_seed(seed: u64, image_id: &str, transform: u32) -> u64 {
    // FNV-1a over the id bytes
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in image_id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(splitmix64(seed ^ splitmix64(h)) ^ transform as u64)
}

/// Rounds `n * scale` half away from zero; used to shrink full-scale
/// targets to a small synthetic corpus.
pub fn scale_count(n: usize, scale: f64) -> usize {
    (n as f64 * scale).round() as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassPlan {
    pub class: String,
    pub base_count: usize,
    pub purified_added: usize,
    pub generated_added: usize,
    pub flip_h_target: usize,
    pub global_multiplier: u32,
    pub final_target: usize,
}

impl ClassPlan {
    pub fn pool(&self) -> usize {
        self.base_count + self.purified_added + self.generated_added
    }

    pub fn flips(&self) -> usize {
        self.flip_h_target - self.pool()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugPlan {
    pub classes: Vec<ClassPlan>,
}

impl AugPlan {
    pub fn class(&self, name: &str) -> Option<&ClassPlan> {
        self.classes.iter().find(|c| c.class == name)
    }

    pub fn total_final(&self) -> usize {
        self.classes.iter().map(|c| c.final_target).sum()
    }

    /// Expected share of the final set derived from generated images,
    /// assuming flips spread evenly over each pool.
    pub fn generated_fraction(&self) -> f64 {
        let total = self.total_final();
        if total == 0 {
            return 0.0;
        }
        let gen: f64 = self
            .classes
            .iter()
            .filter(|c| c.pool() > 0)
            .map(|c| c.generated_added as f64 / c.pool() as f64 * c.final_target as f64)
            .sum();
        gen / total as f64
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<24} {:>9} {:>9} {:>9} {:>9} {:>9} {:>4} {:>9}",
            "class", "original", "purified", "generated", "pool", "flip_h", "x", "final"
        );
        for c in &self.classes {
            let _ = writeln!(
                s,
                "{:<24} {:>9} {:>9} {:>9} {:>9} {:>9} {:>4} {:>9}",
                c.class,
                c.base_count,
                c.purified_added,
                c.generated_added,
                c.pool(),
                c.flip_h_target,
                c.global_multiplier,
                c.final_target
            );
        }
        let _ = writeln!(s, "total final: {}", self.total_final());
        let _ = writeln!(
            s,
            "generated share of final set: {:.1}%",
            100.0 * self.generated_fraction()
        );
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "class,base_count,purified_added,generated_added,flip_h_target,global_multiplier,final_target\n",
        );
        for c in &self.classes {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                c.class,
                c.base_count,
                c.purified_added,
                c.generated_added,
                c.flip_h_target,
                c.global_multiplier,
                c.final_target
            );
        }
        s
    }
}

/// Builds the two-stage plan.
///
/// `m` supplies original and purified rows (generated rows already in `m`
/// are counted as generated); `generated` adds per-class generated counts
/// from elsewhere. Without an explicit entry in `stage_targets`, a class that
/// receives generated images is flipped up to `min(2 * pool, largest pool)`
/// and every other class keeps its pool. Explicit targets must lie in
/// `[pool, 2 * pool]`.
pub fn plan_balance(
    m: &DatasetManifest,
    classes: &[String],
    generated: &BTreeMap<String, usize>,
    multiplier: u32,
    stage_targets: &BTreeMap<String, usize>,
) -> Result<AugPlan, AugmentError> {
    if multiplier == 0 {
        return Err(AugmentError::ZeroMultiplier);
    }
    for class in generated.keys().chain(stage_targets.keys()) {
        if !classes.contains(class) {
            return Err(AugmentError::UnknownClass(class.clone()));
        }
    }
    let mut plans: Vec<ClassPlan> = classes
        .iter()
        .map(|c| ClassPlan {
            class: c.clone(),
            base_count: 0,
            purified_added: 0,
            generated_added: generated.get(c).copied().unwrap_or(0),
            flip_h_target: 0,
            global_multiplier: multiplier,
            final_target: 0,
        })
        .collect();
    for r in &m.rows {
        let Some(p) = plans.iter_mut().find(|p| p.class == r.class_label) else {
            return Err(AugmentError::UnknownClass(r.class_label.clone()));
        };
        match r.provenance {
            Provenance::Original => p.base_count += 1,
            Provenance::Purified => p.purified_added += 1,
            Provenance::Generated => p.generated_added += 1,
            Provenance::Augmented => return Err(AugmentError::AlreadyAugmented(r.image_id.clone())),
        }
    }

    let largest = plans.iter().map(ClassPlan::pool).max().unwrap_or(0);
    let mut problems = Vec::new();
    for p in &mut plans {
        let pool = p.pool();
        p.flip_h_target = match stage_targets.get(&p.class) {
            Some(&t) => {
                if t < pool {
                    problems.push(format!(
                        "{}: stage target {t} is below the pool of {pool}",
                        p.class
                    ));
                } else if t > 2 * pool {
                    problems.push(format!(
                        "{}: stage target {t} exceeds twice the pool ({})",
                        p.class,
                        2 * pool
                    ));
                }
                t
            }
            None if p.generated_added > 0 => (2 * pool).min(largest.max(pool)),
            None => pool,
        };
        p.final_target = p.flip_h_target * multiplier as usize;
    }
    if !problems.is_empty() {
        return Err(AugmentError::Infeasible(problems));
    }
    Ok(AugPlan { classes: plans })
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    FlipH,
    FlipV,
    Crop { index: u32, seed: u64 },
}

impl Op {
    fn tag(&self) -> String {
        match self {
            Op::FlipH => "fliph".into(),
            Op::FlipV => "flipv".into(),
            Op::Crop { index, .. } => format!("crop{index}"),
        }
    }
}

/// One output row: a source row plus the transforms to apply in order.
struct Job {
    source: usize,
    ops: Vec<Op>,
    id: String,
}

fn expand(id: &str, seed: u64, multiplier: u32) -> Vec<(String, Option<Op>)> {
    (0..multiplier)
        .map(|t| match t {
            0 => (id.to_string(), None),
            1 => (format!("{id}__flipv"), Some(Op::FlipV)),
            t => {
                let op = Op::Crop {
                    index: t - 1,
                    seed: item_seed(seed, id, t),
                };
                (format!("{id}__{}", op.tag()), Some(op))
            }
        })
        .collect()
}

fn transform(img: &Image, ops: &[Op], frac: f64) -> Result<Image, AugmentError> {
    let mut out = img.clone();
    for op in ops {
        out = match *op {
            Op::FlipH => flip_h(&out),
            Op::FlipV => flip_v(&out),
            Op::Crop { seed, .. } => {
                let win = crop_window(out.width(), out.height(), frac, seed)?;
                apply_crop(&out, win).map_err(|source| AugmentError::Image {
                    id: String::new(),
                    source,
                })?
            }
        };
    }
    Ok(out)
}

fn mask_to_image(m: &BinaryMask) -> Image {
    Image::from_fn(m.width(), m.height(), 1, |x, y, _| {
        if m.get(x, y) {
            1.0
        } else {
            0.0
        }
    })
}

fn image_to_mask(img: &Image) -> BinaryMask {
    BinaryMask::from_fn(img.width(), img.height(), |x, y| img.get(x, y, 0) >= 0.5)
}

/// Materializes `plan` under `out_dir` and returns the output manifest.
///
/// Within each class the rows sorted by `image_id` form the pool; the first
/// `flips` of them gain a horizontal flip. Each pool or flipped image is then
/// expanded by the multiplier. Identity rows are passed through unchanged,
/// derived rows are written as `out_dir/<class>/<id>.png` with ids of the form
/// `<id>__fliph__crop2`. Rows of classes absent from the plan pass through.
/// Masks, when present, follow the same geometric transforms.
pub fn apply_plan(
    m: &DatasetManifest,
    plan: &AugPlan,
    seed: u64,
    crop_fraction: f64,
    out_dir: &Path,
) -> Result<DatasetManifest, AugmentError> {
    apply_plan_observed(m, plan, seed, crop_fraction, out_dir, &|_, _| {})
}

/// [`apply_plan`] that reports each written image id and the time it took.
pub fn apply_plan_observed(
    m: &DatasetManifest,
    plan: &AugPlan,
    seed: u64,
    crop_fraction: f64,
    out_dir: &Path,
    observe: &(dyn Fn(&str, Duration) + Sync),
) -> Result<DatasetManifest, AugmentError> {
    let mut flipped = vec![false; m.rows.len()];
    for cp in &plan.classes {
        let mut idx: Vec<usize> = (0..m.rows.len())
            .filter(|&i| m.rows[i].class_label == cp.class)
            .collect();
        if idx.len() != cp.pool() {
            return Err(AugmentError::PoolMismatch {
                class: cp.class.clone(),
                expected: cp.pool(),
                found: idx.len(),
            });
        }
        if cp.flip_h_target < cp.pool() || cp.flip_h_target > 2 * cp.pool() {
            return Err(AugmentError::Infeasible(vec![format!(
                "{}: stage target {} outside [{}, {}]",
                cp.class,
                cp.flip_h_target,
                cp.pool(),
                2 * cp.pool()
            )]));
        }
        idx.sort_by(|&a, &b| m.rows[a].image_id.cmp(&m.rows[b].image_id));
        for &i in idx.iter().take(cp.flips()) {
            flipped[i] = true;
        }
    }

    let mut out_rows: Vec<Option<ManifestRow>> = Vec::new();
    let mut jobs = Vec::new();
    for (i, row) in m.rows.iter().enumerate() {
        let Some(cp) = plan.class(&row.class_label) else {
            out_rows.push(Some(row.clone()));
            continue;
        };
        let mut stems = vec![(row.image_id.clone(), vec![])];
        if flipped[i] {
            stems.push((format!("{}__fliph", row.image_id), vec![Op::FlipH]));
        }
        for (stem, base_ops) in stems {
            for (id, op) in expand(&stem, seed, cp.global_multiplier) {
                let mut ops = base_ops.clone();
                ops.extend(op);
                if ops.is_empty() {
                    out_rows.push(Some(row.clone()));
                } else {
                    out_rows.push(None);
                    jobs.push(Job { source: i, ops, id });
                }
            }
        }
    }

    let mut ids: std::collections::BTreeSet<&str> =
        m.rows.iter().map(|r| r.image_id.as_str()).collect();
    for j in &jobs {
        if !ids.insert(j.id.as_str()) {
            return Err(AugmentError::IdCollision(j.id.clone()));
        }
    }

    // group jobs by source so each source image is decoded once
    let mut by_source: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (k, j) in jobs.iter().enumerate() {
        by_source.entry(j.source).or_default().push(k);
    }
    let groups: Vec<(usize, Vec<usize>)> = by_source.into_iter().collect();
    let made: Vec<Vec<(usize, ManifestRow)>> = groups
        .par_iter()
        .map(|(src, ks)| materialize(&m.rows[*src], ks, &jobs, crop_fraction, out_dir, observe))
        .collect::<Result<_, _>>()?;

    let mut derived: Vec<Option<ManifestRow>> = vec![None; jobs.len()];
    for (k, row) in made.into_iter().flatten() {
        derived[k] = Some(row);
    }
    let mut derived = derived.into_iter();
    let rows = out_rows
        .into_iter()
        .map(|r| r.unwrap_or_else(|| derived.next().flatten().expect("every job materialized")))
        .collect();
    Ok(DatasetManifest { rows })
}

fn materialize(
    row: &ManifestRow,
    ks: &[usize],
    jobs: &[Job],
    frac: f64,
    out_dir: &Path,
    observe: &(dyn Fn(&str, Duration) + Sync),
) -> Result<Vec<(usize, ManifestRow)>, AugmentError> {
    let img_err = |source| AugmentError::Image {
        id: row.image_id.clone(),
        source,
    };
    let img = imaging::load_image(&row.path).map_err(img_err)?;
    let mask = match &row.mask_path {
        Some(p) => Some(mask_to_image(&imaging::load_mask(p).map_err(img_err)?)),
        None => None,
    };
    let dir = out_dir.join(&row.class_label);
    std::fs::create_dir_all(&dir).map_err(|source| AugmentError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut out = Vec::with_capacity(ks.len());
    for &k in ks {
        let start = Instant::now();
        let job = &jobs[k];
        let tagged = |e: AugmentError| match e {
            AugmentError::Image { source, .. } => AugmentError::Image {
                id: job.id.clone(),
                source,
            },
            other => other,
        };
        let path: PathBuf = dir.join(format!("{}.png", job.id));
        let res = transform(&img, &job.ops, frac).map_err(tagged)?;
        imaging::save_png(&res, &path).map_err(img_err)?;
        let mask_path = match &mask {
            Some(mimg) => {
                let mp = dir.join(format!("{}_mask.png", job.id));
                let t = transform(mimg, &job.ops, frac).map_err(tagged)?;
                imaging::save_mask(&image_to_mask(&t), &mp).map_err(img_err)?;
                Some(mp)
            }
            None => None,
        };
        observe(&job.id, start.elapsed());
        out.push((
            k,
            ManifestRow {
                image_id: job.id.clone(),
                path,
                class_label: row.class_label.clone(),
                provenance: Provenance::Augmented,
                mask_path,
            },
        ));
    }
    Ok(out)
}
