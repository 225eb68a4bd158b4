use std::path::Path;

use anyhow::Context;
use dermaprep_core::imaging::{load_image, load_mask, save_mask, save_png};
use dermaprep_core::manifest::{DatasetManifest, ManifestRow, Provenance};
use dermaprep_core::purify::purify;
use dermaprep_core::BinaryMask;
use rayon::prelude::*;

use super::{Ctx, Status};
use crate::exit::ConfigIssue;
use crate::runlog::RunLog;

fn process(ctx: &Ctx, row: &ManifestRow, emit_mask: bool) -> anyhow::Result<ManifestRow> {
    let img = load_image(&row.path)?;
    let lesion = match &row.mask_path {
        Some(p) => load_mask(p)?,
        None => BinaryMask::new(img.width(), img.height()),
    };
    let (repaired, occ) = purify(&img, &lesion, &ctx.cfg.purify)?;
    let id = format!("{}__purified", row.image_id);
    let img_dir = ctx.out.join("purified").join(&row.class_label);
    std::fs::create_dir_all(&img_dir).with_context(|| format!("creating {}", img_dir.display()))?;
    let path = img_dir.join(format!("{id}.png"));
    save_png(&repaired, &path)?;
    if emit_mask {
        save_mask(&occ, img_dir.join(format!("{id}.occ.png")))?;
    }
    Ok(ManifestRow {
        image_id: id,
        path,
        class_label: row.class_label.clone(),
        provenance: Provenance::Purified,
        mask_path: row.mask_path.clone(),
    })
}

/// `12 cases of nevus, 5 cases of melanoma` in class-list order.
pub fn summary_line(counts: &[(String, usize)]) -> String {
    let parts: Vec<String> = counts
        .iter()
        .map(|(c, n)| format!("{n} cases of {}", c.replace('_', " ")))
        .collect();
    format!("purified {}", parts.join(", "))
}

pub fn run(ctx: &Ctx, manifest: &Path, emit_mask: bool) -> anyhow::Result<Status> {
    ctx.cfg
        .purify
        .validate()
        .map_err(|e| ConfigIssue(e.to_string()))?;
    let m = ctx.manifest(manifest)?;
    let log = RunLog::create(&ctx.out, ctx.quiet)?;
    let results: Vec<Option<ManifestRow>> = m
        .rows
        .par_iter()
        .map(|row| {
            log.time("purify", &row.image_id, || process(ctx, row, emit_mask))
                .map_err(|e| format!("{e:#}"))
                .ok()
        })
        .collect();
    log.flush();

    let failed = results.iter().filter(|r| r.is_none()).count();
    let out = DatasetManifest::new(results.into_iter().flatten().collect())?;
    out.save(ctx.out.join("manifest.csv"))?;
    let counts = out.class_counts(None);
    let ordered: Vec<(String, usize)> = ctx
        .cfg
        .class_list
        .iter()
        .map(|c| (c.clone(), counts.get(c).copied().unwrap_or(0)))
        .collect();
    ctx.say(&summary_line(&ordered));
    if failed > 0 {
        eprintln!("{failed} of {} rows failed; see run.log", m.len());
        return Ok(Status::Findings);
    }
    Ok(Status::Clean)
}
