use std::path::Path;

use anyhow::Context;
use dermaprep_core::dedup::{nearest, summarize, write_histogram_csv, write_records_csv, MseRecord};
use dermaprep_core::imaging::{load_image, resize};
use dermaprep_core::manifest::DatasetManifest;
use dermaprep_core::Image;
use rayon::prelude::*;

use super::{Ctx, Status};
use crate::runlog::RunLog;

/// Decodes every row and resizes it to `side`x`side`.
fn load_all(
    m: &DatasetManifest,
    side: u32,
    stage: &str,
    log: &RunLog,
) -> anyhow::Result<Vec<(String, Image)>> {
    m.rows
        .par_iter()
        .map(|r| {
            log.time(stage, &r.image_id, || -> anyhow::Result<(String, Image)> {
                let img = resize(&load_image(&r.path)?, side, side)?;
                Ok((r.image_id.clone(), img))
            })
        })
        .collect()
}

pub fn run(ctx: &Ctx, generated: &Path, training: &Path) -> anyhow::Result<Status> {
    let gen_m = ctx.manifest(generated)?;
    let train_m = ctx.manifest(training)?;
    let log = RunLog::create(&ctx.out, ctx.quiet)?;
    let side = ctx.cfg.comparison_resolution;
    let train = load_all(&train_m, side, "dedup-load", &log)?;
    let gen = load_all(&gen_m, side, "dedup-load", &log)?;
    let records: Vec<MseRecord> = gen
        .par_iter()
        .map(|(id, img)| log.time("dedup", id, || nearest(id, img, &train)))
        .collect::<Result<_, _>>()?;
    log.flush();

    let mut buf = Vec::new();
    write_records_csv(&records, &mut buf).context("formatting records")?;
    ctx.write("dedup_records.csv", &String::from_utf8(buf)?)?;
    if records.is_empty() {
        ctx.say("records: 0");
        return Ok(Status::Clean);
    }
    let summary = summarize(&records, ctx.cfg.dedup_bins, ctx.cfg.dedup_threshold)?;
    let mut buf = Vec::new();
    write_histogram_csv(&summary.histogram, &mut buf).context("formatting histogram")?;
    ctx.write("dedup_histogram.csv", &String::from_utf8(buf)?)?;
    let text = summary.render(ctx.cfg.dedup_threshold);
    ctx.write("dedup_summary.txt", &text)?;
    ctx.say(&text);
    Ok(if summary.flagged.is_empty() {
        Status::Clean
    } else {
        Status::Findings
    })
}
