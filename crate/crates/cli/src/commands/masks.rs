use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use dermaprep_core::imaging::{load_mask, save_mask};
use dermaprep_core::maskops::fill_holes;
use rayon::prelude::*;

use super::{Ctx, Status};
use crate::runlog::RunLog;

fn png_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let p = entry.with_context(|| format!("reading {}", dir.display()))?.path();
        let is_png = p
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if p.is_file() && is_png {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

pub fn run(ctx: &Ctx, mask_dir: &Path) -> anyhow::Result<Status> {
    let files = png_files(mask_dir)?;
    let log = RunLog::create(&ctx.out, ctx.quiet)?;
    let failed = files
        .par_iter()
        .filter(|p| {
            let name = p.file_name().expect("listed files have names");
            let id = name.to_string_lossy();
            log.time("mask-post", &id, || -> anyhow::Result<()> {
                let filled = fill_holes(&load_mask(p)?);
                save_mask(&filled, ctx.out.join(name))?;
                Ok(())
            })
            .is_err()
        })
        .count();
    log.flush();
    ctx.say(&format!("filled {} of {} masks", files.len() - failed, files.len()));
    if failed > 0 {
        bail!("{failed} masks could not be processed; see run.log");
    }
    Ok(Status::Clean)
}
