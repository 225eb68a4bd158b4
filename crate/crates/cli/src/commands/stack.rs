use std::collections::BTreeSet;
use std::path::PathBuf;

use dermaprep_core::imaging::{load_image, stack_seven, write_stack};
use rayon::prelude::*;

use super::{Ctx, Status};
use crate::exit::ConfigIssue;
use crate::runlog::RunLog;

/// Writes `<out>/<stem>.d7st` for every input image.
pub fn run(ctx: &Ctx, images: &[PathBuf]) -> anyhow::Result<Status> {
    let mut stems = BTreeSet::new();
    let mut jobs = Vec::new();
    for p in images {
        let stem = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| ConfigIssue(format!("{}: no file name", p.display())))?;
        if !stems.insert(stem.clone()) {
            return Err(ConfigIssue(format!("two inputs share the stem `{stem}`")).into());
        }
        jobs.push((p, stem));
    }
    let log = RunLog::create(&ctx.out, ctx.quiet)?;
    jobs.par_iter().try_for_each(|(p, stem)| {
        log.time("stack", stem, || -> anyhow::Result<()> {
            let s = stack_seven(&load_image(p)?)?;
            write_stack(&s, ctx.out.join(format!("{stem}.d7st")))?;
            Ok(())
        })
    })?;
    ctx.say(&format!("wrote {} stacks", jobs.len()));
    Ok(Status::Clean)
}
