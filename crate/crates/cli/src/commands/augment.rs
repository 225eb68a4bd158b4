use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use dermaprep_core::augment::{apply_plan_observed, plan_balance, AugmentError};
use dermaprep_core::manifest::{DatasetManifest, Provenance};

use super::{Ctx, Status};
use crate::exit::ConfigIssue;
use crate::runlog::RunLog;

fn merged(ctx: &Ctx, paths: &[PathBuf]) -> anyhow::Result<DatasetManifest> {
    let mut m = DatasetManifest::default();
    for p in paths {
        let next = ctx.manifest(p)?;
        m = m.merged(&next).with_context(|| format!("merging {}", p.display()))?;
    }
    Ok(m)
}

/// Plans the balancing and, when `materialize` is set, writes the images and
/// `manifest.csv` under the output directory.
pub fn run(
    ctx: &Ctx,
    manifests: &[PathBuf],
    generated: Option<&Path>,
    materialize: bool,
) -> anyhow::Result<Status> {
    let base = merged(ctx, manifests)?;
    let gen = match generated {
        Some(p) => {
            let g = ctx.manifest(p)?;
            if let Some(r) = g.rows.iter().find(|r| r.provenance != Provenance::Generated) {
                return Err(ConfigIssue(format!(
                    "{}: row `{}` has provenance `{}`, expected `generated`",
                    p.display(),
                    r.image_id,
                    r.provenance
                ))
                .into());
            }
            g
        }
        None => DatasetManifest::default(),
    };
    let gen_counts: BTreeMap<String, usize> = gen.class_counts(Some(Provenance::Generated));
    let plan = match plan_balance(
        &base,
        &ctx.cfg.class_list,
        &gen_counts,
        ctx.cfg.multiplier,
        &ctx.cfg.stage_targets,
    ) {
        Ok(p) => p,
        Err(AugmentError::Infeasible(problems)) => {
            eprintln!("infeasible plan:");
            for p in &problems {
                eprintln!("  {p}");
            }
            return Ok(Status::Findings);
        }
        Err(e) => return Err(e.into()),
    };
    ctx.say(&plan.render());
    ctx.write("plan.csv", &plan.to_csv())?;
    if !materialize {
        return Ok(Status::Clean);
    }

    let pool = base.merged(&gen)?;
    let log = RunLog::create(&ctx.out, ctx.quiet)?;
    let out = apply_plan_observed(
        &pool,
        &plan,
        ctx.cfg.seed,
        ctx.cfg.crop_fraction,
        &ctx.out.join("images"),
        &|id, took| log.line("augment", id, took.as_millis(), "ok"),
    )?;
    log.flush();
    out.save(ctx.out.join("manifest.csv"))?;
    let counts = out.class_counts(None);
    let summary: Vec<String> = plan
        .classes
        .iter()
        .map(|c| format!("{} {}", counts.get(&c.class).copied().unwrap_or(0), c.class))
        .collect();
    ctx.say(&format!("final set: {}", summary.join(", ")));
    Ok(Status::Clean)
}
