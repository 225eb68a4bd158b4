use std::path::Path;

use anyhow::Context;
use dermaprep_core::archcheck::verify_text;

use super::{Ctx, Status};

pub fn verify(ctx: &Ctx, spec: &Path, bias: bool) -> anyhow::Result<Status> {
    let text = std::fs::read_to_string(spec).with_context(|| format!("reading {}", spec.display()))?;
    let name = spec
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "net".into());
    let report = verify_text(&text, &name, bias).with_context(|| spec.display().to_string())?;
    ctx.say(&report.render());
    Ok(if report.is_clean() {
        Status::Clean
    } else {
        Status::Findings
    })
}
