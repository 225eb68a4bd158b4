use std::path::Path;

use anyhow::Context;
use dermaprep_core::metrics::{evaluate, PredictionSet};

use super::{Ctx, Status};
use crate::exit::ConfigIssue;

pub fn run(ctx: &Ctx, predictions: &Path, classes: Option<&[String]>) -> anyhow::Result<Status> {
    let text = std::fs::read_to_string(predictions)
        .with_context(|| format!("reading {}", predictions.display()))?;
    let set = PredictionSet::parse(&text).with_context(|| predictions.display().to_string())?;
    if let Some(expected) = classes {
        if expected != set.classes.as_slice() {
            return Err(ConfigIssue(format!(
                "{} declares classes `{}`, expected `{}`",
                predictions.display(),
                set.classes.join(","),
                expected.join(",")
            ))
            .into());
        }
    }
    let report = evaluate(&set)?;
    ctx.say(&report.render());
    ctx.write("eval_summary.csv", &report.summary_csv())?;
    ctx.write("eval_curves.csv", &report.curves_csv())?;
    ctx.write("eval_confusion.csv", &report.confusion_csv())?;
    Ok(Status::Clean)
}
