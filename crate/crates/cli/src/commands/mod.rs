pub mod arch;
pub mod augment;
pub mod dedup;
pub mod eval;
pub mod masks;
pub mod purify;
pub mod stack;

use std::path::{Path, PathBuf};

use anyhow::Context;
use dermaprep_core::config::PipelineConfig;
use dermaprep_core::manifest::DatasetManifest;

pub struct Ctx {
    pub cfg: PipelineConfig,
    pub out: PathBuf,
    pub quiet: bool,
}

impl Ctx {
    pub fn say(&self, text: &str) {
        if !self.quiet {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
        }
    }

    pub fn write(&self, name: &str, contents: &str) -> anyhow::Result<PathBuf> {
        std::fs::create_dir_all(&self.out)
            .with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.out.join(name);
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    /// Loads a manifest and checks its labels against the class list.
    pub fn manifest(&self, path: &Path) -> anyhow::Result<DatasetManifest> {
        let m = DatasetManifest::load(path)?;
        m.check_classes(&self.cfg.class_list)
            .with_context(|| format!("checking {}", path.display()))?;
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Clean,
    Findings,
}
