//! One line per processed item, to stderr and `<out>/run.log`:
//! `stage=purify id=lesion_0001 duration_ms=41 outcome=ok`.

use std::fmt::Display;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use anyhow::Context;

pub struct RunLog {
    file: Mutex<BufWriter<File>>,
    quiet: bool,
}

impl RunLog {
    /// Creates `out` if needed and truncates its `run.log`.
    pub fn create(out: &Path, quiet: bool) -> anyhow::Result<Self> {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let path = out.join("run.log");
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(Self {
            file: Mutex::new(BufWriter::new(file)),
            quiet,
        })
    }

    pub fn line(&self, stage: &str, id: &str, duration_ms: u128, outcome: &str) {
        let line = format!("stage={stage} id={id} duration_ms={duration_ms} outcome={outcome}");
        if !self.quiet {
            eprintln!("{line}");
        }
        let mut f = self.file.lock().unwrap_or_else(|p| p.into_inner());
        let _ = writeln!(f, "{line}");
    }

    /// Runs `f`, logging its duration and outcome.
    pub fn time<T, E: Display>(
        &self,
        stage: &str,
        id: &str,
        f: impl FnOnce() -> Result<T, E>,
    ) -> Result<T, E> {
        let start = Instant::now();
        let res = f();
        let ms = start.elapsed().as_millis();
        match &res {
            Ok(_) => self.line(stage, id, ms, "ok"),
            Err(e) => {
                let msg = e.to_string().replace('\n', " ");
                self.line(stage, id, ms, &format!("error error=\"{msg}\""))
            }
        }
        res
    }

    pub fn flush(&self) {
        let mut f = self.file.lock().unwrap_or_else(|p| p.into_inner());
        let _ = f.flush();
    }
}

impl Drop for RunLog {
    fn drop(&mut self) {
        self.flush();
    }
}
