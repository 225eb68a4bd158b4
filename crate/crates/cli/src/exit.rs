//! Exit-code contract: 0 success, 1 domain finding, 2 I/O, 3 config or parse.

use std::fmt;

use dermaprep_core::archcheck::ArchError;
use dermaprep_core::augment::AugmentError;
use dermaprep_core::config::ConfigError;
use dermaprep_core::dedup::DedupError;
use dermaprep_core::imaging::ImagingError;
use dermaprep_core::manifest::ManifestError;
use dermaprep_core::metrics::MetricsError;
use dermaprep_core::purify::PurifyError;

pub const FINDING: u8 = 1;
pub const IO: u8 = 2;
pub const CONFIG: u8 = 3;

/// Invalid user input detected by the CLI itself.
#[derive(Debug)]
pub struct ConfigIssue(pub String);

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigIssue {}

fn manifest_code(e: &ManifestError) -> u8 {
    match e {
        ManifestError::Io { .. } => IO,
        ManifestError::Csv { source, .. } if source.is_io_error() => IO,
        _ => CONFIG,
    }
}

/// First recognised error in the chain decides the code; anything else is
/// treated as I/O.
pub fn code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigIssue>() {
            return CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<ConfigError>() {
            return match e {
                ConfigError::Io { .. } => IO,
                _ => CONFIG,
            };
        }
        if let Some(e) = cause.downcast_ref::<ManifestError>() {
            return manifest_code(e);
        }
        if let Some(e) = cause.downcast_ref::<ArchError>() {
            return match e {
                ArchError::Collapse { .. } => FINDING,
                _ => CONFIG,
            };
        }
        if cause.is::<MetricsError>() || cause.is::<DedupError>() {
            return CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<AugmentError>() {
            return match e {
                AugmentError::Infeasible(_) => FINDING,
                AugmentError::Image { .. } | AugmentError::Io { .. } => IO,
                _ => CONFIG,
            };
        }
        if let Some(e) = cause.downcast_ref::<PurifyError>() {
            return match e {
                PurifyError::Config(_) => CONFIG,
                PurifyError::Imaging(_) => IO,
                _ => FINDING,
            };
        }
        if cause.is::<ImagingError>() || cause.is::<std::io::Error>() {
            return IO;
        }
    }
    IO
}
