//! Flat `key = value` configuration with dotted section prefixes.
//!
//! ```text
//! # comment
//! seed = 7
//! classes = melanoma, nevus, seborrheic_keratosis
//! purify.closing_radius = 5
//! augment.stage.melanoma = 2685
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::str::FromStr;

use crate::purify::PurifyConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {message}")]
    InvalidValue { key: String, message: String },
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<ConfigError>,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Splits text into `(line number, key, value)` triples, skipping blank and
/// `#` comment lines.
pub fn parse_kv(text: &str) -> Result<Vec<(usize, String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            });
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            });
        }
        out.push((i + 1, k.to_string(), v.to_string()));
    }
    Ok(out)
}

/// Comma separated list of parseable values.
pub fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse().map_err(|e: T::Err| ConfigError::InvalidValue {
                key: key.to_string(),
                message: format!("`{s}`: {e}"),
            })
        })
        .collect()
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::InvalidValue {
        key: key.to_string(),
        message: e.to_string(),
    })
}

pub const DEFAULT_CLASSES: [&str; 3] = ["melanoma", "nevus", "seborrheic_keratosis"];

/// Parameters shared by every pipeline stage.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub purify: PurifyConfig,
    pub comparison_resolution: u32,
    pub dedup_threshold: f64,
    pub dedup_bins: usize,
    pub multiplier: u32,
    pub crop_fraction: f64,
    /// Explicit flip-stage targets per class, overriding the derived ones.
    pub stage_targets: BTreeMap<String, usize>,
    pub seed: u64,
    pub class_list: Vec<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            purify: PurifyConfig::default(),
            comparison_resolution: 256,
            dedup_threshold: 0.005,
            dedup_bins: 20,
            multiplier: 6,
            crop_fraction: 0.8,
            stage_targets: BTreeMap::new(),
            seed: 0,
            class_list: DEFAULT_CLASSES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl PipelineConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (line, key, value) in parse_kv(text)? {
            cfg.set(&key, &value).map_err(|e| ConfigError::AtLine {
                line,
                source: Box::new(e),
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if let Some(rest) = key.strip_prefix("purify.") {
            return self.purify.set(rest, value);
        }
        if let Some(class) = key.strip_prefix("augment.stage.") {
            self.stage_targets
                .insert(class.to_string(), parse_one(key, value)?);
            return Ok(());
        }
        match key {
            "seed" => self.seed = parse_one(key, value)?,
            "classes" => self.class_list = parse_list(key, value)?,
            "dedup.resolution" => self.comparison_resolution = parse_one(key, value)?,
            "dedup.threshold" => self.dedup_threshold = parse_one(key, value)?,
            "dedup.bins" => self.dedup_bins = parse_one(key, value)?,
            "augment.multiplier" => self.multiplier = parse_one(key, value)?,
            "augment.crop_fraction" => self.crop_fraction = parse_one(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.class_list.is_empty() {
            return Err(ConfigError::Invalid("class list is empty".into()));
        }
        let unique: BTreeSet<_> = self.class_list.iter().collect();
        if unique.len() != self.class_list.len() {
            return Err(ConfigError::Invalid("class list has duplicates".into()));
        }
        if self.comparison_resolution == 0 {
            return Err(ConfigError::Invalid("dedup.resolution must be positive".into()));
        }
        if self.dedup_bins == 0 {
            return Err(ConfigError::Invalid("dedup.bins must be positive".into()));
        }
        if self.multiplier == 0 {
            return Err(ConfigError::Invalid(
                "augment.multiplier must be at least 1".into(),
            ));
        }
        if !(self.crop_fraction > 0.0 && self.crop_fraction <= 1.0) {
            return Err(ConfigError::Invalid(
                "augment.crop_fraction must lie in (0, 1]".into(),
            ));
        }
        for class in self.stage_targets.keys() {
            if !self.class_list.contains(class) {
                return Err(ConfigError::Invalid(format!(
                    "stage target for unknown class `{class}`"
                )));
            }
        }
        self.purify
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::purify::Threshold;

    #[test]
    fn parses_sections() {
        let cfg = PipelineConfig::parse(
            "# pipeline\nseed = 42\nclasses = a, b\n\npurify.closing_radius = 3 # smaller\n\
             purify.luminance_threshold = 0.2\ndedup.threshold=0.01\naugment.stage.a = 12\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.class_list, vec!["a", "b"]);
        assert_eq!(cfg.purify.closing_radius, 3);
        assert_eq!(cfg.purify.luminance_threshold, Threshold::Fixed(0.2));
        assert_eq!(cfg.dedup_threshold, 0.01);
        assert_eq!(cfg.stage_targets["a"], 12);
    }

    #[test]
    fn reports_line_numbers() {
        let err = PipelineConfig::parse("seed = 1\nbogus line\n").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 2, .. }));
        let err = PipelineConfig::parse("seed = 1\n\nseed = x\n").unwrap_err();
        assert!(matches!(err, ConfigError::AtLine { line: 3, .. }), "{err}");
        let err = PipelineConfig::parse("colour = red\n").unwrap_err();
        assert!(err.to_string().contains("colour"));
    }

    #[test]
    fn rejects_invalid_combinations() {
        assert!(PipelineConfig::parse("classes = a, a").is_err());
        assert!(PipelineConfig::parse("augment.multiplier = 0").is_err());
        assert!(PipelineConfig::parse("augment.stage.zebra = 3").is_err());
        assert!(PipelineConfig::parse("purify.line_lengths = 1, 9").is_err());
    }
}
