//! Labeled image inventory stored as CSV:
//! `image_id,path,class_label,provenance,mask_path`.
//!
//! Paths in the file are relative to the file's directory. In memory they are
//! joined onto that directory, and made relative again on write.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub const HEADER: [&str; 5] = ["image_id", "path", "class_label", "provenance", "mask_path"];

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("bad header: expected `{}`, got `{0}`", HEADER.join(","))]
    Header(String),
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("duplicate image_id `{0}`")]
    DuplicateId(String),
    #[error("image `{id}` has class `{class}` outside the configured class list")]
    UnknownClass { id: String, class: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Provenance {
    Original,
    Purified,
    Generated,
    Augmented,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Original => "original",
            Provenance::Purified => "purified",
            Provenance::Generated => "generated",
            Provenance::Augmented => "augmented",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "original" => Ok(Provenance::Original),
            "purified" => Ok(Provenance::Purified),
            "generated" => Ok(Provenance::Generated),
            "augmented" => Ok(Provenance::Augmented),
            other => Err(format!("unknown provenance `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub image_id: String,
    pub path: PathBuf,
    pub class_label: String,
    pub provenance: Provenance,
    pub mask_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub rows: Vec<ManifestRow>,
}

impl DatasetManifest {
    pub fn new(rows: Vec<ManifestRow>) -> Result<Self, ManifestError> {
        let m = Self { rows };
        m.check_unique()?;
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn check_unique(&self) -> Result<(), ManifestError> {
        let mut seen = BTreeSet::new();
        for r in &self.rows {
            if !seen.insert(r.image_id.as_str()) {
                return Err(ManifestError::DuplicateId(r.image_id.clone()));
            }
        }
        Ok(())
    }

    pub fn check_classes(&self, classes: &[String]) -> Result<(), ManifestError> {
        for r in &self.rows {
            if !classes.contains(&r.class_label) {
                return Err(ManifestError::UnknownClass {
                    id: r.image_id.clone(),
                    class: r.class_label.clone(),
                });
            }
        }
        Ok(())
    }

    /// Row counts per class, optionally restricted to one provenance.
    pub fn class_counts(&self, provenance: Option<Provenance>) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for r in &self.rows {
            if provenance.map_or(true, |p| p == r.provenance) {
                *out.entry(r.class_label.clone()).or_insert(0) += 1;
            }
        }
        out
    }

    /// Concatenation; fails on colliding ids.
    pub fn merged(&self, other: &DatasetManifest) -> Result<DatasetManifest, ManifestError> {
        let mut rows = self.rows.clone();
        rows.extend(other.rows.iter().cloned());
        DatasetManifest::new(rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ManifestError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base).map_err(|e| match e {
            ManifestError::Csv { source, .. } => ManifestError::Csv {
                path: path.display().to_string(),
                source,
            },
            other => other,
        })
    }

    /// Parses CSV text, resolving relative paths against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ManifestError> {
        let csv_err = |source| ManifestError::Csv {
            path: "<manifest>".into(),
            source,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = rdr.headers().map_err(csv_err)?.clone();
        if header.iter().collect::<Vec<_>>() != HEADER {
            return Err(ManifestError::Header(header.iter().collect::<Vec<_>>().join(",")));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            let line = rec.position().map_or(0, |p| p.line());
            let bad = |message: String| ManifestError::Row { line, message };
            let field = |i: usize| rec.get(i).unwrap_or("");
            if field(0).is_empty() {
                return Err(bad("empty image_id".into()));
            }
            if field(1).is_empty() {
                return Err(bad("empty path".into()));
            }
            if field(2).is_empty() {
                return Err(bad("empty class_label".into()));
            }
            let provenance = field(3).parse().map_err(bad)?;
            let mask = field(4);
            rows.push(ManifestRow {
                image_id: field(0).to_string(),
                path: normalize(&base.join(field(1))),
                class_label: field(2).to_string(),
                provenance,
                mask_path: (!mask.is_empty()).then(|| normalize(&base.join(mask))),
            });
        }
        Self::new(rows)
    }

    /// CSV text with paths relative to `base`.
    pub fn to_csv(&self, base: &Path) -> Result<String, ManifestError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |source| ManifestError::Csv {
            path: "<manifest>".into(),
            source,
        };
        w.write_record(HEADER).map_err(csv_err)?;
        for r in &self.rows {
            let mask = r
                .mask_path
                .as_ref()
                .map(|p| relative_to(p, base))
                .unwrap_or_default();
            w.write_record([
                r.image_id.as_str(),
                &relative_to(&r.path, base),
                &r.class_label,
                r.provenance.as_str(),
                &mask,
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| ManifestError::Io {
            path: "<manifest>".into(),
            source: e.into_error(),
        })?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ManifestError> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new(""));
        let text = self.to_csv(base)?;
        std::fs::write(path, text).map_err(|source| ManifestError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// `p` expressed relative to `base`, with `/` separators. Falls back to `p`
/// itself when no relative form exists.
pub fn relative_to(p: &Path, base: &Path) -> String {
    let abs = |q: &Path| {
        if q.is_absolute() {
            q.to_path_buf()
        } else {
            std::env::current_dir().map(|d| d.join(q)).unwrap_or_else(|_| q.to_path_buf())
        }
    };
    let rel = pathdiff::diff_paths(normalize(&abs(p)), normalize(&abs(base)))
        .unwrap_or_else(|| p.to_path_buf());
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

fn normalize(p: &Path) -> PathBuf {
    use std::path::Component;
    let mut out = PathBuf::new();
    for c in p.components() {
        match c {
            Component::CurDir => {}
            Component::ParentDir => {
                if !out.pop() {
                    out.push("..");
                }
            }
            other => out.push(other.as_os_str()),
        }
    }
    out
}
