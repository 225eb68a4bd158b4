//! Nearest-neighbour screening of generated images against a training corpus
//! by mean squared error.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::imaging::Image;

#[derive(Debug, thiserror::Error)]
pub enum DedupError {
    #[error("images differ in shape: {0}x{1}x{2} vs {3}x{4}x{5}")]
    ShapeMismatch(u32, u32, usize, u32, u32, usize),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("no records to summarise")]
    NoRecords,
    #[error("histogram needs at least one bin")]
    NoBins,
}

/// Default comparison side length (the generator output resolution).
pub const COMPARISON_SIZE: u32 = 256;

/// Default duplicate threshold on the minimum MSE.
pub const DEFAULT_DUP_THRESHOLD: f64 = 0.005;

/// Mean over all pixels and channels of the squared difference.
pub fn mse(a: &Image, b: &Image) -> Result<f64, DedupError> {
    if a.width() != b.width() || a.height() != b.height() || a.channels() != b.channels() {
        return Err(DedupError::ShapeMismatch(
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels(),
        ));
    }
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.data().len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseRecord {
    pub generated_id: String,
    pub nearest_training_id: String,
    pub mse: f64,
}

/// Index and distance of the closest corpus image; ties go to the lowest index.
pub fn nearest_index(gen: &Image, corpus: &[Image]) -> Result<(usize, f64), DedupError> {
    argmin(gen, corpus.iter())
}

fn argmin<'a>(
    gen: &Image,
    corpus: impl Iterator<Item = &'a Image>,
) -> Result<(usize, f64), DedupError> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in corpus.enumerate() {
        let d = mse(gen, c)?;
        if best.map_or(true, |(_, b)| d < b) {
            best = Some((i, d));
        }
    }
    best.ok_or(DedupError::EmptyCorpus)
}

pub fn nearest(
    gen_id: &str,
    gen: &Image,
    corpus: &[(String, Image)],
) -> Result<MseRecord, DedupError> {
    let (i, d) = argmin(gen, corpus.iter().map(|(_, img)| img))?;
    Ok(MseRecord {
        generated_id: gen_id.to_string(),
        nearest_training_id: corpus[i].0.clone(),
        mse: d,
    })
}

/// Screens every generated image against the corpus, in parallel. Output
/// order follows `generated`.
pub fn screen(
    generated: &[(String, Image)],
    corpus: &[(String, Image)],
) -> Result<Vec<MseRecord>, DedupError> {
    generated
        .par_iter()
        .map(|(id, img)| nearest(id, img, corpus))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `bins + 1` ascending edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseSummary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub histogram: Histogram,
    pub flagged: Vec<String>,
    pub count: usize,
}

impl MseSummary {
    /// `mean ± std` line, three decimals.
    pub fn mean_std_line(&self) -> String {
        format!("{:.3} ± {:.3}", self.mean, self.std)
    }

    pub fn render(&self, threshold: f64) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "records: {}", self.count);
        let _ = writeln!(s, "mse: {}", self.mean_std_line());
        let _ = writeln!(
            s,
            "flagged below {threshold}: {}",
            self.flagged.len()
        );
        for id in &self.flagged {
            let _ = writeln!(s, "  {id}");
        }
        let peak = self.histogram.counts.iter().copied().max().unwrap_or(0).max(1);
        for (i, &c) in self.histogram.counts.iter().enumerate() {
            let bar = "#".repeat((c * 40).div_ceil(peak));
            let _ = writeln!(
                s,
                "  [{:.4}, {:.4}) {:>6} {}",
                self.histogram.edges[i],
                self.histogram.edges[i + 1],
                c,
                bar
            );
        }
        s
    }
}

/// Mean, population std (Welford), equal-width histogram over `[0, max]`
/// and the ids whose minimum MSE falls below `dup_threshold`.
pub fn summarize(
    records: &[MseRecord],
    bins: usize,
    dup_threshold: f64,
) -> Result<MseSummary, DedupError> {
    if records.is_empty() {
        return Err(DedupError::NoRecords);
    }
    if bins == 0 {
        return Err(DedupError::NoBins);
    }
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, r) in records.iter().enumerate() {
        let delta = r.mse - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (r.mse - mean);
    }
    let n = records.len();
    let std = (m2 / n as f64).max(0.0).sqrt();

    let max = records.iter().map(|r| r.mse).fold(0.0, f64::max);
    let width = max / bins as f64;
    let edges: Vec<f64> = (0..=bins)
        .map(|i| if i == bins { max } else { i as f64 * width })
        .collect();
    let mut counts = vec![0; bins];
    for r in records {
        let b = if width > 0.0 {
            ((r.mse / width) as usize).min(bins - 1)
        } else {
            0
        };
        counts[b] += 1;
    }
    let flagged = records
        .iter()
        .filter(|r| r.mse < dup_threshold)
        .map(|r| r.generated_id.clone())
        .collect();
    Ok(MseSummary {
        mean,
        std,
        histogram: Histogram { edges, counts },
        flagged,
        count: n,
    })
}

pub fn write_records_csv<W: std::io::Write>(records: &[MseRecord], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["generated_id", "nearest_training_id", "mse"])?;
    for r in records {
        out.write_record([
            r.generated_id.as_str(),
            r.nearest_training_id.as_str(),
            &format!("{:.9}", r.mse),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_histogram_csv<W: std::io::Write>(h: &Histogram, w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["bin_lo", "bin_hi", "count"])?;
    for (i, c) in h.counts.iter().enumerate() {
        out.write_record([
            format!("{:.9}", h.edges[i]),
            format!("{:.9}", h.edges[i + 1]),
            c.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(v: f32) -> Image {
        Image::filled(4, 4, 3, v)
    }

    fn rec(id: &str, mse: f64) -> MseRecord {
        MseRecord {
            generated_id: id.into(),
            nearest_training_id: "t".into(),
            mse,
        }
    }

    #[test]
    fn mse_extremes() {
        assert_eq!(mse(&flat(0.3), &flat(0.3)).unwrap(), 0.0);
        assert_eq!(mse(&flat(0.0), &flat(1.0)).unwrap(), 1.0);
        assert!(mse(&flat(0.0), &Image::filled(4, 4, 1, 0.0)).is_err());
    }

    #[test]
    fn nearest_constant_corpus() {
        let corpus: Vec<(String, Image)> = [0.0, 0.5, 1.0]
            .iter()
            .map(|&v| (format!("c{v}"), flat(v)))
            .collect();
        let r = nearest("g", &flat(0.4), &corpus).unwrap();
        assert_eq!(r.nearest_training_id, "c0.5");
        assert!((r.mse - 0.01).abs() < 1e-7);
        assert!(matches!(nearest("g", &flat(0.4), &[]), Err(DedupError::EmptyCorpus)));
    }

    #[test]
    fn ties_take_lowest_index() {
        let corpus = vec![
            ("a".to_string(), flat(0.2)),
            ("b".to_string(), flat(0.6)),
            ("c".to_string(), flat(0.2)),
        ];
        let r = nearest("g", &flat(0.4), &corpus).unwrap();
        assert_eq!(r.nearest_training_id, "a");
    }

    #[test]
    fn summary_cases() {
        let s = summarize(&[rec("x", 0.5)], 1, 0.005).unwrap();
        assert_eq!(s.histogram.counts, vec![1]);
        assert_eq!((s.mean, s.std), (0.5, 0.0));
        assert!(s.flagged.is_empty());

        let s = summarize(&[rec("dup", 0.0), rec("far", 1.0)], 4, 0.01).unwrap();
        assert_eq!(s.flagged, vec!["dup"]);
        assert_eq!(s.histogram.counts, vec![1, 0, 0, 1]);
        assert_eq!(s.histogram.edges, vec![0.0, 0.25, 0.5, 0.75, 1.0]);

        let s = summarize(&[rec("a", 0.0), rec("b", 0.0)], 3, 0.005).unwrap();
        assert_eq!(s.histogram.counts, vec![2, 0, 0]);
        assert!(matches!(summarize(&[], 3, 0.1), Err(DedupError::NoRecords)));
        assert!(matches!(summarize(&[rec("a", 0.1)], 0, 0.1), Err(DedupError::NoBins)));
    }

    #[test]
    fn report_line_format() {
        let s = summarize(&[rec("a", 0.036), rec("b", 0.140)], 20, 0.005).unwrap();
        assert_eq!(s.mean_std_line(), "0.088 ± 0.052");
    }

    #[test]
    fn csv_outputs() {
        let mut buf = Vec::new();
        write_records_csv(&[rec("g1", 0.25)], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "generated_id,nearest_training_id,mse\ng1,t,0.250000000\n"
        );
        let h = Histogram {
            edges: vec![0.0, 0.5, 1.0],
            counts: vec![3, 1],
        };
        let mut buf = Vec::new();
        write_histogram_csv(&h, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("bin_lo,bin_hi,count\n0.000000000,0.500000000,3\n"));
    }
}
