//! One-vs-rest ROC analysis, confusion matrices and the evaluation report.
//!
//! Predictions CSV:
//!
//! ```text
//! # classes: melanoma,nevus,seborrheic_keratosis
//! item_id,true_label,score_melanoma,score_nevus,score_seborrheic_keratosis
//! case001,nevus,0.1,0.8,0.1
//! ```

use std::fmt::Write as _;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("need at least one positive and one negative item")]
    DegenerateLabels,
    #[error("no predictions")]
    Empty,
    #[error("class `{0}` not present")]
    MissingClass(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("sensitivity level {0} must lie in (0, 1]")]
    BadLevel(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPrediction {
    pub item_id: String,
    /// Index into the class list.
    pub true_label: usize,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub classes: Vec<String>,
    pub items: Vec<ScoredPrediction>,
}

impl PredictionSet {
    pub fn class_index(&self, name: &str) -> Result<usize, MetricsError> {
        self.classes
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| MetricsError::MissingClass(name.to_string()))
    }

    pub fn parse(text: &str) -> Result<Self, MetricsError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        let perr = |line, message: String| MetricsError::Parse { line, message };

        let (n, first) = lines.next().ok_or_else(|| perr(1, "empty file".into()))?;
        let decl = first
            .strip_prefix('#')
            .map(str::trim)
            .and_then(|s| s.strip_prefix("classes:"))
            .ok_or_else(|| perr(n, "expected `# classes: a,b,...` header comment".into()))?;
        let classes: Vec<String> = decl.split(',').map(|s| s.trim().to_string()).collect();
        if classes.iter().any(String::is_empty) {
            return Err(perr(n, "empty class name".into()));
        }
        for (i, c) in classes.iter().enumerate() {
            if classes[..i].contains(c) {
                return Err(perr(n, format!("duplicate class `{c}`")));
            }
        }

        let (n, header) = lines.next().ok_or_else(|| perr(n + 1, "missing column header".into()))?;
        let mut expected = vec!["item_id".to_string(), "true_label".to_string()];
        expected.extend(classes.iter().map(|c| format!("score_{c}")));
        let got: Vec<&str> = header.split(',').map(str::trim).collect();
        if got != expected {
            return Err(perr(n, format!("expected header `{}`", expected.join(","))));
        }

        let mut items = Vec::new();
        for (n, line) in lines {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != classes.len() + 2 {
                return Err(perr(n, format!("expected {} fields, got {}", classes.len() + 2, f.len())));
            }
            let true_label = classes
                .iter()
                .position(|c| c == f[1])
                .ok_or_else(|| perr(n, format!("unknown label `{}`", f[1])))?;
            let scores = f[2..]
                .iter()
                .map(|s| match s.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(perr(n, format!("bad score `{s}`"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            items.push(ScoredPrediction {
                item_id: f[0].to_string(),
                true_label,
                scores,
            });
        }
        Ok(Self { classes, items })
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("# classes: {}\nitem_id,true_label", self.classes.join(","));
        for c in &self.classes {
            let _ = write!(s, ",score_{c}");
        }
        s.push('\n');
        for p in &self.items {
            let _ = write!(s, "{},{}", p.item_id, self.classes[p.true_label]);
            for v in &p.scores {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Items scoring at or above this value are called positive. The first
    /// point uses `+inf`.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

/// Descending sweep over distinct scores, ties grouped into one step.
pub fn roc_binary(scores: &[f64], positive: &[bool]) -> Result<RocCurve, MetricsError> {
    let p = positive.iter().filter(|&&b| b).count();
    let n = positive.len() - p;
    if p == 0 || n == 0 {
        return Err(MetricsError::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / n as f64,
            tpr: tp as f64 / p as f64,
            threshold: t,
        });
    }
    Ok(RocCurve { points })
}

/// One-vs-rest curve for class index `positive`.
pub fn roc(set: &PredictionSet, positive: usize) -> Result<RocCurve, MetricsError> {
    let scores: Vec<f64> = set.items.iter().map(|p| p.scores[positive]).collect();
    let labels: Vec<bool> = set.items.iter().map(|p| p.true_label == positive).collect();
    roc_binary(&scores, &labels)
}

/// Trapezoidal area under the curve.
pub fn auc(c: &RocCurve) -> f64 {
    c.points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

/// Mean of the one-vs-rest AUCs of the named classes.
pub fn mean_auc(set: &PredictionSet, classes: &[&str]) -> Result<f64, MetricsError> {
    if classes.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut sum = 0.0;
    for c in classes {
        sum += auc(&roc(set, set.class_index(c)?)?);
    }
    Ok(sum / classes.len() as f64)
}

/// `1 - fpr` where the curve first reaches `level`, interpolating linearly
/// between the two neighbouring points.
pub fn specificity_at_sensitivity(c: &RocCurve, level: f64) -> Result<f64, MetricsError> {
    if !(level > 0.0 && level <= 1.0) {
        return Err(MetricsError::BadLevel(level));
    }
    let pts = &c.points;
    let i = pts
        .iter()
        .position(|p| p.tpr >= level)
        .ok_or(MetricsError::DegenerateLabels)?;
    if i == 0 {
        return Ok(1.0 - pts[0].fpr);
    }
    let (a, b) = (pts[i - 1], pts[i]);
    let t = (level - a.tpr) / (b.tpr - a.tpr);
    Ok(1.0 - (a.fpr + t * (b.fpr - a.fpr)))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    /// `counts[true][predicted]`.
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn render(&self) -> String {
        let w = self.classes.iter().map(String::len).max().unwrap_or(0).max(6);
        let mut s = format!("{:<w$}", "true\\pred");
        for c in &self.classes {
            let _ = write!(s, " {c:>w$}");
        }
        s.push('\n');
        for (c, row) in self.classes.iter().zip(&self.counts) {
            let _ = write!(s, "{c:<w$}");
            for v in row {
                let _ = write!(s, " {v:>w$}");
            }
            s.push('\n');
        }
        s
    }
}

/// Highest-scoring class; ties go to the earlier class.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in scores.iter().enumerate() {
        if v > scores[best] {
            best = i;
        }
    }
    best
}

pub fn confusion(set: &PredictionSet) -> Result<ConfusionMatrix, MetricsError> {
    if set.items.is_empty() {
        return Err(MetricsError::Empty);
    }
    let k = set.classes.len();
    let mut counts = vec![vec![0; k]; k];
    for p in &set.items {
        counts[p.true_label][argmax(&p.scores)] += 1;
    }
    Ok(ConfusionMatrix {
        classes: set.classes.clone(),
        counts,
    })
}

pub fn accuracy(cm: &ConfusionMatrix) -> f64 {
    let trace: usize = (0..cm.classes.len()).map(|i| cm.counts[i][i]).sum();
    trace as f64 / cm.total() as f64
}

pub const SENSITIVITY_LEVELS: [f64; 3] = [0.82, 0.89, 0.95];

/// Classes averaged for the headline mean AUC.
pub const MEAN_AUC_CLASSES: [&str; 2] = ["melanoma", "seborrheic_keratosis"];

#[derive(Debug, Clone, PartialEq)]
pub struct ClassReport {
    pub class: String,
    pub curve: RocCurve,
    pub auc: f64,
    /// Specificity at each of `SENSITIVITY_LEVELS`.
    pub specificity: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Classes with both positives and negatives present.
    pub per_class: Vec<ClassReport>,
    pub mean_auc: Option<f64>,
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
}

pub fn evaluate(set: &PredictionSet) -> Result<EvalReport, MetricsError> {
    let confusion = confusion(set)?;
    let mut per_class = Vec::new();
    for (i, class) in set.classes.iter().enumerate() {
        let curve = match roc(set, i) {
            Ok(c) => c,
            Err(MetricsError::DegenerateLabels) => continue,
            Err(e) => return Err(e),
        };
        let specificity = SENSITIVITY_LEVELS
            .iter()
            .map(|&l| specificity_at_sensitivity(&curve, l))
            .collect::<Result<_, _>>()?;
        per_class.push(ClassReport {
            class: class.clone(),
            auc: auc(&curve),
            curve,
            specificity,
        });
    }
    let pick = |name: &str| per_class.iter().find(|c| c.class == name).map(|c| c.auc);
    let mean_auc = match (pick(MEAN_AUC_CLASSES[0]), pick(MEAN_AUC_CLASSES[1])) {
        (Some(a), Some(b)) => Some((a + b) / 2.0),
        _ => None,
    };
    Ok(EvalReport {
        accuracy: accuracy(&confusion),
        per_class,
        mean_auc,
        confusion,
    })
}

impl EvalReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "one-vs-rest ROC AUC and specificity at sensitivity");
        let _ = writeln!(
            s,
            "{:<24} {:>7} {:>9} {:>9} {:>9}",
            "class", "AUC", "82%", "89%", "95%"
        );
        for c in &self.per_class {
            let _ = write!(s, "{:<24} {:>7.3}", c.class, c.auc);
            for v in &c.specificity {
                let _ = write!(s, " {v:>9.3}");
            }
            s.push('\n');
        }
        match self.mean_auc {
            Some(m) => {
                let _ = writeln!(s, "mean AUC ({}): {m:.3}", MEAN_AUC_CLASSES.join(" + "));
            }
            None => {
                let _ = writeln!(s, "mean AUC ({}): n/a", MEAN_AUC_CLASSES.join(" + "));
            }
        }
        let _ = writeln!(s, "accuracy: {:.1}%", 100.0 * self.accuracy);
        let _ = writeln!(s, "confusion matrix:");
        s.push_str(&self.confusion.render());
        s
    }

    /// `metric,class,level,value` rows: AUCs, mean AUC, accuracy and the
    /// specificity grid.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("metric,class,level,value\n");
        for c in &self.per_class {
            let _ = writeln!(s, "auc,{},,{}", c.class, c.auc);
        }
        if let Some(m) = self.mean_auc {
            let _ = writeln!(s, "mean_auc,{},,{m}", MEAN_AUC_CLASSES.join("+"));
        }
        let _ = writeln!(s, "accuracy,,,{}", self.accuracy);
        for c in &self.per_class {
            for (l, v) in SENSITIVITY_LEVELS.iter().zip(&c.specificity) {
                let _ = writeln!(s, "specificity,{},{l},{v}", c.class);
            }
        }
        s
    }

    pub fn curves_csv(&self) -> String {
        let mut s = String::from("class,fpr,tpr,threshold\n");
        for c in &self.per_class {
            for p in &c.curve.points {
                let _ = writeln!(s, "{},{},{},{}", c.class, p.fpr, p.tpr, p.threshold);
            }
        }
        s
    }

    pub fn confusion_csv(&self) -> String {
        let mut s = String::from("true\\predicted");
        for c in &self.confusion.classes {
            let _ = write!(s, ",{c}");
        }
        s.push('\n');
        for (c, row) in self.confusion.classes.iter().zip(&self.confusion.counts) {
            s.push_str(c);
            for v in row {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(classes: &[&str], rows: &[(usize, &[f64])]) -> PredictionSet {
        PredictionSet {
            classes: classes.iter().map(|s| s.to_string()).collect(),
            items: rows
                .iter()
                .enumerate()
                .map(|(i, (t, s))| ScoredPrediction {
                    item_id: format!("i{i}"),
                    true_label: *t,
                    scores: s.to_vec(),
                })
                .collect(),
        }
    }

    #[test]
    fn perfect_and_constant_curves() {
        let c = roc_binary(&[1.0, 0.0], &[true, false]).unwrap();
        assert!(c.points.iter().any(|p| p.fpr == 0.0 && p.tpr == 1.0));
        assert_eq!(auc(&c), 1.0);
        assert_eq!(specificity_at_sensitivity(&c, 0.95).unwrap(), 1.0);

        let c = roc_binary(&[0.3; 6], &[true, false, true, false, false, true]).unwrap();
        assert_eq!(c.points.len(), 2);
        assert_eq!(auc(&c), 0.5);
        assert!((specificity_at_sensitivity(&c, 0.82).unwrap() - 0.18).abs() < 1e-12);
        assert!(matches!(roc_binary(&[0.1], &[true]), Err(MetricsError::DegenerateLabels)));
    }

    #[test]
    fn confusion_and_accuracy() {
        let s = set(&["m", "n"], &[(0, &[0.2, 0.8])]);
        let cm = confusion(&s).unwrap();
        assert_eq!(cm.counts, vec![vec![0, 1], vec![0, 0]]);
        assert_eq!(accuracy(&cm), 0.0);
        assert_eq!(argmax(&[0.5, 0.5, 0.1]), 0);
        assert!(matches!(confusion(&set(&["m"], &[])), Err(MetricsError::Empty)));
    }

    #[test]
    fn mean_auc_of_named_classes() {
        let s = set(
            &["melanoma", "nevus", "seborrheic_keratosis"],
            &[(0, &[0.9, 0.05, 0.05]), (1, &[0.1, 0.8, 0.1]), (2, &[0.1, 0.1, 0.8])],
        );
        assert_eq!(mean_auc(&s, &MEAN_AUC_CLASSES).unwrap(), 1.0);
        assert!(matches!(mean_auc(&s, &["basal"]), Err(MetricsError::MissingClass(_))));
        let r = evaluate(&s).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.mean_auc, Some(1.0));
    }

    #[test]
    fn csv_round_trip() {
        let text = "# classes: a,b\nitem_id,true_label,score_a,score_b\nx,a,0.25,0.75\ny,b,1,0\n";
        let s = PredictionSet::parse(text).unwrap();
        assert_eq!(s.items.len(), 2);
        assert_eq!(s.items[1].true_label, 1);
        assert_eq!(PredictionSet::parse(&s.to_csv()).unwrap(), s);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let bad = [
            ("item_id,true_label\n", 1),
            ("# classes: a,b\nitem_id,true_label,score_a\n", 2),
            ("# classes: a,b\nitem_id,true_label,score_a,score_b\nx,c,0,1\n", 3),
            ("# classes: a,b\nitem_id,true_label,score_a,score_b\nx,a,0\n", 3),
            ("# classes: a,b\nitem_id,true_label,score_a,score_b\nx,a,0,nan\n", 3),
        ];
        for (text, line) in bad {
            match PredictionSet::parse(text) {
                Err(MetricsError::Parse { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }
}
