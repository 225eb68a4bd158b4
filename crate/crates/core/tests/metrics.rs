use dermaprep_core::metrics::{
    accuracy, auc, confusion, roc, roc_binary, specificity_at_sensitivity, PredictionSet,
    RocCurve, ScoredPrediction,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Scores drawn from a small grid so ties are common.
fn binary_set(n: usize, seed: u64) -> (Vec<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
        if labels.iter().any(|&b| b) && labels.iter().any(|&b| !b) {
            let scores = labels
                .iter()
                .map(|&l| {
                    let v = rng.gen_range(0..20) as f64 / 19.0;
                    if l {
                        (v + 0.2).min(1.0)
                    } else {
                        v
                    }
                })
                .collect();
            return (scores, labels);
        }
    }
}

fn mann_whitney(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// `(fpr, tpr)` at every candidate threshold, by direct counting.
fn brute_points(scores: &[f64], labels: &[bool]) -> Vec<(f64, f64)> {
    let p = labels.iter().filter(|&&b| b).count() as f64;
    let n = labels.len() as f64 - p;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.push(f64::INFINITY);
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    thresholds
        .iter()
        .map(|&t| {
            let tp = scores.iter().zip(labels).filter(|(&s, &l)| l && s >= t).count() as f64;
            let fp = scores.iter().zip(labels).filter(|(&s, &l)| !l && s >= t).count() as f64;
            (fp / n, tp / p)
        })
        .collect()
}

/// Best specificity with sensitivity at least `level`, over the operating
/// points and the straight segments joining consecutive ones.
fn brute_specificity(points: &[(f64, f64)], level: f64) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for &(f, t) in points {
        if t >= level {
            best = best.max(1.0 - f);
        }
    }
    for w in points.windows(2) {
        let ((f0, t0), (f1, t1)) = (w[0], w[1]);
        if t0 < level && level <= t1 {
            let f = f0 + (level - t0) / (t1 - t0) * (f1 - f0);
            best = best.max(1.0 - f);
        }
    }
    best
}

#[test]
fn auc_equals_mann_whitney() {
    for seed in 0..100 {
        let n = 2 + (seed as usize * 37) % 199;
        let (scores, labels) = binary_set(n, seed);
        let c = roc_binary(&scores, &labels).unwrap();
        let diff = (auc(&c) - mann_whitney(&scores, &labels)).abs();
        assert!(diff <= 1e-12, "seed {seed} n {n}: {diff}");
    }
}

#[test]
fn curve_points_equal_brute_force_counts() {
    for seed in 0..50 {
        let (scores, labels) = binary_set(20, 500 + seed);
        let c = roc_binary(&scores, &labels).unwrap();
        let got: Vec<(f64, f64)> = c.points.iter().map(|p| (p.fpr, p.tpr)).collect();
        assert_eq!(got, brute_points(&scores, &labels));
        let first = c.points[0];
        let last = c.points[c.points.len() - 1];
        assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
    }
}

#[test]
fn specificity_matches_threshold_scan() {
    for seed in 0..100 {
        let (scores, labels) = binary_set(100, 9000 + seed);
        let c = roc_binary(&scores, &labels).unwrap();
        let pts = brute_points(&scores, &labels);
        for level in [0.82, 0.89, 0.95] {
            let got = specificity_at_sensitivity(&c, level).unwrap();
            let want = brute_specificity(&pts, level);
            assert!((got - want).abs() <= 1e-9, "seed {seed} level {level}: {got} vs {want}");
        }
    }
}

fn multiclass(n: usize, k: usize, seed: u64) -> PredictionSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PredictionSet {
        classes: (0..k).map(|i| format!("c{i}")).collect(),
        items: (0..n)
            .map(|i| ScoredPrediction {
                item_id: format!("x{i}"),
                true_label: rng.gen_range(0..k),
                scores: (0..k).map(|_| rng.gen_range(0..5) as f64 / 4.0).collect(),
            })
            .collect(),
    }
}

#[test]
fn confusion_equals_direct_tally() {
    for seed in 0..20 {
        let set = multiclass(50, 3, seed);
        let cm = confusion(&set).unwrap();
        let mut want = vec![vec![0usize; 3]; 3];
        for p in &set.items {
            let max = p.scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let pred = p.scores.iter().position(|&v| v == max).unwrap();
            want[p.true_label][pred] += 1;
        }
        assert_eq!(cm.counts, want);
        assert_eq!(cm.total(), 50);
        for (c, row) in cm.counts.iter().enumerate() {
            let truth = set.items.iter().filter(|p| p.true_label == c).count();
            assert_eq!(row.iter().sum::<usize>(), truth);
        }
        let correct = set
            .items
            .iter()
            .filter(|p| {
                let max = p.scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                p.scores.iter().position(|&v| v == max) == Some(p.true_label)
            })
            .count();
        assert_eq!(accuracy(&cm), correct as f64 / 50.0);
    }
}

fn curve(scores: &[f64], labels: &[bool]) -> RocCurve {
    roc_binary(scores, labels).unwrap()
}

fn labelled() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..120, any::<u64>()).prop_map(|(n, seed)| binary_set(n, seed))
}

proptest! {
    #[test]
    fn auc_invariant_under_monotone_transform((s, l) in labelled()) {
        let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 7.0).collect();
        prop_assert!((auc(&curve(&s, &l)) - auc(&curve(&t, &l))).abs() <= 1e-12);
    }

    #[test]
    fn inverted_labels_complement((s, l) in labelled()) {
        let inv: Vec<bool> = l.iter().map(|b| !b).collect();
        let total = auc(&curve(&s, &l)) + auc(&curve(&s, &inv));
        prop_assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn curve_is_monotone((s, l) in labelled()) {
        let c = curve(&s, &l);
        for w in c.points.windows(2) {
            prop_assert!(w[0].fpr <= w[1].fpr && w[0].tpr <= w[1].tpr);
        }
    }

    #[test]
    fn specificity_non_increasing_in_level((s, l) in labelled(), a in 0.01f64..1.0, b in 0.01f64..1.0) {
        let c = curve(&s, &l);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(specificity_at_sensitivity(&c, lo).unwrap() >= specificity_at_sensitivity(&c, hi).unwrap() - 1e-15);
    }

    #[test]
    fn one_vs_rest_uses_class_column(seed in any::<u64>()) {
        let set = multiclass(60, 3, seed);
        for k in 0..3 {
            let labels: Vec<bool> = set.items.iter().map(|p| p.true_label == k).collect();
            if labels.iter().all(|&b| b) || labels.iter().all(|&b| !b) {
                continue;
            }
            let scores: Vec<f64> = set.items.iter().map(|p| p.scores[k]).collect();
            prop_assert_eq!(roc(&set, k).unwrap(), curve(&scores, &labels));
        }
    }
}
