use dermaprep_core::archcheck::{infer_conv, infer_transconv, infer_upconv, parse_arch, trace, Shape};

/// Counts window placements over the zero-padded input, stepping by `s`.
fn conv_oracle(n: i64, k: i64, s: i64, p: i64, d: i64) -> Option<i64> {
    let padded = n + 2 * p;
    let mut count = 0;
    let mut start = 0;
    loop {
        let last_tap = start + d * (k - 1);
        if last_tap >= padded {
            break;
        }
        count += 1;
        start += s;
    }
    (count > 0).then_some(count)
}

/// Scatters every input tap into the full output, then crops `p` from each end.
fn transconv_oracle(n: i64, k: i64, s: i64, p: i64, d: i64) -> Option<i64> {
    let mut touched = std::collections::BTreeSet::new();
    for i in 0..n {
        for j in 0..k {
            touched.insert(i * s + d * j);
        }
    }
    let full = touched.iter().next_back().map_or(0, |m| m + 1);
    let out = full - 2 * p;
    (out >= 1).then_some(out)
}

#[test]
fn sliding_window_equivalence() {
    let mut cases = 0;
    for n in 1..=64 {
        for k in 1..=5 {
            for s in 1..=3 {
                for p in 0..=2 {
                    for d in 1..=4 {
                        assert_eq!(infer_conv(n, k, s, p, d), conv_oracle(n, k, s, p, d), "conv n={n} k={k} s={s} p={p} d={d}");
                        assert_eq!(
                            infer_transconv(n, k, s, p, d),
                            transconv_oracle(n, k, s, p, d),
                            "transconv n={n} k={k} s={s} p={p} d={d}"
                        );
                        cases += 2;
                    }
                }
            }
        }
    }
    assert!(cases > 10_000);
}

#[test]
fn transposed_convolution_inverts_size() {
    for n in 1..=64 {
        for k in 1..=5 {
            for s in 1..=3 {
                for p in 0..=2 {
                    for d in 1..=4 {
                        if let Some(up) = infer_transconv(n, k, s, p, d) {
                            assert_eq!(infer_conv(up, k, s, p, d), Some(n));
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn upconv_is_scaled_conv() {
    for n in 1..=32 {
        assert_eq!(infer_upconv(n, 2, 3, 1, 1), Some(2 * n));
        assert_eq!(infer_upconv(n, 2, 3, 1, 1), conv_oracle(2 * n, 3, 1, 1, 1));
    }
}

#[test]
fn trace_reports_declared_mismatch_and_resyncs() {
    let text = "input 3 32 32\n\
                conv 8 k3x3 s1 p1 expect 8 32 32\n\
                conv 8 k3x3 s2 p1 expect 8 15 15\n\
                conv 8 k3x3 s1 p1 expect 8 15 15\n";
    let file = parse_arch(text, "t").unwrap();
    let t = trace(&file.specs[0], true).unwrap();
    let bad: Vec<usize> = t.mismatches().map(|r| r.index).collect();
    assert_eq!(bad, vec![2]);
    assert_eq!(t.output(), Shape::new(8, 15, 15));
    assert_eq!(t.rows[0].params, 8 * 3 * 9 + 8);
}
