use std::collections::BTreeMap;
use std::path::Path;

use dermaprep_core::augment::{
    apply_plan, crop_window, flip_h, flip_v, plan_balance, random_crop, scale_count, AugPlan,
};
use dermaprep_core::imaging::{load_image, save_mask, save_png};
use dermaprep_core::manifest::{DatasetManifest, ManifestRow, Provenance};
use dermaprep_core::{BinaryMask, Image};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noise(seed: u64, w: u32, h: u32) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::from_fn(w, h, 3, |_, _, _| rng.gen_range(0..=255) as f32 / 255.0)
}

/// Writes one small PNG per row and returns the manifest.
fn synthetic(dir: &Path, spec: &[(&str, Provenance, usize)], with_masks: bool) -> DatasetManifest {
    let mut rows = Vec::new();
    let mut seed = 0;
    for &(class, prov, n) in spec {
        for i in 0..n {
            seed += 1;
            let id = format!("{class}_{}_{i:03}", prov.as_str());
            let path = dir.join(format!("{id}.png"));
            save_png(&noise(seed, 12, 10), &path).unwrap();
            let mask_path = with_masks.then(|| {
                let mp = dir.join(format!("{id}_mask.png"));
                save_mask(&BinaryMask::from_fn(12, 10, |x, y| x > 3 && x < 9 && y > 2 && y < 8), &mp).unwrap();
                mp
            });
            rows.push(ManifestRow {
                image_id: id,
                path,
                class_label: class.to_string(),
                provenance: prov,
                mask_path,
            });
        }
    }
    DatasetManifest::new(rows).unwrap()
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

#[test]
fn flip_index_maps() {
    let img = noise(4, 9, 7);
    let h = flip_h(&img);
    let v = flip_v(&img);
    for y in 0..7 {
        for x in 0..9 {
            for c in 0..3 {
                assert_eq!(h.get(x, y, c), img.get(8 - x, y, c));
                assert_eq!(v.get(x, y, c), img.get(x, 6 - y, c));
            }
        }
    }
}

#[test]
fn crop_window_matches_generator_oracle() {
    let (w, h) = (40u32, 30u32);
    let grid = Image::from_fn(w, h, 1, |x, y, _| (y * w + x) as f32 / (w * h) as f32);
    for seed in 0..64u64 {
        let out = random_crop(&grid, 0.7, seed).unwrap();
        let decode = |v: f32| {
            let i = (v * (w * h) as f32).round() as u32;
            (i % w, i / w)
        };
        let (x0, y0) = decode(out.get(0, 0, 0));
        let (x1, y1) = decode(out.get(w - 1, h - 1, 0));

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (cw, ch) = (28u32, 21u32);
        let ox = rng.gen_range(0..=w - cw);
        let oy = rng.gen_range(0..=h - ch);
        assert_eq!((x0, y0), (ox, oy), "seed {seed}");
        assert_eq!((x1, y1), (ox + cw - 1, oy + ch - 1), "seed {seed}");
        let win = crop_window(w, h, 0.7, seed).unwrap();
        assert_eq!((win.x, win.y, win.width, win.height), (ox, oy, cw, ch));
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn identity_plan_returns_input() {
    let dir = tempfile::tempdir().unwrap();
    let m = synthetic(dir.path(), &[("a", Provenance::Original, 3), ("b", Provenance::Purified, 2)], false);
    let plan = plan_balance(&m, &names(&["a", "b"]), &BTreeMap::new(), 1, &BTreeMap::new()).unwrap();
    let out = apply_plan(&m, &plan, 7, 0.8, &dir.path().join("out")).unwrap();
    assert_eq!(out, m);
}

#[test]
fn three_images_flipped_to_six() {
    let dir = tempfile::tempdir().unwrap();
    let m = synthetic(dir.path(), &[("a", Provenance::Original, 3)], true);
    let targets: BTreeMap<String, usize> = [("a".to_string(), 6)].into_iter().collect();
    let plan = plan_balance(&m, &names(&["a"]), &BTreeMap::new(), 1, &targets).unwrap();
    let out_dir = dir.path().join("out");
    let out = apply_plan(&m, &plan, 0, 0.8, &out_dir).unwrap();
    assert_eq!(out.len(), 6);
    let originals: Vec<_> = out.rows.iter().filter(|r| r.provenance == Provenance::Original).collect();
    let flips: Vec<_> = out.rows.iter().filter(|r| r.image_id.ends_with("__fliph")).collect();
    assert_eq!((originals.len(), flips.len()), (3, 3));
    for f in flips {
        let src = m.rows.iter().find(|r| f.image_id.starts_with(&r.image_id)).unwrap();
        assert_eq!(load_image(&f.path).unwrap(), flip_h(&load_image(&src.path).unwrap()));
        assert_eq!(f.provenance, Provenance::Augmented);
        assert!(f.mask_path.as_ref().unwrap().exists());
    }
}

#[test]
fn partial_flips_take_lexicographic_prefix() {
    let dir = tempfile::tempdir().unwrap();
    let m = synthetic(dir.path(), &[("a", Provenance::Original, 5)], false);
    let targets: BTreeMap<String, usize> = [("a".to_string(), 7)].into_iter().collect();
    let plan = plan_balance(&m, &names(&["a"]), &BTreeMap::new(), 1, &targets).unwrap();
    let out = apply_plan(&m, &plan, 0, 0.8, &dir.path().join("out")).unwrap();
    let flipped: Vec<&str> = out
        .rows
        .iter()
        .filter_map(|r| r.image_id.strip_suffix("__fliph"))
        .collect();
    assert_eq!(flipped, vec!["a_original_000", "a_original_001"]);
}

fn hundredth_scale(dir: &Path) -> (DatasetManifest, AugPlan) {
    let m = synthetic(
        dir,
        &[
            ("melanoma", Provenance::Original, 9),
            ("melanoma", Provenance::Purified, 1),
            ("melanoma", Provenance::Generated, 4),
            ("nevus", Provenance::Original, 25),
            ("nevus", Provenance::Purified, 5),
            ("seborrheic_keratosis", Provenance::Original, 7),
            ("seborrheic_keratosis", Provenance::Generated, 8),
        ],
        false,
    );
    let targets: BTreeMap<String, usize> = [
        ("melanoma".to_string(), scale_count(2685, 0.01)),
        ("nevus".to_string(), scale_count(2988, 0.01)),
        ("seborrheic_keratosis".to_string(), scale_count(2772, 0.01)),
    ]
    .into_iter()
    .collect();
    let classes = names(&["melanoma", "nevus", "seborrheic_keratosis"]);
    let plan = plan_balance(&m, &classes, &BTreeMap::new(), 6, &targets).unwrap();
    (m, plan)
}

fn tree_bytes(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn hundredth_scale_counts_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    std::fs::create_dir_all(&src).unwrap();
    let (m, plan) = hundredth_scale(&src);
    let stage: Vec<usize> = plan.classes.iter().map(|c| c.flip_h_target).collect();
    assert_eq!(stage, vec![27, 30, 28]);

    let run = |name: &str, seed: u64| {
        let out_dir = dir.path().join(name);
        let out = apply_plan(&m, &plan, seed, 0.8, &out_dir).unwrap();
        out.save(out_dir.join("manifest.csv")).unwrap();
        (out, tree_bytes(&out_dir))
    };
    let (out, first) = run("a", 42);
    let counts = out.class_counts(None);
    assert_eq!(counts["melanoma"], 162);
    assert_eq!(counts["nevus"], 180);
    assert_eq!(counts["seborrheic_keratosis"], 168);
    for c in &plan.classes {
        assert_eq!(counts[&c.class], c.final_target);
    }
    // within half a stage image of the full-scale counts per multiplier step
    for (got, full) in [(162, 16110), (180, 17928), (168, 16632)] {
        assert!((got as f64 - full as f64 / 100.0).abs() <= 0.5 * 6.0);
    }
    out.check_unique().unwrap();

    let (_, second) = run("b", 42);
    assert_eq!(first, second);
    let (_, other) = run("c", 43);
    assert_ne!(first, other);
}

#[test]
fn pool_mismatch_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let m = synthetic(dir.path(), &[("a", Provenance::Original, 3)], false);
    let gen: BTreeMap<String, usize> = [("a".to_string(), 2)].into_iter().collect();
    let plan = plan_balance(&m, &names(&["a"]), &gen, 1, &BTreeMap::new()).unwrap();
    assert!(apply_plan(&m, &plan, 0, 0.8, &dir.path().join("o")).is_err());
}
