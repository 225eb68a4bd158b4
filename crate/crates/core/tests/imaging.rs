use std::path::PathBuf;

use dermaprep_core::imaging::{
    load_image, load_mask, luminance_luv, read_stack, rgb_to_hsv, save_mask, save_png,
    stack_seven, write_stack, ImagingError, STACK_SIZE,
};
use dermaprep_core::{BinaryMask, Image};
use proptest::prelude::*;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn swatch_matches_reference_conversions() {
    let img = load_image(fixture("swatch.png")).unwrap();
    assert_eq!((img.width(), img.height(), img.channels()), (8, 6, 3));
    let hsv = rgb_to_hsv(&img).unwrap();
    let lum = luminance_luv(&img).unwrap();
    let text = std::fs::read_to_string(fixture("swatch_reference.txt")).unwrap();
    let mut rows = 0;
    for line in text.lines().filter(|l| !l.starts_with('#')) {
        let v: Vec<f64> = line.split_whitespace().map(|s| s.parse().unwrap()).collect();
        let (x, y) = (v[0] as u32, v[1] as u32);
        for c in 0..3 {
            assert!((img.get(x, y, c) as f64 - v[2 + c]).abs() < 1e-6, "rgb at {x},{y}");
            assert!((hsv.get(x, y, c) as f64 - v[5 + c]).abs() < 1e-5, "hsv {c} at {x},{y}");
        }
        assert!((lum.get(x, y, 0) as f64 - v[8]).abs() < 1e-4, "L at {x},{y}");
        rows += 1;
    }
    assert_eq!(rows, 48);
}

#[test]
fn png_and_mask_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let img = Image::from_fn(7, 5, 3, |x, y, c| ((x * 31 + y * 17 + c as u32 * 5) % 256) as f32 / 255.0);
    let p = dir.path().join("a.png");
    save_png(&img, &p).unwrap();
    assert_eq!(load_image(&p).unwrap(), img);

    let m = BinaryMask::from_fn(9, 4, |x, y| (x + y) % 3 == 0);
    let mp = dir.path().join("m.png");
    save_mask(&m, &mp).unwrap();
    assert_eq!(load_mask(&mp).unwrap(), m);
}

#[test]
fn non_image_content_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("fake.png");
    std::fs::write(&p, "not an image at all").unwrap();
    assert!(matches!(load_image(&p), Err(ImagingError::UnsupportedFormat { .. })));
    assert!(matches!(load_image(dir.path().join("missing.png")), Err(ImagingError::Io { .. })));
}

#[test]
fn constant_half_maps_to_zero() {
    let s = stack_seven(&Image::filled(50, 30, 3, 0.5)).unwrap();
    assert_eq!((s.width(), s.height(), s.channels()), (STACK_SIZE, STACK_SIZE, 7));
    for px in s.data().chunks(7) {
        for c in [0, 1, 2, 5] {
            assert_eq!(px[c], 0.0);
        }
        // gray has no hue or saturation
        assert_eq!(px[3], -1.0);
        assert_eq!(px[4], -1.0);
    }
}

#[test]
fn stack_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let img = Image::from_fn(20, 11, 3, |x, y, c| ((x + 2 * y + c as u32) % 9) as f32 / 8.0);
    let s = stack_seven(&img).unwrap();
    let p = dir.path().join("s.d7st");
    write_stack(&s, &p).unwrap();
    let bytes = std::fs::read(&p).unwrap();
    assert_eq!(&bytes[..4], b"D7ST");
    assert_eq!(bytes.len(), 12 + 4 * 7 * 380 * 380);
    // channel-major: the second f32 is pixel (1, 0) of the red plane
    let second = f32::from_le_bytes(bytes[16..20].try_into().unwrap());
    assert_eq!(second, s.get(1, 0, 0));
    assert_eq!(read_stack(&p).unwrap(), s);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stack_shape_and_range(w in 1u32..60, h in 1u32..60, seed in any::<u64>()) {
        let img = Image::from_fn(w, h, 3, |x, y, c| {
            let v = seed.wrapping_mul(6364136223846793005).wrapping_add((x * 7919 + y * 104729 + c as u32) as u64);
            (v >> 40) as f32 / (1u64 << 24) as f32
        });
        let s = stack_seven(&img).unwrap();
        prop_assert_eq!((s.width(), s.height(), s.channels()), (380, 380, 7));
        prop_assert!(s.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}
