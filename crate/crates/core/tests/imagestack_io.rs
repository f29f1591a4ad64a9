use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use cellflow::imagestack::{load_stack, ImageStack, StackMetadata};
use cellflow::units::Quantity;
use cellflow::Error;

fn meta(channels: &[&str]) -> StackMetadata {
    StackMetadata::new(
        Quantity::um(0.1),
        Quantity::minutes(15.0),
        channels.iter().map(|c| c.to_string()).collect(),
        "io",
    )
    .unwrap()
}

fn write_gray_pages(path: &Path, pages: usize, h: u32, w: u32) {
    let file = BufWriter::new(File::create(path).unwrap());
    let mut enc = tiff::encoder::TiffEncoder::new(file).unwrap();
    for p in 0..pages {
        let data: Vec<u16> = (0..h * w).map(|i| (p as u32 * 1000 + i) as u16).collect();
        enc.write_image::<tiff::encoder::colortype::Gray16>(w, h, &data).unwrap();
    }
}

#[test]
fn three_page_tiff_loads_as_three_frames() {
    let dir = tempfile::tempdir().unwrap();
    let tif = dir.path().join("s.tif");
    let side = dir.path().join("s.json");
    write_gray_pages(&tif, 3, 4, 4);
    meta(&["phase"]).write_sidecar(&side).unwrap();
    let stack = load_stack(&tif, &side).unwrap();
    assert_eq!(stack.shape(), (3, 4, 4, 1));
    let v = stack.channel(2, 0).unwrap().get(1, 2);
    assert_eq!(v, (2000 + 6) as f32 / 65535.0);
}

#[test]
fn page_count_must_divide_by_channels() {
    let dir = tempfile::tempdir().unwrap();
    let tif = dir.path().join("s.tif");
    let side = dir.path().join("s.json");
    write_gray_pages(&tif, 7, 4, 4);
    meta(&["phase", "gfp"]).write_sidecar(&side).unwrap();
    assert!(matches!(load_stack(&tif, &side), Err(Error::InvalidInput(_))));
}

#[test]
fn loading_is_deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let pixels: Vec<f32> = (0..2 * 5 * 3 * 2).map(|i| (i % 17) as f32 / 16.0).collect();
    let stack = ImageStack::new((2, 5, 3, 2), pixels, meta(&["phase", "gfp"])).unwrap();
    let side = dir.path().join("s.json");
    stack.metadata().write_sidecar(&side).unwrap();

    let raw = dir.path().join("s.raw");
    stack.write_raw(&raw).unwrap();
    let a = load_stack(&raw, &side).unwrap();
    let b = load_stack(&raw, &side).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, stack);

    let tif = dir.path().join("s.tif");
    stack.write_tiff_u16(&tif).unwrap();
    let t = load_stack(&tif, &side).unwrap();
    assert_eq!(t.shape(), stack.shape());
    for (x, y) in t.pixels().iter().zip(stack.pixels()) {
        assert!((x - y).abs() <= 0.5 / 65535.0 + 1e-7);
    }
    assert_eq!(t, load_stack(&tif, &side).unwrap());
}

#[test]
fn missing_sidecar_key_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let side = dir.path().join("s.json");
    std::fs::write(&side, r#"{"frame_interval_min": 5, "channels": ["phase"], "origin_id": "x"}"#).unwrap();
    let raw = dir.path().join("s.raw");
    std::fs::write(&raw, []).unwrap();
    let err = load_stack(&raw, &side).unwrap_err();
    assert!(err.to_string().contains("pixel_size_um"), "{err}");
}
