//! Dataset persistence: exact round-trips, byte-level determinism, and
//! malformed-input handling.

use std::fs;
use std::path::Path;

use iadn_core::dataio::{
    generate_synthetic_dataset, load_dataset, save_dataset, SynthParams,
};
use iadn_core::error::Error;

fn small_dataset(seed: u64) -> iadn_core::dataio::Dataset {
    let params = SynthParams { n_frames: 6, width: 48, height: 32, ..Default::default() };
    generate_synthetic_dataset(&params, seed).unwrap()
}

/// Every file under `dir`, as (relative path, bytes), sorted by path.
fn dir_snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

#[test]
fn save_load_round_trip_is_exact() {
    let ds = small_dataset(42);
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&ds, dir.path()).unwrap();
    let loaded = load_dataset(dir.path()).unwrap();
    // Bit-exact: pixels are quantized to the 8-bit grid at generation time
    // and floats are written in shortest round-trip form.
    assert_eq!(ds, loaded);
}

#[test]
fn saving_twice_produces_identical_bytes() {
    let ds = small_dataset(9);
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    save_dataset(&ds, dir_a.path()).unwrap();
    save_dataset(&ds, dir_b.path()).unwrap();
    assert_eq!(dir_snapshot(dir_a.path()), dir_snapshot(dir_b.path()));
}

#[test]
fn load_save_load_round_trip_is_stable() {
    let ds = small_dataset(3);
    let dir_a = tempfile::tempdir().unwrap();
    save_dataset(&ds, dir_a.path()).unwrap();
    let loaded = load_dataset(dir_a.path()).unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    save_dataset(&loaded, dir_b.path()).unwrap();
    assert_eq!(dir_snapshot(dir_a.path()), dir_snapshot(dir_b.path()));
}

#[test]
fn unknown_version_is_a_version_error() {
    let ds = small_dataset(1);
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&ds, dir.path()).unwrap();
    let index = dir.path().join("index.txt");
    let text = fs::read_to_string(&index).unwrap();
    fs::write(&index, text.replacen("iadn-dataset v1", "iadn-dataset v9", 1)).unwrap();
    match load_dataset(dir.path()) {
        Err(Error::Version { found, expected }) => {
            assert_eq!(found, "v9");
            assert_eq!(expected, "v1");
        }
        other => panic!("expected a version error, got {other:?}"),
    }
}

#[test]
fn malformed_annotation_line_is_a_data_error() {
    let ds = small_dataset(2);
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&ds, dir.path()).unwrap();
    let index = dir.path().join("index.txt");
    let text = fs::read_to_string(&index).unwrap();
    let broken = text.replacen("ann ", "ann oops ", 1);
    assert_ne!(text, broken, "dataset should contain at least one annotation");
    fs::write(&index, broken).unwrap();
    let err = load_dataset(dir.path()).unwrap_err();
    assert!(matches!(err, Error::Data(_)), "got {err:?}");
}

#[test]
fn truncated_image_is_a_data_error_naming_the_frame() {
    let ds = small_dataset(4);
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&ds, dir.path()).unwrap();
    let img = dir.path().join("images").join(format!("{}_v.ppm", ds.frames[0].id));
    let bytes = fs::read(&img).unwrap();
    fs::write(&img, &bytes[..bytes.len() / 2]).unwrap();
    let err = load_dataset(dir.path()).unwrap_err();
    match err {
        Error::Data(msg) => assert!(
            msg.contains(&ds.frames[0].id) && msg.contains("truncated"),
            "unexpected message {msg:?}"
        ),
        other => panic!("expected a data error, got {other:?}"),
    }
}

#[test]
fn missing_index_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_dataset(dir.path()), Err(Error::Io { .. })));
}

#[test]
fn pnm_files_have_expected_headers() {
    let ds = small_dataset(5);
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&ds, dir.path()).unwrap();
    let vis = fs::read(dir.path().join("images").join(format!("{}_v.ppm", ds.frames[0].id))).unwrap();
    assert!(vis.starts_with(b"P6\n48 32\n255\n"));
    assert_eq!(vis.len(), 13 + 48 * 32 * 3);
    let thm = fs::read(dir.path().join("images").join(format!("{}_t.pgm", ds.frames[0].id))).unwrap();
    assert!(thm.starts_with(b"P5\n48 32\n255\n"));
    assert_eq!(thm.len(), 13 + 48 * 32);
}
