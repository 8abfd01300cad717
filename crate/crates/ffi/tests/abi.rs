use std::ffi::{c_char, CStr, CString};
use std::ptr;

use loadrank_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    let mut written = 0usize;
    let status = unsafe { lr_last_error_message(buf.as_mut_ptr(), buf.len(), &mut written) };
    assert_eq!(status, LrStatus::Ok);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

/// Two informative columns driven by the label, three pure-noise columns.
fn toy_matrix() -> (Vec<f64>, Vec<u32>, usize, usize) {
    let n = 240;
    let p = 5;
    let mut values = Vec::with_capacity(n * p);
    let mut labels = Vec::with_capacity(n);
    let mut state = 0x2545_f491_4f6c_dd1du64;
    let mut noise = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    for i in 0..n {
        let class = (i % 3) as u32 + 1;
        let signal = class as f64;
        values.push(signal + 0.3 * noise());
        values.push(signal + 0.3 * noise());
        values.push(noise());
        values.push(noise());
        values.push(noise());
        labels.push(class);
    }
    (values, labels, n, p)
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(lr_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn null_arguments_are_reported() {
    let mut out = ptr::null_mut();
    let status = unsafe { lr_dataset_load_csv(ptr::null(), ptr::null(), b',' as c_char, LrMapping::Detailed, &mut out) };
    assert_eq!(status, LrStatus::NullPointer);
    assert!(last_error().contains("null"));
    assert_eq!(unsafe { lr_dataset_n_samples(ptr::null()) }, 0);
    unsafe { lr_dataset_free(ptr::null_mut()) };
    unsafe { lr_ranking_free(ptr::null_mut()) };
}

#[test]
fn missing_file_maps_to_io() {
    let path = CString::new("/nonexistent/loadrank.csv").unwrap();
    let target = CString::new("rating").unwrap();
    let mut out = ptr::null_mut();
    let status = unsafe { lr_dataset_load_csv(path.as_ptr(), target.as_ptr(), b',' as c_char, LrMapping::Detailed, &mut out) };
    assert_eq!(status, LrStatus::Io);
    assert!(out.is_null());
    assert!(!last_error().is_empty());
}

#[test]
fn csv_dataset_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("d.csv");
    std::fs::write(&file, "a,b,rating\n1,2,AAA\n3,4,BBB\n5,x,AA\n").unwrap();
    let path = CString::new(file.to_str().unwrap()).unwrap();
    let target = CString::new("rating").unwrap();
    let mut ds = ptr::null_mut();
    let status = unsafe { lr_dataset_load_csv(path.as_ptr(), target.as_ptr(), b',' as c_char, LrMapping::Detailed, &mut ds) };
    assert_eq!(status, LrStatus::Ok, "{}", last_error());
    assert_eq!(unsafe { lr_dataset_n_samples(ds) }, 2);
    assert_eq!(unsafe { lr_dataset_n_features(ds) }, 2);
    unsafe { lr_dataset_free(ds) };
}

#[test]
fn rank_from_matrix_puts_signal_first() {
    let (values, labels, n, p) = toy_matrix();
    let mut ds = ptr::null_mut();
    let status = unsafe { lr_dataset_from_matrix(values.as_ptr(), n, p, labels.as_ptr(), &mut ds) };
    assert_eq!(status, LrStatus::Ok, "{}", last_error());

    let opts = lr_rank_options_default();
    assert_eq!(opts.alpha, 0.05);
    let mut ranking = ptr::null_mut();
    let status = unsafe { lr_rank(ds, LrMethod::PcaSquare, &opts, &mut ranking) };
    assert_eq!(status, LrStatus::Ok, "{}", last_error());
    let len = unsafe { lr_ranking_len(ranking) };
    assert!(len >= 2);

    let mut names = Vec::new();
    for i in 0..len {
        let mut buf = [0 as c_char; 16];
        let mut written = 0usize;
        let s = unsafe { lr_ranking_feature_name(ranking, i, buf.as_mut_ptr(), buf.len(), &mut written) };
        assert_eq!(s, LrStatus::Ok);
        names.push(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap().to_owned());
        let mut score = 0.0;
        assert_eq!(unsafe { lr_ranking_score(ranking, i, &mut score) }, LrStatus::Ok);
        assert!(score.is_finite());
    }
    let mut top: Vec<&str> = names[..2].iter().map(String::as_str).collect();
    top.sort_unstable();
    assert_eq!(top, ["f0", "f1"]);

    let mut score = 0.0;
    assert_eq!(unsafe { lr_ranking_score(ranking, len, &mut score) }, LrStatus::IndexOutOfRange);

    let mut tiny = [0 as c_char; 1];
    let mut needed = 0usize;
    let s = unsafe { lr_ranking_feature_name(ranking, 0, tiny.as_mut_ptr(), tiny.len(), &mut needed) };
    assert_eq!(s, LrStatus::BufferTooSmall);
    assert_eq!(needed, 3);

    unsafe { lr_ranking_free(ranking) };
    unsafe { lr_dataset_free(ds) };
}

#[test]
fn non_finite_matrix_is_degenerate() {
    let values = [1.0, f64::NAN, 2.0, 3.0];
    let labels = [1u32, 2];
    let mut ds = ptr::null_mut();
    let status = unsafe { lr_dataset_from_matrix(values.as_ptr(), 2, 2, labels.as_ptr(), &mut ds) };
    assert_eq!(status, LrStatus::DegenerateData);
    assert!(ds.is_null());
}

#[test]
fn eigen_symmetric_two_by_two() {
    let m = [1.0, 0.6, 0.6, 1.0];
    let mut vals = [0.0; 2];
    let mut vecs = [0.0; 4];
    let status = unsafe { lr_eigen_symmetric(m.as_ptr(), 2, vals.as_mut_ptr(), vecs.as_mut_ptr()) };
    assert_eq!(status, LrStatus::Ok);
    assert!((vals[0] - 1.6).abs() < 1e-12 && (vals[1] - 0.4).abs() < 1e-12);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    // Column 0 pairs with the largest eigenvalue.
    assert!((vecs[0].abs() - h).abs() < 1e-12 && (vecs[2].abs() - h).abs() < 1e-12);
    assert!(vecs[0] * vecs[2] > 0.0);
}

#[test]
fn chi_square_tail() {
    let mut p = 0.0;
    assert_eq!(unsafe { lr_chi_square_p(3.841458820694124, 1, &mut p) }, LrStatus::Ok);
    assert!((p - 0.05).abs() < 1e-9);
    assert_eq!(unsafe { lr_chi_square_p(1.0, 0, &mut p) }, LrStatus::InvalidArgument);
}

#[test]
fn run_pipeline_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let path = CString::new(cfg.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { lr_run_pipeline(path.as_ptr()) }, LrStatus::Parse);
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/loadrank.h")).unwrap();
    for symbol in [
        "lr_version",
        "lr_last_error_message",
        "lr_dataset_load_csv",
        "lr_dataset_from_matrix",
        "lr_dataset_free",
        "lr_dataset_n_samples",
        "lr_dataset_n_features",
        "lr_rank_options_default",
        "lr_rank",
        "lr_ranking_free",
        "lr_ranking_len",
        "lr_ranking_score",
        "lr_ranking_feature_name",
        "lr_run_pipeline",
        "lr_eigen_symmetric",
        "lr_chi_square_p",
        "typedef struct LrDataset LrDataset",
        "typedef struct LrRanking LrRanking",
        "LR_STATUS_OK = 0",
        "LR_STATUS_PANIC = 12",
    ] {
        assert!(header.contains(symbol), "header lacks {symbol}");
    }
}
