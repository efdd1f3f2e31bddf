use std::ffi::{CStr, CString};
use std::ptr;

use vggft_ffi::*;

fn last_error() -> String {
    let p = vggft_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn tiny(task: u32, seed: u64) -> *mut VggftModel {
    let mut m = ptr::null_mut();
    let s = unsafe { vggft_model_new(VGGFT_ARCH_VGG16, task, true, seed, &mut m) };
    assert_eq!(s, VggftStatus::Ok);
    assert!(!m.is_null());
    m
}

#[test]
fn predict_save_load_round_trip() {
    let m = tiny(VGGFT_TASK_MULTICLASS, 4);
    let mut shape = [0usize; 3];
    let mut k = 0usize;
    assert_eq!(
        unsafe { vggft_model_shape(m, shape.as_mut_ptr(), &mut k) },
        VggftStatus::Ok
    );
    assert_eq!((shape, k), ([3, 64, 64], 3));

    let (mut total, mut trainable) = (0u64, 0u64);
    assert_eq!(
        unsafe { vggft_model_param_count(m, &mut total, &mut trainable) },
        VggftStatus::Ok
    );
    assert!(trainable > 0 && trainable < total);

    let n = 2 * 3 * 64 * 64;
    let input: Vec<f32> = (0..n).map(|i| (i % 97) as f32 / 97.0).collect();
    let mut probs = vec![0f32; 6];
    let s = unsafe { vggft_model_predict(m, input.as_ptr(), n, 2, probs.as_mut_ptr(), 6) };
    assert_eq!(s, VggftStatus::Ok);
    for row in probs.chunks(3) {
        assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-5, "{row:?}");
    }

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.vggw").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { vggft_model_save(m, path.as_ptr()) }, VggftStatus::Ok);
    let other = tiny(VGGFT_TASK_MULTICLASS, 99);
    assert_eq!(unsafe { vggft_model_load(other, path.as_ptr()) }, VggftStatus::Ok);
    let mut again = vec![0f32; 6];
    unsafe { vggft_model_predict(other, input.as_ptr(), n, 2, again.as_mut_ptr(), 6) };
    assert_eq!(probs, again);

    // binary graph rejects a multiclass file
    let binary = tiny(VGGFT_TASK_BINARY, 1);
    assert_eq!(
        unsafe { vggft_model_load(binary, path.as_ptr()) },
        VggftStatus::WeightFile
    );
    assert!(last_error().contains("task"));

    unsafe {
        vggft_model_free(m);
        vggft_model_free(other);
        vggft_model_free(binary);
        vggft_model_free(ptr::null_mut());
    }
}

#[test]
fn argument_errors_set_status_and_message() {
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { vggft_model_new(17, VGGFT_TASK_BINARY, true, 0, &mut m) },
        VggftStatus::InvalidArgument
    );
    assert!(last_error().contains("architecture"));
    assert!(m.is_null());
    assert_eq!(
        unsafe { vggft_model_new(16, 1, true, 0, ptr::null_mut()) },
        VggftStatus::NullPointer
    );

    let m = tiny(VGGFT_TASK_BINARY, 0);
    let input = [0f32; 10];
    let mut out = [0f32; 2];
    let s = unsafe { vggft_model_predict(m, input.as_ptr(), 10, 1, out.as_mut_ptr(), 2) };
    assert_eq!(s, VggftStatus::Dimension);
    assert!(last_error().contains("expected 12288"));

    let missing = CString::new("/nonexistent/w.vggw").unwrap();
    assert_eq!(unsafe { vggft_model_load(m, missing.as_ptr()) }, VggftStatus::Io);
    assert_eq!(
        unsafe { vggft_model_save(ptr::null(), missing.as_ptr()) },
        VggftStatus::NullPointer
    );
    unsafe { vggft_model_free(m) };
}

#[test]
fn metrics_over_label_arrays() {
    let truth = [0u32, 0, 1, 1];
    let pred = [0u32, 1, 1, 1];
    let mut r = VggftMetrics::default();
    assert_eq!(
        unsafe { vggft_metrics(truth.as_ptr(), pred.as_ptr(), 4, 2, &mut r) },
        VggftStatus::Ok
    );
    assert_eq!(r.accuracy, 0.75);
    // class 0: P 1, R 0.5; class 1: P 2/3, R 1
    assert!((r.precision - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
    assert!((r.recall - 0.75).abs() < 1e-12);

    let bad = [0u32, 5];
    let s = unsafe { vggft_metrics(bad.as_ptr(), bad.as_ptr(), 2, 2, &mut r) };
    assert_ne!(s, VggftStatus::Ok);
    assert_eq!(
        unsafe { vggft_metrics(ptr::null(), pred.as_ptr(), 4, 2, &mut r) },
        VggftStatus::NullPointer
    );
}

#[test]
fn header_declares_every_entry_point() {
    let header = include_str!("../include/vggft.h");
    for name in [
        "vggft_last_error",
        "vggft_version",
        "vggft_model_new",
        "vggft_model_free",
        "vggft_model_load",
        "vggft_model_save",
        "vggft_model_shape",
        "vggft_model_param_count",
        "vggft_model_predict",
        "vggft_metrics",
        "typedef struct VggftModel VggftModel",
        "VGGFT_STATUS_OK = 0",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
    assert!(!unsafe { CStr::from_ptr(vggft_version()) }.to_bytes().is_empty());
}
