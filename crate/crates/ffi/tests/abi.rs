use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use qrflab_ffi::*;

fn last_error() -> String {
    let p = qrf_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn qrf_handle_round_trip() {
    let mut h: *mut QrfFeatureMap = ptr::null_mut();
    unsafe {
        assert_eq!(qrf_model_new_qrf(6, 4, 3, 1.0, 7, 0, &mut h), QRF_OK);
        assert_eq!(qrf_model_input_dim(h), 6);
        assert_eq!(qrf_model_feature_dim(h), 16);
        let x = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let mut out = [0.0; 16];
        assert_eq!(qrf_model_features(h, x.as_ptr(), 6, out.as_mut_ptr(), 16), QRF_OK);
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let params = qrflab::encoding::EncodingParams::draw(6, 4, 3, 1.0, 7).unwrap();
        let perm = qrflab::PermutationSpec::draw(4, qrflab::PermutationKind::General, 7).unwrap();
        let expect = qrflab::encoding::qrf_features_fast(&x, &params, &perm).unwrap();
        assert_eq!(out.to_vec(), expect);

        let xs: Vec<f64> = x.iter().chain(x.iter().rev()).copied().collect();
        let mut batch = [0.0; 32];
        assert_eq!(qrf_model_features_batch(h, xs.as_ptr(), 2, batch.as_mut_ptr()), QRF_OK);
        assert_eq!(&batch[..16], &out);

        assert_eq!(qrf_model_features(h, x.as_ptr(), 5, out.as_mut_ptr(), 16), QRF_ERR_DIMENSION);
        assert!(last_error().contains("dimension"), "{}", last_error());
        qrf_model_free(h);
    }
}

#[test]
fn every_model_constructor() {
    unsafe {
        let mut h: *mut QrfFeatureMap = ptr::null_mut();
        assert_eq!(qrf_model_new_qrf_rff(3, 3, 1.0, 1, &mut h), QRF_OK);
        assert_eq!(qrf_model_feature_dim(h), 8);
        qrf_model_free(h);
        assert_eq!(qrf_model_new_qdrf(3, 3, 2, 1.0, 1, 1.0, 1.0, 1.5, 3.5, &mut h), QRF_OK);
        assert_eq!(qrf_model_feature_dim(h), 8);
        qrf_model_free(h);
        assert_eq!(qrf_model_new_rff(3, 20, 1.0, 1, &mut h), QRF_OK);
        assert_eq!(qrf_model_feature_dim(h), 20);
        qrf_model_free(h);
        assert_eq!(qrf_model_new_qrf(3, 3, 2, 1.0, 1, 1, &mut h), QRF_OK);
        qrf_model_free(h);

        assert_eq!(qrf_model_new_qrf(3, 3, 0, 1.0, 1, 0, &mut h), QRF_ERR_VALIDATION);
        assert_eq!(qrf_model_new_qdrf(3, 15, 1, 1.0, 1, 1.0, 1.0, 1.5, 3.5, &mut h), QRF_ERR_RESOURCE);
        assert_eq!(qrf_model_new_rff(3, 20, 1.0, 1, ptr::null_mut()), QRF_ERR_NULL_POINTER);
        assert!(last_error().contains("null"));
        qrf_model_free(ptr::null_mut());
        assert_eq!(qrf_model_feature_dim(ptr::null()), 0);
    }
}

#[test]
fn classifier_trains_and_predicts() {
    let (n, f) = (40, 2);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let c = (i % 2) as u32;
        let s = if c == 0 { 1.0 } else { -1.0 };
        x.extend_from_slice(&[s * (1.0 + 0.01 * i as f64), 0.5]);
        y.push(c);
    }
    unsafe {
        let mut clf: *mut QrfClassifier = ptr::null_mut();
        assert_eq!(qrf_classifier_train(x.as_ptr(), n, f, y.as_ptr(), 2, 0.1, 8, 20, 3, &mut clf), QRF_OK);
        let mut acc = 0.0;
        assert_eq!(qrf_classifier_evaluate(clf, x.as_ptr(), n, y.as_ptr(), &mut acc), QRF_OK);
        assert_eq!(acc, 1.0);
        let mut class = 9u32;
        assert_eq!(qrf_classifier_predict(clf, [-2.0, 0.5].as_ptr(), 2, &mut class), QRF_OK);
        assert_eq!(class, 1);
        assert_eq!(qrf_classifier_predict(clf, [-2.0].as_ptr(), 1, &mut class), QRF_ERR_DIMENSION);
        qrf_classifier_free(clf);

        let bad = [5u32; 40];
        assert_eq!(
            qrf_classifier_train(x.as_ptr(), n, f, bad.as_ptr(), 2, 0.1, 8, 1, 3, &mut clf),
            QRF_ERR_VALIDATION
        );
    }
}

#[test]
fn kernels() {
    unsafe {
        let mut buf = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(qrf_fwht(buf.as_mut_ptr(), 4), QRF_OK);
        for k in 0..4 {
            assert!((buf[2 * k] - 0.5).abs() < 1e-15 && buf[2 * k + 1] == 0.0);
        }
        assert_eq!(qrf_fwht(buf.as_mut_ptr(), 3), QRF_ERR_VALIDATION);

        let p = [0.5, 0.25, 0.25, 0.0];
        let mut counts = [0u64; 4];
        assert_eq!(qrf_sample_shots(p.as_ptr(), 4, 1000, 5, counts.as_mut_ptr()), QRF_OK);
        assert_eq!(counts.iter().sum::<u64>(), 1000);
        assert_eq!(counts[3], 0);
        assert_eq!(qrf_sample_shots(p.as_ptr(), 4, 0, 5, counts.as_mut_ptr()), QRF_ERR_VALIDATION);
        assert_eq!(qrf_sample_shots(ptr::null(), 4, 10, 5, counts.as_mut_ptr()), QRF_ERR_NULL_POINTER);
    }
    let v = unsafe { CStr::from_ptr(qrf_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn find_cc() -> Option<&'static str> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
}

#[test]
fn header_compiles_and_links_from_c() {
    let Some(cc) = find_cc() else {
        eprintln!("no C compiler found; header check skipped");
        return;
    };
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let include = crate_dir.join("include");
    assert!(include.join("qrflab.h").is_file());
    let dir = tempfile_dir();
    let src = dir.join("main.c");
    std::fs::write(
        &src,
        r#"#include "qrflab.h"
#include <stdio.h>
int main(void) {
    QrfFeatureMap *m = NULL;
    if (qrf_model_new_qrf(4, 3, 2, 1.0, 1, 0, &m) != QRF_OK) return 1;
    double x[4] = {0.1, 0.2, 0.3, 0.4};
    double f[8];
    if (qrf_model_features(m, x, 4, f, 8) != QRF_OK) return 2;
    double s = 0.0;
    for (int i = 0; i < 8; i++) s += f[i];
    qrf_model_free(m);
    if (qrf_fwht(f, 3) != QRF_ERR_VALIDATION) return 3;
    if (qrf_last_error_message() == NULL) return 4;
    printf("%.12f\n", s);
    return 0;
}
"#,
    )
    .unwrap();
    let status = Command::new(cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(&include)
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success(), "header does not compile as C99");

    // Link against the static library when cargo has produced it.
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|p| p.parent()).unwrap();
    let lib = profile_dir.join("libqrflab_ffi.a");
    if !lib.is_file() {
        eprintln!("{} not built; link check skipped", lib.display());
        return;
    }
    let bin = dir.join("main");
    let status = Command::new(cc)
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success(), "link against static library failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status);
    let s: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!((s - 1.0).abs() < 1e-9);
}

fn tempfile_dir() -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("ffi-c-check");
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
