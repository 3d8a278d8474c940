use std::ffi::{CStr, CString};
use std::ptr;

use aimeval::model::Model;

use super::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(aim_last_error_message()) }.to_string_lossy().into_owned()
}

fn load(m: &Model) -> *mut AimModel {
    let json = CString::new(m.to_json().unwrap()).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { aim_model_load_json(json.as_ptr(), &mut h) }, AimStatus::Ok);
    assert!(!h.is_null());
    h
}

fn toy() -> (Model, Vec<f64>) {
    let m = Model::conv1d(vec![2, 12], 3, 5, 3, 9).unwrap();
    let x = (0..24).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0).collect();
    (m, x)
}

#[test]
fn forward_and_gradient_match_the_library() {
    let (m, x) = toy();
    let h = load(&m);
    let (mut n_in, mut n_cls) = (0, 0);
    assert_eq!(unsafe { aim_model_dims(h, &mut n_in, &mut n_cls) }, AimStatus::Ok);
    assert_eq!((n_in, n_cls), (24, 3));
    let t = aimeval::Tensor::new(vec![2, 12], x.clone()).unwrap();

    let mut logits = [0.0; 3];
    assert_eq!(unsafe { aim_model_forward(h, x.as_ptr(), 24, logits.as_mut_ptr(), 3) }, AimStatus::Ok);
    assert_eq!(&logits[..], m.forward(&t).unwrap().data());

    let mut g = vec![0.0; 24];
    assert_eq!(unsafe { aim_model_input_gradient(h, x.as_ptr(), 24, 1, g.as_mut_ptr()) }, AimStatus::Ok);
    assert_eq!(g, m.input_gradient(&t, 1).unwrap().data());

    let method = CString::new("IGA").unwrap();
    let mut s = vec![0.0; 24];
    assert_eq!(unsafe { aim_attribute(h, method.as_ptr(), x.as_ptr(), 24, 2, 5, s.as_mut_ptr()) }, AimStatus::Ok);
    let cfg = aimeval::attribution::AttributionConfig { seed: 5, ..aimeval::attribution::AttributionConfig::new(aimeval::attribution::Method::IntegratedGradients).absolute(true) };
    assert_eq!(s, aimeval::attribution::attribute(&m, &t, 2, &cfg).unwrap().values.data());
    assert!(s.iter().all(|v| *v >= 0.0));
    assert_eq!(last_error(), "");
    unsafe { aim_model_free(h) };
}

#[test]
fn errors_set_codes_and_messages() {
    let (m, x) = toy();
    let h = load(&m);
    let mut logits = [0.0; 2];
    assert_eq!(unsafe { aim_model_forward(h, x.as_ptr(), 24, logits.as_mut_ptr(), 2) }, AimStatus::ShapeMismatch);
    assert!(last_error().contains("logits"));
    assert_eq!(unsafe { aim_model_forward(h, x.as_ptr(), 23, logits.as_mut_ptr(), 3) }, AimStatus::ShapeMismatch);
    assert_eq!(unsafe { aim_model_forward(ptr::null(), x.as_ptr(), 24, logits.as_mut_ptr(), 3) }, AimStatus::NullPointer);
    let mut g = vec![0.0; 24];
    assert_eq!(unsafe { aim_model_input_gradient(h, x.as_ptr(), 24, 7, g.as_mut_ptr()) }, AimStatus::InvalidArgument);
    for name in ["XYZ", "ORACLE"] {
        let bad = CString::new(name).unwrap();
        assert_eq!(unsafe { aim_attribute(h, bad.as_ptr(), x.as_ptr(), 24, 0, 0, g.as_mut_ptr()) }, AimStatus::InvalidArgument);
    }
    unsafe { aim_model_free(h) };
    unsafe { aim_model_free(ptr::null_mut()) };

    let mut out = ptr::null_mut();
    let junk = CString::new("{not json").unwrap();
    assert_eq!(unsafe { aim_model_load_json(junk.as_ptr(), &mut out) }, AimStatus::Parse);
    assert!(out.is_null());
    assert!(!last_error().is_empty());
    let missing = CString::new("/nonexistent/model.json").unwrap();
    assert_eq!(unsafe { aim_model_load_file(missing.as_ptr(), &mut out) }, AimStatus::NotFound);
    assert_eq!(unsafe { aim_model_load_json(ptr::null(), &mut out) }, AimStatus::NullPointer);
}

#[test]
fn load_file_round_trips() {
    let (m, _) = toy();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.json");
    m.save(&p).unwrap();
    let c = CString::new(p.to_str().unwrap()).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { aim_model_load_file(c.as_ptr(), &mut h) }, AimStatus::Ok);
    assert_eq!(unsafe { &(*h).inner }, &m);
    unsafe { aim_model_free(h) };
}

#[test]
fn metrics_and_spearman() {
    let (ratios, morf, lerf) = ([0.1, 0.2], [0.5, 0.25], [1.0, 0.75]);
    let mut a = AimAreaMetrics::default();
    assert_eq!(unsafe { aim_area_metrics(ratios.as_ptr(), morf.as_ptr(), lerf.as_ptr(), 2, 1.0, 0.25, &mut a) }, AimStatus::Ok);
    assert!((a.aoc - 5.0 / 6.0).abs() < 1e-12);
    assert!((a.abc - 2.0 / 3.0).abs() < 1e-12);
    assert!((a.auc - 5.0 / 6.0).abs() < 1e-12);
    assert_eq!(unsafe { aim_area_metrics(ratios.as_ptr(), morf.as_ptr(), lerf.as_ptr(), 2, 0.5, 0.5, &mut a) }, AimStatus::Degenerate);

    let (x, y) = ([1.0, 2.0, 3.0, 4.0, 5.0], [5.0, 6.0, 7.0, 8.0, 7.0]);
    let (mut rho, mut deg) = (0.0, -1);
    assert_eq!(unsafe { aim_spearman(x.as_ptr(), y.as_ptr(), 5, &mut rho, &mut deg) }, AimStatus::Ok);
    assert!((rho - 0.8207826816681233).abs() < 1e-12);
    assert_eq!(deg, 0);
    let c = [2.0; 5];
    assert_eq!(unsafe { aim_spearman(x.as_ptr(), c.as_ptr(), 5, &mut rho, &mut deg) }, AimStatus::Ok);
    assert_eq!((rho, deg), (0.0, 1));
    assert_eq!(unsafe { aim_spearman(x.as_ptr(), y.as_ptr(), 5, ptr::null_mut(), ptr::null_mut()) }, AimStatus::NullPointer);
}

#[test]
fn header_declares_the_api_and_compiles() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/aimeval.h")).unwrap();
    for name in [
        "typedef struct AimModel AimModel;",
        "AIM_STATUS_OK = 0",
        "AIM_STATUS_INTERNAL = 8",
        "aim_model_load_json",
        "aim_model_free",
        "aim_model_forward",
        "aim_model_input_gradient",
        "aim_attribute",
        "aim_area_metrics",
        "aim_spearman",
        "aim_last_error_message",
    ] {
        assert!(header.contains(name), "{name}");
    }
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("use.c");
    std::fs::write(&src, "#include \"aimeval.h\"\nint main(void) { AimModel *m = 0; AimStatus s = aim_model_load_json(\"{}\", &m); return s == AIM_STATUS_OK; }\n").unwrap();
    let out = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(dir.join("include"))
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
