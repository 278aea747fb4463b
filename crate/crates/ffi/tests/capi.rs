use std::ffi::{CStr, CString};
use std::ptr;

use mcmarg_ffi::*;

fn last_error() -> String {
    let p = mcm_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn standard_normal() -> *mut McmGmm {
    let mut g = ptr::null_mut();
    let status =
        unsafe { mcm_gmm_from_moments(2, 1, [1.0].as_ptr(), [0.0, 0.0].as_ptr(), [1.0, 0.0, 0.0, 1.0].as_ptr(), &mut g) };
    assert_eq!(status, McmStatus::Ok);
    g
}

fn two_clusters() -> *mut McmGmm {
    let mut g = ptr::null_mut();
    let status = unsafe {
        mcm_gmm_from_moments(
            2,
            2,
            [0.4, 0.6].as_ptr(),
            [-2.0, 0.0, 2.0, 1.0].as_ptr(),
            [0.3, 0.1, 0.1, 0.4, 0.5, 0.0, 0.0, 0.2].as_ptr(),
            &mut g,
        )
    };
    assert_eq!(status, McmStatus::Ok);
    g
}

#[test]
fn model_handle_round_trip() {
    let g = two_clusters();
    unsafe {
        assert_eq!(mcm_gmm_dim(g), 2);
        assert_eq!(mcm_gmm_components(g), 2);
        let (mut w, mut m, mut c) = ([0.0; 2], [0.0; 4], [0.0; 8]);
        assert_eq!(mcm_gmm_get_params(g, w.as_mut_ptr(), m.as_mut_ptr(), c.as_mut_ptr()), McmStatus::Ok);
        assert!((w[0] - 0.4).abs() < 1e-12 && (w[1] - 0.6).abs() < 1e-12);
        assert_eq!(m, [-2.0, 0.0, 2.0, 1.0]);
        for (a, b) in c.iter().zip([0.3, 0.1, 0.1, 0.4, 0.5, 0.0, 0.0, 0.2]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(mcm_gmm_get_params(g, ptr::null_mut(), ptr::null_mut(), ptr::null_mut()), McmStatus::Ok);

        let mut v = 0.0;
        let n = standard_normal();
        assert_eq!(mcm_gmm_log_density(n, [0.0, 0.0].as_ptr(), 2, &mut v), McmStatus::Ok);
        assert!((v + (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
        assert_eq!(mcm_gmm_log_density(n, [0.0; 3].as_ptr(), 3, &mut v), McmStatus::Data);

        let (mut mw, mut mm, mut mv) = ([0.0; 2], [0.0; 2], [0.0; 2]);
        let status = mcm_gmm_marginalize(g, [2.0, 0.0].as_ptr(), 2, mw.as_mut_ptr(), mm.as_mut_ptr(), mv.as_mut_ptr());
        assert_eq!(status, McmStatus::Ok);
        assert_eq!(mm, [-2.0, 2.0]);
        assert!((mv[0] - 0.3).abs() < 1e-12 && (mv[1] - 0.5).abs() < 1e-12);

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("m.json").to_str().unwrap()).unwrap();
        assert_eq!(mcm_gmm_save_json(g, path.as_ptr()), McmStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(mcm_gmm_load_json(path.as_ptr(), &mut loaded), McmStatus::Ok);
        let mut a = 0.0;
        let mut b = 0.0;
        mcm_gmm_log_density(g, [0.3, 0.2].as_ptr(), 2, &mut a);
        mcm_gmm_log_density(loaded, [0.3, 0.2].as_ptr(), 2, &mut b);
        assert!((a - b).abs() < 1e-9);

        mcm_gmm_free(loaded);
        mcm_gmm_free(n);
        mcm_gmm_free(g);
        mcm_gmm_free(ptr::null_mut());
    }
}

#[test]
fn errors_set_status_and_message() {
    unsafe {
        let mut g = ptr::null_mut();
        let status = mcm_gmm_from_moments(2, 1, [1.0].as_ptr(), [0.0, 0.0].as_ptr(), [1.0, 2.0, 2.0, 1.0].as_ptr(), &mut g);
        assert_ne!(status, McmStatus::Ok);
        assert!(g.is_null());
        assert!(!last_error().is_empty());

        let status = mcm_gmm_from_moments(2, 1, ptr::null(), [0.0, 0.0].as_ptr(), [1.0, 0.0, 0.0, 1.0].as_ptr(), &mut g);
        assert_eq!(status, McmStatus::NullPointer);
        assert!(last_error().contains("weights"));

        assert_eq!(mcm_gmm_dim(ptr::null()), 0);
        assert_eq!(mcm_samples_count(ptr::null()), 0);

        let missing = CString::new("/nonexistent/model.json").unwrap();
        assert_eq!(mcm_gmm_load_json(missing.as_ptr(), &mut g), McmStatus::Data);

        let config = McmFitConfig { components: 0, ..mcm_fit_config_default() };
        let mut s = ptr::null_mut();
        assert_eq!(mcm_samples_new([0.0, 1.0, 2.0, 3.0].as_ptr(), 2, 2, &mut s), McmStatus::Ok);
        assert_eq!(mcm_fit_gmm(s, &config, &mut g, ptr::null_mut()), McmStatus::Usage);
        let config = McmFitConfig { components: 3, ..mcm_fit_config_default() };
        assert_eq!(mcm_fit_gmm(s, &config, &mut g, ptr::null_mut()), McmStatus::Data);
        mcm_samples_free(s);
    }
}

#[test]
fn samples_handles() {
    unsafe {
        let data = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut s = ptr::null_mut();
        assert_eq!(mcm_samples_new(data.as_ptr(), 3, 2, &mut s), McmStatus::Ok);
        assert_eq!((mcm_samples_count(s), mcm_samples_dim(s)), (3, 2));
        let mut copy = [0.0; 6];
        assert_eq!(mcm_samples_copy(s, copy.as_mut_ptr(), 6), McmStatus::Ok);
        assert_eq!(copy, data);
        assert_eq!(mcm_samples_copy(s, copy.as_mut_ptr(), 5), McmStatus::Data);
        mcm_samples_free(s);

        let g = standard_normal();
        let mut a = ptr::null_mut();
        let mut b = ptr::null_mut();
        assert_eq!(mcm_gmm_sample(g, 1000, 7, &mut a), McmStatus::Ok);
        assert_eq!(mcm_gmm_sample(g, 1000, 7, &mut b), McmStatus::Ok);
        let mut x = vec![0.0; 2000];
        let mut y = vec![0.0; 2000];
        mcm_samples_copy(a, x.as_mut_ptr(), 2000);
        mcm_samples_copy(b, y.as_mut_ptr(), 2000);
        assert_eq!(x, y);
        let mut ll = 0.0;
        assert_eq!(mcm_holdout_loglik(g, a, &mut ll), McmStatus::Ok);
        assert!((ll + 1.0 + (2.0 * std::f64::consts::PI).ln()).abs() < 0.1);
        let (mut mean, mut se) = (0.0, 0.0);
        assert_eq!(mcm_sliced_kl_eval(a, g, 16, 0.2, 0, &mut mean, &mut se), McmStatus::Ok);
        assert!(mean < 0.1 && se >= 0.0);
        mcm_samples_free(a);
        mcm_samples_free(b);
        mcm_gmm_free(g);
    }
}

#[test]
fn fitting_entry_points() {
    unsafe {
        let truth = two_clusters();
        let mut samples = ptr::null_mut();
        assert_eq!(mcm_gmm_sample(truth, 2000, 1, &mut samples), McmStatus::Ok);

        let config = McmFitConfig { components: 2, steps: 200, ..mcm_fit_config_default() };
        let mut fitted = ptr::null_mut();
        let mut trace = vec![f64::NAN; 200];
        assert_eq!(mcm_fit_gmm(samples, &config, &mut fitted, trace.as_mut_ptr()), McmStatus::Ok);
        assert!(trace.iter().all(|v| v.is_finite()));
        assert!(trace[199] < trace[0]);
        assert_eq!(mcm_gmm_components(fitted), 2);

        let mut em = ptr::null_mut();
        let mut em_trace = vec![f64::NAN; 30];
        assert_eq!(mcm_em_fit(samples, 2, 30, 0, &mut em, em_trace.as_mut_ptr()), McmStatus::Ok);
        assert!(em_trace.windows(2).all(|w| w[1] >= w[0] - 1e-9));

        let config = McmFitConfig { steps: 100, silverman_bandwidth: true, ..mcm_fit_config_default() };
        let mut moved = ptr::null_mut();
        let mut moved_trace = vec![f64::NAN; 100];
        assert_eq!(mcm_fit_samples(truth, 300, &config, &mut moved, moved_trace.as_mut_ptr()), McmStatus::Ok);
        assert_eq!(mcm_samples_count(moved), 300);
        assert!(moved_trace[99] < moved_trace[0]);

        mcm_samples_free(moved);
        mcm_gmm_free(em);
        mcm_gmm_free(fitted);
        mcm_samples_free(samples);
        mcm_gmm_free(truth);
    }
}

#[test]
fn default_config_matches_library() {
    let c = mcm_fit_config_default();
    let lib = mcmarg::FitConfig::default();
    assert_eq!(c.components, lib.components);
    assert_eq!(c.steps, lib.steps);
    assert_eq!(c.vectors_per_step, lib.vectors_per_step);
    assert_eq!(c.bandwidth, 0.1);
    assert!(!c.silverman_bandwidth);
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/mcmarg.h")).unwrap();
    assert!(header.contains("#ifndef MCMARG_H"));
    for name in [
        "typedef struct McmGmm McmGmm;",
        "typedef struct McmSamples McmSamples;",
        "MCM_STATUS_NUMERICAL = 3",
        "mcm_last_error_message",
        "mcm_gmm_from_moments",
        "mcm_gmm_free",
        "mcm_gmm_log_density",
        "mcm_gmm_marginalize",
        "mcm_gmm_sample",
        "mcm_gmm_load_json",
        "mcm_gmm_save_json",
        "mcm_samples_new",
        "mcm_samples_copy",
        "mcm_fit_config_default",
        "mcm_fit_gmm",
        "mcm_fit_samples",
        "mcm_em_fit",
        "mcm_sliced_kl_eval",
        "mcm_holdout_loglik",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}
