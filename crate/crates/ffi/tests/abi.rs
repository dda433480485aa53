use std::ffi::{CStr, CString};
use std::ptr;

use charuq_ffi::*;

const TABLE: [(f64, f64, f64, f64); 11] = [
    (0.0, 425.3, 64.32, 489.6),
    (0.1, 298.1, 55.82, 353.9),
    (0.2, 203.4, 48.37, 251.8),
    (0.3, 138.9, 41.88, 180.8),
    (0.4, 99.67, 36.33, 136.0),
    (0.5, 74.80, 31.72, 106.5),
    (0.6, 54.84, 28.08, 82.92),
    (0.7, 39.14, 25.56, 64.70),
    (0.8, 28.18, 24.47, 52.65),
    (0.9, 24.79, 26.11, 50.90),
    (1.0, 29.07, 34.17, 63.23),
];

fn last_error() -> String {
    unsafe { CStr::from_ptr(charuq_last_error()) }.to_string_lossy().into_owned()
}

fn normal_samples(mean: f64, n: usize) -> Vec<f64> {
    // Deterministic quantiles of N(mean, 1).
    use statrs::distribution::{ContinuousCDF, Normal};
    let d = Normal::new(mean, 1.0).unwrap();
    (0..n).map(|i| d.inverse_cdf((i as f64 + 0.5) / n as f64)).collect()
}

#[test]
fn table_selection_through_handles() {
    unsafe {
        let mut t = ptr::null_mut();
        assert_eq!(charuq_table_new(&mut t), CharuqStatus::Ok);
        for (w, a, b, j) in TABLE {
            assert_eq!(charuq_table_push(t, w, a, b, j), CharuqStatus::Ok);
        }
        let mut len = 0;
        assert_eq!(charuq_table_len(t, &mut len), CharuqStatus::Ok);
        assert_eq!(len, 11);
        let mut w = f64::NAN;
        assert_eq!(charuq_select_w(t, CharuqCriterion::Jeffreys, &mut w), CharuqStatus::Ok);
        assert_eq!(w, 0.9);
        assert_eq!(charuq_select_w(t, CharuqCriterion::BackwardKl, &mut w), CharuqStatus::Ok);
        assert_eq!(w, 0.8);
        charuq_table_free(t);
    }
}

#[test]
fn empty_table_is_an_error_with_message() {
    unsafe {
        let mut t = ptr::null_mut();
        charuq_table_new(&mut t);
        let mut w = 0.0;
        assert_eq!(charuq_select_w(t, CharuqCriterion::Jeffreys, &mut w), CharuqStatus::InvalidArgument);
        assert!(!last_error().is_empty());
        assert_eq!(charuq_table_push(t, 1.5, 0.0, 0.0, 0.0), CharuqStatus::InvalidArgument);
        charuq_table_free(t);
    }
}

#[test]
fn null_pointers_are_reported() {
    unsafe {
        let mut v = 0.0;
        assert_eq!(charuq_kl_divergence(ptr::null(), 5, ptr::null(), 5, &mut v), CharuqStatus::NullPointer);
        assert!(last_error().contains("p"));
        assert_eq!(charuq_select_w(ptr::null(), CharuqCriterion::Jeffreys, &mut v), CharuqStatus::NullPointer);
        charuq_table_free(ptr::null_mut());
        charuq_config_free(ptr::null_mut());
    }
}

#[test]
fn divergences_of_shifted_normals() {
    let p = normal_samples(0.0, 4000);
    let q = normal_samples(0.5, 4000);
    unsafe {
        let mut kl = f64::NAN;
        assert_eq!(charuq_kl_divergence(p.as_ptr(), p.len(), q.as_ptr(), q.len(), &mut kl), CharuqStatus::Ok);
        assert!((kl - 0.125).abs() < 0.03, "{kl}");
        let mut d = CharuqDivergences { forward: 0.0, backward: 0.0, jeffreys: 0.0 };
        assert_eq!(charuq_divergences(p.as_ptr(), p.len(), q.as_ptr(), q.len(), 0.0, &mut d), CharuqStatus::Ok);
        assert_eq!(d.forward, kl);
        assert!((d.jeffreys - d.forward - d.backward).abs() < 1e-12);
        let mut s = 0.0;
        assert_eq!(charuq_kl_divergence(p.as_ptr(), p.len(), p.as_ptr(), p.len(), &mut s), CharuqStatus::Ok);
        assert!(s.abs() < 1e-9);
    }
}

#[test]
fn too_few_samples_is_invalid() {
    let p = [1.0, 2.0];
    unsafe {
        let mut v = 0.0;
        assert_eq!(charuq_kl_divergence(p.as_ptr(), 2, p.as_ptr(), 2, &mut v), CharuqStatus::InvalidArgument);
    }
}

#[test]
fn config_hash_and_simulation() {
    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(charuq_config_default(&mut cfg), CharuqStatus::Ok);
        let mut buf = [0 as std::ffi::c_char; 65];
        assert_eq!(charuq_config_hash(cfg, buf.as_mut_ptr(), 10), CharuqStatus::InvalidArgument);
        assert_eq!(charuq_config_hash(cfg, buf.as_mut_ptr(), buf.len()), CharuqStatus::Ok);
        let h1 = CStr::from_ptr(buf.as_ptr()).to_str().unwrap().to_owned();
        assert_eq!(h1.len(), 64);
        charuq_config_set_seed(cfg, 99);
        charuq_config_hash(cfg, buf.as_mut_ptr(), buf.len());
        assert_ne!(CStr::from_ptr(buf.as_ptr()).to_str().unwrap(), h1);

        let mut prof = ptr::null_mut();
        assert_eq!(charuq_simulate(cfg, CharuqScenario::Ground, &mut prof), CharuqStatus::Ok);
        let (mut n_tc, mut n_t) = (0, 0);
        charuq_profiles_shape(prof, &mut n_tc, &mut n_t);
        assert_eq!(n_tc, 4);
        assert!(n_t > 10);
        let mut times = vec![0.0; n_t];
        let mut values = vec![0.0; n_t];
        assert_eq!(charuq_profiles_copy(prof, 0, times.as_mut_ptr(), values.as_mut_ptr(), n_t), CharuqStatus::Ok);
        assert_eq!(times[0], 0.0);
        assert!(values.iter().all(|v| *v > 200.0));
        assert!(values[n_t - 1] > values[0]);
        assert_eq!(charuq_profiles_copy(prof, 9, times.as_mut_ptr(), values.as_mut_ptr(), n_t), CharuqStatus::InvalidArgument);
        charuq_profiles_free(prof);
        charuq_config_free(cfg);
    }
}

#[test]
fn missing_config_file() {
    let path = CString::new("/nonexistent/run.json").unwrap();
    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(charuq_config_load(path.as_ptr(), &mut cfg), CharuqStatus::Io);
        assert!(cfg.is_null());
        assert!(last_error().contains("nonexistent"));
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(charuq_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
