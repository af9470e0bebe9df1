use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use ufm_ffi::*;

fn last_error() -> String {
    let p = ufm_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn config(toml: &str) -> *mut UfmConfig {
    let text = CString::new(toml).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { ufm_config_from_toml(text.as_ptr(), &mut cfg) }, UFM_OK, "{}", last_error());
    cfg
}

#[test]
fn closed_form_values() {
    let mut sigma = [0.0; 3];
    assert_eq!(unsafe { ufm_closed_form_sigma(4, 10.0, sigma.as_mut_ptr(), 3) }, UFM_OK);
    let expect = [10f64.sqrt(), 5.5f64.sqrt(), 1.0];
    for (s, e) in sigma.iter().zip(expect) {
        assert!((s - e).abs() < 1e-12);
    }
    let mut lambda = [0.0; 3];
    assert_eq!(unsafe { ufm_effective_weights(4, 10.0, 0.5, lambda.as_mut_ptr(), 3) }, UFM_OK);
    assert!((lambda[2] - 11f64.sqrt()).abs() < 1e-12);

    let mut times = [0.0; 3];
    let mut window = 0.0;
    let rc = unsafe { ufm_learning_schedule(sigma.as_ptr(), lambda.as_ptr(), 3, times.as_mut_ptr(), &mut window) };
    assert_eq!(rc, UFM_OK);
    assert!((window - 0.126887).abs() < 1e-6);
    // σ = λ = 1 at t = δ: 1 / (1 + (e^{2δ} − 1) e^{−2δ}) = 1 / (2 − e^{−2δ})
    let expect = 1.0 / (2.0 - (-16f64).exp());
    assert!((ufm_theory_factor(1.0, 1.0, 8.0, 8.0) - expect).abs() < 1e-15);
}

#[test]
fn errors_set_codes_and_messages() {
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { ufm_config_new(5, 10.0, false, 0.5, &mut cfg) }, UFM_ERR_CONFIG);
    assert!(cfg.is_null());
    assert!(last_error().contains("k must be even"));

    let mut buf = [0.0; 2];
    assert_eq!(unsafe { ufm_closed_form_sigma(4, 10.0, buf.as_mut_ptr(), 2) }, UFM_ERR_BUFFER);
    assert_eq!(unsafe { ufm_closed_form_sigma(4, 10.0, ptr::null_mut(), 3) }, UFM_ERR_NULL);
    assert_eq!(unsafe { ufm_config_from_toml(ptr::null(), &mut cfg) }, UFM_ERR_NULL);

    let bad = CString::new("k = 4\nR = 10\nbogus = 1").unwrap();
    assert_eq!(unsafe { ufm_config_from_toml(bad.as_ptr(), &mut cfg) }, UFM_ERR_CONFIG);
    let missing = CString::new("/nonexistent/ufm.toml").unwrap();
    assert_eq!(unsafe { ufm_config_from_file(missing.as_ptr(), &mut cfg) }, UFM_ERR_IO);

    // η far above the stable range
    let cfg = config("k = 4\nR = 10\neta = 2.0\nsteps = 100");
    let mut report = ptr::null_mut();
    assert_eq!(unsafe { ufm_run_experiment(cfg, &mut report) }, UFM_ERR_NUMERIC);
    assert!(last_error().contains("diverged"));
    unsafe { ufm_config_free(cfg) };

    // freeing NULL is a no-op
    unsafe {
        ufm_config_free(ptr::null_mut());
        ufm_report_free(ptr::null_mut());
        ufm_string_free(ptr::null_mut());
    }
}

#[test]
fn run_and_write() {
    let cfg = config("k = 4\nR = 10\nrecord_every = 50\noutputs = [\"trajectory\", \"summary\"]");
    let mut report = ptr::null_mut();
    assert_eq!(unsafe { ufm_run_experiment(cfg, &mut report) }, UFM_OK, "{}", last_error());
    assert_eq!(unsafe { ufm_report_num_modes(report) }, 3);
    let records = unsafe { ufm_report_num_records(report) };
    assert!(records > 1);

    let mut times = [0.0; 3];
    assert_eq!(unsafe { ufm_report_empirical_times(report, times.as_mut_ptr(), 3) }, UFM_OK);
    assert!(times[0] < times[1] && times[1] < times[2]);
    let mut err = [0.0; 3];
    assert_eq!(unsafe { ufm_report_theory_error(report, err.as_mut_ptr(), 3) }, UFM_OK);
    assert!(err.iter().all(|e| e.is_finite()));
    let mut factors = [0.0; 3];
    assert_eq!(unsafe { ufm_report_mode_factors(report, records - 1, factors.as_mut_ptr(), 3) }, UFM_OK);
    assert!(factors.iter().all(|&a| a > 0.99));
    assert_ne!(unsafe { ufm_report_mode_factors(report, records, factors.as_mut_ptr(), 3) }, UFM_OK);
    let mut sched = [0.0; 3];
    let mut window = 0.0;
    assert_eq!(unsafe { ufm_report_schedule(report, sched.as_mut_ptr(), 3, &mut window) }, UFM_OK);
    assert!((window - (10f64.sqrt() - 1.0)).abs() < 1e-12);

    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(unsafe { ufm_report_write(report, out.as_ptr()) }, UFM_OK);
    assert!(dir.path().join("trajectory.csv").exists());
    assert!(dir.path().join("manifest.json").exists());

    let mut text = ptr::null_mut();
    assert_eq!(unsafe { ufm_config_to_toml(cfg, &mut text) }, UFM_OK);
    let toml = unsafe { CStr::from_ptr(text) }.to_str().unwrap().to_owned();
    unsafe { ufm_string_free(text) };
    let again = config(&toml);
    let digest = |c| {
        let mut s = ptr::null_mut();
        assert_eq!(unsafe { ufm_config_digest(c, &mut s) }, UFM_OK);
        let d = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_owned();
        unsafe { ufm_string_free(s) };
        d
    };
    assert_eq!(digest(cfg), digest(again));
    unsafe {
        ufm_report_free(report);
        ufm_config_free(cfg);
        ufm_config_free(again);
    }
}

#[test]
fn header_declares_exports() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/ufm.h")).unwrap();
    for name in [
        "typedef struct UfmConfig UfmConfig;",
        "typedef struct UfmReport UfmReport;",
        "ufm_config_new",
        "ufm_config_from_file",
        "ufm_run_experiment",
        "ufm_report_write",
        "ufm_learning_schedule",
        "ufm_string_free",
        "#define UFM_ERR_NUMERIC 3",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
    assert!(!unsafe { CStr::from_ptr(ufm_version()) }.to_str().unwrap().is_empty());
}

fn static_lib() -> Option<PathBuf> {
    // tests/<name>-<hash> lives in target/<profile>/deps
    let exe = std::env::current_exe().ok()?;
    let lib = exe.parent()?.parent()?.join("libufm_ffi.a");
    lib.exists().then_some(lib)
}

#[test]
fn c_program_links_against_static_lib() {
    let Some(lib) = static_lib() else {
        eprintln!("libufm_ffi.a not found next to the test binary; skipping C link check");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let built = Command::new("cc")
        .arg(root.join("tests/smoke.c"))
        .arg("-I")
        .arg(root.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status();
    match built {
        Ok(s) => assert!(s.success(), "cc failed"),
        Err(e) => {
            eprintln!("cc unavailable ({e}); skipping C link check");
            return;
        }
    }
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "smoke exited with {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).contains("k = 4"));
}
