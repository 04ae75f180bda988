use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use sapt::*;

fn last_error() -> String {
    let n = sapt_last_error_length();
    let mut buf = vec![0 as std::ffi::c_char; n];
    unsafe { sapt_last_error_message(buf.as_mut_ptr(), n) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn small_config(seed: u64) -> *mut SaptConfig {
    let cfg = sapt_config_new();
    unsafe {
        assert_eq!(sapt_config_set_size(cfg, 3, 600), SaptStatus::Ok);
        assert_eq!(sapt_config_set_intervals(cfg, 20, 20), SaptStatus::Ok);
        assert_eq!(sapt_config_set_proposal(cfg, SaptProposal::RandomWalk, 0.1, 0.5, 0.5), SaptStatus::Ok);
        assert_eq!(sapt_config_set_seed(cfg, seed, true), SaptStatus::Ok);
        assert_eq!(sapt_config_validate(cfg), SaptStatus::Ok);
    }
    cfg
}

fn iris() -> *mut SaptData {
    let name = CString::new("iris").unwrap();
    let mut data = ptr::null_mut();
    let status = unsafe { sapt_data_load(name.as_ptr(), ptr::null(), 0.6, 1, &mut data) };
    assert_eq!(status, SaptStatus::Ok, "{}", last_error());
    data
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(sapt_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn run_round_trip() {
    let cfg = small_config(4);
    let data = iris();
    let (mut train, mut test, mut inputs, mut classes) = (0, 0, 0, 0);
    assert_eq!(
        unsafe { sapt_data_shape(data, &mut train, &mut test, &mut inputs, &mut classes) },
        SaptStatus::Ok
    );
    assert_eq!((train, test, inputs, classes), (90, 60, 4, 3));

    let mut run = ptr::null_mut();
    assert_eq!(unsafe { sapt_run(cfg, data, 0, 25.0, &mut run) }, SaptStatus::Ok, "{}", last_error());
    let (count, dim) = unsafe { (sapt_run_sample_count(run), sapt_run_dim(run)) };
    assert_eq!(dim, 99);
    assert_eq!(count, 300);

    let mut samples = vec![f64::NAN; count * dim];
    assert_eq!(unsafe { sapt_run_copy_samples(run, samples.as_mut_ptr(), samples.len()) }, SaptStatus::Ok);
    assert!(samples.iter().all(|v| v.is_finite()));
    assert_eq!(
        unsafe { sapt_run_copy_samples(run, samples.as_mut_ptr(), samples.len() - 1) },
        SaptStatus::InvalidArgument
    );
    assert!(last_error().contains("needed"));

    let mut counts = SaptCounts::default();
    assert_eq!(unsafe { sapt_run_counts(run, &mut counts) }, SaptStatus::Ok);
    assert_eq!(counts.true_evals, 600);
    assert_eq!(counts.surrogate_evals, 0);
    assert!(counts.swap_accepts <= counts.swap_attempts);

    let mut acc = SaptAccuracy::default();
    assert_eq!(unsafe { sapt_run_accuracy(run, data, 10, &mut acc) }, SaptStatus::Ok);
    assert!(acc.test_best >= acc.test_mean && acc.test_std >= 0.0 && acc.test_best <= 100.0);

    let n = unsafe { sapt_run_report(run, ptr::null_mut(), 0) };
    let mut buf = vec![0 as std::ffi::c_char; n];
    assert_eq!(unsafe { sapt_run_report(run, buf.as_mut_ptr(), n) }, n);
    let text = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap().to_owned();
    assert!(text.contains("true_evals = 600"), "{text}");

    // a second run with the same seed gives the same samples
    let mut again = ptr::null_mut();
    assert_eq!(unsafe { sapt_run(cfg, data, 0, 25.0, &mut again) }, SaptStatus::Ok);
    let mut other = vec![0.0; count * dim];
    unsafe { sapt_run_copy_samples(again, other.as_mut_ptr(), other.len()) };
    assert_eq!(samples, other);

    unsafe {
        sapt_run_free(again);
        sapt_run_free(run);
        sapt_data_free(data);
        sapt_config_free(cfg);
    }
}

#[test]
fn errors_map_to_codes() {
    unsafe {
        assert_eq!(sapt_config_set_size(ptr::null_mut(), 1, 1), SaptStatus::NullPointer);
        assert!(last_error().contains("config"));

        let cfg = sapt_config_new();
        sapt_config_set_size(cfg, 0, 100);
        assert_eq!(sapt_config_validate(cfg), SaptStatus::Config);
        sapt_config_free(cfg);

        let name = CString::new("no-such-set").unwrap();
        let mut data = ptr::null_mut();
        assert_eq!(sapt_data_load(name.as_ptr(), ptr::null(), 0.6, 1, &mut data), SaptStatus::Config);
        assert!(data.is_null());

        let missing = CString::new("/nonexistent/dir/x.csv").unwrap();
        assert_eq!(sapt_data_load_csv(missing.as_ptr(), false, 0.6, 1, &mut data), SaptStatus::Io);

        sapt_run_free(ptr::null_mut());
        sapt_data_free(ptr::null_mut());
        sapt_config_free(ptr::null_mut());
        assert_eq!(sapt_run_sample_count(ptr::null()), 0);
    }
}

#[test]
fn csv_data_needs_hidden_units() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.csv");
    let mut text = String::new();
    for i in 0..20 {
        text.push_str(&format!("{},{},{}\n", i as f64 / 20.0, (i % 3) as f64, i % 2));
    }
    std::fs::write(&path, text).unwrap();
    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut data = ptr::null_mut();
    unsafe {
        assert_eq!(sapt_data_load_csv(c_path.as_ptr(), false, 0.6, 2, &mut data), SaptStatus::Ok, "{}", last_error());
        let cfg = small_config(1);
        let mut run = ptr::null_mut();
        assert_eq!(sapt_run(cfg, data, 0, 25.0, &mut run), SaptStatus::Config);
        assert!(run.is_null());
        assert_eq!(sapt_run(cfg, data, 3, 25.0, &mut run), SaptStatus::Ok, "{}", last_error());
        assert_eq!(sapt_run_dim(run), 2 * 3 + 3 + 3 * 2 + 2);
        sapt_run_free(run);
        sapt_config_free(cfg);
        sapt_data_free(data);
    }
}

#[test]
fn truncated_error_message_is_terminated() {
    unsafe {
        sapt_run_counts(ptr::null(), ptr::null_mut());
        let full = sapt_last_error_length();
        let mut buf = [1 as std::ffi::c_char; 4];
        assert_eq!(sapt_last_error_message(buf.as_mut_ptr(), buf.len()), full);
        assert_eq!(buf[3], 0);
        assert_eq!(CStr::from_ptr(buf.as_ptr()).to_bytes().len(), 3);
    }
}

#[test]
fn header_declares_the_api_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/sapt.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for symbol in [
        "SaptStatus",
        "SAPT_STATUS_OK",
        "typedef struct SaptRun SaptRun",
        "sapt_run(",
        "sapt_run_copy_samples(",
        "sapt_last_error_message(",
        "sapt_data_load(",
    ] {
        assert!(text.contains(symbol), "header lacks {symbol}");
    }
    // compile the header when a C compiler is around
    let Ok(status) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"])
        .arg(&header)
        .status()
    else {
        eprintln!("no C compiler found; skipped compiling the header");
        return;
    };
    assert!(status.success());
}
