use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use nowcast_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(nc_last_error()) }.to_string_lossy().into_owned()
}

/// Two methodologies over two quarters; Ridge's error is half ARMA's.
unsafe fn small_cube() -> *mut NcCube {
    let mut cube = ptr::null_mut();
    assert_eq!(nc_cube_new(&mut cube), NcStatus::Ok);
    for (k, q) in ["2016Q1", "2016Q2"].iter().enumerate() {
        let actual = 0.01 * k as f64;
        assert_eq!(nc_cube_set_actual(cube, c(q).as_ptr(), actual), NcStatus::Ok);
        for o in -2..=2 {
            let err = 0.002 * (3 + o) as f64;
            for (id, scale) in [("arma", 1.0), ("ridge", 0.5)] {
                let st = nc_cube_insert(cube, c(id).as_ptr(), c("period3").as_ptr(), c(q).as_ptr(), o, actual + scale * err);
                assert_eq!(st, NcStatus::Ok, "{}", last_error());
            }
        }
    }
    cube
}

#[test]
fn cube_roundtrip_through_c_api() {
    unsafe {
        let cube = small_cube();
        let mut n = 0usize;
        assert_eq!(nc_cube_len(cube, &mut n), NcStatus::Ok);
        assert_eq!(n, 20);

        let mut eval = ptr::null_mut();
        assert_eq!(nc_evaluate(cube, &mut eval), NcStatus::Ok);
        let (p, arma, ridge) = (c("period3"), c("arma"), c("ridge"));
        let mut v = 0.0;
        for o in -2..=2 {
            assert_eq!(nc_ratio(eval, p.as_ptr(), NcMetric::Mae, arma.as_ptr(), o, &mut v), NcStatus::Ok);
            assert_eq!(v, 1.0);
            assert_eq!(nc_ratio(eval, p.as_ptr(), NcMetric::Rmse, ridge.as_ptr(), o, &mut v), NcStatus::Ok);
            assert!((v - 0.5).abs() < 1e-12);
        }
        assert_eq!(nc_ratio_average(eval, p.as_ptr(), NcMetric::Mae, ridge.as_ptr(), &mut v), NcStatus::Ok);
        assert!((v - 0.5).abs() < 1e-12);
        // Adjacent vintages differ by 0.002 (ARMA) and 0.001 (Ridge).
        assert_eq!(nc_avg_revision(eval, p.as_ptr(), arma.as_ptr(), &mut v), NcStatus::Ok);
        assert!((v - 0.002).abs() < 1e-12);
        assert_eq!(nc_aggregate_score(eval, ridge.as_ptr(), &mut v), NcStatus::Ok);
        assert_eq!(v, 0.0);
        assert_eq!(nc_aggregate_score(eval, arma.as_ptr(), &mut v), NcStatus::Ok);
        assert_eq!(v, 1.0);

        nc_evaluation_free(eval);
        nc_cube_free(cube);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let cube = small_cube();
        let (p, q) = (c("period3"), c("2016Q1"));
        assert_eq!(
            nc_cube_insert(cube, c("arma").as_ptr(), p.as_ptr(), q.as_ptr(), -2, 0.0),
            NcStatus::InvalidInput
        );
        assert!(last_error().contains("duplicate"), "{}", last_error());
        assert_eq!(
            nc_cube_insert(cube, c("lasso").as_ptr(), p.as_ptr(), q.as_ptr(), 0, 0.0),
            NcStatus::InvalidInput
        );
        assert_eq!(
            nc_cube_insert(cube, c("ols").as_ptr(), p.as_ptr(), q.as_ptr(), 3, 0.0),
            NcStatus::InvalidInput
        );
        assert_eq!(
            nc_cube_insert(cube, c("ols").as_ptr(), p.as_ptr(), c("2016Q5").as_ptr(), 0, 0.0),
            NcStatus::Parse
        );
        assert_eq!(
            nc_cube_insert(cube, ptr::null(), p.as_ptr(), q.as_ptr(), 0, 0.0),
            NcStatus::NullArgument
        );
        let bad = [0xffu8, 0];
        assert_eq!(
            nc_cube_insert(cube, bad.as_ptr().cast(), p.as_ptr(), q.as_ptr(), 0, 0.0),
            NcStatus::InvalidUtf8
        );
        assert_eq!(nc_cube_len(ptr::null(), ptr::null_mut()), NcStatus::NullArgument);

        // A methodology with a single vintage leaves the cube incomplete.
        assert_eq!(
            nc_cube_insert(cube, c("ols").as_ptr(), p.as_ptr(), q.as_ptr(), 0, 0.0),
            NcStatus::Ok
        );
        let mut eval = ptr::null_mut();
        assert_eq!(nc_evaluate(cube, &mut eval), NcStatus::MissingCells);
        assert!(eval.is_null());

        let mut loaded = ptr::null_mut();
        assert_eq!(nc_cube_load(c("/nonexistent/dir").as_ptr(), &mut loaded), NcStatus::Config);
        nc_cube_free(cube);
        nc_cube_free(ptr::null_mut());
        nc_evaluation_free(ptr::null_mut());
    }
}

#[test]
fn run_and_load_synthetic_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "methodologies = [\"arma\", \"midas\"]\n").unwrap();
    let out = dir.path().join("out");
    let (cfg_c, out_c) = (c(cfg.to_str().unwrap()), c(out.to_str().unwrap()));
    unsafe {
        let mut failed = usize::MAX;
        assert_eq!(nc_run(cfg_c.as_ptr(), out_c.as_ptr(), true, &mut failed), NcStatus::Ok, "{}", last_error());
        assert_eq!(failed, 0);
        let mut cube = ptr::null_mut();
        assert_eq!(nc_cube_load(out_c.as_ptr(), &mut cube), NcStatus::Ok);
        let mut n = 0;
        nc_cube_len(cube, &mut n);
        assert_eq!(n, 2 * 12 * 5);
        nc_cube_free(cube);

        assert_eq!(nc_run(c("/nonexistent.toml").as_ptr(), ptr::null(), true, ptr::null_mut()), NcStatus::Config);
    }
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(nc_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/nowcast.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in ["nc_cube_new", "nc_evaluate", "nc_ratio", "nc_run", "nc_last_error"] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        "#include \"nowcast.h\"\nint main(void) { NcCube *c = 0; return nc_cube_new(&c) == NC_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let Ok(out) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
    else {
        eprintln!("no C compiler found; header syntax not checked");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
