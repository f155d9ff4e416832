use std::fs;
use std::path::Path;
use std::process::Command;

use nowcast_core::bench::{cmd_evaluate, cmd_report, cmd_run, evaluate, PeriodConfig, RunConfig};
use nowcast_core::calendar::{Month, Quarter};
use nowcast_core::data::synthetic::{generate, write_synthetic_cache, SyntheticConfig};
use nowcast_core::evaluation::paper::PaperTables;
use nowcast_core::evaluation::{Metric, PredictionCube};
use nowcast_core::model_api::{MethodologyId, PredictionRecord};
use nowcast_core::vintage::VintageOffset;
use nowcast_core::Error;

fn synthetic_config(out: &Path, ids: &[MethodologyId]) -> RunConfig {
    RunConfig {
        synthetic: true,
        methodologies: ids.to_vec(),
        out_dir: out.to_path_buf(),
        ..RunConfig::default()
    }
}

#[test]
fn synthetic_run_resumes_without_changing_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synthetic_config(dir.path(), &[MethodologyId::Arma, MethodologyId::Ridge]);
    let first = cmd_run(&cfg).unwrap();
    assert!(first.is_complete());
    assert_eq!(first.written, 2 * 12 * 5);
    let cube_file = dir.path().join("cube.csv");
    let bytes = fs::read(&cube_file).unwrap();

    let again = cmd_run(&cfg).unwrap();
    assert_eq!((again.written, again.skipped), (0, 120));
    assert_eq!(fs::read(&cube_file).unwrap(), bytes);

    // Dropping one block and resuming recomputes exactly those cells.
    let text = String::from_utf8(bytes.clone()).unwrap();
    let kept: Vec<&str> = text.lines().filter(|l| !l.starts_with("ridge,")).collect();
    fs::write(&cube_file, kept.join("\n") + "\n").unwrap();
    let resumed = cmd_run(&cfg).unwrap();
    assert_eq!((resumed.written, resumed.skipped), (60, 60));
    assert_eq!(fs::read(&cube_file).unwrap(), bytes);
}

#[test]
fn torn_trailing_row_is_dropped_and_refilled() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synthetic_config(dir.path(), &[MethodologyId::Arma]);
    cmd_run(&cfg).unwrap();
    let cube_file = dir.path().join("cube.csv");
    let bytes = fs::read(&cube_file).unwrap();
    fs::write(&cube_file, &bytes[..bytes.len() - 4]).unwrap();
    let resumed = cmd_run(&cfg).unwrap();
    assert_eq!(resumed.written, 1);
    assert_eq!(fs::read(&cube_file).unwrap(), bytes);
}

#[test]
fn changed_settings_refuse_to_resume() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synthetic_config(dir.path(), &[MethodologyId::Arma]);
    cmd_run(&cfg).unwrap();
    let other = RunConfig { seed: 99, ..cfg.clone() };
    assert!(matches!(cmd_run(&other), Err(Error::Config(_))));
    // Adding a methodology keeps the fingerprint and extends the cube.
    let wider = synthetic_config(dir.path(), &[MethodologyId::Arma, MethodologyId::Ols]);
    assert_eq!(cmd_run(&wider).unwrap().written, 60);
}

#[test]
fn report_emits_tables_and_charts() {
    let dir = tempfile::tempdir().unwrap();
    let ids = [MethodologyId::Arma, MethodologyId::Ols, MethodologyId::Midas];
    cmd_run(&synthetic_config(dir.path(), &ids)).unwrap();
    let (eval, tables) = cmd_evaluate(dir.path()).unwrap();
    assert_eq!(tables.len(), 6);
    let t = &eval.periods[0];
    assert!(t.mae_ratio.row(MethodologyId::Arma).unwrap().iter().all(|v| *v == 1.0));
    let scores = eval.aggregate.as_ref().unwrap();
    assert!(scores.values().all(|s| (0.0..=1.0).contains(s)));

    let files = cmd_report(dir.path()).unwrap();
    let svgs: Vec<_> = files.iter().filter(|p| p.extension().is_some_and(|e| e == "svg")).collect();
    assert_eq!(svgs.len(), 3);
    for svg in &svgs {
        assert_eq!(fs::read_to_string(svg).unwrap().matches("<polyline").count(), 6);
    }
    // Chart numbering follows RMSE rank.
    let best = t.rmse_order()[0];
    assert!(dir
        .path()
        .join(format!("figures/synthetic/01_{}.svg", best.as_str()))
        .exists());
    let md = fs::read_to_string(dir.path().join("report.md")).unwrap();
    assert!(md.contains("MAE as a proportion of ARMA"));
    assert!(md.contains("## Aggregate score"));
}

/// Synthetic levels written to a provider cache, spanning the COVID-era
/// test period, plus a manifest file pointing at them.
fn cached_dataset(root: &Path) -> RunConfig {
    let cfg = SyntheticConfig {
        start: Month::new(1947, 1).unwrap(),
        end: Month::new(2021, 12).unwrap(),
        crisis_quarter: Quarter::parse("2020Q2").unwrap(),
        ..SyntheticConfig::default()
    };
    let cache = root.join("cache");
    let manifest = write_synthetic_cache(&generate(&cfg), &cache).unwrap();
    let manifest_path = root.join("manifest.toml");
    fs::write(&manifest_path, toml::to_string(&manifest).unwrap()).unwrap();
    let period3 = PeriodConfig::us_defaults().pop().unwrap();
    RunConfig {
        manifest: Some(manifest_path),
        cache_dir: cache,
        methodologies: vec![MethodologyId::Arma],
        periods: Some(vec![period3]),
        out_dir: root.join("out"),
        ..RunConfig::default()
    }
}

#[test]
fn one_methodology_over_period3_fills_115_cells() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = cached_dataset(dir.path());
    let summary = cmd_run(&cfg).unwrap();
    assert!(summary.is_complete(), "{:?}", summary.failures.first());
    let text = fs::read_to_string(dir.path().join("out/cube.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 115);
}

#[test]
fn paper_fixture_cube_reproduces_table1_average_row() {
    // One quarter with actual 0 and ARMA error 1 at every vintage: each
    // methodology's MAE ratio equals its predicted value.
    let tables = PaperTables::load().unwrap();
    let q = Quarter::parse("1972Q1").unwrap();
    let mut cube = PredictionCube::default();
    cube.set_actual(q, 0.0);
    for id in MethodologyId::ALL {
        for o in VintageOffset::ALL {
            cube.insert(PredictionRecord {
                methodology: id,
                period: "period1".into(),
                quarter: q,
                offset: o,
                value: tables.ratio(1, Metric::Mae, Some(o))[&id],
            })
            .unwrap();
        }
    }
    let eval = evaluate(&cube).unwrap();
    let published = tables.ratio(1, Metric::Mae, None);
    for id in MethodologyId::ALL {
        let got = eval.periods[0].mae_ratio.average_of(id).unwrap();
        assert!((got - published[&id]).abs() <= 0.0025, "{id}: {got} vs {}", published[&id]);
    }
}

fn nowcast() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_nowcast"));
    c.env("RUST_LOG", "warn").env_remove("FRED_API_KEY");
    c
}

#[test]
fn cli_runs_offline_pipeline_and_rejects_empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "methodologies = [\"arma\", \"ridge\"]\nout_dir = \"out\"\n").unwrap();
    for sub in ["run", "evaluate", "report"] {
        let st = nowcast()
            .args([sub, "--synthetic", "--jobs", "1", "--config"])
            .arg(&cfg)
            .output()
            .unwrap();
        assert!(st.status.success(), "{sub}: {}", String::from_utf8_lossy(&st.stderr));
    }
    assert!(dir.path().join("out/report.md").exists());
    assert!(dir.path().join("out/tables/aggregate.csv").exists());

    let empty = dir.path().join("empty.toml");
    fs::write(&empty, "series = []\n").unwrap();
    let cfg2 = dir.path().join("fetch.toml");
    fs::write(&cfg2, "manifest = \"empty.toml\"\ncache_dir = \"cache\"\n").unwrap();
    let out = nowcast().args(["fetch", "--config"]).arg(&cfg2).output().unwrap();
    assert!(!out.status.success());
}
