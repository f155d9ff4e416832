use std::collections::BTreeMap;

use nowcast_core::calendar::{Month, Quarter};
use nowcast_core::data::synthetic::{generate, synthetic_availability_cutoff, synthetic_split, SyntheticConfig};
use nowcast_core::data::{availability_filter, build_panel, Panel, SeriesMeta, SplitSpec, TimeSeries};
use nowcast_core::evaluation::Metric;
use nowcast_core::model_api::{fit, predict, tune, LearnedState, MethodologyId, ModelSpec};
use nowcast_core::models::arma;
use nowcast_core::vintage::{mask_vintage, VintageOffset};
use nowcast_core::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn synthetic_panel() -> Panel {
    let data = generate(&SyntheticConfig::default());
    let panel = data.dataset.growth_panel().unwrap();
    availability_filter(&panel, synthetic_availability_cutoff())
}

/// Specs small enough to fit quickly in tests.
fn quick_spec(id: MethodologyId) -> ModelSpec {
    let s = ModelSpec::new(id).with_seed(11);
    match id {
        MethodologyId::RandomForest => s.with("n_trees", 30.0),
        MethodologyId::GradientBoost => s.with("n_trees", 40.0),
        MethodologyId::Mlp => s.with("epochs", 30.0).with("n_models", 2.0),
        MethodologyId::Lstm => s
            .with("hidden", 4.0)
            .with("n_timesteps", 6.0)
            .with("n_models", 2.0)
            .with("epochs", 5.0),
        MethodologyId::Dfm => s.with("max_iter", 10.0),
        _ => s,
    }
}

#[test]
fn every_methodology_fits_and_predicts_finite_values() {
    let panel = synthetic_panel();
    let split = synthetic_split();
    let q = split.test_start;
    for id in MethodologyId::ALL {
        let model = fit(&quick_spec(id), &panel, &split).unwrap_or_else(|e| panic!("{id}: {e}"));
        for o in [VintageOffset::ALL[0], VintageOffset::ALL[4]] {
            let v = predict(&model, &mask_vintage(&panel, q, o)).unwrap_or_else(|e| panic!("{id} {o}: {e}"));
            assert!(v.is_finite(), "{id} {o}: {v}");
        }
    }
}

#[test]
fn same_seed_gives_identical_predictions() {
    let panel = synthetic_panel();
    let split = synthetic_split();
    for id in [MethodologyId::RandomForest, MethodologyId::Mlp, MethodologyId::Lstm] {
        let spec = quick_spec(id);
        let a = fit(&spec, &panel, &split).unwrap();
        let b = fit(&spec, &panel, &split).unwrap();
        for q in split.test_quarters().into_iter().take(3) {
            for o in VintageOffset::ALL {
                let view = mask_vintage(&panel, q, o);
                let pa = predict(&a, &view).unwrap();
                assert_eq!(pa.to_bits(), predict(&b, &view).unwrap().to_bits(), "{id}");
                assert_eq!(pa.to_bits(), predict(&a, &view).unwrap().to_bits(), "{id} purity");
            }
        }
    }
}

#[test]
fn unknown_hyperparameter_is_a_schema_error() {
    let panel = synthetic_panel();
    let spec = ModelSpec::new(MethodologyId::Ridge).with("gamma", 1.0);
    assert!(matches!(fit(&spec, &panel, &synthetic_split()), Err(Error::Schema { .. })));
}

#[test]
fn schema_mismatch_is_rejected() {
    let panel = synthetic_panel();
    let split = synthetic_split();
    let model = fit(&ModelSpec::new(MethodologyId::Ols), &panel, &split).unwrap();
    let fewer = panel.with_columns(|c| c.meta.is_target || c.id() != panel.columns()[1].id());
    let view = mask_vintage(&fewer, split.test_start, VintageOffset::ALL[2]);
    assert!(matches!(predict(&model, &view), Err(Error::SchemaMismatch(_))));
}

/// Quarterly-only panel holding a simulated AR(1) target.
fn ar1_panel(phi: f64, n: usize, seed: u64) -> Panel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y = arma::simulate(0.5, &[phi], &[], 1.0, n, &mut rng);
    let start = Month::new(1960, 3).unwrap();
    let meta = SeriesMeta::quarterly("gdp", 1, start).target();
    let values: Vec<Option<f64>> = y.into_iter().map(Some).collect();
    build_panel(&[TimeSeries::from_values(meta, start, &values).unwrap()]).unwrap()
}

fn ar1_split(panel: &Panel) -> SplitSpec {
    let last = panel.last_quarter();
    SplitSpec::new(last.add(-12), last.add(-24), last.add(-12), last.add(-11), last).unwrap()
}

#[test]
fn arma_state_exposes_orders_and_coefficients() {
    let panel = ar1_panel(0.8, 240, 3);
    let model = fit(&ModelSpec::new(MethodologyId::Arma), &panel, &ar1_split(&panel)).unwrap();
    let LearnedState::Arma(m) = &model.state else {
        panic!("arma backend must carry an ARMA state");
    };
    assert!(m.p >= 1);
    assert_eq!(m.ar.len(), m.p);
    assert_eq!(m.ma.len(), m.q);
    assert!((m.ar.iter().sum::<f64>() - 0.8).abs() < 0.25, "{:?}", m.ar);
}

#[test]
fn arma_is_offset_invariant_without_new_target_release() {
    // With a one-month target lag, every offset of q sees GDP through q-1:
    // it is released before the earliest cutoff, and q itself stays masked.
    let panel = ar1_panel(0.6, 200, 5);
    let split = ar1_split(&panel);
    let model = fit(&ModelSpec::new(MethodologyId::Arma), &panel, &split).unwrap();
    let q = split.test_start.add(2);
    let preds: Vec<f64> = VintageOffset::ALL
        .iter()
        .map(|o| predict(&model, &mask_vintage(&panel, q, *o)).unwrap())
        .collect();
    assert!(preds.iter().all(|p| p.to_bits() == preds[0].to_bits()), "{preds:?}");
}

#[test]
fn tune_singleton_grid_returns_that_spec() {
    let panel = synthetic_panel();
    let spec = ModelSpec::new(MethodologyId::Ridge);
    let grid = vec![BTreeMap::from([("alpha".to_string(), 7.0)])];
    let out = tune(&spec, &grid, &panel, &synthetic_split(), Metric::Mae).unwrap();
    assert_eq!(out.get("alpha"), 7.0);
    assert!(tune(&spec, &[], &panel, &synthetic_split(), Metric::Mae).is_err());
}

#[test]
fn tune_selects_dominant_candidate() {
    // An enormous penalty collapses ridge to the training mean, which the
    // factor-driven indicators beat by a wide margin.
    let panel = synthetic_panel();
    let spec = ModelSpec::new(MethodologyId::Ridge).with("n_lags", 0.0);
    let grid = vec![
        BTreeMap::from([("alpha".to_string(), 1e12)]),
        BTreeMap::from([("alpha".to_string(), 1.0)]),
    ];
    let out = tune(&spec, &grid, &panel, &synthetic_split(), Metric::Mae).unwrap();
    assert_eq!(out.get("alpha"), 1.0);
}

/// Quarterly target weakly driven by one of many nearly collinear monthly
/// indicators: unpenalized least squares chases noise.
fn collinear_panel(seed: u64) -> (Panel, SplitSpec) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = move || -> f64 { Distribution::<f64>::sample(&StandardNormal, &mut rng) };
    let start = Month::new(2000, 1).unwrap();
    let n_q = 60;
    let n_m = 3 * n_q;
    let base: Vec<f64> = (0..n_m).map(|_| normal()).collect();
    let mut series = Vec::new();
    for k in 0..9 {
        let values: Vec<Option<f64>> = base.iter().map(|b| Some(b + 1e-3 * normal())).collect();
        let meta = SeriesMeta::monthly(&format!("x{k}"), 0, start);
        series.push(TimeSeries::from_values(meta, start, &values).unwrap());
    }
    let y: Vec<Option<f64>> = (0..n_q)
        .map(|q| Some(0.05 * base[3 * q..3 * q + 3].iter().sum::<f64>() + normal()))
        .collect();
    let qstart = start.add(2);
    let meta = SeriesMeta::quarterly("gdp", 0, qstart).target();
    series.push(TimeSeries::from_values(meta, qstart, &y).unwrap());
    let panel = build_panel(&series).unwrap();
    let first = Quarter::parse("2000Q1").unwrap();
    let split = SplitSpec::new(first.add(47), first.add(36), first.add(47), first.add(48), first.add(59)).unwrap();
    (panel, split)
}

#[test]
fn tune_prefers_heavy_ridge_on_collinear_data() {
    let (panel, split) = collinear_panel(21);
    let spec = ModelSpec::new(MethodologyId::Ridge).with("n_lags", 0.0);
    let grid = vec![
        BTreeMap::from([("alpha".to_string(), 0.0)]),
        BTreeMap::from([("alpha".to_string(), 1e6)]),
    ];
    let out = tune(&spec, &grid, &panel, &split, Metric::Mae).unwrap();
    assert_eq!(out.get("alpha"), 1e6);
}

#[test]
fn tune_never_reads_test_rows() {
    let (panel, split) = collinear_panel(4);
    let mut poisoned = panel.clone();
    let test_first = split.test_start.first_month();
    let calendar = panel.calendar().to_vec();
    for col in poisoned.columns_mut() {
        for (m, v) in calendar.iter().zip(col.values.iter_mut()) {
            if *m >= test_first {
                *v = Some(1e9);
            }
        }
    }
    let spec = ModelSpec::new(MethodologyId::Ridge).with("n_lags", 0.0);
    let grid: Vec<_> = [0.0, 0.1, 10.0, 1e6]
        .iter()
        .map(|a| BTreeMap::from([("alpha".to_string(), *a)]))
        .collect();
    let clean = tune(&spec, &grid, &panel, &split, Metric::Rmse).unwrap();
    let dirty = tune(&spec, &grid, &poisoned, &split, Metric::Rmse).unwrap();
    assert_eq!(clean, dirty);
}
