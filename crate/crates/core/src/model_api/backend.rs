//! Methodology adapters behind the uniform fit/predict contract.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::spec::{ModelSpec, RefitPolicy};
use super::MethodologyId;
use crate::calendar::{Quarter, QuarterRange};
use crate::data::{Frequency, Panel, SplitSpec};
use crate::error::{Error, Result};
use crate::models::arma::{self, ArmaModel};
use crate::models::dfm::{self, DfmModel, DfmSpec};
use crate::models::linear::{self, LinearModel};
use crate::models::midas::{self, MidasModel};
use crate::models::neural::{self, Activation, LstmConfig, LstmNet, MlpConfig, MlpNet, Sequence, TrainConfig};
use crate::models::trees::{self, BoostParams, ForestParams, RegressionTree, TreeEnsemble, TreeParams};
use crate::models::var::{self, MinnesotaPrior, VarModel};
use crate::preprocess::{FeatureBuilder, FillStats, ImputePolicy, Scaler};
use crate::vintage::VintageView;

/// Estimated state of one methodology.
#[derive(Debug, Clone)]
pub enum LearnedState {
    Arma(ArmaModel),
    Tabular(Box<TabularState>),
    Var(Box<VarState>),
    Dfm(Box<DfmModel>),
    Midas(MidasModel),
    Lstm(Box<LstmState>),
}

#[derive(Debug, Clone)]
pub enum TabularModel {
    Linear(LinearModel),
    Tree(RegressionTree),
    Ensemble(TreeEnsemble),
    Mlp(Vec<MlpNet>),
}

/// Frequency-naive models on the stacked design matrix. Features are
/// z-scored with training-row statistics; the MLP target is too.
#[derive(Debug, Clone)]
pub struct TabularState {
    pub builder: FeatureBuilder,
    pub feature_names: Vec<String>,
    pub x_means: Vec<f64>,
    pub x_sds: Vec<f64>,
    pub y_mean: f64,
    pub y_sd: f64,
    pub model: TabularModel,
}

/// VAR on stacked quarterly rows: the target first, then each monthly
/// indicator as three month-of-quarter variables, then quarterly indicators.
#[derive(Debug, Clone)]
pub struct VarState {
    pub model: VarModel,
    pub means: Vec<f64>,
    pub start: Quarter,
}

#[derive(Debug, Clone)]
pub struct LstmState {
    pub fill: FillStats,
    pub scaler: Scaler,
    pub target_id: String,
    pub net: LstmNet,
}

/// Immutable fitted model; safe to share across threads.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub spec: ModelSpec,
    /// Panel column ids seen at fit time.
    pub schema: Vec<String>,
    pub train_end: Quarter,
    pub state: LearnedState,
}

fn backend_err(id: MethodologyId) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Schema { .. } | Error::SchemaMismatch(_) | Error::Backend { .. } => e,
        other => Error::Backend {
            id,
            cause: other.to_string(),
        },
    }
}

/// Estimates `spec` on the panel rows through `split.train_end`.
pub fn fit(spec: &ModelSpec, panel: &Panel, split: &SplitSpec) -> Result<FittedModel> {
    spec.validate()?;
    split.validate()?;
    if split.train_end < panel.first_quarter() {
        return Err(Error::EmptyPartition(format!(
            "training ends {} before the panel starts {}",
            split.train_end,
            panel.first_quarter()
        )));
    }
    let train = panel.through_quarter(split.train_end.min(panel.last_quarter()))?;
    let state = fit_state(spec, &train, split.train_end).map_err(backend_err(spec.id))?;
    Ok(FittedModel {
        spec: spec.clone(),
        schema: panel.ids(),
        train_end: split.train_end,
        state,
    })
}

/// Nowcast of `view.target_quarter`. Models with the refit policy are
/// re-estimated on the view's data before predicting.
pub fn predict(model: &FittedModel, view: &VintageView) -> Result<f64> {
    if view.panel.ids() != model.schema {
        return Err(Error::SchemaMismatch(format!(
            "model fitted on {:?}, view has {:?}",
            model.schema,
            view.panel.ids()
        )));
    }
    let id = model.spec.id;
    let value = predict_inner(model, view).map_err(backend_err(id))?;
    if !value.is_finite() {
        return Err(Error::Backend {
            id,
            cause: format!("non-finite nowcast for {} at offset {}", view.target_quarter, view.offset),
        });
    }
    Ok(value)
}

fn predict_inner(model: &FittedModel, view: &VintageView) -> Result<f64> {
    let refit = model.spec.refit_policy == RefitPolicy::RefitEachVintage;
    let tq = view.target_quarter;
    if let LearnedState::Arma(m) = &model.state {
        let (hist, last) = target_history(&view.panel, tq.add(-1))?;
        let m = if refit {
            arma::refit(m, &hist).unwrap_or_else(|e| {
                warn!("ARMA refit for {tq} failed ({e}); keeping earlier coefficients");
                m.clone()
            })
        } else {
            m.clone()
        };
        let h = tq.diff(last) as usize;
        return Ok(arma::forecast(&m, &hist, h)[h - 1]);
    }
    let refitted;
    let state = if refit {
        let train = view.panel.through_quarter(tq.add(-1))?;
        refitted = fit_state(&model.spec, &train, tq.add(-1))?;
        &refitted
    } else {
        &model.state
    };
    match state {
        LearnedState::Arma(_) => unreachable!("handled above"),
        LearnedState::Tabular(s) => predict_tabular(s, view),
        LearnedState::Var(s) => predict_var(s, view),
        LearnedState::Dfm(m) => m.nowcast(view),
        LearnedState::Midas(m) => m.nowcast(view),
        LearnedState::Lstm(s) => predict_lstm(s, view),
    }
}

fn fit_state(spec: &ModelSpec, panel: &Panel, train_end: Quarter) -> Result<LearnedState> {
    use MethodologyId::*;
    match spec.id {
        Arma => {
            let (y, _) = target_history(panel, train_end)?;
            Ok(LearnedState::Arma(arma::auto_fit(&y, spec.get_usize("p_max"), spec.get_usize("q_max"))?))
        }
        Ols | Ridge | DecisionTree | RandomForest | GradientBoost | Mlp => {
            fit_tabular(spec, panel, train_end).map(|s| LearnedState::Tabular(Box::new(s)))
        }
        Bvar | MfVar => fit_var(spec, panel, train_end).map(|s| LearnedState::Var(Box::new(s))),
        Dfm => {
            let mut ds = DfmSpec::from_panel(panel, spec.get_usize("factor_lags"));
            ds.max_iter = spec.get_usize("max_iter");
            ds.tol = spec.get("tol");
            let window = QuarterRange::new(panel.first_quarter(), train_end);
            Ok(LearnedState::Dfm(Box::new(dfm::em_fit(panel, &ds, window)?)))
        }
        Midas => {
            let window = QuarterRange::new(panel.first_quarter(), train_end);
            Ok(LearnedState::Midas(midas::midas_fit(panel, window, spec.get_usize("lags"))?))
        }
        Lstm => fit_lstm(spec, panel, train_end).map(|s| LearnedState::Lstm(Box::new(s))),
    }
}

/// Target values from the first observed quarter through the last observed
/// quarter at or before `through`; interior gaps take the sample mean.
fn target_history(panel: &Panel, through: Quarter) -> Result<(Vec<f64>, Quarter)> {
    let quarters: Vec<Quarter> = Quarter::range_inclusive(panel.first_quarter(), through).collect();
    let first = quarters.iter().position(|q| panel.target_value(*q).is_some());
    let last = quarters.iter().rposition(|q| panel.target_value(*q).is_some());
    let (Some(a), Some(b)) = (first, last) else {
        return Err(Error::AllMissing(format!("{} has no observations through {through}", panel.target().id())));
    };
    let vals: Vec<Option<f64>> = quarters[a..=b].iter().map(|q| panel.target_value(*q)).collect();
    let obs: Vec<f64> = vals.iter().flatten().copied().collect();
    let mean = obs.iter().sum::<f64>() / obs.len() as f64;
    Ok((vals.into_iter().map(|v| v.unwrap_or(mean)).collect(), quarters[b]))
}

/// First quarter in which every column has started reporting.
fn common_start(panel: &Panel) -> Quarter {
    panel
        .columns()
        .iter()
        .filter_map(|c| c.first_observed(panel.calendar()))
        .max()
        .map_or(panel.first_quarter(), |m| m.quarter())
}

fn column_stats(x: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = x.nrows() as f64;
    (0..x.ncols())
        .map(|c| {
            let col = x.column(c);
            let m = col.sum() / n;
            let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
            (m, if sd > 1e-12 { sd } else { 1.0 })
        })
        .unzip()
}

fn fit_tabular(spec: &ModelSpec, panel: &Panel, train_end: Quarter) -> Result<TabularState> {
    let start = common_start(panel);
    let window = QuarterRange::new(start, train_end);
    let builder = FeatureBuilder::new(
        panel,
        &ImputePolicy {
            strategy: spec.impute,
            fit_window: window,
        },
        spec.get_usize("n_lags"),
    )?;
    let dm = builder.build(panel, start, train_end)?;
    let (x_raw, y_raw) = dm.training_rows();
    if y_raw.len() < 4 {
        return Err(Error::EmptyPartition(format!("{} training rows", y_raw.len())));
    }
    let (x_means, x_sds) = column_stats(&x_raw);
    let x = DMatrix::from_fn(x_raw.nrows(), x_raw.ncols(), |r, c| (x_raw[(r, c)] - x_means[c]) / x_sds[c]);
    let depth = |s: &ModelSpec| match s.get_usize("max_depth") {
        0 => None,
        d => Some(d),
    };
    let (mut y_mean, mut y_sd) = (0.0, 1.0);
    let model = match spec.id {
        MethodologyId::Ols => TabularModel::Linear(linear::ols_fit(&x, &y_raw)?),
        MethodologyId::Ridge => TabularModel::Linear(linear::ridge_fit(&x, &y_raw, spec.get("alpha"))?),
        MethodologyId::DecisionTree => TabularModel::Tree(trees::cart_fit(
            &x,
            &y_raw,
            TreeParams {
                max_depth: depth(spec),
                min_samples_leaf: spec.get_usize("min_samples_leaf"),
            },
        )?),
        MethodologyId::RandomForest => TabularModel::Ensemble(trees::forest_fit(
            &x,
            &y_raw,
            &ForestParams {
                n_trees: spec.get_usize("n_trees"),
                feature_fraction: spec.get("feature_fraction"),
                bootstrap: true,
                tree: TreeParams {
                    max_depth: depth(spec),
                    min_samples_leaf: spec.get_usize("min_samples_leaf"),
                },
                seed: spec.seed,
            },
        )?),
        MethodologyId::GradientBoost => TabularModel::Ensemble(trees::gbm_fit(
            &x,
            &y_raw,
            &BoostParams {
                n_trees: spec.get_usize("n_trees"),
                learning_rate: spec.get("learning_rate"),
                max_depth: spec.get_usize("max_depth"),
                min_samples_leaf: spec.get_usize("min_samples_leaf"),
                seed: spec.seed,
            },
        )?),
        MethodologyId::Mlp => {
            let (m, s) = column_stats(&DMatrix::from_column_slice(y_raw.len(), 1, &y_raw));
            (y_mean, y_sd) = (m[0], s[0]);
            let y: Vec<f64> = y_raw.iter().map(|v| (v - y_mean) / y_sd).collect();
            let hidden: Vec<usize> = [spec.get_usize("hidden1"), spec.get_usize("hidden2")]
                .into_iter()
                .filter(|h| *h > 0)
                .collect();
            let nets = (0..spec.get_usize("n_models"))
                .into_par_iter()
                .map(|k| {
                    let cfg = MlpConfig {
                        hidden: hidden.clone(),
                        activation: Activation::Relu,
                        train: TrainConfig {
                            epochs: spec.get_usize("epochs"),
                            learning_rate: spec.get("learning_rate"),
                            momentum: spec.get("momentum"),
                            batch_size: spec.get_usize("batch_size"),
                            seed: spec.seed.wrapping_mul(1_000_003).wrapping_add(k as u64),
                        },
                    };
                    neural::mlp_fit(&x, &y, &cfg)
                })
                .collect::<Result<Vec<_>>>()?;
            TabularModel::Mlp(nets)
        }
        other => unreachable!("{other} is not tabular"),
    };
    Ok(TabularState {
        builder,
        feature_names: dm.feature_names,
        x_means,
        x_sds,
        y_mean,
        y_sd,
        model,
    })
}

fn predict_tabular(s: &TabularState, view: &VintageView) -> Result<f64> {
    let tq = view.target_quarter;
    let dm = s.builder.build(&view.panel, tq, tq)?;
    if dm.feature_names != s.feature_names {
        return Err(Error::SchemaMismatch("design matrix columns differ from training".into()));
    }
    let row: Vec<f64> = (0..dm.n_features())
        .map(|c| (dm.x[(0, c)] - s.x_means[c]) / s.x_sds[c])
        .collect();
    let z = match &s.model {
        TabularModel::Linear(m) => m.predict_row(&row),
        TabularModel::Tree(t) => t.predict_row(&row),
        TabularModel::Ensemble(e) => e.predict_row(&row),
        TabularModel::Mlp(nets) => {
            let x = DMatrix::from_row_slice(1, row.len(), &row);
            let preds = nets.iter().map(|n| n.predict(&x).map(|p| p[0])).collect::<Result<Vec<_>>>()?;
            preds.iter().sum::<f64>() / preds.len() as f64
        }
    };
    Ok(s.y_mean + s.y_sd * z)
}

fn stacked_row(panel: &Panel, q: Quarter) -> Vec<Option<f64>> {
    let t = panel.target_index();
    let mut row = vec![panel.value(t, q.last_month())];
    for (k, col) in panel.columns().iter().enumerate() {
        if k == t {
            continue;
        }
        match col.meta.frequency {
            Frequency::Monthly => row.extend(q.months().iter().map(|m| panel.value(k, *m))),
            Frequency::Quarterly => row.push(panel.value(k, q.last_month())),
        }
    }
    row
}

fn fit_var(spec: &ModelSpec, panel: &Panel, train_end: Quarter) -> Result<VarState> {
    let start = common_start(panel);
    let (_, last) = target_history(panel, train_end)?;
    if last < start {
        return Err(Error::EmptyPartition(format!("no target observations after {start}")));
    }
    let rows: Vec<Vec<Option<f64>>> = Quarter::range_inclusive(start, last).map(|q| stacked_row(panel, q)).collect();
    let k = rows[0].len();
    let means: Vec<f64> = (0..k)
        .map(|j| {
            let obs: Vec<f64> = rows.iter().filter_map(|r| r[j]).collect();
            if obs.is_empty() { 0.0 } else { obs.iter().sum::<f64>() / obs.len() as f64 }
        })
        .collect();
    let y = DMatrix::from_fn(rows.len(), k, |r, j| rows[r][j].unwrap_or(means[j]));
    let p = spec.get_usize("p");
    let model = match spec.id {
        MethodologyId::Bvar => var::bvar_fit(
            &y,
            p,
            &MinnesotaPrior {
                lambda1: spec.get("lambda1"),
                lambda2: spec.get("lambda2"),
                lambda3: spec.get("lambda3"),
                delta: spec.get("delta"),
                iw_dof: None,
            },
        )?,
        _ => var::var_fit(&y, p)?,
    };
    Ok(VarState { model, means, start })
}

/// Iterates one step at a time from the last quarter with observed GDP,
/// conditioning each step on the components the view has released.
fn predict_var(s: &VarState, view: &VintageView) -> Result<f64> {
    let tq = view.target_quarter;
    let (_, last) = target_history(&view.panel, tq.add(-1))?;
    let p = s.model.p;
    let mut hist: Vec<DVector<f64>> = Quarter::range_inclusive(last.add(1 - p as i32), last)
        .map(|q| {
            let row = stacked_row(&view.panel, q);
            DVector::from_iterator(row.len(), row.iter().zip(&s.means).map(|(v, m)| v.unwrap_or(*m)))
        })
        .collect();
    let mut q = last;
    while q < tq {
        q = q.add(1);
        let mean = s.model.step_mean(&hist);
        let next = var::condition_on(&mean, &s.model.sigma, &stacked_row(&view.panel, q));
        hist.push(next);
    }
    Ok(hist.last().unwrap()[0])
}

fn monthly_panel(panel: &Panel) -> Panel {
    panel.with_columns(|c| c.meta.is_target || c.meta.frequency == Frequency::Monthly)
}

fn lstm_sequence(z: &Panel, q: Quarter, t: usize) -> Sequence {
    let features: Vec<usize> = z.feature_indices(Frequency::Monthly);
    let end = q.last_month();
    (0..t)
        .rev()
        .map(|back| {
            let m = end.add(-(back as i32));
            features.iter().map(|&k| z.value(k, m).unwrap_or(0.0)).collect()
        })
        .collect()
}

fn fit_lstm(spec: &ModelSpec, panel: &Panel, train_end: Quarter) -> Result<LstmState> {
    let sub = monthly_panel(panel);
    if sub.feature_indices(Frequency::Monthly).is_empty() {
        return Err(Error::invalid("the LSTM needs at least one monthly indicator"));
    }
    let start = common_start(&sub);
    let window = QuarterRange::new(start, train_end);
    let fill = FillStats::fit(&sub, window)?;
    let filled = fill.apply(&sub)?;
    let scaler = Scaler::fit(&filled, window)?;
    let z = scaler.transform(&filled)?;
    let target_id = sub.target().id().to_string();
    let t_idx = sub.target_index();
    let cfg = LstmConfig {
        hidden: spec.get_usize("hidden"),
        n_timesteps: spec.get_usize("n_timesteps"),
        n_models: spec.get_usize("n_models"),
        train: TrainConfig {
            epochs: spec.get_usize("epochs"),
            learning_rate: spec.get("learning_rate"),
            momentum: spec.get("momentum"),
            batch_size: spec.get_usize("batch_size"),
            seed: spec.seed,
        },
    };
    let mut seqs = Vec::new();
    let mut y = Vec::new();
    for q in window.iter() {
        if sub.target_value(q).is_none() {
            continue;
        }
        seqs.push(lstm_sequence(&z, q, cfg.n_timesteps));
        y.push(z.value(t_idx, q.last_month()).expect("observed target"));
    }
    if y.len() < 4 {
        return Err(Error::EmptyPartition(format!("{} LSTM training sequences", y.len())));
    }
    let net = neural::lstm_fit(&seqs, &y, &cfg)?;
    Ok(LstmState {
        fill,
        scaler,
        target_id,
        net,
    })
}

fn predict_lstm(s: &LstmState, view: &VintageView) -> Result<f64> {
    let sub = monthly_panel(&view.panel);
    let z = s.scaler.transform(&s.fill.apply(&sub)?)?;
    let seq = lstm_sequence(&z, view.target_quarter, s.net.config.n_timesteps);
    let pred = s.net.predict(&[seq])?[0];
    Ok(s.scaler.inverse_value(&s.target_id, pred).expect("target is scaled"))
}
