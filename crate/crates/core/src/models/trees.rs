//! CART regression trees, random forests and gradient boosting.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until another rule stops.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_samples_leaf: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
    pub n_features: usize,
    pub params: TreeParams,
}

impl RegressionTree {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        check_schema(self.n_features, x)?;
        Ok(rows(x).iter().map(|r| self.predict_row(r)).collect())
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

fn rows(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..x.nrows()).map(|r| x.row(r).iter().copied().collect()).collect()
}

fn check_schema(n_features: usize, x: &DMatrix<f64>) -> Result<()> {
    if x.ncols() != n_features {
        return Err(Error::SchemaMismatch(format!("model has {n_features} features, input has {}", x.ncols())));
    }
    Ok(())
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Best (feature, midpoint) over `features`; ties keep the earlier
/// feature and the lower threshold.
fn best_split(x: &[Vec<f64>], y: &[f64], idx: &[usize], features: &[usize], min_leaf: usize) -> Option<BestSplit> {
    let n = idx.len();
    let total: f64 = idx.iter().map(|&i| y[i]).sum();
    let total_sq: f64 = idx.iter().map(|&i| y[i] * y[i]).sum();
    let sse_parent = total_sq - total * total / n as f64;
    let mut best: Option<BestSplit> = None;
    let mut order = idx.to_vec();
    for &f in features {
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
        let mut left_sum = 0.0;
        let mut left_sq = 0.0;
        for k in 0..n - 1 {
            let yi = y[order[k]];
            left_sum += yi;
            left_sq += yi * yi;
            let (nl, nr) = (k + 1, n - k - 1);
            let (lo, hi) = (x[order[k]][f], x[order[k + 1]][f]);
            if lo == hi || nl < min_leaf || nr < min_leaf {
                continue;
            }
            let right_sum = total - left_sum;
            let right_sq = total_sq - left_sq;
            let sse = (left_sq - left_sum * left_sum / nl as f64) + (right_sq - right_sum * right_sum / nr as f64);
            let gain = sse_parent - sse;
            if gain > 1e-12 * sse_parent.max(0.0) && gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                best = Some(BestSplit {
                    feature: f,
                    threshold: 0.5 * (lo + hi),
                    gain,
                });
            }
        }
    }
    best
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    params: TreeParams,
    n_features: usize,
    /// Features drawn per split; `None` uses all.
    max_features: Option<usize>,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn grow<R: Rng>(&mut self, idx: &[usize], depth: usize, rng: &mut R) -> usize {
        let id = self.nodes.len();
        let value = linalg::mean(&idx.iter().map(|&i| self.y[i]).collect::<Vec<_>>());
        self.nodes.push(Node::Leaf { value });
        let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
        if !depth_ok || idx.len() < 2 * self.params.min_samples_leaf.max(1) {
            return id;
        }
        let features: Vec<usize> = match self.max_features {
            Some(k) if k < self.n_features => {
                let mut f = sample(rng, self.n_features, k).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..self.n_features).collect(),
        };
        let Some(split) = best_split(self.x, self.y, idx, &features, self.params.min_samples_leaf.max(1)) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][split.feature] <= split.threshold);
        let left = self.grow(&l, depth + 1, rng);
        let right = self.grow(&r, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

fn build<R: Rng>(
    x: &[Vec<f64>],
    y: &[f64],
    n_features: usize,
    idx: &[usize],
    params: TreeParams,
    max_features: Option<usize>,
    rng: &mut R,
) -> RegressionTree {
    let mut b = Builder {
        x,
        y,
        params,
        n_features,
        max_features,
        nodes: Vec::new(),
    };
    b.grow(idx, 0, rng);
    RegressionTree {
        nodes: b.nodes,
        n_features,
        params,
    }
}

fn check_fit_input(x: &DMatrix<f64>, y: &[f64], params: &TreeParams) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::invalid(format!("{} rows but {} targets", x.nrows(), y.len())));
    }
    if y.len() < 2 * params.min_samples_leaf.max(1) {
        return Err(Error::invalid(format!(
            "tree needs at least {} rows",
            2 * params.min_samples_leaf.max(1)
        )));
    }
    Ok(())
}

pub fn cart_fit(x: &DMatrix<f64>, y: &[f64], params: TreeParams) -> Result<RegressionTree> {
    check_fit_input(x, y, &params)?;
    let idx: Vec<usize> = (0..y.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    Ok(build(&rows(x), y, x.ncols(), &idx, params, None, &mut rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub feature_fraction: f64,
    pub bootstrap: bool,
    pub tree: TreeParams,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 500,
            feature_fraction: 1.0 / 3.0,
            bootstrap: true,
            tree: TreeParams::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            n_trees: 200,
            learning_rate: 0.05,
            max_depth: 3,
            min_samples_leaf: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EnsembleMode {
    Forest,
    Boosted { learning_rate: f64, base: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub mode: EnsembleMode,
    pub trees: Vec<RegressionTree>,
    pub n_features: usize,
    /// Training target range; boosted predictions are clamped to it.
    pub y_range: (f64, f64),
}

impl TreeEnsemble {
    /// Sum without clamping (boosted) or mean (forest).
    fn raw_row(&self, x: &[f64]) -> f64 {
        match self.mode {
            EnsembleMode::Forest => {
                self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>() / self.trees.len() as f64
            }
            EnsembleMode::Boosted { learning_rate, base } => {
                base + learning_rate * self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>()
            }
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let v = self.raw_row(x);
        match self.mode {
            EnsembleMode::Forest => v,
            EnsembleMode::Boosted { .. } => v.clamp(self.y_range.0, self.y_range.1),
        }
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        check_schema(self.n_features, x)?;
        Ok(rows(x).iter().map(|r| self.predict_row(r)).collect())
    }
}

fn y_range(y: &[f64]) -> (f64, f64) {
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Tree `i` draws from its own ChaCha stream of `seed`, so results do not
/// depend on thread scheduling.
pub fn forest_fit(x: &DMatrix<f64>, y: &[f64], params: &ForestParams) -> Result<TreeEnsemble> {
    check_fit_input(x, y, &params.tree)?;
    if params.n_trees == 0 || !(params.feature_fraction > 0.0 && params.feature_fraction <= 1.0) {
        return Err(Error::invalid("forest needs n_trees ≥ 1 and feature_fraction in (0, 1]"));
    }
    let data = rows(x);
    let n = y.len();
    let k = x.ncols();
    let max_features = ((params.feature_fraction * k as f64).floor() as usize).clamp(1, k.max(1));
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(i as u64);
            let idx: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            build(&data, y, k, &idx, params.tree, Some(max_features), &mut rng)
        })
        .collect();
    Ok(TreeEnsemble {
        mode: EnsembleMode::Forest,
        trees,
        n_features: k,
        y_range: y_range(y),
    })
}

/// Stage-wise least-squares boosting. Also returns the training MSE after
/// each stage.
pub fn gbm_fit_staged(x: &DMatrix<f64>, y: &[f64], params: &BoostParams) -> Result<(TreeEnsemble, Vec<f64>)> {
    let tree_params = TreeParams {
        max_depth: Some(params.max_depth),
        min_samples_leaf: params.min_samples_leaf,
    };
    check_fit_input(x, y, &tree_params)?;
    if params.n_trees == 0 || !(params.learning_rate >= 0.0 && params.learning_rate <= 1.0) {
        return Err(Error::invalid("boosting needs n_trees ≥ 1 and learning rate in [0, 1]"));
    }
    let data = rows(x);
    let n = y.len();
    let base = linalg::mean(y);
    let mut pred = vec![base; n];
    let idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut mse = Vec::with_capacity(params.n_trees);
    for _ in 0..params.n_trees {
        let resid: Vec<f64> = y.iter().zip(&pred).map(|(a, p)| a - p).collect();
        let tree = build(&data, &resid, x.ncols(), &idx, tree_params, None, &mut rng);
        for (p, row) in pred.iter_mut().zip(&data) {
            *p += params.learning_rate * tree.predict_row(row);
        }
        mse.push(y.iter().zip(&pred).map(|(a, p)| (a - p).powi(2)).sum::<f64>() / n as f64);
        trees.push(tree);
    }
    let model = TreeEnsemble {
        mode: EnsembleMode::Boosted {
            learning_rate: params.learning_rate,
            base,
        },
        trees,
        n_features: x.ncols(),
        y_range: y_range(y),
    };
    Ok((model, mse))
}

pub fn gbm_fit(x: &DMatrix<f64>, y: &[f64], params: &BoostParams) -> Result<TreeEnsemble> {
    gbm_fit_staged(x, y, params).map(|r| r.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn col(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    fn sse(y: &[f64], p: &[f64]) -> f64 {
        y.iter().zip(p).map(|(a, b)| (a - b).powi(2)).sum()
    }

    #[test]
    fn constant_target_single_leaf() {
        let t = cart_fit(&col(&[1.0, 2.0, 3.0, 4.0]), &[5.0; 4], TreeParams::default()).unwrap();
        assert_eq!(t.nodes, vec![Node::Leaf { value: 5.0 }]);
        assert_eq!(t.predict(&col(&[-100.0])).unwrap(), vec![5.0]);
    }

    #[test]
    fn step_function_splits_at_midpoint() {
        let x = [-3.0, -2.0, -1.0, 1.0, 2.0, 3.0];
        let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let t = cart_fit(&col(&x), &y, TreeParams::default()).unwrap();
        match &t.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 0.0);
            }
            _ => panic!("expected a split"),
        }
        assert_eq!(t.predict(&col(&x)).unwrap(), y.to_vec());
    }

    #[test]
    fn depth_one_matches_brute_force() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y = x.clone();
        let t = cart_fit(
            &col(&x),
            &y,
            TreeParams {
                max_depth: Some(1),
                min_samples_leaf: 1,
            },
        )
        .unwrap();
        let tree_sse = sse(&y, &t.predict(&col(&x)).unwrap());
        let brute = (1..10)
            .map(|k| {
                let (l, r) = y.split_at(k);
                let (ml, mr) = (linalg::mean(l), linalg::mean(r));
                l.iter().map(|v| (v - ml).powi(2)).sum::<f64>() + r.iter().map(|v| (v - mr).powi(2)).sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min);
        assert!((tree_sse - brute).abs() < 1e-12);
    }

    #[test]
    fn tie_prefers_lowest_feature() {
        let x = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
        let t = cart_fit(&x, &[0.0, 0.0, 1.0, 1.0], TreeParams::default()).unwrap();
        assert!(matches!(t.nodes[0], Node::Split { feature: 0, .. }));
    }

    fn noisy_line(seed: u64, n: usize) -> (DMatrix<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let y = x
            .iter()
            .map(|v| v + 0.5 * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect();
        (col(&x), y)
    }

    #[test]
    fn degenerate_forest_equals_cart() {
        let (x, y) = noisy_line(1, 50);
        let forest = forest_fit(
            &x,
            &y,
            &ForestParams {
                n_trees: 1,
                feature_fraction: 1.0,
                bootstrap: false,
                ..ForestParams::default()
            },
        )
        .unwrap();
        let cart = cart_fit(&x, &y, TreeParams::default()).unwrap();
        assert_eq!(forest.trees[0], cart);
    }

    #[test]
    fn forest_is_deterministic_and_reduces_variance() {
        let params = ForestParams {
            n_trees: 100,
            ..ForestParams::default()
        };
        let (x, y) = noisy_line(2, 60);
        let a = forest_fit(&x, &y, &params).unwrap();
        let b = forest_fit(&x, &y, &params).unwrap();
        assert_eq!(a, b);

        let mut forest_mse = Vec::new();
        let mut tree_mse = Vec::new();
        for seed in 0..10 {
            let (x, y) = noisy_line(100 + seed, 80);
            let (xt, _) = noisy_line(200 + seed, 200);
            let truth: Vec<f64> = xt.iter().copied().collect();
            let f = forest_fit(&x, &y, &ForestParams { seed, ..params }).unwrap();
            let t = cart_fit(&x, &y, TreeParams::default()).unwrap();
            forest_mse.push(sse(&truth, &f.predict(&xt).unwrap()));
            tree_mse.push(sse(&truth, &t.predict(&xt).unwrap()));
        }
        let median = |v: &mut Vec<f64>| {
            v.sort_by(f64::total_cmp);
            (v[4] + v[5]) / 2.0
        };
        assert!(median(&mut forest_mse) <= median(&mut tree_mse));
    }

    #[test]
    fn boosting_base_and_overfit() {
        let (x, y) = noisy_line(3, 30);
        let flat = gbm_fit(
            &x,
            &y,
            &BoostParams {
                n_trees: 1,
                learning_rate: 0.0,
                ..BoostParams::default()
            },
        )
        .unwrap();
        let p = flat.predict(&x).unwrap();
        assert!(p.iter().all(|v| (v - linalg::mean(&y)).abs() < 1e-12));

        let xs: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|v| (v * 0.7).sin()).collect();
        let (m, mse) = gbm_fit_staged(
            &col(&xs),
            &ys,
            &BoostParams {
                n_trees: 20,
                learning_rate: 1.0,
                max_depth: 10,
                ..BoostParams::default()
            },
        )
        .unwrap();
        assert!(*mse.last().unwrap() < 1e-20);
        assert!(sse(&ys, &m.predict(&col(&xs)).unwrap()) < 1e-18);
    }

    #[test]
    fn boosting_hand_composition() {
        let leaf = |v: f64| RegressionTree {
            nodes: vec![Node::Leaf { value: v }],
            n_features: 1,
            params: TreeParams::default(),
        };
        let split = RegressionTree {
            nodes: vec![
                Node::Split {
                    feature: 0,
                    threshold: 0.0,
                    left: 1,
                    right: 2,
                },
                Node::Leaf { value: -1.0 },
                Node::Leaf { value: 2.0 },
            ],
            n_features: 1,
            params: TreeParams::default(),
        };
        let m = TreeEnsemble {
            mode: EnsembleMode::Boosted {
                learning_rate: 0.5,
                base: 1.0,
            },
            trees: vec![leaf(0.4), split.clone()],
            n_features: 1,
            y_range: (-10.0, 10.0),
        };
        let p = m.predict(&col(&[-1.0, 1.0])).unwrap();
        assert!((p[0] - (1.0 + 0.5 * (0.4 - 1.0))).abs() < 1e-15);
        assert!((p[1] - (1.0 + 0.5 * (0.4 + 2.0))).abs() < 1e-15);

        let copies = TreeEnsemble {
            mode: EnsembleMode::Forest,
            trees: vec![split.clone(); 3],
            n_features: 1,
            y_range: (-10.0, 10.0),
        };
        assert_eq!(copies.predict(&col(&[1.0])).unwrap(), split.predict(&col(&[1.0])).unwrap());
        assert!(copies.predict(&DMatrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn full_depth_interpolates() {
        let (x, y) = noisy_line(4, 40);
        let t = cart_fit(&x, &y, TreeParams::default()).unwrap();
        assert!(sse(&y, &t.predict(&x).unwrap()) < 1e-20);
    }

    proptest! {
        #[test]
        fn predictions_within_training_range(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 40;
            let x = DMatrix::from_fn(n, 3, |_, _| rng.random_range(-1.0..1.0));
            let y: Vec<f64> = (0..n).map(|r| x[(r, 0)] * 2.0 - x[(r, 1)] + rng.random_range(-0.3..0.3)).collect();
            let test = DMatrix::from_fn(50, 3, |_, _| rng.random_range(-3.0..3.0));
            let (lo, hi) = y_range(&y);
            let cart = cart_fit(&x, &y, TreeParams { max_depth: Some(4), min_samples_leaf: 2 }).unwrap();
            let forest = forest_fit(&x, &y, &ForestParams { n_trees: 20, seed, ..ForestParams::default() }).unwrap();
            let (gbm, mse) = gbm_fit_staged(&x, &y, &BoostParams { n_trees: 50, learning_rate: 0.3, seed, ..BoostParams::default() }).unwrap();
            for p in cart.predict(&test).unwrap().into_iter()
                .chain(forest.predict(&test).unwrap())
                .chain(gbm.predict(&test).unwrap())
            {
                prop_assert!(p >= lo - 1e-12 && p <= hi + 1e-12);
            }
            for w in mse.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12);
            }
            for node in &cart.nodes {
                if let Node::Leaf { value } = node {
                    prop_assert!(*value >= lo - 1e-12 && *value <= hi + 1e-12);
                }
            }
        }
    }
}
