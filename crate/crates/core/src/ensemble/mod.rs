//! Tree ensembles (least-squares boosting and bootstrap aggregation),
//! k-fold cross-validation and regression metrics.

mod metrics;
mod tree;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use metrics::{rmse, smape};
pub use tree::{fit_tree, Node, RegressionTree};
use tree::{grow_tree, SortedColumns};

/// Lower and upper bound of every cue prediction.
pub const OUTPUT_RANGE: (f64, f64) = (0.0, 100.0);
pub const MAX_LEARN_CYCLES: usize = 500;
pub const MAX_MIN_LEAF_SIZE: usize = 500;

#[derive(Debug, Error, PartialEq)]
pub enum EnsembleError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("invalid ensemble configuration: {0}")]
    Config(String),
    #[error("metric undefined: {0}")]
    Undefined(String),
}

/// Dense row-major matrix, one training example per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, EnsembleError> {
        if data.len() != rows * cols {
            return Err(EnsembleError::Input(format!(
                "buffer of {} values cannot hold {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, EnsembleError> {
        let cols = rows.first().map_or(0, Vec::len);
        let n = rows.len();
        let mut data = Vec::with_capacity(n * cols);
        for (i, r) in rows.into_iter().enumerate() {
            if r.len() != cols {
                return Err(EnsembleError::Input(format!(
                    "row {i} has {} values, expected {cols}",
                    r.len()
                )));
            }
            data.extend(r);
        }
        Ok(Matrix { rows: n, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    LSBoost,
    Bag,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::LSBoost => "LSBoost",
            Method::Bag => "Bag",
        })
    }
}

impl FromStr for Method {
    type Err = EnsembleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "LSBoost" => Ok(Method::LSBoost),
            "Bag" => Ok(Method::Bag),
            other => Err(EnsembleError::Config(format!("unknown method \"{other}\""))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub method: Method,
    pub learn_cycles: usize,
    /// Shrinkage; ignored by [`Method::Bag`].
    pub learn_rate: f64,
    pub min_leaf_size: usize,
    pub seed: u64,
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<(), EnsembleError> {
        if !(1..=MAX_LEARN_CYCLES).contains(&self.learn_cycles) {
            return Err(EnsembleError::Config(format!(
                "learn_cycles {} outside [1, {MAX_LEARN_CYCLES}]",
                self.learn_cycles
            )));
        }
        if !(1..=MAX_MIN_LEAF_SIZE).contains(&self.min_leaf_size) {
            return Err(EnsembleError::Config(format!(
                "min_leaf_size {} outside [1, {MAX_MIN_LEAF_SIZE}]",
                self.min_leaf_size
            )));
        }
        if self.method == Method::LSBoost && !(self.learn_rate > 0.0 && self.learn_rate <= 1.0) {
            return Err(EnsembleError::Config(format!(
                "learn_rate {} outside (0, 1]",
                self.learn_rate
            )));
        }
        Ok(())
    }
}

/// A trained cue regressor. Predictions are clamped to [`OUTPUT_RANGE`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub config: EnsembleConfig,
    pub n_features: usize,
    /// Boosting base prediction (training mean); 0 for bagging.
    pub init_offset: f64,
    pub trees: Vec<RegressionTree>,
}

impl EnsembleModel {
    /// Unclamped ensemble output.
    pub fn raw_predict(&self, x: &[f64]) -> f64 {
        match self.config.method {
            Method::LSBoost => {
                self.init_offset + self.config.learn_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
            }
            Method::Bag => self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64,
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64, EnsembleError> {
        if x.len() != self.n_features {
            return Err(EnsembleError::Input(format!(
                "feature vector has length {}, model expects {}",
                x.len(),
                self.n_features
            )));
        }
        Ok(self.raw_predict(x).clamp(OUTPUT_RANGE.0, OUTPUT_RANGE.1))
    }

    pub fn validate(&self) -> Result<(), EnsembleError> {
        self.config.validate()?;
        if self.trees.len() != self.config.learn_cycles {
            return Err(EnsembleError::Input(format!(
                "{} trees for {} learn cycles",
                self.trees.len(),
                self.config.learn_cycles
            )));
        }
        if let Some(f) = self.trees.iter().filter_map(RegressionTree::max_feature).max() {
            if f >= self.n_features {
                return Err(EnsembleError::Input(format!(
                    "tree splits on feature {f} of {}",
                    self.n_features
                )));
            }
        }
        Ok(())
    }
}

fn check_training_data(x: &Matrix, y: &[f64]) -> Result<(), EnsembleError> {
    if x.rows() == 0 {
        return Err(EnsembleError::Input("no training rows".into()));
    }
    if x.rows() != y.len() {
        return Err(EnsembleError::Input(format!(
            "{} feature rows but {} targets",
            x.rows(),
            y.len()
        )));
    }
    if let Some(v) = y.iter().find(|v| !(OUTPUT_RANGE.0..=OUTPUT_RANGE.1).contains(*v)) {
        return Err(EnsembleError::Input(format!("target {v} outside [0, 100]")));
    }
    Ok(())
}

/// Fits an ensemble, seeding bootstrap draws from `config.seed`.
pub fn fit_ensemble(x: &Matrix, y: &[f64], config: &EnsembleConfig) -> Result<EnsembleModel, EnsembleError> {
    fit_ensemble_with_rng(x, y, config, &mut ChaCha8Rng::seed_from_u64(config.seed))
}

/// Fits an ensemble drawing bootstrap samples from `rng`.
pub fn fit_ensemble_with_rng<R: Rng + ?Sized>(
    x: &Matrix,
    y: &[f64],
    config: &EnsembleConfig,
    rng: &mut R,
) -> Result<EnsembleModel, EnsembleError> {
    config.validate()?;
    check_training_data(x, y)?;
    Ok(fit_sorted(&SortedColumns::new(x), x, y, config, rng))
}

fn fit_sorted<R: Rng + ?Sized>(
    cols: &SortedColumns,
    x: &Matrix,
    y: &[f64],
    config: &EnsembleConfig,
    rng: &mut R,
) -> EnsembleModel {
    let n = y.len();
    let (init_offset, trees) = match config.method {
        Method::LSBoost => {
            let init = y.iter().sum::<f64>() / n as f64;
            let mut fitted = vec![init; n];
            let mut residual = vec![0.0; n];
            let ones = vec![1u32; n];
            let mut trees = Vec::with_capacity(config.learn_cycles);
            for _ in 0..config.learn_cycles {
                for ((r, t), f) in residual.iter_mut().zip(y).zip(&fitted) {
                    *r = t - f;
                }
                let tree = grow_tree(cols, &residual, &ones, config.min_leaf_size);
                for (i, f) in fitted.iter_mut().enumerate() {
                    *f += config.learn_rate * tree.predict(x.row(i));
                }
                trees.push(tree);
            }
            (init, trees)
        }
        Method::Bag => {
            let draws: Vec<Vec<u32>> = (0..config.learn_cycles)
                .map(|_| {
                    let mut counts = vec![0u32; n];
                    for _ in 0..n {
                        counts[rng.random_range(0..n)] += 1;
                    }
                    counts
                })
                .collect();
            let trees = draws
                .par_iter()
                .map(|counts| grow_tree(cols, y, counts, config.min_leaf_size))
                .collect();
            (0.0, trees)
        }
    };
    EnsembleModel {
        config: *config,
        n_features: x.cols(),
        init_offset,
        trees,
    }
}

/// Cross-validation outcome for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub seed: u64,
    pub fold_rmse: Vec<f64>,
    pub mean_rmse: f64,
}

/// Seeded random partition of `0..n` into `k` folds whose sizes differ by at
/// most one (larger folds first).
pub fn fold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>, EnsembleError> {
    if k < 2 {
        return Err(EnsembleError::Input(format!("k-fold needs k >= 2, got {k}")));
    }
    if n < k {
        return Err(EnsembleError::Input(format!("{n} rows cannot fill {k} folds")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(perm[start..start + size].to_vec());
        start += size;
    }
    Ok(folds)
}

/// Training rows for held-out fold `fold`.
pub fn training_rows(folds: &[Vec<usize>], fold: usize) -> Vec<usize> {
    let mut rows: Vec<usize> = folds
        .iter()
        .enumerate()
        .filter(|&(f, _)| f != fold)
        .flat_map(|(_, idx)| idx.iter().copied())
        .collect();
    rows.sort_unstable();
    rows
}

/// Fixed k-fold split of one design matrix with every training subset
/// presorted, so many configurations can be cross-validated cheaply.
pub struct CvPlan<'a> {
    x: &'a Matrix,
    seed: u64,
    folds: Vec<Vec<usize>>,
    train: Vec<(Vec<usize>, Matrix, SortedColumns)>,
}

impl<'a> CvPlan<'a> {
    pub fn new(x: &'a Matrix, k: usize, seed: u64) -> Result<Self, EnsembleError> {
        let folds = fold_indices(x.rows(), k, seed)?;
        let train = (0..k)
            .into_par_iter()
            .map(|f| {
                let rows = training_rows(&folds, f);
                let xt = x.select_rows(&rows);
                let cols = SortedColumns::new(&xt);
                (rows, xt, cols)
            })
            .collect();
        Ok(CvPlan { x, seed, folds, train })
    }

    pub fn folds(&self) -> &[Vec<usize>] {
        &self.folds
    }

    /// Out-of-fold predictions for every row, and the RMSE of each fold.
    pub fn out_of_fold(&self, y: &[f64], config: &EnsembleConfig) -> Result<(Vec<f64>, Vec<f64>), EnsembleError> {
        config.validate()?;
        check_training_data(self.x, y)?;
        let per_fold = self
            .train
            .par_iter()
            .zip(&self.folds)
            .map(|((rows, xt, cols), held)| {
                let yt: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
                let model = fit_sorted(cols, xt, &yt, config, &mut ChaCha8Rng::seed_from_u64(config.seed));
                let pred = held
                    .iter()
                    .map(|&i| model.predict(self.x.row(i)))
                    .collect::<Result<Vec<_>, _>>()?;
                let truth: Vec<f64> = held.iter().map(|&i| y[i]).collect();
                let err = rmse(&pred, &truth)?;
                Ok((pred, err))
            })
            .collect::<Result<Vec<_>, EnsembleError>>()?;
        let mut oof = vec![0.0; y.len()];
        let mut fold_rmse = Vec::with_capacity(self.folds.len());
        for (held, (pred, err)) in self.folds.iter().zip(per_fold) {
            for (&i, p) in held.iter().zip(pred) {
                oof[i] = p;
            }
            fold_rmse.push(err);
        }
        Ok((oof, fold_rmse))
    }

    pub fn cv(&self, y: &[f64], config: &EnsembleConfig) -> Result<CvReport, EnsembleError> {
        let (_, fold_rmse) = self.out_of_fold(y, config)?;
        let k = fold_rmse.len();
        Ok(CvReport {
            k,
            seed: self.seed,
            mean_rmse: fold_rmse.iter().sum::<f64>() / k as f64,
            fold_rmse,
        })
    }
}

/// k-fold cross-validated RMSE.
pub fn kfold_cv(
    x: &Matrix,
    y: &[f64],
    config: &EnsembleConfig,
    k: usize,
    seed: u64,
) -> Result<CvReport, EnsembleError> {
    config.validate()?;
    check_training_data(x, y)?;
    CvPlan::new(x, k, seed)?.cv(y, config)
}
