//! Bayesian optimization of ensemble hyperparameters.
//!
//! A Gaussian-process surrogate (Matérn 5/2 kernel) is fit to the trials seen
//! so far and the next configuration is the candidate, out of a seeded random
//! batch, with the largest expected improvement. Configurations are encoded
//! into `[0, 1]^4`: method as 0 (Bag) or 1 (LSBoost), cycle count and leaf size
//! linearly, learning rate on a log10 scale.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::ensemble::{EnsembleConfig, Method};
use crate::stats::{normal_cdf, normal_pdf};

pub const DEFAULT_BUDGET: usize = 30;
pub const DEFAULT_INIT: usize = 10;
pub const CANDIDATE_BATCH: usize = 2048;
pub const OBSERVATION_NOISE: f64 = 1e-6;
const LENGTH_SCALE_GRID: [f64; 9] = [0.05, 0.1, 0.2, 0.35, 0.5, 0.75, 1.0, 1.5, 2.5];

pub type Encoded = [f64; 4];

#[derive(Debug, Error, PartialEq)]
pub enum HyperoptError {
    #[error("invalid search space: {0}")]
    Space(String),
    #[error("invalid budget: {0}")]
    Budget(String),
    #[error("all {0} trials failed")]
    AllTrialsFailed(usize),
}

/// Bounds of the hyperparameter search. A dimension with equal bounds is
/// pinned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub methods: Vec<Method>,
    pub learn_cycles: (usize, usize),
    pub learn_rate: (f64, f64),
    pub min_leaf_size: (usize, usize),
    /// Bootstrap seed given to every evaluated configuration.
    pub model_seed: u64,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            methods: vec![Method::LSBoost, Method::Bag],
            learn_cycles: (10, 500),
            learn_rate: (0.001, 1.0),
            min_leaf_size: (1, 500),
            model_seed: 0,
        }
    }
}

fn scale_int(v: usize, (lo, hi): (usize, usize)) -> f64 {
    if hi == lo {
        0.5
    } else {
        (v as f64 - lo as f64) / (hi - lo) as f64
    }
}

fn unscale_int(u: f64, (lo, hi): (usize, usize)) -> usize {
    (lo as f64 + u.clamp(0.0, 1.0) * (hi - lo) as f64).round() as usize
}

impl SearchSpace {
    pub fn validate(&self) -> Result<(), HyperoptError> {
        if self.methods.is_empty() {
            return Err(HyperoptError::Space("no ensemble method allowed".into()));
        }
        let (c0, c1) = self.learn_cycles;
        let (l0, l1) = self.min_leaf_size;
        let (r0, r1) = self.learn_rate;
        if c0 < 1 || c0 > c1 || l0 < 1 || l0 > l1 {
            return Err(HyperoptError::Space(format!(
                "integer bounds must satisfy 1 <= lo <= hi, got cycles {:?} leaf {:?}",
                self.learn_cycles, self.min_leaf_size
            )));
        }
        if !(r0 > 0.0 && r0 <= r1 && r1 <= 1.0) {
            return Err(HyperoptError::Space(format!(
                "learn_rate bounds must satisfy 0 < lo <= hi <= 1, got {:?}",
                self.learn_rate
            )));
        }
        Ok(())
    }

    pub fn contains(&self, c: &EnsembleConfig) -> bool {
        self.methods.contains(&c.method)
            && (self.learn_cycles.0..=self.learn_cycles.1).contains(&c.learn_cycles)
            && (self.min_leaf_size.0..=self.min_leaf_size.1).contains(&c.min_leaf_size)
            && (c.method == Method::Bag
                || (self.learn_rate.0 * (1.0 - 1e-12)..=self.learn_rate.1 * (1.0 + 1e-12)).contains(&c.learn_rate))
    }

    pub fn encode(&self, c: &EnsembleConfig) -> Encoded {
        let rate = match c.method {
            Method::Bag => 0.5,
            Method::LSBoost => {
                let (lo, hi) = (self.learn_rate.0.log10(), self.learn_rate.1.log10());
                if hi == lo {
                    0.5
                } else {
                    ((c.learn_rate.log10() - lo) / (hi - lo)).clamp(0.0, 1.0)
                }
            }
        };
        [
            match c.method {
                Method::Bag => 0.0,
                Method::LSBoost => 1.0,
            },
            scale_int(c.learn_cycles, self.learn_cycles),
            rate,
            scale_int(c.min_leaf_size, self.min_leaf_size),
        ]
    }

    /// Maps a point of the unit hypercube to a configuration.
    pub fn decode(&self, u: Encoded) -> EnsembleConfig {
        let method = match self.methods.as_slice() {
            [only] => *only,
            _ if u[0] < 0.5 => Method::Bag,
            _ => Method::LSBoost,
        };
        let (lo, hi) = (self.learn_rate.0.log10(), self.learn_rate.1.log10());
        let learn_rate = match method {
            Method::LSBoost => 10f64
                .powf(lo + u[2].clamp(0.0, 1.0) * (hi - lo))
                .clamp(self.learn_rate.0, self.learn_rate.1),
            Method::Bag => 10f64.powf(0.5 * (lo + hi)),
        };
        EnsembleConfig {
            method,
            learn_cycles: unscale_int(u[1], self.learn_cycles),
            learn_rate,
            min_leaf_size: unscale_int(u[3], self.min_leaf_size),
            seed: self.model_seed,
        }
    }

    /// Uniform draw in the encoded space.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> EnsembleConfig {
        let u: Encoded = [rng.random(), rng.random(), rng.random(), rng.random()];
        self.decode(u)
    }
}

fn ser_objective<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

fn de_objective<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub config: EnsembleConfig,
    /// Mean CV RMSE; `+∞` (serialized as null) for failed trials.
    #[serde(serialize_with = "ser_objective", deserialize_with = "de_objective")]
    pub objective: f64,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResult {
    pub best: Trial,
    pub history: Vec<Trial>,
}

fn matern52(r: f64) -> f64 {
    let s = 5f64.sqrt() * r;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

fn distance(a: &Encoded, b: &Encoded) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Gaussian-process regression on standardized targets with a unit-amplitude
/// Matérn 5/2 kernel.
#[derive(Debug, Clone)]
pub struct GaussianProcess {
    points: Vec<Encoded>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    alpha: DVector<f64>,
    length_scale: f64,
    y_mean: f64,
    y_scale: f64,
    log_marginal_likelihood: f64,
}

impl GaussianProcess {
    pub fn fit(points: &[Encoded], values: &[f64], length_scale: f64, noise: f64) -> Option<Self> {
        let n = points.len();
        if n == 0 || n != values.len() {
            return None;
        }
        let y_mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n as f64;
        let y_scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        let y = DVector::from_iterator(n, values.iter().map(|v| (v - y_mean) / y_scale));
        let k = DMatrix::from_fn(n, n, |i, j| {
            matern52(distance(&points[i], &points[j]) / length_scale) + if i == j { noise } else { 0.0 }
        });
        let chol = k.cholesky()?;
        let alpha = chol.solve(&y);
        let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
        let lml = -0.5 * y.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        Some(GaussianProcess {
            points: points.to_vec(),
            chol,
            alpha,
            length_scale,
            y_mean,
            y_scale,
            log_marginal_likelihood: lml,
        })
    }

    /// Fits every length-scale on a fixed grid and keeps the most likely.
    pub fn fit_max_likelihood(points: &[Encoded], values: &[f64], noise: f64) -> Option<Self> {
        LENGTH_SCALE_GRID
            .iter()
            .filter_map(|&l| Self::fit(points, values, l, noise))
            .fold(None, |best: Option<Self>, gp| match best {
                Some(b) if b.log_marginal_likelihood >= gp.log_marginal_likelihood => Some(b),
                _ => Some(gp),
            })
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal_likelihood
    }

    /// Posterior mean and variance in the original target units.
    pub fn predict(&self, p: &Encoded) -> (f64, f64) {
        let k = DVector::from_iterator(
            self.points.len(),
            self.points.iter().map(|q| matern52(distance(p, q) / self.length_scale)),
        );
        let mean = k.dot(&self.alpha);
        let v = self.chol.solve(&k);
        let var = (1.0 - k.dot(&v)).max(0.0);
        (self.y_mean + self.y_scale * mean, var * self.y_scale * self.y_scale)
    }
}

/// Expected improvement below `best` for a Gaussian prediction.
pub fn expected_improvement(mean: f64, var: f64, best: f64) -> f64 {
    let sd = var.sqrt();
    let gap = best - mean;
    if sd < 1e-12 {
        return gap.max(0.0);
    }
    let z = gap / sd;
    gap * normal_cdf(z) + sd * normal_pdf(z, 0.0, 1.0)
}

#[derive(Debug, Clone)]
pub struct Proposal {
    pub config: EnsembleConfig,
    /// `None` when the history was degenerate and the proposal is random.
    pub expected_improvement: Option<f64>,
    /// Every candidate scored in this round, with its expected improvement.
    pub candidates: Vec<(EnsembleConfig, f64)>,
}

/// Chooses the next configuration to evaluate.
///
/// Falls back to a uniform random proposal when fewer than two distinct
/// objective values have been observed.
pub fn propose_next<R: Rng + ?Sized>(history: &[Trial], space: &SearchSpace, rng: &mut R) -> Proposal {
    let ok: Vec<&Trial> = history
        .iter()
        .filter(|t| !t.failed && t.objective.is_finite())
        .collect();
    let values: Vec<f64> = ok.iter().map(|t| t.objective).collect();
    let distinct = values.iter().any(|v| *v != values[0]);
    let gp = if values.len() >= 2 && distinct {
        let points: Vec<Encoded> = ok.iter().map(|t| space.encode(&t.config)).collect();
        GaussianProcess::fit_max_likelihood(&points, &values, OBSERVATION_NOISE)
    } else {
        None
    };
    let Some(gp) = gp else {
        return Proposal {
            config: space.sample(rng),
            expected_improvement: None,
            candidates: Vec::new(),
        };
    };
    let best = values.iter().copied().fold(f64::INFINITY, f64::min);
    let candidates: Vec<(EnsembleConfig, f64)> = (0..CANDIDATE_BATCH)
        .map(|_| {
            let c = space.sample(rng);
            let (m, v) = gp.predict(&space.encode(&c));
            (c, expected_improvement(m, v, best))
        })
        .collect();
    let (config, ei) = candidates
        .iter()
        .fold(None, |acc: Option<(EnsembleConfig, f64)>, &(c, ei)| match acc {
            Some((_, best_ei)) if best_ei >= ei => acc,
            _ => Some((c, ei)),
        })
        .expect("candidate batch is non-empty");
    Proposal {
        config,
        expected_improvement: Some(ei),
        candidates,
    }
}

/// Minimizes `objective` over `space` with `budget` total evaluations, the
/// first `n_init` drawn at random. A failing or non-finite evaluation is
/// recorded as a failed trial.
pub fn optimize<F, E>(
    mut objective: F,
    space: &SearchSpace,
    budget: usize,
    n_init: usize,
    seed: u64,
) -> Result<OptimizeResult, HyperoptError>
where
    F: FnMut(&EnsembleConfig) -> Result<f64, E>,
    E: std::fmt::Display,
{
    space.validate()?;
    if n_init < 2 || budget < n_init {
        return Err(HyperoptError::Budget(format!(
            "need budget >= n_init >= 2, got budget {budget}, n_init {n_init}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut history: Vec<Trial> = Vec::with_capacity(budget);
    for index in 0..budget {
        let config = if index < n_init {
            space.sample(&mut rng)
        } else {
            propose_next(&history, space, &mut rng).config
        };
        let trial = match objective(&config) {
            Ok(v) if v.is_finite() => Trial {
                index,
                config,
                objective: v,
                failed: false,
            },
            Ok(v) => {
                log::warn!("trial {index}: non-finite objective {v}");
                Trial {
                    index,
                    config,
                    objective: f64::INFINITY,
                    failed: true,
                }
            }
            Err(e) => {
                log::warn!("trial {index} failed: {e}");
                Trial {
                    index,
                    config,
                    objective: f64::INFINITY,
                    failed: true,
                }
            }
        };
        log::debug!("trial {index}: {:?} -> {}", trial.config, trial.objective);
        history.push(trial);
    }
    let best = history
        .iter()
        .filter(|t| !t.failed)
        .fold(None, |acc: Option<&Trial>, t| match acc {
            Some(b) if b.objective <= t.objective => Some(b),
            _ => Some(t),
        })
        .cloned()
        .ok_or(HyperoptError::AllTrialsFailed(budget))?;
    Ok(OptimizeResult { best, history })
}
