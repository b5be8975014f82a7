//! Population analytics over normalized fatigue scores: two-component
//! Gaussian mixture calibration, threshold classification and pairwise
//! proportion tests across demographic groups.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::landmark_io::{Demographics, Gender, Race, AGE_BINS};
use crate::stats::{chi2_quantile, normal_cdf, normal_pdf, normal_quantile};

pub const VARIANCE_FLOOR: f64 = 1e-6;
pub const EM_TOLERANCE: f64 = 1e-8;
pub const EM_MAX_ITERATIONS: usize = 500;
pub const MIN_SCORES: usize = 10;
pub const HISTOGRAM_BINS: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum CohortError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("degenerate mixture: {0}")]
    Degenerate(String),
    #[error("scores line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// One scored face.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub face_id: String,
    /// Normalized fatigue score in `[0, 100]`.
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demographics: Option<Demographics>,
}

/// Reads score lines as written by batch scoring. The score is taken from
/// `score` or `normalized`; lines carrying an `error` field are skipped and
/// counted.
pub fn parse_score_records(text: &str) -> Result<(Vec<ScoreRecord>, usize), CohortError> {
    let mut records = Vec::new();
    let mut failed = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| CohortError::Parse { line: i + 1, message };
        let v: Value = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        if v.get("error").is_some_and(|e| !e.is_null()) {
            failed += 1;
            continue;
        }
        let face_id = v
            .get("face_id")
            .and_then(Value::as_str)
            .ok_or_else(|| err("missing face_id".into()))?
            .to_string();
        let score = v
            .get("score")
            .or_else(|| v.get("normalized"))
            .and_then(Value::as_f64)
            .ok_or_else(|| err("missing numeric score".into()))?;
        if !(0.0..=100.0).contains(&score) {
            return Err(err(format!("score {score} outside [0, 100]")));
        }
        let raw = v.get("raw").and_then(Value::as_f64);
        let demographics = match v.get("demographics") {
            None | Some(Value::Null) => None,
            Some(d) => Some(Demographics::deserialize(d).map_err(|e| err(format!("demographics: {e}")))?),
        };
        records.push(ScoreRecord {
            face_id,
            score,
            raw,
            demographics,
        });
    }
    Ok((records, failed))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub mean: f64,
    pub std: f64,
}

impl Component {
    fn log_density(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.std;
        self.weight.ln() - self.std.ln() - 0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }

    /// `P(X > t)` for this component alone, unweighted.
    pub fn upper_tail(&self, t: f64) -> f64 {
        1.0 - normal_cdf((t - self.mean) / self.std)
    }
}

/// EM output for a two-component mixture, components ordered by mean.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureFit {
    pub components: [Component; 2],
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood of the initial parameters followed by one entry per
    /// EM iteration.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub components: [Component; 2],
    pub threshold: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl Calibration {
    pub fn validate(&self) -> Result<(), CohortError> {
        let [a, b] = self.components;
        let wsum = a.weight + b.weight;
        if !(a.weight > 0.0 && b.weight > 0.0 && (wsum - 1.0).abs() <= 1e-9) {
            return Err(CohortError::Input(format!(
                "component weights {} and {} must be positive and sum to 1",
                a.weight, b.weight
            )));
        }
        if a.std < VARIANCE_FLOOR || b.std < VARIANCE_FLOOR {
            return Err(CohortError::Input(
                "component standard deviation below the floor".into(),
            ));
        }
        if !(a.mean < b.mean && a.mean < self.threshold && self.threshold < b.mean) {
            return Err(CohortError::Input(format!(
                "threshold {} must lie strictly between the ordered means {} and {}",
                self.threshold, a.mean, b.mean
            )));
        }
        Ok(())
    }

    /// Analytic mixture mass above the threshold.
    pub fn tail_mass(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * c.upper_tail(self.threshold))
            .sum()
    }
}

fn moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.max(VARIANCE_FLOOR).sqrt())
}

/// One EM step: returns the log-likelihood of `c` and the updated
/// parameters.
fn em_step(xs: &[f64], c: &[Component; 2], resp: &mut [f64]) -> (f64, [Component; 2]) {
    let mut ll = 0.0;
    for (x, r) in xs.iter().zip(resp.iter_mut()) {
        let l0 = c[0].log_density(*x);
        let l1 = c[1].log_density(*x);
        let m = l0.max(l1);
        let lse = m + ((l0 - m).exp() + (l1 - m).exp()).ln();
        ll += lse;
        *r = (l0 - lse).exp();
    }
    let n = xs.len() as f64;
    let mut next = *c;
    for (k, slot) in next.iter_mut().enumerate() {
        let w = |r: f64| if k == 0 { r } else { 1.0 - r };
        let nk: f64 = resp.iter().map(|&r| w(r)).sum();
        if nk <= 0.0 {
            continue;
        }
        let mean = xs.iter().zip(resp.iter()).map(|(x, &r)| w(r) * x).sum::<f64>() / nk;
        let var = xs
            .iter()
            .zip(resp.iter())
            .map(|(x, &r)| w(r) * (x - mean).powi(2))
            .sum::<f64>()
            / nk;
        *slot = Component {
            weight: nk / n,
            mean,
            std: var.max(VARIANCE_FLOOR).sqrt(),
        };
    }
    (ll, next)
}

fn log_likelihood(xs: &[f64], c: &[Component; 2]) -> f64 {
    xs.iter()
        .map(|&x| {
            let (l0, l1) = (c[0].log_density(x), c[1].log_density(x));
            let m = l0.max(l1);
            m + ((l0 - m).exp() + (l1 - m).exp()).ln()
        })
        .sum()
}

/// Fits a two-component 1-D Gaussian mixture by EM, initialized by splitting
/// the sorted sample at its median.
pub fn fit_gmm2(scores: &[f64]) -> Result<MixtureFit, CohortError> {
    if scores.len() < MIN_SCORES {
        return Err(CohortError::Input(format!(
            "need at least {MIN_SCORES} scores, got {}",
            scores.len()
        )));
    }
    if let Some(x) = scores.iter().find(|x| !x.is_finite()) {
        return Err(CohortError::Input(format!("non-finite score {x}")));
    }
    if scores.iter().all(|&x| x == scores[0]) {
        return Err(CohortError::Degenerate("all scores are equal".into()));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = sorted.split_at(sorted.len() / 2);
    let (m0, s0) = moments(lo);
    let (m1, s1) = moments(hi);
    let mut c = [
        Component {
            weight: 0.5,
            mean: m0,
            std: s0,
        },
        Component {
            weight: 0.5,
            mean: m1,
            std: s1,
        },
    ];
    let mut resp = vec![0.0; scores.len()];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=EM_MAX_ITERATIONS {
        let (ll, next) = em_step(scores, &c, &mut resp);
        trace.push(ll);
        c = next;
        iterations = it;
        if it > 1 && ll - trace[trace.len() - 2] < EM_TOLERANCE {
            converged = true;
            break;
        }
    }
    let ll = log_likelihood(scores, &c);
    trace.push(ll);
    if !converged {
        log::warn!("EM stopped at the {EM_MAX_ITERATIONS}-iteration cap without converging");
    }
    if c[0].mean > c[1].mean {
        c.swap(0, 1);
    }
    Ok(MixtureFit {
        components: c,
        log_likelihood: ll,
        iterations,
        converged,
        trace,
    })
}

/// Point strictly between the two means where the weighted densities are
/// equal.
pub fn mixture_intersection(components: &[Component; 2]) -> Result<f64, CohortError> {
    let [a, b] = *components;
    if a.mean.partial_cmp(&b.mean) != Some(std::cmp::Ordering::Less) {
        return Err(CohortError::Degenerate(format!(
            "means {} and {} are not ordered",
            a.mean, b.mean
        )));
    }
    let (va, vb) = (a.std * a.std, b.std * b.std);
    // difference of log weighted densities: qa x² + qb x + qc
    let qa = 0.5 / vb - 0.5 / va;
    let qb = a.mean / va - b.mean / vb;
    let qc = b.mean * b.mean / (2.0 * vb) - a.mean * a.mean / (2.0 * va) + (a.weight * b.std / (b.weight * a.std)).ln();
    let roots: Vec<f64> = if (a.std - b.std).abs() <= 1e-12 * a.std.max(b.std) {
        vec![-qc / qb]
    } else {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            vec![]
        } else {
            let q = -0.5 * (qb + qb.signum() * disc.sqrt());
            let mut r = vec![q / qa];
            if q != 0.0 {
                r.push(qc / q);
            }
            r
        }
    };
    let inside: Vec<f64> = roots.into_iter().filter(|&x| x > a.mean && x < b.mean).collect();
    match inside.as_slice() {
        [x] => Ok(*x),
        [] => Err(CohortError::Degenerate(
            "one component dominates everywhere between the means".into(),
        )),
        _ => Err(CohortError::Degenerate(
            "densities cross twice between the means".into(),
        )),
    }
}

/// Fits the mixture and places the threshold at the density intersection.
pub fn calibrate(scores: &[f64]) -> Result<Calibration, CohortError> {
    let fit = fit_gmm2(scores)?;
    let threshold = mixture_intersection(&fit.components)?;
    let cal = Calibration {
        components: fit.components,
        threshold,
        log_likelihood: fit.log_likelihood,
        iterations: fit.iterations,
        converged: fit.converged,
    };
    cal.validate()?;
    Ok(cal)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub fatigued: Vec<bool>,
    pub fatigued_count: usize,
    pub total: usize,
    pub fraction: f64,
}

/// A face is fatigued when its score is strictly above the threshold.
pub fn classify(scores: &[f64], threshold: f64) -> Result<Classification, CohortError> {
    if scores.is_empty() {
        return Err(CohortError::Input("empty cohort".into()));
    }
    if !(threshold > 0.0 && threshold < 100.0) {
        return Err(CohortError::Config(format!("threshold {threshold} outside (0, 100)")));
    }
    let fatigued: Vec<bool> = scores.iter().map(|&s| s > threshold).collect();
    let fatigued_count = fatigued.iter().filter(|&&f| f).count();
    Ok(Classification {
        fatigued_count,
        total: scores.len(),
        fraction: fatigued_count as f64 / scores.len() as f64,
        fatigued,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCount {
    pub label: String,
    pub fatigued: usize,
    pub total: usize,
}

impl GroupCount {
    pub fn proportion(&self) -> f64 {
        self.fatigued as f64 / self.total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub group_i: String,
    pub group_j: String,
    pub p_i: f64,
    pub p_j: f64,
    pub n_i: usize,
    pub n_j: usize,
    pub critical_value: f64,
    pub critical_range: f64,
    /// Wald interval for `p_i − p_j`.
    pub ci_low: f64,
    pub ci_high: f64,
    pub significant: bool,
}

fn check_alpha(alpha: f64) -> Result<(), CohortError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CohortError::Config(format!("alpha {alpha} outside (0, 1)")))
    }
}

fn pair_se(p_i: f64, n_i: usize, p_j: f64, n_j: usize) -> f64 {
    (p_i * (1.0 - p_i) / n_i as f64 + p_j * (1.0 - p_j) / n_j as f64).sqrt()
}

/// Marascuilo simultaneous comparison of all pairs of `groups`.
pub fn marascuilo(groups: &[GroupCount], alpha: f64) -> Result<Vec<PairComparison>, CohortError> {
    check_alpha(alpha)?;
    if groups.len() < 2 {
        return Err(CohortError::Input(format!(
            "need at least 2 groups, got {}",
            groups.len()
        )));
    }
    if let Some(g) = groups.iter().find(|g| g.total == 0 || g.fatigued > g.total) {
        return Err(CohortError::Input(format!(
            "group {} has {} fatigued of {}",
            g.label, g.fatigued, g.total
        )));
    }
    let chi = chi2_quantile(1.0 - alpha, groups.len() as u32 - 1).sqrt();
    let z = normal_quantile(1.0 - alpha / 2.0);
    let mut out = Vec::new();
    for (i, gi) in groups.iter().enumerate() {
        for gj in &groups[i + 1..] {
            let (p_i, p_j) = (gi.proportion(), gj.proportion());
            let se = pair_se(p_i, gi.total, p_j, gj.total);
            let diff = p_i - p_j;
            let critical_value = diff.abs();
            let critical_range = chi * se;
            out.push(PairComparison {
                group_i: gi.label.clone(),
                group_j: gj.label.clone(),
                p_i,
                p_j,
                n_i: gi.total,
                n_j: gj.total,
                critical_value,
                critical_range,
                ci_low: diff - z * se,
                ci_high: diff + z * se,
                significant: critical_value > critical_range,
            });
        }
    }
    Ok(out)
}

/// Rebuilds the Wald interval of a published pair from its critical value
/// and critical range: the standard error is the range divided by
/// `sqrt(χ²_{1−α, k−1})`.
pub fn wald_ci_from_published(
    critical_value: f64,
    critical_range: f64,
    k: usize,
    alpha: f64,
) -> Result<(f64, f64), CohortError> {
    check_alpha(alpha)?;
    if k < 2 {
        return Err(CohortError::Input(format!("need k >= 2, got {k}")));
    }
    let se = critical_range / chi2_quantile(1.0 - alpha, k as u32 - 1).sqrt();
    let z = normal_quantile(1.0 - alpha / 2.0);
    Ok((critical_value - z * se, critical_value + z * se))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Age,
    Gender,
    Race,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::Age, Axis::Gender, Axis::Race];

    pub fn name(self) -> &'static str {
        match self {
            Axis::Age => "age",
            Axis::Gender => "gender",
            Axis::Race => "race",
        }
    }

    /// Ordered group labels and the group index of a record.
    fn groups(self) -> Vec<String> {
        match self {
            Axis::Age => (0..AGE_BINS)
                .map(|b| {
                    if b + 1 == AGE_BINS {
                        format!("{}+", b * 10)
                    } else {
                        format!("{}-{}", b * 10, b * 10 + 9)
                    }
                })
                .collect(),
            Axis::Gender => Gender::ALL.iter().map(|g| g.label().to_string()).collect(),
            Axis::Race => Race::ALL.iter().map(|r| r.label().to_string()).collect(),
        }
    }

    fn group_of(self, d: &Demographics) -> usize {
        match self {
            Axis::Age => d.age_bin(),
            Axis::Gender => Gender::ALL.iter().position(|g| *g == d.gender).unwrap_or(0),
            Axis::Race => Race::ALL.iter().position(|r| *r == d.race).unwrap_or(0),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = CohortError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Axis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| CohortError::Config(format!("unknown axis \"{s}\" (expected age, gender or race)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisReport {
    pub axis: Axis,
    pub groups: Vec<GroupSummary>,
    /// Records without demographics, left out of this axis.
    pub missing: usize,
    pub skipped: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub comparisons: Vec<PairComparison>,
    /// Wald interval for the first group's proportion minus the second's,
    /// when exactly two groups are present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difference_ci: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub label: String,
    pub total: usize,
    pub fatigued: usize,
    pub proportion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemographicReport {
    pub total: usize,
    pub fatigued: usize,
    pub fatigue_fraction: f64,
    pub threshold: f64,
    pub alpha: f64,
    pub axes: Vec<AxisReport>,
}

/// Fatigue proportions per demographic group and Marascuilo tables for the
/// requested axes. An axis with fewer than two nonempty groups is reported
/// with its tests skipped.
pub fn demographic_report(
    records: &[ScoreRecord],
    calibration: &Calibration,
    axes: &[Axis],
    alpha: f64,
) -> Result<DemographicReport, CohortError> {
    check_alpha(alpha)?;
    let scores: Vec<f64> = records.iter().map(|r| r.score).collect();
    let class = classify(&scores, calibration.threshold)?;
    let mut axis_reports = Vec::with_capacity(axes.len());
    for &axis in axes {
        let labels = axis.groups();
        let mut counts: Vec<GroupCount> = labels
            .iter()
            .map(|l| GroupCount {
                label: l.clone(),
                fatigued: 0,
                total: 0,
            })
            .collect();
        let mut missing = 0;
        for (r, &f) in records.iter().zip(&class.fatigued) {
            match &r.demographics {
                Some(d) => {
                    let g = &mut counts[axis.group_of(d)];
                    g.total += 1;
                    g.fatigued += usize::from(f);
                }
                None => missing += 1,
            }
        }
        counts.retain(|g| g.total > 0);
        let groups = counts
            .iter()
            .map(|g| GroupSummary {
                label: g.label.clone(),
                total: g.total,
                fatigued: g.fatigued,
                proportion: g.proportion(),
            })
            .collect();
        let report = if counts.len() < 2 {
            AxisReport {
                axis,
                groups,
                missing,
                skipped: true,
                note: Some(format!(
                    "{} nonempty {axis} group(s); pairwise tests need at least two",
                    counts.len()
                )),
                comparisons: Vec::new(),
                difference_ci: None,
            }
        } else {
            let comparisons = marascuilo(&counts, alpha)?;
            let difference_ci = (counts.len() == 2).then(|| (comparisons[0].ci_low, comparisons[0].ci_high));
            AxisReport {
                axis,
                groups,
                missing,
                skipped: false,
                note: None,
                comparisons,
                difference_ci,
            }
        };
        axis_reports.push(report);
    }
    Ok(DemographicReport {
        total: class.total,
        fatigued: class.fatigued_count,
        fatigue_fraction: class.fraction,
        threshold: calibration.threshold,
        alpha,
        axes: axis_reports,
    })
}

/// Counts per unit bin `[i, i+1)` over `[0, 100]`; 100 falls in the last bin.
pub fn histogram(scores: &[f64]) -> [usize; HISTOGRAM_BINS] {
    let mut bins = [0; HISTOGRAM_BINS];
    for &s in scores {
        let b = (s.floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1);
        bins[b] += 1;
    }
    bins
}

pub fn histogram_csv(scores: &[f64]) -> String {
    let mut out = String::from("bin_low,bin_high,count\n");
    for (i, c) in histogram(scores).iter().enumerate() {
        out.push_str(&format!("{},{},{}\n", i, i + 1, c));
    }
    out
}

/// Weighted mixture density at `x`.
pub fn mixture_density(components: &[Component; 2], x: f64) -> f64 {
    components.iter().map(|c| c.weight * normal_pdf(x, c.mean, c.std)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Binomial, Distribution, Normal};

    fn sample_mixture(c: &[Component; 2], n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d: Vec<Normal<f64>> = c.iter().map(|c| Normal::new(c.mean, c.std).unwrap()).collect();
        (0..n)
            .map(|_| {
                if rng.random::<f64>() < c[0].weight {
                    d[0].sample(&mut rng)
                } else {
                    d[1].sample(&mut rng)
                }
            })
            .collect()
    }

    fn comp(weight: f64, mean: f64, std: f64) -> Component {
        Component { weight, mean, std }
    }

    fn bisect(c: &[Component; 2]) -> f64 {
        let f = |x: f64| {
            c[0].weight * normal_pdf(x, c[0].mean, c[0].std) - c[1].weight * normal_pdf(x, c[1].mean, c[1].std)
        };
        let (mut lo, mut hi) = (c[0].mean, c[1].mean);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (f(mid) > 0.0) == (f(lo) > 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn recovers_known_mixture() {
        let truth = [comp(0.5, 45.0, 3.0), comp(0.5, 60.0, 4.0)];
        let xs = sample_mixture(&truth, 50_000, 11);
        let fit = fit_gmm2(&xs).unwrap();
        for (f, t) in fit.components.iter().zip(&truth) {
            assert!((f.mean - t.mean).abs() < 0.5, "{f:?}");
            assert!((f.std - t.std).abs() < 0.3, "{f:?}");
            assert!((f.weight - t.weight).abs() < 0.05, "{f:?}");
        }
        assert!(fit.trace.windows(2).all(|w| w[1] - w[0] >= -1e-9));
        assert!(fit.converged);
    }

    #[test]
    fn mirrored_data_gives_symmetric_means() {
        let half = sample_mixture(&[comp(0.5, 40.0, 3.0), comp(0.5, 42.0, 2.0)], 2000, 5);
        let xs: Vec<f64> = half.iter().flat_map(|&x| [x, 100.0 - x]).collect();
        let fit = fit_gmm2(&xs).unwrap();
        let [a, b] = fit.components;
        assert!((a.mean + b.mean - 100.0).abs() < 0.2, "{a:?} {b:?}");
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(fit_gmm2(&[3.0; 20]), Err(CohortError::Degenerate(_))));
        assert!(matches!(fit_gmm2(&[1.0, 2.0]), Err(CohortError::Input(_))));
    }

    #[test]
    fn intersection_examples() {
        let t = mixture_intersection(&[comp(0.5, 0.0, 1.0), comp(0.5, 10.0, 1.0)]).unwrap();
        assert!((t - 5.0).abs() < 1e-12);
        let c = [comp(0.5, 0.0, 1.0), comp(0.5, 6.0, 2.0)];
        let t = mixture_intersection(&c).unwrap();
        assert!((t - bisect(&c)).abs() < 1e-9);
        assert!(t > 0.0 && t < 6.0);
        let dominated = [comp(0.001, 0.0, 5.0), comp(0.999, 1.0, 5.0)];
        assert!(matches!(
            mixture_intersection(&dominated),
            Err(CohortError::Degenerate(_))
        ));
    }

    #[test]
    fn calibration_threshold_matches_bisection() {
        let xs = sample_mixture(&[comp(0.5, 45.0, 3.0), comp(0.5, 60.0, 4.0)], 50_000, 2);
        let cal = calibrate(&xs).unwrap();
        assert!((cal.threshold - bisect(&cal.components)).abs() < 1e-6);
        cal.validate().unwrap();
    }

    #[test]
    fn classification_examples() {
        assert_eq!(classify(&[10.0, 20.0], 55.0).unwrap().fraction, 0.0);
        assert_eq!(classify(&[54.0, 56.0], 55.0).unwrap().fraction, 0.5);
        assert_eq!(classify(&[55.0], 55.0).unwrap().fatigued_count, 0);
        assert!(classify(&[], 55.0).is_err());
        assert!(matches!(classify(&[1.0], 0.0), Err(CohortError::Config(_))));
    }

    #[test]
    fn tail_fraction_matches_analytic_mass() {
        let cal = Calibration {
            components: [comp(0.7, 45.0, 3.0), comp(0.3, 60.0, 4.0)],
            threshold: 0.0,
            log_likelihood: 0.0,
            iterations: 0,
            converged: true,
        };
        let threshold = mixture_intersection(&cal.components).unwrap();
        let cal = Calibration { threshold, ..cal };
        let xs = sample_mixture(&cal.components, 100_000, 8);
        let frac = classify(&xs, threshold).unwrap().fraction;
        assert!((frac - cal.tail_mass()).abs() < 0.01, "{frac} vs {}", cal.tail_mass());
    }

    fn g(label: &str, fatigued: usize, total: usize) -> GroupCount {
        GroupCount {
            label: label.into(),
            fatigued,
            total,
        }
    }

    #[test]
    fn marascuilo_hand_example() {
        let rows = marascuilo(&[g("a", 50, 100), g("b", 30, 100), g("c", 40, 100)], 0.05).unwrap();
        assert_eq!(rows.len(), 3);
        let ab = &rows[0];
        assert!((ab.critical_value - 0.2).abs() < 1e-12);
        assert!((ab.critical_range - 0.1660).abs() < 1e-3, "{}", ab.critical_range);
        assert!(ab.significant);
        assert!(ab.ci_low < 0.2 && 0.2 < ab.ci_high);
    }

    #[test]
    fn marascuilo_equal_and_invalid() {
        let rows = marascuilo(&[g("f", 30, 100), g("m", 30, 100)], 0.05).unwrap();
        assert_eq!(rows[0].critical_value, 0.0);
        assert!(!rows[0].significant);
        assert!((rows[0].ci_low + rows[0].ci_high).abs() < 1e-15);
        assert!(marascuilo(&[g("a", 0, 0), g("b", 1, 2)], 0.05).is_err());
        assert!(marascuilo(&[g("a", 1, 2)], 0.05).is_err());
        assert!(matches!(
            marascuilo(&[g("a", 1, 2), g("b", 1, 2)], 1.0),
            Err(CohortError::Config(_))
        ));
    }

    #[test]
    fn marascuilo_is_symmetric() {
        let ab = &marascuilo(&[g("a", 13, 70), g("b", 40, 90)], 0.05).unwrap()[0];
        let ba = &marascuilo(&[g("b", 40, 90), g("a", 13, 70)], 0.05).unwrap()[0];
        assert_eq!(ab.critical_value, ba.critical_value);
        assert_eq!(ab.critical_range, ba.critical_range);
    }

    #[test]
    fn critical_range_decreases_with_group_size() {
        for p in [0.1, 0.3, 0.5] {
            let mut prev = f64::INFINITY;
            for n in (10..2000).step_by(37) {
                let fatigued = (p * n as f64).round() as usize;
                let rows = marascuilo(&[g("a", fatigued, n), g("b", 20, 100), g("c", 50, 120)], 0.05).unwrap();
                let r = rows[0].critical_range;
                if (fatigued as f64 / n as f64 - p).abs() < 1e-12 {
                    assert!(r < prev, "p {p} n {n}");
                    prev = r;
                }
            }
        }
    }

    #[test]
    fn published_rows_reconstruct() {
        let (lo, hi) = wald_ci_from_published(0.019, 0.013, 7, 0.05).unwrap();
        assert!(
            (lo * 100.0 - 1.19).abs() <= 0.1 && (hi * 100.0 - 2.63).abs() <= 0.1,
            "{lo} {hi}"
        );
        let (lo, hi) = wald_ci_from_published(0.021, 0.020, 7, 0.05).unwrap();
        assert!(
            (lo * 100.0 - 1.05).abs() <= 0.15 && (hi * 100.0 - 3.24).abs() <= 0.15,
            "{lo} {hi}"
        );
    }

    #[test]
    fn planted_proportion_gap_is_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let (bi, bj) = (Binomial::new(5000, 0.35).unwrap(), Binomial::new(5000, 0.25).unwrap());
        let mut hits = 0;
        for _ in 0..100 {
            let rows = marascuilo(
                &[
                    g("i", bi.sample(&mut rng) as usize, 5000),
                    g("j", bj.sample(&mut rng) as usize, 5000),
                ],
                0.05,
            )
            .unwrap();
            let r = &rows[0];
            hits += usize::from(r.significant && r.ci_low <= 0.10 && 0.10 <= r.ci_high);
        }
        assert!(hits >= 93, "{hits}/100");
    }

    fn demo(age: u32, gender: Gender) -> Demographics {
        Demographics {
            age_years: age,
            gender,
            gender_confidence: None,
            race: Race::Asian,
            race_confidence: None,
        }
    }

    #[test]
    fn report_axes() {
        let records: Vec<ScoreRecord> = (0..40)
            .map(|i| ScoreRecord {
                face_id: format!("f{i}"),
                score: if i % 3 == 0 { 80.0 } else { 20.0 },
                raw: None,
                demographics: Some(demo(20 + i, if i % 2 == 0 { Gender::Female } else { Gender::Male })),
            })
            .collect();
        let cal = Calibration {
            components: [comp(0.6, 20.0, 5.0), comp(0.4, 80.0, 5.0)],
            threshold: 50.0,
            log_likelihood: 0.0,
            iterations: 1,
            converged: true,
        };
        let rep = demographic_report(&records, &cal, &Axis::ALL, 0.05).unwrap();
        assert_eq!(rep.total, 40);
        assert_eq!(rep.fatigued, 14);
        let gender = &rep.axes[1];
        assert_eq!(gender.groups.len(), 2);
        assert!(gender.difference_ci.is_some());
        let race = &rep.axes[2];
        assert!(race.skipped && race.note.is_some());
        let age = &rep.axes[0];
        assert_eq!(
            age.groups.iter().map(|g| g.label.as_str()).collect::<Vec<_>>(),
            ["20-29", "30-39", "40-49", "50-59"]
        );
        assert_eq!(age.comparisons.len(), 6);

        let bare: Vec<ScoreRecord> = records
            .iter()
            .map(|r| ScoreRecord {
                demographics: None,
                ..r.clone()
            })
            .collect();
        let rep = demographic_report(&bare, &cal, &[Axis::Gender], 0.05).unwrap();
        assert!(rep.axes[0].skipped);
        assert_eq!(rep.axes[0].missing, 40);
    }

    #[test]
    fn score_lines() {
        let text = concat!(
            "{\"face_id\":\"a\",\"normalized\":12.5,\"raw\":47.26}\n",
            "{\"face_id\":\"b\",\"error\":\"left_eye: outside\"}\n",
            "{\"face_id\":\"c\",\"score\":99.0,\"demographics\":{\"age\":{\"value\":31},\"gender\":{\"value\":\"Male\"},\"race\":{\"value\":\"Caucasian\"}}}\n"
        );
        let (recs, failed) = parse_score_records(text).unwrap();
        assert_eq!((recs.len(), failed), (2, 1));
        assert_eq!(recs[0].raw, Some(47.26));
        assert_eq!(recs[1].demographics.as_ref().unwrap().age_bin(), 3);
        assert!(matches!(
            parse_score_records("{\"face_id\":\"x\",\"score\":101}"),
            Err(CohortError::Parse { line: 1, .. })
        ));
        let line = serde_json::to_string(&recs[1]).unwrap();
        assert_eq!(parse_score_records(&line).unwrap().0[0], recs[1]);
    }

    #[test]
    fn histogram_bins() {
        let h = histogram(&[0.0, 0.99, 1.0, 99.5, 100.0]);
        assert_eq!((h[0], h[1], h[99]), (2, 1, 2));
        assert_eq!(h.iter().sum::<usize>(), 5);
        let csv = histogram_csv(&[50.5]);
        assert_eq!(csv.lines().count(), 101);
        assert!(csv.contains("\n50,51,1\n"));
    }

    proptest! {
        #[test]
        fn classify_is_permutation_invariant(mut xs in proptest::collection::vec(0.0..100.0f64, 1..60), t in 1.0..99.0f64, seed in any::<u64>()) {
            let before = classify(&xs, t).unwrap().fraction;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..xs.len()).rev() {
                xs.swap(i, rng.random_range(0..=i));
            }
            prop_assert_eq!(classify(&xs, t).unwrap().fraction, before);
        }

        #[test]
        fn threshold_is_bracketed(w in 0.2..0.8f64, m1 in 0.0..50.0f64, gap in 5.0..40.0f64, s1 in 1.0..5.0f64, s2 in 1.0..5.0f64) {
            let c = [comp(w, m1, s1), comp(1.0 - w, m1 + gap, s2)];
            if let Ok(t) = mixture_intersection(&c) {
                prop_assert!(t > c[0].mean && t < c[1].mean);
                prop_assert!((t - bisect(&c)).abs() < 1e-6);
            }
        }

        #[test]
        fn em_log_likelihood_is_monotone(seed in 0u64..1000, gap in 2.0..20.0f64) {
            let xs = sample_mixture(&[comp(0.4, 40.0, 3.0), comp(0.6, 40.0 + gap, 4.0)], 400, seed);
            let fit = fit_gmm2(&xs).unwrap();
            prop_assert!(fit.trace.windows(2).all(|w| w[1] - w[0] >= -1e-9));
        }
    }
}
