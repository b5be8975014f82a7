//! The composite fatigue model: rater aggregation, eight cue regressors and
//! the affine combiner that turns cue rates into a fatigue score.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

use crate::descriptor::{self, describe_group, DescriptorError, DescriptorGroup, Standardizer};
use crate::ensemble::{
    fit_ensemble, rmse, smape, training_rows, CvPlan, EnsembleConfig, EnsembleError, EnsembleModel, Matrix, Method,
};
use crate::hyperopt::{optimize, HyperoptError, SearchSpace, Trial};
use crate::landmark_io::LandmarkSet;
use crate::roi::{extract_all, GrayImage, RegionKind, RoiError, RoiPatch};

pub const FORMAT_VERSION: u32 = 1;
pub const COEFFICIENTS: [f64; 8] = [0.037, 0.030, 0.041, 0.014, 0.022, 0.033, 0.027, 0.024];
pub const INTERCEPT: f64 = 44.41;
/// Attainable raw score range: the combiner at the all-0 and all-100 cue
/// vectors.
pub const RAW_RANGE: (f64, f64) = (44.41, 67.21);
pub const RATING_MAX: u32 = 4;
pub const RATING_SCALE: f64 = 25.0;
const NORMALIZE_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum FatigueError {
    #[error("invalid ratings: {0}")]
    Rating(String),
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("raw score {0} outside the attainable range [44.41, 67.21]")]
    OutOfRange(f64),
    #[error("model format version {found} is not supported (expected {FORMAT_VERSION})")]
    Version { found: String },
    #[error("model file mismatch: {0}")]
    Mismatch(String),
    #[error("model file is malformed: {0}")]
    Json(String),
    #[error("region extraction failed: {0}")]
    Extraction(#[from] RoiError),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Hyperopt(#[from] HyperoptError),
    #[error("only {survivors} usable faces, at least {required} needed")]
    TooFewFaces { survivors: usize, required: usize },
}

impl FatigueError {
    /// Region whose crop failed, for extraction errors.
    pub fn region(&self) -> Option<RegionKind> {
        match self {
            FatigueError::Extraction(RoiError::Crop { kind, .. }) => Some(*kind),
            FatigueError::Descriptor(DescriptorError::MissingPatch(kind)) => Some(*kind),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CueKind {
    HangingEyelid,
    RedEye,
    DarkCircle,
    PaleSkin,
    DroopyCornerMouth,
    SwollenEye,
    GlazedEye,
    Wrinkles,
}

impl CueKind {
    pub const ALL: [CueKind; 8] = [
        CueKind::HangingEyelid,
        CueKind::RedEye,
        CueKind::DarkCircle,
        CueKind::PaleSkin,
        CueKind::DroopyCornerMouth,
        CueKind::SwollenEye,
        CueKind::GlazedEye,
        CueKind::Wrinkles,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn key(self) -> &'static str {
        match self {
            CueKind::HangingEyelid => "hanging_eyelid",
            CueKind::RedEye => "red_eye",
            CueKind::DarkCircle => "dark_circle",
            CueKind::PaleSkin => "pale_skin",
            CueKind::DroopyCornerMouth => "droopy_corner_mouth",
            CueKind::SwollenEye => "swollen_eye",
            CueKind::GlazedEye => "glazed_eye",
            CueKind::Wrinkles => "wrinkles",
        }
    }

    pub fn group(self) -> DescriptorGroup {
        match self {
            CueKind::DarkCircle => DescriptorGroup::EyeBottoms,
            CueKind::PaleSkin => DescriptorGroup::Cheek,
            CueKind::DroopyCornerMouth => DescriptorGroup::Mouth,
            _ => DescriptorGroup::Eyes,
        }
    }

    pub fn coefficient(self) -> f64 {
        COEFFICIENTS[self.index()]
    }
}

impl fmt::Display for CueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for CueKind {
    type Err = FatigueError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CueKind::ALL
            .into_iter()
            .find(|c| c.key() == s)
            .ok_or_else(|| FatigueError::Rating(format!("unknown cue \"{s}\"")))
    }
}

impl Serialize for CueKind {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.key())
    }
}

impl<'de> Deserialize<'de> for CueKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(D::Error::custom)
    }
}

/// Rates of the eight cues on the 0–100 scale, indexed by [`CueKind`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CueVector([f64; 8]);

impl CueVector {
    pub fn new(values: [f64; 8]) -> Result<Self, FatigueError> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(0.0..=100.0).contains(*v)) {
            return Err(FatigueError::Rating(format!(
                "{} = {v} outside [0, 100]",
                CueKind::ALL[i]
            )));
        }
        Ok(CueVector(values))
    }

    pub fn uniform(v: f64) -> Result<Self, FatigueError> {
        Self::new([v; 8])
    }

    pub fn get(&self, cue: CueKind) -> f64 {
        self.0[cue.index()]
    }

    pub fn values(&self) -> &[f64; 8] {
        &self.0
    }
}

impl Serialize for CueVector {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = s.serialize_map(Some(8))?;
        for c in CueKind::ALL {
            map.serialize_entry(c.key(), &self.get(c))?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for CueVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let map = BTreeMap::<String, f64>::deserialize(d)?;
        let mut values = [0.0; 8];
        for c in CueKind::ALL {
            values[c.index()] = *map
                .get(c.key())
                .ok_or_else(|| D::Error::custom(format!("missing cue \"{}\"", c.key())))?;
        }
        if let Some(k) = map.keys().find(|k| k.parse::<CueKind>().is_err()) {
            return Err(D::Error::custom(format!("unknown cue \"{k}\"")));
        }
        CueVector::new(values).map_err(D::Error::custom)
    }
}

/// Per-rater integer ratings keyed by rater id, then by cue key.
pub type RaterRatings = BTreeMap<String, BTreeMap<String, Value>>;

/// Mean rating per cue across raters, mapped from 0–4 onto 0–100.
pub fn aggregate_ratings(ratings: &RaterRatings) -> Result<CueVector, FatigueError> {
    if ratings.is_empty() {
        return Err(FatigueError::Rating("no raters".into()));
    }
    let mut sums = [0.0; 8];
    for (rater, cues) in ratings {
        if let Some(k) = cues.keys().find(|k| k.parse::<CueKind>().is_err()) {
            return Err(FatigueError::Rating(format!("rater {rater}: unknown cue \"{k}\"")));
        }
        for c in CueKind::ALL {
            let v = cues
                .get(c.key())
                .ok_or_else(|| FatigueError::Rating(format!("rater {rater}: missing cue {c}")))?;
            let r = v
                .as_u64()
                .filter(|r| *r <= u64::from(RATING_MAX))
                .ok_or_else(|| FatigueError::Rating(format!("rater {rater}: {c} = {v} is not an integer in [0, 4]")))?;
            sums[c.index()] += r as f64;
        }
    }
    let n = ratings.len() as f64;
    CueVector::new(sums.map(|s| s / n * RATING_SCALE))
}

/// A training face with its aggregated ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatedFace {
    pub face_id: String,
    pub image: String,
    pub ratings: RaterRatings,
    #[serde(skip)]
    pub cues: Option<CueVector>,
}

impl RatedFace {
    pub fn truth(&self) -> CueVector {
        self.cues.expect("rated faces are aggregated on parse")
    }
}

/// Parses a JSON-Lines training manifest, aggregating each face's ratings.
pub fn parse_manifest(text: &str) -> Result<Vec<RatedFace>, FatigueError> {
    let mut out: Vec<RatedFace> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| FatigueError::Manifest { line: line_no, message };
        let mut face: RatedFace = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        face.cues = Some(aggregate_ratings(&face.ratings).map_err(|e| err(e.to_string()))?);
        if !seen.insert(face.face_id.clone()) {
            return Err(err(format!("duplicate face_id \"{}\"", face.face_id)));
        }
        out.push(face);
    }
    Ok(out)
}

/// Raw fatigue rate: the affine combination of the eight cue rates.
pub fn combine_cues(c: &CueVector) -> f64 {
    CueKind::ALL
        .iter()
        .fold(INTERCEPT, |acc, &k| acc + k.coefficient() * c.get(k))
}

/// Maps a raw score from [`RAW_RANGE`] onto `[0, 100]`.
pub fn normalize_score(raw: f64) -> Result<f64, FatigueError> {
    let (lo, hi) = RAW_RANGE;
    if !(raw >= lo - NORMALIZE_SLACK && raw <= hi + NORMALIZE_SLACK) {
        return Err(FatigueError::OutOfRange(raw));
    }
    Ok(((raw.clamp(lo, hi) - lo) / (hi - lo) * 100.0).clamp(0.0, 100.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FatigueScore {
    #[serde(flatten)]
    pub cues: CueVector,
    pub raw: f64,
    pub normalized: f64,
}

impl FatigueScore {
    pub fn from_cues(cues: CueVector) -> Result<Self, FatigueError> {
        let raw = combine_cues(&cues);
        Ok(FatigueScore {
            cues,
            raw,
            normalized: normalize_score(raw)?,
        })
    }
}

/// Dense SIFT parameters recorded in the model file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiftParams {
    pub grid_step: usize,
    pub support: usize,
    pub spatial_bins: usize,
    pub orientation_bins: usize,
    pub clamp: f64,
    pub window_sigma: f64,
}

impl SiftParams {
    pub fn current() -> Self {
        SiftParams {
            grid_step: descriptor::GRID_STEP,
            support: descriptor::SUPPORT,
            spatial_bins: descriptor::SPATIAL_BINS,
            orientation_bins: descriptor::ORIENTATION_BINS,
            clamp: descriptor::CLAMP,
            window_sigma: descriptor::WINDOW_SIGMA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueModel {
    pub cue: CueKind,
    pub group: DescriptorGroup,
    pub standardizer: Standardizer,
    pub ensemble: EnsembleModel,
}

impl CueModel {
    pub fn predict(&self, descriptor: &[f64]) -> Result<f64, FatigueError> {
        let z = self.standardizer.apply(descriptor)?;
        Ok(self.ensemble.predict(&z)?)
    }
}

/// Eight cue regressors plus the combiner, as stored in `model.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositeModel {
    pub format_version: u32,
    pub descriptor_lengths: BTreeMap<DescriptorGroup, usize>,
    pub sift: SiftParams,
    pub coefficients: [f64; 8],
    pub intercept: f64,
    pub raw_range: (f64, f64),
    pub cues: Vec<CueModel>,
}

fn current_lengths() -> BTreeMap<DescriptorGroup, usize> {
    DescriptorGroup::ALL
        .into_iter()
        .map(|g| (g, g.descriptor_len()))
        .collect()
}

impl CompositeModel {
    /// Assembles a model from eight cue models given in [`CueKind`] order.
    pub fn from_cue_models(cues: Vec<CueModel>) -> Result<Self, FatigueError> {
        let model = CompositeModel {
            format_version: FORMAT_VERSION,
            descriptor_lengths: current_lengths(),
            sift: SiftParams::current(),
            coefficients: COEFFICIENTS,
            intercept: INTERCEPT,
            raw_range: RAW_RANGE,
            cues,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), FatigueError> {
        let mismatch = |m: String| Err(FatigueError::Mismatch(m));
        if self.format_version != FORMAT_VERSION {
            return Err(FatigueError::Version {
                found: self.format_version.to_string(),
            });
        }
        if self.descriptor_lengths != current_lengths() {
            return mismatch(format!(
                "descriptor lengths {:?}, this build computes {:?}",
                self.descriptor_lengths,
                current_lengths()
            ));
        }
        if self.sift != SiftParams::current() {
            return mismatch(format!(
                "dense SIFT parameters {:?} differ from {:?}",
                self.sift,
                SiftParams::current()
            ));
        }
        if self.coefficients != COEFFICIENTS || self.intercept != INTERCEPT || self.raw_range != RAW_RANGE {
            return mismatch("combiner coefficients differ from the built-in ones".into());
        }
        if self.cues.len() != CueKind::ALL.len() {
            return mismatch(format!("{} cue models, expected 8", self.cues.len()));
        }
        for (m, cue) in self.cues.iter().zip(CueKind::ALL) {
            if m.cue != cue || m.group != cue.group() {
                return mismatch(format!(
                    "slot {} holds {} on {:?}, expected {cue}",
                    cue.index(),
                    m.cue,
                    m.group
                ));
            }
            let len = cue.group().descriptor_len();
            if m.standardizer.len() != len || m.standardizer.std.len() != len || m.ensemble.n_features != len {
                return mismatch(format!(
                    "{cue}: standardizer {} / ensemble {} features, descriptor length {len}",
                    m.standardizer.len(),
                    m.ensemble.n_features
                ));
            }
            m.ensemble
                .validate()
                .map_err(|e| FatigueError::Mismatch(format!("{cue}: {e}")))?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    /// Parses and validates a model file; the version is checked before the
    /// rest of the document is interpreted.
    pub fn from_json(text: &str) -> Result<Self, FatigueError> {
        let mut de = serde_json::Deserializer::from_str(text);
        de.disable_recursion_limit();
        let value = Value::deserialize(&mut de).map_err(|e| FatigueError::Json(e.to_string()))?;
        match value.get("format_version") {
            Some(v) if v.as_u64() == Some(u64::from(FORMAT_VERSION)) => {}
            Some(v) => return Err(FatigueError::Version { found: v.to_string() }),
            None => return Err(FatigueError::Json("missing format_version".into())),
        }
        let model = CompositeModel::deserialize(value).map_err(|e| FatigueError::Json(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn cue_model(&self, cue: CueKind) -> &CueModel {
        &self.cues[cue.index()]
    }

    pub fn predict_descriptors(&self, d: &FaceDescriptors) -> Result<FatigueScore, FatigueError> {
        let mut values = [0.0; 8];
        for cue in CueKind::ALL {
            values[cue.index()] = self.cue_model(cue).predict(d.group(cue.group()))?;
        }
        FatigueScore::from_cues(CueVector::new(values)?)
    }

    pub fn predict_patches(&self, patches: &BTreeMap<RegionKind, RoiPatch>) -> Result<FatigueScore, FatigueError> {
        self.predict_descriptors(&FaceDescriptors::from_patches(patches)?)
    }
}

/// Scores one face: crop the regions, describe them, run the cue models and
/// combine.
pub fn predict_fatigue(
    model: &CompositeModel,
    image: &GrayImage,
    landmarks: &LandmarkSet,
) -> Result<FatigueScore, FatigueError> {
    model.predict_patches(&extract_all(image, landmarks)?)
}

/// The four group descriptors of one face.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceDescriptors(BTreeMap<DescriptorGroup, Vec<f64>>);

impl FaceDescriptors {
    pub fn from_patches(patches: &BTreeMap<RegionKind, RoiPatch>) -> Result<Self, FatigueError> {
        DescriptorGroup::ALL
            .into_iter()
            .map(|g| Ok((g, describe_group(patches, g)?.values)))
            .collect::<Result<_, FatigueError>>()
            .map(FaceDescriptors)
    }

    pub fn compute(image: &GrayImage, landmarks: &LandmarkSet) -> Result<Self, FatigueError> {
        Self::from_patches(&extract_all(image, landmarks)?)
    }

    pub fn group(&self, g: DescriptorGroup) -> &[f64] {
        &self.0[&g]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub face_id: String,
    pub truth: CueVector,
    pub descriptors: FaceDescriptors,
}

/// A face excluded from training or scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reject {
    pub face_id: String,
    pub reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOptions {
    pub folds: usize,
    pub bo_budget: usize,
    pub bo_init: usize,
    pub seed: u64,
    pub space: SearchSpace,
}

impl Default for TrainingOptions {
    fn default() -> Self {
        TrainingOptions {
            folds: 5,
            bo_budget: crate::hyperopt::DEFAULT_BUDGET,
            bo_init: crate::hyperopt::DEFAULT_INIT,
            seed: 0,
            space: SearchSpace::default(),
        }
    }
}

impl TrainingOptions {
    /// Fewest faces that training accepts.
    pub fn min_faces(&self) -> usize {
        5 * self.folds
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueReport {
    pub cue: CueKind,
    pub method: Method,
    pub learn_cycles: usize,
    /// Absent for bagging, which has no shrinkage.
    pub learn_rate: Option<f64>,
    pub min_leaf_size: usize,
    pub cv_rmse: f64,
    /// CV RMSE of predicting the training-fold mean.
    pub baseline_rmse: f64,
    pub trials: Vec<Trial>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub faces: usize,
    pub rejected: usize,
    pub folds: usize,
    pub fold_seed: u64,
    pub bo_budget: usize,
    pub bo_init: usize,
    pub cues: Vec<CueReport>,
    /// Composite k-fold SMAPE of the raw score, as a fraction.
    pub composite_smape: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueEvaluation {
    pub cue: CueKind,
    pub cv_rmse: f64,
    pub baseline_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub faces: usize,
    pub folds: usize,
    pub fold_seed: u64,
    pub cues: Vec<CueEvaluation>,
    pub smape: f64,
}

struct Design {
    x: BTreeMap<DescriptorGroup, Matrix>,
    standardizers: BTreeMap<DescriptorGroup, Standardizer>,
    targets: [Vec<f64>; 8],
}

impl Design {
    fn new(examples: &[TrainingExample]) -> Result<Self, FatigueError> {
        let mut x = BTreeMap::new();
        let mut standardizers = BTreeMap::new();
        for g in DescriptorGroup::ALL {
            let raw: Vec<&[f64]> = examples.iter().map(|e| e.descriptors.group(g)).collect();
            let st = Standardizer::fit(&raw)?;
            let mut data = Vec::with_capacity(raw.len() * g.descriptor_len());
            for r in &raw {
                data.extend(st.apply(r)?);
            }
            x.insert(g, Matrix::new(raw.len(), g.descriptor_len(), data)?);
            standardizers.insert(g, st);
        }
        let targets = CueKind::ALL.map(|c| examples.iter().map(|e| e.truth.get(c)).collect());
        Ok(Design {
            x,
            standardizers,
            targets,
        })
    }

    fn x(&self, cue: CueKind) -> &Matrix {
        &self.x[&cue.group()]
    }

    fn plans(&self, k: usize, seed: u64) -> Result<BTreeMap<DescriptorGroup, CvPlan<'_>>, FatigueError> {
        let mut plans = BTreeMap::new();
        for (g, x) in &self.x {
            plans.insert(*g, CvPlan::new(x, k, seed)?);
        }
        Ok(plans)
    }
}

fn baseline_rmse(y: &[f64], folds: &[Vec<usize>]) -> Result<f64, FatigueError> {
    let mut total = 0.0;
    for (f, held) in folds.iter().enumerate() {
        let train = training_rows(folds, f);
        let mean = train.iter().map(|&i| y[i]).sum::<f64>() / train.len() as f64;
        let truth: Vec<f64> = held.iter().map(|&i| y[i]).collect();
        total += rmse(&vec![mean; held.len()], &truth)?;
    }
    Ok(total / folds.len() as f64)
}

/// Per-cue k-fold RMSE for fixed configurations and the composite SMAPE of
/// the combined raw score against the combiner applied to the ground truth.
fn cross_validate(
    design: &Design,
    plans: &BTreeMap<DescriptorGroup, CvPlan<'_>>,
    configs: &[EnsembleConfig; 8],
) -> Result<(Vec<CueEvaluation>, f64), FatigueError> {
    let n = design.targets[0].len();
    let per_cue: Vec<(Vec<f64>, f64, f64)> = CueKind::ALL
        .par_iter()
        .map(|&cue| {
            let plan = &plans[&cue.group()];
            let y = &design.targets[cue.index()];
            let (pred, fold_rmse) = plan.out_of_fold(y, &configs[cue.index()])?;
            let cv = fold_rmse.iter().sum::<f64>() / fold_rmse.len() as f64;
            Ok((pred, cv, baseline_rmse(y, plan.folds())?))
        })
        .collect::<Result<_, FatigueError>>()?;
    let mut composite_pred = Vec::with_capacity(n);
    let mut composite_truth = Vec::with_capacity(n);
    for i in 0..n {
        let p = CueVector::new(CueKind::ALL.map(|c| per_cue[c.index()].0[i]))?;
        let t = CueVector::new(CueKind::ALL.map(|c| design.targets[c.index()][i]))?;
        composite_pred.push(combine_cues(&p));
        composite_truth.push(combine_cues(&t));
    }
    let evals = CueKind::ALL
        .iter()
        .zip(&per_cue)
        .map(|(&cue, (_, cv, base))| CueEvaluation {
            cue,
            cv_rmse: *cv,
            baseline_rmse: *base,
        })
        .collect();
    Ok((evals, smape(&composite_pred, &composite_truth)?))
}

/// The search space with the leaf-size bound capped at half the smallest
/// training fold: larger leaves cannot split and all give the same model.
fn effective_space(space: &SearchSpace, n: usize, k: usize) -> SearchSpace {
    let train = n - n.div_ceil(k);
    let cap = (train / 2).max(1);
    let mut s = space.clone();
    s.min_leaf_size.1 = s.min_leaf_size.1.min(cap).max(s.min_leaf_size.0);
    s
}

fn check_examples(examples: &[TrainingExample], options: &TrainingOptions) -> Result<(), FatigueError> {
    if options.folds < 2 {
        return Err(FatigueError::Ensemble(EnsembleError::Input(format!(
            "k-fold needs k >= 2, got {}",
            options.folds
        ))));
    }
    if examples.len() < options.min_faces() {
        return Err(FatigueError::TooFewFaces {
            survivors: examples.len(),
            required: options.min_faces(),
        });
    }
    Ok(())
}

/// Tunes and fits the eight cue regressors.
///
/// Each cue's hyperparameters minimize k-fold CV RMSE (fold seed
/// `options.seed`) under Bayesian optimization; the winner is refit on every
/// example.
pub fn train_composite(
    examples: &[TrainingExample],
    rejected: usize,
    options: &TrainingOptions,
) -> Result<(CompositeModel, TrainingReport), FatigueError> {
    check_examples(examples, options)?;
    let design = Design::new(examples)?;
    let space = SearchSpace {
        model_seed: options.seed,
        ..effective_space(&options.space, examples.len(), options.folds)
    };
    let plans = design.plans(options.folds, options.seed)?;
    let tuned: Vec<(CueModel, Vec<Trial>, f64)> = CueKind::ALL
        .par_iter()
        .map(|&cue| {
            let x = design.x(cue);
            let y = &design.targets[cue.index()];
            let plan = &plans[&cue.group()];
            let result = optimize(
                |c: &EnsembleConfig| plan.cv(y, c).map(|r| r.mean_rmse),
                &space,
                options.bo_budget,
                options.bo_init.min(options.bo_budget),
                options.seed.wrapping_add(cue.index() as u64),
            )?;
            log::info!(
                "{cue}: best {:?} cv rmse {:.4}",
                result.best.config,
                result.best.objective
            );
            let ensemble = fit_ensemble(x, y, &result.best.config)?;
            let model = CueModel {
                cue,
                group: cue.group(),
                standardizer: design.standardizers[&cue.group()].clone(),
                ensemble,
            };
            Ok((model, result.history, result.best.objective))
        })
        .collect::<Result<_, FatigueError>>()?;

    let configs: [EnsembleConfig; 8] = CueKind::ALL.map(|c| tuned[c.index()].0.ensemble.config);
    let (evals, composite_smape) = cross_validate(&design, &plans, &configs)?;
    let mut cues = Vec::with_capacity(8);
    let mut models = Vec::with_capacity(8);
    for ((model, trials, _), eval) in tuned.into_iter().zip(evals) {
        let c = model.ensemble.config;
        cues.push(CueReport {
            cue: model.cue,
            method: c.method,
            learn_cycles: c.learn_cycles,
            learn_rate: (c.method == Method::LSBoost).then_some(c.learn_rate),
            min_leaf_size: c.min_leaf_size,
            cv_rmse: eval.cv_rmse,
            baseline_rmse: eval.baseline_rmse,
            trials,
        });
        models.push(model);
    }
    let report = TrainingReport {
        faces: examples.len(),
        rejected,
        folds: options.folds,
        fold_seed: options.seed,
        bo_budget: options.bo_budget,
        bo_init: options.bo_init.min(options.bo_budget),
        cues,
        composite_smape,
    };
    Ok((CompositeModel::from_cue_models(models)?, report))
}

/// Cross-validates a trained model's configurations on rated examples.
pub fn evaluate_composite(
    model: &CompositeModel,
    examples: &[TrainingExample],
    folds: usize,
    seed: u64,
) -> Result<Evaluation, FatigueError> {
    let options = TrainingOptions {
        folds,
        seed,
        ..TrainingOptions::default()
    };
    check_examples(examples, &options)?;
    let design = Design::new(examples)?;
    let configs = CueKind::ALL.map(|c| model.cue_model(c).ensemble.config);
    let (cues, smape) = cross_validate(&design, &design.plans(folds, seed)?, &configs)?;
    Ok(Evaluation {
        faces: examples.len(),
        folds,
        fold_seed: seed,
        cues,
        smape,
    })
}
