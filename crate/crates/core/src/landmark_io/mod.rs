//! Facial landmarks and demographic attributes in one canonical schema.
//!
//! Records are exchanged as JSON-Lines, one face per line:
//!
//! ```text
//! {"face_id":"a#0","image":"a.jpg","rect":{"x":10,"y":20,"w":100,"h":120},
//!  "landmarks":{"left_eye_center":[40.0,60.0], ...},
//!  "attributes":{"age":{"value":31},"gender":{"value":"Female","confidence":95.2},
//!                "race":{"value":"Asian","confidence":90.5}},
//!  "provider":"facepp"}
//! ```
//!
//! Provider payloads are mapped onto this schema by [`normalize_provider_payload`];
//! [`detect_faces`] fetches them from an HTTP face-analysis service.

mod client;
pub mod mock;
mod provider;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::de::Error as _;
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use client::{detect_batch, detect_faces, ServiceConfig};
pub use provider::{normalize_provider_payload, ProviderFormat};

#[derive(Debug, Error)]
pub enum LandmarkError {
    #[error("line {line}: malformed JSON: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("missing required landmark \"{0}\"")]
    MissingPoint(&'static str),
    #[error("invalid record: {0}")]
    Invalid(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("authentication rejected by face service (HTTP {status})")]
    Auth { status: u16 },
    #[error("face service request failed: {message}")]
    Transport { message: String, retryable: bool },
    #[error("unreadable image: {0}")]
    Image(String),
}

impl LandmarkError {
    /// True for failures caused by the external service rather than the input.
    pub fn is_service_failure(&self) -> bool {
        matches!(self, LandmarkError::Auth { .. } | LandmarkError::Transport { .. })
    }

    fn at_line(self, line: usize) -> Self {
        match self {
            LandmarkError::MissingPoint(name) => LandmarkError::Schema {
                line,
                message: format!("missing required landmark \"{name}\""),
            },
            LandmarkError::Invalid(message) => LandmarkError::Schema { line, message },
            other => other,
        }
    }
}

/// The fifteen canonical landmark points. "Left" is the viewer's left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Landmark {
    LeftEyeCenter,
    RightEyeCenter,
    LeftEyeInner,
    LeftEyeOuter,
    LeftEyeTop,
    LeftEyeBottom,
    RightEyeInner,
    RightEyeOuter,
    RightEyeTop,
    RightEyeBottom,
    NoseTip,
    MouthLeftCorner,
    MouthRightCorner,
    MouthTop,
    MouthBottom,
}

impl Landmark {
    pub const ALL: [Landmark; 15] = [
        Landmark::LeftEyeCenter,
        Landmark::RightEyeCenter,
        Landmark::LeftEyeInner,
        Landmark::LeftEyeOuter,
        Landmark::LeftEyeTop,
        Landmark::LeftEyeBottom,
        Landmark::RightEyeInner,
        Landmark::RightEyeOuter,
        Landmark::RightEyeTop,
        Landmark::RightEyeBottom,
        Landmark::NoseTip,
        Landmark::MouthLeftCorner,
        Landmark::MouthRightCorner,
        Landmark::MouthTop,
        Landmark::MouthBottom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Landmark::LeftEyeCenter => "left_eye_center",
            Landmark::RightEyeCenter => "right_eye_center",
            Landmark::LeftEyeInner => "left_eye_inner",
            Landmark::LeftEyeOuter => "left_eye_outer",
            Landmark::LeftEyeTop => "left_eye_top",
            Landmark::LeftEyeBottom => "left_eye_bottom",
            Landmark::RightEyeInner => "right_eye_inner",
            Landmark::RightEyeOuter => "right_eye_outer",
            Landmark::RightEyeTop => "right_eye_top",
            Landmark::RightEyeBottom => "right_eye_bottom",
            Landmark::NoseTip => "nose_tip",
            Landmark::MouthLeftCorner => "mouth_left_corner",
            Landmark::MouthRightCorner => "mouth_right_corner",
            Landmark::MouthTop => "mouth_top",
            Landmark::MouthBottom => "mouth_bottom",
        }
    }

    pub fn from_name(name: &str) -> Option<Landmark> {
        Landmark::ALL.into_iter().find(|l| l.name() == name)
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// A complete, validated set of the fifteen canonical points in pixel
/// coordinates (origin top-left, y downward).
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    points: [Point; 15],
}

impl LandmarkSet {
    /// Builds a set from a lookup, failing on the first missing point and on
    /// any invariant violation.
    pub fn from_fn<F>(mut lookup: F) -> Result<Self, LandmarkError>
    where
        F: FnMut(Landmark) -> Option<Point>,
    {
        let mut points = [Point::default(); 15];
        for lm in Landmark::ALL {
            points[lm.index()] = lookup(lm).ok_or(LandmarkError::MissingPoint(lm.name()))?;
        }
        let set = LandmarkSet { points };
        set.validate()?;
        Ok(set)
    }

    /// Builds a set without validation; geometry code must still cope with
    /// degenerate inputs.
    pub fn from_points_unchecked(points: [Point; 15]) -> Self {
        LandmarkSet { points }
    }

    pub fn get(&self, lm: Landmark) -> Point {
        self.points[lm.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Landmark, Point)> + '_ {
        Landmark::ALL.into_iter().map(|lm| (lm, self.get(lm)))
    }

    /// Applies `f` to every point.
    pub fn map_points<F: FnMut(Point) -> Point>(&self, mut f: F) -> LandmarkSet {
        let mut points = self.points;
        for p in &mut points {
            *p = f(*p);
        }
        LandmarkSet { points }
    }

    pub fn inter_ocular_distance(&self) -> f64 {
        self.get(Landmark::LeftEyeCenter)
            .distance(self.get(Landmark::RightEyeCenter))
    }

    pub fn validate(&self) -> Result<(), LandmarkError> {
        for (lm, p) in self.iter() {
            if !p.x.is_finite() || !p.y.is_finite() || p.x < 0.0 || p.y < 0.0 {
                return Err(LandmarkError::Invalid(format!(
                    "landmark \"{}\" has invalid coordinates ({}, {})",
                    lm.name(),
                    p.x,
                    p.y
                )));
            }
        }
        let left = self.get(Landmark::LeftEyeCenter);
        let right = self.get(Landmark::RightEyeCenter);
        if left.x >= right.x {
            return Err(LandmarkError::Invalid(format!(
                "left_eye_center.x ({}) must be less than right_eye_center.x ({})",
                left.x, right.x
            )));
        }
        if self.inter_ocular_distance() <= 0.0 {
            return Err(LandmarkError::Invalid("inter-ocular distance is zero".into()));
        }
        Ok(())
    }
}

impl Serialize for LandmarkSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(15))?;
        for (lm, p) in self.iter() {
            map.serialize_entry(lm.name(), &[p.x, p.y])?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for LandmarkSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = BTreeMap::<String, [f64; 2]>::deserialize(deserializer)?;
        LandmarkSet::from_fn(|lm| raw.get(lm.name()).map(|&[x, y]| Point::new(x, y))).map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
}

impl Rect {
    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        self.x >= 0 && self.y >= 0 && self.x + self.w <= i64::from(width) && self.y + self.h <= i64::from(height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gender {
    Female,
    Male,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Race {
    Asian,
    AfricanAmerican,
    Caucasian,
}

impl Gender {
    pub const ALL: [Gender; 2] = [Gender::Female, Gender::Male];

    pub fn label(self) -> &'static str {
        match self {
            Gender::Female => "Female",
            Gender::Male => "Male",
        }
    }
}

impl Race {
    pub const ALL: [Race; 3] = [Race::Asian, Race::AfricanAmerican, Race::Caucasian];

    pub fn label(self) -> &'static str {
        match self {
            Race::Asian => "Asian",
            Race::AfricanAmerican => "AfricanAmerican",
            Race::Caucasian => "Caucasian",
        }
    }
}

impl FromStr for Gender {
    type Err = LandmarkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Gender::ALL
            .into_iter()
            .find(|g| g.label() == s)
            .ok_or_else(|| LandmarkError::Invalid(format!("gender label \"{s}\" is not one of: Female, Male")))
    }
}

impl FromStr for Race {
    type Err = LandmarkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Race::ALL.into_iter().find(|r| r.label() == s).ok_or_else(|| {
            LandmarkError::Invalid(format!(
                "race label \"{s}\" is not one of: Asian, AfricanAmerican, Caucasian"
            ))
        })
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl fmt::Display for Race {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Number of 10-year age bins; the last bin collects everyone aged 60+.
pub const AGE_BINS: usize = 7;

/// Demographic attributes of one face. Confidences are percentages and are
/// absent when the provider does not report them.
#[derive(Debug, Clone, PartialEq)]
pub struct Demographics {
    pub age_years: u32,
    pub gender: Gender,
    pub gender_confidence: Option<f64>,
    pub race: Race,
    pub race_confidence: Option<f64>,
}

impl Demographics {
    pub fn age_bin(&self) -> usize {
        ((self.age_years / 10) as usize).min(AGE_BINS - 1)
    }

    pub fn validate(&self) -> Result<(), LandmarkError> {
        for (what, c) in [("gender", self.gender_confidence), ("race", self.race_confidence)] {
            if let Some(c) = c {
                if !(0.0..=100.0).contains(&c) {
                    return Err(LandmarkError::Invalid(format!(
                        "{what} confidence {c} outside [0, 100]"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct AgeWire {
    value: u32,
}

#[derive(Serialize, Deserialize)]
struct LabelWire {
    value: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    confidence: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct AttributesWire {
    age: AgeWire,
    gender: LabelWire,
    race: LabelWire,
}

impl Serialize for Demographics {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        AttributesWire {
            age: AgeWire { value: self.age_years },
            gender: LabelWire {
                value: self.gender.label().to_string(),
                confidence: self.gender_confidence,
            },
            race: LabelWire {
                value: self.race.label().to_string(),
                confidence: self.race_confidence,
            },
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Demographics {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let wire = AttributesWire::deserialize(deserializer)?;
        let demo = Demographics {
            age_years: wire.age.value,
            gender: wire.gender.value.parse().map_err(D::Error::custom)?,
            gender_confidence: wire.gender.confidence,
            race: wire.race.value.parse().map_err(D::Error::custom)?,
            race_confidence: wire.race.confidence,
        };
        demo.validate().map_err(D::Error::custom)?;
        Ok(demo)
    }
}

/// One detected face.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceRecord {
    pub face_id: String,
    pub image: String,
    pub rect: Rect,
    pub landmarks: LandmarkSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attributes: Option<Demographics>,
    pub provider: String,
}

impl FaceRecord {
    pub fn validate(&self) -> Result<(), LandmarkError> {
        if self.rect.w <= 0 || self.rect.h <= 0 {
            return Err(LandmarkError::Invalid(format!(
                "face rectangle must have positive size, got {}x{}",
                self.rect.w, self.rect.h
            )));
        }
        self.landmarks.validate()?;
        if let Some(demo) = &self.attributes {
            demo.validate()?;
        }
        Ok(())
    }

    /// Serializes to one canonical JSON-Lines line (without the newline).
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("face records always serialize")
    }
}

/// Parses a canonical landmark JSON-Lines document. Blank lines are skipped.
pub fn parse_landmark_file(text: &str) -> Result<Vec<FaceRecord>, LandmarkError> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|source| LandmarkError::Parse { line: line_no, source })?;
        let record = record_from_value(value).map_err(|e| e.at_line(line_no))?;
        if !seen.insert(record.face_id.clone()) {
            return Err(LandmarkError::Schema {
                line: line_no,
                message: format!("duplicate face_id \"{}\"", record.face_id),
            });
        }
        records.push(record);
    }
    Ok(records)
}

/// Serializes records as canonical JSON-Lines.
pub fn write_landmark_file(records: &[FaceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_json_line());
        out.push('\n');
    }
    out
}

/// Decodes one canonical face object, reporting a missing landmark by name.
pub(crate) fn record_from_value(value: serde_json::Value) -> Result<FaceRecord, LandmarkError> {
    if let Some(marks) = value.get("landmarks").and_then(|v| v.as_object()) {
        if let Some(lm) = Landmark::ALL.into_iter().find(|lm| !marks.contains_key(lm.name())) {
            return Err(LandmarkError::MissingPoint(lm.name()));
        }
    }
    let record: FaceRecord = serde_json::from_value(value).map_err(|e| LandmarkError::Invalid(e.to_string()))?;
    record.validate()?;
    Ok(record)
}
