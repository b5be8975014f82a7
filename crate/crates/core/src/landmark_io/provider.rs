use std::str::FromStr;

use serde_json::Value;

use super::{
    record_from_value, Demographics, FaceRecord, Gender, Landmark, LandmarkError, LandmarkSet, Point, Race, Rect,
};

/// Payload shapes understood by the adapter layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProviderFormat {
    /// Already in the canonical schema.
    Canonical,
    /// Face++ style detect payload: `face_rectangle` with top/left/width/height,
    /// `landmark` with `{x, y}` objects, `attributes.ethnicity`.
    FacePlusPlus,
    /// Canonical landmark names, but each point given as a percentage of the
    /// face rectangle.
    RectPercent,
}

impl ProviderFormat {
    pub fn tag(self) -> &'static str {
        match self {
            ProviderFormat::Canonical => "canonical",
            ProviderFormat::FacePlusPlus => "facepp",
            ProviderFormat::RectPercent => "rect_percent",
        }
    }
}

impl FromStr for ProviderFormat {
    type Err = LandmarkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "canonical" => Ok(ProviderFormat::Canonical),
            "facepp" => Ok(ProviderFormat::FacePlusPlus),
            "rect_percent" => Ok(ProviderFormat::RectPercent),
            other => Err(LandmarkError::Config(format!(
                "unknown provider \"{other}\" (expected canonical, facepp or rect_percent)"
            ))),
        }
    }
}

const FACEPP_NAMES: [(Landmark, &str); 15] = [
    (Landmark::LeftEyeCenter, "left_eye_center"),
    (Landmark::RightEyeCenter, "right_eye_center"),
    (Landmark::LeftEyeInner, "left_eye_right_corner"),
    (Landmark::LeftEyeOuter, "left_eye_left_corner"),
    (Landmark::LeftEyeTop, "left_eye_top"),
    (Landmark::LeftEyeBottom, "left_eye_bottom"),
    (Landmark::RightEyeInner, "right_eye_left_corner"),
    (Landmark::RightEyeOuter, "right_eye_right_corner"),
    (Landmark::RightEyeTop, "right_eye_top"),
    (Landmark::RightEyeBottom, "right_eye_bottom"),
    (Landmark::NoseTip, "nose_tip"),
    (Landmark::MouthLeftCorner, "mouth_left_corner"),
    (Landmark::MouthRightCorner, "mouth_right_corner"),
    (Landmark::MouthTop, "mouth_upper_lip_top"),
    (Landmark::MouthBottom, "mouth_lower_lip_bottom"),
];

/// Maps one provider face object onto a [`FaceRecord`].
///
/// `provider` is the tag of the payload format; `face_id` and `image` are used
/// for formats that do not carry them. Unknown extra fields are ignored.
pub fn normalize_provider_payload(
    provider: &str,
    payload: &Value,
    face_id: &str,
    image: &str,
) -> Result<FaceRecord, LandmarkError> {
    let format: ProviderFormat = provider.parse()?;
    let record = match format {
        ProviderFormat::Canonical => record_from_value(payload.clone())?,
        ProviderFormat::FacePlusPlus => {
            let rect = provider_rect(payload)?;
            let marks = object(payload, "landmark")?;
            let landmarks = LandmarkSet::from_fn(|lm| {
                let (_, name) = FACEPP_NAMES.iter().find(|(l, _)| *l == lm)?;
                xy_object(marks.get(*name)?)
            })?;
            let attributes = match payload.get("attributes") {
                Some(attrs) => Some(facepp_demographics(attrs)?),
                None => None,
            };
            FaceRecord {
                face_id: face_id.to_string(),
                image: image.to_string(),
                rect,
                landmarks,
                attributes,
                provider: format.tag().to_string(),
            }
        }
        ProviderFormat::RectPercent => {
            let rect = provider_rect(payload)?;
            let marks = object(payload, "landmarks")?;
            let landmarks = LandmarkSet::from_fn(|lm| {
                let p = xy_object(marks.get(lm.name())?)?;
                Some(Point::new(
                    rect.x as f64 + p.x / 100.0 * rect.w as f64,
                    rect.y as f64 + p.y / 100.0 * rect.h as f64,
                ))
            })?;
            let attributes = match payload.get("attributes") {
                Some(attrs) => Some(
                    serde_json::from_value::<Demographics>(attrs.clone())
                        .map_err(|e| LandmarkError::Invalid(e.to_string()))?,
                ),
                None => None,
            };
            FaceRecord {
                face_id: face_id.to_string(),
                image: image.to_string(),
                rect,
                landmarks,
                attributes,
                provider: format.tag().to_string(),
            }
        }
    };
    record.validate()?;
    Ok(record)
}

fn object<'a>(payload: &'a Value, key: &str) -> Result<&'a serde_json::Map<String, Value>, LandmarkError> {
    payload
        .get(key)
        .and_then(Value::as_object)
        .ok_or_else(|| LandmarkError::Invalid(format!("payload has no \"{key}\" object")))
}

fn xy_object(v: &Value) -> Option<Point> {
    Some(Point::new(v.get("x")?.as_f64()?, v.get("y")?.as_f64()?))
}

fn provider_rect(payload: &Value) -> Result<Rect, LandmarkError> {
    let r = object(payload, "face_rectangle")?;
    let field = |k: &str| {
        r.get(k)
            .and_then(Value::as_i64)
            .ok_or_else(|| LandmarkError::Invalid(format!("face_rectangle.{k} missing or not an integer")))
    };
    Ok(Rect {
        x: field("left")?,
        y: field("top")?,
        w: field("width")?,
        h: field("height")?,
    })
}

fn facepp_demographics(attrs: &Value) -> Result<Demographics, LandmarkError> {
    let label = |k: &str| -> Result<(&str, Option<f64>), LandmarkError> {
        let v = attrs
            .get(k)
            .ok_or_else(|| LandmarkError::Invalid(format!("attributes.{k} missing")))?;
        let value = v
            .get("value")
            .and_then(Value::as_str)
            .ok_or_else(|| LandmarkError::Invalid(format!("attributes.{k}.value missing")))?;
        Ok((value, v.get("confidence").and_then(Value::as_f64)))
    };
    let age = attrs
        .get("age")
        .and_then(|a| a.get("value"))
        .and_then(Value::as_u64)
        .ok_or_else(|| LandmarkError::Invalid("attributes.age.value missing".into()))?;
    let (gender, gender_confidence) = label("gender")?;
    let (race, race_confidence) = label("ethnicity")?;
    let race = match race {
        "ASIAN" => Race::Asian,
        "BLACK" => Race::AfricanAmerican,
        "WHITE" => Race::Caucasian,
        other => other.parse::<Race>().map_err(|_| {
            LandmarkError::Invalid(format!(
                "race label \"{other}\" is not one of: Asian, AfricanAmerican, Caucasian \
                 (provider labels ASIAN, BLACK, WHITE)"
            ))
        })?,
    };
    let demo = Demographics {
        age_years: u32::try_from(age).map_err(|_| LandmarkError::Invalid(format!("age {age} out of range")))?,
        gender: gender.parse::<Gender>()?,
        gender_confidence,
        race,
        race_confidence,
    };
    demo.validate()?;
    Ok(demo)
}
