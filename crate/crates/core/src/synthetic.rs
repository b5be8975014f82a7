//! Planted-signal face corpus for tests and benchmarks.
//!
//! Each face is a flat gray canvas on which every cue's rated value is drawn
//! into its region as the extent of a dark or bright band, so region mean
//! intensity is linear in the rating. Faces differ in landmark jitter and in
//! global brightness and contrast, which dense SIFT ignores.

use std::fs;
use std::io;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::{json, Value};

use crate::fatigue_model::{aggregate_ratings, CueKind, CueVector, RaterRatings};
use crate::landmark_io::{Demographics, FaceRecord, Gender, Landmark, LandmarkSet, Point, Race, Rect};
use crate::roi::{region_boxes, GrayImage, RegionBox, RegionKind};

pub const WIDTH: usize = 240;
pub const HEIGHT: usize = 290;
pub const RATERS: usize = 3;
const SUPERSAMPLE: usize = 4;
const RATER_NOISE: f64 = 0.35;

pub struct SyntheticFace {
    pub record: FaceRecord,
    pub image: GrayImage,
    pub ratings: RaterRatings,
    pub truth: CueVector,
}

impl SyntheticFace {
    pub fn manifest_line(&self) -> String {
        json!({"face_id": self.record.face_id, "image": self.record.image, "ratings": self.ratings}).to_string()
    }
}

fn landmarks<R: Rng>(rng: &mut R) -> LandmarkSet {
    let mut j = |p: (f64, f64)| Point::new(p.0 + rng.random_range(-2.0..2.0), p.1 + rng.random_range(-2.0..2.0));
    let pts = Landmark::ALL.map(|lm| match lm {
        Landmark::LeftEyeCenter => (80.0, 110.0),
        Landmark::RightEyeCenter => (160.0, 110.0),
        Landmark::LeftEyeInner => (100.0, 111.0),
        Landmark::LeftEyeOuter => (60.0, 111.0),
        Landmark::LeftEyeTop => (80.0, 102.0),
        Landmark::LeftEyeBottom => (80.0, 118.0),
        Landmark::RightEyeInner => (140.0, 111.0),
        Landmark::RightEyeOuter => (180.0, 111.0),
        Landmark::RightEyeTop => (160.0, 102.0),
        Landmark::RightEyeBottom => (160.0, 118.0),
        Landmark::NoseTip => (120.0, 180.0),
        Landmark::MouthLeftCorner => (92.0, 240.0),
        Landmark::MouthRightCorner => (148.0, 240.0),
        Landmark::MouthTop => (120.0, 228.0),
        Landmark::MouthBottom => (120.0, 254.0),
    });
    let pts = pts.map(&mut j);
    LandmarkSet::from_fn(|lm| Some(pts[Landmark::ALL.iter().position(|l| *l == lm).unwrap()]))
        .expect("template landmarks are valid")
}

/// Pattern value (0 dark, 1 bright, 0.5 background) inside one region at
/// box-relative coordinates `(u, v)`.
fn pattern(kind: RegionKind, u: f64, v: f64, cues: &CueVector) -> f64 {
    let s = |c: CueKind| cues.get(c) / 100.0;
    let eye = |top: CueKind, side: CueKind| {
        if u < 0.5 {
            if v < 0.15 + 0.7 * s(top) {
                0.15
            } else {
                0.5
            }
        } else if (u - 0.5) * 2.0 < 0.15 + 0.7 * s(side) {
            0.85
        } else {
            0.5
        }
    };
    match kind {
        RegionKind::LeftEye => eye(CueKind::HangingEyelid, CueKind::RedEye),
        RegionKind::RightEye => eye(CueKind::SwollenEye, CueKind::GlazedEye),
        RegionKind::LeftEyeBottom | RegionKind::RightEyeBottom => {
            if v < 0.1 + 0.8 * s(CueKind::DarkCircle) {
                0.2
            } else {
                0.5
            }
        }
        RegionKind::Cheek => {
            if u < 0.1 + 0.8 * s(CueKind::PaleSkin) {
                0.8
            } else {
                0.5
            }
        }
        RegionKind::Mouth => {
            if v > 0.9 - 0.8 * s(CueKind::DroopyCornerMouth) {
                0.2
            } else {
                0.5
            }
        }
    }
}

fn render(boxes: &[(RegionKind, RegionBox)], cues: &CueVector, brightness: f64, contrast: f64) -> GrayImage {
    let step = 1.0 / SUPERSAMPLE as f64;
    GrayImage::from_fn(WIDTH, HEIGHT, |px, py| {
        let mut acc = 0.0;
        for sy in 0..SUPERSAMPLE {
            for sx in 0..SUPERSAMPLE {
                let x = px as f64 + (sx as f64 + 0.5) * step;
                let y = py as f64 + (sy as f64 + 0.5) * step;
                // later boxes are painted over earlier ones
                acc += boxes
                    .iter()
                    .rev()
                    .find(|(_, b)| x >= b.x0 && x < b.x1 && y >= b.y0 && y < b.y1)
                    .map_or(0.5, |(k, b)| {
                        pattern(*k, (x - b.x0) / b.width(), (y - b.y0) / b.height(), cues)
                    });
            }
        }
        let v = acc / (SUPERSAMPLE * SUPERSAMPLE) as f64;
        (0.5 + brightness + contrast * (v - 0.5)).clamp(0.0, 1.0)
    })
}

/// Draws one face. Wrinkle ratings repeat the hanging-eyelid ratings, so the
/// eight cues fit the six drawn signals.
pub fn synthetic_face<R: Rng>(face_id: &str, rng: &mut R) -> SyntheticFace {
    let noise = Normal::new(0.0, RATER_NOISE).expect("valid sd");
    let latent: [f64; 8] = std::array::from_fn(|_| rng.random_range(0.0..4.0));
    let mut ratings = RaterRatings::new();
    for r in 0..RATERS {
        let mut per_cue: [u64; 8] =
            std::array::from_fn(|i| (latent[i] + noise.sample(rng)).round().clamp(0.0, 4.0) as u64);
        per_cue[CueKind::Wrinkles.index()] = per_cue[CueKind::HangingEyelid.index()];
        ratings.insert(
            format!("r{}", r + 1),
            CueKind::ALL
                .iter()
                .map(|c| (c.key().to_string(), Value::from(per_cue[c.index()])))
                .collect(),
        );
    }
    let truth = aggregate_ratings(&ratings).expect("generated ratings are valid");

    let lm = landmarks(rng);
    let boxes = region_boxes(&lm).expect("template geometry is valid");
    let order = [
        RegionKind::Cheek,
        RegionKind::Mouth,
        RegionKind::LeftEyeBottom,
        RegionKind::RightEyeBottom,
        RegionKind::LeftEye,
        RegionKind::RightEye,
    ];
    let painted: Vec<(RegionKind, RegionBox)> = order.iter().map(|k| (*k, boxes[k])).collect();
    let image = render(
        &painted,
        &truth,
        rng.random_range(-0.1..0.1),
        rng.random_range(0.8..1.2),
    );

    let attributes = Demographics {
        age_years: rng.random_range(18..75),
        gender: if rng.random::<bool>() {
            Gender::Female
        } else {
            Gender::Male
        },
        gender_confidence: Some(rng.random_range(60.0..100.0f64).round()),
        race: Race::ALL[rng.random_range(0..Race::ALL.len())],
        race_confidence: Some(rng.random_range(60.0..100.0f64).round()),
    };
    let record = FaceRecord {
        face_id: face_id.to_string(),
        image: format!("{face_id}.png"),
        rect: Rect {
            x: 30,
            y: 50,
            w: 180,
            h: 230,
        },
        landmarks: lm,
        attributes: Some(attributes),
        provider: "synthetic".into(),
    };
    SyntheticFace {
        record,
        image,
        ratings,
        truth,
    }
}

/// `n` faces named `face-000`, `face-001`, ….
pub fn synthetic_corpus(n: usize, seed: u64) -> Vec<SyntheticFace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| synthetic_face(&format!("face-{i:03}"), &mut rng))
        .collect()
}

/// Writes `images/*.png`, `landmarks.jsonl` and `manifest.jsonl` into `dir`.
pub fn write_corpus(dir: &Path, faces: &[SyntheticFace]) -> io::Result<()> {
    let images = dir.join("images");
    fs::create_dir_all(&images)?;
    let mut landmarks = String::new();
    let mut manifest = String::new();
    for f in faces {
        f.image
            .to_luma8()
            .save(images.join(&f.record.image))
            .map_err(io::Error::other)?;
        landmarks.push_str(&f.record.to_json_line());
        landmarks.push('\n');
        manifest.push_str(&f.manifest_line());
        manifest.push('\n');
    }
    fs::write(dir.join("landmarks.jsonl"), landmarks)?;
    fs::write(dir.join("manifest.jsonl"), manifest)
}
