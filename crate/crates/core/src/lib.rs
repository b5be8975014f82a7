//! Facial-cue fatigue scoring.
//!
//! The pipeline runs in three stages:
//!
//! 1. [`landmark_io`] acquires facial landmarks and demographic attributes,
//!    either from a face-analysis HTTP service or from landmark files.
//! 2. [`roi`] crops six landmark-anchored regions, [`descriptor`] turns them
//!    into dense SIFT feature vectors, and [`fatigue_model`] runs one
//!    [`ensemble`] regressor per facial cue (tuned by [`hyperopt`]) and
//!    combines the eight cue rates into a fatigue score.
//! 3. [`cohort`] fits a two-component Gaussian mixture to population scores,
//!    derives the fatigue threshold and runs pairwise proportion tests across
//!    demographic groups.

pub mod cohort;
pub mod descriptor;
pub mod ensemble;
pub mod fatigue_model;
pub mod hyperopt;
pub mod landmark_io;
pub mod roi;
pub mod stats;
pub mod synthetic;

pub use cohort::{Calibration, ScoreRecord};
pub use descriptor::{CueGroupDescriptor, DescriptorGroup, Standardizer};
pub use ensemble::{EnsembleConfig, EnsembleModel, Matrix, Method};
pub use fatigue_model::{CompositeModel, CueKind, CueVector, FatigueScore};
pub use landmark_io::{Demographics, FaceRecord, LandmarkSet};
pub use roi::{GrayImage, RegionKind, RoiPatch};
