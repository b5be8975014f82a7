//! Fixtures shared by the benchmarks.

use facefatigue::descriptor::DescriptorGroup;
use facefatigue::fatigue_model::{CueKind, FaceDescriptors};
use facefatigue::synthetic::{synthetic_corpus, SyntheticFace};
use facefatigue::Matrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn faces(n: usize) -> Vec<SyntheticFace> {
    synthetic_corpus(n, 42)
}

/// Eye-group descriptors and hanging-eyelid targets for `n` synthetic faces.
pub fn eye_design(n: usize) -> (Matrix, Vec<f64>) {
    let faces = faces(n);
    let rows = faces
        .iter()
        .map(|f| {
            FaceDescriptors::compute(&f.image, &f.record.landmarks)
                .expect("synthetic faces extract")
                .group(DescriptorGroup::Eyes)
                .to_vec()
        })
        .collect();
    let y = faces.iter().map(|f| f.truth.get(CueKind::HangingEyelid)).collect();
    (Matrix::from_rows(rows).expect("rectangular"), y)
}

/// Draws from 0.5·N(45, 3²) + 0.5·N(60, 4²).
pub fn bimodal_scores(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Normal::new(45.0, 3.0).expect("valid");
    let b = Normal::new(60.0, 4.0).expect("valid");
    (0..n)
        .map(|i| {
            if i % 2 == 0 {
                a.sample(&mut rng)
            } else {
                b.sample(&mut rng)
            }
        })
        .collect()
}
