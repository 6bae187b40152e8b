//! Checks shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

pub mod grad;
pub mod oracle;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use dsqa_core::numerics::Matrix;

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

pub fn unit_rows(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    dsqa_core::model::l2_normalize_rows(&random_matrix(rng, rows, cols, 1.0))
}

/// Labels on a 0.1 grid in [1, 7] so that ties and threshold boundaries occur.
pub fn grid_labels(rng: &mut ChaCha8Rng, b: usize) -> Vec<f64> {
    let src: Vec<f64> = (0..b).map(|_| f64::from(rng.random_range(10..=70)) / 10.0).collect();
    src.iter().chain(&src).copied().collect()
}
