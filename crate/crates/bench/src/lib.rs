//! Fixtures shared by the benchmarks.

use iocc::data::{generate_synthetic, sample_batch, SyntheticSpec};
use iocc::model::softmax_rows;
use iocc::trainer::{TrainConfig, TrainState};
use iocc::{Batch, EmbeddingDataset, TransportProblem};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Transport problem over softmax rows of uniform logits scaled by
/// `sharpness`.
pub fn transport_problem(n: usize, k: usize, sharpness: f64, seed: u64) -> TransportProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let logits = Array2::from_shape_simple_fn((n, k), || sharpness * rng.random_range(-1.0..1.0));
    TransportProblem::new(softmax_rows(&logits), 1.0, 1000.0, 25.0, 10, 10).expect("valid problem")
}

pub fn projections(n: usize, dim: usize, seed: u64) -> (Array2<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z1 = Array2::from_shape_simple_fn((n, dim), || rng.random_range(-1.0..1.0));
    let z2 = Array2::from_shape_simple_fn((n, dim), || rng.random_range(-1.0..1.0));
    (z1, z2)
}

/// Default hyperparameters on a 4-cluster, 2000-sample synthetic dataset,
/// plus one sampled batch.
pub fn training_setup(e_first: usize) -> (TrainConfig, EmbeddingDataset, TrainState, Batch) {
    let ds = generate_synthetic(&SyntheticSpec {
        k: 4,
        n: 2000,
        d: 32,
        center_separation: 6.0,
        noise_sigma: 1.0,
        imbalance_ratio: 1.0,
        seed: 7,
    })
    .expect("synthetic dataset");
    let config = TrainConfig {
        e_first,
        e_total: e_first.max(1),
        ..TrainConfig::default()
    };
    let mut state = TrainState::new(&config, &ds);
    if e_first == 0 {
        iocc::trainer::init_bank_from_labeled(&mut state, &ds).expect("labeled centers");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let batch = sample_batch(&ds, config.b, config.mu_b, 0.05 * ds.mean_row_norm(), &mut rng).expect("batch");
    (config, ds, state, batch)
}
