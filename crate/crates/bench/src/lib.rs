//! Deterministic fixture builders shared by the benchmark targets.

use lst2d_core::{
    init_params, quantize_model, Matrix, ModelParams, ModelSpec, QuantizedModel, SplitMix64,
};

/// A Glorot-initialized single-block model (the hardware-mapped shape).
pub fn lst1_fixture(seed: u64) -> (ModelSpec, ModelParams<f64>) {
    let spec = ModelSpec::lst1();
    let params = init_params(&spec, seed).unwrap();
    (spec, params)
}

pub fn quantized_fixture(seed: u64) -> QuantizedModel {
    let (spec, params) = lst1_fixture(seed);
    quantize_model(&spec, &params).unwrap().0
}

/// A pseudo-random 28x28 image with pixels in `[0, 1)`.
pub fn image_fixture(seed: u64) -> Matrix<f64> {
    let mut rng = SplitMix64::new(seed);
    Matrix::from_vec(28, 28, (0..28 * 28).map(|_| rng.next_f64()).collect())
}

pub fn image_batch(seed: u64, n: usize) -> Vec<Matrix<f64>> {
    (0..n)
        .map(|i| image_fixture(seed.wrapping_add(i as u64)))
        .collect()
}
