//! Properties that need the real MNIST files on disk. Each test skips with
//! a loud message when the data directory is absent.

mod common;

use std::fs;

use lst2d_core::mnist::{
    self, parse_idx_images, parse_idx_labels, serialize_idx_images, serialize_idx_labels, Dataset,
};
use lst2d_core::{evaluate, train, ModelParams, ModelSpec, TrainConfig};

#[test]
fn official_files_round_trip_byte_identical() {
    let Some(dir) = common::data_dir() else {
        common::skip_no_data("official_files_round_trip_byte_identical");
        return;
    };
    for name in [mnist::TRAIN_IMAGES, mnist::TEST_IMAGES] {
        let bytes = fs::read(dir.join(name)).unwrap();
        let parsed = parse_idx_images(&bytes).unwrap();
        assert_eq!(
            serialize_idx_images(&parsed),
            bytes,
            "{name} did not round-trip"
        );
    }
    for name in [mnist::TRAIN_LABELS, mnist::TEST_LABELS] {
        let bytes = fs::read(dir.join(name)).unwrap();
        let parsed = parse_idx_labels(&bytes).unwrap();
        assert_eq!(
            serialize_idx_labels(&parsed),
            bytes,
            "{name} did not round-trip"
        );
    }
}

#[test]
fn splits_have_expected_shape_and_counts() {
    let Some(dir) = common::data_dir() else {
        common::skip_no_data("splits_have_expected_shape_and_counts");
        return;
    };
    let train_imgs = parse_idx_images(&fs::read(dir.join(mnist::TRAIN_IMAGES)).unwrap()).unwrap();
    let test_imgs = parse_idx_images(&fs::read(dir.join(mnist::TEST_IMAGES)).unwrap()).unwrap();
    assert_eq!(
        (train_imgs.count, train_imgs.rows, train_imgs.cols),
        (60_000, 28, 28)
    );
    assert_eq!(
        (test_imgs.count, test_imgs.rows, test_imgs.cols),
        (10_000, 28, 28)
    );

    let train: Dataset<f32> = mnist::load_train(&dir).unwrap();
    let test: Dataset<f32> = mnist::load_test(&dir).unwrap();
    assert_eq!(train.len(), 60_000);
    assert_eq!(test.len(), 10_000);
    for img in test.images.iter().take(50) {
        assert_eq!((img.rows(), img.cols()), (28, 28));
    }
}

#[test]
fn zero_params_predict_the_lowest_class_everywhere() {
    let Some(dir) = common::data_dir() else {
        common::skip_no_data("zero_params_predict_the_lowest_class_everywhere");
        return;
    };
    let test: Dataset<f64> = mnist::load_test(&dir).unwrap();
    let zeros_in_test = test.labels.iter().filter(|&&l| l == 0).count();
    // the official test split has exactly 980 zero digits
    assert_eq!(zeros_in_test, 980);

    let spec = ModelSpec::lst1();
    let params = ModelParams::<f64>::zeros(&spec).unwrap();
    let acc = evaluate(&spec, &params, &test).unwrap();
    assert!((acc - zeros_in_test as f64 / test.len() as f64).abs() < 1e-15);
}

#[test]
fn loss_falls_and_accuracy_climbs_on_a_small_subset() {
    let Some(dir) = common::data_dir() else {
        common::skip_no_data("loss_falls_and_accuracy_climbs_on_a_small_subset");
        return;
    };
    let full: Dataset<f64> = mnist::load_train(&dir).unwrap();
    let subset = Dataset {
        images: full.images[..1000].to_vec(),
        labels: full.labels[..1000].to_vec(),
    };
    let cfg = TrainConfig {
        epochs: 15,
        batch_size: 100,
        seed: 7,
        ..TrainConfig::default()
    };
    let (_, history) = train(&ModelSpec::lst1(), &subset, &subset, &cfg, |_| {}).unwrap();

    let first = &history[0];
    let last = history.last().unwrap();
    assert!(
        last.mean_train_loss < 0.5 * first.mean_train_loss,
        "loss barely moved: {} -> {}",
        first.mean_train_loss,
        last.mean_train_loss
    );
    assert!(
        last.test_accuracy > first.test_accuracy && last.test_accuracy > 0.8,
        "subset accuracy {} after {} epochs",
        last.test_accuracy,
        last.epoch
    );
    // epoch numbering is 1-based and contiguous
    assert_eq!(
        history.iter().map(|h| h.epoch).collect::<Vec<_>>(),
        (1..=15).collect::<Vec<_>>()
    );
}
