//! Small clustered task shared by the integration tests.

#![allow(dead_code)]

use slonn_core::confidence::{
    build_calibration, train_confidence_tables, CalibrationCurve, ConfidenceConfig, Correctness,
    DistanceKind, KGrid,
};
use slonn_core::importance::{train_activator, ActivatorBundle, ActivatorConfig, HashChoice};
use slonn_core::model::{
    fit_class_mean_readout, gen_synthetic_dataset, gen_synthetic_model, LabeledDataset, MlpModel,
    SyntheticDataSpec,
};

pub struct Fixture {
    pub model: MlpModel,
    pub train: LabeledDataset,
    pub held: LabeledDataset,
    pub test: LabeledDataset,
    /// Node tables plus cross-entropy confidence tables.
    pub bundle: ActivatorBundle,
    pub curve: CalibrationCurve,
}

/// dim 32, 4 classes, 1500 train / 300 held-out / 300 test, 32-64-64-4.
pub fn fixture(seed: u64) -> Fixture {
    let spec = SyntheticDataSpec {
        n: 2100,
        dim: 32,
        n_clusters: 8,
        n_classes: 4,
        noise_sigma: 0.1,
    };
    let all = gen_synthetic_dataset(seed, &spec).unwrap();
    let train = all.slice(0..1500);
    let held = all.slice(1500..1800);
    let test = all.slice(1800..2100);
    let model = gen_synthetic_model(seed, &[32, 64, 64, 4]).unwrap();
    let model = fit_class_mean_readout(&model, &train).unwrap();
    let mut bundle = train_activator(
        &model,
        train.features(),
        &ActivatorConfig {
            k: 4,
            l: 3,
            seed,
            ..Default::default()
        },
    )
    .unwrap();
    let tables = train_confidence_tables(
        &model,
        &bundle,
        train.features(),
        &KGrid::default(),
        &ConfidenceConfig {
            k: 4,
            l: 3,
            seed,
            hash: HashChoice::FreeHash,
            distance: DistanceKind::CrossEntropy,
        },
    )
    .unwrap();
    let curve = build_calibration(&model, &bundle, &tables, &held, Correctness::Labels).unwrap();
    bundle.confidence = Some(tables);
    Fixture {
        model,
        train,
        held,
        test,
        bundle,
        curve,
    }
}
