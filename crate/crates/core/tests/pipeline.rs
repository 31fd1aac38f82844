//! Cross-module flows through the public API.

use gapent::capacity;
use gapent::classify::{self, gap_feasible};
use gapent::featuregen::{
    plant_labeled_dataset, Envelope, Generator, HeavyTailSpec, LabeledDataset, PlantOptions,
};
use gapent::harness::{self, Experiment, ExperimentConfig, SCHEMA_VERSION};
use gapent::spectral;
use gapent::{NormSpec, RngStream};

#[test]
fn planted_data_trains_to_at_least_the_planted_margin() {
    let gen = Generator::HeavyTail(HeavyTailSpec::magnitude(8, 4.0, 1.5, Envelope::Exact));
    for seed in 0..5 {
        let opts = PlantOptions {
            random_offset: true,
            ..Default::default()
        };
        let data =
            plant_labeled_dataset(&gen, 60, 0.4, opts, &mut RngStream::new(seed, 0)).unwrap();
        if data.labels().iter().all(|&y| y == data.labels()[0]) {
            continue;
        }
        let t = classify::max_margin_train(&data).unwrap();
        assert!(t.margin >= 0.4 - 1e-6, "seed {seed}: {}", t.margin);
        assert_eq!(
            classify::empirical_risk(&t.classifier, &data, false).unwrap(),
            0.0
        );
        let planted = data.planted_classifier().unwrap();
        assert_eq!(classify::empirical_risk(planted, &data, true).unwrap(), 0.0);
    }
}

#[test]
fn dataset_csv_survives_a_round_trip() {
    let gen = Generator::HeavyTail(HeavyTailSpec::sparse(30, 1.0, 2.0));
    let data = plant_labeled_dataset(
        &gen,
        25,
        0.0,
        PlantOptions::default(),
        &mut RngStream::new(1, 2),
    )
    .unwrap();
    let mut buf = Vec::new();
    data.write_csv(&mut buf).unwrap();
    let back = LabeledDataset::read_csv(buf.as_slice(), NormSpec::l2(), "mem").unwrap();
    assert_eq!(back.points(), data.points());
    assert_eq!(back.labels(), data.labels());
}

#[test]
fn diffusion_features_feed_the_counter() {
    let g = spectral::erdos_renyi(10, 0.4, &mut RngStream::new(3, 0)).unwrap();
    let emb = spectral::diffusion_map(&g, 2).unwrap();
    let pts: Vec<&[f64]> = emb.features.iter().take(6).map(|f| f.as_slice()).collect();
    let wide = capacity::count_dichotomies(&pts, 10.0, NormSpec::l2()).unwrap();
    let narrow = capacity::count_dichotomies(&pts, 0.0, NormSpec::l2()).unwrap();
    assert_eq!(wide, 2);
    assert!(narrow >= wide && narrow <= 64);
    let all_pos = vec![1i8; pts.len()];
    assert!(
        gap_feasible(&pts, &all_pos, 10.0, NormSpec::l2())
            .unwrap()
            .feasible
    );
}

#[test]
fn experiment_outputs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        seed: 11,
        workers: None,
        output: None,
        experiment: Experiment::default_for("vc_search").unwrap(),
    };
    let a = harness::run(&cfg, Some(1)).unwrap();
    let b = harness::run(&cfg, Some(4)).unwrap();
    let da = harness::write_run(&cfg, &a, &dir.path().join("a")).unwrap();
    let db = harness::write_run(&cfg, &b, &dir.path().join("b")).unwrap();
    assert_eq!(
        std::fs::read(da.join("results.csv")).unwrap(),
        std::fs::read(db.join("results.csv")).unwrap()
    );
    assert_eq!(
        std::fs::read(da.join("config.json")).unwrap(),
        std::fs::read(db.join("config.json")).unwrap()
    );
    let back =
        ExperimentConfig::from_json(&std::fs::read_to_string(da.join("config.json")).unwrap())
            .unwrap();
    assert_eq!(back, cfg);
}
