#[path = "support/fixtures.rs"]
mod fixtures;

use fixtures::noise_dataset;
use wbc_core::data::{compute_standardization, stratified_split, synthetic};
use wbc_core::ensemble::{
    combine, train_members, CombinerMode, EnsembleModel, Member, MemberConfig, MemberId,
    TensorSet, TrainConfig, TrunkWidths,
};
use wbc_core::optim::OptimizerConfig;
use wbc_core::tensor::argmax;
use wbc_core::Error;

#[test]
fn every_member_memorizes_fifty_images() {
    let side = 16;
    let ds = noise_dataset(50, side, 4);
    let stats = compute_standardization(&ds).unwrap();
    let set = TensorSet::from_dataset(&ds, &stats);
    let configs: Vec<MemberConfig> = MemberId::ALL
        .iter()
        .map(|&id| MemberConfig::new(id, side, side, TrunkWidths { conv: [8, 16, 32], dense: 64 }))
        .collect();
    let config = TrainConfig {
        optimizer: OptimizerConfig::adam(),
        epochs: 200,
        batch_size: 10,
        seed: 1,
        stop_at_eval_accuracy: Some(0.98),
    };
    for (member, run) in train_members(&configs, &set, &set, &config).unwrap() {
        let last = run.epochs.last().unwrap();
        assert!(
            last.eval_accuracy >= 0.98,
            "member {} reached {} after {} epochs",
            member.config.id,
            last.eval_accuracy,
            run.epochs.len()
        );
    }
}

#[test]
fn weighted_ensemble_tracks_its_best_member() {
    let side = 16;
    let ds = synthetic::smear_dataset(&[40; 5], side, side, 2);
    let (train, test) = stratified_split(&ds, 0.6, 3).unwrap();
    let (fit, val) = stratified_split(&train, 0.75, 4).unwrap();
    let stats = compute_standardization(&fit).unwrap();
    let (fit_set, val_set, test_set) = (
        TensorSet::from_dataset(&fit, &stats),
        TensorSet::from_dataset(&val, &stats),
        TensorSet::from_dataset(&test, &stats),
    );
    let configs: Vec<MemberConfig> = MemberId::ALL
        .iter()
        .map(|&id| MemberConfig::new(id, side, side, TrunkWidths { conv: [4, 8, 16], dense: 32 }))
        .collect();
    let config = TrainConfig {
        epochs: 4,
        batch_size: 16,
        seed: 9,
        ..TrainConfig::default()
    };
    let members: Vec<Member> = train_members(&configs, &fit_set, &val_set, &config)
        .unwrap()
        .into_iter()
        .map(|(m, _)| m)
        .collect();
    let mut model = EnsembleModel::new(members, stats, CombinerMode::Weighted, 9);
    model.fit_weights(&val_set).unwrap();
    let accuracy = |m: &EnsembleModel| {
        let probs = m.predict_set(&test_set).unwrap();
        let hits = probs
            .iter()
            .zip(&test_set.labels)
            .filter(|(p, &y)| argmax(p) == y)
            .count();
        hits as f64 / test_set.len() as f64
    };
    let best = model
        .member_accuracies(&test_set)
        .unwrap()
        .into_iter()
        .fold(0.0, f64::max);
    assert!(accuracy(&model) >= best - 0.02, "{} vs {best}", accuracy(&model));

    // uniform weights reduce to the plain average
    for x in test_set.inputs.iter().take(20) {
        let member_probs = model.member_probabilities(x).unwrap();
        let uniform = combine(&member_probs, CombinerMode::Weighted, Some(&[1.0 / 3.0; 3])).unwrap();
        let average = combine(&member_probs, CombinerMode::Average, None).unwrap();
        for (a, b) in uniform.iter().zip(&average) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn training_is_deterministic() {
    let ds = synthetic::smear_dataset(&[6; 5], 8, 8, 5);
    let stats = compute_standardization(&ds).unwrap();
    let set = TensorSet::from_dataset(&ds, &stats);
    let configs = vec![MemberConfig::new(MemberId::B, 8, 8, TrunkWidths { conv: [2, 4, 4], dense: 8 })];
    let config = TrainConfig {
        epochs: 3,
        batch_size: 7,
        seed: 2,
        ..TrainConfig::default()
    };
    let run = || {
        let (m, r) = train_members(&configs, &set, &set, &config).unwrap().remove(0);
        let params: Vec<Vec<f32>> = m.graph.params().map(|p| p.values().to_vec()).collect();
        let losses: Vec<(f64, f64)> = r.epochs.iter().map(|e| (e.train_loss, e.eval_loss)).collect();
        (params, losses)
    };
    assert_eq!(run(), run());
}

#[test]
fn diverging_training_aborts_with_context() {
    let ds = synthetic::smear_dataset(&[4; 5], 8, 8, 5);
    let stats = compute_standardization(&ds).unwrap();
    let set = TensorSet::from_dataset(&ds, &stats);
    let configs = vec![MemberConfig::new(MemberId::A, 8, 8, TrunkWidths { conv: [2, 4, 4], dense: 8 })];
    let config = TrainConfig {
        optimizer: OptimizerConfig::sgd().with_learning_rate(1e30),
        epochs: 5,
        batch_size: 4,
        seed: 2,
        stop_at_eval_accuracy: None,
    };
    match train_members(&configs, &set, &set, &config) {
        Err(Error::NonFiniteLoss { epoch, .. }) => assert!(epoch >= 1),
        other => panic!("expected a non-finite loss, got {:?}", other.map(|v| v.len())),
    }
}
