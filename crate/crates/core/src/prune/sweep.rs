//! Fine-tuning, regularization sweeps, and the lottery-ticket experiment.

use crate::data::{Dataset, Split};
use crate::models::{
    build_model, run_training, GraphModel, ModelInstance, ModelSpec, PlainTraining, Trained,
    TrainError,
};
use crate::nn::OptimConfig;

use super::{apply_mask, global_magnitude_prune, PruneError};

/// Default fine-tuning schedule: half the original learning rate, 50 epochs.
pub fn fine_tune_config(base: &OptimConfig, epochs: usize) -> OptimConfig {
    OptimConfig {
        lr: base.lr * 0.5,
        max_epochs: epochs,
        ..base.clone()
    }
}

/// Continues training a masked model; pruned weights stay pinned to zero.
/// Without a mask this is plain continued training.
pub fn fine_tune(
    model: ModelInstance,
    spec: &ModelSpec,
    dataset: &Dataset,
    split: &Split,
    optim: &OptimConfig,
    seed: u64,
) -> Result<Trained, TrainError> {
    run_training(
        model,
        spec,
        dataset,
        split,
        optim,
        seed,
        &mut PlainTraining::default(),
    )
}

/// The λ grid the regularization experiments run over.
pub fn default_lambda_grid() -> Vec<f64> {
    let mut grid = vec![0.0, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2];
    for i in 1..=9 {
        grid.push(i as f64 / 10.0);
    }
    grid.extend([1.0, 1e2, 1e3, 1e6]);
    grid
}

/// One trained model per λ; divergent runs are recorded, not fatal.
#[derive(Debug)]
pub struct RegRecord {
    pub lambda: f64,
    pub outcome: Result<Trained, TrainError>,
}

/// Trains a fresh model per λ with a shared seed (λ = 0 reproduces plain
/// training exactly).
pub fn regularization_sweep(
    spec: &ModelSpec,
    dataset: &Dataset,
    split: &Split,
    base: &OptimConfig,
    lambda_grid: &[f64],
    seed: u64,
) -> Vec<RegRecord> {
    lambda_grid
        .iter()
        .map(|&lambda| {
            let optim = OptimConfig {
                weight_decay: lambda as f32,
                ..base.clone()
            };
            let outcome = crate::models::train(spec, dataset, split, &optim, seed);
            RegRecord { lambda, outcome }
        })
        .collect()
}

/// Result of iterative magnitude pruning with rewinding.
#[derive(Debug, Clone, PartialEq)]
pub struct LotteryOutcome {
    /// per-round prune rate r solving (1-r)^rounds = 1-s_final
    pub per_round_rate: f64,
    /// sparse subnetwork retrained from its original initialization
    pub winning_ticket_acc: f64,
    /// dense-trained model pruned once to s_final and fine-tuned
    pub finetune_acc: f64,
    /// unpruned baseline
    pub dense_acc: f64,
}

/// Iterative magnitude pruning: train → prune r of remaining (global) →
/// rewind surviving weights to initialization → retrain.
pub fn lottery_ticket_experiment(
    spec: &ModelSpec,
    dataset: &Dataset,
    split: &Split,
    optim: &OptimConfig,
    s_final: f64,
    rounds: usize,
    seed: u64,
) -> Result<LotteryOutcome, LotteryError> {
    if rounds < 1 {
        return Err(PruneError::BadRounds.into());
    }
    if !(0.0..1.0).contains(&s_final) {
        return Err(PruneError::BadSparsity(s_final).into());
    }
    let per_round_rate = 1.0 - (1.0 - s_final).powf(1.0 / rounds as f64);

    let mut model = build_model(spec, dataset, seed)?;
    let init_state = model.state();

    let mut dense_acc = 0.0;
    for round in 1..=rounds {
        let trained = run_training(
            model,
            spec,
            dataset,
            split,
            optim,
            seed,
            &mut PlainTraining::default(),
        )?;
        if round == 1 {
            dense_acc = trained.test_metric; // round 1 trains the dense model
        }
        model = trained.model;
        // cumulative sparsity after this round
        let s_round = 1.0 - (1.0 - per_round_rate).powi(round as i32);
        let m = global_magnitude_prune(model.params(), s_round)?;
        // rewind survivors to initialization, keep pruned weights at zero
        model.load_state(&init_state).expect("layout unchanged");
        apply_mask(&mut model, &m)?;
    }
    let final_run = run_training(
        model,
        spec,
        dataset,
        split,
        optim,
        seed,
        &mut PlainTraining::default(),
    )?;
    let winning_ticket_acc = final_run.test_metric;

    // comparison arm: dense-train, one-shot prune, fine-tune
    let dense = crate::models::train(spec, dataset, split, optim, seed)?;
    let mut pruned = dense.model;
    let m = global_magnitude_prune(pruned.params(), s_final)?;
    apply_mask(&mut pruned, &m)?;
    let ft = fine_tune(
        pruned,
        spec,
        dataset,
        split,
        &fine_tune_config(optim, 50),
        seed,
    )?;
    Ok(LotteryOutcome {
        per_round_rate,
        winning_ticket_acc,
        finetune_acc: ft.test_metric,
        dense_acc,
    })
}

#[derive(Debug, thiserror::Error)]
pub enum LotteryError {
    #[error(transparent)]
    Prune(#[from] PruneError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_splits;
    use crate::data::synth::{synth_cora, CoraSynthConfig};

    fn tiny_cora() -> (Dataset, Split) {
        let cfg = CoraSynthConfig {
            num_nodes: 42,
            feature_dim: 14,
            ..Default::default()
        };
        let ds = synth_cora(&cfg, 2).unwrap();
        let split = make_splits(&ds, (0.6, 0.2, 0.2), 2).unwrap();
        (ds, split)
    }

    #[test]
    fn lambda_grid_matches_experiment_plan() {
        let g = default_lambda_grid();
        assert_eq!(g.len(), 19);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[5], 1e-2);
        assert_eq!(g[6], 0.1);
        assert_eq!(g[14], 0.9);
        assert_eq!(*g.last().unwrap(), 1e6);
    }

    #[test]
    fn lambda_zero_reproduces_plain_training_exactly() {
        let (ds, split) = tiny_cora();
        let optim = OptimConfig::default().with_epochs(8);
        let spec = ModelSpec::gcn2();
        let recs = regularization_sweep(&spec, &ds, &split, &optim, &[0.0], 9);
        let swept = recs[0].outcome.as_ref().unwrap();
        let plain = crate::models::train(&spec, &ds, &split, &optim, 9).unwrap();
        for (a, b) in swept.model.params().iter().zip(plain.model.params()) {
            assert_eq!(a.tensor.data(), b.tensor.data());
        }
        assert_eq!(swept.test_metric, plain.test_metric);
    }

    #[test]
    fn per_round_rate_closed_form() {
        // (1-r)^5 = 0.33 for s_final = 0.67
        let (ds, split) = tiny_cora();
        let optim = OptimConfig::default().with_epochs(1);
        let out =
            lottery_ticket_experiment(&ModelSpec::gcn2(), &ds, &split, &optim, 0.67, 5, 1).unwrap();
        assert!((out.per_round_rate - 0.1988).abs() < 1e-3);
        assert!(((1.0 - out.per_round_rate).powi(5) - 0.33).abs() < 1e-9);
    }

    #[test]
    fn zero_sparsity_single_round_equals_dense() {
        let (ds, split) = tiny_cora();
        let optim = OptimConfig::default().with_epochs(6);
        let out =
            lottery_ticket_experiment(&ModelSpec::gcn2(), &ds, &split, &optim, 0.0, 1, 4).unwrap();
        assert_eq!(out.winning_ticket_acc, out.dense_acc);
    }

    #[test]
    fn bad_arguments_rejected() {
        let (ds, split) = tiny_cora();
        let optim = OptimConfig::default().with_epochs(1);
        assert!(
            lottery_ticket_experiment(&ModelSpec::gcn2(), &ds, &split, &optim, 1.0, 5, 0).is_err()
        );
        assert!(
            lottery_ticket_experiment(&ModelSpec::gcn2(), &ds, &split, &optim, 0.5, 0, 0).is_err()
        );
    }

    #[test]
    fn fine_tune_preserves_zero_count() {
        let (ds, split) = tiny_cora();
        let optim = OptimConfig::default().with_epochs(6);
        let spec = ModelSpec::gcn2();
        let dense = crate::models::train(&spec, &ds, &split, &optim, 3).unwrap();
        let mut model = dense.model;
        let mask = global_magnitude_prune(model.params(), 0.5).unwrap();
        apply_mask(&mut model, &mask).unwrap();
        let zeros_before: usize = model.params().iter().map(|p| p.tensor.count_zeros()).sum();
        let ft = fine_tune(model, &spec, &ds, &split, &fine_tune_config(&optim, 10), 3).unwrap();
        let zeros_after: usize = ft.model.params().iter().map(|p| p.tensor.count_zeros()).sum();
        assert!(zeros_after >= zeros_before);
        // every masked entry is still exactly zero
        for p in ft.model.params() {
            if let Some(mask) = &p.mask {
                for (v, &keep) in p.tensor.data().iter().zip(mask) {
                    if !keep {
                        assert_eq!(*v, 0.0);
                    }
                }
            }
        }
    }
}
