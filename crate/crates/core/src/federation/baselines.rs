use rayon::prelude::*;

use super::{check_datasets, mean_std, per_av_accuracy, sample_clients, FederationConfig, MetricsLog, RoundMetrics};
use crate::error::Result;
use crate::model::{av_update, init_model, Dataset, ParamVector};
use crate::rng::{derive, Stream};

fn mean_of(losses: &[f64]) -> f64 {
    if losses.is_empty() {
        0.0
    } else {
        losses.iter().sum::<f64>() / losses.len() as f64
    }
}

fn round_metrics(round: usize, models: &[&ParamVector], datasets: &[Dataset], mean_loss: f64) -> Result<RoundMetrics> {
    let (av_accs, _) = per_av_accuracy(models.iter().copied(), datasets)?;
    let (mean_acc, std_acc) = mean_std(&av_accs);
    Ok(RoundMetrics {
        round,
        mean_acc,
        std_acc,
        region_accs: Vec::new(),
        mean_loss,
        betas: None,
        personalized_mean_acc: None,
        av_accs,
    })
}

/// Single global model. Each round a `client_fraction` share of the whole
/// fleet trains from it and the results are averaged with weights
/// proportional to training-set size. Every vehicle is evaluated with the
/// global model.
pub fn run_fedavg_baseline(datasets: &[Dataset], cfg: &FederationConfig) -> Result<(ParamVector, MetricsLog)> {
    run_fedavg_baseline_with(datasets, cfg, |_| Ok(()))
}

pub fn run_fedavg_baseline_with(
    datasets: &[Dataset],
    cfg: &FederationConfig,
    mut on_round: impl FnMut(&RoundMetrics) -> Result<()>,
) -> Result<(ParamVector, MetricsLog)> {
    cfg.validate()?;
    check_datasets(datasets)?;
    let shape = cfg.model_shape(&datasets[0]);
    let mut global = init_model(&shape, &mut derive(cfg.seed, Stream::ModelInit, &[]))?;
    let everyone: Vec<usize> = (0..datasets.len()).collect();
    let mut log = MetricsLog::default();

    for t in 0..cfg.rounds {
        let mut rng = derive(cfg.seed, Stream::Sampling, &[t as u64]);
        let picked = sample_clients(&everyone, cfg.client_fraction, &mut rng);
        let updates = picked
            .par_iter()
            .map(|&i| {
                let mut rng = derive(cfg.seed, Stream::LocalTraining, &[t as u64, i as u64]);
                av_update(&global, &datasets[i], &cfg.local, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;

        let total: usize = picked.iter().map(|&i| datasets[i].n_train()).sum();
        let mut next = ParamVector::zeros(&shape)?;
        for (&i, u) in picked.iter().zip(&updates) {
            next.axpy(datasets[i].n_train() as f64 / total as f64, &u.trained)?;
        }
        global = next;

        let losses: Vec<f64> = updates.iter().map(|u| u.train_loss).collect();
        let models = vec![&global; datasets.len()];
        let record = round_metrics(t, &models, datasets, mean_of(&losses))?;
        on_round(&record)?;
        log.records.push(record);
    }
    Ok((global, log))
}

/// Every vehicle trains alone from the shared initial model, for
/// `local.local_epochs` epochs per round.
pub fn run_local_baseline(datasets: &[Dataset], cfg: &FederationConfig) -> Result<(Vec<ParamVector>, MetricsLog)> {
    run_local_baseline_with(datasets, cfg, |_| Ok(()))
}

pub fn run_local_baseline_with(
    datasets: &[Dataset],
    cfg: &FederationConfig,
    mut on_round: impl FnMut(&RoundMetrics) -> Result<()>,
) -> Result<(Vec<ParamVector>, MetricsLog)> {
    cfg.validate()?;
    check_datasets(datasets)?;
    let shape = cfg.model_shape(&datasets[0]);
    let initial = init_model(&shape, &mut derive(cfg.seed, Stream::ModelInit, &[]))?;
    let mut models = vec![initial; datasets.len()];
    let mut log = MetricsLog::default();

    for t in 0..cfg.rounds {
        let updates = models
            .par_iter()
            .enumerate()
            .map(|(i, m)| {
                let mut rng = derive(cfg.seed, Stream::LocalTraining, &[t as u64, i as u64]);
                av_update(m, &datasets[i], &cfg.local, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let losses: Vec<f64> = updates.iter().map(|u| u.train_loss).collect();
        models = updates.into_iter().map(|u| u.trained).collect();

        let refs: Vec<&ParamVector> = models.iter().collect();
        let record = round_metrics(t, &refs, datasets, mean_of(&losses))?;
        on_round(&record)?;
        log.records.push(record);
    }
    Ok((models, log))
}
