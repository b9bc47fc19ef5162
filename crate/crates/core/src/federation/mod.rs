//! Three-tier federated training.
//!
//! Vehicles train locally, regional servers personalize and aggregate
//! their members' models, and the central server personalizes regional
//! models across regions. Plain parameter averaging and local-only
//! training are provided as comparators.
//!
//! All randomness is drawn from per-(round, vehicle) or per-(round, region)
//! streams and every reduction runs in ascending id order, so results do
//! not depend on the rayon thread count.

mod baselines;
mod checkpoint;
mod metrics;
mod regional;

pub use baselines::{run_fedavg_baseline, run_fedavg_baseline_with, run_local_baseline, run_local_baseline_with};
pub use checkpoint::{write_fedrav_checkpoint, write_models};
pub use metrics::{MetricsLog, RoundMetrics};
pub use regional::{mix, region_update, run_fedrav, run_fedrav_with, Federation, FederationState, RegionOutcome, RegionState};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypernet::HyperLearnConfig;
use crate::model::{evaluate_test, Dataset, ParamVector, TrainConfig};

/// How a personalized model combines the own model with the mask-weighted
/// peer models.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mixing {
    /// `(own + sum_j mask_j * peer_j) / 2`. Keeps the parameter scale fixed.
    #[default]
    Convex,
    /// `own + sum_j mask_j * peer_j`. The parameter scale roughly doubles
    /// every time a model is personalized and trained.
    Additive,
}

impl Mixing {
    /// Factor applied to the additive combination.
    pub fn factor(self) -> f64 {
        match self {
            Mixing::Convex => 0.5,
            Mixing::Additive => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FederationConfig {
    pub rounds: usize,
    /// Fraction of each region's vehicles sampled per round.
    pub client_fraction: f64,
    pub local: TrainConfig,
    /// Regions aggregate on rounds `t` with `t % region_agg_interval == 0`.
    pub region_agg_interval: usize,
    pub hyper: HyperLearnConfig,
    /// Hidden width of the classifier.
    pub model_hidden: usize,
    pub mixing: Mixing,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            rounds: 300,
            client_fraction: 0.2,
            local: TrainConfig::default(),
            region_agg_interval: 10,
            hyper: HyperLearnConfig::default(),
            model_hidden: 32,
            mixing: Mixing::default(),
            seed: 0,
        }
    }
}

impl FederationConfig {
    /// Laptop-sized run: 60 rounds, otherwise the defaults.
    pub fn desk_scale() -> Self {
        Self {
            rounds: 60,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.client_fraction > 0.0 && self.client_fraction <= 1.0) {
            return Err(Error::config(format!(
                "client_fraction must lie in (0, 1], got {}",
                self.client_fraction
            )));
        }
        if self.region_agg_interval == 0 {
            return Err(Error::config("region_agg_interval must be positive"));
        }
        if self.model_hidden == 0 {
            return Err(Error::config("model_hidden must be positive"));
        }
        self.local.validate()?;
        self.hyper.validate()
    }

    /// Classifier layer widths for the given data.
    pub fn model_shape(&self, data: &Dataset) -> Vec<usize> {
        vec![data.dim(), self.model_hidden, data.classes()]
    }
}

/// Uniform sample without replacement of `max(1, round(fraction * n))`
/// members, returned in ascending id order.
pub fn sample_clients<R: Rng + ?Sized>(members: &[usize], fraction: f64, rng: &mut R) -> Vec<usize> {
    if members.is_empty() {
        return Vec::new();
    }
    let n = members.len();
    let count = ((fraction * n as f64).round() as usize).clamp(1, n);
    let mut picked: Vec<usize> = rand::seq::index::sample(rng, n, count)
        .into_iter()
        .map(|i| members[i])
        .collect();
    picked.sort_unstable();
    picked
}

/// Penalty-weighted average: each model is weighted by `exp(-d_i)`, where
/// `d_i` is its Euclidean distance to the plain mean, normalised to sum to
/// one. Returns the aggregate and the weights.
pub fn intra_region_aggregate(models: &[&ParamVector]) -> Result<(ParamVector, Vec<f64>)> {
    let first = models
        .first()
        .ok_or_else(|| Error::usage("cannot aggregate an empty model list"))?;
    let mut mean = ParamVector::zeros(first.shape())?;
    for m in models {
        mean.axpy(1.0, m)?;
    }
    mean.scale(1.0 / models.len() as f64);
    let dists = models
        .iter()
        .map(|m| m.distance(&mean))
        .collect::<Result<Vec<f64>>>()?;
    // Shifting by the smallest distance leaves the ratios unchanged and
    // keeps the exponentials representable. Far-off models would underflow
    // to a zero weight, so weights are floored at the smallest normal.
    let d_min = dists.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = dists
        .iter()
        .map(|d| (-(d - d_min)).exp().max(f64::MIN_POSITIVE))
        .collect();
    let total: f64 = raw.iter().sum();
    let betas: Vec<f64> = raw.iter().map(|r| r / total).collect();
    let mut out = ParamVector::zeros(first.shape())?;
    for (m, &b) in models.iter().zip(&betas) {
        out.axpy(b, m)?;
    }
    Ok((out, betas))
}

/// Test accuracy of `models[i]` on `datasets[i]` for every vehicle, with
/// the matching test losses.
pub(crate) fn per_av_accuracy<'m>(
    models: impl Iterator<Item = &'m ParamVector>,
    datasets: &[Dataset],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut accs = Vec::with_capacity(datasets.len());
    let mut losses = Vec::with_capacity(datasets.len());
    for (m, d) in models.zip(datasets) {
        let e = evaluate_test(m, d)?;
        accs.push(e.accuracy);
        losses.push(e.loss);
    }
    Ok((accs, losses))
}

pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub(crate) fn check_datasets(datasets: &[Dataset]) -> Result<()> {
    let first = datasets
        .first()
        .ok_or_else(|| Error::config("no vehicle datasets"))?;
    for (i, d) in datasets.iter().enumerate() {
        if d.dim() != first.dim() || d.classes() != first.classes() {
            return Err(Error::config(format!("dataset {i} has a different feature or class count")));
        }
        if d.n_train() == 0 || d.test_rows().is_empty() {
            return Err(Error::config(format!("dataset {i} needs non-empty train and test splits")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive, Stream};

    fn scalar(v: f64) -> ParamVector {
        ParamVector::from_values(&[1, 1], vec![v, 0.0]).unwrap()
    }

    #[test]
    fn aggregate_equal_models() {
        let m = ParamVector::from_values(&[1, 1], vec![2.0, -1.0]).unwrap();
        let (out, betas) = intra_region_aggregate(&[&m, &m, &m]).unwrap();
        assert_eq!(out, m);
        for b in betas {
            assert!((b - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn aggregate_symmetric_pair() {
        let (out, betas) = intra_region_aggregate(&[&scalar(0.0), &scalar(2.0)]).unwrap();
        assert_eq!(betas, vec![0.5, 0.5]);
        assert_eq!(out.values()[0], 1.0);
    }

    #[test]
    fn aggregate_three_models() {
        let (out, betas) = intra_region_aggregate(&[&scalar(0.0), &scalar(0.0), &scalar(3.0)]).unwrap();
        let e1 = (-1.0f64).exp();
        let e2 = (-2.0f64).exp();
        let z = 2.0 * e1 + e2;
        assert!((betas[0] - e1 / z).abs() < 1e-15);
        assert!((betas[2] - e2 / z).abs() < 1e-15);
        assert!((out.values()[0] - 3.0 * e2 / z).abs() < 1e-12);
        // 0.466087..., quoted to four decimals.
        assert!((out.values()[0] - 0.4660).abs() < 1e-4);
    }

    #[test]
    fn aggregate_survives_large_distances() {
        let (out, betas) = intra_region_aggregate(&[&scalar(0.0), &scalar(1e4)]).unwrap();
        assert_eq!(betas, vec![0.5, 0.5]);
        assert_eq!(out.values()[0], 5e3);
        assert!(intra_region_aggregate(&[]).is_err());
    }

    #[test]
    fn sampling_rules() {
        let members = [3, 8, 1, 9, 4];
        let mut rng = derive(1, Stream::Sampling, &[0]);
        assert_eq!(sample_clients(&members, 1.0, &mut rng), vec![1, 3, 4, 8, 9]);
        assert_eq!(sample_clients(&[7], 0.2, &mut rng), vec![7]);
        let a = sample_clients(&members, 0.4, &mut derive(5, Stream::Sampling, &[2]));
        let b = sample_clients(&members, 0.4, &mut derive(5, Stream::Sampling, &[2]));
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        // At least one member even when the fraction rounds to zero.
        assert_eq!(sample_clients(&members, 0.01, &mut rng).len(), 1);
    }
}
