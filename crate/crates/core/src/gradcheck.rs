//! Randomized finite-difference checks of the two hand-written gradients:
//! the classifier loss and the hypernetwork mask surrogate.

use rand::Rng;

use crate::error::Result;
use crate::hypernet::{finite_diff_pseudo_grads, init_hypernet, HyperLearnConfig};
use crate::model::{finite_diff_grad, loss_and_grad, Dataset, ParamVector};
use crate::rng::{derive, SimRng, Stream};

/// Acceptance threshold on [`relative_error`].
pub const TOLERANCE: f64 = 1e-4;
const STEP: f64 = 1e-5;

/// `max_j |a_j - n_j|` over the largest magnitude in either vector.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let worst = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max);
    let scale = analytic
        .iter()
        .chain(numeric)
        .map(|v| v.abs())
        .fold(1e-12, f64::max);
    worst / scale
}

/// Worst case of one check over all trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckResult {
    pub max_rel_error: f64,
    pub worst_trial: usize,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error < TOLERANCE
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub seed: u64,
    pub trials: usize,
    pub model: CheckResult,
    pub hypernet: CheckResult,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.model.passed() && self.hypernet.passed()
    }
}

fn random_vector(rng: &mut SimRng, shape: &[usize], scale: f64) -> Result<ParamVector> {
    let mut p = ParamVector::zeros(shape)?;
    for v in p.values_mut() {
        *v = rng.random_range(-scale..scale);
    }
    Ok(p)
}

fn model_trial(seed: u64, trial: usize, flip: bool) -> Result<f64> {
    let mut rng = derive(seed, Stream::GradCheck, &[0, trial as u64]);
    let dim = rng.random_range(1..5);
    let hidden = rng.random_range(1..6);
    let classes = rng.random_range(2..5);
    let shape = [dim, hidden, classes];
    let model = random_vector(&mut rng, &shape, 1.0)?;
    let rows = rng.random_range(1..7);
    let features = (0..rows * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
    let labels = (0..rows).map(|_| rng.random_range(0..classes)).collect();
    let data = Dataset::new(dim, classes, features, labels, rows)?;
    let batch: Vec<usize> = (0..rows).collect();
    let (_, mut analytic) = loss_and_grad(&model, &data, &batch)?;
    if flip {
        analytic.scale(-1.0);
    }
    let numeric = finite_diff_grad(&model, &data, &batch, STEP)?;
    Ok(relative_error(analytic.values(), numeric.values()))
}

fn hypernet_trial(seed: u64, trial: usize, flip: bool) -> Result<f64> {
    let mut rng = derive(seed, Stream::GradCheck, &[1, trial as u64]);
    let cfg = HyperLearnConfig {
        embed_dim: rng.random_range(1..5),
        hidden_dim: rng.random_range(1..7),
        ..HyperLearnConfig::default()
    };
    let n_peers = rng.random_range(1..5);
    let hn = init_hypernet(0, (1..=n_peers).collect(), &cfg, &mut rng)?;
    let shape = [rng.random_range(1..4), rng.random_range(1..3)];
    let own = random_vector(&mut rng, &shape, 1.0)?;
    let peers = (0..n_peers)
        .map(|_| random_vector(&mut rng, &shape, 2.0))
        .collect::<Result<Vec<_>>>()?;
    let g = random_vector(&mut rng, &shape, 1.0)?;
    let peer_refs: Vec<&ParamVector> = peers.iter().collect();
    let mut analytic = hn.pseudo_grads(&peer_refs, &g)?.flat();
    if flip {
        analytic.iter_mut().for_each(|v| *v = -*v);
    }
    let numeric = finite_diff_pseudo_grads(&hn, &own, &peer_refs, &g, STEP)?.flat();
    Ok(relative_error(&analytic, &numeric))
}

fn worst(trials: usize, mut f: impl FnMut(usize) -> Result<f64>) -> Result<CheckResult> {
    let mut out = CheckResult {
        max_rel_error: 0.0,
        worst_trial: 0,
    };
    for t in 0..trials {
        let e = f(t)?;
        if e > out.max_rel_error || e.is_nan() {
            out = CheckResult {
                max_rel_error: e,
                worst_trial: t,
            };
        }
    }
    Ok(out)
}

/// Runs `trials` random instances of each check. `flip_sign` negates the
/// analytic gradients, which must make both checks fail.
pub fn run(seed: u64, trials: usize, flip_sign: bool) -> Result<GradCheckReport> {
    Ok(GradCheckReport {
        seed,
        trials,
        model: worst(trials, |t| model_trial(seed, t, flip_sign))?,
        hypernet: worst(trials, |t| hypernet_trial(seed, t, flip_sign))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_cases() {
        assert_eq!(relative_error(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(relative_error(&[0.0], &[0.0]), 0.0);
        assert!((relative_error(&[1.0, 4.0], &[1.0, 3.0]) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn suite_passes_and_flip_fails() {
        let report = run(7, 20, false).unwrap();
        assert!(report.passed(), "{report:?}");
        let flipped = run(7, 20, true).unwrap();
        assert!(!flipped.model.passed() && !flipped.hypernet.passed());
    }
}
