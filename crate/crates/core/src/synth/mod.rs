//! Synthetic fleets with label-skewed, spatially correlated local data.
//!
//! Cities are points on a plane; vehicles scatter around their city. Each
//! city owns a base subset of `round(rho * classes)` labels and every
//! vehicle in it draws its samples from that subset, possibly with one
//! label swapped for an outside one. Features are unit-variance Gaussian
//! blobs around fixed class prototypes.

mod format;

pub use format::{load, save, MANIFEST_FILE};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::VehicleProfile;
use crate::model::Dataset;
use crate::rng::{derive, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_avs: usize,
    pub n_cities: usize,
    pub classes: usize,
    pub feat_dim: usize,
    /// Fraction of all labels held by each vehicle.
    pub rho: f64,
    pub samples_per_av: usize,
    pub test_fraction: f64,
    /// Standard deviation of vehicle positions around their city centre.
    pub cluster_spread: f64,
    /// Side length of the square the city centres are drawn from.
    pub plane_size: f64,
    /// Scale of the class prototypes; larger means easier classification.
    pub prototype_scale: f64,
    /// Probability that a vehicle swaps one label of its city's subset.
    pub swap_probability: f64,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_avs: 20,
            n_cities: 4,
            classes: 10,
            feat_dim: 8,
            rho: 0.2,
            samples_per_av: 200,
            test_fraction: 0.2,
            cluster_spread: 5.0,
            plane_size: 100.0,
            prototype_scale: 0.5,
            swap_probability: 0.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Number of labels every vehicle holds.
    pub fn labels_per_av(&self) -> usize {
        (self.rho * self.classes as f64).round() as usize
    }

    pub fn n_test(&self) -> usize {
        (self.test_fraction * self.samples_per_av as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_avs", self.n_avs),
            ("n_cities", self.n_cities),
            ("classes", self.classes),
            ("feat_dim", self.feat_dim),
            ("samples_per_av", self.samples_per_av),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if self.n_cities > self.n_avs {
            return Err(Error::config("n_cities exceeds n_avs; some city would be empty"));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::config(format!("rho must lie in (0, 1], got {}", self.rho)));
        }
        let r = self.labels_per_av();
        if r == 0 || r > self.classes {
            return Err(Error::config(format!(
                "rho * classes rounds to {r} labels per vehicle; need 1..={}",
                self.classes
            )));
        }
        if self.samples_per_av < r {
            return Err(Error::config(format!(
                "samples_per_av ({}) cannot cover {r} labels",
                self.samples_per_av
            )));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::config("test_fraction must lie in (0, 1)"));
        }
        let n_test = self.n_test();
        if n_test == 0 || n_test >= self.samples_per_av {
            return Err(Error::config(format!(
                "test_fraction leaves {n_test} of {} samples for testing",
                self.samples_per_av
            )));
        }
        for (name, v) in [
            ("cluster_spread", self.cluster_spread),
            ("plane_size", self.plane_size),
            ("prototype_scale", self.prototype_scale),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if !(0.0..=1.0).contains(&self.swap_probability) {
            return Err(Error::config("swap_probability must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub config: SynthConfig,
    pub fleet: Vec<VehicleProfile>,
    pub datasets: Vec<Dataset>,
    /// `classes x feat_dim`, row-major.
    pub class_prototypes: Vec<Vec<f64>>,
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Draws `r` distinct labels in ascending order.
fn label_subset<R: Rng + ?Sized>(classes: usize, r: usize, rng: &mut R) -> Vec<usize> {
    let mut all: Vec<usize> = (0..classes).collect();
    all.shuffle(rng);
    let mut subset = all[..r].to_vec();
    subset.sort_unstable();
    subset
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let mut rng = derive(cfg.seed, Stream::Synth, &[]);
    let r = cfg.labels_per_av();

    let class_prototypes: Vec<Vec<f64>> = (0..cfg.classes)
        .map(|_| (0..cfg.feat_dim).map(|_| cfg.prototype_scale * normal(&mut rng)).collect())
        .collect();
    let centers: Vec<[f64; 2]> = (0..cfg.n_cities)
        .map(|_| {
            [
                rng.random_range(0.0..cfg.plane_size),
                rng.random_range(0.0..cfg.plane_size),
            ]
        })
        .collect();
    let city_labels: Vec<Vec<usize>> = (0..cfg.n_cities)
        .map(|_| label_subset(cfg.classes, r, &mut rng))
        .collect();

    let n_test = cfg.n_test();
    let n_train = cfg.samples_per_av - n_test;
    let mut fleet = Vec::with_capacity(cfg.n_avs);
    let mut datasets = Vec::with_capacity(cfg.n_avs);
    for id in 0..cfg.n_avs {
        let city = id % cfg.n_cities;
        let coords = [
            centers[city][0] + cfg.cluster_spread * normal(&mut rng),
            centers[city][1] + cfg.cluster_spread * normal(&mut rng),
        ];

        let mut labels_here = city_labels[city].clone();
        if r < cfg.classes && rng.random_bool(cfg.swap_probability) {
            let outside: Vec<usize> = (0..cfg.classes).filter(|c| !labels_here.contains(c)).collect();
            let slot = rng.random_range(0..r);
            labels_here[slot] = outside[rng.random_range(0..outside.len())];
            labels_here.sort_unstable();
        }

        // Balanced over the vehicle's labels, then shuffled.
        let mut labels: Vec<usize> = (0..cfg.samples_per_av).map(|j| labels_here[j % r]).collect();
        labels.shuffle(&mut rng);
        let mut features = Vec::with_capacity(cfg.samples_per_av * cfg.feat_dim);
        for &y in &labels {
            features.extend(class_prototypes[y].iter().map(|c| c + normal(&mut rng)));
        }
        let data = Dataset::new(cfg.feat_dim, cfg.classes, features, labels, n_train)?;
        fleet.push(VehicleProfile {
            id,
            coords,
            label_counts: data.label_histogram(),
            city,
        });
        datasets.push(data);
    }

    Ok(SynthOutput {
        config: cfg.clone(),
        fleet,
        datasets,
        class_prototypes,
    })
}
