//! Oracles shared by the integration suites and the acceptance runner.
#![allow(dead_code)]

use rand::Rng;

use regionfl::federation::intra_region_aggregate;
use regionfl::geo::{mean_site, partition, rwd, vehicle_sites, PartitionConfig, Site, VehicleProfile};
use regionfl::hypernet::{init_hypernet, HyperLearnConfig};
use regionfl::model::ParamVector;
use regionfl::rng::{derive, SimRng, Stream};

/// Textbook k-means++ and Lloyd on planar points, written independently of
/// the library: squared-distance seeding by cumulative walk, nearest centre
/// with lowest-index ties, empty clusters refilled from the farthest member
/// of the largest cluster, stop when the assignment repeats.
pub fn reference_kmeans(points: &[[f64; 2]], k: usize, max_iters: usize, rng: &mut SimRng) -> (Vec<usize>, Vec<[f64; 2]>) {
    let n = points.len();
    let d = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).hypot(a[1] - b[1]);
    let mut taken = vec![false; n];
    let first = rng.random_range(0..n);
    taken[first] = true;
    let mut centres = vec![points[first]];
    while centres.len() < k {
        let w: Vec<f64> = (0..n)
            .map(|i| {
                if taken[i] {
                    0.0
                } else {
                    centres.iter().map(|&c| d(points[i], c).powi(2)).fold(f64::INFINITY, f64::min)
                }
            })
            .collect();
        let total: f64 = w.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            let mut last = 0;
            for i in 0..n {
                if w[i] > 0.0 {
                    acc += w[i];
                    last = i;
                    if acc > target {
                        pick = Some(i);
                        break;
                    }
                }
            }
            pick.unwrap_or(last)
        } else {
            let free: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        taken[pick] = true;
        centres.push(points[pick]);
    }

    let mut prev: Option<Vec<usize>> = None;
    let mut assign = vec![0; n];
    for _ in 0..max_iters {
        for (i, p) in points.iter().enumerate() {
            let mut best = (0, f64::INFINITY);
            for (c, &centre) in centres.iter().enumerate() {
                let dist = d(*p, centre);
                if dist < best.1 {
                    best = (c, dist);
                }
            }
            assign[i] = best.0;
        }
        loop {
            let sizes: Vec<usize> = (0..k).map(|c| assign.iter().filter(|&&a| a == c).count()).collect();
            let Some(empty) = sizes.iter().position(|&s| s == 0) else { break };
            let mut donor = 0;
            for c in 0..k {
                if sizes[c] > sizes[donor] {
                    donor = c;
                }
            }
            if sizes[donor] < 2 {
                break;
            }
            let mut far = None;
            for i in 0..n {
                if assign[i] == donor {
                    let dist = d(points[i], centres[donor]);
                    if far.is_none_or(|(_, fd)| dist > fd) {
                        far = Some((i, dist));
                    }
                }
            }
            let (i, _) = far.unwrap();
            assign[i] = empty;
            centres[empty] = points[i];
        }
        if prev.as_ref() == Some(&assign) {
            break;
        }
        for (c, centre) in centres.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&i| assign[i] == c).collect();
            let mut sum = [0.0, 0.0];
            for &i in &members {
                sum[0] += points[i][0];
                sum[1] += points[i][1];
            }
            *centre = [sum[0] / members.len() as f64, sum[1] / members.len() as f64];
        }
        prev = Some(assign.clone());
    }
    (assign, centres)
}

/// Every assignment of six vehicles to two non-empty regions, with mean
/// centroids, is checked for being a fixed point of nearest-centroid
/// assignment; the partition output must be one of them.
/// Six vehicles in two cities with random positions and label counts.
pub fn six_vehicle_fleet(rng: &mut SimRng) -> Vec<VehicleProfile> {
    (0..6)
        .map(|id| VehicleProfile {
            id,
            coords: [rng.random_range(0.0..50.0), rng.random_range(0.0..50.0)],
            label_counts: (0..3).map(|_| rng.random_range(0..10)).collect(),
            city: id % 2,
        })
        .collect()
}

/// Every assignment of the six vehicles to two non-empty regions, with mean
/// centroids, that is a fixed point of nearest-centroid assignment.
pub fn two_region_fixed_points(fleet: &[VehicleProfile], cfg: &PartitionConfig) -> Vec<Vec<usize>> {
    let sites = vehicle_sites(fleet).unwrap();
    let n = sites.len();
    let mut fixed_points = Vec::new();
    for mask in 1u32..(1 << n) - 1 {
        let assignment: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
        let groups: Vec<Vec<usize>> = (0..2).map(|r| (0..n).filter(|&i| assignment[i] == r).collect()).collect();
        let centres: Vec<Site> = groups.iter().map(|g| mean_site(&sites, g)).collect();
        let stable = (0..n).all(|i| {
            let own = rwd(&sites[i], &centres[assignment[i]], cfg);
            let other = rwd(&sites[i], &centres[1 - assignment[i]], cfg);
            own < other || (own == other && assignment[i] == 0)
        });
        if stable {
            fixed_points.push(assignment);
        }
    }
    fixed_points
}

/// Partitions `instances` random six-vehicle fleets and returns the first
/// instance whose result is not an exhaustive fixed point.
pub fn first_non_optimal_instance(instances: u64) -> Option<u64> {
    let mut rng = derive(11, Stream::Synth, &[]);
    let cfg = PartitionConfig {
        k_regions: 2,
        gamma: 0.0,
        ..PartitionConfig::default()
    };
    (0..instances).find(|&instance| {
        let fleet = six_vehicle_fleet(&mut rng);
        let s = partition(&fleet, &cfg, &mut derive(instance, Stream::Partition, &[])).unwrap();
        !two_region_fixed_points(&fleet, &cfg).contains(&s.assignment())
    })
}

fn vector(values: Vec<f64>) -> ParamVector {
    let n = values.len();
    ParamVector::from_values(&[n - 1, 1], values).unwrap()
}

/// Random masks and β vectors, with model entries at scales 1e-3, 1 and 1e3.
pub fn check_simplex(calls: u64) -> Result<(), String> {
    let mut rng = derive(21, Stream::GradCheck, &[]);
    let hyper = HyperLearnConfig {
        embed_dim: 4,
        hidden_dim: 6,
        ..HyperLearnConfig::default()
    };
    for call in 0..calls {
        let peers = rng.random_range(1..8);
        let hn = init_hypernet(0, (1..=peers).collect(), &hyper, &mut derive(call, Stream::AvHypernet, &[])).unwrap();
        let mask = hn.mask_forward();
        let total: f64 = mask.weights.iter().sum();
        if mask.len() != peers || (total - 1.0).abs() > 1e-9 || mask.weights.iter().any(|&a| a <= 0.0) {
            return Err(format!("call {call}: mask {:?}", mask.weights));
        }

        let n_models = rng.random_range(1..8);
        let dim = rng.random_range(2..6);
        let scale = [1e-3, 1.0, 1e3][call as usize % 3];
        let models: Vec<ParamVector> = (0..n_models)
            .map(|_| vector((0..dim).map(|_| rng.random_range(-scale..scale)).collect()))
            .collect();
        let refs: Vec<&ParamVector> = models.iter().collect();
        let (_, betas) = intra_region_aggregate(&refs).unwrap();
        let total: f64 = betas.iter().sum();
        if (total - 1.0).abs() > 1e-9 || betas.iter().any(|&b| b <= 0.0) {
            return Err(format!("call {call}: betas {betas:?}"));
        }
    }
    Ok(())
}

/// Random triples of models: a model closer to the mean gets a larger β.
pub fn check_beta_monotonicity(triples: usize) -> Result<(), String> {
    let mut rng = derive(22, Stream::GradCheck, &[]);
    for _ in 0..triples {
        let models: Vec<ParamVector> = (0..3)
            .map(|_| vector((0..3).map(|_| rng.random_range(-2.0..2.0)).collect()))
            .collect();
        let refs: Vec<&ParamVector> = models.iter().collect();
        let mut mean = ParamVector::zeros(models[0].shape()).unwrap();
        for m in &models {
            mean.axpy(1.0 / 3.0, m).unwrap();
        }
        let d: Vec<f64> = models.iter().map(|m| m.distance(&mean).unwrap()).collect();
        let (_, betas) = intra_region_aggregate(&refs).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if d[i] + 1e-9 < d[j] && betas[i] <= betas[j] {
                    return Err(format!("d {d:?} betas {betas:?}"));
                }
            }
        }
    }
    Ok(())
}
