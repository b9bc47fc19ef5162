use rand::Rng;

use super::{
    compute_abundance, compute_city_stats, rwd, validate_fleet, Centroid, PartitionConfig,
    RegionalStructure, Site, VehicleProfile,
};
use crate::error::{Error, Result};

/// Sum over sites of the squared region-wise distance to the nearest centroid.
pub fn quantization_error(sites: &[Site], centroids: &[Centroid], cfg: &PartitionConfig) -> Result<f64> {
    if centroids.is_empty() {
        return Err(Error::usage("quantization error needs at least one centroid"));
    }
    Ok(sites
        .iter()
        .map(|s| nearest(s, centroids, cfg).1.powi(2))
        .sum())
}

/// Index of the nearest centroid (lowest index on ties) and its distance.
fn nearest(site: &Site, centroids: &[Centroid], cfg: &PartitionConfig) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let d = rwd(site, c, cfg);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// Picks `K` distinct sites as initial centroids.
///
/// The first is uniform; each later one is drawn with probability
/// proportional to its squared distance to the closest centroid chosen so
/// far. If every remaining site coincides with a chosen one, the draw falls
/// back to uniform over unchosen sites. Returns the chosen site indices in
/// draw order.
pub fn seed_centroids<R: Rng + ?Sized>(
    sites: &[Site],
    cfg: &PartitionConfig,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let n = sites.len();
    let k = cfg.k_regions;
    if k == 0 {
        return Err(Error::config("k_regions must be positive"));
    }
    if k > n {
        return Err(Error::config(format!(
            "cannot form {k} regions from {n} vehicles"
        )));
    }
    let mut chosen = vec![false; n];
    let mut picks = Vec::with_capacity(k);
    let first = rng.random_range(0..n);
    chosen[first] = true;
    picks.push(first);

    // Squared distance of every site to its closest chosen centroid.
    let mut weight: Vec<f64> = sites
        .iter()
        .map(|s| rwd(s, &sites[first], cfg).powi(2))
        .collect();
    weight[first] = 0.0;

    while picks.len() < k {
        let total: f64 = weight.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            draw_proportional(&weight, target)
        } else {
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[next] = true;
        picks.push(next);
        for (i, w) in weight.iter_mut().enumerate() {
            if chosen[i] {
                *w = 0.0;
            } else {
                *w = w.min(rwd(&sites[i], &sites[next], cfg).powi(2));
            }
        }
    }
    Ok(picks)
}

/// First index whose cumulative weight exceeds `target`; zero weights are
/// never returned.
fn draw_proportional(weight: &[f64], target: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weight.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if acc > target {
                return i;
            }
        }
    }
    last_positive
}

fn assign(sites: &[Site], centroids: &[Centroid], cfg: &PartitionConfig) -> Vec<usize> {
    sites.iter().map(|s| nearest(s, centroids, cfg).0).collect()
}

fn members(assignment: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut regions = vec![Vec::new(); k];
    for (i, &r) in assignment.iter().enumerate() {
        regions[r].push(i);
    }
    regions
}

/// Refills empty regions by moving in the member farthest from its centroid
/// in the currently most populous region.
fn repair_empty(
    sites: &[Site],
    assignment: &mut [usize],
    centroids: &mut [Centroid],
    cfg: &PartitionConfig,
) {
    let k = centroids.len();
    loop {
        let regions = members(assignment, k);
        let Some(empty) = regions.iter().position(Vec::is_empty) else {
            return;
        };
        // Largest region, lowest index on ties.
        let donor = (0..k)
            .max_by(|&a, &b| regions[a].len().cmp(&regions[b].len()).then(b.cmp(&a)))
            .expect("k > 0");
        if regions[donor].len() < 2 {
            return;
        }
        let mut far = regions[donor][0];
        let mut far_d = f64::NEG_INFINITY;
        for &i in &regions[donor] {
            let d = rwd(&sites[i], &centroids[donor], cfg);
            if d > far_d {
                far = i;
                far_d = d;
            }
        }
        assignment[far] = empty;
        centroids[empty] = sites[far].clone();
    }
}

fn region_cost(sites: &[Site], ids: &[usize], c: &Centroid, cfg: &PartitionConfig) -> f64 {
    ids.iter().map(|&i| rwd(&sites[i], c, cfg).powi(2)).sum()
}

/// Mean coordinate and mean (real-valued) abundance of the given sites.
pub fn mean_site(sites: &[Site], ids: &[usize]) -> Centroid {
    let m = sites[ids[0]].abundance.len();
    let mut coords = [0.0; 2];
    let mut abundance = vec![0.0; m];
    for &i in ids {
        coords[0] += sites[i].coords[0];
        coords[1] += sites[i].coords[1];
        for (a, v) in abundance.iter_mut().zip(&sites[i].abundance) {
            *a += v;
        }
    }
    let n = ids.len() as f64;
    coords[0] /= n;
    coords[1] /= n;
    abundance.iter_mut().for_each(|a| *a /= n);
    Site { coords, abundance }
}

/// Alternates nearest-centroid assignment and mean updates until the
/// assignment stops changing or the iteration cap is reached.
///
/// With `gamma > 0` the mean does not always minimise a region's squared
/// region-wise distances, so a mean that would raise the region's cost is
/// rejected in favour of the previous centroid. This keeps the quantization
/// error non-increasing. With `gamma = 0` the mean is always accepted.
pub fn lloyd_refine(
    sites: &[Site],
    initial: Vec<Centroid>,
    cfg: &PartitionConfig,
) -> Result<RegionalStructure> {
    let k = initial.len();
    if k == 0 {
        return Err(Error::usage("lloyd refinement needs at least one centroid"));
    }
    if k > sites.len() {
        return Err(Error::config(format!(
            "cannot form {k} regions from {} vehicles",
            sites.len()
        )));
    }
    let mut centroids = initial;
    let mut history = vec![quantization_error(sites, &centroids, cfg)?];
    let mut previous: Option<Vec<usize>> = None;
    let mut assignment = Vec::new();

    for _ in 0..cfg.max_lloyd_iters {
        assignment = assign(sites, &centroids, cfg);
        repair_empty(sites, &mut assignment, &mut centroids, cfg);
        if previous.as_deref() == Some(assignment.as_slice()) {
            break;
        }
        let regions = members(&assignment, k);
        let mut max_shift: f64 = 0.0;
        for (c, ids) in centroids.iter_mut().zip(&regions) {
            let candidate = mean_site(sites, ids);
            if cfg.gamma > 0.0 {
                let old_cost = region_cost(sites, ids, c, cfg);
                let new_cost = region_cost(sites, ids, &candidate, cfg);
                if new_cost > old_cost {
                    continue;
                }
            }
            max_shift = max_shift.max(rwd(c, &candidate, cfg));
            *c = candidate;
        }
        history.push(quantization_error(sites, &centroids, cfg)?);
        previous = Some(assignment.clone());
        if max_shift <= cfg.stability_tol {
            break;
        }
    }

    let quantization_error = *history.last().expect("history is non-empty");
    Ok(RegionalStructure {
        regions: members(&assignment, k),
        centroids,
        quantization_error,
        error_history: history,
    })
}

/// Full partitioning pipeline: city statistics, abundances, seeding and
/// refinement.
pub fn partition<R: Rng + ?Sized>(
    fleet: &[VehicleProfile],
    cfg: &PartitionConfig,
    rng: &mut R,
) -> Result<RegionalStructure> {
    cfg.validate()?;
    validate_fleet(fleet)?;
    cfg.weight_matrix.validate(Some(fleet[0].label_counts.len()))?;
    let sites = vehicle_sites(fleet)?;
    let seeds = seed_centroids(&sites, cfg, rng)?;
    let initial = seeds.iter().map(|&i| sites[i].clone()).collect();
    lloyd_refine(&sites, initial, cfg)
}

/// Joint-space site of every vehicle, using abundances relative to the fleet.
pub fn vehicle_sites(fleet: &[VehicleProfile]) -> Result<Vec<Site>> {
    let stats = compute_city_stats(fleet)?;
    Ok(fleet
        .iter()
        .map(|av| Site::of(av, &compute_abundance(av, &stats)))
        .collect())
}
