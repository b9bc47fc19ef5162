//! Regional partitioning of a vehicle fleet.
//!
//! Vehicles are compared by the region-wise distance: planar Euclidean
//! distance between coordinates plus `gamma` times a weighted distance
//! between their relative-abundance vectors. The fleet is split into `K`
//! regions with distance-squared seeding followed by Lloyd refinement.

mod format;
mod lloyd;

pub use format::{read_fleet, read_rgb, read_structure, write_fleet, write_rgb, write_structure};
pub use lloyd::{lloyd_refine, mean_site, partition, quantization_error, seed_centroids, vehicle_sites};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of levels in an abundance channel.
pub const ABUNDANCE_SCALE: f64 = 255.0;

/// A vehicle's position and label histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleProfile {
    pub id: usize,
    pub coords: [f64; 2],
    /// Objects per category.
    pub label_counts: Vec<u64>,
    pub city: usize,
}

/// Per-city mean label counts and their extremes across cities.
#[derive(Debug, Clone, PartialEq)]
pub struct CityAbundanceStats {
    /// `per_city_mean[city][category]`.
    pub per_city_mean: Vec<Vec<f64>>,
    pub cat_max: Vec<f64>,
    pub cat_min: Vec<f64>,
}

impl CityAbundanceStats {
    pub fn categories(&self) -> usize {
        self.cat_max.len()
    }
}

/// Relative abundance of each category, one byte per channel.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AbundanceVector(pub Vec<u8>);

impl AbundanceVector {
    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&c| f64::from(c)).collect()
    }
}

/// Non-negative `m x m` category weight matrix used by [`label_distance`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightMatrix {
    Identity,
    Dense(Vec<Vec<f64>>),
}

impl Default for WeightMatrix {
    fn default() -> Self {
        WeightMatrix::Identity
    }
}

impl WeightMatrix {
    pub fn scaled_identity(m: usize, s: f64) -> Self {
        let rows = (0..m)
            .map(|i| (0..m).map(|j| if i == j { s } else { 0.0 }).collect())
            .collect();
        WeightMatrix::Dense(rows)
    }

    pub fn validate(&self, m: Option<usize>) -> Result<()> {
        if let WeightMatrix::Dense(rows) = self {
            let n = rows.len();
            if let Some(m) = m {
                if n != m {
                    return Err(Error::usage(format!(
                        "weight matrix is {n}x{n}, expected {m}x{m}"
                    )));
                }
            }
            for row in rows {
                if row.len() != n {
                    return Err(Error::usage("weight matrix is not square"));
                }
                if row.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
                    return Err(Error::config("weight matrix entries must be finite and >= 0"));
                }
            }
        }
        Ok(())
    }
}

/// Settings for [`partition`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    pub k_regions: usize,
    /// Weight of the label term in the region-wise distance, in `[0, 1]`.
    pub gamma: f64,
    pub weight_matrix: WeightMatrix,
    pub max_lloyd_iters: usize,
    /// Refinement also stops once no centroid moves farther than this.
    pub stability_tol: f64,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            k_regions: 5,
            gamma: 0.5,
            weight_matrix: WeightMatrix::Identity,
            max_lloyd_iters: 100,
            stability_tol: 0.0,
        }
    }
}

impl PartitionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_regions == 0 {
            return Err(Error::config("k_regions must be positive"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        if self.max_lloyd_iters == 0 {
            return Err(Error::config("max_lloyd_iters must be positive"));
        }
        if !(self.stability_tol >= 0.0) {
            return Err(Error::config("stability_tol must be >= 0"));
        }
        self.weight_matrix.validate(None)
    }
}

/// A point in the joint (coordinate, abundance) space. Region centroids
/// carry real-valued mean abundances; vehicles carry their byte abundances.
#[derive(Debug, Clone, PartialEq)]
pub struct Site {
    pub coords: [f64; 2],
    pub abundance: Vec<f64>,
}

pub type Centroid = Site;

impl Site {
    pub fn of(av: &VehicleProfile, abundance: &AbundanceVector) -> Self {
        Site {
            coords: av.coords,
            abundance: abundance.to_f64(),
        }
    }
}

/// K disjoint regions covering the fleet.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionalStructure {
    /// Member ids of each region, ascending.
    pub regions: Vec<Vec<usize>>,
    pub centroids: Vec<Centroid>,
    pub quantization_error: f64,
    /// Quantization error after seeding and after every refinement step.
    pub error_history: Vec<f64>,
}

impl RegionalStructure {
    pub fn k(&self) -> usize {
        self.regions.len()
    }

    /// Region index of every vehicle id.
    pub fn assignment(&self) -> Vec<usize> {
        let n = self.regions.iter().map(Vec::len).sum();
        let mut out = vec![usize::MAX; n];
        for (k, members) in self.regions.iter().enumerate() {
            for &id in members {
                if id < n {
                    out[id] = k;
                }
            }
        }
        out
    }

    /// Checks the regions are non-empty, disjoint and cover `0..n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.centroids.len() != self.regions.len() {
            return Err(Error::usage("centroid count differs from region count"));
        }
        let mut seen = vec![false; n];
        for (k, members) in self.regions.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::config(format!("region {k} is empty")));
            }
            for &id in members {
                if id >= n {
                    return Err(Error::config(format!("region {k} lists unknown vehicle {id}")));
                }
                if std::mem::replace(&mut seen[id], true) {
                    return Err(Error::config(format!("vehicle {id} appears in two regions")));
                }
            }
        }
        if let Some(id) = seen.iter().position(|s| !s) {
            return Err(Error::config(format!("vehicle {id} is not assigned to a region")));
        }
        Ok(())
    }
}

/// Checks that ids equal positions and that the fleet is well formed.
pub fn validate_fleet(fleet: &[VehicleProfile]) -> Result<()> {
    if fleet.is_empty() {
        return Err(Error::config("fleet is empty"));
    }
    let m = fleet[0].label_counts.len();
    for (pos, av) in fleet.iter().enumerate() {
        if av.id != pos {
            return Err(Error::config(format!(
                "vehicle ids must be 0..N in order; found id {} at position {pos}",
                av.id
            )));
        }
        if av.label_counts.len() != m {
            return Err(Error::config(format!(
                "vehicle {} has {} categories, expected {m}",
                av.id,
                av.label_counts.len()
            )));
        }
        if !av.coords.iter().all(|c| c.is_finite()) {
            return Err(Error::config(format!("vehicle {} has non-finite coordinates", av.id)));
        }
    }
    Ok(())
}

/// Mean label count of every category per city, with per-category extremes.
pub fn compute_city_stats(fleet: &[VehicleProfile]) -> Result<CityAbundanceStats> {
    if fleet.is_empty() {
        return Err(Error::config("cannot compute city statistics of an empty fleet"));
    }
    let m = fleet[0].label_counts.len();
    let n_cities = fleet.iter().map(|av| av.city).max().unwrap_or(0) + 1;
    let mut sums = vec![vec![0.0f64; m]; n_cities];
    let mut counts = vec![0usize; n_cities];
    for av in fleet {
        if av.label_counts.len() != m {
            return Err(Error::config(format!(
                "vehicle {} has {} categories, expected {m}",
                av.id,
                av.label_counts.len()
            )));
        }
        counts[av.city] += 1;
        for (s, &c) in sums[av.city].iter_mut().zip(&av.label_counts) {
            *s += c as f64;
        }
    }
    if let Some(city) = counts.iter().position(|&c| c == 0) {
        return Err(Error::config(format!("city {city} has no vehicles")));
    }
    let per_city_mean: Vec<Vec<f64>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(row, &n)| row.into_iter().map(|s| s / n as f64).collect())
        .collect();
    let mut cat_max = vec![f64::NEG_INFINITY; m];
    let mut cat_min = vec![f64::INFINITY; m];
    for row in &per_city_mean {
        for c in 0..m {
            cat_max[c] = cat_max[c].max(row[c]);
            cat_min[c] = cat_min[c].min(row[c]);
        }
    }
    Ok(CityAbundanceStats {
        per_city_mean,
        cat_max,
        cat_min,
    })
}

/// Floor of the count normalised between the smallest and largest city
/// means, scaled to 255 and clamped to `[0, 255]`. Categories whose city
/// means are all equal map to 0.
pub fn compute_abundance(av: &VehicleProfile, stats: &CityAbundanceStats) -> AbundanceVector {
    let values = av
        .label_counts
        .iter()
        .zip(stats.cat_min.iter().zip(&stats.cat_max))
        .map(|(&count, (&lo, &hi))| abundance_channel(count as f64, lo, hi))
        .collect();
    AbundanceVector(values)
}

fn abundance_channel(count: f64, lo: f64, hi: f64) -> u8 {
    let span = hi - lo;
    if !(span > 0.0) {
        return 0;
    }
    // Scale before dividing so exact ratios (l = hi, 4/10, ...) stay exact;
    // the epsilon absorbs one-ulp undershoot before flooring.
    let scaled = (count - lo) * ABUNDANCE_SCALE / span;
    (scaled + 1e-9).floor().clamp(0.0, ABUNDANCE_SCALE) as u8
}

/// `sqrt(|a - b|^T W |a - b|)`.
pub fn label_distance(a: &[f64], b: &[f64], w: &WeightMatrix) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::usage(format!(
            "abundance dimensions differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(label_distance_unchecked(a, b, w))
}

fn label_distance_unchecked(a: &[f64], b: &[f64], w: &WeightMatrix) -> f64 {
    match w {
        WeightMatrix::Identity => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt(),
        WeightMatrix::Dense(rows) => {
            let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect();
            let q: f64 = rows
                .iter()
                .zip(&diff)
                .map(|(row, di)| di * row.iter().zip(&diff).map(|(w, dj)| w * dj).sum::<f64>())
                .sum();
            q.max(0.0).sqrt()
        }
    }
}

pub fn spatial_distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Region-wise distance between two sites.
pub fn rwd(a: &Site, b: &Site, cfg: &PartitionConfig) -> f64 {
    let spatial = spatial_distance(a.coords, b.coords);
    if cfg.gamma == 0.0 {
        return spatial;
    }
    spatial + cfg.gamma * label_distance_unchecked(&a.abundance, &b.abundance, &cfg.weight_matrix)
}

/// One row of an RGB abundance export.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbRecord {
    pub id: usize,
    pub coords: [f64; 2],
    pub rgb: [u8; 3],
}

/// Colour-codes each vehicle by the abundance of three chosen categories.
pub fn export_rgb(
    fleet: &[VehicleProfile],
    stats: &CityAbundanceStats,
    categories: [usize; 3],
) -> Result<Vec<RgbRecord>> {
    let m = stats.categories();
    if let Some(&bad) = categories.iter().find(|&&c| c >= m) {
        return Err(Error::usage(format!(
            "category index {bad} out of range for {m} categories"
        )));
    }
    fleet
        .iter()
        .map(|av| {
            if av.label_counts.len() != m {
                return Err(Error::usage(format!(
                    "vehicle {} has {} categories, expected {m}",
                    av.id,
                    av.label_counts.len()
                )));
            }
            let abundance = compute_abundance(av, stats);
            Ok(RgbRecord {
                id: av.id,
                coords: av.coords,
                rgb: categories.map(|c| abundance.0[c]),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn av(id: usize, city: usize, counts: &[u64]) -> VehicleProfile {
        VehicleProfile {
            id,
            coords: [0.0, 0.0],
            label_counts: counts.to_vec(),
            city,
        }
    }

    #[test]
    fn city_stats_two_cities() {
        let fleet = vec![av(0, 0, &[0]), av(1, 0, &[2]), av(2, 1, &[4])];
        let stats = compute_city_stats(&fleet).unwrap();
        assert_eq!(stats.per_city_mean, vec![vec![1.0], vec![4.0]]);
        assert_eq!(stats.cat_min, vec![1.0]);
        assert_eq!(stats.cat_max, vec![4.0]);
    }

    #[test]
    fn city_stats_single_city_and_constant_field() {
        let fleet = vec![av(0, 0, &[3, 5]), av(1, 0, &[3, 5])];
        let stats = compute_city_stats(&fleet).unwrap();
        assert_eq!(stats.cat_max, stats.cat_min);
        assert_eq!(stats.cat_max, vec![3.0, 5.0]);
    }

    #[test]
    fn city_stats_errors() {
        assert!(matches!(compute_city_stats(&[]), Err(Error::Config(_))));
        let fleet = vec![av(0, 0, &[1]), av(1, 2, &[1])];
        assert!(matches!(compute_city_stats(&fleet), Err(Error::Config(_))));
    }

    fn stats_1d(lo: f64, hi: f64) -> CityAbundanceStats {
        CityAbundanceStats {
            per_city_mean: vec![vec![lo], vec![hi]],
            cat_max: vec![hi],
            cat_min: vec![lo],
        }
    }

    #[test]
    fn abundance_boundaries_and_interior() {
        let s = stats_1d(0.0, 10.0);
        assert_eq!(compute_abundance(&av(0, 0, &[0]), &s).0, vec![0]);
        assert_eq!(compute_abundance(&av(0, 0, &[10]), &s).0, vec![255]);
        assert_eq!(compute_abundance(&av(0, 0, &[4]), &s).0, vec![102]);
        // Above the largest city mean saturates.
        assert_eq!(compute_abundance(&av(0, 0, &[40]), &s).0, vec![255]);
        // Below the smallest city mean clamps to zero.
        let s = stats_1d(3.0, 7.0);
        assert_eq!(compute_abundance(&av(0, 0, &[1]), &s).0, vec![0]);
    }

    #[test]
    fn abundance_upper_boundary_awkward_means() {
        // Means whose span is not a short binary fraction.
        let s = stats_1d(1.0 / 3.0, 7.0 / 3.0 + 0.1);
        let hi = s.cat_max[0];
        assert_eq!(abundance_channel(hi, s.cat_min[0], hi), 255);
    }

    #[test]
    fn abundance_degenerate_span_is_zero() {
        let s = stats_1d(4.0, 4.0);
        assert_eq!(compute_abundance(&av(0, 0, &[9]), &s).0, vec![0]);
    }

    #[test]
    fn label_distance_examples() {
        let id = WeightMatrix::Identity;
        assert_eq!(label_distance(&[1.0, 2.0], &[1.0, 2.0], &id).unwrap(), 0.0);
        assert_eq!(label_distance(&[3.0, 4.0, 0.0], &[0.0, 0.0, 0.0], &id).unwrap(), 5.0);
        let w2 = WeightMatrix::scaled_identity(2, 2.0);
        let d = label_distance(&[3.0, 4.0], &[0.0, 0.0], &w2).unwrap();
        assert!((d - 50f64.sqrt()).abs() < 1e-12);
        assert!((d - 7.0711).abs() < 1e-4);
        assert!(matches!(label_distance(&[1.0], &[1.0, 2.0], &id), Err(Error::Usage(_))));
    }

    #[test]
    fn dense_identity_matches_identity() {
        let a = [10.0, 0.0, 255.0];
        let b = [3.0, 100.0, 1.0];
        let d1 = label_distance(&a, &b, &WeightMatrix::Identity).unwrap();
        let d2 = label_distance(&a, &b, &WeightMatrix::scaled_identity(3, 1.0)).unwrap();
        assert!((d1 - d2).abs() < 1e-12);
    }

    #[test]
    fn off_diagonal_weights_use_absolute_differences() {
        // |d| = (1, 1) regardless of sign; W = [[0,1],[1,0]] gives 2.
        let w = WeightMatrix::Dense(vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        let d = label_distance(&[1.0, 0.0], &[0.0, 1.0], &w).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rwd_examples() {
        let mut cfg = PartitionConfig {
            gamma: 0.0,
            ..PartitionConfig::default()
        };
        let a = Site {
            coords: [0.0, 0.0],
            abundance: vec![0.0, 0.0],
        };
        let b = Site {
            coords: [3.0, 4.0],
            abundance: vec![6.0, 8.0],
        };
        assert_eq!(rwd(&a, &a, &cfg), 0.0);
        assert_eq!(rwd(&a, &b, &cfg), 5.0);
        cfg.gamma = 0.5;
        assert_eq!(rwd(&a, &b, &cfg), 10.0);
        assert_eq!(rwd(&b, &a, &cfg), 10.0);
    }

    #[test]
    fn export_rgb_table_rows() {
        let fleet = vec![
            av(0, 0, &[0, 0, 0]),
            av(1, 1, &[10, 10, 10]),
            av(2, 0, &[10, 0, 0]),
            av(3, 1, &[0, 10, 10]),
        ];
        let stats = CityAbundanceStats {
            per_city_mean: vec![vec![0.0; 3], vec![10.0; 3]],
            cat_max: vec![10.0; 3],
            cat_min: vec![0.0; 3],
        };
        let rows = export_rgb(&fleet, &stats, [0, 1, 2]).unwrap();
        assert_eq!(rows[0].rgb, [0, 0, 0]);
        assert_eq!(rows[1].rgb, [255, 255, 255]);
        assert_eq!(rows[2].rgb, [255, 0, 0]);
        assert_eq!(rows[3].rgb, [0, 255, 255]);
        assert!(matches!(
            export_rgb(&fleet, &stats, [0, 1, 3]),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn structure_validation() {
        let c = Site {
            coords: [0.0, 0.0],
            abundance: vec![],
        };
        let ok = RegionalStructure {
            regions: vec![vec![0, 2], vec![1]],
            centroids: vec![c.clone(), c.clone()],
            quantization_error: 0.0,
            error_history: vec![],
        };
        ok.validate(3).unwrap();
        assert_eq!(ok.assignment(), vec![0, 1, 0]);
        let mut bad = ok.clone();
        bad.regions = vec![vec![0, 1], vec![1, 2]];
        assert!(bad.validate(3).is_err());
        bad.regions = vec![vec![0, 1, 2], vec![]];
        assert!(bad.validate(3).is_err());
    }
}
