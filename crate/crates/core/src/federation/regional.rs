use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{
    check_datasets, intra_region_aggregate, mean_std, per_av_accuracy, sample_clients,
    FederationConfig, MetricsLog, Mixing, RoundMetrics,
};
use crate::error::{Error, Result};
use crate::geo::RegionalStructure;
use crate::hypernet::{init_hypernet, personalize, HyperGrads, Hypernetwork};
use crate::model::{av_update, init_model, predict, Dataset, ParamVector};
use crate::rng::{derive, Stream};

/// What a regional server holds: its members' stored models and the
/// hypernetwork of every member. Single-member regions have no
/// hypernetworks.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionState {
    pub members: Vec<usize>,
    pub stores: BTreeMap<usize, ParamVector>,
    pub hypernets: BTreeMap<usize, Hypernetwork>,
}

impl RegionState {
    /// The stored model mixed with the other members' stored models, or the
    /// stored model itself when the vehicle has no peers.
    pub fn personalized(&self, id: usize, mixing: Mixing) -> Result<ParamVector> {
        let own = &self.stores[&id];
        match self.hypernets.get(&id) {
            Some(hn) => {
                let peers: Vec<&ParamVector> = hn.peer_ids().iter().map(|j| &self.stores[j]).collect();
                mix(own, &peers, hn, mixing)
            }
            None => Ok(own.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederationState {
    pub regions: Vec<RegionState>,
    /// Stored model of every region.
    pub central_store: Vec<ParamVector>,
    /// Hypernetwork of every region; `None` when there is a single region.
    pub region_hypernets: Vec<Option<Hypernetwork>>,
    pub round: usize,
}

impl FederationState {
    /// Stored model of every vehicle, in id order.
    pub fn av_models(&self) -> Vec<(usize, &ParamVector)> {
        let mut all: Vec<(usize, &ParamVector)> = self
            .regions
            .iter()
            .flat_map(|r| r.stores.iter().map(|(&id, m)| (id, m)))
            .collect();
        all.sort_by_key(|(id, _)| *id);
        all
    }

    fn region_peers(&self, k: usize) -> Vec<&ParamVector> {
        match &self.region_hypernets[k] {
            Some(hn) => hn.peer_ids().iter().map(|&j| &self.central_store[j]).collect(),
            None => Vec::new(),
        }
    }

    /// The region's stored model personalized over the other regions.
    pub fn personalized_region(&self, k: usize, mixing: Mixing) -> Result<ParamVector> {
        match &self.region_hypernets[k] {
            Some(hn) => mix(&self.central_store[k], &self.region_peers(k), hn, mixing),
            None => Ok(self.central_store[k].clone()),
        }
    }
}

/// Outcome of one regional round.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionOutcome {
    /// `aggregate - regional_model` on aggregation rounds.
    pub delta: Option<ParamVector>,
    pub betas: Option<Vec<f64>>,
    /// Training loss of each sampled vehicle, in id order.
    pub losses: Vec<(usize, f64)>,
}

/// [`personalize`] scaled by the mixing factor.
pub fn mix(own: &ParamVector, peers: &[&ParamVector], hn: &Hypernetwork, mixing: Mixing) -> Result<ParamVector> {
    let mut out = personalize(own, peers, &hn.mask_forward())?;
    out.scale(mixing.factor());
    Ok(out)
}

/// Hypernetwork gradients for a model update under the given mixing.
///
/// The update `trained - start` points downhill, so the loss gradient it
/// stands in for is its negation.
fn hyper_grads(hn: &Hypernetwork, peers: &[&ParamVector], delta: &ParamVector, mixing: Mixing) -> Result<HyperGrads> {
    let mut g = delta.clone();
    g.scale(-mixing.factor());
    hn.pseudo_grads(peers, &g)
}

struct VehicleResult {
    id: usize,
    trained: ParamVector,
    grads: Option<HyperGrads>,
    loss: f64,
}

/// One round of a regional server.
///
/// On round 0 every member's store is first set to `regional_model`. Each
/// sampled vehicle then trains from its personalized model, built from the
/// stores as they were at the start of the round; its store becomes the
/// trained model and its hypernetwork takes one pseudo-gradient step.
/// On aggregation rounds all stores are combined with
/// [`intra_region_aggregate`](super::intra_region_aggregate) and the
/// difference to `regional_model` is returned.
pub fn region_update(
    region: &mut RegionState,
    regional_model: &ParamVector,
    sampled: &[usize],
    round: usize,
    datasets: &[Dataset],
    cfg: &FederationConfig,
) -> Result<RegionOutcome> {
    if region.members.is_empty() {
        return Err(Error::usage("region has no members"));
    }
    if round == 0 {
        for id in &region.members {
            region.stores.insert(*id, regional_model.clone());
        }
    }
    if let Some(bad) = sampled.iter().find(|id| !region.stores.contains_key(id)) {
        return Err(Error::usage(format!("sampled vehicle {bad} is not a member of the region")));
    }

    let snapshot: &RegionState = region;
    let results = sampled
        .par_iter()
        .map(|&id| -> Result<VehicleResult> {
            let start = snapshot.personalized(id, cfg.mixing)?;
            let mut rng = derive(cfg.seed, Stream::LocalTraining, &[round as u64, id as u64]);
            let update = av_update(&start, &datasets[id], &cfg.local, &mut rng)?;
            let grads = match snapshot.hypernets.get(&id) {
                Some(hn) => {
                    let peers: Vec<&ParamVector> =
                        hn.peer_ids().iter().map(|j| &snapshot.stores[j]).collect();
                    Some(hyper_grads(hn, &peers, &update.delta, cfg.mixing)?)
                }
                None => None,
            };
            Ok(VehicleResult {
                id,
                trained: update.trained,
                grads,
                loss: update.train_loss,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut losses = Vec::with_capacity(results.len());
    for r in results {
        region.stores.insert(r.id, r.trained);
        if let (Some(hn), Some(g)) = (region.hypernets.get_mut(&r.id), r.grads) {
            hn.step(&g, &cfg.hyper)?;
        }
        losses.push((r.id, r.loss));
    }

    if round % cfg.region_agg_interval == 0 {
        let models: Vec<&ParamVector> = region.stores.values().collect();
        let (aggregate, betas) = intra_region_aggregate(&models)?;
        Ok(RegionOutcome {
            delta: Some(aggregate.sub(regional_model)?),
            betas: Some(betas),
            losses,
        })
    } else {
        Ok(RegionOutcome {
            delta: None,
            betas: None,
            losses,
        })
    }
}

/// A running federation over a fixed regional structure.
pub struct Federation<'a> {
    datasets: &'a [Dataset],
    cfg: FederationConfig,
    state: FederationState,
    /// Row indices of each region's pooled test data, as (vehicle, row).
    region_tests: Vec<Vec<(usize, usize)>>,
}

impl<'a> Federation<'a> {
    pub fn new(structure: &RegionalStructure, datasets: &'a [Dataset], cfg: &FederationConfig) -> Result<Self> {
        cfg.validate()?;
        check_datasets(datasets)?;
        structure.validate(datasets.len())?;
        let shape = cfg.model_shape(&datasets[0]);
        let initial = init_model(&shape, &mut derive(cfg.seed, Stream::ModelInit, &[]))?;
        let k = structure.k();

        let regions = structure
            .regions
            .iter()
            .map(|members| -> Result<RegionState> {
                let mut members = members.clone();
                members.sort_unstable();
                let stores = members.iter().map(|&i| (i, initial.clone())).collect();
                let mut hypernets = BTreeMap::new();
                if members.len() > 1 {
                    for &i in &members {
                        let peers = members.iter().copied().filter(|&j| j != i).collect();
                        let mut rng = derive(cfg.seed, Stream::AvHypernet, &[i as u64]);
                        hypernets.insert(i, init_hypernet(i, peers, &cfg.hyper, &mut rng)?);
                    }
                }
                Ok(RegionState {
                    members,
                    stores,
                    hypernets,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let region_hypernets = (0..k)
            .map(|r| -> Result<Option<Hypernetwork>> {
                if k == 1 {
                    return Ok(None);
                }
                let peers = (0..k).filter(|&j| j != r).collect();
                let mut rng = derive(cfg.seed, Stream::RegionHypernet, &[r as u64]);
                Ok(Some(init_hypernet(r, peers, &cfg.hyper, &mut rng)?))
            })
            .collect::<Result<Vec<_>>>()?;

        let region_tests = regions
            .iter()
            .map(|r| {
                r.members
                    .iter()
                    .flat_map(|&i| datasets[i].test_rows().map(move |row| (i, row)))
                    .collect()
            })
            .collect();

        Ok(Self {
            datasets,
            cfg: cfg.clone(),
            state: FederationState {
                regions,
                central_store: vec![initial; k],
                region_hypernets,
                round: 0,
            },
            region_tests,
        })
    }

    pub fn state(&self) -> &FederationState {
        &self.state
    }

    pub fn into_state(self) -> FederationState {
        self.state
    }

    pub fn config(&self) -> &FederationConfig {
        &self.cfg
    }

    /// One central round: personalize every regional model over the other
    /// regions, run each regional server, fold returned updates into the
    /// central store and step the region hypernetworks.
    pub fn run_round(&mut self) -> Result<RoundMetrics> {
        let t = self.state.round;
        let k = self.state.regions.len();
        let personalized = (0..k)
            .map(|r| self.state.personalized_region(r, self.cfg.mixing))
            .collect::<Result<Vec<_>>>()?;
        let sampled: Vec<Vec<usize>> = self
            .state
            .regions
            .iter()
            .enumerate()
            .map(|(r, region)| {
                let mut rng = derive(self.cfg.seed, Stream::Sampling, &[t as u64, r as u64]);
                sample_clients(&region.members, self.cfg.client_fraction, &mut rng)
            })
            .collect();

        let datasets = self.datasets;
        let cfg = &self.cfg;
        let outcomes = self
            .state
            .regions
            .par_iter_mut()
            .zip(personalized.par_iter())
            .zip(sampled.par_iter())
            .map(|((region, model), picks)| region_update(region, model, picks, t, datasets, cfg))
            .collect::<Result<Vec<_>>>()?;

        // Region hypernetwork gradients use the central store as it was when
        // the personalized models were built.
        let mut region_grads = Vec::with_capacity(k);
        for (r, outcome) in outcomes.iter().enumerate() {
            let grads = match (&self.state.region_hypernets[r], &outcome.delta) {
                (Some(hn), Some(delta)) => {
                    let peers = self.state.region_peers(r);
                    Some(hyper_grads(hn, &peers, delta, self.cfg.mixing)?)
                }
                _ => None,
            };
            region_grads.push(grads);
        }
        for (r, (outcome, grads)) in outcomes.iter().zip(region_grads).enumerate() {
            if let Some(delta) = &outcome.delta {
                self.state.central_store[r] = personalized[r].add(delta)?;
            }
            if let (Some(hn), Some(g)) = (self.state.region_hypernets[r].as_mut(), grads) {
                hn.step(&g, &cfg.hyper)?;
            }
        }

        let mut losses: Vec<(usize, f64)> = outcomes.iter().flat_map(|o| o.losses.iter().copied()).collect();
        losses.sort_by_key(|(id, _)| *id);
        let mean_loss = if losses.is_empty() {
            0.0
        } else {
            losses.iter().map(|(_, l)| l).sum::<f64>() / losses.len() as f64
        };
        let betas = if outcomes.iter().any(|o| o.betas.is_some()) {
            Some(outcomes.iter().map(|o| o.betas.clone().unwrap_or_default()).collect())
        } else {
            None
        };

        self.state.round += 1;
        let record = self.metrics(t, mean_loss, betas)?;
        Ok(record)
    }

    fn metrics(&self, round: usize, mean_loss: f64, betas: Option<Vec<Vec<f64>>>) -> Result<RoundMetrics> {
        let models = self.state.av_models();
        let (av_accs, _) = per_av_accuracy(models.iter().map(|(_, m)| *m), self.datasets)?;
        let (mean_acc, std_acc) = mean_std(&av_accs);

        let mut personalized = vec![None; self.datasets.len()];
        for region in &self.state.regions {
            for &id in &region.members {
                personalized[id] = Some(region.personalized(id, self.cfg.mixing)?);
            }
        }
        let personalized: Vec<ParamVector> = personalized.into_iter().map(|m| m.expect("every vehicle has a region")).collect();
        let (p_accs, _) = per_av_accuracy(personalized.iter(), self.datasets)?;
        let personalized_mean_acc = mean_std(&p_accs).0;

        let region_accs = self
            .region_tests
            .iter()
            .zip(&self.state.central_store)
            .map(|(rows, model)| -> Result<f64> {
                let correct = rows
                    .iter()
                    .filter(|&&(i, row)| {
                        let d = &self.datasets[i];
                        predict(model, d.row(row)) == d.label(row)
                    })
                    .count();
                Ok(correct as f64 / rows.len() as f64)
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(RoundMetrics {
            round,
            mean_acc,
            std_acc,
            region_accs,
            mean_loss,
            betas,
            personalized_mean_acc: Some(personalized_mean_acc),
            av_accs,
        })
    }
}

/// Runs `cfg.rounds` central rounds and returns the final state with the
/// per-round metrics.
pub fn run_fedrav(
    structure: &RegionalStructure,
    datasets: &[Dataset],
    cfg: &FederationConfig,
) -> Result<(FederationState, MetricsLog)> {
    run_fedrav_with(structure, datasets, cfg, |_| Ok(()))
}

/// [`run_fedrav`] with a callback invoked after every round.
pub fn run_fedrav_with(
    structure: &RegionalStructure,
    datasets: &[Dataset],
    cfg: &FederationConfig,
    mut on_round: impl FnMut(&RoundMetrics) -> Result<()>,
) -> Result<(FederationState, MetricsLog)> {
    let mut fed = Federation::new(structure, datasets, cfg)?;
    let mut log = MetricsLog::default();
    for _ in 0..cfg.rounds {
        let record = fed.run_round()?;
        on_round(&record)?;
        log.records.push(record);
    }
    Ok((fed.into_state(), log))
}
