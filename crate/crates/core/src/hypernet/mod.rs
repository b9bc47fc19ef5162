//! Hypernetworks that emit peer-mixing mask vectors.
//!
//! A hypernetwork maps its trainable embedding `v` through a two-layer tanh
//! network with parameters `phi` to one logit per peer, and a softmax turns
//! the logits into a mask on the probability simplex. The mask weights the
//! peers' models in [`personalize`].
//!
//! Training uses the pseudo-gradient rule: given a parameter-space vector
//! `g` (the owner's model update), the hypernetwork descends the surrogate
//! `<personalize(own, peers, mask(v, phi)), g>` with `own` held fixed.

mod format;

pub use format::{read_hypernet, write_hypernet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{backward, forward, init_model, softmax, ParamVector};

/// Architecture and learning rates of the hypernetworks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperLearnConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub lr_embedding: f64,
    pub lr_params: f64,
}

impl Default for HyperLearnConfig {
    fn default() -> Self {
        Self {
            embed_dim: 16,
            hidden_dim: 64,
            lr_embedding: 1.0,
            lr_params: 1.0,
        }
    }
}

impl HyperLearnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::config("hypernetwork dimensions must be positive"));
        }
        for (name, lr) in [("lr_embedding", self.lr_embedding), ("lr_params", self.lr_params)] {
            if !(lr >= 0.0) || !lr.is_finite() {
                return Err(Error::config(format!("{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// Mixing weights over a hypernetwork's peers, in `peer_ids` order.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskVector {
    pub weights: Vec<f64>,
}

impl MaskVector {
    pub fn uniform(n: usize) -> Self {
        MaskVector {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Gradient of the surrogate with respect to the embedding and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperGrads {
    pub embedding: Vec<f64>,
    pub params: ParamVector,
}

impl HyperGrads {
    pub fn max_abs(&self) -> f64 {
        self.embedding
            .iter()
            .chain(self.params.values())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// All coordinates as one vector, embedding first.
    pub fn flat(&self) -> Vec<f64> {
        self.embedding
            .iter()
            .chain(self.params.values())
            .copied()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypernetwork {
    owner: usize,
    peer_ids: Vec<usize>,
    embedding: Vec<f64>,
    /// Network of shape `[embed_dim, hidden_dim, peers]`.
    params: ParamVector,
}

/// Random embedding in `[-1, 1]` and network weights initialised like the
/// classifier.
pub fn init_hypernet<R: Rng + ?Sized>(
    owner: usize,
    peer_ids: Vec<usize>,
    cfg: &HyperLearnConfig,
    rng: &mut R,
) -> Result<Hypernetwork> {
    cfg.validate()?;
    if peer_ids.is_empty() {
        return Err(Error::usage(format!("hypernetwork of {owner} has no peers")));
    }
    let embedding = (0..cfg.embed_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let params = init_model(&[cfg.embed_dim, cfg.hidden_dim, peer_ids.len()], rng)?;
    Hypernetwork::from_parts(owner, peer_ids, embedding, params)
}

impl Hypernetwork {
    pub fn from_parts(
        owner: usize,
        peer_ids: Vec<usize>,
        embedding: Vec<f64>,
        params: ParamVector,
    ) -> Result<Self> {
        if peer_ids.is_empty() {
            return Err(Error::usage(format!("hypernetwork of {owner} has no peers")));
        }
        if peer_ids.contains(&owner) {
            return Err(Error::usage(format!("hypernetwork of {owner} lists its owner as a peer")));
        }
        let mut sorted = peer_ids.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != peer_ids.len() {
            return Err(Error::usage("duplicate peer ids"));
        }
        if params.shape().len() != 3
            || params.input_dim() != embedding.len()
            || params.output_dim() != peer_ids.len()
        {
            return Err(Error::usage(format!(
                "hypernetwork shape {:?} does not map a {}-dim embedding to {} peers",
                params.shape(),
                embedding.len(),
                peer_ids.len()
            )));
        }
        Ok(Self {
            owner,
            peer_ids,
            embedding,
            params,
        })
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn peer_ids(&self) -> &[usize] {
        &self.peer_ids
    }

    pub fn embedding(&self) -> &[f64] {
        &self.embedding
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn embed_dim(&self) -> usize {
        self.embedding.len()
    }

    pub fn hidden_dim(&self) -> usize {
        self.params.shape()[1]
    }

    pub fn logits(&self) -> Vec<f64> {
        let acts = forward(self.params.shape(), self.params.values(), &self.embedding);
        acts.into_iter().last().expect("output layer")
    }

    pub fn mask_forward(&self) -> MaskVector {
        MaskVector {
            weights: softmax(&self.logits()),
        }
    }

    /// Exact gradient of `<personalize(own, peers, mask_forward(self)), g>`
    /// with respect to the embedding and parameters, `own` held constant.
    pub fn pseudo_grads(&self, peers: &[&ParamVector], g: &ParamVector) -> Result<HyperGrads> {
        if peers.len() != self.peer_ids.len() {
            return Err(Error::usage(format!(
                "hypernetwork has {} peers, got {} peer models",
                self.peer_ids.len(),
                peers.len()
            )));
        }
        // Sensitivity of the surrogate to each mask entry.
        let s = peers.iter().map(|p| p.dot(g)).collect::<Result<Vec<f64>>>()?;
        let shape = self.params.shape();
        let acts = forward(shape, self.params.values(), &self.embedding);
        let alpha = softmax(acts.last().expect("output layer"));
        let mean: f64 = alpha.iter().zip(&s).map(|(a, s)| a * s).sum();
        let d_logits: Vec<f64> = alpha.iter().zip(&s).map(|(a, s)| a * (s - mean)).collect();
        let mut params = ParamVector::zeros(shape)?;
        let embedding = backward(shape, self.params.values(), &acts, &d_logits, params.values_mut());
        Ok(HyperGrads { embedding, params })
    }

    /// One gradient-descent step on the embedding and the parameters.
    pub fn step(&mut self, grads: &HyperGrads, cfg: &HyperLearnConfig) -> Result<()> {
        if grads.embedding.len() != self.embedding.len() {
            return Err(Error::usage("embedding gradient has the wrong length"));
        }
        self.params.check_same_shape(&grads.params)?;
        for (v, g) in self.embedding.iter_mut().zip(&grads.embedding) {
            *v -= cfg.lr_embedding * g;
        }
        self.params.axpy(-cfg.lr_params, &grads.params)
    }
}

/// `own + sum_j mask[j] * peers[j]`.
pub fn personalize(own: &ParamVector, peers: &[&ParamVector], mask: &MaskVector) -> Result<ParamVector> {
    if peers.len() != mask.len() {
        return Err(Error::usage(format!(
            "{} peer models but a mask over {} peers",
            peers.len(),
            mask.len()
        )));
    }
    let mut out = own.clone();
    for (peer, &a) in peers.iter().zip(&mask.weights) {
        out.axpy(a, peer)?;
    }
    Ok(out)
}

/// The scalar whose gradient [`Hypernetwork::pseudo_grads`] returns.
pub fn surrogate(hn: &Hypernetwork, own: &ParamVector, peers: &[&ParamVector], g: &ParamVector) -> Result<f64> {
    personalize(own, peers, &hn.mask_forward())?.dot(g)
}

/// Central differences of [`surrogate`] over every embedding and parameter
/// coordinate.
pub fn finite_diff_pseudo_grads(
    hn: &Hypernetwork,
    own: &ParamVector,
    peers: &[&ParamVector],
    g: &ParamVector,
    step: f64,
) -> Result<HyperGrads> {
    if !(step > 0.0) {
        return Err(Error::usage("finite-difference step must be positive"));
    }
    let mut probe = hn.clone();
    let mut embedding = vec![0.0; hn.embed_dim()];
    for (j, slot) in embedding.iter_mut().enumerate() {
        let orig = probe.embedding[j];
        probe.embedding[j] = orig + step;
        let up = surrogate(&probe, own, peers, g)?;
        probe.embedding[j] = orig - step;
        let down = surrogate(&probe, own, peers, g)?;
        probe.embedding[j] = orig;
        *slot = (up - down) / (2.0 * step);
    }
    let mut params = ParamVector::zeros(hn.params.shape())?;
    for j in 0..hn.params.len() {
        let orig = probe.params.values()[j];
        probe.params.values_mut()[j] = orig + step;
        let up = surrogate(&probe, own, peers, g)?;
        probe.params.values_mut()[j] = orig - step;
        let down = surrogate(&probe, own, peers, g)?;
        probe.params.values_mut()[j] = orig;
        params.values_mut()[j] = (up - down) / (2.0 * step);
    }
    Ok(HyperGrads { embedding, params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive, Stream};

    fn pv(values: &[f64]) -> ParamVector {
        // An `[n - 1, 1]` layer holds exactly n parameters.
        ParamVector::from_values(&[values.len() - 1, 1], values.to_vec()).unwrap()
    }

    fn small_cfg() -> HyperLearnConfig {
        HyperLearnConfig {
            embed_dim: 3,
            hidden_dim: 5,
            lr_embedding: 0.1,
            lr_params: 0.2,
        }
    }

    #[test]
    fn single_peer_mask_is_one() {
        let hn = init_hypernet(0, vec![4], &small_cfg(), &mut derive(1, Stream::AvHypernet, &[])).unwrap();
        assert_eq!(hn.mask_forward().weights, vec![1.0]);
    }

    #[test]
    fn init_is_deterministic_and_sized() {
        let cfg = HyperLearnConfig::default();
        let a = init_hypernet(0, vec![1, 2, 3], &cfg, &mut derive(9, Stream::AvHypernet, &[0])).unwrap();
        let b = init_hypernet(0, vec![1, 2, 3], &cfg, &mut derive(9, Stream::AvHypernet, &[0])).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.mask_forward().len(), 3);
        assert_eq!(a.params().shape(), &[16, 64, 3]);
        assert!(init_hypernet(0, vec![], &cfg, &mut derive(9, Stream::AvHypernet, &[0])).is_err());
        assert!(init_hypernet(0, vec![0, 1], &cfg, &mut derive(9, Stream::AvHypernet, &[0])).is_err());
    }

    #[test]
    fn zero_params_give_uniform_mask() {
        let params = ParamVector::zeros(&[3, 5, 4]).unwrap();
        let hn = Hypernetwork::from_parts(9, vec![0, 1, 2, 3], vec![0.3, -0.2, 0.9], params).unwrap();
        for w in hn.mask_forward().weights {
            assert!((w - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_computed_logits() {
        // Output layer with zero weights and biases (1, 2, 3).
        let mut params = ParamVector::zeros(&[2, 2, 3]).unwrap();
        let n = params.len();
        params.values_mut()[n - 3..].copy_from_slice(&[1.0, 2.0, 3.0]);
        let hn = Hypernetwork::from_parts(0, vec![1, 2, 3], vec![0.5, 0.5], params).unwrap();
        let w = hn.mask_forward().weights;
        let expected = [0.0900, 0.2447, 0.6652];
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 5e-5, "{w:?}");
        }
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn personalize_examples() {
        let own = ParamVector::from_values(&[1, 1], vec![1.0, 0.0]).unwrap();
        let a = ParamVector::from_values(&[1, 1], vec![0.0, 2.0]).unwrap();
        let b = ParamVector::from_values(&[1, 1], vec![4.0, 0.0]).unwrap();
        let out = personalize(&own, &[&a, &b], &MaskVector { weights: vec![0.25, 0.75] }).unwrap();
        assert_eq!(out.values(), &[4.0, 0.5]);
        let onehot = personalize(&own, &[&a, &b], &MaskVector { weights: vec![1.0, 0.0] }).unwrap();
        assert_eq!(onehot, own.add(&a).unwrap());
        let uni = personalize(&own, &[&a, &b], &MaskVector::uniform(2)).unwrap();
        assert_eq!(uni.values(), &[1.0 + 2.0, 1.0]);
        assert!(personalize(&own, &[&a], &MaskVector::uniform(2)).is_err());
        let other = pv(&[1.0, 2.0, 3.0]);
        assert!(personalize(&own, &[&other], &MaskVector::uniform(1)).is_err());
    }

    #[test]
    fn zero_pseudo_gradient_gives_zero_grads() {
        let hn = init_hypernet(0, vec![1, 2], &small_cfg(), &mut derive(2, Stream::AvHypernet, &[])).unwrap();
        let p1 = pv(&[1.0, 2.0, 3.0, 4.0]);
        let p2 = pv(&[-1.0, 0.5, 0.0, 2.0]);
        let g = pv(&[0.0; 4]);
        let grads = hn.pseudo_grads(&[&p1, &p2], &g).unwrap();
        assert_eq!(grads.max_abs(), 0.0);
    }

    #[test]
    fn identical_peers_give_zero_grads() {
        let hn = init_hypernet(0, vec![1, 2, 3], &small_cfg(), &mut derive(3, Stream::AvHypernet, &[])).unwrap();
        let p = pv(&[1.0, -2.0, 3.0, 0.5]);
        let g = pv(&[0.3, 0.1, -0.7, 2.0]);
        let grads = hn.pseudo_grads(&[&p, &p, &p], &g).unwrap();
        assert!(grads.max_abs() < 1e-15, "{}", grads.max_abs());
    }

    #[test]
    fn pseudo_grads_match_finite_differences_two_peers() {
        let cfg = small_cfg();
        let hn = init_hypernet(0, vec![1, 2], &cfg, &mut derive(4, Stream::AvHypernet, &[])).unwrap();
        let own = pv(&[0.2, 0.1, -0.3, 0.4]);
        let p1 = pv(&[1.0, 2.0, 3.0, 4.0]);
        let p2 = pv(&[-1.0, 0.5, 0.0, 2.0]);
        let g = pv(&[0.3, -0.1, 0.7, -2.0]);
        let analytic = hn.pseudo_grads(&[&p1, &p2], &g).unwrap();
        let numeric = finite_diff_pseudo_grads(&hn, &own, &[&p1, &p2], &g, 1e-5).unwrap();
        let scale = numeric.max_abs().max(1e-12);
        let worst = analytic
            .flat()
            .iter()
            .zip(numeric.flat())
            .map(|(a, n)| (a - n).abs())
            .fold(0.0, f64::max);
        assert!(worst / scale < 1e-4, "relative error {}", worst / scale);
    }

    #[test]
    fn step_arithmetic() {
        let params = ParamVector::zeros(&[2, 1, 2]).unwrap();
        let mut hn = Hypernetwork::from_parts(0, vec![1, 2], vec![1.0, -1.0], params.clone()).unwrap();
        let cfg = HyperLearnConfig {
            embed_dim: 2,
            hidden_dim: 1,
            lr_embedding: 0.5,
            lr_params: 0.1,
        };
        let mut gp = params.clone();
        gp.values_mut()[0] = 2.0;
        let grads = HyperGrads {
            embedding: vec![0.2, -0.4],
            params: gp,
        };
        hn.step(&grads, &cfg).unwrap();
        assert_eq!(hn.embedding(), &[1.0 - 0.5 * 0.2, -1.0 + 0.5 * 0.4]);
        assert!((hn.params().values()[0] + 0.2).abs() < 1e-15);

        let before = hn.clone();
        let zero = HyperGrads {
            embedding: vec![0.0; 2],
            params: params.clone(),
        };
        hn.step(&zero, &cfg).unwrap();
        assert_eq!(hn, before);

        let frozen = HyperLearnConfig { lr_embedding: 0.0, ..cfg };
        hn.step(&grads, &frozen).unwrap();
        assert_eq!(hn.embedding(), before.embedding());
        assert_ne!(hn.params(), before.params());
    }
}
