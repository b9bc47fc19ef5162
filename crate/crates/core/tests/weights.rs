mod common;

use proptest::prelude::*;

use regionfl::gradcheck;
use regionfl::hypernet::{init_hypernet, personalize, HyperLearnConfig, Hypernetwork, MaskVector};
use regionfl::model::ParamVector;
use regionfl::rng::{derive, Stream};

fn vector(values: Vec<f64>) -> ParamVector {
    let n = values.len();
    ParamVector::from_values(&[n - 1, 1], values).unwrap()
}

fn small_cfg() -> HyperLearnConfig {
    HyperLearnConfig {
        embed_dim: 4,
        hidden_dim: 6,
        ..HyperLearnConfig::default()
    }
}

#[test]
fn masks_and_betas_lie_on_the_simplex() {
    common::check_simplex(1000).unwrap();
}

#[test]
fn closer_model_gets_strictly_larger_beta() {
    common::check_beta_monotonicity(100).unwrap();
}

#[test]
fn pseudo_gradients_match_finite_differences() {
    let report = gradcheck::run(5, 20, false).unwrap();
    assert!(report.hypernet.passed(), "{report:?}");
    assert!(report.model.passed(), "{report:?}");
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn personalize_is_own_plus_peer_matrix_times_mask(
        own in proptest::collection::vec(-5.0..5.0f64, 4),
        peers in proptest::collection::vec(proptest::collection::vec(-5.0..5.0f64, 4), 1..5),
        raw in proptest::collection::vec(0.01..1.0f64, 5),
    ) {
        let k = peers.len();
        let total: f64 = raw[..k].iter().sum();
        let mask = MaskVector { weights: raw[..k].iter().map(|r| r / total).collect() };
        let own_v = vector(own.clone());
        let peer_v: Vec<ParamVector> = peers.iter().cloned().map(vector).collect();
        let refs: Vec<&ParamVector> = peer_v.iter().collect();
        let out = personalize(&own_v, &refs, &mask).unwrap();
        for c in 0..4 {
            let stacked: f64 = (0..k).map(|j| peers[j][c] * mask.weights[j]).sum();
            prop_assert!((out.values()[c] - own[c] - stacked).abs() <= 1e-12);
        }
    }

    #[test]
    fn personalize_is_permutation_equivariant(
        peers in proptest::collection::vec(proptest::collection::vec(-5.0..5.0f64, 3), 2..6),
        rotate in 0usize..5,
        seed in any::<u64>(),
    ) {
        let k = peers.len();
        let own = vector(vec![0.5, -1.0, 2.0]);
        let peer_v: Vec<ParamVector> = peers.into_iter().map(vector).collect();
        let hn = init_hypernet(0, (1..=k).collect(), &small_cfg(), &mut derive(seed, Stream::AvHypernet, &[])).unwrap();
        let mask = hn.mask_forward();
        let refs: Vec<&ParamVector> = peer_v.iter().collect();
        let base = personalize(&own, &refs, &mask).unwrap();

        // Rotate the peer order together with the mask entries.
        let perm: Vec<usize> = (0..k).map(|i| (i + rotate) % k).collect();
        let permuted: Vec<&ParamVector> = perm.iter().map(|&i| &peer_v[i]).collect();
        let permuted_mask = MaskVector { weights: perm.iter().map(|&i| mask.weights[i]).collect() };
        let out = personalize(&own, &permuted, &permuted_mask).unwrap();
        for (a, b) in base.values().iter().zip(out.values()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }

        // The same holds for a hypernetwork whose output rows are permuted.
        let shape = hn.params().shape().to_vec();
        let (h, e) = (shape[1], shape[0]);
        let src = hn.params().values();
        let mut values = src.to_vec();
        let w2 = e * h + h;
        for (new_row, &old_row) in perm.iter().enumerate() {
            for c in 0..h {
                values[w2 + new_row * h + c] = src[w2 + old_row * h + c];
            }
            values[w2 + k * h + new_row] = src[w2 + k * h + old_row];
        }
        let peer_ids = perm.iter().map(|&i| i + 1).collect();
        let moved = Hypernetwork::from_parts(
            0,
            peer_ids,
            hn.embedding().to_vec(),
            ParamVector::from_values(&shape, values).unwrap(),
        )
        .unwrap();
        let out = personalize(&own, &permuted, &moved.mask_forward()).unwrap();
        for (a, b) in base.values().iter().zip(out.values()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}
