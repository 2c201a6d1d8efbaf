use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use reusetn::builders::{build_equivalent, Construction, DEFAULT_LEG_BUDGET};
use reusetn::circuits::{CircuitSpec, ConvSpec, Padding, RacSpec, DEFAULT_BUDGET};
use reusetn::netfile::{network_from_toml, network_to_toml};
use reusetn::network::{contract_network_random, dup};
use reusetn::tensor::relative_deviations;

const TOL: f64 = 1e-10;
const DRAWS: u64 = 20;

fn cac(side: usize, depth: usize, kernel: usize, stride: usize) -> CircuitSpec {
    CircuitSpec::Cac(ConvSpec {
        dims: 1,
        side,
        local_dim: 2,
        depth,
        kernel,
        stride,
        pool: 1,
        widths: vec![2; depth + 1],
        padding: Padding::Identity,
    })
}

fn rac(length: usize, hidden: usize, depth: usize) -> CircuitSpec {
    CircuitSpec::Rac(RacSpec {
        length,
        local_dim: 2,
        hidden,
        depth,
    })
}

fn max_dev(family: &CircuitSpec, seed: u64, expect: Construction) -> f64 {
    let circuit = family.random(&mut ChaCha8Rng::seed_from_u64(seed));
    let built = build_equivalent(&circuit, DEFAULT_LEG_BUDGET).unwrap();
    assert_eq!(built.construction, expect);
    let oracle = circuit.materialize(DEFAULT_BUDGET).unwrap();
    let by_index = relative_deviations(&built.amplitudes().unwrap(), &oracle).unwrap();
    let by_delta = relative_deviations(&built.amplitudes_via_deltas().unwrap(), &oracle).unwrap();
    by_index.into_iter().chain(by_delta).fold(0.0, f64::max)
}

#[test]
fn tree_network_matches_nonoverlapping_cac() {
    for seed in 0..DRAWS {
        assert!(max_dev(&cac(4, 2, 2, 2), seed, Construction::Tree) <= TOL);
        assert!(max_dev(&cac(8, 3, 2, 2), seed, Construction::Tree) <= TOL);
    }
}

#[test]
fn mps_matches_shallow_rac() {
    for seed in 0..DRAWS {
        assert!(max_dev(&rac(6, 3, 1), seed, Construction::Mps) <= TOL);
    }
}

#[test]
fn recursive_tree_matches_overlapping_cac() {
    for seed in 0..DRAWS {
        assert!(max_dev(&cac(4, 2, 2, 1), seed, Construction::RecursiveTree) <= TOL);
        assert!(max_dev(&cac(5, 1, 3, 1), seed, Construction::RecursiveTree) <= TOL);
    }
}

#[test]
fn recursive_mps_matches_deep_rac() {
    for seed in 0..DRAWS {
        assert!(max_dev(&rac(3, 2, 2), seed, Construction::RecursiveMps) <= TOL);
        assert!(max_dev(&rac(6, 2, 2), seed, Construction::RecursiveMps) <= TOL);
    }
}

#[test]
fn contraction_order_and_file_round_trip_do_not_change_amplitudes() {
    let mut order_rng = ChaCha8Rng::seed_from_u64(99);
    for (i, family) in [cac(4, 2, 2, 1), rac(4, 2, 2), cac(4, 2, 2, 2)].iter().enumerate() {
        let circuit = family.random(&mut ChaCha8Rng::seed_from_u64(i as u64));
        let built = build_equivalent(&circuit, DEFAULT_LEG_BUDGET).unwrap();
        let reference = built.amplitudes().unwrap();
        for _ in 0..5 {
            let raw = contract_network_random(&built.tn, &mut order_rng).unwrap();
            let t = dup(&raw, &built.dup_groups).unwrap();
            assert!(relative_deviations(&t, &reference).unwrap().iter().all(|&d| d <= 1e-12));
        }
        let reread = network_from_toml(&network_to_toml(&built.tn), std::path::Path::new(".")).unwrap();
        let t = dup(
            &reusetn::network::contract_network(&reread).unwrap(),
            &reread.dup_groups(),
        )
        .unwrap();
        assert_eq!(t, reference);
    }
}

#[test]
fn perturbed_node_is_detected() {
    let circuit = cac(4, 2, 2, 2).random(&mut ChaCha8Rng::seed_from_u64(3));
    let built = build_equivalent(&circuit, DEFAULT_LEG_BUDGET).unwrap();
    let node = built.tn.nodes().len() - 1;
    let mut t = built.tn.nodes()[node].tensor.clone();
    t.data_mut()[0] += 1e-3;
    let corrupted = built.tn.with_node_tensor(node, t).unwrap();
    let amps = dup(
        &reusetn::network::contract_network(&corrupted).unwrap(),
        &built.dup_groups,
    )
    .unwrap();
    let oracle = circuit.materialize(DEFAULT_BUDGET).unwrap();
    let worst = relative_deviations(&amps, &oracle)
        .unwrap()
        .into_iter()
        .fold(0.0, f64::max);
    assert!(worst > TOL, "{worst}");
}

#[test]
fn leg_budget_is_enforced() {
    let circuit = rac(10, 2, 2).random(&mut ChaCha8Rng::seed_from_u64(0));
    assert!(build_equivalent(&circuit, 8).is_err());
}
