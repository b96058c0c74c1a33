//! Analytic triple gradients against central finite differences of the loss.

mod common;

use common::{all_params, check, sweep_instances, Instance};
use iafmc::{init_params, AssociationGraph, Dataset, Mode, Regularization, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn iafmc_gradients_match_finite_differences() {
    assert!(sweep_instances(Mode::Iafmc, 0..25) > 0);
}

#[test]
fn fossil_gradients_match_finite_differences() {
    assert!(sweep_instances(Mode::Fossil, 100..110) > 0);
}

#[test]
fn shared_neighbors_and_short_prefixes() {
    // target and negative share neighbor 2; the negative neighbors the target;
    // position 2 leaves only one Markov order available with L = 2
    let ds = Dataset::from_sequences(vec![vec![0, 1, 0, 1, 4], vec![1, 0, 1, 0, 3]], 6).unwrap();
    let graph = AssociationGraph::build([&[0usize, 2, 5, 2, 1, 5, 0][..]], 6, 1);
    let mut params = init_params(2, 6, 3, 2, Mode::Iafmc, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for id in all_params(&params) {
        *params.get_mut(id) = rng.random_range(-1.0..1.0);
    }
    let inst = Instance {
        ds,
        graph,
        params,
        cfg: TrainConfig {
            reg: Regularization::uniform(0.3),
            ..Default::default()
        },
    };
    check(&inst, 0, 2, 5);
    check(&inst, 0, 3, 5);
    check(&inst, 1, 3, 2);
}
