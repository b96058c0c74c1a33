//! Reference implementations against the library: Fossil scoring, the
//! association graph, and full-catalog evaluation.

mod common;

use common::{
    brute_force_ndcg, brute_force_ranks, brute_force_recall, compare_graph, fill_uniform, fossil_reference_score,
    random_eval_instance, random_probe, random_sequences,
};
use iafmc::{evaluate_split, init_params, predict_score, AssociationGraph, Dataset, GroupEdges, HoldOut, Mode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn fossil_mode_matches_graph_free_reference() {
    let (ds, g, mut p) = random_eval_instance(11, 20, 30, Mode::Fossil);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    fill_uniform(&mut p, &mut rng);
    for _ in 0..1000 {
        let (ctx, item) = random_probe(&mut rng, &ds);
        let alpha = rng.random_range(0.0..1.0);
        let beta = rng.random_range(0.0..1.0);
        let got = predict_score(&p, &ds, &g, &ctx, item, alpha, beta).unwrap();
        assert_eq!(
            got.to_bits(),
            fossil_reference_score(&p, &ds, &ctx, item, alpha).to_bits(),
            "{ctx:?} item {item}"
        );
    }
}

#[test]
fn iafmc_without_edges_and_unit_self_weight_is_fossil() {
    let (ds, _, mut fossil) = random_eval_instance(12, 15, 20, Mode::Fossil);
    fill_uniform(&mut fossil, &mut ChaCha8Rng::seed_from_u64(13));
    let mut iafmc = init_params(15, 20, 4, 2, Mode::Iafmc, 0).unwrap();
    for i in 0..20 {
        iafmc.assoc_factors_mut(i).copy_from_slice(fossil.assoc_factors(i));
        iafmc.history_factors_mut(i).copy_from_slice(fossil.history_factors(i));
        iafmc.biases_mut()[i] = fossil.bias(i);
    }
    iafmc.order_weights_mut().copy_from_slice(fossil.order_weights());
    for u in 0..15 {
        iafmc
            .user_order_weights_mut(u)
            .copy_from_slice(fossil.user_order_weights(u));
    }
    iafmc.set_self_weights(1.0, &[0.0; 20]);
    let empty = AssociationGraph::empty(20);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..200 {
        let (ctx, item) = random_probe(&mut rng, &ds);
        let a = predict_score(&iafmc, &ds, &empty, &ctx, item, 0.3, 0.7).unwrap();
        let b = predict_score(&fossil, &ds, &empty, &ctx, item, 0.3, 0.7).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn graph_matches_pair_counter() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10 {
        let m = rng.random_range(2..=15);
        let seqs = random_sequences(&mut rng, 50, m);
        let g = AssociationGraph::build(seqs.iter().map(Vec::as_slice), m, 1);
        compare_graph(&g, &seqs, m).unwrap();
    }
}

#[test]
fn graph_from_dataset_ignores_held_out_items() {
    let ds = Dataset::from_sequences(vec![vec![0, 1, 2, 3, 4], vec![2, 1, 4, 0]], 6).unwrap();
    let g = AssociationGraph::from_dataset(&ds);
    let prefixes: Vec<Vec<usize>> = ds.train_prefixes().map(<[usize]>::to_vec).collect();
    compare_graph(&g, &prefixes, 6).unwrap();
    assert!(g.neighbors(4).unwrap().iter().all(|&(k, _)| k != 3));
}

#[test]
fn evaluation_matches_score_all_and_sort() {
    for seed in 0..10 {
        for mode in [Mode::Iafmc, Mode::Fossil] {
            let (ds, g, p) = random_eval_instance(seed, 20, 30, mode);
            for which in [HoldOut::Validation, HoldOut::Test] {
                let report = evaluate_split(&p, &ds, &g, which, &[5, 10], 0.2, 0.4, &GroupEdges::default()).unwrap();
                let ranks = brute_force_ranks(&p, &ds, &g, which, 0.2, 0.4);
                assert_eq!(report.hit_ranks, ranks);
                for m in &report.metrics {
                    assert_eq!(m.recall, brute_force_recall(&ranks, m.n));
                    assert_eq!(m.ndcg, brute_force_ndcg(&ranks, m.n));
                }
            }
        }
    }
}
