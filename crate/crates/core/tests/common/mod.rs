//! Brute-force and reference oracles shared by the integration suites.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use iafmc::{
    compute_gradients, init_params, predict_score, triple_loss, AssociationGraph, Dataset, HoldOut, Mode, ModelParams,
    ParamId, Regularization, ScoreContext, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
pub const ABS_FLOOR: f64 = 1e-8;

/// Every scalar parameter of the model.
pub fn all_params(p: &ModelParams) -> Vec<ParamId> {
    let mut ids = Vec::new();
    for item in 0..p.n_items() {
        for dim in 0..p.dim() {
            ids.push(ParamId::AssocFactor { item, dim });
            ids.push(ParamId::HistoryFactor { item, dim });
        }
        ids.push(ParamId::Bias(item));
        ids.push(ParamId::ItemSelfWeight(item));
    }
    for l in 0..p.order() {
        ids.push(ParamId::OrderWeight(l));
        for user in 0..p.n_users() {
            ids.push(ParamId::UserOrderWeight { user, l });
        }
    }
    ids.push(ParamId::SelfWeight);
    ids
}

pub struct Instance {
    pub ds: Dataset,
    pub graph: AssociationGraph,
    pub params: ModelParams,
    pub cfg: TrainConfig,
}

/// n = 5 users, m = 8 items, d = 3, L = 2, a random graph with 0-3
/// neighbors per item and random nonzero regularization weights.
pub fn random_instance(seed: u64, mode: Mode) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, m, d, order) = (5, 8, 3, 2);
    let sequences: Vec<Vec<usize>> = (0..n)
        .map(|_| {
            let len = rng.random_range(4..9);
            // keep at least two items unseen so negatives exist
            (0..len).map(|_| rng.random_range(0..m - 2)).collect()
        })
        .collect();
    let ds = Dataset::from_sequences(sequences, m).unwrap();

    // random graph: each item gets up to 3 partners with random weights
    let mut pairs: Vec<Vec<usize>> = Vec::new();
    for i in 0..m {
        for _ in 0..rng.random_range(0..=3) {
            let j = rng.random_range(0..m);
            for _ in 0..rng.random_range(1..4) {
                pairs.push(vec![i, j]);
            }
        }
    }
    let graph = AssociationGraph::build(pairs.iter().map(Vec::as_slice), m, 1);

    let mut params = init_params(n, m, d, order, mode, seed).unwrap();
    let mut scale = |x: &mut f64, s: f64| *x = rng.random_range(-s..s);
    for id in all_params(&params) {
        scale(params.get_mut(id), 0.8);
    }
    let cfg = TrainConfig {
        reg: Regularization {
            assoc: rng.random_range(0.01..0.5),
            history: rng.random_range(0.01..0.5),
            bias: rng.random_range(0.01..0.5),
            order: rng.random_range(0.01..0.5),
            self_weight: rng.random_range(0.01..0.5),
        },
        alpha: rng.random_range(0.0..1.0),
        beta: rng.random_range(0.0..1.0),
        ..Default::default()
    };
    if mode == Mode::Fossil {
        // Fossil pins ζ = 1 and ζ^i = 0; restore them after the random fill.
        let fresh = init_params(n, m, d, order, mode, seed).unwrap();
        *params.get_mut(ParamId::SelfWeight) = fresh.self_weight();
        for i in 0..m {
            *params.get_mut(ParamId::ItemSelfWeight(i)) = 0.0;
        }
    }
    Instance { ds, graph, params, cfg }
}

/// Checks every parameter: participating ones against the analytic value,
/// the rest against zero. Returns the number of components compared.
pub fn check(inst: &Instance, user: usize, t: usize, j: usize) -> usize {
    let Instance { ds, graph, params, cfg } = inst;
    let grad = compute_gradients(params, ds, graph, user, t, j, cfg).unwrap();
    let analytic: HashMap<ParamId, f64> = grad.iter().collect();
    let mut compared = 0;
    for id in all_params(params) {
        if params.mode() == Mode::Fossil && matches!(id, ParamId::SelfWeight | ParamId::ItemSelfWeight(_)) {
            assert!(!analytic.contains_key(&id), "fossil gradient has {id:?}");
            continue;
        }
        let mut plus = params.clone();
        *plus.get_mut(id) += STEP;
        let mut minus = params.clone();
        *minus.get_mut(id) -= STEP;
        let fd = (triple_loss(&plus, ds, graph, user, t, j, cfg).unwrap()
            - triple_loss(&minus, ds, graph, user, t, j, cfg).unwrap())
            / (2.0 * STEP);
        let a = analytic.get(&id).copied().unwrap_or(0.0);
        let tol = (REL_TOL * a.abs().max(fd.abs())).max(ABS_FLOOR);
        assert!(
            (a - fd).abs() <= tol,
            "{id:?}: analytic {a:e} vs finite difference {fd:e} (user {user}, t {t}, j {j})"
        );
        compared += 1;
    }
    compared
}

pub fn sweep_instances(mode: Mode, seeds: std::ops::Range<u64>) -> usize {
    let mut compared = 0;
    for seed in seeds {
        let inst = random_instance(seed, mode);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
        for _ in 0..3 {
            let user = rng.random_range(0..inst.ds.n_users());
            let len = inst.ds.train(user).len();
            let t = rng.random_range(2..=len);
            let negatives: Vec<usize> = (0..inst.ds.n_items()).filter(|&j| !inst.ds.in_train(user, j)).collect();
            let j = negatives[rng.random_range(0..negatives.len())];
            compared += check(&inst, user, t, j);
        }
    }
    compared
}

/// Score from the FISM and Markov terms alone, with no graph in sight:
/// b_i + U·T_i, accumulated in the same order as the model.
pub fn fossil_reference_score(p: &ModelParams, ds: &Dataset, ctx: &ScoreContext, item: usize, alpha: f64) -> f64 {
    let train = ds.train(ctx.user);
    let excluded = ctx.exclude_target.then(|| train[ctx.position - 1]);
    let mut history: Vec<usize> = train.to_vec();
    history.sort_unstable();
    history.dedup();
    history.retain(|&k| Some(k) != excluded);

    let mut u = vec![0.0; p.dim()];
    for &k in &history {
        for (x, w) in u.iter_mut().zip(p.history_factors(k)) {
            *x += 1.0 * w;
        }
    }
    if !history.is_empty() {
        let norm = (history.len() as f64).powf(-alpha);
        u.iter_mut().for_each(|x| *x *= norm);
    }
    for l in 1..=p.order().min(ctx.position - 1) {
        let k = train[ctx.position - 1 - l];
        let weight = p.order_weights()[l - 1] + p.user_order_weights(ctx.user)[l - 1];
        for (x, w) in u.iter_mut().zip(p.history_factors(k)) {
            *x += weight * w;
        }
    }
    let dot: f64 = u.iter().zip(p.assoc_factors(item)).map(|(a, b)| a * b).sum();
    p.bias(item) + dot
}

/// Unordered adjacent-pair counts, keyed `(min, max)`, skipping self pairs.
pub fn brute_force_pairs(sequences: &[Vec<usize>]) -> BTreeMap<(usize, usize), u32> {
    let mut counts = BTreeMap::new();
    for seq in sequences {
        for t in 1..seq.len() {
            let (a, b) = (seq[t - 1], seq[t]);
            if a != b {
                *counts.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
    }
    counts
}

/// Returns a description of the first disagreement between `g` and the
/// brute-force pair counts.
pub fn compare_graph(g: &AssociationGraph, sequences: &[Vec<usize>], n_items: usize) -> Result<(), String> {
    let pairs = brute_force_pairs(sequences);
    for i in 0..n_items {
        let mut expected: Vec<(usize, u32)> = pairs
            .iter()
            .filter_map(|(&(a, b), &w)| {
                if a == i {
                    Some((b, w))
                } else if b == i {
                    Some((a, w))
                } else {
                    None
                }
            })
            .collect();
        expected.sort_unstable();
        let got = g.neighbors(i).map_err(|e| e.to_string())?;
        if got != expected.as_slice() {
            return Err(format!("item {i}: graph {got:?}, brute force {expected:?}"));
        }
        let deg: u64 = expected.iter().map(|&(_, w)| u64::from(w)).sum();
        if g.degree_weight(i).map_err(|e| e.to_string())? != deg {
            return Err(format!("item {i}: degree weight mismatch"));
        }
    }
    let total: u64 = (0..n_items).map(|i| g.degree_weight(i).unwrap()).sum();
    let edges: u64 = pairs.values().map(|&w| u64::from(w)).sum();
    if total != 2 * edges {
        return Err(format!(
            "handshake: degree sum {total} vs twice the edge weight {}",
            2 * edges
        ));
    }
    Ok(())
}

/// Random sequences over `n_items` with repeats and self-adjacency allowed.
pub fn random_sequences(rng: &mut ChaCha8Rng, max_users: usize, n_items: usize) -> Vec<Vec<usize>> {
    let users = rng.random_range(1..=max_users);
    (0..users)
        .map(|_| {
            let len = rng.random_range(3..12);
            (0..len).map(|_| rng.random_range(0..n_items)).collect()
        })
        .collect()
}

/// Rank of each user's held-out item found by scoring every candidate
/// through `predict_score` and sorting the full list.
pub fn brute_force_ranks(
    p: &ModelParams,
    ds: &Dataset,
    g: &AssociationGraph,
    which: HoldOut,
    alpha: f64,
    beta: f64,
) -> Vec<Option<usize>> {
    (0..ds.n_users())
        .map(|u| {
            let target = ds.held_out(u, which);
            let seen: Vec<usize> = ds.train(u).to_vec();
            if seen.contains(&target) {
                return None;
            }
            let ctx = ScoreContext::next_item(ds, u);
            let mut scored: Vec<(f64, usize)> = (0..ds.n_items())
                .filter(|i| !seen.contains(i))
                .map(|i| (predict_score(p, ds, g, &ctx, i, alpha, beta).unwrap(), i))
                .collect();
            scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            Some(scored.iter().position(|&(_, i)| i == target).unwrap() + 1)
        })
        .collect()
}

pub fn brute_force_recall(ranks: &[Option<usize>], n: usize) -> f64 {
    let mut hits = 0usize;
    for r in ranks.iter().flatten() {
        if *r <= n {
            hits += 1;
        }
    }
    hits as f64 / ranks.len() as f64
}

pub fn brute_force_ndcg(ranks: &[Option<usize>], n: usize) -> f64 {
    let mut total = 0.0;
    for r in ranks {
        let gain = match r {
            Some(r) if *r <= n => 1.0 / (*r as f64 + 1.0).log2(),
            _ => 0.0,
        };
        total += gain;
    }
    total / ranks.len() as f64
}

/// A random dataset and randomly filled model for metric checks.
pub fn random_eval_instance(
    seed: u64,
    n_users: usize,
    n_items: usize,
    mode: Mode,
) -> (Dataset, AssociationGraph, ModelParams) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sequences: Vec<Vec<usize>> = (0..n_users)
        .map(|_| {
            let len = rng.random_range(3..10);
            (0..len).map(|_| rng.random_range(0..n_items)).collect()
        })
        .collect();
    let ds = Dataset::from_sequences(sequences, n_items).unwrap();
    let g = AssociationGraph::from_dataset(&ds);
    let mut p = init_params(n_users, n_items, 4, 2, mode, seed).unwrap();
    for id in all_params(&p) {
        if mode == Mode::Fossil && matches!(id, ParamId::SelfWeight | ParamId::ItemSelfWeight(_)) {
            continue;
        }
        // coarse values make exact score ties likely
        *p.get_mut(id) = f64::from(rng.random_range(-2i32..=2)) / 2.0;
    }
    (ds, g, p)
}

/// A random scoring context and an item it may score.
pub fn random_probe(rng: &mut ChaCha8Rng, ds: &Dataset) -> (ScoreContext, usize) {
    let user = rng.random_range(0..ds.n_users());
    let len = ds.train(user).len();
    if rng.random_bool(0.5) {
        let t = rng.random_range(1..=len);
        (ScoreContext::positive(user, t), ds.train(user)[t - 1])
    } else {
        let t = rng.random_range(1..=len + 1);
        (ScoreContext::negative(user, t), rng.random_range(0..ds.n_items()))
    }
}

/// Overwrites every free parameter with a uniform draw from (-1, 1).
/// Fossil's pinned self weights are left alone.
pub fn fill_uniform(p: &mut ModelParams, rng: &mut ChaCha8Rng) {
    for id in all_params(p) {
        if p.mode() == Mode::Fossil && matches!(id, ParamId::SelfWeight | ParamId::ItemSelfWeight(_)) {
            continue;
        }
        *p.get_mut(id) = rng.random_range(-1.0..1.0);
    }
}
