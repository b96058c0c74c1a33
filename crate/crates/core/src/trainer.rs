//! Pairwise-ranking SGD.
//!
//! Every epoch visits each observed (user, position) pair with `position ≥ 2`
//! once in a seeded random order, draws one unobserved item as the negative
//! and applies `θ ← θ − λ ∇θ` immediately. The per-triple objective is
//!
//! ```text
//! f(u, t, j) = −ln σ(r̂(u, i_t) − r̂(u, j)) + R(u, t, j)
//! ```
//!
//! with `R` the L2 penalty on exactly the parameters the triple touches.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assoc::AssociationGraph;
use crate::dataset::{Dataset, HoldOut};
use crate::error::{check_index, Error, Result};
use crate::evaluator;
use crate::model::{
    assoc_norm, axpy, composite_unchecked, dot, user_context, Mode, ModelParams, ParamId, ScoreContext,
};

/// Regularization tradeoffs for T, W, b, (η, η^u) and (ζ, ζ^i).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regularization {
    pub assoc: f64,
    pub history: f64,
    pub bias: f64,
    pub order: f64,
    pub self_weight: f64,
}

impl Regularization {
    pub fn uniform(value: f64) -> Self {
        Self {
            assoc: value,
            history: value,
            bias: value,
            order: value,
            self_weight: value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub reg: Regularization,
    /// Exponent of the history-set normalizer.
    pub alpha: f64,
    /// Exponent of the association-degree normalizer, in [0, 1].
    pub beta: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Validation cadence in epochs; 0 disables validation and model selection.
    pub eval_every: usize,
    /// Number of fixed triples the per-epoch monitoring loss averages over.
    pub monitor_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            reg: Regularization::uniform(0.01),
            alpha: 0.2,
            beta: 0.2,
            epochs: 100,
            seed: 0,
            eval_every: 10,
            monitor_size: 1024,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning rate must be non-negative, got {}",
                self.learning_rate
            ));
        }
        let r = self.reg;
        if [r.assoc, r.history, r.bias, r.order, r.self_weight]
            .iter()
            .any(|v| !(*v >= 0.0 && v.is_finite()))
        {
            return bad("regularization weights must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return bad(format!("beta must lie in [0, 1], got {}", self.beta));
        }
        if !self.alpha.is_finite() {
            return bad("alpha must be finite".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        Ok(())
    }
}

/// Derives an independent sub-seed for a named stream (epoch order,
/// negatives, monitoring sample, sweep repeat...).
pub fn sub_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_ORDER: u64 = 1;
const STREAM_NEGATIVES: u64 = 2;
const STREAM_MONITOR: u64 = 3;

/// Gradient of one triple, keyed by participating parameter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TripleGradient {
    pub user: usize,
    pub assoc: BTreeMap<usize, Vec<f64>>,
    pub history: BTreeMap<usize, Vec<f64>>,
    pub bias: BTreeMap<usize, f64>,
    /// `order[l]` is the gradient of η_{l+1}; only available orders appear.
    pub order: Vec<f64>,
    pub user_order: Vec<f64>,
    /// ζ, absent in Fossil mode.
    pub self_weight: Option<f64>,
    pub item_self: BTreeMap<usize, f64>,
}

impl TripleGradient {
    pub fn iter(&self) -> impl Iterator<Item = (ParamId, f64)> + '_ {
        let assoc = self.assoc.iter().flat_map(|(&item, g)| {
            g.iter()
                .enumerate()
                .map(move |(dim, &v)| (ParamId::AssocFactor { item, dim }, v))
        });
        let history = self.history.iter().flat_map(|(&item, g)| {
            g.iter()
                .enumerate()
                .map(move |(dim, &v)| (ParamId::HistoryFactor { item, dim }, v))
        });
        let bias = self.bias.iter().map(|(&i, &v)| (ParamId::Bias(i), v));
        let order = self
            .order
            .iter()
            .enumerate()
            .map(|(l, &v)| (ParamId::OrderWeight(l), v));
        let user = self.user;
        let user_order = self
            .user_order
            .iter()
            .enumerate()
            .map(move |(l, &v)| (ParamId::UserOrderWeight { user, l }, v));
        let zeta = self.self_weight.map(|v| (ParamId::SelfWeight, v));
        let item_self = self.item_self.iter().map(|(&i, &v)| (ParamId::ItemSelfWeight(i), v));
        assoc
            .chain(history)
            .chain(bias)
            .chain(order)
            .chain(user_order)
            .chain(zeta)
            .chain(item_self)
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|(_, v)| v.is_finite())
    }

    /// `θ ← θ − λ ∇θ` for every participating parameter.
    pub fn apply(&self, p: &mut ModelParams, learning_rate: f64) {
        for (&item, g) in &self.assoc {
            axpy(-learning_rate, g, p.assoc_factors_mut(item));
        }
        for (&item, g) in &self.history {
            axpy(-learning_rate, g, p.history_factors_mut(item));
        }
        for (&i, &g) in &self.bias {
            p.bias[i] -= learning_rate * g;
        }
        let order = p.order;
        for (l, &g) in self.order.iter().enumerate() {
            p.order_weights[l] -= learning_rate * g;
        }
        for (l, &g) in self.user_order.iter().enumerate() {
            p.user_order_weights[self.user * order + l] -= learning_rate * g;
        }
        if let Some(g) = self.self_weight {
            p.self_weight -= learning_rate * g;
        }
        for (&i, &g) in &self.item_self {
            p.item_self_weights[i] -= learning_rate * g;
        }
    }
}

/// Forward quantities shared by the loss and its gradient.
struct Forward {
    target: usize,
    negative: usize,
    pos: crate::model::UserContext,
    neg: crate::model::UserContext,
    v_pos: Vec<f64>,
    v_neg: Vec<f64>,
    r_pos: f64,
    r_neg: f64,
}

#[allow(clippy::too_many_arguments)]
fn forward(
    p: &ModelParams,
    ds: &Dataset,
    g: &AssociationGraph,
    user: usize,
    t: usize,
    j: usize,
    alpha: f64,
    beta: f64,
) -> Result<Forward> {
    p.check_shape(ds)?;
    check_index("user", user, ds.n_users())?;
    check_index("item", j, ds.n_items())?;
    if p.mode == Mode::Iafmc && g.n_items() != p.n_items {
        return Err(Error::InvalidArgument("graph and model disagree on item count".into()));
    }
    let len = ds.train(user).len();
    if t < 2 || t > len {
        return Err(Error::Contract(format!(
            "position {t} is not a trainable position of user {user} (train length {len})"
        )));
    }
    if ds.in_train(user, j) {
        return Err(Error::Contract(format!(
            "negative item {j} was observed by user {user}"
        )));
    }
    let pos_ctx = ScoreContext::positive(user, t);
    let target = ds.train(user)[t - 1];
    let pos = user_context(p, ds, &pos_ctx, alpha);
    let neg = user_context(p, ds, &ScoreContext::negative(user, t), alpha);
    let v_pos = composite_unchecked(p, g, target, beta);
    let v_neg = composite_unchecked(p, g, j, beta);
    let r_pos = p.bias[target] + dot(&pos.vector, &v_pos);
    let r_neg = p.bias[j] + dot(&neg.vector, &v_neg);
    Ok(Forward {
        target,
        negative: j,
        pos,
        neg,
        v_pos,
        v_neg,
        r_pos,
        r_neg,
    })
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `−ln σ(x)` without overflow.
fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

fn sq(v: &[f64]) -> f64 {
    dot(v, v)
}

/// f(u, t, j): BPR loss plus the L2 penalty over the triple's parameters.
pub fn triple_loss(
    p: &ModelParams,
    ds: &Dataset,
    g: &AssociationGraph,
    user: usize,
    t: usize,
    j: usize,
    cfg: &TrainConfig,
) -> Result<f64> {
    let fw = forward(p, ds, g, user, t, j, cfg.alpha, cfg.beta)?;
    let reg = cfg.reg;
    let (i, j) = (fw.target, fw.negative);

    let mut r_assoc = sq(p.assoc_factors(i)) + sq(p.assoc_factors(j));
    if p.mode == Mode::Iafmc {
        for item in [i, j] {
            r_assoc += g
                .neighbors_unchecked(item)
                .iter()
                .map(|&(k, _)| sq(p.assoc_factors(k)))
                .sum::<f64>();
        }
    }
    let r_history = ds
        .train_items(user)
        .iter()
        .map(|&k| sq(p.history_factors(k)))
        .sum::<f64>()
        + fw.pos.markov.iter().map(|&k| sq(p.history_factors(k))).sum::<f64>();
    let r_bias = p.bias[i].powi(2) + p.bias[j].powi(2);
    let available = fw.pos.markov.len();
    let r_order = p.order_weights[..available].iter().map(|x| x * x).sum::<f64>()
        + p.user_order_weights(user)[..available]
            .iter()
            .map(|x| x * x)
            .sum::<f64>();
    let r_self = match p.mode {
        Mode::Iafmc => p.self_weight.powi(2) + p.item_self_weights[i].powi(2) + p.item_self_weights[j].powi(2),
        Mode::Fossil => 0.0,
    };
    let penalty = 0.5
        * (reg.assoc * r_assoc
            + reg.history * r_history
            + reg.bias * r_bias
            + reg.order * r_order
            + reg.self_weight * r_self);
    Ok(neg_log_sigmoid(fw.r_pos - fw.r_neg) + penalty)
}

fn row(map: &mut BTreeMap<usize, Vec<f64>>, key: usize, dim: usize) -> &mut Vec<f64> {
    map.entry(key).or_insert_with(|| vec![0.0; dim])
}

/// Analytic gradient of [`triple_loss`].
pub fn compute_gradients(
    p: &ModelParams,
    ds: &Dataset,
    g: &AssociationGraph,
    user: usize,
    t: usize,
    j: usize,
    cfg: &TrainConfig,
) -> Result<TripleGradient> {
    let fw = forward(p, ds, g, user, t, j, cfg.alpha, cfg.beta)?;
    let reg = cfg.reg;
    let dim = p.dim;
    let (i, j) = (fw.target, fw.negative);
    // σ(r̂_j − r̂_i) = −∂(−ln σ(r̂_i − r̂_j)) / ∂r̂_i
    let s = sigmoid(fw.r_neg - fw.r_pos);
    let u_pos = &fw.pos.vector;
    let u_neg = &fw.neg.vector;

    let mut out = TripleGradient {
        user,
        ..Default::default()
    };

    // T
    match p.mode {
        Mode::Iafmc => {
            for (item, u, sign) in [(i, u_pos, -s), (j, u_neg, s)] {
                if let Some(norm) = assoc_norm(g, item, cfg.beta) {
                    for &(k, delta) in g.neighbors_unchecked(item) {
                        let r = row(&mut out.assoc, k, dim);
                        axpy(sign * norm * f64::from(delta), u, r);
                        axpy(reg.assoc, p.assoc_factors(k), r);
                    }
                }
                let r = row(&mut out.assoc, item, dim);
                axpy(sign * (p.self_weight + p.item_self_weights[item]), u, r);
                axpy(reg.assoc, p.assoc_factors(item), r);
            }
        }
        Mode::Fossil => {
            for (item, u, sign) in [(i, u_pos, -s), (j, u_neg, s)] {
                let r = row(&mut out.assoc, item, dim);
                axpy(sign, u, r);
                axpy(reg.assoc, p.assoc_factors(item), r);
            }
        }
    }

    // W
    for &k in ds.train_items(user) {
        let r = row(&mut out.history, k, dim);
        if Some(k) != fw.pos.excluded {
            if let Some(norm) = fw.pos.fism_norm {
                axpy(-s * norm, &fw.v_pos, r);
            }
        }
        if let Some(norm) = fw.neg.fism_norm {
            axpy(s * norm, &fw.v_neg, r);
        }
        axpy(reg.history, p.history_factors(k), r);
    }
    let v_diff: Vec<f64> = fw.v_pos.iter().zip(&fw.v_neg).map(|(a, b)| a - b).collect();
    let user_eta = p.user_order_weights(user);
    for (l, &k) in fw.pos.markov.iter().enumerate() {
        let weight = p.order_weights[l] + user_eta[l];
        let r = row(&mut out.history, k, dim);
        axpy(-s * weight, &v_diff, r);
        axpy(reg.history, p.history_factors(k), r);

        let along = dot(p.history_factors(k), &v_diff);
        out.order.push(reg.order * p.order_weights[l] - s * along);
        out.user_order.push(reg.order * user_eta[l] - s * along);
    }

    // b
    out.bias.insert(i, reg.bias * p.bias[i] - s);
    out.bias.insert(j, reg.bias * p.bias[j] + s);

    // ζ, ζ^i
    if p.mode == Mode::Iafmc {
        let pos_self = dot(u_pos, p.assoc_factors(i));
        let neg_self = dot(u_neg, p.assoc_factors(j));
        out.self_weight = Some(reg.self_weight * p.self_weight - s * (pos_self - neg_self));
        out.item_self
            .insert(i, reg.self_weight * p.item_self_weights[i] - s * pos_self);
        out.item_self
            .insert(j, reg.self_weight * p.item_self_weights[j] + s * neg_self);
    }
    Ok(out)
}

/// All trainable (user, position) pairs, `position ∈ 2..=|train|`, in a
/// seeded uniformly random order.
pub fn sample_positive_order(ds: &Dataset, epoch_seed: u64) -> Vec<(usize, usize)> {
    let mut pairs = eligible_positions(ds);
    pairs.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
    pairs
}

fn eligible_positions(ds: &Dataset) -> Vec<(usize, usize)> {
    (0..ds.n_users())
        .flat_map(|u| (2..=ds.train(u).len()).map(move |t| (u, t)))
        .collect()
}

const REJECTION_TRIES: usize = 64;

/// Uniform draw from the items `user` has not interacted with in training.
pub fn sample_negative<R: Rng + ?Sized>(ds: &Dataset, user: usize, rng: &mut R) -> Result<usize> {
    let m = ds.n_items();
    let seen = ds.train_items(user);
    if seen.len() >= m {
        return Err(Error::Sampling { user });
    }
    for _ in 0..REJECTION_TRIES {
        let j = rng.random_range(0..m);
        if seen.binary_search(&j).is_err() {
            return Ok(j);
        }
    }
    // dense history: pick directly from the complement
    let k = rng.random_range(0..m - seen.len());
    let mut remaining = k;
    for j in 0..m {
        if seen.binary_search(&j).is_err() {
            if remaining == 0 {
                return Ok(j);
            }
            remaining -= 1;
        }
    }
    unreachable!("complement has {} items", m - seen.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_monitor_loss: f64,
    pub val_recall_at_10: Option<f64>,
    pub wall_seconds: f64,
}

impl EpochLog {
    pub const CSV_HEADER: &'static str = "epoch,mean_monitor_loss,val_recall@10,wall_seconds";

    pub fn csv_row(&self) -> String {
        let recall = self.val_recall_at_10.map(|r| r.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{:.3}",
            self.epoch, self.mean_monitor_loss, recall, self.wall_seconds
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestSnapshot {
    pub epoch: usize,
    pub val_recall_at_10: f64,
    pub params: ModelParams,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub final_params: ModelParams,
    pub best: Option<BestSnapshot>,
    pub log: Vec<EpochLog>,
}

impl TrainOutcome {
    /// Best validation snapshot when validation ran, otherwise the final parameters.
    pub fn selected(&self) -> &ModelParams {
        self.best.as_ref().map_or(&self.final_params, |b| &b.params)
    }

    pub fn into_selected(self) -> ModelParams {
        match self.best {
            Some(b) => b.params,
            None => self.final_params,
        }
    }
}

/// What an epoch hook sees after each epoch.
pub struct EpochState<'a> {
    pub epoch: usize,
    pub current: &'a ModelParams,
    /// Parameters `train` would return if it stopped here.
    pub selected: &'a ModelParams,
    pub log: &'a EpochLog,
}

struct MonitorTriple {
    user: usize,
    position: usize,
    negative: usize,
}

fn monitor_sample(ds: &Dataset, cfg: &TrainConfig) -> Result<Vec<MonitorTriple>> {
    let positions = eligible_positions(ds);
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, STREAM_MONITOR, 0));
    (0..cfg.monitor_size)
        .map(|_| {
            let (user, position) = positions[rng.random_range(0..positions.len())];
            let negative = sample_negative(ds, user, &mut rng)?;
            Ok(MonitorTriple {
                user,
                position,
                negative,
            })
        })
        .collect()
}

pub fn train(params: ModelParams, ds: &Dataset, g: &AssociationGraph, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_hook(params, ds, g, cfg, |_| {})
}

/// Runs `cfg.epochs` epochs of SGD. The hook is called after every epoch.
pub fn train_with_hook<F>(
    mut params: ModelParams,
    ds: &Dataset,
    g: &AssociationGraph,
    cfg: &TrainConfig,
    mut hook: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&EpochState<'_>),
{
    cfg.validate()?;
    params.check_shape(ds)?;
    if params.mode == Mode::Iafmc && g.n_items() != params.n_items {
        return Err(Error::InvalidArgument("graph and model disagree on item count".into()));
    }
    if eligible_positions(ds).is_empty() {
        return Err(Error::InvalidArgument(
            "no user has a training prefix longer than one item".into(),
        ));
    }
    let monitor = monitor_sample(ds, cfg)?;
    let started = Instant::now();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<BestSnapshot> = None;

    for epoch in 1..=cfg.epochs {
        let order = sample_positive_order(ds, sub_seed(cfg.seed, STREAM_ORDER, epoch as u64));
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, STREAM_NEGATIVES, epoch as u64));
        for (user, t) in order {
            let j = sample_negative(ds, user, &mut rng)?;
            let grad = compute_gradients(&params, ds, g, user, t, j, cfg)?;
            grad.apply(&mut params, cfg.learning_rate);
        }
        if !params.all_finite() {
            return Err(Error::Divergence { epoch });
        }

        let mean_monitor_loss = if monitor.is_empty() {
            f64::NAN
        } else {
            let mut total = 0.0;
            for m in &monitor {
                total += triple_loss(&params, ds, g, m.user, m.position, m.negative, cfg)?;
            }
            total / monitor.len() as f64
        };

        let val_recall_at_10 = if cfg.eval_every > 0 && epoch % cfg.eval_every == 0 {
            let ranks = evaluator::hit_ranks(&params, ds, g, HoldOut::Validation, cfg.alpha, cfg.beta)?;
            let recall = evaluator::recall_at_n(&ranks, 10)?;
            if best.as_ref().is_none_or(|b| recall > b.val_recall_at_10) {
                best = Some(BestSnapshot {
                    epoch,
                    val_recall_at_10: recall,
                    params: params.clone(),
                });
            }
            Some(recall)
        } else {
            None
        };

        let entry = EpochLog {
            epoch,
            mean_monitor_loss,
            val_recall_at_10,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        hook(&EpochState {
            epoch,
            current: &params,
            selected: best.as_ref().map_or(&params, |b| &b.params),
            log: &entry,
        });
        log.push(entry);
    }

    Ok(TrainOutcome {
        final_params: params,
        best,
        log,
    })
}
