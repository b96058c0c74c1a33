//! Trainable parameters and the scoring pipeline.
//!
//! A candidate item `i` for user `u` at sequence position `t` scores
//!
//! ```text
//! r(u, i) = b_i + U(u, t) · V_i
//! U(u, t) = |E|^-α Σ_{k∈E} W_k + Σ_{ℓ=1}^{min(L, t-1)} (η_ℓ + η_ℓ^u) W_{S_u[t-ℓ]}
//! V_i     = deg(i)^-β Σ_{k∈M_i} δ_ik T_k + (ζ + ζ_i) T_i
//! ```
//!
//! where `E` is the user's distinct training items (minus the target when
//! scoring an observed position) and `M_i` the item's association
//! neighborhood. In Fossil mode `V_i = T_i` and the graph is never read.

use std::io::{Read, Write};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::assoc::AssociationGraph;
use crate::dataset::Dataset;
use crate::error::{check_index, Error, Result};

pub const INIT_STD: f64 = 0.01;

const CHECKPOINT_FORMAT: &str = "iafmc-model";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Iafmc,
    Fossil,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "iafmc" => Ok(Self::Iafmc),
            "fossil" => Ok(Self::Fossil),
            other => Err(Error::InvalidArgument(format!("unknown mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Iafmc => "iafmc",
            Mode::Fossil => "fossil",
        })
    }
}

/// Addresses a single scalar parameter. Order indices `l` are zero-based
/// (`l = 0` is the first-order weight).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamId {
    AssocFactor { item: usize, dim: usize },
    HistoryFactor { item: usize, dim: usize },
    Bias(usize),
    OrderWeight(usize),
    UserOrderWeight { user: usize, l: usize },
    SelfWeight,
    ItemSelfWeight(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub(crate) n_users: usize,
    pub(crate) n_items: usize,
    pub(crate) dim: usize,
    pub(crate) order: usize,
    pub(crate) mode: Mode,
    /// T, row-major `n_items × dim`.
    pub(crate) assoc: Vec<f64>,
    /// W, row-major `n_items × dim`.
    pub(crate) history: Vec<f64>,
    pub(crate) bias: Vec<f64>,
    /// η, length `order`.
    pub(crate) order_weights: Vec<f64>,
    /// η^u, row-major `n_users × order`.
    pub(crate) user_order_weights: Vec<f64>,
    /// ζ
    pub(crate) self_weight: f64,
    /// ζ^i
    pub(crate) item_self_weights: Vec<f64>,
}

/// Latent factors drawn iid from N(0, 0.01²); biases and order weights
/// start at zero, ζ at one and ζ^i at zero.
pub fn init_params(
    n_users: usize,
    n_items: usize,
    dim: usize,
    order: usize,
    mode: Mode,
    seed: u64,
) -> Result<ModelParams> {
    for (name, v) in [
        ("n_users", n_users),
        ("n_items", n_items),
        ("dim", dim),
        ("order", order),
    ] {
        if v == 0 {
            return Err(Error::InvalidArgument(format!("{name} must be positive")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, INIT_STD).expect("valid normal");
    let mut draw = |len: usize| -> Vec<f64> { (0..len).map(|_| normal.sample(&mut rng)).collect() };
    let assoc = draw(n_items * dim);
    let history = draw(n_items * dim);
    Ok(ModelParams {
        n_users,
        n_items,
        dim,
        order,
        mode,
        assoc,
        history,
        bias: vec![0.0; n_items],
        order_weights: vec![0.0; order],
        user_order_weights: vec![0.0; n_users * order],
        self_weight: 1.0,
        item_self_weights: vec![0.0; n_items],
    })
}

/// Number of trainable scalars.
pub fn param_count(n_users: u64, n_items: u64, dim: u64, order: u64, mode: Mode) -> u64 {
    let fossil = 2 * n_items * dim + n_items + (1 + n_users) * order;
    match mode {
        Mode::Fossil => fossil,
        Mode::Iafmc => fossil + n_items + 1,
    }
}

impl ModelParams {
    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn param_count(&self) -> u64 {
        param_count(
            self.n_users as u64,
            self.n_items as u64,
            self.dim as u64,
            self.order as u64,
            self.mode,
        )
    }

    pub fn assoc_factors(&self, item: usize) -> &[f64] {
        &self.assoc[item * self.dim..(item + 1) * self.dim]
    }

    pub fn assoc_factors_mut(&mut self, item: usize) -> &mut [f64] {
        &mut self.assoc[item * self.dim..(item + 1) * self.dim]
    }

    pub fn history_factors(&self, item: usize) -> &[f64] {
        &self.history[item * self.dim..(item + 1) * self.dim]
    }

    pub fn history_factors_mut(&mut self, item: usize) -> &mut [f64] {
        &mut self.history[item * self.dim..(item + 1) * self.dim]
    }

    pub fn bias(&self, item: usize) -> f64 {
        self.bias[item]
    }

    pub fn biases_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn order_weights(&self) -> &[f64] {
        &self.order_weights
    }

    pub fn order_weights_mut(&mut self) -> &mut [f64] {
        &mut self.order_weights
    }

    pub fn user_order_weights(&self, user: usize) -> &[f64] {
        &self.user_order_weights[user * self.order..(user + 1) * self.order]
    }

    pub fn user_order_weights_mut(&mut self, user: usize) -> &mut [f64] {
        &mut self.user_order_weights[user * self.order..(user + 1) * self.order]
    }

    pub fn self_weight(&self) -> f64 {
        self.self_weight
    }

    pub fn item_self_weight(&self, item: usize) -> f64 {
        self.item_self_weights[item]
    }

    /// Overrides ζ and ζ^i. Ignored in Fossil mode, where both are fixed.
    pub fn set_self_weights(&mut self, global: f64, per_item: &[f64]) {
        if self.mode == Mode::Fossil {
            return;
        }
        self.self_weight = global;
        self.item_self_weights.copy_from_slice(per_item);
    }

    pub fn get(&self, id: ParamId) -> f64 {
        match id {
            ParamId::AssocFactor { item, dim } => self.assoc[item * self.dim + dim],
            ParamId::HistoryFactor { item, dim } => self.history[item * self.dim + dim],
            ParamId::Bias(i) => self.bias[i],
            ParamId::OrderWeight(l) => self.order_weights[l],
            ParamId::UserOrderWeight { user, l } => self.user_order_weights[user * self.order + l],
            ParamId::SelfWeight => self.self_weight,
            ParamId::ItemSelfWeight(i) => self.item_self_weights[i],
        }
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut f64 {
        match id {
            ParamId::AssocFactor { item, dim } => &mut self.assoc[item * self.dim + dim],
            ParamId::HistoryFactor { item, dim } => &mut self.history[item * self.dim + dim],
            ParamId::Bias(i) => &mut self.bias[i],
            ParamId::OrderWeight(l) => &mut self.order_weights[l],
            ParamId::UserOrderWeight { user, l } => &mut self.user_order_weights[user * self.order + l],
            ParamId::SelfWeight => &mut self.self_weight,
            ParamId::ItemSelfWeight(i) => &mut self.item_self_weights[i],
        }
    }

    pub fn all_finite(&self) -> bool {
        self.assoc
            .iter()
            .chain(&self.history)
            .chain(&self.bias)
            .chain(&self.order_weights)
            .chain(&self.user_order_weights)
            .chain(&self.item_self_weights)
            .chain(std::iter::once(&self.self_weight))
            .all(|v| v.is_finite())
    }

    pub(crate) fn check_shape(&self, ds: &Dataset) -> Result<()> {
        if self.n_users != ds.n_users() || self.n_items != ds.n_items() {
            return Err(Error::InvalidArgument(format!(
                "model is shaped for {} users / {} items, dataset has {} / {}",
                self.n_users,
                self.n_items,
                ds.n_users(),
                ds.n_items()
            )));
        }
        Ok(())
    }
}

/// Where in a user's training prefix a score is evaluated.
///
/// `position` is 1-based. With `exclude_target` set the context scores the
/// observed item at `position` and leaves it out of the history sum; without
/// it, nothing is excluded (a sampled negative, or the next-item context
/// `position = |train| + 1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoreContext {
    pub user: usize,
    pub position: usize,
    pub exclude_target: bool,
}

impl ScoreContext {
    pub fn positive(user: usize, position: usize) -> Self {
        Self {
            user,
            position,
            exclude_target: true,
        }
    }

    pub fn negative(user: usize, position: usize) -> Self {
        Self {
            user,
            position,
            exclude_target: false,
        }
    }

    /// Context right after the end of the training prefix.
    pub fn next_item(ds: &Dataset, user: usize) -> Self {
        Self::negative(user, ds.train(user).len() + 1)
    }

    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        check_index("user", self.user, ds.n_users())?;
        let len = ds.train(self.user).len();
        let max = if self.exclude_target { len } else { len + 1 };
        if self.position == 0 || self.position > max {
            return Err(Error::InvalidArgument(format!(
                "position {} outside 1..={max} for user {}",
                self.position, self.user
            )));
        }
        Ok(())
    }

    pub fn target(&self, ds: &Dataset) -> Option<usize> {
        self.exclude_target.then(|| ds.train(self.user)[self.position - 1])
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Normalizer `deg^-β` of the association term, `None` for an empty neighborhood.
pub(crate) fn assoc_norm(graph: &AssociationGraph, item: usize, beta: f64) -> Option<f64> {
    match graph.degree_weight_unchecked(item) {
        0 => None,
        deg => Some((deg as f64).powf(-beta)),
    }
}

/// V_i. Items without neighbors reduce to the self term.
pub fn composite_item_vector(p: &ModelParams, graph: &AssociationGraph, item: usize, beta: f64) -> Result<Vec<f64>> {
    check_index("item", item, p.n_items)?;
    if p.mode == Mode::Iafmc {
        check_index("item", item, graph.n_items())?;
    }
    Ok(composite_unchecked(p, graph, item, beta))
}

pub(crate) fn composite_unchecked(p: &ModelParams, graph: &AssociationGraph, item: usize, beta: f64) -> Vec<f64> {
    let own = p.assoc_factors(item);
    if p.mode == Mode::Fossil {
        return own.to_vec();
    }
    let mut v = vec![0.0; p.dim];
    if let Some(norm) = assoc_norm(graph, item, beta) {
        for &(k, delta) in graph.neighbors_unchecked(item) {
            axpy(f64::from(delta), p.assoc_factors(k), &mut v);
        }
        v.iter_mut().for_each(|x| *x *= norm);
    }
    axpy(p.self_weight + p.item_self_weights[item], own, &mut v);
    v
}

/// The pieces of U(u, t), kept apart so the trainer can reuse them.
pub(crate) struct UserContext {
    pub vector: Vec<f64>,
    /// `|E|^-α`, or `None` when the history set is empty.
    pub fism_norm: Option<f64>,
    pub excluded: Option<usize>,
    /// Items feeding the Markov term, `markov[l]` is order `l + 1`.
    pub markov: Vec<usize>,
}

pub(crate) fn user_context(p: &ModelParams, ds: &Dataset, ctx: &ScoreContext, alpha: f64) -> UserContext {
    let user = ctx.user;
    let excluded = ctx.target(ds);
    let mut u = vec![0.0; p.dim];
    let mut count = 0usize;
    for &k in ds.train_items(user) {
        if Some(k) == excluded {
            continue;
        }
        axpy(1.0, p.history_factors(k), &mut u);
        count += 1;
    }
    let fism_norm = (count > 0).then(|| (count as f64).powf(-alpha));
    if let Some(norm) = fism_norm {
        u.iter_mut().for_each(|x| *x *= norm);
    }

    let train = ds.train(user);
    let t = ctx.position;
    let available = p.order.min(t - 1);
    let markov: Vec<usize> = (1..=available).map(|l| train[t - 1 - l]).collect();
    let user_eta = p.user_order_weights(user);
    for (l, &k) in markov.iter().enumerate() {
        axpy(p.order_weights[l] + user_eta[l], p.history_factors(k), &mut u);
    }
    UserContext {
        vector: u,
        fism_norm,
        excluded,
        markov,
    }
}

/// U(u, t).
pub fn user_context_vector(p: &ModelParams, ds: &Dataset, ctx: &ScoreContext, alpha: f64) -> Result<Vec<f64>> {
    p.check_shape(ds)?;
    ctx.validate(ds)?;
    Ok(user_context(p, ds, ctx, alpha).vector)
}

/// r̂ for `item` under `ctx`. A positive context only scores its own target.
pub fn predict_score(
    p: &ModelParams,
    ds: &Dataset,
    graph: &AssociationGraph,
    ctx: &ScoreContext,
    item: usize,
    alpha: f64,
    beta: f64,
) -> Result<f64> {
    p.check_shape(ds)?;
    ctx.validate(ds)?;
    let v = composite_item_vector(p, graph, item, beta)?;
    if let Some(target) = ctx.target(ds) {
        if target != item {
            return Err(Error::Contract(format!(
                "positive context targets item {target}, asked to score {item}"
            )));
        }
    }
    let u = user_context(p, ds, ctx, alpha).vector;
    Ok(p.bias[item] + dot(&u, &v))
}

/// Scores every item for many users with the composite vectors computed once.
pub struct Scorer<'a> {
    params: &'a ModelParams,
    alpha: f64,
    composite: Vec<f64>,
}

impl<'a> Scorer<'a> {
    pub fn new(params: &'a ModelParams, graph: &AssociationGraph, alpha: f64, beta: f64) -> Result<Self> {
        if params.mode == Mode::Iafmc && graph.n_items() != params.n_items {
            return Err(Error::InvalidArgument(format!(
                "graph covers {} items, model {}",
                graph.n_items(),
                params.n_items
            )));
        }
        let mut composite = Vec::with_capacity(params.n_items * params.dim);
        for i in 0..params.n_items {
            composite.extend(composite_unchecked(params, graph, i, beta));
        }
        Ok(Self {
            params,
            alpha,
            composite,
        })
    }

    /// Scores of all items in the next-item context of `user`.
    pub fn next_item_scores(&self, ds: &Dataset, user: usize) -> Vec<f64> {
        let p = self.params;
        let u = user_context(p, ds, &ScoreContext::next_item(ds, user), self.alpha).vector;
        self.composite
            .chunks_exact(p.dim)
            .zip(&p.bias)
            .map(|(v, b)| b + dot(&u, v))
            .collect()
    }
}

/// Top-`n` unseen items for `user`, by score then ascending index.
pub fn rank_top_n(
    p: &ModelParams,
    ds: &Dataset,
    graph: &AssociationGraph,
    user: usize,
    n: usize,
    alpha: f64,
    beta: f64,
) -> Result<Vec<usize>> {
    p.check_shape(ds)?;
    check_index("user", user, ds.n_users())?;
    if n == 0 {
        return Err(Error::InvalidArgument("N must be positive".into()));
    }
    let scores = Scorer::new(p, graph, alpha, beta)?.next_item_scores(ds, user);
    let mut candidates: Vec<usize> = (0..p.n_items).filter(|&i| !ds.in_train(user, i)).collect();
    candidates.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    candidates.truncate(n);
    Ok(candidates)
}

/// Model parameters together with the scoring hyperparameters needed to use them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub alpha: f64,
    pub beta: f64,
    /// Adjacency window of the association graph the model was trained with.
    pub window: usize,
    pub params: ModelParams,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    n_users: usize,
    n_items: usize,
    dim: usize,
    order: usize,
    mode: Mode,
    alpha: f64,
    beta: f64,
    window: usize,
    item_assoc: Vec<f64>,
    item_history: Vec<f64>,
    bias: Vec<f64>,
    order_weights: Vec<f64>,
    user_order_weights: Vec<f64>,
    self_weight: f64,
    item_self_weights: Vec<f64>,
}

impl Checkpoint {
    pub fn to_writer<W: Write>(&self, writer: W) -> Result<()> {
        let p = &self.params;
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            n_users: p.n_users,
            n_items: p.n_items,
            dim: p.dim,
            order: p.order,
            mode: p.mode,
            alpha: self.alpha,
            beta: self.beta,
            window: self.window,
            item_assoc: p.assoc.clone(),
            item_history: p.history.clone(),
            bias: p.bias.clone(),
            order_weights: p.order_weights.clone(),
            user_order_weights: p.user_order_weights.clone(),
            self_weight: p.self_weight,
            item_self_weights: p.item_self_weights.clone(),
        };
        serde_json::to_writer(writer, &file).map_err(|e| Error::Io(e.into()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.to_writer(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let f: CheckpointFile = serde_json::from_reader(reader).map_err(|e| Error::Load(e.to_string()))?;
        if f.format != CHECKPOINT_FORMAT {
            return Err(Error::Load(format!("unexpected format tag `{}`", f.format)));
        }
        if f.version != CHECKPOINT_VERSION {
            return Err(Error::Load(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                f.version
            )));
        }
        let shapes = [
            ("item_assoc", f.item_assoc.len(), f.n_items * f.dim),
            ("item_history", f.item_history.len(), f.n_items * f.dim),
            ("bias", f.bias.len(), f.n_items),
            ("order_weights", f.order_weights.len(), f.order),
            ("user_order_weights", f.user_order_weights.len(), f.n_users * f.order),
            ("item_self_weights", f.item_self_weights.len(), f.n_items),
        ];
        for (name, got, want) in shapes {
            if got != want {
                return Err(Error::Load(format!("{name} has {got} values, expected {want}")));
            }
        }
        if f.n_users == 0 || f.n_items == 0 || f.dim == 0 || f.order == 0 {
            return Err(Error::Load("zero-sized model".into()));
        }
        let params = ModelParams {
            n_users: f.n_users,
            n_items: f.n_items,
            dim: f.dim,
            order: f.order,
            mode: f.mode,
            assoc: f.item_assoc,
            history: f.item_history,
            bias: f.bias,
            order_weights: f.order_weights,
            user_order_weights: f.user_order_weights,
            self_weight: f.self_weight,
            item_self_weights: f.item_self_weights,
        };
        if !params.all_finite() {
            return Err(Error::Load("checkpoint holds non-finite values".into()));
        }
        Ok(Self {
            alpha: f.alpha,
            beta: f.beta,
            window: f.window,
            params,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_reader(bytes)
    }
}
