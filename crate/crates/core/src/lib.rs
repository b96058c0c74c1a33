//! Sequential recommendation with item association factorization mixed
//! Markov chains (IAFMC).
//!
//! The pipeline is: [`parse_interactions`] → [`build_dataset`] (user filter
//! and leave-one-out split) → [`AssociationGraph`] over the training
//! prefixes → [`init_params`] + [`train`] → [`evaluate_split`]. Setting
//! [`Mode::Fossil`] disables the association term and recovers the Fossil
//! baseline.

pub mod assoc;
pub mod dataset;
pub mod error;
pub mod evaluator;
pub mod model;
pub mod synthetic;
pub mod trainer;

pub use assoc::AssociationGraph;
pub use dataset::{
    build_dataset, parse_interactions, parse_interactions_str, ColumnMap, Dataset, DatasetStats, HoldOut,
    RawInteraction, Split,
};
pub use error::{Error, Result};
pub use evaluator::{
    evaluate_split, group_report, hit_ranks, ndcg_at_n, recall_at_n, Bucket, EvalReport, GroupEdges, MetricsAtN,
};
pub use model::{
    composite_item_vector, init_params, param_count, predict_score, rank_top_n, user_context_vector, Checkpoint, Mode,
    ModelParams, ParamId, ScoreContext, Scorer,
};
pub use trainer::{
    compute_gradients, sample_negative, sample_positive_order, sub_seed, train, train_with_hook, triple_loss, EpochLog,
    EpochState, Regularization, TrainConfig, TrainOutcome, TripleGradient,
};
