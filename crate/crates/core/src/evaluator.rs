//! Full-catalog top-N evaluation on the held-out items.
//!
//! Every user is ranked in the next-item context at the end of the training
//! prefix, over all items not in the training prefix. The held-out item's
//! rank uses the same tie rule as [`crate::rank_top_n`]: higher score first,
//! then lower item index.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assoc::AssociationGraph;
use crate::dataset::{Dataset, HoldOut};
use crate::error::{Error, Result};
use crate::model::{ModelParams, Scorer};

pub const DEFAULT_NS: [usize; 2] = [5, 10];
pub const DEFAULT_USER_LENGTH_EDGES: [usize; 2] = [7, 20];
pub const DEFAULT_ITEM_COUNT_EDGES: [usize; 2] = [3, 10];

/// Fraction of users whose held-out item ranks within the top `n`.
pub fn recall_at_n(hit_ranks: &[Option<usize>], n: usize) -> Result<f64> {
    if hit_ranks.is_empty() {
        return Err(Error::EmptyUserSet);
    }
    let hits = hit_ranks.iter().filter(|r| r.is_some_and(|r| r <= n)).count();
    Ok(hits as f64 / hit_ranks.len() as f64)
}

/// Mean NDCG@n with a single relevant item per user (ideal DCG is 1).
pub fn ndcg_at_n(hit_ranks: &[Option<usize>], n: usize) -> Result<f64> {
    if hit_ranks.is_empty() {
        return Err(Error::EmptyUserSet);
    }
    let total: f64 = hit_ranks
        .iter()
        .map(|r| match r {
            Some(r) if *r <= n => 1.0 / ((r + 1) as f64).log2(),
            _ => 0.0,
        })
        .sum();
    Ok(total / hit_ranks.len() as f64)
}

/// 1-based rank of each user's held-out item, `None` when it cannot be
/// recommended (it already occurs in the training prefix).
pub fn hit_ranks(
    p: &ModelParams,
    ds: &Dataset,
    g: &AssociationGraph,
    which: HoldOut,
    alpha: f64,
    beta: f64,
) -> Result<Vec<Option<usize>>> {
    p.check_shape(ds)?;
    let scorer = Scorer::new(p, g, alpha, beta)?;
    Ok((0..ds.n_users())
        .into_par_iter()
        .map(|u| {
            let target = ds.held_out(u, which);
            if ds.in_train(u, target) {
                return None;
            }
            let scores = scorer.next_item_scores(ds, u);
            let ts = scores[target];
            let ahead = scores
                .iter()
                .enumerate()
                .filter(|&(c, &s)| c != target && !ds.in_train(u, c) && (s > ts || (s == ts && c < target)))
                .count();
            Some(ahead + 1)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsAtN {
    pub n: usize,
    pub recall: f64,
    pub ndcg: f64,
}

/// One bucket `[lo, hi]` of a grouping; `hi = None` is open-ended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub lo: usize,
    pub hi: Option<usize>,
    pub size: usize,
    pub recall_at_10: Option<f64>,
}

impl Bucket {
    pub fn recall_at_10_permille(&self) -> Option<f64> {
        self.recall_at_10.map(|r| r * 1000.0)
    }

    pub fn label(&self) -> String {
        match self.hi {
            Some(hi) if hi == self.lo => format!("{}", self.lo),
            Some(hi) => format!("{}-{}", self.lo, hi),
            None => format!(">={}", self.lo),
        }
    }
}

pub const GROUP_CSV_HEADER: &str = "bucket_lo,bucket_hi,size,recall_at_10";

pub fn groups_csv(buckets: &[Bucket]) -> String {
    let mut out = String::from(GROUP_CSV_HEADER);
    out.push('\n');
    for b in buckets {
        let hi = b.hi.map(|h| h.to_string()).unwrap_or_default();
        let recall = b.recall_at_10.map(|r| r.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{}", b.lo, hi, b.size, recall);
    }
    out
}

/// Buckets users by `keys[u]` using inclusive upper `edges` (strictly
/// increasing) and reports Recall@10 per bucket. `[7, 20]` yields `0-7`,
/// `8-20` and `>=21`.
pub fn group_report(hit_ranks: &[Option<usize>], keys: &[usize], edges: &[usize]) -> Result<Vec<Bucket>> {
    if hit_ranks.len() != keys.len() {
        return Err(Error::InvalidArgument("one grouping key per user required".into()));
    }
    if edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "bucket edges must be strictly increasing".into(),
        ));
    }
    let mut lo = 0;
    let mut buckets: Vec<Bucket> = edges
        .iter()
        .map(|&hi| {
            let b = Bucket {
                lo,
                hi: Some(hi),
                size: 0,
                recall_at_10: None,
            };
            lo = hi + 1;
            b
        })
        .collect();
    buckets.push(Bucket {
        lo,
        hi: None,
        size: 0,
        recall_at_10: None,
    });

    let mut hits = vec![0usize; buckets.len()];
    for (rank, &key) in hit_ranks.iter().zip(keys) {
        let b = edges.iter().position(|&hi| key <= hi).unwrap_or(edges.len());
        buckets[b].size += 1;
        if rank.is_some_and(|r| r <= 10) {
            hits[b] += 1;
        }
    }
    for (b, h) in buckets.iter_mut().zip(hits) {
        if b.size > 0 {
            b.recall_at_10 = Some(h as f64 / b.size as f64);
        }
    }
    Ok(buckets)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEdges {
    pub user_length: Vec<usize>,
    pub item_count: Vec<usize>,
}

impl Default for GroupEdges {
    fn default() -> Self {
        Self {
            user_length: DEFAULT_USER_LENGTH_EDGES.to_vec(),
            item_count: DEFAULT_ITEM_COUNT_EDGES.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: HoldOut,
    pub users: usize,
    pub metrics: Vec<MetricsAtN>,
    /// Users whose held-out item also occurs in their training prefix; always misses.
    pub target_in_train: usize,
    /// Users by training-prefix length.
    pub user_groups: Vec<Bucket>,
    /// Users by how often their held-out item occurs across all training prefixes.
    pub item_groups: Vec<Bucket>,
    pub hit_ranks: Vec<Option<usize>>,
}

impl EvalReport {
    pub fn metric(&self, n: usize) -> Option<&MetricsAtN> {
        self.metrics.iter().find(|m| m.n == n)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "split: {:?}  users: {}", self.split, self.users);
        let _ = writeln!(out, "{:>6}  {:>10}  {:>10}", "N", "Recall@N", "NDCG@N");
        for m in &self.metrics {
            let _ = writeln!(out, "{:>6}  {:>10.4}  {:>10.4}", m.n, m.recall, m.ndcg);
        }
        let fmt = |r: Option<f64>| r.map_or("-".to_owned(), |r| format!("{r:.4}"));
        let _ = writeln!(out, "\nby training length");
        let _ = writeln!(out, "{:>10}  {:>8}  {:>10}", "length", "users", "Recall@10");
        for b in &self.user_groups {
            let _ = writeln!(out, "{:>10}  {:>8}  {:>10}", b.label(), b.size, fmt(b.recall_at_10));
        }
        let _ = writeln!(out, "\nby item training count");
        let _ = writeln!(
            out,
            "{:>10}  {:>8}  {:>10}  {:>10}",
            "count", "users", "Recall@10", "permille"
        );
        for b in &self.item_groups {
            let pm = b.recall_at_10_permille().map_or("-".to_owned(), |r| format!("{r:.1}"));
            let _ = writeln!(
                out,
                "{:>10}  {:>8}  {:>10}  {:>10}",
                b.label(),
                b.size,
                fmt(b.recall_at_10),
                pm
            );
        }
        if self.target_in_train > 0 {
            let _ = writeln!(
                out,
                "\nheld-out item already in training prefix: {} users",
                self.target_in_train
            );
        }
        out
    }
}

/// Ranks every user's held-out item and aggregates Recall@N / NDCG@N for each
/// `N` in `ns`, plus the grouped Recall@10 breakdowns.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_split(
    p: &ModelParams,
    ds: &Dataset,
    g: &AssociationGraph,
    which: HoldOut,
    ns: &[usize],
    alpha: f64,
    beta: f64,
    edges: &GroupEdges,
) -> Result<EvalReport> {
    if ns.is_empty() || ns.contains(&0) {
        return Err(Error::InvalidArgument("N list must be non-empty and positive".into()));
    }
    let ranks = hit_ranks(p, ds, g, which, alpha, beta)?;
    let metrics = ns
        .iter()
        .map(|&n| {
            Ok(MetricsAtN {
                n,
                recall: recall_at_n(&ranks, n)?,
                ndcg: ndcg_at_n(&ranks, n)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let lengths: Vec<usize> = (0..ds.n_users()).map(|u| ds.train(u).len()).collect();
    let counts = ds.train_item_counts();
    let popularity: Vec<usize> = (0..ds.n_users()).map(|u| counts[ds.held_out(u, which)]).collect();
    let target_in_train = (0..ds.n_users())
        .filter(|&u| ds.in_train(u, ds.held_out(u, which)))
        .count();

    Ok(EvalReport {
        split: which,
        users: ds.n_users(),
        metrics,
        target_in_train,
        user_groups: group_report(&ranks, &lengths, &edges.user_length)?,
        item_groups: group_report(&ranks, &popularity, &edges.item_count)?,
        hit_ranks: ranks,
    })
}
