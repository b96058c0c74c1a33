use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use iafmc::evaluator::groups_csv;
use iafmc::trainer::EpochState;
use iafmc::{
    build_dataset, evaluate_split, hit_ranks, init_params, ndcg_at_n, parse_interactions, recall_at_n, sub_seed,
    train_with_hook, AssociationGraph, Checkpoint, ColumnMap, Dataset, DatasetStats, EpochLog, EvalReport, HoldOut,
    ModelParams, TrainOutcome,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;

const INIT_STREAM: u64 = 4;

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// Creates `<root>/<command>-<UTC timestamp>`, adding a numeric suffix if
/// that directory already exists.
pub fn create_run_dir(root: &Path, command: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let base = root.join(format!("{command}-{stamp}"));
    let mut candidate = base.clone();
    let mut k = 1;
    loop {
        match fs::create_dir(&candidate) {
            Ok(()) => return Ok(candidate),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                candidate = PathBuf::from(format!("{}-{k}", base.display()));
                k += 1;
            }
            Err(e) => return Err(CliError::io(&candidate, e)),
        }
    }
}

pub fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(Dataset::from_reader(BufReader::new(file))?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(Checkpoint::from_reader(BufReader::new(file))?)
}

pub fn build_graph(ds: &Dataset, window: usize) -> AssociationGraph {
    AssociationGraph::build(ds.train_prefixes(), ds.n_items(), window)
}

#[derive(Debug, Clone)]
pub struct PrepareArgs {
    pub input: PathBuf,
    pub min_interactions: usize,
    pub columns: ColumnMap,
    pub skip_header: bool,
    pub window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareSummary {
    #[serde(flatten)]
    pub stats: DatasetStats,
    pub graph_edges: usize,
}

impl PrepareSummary {
    pub fn to_text(&self) -> String {
        let s = &self.stats;
        format!(
            "users {}\nitems {}\ninteractions {}\ndensity {:.2}%\navg interactions per user {:.1}\nassociation edges {}\n",
            s.users,
            s.items,
            s.interactions,
            s.density * 100.0,
            s.avg_per_user,
            self.graph_edges
        )
    }
}

/// Writes `dataset.json`, `graph.csv` and `stats.json` into `out`.
pub fn cmd_prepare(args: &PrepareArgs, out: &Path) -> Result<PrepareSummary, CliError> {
    let file = fs::File::open(&args.input).map_err(|e| CliError::io(&args.input, e))?;
    let raw = parse_interactions(BufReader::new(file), args.columns, args.skip_header)?;
    let ds = build_dataset(&raw, args.min_interactions)?;
    let graph = build_graph(&ds, args.window);

    write_file(&out.join("dataset.json"), ds.to_bytes())?;
    let mut edges = Vec::new();
    graph.write_edge_list(&mut edges)?;
    write_file(&out.join("graph.csv"), edges)?;
    let summary = PrepareSummary {
        stats: ds.stats(),
        graph_edges: graph.n_edges(),
    };
    write_file(
        &out.join("stats.json"),
        serde_json::to_string_pretty(&summary).expect("serializes"),
    )?;
    Ok(summary)
}

/// Initializes a model for `cfg` and trains it on `ds`.
pub fn fit<F>(ds: &Dataset, graph: &AssociationGraph, cfg: &RunConfig, hook: F) -> Result<TrainOutcome, CliError>
where
    F: FnMut(&EpochState<'_>),
{
    cfg.validate()?;
    let params = init_params(
        ds.n_users(),
        ds.n_items(),
        cfg.dim,
        cfg.order,
        cfg.mode,
        sub_seed(cfg.seed, INIT_STREAM, 0),
    )?;
    Ok(train_with_hook(params, ds, graph, &cfg.train_config(), hook)?)
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub log: Vec<EpochLog>,
    pub best_epoch: Option<usize>,
    pub checkpoint: PathBuf,
}

/// Trains and writes `model.json` (best validation snapshot, or the final
/// parameters when validation is off), `epochs.csv` and `config.json`.
pub fn cmd_train(dataset: &Path, cfg: &RunConfig, out: &Path) -> Result<TrainSummary, CliError> {
    cfg.validate()?;
    let ds = load_dataset(dataset)?;
    let graph = build_graph(&ds, cfg.window);
    write_file(&out.join("config.json"), cfg.to_json())?;
    let outcome = fit(&ds, &graph, cfg, |_| {})?;

    let mut csv = String::from(EpochLog::CSV_HEADER);
    csv.push('\n');
    for row in &outcome.log {
        csv.push_str(&row.csv_row());
        csv.push('\n');
    }
    write_file(&out.join("epochs.csv"), csv)?;

    let best_epoch = outcome.best.as_ref().map(|b| b.epoch);
    let log = outcome.log.clone();
    let checkpoint = Checkpoint {
        alpha: cfg.alpha,
        beta: cfg.beta,
        window: cfg.window,
        params: outcome.into_selected(),
    };
    let path = out.join("model.json");
    write_file(&path, checkpoint.to_bytes())?;
    Ok(TrainSummary {
        log,
        best_epoch,
        checkpoint: path,
    })
}

/// Evaluates a checkpoint and writes `report.json`, `report.txt`,
/// `user_groups.csv` and `item_groups.csv`.
pub fn cmd_eval(
    dataset: &Path,
    checkpoint: &Path,
    split: HoldOut,
    cfg: &RunConfig,
    out: &Path,
) -> Result<EvalReport, CliError> {
    let ds = load_dataset(dataset)?;
    let ck = load_checkpoint(checkpoint)?;
    let graph = build_graph(&ds, ck.window.max(1));
    let report = evaluate_split(
        &ck.params,
        &ds,
        &graph,
        split,
        &cfg.ns,
        ck.alpha,
        ck.beta,
        &cfg.group_edges(),
    )?;
    write_file(&out.join("report.json"), report.to_json())?;
    write_file(&out.join("report.txt"), report.to_text())?;
    write_file(&out.join("user_groups.csv"), groups_csv(&report.user_groups))?;
    write_file(&out.join("item_groups.csv"), groups_csv(&report.item_groups))?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Beta,
    Iterations,
    Order,
}

impl FromStr for SweepAxis {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "beta" => Ok(Self::Beta),
            "iterations" | "epochs" => Ok(Self::Iterations),
            "order" => Ok(Self::Order),
            other => Err(CliError::Config(format!("unknown sweep axis `{other}`"))),
        }
    }
}

impl SweepAxis {
    pub fn column(self) -> &'static str {
        match self {
            Self::Beta => "beta",
            Self::Iterations => "iterations",
            Self::Order => "order",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub recall_at_10: f64,
    pub ndcg_at_5: f64,
    pub ndcg_at_10: f64,
    pub recall_at_5: f64,
}

impl SweepRow {
    fn mean(value: f64, runs: &[[f64; 4]]) -> Self {
        let k = runs.len() as f64;
        let avg = |c: usize| runs.iter().map(|r| r[c]).sum::<f64>() / k;
        Self {
            value,
            recall_at_10: avg(0),
            ndcg_at_5: avg(1),
            ndcg_at_10: avg(2),
            recall_at_5: avg(3),
        }
    }
}

pub fn sweep_csv(axis: SweepAxis, rows: &[SweepRow]) -> String {
    let mut out = format!("{},recall_at_10,ndcg_at_5,ndcg_at_10,recall_at_5\n", axis.column());
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.value, r.recall_at_10, r.ndcg_at_5, r.ndcg_at_10, r.recall_at_5
        );
    }
    out
}

fn test_metrics(
    p: &ModelParams,
    ds: &Dataset,
    graph: &AssociationGraph,
    cfg: &RunConfig,
) -> Result<[f64; 4], CliError> {
    let ranks = hit_ranks(p, ds, graph, HoldOut::Test, cfg.alpha, cfg.beta)?;
    Ok([
        recall_at_n(&ranks, 10)?,
        ndcg_at_n(&ranks, 5)?,
        ndcg_at_n(&ranks, 10)?,
        recall_at_n(&ranks, 5)?,
    ])
}

/// Test-split metrics along one hyperparameter axis, each point averaged
/// over `cfg.repeats` seeds `seed, seed + 1, ...`. The iteration axis follows
/// one training trajectory per seed and evaluates at each checkpoint.
pub fn run_sweep(ds: &Dataset, cfg: &RunConfig, axis: SweepAxis) -> Result<Vec<SweepRow>, CliError> {
    cfg.validate()?;
    let seeds: Vec<u64> = (0..cfg.repeats as u64).map(|r| cfg.seed.wrapping_add(r)).collect();
    match axis {
        SweepAxis::Beta | SweepAxis::Order => {
            let points: Vec<f64> = match axis {
                SweepAxis::Beta => cfg.beta_grid.clone(),
                _ => cfg.order_grid.iter().map(|&l| l as f64).collect(),
            };
            let graph = build_graph(ds, cfg.window);
            let jobs: Vec<(usize, u64)> = (0..points.len())
                .flat_map(|p| seeds.iter().map(move |&s| (p, s)))
                .collect();
            let results = jobs
                .par_iter()
                .map(|&(p, seed)| {
                    let mut point = cfg.clone();
                    point.seed = seed;
                    match axis {
                        SweepAxis::Beta => point.beta = points[p],
                        _ => point.order = points[p] as usize,
                    }
                    let outcome = fit(ds, &graph, &point, |_| {})?;
                    test_metrics(outcome.selected(), ds, &graph, &point)
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            Ok(points
                .iter()
                .enumerate()
                .map(|(p, &v)| SweepRow::mean(v, &results[p * seeds.len()..(p + 1) * seeds.len()]))
                .collect())
        }
        SweepAxis::Iterations => {
            let mut grid = cfg.iteration_grid.clone();
            grid.sort_unstable();
            grid.dedup();
            let graph = build_graph(ds, cfg.window);
            let per_seed = seeds
                .par_iter()
                .map(|&seed| {
                    let mut run = cfg.clone();
                    run.seed = seed;
                    run.epochs = *grid.last().expect("non-empty grid");
                    let mut found = Vec::with_capacity(grid.len());
                    let mut failure = None;
                    fit(ds, &graph, &run, |state| {
                        if grid.binary_search(&state.epoch).is_ok() && failure.is_none() {
                            match test_metrics(state.selected, ds, &graph, &run) {
                                Ok(m) => found.push(m),
                                Err(e) => failure = Some(e),
                            }
                        }
                    })?;
                    match failure {
                        Some(e) => Err(e),
                        None => Ok(found),
                    }
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            Ok(grid
                .iter()
                .enumerate()
                .map(|(k, &epochs)| {
                    let runs: Vec<[f64; 4]> = per_seed.iter().map(|r| r[k]).collect();
                    SweepRow::mean(epochs as f64, &runs)
                })
                .collect())
        }
    }
}

/// Runs the sweep and writes `sweep.csv` and `config.json`.
pub fn cmd_sweep(dataset: &Path, cfg: &RunConfig, axis: SweepAxis, out: &Path) -> Result<Vec<SweepRow>, CliError> {
    cfg.validate()?;
    let ds = load_dataset(dataset)?;
    write_file(&out.join("config.json"), cfg.to_json())?;
    let rows = run_sweep(&ds, cfg, axis)?;
    write_file(&out.join("sweep.csv"), sweep_csv(axis, &rows))?;
    Ok(rows)
}
