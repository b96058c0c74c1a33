use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use iafmc::{ColumnMap, HoldOut, Mode};
use iafmc_cli::{
    cmd_eval, cmd_prepare, cmd_sweep, cmd_train, create_run_dir, CliError, PrepareArgs, RunConfig, SweepAxis,
};

#[derive(Parser)]
#[command(
    name = "iafmc",
    version,
    about = "Sequential recommendation with item association factorization mixed Markov chains"
)]
struct Cli {
    /// Root under which timestamped run directories are created.
    #[arg(long, env = "IAFMC_OUTPUT_ROOT", default_value = "runs", global = true)]
    output_root: PathBuf,

    /// Write outputs to exactly this directory instead of a timestamped one.
    #[arg(long, global = true)]
    run_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter and split a raw interaction CSV, build the association graph.
    Prepare {
        /// CSV with `user,item[,rating],timestamp` lines.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = iafmc::dataset::DEFAULT_MIN_USER_INTERACTIONS)]
        min_interactions: usize,
        /// Column positions, e.g. `user=0,item=1,rating=2,timestamp=3`, or `auto`.
        #[arg(long, default_value = "auto")]
        columns: String,
        #[arg(long)]
        skip_header: bool,
        /// Adjacency window of the exported association graph.
        #[arg(long, default_value_t = 1)]
        window: usize,
    },
    /// Train a model and write its checkpoint and per-epoch log.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        hyper: HyperArgs,
    },
    /// Evaluate a checkpoint on the validation or test split.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[command(flatten)]
        hyper: HyperArgs,
    },
    /// Sweep beta, the iteration count or the Markov order; writes sweep.csv.
    Sweep {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        axis: String,
        /// Grid for the chosen axis, comma-separated.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<String>>,
        #[arg(long)]
        repeats: Option<usize>,
        #[command(flatten)]
        hyper: HyperArgs,
    },
}

/// Hyperparameters; flags override values from `--config`.
#[derive(Args, Default)]
struct HyperArgs {
    /// Flat JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    /// Markov order L.
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Sets all five regularization weights.
    #[arg(long)]
    reg: Option<f64>,
    #[arg(long)]
    reg_assoc: Option<f64>,
    #[arg(long)]
    reg_history: Option<f64>,
    #[arg(long)]
    reg_bias: Option<f64>,
    #[arg(long)]
    reg_order: Option<f64>,
    #[arg(long)]
    reg_self: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    monitor_size: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    /// Cutoffs N for Recall@N / NDCG@N.
    #[arg(long, value_delimiter = ',')]
    ns: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    user_edges: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    item_edges: Option<Vec<usize>>,
}

impl HyperArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(m) = &self.mode {
            c.mode = m.parse::<Mode>()?;
        }
        if let Some(r) = self.reg {
            c.reg_assoc = r;
            c.reg_history = r;
            c.reg_bias = r;
            c.reg_order = r;
            c.reg_self = r;
        }
        macro_rules! take {
            ($($flag:ident => $field:ident),* $(,)?) => {
                $(if let Some(v) = self.$flag.clone() { c.$field = v; })*
            };
        }
        take!(
            dim => dim, order => order, lr => learning_rate,
            reg_assoc => reg_assoc, reg_history => reg_history, reg_bias => reg_bias,
            reg_order => reg_order, reg_self => reg_self,
            alpha => alpha, beta => beta, epochs => epochs, seed => seed,
            eval_every => eval_every, monitor_size => monitor_size, window => window,
            ns => ns, user_edges => user_length_edges, item_edges => item_count_edges,
        );
        c.validate()?;
        Ok(c)
    }
}

fn out_dir(cli: &Cli, name: &str) -> Result<PathBuf, CliError> {
    match &cli.run_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            Ok(dir.clone())
        }
        None => create_run_dir(&cli.output_root, name),
    }
}

fn parse_grid<T: std::str::FromStr>(values: &[String]) -> Result<Vec<T>, CliError> {
    values
        .iter()
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| CliError::Config(format!("bad grid value `{v}`")))
        })
        .collect()
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Prepare {
            input,
            min_interactions,
            columns,
            skip_header,
            window,
        } => {
            let args = PrepareArgs {
                input: input.clone(),
                min_interactions: *min_interactions,
                columns: columns.parse::<ColumnMap>()?,
                skip_header: *skip_header,
                window: *window,
            };
            let out = out_dir(cli, "prepare")?;
            let summary = cmd_prepare(&args, &out)?;
            print!("{}", summary.to_text());
            println!("outputs: {}", out.display());
        }
        Command::Train { dataset, hyper } => {
            let cfg = hyper.resolve()?;
            let out = out_dir(cli, "train")?;
            let summary = cmd_train(dataset, &cfg, &out)?;
            if let Some(last) = summary.log.last() {
                println!(
                    "epochs {}  final monitor loss {:.6}  best epoch {}",
                    last.epoch,
                    last.mean_monitor_loss,
                    summary.best_epoch.map_or("-".to_owned(), |e| e.to_string())
                );
            }
            println!("checkpoint: {}", summary.checkpoint.display());
        }
        Command::Eval {
            dataset,
            checkpoint,
            split,
            hyper,
        } => {
            let cfg = hyper.resolve()?;
            let split: HoldOut = split.parse()?;
            let out = out_dir(cli, "eval")?;
            let report = cmd_eval(dataset, checkpoint, split, &cfg, &out)?;
            print!("{}", report.to_text());
            println!("outputs: {}", out.display());
        }
        Command::Sweep {
            dataset,
            axis,
            grid,
            repeats,
            hyper,
        } => {
            let mut cfg = hyper.resolve()?;
            let axis: SweepAxis = axis.parse()?;
            if let Some(grid) = grid {
                match axis {
                    SweepAxis::Beta => cfg.beta_grid = parse_grid(grid)?,
                    SweepAxis::Iterations => cfg.iteration_grid = parse_grid(grid)?,
                    SweepAxis::Order => cfg.order_grid = parse_grid(grid)?,
                }
            }
            if let Some(r) = repeats {
                cfg.repeats = *r;
            }
            cfg.validate()?;
            let out = out_dir(cli, "sweep")?;
            let rows = cmd_sweep(dataset, &cfg, axis, &out)?;
            print!("{}", iafmc_cli::commands::sweep_csv(axis, &rows));
            println!("outputs: {}", Path::new(&out).display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
