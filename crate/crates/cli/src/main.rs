use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use lipnet::network::{ActivationKind, MlpNetwork, NetworkSpec};
use lipnet::robustness::{NormOrder, PerturbationSpec};
use lipnet::training::TrainConfig;

use lipnet_cli::config::{DatasetSource, SweepConfig};
use lipnet_cli::{commands, datasrc, sweep};

/// Lipschitz estimation and certified robustness experiments for MLPs.
#[derive(Parser)]
#[command(name = "lipnet", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every applicable Lipschitz estimator on one architecture.
    Estimate(EstimateArgs),
    /// Initialization-time estimator comparison over an architecture grid.
    SweepInit(SweepArgs),
    /// Train-and-certify sweep over an architecture / weight-decay grid.
    SweepTrain(SweepArgs),
    /// Per-sample robustness reports for stored weights against a dataset.
    Certify(CertifyArgs),
    /// Sampled check of the random-matrix largest-singular-value law.
    RmtCheck(RmtArgs),
    /// Train one network, emitting per-epoch metrics.
    Train(TrainArgs),
}

#[derive(Args)]
struct SpecArgs {
    /// Number of affine layers.
    #[arg(long, default_value_t = 2)]
    depth: usize,
    #[arg(long, default_value_t = 784)]
    input_dim: usize,
    #[arg(long, default_value_t = 256)]
    hidden_dim: usize,
    #[arg(long, default_value_t = 10)]
    output_dim: usize,
    /// relu | sigmoid | tanh | identity
    #[arg(long, default_value = "relu")]
    activation: String,
    /// Xavier variance multiplier.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
}

impl SpecArgs {
    fn to_spec(&self) -> Result<NetworkSpec> {
        let activation = ActivationKind::from_name(&self.activation)?;
        Ok(NetworkSpec::new(
            self.depth,
            self.input_dim,
            self.hidden_dim,
            self.output_dim,
            activation,
            self.alpha,
        )?)
    }
}

#[derive(Args)]
struct DatasetArgs {
    /// Directory with MNIST-format IDX files; synthetic blobs when absent.
    #[arg(long)]
    mnist_dir: Option<PathBuf>,
    /// Use the full MNIST files instead of the 10000/2000 subset.
    #[arg(long, default_value_t = false)]
    full_dataset: bool,
    #[arg(long, default_value_t = 10)]
    blob_classes: usize,
    #[arg(long, default_value_t = 200)]
    blob_per_class: usize,
    #[arg(long, default_value_t = 40)]
    blob_test_per_class: usize,
    #[arg(long, default_value_t = 64)]
    blob_dim: usize,
    #[arg(long, default_value_t = 4.0)]
    blob_separation: f64,
}

impl DatasetArgs {
    fn to_source(&self) -> DatasetSource {
        match &self.mnist_dir {
            Some(dir) => DatasetSource::Mnist {
                dir: dir.clone(),
                full: self.full_dataset,
            },
            None => DatasetSource::Blobs {
                classes: self.blob_classes,
                per_class: self.blob_per_class,
                test_per_class: self.blob_test_per_class,
                dim: self.blob_dim,
                separation: self.blob_separation,
            },
        }
    }
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Standard-normal probe inputs for the empirical estimator.
    #[arg(long, default_value_t = lipnet::lipschitz::DEFAULT_EMPIRICAL_SAMPLES)]
    samples: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON sweep configuration; documented defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config file's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config file's output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for grid points (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides the config file's dataset with this MNIST directory.
    #[arg(long)]
    mnist_dir: Option<PathBuf>,
    #[arg(long, default_value_t = false)]
    full_dataset: bool,
}

impl SweepArgs {
    fn load(&self) -> Result<SweepConfig> {
        let mut config = match &self.config {
            Some(path) => SweepConfig::from_file(path)?,
            None => SweepConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(dir) = &self.mnist_dir {
            config.dataset = DatasetSource::Mnist {
                dir: dir.clone(),
                full: self.full_dataset,
            };
        }
        if let Some(out) = &self.out {
            config.out = Some(out.clone());
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct CertifyArgs {
    /// Weight file produced by `train --save-weights` (binary or text).
    #[arg(long)]
    weights: PathBuf,
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Dataset generation seed when using blobs.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// 2 | inf
    #[arg(long, default_value = "2")]
    norm: String,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Report on the test split instead of the train split.
    #[arg(long, default_value_t = true)]
    test_split: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RmtArgs {
    /// Comma-separated ROWSxCOLS pairs, e.g. 1000x1000,1600x400.
    #[arg(long, default_value = "1000x1000,1600x400")]
    sizes: String,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    spec: SpecArgs,
    #[command(flatten)]
    dataset: DatasetArgs,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 12)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.0)]
    weight_decay: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// 2 | inf, for the per-epoch certified accuracy column.
    #[arg(long, default_value = "2")]
    norm: String,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Save trained weights here (.txt selects the text format).
    #[arg(long)]
    save_weights: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_sizes(text: &str) -> Result<Vec<(usize, usize)>> {
    text.split(',')
        .map(|chunk| {
            let (rows, cols) = chunk
                .trim()
                .split_once(['x', 'X'])
                .with_context(|| format!("size '{chunk}' is not ROWSxCOLS"))?;
            Ok((
                rows.trim().parse().with_context(|| format!("bad rows in '{chunk}'"))?,
                cols.trim().parse().with_context(|| format!("bad cols in '{chunk}'"))?,
            ))
        })
        .collect()
}

fn configure_workers(workers: Option<usize>) -> Result<()> {
    if let Some(count) = workers {
        if count == 0 {
            bail!("--workers must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(count)
            .build_global()
            .context("worker pool already configured")?;
    }
    Ok(())
}

/// Write CSV to the chosen path or stdout; the file contents are the
/// deliverable and are byte-stable for a fixed seed.
fn emit(csv: &str, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, csv)
                .with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Estimate(args) => {
            let spec = args.spec.to_spec()?;
            let csv = commands::estimate(&spec, args.seed, args.samples)?;
            emit(&csv, args.out.as_ref())
        }
        Command::SweepInit(args) => {
            configure_workers(args.workers)?;
            let config = args.load()?;
            let csv = sweep::run_init_sweep(&config)?;
            emit(&csv, args.out.as_ref().or(config.out.as_ref()))
        }
        Command::SweepTrain(args) => {
            configure_workers(args.workers)?;
            let config = args.load()?;
            let csv = sweep::run_train_sweep(&config)?;
            emit(&csv, args.out.as_ref().or(config.out.as_ref()))
        }
        Command::Certify(args) => {
            let net = MlpNetwork::load(&args.weights)
                .with_context(|| format!("loading weights {}", args.weights.display()))?;
            let (train_set, test_set) = datasrc::resolve(&args.dataset.to_source(), args.seed)?;
            let dataset = if args.test_split { test_set } else { train_set };
            let pert = PerturbationSpec::new(NormOrder::from_name(&args.norm)?, args.epsilon)?;
            let csv = commands::certify(&net, &dataset, &pert)?;
            emit(&csv, args.out.as_ref())
        }
        Command::RmtCheck(args) => {
            configure_workers(args.workers)?;
            let sizes = parse_sizes(&args.sizes)?;
            let csv = sweep::rmt_check(&sizes, args.trials, args.seed)?;
            emit(&csv, args.out.as_ref())
        }
        Command::Train(args) => {
            let spec = args.spec.to_spec()?;
            let (train_set, test_set) = datasrc::resolve(&args.dataset.to_source(), args.seed)?;
            let config = TrainConfig {
                learning_rate: args.learning_rate,
                epochs: args.epochs,
                batch_size: args.batch_size,
                weight_decay: args.weight_decay,
                seed: args.seed,
                eval_epsilon: PerturbationSpec::new(
                    NormOrder::from_name(&args.norm)?,
                    args.epsilon,
                )?,
            };
            let csv = commands::train_command(
                &spec,
                &train_set,
                &test_set,
                &config,
                args.save_weights.as_deref(),
            )?;
            emit(&csv, args.out.as_ref())
        }
    }
}
