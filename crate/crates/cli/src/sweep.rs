//! Sweep drivers: the init-time estimator comparison, the train-and-certify
//! grid, and the random-matrix edge-law check. Each emits a CSV string that
//! is byte-identical for a fixed (config, master seed): grid points draw
//! their generators from seed streams indexed by grid position, so worker
//! count and scheduling order cannot leak into the output.

use anyhow::{bail, Result};
use rayon::prelude::*;

use lipnet::linalg::{self, Matrix};
use lipnet::lipschitz::{
    analytical_lipschitz, empirical_lipschitz, pattern_exact_relu, spectral_product_bound,
    InputSampler, PATTERN_ENUMERATION_MAX_UNITS,
};
use lipnet::network::{jacobian, xavier_init, ActivationKind, NetworkSpec};
use lipnet::rng::Pcg32;
use lipnet::training::{train, TrainConfig};

use crate::config::SweepConfig;
use crate::csvfmt;
use crate::stats::{mean, sample_std};

/// Seed-stream bases. Grid point g, trial t uses stream `base + g * trials + t`.
const INIT_NET_STREAM: u64 = 10_000;
const INIT_INPUT_STREAM: u64 = 20_000;
const TRAIN_SEED_STREAM: u64 = 30_000;
const TRAIN_PROBE_STREAM: u64 = 40_000;
const RMT_STREAM: u64 = 50_000;

/// Power-iteration settings for the large random matrices of `rmt-check`;
/// looser than the kernel default because the bulk edge has clustered
/// singular values.
const RMT_REL_TOL: f64 = 1e-7;
const RMT_MAX_ITER: usize = 5_000;

pub const SWEEP_CSV_HEADER: &str = "depth,width,alpha,lambda,\
analytical_mean,analytical_std,empirical_mean,empirical_std,\
spectral_mean,spectral_std,pattern_mean,pattern_std,\
accuracy_mean,accuracy_std,certified_mean,certified_std";

pub const RMT_CSV_HEADER: &str =
    "rows,cols,trials,smax_mean,smax_std,smax_over_sqrt_rows,predicted_ratio,predicted_smax,rel_error";

/// One aggregated grid row. Optional aggregates stay empty in the CSV when
/// the quantity does not apply (pattern oracle beyond enumeration scale,
/// accuracy in an init sweep).
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub depth: usize,
    pub width: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub analytical: (f64, f64),
    pub empirical: (f64, f64),
    pub spectral: (f64, f64),
    pub pattern: Option<(f64, f64)>,
    pub accuracy: Option<(f64, f64)>,
    pub certified: Option<(f64, f64)>,
}

impl SweepRow {
    fn to_csv(&self) -> String {
        let mut fields = vec![
            self.depth.to_string(),
            self.width.to_string(),
            csvfmt::float(self.alpha),
            csvfmt::float(self.lambda),
            csvfmt::float(self.analytical.0),
            csvfmt::float(self.analytical.1),
            csvfmt::float(self.empirical.0),
            csvfmt::float(self.empirical.1),
            csvfmt::float(self.spectral.0),
            csvfmt::float(self.spectral.1),
        ];
        for opt in [self.pattern, self.accuracy, self.certified] {
            match opt {
                Some((m, s)) => {
                    fields.push(csvfmt::float(m));
                    fields.push(csvfmt::float(s));
                }
                None => {
                    fields.push(String::new());
                    fields.push(String::new());
                }
            }
        }
        fields.join(",")
    }
}

fn aggregate(values: &[f64]) -> (f64, f64) {
    (mean(values), sample_std(values))
}

/// Grid points in the documented (depth, width, alpha, lambda) row order,
/// independent of how the config lists them.
fn grid(config: &SweepConfig, with_lambda: bool) -> Vec<(usize, usize, f64, f64)> {
    let mut depths = config.depths.clone();
    depths.sort_unstable();
    depths.dedup();
    let mut widths = config.widths.clone();
    widths.sort_unstable();
    widths.dedup();
    let mut alphas = config.alphas.clone();
    alphas.sort_by(|a, b| a.partial_cmp(b).expect("validated finite"));
    alphas.dedup();
    let mut lambdas = if with_lambda {
        config.lambda_grid()
    } else {
        vec![0.0]
    };
    lambdas.sort_by(|a, b| a.partial_cmp(b).expect("validated finite"));
    lambdas.dedup();

    let mut points = Vec::new();
    for &depth in &depths {
        for &width in &widths {
            for &alpha in &alphas {
                for &lambda in &lambdas {
                    points.push((depth, width, alpha, lambda));
                }
            }
        }
    }
    points
}

/// Per-trial estimates of one init-sweep grid point: the closed-form value,
/// the Jacobian spectral norm at the point's shared probe input, the
/// spectral product, and the pattern oracle when within enumeration scale.
pub struct InitTrialEstimates {
    pub analytical: f64,
    pub empirical: Vec<f64>,
    pub spectral: Vec<f64>,
    pub pattern: Option<Vec<f64>>,
}

/// Shared probe input for a grid point.
pub fn init_probe_input(config: &SweepConfig, point_index: usize) -> Vec<f64> {
    let mut rng = Pcg32::derived(config.seed, INIT_INPUT_STREAM + point_index as u64);
    (0..config.input_dim).map(|_| rng.next_gaussian()).collect()
}

/// All trials of one init-sweep grid point. Exposed so checks can reuse the
/// exact estimates behind the CSV aggregates.
pub fn init_point_estimates(
    config: &SweepConfig,
    point_index: usize,
    depth: usize,
    width: usize,
    alpha: f64,
) -> Result<InitTrialEstimates> {
    let activation = config.activation()?;
    let spec = NetworkSpec::new(
        depth,
        config.input_dim,
        width,
        config.output_dim,
        activation,
        alpha,
    )?;
    let q = activation.q_squared().sqrt();
    let analytical = analytical_lipschitz(&spec, alpha, q)?.value;
    let probe = init_probe_input(config, point_index);
    let enumerable = activation == ActivationKind::Relu
        && spec.hidden_units() <= PATTERN_ENUMERATION_MAX_UNITS;

    let mut empirical = Vec::with_capacity(config.trials);
    let mut spectral = Vec::with_capacity(config.trials);
    let mut pattern = enumerable.then(|| Vec::with_capacity(config.trials));
    for trial in 0..config.trials {
        let stream = INIT_NET_STREAM + (point_index * config.trials + trial) as u64;
        let mut rng = Pcg32::derived(config.seed, stream);
        let net = xavier_init(&spec, &mut rng)?;
        let jac = jacobian(&net, &probe)?;
        empirical.push(linalg::spectral_norm(&jac, &mut rng).value);
        spectral.push(spectral_product_bound(&net)?.value);
        if let Some(values) = pattern.as_mut() {
            values.push(pattern_exact_relu(&net)?.value);
        }
    }
    Ok(InitTrialEstimates {
        analytical,
        empirical,
        spectral,
        pattern,
    })
}

/// Initialization-time estimator comparison over the architecture grid.
/// No training happens; every trial re-initializes and probes the Jacobian
/// at the grid point's shared random input.
pub fn run_init_sweep(config: &SweepConfig) -> Result<String> {
    config.validate()?;
    if config.depths.iter().any(|&d| d < 2) {
        bail!("init sweep depths must be >= 2: the closed-form estimate needs a hidden layer");
    }
    let points = grid(config, false);
    let rows: Result<Vec<SweepRow>> = points
        .par_iter()
        .enumerate()
        .map(|(g, &(depth, width, alpha, _))| {
            let est = init_point_estimates(config, g, depth, width, alpha)?;
            Ok(SweepRow {
                depth,
                width,
                alpha,
                lambda: 0.0,
                analytical: (est.analytical, 0.0),
                empirical: aggregate(&est.empirical),
                spectral: aggregate(&est.spectral),
                pattern: est.pattern.as_deref().map(aggregate),
                accuracy: None,
                certified: None,
            })
        })
        .collect();
    Ok(assemble_csv(SWEEP_CSV_HEADER, rows?.iter().map(SweepRow::to_csv)))
}

/// Final-state measurements of one trained grid point.
struct TrainTrialOutcome {
    accuracy: f64,
    certified: f64,
    empirical: f64,
    spectral: f64,
    analytical: f64,
}

fn train_one(
    config: &SweepConfig,
    train_set: &lipnet::Dataset,
    test_set: &lipnet::Dataset,
    point_index: usize,
    trial: usize,
    depth: usize,
    width: usize,
    alpha: f64,
    lambda: f64,
) -> Result<TrainTrialOutcome> {
    let activation = config.activation()?;
    let spec = NetworkSpec::new(
        depth,
        train_set.input_dim,
        width,
        train_set.num_classes.max(2),
        activation,
        alpha,
    )?;
    let index = (point_index * config.trials + trial) as u64;
    let train_config = TrainConfig {
        learning_rate: config.learning_rate,
        epochs: config.epochs,
        batch_size: config.batch_size,
        weight_decay: lambda,
        seed: config.seed.wrapping_add(TRAIN_SEED_STREAM + index),
        eval_epsilon: config.perturbation.to_spec()?,
    };
    match train(&spec, train_set, test_set, &train_config) {
        Ok((net, metrics)) => {
            let last = metrics.last().expect("training records at least epoch 0");
            let mut probe_rng = Pcg32::derived(config.seed, TRAIN_PROBE_STREAM + index);
            let empirical = empirical_lipschitz(
                &net,
                InputSampler::StandardNormal,
                lipnet::lipschitz::DEFAULT_EMPIRICAL_SAMPLES,
                &mut probe_rng,
            )?;
            Ok(TrainTrialOutcome {
                accuracy: last.test_accuracy,
                certified: last.certified_accuracy,
                empirical: empirical.value,
                spectral: last.lipschitz_spectral,
                analytical: last.lipschitz_analytical,
            })
        }
        Err(lipnet::Error::Diverged { epoch, loss }) => {
            // Divergence is recorded in the row, not fatal to the sweep.
            eprintln!(
                "warning: depth {depth} width {width} alpha {alpha} lambda {lambda} \
                 trial {trial} diverged at epoch {epoch} (loss {loss}); row set to NaN"
            );
            Ok(TrainTrialOutcome {
                accuracy: f64::NAN,
                certified: f64::NAN,
                empirical: f64::NAN,
                spectral: f64::NAN,
                analytical: f64::NAN,
            })
        }
        Err(other) => Err(other.into()),
    }
}

/// Train-and-certify sweep over the (depth, width, alpha, lambda) grid.
/// Each row aggregates `trials` runs: final test accuracy, certified
/// accuracy at the configured perturbation, and the three Lipschitz
/// estimates of the trained network.
pub fn run_train_sweep(config: &SweepConfig) -> Result<String> {
    config.validate()?;
    let (train_set, test_set) = crate::datasrc::resolve(&config.dataset, config.seed)?;
    let points = grid(config, true);
    let rows: Result<Vec<SweepRow>> = points
        .par_iter()
        .enumerate()
        .map(|(g, &(depth, width, alpha, lambda))| {
            let mut accuracy = Vec::with_capacity(config.trials);
            let mut certified = Vec::with_capacity(config.trials);
            let mut empirical = Vec::with_capacity(config.trials);
            let mut spectral = Vec::with_capacity(config.trials);
            let mut analytical = Vec::with_capacity(config.trials);
            for trial in 0..config.trials {
                let outcome = train_one(
                    config, &train_set, &test_set, g, trial, depth, width, alpha, lambda,
                )?;
                accuracy.push(outcome.accuracy);
                certified.push(outcome.certified);
                empirical.push(outcome.empirical);
                spectral.push(outcome.spectral);
                analytical.push(outcome.analytical);
            }
            Ok(SweepRow {
                depth,
                width,
                alpha,
                lambda,
                analytical: aggregate(&analytical),
                empirical: aggregate(&empirical),
                spectral: aggregate(&spectral),
                pattern: None,
                accuracy: Some(aggregate(&accuracy)),
                certified: Some(aggregate(&certified)),
            })
        })
        .collect();
    Ok(assemble_csv(SWEEP_CSV_HEADER, rows?.iter().map(SweepRow::to_csv)))
}

/// Sampled check of the random-matrix edge law: for each (rows, cols),
/// draw standard Gaussian matrices, measure the top singular value, and
/// compare `s_max / sqrt(rows)` against `1 + sqrt(cols / rows)`.
pub fn rmt_check(sizes: &[(usize, usize)], trials: usize, seed: u64) -> Result<String> {
    if sizes.is_empty() {
        bail!("rmt-check needs at least one size");
    }
    if trials == 0 {
        bail!("trials must be at least 1");
    }
    for &(rows, cols) in sizes {
        if cols > rows {
            bail!("rmt-check sizes need cols <= rows, got {rows}x{cols}");
        }
        if cols < 100 {
            bail!("rmt-check sizes must be at least 100, got {rows}x{cols}");
        }
    }

    let measurements: Result<Vec<String>> = sizes
        .par_iter()
        .enumerate()
        .map(|(i, &(rows, cols))| {
            let mut values = Vec::with_capacity(trials);
            for trial in 0..trials {
                let mut rng = Pcg32::derived(seed, RMT_STREAM + (i * trials + trial) as u64);
                let m: Matrix = linalg::sample_gaussian_matrix(rows, cols, 1.0, &mut rng)?;
                let s = linalg::max_singular_value(&m, RMT_REL_TOL, RMT_MAX_ITER, &mut rng)?;
                values.push(s.value);
            }
            let (smax_mean, smax_std) = aggregate(&values);
            let ratio = smax_mean / (rows as f64).sqrt();
            let predicted_ratio = 1.0 + (cols as f64 / rows as f64).sqrt();
            let predicted_smax = lipnet::lipschitz::rmt_max_singular(rows, cols, 1.0)?;
            let rel_error = (ratio - predicted_ratio).abs() / predicted_ratio;
            Ok([
                rows.to_string(),
                cols.to_string(),
                trials.to_string(),
                csvfmt::float(smax_mean),
                csvfmt::float(smax_std),
                csvfmt::float(ratio),
                csvfmt::float(predicted_ratio),
                csvfmt::float(predicted_smax),
                csvfmt::float(rel_error),
            ]
            .join(","))
        })
        .collect();
    Ok(assemble_csv(RMT_CSV_HEADER, measurements?.into_iter()))
}

fn assemble_csv(header: &str, rows: impl Iterator<Item = String>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row);
        out.push('\n');
    }
    out
}
