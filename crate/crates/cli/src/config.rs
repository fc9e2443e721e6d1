//! JSON experiment configuration. Unknown keys are rejected so a typo in a
//! config file fails loudly instead of silently running defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use lipnet::network::ActivationKind;
use lipnet::robustness::{NormOrder, PerturbationSpec};

/// Grid description for `sweep-init` and `sweep-train`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "defaults::depths")]
    pub depths: Vec<usize>,
    #[serde(default = "defaults::widths")]
    pub widths: Vec<usize>,
    #[serde(default = "defaults::alphas")]
    pub alphas: Vec<f64>,
    /// Weight-decay grid; an empty list means the single point 0.
    #[serde(default)]
    pub lambdas: Vec<f64>,
    #[serde(default = "defaults::trials")]
    pub trials: usize,
    /// Input dimension for init sweeps (train sweeps take it from the data).
    #[serde(default = "defaults::input_dim")]
    pub input_dim: usize,
    #[serde(default = "defaults::output_dim")]
    pub output_dim: usize,
    #[serde(default = "defaults::activation")]
    pub activation: String,
    #[serde(default)]
    pub dataset: DatasetSource,
    #[serde(default = "defaults::perturbation")]
    pub perturbation: PerturbationConfig,
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "defaults::epochs")]
    pub epochs: usize,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    /// Output CSV path; stdout when absent and no --out flag is given.
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config deserializes via defaults")
    }
}

mod defaults {
    use super::PerturbationConfig;

    pub fn depths() -> Vec<usize> {
        vec![2, 3, 4, 5]
    }
    pub fn widths() -> Vec<usize> {
        vec![64, 128, 256, 512]
    }
    pub fn alphas() -> Vec<f64> {
        vec![1.0, 2.0]
    }
    pub fn trials() -> usize {
        10
    }
    pub fn input_dim() -> usize {
        64
    }
    pub fn output_dim() -> usize {
        10
    }
    pub fn activation() -> String {
        "relu".to_string()
    }
    pub fn perturbation() -> PerturbationConfig {
        PerturbationConfig {
            norm: "2".to_string(),
            epsilon: 0.1,
        }
    }
    pub fn learning_rate() -> f64 {
        0.1
    }
    pub fn epochs() -> usize {
        12
    }
    pub fn batch_size() -> usize {
        64
    }
    pub fn seed() -> u64 {
        42
    }
}

impl SweepConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let config: SweepConfig = serde_json::from_str(&text)
            .with_context(|| format!("cannot parse config {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.depths.is_empty() || self.widths.is_empty() || self.alphas.is_empty() {
            bail!("depth, width, and alpha grids must be nonempty");
        }
        if self.depths.iter().any(|&d| d == 0) {
            bail!("depths must be positive");
        }
        if self.widths.iter().any(|&w| w == 0) {
            bail!("widths must be positive");
        }
        if self.alphas.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
            bail!("alphas must be positive and finite");
        }
        if self.lambdas.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            bail!("lambdas must be finite and non-negative");
        }
        if self.trials == 0 {
            bail!("trials must be at least 1");
        }
        if self.input_dim == 0 || self.output_dim == 0 {
            bail!("input_dim and output_dim must be positive");
        }
        self.activation()?;
        self.perturbation.to_spec()?;
        if !(self.learning_rate > 0.0) {
            bail!("learning_rate must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            bail!("epochs and batch_size must be positive");
        }
        Ok(())
    }

    pub fn activation(&self) -> Result<ActivationKind> {
        Ok(ActivationKind::from_name(&self.activation)?)
    }

    /// The lambda grid with the documented empty-means-zero default.
    pub fn lambda_grid(&self) -> Vec<f64> {
        if self.lambdas.is_empty() {
            vec![0.0]
        } else {
            self.lambdas.clone()
        }
    }
}

/// Where training data comes from.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// MNIST-format IDX files under `dir`: `train-images-idx3-ubyte`,
    /// `train-labels-idx1-ubyte`, `t10k-images-idx3-ubyte`,
    /// `t10k-labels-idx1-ubyte`. Unless `full`, the desk-scale subset
    /// (first 10000 train / 2000 test samples) is used.
    Mnist {
        dir: PathBuf,
        #[serde(default)]
        full: bool,
    },
    /// Seeded Gaussian blob task; train and test splits are drawn from
    /// separate streams of the sweep's master seed.
    Blobs {
        #[serde(default = "blob_defaults::classes")]
        classes: usize,
        #[serde(default = "blob_defaults::per_class")]
        per_class: usize,
        #[serde(default = "blob_defaults::test_per_class")]
        test_per_class: usize,
        #[serde(default = "blob_defaults::dim")]
        dim: usize,
        #[serde(default = "blob_defaults::separation")]
        separation: f64,
    },
}

mod blob_defaults {
    pub fn classes() -> usize {
        10
    }
    pub fn per_class() -> usize {
        200
    }
    pub fn test_per_class() -> usize {
        40
    }
    pub fn dim() -> usize {
        64
    }
    pub fn separation() -> f64 {
        4.0
    }
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Blobs {
            classes: blob_defaults::classes(),
            per_class: blob_defaults::per_class(),
            test_per_class: blob_defaults::test_per_class(),
            dim: blob_defaults::dim(),
            separation: blob_defaults::separation(),
        }
    }
}

/// Perturbation budget as it appears in config files.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    pub norm: String,
    pub epsilon: f64,
}

impl PerturbationConfig {
    pub fn to_spec(&self) -> Result<PerturbationSpec> {
        let norm = NormOrder::from_name(&self.norm)?;
        Ok(PerturbationSpec::new(norm, self.epsilon)?)
    }
}
