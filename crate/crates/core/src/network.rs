//! Multilayer perceptron definition: activations and their derivative
//! statistics, Xavier initialization with a variance multiplier, traced
//! forward passes, exact chain-rule Jacobians, and weight-file round trips.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::Pcg32;

/// Variance of the sigmoid derivative under a standard normal input,
/// pinned from numerical integration and cross-checked by the Monte Carlo
/// estimator in tests.
pub const SIGMOID_DERIVATIVE_VARIANCE: f64 = 0.002144018527;

/// Variance of the tanh derivative under a standard normal input; same
/// provenance as [`SIGMOID_DERIVATIVE_VARIANCE`].
pub const TANH_DERIVATIVE_VARIANCE: f64 = 0.097523738086;

/// Element-wise activation functions. The closed tag set is what the
/// analysis layers rely on: every kind is monotone and 1-Lipschitz.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationKind {
    Relu,
    Sigmoid,
    Tanh,
    Identity,
}

impl ActivationKind {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            ActivationKind::Relu => x.max(0.0),
            ActivationKind::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Identity => x,
        }
    }

    /// Derivative at `x`. The relu derivative at exactly zero is defined as
    /// zero (the flat branch of the piecewise definition).
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            ActivationKind::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Sigmoid => {
                let s = 1.0 / (1.0 + (-x).exp());
                s * (1.0 - s)
            }
            ActivationKind::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            ActivationKind::Identity => 1.0,
        }
    }

    /// Variance of the derivative under a standard normal input (q^2).
    /// Exact for relu and identity; sigmoid and tanh use the pinned
    /// integration constants.
    pub fn q_squared(self) -> f64 {
        match self {
            ActivationKind::Relu => 0.25,
            ActivationKind::Sigmoid => SIGMOID_DERIVATIVE_VARIANCE,
            ActivationKind::Tanh => TANH_DERIVATIVE_VARIANCE,
            ActivationKind::Identity => 0.0,
        }
    }

    /// Whether |σ(a) - σ(b)| <= |a - b| holds; true for the whole tag set.
    pub fn is_one_lipschitz(self) -> bool {
        true
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Relu => "relu",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "relu" => Ok(ActivationKind::Relu),
            "sigmoid" => Ok(ActivationKind::Sigmoid),
            "tanh" => Ok(ActivationKind::Tanh),
            "identity" => Ok(ActivationKind::Identity),
            other => Err(Error::invalid(format!("unknown activation '{other}'"))),
        }
    }

    /// Stable single-byte tag used by the weight-file format.
    pub fn tag(self) -> u8 {
        match self {
            ActivationKind::Relu => 0,
            ActivationKind::Sigmoid => 1,
            ActivationKind::Tanh => 2,
            ActivationKind::Identity => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(ActivationKind::Relu),
            1 => Ok(ActivationKind::Sigmoid),
            2 => Ok(ActivationKind::Tanh),
            3 => Ok(ActivationKind::Identity),
            other => Err(Error::invalid(format!("unknown activation tag {other}"))),
        }
    }
}

impl std::fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Apply an activation element-wise.
pub fn activation_apply(kind: ActivationKind, v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| kind.apply(x)).collect()
}

/// Element-wise activation derivative.
pub fn activation_derivative(kind: ActivationKind, v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| kind.derivative(x)).collect()
}

/// Monte Carlo estimate of q^2 = VAR[σ'(x)] for x ~ N(0, 1). Relu and
/// identity short-circuit to their closed forms.
pub fn derivative_variance(kind: ActivationKind, samples: usize, rng: &mut Pcg32) -> Result<f64> {
    if samples < 10_000 {
        return Err(Error::invalid(format!(
            "derivative variance needs at least 10000 samples, got {samples}"
        )));
    }
    match kind {
        ActivationKind::Relu => Ok(0.25),
        ActivationKind::Identity => Ok(0.0),
        _ => {
            // Welford running variance.
            let mut mean = 0.0;
            let mut m2 = 0.0;
            for i in 0..samples {
                let d = kind.derivative(rng.next_gaussian());
                let delta = d - mean;
                mean += delta / (i + 1) as f64;
                m2 += delta * (d - mean);
            }
            Ok(m2 / (samples - 1) as f64)
        }
    }
}

/// Architecture description: `depth` affine layers mapping
/// `input_dim -> hidden_dim -> ... -> output_dim`, a shared interior width,
/// one activation kind between layers (the final layer is always identity),
/// and the Xavier variance multiplier `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkSpec {
    pub depth: usize,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub activation: ActivationKind,
    pub alpha: f64,
}

impl NetworkSpec {
    pub fn new(
        depth: usize,
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        activation: ActivationKind,
        alpha: f64,
    ) -> Result<Self> {
        let spec = NetworkSpec {
            depth,
            input_dim,
            hidden_dim,
            output_dim,
            activation,
            alpha,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 {
            return Err(Error::invalid("depth must be at least 1"));
        }
        if self.input_dim < 1 || self.hidden_dim < 1 || self.output_dim < 1 {
            return Err(Error::invalid("all dimensions must be at least 1"));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::invalid(format!(
                "alpha must be positive and finite, got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// (rows, cols) of each affine layer, in forward order.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        (0..self.depth)
            .map(|l| {
                let cols = if l == 0 { self.input_dim } else { self.hidden_dim };
                let rows = if l + 1 == self.depth {
                    self.output_dim
                } else {
                    self.hidden_dim
                };
                (rows, cols)
            })
            .collect()
    }

    /// Total number of interior (activated) units; drives the cost of the
    /// activation-pattern enumeration oracle.
    pub fn hidden_units(&self) -> usize {
        self.hidden_dim * (self.depth - 1)
    }
}

/// One affine layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Realized network: a spec plus its weights. Immutable for analysis;
/// only the trainer mutates layers in place.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    spec: NetworkSpec,
    layers: Vec<Layer>,
}

impl MlpNetwork {
    /// Assemble a network from explicit layers, checking every shape
    /// against the spec.
    pub fn from_layers(spec: NetworkSpec, layers: Vec<Layer>) -> Result<Self> {
        spec.validate()?;
        let dims = spec.layer_dims();
        if layers.len() != dims.len() {
            return Err(Error::dim(format!(
                "spec has {} layers, got {}",
                dims.len(),
                layers.len()
            )));
        }
        for (l, (layer, &(rows, cols))) in layers.iter().zip(&dims).enumerate() {
            if layer.weight.rows() != rows || layer.weight.cols() != cols {
                return Err(Error::dim(format!(
                    "layer {l} weight is {}x{}, expected {rows}x{cols}",
                    layer.weight.rows(),
                    layer.weight.cols()
                )));
            }
            if layer.bias.len() != rows {
                return Err(Error::dim(format!(
                    "layer {l} bias has length {}, expected {rows}",
                    layer.bias.len()
                )));
            }
        }
        Ok(MlpNetwork { spec, layers })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn depth(&self) -> usize {
        self.spec.depth
    }

    /// Write weights to `path`; a `.txt` extension selects the text form,
    /// anything else the binary form.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        if path.extension().is_some_and(|e| e == "txt") {
            self.write_text(&mut file)
        } else {
            self.write_binary(&mut file)
        }
    }

    /// Load weights from either format, distinguished by the magic bytes.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        if bytes.starts_with(BINARY_MAGIC) {
            Self::read_binary(&mut &bytes[..])
        } else {
            let text = std::str::from_utf8(&bytes).map_err(|e| Error::Format {
                offset: e.valid_up_to() as u64,
                reason: "weight file is neither binary (bad magic) nor UTF-8 text".to_string(),
            })?;
            Self::read_text(text)
        }
    }

    /// Binary weight file: magic `MLPW`, version byte 1, then little-endian
    /// u32 depth / input_dim / hidden_dim / output_dim, the activation tag
    /// byte, little-endian f64 alpha, and per layer the row-major weights
    /// followed by the bias, all little-endian f64.
    pub fn write_binary<W: Write>(&self, out: &mut W) -> Result<()> {
        out.write_all(BINARY_MAGIC)?;
        out.write_all(&[BINARY_VERSION])?;
        for dim in [
            self.spec.depth,
            self.spec.input_dim,
            self.spec.hidden_dim,
            self.spec.output_dim,
        ] {
            out.write_all(&(dim as u32).to_le_bytes())?;
        }
        out.write_all(&[self.spec.activation.tag()])?;
        out.write_all(&self.spec.alpha.to_le_bytes())?;
        for layer in &self.layers {
            for v in layer.weight.data() {
                out.write_all(&v.to_le_bytes())?;
            }
            for v in &layer.bias {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(input: &mut R) -> Result<Self> {
        let mut reader = CountingReader::new(input);
        let mut magic = [0u8; 4];
        reader.read_exact(&mut magic, "magic")?;
        if &magic != BINARY_MAGIC {
            return Err(Error::Format {
                offset: 0,
                reason: format!("bad magic {magic:02x?}, expected {BINARY_MAGIC:02x?}"),
            });
        }
        let version = reader.read_u8("version")?;
        if version != BINARY_VERSION {
            return Err(Error::Format {
                offset: 4,
                reason: format!("unsupported version {version}"),
            });
        }
        let depth = reader.read_u32_le("depth")? as usize;
        let input_dim = reader.read_u32_le("input_dim")? as usize;
        let hidden_dim = reader.read_u32_le("hidden_dim")? as usize;
        let output_dim = reader.read_u32_le("output_dim")? as usize;
        let activation = ActivationKind::from_tag(reader.read_u8("activation")?)
            .map_err(|e| Error::Format {
                offset: 21,
                reason: e.to_string(),
            })?;
        let alpha = reader.read_f64_le("alpha")?;
        let spec = NetworkSpec::new(depth, input_dim, hidden_dim, output_dim, activation, alpha)
            .map_err(|e| Error::Format {
                offset: reader.offset,
                reason: format!("invalid header: {e}"),
            })?;

        let mut layers = Vec::with_capacity(depth);
        for (rows, cols) in spec.layer_dims() {
            let mut values = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                values.push(reader.read_f64_le("weight value")?);
            }
            let weight = Matrix::from_vec(rows, cols, values).map_err(|e| Error::Format {
                offset: reader.offset,
                reason: e.to_string(),
            })?;
            let mut bias = Vec::with_capacity(rows);
            for _ in 0..rows {
                bias.push(reader.read_f64_le("bias value")?);
            }
            layers.push(Layer { weight, bias });
        }
        MlpNetwork::from_layers(spec, layers)
    }

    /// Text weight file: five `key value` header lines (`depth`,
    /// `input_dim`, `hidden_dim`, `output_dim`, `activation`, `alpha` after
    /// a `mlpw 1` first line), then the same number stream as the binary
    /// form as whitespace-separated decimals. Floats round-trip exactly.
    pub fn write_text<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "mlpw 1")?;
        writeln!(out, "depth {}", self.spec.depth)?;
        writeln!(out, "input_dim {}", self.spec.input_dim)?;
        writeln!(out, "hidden_dim {}", self.spec.hidden_dim)?;
        writeln!(out, "output_dim {}", self.spec.output_dim)?;
        writeln!(out, "activation {}", self.spec.activation)?;
        writeln!(out, "alpha {}", self.spec.alpha)?;
        for layer in &self.layers {
            for r in 0..layer.weight.rows() {
                let row: Vec<String> = layer.weight.row(r).iter().map(|v| v.to_string()).collect();
                writeln!(out, "{}", row.join(" "))?;
            }
            let bias: Vec<String> = layer.bias.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", bias.join(" "))?;
        }
        Ok(())
    }

    pub fn read_text(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let mut expect = |key: &str| -> Result<&str> {
            match (tokens.next(), tokens.next()) {
                (Some(k), Some(v)) if k == key => Ok(v),
                (Some(k), _) => Err(Error::Format {
                    offset: 0,
                    reason: format!("expected '{key}', found '{k}'"),
                }),
                _ => Err(Error::Format {
                    offset: 0,
                    reason: format!("missing '{key}' header"),
                }),
            }
        };
        let version = expect("mlpw")?;
        if version != "1" {
            return Err(Error::Format {
                offset: 0,
                reason: format!("unsupported text version {version}"),
            });
        }
        let depth: usize = parse_field(expect("depth")?, "depth")?;
        let input_dim: usize = parse_field(expect("input_dim")?, "input_dim")?;
        let hidden_dim: usize = parse_field(expect("hidden_dim")?, "hidden_dim")?;
        let output_dim: usize = parse_field(expect("output_dim")?, "output_dim")?;
        let activation = ActivationKind::from_name(expect("activation")?)?;
        let alpha: f64 = parse_field(expect("alpha")?, "alpha")?;
        let spec = NetworkSpec::new(depth, input_dim, hidden_dim, output_dim, activation, alpha)?;

        let mut layers = Vec::with_capacity(depth);
        for (rows, cols) in spec.layer_dims() {
            let mut values = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                let token = tokens.next().ok_or_else(|| Error::Format {
                    offset: text.len() as u64,
                    reason: "truncated weight values".to_string(),
                })?;
                values.push(parse_field(token, "weight value")?);
            }
            let weight = Matrix::from_vec(rows, cols, values)?;
            let mut bias = Vec::with_capacity(rows);
            for _ in 0..rows {
                let token = tokens.next().ok_or_else(|| Error::Format {
                    offset: text.len() as u64,
                    reason: "truncated bias values".to_string(),
                })?;
                bias.push(parse_field(token, "bias value")?);
            }
            layers.push(Layer { weight, bias });
        }
        if tokens.next().is_some() {
            return Err(Error::Format {
                offset: text.len() as u64,
                reason: "trailing values after final bias".to_string(),
            });
        }
        MlpNetwork::from_layers(spec, layers)
    }
}

const BINARY_MAGIC: &[u8; 4] = b"MLPW";
const BINARY_VERSION: u8 = 1;

fn parse_field<T: std::str::FromStr>(token: &str, what: &str) -> Result<T> {
    token.parse().map_err(|_| Error::Format {
        offset: 0,
        reason: format!("cannot parse {what} from '{token}'"),
    })
}

struct CountingReader<'a, R: Read> {
    inner: &'a mut R,
    offset: u64,
}

impl<'a, R: Read> CountingReader<'a, R> {
    fn new(inner: &'a mut R) -> Self {
        CountingReader { inner, offset: 0 }
    }

    fn read_exact(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        self.inner.read_exact(buf).map_err(|_| Error::Format {
            offset: self.offset,
            reason: format!("truncated while reading {what}"),
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn read_u8(&mut self, what: &str) -> Result<u8> {
        let mut b = [0u8; 1];
        self.read_exact(&mut b, what)?;
        Ok(b[0])
    }

    fn read_u32_le(&mut self, what: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    fn read_f64_le(&mut self, what: &str) -> Result<f64> {
        let mut b = [0u8; 8];
        self.read_exact(&mut b, what)?;
        Ok(f64::from_le_bytes(b))
    }
}

/// Full forward-pass record: pre-activations and activations per layer.
/// The final activation is the identity, so the last activation vector is
/// the logit vector.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub pre_activations: Vec<Vec<f64>>,
    pub activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn logits(&self) -> &[f64] {
        self.activations.last().expect("trace has at least one layer")
    }
}

/// Xavier initialization: layer weights drawn i.i.d. from
/// N(0, 2 alpha^2 / (fan_in + fan_out)), biases exactly zero.
pub fn xavier_init(spec: &NetworkSpec, rng: &mut Pcg32) -> Result<MlpNetwork> {
    spec.validate()?;
    let mut layers = Vec::with_capacity(spec.depth);
    for (rows, cols) in spec.layer_dims() {
        let std = (2.0 * spec.alpha * spec.alpha / (rows + cols) as f64).sqrt();
        let weight = crate::linalg::sample_gaussian_matrix(rows, cols, std, rng)?;
        layers.push(Layer {
            weight,
            bias: vec![0.0; rows],
        });
    }
    MlpNetwork::from_layers(*spec, layers)
}

/// Forward pass with a full trace.
pub fn forward(net: &MlpNetwork, x: &[f64]) -> Result<ForwardTrace> {
    if x.len() != net.spec.input_dim {
        return Err(Error::dim(format!(
            "input has length {}, network expects {}",
            x.len(),
            net.spec.input_dim
        )));
    }
    let depth = net.depth();
    let mut pre_activations = Vec::with_capacity(depth);
    let mut activations = Vec::with_capacity(depth);
    let mut current = x.to_vec();
    for (l, layer) in net.layers.iter().enumerate() {
        let mut pre = layer.weight.matvec(&current)?;
        for (p, b) in pre.iter_mut().zip(&layer.bias) {
            *p += b;
        }
        let post = if l + 1 == depth {
            pre.clone()
        } else {
            activation_apply(net.spec.activation, &pre)
        };
        pre_activations.push(pre);
        current.clone_from(&post);
        activations.push(post);
    }
    Ok(ForwardTrace {
        pre_activations,
        activations,
    })
}

/// Exact Jacobian of the logits with respect to the input, as the ordered
/// product of layer weights interleaved with activation-derivative
/// diagonals from the forward trace.
pub fn jacobian(net: &MlpNetwork, x: &[f64]) -> Result<Matrix> {
    let trace = forward(net, x)?;
    let mut jac = net.layers[0].weight.clone();
    for l in 1..net.depth() {
        let derivs = activation_derivative(net.spec.activation, &trace.pre_activations[l - 1]);
        jac.scale_rows(&derivs)?;
        jac = net.layers[l].weight.matmul(&jac)?;
    }
    Ok(jac)
}

/// Effective Xavier multiplier recovered from observed weight variances:
/// per layer sqrt(Var(W) * (fan_in + fan_out) / 2), combined across layers
/// by geometric mean.
pub fn weight_std_multiplier(net: &MlpNetwork) -> Result<f64> {
    let mut log_sum = 0.0;
    let mut zero = false;
    for (l, layer) in net.layers.iter().enumerate() {
        let data = layer.weight.data();
        if data.len() < 2 {
            return Err(Error::invalid(format!(
                "layer {l} has {} entries; variance needs at least 2",
                data.len()
            )));
        }
        let n = data.len() as f64;
        let mean = data.iter().sum::<f64>() / n;
        let var = data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        let fan_sum = (layer.weight.rows() + layer.weight.cols()) as f64;
        let alpha_l = (var * fan_sum / 2.0).sqrt();
        if alpha_l == 0.0 {
            zero = true;
        } else {
            log_sum += alpha_l.ln();
        }
    }
    if zero {
        return Ok(0.0);
    }
    Ok((log_sum / net.depth() as f64).exp())
}
