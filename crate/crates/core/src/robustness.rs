//! Certified robustness: prediction margins, Lipschitz-derived certified
//! radii, interval bound propagation, and certified-accuracy aggregation.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::lipschitz::LipschitzEstimate;
use crate::network::{self, MlpNetwork};

/// Perturbation norm order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormOrder {
    L2,
    LInf,
}

impl NormOrder {
    /// The factor `2^((p-1)/p)` in the certification condition
    /// `factor * L * epsilon < margin`.
    pub fn certification_factor(self) -> f64 {
        match self {
            NormOrder::L2 => std::f64::consts::SQRT_2,
            NormOrder::LInf => 2.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NormOrder::L2 => "2",
            NormOrder::LInf => "inf",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "2" | "l2" => Ok(NormOrder::L2),
            "inf" | "linf" | "infinity" => Ok(NormOrder::LInf),
            other => Err(Error::invalid(format!("unknown norm order '{other}'"))),
        }
    }
}

impl std::fmt::Display for NormOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A perturbation budget: norm order and radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationSpec {
    pub norm: NormOrder,
    pub epsilon: f64,
}

impl PerturbationSpec {
    pub fn new(norm: NormOrder, epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::invalid(format!(
                "epsilon must be finite and non-negative, got {epsilon}"
            )));
        }
        Ok(PerturbationSpec { norm, epsilon })
    }
}

/// Axis-aligned box of input or logit values.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl IntervalBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::dim(format!(
                "lower has length {}, upper {}",
                lower.len(),
                upper.len()
            )));
        }
        if lower.iter().zip(&upper).any(|(l, u)| l > u) {
            return Err(Error::invalid("box lower bound exceeds upper bound"));
        }
        Ok(IntervalBox { lower, upper })
    }

    /// Degenerate box containing exactly `point`.
    pub fn point(point: &[f64]) -> Self {
        IntervalBox {
            lower: point.to_vec(),
            upper: point.to_vec(),
        }
    }

    /// `center ± radius` in every coordinate. This box encloses both the
    /// l-inf ball of that radius and (more loosely) the l2 ball.
    pub fn around(center: &[f64], radius: f64) -> Result<Self> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::invalid(format!(
                "radius must be finite and non-negative, got {radius}"
            )));
        }
        Ok(IntervalBox {
            lower: center.iter().map(|c| c - radius).collect(),
            upper: center.iter().map(|c| c + radius).collect(),
        })
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn contains(&self, point: &[f64], slack: f64) -> bool {
        point.len() == self.len()
            && point
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (l, u))| *x >= l - slack && *x <= u + slack)
    }
}

/// Margin of a prediction: `max(0, y_t - max_{i != t} y_i)`. Zero when the
/// prediction is wrong or tied.
pub fn margin(logits: &[f64], true_class: usize) -> Result<f64> {
    if logits.len() < 2 {
        return Err(Error::invalid(format!(
            "margin needs at least 2 logits, got {}",
            logits.len()
        )));
    }
    if true_class >= logits.len() {
        return Err(Error::invalid(format!(
            "true class {true_class} out of range for {} logits",
            logits.len()
        )));
    }
    let best_other = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != true_class)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((logits[true_class] - best_other).max(0.0))
}

/// Largest certified perturbation radius: `margin / (2^((p-1)/p) * L)`.
/// For p = 2 this is `sqrt(2) * margin / (2 L)`, for p = inf
/// `margin / (2 L)`.
pub fn certified_radius(margin: f64, lipschitz: f64, norm: NormOrder) -> Result<f64> {
    if !(margin >= 0.0) {
        return Err(Error::invalid(format!("margin must be non-negative, got {margin}")));
    }
    if !(lipschitz > 0.0) || !lipschitz.is_finite() {
        return Err(Error::invalid(format!(
            "lipschitz constant must be positive and finite, got {lipschitz}"
        )));
    }
    Ok(margin / (norm.certification_factor() * lipschitz))
}

/// Propagate an input box through the network. Affine layers map center
/// and radius as `c' = Wc + b`, `r' = |W| r`; monotone activations apply
/// to both bounds. The output is a sound enclosure of the logit set.
pub fn ibp_propagate(net: &MlpNetwork, input: &IntervalBox) -> Result<IntervalBox> {
    if input.len() != net.spec().input_dim {
        return Err(Error::dim(format!(
            "box has dimension {}, network expects {}",
            input.len(),
            net.spec().input_dim
        )));
    }
    let depth = net.depth();
    let mut center: Vec<f64> = input
        .lower
        .iter()
        .zip(&input.upper)
        .map(|(l, u)| 0.5 * (l + u))
        .collect();
    let mut radius: Vec<f64> = input
        .lower
        .iter()
        .zip(&input.upper)
        .map(|(l, u)| 0.5 * (u - l))
        .collect();

    for (l, layer) in net.layers().iter().enumerate() {
        let w = &layer.weight;
        let mut new_center = w.matvec(&center)?;
        for (c, b) in new_center.iter_mut().zip(&layer.bias) {
            *c += b;
        }
        let mut new_radius = vec![0.0; w.rows()];
        for (i, nr) in new_radius.iter_mut().enumerate() {
            let row = w.row(i);
            let mut acc = 0.0;
            for (&a, &r) in row.iter().zip(&radius) {
                acc += a.abs() * r;
            }
            *nr = acc;
        }
        if l + 1 < depth {
            let activation = net.spec().activation;
            // Monotone activation: apply to the endpoints.
            let lower: Vec<f64> = new_center
                .iter()
                .zip(&new_radius)
                .map(|(c, r)| activation.apply(c - r))
                .collect();
            let upper: Vec<f64> = new_center
                .iter()
                .zip(&new_radius)
                .map(|(c, r)| activation.apply(c + r))
                .collect();
            center = lower.iter().zip(&upper).map(|(l, u)| 0.5 * (l + u)).collect();
            radius = lower.iter().zip(&upper).map(|(l, u)| 0.5 * (u - l)).collect();
        } else {
            center = new_center;
            radius = new_radius;
        }
    }

    IntervalBox::new(
        center.iter().zip(&radius).map(|(c, r)| c - r).collect(),
        center.iter().zip(&radius).map(|(c, r)| c + r).collect(),
    )
}

/// Certify one sample with interval bound propagation over the box
/// `x ± epsilon` (which encloses the l2 ball of the same radius, so the
/// check is sound for both norm orders, conservatively for l2). Certified
/// means the true-class logit lower bound strictly beats every other
/// logit's upper bound; misclassified inputs simply come back `false`.
pub fn ibp_certify(
    net: &MlpNetwork,
    x: &[f64],
    true_class: usize,
    pert: &PerturbationSpec,
) -> Result<bool> {
    if true_class >= net.spec().output_dim {
        return Err(Error::invalid(format!(
            "true class {true_class} out of range for {} outputs",
            net.spec().output_dim
        )));
    }
    let input = IntervalBox::around(x, pert.epsilon)?;
    let output = ibp_propagate(net, &input)?;
    let lower_true = output.lower()[true_class];
    Ok(output
        .upper()
        .iter()
        .enumerate()
        .all(|(i, &u)| i == true_class || lower_true > u))
}

/// Which certificate backs [`certified_accuracy`].
#[derive(Debug, Clone, Copy)]
pub enum CertificationMethod<'a> {
    /// Interval bound propagation per sample.
    Ibp,
    /// Margin certification against a Lipschitz estimate. Only sound
    /// upper-bound estimates are accepted.
    LipschitzMargin(&'a LipschitzEstimate),
}

/// Plain test accuracy: fraction of samples whose argmax logit matches the
/// label.
pub fn accuracy(net: &MlpNetwork, dataset: &Dataset) -> Result<f64> {
    let mut correct = 0usize;
    for (x, &label) in dataset.inputs.iter().zip(&dataset.labels) {
        let trace = network::forward(net, x)?;
        if argmax(trace.logits()) == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}

/// Fraction of samples that are both correctly classified and certified at
/// the given perturbation budget.
pub fn certified_accuracy(
    net: &MlpNetwork,
    dataset: &Dataset,
    pert: &PerturbationSpec,
    method: CertificationMethod<'_>,
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::invalid("certified accuracy needs a nonempty dataset"));
    }
    if let CertificationMethod::LipschitzMargin(estimate) = method {
        if !estimate.method.is_upper_bound() {
            return Err(Error::invalid(format!(
                "{} estimates are not sound bounds; margin certification accepts \
                 spectral_product or pattern_exact",
                estimate.method
            )));
        }
    }

    let mut certified = 0usize;
    for (x, &label) in dataset.inputs.iter().zip(&dataset.labels) {
        let ok = match method {
            CertificationMethod::Ibp => {
                // An IBP certificate implies strictly-correct classification,
                // so the conjunction reduces to the certificate itself.
                ibp_certify(net, x, label, pert)?
            }
            CertificationMethod::LipschitzMargin(estimate) => {
                let trace = network::forward(net, x)?;
                let m = margin(trace.logits(), label)?;
                if m > 0.0 {
                    certified_radius(m, estimate.value, pert.norm)? >= pert.epsilon
                } else {
                    false
                }
            }
        };
        if ok {
            certified += 1;
        }
    }
    Ok(certified as f64 / dataset.len() as f64)
}

/// Per-sample robustness summary: margin, certified radii under both norm
/// orders from the supplied Lipschitz estimate, and the IBP verdict at the
/// given budget.
#[derive(Debug, Clone)]
pub struct RobustnessReport {
    pub margin: f64,
    pub radius_l2: f64,
    pub radius_linf: f64,
    pub ibp_certified: bool,
    pub lipschitz: LipschitzEstimate,
}

pub fn robustness_report(
    net: &MlpNetwork,
    x: &[f64],
    true_class: usize,
    pert: &PerturbationSpec,
    lipschitz: &LipschitzEstimate,
) -> Result<RobustnessReport> {
    if !lipschitz.method.is_upper_bound() {
        return Err(Error::invalid(format!(
            "{} estimates are not sound bounds for certified radii",
            lipschitz.method
        )));
    }
    let trace = network::forward(net, x)?;
    let m = margin(trace.logits(), true_class)?;
    // margin = 0 forces both radii to 0, including for L = 0 networks.
    let (radius_l2, radius_linf) = if m == 0.0 {
        (0.0, 0.0)
    } else {
        (
            certified_radius(m, lipschitz.value, NormOrder::L2)?,
            certified_radius(m, lipschitz.value, NormOrder::LInf)?,
        )
    };
    Ok(RobustnessReport {
        margin: m,
        radius_l2,
        radius_linf,
        ibp_certified: ibp_certify(net, x, true_class, pert)?,
        lipschitz: lipschitz.clone(),
    })
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lipschitz::{spectral_product_bound, EstimationMethod};
    use crate::linalg::Matrix;
    use crate::network::{xavier_init, ActivationKind, Layer, NetworkSpec};
    use crate::rng::Pcg32;

    #[test]
    fn margin_basic_cases() {
        assert_eq!(margin(&[2.0, 0.5, -1.0], 0).unwrap(), 1.5);
        assert_eq!(margin(&[0.5, 2.0], 0).unwrap(), 0.0);
        assert_eq!(margin(&[1.0, 1.0], 0).unwrap(), 0.0);
        assert!(margin(&[1.0], 0).is_err());
        assert!(margin(&[1.0, 2.0], 5).is_err());
    }

    #[test]
    fn margin_is_shift_invariant() {
        let logits = [0.3, -1.2, 2.4, 0.0];
        let base = margin(&logits, 2).unwrap();
        let shifted: Vec<f64> = logits.iter().map(|v| v + 17.5).collect();
        assert!((margin(&shifted, 2).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn certified_radius_reference_values() {
        let r = certified_radius(2f64.sqrt(), 1.0, NormOrder::L2).unwrap();
        assert!((r - 1.0).abs() < 1e-15);
        let r = certified_radius(1.0, 2.0, NormOrder::LInf).unwrap();
        assert!((r - 0.25).abs() < 1e-15);
        assert_eq!(certified_radius(0.0, 3.0, NormOrder::L2).unwrap(), 0.0);
        assert_eq!(certified_radius(0.0, 3.0, NormOrder::LInf).unwrap(), 0.0);
        assert!(certified_radius(1.0, 0.0, NormOrder::L2).is_err());
        assert!(certified_radius(1.0, -1.0, NormOrder::L2).is_err());
    }

    #[test]
    fn certified_radius_scales_inversely_with_lipschitz() {
        let r1 = certified_radius(1.0, 1.0, NormOrder::L2).unwrap();
        let r2 = certified_radius(1.0, 4.0, NormOrder::L2).unwrap();
        assert!((r1 / r2 - 4.0).abs() < 1e-12);
    }

    fn affine_net(w: Matrix, bias: Vec<f64>) -> MlpNetwork {
        let spec = NetworkSpec::new(
            1,
            w.cols(),
            1,
            w.rows(),
            ActivationKind::Identity,
            1.0,
        )
        .unwrap();
        MlpNetwork::from_layers(spec, vec![Layer { weight: w, bias }]).unwrap()
    }

    #[test]
    fn ibp_single_affine_layer_interval_arithmetic() {
        let net = affine_net(
            Matrix::from_rows(&[&[1.0, -1.0], &[0.5, 0.5]]).unwrap(),
            vec![0.0, 0.0],
        );
        let input = IntervalBox::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let out = ibp_propagate(&net, &input).unwrap();
        assert_eq!(out.lower()[0], -2.0);
        assert_eq!(out.upper()[0], 2.0);
        assert_eq!(out.lower()[1], -1.0);
        assert_eq!(out.upper()[1], 1.0);
    }

    #[test]
    fn ibp_point_box_matches_forward_pass() {
        let spec = NetworkSpec::new(3, 4, 6, 3, ActivationKind::Tanh, 1.0).unwrap();
        let mut rng = Pcg32::new(17);
        let net = xavier_init(&spec, &mut rng).unwrap();
        let x: Vec<f64> = (0..4).map(|_| rng.next_gaussian()).collect();
        let out = ibp_propagate(&net, &IntervalBox::point(&x)).unwrap();
        let logits = network::forward(&net, &x).unwrap();
        for (i, &y) in logits.logits().iter().enumerate() {
            assert!((out.lower()[i] - y).abs() < 1e-12);
            assert!((out.upper()[i] - y).abs() < 1e-12);
        }
    }

    #[test]
    fn ibp_relu_clamps_interval() {
        // One relu layer then identity: [-1, 3] relu-activates to [0, 3].
        let spec = NetworkSpec::new(2, 1, 1, 1, ActivationKind::Relu, 1.0).unwrap();
        let net = MlpNetwork::from_layers(
            spec,
            vec![
                Layer {
                    weight: Matrix::from_rows(&[&[1.0]]).unwrap(),
                    bias: vec![1.0],
                },
                Layer {
                    weight: Matrix::from_rows(&[&[1.0]]).unwrap(),
                    bias: vec![0.0],
                },
            ],
        )
        .unwrap();
        let input = IntervalBox::new(vec![-2.0], vec![2.0]).unwrap();
        let out = ibp_propagate(&net, &input).unwrap();
        assert_eq!(out.lower()[0], 0.0);
        assert_eq!(out.upper()[0], 3.0);
    }

    #[test]
    fn ibp_certify_hand_case() {
        let net = affine_net(Matrix::identity(2), vec![0.0, 0.0]);
        let pert = PerturbationSpec::new(NormOrder::LInf, 0.4).unwrap();
        assert!(ibp_certify(&net, &[1.0, 0.0], 0, &pert).unwrap());
        let pert = PerturbationSpec::new(NormOrder::LInf, 0.6).unwrap();
        assert!(!ibp_certify(&net, &[1.0, 0.0], 0, &pert).unwrap());
    }

    #[test]
    fn ibp_certify_zero_epsilon_is_clean_correctness() {
        let net = affine_net(Matrix::identity(2), vec![0.0, 0.0]);
        let pert = PerturbationSpec::new(NormOrder::L2, 0.0).unwrap();
        assert!(ibp_certify(&net, &[2.0, 1.0], 0, &pert).unwrap());
        assert!(!ibp_certify(&net, &[1.0, 2.0], 0, &pert).unwrap());
    }

    #[test]
    fn certified_accuracy_zero_network_is_zero() {
        let spec = NetworkSpec::new(2, 3, 4, 2, ActivationKind::Relu, 1.0).unwrap();
        let layers = spec
            .layer_dims()
            .iter()
            .map(|&(r, c)| Layer {
                weight: Matrix::zeros(r, c),
                bias: vec![0.0; r],
            })
            .collect();
        let net = MlpNetwork::from_layers(spec, layers).unwrap();
        let ds = crate::data::synthetic_blobs(2, 10, 3, 3.0, &mut Pcg32::new(2)).unwrap();
        let pert = PerturbationSpec::new(NormOrder::L2, 0.1).unwrap();
        let acc = certified_accuracy(&net, &ds, &pert, CertificationMethod::Ibp).unwrap();
        assert_eq!(acc, 0.0);
    }

    #[test]
    fn margin_certification_rejects_unsound_estimates() {
        let spec = NetworkSpec::new(2, 3, 4, 2, ActivationKind::Relu, 1.0).unwrap();
        let net = xavier_init(&spec, &mut Pcg32::new(3)).unwrap();
        let ds = crate::data::synthetic_blobs(2, 4, 3, 3.0, &mut Pcg32::new(4)).unwrap();
        let pert = PerturbationSpec::new(NormOrder::L2, 0.1).unwrap();
        let fake = LipschitzEstimate {
            value: 1.0,
            method: EstimationMethod::Empirical,
            detail: Default::default(),
        };
        assert!(certified_accuracy(
            &net,
            &ds,
            &pert,
            CertificationMethod::LipschitzMargin(&fake)
        )
        .is_err());
        let sound = spectral_product_bound(&net).unwrap();
        assert!(certified_accuracy(
            &net,
            &ds,
            &pert,
            CertificationMethod::LipschitzMargin(&sound)
        )
        .is_ok());
    }

    #[test]
    fn report_zero_margin_forces_zero_radii() {
        let net = affine_net(Matrix::identity(2), vec![0.0, 0.0]);
        let pert = PerturbationSpec::new(NormOrder::L2, 0.1).unwrap();
        let bound = spectral_product_bound(&net).unwrap();
        // Misclassified sample: true class 1 while logit 0 wins.
        let report = robustness_report(&net, &[2.0, 0.0], 1, &pert, &bound).unwrap();
        assert_eq!(report.margin, 0.0);
        assert_eq!(report.radius_l2, 0.0);
        assert_eq!(report.radius_linf, 0.0);
        assert!(!report.ibp_certified);
    }
}
