//! Single-shot command drivers: estimate, train, certify.

use std::path::Path;

use anyhow::{Context, Result};

use lipnet::data::Dataset;
use lipnet::lipschitz::{
    analytical_lipschitz, empirical_lipschitz, pattern_exact_relu, spectral_product_bound,
    InputSampler, LipschitzEstimate, PATTERN_ENUMERATION_MAX_UNITS,
};
use lipnet::network::{xavier_init, ActivationKind, MlpNetwork, NetworkSpec};
use lipnet::robustness::{robustness_report, PerturbationSpec};
use lipnet::rng::Pcg32;
use lipnet::training::{train, EpochMetrics, TrainConfig};

use crate::csvfmt;

pub const ESTIMATE_CSV_HEADER: &str = "method,value,samples,converged";
pub const METRICS_CSV_HEADER: &str =
    "epoch,loss,accuracy,certified_accuracy,L_empirical,L_spectral,L_analytical_posttrain";
pub const CERTIFY_CSV_HEADER: &str =
    "index,label,margin,radius_l2,radius_linf,ibp_certified,lipschitz_method,lipschitz_value";

fn estimate_row(estimate: &LipschitzEstimate) -> String {
    let samples = estimate
        .detail
        .samples
        .map(|s| s.to_string())
        .unwrap_or_default();
    format!(
        "{},{},{},{}",
        estimate.method,
        csvfmt::float(estimate.value),
        samples,
        !estimate.detail.warning
    )
}

/// Run every applicable estimator against one freshly initialized network.
/// The closed-form row is skipped for single-layer networks and the pattern
/// oracle beyond its enumeration scale.
pub fn estimate(spec: &NetworkSpec, seed: u64, samples: usize) -> Result<String> {
    let mut rng = Pcg32::derived(seed, 0);
    let net = xavier_init(spec, &mut rng)?;
    let mut rows = Vec::new();

    if spec.depth >= 2 {
        let q = spec.activation.q_squared().sqrt();
        rows.push(estimate_row(&analytical_lipschitz(spec, spec.alpha, q)?));
    }
    let mut probe_rng = Pcg32::derived(seed, 1);
    rows.push(estimate_row(&empirical_lipschitz(
        &net,
        InputSampler::StandardNormal,
        samples,
        &mut probe_rng,
    )?));
    rows.push(estimate_row(&spectral_product_bound(&net)?));
    if spec.activation == ActivationKind::Relu
        && spec.hidden_units() <= PATTERN_ENUMERATION_MAX_UNITS
    {
        rows.push(estimate_row(&pattern_exact_relu(&net)?));
    }

    let mut out = String::from(ESTIMATE_CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row);
        out.push('\n');
    }
    Ok(out)
}

pub fn metrics_csv(metrics: &[EpochMetrics]) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for m in metrics {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            m.epoch,
            csvfmt::float(m.train_loss),
            csvfmt::float(m.test_accuracy),
            csvfmt::float(m.certified_accuracy),
            csvfmt::float(m.lipschitz_empirical),
            csvfmt::float(m.lipschitz_spectral),
            csvfmt::float(m.lipschitz_analytical),
        ));
    }
    out
}

/// Train one network and emit the per-epoch metrics CSV, optionally saving
/// the trained weights.
pub fn train_command(
    spec: &NetworkSpec,
    train_set: &Dataset,
    test_set: &Dataset,
    config: &TrainConfig,
    save_weights: Option<&Path>,
) -> Result<String> {
    let (net, metrics) = train(spec, train_set, test_set, config)?;
    if let Some(path) = save_weights {
        net.save(path)
            .with_context(|| format!("saving weights to {}", path.display()))?;
    }
    Ok(metrics_csv(&metrics))
}

/// Per-sample robustness reports for a stored network against a dataset.
/// Certified radii come from the spectral-product bound (a sound upper
/// bound on the true constant); the IBP column uses the given budget.
pub fn certify(net: &MlpNetwork, dataset: &Dataset, pert: &PerturbationSpec) -> Result<String> {
    let bound = spectral_product_bound(net)?;
    let mut out = String::from(CERTIFY_CSV_HEADER);
    out.push('\n');
    for (index, (x, &label)) in dataset.inputs.iter().zip(&dataset.labels).enumerate() {
        let report = robustness_report(net, x, label, pert, &bound)?;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            index,
            label,
            csvfmt::float(report.margin),
            csvfmt::float(report.radius_l2),
            csvfmt::float(report.radius_linf),
            report.ibp_certified,
            report.lipschitz.method,
            csvfmt::float(report.lipschitz.value),
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use lipnet::data::synthetic_blobs;
    use lipnet::robustness::NormOrder;

    #[test]
    fn estimate_emits_all_applicable_methods() {
        let spec = NetworkSpec::new(2, 4, 6, 3, ActivationKind::Relu, 1.0).unwrap();
        let csv = estimate(&spec, 9, 20).unwrap();
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(lines[0], ESTIMATE_CSV_HEADER);
        let methods: Vec<&str> = lines[1..]
            .iter()
            .map(|l| l.split(',').next().unwrap())
            .collect();
        assert_eq!(
            methods,
            vec!["analytical", "empirical", "spectral_product", "pattern_exact"]
        );
        assert_eq!(csv, estimate(&spec, 9, 20).unwrap());
    }

    #[test]
    fn estimate_drops_inapplicable_rows() {
        let spec = NetworkSpec::new(1, 4, 1, 3, ActivationKind::Tanh, 1.0).unwrap();
        let csv = estimate(&spec, 9, 5).unwrap();
        let methods: Vec<&str> = csv
            .trim_end()
            .lines()
            .skip(1)
            .map(|l| l.split(',').next().unwrap())
            .collect();
        assert_eq!(methods, vec!["empirical", "spectral_product"]);
    }

    #[test]
    fn train_and_certify_round_trip_through_a_weights_file() {
        let mut rng = Pcg32::new(3);
        let train_set = synthetic_blobs(2, 30, 4, 5.0, &mut rng).unwrap();
        let test_set = synthetic_blobs(2, 10, 4, 5.0, &mut rng).unwrap();
        let spec = NetworkSpec::new(2, 4, 6, 2, ActivationKind::Relu, 1.0).unwrap();
        let config = TrainConfig {
            learning_rate: 0.1,
            epochs: 5,
            batch_size: 10,
            weight_decay: 0.0,
            seed: 11,
            eval_epsilon: PerturbationSpec::new(NormOrder::L2, 0.05).unwrap(),
        };
        let dir = tempfile::tempdir().unwrap();
        let weights = dir.path().join("model.bin");
        let csv = train_command(&spec, &train_set, &test_set, &config, Some(&weights)).unwrap();
        assert!(csv.starts_with(METRICS_CSV_HEADER));
        assert_eq!(csv.trim_end().lines().count(), 5 + 2);

        let net = MlpNetwork::load(&weights).unwrap();
        let pert = PerturbationSpec::new(NormOrder::L2, 0.1).unwrap();
        let report_csv = certify(&net, &test_set, &pert).unwrap();
        assert_eq!(report_csv.trim_end().lines().count(), test_set.len() + 1);
        assert!(report_csv.contains("spectral_product"));
    }
}
