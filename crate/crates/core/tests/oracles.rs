//! Independent numerical oracles for the analysis kernels: finite
//! differences against exact Jacobians and backprop, Monte Carlo statistics
//! of Jacobians at initialization, randomized soundness checks for the
//! certification routes, and the estimator ordering on tiny relu networks.

use lipnet::data::synthetic_blobs;
use lipnet::linalg;
use lipnet::lipschitz::{
    self, empirical_lipschitz, pattern_exact_relu, spectral_product_bound, InputSampler,
};
use lipnet::network::{self, forward, jacobian, xavier_init, ActivationKind, NetworkSpec};
use lipnet::robustness::{
    certified_radius, ibp_certify, ibp_propagate, margin, IntervalBox, NormOrder,
    PerturbationSpec,
};
use lipnet::rng::Pcg32;

#[test]
fn jacobian_matches_finite_differences_on_many_random_nets() {
    let mut rng = Pcg32::new(9001);
    let step = 1e-5;
    for trial in 0..100 {
        let depth = 2 + (trial % 3);
        let activation = if trial % 2 == 0 {
            ActivationKind::Tanh
        } else {
            ActivationKind::Sigmoid
        };
        let spec = NetworkSpec::new(depth, 3, 5, 2, activation, 1.0).unwrap();
        let net = xavier_init(&spec, &mut rng).unwrap();
        let x: Vec<f64> = (0..3).map(|_| rng.next_gaussian()).collect();
        let jac = jacobian(&net, &x).unwrap();
        let mut worst: f64 = 0.0;
        for j in 0..3 {
            let mut plus = x.clone();
            plus[j] += step;
            let mut minus = x.clone();
            minus[j] -= step;
            let yp = forward(&net, &plus).unwrap();
            let ym = forward(&net, &minus).unwrap();
            for i in 0..2 {
                let fd = (yp.logits()[i] - ym.logits()[i]) / (2.0 * step);
                worst = worst.max((jac.get(i, j) - fd).abs());
            }
        }
        assert!(worst <= 1e-5, "trial {trial}: max |J - fd| = {worst}");
    }
}

/// Monte Carlo element variance of exact relu Jacobians at initialization,
/// pooled over entries and 10^3 independent initializations. This pins the
/// measured value for M = 2, n = d = m = 100, alpha = 1: about 0.0050,
/// which is twice the modeled `jacobian_variance` of 0.0025 because the
/// model's middle factor drops the squared mean of the relu derivative.
#[test]
fn monte_carlo_jacobian_element_variance_at_init() {
    let spec = NetworkSpec::new(2, 100, 100, 100, ActivationKind::Relu, 1.0).unwrap();
    let mut input_rng = Pcg32::new(424242);
    let x: Vec<f64> = (0..100).map(|_| input_rng.next_gaussian()).collect();

    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut count = 0usize;
    for seed in 0..1000u64 {
        let mut rng = Pcg32::derived(7_000, seed);
        let net = xavier_init(&spec, &mut rng).unwrap();
        let jac = jacobian(&net, &x).unwrap();
        for &v in jac.data() {
            sum += v;
            sum_sq += v * v;
            count += 1;
        }
    }
    let n = count as f64;
    let mean = sum / n;
    let variance = sum_sq / n - mean * mean;

    assert!(mean.abs() < 1e-3, "mean {mean}");
    let measured_reference = 0.0050;
    assert!(
        (variance - measured_reference).abs() <= 0.15 * measured_reference,
        "pooled element variance {variance} drifted from the pinned oracle value \
         {measured_reference} (the closed-form model gives {})",
        lipschitz::jacobian_variance(&spec, 1.0, 0.5).unwrap()
    );
}

#[test]
fn estimator_sandwich_holds_on_tiny_relu_nets() {
    let mut rng = Pcg32::new(606);
    for trial in 0..25 {
        let d = 2 + trial % 6;
        let m = 1 + trial % 3;
        let spec = NetworkSpec::new(2, 2, d, m, ActivationKind::Relu, 1.0).unwrap();
        let net = xavier_init(&spec, &mut rng).unwrap();
        let empirical = empirical_lipschitz(&net, InputSampler::StandardNormal, 5_000, &mut rng)
            .unwrap()
            .value;
        let exact = pattern_exact_relu(&net).unwrap().value;
        let product = spectral_product_bound(&net).unwrap().value;
        assert!(
            empirical <= exact * (1.0 + 1e-6),
            "trial {trial}: empirical {empirical} above pattern oracle {exact}"
        );
        assert!(
            exact <= product * (1.0 + 1e-6),
            "trial {trial}: pattern oracle {exact} above spectral product {product}"
        );
    }
}

#[test]
fn ibp_output_box_contains_forward_images_of_the_input_box() {
    let mut rng = Pcg32::new(2718);
    let spec = NetworkSpec::new(3, 4, 6, 3, ActivationKind::Relu, 1.0).unwrap();
    let net = xavier_init(&spec, &mut rng).unwrap();
    let center: Vec<f64> = (0..4).map(|_| rng.next_gaussian()).collect();
    let radius = 0.3;
    let input = IntervalBox::around(&center, radius).unwrap();
    let output = ibp_propagate(&net, &input).unwrap();
    for _ in 0..1000 {
        let x: Vec<f64> = center
            .iter()
            .map(|c| c + (2.0 * rng.next_f64() - 1.0) * radius)
            .collect();
        let logits = forward(&net, &x).unwrap();
        assert!(
            output.contains(logits.logits(), 1e-9),
            "forward image escaped the propagated box"
        );
    }
}

/// Uniform draw from the p-ball of radius epsilon.
fn sample_in_ball(center: &[f64], pert: &PerturbationSpec, rng: &mut Pcg32) -> Vec<f64> {
    match pert.norm {
        NormOrder::LInf => center
            .iter()
            .map(|c| c + (2.0 * rng.next_f64() - 1.0) * pert.epsilon)
            .collect(),
        NormOrder::L2 => {
            let direction: Vec<f64> = center.iter().map(|_| rng.next_gaussian()).collect();
            let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
            let radius = pert.epsilon * rng.next_f64().powf(1.0 / center.len() as f64);
            center
                .iter()
                .zip(&direction)
                .map(|(c, d)| c + d / norm * radius)
                .collect()
        }
    }
}

#[test]
fn certified_samples_survive_randomized_attack() {
    // Train a small blob classifier, certify with both routes, then try to
    // flip every certified sample with in-ball perturbations.
    let mut data_rng = Pcg32::new(14);
    let train_set = synthetic_blobs(3, 40, 4, 5.0, &mut data_rng).unwrap();
    let test_set = synthetic_blobs(3, 15, 4, 5.0, &mut data_rng).unwrap();
    let spec = NetworkSpec::new(2, 4, 8, 3, ActivationKind::Relu, 1.0).unwrap();
    let config = lipnet::training::TrainConfig {
        learning_rate: 0.1,
        epochs: 25,
        batch_size: 16,
        weight_decay: 0.0,
        seed: 3,
        eval_epsilon: PerturbationSpec::new(NormOrder::L2, 0.05).unwrap(),
    };
    let (net, _) = lipnet::training::train(&spec, &train_set, &test_set, &config).unwrap();
    let bound = spectral_product_bound(&net).unwrap();

    let mut attack_rng = Pcg32::new(999);
    for pert in [
        PerturbationSpec::new(NormOrder::L2, 0.1).unwrap(),
        PerturbationSpec::new(NormOrder::LInf, 0.05).unwrap(),
    ] {
        let mut certified_count = 0;
        for (x, &label) in test_set.inputs.iter().zip(&test_set.labels) {
            let trace = forward(&net, x).unwrap();
            let m = margin(trace.logits(), label).unwrap();
            let margin_certified =
                m > 0.0 && certified_radius(m, bound.value, pert.norm).unwrap() >= pert.epsilon;
            let ibp_ok = ibp_certify(&net, x, label, &pert).unwrap();
            if !(margin_certified || ibp_ok) {
                continue;
            }
            certified_count += 1;
            for _ in 0..1000 {
                let perturbed = sample_in_ball(x, &pert, &mut attack_rng);
                let attacked = forward(&net, &perturbed).unwrap();
                let predicted = attacked
                    .logits()
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0;
                assert_eq!(
                    predicted, label,
                    "certified sample flipped under an in-ball perturbation"
                );
            }
        }
        assert!(certified_count > 0, "attack test certified nothing at {pert:?}");
    }
}

#[test]
fn power_iteration_tracks_oracle_across_shapes() {
    let mut rng = Pcg32::new(31415);
    for (rows, cols) in [(64, 64), (50, 30), (20, 60), (5, 5), (1, 8)] {
        let m = linalg::sample_gaussian_matrix(rows, cols, 1.0, &mut rng).unwrap();
        let power = linalg::spectral_norm(&m, &mut rng);
        let oracle = linalg::svd_oracle(&m).unwrap()[0];
        assert!(power.converged, "{rows}x{cols} failed to converge");
        assert!(
            (power.value - oracle).abs() <= 1e-5 * oracle.max(1e-300),
            "{rows}x{cols}: power {} vs oracle {oracle}",
            power.value
        );
    }
}

#[test]
fn relu_derivative_variance_short_circuit_is_exact() {
    // The closed form and a large Monte Carlo agree for relu as well.
    let mut rng = Pcg32::new(5150);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let n = 1_000_000;
    for _ in 0..n {
        let d = ActivationKind::Relu.derivative(rng.next_gaussian());
        sum += d;
        sum_sq += d * d;
    }
    let mean = sum / n as f64;
    let var = sum_sq / n as f64 - mean * mean;
    assert!((var - 0.25).abs() < 2e-3, "relu derivative variance {var}");
    assert_eq!(
        network::derivative_variance(ActivationKind::Relu, 10_000, &mut rng).unwrap(),
        0.25
    );
}
