//! Backpropagation against central finite differences of the loss.

use critnet::network::{Architecture, Batch, Network};
use critnet::{Activation, ActivationKind, InitHyperparams};
use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

const STEP: f64 = 1e-6;
const REL_TOL: f64 = 1e-5;

fn zoo() -> Vec<Activation> {
    ActivationKind::ALL
        .iter()
        .filter(|&&k| k != ActivationKind::Perceptron)
        .map(|&k| match k {
            ActivationKind::Repu => Activation::repu(2).unwrap(),
            ActivationKind::Mrepu => Activation::mrepu(2).unwrap(),
            ActivationKind::LeakyRelu => Activation::leaky_relu(0.1).unwrap(),
            other => Activation::simple(other).unwrap(),
        })
        .collect()
}

fn batch(n: usize, n_in: usize, n_out: usize, seed: u64) -> Batch<f64> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
    Batch {
        // Half-scale inputs keep polynomial activations out of the regime
        // where the loss is so large that rounding swamps the difference.
        inputs: Array2::from_shape_simple_fn((n, n_in), &mut draw) * 0.5,
        targets: Array2::from_shape_simple_fn((n, n_out), &mut draw),
    }
}

/// Smallest distance of any hidden preactivation to a kink of `act`.
fn kink_clearance(net: &Network<f64>, data: &Batch<f64>) -> f64 {
    let kinks = net.architecture().activation.kinks();
    let trace = net.forward(data.inputs.view()).unwrap();
    let hidden = &trace.preacts[..trace.preacts.len() - 1];
    hidden
        .iter()
        .flat_map(|z| z.iter().copied())
        .flat_map(|z| kinks.iter().map(move |k| (z - k).abs()))
        .fold(f64::INFINITY, f64::min)
}

fn stencil(mut f: impl FnMut(f64) -> f64) -> f64 {
    (f(STEP) - f(-STEP)) / (2.0 * STEP)
}

/// Largest relative discrepancy between analytic and numeric gradients.
fn worst_error(net: &Network<f64>, data: &Batch<f64>) -> f64 {
    let trace = net.forward(data.inputs.view()).unwrap();
    let grads = net.backward(&trace, &data.targets).unwrap();
    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    // Rounding in the two loss evaluations limits how well the difference
    // quotient itself is known; only discrepancy beyond that counts.
    let rounding = 8.0 * f64::EPSILON * (net.loss(data).unwrap().abs() + 1.0) / STEP;
    let mut check = |analytic: f64, numeric: f64| {
        let gap = ((analytic - numeric).abs() - rounding).max(0.0);
        let err = gap / (analytic.abs().max(numeric.abs()) + 1e-4);
        worst = worst.max(err);
    };
    #[allow(clippy::needless_range_loop)]
    for l in 0..net.layers().len() {
        let (rows, cols) = net.layers()[l].weights.dim();
        for i in 0..rows {
            for j in 0..cols {
                let w0 = net.layers()[l].weights[[i, j]];
                let numeric = stencil(|d| {
                    probe.layers_mut()[l].weights[[i, j]] = w0 + d;
                    probe.loss(data).unwrap()
                });
                probe.layers_mut()[l].weights[[i, j]] = w0;
                check(grads[l].weights[[i, j]], numeric);
            }
            let b0 = net.layers()[l].bias[i];
            let numeric = stencil(|d| {
                probe.layers_mut()[l].bias[i] = b0 + d;
                probe.loss(data).unwrap()
            });
            probe.layers_mut()[l].bias[i] = b0;
            check(grads[l].bias[i], numeric);
        }
    }
    worst
}

fn checked_net(act: Activation, hidden: Vec<usize>, seed: u64) -> (Network<f64>, Batch<f64>) {
    let arch = Architecture::new(3, 2, hidden, act).unwrap();
    let hp = InitHyperparams::new(0.1, 1.0).unwrap();
    // Re-draw until no preactivation sits next to a kink, where the
    // central difference straddles two branches.
    (0..100u64)
        .map(|k| {
            let net = Network::<f64>::init(&arch, &hp, seed.wrapping_mul(101).wrapping_add(k)).unwrap();
            let data = batch(5, 3, 2, seed.wrapping_add(k));
            (net, data)
        })
        .find(|(net, data)| kink_clearance(net, data) > 1e-3)
        .expect("a draw away from kinks")
}

#[test]
fn every_activation_passes_gradient_check() {
    for act in zoo() {
        for hidden in [vec![], vec![8], vec![6, 8]] {
            let (net, data) = checked_net(act, hidden.clone(), 7);
            let err = worst_error(&net, &data);
            assert!(err < REL_TOL, "{act} hidden {hidden:?}: relative error {err:e}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_small_networks(idx in 0usize..11, w1 in 1usize..=8, w2 in 1usize..=8, depth in 1usize..=3, seed in 0u64..1000) {
        let act = zoo()[idx];
        let hidden = [w1, w2][..depth - 1].to_vec();
        let (net, data) = checked_net(act, hidden, seed);
        let err = worst_error(&net, &data);
        prop_assert!(err < REL_TOL, "{} relative error {:e}", act, err);
    }
}
