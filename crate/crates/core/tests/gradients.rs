//! Finite-difference checks of every analytic gradient in the crate.

use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;
use uavmec_core::agent::{ActionProjector, ActionStyle, Architecture, OffloadWiring, PolicyNet};
use uavmec_core::nn::{soft_update, Activation, Mlp};
use uavmec_core::rng::{stream, StreamRng};
use uavmec_core::world::WorldConfig;

const H: f64 = 1e-5;
const ACTIVATIONS: [Activation; 4] = [Activation::Relu, Activation::Tanh, Activation::Sigmoid, Activation::Linear];

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

fn random_matrix(rows: usize, cols: usize, rng: &mut StreamRng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

fn random_net(depth: usize, rng: &mut StreamRng) -> Mlp {
    let input = rng.random_range(1..6);
    let spec: Vec<(usize, Activation)> = (0..depth)
        .map(|_| (rng.random_range(1..8), ACTIVATIONS[rng.random_range(0..4)]))
        .collect();
    Mlp::new(input, &spec, rng).unwrap()
}

/// Replaces every parameter (biases included, which start at zero) so the
/// check runs at a generic point rather than on a relu kink.
fn jitter(params: &[f64], rng: &mut StreamRng) -> Vec<f64> {
    params.iter().map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// `sum(weights .* net(x))`, the scalar whose gradient `backward` returns.
fn objective(net: &Mlp, x: &Array2<f64>, weights: &Array2<f64>) -> f64 {
    (net.predict(x.view()).unwrap() * weights).sum()
}

/// Returns the relative errors of the parameter and input gradients.
fn check_net(net: &Mlp, rng: &mut StreamRng) -> (f64, f64) {
    let mut net = net.clone();
    net.set_flat_params(&jitter(&net.flat_params(), rng)).unwrap();
    let net = &net;
    let x = random_matrix(3, net.input_dim(), rng);
    let w = random_matrix(3, net.output_dim(), rng);
    let (_, cache) = net.forward(x.view()).unwrap();
    let grads = net.backward(&cache, w.view());

    let params = net.flat_params();
    let mut probe = net.clone();
    let fd_params: Vec<f64> = (0..params.len())
        .map(|i| {
            let mut p = params.clone();
            p[i] += H;
            probe.set_flat_params(&p).unwrap();
            let up = objective(&probe, &x, &w);
            p[i] -= 2.0 * H;
            probe.set_flat_params(&p).unwrap();
            let down = objective(&probe, &x, &w);
            (up - down) / (2.0 * H)
        })
        .collect();

    let fd_input: Vec<f64> = (0..x.len())
        .map(|i| {
            let mut xp = x.clone();
            xp.as_slice_mut().unwrap()[i] += H;
            let up = objective(net, &xp, &w);
            xp.as_slice_mut().unwrap()[i] -= 2.0 * H;
            let down = objective(net, &xp, &w);
            (up - down) / (2.0 * H)
        })
        .collect();
    let input: Vec<f64> = grads.input.iter().copied().collect();
    (rel_err(&grads.flat_params(), &fd_params), rel_err(&input, &fd_input))
}

#[test]
fn backward_matches_central_differences_for_every_depth_and_activation() {
    let mut rng = stream(2024, "gradcheck");
    for depth in 1..=4 {
        for act in ACTIVATIONS {
            for _ in 0..3 {
                let input = rng.random_range(1..6);
                let spec: Vec<(usize, Activation)> = (0..depth).map(|_| (rng.random_range(1..8), act)).collect();
                let net = Mlp::new(input, &spec, &mut rng).unwrap();
                let (p, i) = check_net(&net, &mut rng);
                assert!(p < 1e-4 && i < 1e-4, "depth {depth} {act:?}: params {p:e}, input {i:e}");
            }
        }
    }
}

#[test]
fn backward_matches_central_differences_on_mixed_nets() {
    let mut rng = stream(7, "gradcheck/mixed");
    for case in 0..60 {
        let depth = rng.random_range(1..=4);
        let net = random_net(depth, &mut rng);
        let (p, i) = check_net(&net, &mut rng);
        assert!(p < 1e-4 && i < 1e-4, "case {case}: params {p:e}, input {i:e}");
    }
}

fn mean_q(actor: &PolicyNet, critic: &Mlp, projector: &ActionProjector, states: &Array2<f64>) -> f64 {
    let raw = actor.predict(states.view()).unwrap();
    let actions = projector.project_batch(raw.view());
    let inputs = ndarray::concatenate![ndarray::Axis(1), states.view(), actions.view()];
    critic.predict(inputs.view()).unwrap().mean().unwrap()
}

#[test]
fn actor_gradient_matches_finite_differences_through_projection_and_critic() {
    let world = WorldConfig {
        num_devices: 3,
        ..WorldConfig::default()
    };
    let arch = Architecture {
        trunk: vec![8, 8],
        branch: vec![6],
        critic: vec![16, 8],
    };
    let styles = [
        ActionStyle::MultiBranch(OffloadWiring::PreferenceGated),
        ActionStyle::MultiBranch(OffloadWiring::CapacityGated),
        ActionStyle::Naive,
        ActionStyle::DisplacementOnly,
    ];
    let mut rng = stream(99, "gradcheck/chain");
    for case in 0..20 {
        let style = styles[case % styles.len()];
        let projector = ActionProjector::new(style, &world, 1);
        let state_dim = 5;
        let mut actor = PolicyNet::build(style, state_dim, world.num_devices, 1, &arch, &mut rng).unwrap();
        actor.set_flat_params(&jitter(&actor.flat_params(), &mut rng)).unwrap();
        let mut critic = uavmec_core::agent::build_critic(state_dim + projector.dim(), &arch, &mut rng).unwrap();
        critic.set_flat_params(&jitter(&critic.flat_params(), &mut rng)).unwrap();
        let learner = uavmec_core::agent::Learner::from_networks(
            actor.clone(),
            critic.clone(),
            projector.clone(),
            &uavmec_core::agent::AgentHyperparams::default(),
        );
        let states = random_matrix(4, state_dim, &mut rng);
        let (mean, grads) = learner
            .actor_gradient(states.view(), state_dim, |a| {
                ndarray::concatenate![ndarray::Axis(1), states.view(), a]
            })
            .unwrap();
        assert!((mean - mean_q(&actor, &critic, &projector, &states)).abs() < 1e-12);

        // The learner returns the gradient of -mean(Q).
        let analytic: Vec<f64> = grads.flat_params().iter().map(|g| -g).collect();
        let params = actor.flat_params();
        let mut probe = actor.clone();
        let fd: Vec<f64> = (0..params.len())
            .map(|i| {
                let mut p = params.clone();
                p[i] += H;
                probe.set_flat_params(&p).unwrap();
                let up = mean_q(&probe, &critic, &projector, &states);
                p[i] -= 2.0 * H;
                probe.set_flat_params(&p).unwrap();
                let down = mean_q(&probe, &critic, &projector, &states);
                (up - down) / (2.0 * H)
            })
            .collect();
        let err = rel_err(&analytic, &fd);
        assert!(err < 1e-3, "case {case} {style:?}: {err:e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn forward_is_pure(seed in any::<u64>(), depth in 1usize..=4) {
        let mut rng = stream(seed, "pure");
        let net = random_net(depth, &mut rng);
        let x = random_matrix(2, net.input_dim(), &mut rng);
        let a = net.predict(x.view()).unwrap();
        let _ = net.forward(random_matrix(5, net.input_dim(), &mut rng).view()).unwrap();
        prop_assert_eq!(a, net.predict(x.view()).unwrap());
    }

    #[test]
    fn document_round_trip_is_bit_exact(seed in any::<u64>(), depth in 1usize..=4) {
        let mut rng = stream(seed, "doc");
        let net = random_net(depth, &mut rng);
        let back = Mlp::deserialize(&net.serialize()).unwrap();
        let bits = |m: &Mlp| m.flat_params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&net), bits(&back));
        prop_assert!(net.same_shape(&back));
    }

    #[test]
    fn soft_update_blends_with_tau(seed in any::<u64>(), tau in 0.001f64..=1.0) {
        let mut rng = stream(seed, "soft");
        let spec = [(4, Activation::Relu), (2, Activation::Linear)];
        let online = Mlp::new(3, &spec, &mut rng).unwrap();
        let mut target = Mlp::new(3, &spec, &mut rng).unwrap();
        let before = target.flat_params();
        soft_update(&mut target, &online, tau).unwrap();
        for ((t, o), b) in target.flat_params().iter().zip(online.flat_params()).zip(before) {
            let expected = tau * o + (1.0 - tau) * b;
            prop_assert!((t - expected).abs() <= 1e-15 * expected.abs().max(1.0));
        }
    }
}
