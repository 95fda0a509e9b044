//! Central finite differences against analytic backpropagation.

use flockrl::ddpg::{Learner, LearnerConfig};
use flockrl::nn::{Architecture, GradRequest, GridShape, LayerSpec, Network, NetworkSpec, ParameterSet};
use flockrl::rng::SimRng;
use ndarray::Array2;
use rand::{Rng, SeedableRng};

pub const H: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
pub const INSTANCES: usize = 20;

/// `‖a − n‖ / max(‖a‖, ‖n‖)`, zero when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

pub fn numeric_param_gradient(params: &ParameterSet, f: impl Fn(&ParameterSet) -> f64) -> Vec<f64> {
    let mut p = params.clone();
    (0..params.len())
        .map(|k| {
            let x = params.get(k);
            p.set(k, x + H);
            let up = f(&p);
            p.set(k, x - H);
            let down = f(&p);
            p.set(k, x);
            (up - down) / (2.0 * H)
        })
        .collect()
}

pub fn numeric_array_gradient(x: &Array2<f64>, f: impl Fn(&Array2<f64>) -> f64) -> Vec<f64> {
    let mut probe = x.clone();
    let mut out = Vec::with_capacity(x.len());
    for idx in 0..x.len() {
        let (r, c) = (idx / x.ncols(), idx % x.ncols());
        let v = x[[r, c]];
        probe[[r, c]] = v + H;
        let up = f(&probe);
        probe[[r, c]] = v - H;
        let down = f(&probe);
        probe[[r, c]] = v;
        out.push((up - down) / (2.0 * H));
    }
    out
}

fn random_array(rng: &mut SimRng, rows: usize, cols: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(lo..hi))
}

/// Values bounded away from zero so no ReLU input sits on its kink.
fn away_from_zero(rng: &mut SimRng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| {
        let m = rng.random_range(0.05..1.5);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv2d,
    Dense,
    Relu,
    Tanh,
    Affine,
}

pub const LAYER_KINDS: [LayerKind; 5] = [
    LayerKind::Conv2d,
    LayerKind::Dense,
    LayerKind::Relu,
    LayerKind::Tanh,
    LayerKind::Affine,
];

/// Worst relative error of one layer type over randomized instances, for
/// the parameter gradient (if any) and the input gradient.
pub fn layer_gradient_error(kind: LayerKind, seed: u64) -> f64 {
    let mut rng = SimRng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..INSTANCES {
        let input = GridShape {
            height: rng.random_range(3..7),
            width: rng.random_range(3..7),
            channels: rng.random_range(1..4),
        };
        let layer = match kind {
            LayerKind::Conv2d => LayerSpec::Conv2d {
                filters: rng.random_range(1..4),
                kernel: rng.random_range(1..4),
                stride: rng.random_range(1..3),
            },
            LayerKind::Dense => LayerSpec::Dense {
                width: rng.random_range(1..6),
            },
            LayerKind::Relu => LayerSpec::Relu,
            LayerKind::Tanh => LayerSpec::Tanh,
            LayerKind::Affine => LayerSpec::Affine {
                scale: (0..input.len()).map(|_| rng.random_range(-2.0..2.0)).collect(),
                shift: (0..input.len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
            },
        };
        let net = Network::new(NetworkSpec {
            input,
            trunk: vec![layer],
            action_branch: None,
            head: vec![],
            output_scaling: None,
        })
        .expect("valid single-layer network");
        let params = net.init_params(&mut rng);
        let batch = rng.random_range(1..4);
        let x = away_from_zero(&mut rng, batch, input.len());
        let weights = random_array(&mut rng, batch, net.output_len(), -1.0, 1.0);
        let loss = |p: &ParameterSet, x: &Array2<f64>| -> f64 {
            let y = net.predict(p, x.view(), None).unwrap();
            (&y * &weights).sum()
        };

        let (_, cache) = net.forward(&params, x.view(), None).unwrap();
        let grads = net.backward(&params, &cache, weights.view(), GradRequest::ALL).unwrap();
        if !params.is_empty() {
            let analytic: Vec<f64> = grads.params.as_ref().unwrap().values().copied().collect();
            let numeric = numeric_param_gradient(&params, |p| loss(p, &x));
            worst = worst.max(relative_error(&analytic, &numeric));
        }
        let analytic: Vec<f64> = grads.observation.unwrap().iter().copied().collect();
        let numeric = numeric_array_gradient(&x, |x| loss(&params, x));
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    worst
}

fn small_learner(rng: &mut SimRng) -> Learner {
    let arch = Architecture {
        conv1_filters: 2,
        conv2_filters: 3,
        kernel: 2,
        dense1: 6,
        dense2: 5,
        action_hidden: 5,
        head_hidden: 4,
    };
    let input = GridShape {
        height: 4,
        width: 4,
        channels: 3,
    };
    let v_max = rng.random_range(0.1..0.5);
    let omega_max = rng.random_range(1.0..4.0);
    Learner::new(
        NetworkSpec::actor(&arch, input, v_max, omega_max),
        NetworkSpec::critic(&arch, input, v_max, omega_max),
        LearnerConfig::default(),
        rng,
    )
    .unwrap()
}

fn random_actions(rng: &mut SimRng, learner: &Learner, batch: usize) -> Array2<f64> {
    let range = learner.action_range();
    Array2::from_shape_fn((batch, 2), |(_, c)| {
        let (bias, bound) = range[c];
        rng.random_range(bias - bound..bias + bound)
    })
}

/// Critic loss against fixed targets, differentiated in the critic weights.
pub fn critic_loss_gradient_error(seed: u64) -> f64 {
    let mut rng = SimRng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..INSTANCES {
        let learner = small_learner(&mut rng);
        let batch = rng.random_range(2..6);
        let obs = random_array(&mut rng, batch, 48, 0.0, 1.0);
        let actions = random_actions(&mut rng, &learner, batch);
        let targets: Vec<f64> = (0..batch).map(|_| rng.random_range(-3.0..3.0)).collect();
        let (_, grads) = learner
            .critic_loss_and_gradient(obs.view(), actions.view(), &targets)
            .unwrap();
        // direct mean squared error of the critic's raw output
        let loss = |p: &ParameterSet| -> f64 {
            let q = learner.critic_net.predict(p, obs.view(), Some(actions.view())).unwrap();
            q.column(0)
                .iter()
                .zip(&targets)
                .map(|(q, y)| (y - q).powi(2))
                .sum::<f64>()
                / batch as f64
        };
        let numeric = numeric_param_gradient(&learner.critic, loss);
        let analytic: Vec<f64> = grads.values().copied().collect();
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    worst
}

/// Mean `Q(s, μ(s))` differentiated in the actor weights through the chain.
pub fn actor_chain_gradient_error(seed: u64) -> f64 {
    let mut rng = SimRng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..INSTANCES {
        let learner = small_learner(&mut rng);
        let batch = rng.random_range(2..6);
        let obs = random_array(&mut rng, batch, 48, 0.0, 1.0);
        let (_, grads) = learner.actor_objective_and_gradient(obs.view()).unwrap();
        let objective = |p: &ParameterSet| -> f64 {
            let a = learner.actor_net.predict(p, obs.view(), None).unwrap();
            let q = learner
                .critic_net
                .predict(&learner.critic, obs.view(), Some(a.view()))
                .unwrap();
            q.sum() / batch as f64
        };
        let numeric = numeric_param_gradient(&learner.actor, objective);
        let analytic: Vec<f64> = grads.values().copied().collect();
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    worst
}

/// `∇_a Q` of the critic with respect to its action input.
pub fn action_gradient_error(seed: u64) -> f64 {
    let mut rng = SimRng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..INSTANCES {
        let learner = small_learner(&mut rng);
        let batch = rng.random_range(1..6);
        let obs = random_array(&mut rng, batch, 48, 0.0, 1.0);
        let actions = random_actions(&mut rng, &learner, batch);
        let net = &learner.critic_net;
        let (q, cache) = net.forward(&learner.critic, obs.view(), Some(actions.view())).unwrap();
        let ones = Array2::from_elem(q.raw_dim(), 1.0);
        let da = net
            .backward(&learner.critic, &cache, ones.view(), GradRequest::ACTION_ONLY)
            .unwrap()
            .action
            .unwrap();
        let numeric = numeric_array_gradient(&actions, |a| {
            net.predict(&learner.critic, obs.view(), Some(a.view())).unwrap().sum()
        });
        let analytic: Vec<f64> = da.iter().copied().collect();
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    worst
}
