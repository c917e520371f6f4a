//! Gradient and masking cases. Each returns the worst error it saw so the
//! caller can pick the threshold.

use rand::Rng;
use trajshield::data::Trajectory;
use trajshield::encoding::EncodedBatch;
use trajshield::neural::{
    bce_with_grad, finite_difference_check, l2_with_grad, sce_with_grad, Activation, Dense, Lstm, LstmMode,
    Parameter, Parameterized, Tensor,
};
use trajshield::trajgan::{traj_loss_with_grad, Discriminator, Generator, LossWeights};

use super::{batch_of, random_matrix, random_trajectories, rng};

/// Keeps relu pre-activations away from the kink.
pub fn nudge_away_from_relu_kink(layer: &mut Dense, x: &Tensor) {
    let mut probe = layer.clone();
    probe.activation = Activation::None;
    let pre = probe.forward(x).unwrap();
    let out = layer.out_dim();
    let b = layer.bias.value.data_mut();
    for j in 0..out {
        let closest = (0..pre.rows())
            .map(|r| pre.row(r)[j])
            .min_by(|a, c| a.abs().total_cmp(&c.abs()))
            .unwrap();
        if closest.abs() < 1e-3 {
            b[j] += if closest >= 0.0 { 0.01 } else { -0.01 };
        }
    }
}

/// `½‖θ‖²` through a bare parameter.
pub fn quadratic() -> f64 {
    let mut r = rng(0);
    let mut p = Parameter::new("theta", random_matrix(&mut r, 3, 4, 2.0));
    finite_difference_check(
        &mut p,
        |p| {
            p.grad = p.value.clone();
            0.5 * p.value.data().iter().map(|v| v * v).sum::<f64>()
        },
        1e-5,
        None,
        0,
    )
    .max_relative_error
}

/// A linear loss through an activation-free dense layer.
pub fn linear_dense() -> f64 {
    let mut r = rng(1);
    let mut layer = Dense::new("lin", 4, 3, Activation::None, &mut r);
    let x = random_matrix(&mut r, 5, 4, 1.0);
    let target = random_matrix(&mut r, 5, 3, 1.0);
    finite_difference_check(
        &mut layer,
        |l| {
            let y = l.forward(&x).unwrap();
            let loss = y.data().iter().zip(target.data()).map(|(a, b)| a * b).sum();
            l.backward(&x, &y, &target, true, false);
            loss
        },
        1e-5,
        None,
        0,
    )
    .max_relative_error
}

struct Stack {
    hidden: Dense,
    head: Dense,
}

impl Parameterized for Stack {
    fn parameters(&self) -> Vec<&Parameter> {
        let mut v = self.hidden.parameters();
        v.extend(self.head.parameters());
        v
    }
    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut v = self.hidden.parameters_mut();
        v.extend(self.head.parameters_mut());
        v
    }
}

/// Dense relu into dense softmax under masked SCE.
pub fn relu_softmax_sce() -> f64 {
    let mut r = rng(2);
    let x = random_matrix(&mut r, 6, 5, 1.0);
    let mut hidden = Dense::new("hidden", 5, 8, Activation::Relu, &mut r);
    nudge_away_from_relu_kink(&mut hidden, &x);
    let head = Dense::new("head", 8, 4, Activation::Softmax, &mut r);
    let mut stack = Stack { hidden, head };
    let mut truth = Tensor::zeros(&[6, 4]);
    for i in 0..6 {
        truth.row_mut(i)[i % 4] = 1.0;
    }
    let mask = [1.0, 1.0, 0.0, 1.0, 1.0, 1.0];
    finite_difference_check(
        &mut stack,
        |s| {
            let h = s.hidden.forward(&x).unwrap();
            let p = s.head.forward(&h).unwrap();
            let loss = sce_with_grad(&truth, &p, &mask).unwrap();
            let dh = s.head.backward(&h, &p, &loss.grad, true, true).unwrap();
            s.hidden.backward(&x, &h, &dh, true, false);
            loss.value
        },
        1e-5,
        None,
        0,
    )
    .max_relative_error
}

/// Tanh layer under masked L2.
pub fn tanh_l2() -> f64 {
    let mut r = rng(3);
    let x = random_matrix(&mut r, 4, 3, 1.0);
    let mut layer = Dense::new("tanh", 3, 2, Activation::Tanh, &mut r);
    let truth = random_matrix(&mut r, 4, 2, 0.5);
    finite_difference_check(
        &mut layer,
        |l| {
            let y = l.forward(&x).unwrap();
            let loss = l2_with_grad(&truth, &y, &[1.0, 0.0, 1.0, 1.0]).unwrap();
            l.backward(&x, &y, &loss.grad, true, false);
            loss.value
        },
        1e-5,
        None,
        0,
    )
    .max_relative_error
}

/// Sigmoid layer under BCE.
pub fn sigmoid_bce() -> f64 {
    let mut r = rng(4);
    let x = random_matrix(&mut r, 4, 3, 1.0);
    let mut layer = Dense::new("sig", 3, 1, Activation::Sigmoid, &mut r);
    let labels = [1.0, 0.0, 1.0, 0.0];
    finite_difference_check(
        &mut layer,
        |l| {
            let y = l.forward(&x).unwrap();
            let loss = bce_with_grad(&labels, y.data()).unwrap();
            let dy = loss.grad.reshape(&[4, 1]).unwrap();
            l.backward(&x, &y, &dy, true, false);
            loss.value
        },
        1e-5,
        None,
        0,
    )
    .max_relative_error
}

struct DenseWithInput {
    layer: Dense,
    x: Parameter,
}

impl Parameterized for DenseWithInput {
    fn parameters(&self) -> Vec<&Parameter> {
        vec![&self.x]
    }
    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.x]
    }
}

/// The input gradient returned by a softmax dense layer.
pub fn dense_input_gradient() -> f64 {
    let mut r = rng(5);
    let layer = Dense::new("d", 3, 4, Activation::Softmax, &mut r);
    let x = Parameter::new("x", random_matrix(&mut r, 2, 3, 1.0));
    let mut m = DenseWithInput { layer, x };
    let truth = Tensor::matrix(2, 4, vec![0., 1., 0., 0., 0., 0., 0., 1.]).unwrap();
    finite_difference_check(
        &mut m,
        |m| {
            let y = m.layer.forward(&m.x.value).unwrap();
            let loss = sce_with_grad(&truth, &y, &[1.0, 1.0]).unwrap();
            m.x.grad = m.layer.backward(&m.x.value, &y, &loss.grad, false, true).unwrap();
            loss.value
        },
        1e-5,
        None,
        0,
    )
    .max_relative_error
}

struct LstmWithInput {
    lstm: Lstm,
    x: Parameter,
}

impl Parameterized for LstmWithInput {
    fn parameters(&self) -> Vec<&Parameter> {
        let mut v = self.lstm.parameters();
        v.push(&self.x);
        v
    }
    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut v = self.lstm.parameters_mut();
        v.push(&mut self.x);
        v
    }
}

/// Masked LSTM with pre-padded sequences of lengths 5, 3 and 1; checks the
/// weights and the input gradient.
pub fn lstm(mode: LstmMode) -> f64 {
    let mut r = rng(10);
    let (steps, batch, input, units) = (5, 3, 4, 6);
    let lstm = Lstm::new("lstm", input, units, &mut r);
    let x = Parameter::new("x", random_matrix(&mut r, steps * batch, input, 1.0));
    let mut model = LstmWithInput { lstm, x };
    let mut mask = vec![0.0; steps * batch];
    for (b, len) in [5usize, 3, 1].into_iter().enumerate() {
        for t in steps - len..steps {
            mask[t * batch + b] = 1.0;
        }
    }
    let out_rows = match mode {
        LstmMode::ManyToMany => steps * batch,
        LstmMode::ManyToOne => batch,
    };
    let weights = random_matrix(&mut r, out_rows, units, 1.0);
    finite_difference_check(
        &mut model,
        |m| {
            let (y, cache) = m.lstm.forward_sequence(&m.x.value, &mask, steps, batch, mode).unwrap();
            let loss: f64 = y.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum::<f64>()
                + 0.5 * y.data().iter().map(|v| v * v).sum::<f64>();
            let mut dy = weights.clone();
            dy.data_mut().iter_mut().zip(y.data()).for_each(|(d, v)| *d += v);
            m.x.grad = m
                .lstm
                .backward_sequence(&m.x.value, &mask, &cache, &dy, true, true)
                .unwrap();
            loss
        },
        1e-5,
        None,
        0,
    )
    .max_relative_error
}

pub const CATEGORIES: usize = 3;

/// A small generator/discriminator pair and a two-trajectory batch with
/// lengths 6 and 3.
pub fn tiny_setup(seed: u64) -> (Generator, Discriminator, EncodedBatch, Tensor) {
    let mut r = rng(seed);
    let trajs: Vec<Trajectory> = [6, 3]
        .into_iter()
        .enumerate()
        .map(|(i, len)| Trajectory {
            tid: i as u64,
            uid: i as u64,
            points: (0..len).map(|_| super::random_point(&mut r, CATEGORIES)).collect(),
        })
        .collect();
    let real = batch_of(&trajs, (40.7, -74.0), CATEGORIES);
    let g = Generator::new(CATEGORIES, 4, 3, 5, (0.05, 0.05), &mut r);
    let d = Discriminator::new(CATEGORIES, 4, 5, &mut r);
    let noise = trajshield::trajgan::sample_noise(&real, 3, Default::default(), &mut r);
    (g, d, real, noise)
}

/// Generator loss and gradient with the discriminator held fixed.
pub fn generator_loss(
    g: &mut Generator,
    d: &mut Discriminator,
    real: &EncodedBatch,
    noise: &Tensor,
    w: &LossWeights,
) -> f64 {
    let (fake, tape) = g.forward(real, noise).unwrap();
    let (p, d_tape) = d.forward(&fake).unwrap();
    let y_r = vec![1.0; p.len()];
    let (terms, d_p, mut grad) = traj_loss_with_grad(&y_r, &p, real, &fake, w).unwrap();
    let through = d.backward(&d_tape, &d_p, false, true).unwrap().unwrap();
    grad.accumulate(&through);
    g.backward(&tape, &grad);
    terms.total
}

/// Full generator under TrajLoss, every parameter checked.
pub fn generator_traj_loss() -> f64 {
    let (mut g, mut d, real, noise) = tiny_setup(20);
    let w = LossWeights::default();
    finite_difference_check(&mut g, |g| generator_loss(g, &mut d, &real, &noise, &w), 1e-5, None, 0)
        .max_relative_error
}

/// Discriminator BCE over a real batch (label 1) and a synthetic one (label 0).
pub fn discriminator_loss(d: &mut Discriminator, real: &EncodedBatch, fake: &EncodedBatch) -> f64 {
    let (p_real, t_real) = d.forward(real).unwrap();
    let (p_fake, t_fake) = d.forward(fake).unwrap();
    let n = p_real.len();
    let mut labels = vec![1.0; n];
    labels.resize(n + p_fake.len(), 0.0);
    let preds: Vec<f64> = p_real.iter().chain(&p_fake).copied().collect();
    let loss = bce_with_grad(&labels, &preds).unwrap();
    let (a, b) = loss.grad.data().split_at(n);
    d.backward(&t_real, a, true, false).unwrap();
    d.backward(&t_fake, b, true, false).unwrap();
    loss.value
}

pub fn discriminator_bce() -> f64 {
    let (g, mut d, real, noise) = tiny_setup(21);
    let (fake, _) = g.forward(&real, &noise).unwrap();
    finite_difference_check(&mut d, |d| discriminator_loss(d, &real, &fake), 1e-5, None, 0).max_relative_error
}

fn grads_of<M: Parameterized>(m: &M) -> Vec<f64> {
    m.parameters().iter().flat_map(|p| p.grad.data().to_vec()).collect()
}

/// Overwrites every padded slot of `b` (and of the noise) with garbage.
pub fn scramble_padding(b: &mut EncodedBatch, noise: &mut Tensor, r: &mut rand_chacha::ChaCha8Rng) {
    for row in 0..b.rows() {
        if b.mask[row] != 0.0 {
            continue;
        }
        for t in [&mut b.dev, &mut b.day, &mut b.hour, &mut b.category, &mut *noise] {
            t.row_mut(row).iter_mut().for_each(|v| *v = r.random_range(-5.0..5.0));
        }
    }
}

/// Largest change in the generator loss, the discriminator loss or any
/// parameter gradient of either network caused by scrambling padded slots,
/// over `trials` random batches.
pub fn masking_invariance(trials: usize) -> f64 {
    let mut worst = 0.0f64;
    let w = LossWeights::default();
    for trial in 0..trials as u64 {
        let mut r = rng(100 + trial);
        let mut trajs: Vec<Trajectory> = random_trajectories(&mut r, 4, 4, 7, CATEGORIES);
        // guarantee padding in the batch
        trajs[0].points.truncate(1);
        while trajs[1].points.len() < 7 {
            trajs[1].points.push(super::random_point(&mut r, CATEGORIES));
        }
        let real = batch_of(&trajs, (40.7, -74.0), CATEGORIES);
        let g0 = Generator::new(CATEGORIES, 4, 3, 5, (0.05, 0.05), &mut r);
        let d0 = Discriminator::new(CATEGORIES, 4, 5, &mut r);
        let noise = trajshield::trajgan::sample_noise(&real, 3, Default::default(), &mut r);

        let run = |real: &EncodedBatch, noise: &Tensor| {
            let (mut g, mut d) = (g0.clone(), d0.clone());
            let g_loss = generator_loss(&mut g, &mut d, real, noise, &w);
            let (fake, _) = g.forward(real, noise).unwrap();
            let mut d2 = d0.clone();
            let d_loss = discriminator_loss(&mut d2, real, &fake);
            let mut all = vec![g_loss, d_loss];
            all.extend(grads_of(&g));
            all.extend(grads_of(&d2));
            all
        };
        let base = run(&real, &noise);
        let (mut real2, mut noise2) = (real.clone(), noise.clone());
        scramble_padding(&mut real2, &mut noise2, &mut r);
        let other = run(&real2, &noise2);
        for (a, b) in base.iter().zip(&other) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}
