use rand::Rng;

use super::{NeuralError, Tensor};

/// A trainable tensor together with its gradient accumulator and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub adam_m: Tensor,
    pub adam_v: Tensor,
    pub step_count: u64,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let shape = value.shape().to_vec();
        Self {
            name: name.into(),
            grad: Tensor::zeros(&shape),
            adam_m: Tensor::zeros(&shape),
            adam_v: Tensor::zeros(&shape),
            value,
            step_count: 0,
        }
    }

    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        Self::new(name, Tensor::zeros(shape))
    }

    /// Glorot/Xavier uniform initialisation in `±sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot<R: Rng + ?Sized>(
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let len = shape.iter().product();
        let data = (0..len).map(|_| rng.random_range(-limit..limit)).collect();
        Self::new(name, Tensor::from_vec(shape, data).expect("length matches shape"))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Anything that owns parameters in a fixed, deterministic order.
pub trait Parameterized {
    fn parameters(&self) -> Vec<&Parameter>;
    fn parameters_mut(&mut self) -> Vec<&mut Parameter>;

    fn zero_grad(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }

    fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.value.len()).sum()
    }
}

impl Parameterized for Parameter {
    fn parameters(&self) -> Vec<&Parameter> {
        vec![self]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        vec![self]
    }
}

/// Hyperparameters of the Adam optimiser.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam step. The gradient is zeroed afterwards.
///
/// A non-finite gradient aborts before anything is modified.
pub fn adam_update(p: &mut Parameter, cfg: &AdamConfig) -> Result<(), NeuralError> {
    if !p.grad.all_finite() {
        return Err(NeuralError::NonFiniteGradient(p.name.clone()));
    }
    p.step_count += 1;
    let t = p.step_count as i32;
    let bias1 = 1.0 - cfg.beta1.powi(t);
    let bias2 = 1.0 - cfg.beta2.powi(t);
    let value = p.value.data_mut();
    let grad = p.grad.data_mut();
    let m = p.adam_m.data_mut();
    let v = p.adam_v.data_mut();
    for i in 0..value.len() {
        let g = grad[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / bias1;
        let v_hat = v[i] / bias2;
        value[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        grad[i] = 0.0;
    }
    Ok(())
}

/// Applies [`adam_update`] to every parameter of a model.
pub fn adam_step<M: Parameterized + ?Sized>(model: &mut M, cfg: &AdamConfig) -> Result<(), NeuralError> {
    let mut params = model.parameters_mut();
    // validate everything first so a bad gradient leaves the model untouched
    if let Some(bad) = params.iter().find(|p| !p.grad.all_finite()) {
        return Err(NeuralError::NonFiniteGradient(bad.name().to_string()));
    }
    for p in params.iter_mut() {
        adam_update(p, cfg)?;
    }
    Ok(())
}
