use rand::Rng;

use super::tensor::{gemm, Op};
use super::{NeuralError, Parameter, Parameterized, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    None,
    Relu,
    Tanh,
    Sigmoid,
    /// Row-wise, with max subtraction.
    Softmax,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Applies `act` in place to a matrix of pre-activations.
pub fn activate(t: &mut Tensor, act: Activation) {
    match act {
        Activation::None => {}
        Activation::Relu => t.data_mut().iter_mut().for_each(|v| *v = v.max(0.0)),
        Activation::Tanh => t.data_mut().iter_mut().for_each(|v| *v = v.tanh()),
        Activation::Sigmoid => t.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v)),
        Activation::Softmax => {
            let cols = t.cols();
            for row in t.data_mut().chunks_mut(cols) {
                softmax_in_place(row);
            }
        }
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}

/// Gradient with respect to the pre-activation, given the activation output.
pub fn activation_backward(output: &Tensor, d_output: &Tensor, act: Activation) -> Tensor {
    let mut d = d_output.clone();
    let y = output.data();
    match act {
        Activation::None => {}
        Activation::Relu => d
            .data_mut()
            .iter_mut()
            .zip(y)
            .for_each(|(g, &y)| if y <= 0.0 { *g = 0.0 }),
        Activation::Tanh => d
            .data_mut()
            .iter_mut()
            .zip(y)
            .for_each(|(g, &y)| *g *= 1.0 - y * y),
        Activation::Sigmoid => d
            .data_mut()
            .iter_mut()
            .zip(y)
            .for_each(|(g, &y)| *g *= y * (1.0 - y)),
        Activation::Softmax => {
            let cols = output.cols();
            for (g, y) in d.data_mut().chunks_mut(cols).zip(y.chunks(cols)) {
                let dot: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                g.iter_mut().zip(y).for_each(|(g, &y)| *g = y * (*g - dot));
            }
        }
    }
    d
}

/// `y = act(x W + b)` for `x` of shape `batch x in`.
pub fn dense_forward(
    x: &Tensor,
    w: &Parameter,
    b: &Parameter,
    activation: Activation,
) -> Result<Tensor, NeuralError> {
    let (in_dim, out_dim) = match w.shape() {
        [i, o] => (*i, *o),
        s => return Err(NeuralError::Shape(format!("dense weight must be 2-D, got {s:?}"))),
    };
    if x.cols() != in_dim || b.value.len() != out_dim {
        return Err(NeuralError::Shape(format!(
            "dense {}: input {:?}, weight {:?}, bias {:?}",
            w.name(),
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let rows = x.rows();
    let mut y = Tensor::zeros(&[rows, out_dim]);
    for row in y.data_mut().chunks_mut(out_dim) {
        row.copy_from_slice(b.value.data());
    }
    gemm(
        rows,
        in_dim,
        out_dim,
        1.0,
        x.data(),
        Op::N,
        w.value.data(),
        Op::N,
        1.0,
        y.data_mut(),
    );
    activate(&mut y, activation);
    Ok(y)
}

/// A fully connected layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Parameter,
    pub bias: Parameter,
    pub activation: Activation,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        Self {
            weight: Parameter::glorot(
                format!("{name}.weight"),
                &[in_dim, out_dim],
                in_dim,
                out_dim,
                rng,
            ),
            bias: Parameter::zeros(format!("{name}.bias"), &[out_dim]),
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NeuralError> {
        dense_forward(x, &self.weight, &self.bias, self.activation)
    }

    /// Backpropagates `d_output` through the layer.
    ///
    /// Parameter gradients are accumulated when `param_grads` is set; the
    /// input gradient is returned when `input_grad` is set.
    pub fn backward(
        &mut self,
        input: &Tensor,
        output: &Tensor,
        d_output: &Tensor,
        param_grads: bool,
        input_grad: bool,
    ) -> Option<Tensor> {
        let d_pre = activation_backward(output, d_output, self.activation);
        let (rows, in_dim, out_dim) = (input.rows(), self.in_dim(), self.out_dim());
        if param_grads {
            gemm(
                in_dim,
                rows,
                out_dim,
                1.0,
                input.data(),
                Op::T,
                d_pre.data(),
                Op::N,
                1.0,
                self.weight.grad.data_mut(),
            );
            let gb = self.bias.grad.data_mut();
            for row in d_pre.data().chunks(out_dim) {
                gb.iter_mut().zip(row).for_each(|(g, d)| *g += d);
            }
        }
        input_grad.then(|| {
            let mut dx = Tensor::zeros(&[rows, in_dim]);
            gemm(
                rows,
                out_dim,
                in_dim,
                1.0,
                d_pre.data(),
                Op::N,
                self.weight.value.data(),
                Op::T,
                0.0,
                dx.data_mut(),
            );
            dx
        })
    }
}

impl Parameterized for Dense {
    fn parameters(&self) -> Vec<&Parameter> {
        vec![&self.weight, &self.bias]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.weight, &mut self.bias]
    }
}
