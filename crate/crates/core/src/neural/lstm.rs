//! Masked LSTM over time-major batches, with full backpropagation through time.
//!
//! Sequences are stored time-major: row `t * batch + b` holds step `t` of
//! sequence `b`. A masked-out step is skipped entirely: the state carries over
//! unchanged and, in many-to-many mode, the emitted output is zero.
//!
//! Gate layout inside the `4 * units` pre-activation row is `[i, f, g, o]`.

use rand::Rng;

use super::dense::sigmoid;
use super::tensor::{gemm, Op};
use super::{NeuralError, Parameter, Parameterized, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LstmMode {
    /// One output per step (`steps * batch x units`).
    ManyToMany,
    /// Hidden state after the last masked-in step (`batch x units`).
    ManyToOne,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub hidden: Tensor,
    pub cell: Tensor,
}

impl LstmState {
    pub fn zeros(batch: usize, units: usize) -> Self {
        Self {
            hidden: Tensor::zeros(&[batch, units]),
            cell: Tensor::zeros(&[batch, units]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    pub w_input: Parameter,
    pub w_recurrent: Parameter,
    pub bias: Parameter,
}

/// Intermediate values kept by [`Lstm::forward_sequence`] for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmCache {
    steps: usize,
    batch: usize,
    mode: LstmMode,
    /// Post-activation gates `[i, f, g, o]` per row.
    gates: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl Lstm {
    pub fn new<R: Rng + ?Sized>(name: &str, input_dim: usize, units: usize, rng: &mut R) -> Self {
        let mut bias = Parameter::zeros(format!("{name}.bias"), &[4 * units]);
        bias.value.data_mut()[units..2 * units].fill(1.0);
        Self {
            w_input: Parameter::glorot(
                format!("{name}.w_input"),
                &[input_dim, 4 * units],
                input_dim,
                4 * units,
                rng,
            ),
            w_recurrent: Parameter::glorot(
                format!("{name}.w_recurrent"),
                &[units, 4 * units],
                units,
                4 * units,
                rng,
            ),
            bias,
        }
    }

    pub fn units(&self) -> usize {
        self.w_recurrent.shape()[0]
    }

    pub fn input_dim(&self) -> usize {
        self.w_input.shape()[0]
    }

    /// One recurrence step for a `batch x input_dim` slice.
    ///
    /// Rows whose `mask` entry is 0 keep their state and emit zeros.
    pub fn step(
        &self,
        x_t: &Tensor,
        state: &LstmState,
        mask: &[f64],
    ) -> Result<(Tensor, LstmState), NeuralError> {
        let batch = x_t.rows();
        let units = self.units();
        if x_t.cols() != self.input_dim()
            || mask.len() != batch
            || state.hidden.shape() != [batch, units]
            || state.cell.shape() != [batch, units]
        {
            return Err(NeuralError::Shape(format!(
                "lstm step: input {:?}, state {:?}, mask {}",
                x_t.shape(),
                state.hidden.shape(),
                mask.len()
            )));
        }
        let mut pre = self.input_projection(x_t);
        let mut out = Tensor::zeros(&[batch, units]);
        let mut next = state.clone();
        let mut gates = vec![0.0; 4 * units];
        let mut tanh_c = vec![0.0; units];
        self.recurrent_step(
            &mut pre,
            batch,
            mask,
            &state.hidden,
            &state.cell,
            &mut next,
            &mut out,
            &mut gates,
            &mut tanh_c,
            None,
        );
        Ok((out, next))
    }

    fn input_projection(&self, x: &Tensor) -> Tensor {
        let rows = x.rows();
        let g = 4 * self.units();
        let mut pre = Tensor::zeros(&[rows, g]);
        for row in pre.data_mut().chunks_mut(g) {
            row.copy_from_slice(self.bias.value.data());
        }
        gemm(
            rows,
            self.input_dim(),
            g,
            1.0,
            x.data(),
            Op::N,
            self.w_input.value.data(),
            Op::N,
            1.0,
            pre.data_mut(),
        );
        pre
    }

    /// Adds `h_prev W_h` to `pre` (batch rows) and applies the gate math.
    /// `gates_out`/`tanh_out` receive per-row values when recording.
    #[allow(clippy::too_many_arguments)]
    fn recurrent_step(
        &self,
        pre: &mut Tensor,
        batch: usize,
        mask: &[f64],
        h_prev: &Tensor,
        c_prev: &Tensor,
        next: &mut LstmState,
        out: &mut Tensor,
        gates_out: &mut [f64],
        tanh_out: &mut [f64],
        out_row_offset: Option<usize>,
    ) {
        let units = self.units();
        let g = 4 * units;
        gemm(
            batch,
            units,
            g,
            1.0,
            h_prev.data(),
            Op::N,
            self.w_recurrent.value.data(),
            Op::N,
            1.0,
            pre.data_mut(),
        );
        let record = out_row_offset.is_some();
        for b in 0..batch {
            if mask[b] == 0.0 {
                continue;
            }
            let p = &mut pre.data_mut()[b * g..(b + 1) * g];
            let (i_g, rest) = p.split_at_mut(units);
            let (f_g, rest) = rest.split_at_mut(units);
            let (g_g, o_g) = rest.split_at_mut(units);
            let cp = c_prev.row(b);
            let (hn, cn) = (
                &mut next.hidden.data_mut()[b * units..(b + 1) * units],
                &mut next.cell.data_mut()[b * units..(b + 1) * units],
            );
            let o_row = &mut out.data_mut()[b * units..(b + 1) * units];
            for u in 0..units {
                let i = sigmoid(i_g[u]);
                let f = sigmoid(f_g[u]);
                let gg = g_g[u].tanh();
                let o = sigmoid(o_g[u]);
                let c = f * cp[u] + i * gg;
                let tc = c.tanh();
                let h = o * tc;
                cn[u] = c;
                hn[u] = h;
                o_row[u] = h;
                i_g[u] = i;
                f_g[u] = f;
                g_g[u] = gg;
                o_g[u] = o;
                if !record {
                    tanh_out[u] = tc;
                }
            }
            if let Some(off) = out_row_offset {
                gates_out[(off + b) * g..(off + b + 1) * g].copy_from_slice(p);
                for u in 0..units {
                    tanh_out[(off + b) * units + u] = cn[u].tanh();
                }
            } else {
                gates_out.copy_from_slice(p);
            }
        }
    }

    /// Runs the whole masked sequence. `x` is `steps * batch x input_dim`
    /// (time-major) and `mask` has `steps * batch` entries.
    pub fn forward_sequence(
        &self,
        x: &Tensor,
        mask: &[f64],
        steps: usize,
        batch: usize,
        mode: LstmMode,
    ) -> Result<(Tensor, LstmCache), NeuralError> {
        let units = self.units();
        let g = 4 * units;
        if x.rows() != steps * batch || x.cols() != self.input_dim() || mask.len() != steps * batch {
            return Err(NeuralError::Shape(format!(
                "lstm sequence: input {:?}, mask {}, steps {steps}, batch {batch}, input_dim {}",
                x.shape(),
                mask.len(),
                self.input_dim()
            )));
        }
        for b in 0..batch {
            if (0..steps).all(|t| mask[t * batch + b] == 0.0) {
                return Err(NeuralError::EmptySequence(b));
            }
        }
        let pre_all = self.input_projection(x);
        let n = steps * batch;
        let mut cache = LstmCache {
            steps,
            batch,
            mode,
            gates: vec![0.0; n * g],
            h_prev: vec![0.0; n * units],
            c_prev: vec![0.0; n * units],
            tanh_c: vec![0.0; n * units],
        };
        let mut state = LstmState::zeros(batch, units);
        let mut outputs = match mode {
            LstmMode::ManyToMany => Tensor::zeros(&[n, units]),
            LstmMode::ManyToOne => Tensor::zeros(&[0, units]),
        };
        let mut step_out = Tensor::zeros(&[batch, units]);
        for t in 0..steps {
            let rows = t * batch..(t + 1) * batch;
            cache.h_prev[rows.start * units..rows.end * units].copy_from_slice(state.hidden.data());
            cache.c_prev[rows.start * units..rows.end * units].copy_from_slice(state.cell.data());
            let mut pre = Tensor::matrix(
                batch,
                g,
                pre_all.data()[rows.start * g..rows.end * g].to_vec(),
            )?;
            let prev = state.clone();
            step_out.fill(0.0);
            self.recurrent_step(
                &mut pre,
                batch,
                &mask[rows.clone()],
                &prev.hidden,
                &prev.cell,
                &mut state,
                &mut step_out,
                &mut cache.gates,
                &mut cache.tanh_c,
                Some(rows.start),
            );
            if mode == LstmMode::ManyToMany {
                outputs.data_mut()[rows.start * units..rows.end * units]
                    .copy_from_slice(step_out.data());
            }
        }
        let out = match mode {
            LstmMode::ManyToMany => outputs,
            LstmMode::ManyToOne => state.hidden,
        };
        Ok((out, cache))
    }

    /// Backpropagation through time.
    ///
    /// `d_output` matches the forward output: `steps * batch x units` for
    /// many-to-many, `batch x units` for many-to-one.
    pub fn backward_sequence(
        &mut self,
        x: &Tensor,
        mask: &[f64],
        cache: &LstmCache,
        d_output: &Tensor,
        param_grads: bool,
        input_grad: bool,
    ) -> Option<Tensor> {
        let units = self.units();
        let g = 4 * units;
        let (steps, batch) = (cache.steps, cache.batch);
        let n = steps * batch;
        let mut d_pre = vec![0.0; n * g];
        let mut dh = vec![0.0; batch * units];
        let mut dc = vec![0.0; batch * units];
        if cache.mode == LstmMode::ManyToOne {
            dh.copy_from_slice(d_output.data());
        }
        let mut dh_prev = vec![0.0; batch * units];
        for t in (0..steps).rev() {
            let base = t * batch;
            for b in 0..batch {
                let r = base + b;
                if mask[r] == 0.0 {
                    continue;
                }
                let dh_row = &mut dh[b * units..(b + 1) * units];
                if cache.mode == LstmMode::ManyToMany {
                    let d_out = &d_output.data()[r * units..(r + 1) * units];
                    dh_row.iter_mut().zip(d_out).for_each(|(a, b)| *a += b);
                }
                let gates = &cache.gates[r * g..(r + 1) * g];
                let tc = &cache.tanh_c[r * units..(r + 1) * units];
                let cp = &cache.c_prev[r * units..(r + 1) * units];
                let dc_row = &mut dc[b * units..(b + 1) * units];
                let dp = &mut d_pre[r * g..(r + 1) * g];
                for u in 0..units {
                    let (i, f, gg, o) = (gates[u], gates[units + u], gates[2 * units + u], gates[3 * units + u]);
                    let dhv = dh_row[u];
                    let d_o = dhv * tc[u];
                    let dcv = dc_row[u] + dhv * o * (1.0 - tc[u] * tc[u]);
                    dp[u] = dcv * gg * i * (1.0 - i);
                    dp[units + u] = dcv * cp[u] * f * (1.0 - f);
                    dp[2 * units + u] = dcv * i * (1.0 - gg * gg);
                    dp[3 * units + u] = d_o * o * (1.0 - o);
                    dc_row[u] = dcv * f;
                }
            }
            // dh_prev = d_pre_t W_h^T for active rows; carried rows pass dh through
            gemm(
                batch,
                g,
                units,
                1.0,
                &d_pre[base * g..(base + batch) * g],
                Op::N,
                self.w_recurrent.value.data(),
                Op::T,
                0.0,
                &mut dh_prev,
            );
            for b in 0..batch {
                if mask[base + b] != 0.0 {
                    dh[b * units..(b + 1) * units]
                        .copy_from_slice(&dh_prev[b * units..(b + 1) * units]);
                }
            }
        }
        if param_grads {
            let in_dim = self.input_dim();
            gemm(
                in_dim,
                n,
                g,
                1.0,
                x.data(),
                Op::T,
                &d_pre,
                Op::N,
                1.0,
                self.w_input.grad.data_mut(),
            );
            gemm(
                units,
                n,
                g,
                1.0,
                &cache.h_prev,
                Op::T,
                &d_pre,
                Op::N,
                1.0,
                self.w_recurrent.grad.data_mut(),
            );
            let gb = self.bias.grad.data_mut();
            for row in d_pre.chunks(g) {
                gb.iter_mut().zip(row).for_each(|(a, b)| *a += b);
            }
        }
        input_grad.then(|| {
            let in_dim = self.input_dim();
            let mut dx = Tensor::zeros(&[n, in_dim]);
            gemm(
                n,
                g,
                in_dim,
                1.0,
                &d_pre,
                Op::N,
                self.w_input.value.data(),
                Op::T,
                0.0,
                dx.data_mut(),
            );
            dx
        })
    }
}

impl Parameterized for Lstm {
    fn parameters(&self) -> Vec<&Parameter> {
        vec![&self.w_input, &self.w_recurrent, &self.bias]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.w_input, &mut self.w_recurrent, &mut self.bias]
    }
}

/// Functional form of [`Lstm::forward_sequence`].
pub fn lstm_sequence(
    x: &Tensor,
    mask: &[f64],
    steps: usize,
    batch: usize,
    lstm: &Lstm,
    mode: LstmMode,
) -> Result<Tensor, NeuralError> {
    lstm.forward_sequence(x, mask, steps, batch, mode).map(|(y, _)| y)
}
