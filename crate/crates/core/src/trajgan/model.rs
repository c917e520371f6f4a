use rand::Rng;

use super::TrajGanError;
use crate::data::{DAYS, HOURS};
use crate::encoding::EncodedBatch;
use crate::neural::{Activation, Dense, Lstm, LstmCache, LstmMode, NeuralError, Parameter, Parameterized, Tensor};

/// Gradients with respect to the four blocks of an [`EncodedBatch`].
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGrad {
    pub dev: Tensor,
    pub day: Tensor,
    pub hour: Tensor,
    pub category: Tensor,
}

impl BatchGrad {
    pub fn zeros_like(b: &EncodedBatch) -> Self {
        Self {
            dev: Tensor::zeros(b.dev.shape()),
            day: Tensor::zeros(b.day.shape()),
            hour: Tensor::zeros(b.hour.shape()),
            category: Tensor::zeros(b.category.shape()),
        }
    }

    /// Adds `other` block by block.
    pub fn accumulate(&mut self, other: &BatchGrad) {
        add_into(&mut self.dev, &other.dev);
        add_into(&mut self.day, &other.day);
        add_into(&mut self.hour, &other.hour);
        add_into(&mut self.category, &other.category);
    }
}

/// Overwrites (rather than scales) padded rows so that even non-finite
/// values there cannot leak into the computation.
pub(crate) fn zero_masked_rows(t: &mut Tensor, mask: &[f64]) {
    let c = t.cols();
    if c == 0 {
        return;
    }
    for (row, &m) in t.data_mut().chunks_mut(c).zip(mask) {
        if m == 0.0 {
            row.fill(0.0);
        }
    }
}

fn masked(t: &Tensor, mask: &[f64]) -> Tensor {
    let mut t = t.clone();
    zero_masked_rows(&mut t, mask);
    t
}

fn add_into(acc: &mut Tensor, other: &Tensor) {
    acc.data_mut().iter_mut().zip(other.data()).for_each(|(a, b)| *a += b);
}

fn check_batch(b: &EncodedBatch, categories: usize) -> Result<(), NeuralError> {
    let n = b.rows();
    let ok = b.dev.shape() == [n, 2]
        && b.day.shape() == [n, DAYS]
        && b.hour.shape() == [n, HOURS]
        && b.category.shape() == [n, categories]
        && b.mask.len() == n;
    if ok {
        Ok(())
    } else {
        Err(NeuralError::Shape(format!(
            "batch of {n} rows with blocks {:?} {:?} {:?} {:?}, model expects {categories} categories",
            b.dev.shape(),
            b.day.shape(),
            b.hour.shape(),
            b.category.shape()
        )))
    }
}

/// Per-attribute embeddings followed by a fusion layer; shared by the
/// generator, the discriminator and the user-linking classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontEnd {
    pub spatial: Dense,
    pub day: Dense,
    pub hour: Dense,
    pub category: Dense,
    pub fusion: Dense,
}

/// Activations recorded by [`FrontEnd::forward`].
#[derive(Debug, Clone)]
pub struct FrontTape {
    inputs: [Tensor; 4],
    embedded: [Tensor; 4],
    fusion_input: Tensor,
    pub fused: Tensor,
}

impl FrontEnd {
    pub fn new<R: Rng + ?Sized>(
        prefix: &str,
        categories: usize,
        spatial_embed: usize,
        noise_dim: usize,
        width: usize,
        rng: &mut R,
    ) -> Self {
        let spatial = Dense::new(&format!("{prefix}.embed_spatial"), 2, spatial_embed, Activation::Relu, rng);
        let day = Dense::new(&format!("{prefix}.embed_day"), DAYS, DAYS, Activation::Relu, rng);
        let hour = Dense::new(&format!("{prefix}.embed_hour"), HOURS, HOURS, Activation::Relu, rng);
        let category = Dense::new(&format!("{prefix}.embed_category"), categories, categories, Activation::Relu, rng);
        let fused_in = spatial_embed + DAYS + HOURS + categories + noise_dim;
        let fusion = Dense::new(&format!("{prefix}.fusion"), fused_in, width, Activation::Relu, rng);
        Self {
            spatial,
            day,
            hour,
            category,
            fusion,
        }
    }

    fn layers(&self) -> [&Dense; 4] {
        [&self.spatial, &self.day, &self.hour, &self.category]
    }

    pub fn categories(&self) -> usize {
        self.category.in_dim()
    }

    fn embedded_width(&self) -> usize {
        self.layers().iter().map(|l| l.out_dim()).sum()
    }

    pub fn noise_dim(&self) -> usize {
        self.fusion.in_dim() - self.embedded_width()
    }

    pub fn width(&self) -> usize {
        self.fusion.out_dim()
    }

    pub fn forward(&self, b: &EncodedBatch, noise: Option<&Tensor>) -> Result<FrontTape, NeuralError> {
        check_batch(b, self.categories())?;
        let mask = &b.mask;
        let inputs = [&b.dev, &b.day, &b.hour, &b.category].map(|t| masked(t, mask));
        let mut embedded = Vec::with_capacity(4);
        for (layer, x) in self.layers().iter().zip(&inputs) {
            let mut e = layer.forward(x)?;
            zero_masked_rows(&mut e, mask);
            embedded.push(e);
        }
        let embedded: [Tensor; 4] = embedded.try_into().expect("four embeddings");
        let mut parts: Vec<&Tensor> = embedded.iter().collect();
        let noise = match (noise, self.noise_dim()) {
            (_, 0) => None,
            (Some(z), d) if z.shape() == [b.rows(), d] => Some(masked(z, mask)),
            (z, d) => {
                return Err(NeuralError::Shape(format!(
                    "expected {} x {d} noise, got {:?}",
                    b.rows(),
                    z.map(|z| z.shape().to_vec())
                )))
            }
        };
        if let Some(z) = &noise {
            parts.push(z);
        }
        let fusion_input = Tensor::concat_cols(&parts)?;
        let mut fused = self.fusion.forward(&fusion_input)?;
        zero_masked_rows(&mut fused, mask);
        Ok(FrontTape {
            inputs,
            embedded,
            fusion_input,
            fused,
        })
    }

    /// Backpropagates `d_fused`; returns gradients for the four input blocks
    /// when `input_grad` is set. Padded rows receive exactly zero gradient.
    pub fn backward(
        &mut self,
        tape: &FrontTape,
        d_fused: &Tensor,
        mask: &[f64],
        param_grads: bool,
        input_grad: bool,
    ) -> Option<BatchGrad> {
        if !param_grads && !input_grad {
            return None;
        }
        let d = masked(d_fused, mask);
        let d_in = self
            .fusion
            .backward(&tape.fusion_input, &tape.fused, &d, param_grads, true)
            .expect("input gradient requested");
        let mut widths: Vec<usize> = self.layers().iter().map(|l| l.out_dim()).collect();
        if self.noise_dim() > 0 {
            widths.push(self.noise_dim());
        }
        let blocks = d_in.split_cols(&widths).expect("fusion input widths");
        let layers = [&mut self.spatial, &mut self.day, &mut self.hour, &mut self.category];
        let mut grads = Vec::with_capacity(4);
        for (i, layer) in layers.into_iter().enumerate() {
            let mut d_e = blocks[i].clone();
            zero_masked_rows(&mut d_e, mask);
            let dx = layer.backward(&tape.inputs[i], &tape.embedded[i], &d_e, param_grads, input_grad);
            grads.push(dx.map(|mut dx| {
                zero_masked_rows(&mut dx, mask);
                dx
            }));
        }
        let mut grads = grads.into_iter();
        let mut next = || grads.next().flatten();
        input_grad.then(|| BatchGrad {
            dev: next().expect("spatial"),
            day: next().expect("day"),
            hour: next().expect("hour"),
            category: next().expect("category"),
        })
    }
}

impl Parameterized for FrontEnd {
    fn parameters(&self) -> Vec<&Parameter> {
        [&self.spatial, &self.day, &self.hour, &self.category, &self.fusion]
            .into_iter()
            .flat_map(|l| l.parameters())
            .collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        [&mut self.spatial, &mut self.day, &mut self.hour, &mut self.category, &mut self.fusion]
            .into_iter()
            .flat_map(|l| l.parameters_mut())
            .collect()
    }
}

/// Maps a real trajectory batch plus noise to a synthetic batch of the same
/// shape: stretched tanh deviations and softmax attribute rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub front: FrontEnd,
    pub lstm: Lstm,
    pub dec_spatial: Dense,
    pub dec_day: Dense,
    pub dec_hour: Dense,
    pub dec_category: Dense,
    /// Output scale `(s_lat, s_lon)` in degrees.
    pub stretch: (f64, f64),
}

#[derive(Debug, Clone)]
pub struct GeneratorTape {
    front: FrontTape,
    lstm: LstmCache,
    hidden: Tensor,
    tanh: Tensor,
    day: Tensor,
    hour: Tensor,
    category: Tensor,
    mask: Vec<f64>,
}

impl Generator {
    pub fn new<R: Rng + ?Sized>(
        categories: usize,
        spatial_embed: usize,
        noise_dim: usize,
        units: usize,
        stretch: (f64, f64),
        rng: &mut R,
    ) -> Self {
        let front = FrontEnd::new("gen", categories, spatial_embed, noise_dim, units, rng);
        let lstm = Lstm::new("gen.lstm", units, units, rng);
        Self {
            front,
            lstm,
            dec_spatial: Dense::new("gen.dec_spatial", units, 2, Activation::Tanh, rng),
            dec_day: Dense::new("gen.dec_day", units, DAYS, Activation::Softmax, rng),
            dec_hour: Dense::new("gen.dec_hour", units, HOURS, Activation::Softmax, rng),
            dec_category: Dense::new("gen.dec_category", units, categories, Activation::Softmax, rng),
            stretch,
        }
    }

    pub fn categories(&self) -> usize {
        self.front.categories()
    }

    pub fn noise_dim(&self) -> usize {
        self.front.noise_dim()
    }

    pub fn forward(&self, input: &EncodedBatch, noise: &Tensor) -> Result<(EncodedBatch, GeneratorTape), TrajGanError> {
        let mask = &input.mask;
        let front = self.front.forward(input, Some(noise))?;
        let (hidden, lstm) =
            self.lstm
                .forward_sequence(&front.fused, mask, input.steps, input.batch, LstmMode::ManyToMany)?;
        let tanh = self.dec_spatial.forward(&hidden)?;
        let day = self.dec_day.forward(&hidden)?;
        let hour = self.dec_hour.forward(&hidden)?;
        let category = self.dec_category.forward(&hidden)?;
        let mut dev = tanh.clone();
        for row in dev.data_mut().chunks_mut(2) {
            row[0] *= self.stretch.0;
            row[1] *= self.stretch.1;
        }
        zero_masked_rows(&mut dev, mask);
        let out = EncodedBatch {
            steps: input.steps,
            batch: input.batch,
            tids: input.tids.clone(),
            uids: input.uids.clone(),
            dev,
            day: masked(&day, mask),
            hour: masked(&hour, mask),
            category: masked(&category, mask),
            mask: mask.clone(),
        };
        let tape = GeneratorTape {
            front,
            lstm,
            hidden,
            tanh,
            day,
            hour,
            category,
            mask: mask.clone(),
        };
        Ok((out, tape))
    }

    /// Accumulates parameter gradients for `d_out`, the gradient of the loss
    /// with respect to the synthetic batch returned by [`Self::forward`].
    pub fn backward(&mut self, tape: &GeneratorTape, d_out: &BatchGrad) {
        let mask = &tape.mask;
        let mut d_tanh = masked(&d_out.dev, mask);
        for row in d_tanh.data_mut().chunks_mut(2) {
            row[0] *= self.stretch.0;
            row[1] *= self.stretch.1;
        }
        let h = &tape.hidden;
        let mut dh = self
            .dec_spatial
            .backward(h, &tape.tanh, &d_tanh, true, true)
            .expect("input gradient");
        for (layer, out, d) in [
            (&mut self.dec_day, &tape.day, &d_out.day),
            (&mut self.dec_hour, &tape.hour, &d_out.hour),
            (&mut self.dec_category, &tape.category, &d_out.category),
        ] {
            let g = layer.backward(h, out, &masked(d, mask), true, true).expect("input gradient");
            add_into(&mut dh, &g);
        }
        let d_fused = self
            .lstm
            .backward_sequence(&tape.front.fused, mask, &tape.lstm, &dh, true, true)
            .expect("input gradient");
        self.front.backward(&tape.front, &d_fused, mask, true, false);
    }
}

impl Parameterized for Generator {
    fn parameters(&self) -> Vec<&Parameter> {
        let mut v = self.front.parameters();
        v.extend(self.lstm.parameters());
        for l in [&self.dec_spatial, &self.dec_day, &self.dec_hour, &self.dec_category] {
            v.extend(l.parameters());
        }
        v
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut v = self.front.parameters_mut();
        v.extend(self.lstm.parameters_mut());
        for l in [
            &mut self.dec_spatial,
            &mut self.dec_day,
            &mut self.dec_hour,
            &mut self.dec_category,
        ] {
            v.extend(l.parameters_mut());
        }
        v
    }
}

/// Scores a batch with the probability that each trajectory is real.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub front: FrontEnd,
    pub lstm: Lstm,
    pub head: Dense,
}

#[derive(Debug, Clone)]
pub struct DiscriminatorTape {
    front: FrontTape,
    lstm: LstmCache,
    hidden: Tensor,
    output: Tensor,
    mask: Vec<f64>,
}

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(categories: usize, spatial_embed: usize, units: usize, rng: &mut R) -> Self {
        let front = FrontEnd::new("disc", categories, spatial_embed, 0, units, rng);
        let lstm = Lstm::new("disc.lstm", units, units, rng);
        let head = Dense::new("disc.head", units, 1, Activation::Sigmoid, rng);
        Self { front, lstm, head }
    }

    pub fn forward(&self, input: &EncodedBatch) -> Result<(Vec<f64>, DiscriminatorTape), TrajGanError> {
        let front = self.front.forward(input, None)?;
        let (hidden, lstm) =
            self.lstm
                .forward_sequence(&front.fused, &input.mask, input.steps, input.batch, LstmMode::ManyToOne)?;
        let output = self.head.forward(&hidden)?;
        let probs = output.data().to_vec();
        let tape = DiscriminatorTape {
            front,
            lstm,
            hidden,
            output,
            mask: input.mask.clone(),
        };
        Ok((probs, tape))
    }

    /// Backpropagates `d_probs` (one entry per trajectory). Returns the
    /// gradient with respect to the input batch when `input_grad` is set.
    pub fn backward(
        &mut self,
        tape: &DiscriminatorTape,
        d_probs: &[f64],
        param_grads: bool,
        input_grad: bool,
    ) -> Result<Option<BatchGrad>, TrajGanError> {
        let d = Tensor::matrix(d_probs.len(), 1, d_probs.to_vec())?;
        if d.shape() != tape.output.shape() {
            return Err(NeuralError::Shape(format!(
                "{} output gradients for {} outputs",
                d_probs.len(),
                tape.output.rows()
            ))
            .into());
        }
        let dh = self
            .head
            .backward(&tape.hidden, &tape.output, &d, param_grads, true)
            .expect("input gradient");
        let d_fused = self
            .lstm
            .backward_sequence(&tape.front.fused, &tape.mask, &tape.lstm, &dh, param_grads, true)
            .expect("input gradient");
        Ok(self
            .front
            .backward(&tape.front, &d_fused, &tape.mask, param_grads, input_grad))
    }
}

impl Parameterized for Discriminator {
    fn parameters(&self) -> Vec<&Parameter> {
        let mut v = self.front.parameters();
        v.extend(self.lstm.parameters());
        v.extend(self.head.parameters());
        v
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut v = self.front.parameters_mut();
        v.extend(self.lstm.parameters_mut());
        v.extend(self.head.parameters_mut());
        v
    }
}
