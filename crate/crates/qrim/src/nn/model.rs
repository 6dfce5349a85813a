//! The denoiser network: a stack of conv blocks (conv -> optional batchnorm
//! -> activation) over two-channel (real/imaginary) maps, with
//! quantization-aware forward/backward passes.
//!
//! Quantized-weight blocks keep real-valued auxiliary weights; each forward
//! quantizes them against the per-layer dynamic range and the backward pass
//! routes gradients straight through to the auxiliary weights. Quantized
//! activations replace ReLU and backpropagate through their surrogate
//! derivatives.

use crate::error::{Error, Result};
use crate::nn::adam::{AdamConfig, AdamState};
use crate::nn::batchnorm::BatchNorm;
use crate::nn::conv::{conv2d_backward, conv2d_forward, Conv2d};
use crate::nn::tensor::{Scalar, Tensor};
use crate::quant::{
    quantize_binary, quantize_integer_unchecked, ste_backward, ActScheme, EmaRange, SteKind,
    WeightScheme,
};

/// Activation of one block. `Sign` and `IntegerAct` are the quantized
/// replacements for ReLU; the output layer uses `Linear`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
    Sign,
    IntegerAct(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Conv -> (BatchNorm) -> activation, with quantization hooks.
#[derive(Debug, Clone)]
pub struct ConvBlock<S> {
    pub conv: Conv2d<S>,
    pub bn: Option<BatchNorm<S>>,
    pub act: Activation,
    pub weight_scheme: WeightScheme,
    pub weight_bits: u8,
    /// Scale binary weights by the dynamic range (effective weights in
    /// {-alpha, +alpha}); raw {-1, +1} when disabled.
    pub binary_alpha_scaling: bool,
    /// EMA range tracker for integer activations.
    pub act_range: EmaRange,
    /// Dynamic range used by the most recent forward pass.
    pub alpha_w: f64,
    init_alpha_w: f64,
    pub grad_weight: Vec<S>,
    pub grad_bias: Vec<S>,
    cache_input: Option<Tensor<S>>,
    cache_preact: Option<Tensor<S>>,
    cache_eff_weight: Option<Vec<S>>,
    cache_act_alpha: f64,
}

impl<S: Scalar> ConvBlock<S> {
    pub fn new(conv: Conv2d<S>, bn: Option<BatchNorm<S>>, act: Activation, weight_scheme: WeightScheme, weight_bits: u8) -> Self {
        let init_alpha = crate::quant::weight_dynamic_range(&conv.weight).as_f64();
        let (nw, nb) = (conv.weight.len(), conv.bias.len());
        ConvBlock {
            conv,
            bn,
            act,
            weight_scheme,
            weight_bits,
            binary_alpha_scaling: true,
            act_range: EmaRange::activation(),
            alpha_w: init_alpha,
            init_alpha_w: init_alpha,
            grad_weight: vec![S::zero(); nw],
            grad_bias: vec![S::zero(); nb],
            cache_input: None,
            cache_preact: None,
            cache_eff_weight: None,
            cache_act_alpha: 1.0,
        }
    }

    /// Weights actually used by the forward pass: the quantized image of the
    /// auxiliary weights, or the auxiliary weights themselves when real.
    pub fn effective_weights(&self) -> Vec<S> {
        match self.quantized_weights() {
            Some((w, _)) => w,
            None => self.conv.weight.clone(),
        }
    }

    fn quantized_weights(&self) -> Option<(Vec<S>, f64)> {
        match self.weight_scheme {
            WeightScheme::None => None,
            WeightScheme::BinarySign => {
                let alpha = crate::quant::weight_dynamic_range(&self.conv.weight);
                let scale = if self.binary_alpha_scaling { alpha } else { S::one() };
                let w = self.conv.weight.iter().map(|&w| quantize_binary(w) * scale).collect();
                Some((w, alpha.as_f64()))
            }
            WeightScheme::IntegerDynamic => {
                let alpha = crate::quant::weight_dynamic_range(&self.conv.weight);
                let bits = self.weight_bits;
                let w = self
                    .conv
                    .weight
                    .iter()
                    .map(|&w| quantize_integer_unchecked(w, alpha, bits))
                    .collect();
                Some((w, alpha.as_f64()))
            }
        }
    }

    fn apply_activation(&mut self, preact: Tensor<S>, mode: Mode) -> Tensor<S> {
        match self.act {
            Activation::Linear => preact,
            Activation::Relu => {
                let mut out = preact;
                out.data_mut().iter_mut().for_each(|v| *v = v.max(S::zero()));
                out
            }
            Activation::Sign => {
                let mut out = preact;
                out.data_mut().iter_mut().for_each(|v| *v = quantize_binary(*v));
                out
            }
            Activation::IntegerAct(bits) => {
                if mode == Mode::Train {
                    self.act_range.update(preact.max_abs().as_f64());
                }
                let alpha = S::from_f64(self.act_range.value());
                self.cache_act_alpha = self.act_range.value();
                let mut out = preact;
                out.data_mut()
                    .iter_mut()
                    .for_each(|v| *v = quantize_integer_unchecked(*v, alpha, bits));
                out
            }
        }
    }

    pub fn forward_train(&mut self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let eff = self.quantized_weights();
        let (eff, alpha) = match eff {
            Some((w, a)) => (Some(w), a),
            None => (None, self.alpha_w),
        };
        self.alpha_w = alpha;
        let w = eff.as_deref().unwrap_or(&self.conv.weight);
        let z = conv2d_forward(x, w, &self.conv.bias, self.conv.c_in, self.conv.c_out)?;
        self.cache_input = Some(x.clone());
        self.cache_eff_weight = eff;
        let z = match &mut self.bn {
            Some(bn) => bn.forward_train(&z)?,
            None => z,
        };
        let needs_preact = !matches!(self.act, Activation::Linear);
        if needs_preact {
            self.cache_preact = Some(z.clone());
        } else {
            self.cache_preact = None;
        }
        Ok(self.apply_activation(z, Mode::Train))
    }

    /// Inference path: no caches, no statistics updates; safe on `&self`.
    pub fn forward_eval(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let eff = self.quantized_weights().map(|(w, _)| w);
        let w = eff.as_deref().unwrap_or(&self.conv.weight);
        let z = conv2d_forward(x, w, &self.conv.bias, self.conv.c_in, self.conv.c_out)?;
        let z = match &self.bn {
            Some(bn) => bn.forward_eval(&z)?,
            None => z,
        };
        let mut out = z;
        match self.act {
            Activation::Linear => {}
            Activation::Relu => out.data_mut().iter_mut().for_each(|v| *v = v.max(S::zero())),
            Activation::Sign => out.data_mut().iter_mut().for_each(|v| *v = quantize_binary(*v)),
            Activation::IntegerAct(bits) => {
                let alpha = S::from_f64(self.act_range.value());
                out.data_mut()
                    .iter_mut()
                    .for_each(|v| *v = quantize_integer_unchecked(*v, alpha, bits));
            }
        }
        Ok(out)
    }

    /// Backward through activation, batchnorm and conv; stores weight/bias
    /// (and BN) gradients on the block and returns the input gradient.
    pub fn backward(&mut self, grad_out: &Tensor<S>) -> Result<Tensor<S>> {
        let mut grad = grad_out.clone();
        match self.act {
            Activation::Linear => {}
            Activation::Relu => {
                let pre = self
                    .cache_preact
                    .as_ref()
                    .ok_or_else(|| Error::Usage("relu backward without cached forward".into()))?;
                for (g, &p) in grad.data_mut().iter_mut().zip(pre.data()) {
                    if p <= S::zero() {
                        *g = S::zero();
                    }
                }
            }
            Activation::Sign => {
                let pre = self
                    .cache_preact
                    .as_ref()
                    .ok_or_else(|| Error::Usage("sign backward without cached forward".into()))?;
                for (g, &p) in grad.data_mut().iter_mut().zip(pre.data()) {
                    *g = ste_backward(SteKind::SignAct, *g, p, S::one());
                }
            }
            Activation::IntegerAct(_) => {
                let pre = self
                    .cache_preact
                    .as_ref()
                    .ok_or_else(|| Error::Usage("integer-act backward without cached forward".into()))?;
                let alpha = S::from_f64(self.cache_act_alpha);
                for (g, &p) in grad.data_mut().iter_mut().zip(pre.data()) {
                    *g = ste_backward(SteKind::IntegerAct, *g, p, alpha);
                }
            }
        }
        if let Some(bn) = &mut self.bn {
            grad = bn.backward(&grad)?;
        }
        let input = self
            .cache_input
            .take()
            .ok_or_else(|| Error::Usage("conv backward without cached forward".into()))?;
        let eff = self.cache_eff_weight.take();
        let w = eff.as_deref().unwrap_or(&self.conv.weight);
        let (gin, gw, gb) = conv2d_backward(&input, w, &grad, self.conv.c_in, self.conv.c_out)?;
        // Straight-through: gradients w.r.t. the effective weights land on the
        // auxiliary weights unchanged.
        self.grad_weight = gw;
        self.grad_bias = gb;
        Ok(gin)
    }

    /// Clamp auxiliary weights of quantized layers to four times their
    /// initial dynamic range so alpha stays bounded during training.
    pub fn clip_aux_weights(&mut self) {
        if self.weight_scheme == WeightScheme::None {
            return;
        }
        let bound = S::from_f64(4.0 * self.init_alpha_w);
        if bound <= S::zero() {
            return;
        }
        self.conv.weight.iter_mut().for_each(|w| *w = w.min(bound).max(-bound));
    }
}

/// Input-stage quantizer: when activations are quantized, the input map is
/// the zeroth feature map and is stored at the same bit-width.
#[derive(Debug, Clone)]
pub struct InputQuant {
    pub scheme: ActScheme,
    pub bits: u8,
    pub range: EmaRange,
}

impl InputQuant {
    pub fn new(scheme: ActScheme, bits: u8) -> Self {
        InputQuant { scheme, bits, range: EmaRange::activation() }
    }

    fn apply<S: Scalar>(&mut self, x: &Tensor<S>, mode: Mode) -> Tensor<S> {
        if mode == Mode::Train && self.scheme == ActScheme::IntegerDynamic {
            self.range.update(x.max_abs().as_f64());
        }
        self.apply_eval(x)
    }

    fn apply_eval<S: Scalar>(&self, x: &Tensor<S>) -> Tensor<S> {
        let mut out = x.clone();
        match self.scheme {
            ActScheme::None => {}
            ActScheme::BinarySign => {
                out.data_mut().iter_mut().for_each(|v| *v = quantize_binary(*v));
            }
            ActScheme::IntegerDynamic => {
                let alpha = S::from_f64(self.range.value());
                let bits = self.bits;
                out.data_mut()
                    .iter_mut()
                    .for_each(|v| *v = quantize_integer_unchecked(*v, alpha, bits));
            }
        }
        out
    }
}

/// A full denoiser: input quantizer (optional) plus conv blocks. Input and
/// output both carry two channels (real/imaginary planes); the output layer
/// is linear with no batchnorm.
#[derive(Debug, Clone)]
pub struct DenoiserModel<S> {
    pub blocks: Vec<ConvBlock<S>>,
    pub input_quant: Option<InputQuant>,
    pub label: String,
}

pub const IO_CHANNELS: usize = 2;

impl<S: Scalar> DenoiserModel<S> {
    /// Assemble a model from explicit blocks, enforcing the 2-in/2-out
    /// contract and the linear, batchnorm-free output layer.
    pub fn from_blocks(blocks: Vec<ConvBlock<S>>, input_quant: Option<InputQuant>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::Config("model needs at least one layer".into()));
        }
        if blocks[0].conv.c_in != IO_CHANNELS {
            return Err(Error::Config(format!(
                "first layer must take {IO_CHANNELS} channels, got {}",
                blocks[0].conv.c_in
            )));
        }
        let last = blocks.last().unwrap();
        if last.conv.c_out != IO_CHANNELS {
            return Err(Error::Config(format!(
                "last layer must emit {IO_CHANNELS} channels, got {}",
                last.conv.c_out
            )));
        }
        if last.act != Activation::Linear || last.bn.is_some() {
            return Err(Error::Config("output layer must be linear with no batchnorm".into()));
        }
        for pair in blocks.windows(2) {
            if pair[0].conv.c_out != pair[1].conv.c_in {
                return Err(Error::Config(format!(
                    "channel mismatch between layers: {} -> {}",
                    pair[0].conv.c_out, pair[1].conv.c_in
                )));
            }
        }
        Ok(DenoiserModel { blocks, input_quant, label: String::new() })
    }

    pub fn forward(&mut self, x: &Tensor<S>, mode: Mode) -> Result<Tensor<S>> {
        match mode {
            Mode::Train => self.forward_train(x),
            Mode::Eval => self.forward_eval(x),
        }
    }

    pub fn forward_train(&mut self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let mut cur = match &mut self.input_quant {
            Some(iq) => iq.apply(x, Mode::Train),
            None => x.clone(),
        };
        for block in &mut self.blocks {
            cur = block.forward_train(&cur)?;
        }
        cur.check_finite("model forward")?;
        Ok(cur)
    }

    /// Inference on an immutable model; statistics stay frozen.
    pub fn forward_eval(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        let mut cur = match &self.input_quant {
            Some(iq) => iq.apply_eval(x),
            None => x.clone(),
        };
        for block in &self.blocks {
            cur = block.forward_eval(&cur)?;
        }
        cur.check_finite("model forward")?;
        Ok(cur)
    }

    /// Backpropagate the loss gradient; per-layer gradients are stored on the
    /// blocks. Returns the gradient w.r.t. the (possibly quantized) input.
    pub fn backward(&mut self, grad_output: &Tensor<S>) -> Result<Tensor<S>> {
        let mut grad = grad_output.clone();
        for block in self.blocks.iter_mut().rev() {
            grad = block.backward(&grad)?;
        }
        Ok(grad)
    }

    /// One Adam update over all parameters (aux weights, biases, BN affine),
    /// followed by the auxiliary-weight clamp on quantized layers.
    pub fn adam_step(&mut self, state: &mut AdamState<S>, cfg: &AdamConfig) {
        state.begin_step();
        let mut group = 0;
        for block in &mut self.blocks {
            let ConvBlock { conv, bn, grad_weight, grad_bias, .. } = block;
            state.update(group, &mut conv.weight, grad_weight, cfg);
            group += 1;
            state.update(group, &mut conv.bias, grad_bias, cfg);
            group += 1;
            if let Some(bn) = bn {
                state.update(group, &mut bn.gamma, &bn.grad_gamma, cfg);
                group += 1;
                state.update(group, &mut bn.beta, &bn.grad_beta, cfg);
                group += 1;
            }
        }
        for block in &mut self.blocks {
            block.clip_aux_weights();
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| {
                b.conv.weight.len()
                    + b.conv.bias.len()
                    + b.bn.as_ref().map_or(0, |bn| bn.gamma.len() + bn.beta.len())
            })
            .sum()
    }
}

/// Mean squared error over all tensor elements. Non-finite inputs trip a
/// numerics error so diverged runs surface instead of propagating NaN.
pub fn mse_loss<S: Scalar>(pred: &Tensor<S>, target: &Tensor<S>) -> Result<S> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "mse shapes differ: {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = S::from_f64(pred.numel() as f64);
    let loss = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum::<S>()
        / n;
    if !loss.is_finite() {
        return Err(Error::Numerics("non-finite training loss".into()));
    }
    Ok(loss)
}

/// Gradient of [`mse_loss`] w.r.t. the prediction: 2 (pred - target) / numel.
pub fn mse_grad<S: Scalar>(pred: &Tensor<S>, target: &Tensor<S>) -> Result<Tensor<S>> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape("mse shapes differ".into()));
    }
    let scale = S::from_f64(2.0 / pred.numel() as f64);
    let mut g = Tensor::zeros(pred.shape());
    for ((gv, &p), &t) in g.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        *gv = scale * (p - t);
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn identity_block() -> ConvBlock<f64> {
        let mut conv = Conv2d::<f64>::zeros(2, 2);
        // Center taps on the diagonal channel pairs.
        for c in 0..2 {
            conv.weight[((c * 2 + c) * 3 + 1) * 3 + 1] = 1.0;
        }
        ConvBlock::new(conv, None, Activation::Linear, WeightScheme::None, 32)
    }

    #[test]
    fn degenerate_identity_model_passes_input() {
        let mut model = DenoiserModel::from_blocks(vec![identity_block()], None).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut x = Tensor::<f64>::zeros([1, 2, 6, 6]);
        x.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        let y = model.forward(&x, Mode::Eval).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn zero_model_outputs_zero_and_mse_is_target_power() {
        let blocks = vec![
            ConvBlock::new(Conv2d::<f64>::zeros(2, 4), None, Activation::Relu, WeightScheme::None, 32),
            ConvBlock::new(Conv2d::<f64>::zeros(4, 2), None, Activation::Linear, WeightScheme::None, 32),
        ];
        let mut model = DenoiserModel::from_blocks(blocks, None).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let mut target = Tensor::<f64>::zeros([1, 2, 8, 8]);
        target.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        let x = target.clone();
        let y = model.forward(&x, Mode::Eval).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
        let loss = mse_loss(&y, &target).unwrap();
        let expect = target.data().iter().map(|v| v * v).sum::<f64>() / target.numel() as f64;
        assert!((loss - expect).abs() < 1e-12);
    }

    #[test]
    fn contract_violations_are_config_errors() {
        // Wrong input channels.
        let b = ConvBlock::new(Conv2d::<f64>::zeros(3, 2), None, Activation::Linear, WeightScheme::None, 32);
        assert!(DenoiserModel::from_blocks(vec![b], None).is_err());
        // Output layer with ReLU.
        let b = ConvBlock::new(Conv2d::<f64>::zeros(2, 2), None, Activation::Relu, WeightScheme::None, 32);
        assert!(DenoiserModel::from_blocks(vec![b], None).is_err());
        // Channel mismatch between layers.
        let b1 = ConvBlock::new(Conv2d::<f64>::zeros(2, 4), None, Activation::Relu, WeightScheme::None, 32);
        let b2 = ConvBlock::new(Conv2d::<f64>::zeros(8, 2), None, Activation::Linear, WeightScheme::None, 32);
        assert!(DenoiserModel::from_blocks(vec![b1, b2], None).is_err());
    }

    #[test]
    fn mse_of_identical_tensors_is_zero() {
        let x = Tensor::<f64>::from_vec([1, 1, 2, 2], vec![1.0, -2.0, 3.0, 0.5]).unwrap();
        assert_eq!(mse_loss(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn backward_without_forward_is_a_usage_error() {
        let mut model = DenoiserModel::from_blocks(vec![identity_block()], None).unwrap();
        let g = Tensor::<f64>::zeros([1, 2, 4, 4]);
        assert!(matches!(model.backward(&g), Err(Error::Usage(_))));
    }

    #[test]
    fn relu_output_is_nonnegative() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let conv = Conv2d::<f64>::init(2, 4, &mut rng);
        let mut block = ConvBlock::new(conv, None, Activation::Relu, WeightScheme::None, 32);
        let mut x = Tensor::<f64>::zeros([2, 2, 8, 8]);
        x.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        let y = block.forward_train(&x).unwrap();
        assert!(y.data().iter().all(|&v| v >= 0.0));
    }
}
