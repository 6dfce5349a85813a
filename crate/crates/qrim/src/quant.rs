//! Quantization-aware training primitives: quantizer functions, per-layer
//! dynamic ranges, straight-through gradient surrogates, bit packing, and the
//! model configurations (channel schedules) they apply to.
//!
//! Weights are quantized against a per-layer dynamic range `alpha`
//! (`w_q = Q(w / alpha) * alpha`), recomputed from the real-valued auxiliary
//! weights at every forward pass. Activations use an exponential moving
//! average of per-batch maxima that is frozen at evaluation time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::tensor::Scalar;

/// Quantization scheme applied to layer weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WeightScheme {
    /// Real-valued weights (32-bit).
    None,
    /// Sign binarization, scaled by the per-layer dynamic range.
    BinarySign,
    /// Symmetric integer codebook with dynamic-range scaling.
    IntegerDynamic,
}

/// Quantization scheme applied to activations (feature maps).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActScheme {
    /// Real-valued activations; hidden layers use ReLU.
    None,
    /// Sign activation producing feature maps in {-1, +1}.
    BinarySign,
    /// Integer quantization of the pre-activation against an EMA range.
    IntegerDynamic,
}

/// Bit-widths and schemes for one model. Schemes are fully determined by the
/// bit-width: 32 disables quantization, 1 selects sign binarization, and
/// 2/4/6/8 select the symmetric integer codebook.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuantSpec {
    pub weight_bits: u8,
    pub act_bits: u8,
    pub weight_scheme: WeightScheme,
    pub act_scheme: ActScheme,
}

const ALLOWED_BITS: [u8; 6] = [1, 2, 4, 6, 8, 32];

fn weight_scheme_for(bits: u8) -> Result<WeightScheme> {
    if !ALLOWED_BITS.contains(&bits) {
        return Err(Error::Config(format!(
            "unsupported bit-width {bits}; expected one of {ALLOWED_BITS:?}"
        )));
    }
    Ok(match bits {
        32 => WeightScheme::None,
        1 => WeightScheme::BinarySign,
        _ => WeightScheme::IntegerDynamic,
    })
}

impl QuantSpec {
    /// Spec with distinct weight/activation bit-widths.
    pub fn from_bits(weight_bits: u8, act_bits: u8) -> Result<Self> {
        let weight_scheme = weight_scheme_for(weight_bits)?;
        let act_scheme = match weight_scheme_for(act_bits)? {
            WeightScheme::None => ActScheme::None,
            WeightScheme::BinarySign => ActScheme::BinarySign,
            WeightScheme::IntegerDynamic => ActScheme::IntegerDynamic,
        };
        Ok(QuantSpec { weight_bits, act_bits, weight_scheme, act_scheme })
    }

    /// Real-valued model (no quantization anywhere).
    pub fn real() -> Self {
        Self::from_bits(32, 32).unwrap()
    }

    /// Same bit-width for weights and activations.
    pub fn uniform(bits: u8) -> Result<Self> {
        Self::from_bits(bits, bits)
    }

    pub fn is_real(&self) -> bool {
        self.weight_scheme == WeightScheme::None && self.act_scheme == ActScheme::None
    }

    /// Compact tag used in file names and CSV rows, e.g. `w8a8`.
    pub fn tag(&self) -> String {
        format!("w{}a{}", self.weight_bits, self.act_bits)
    }
}

/// Channel layout family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arch {
    /// Constant channel count in every hidden layer.
    A,
    /// Bottleneck: channel count halves per layer (floored at min(8, C/2)).
    B,
}

/// A denoiser model configuration: L conv layers, a maximum channel count C,
/// the channel layout, and the quantization spec. Input and output are always
/// two channels (real/imaginary planes).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelConfig {
    pub layers: usize,
    pub channels: usize,
    pub arch: Arch,
    pub quant: QuantSpec,
}

pub const IO_CHANNELS: usize = 2;

impl ModelConfig {
    pub fn new(layers: usize, channels: usize, arch: Arch, quant: QuantSpec) -> Result<Self> {
        let cfg = ModelConfig { layers, channels, arch, quant };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse a structural name like `L3-C16-B` (underscores also accepted).
    pub fn from_name(name: &str, quant: QuantSpec) -> Result<Self> {
        let norm = name.trim().replace('_', "-");
        let parts: Vec<&str> = norm.split('-').collect();
        let bad = || Error::Config(format!("cannot parse model name '{name}' (expected e.g. L3-C16-B)"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let layers: usize = parts[0].strip_prefix('L').ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let channels: usize = parts[1].strip_prefix('C').ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let arch = match parts[2] {
            "A" | "a" => Arch::A,
            "B" | "b" => Arch::B,
            _ => return Err(bad()),
        };
        Self::new(layers, channels, arch, quant)
    }

    /// Structural name, e.g. `L3-C16-B`.
    pub fn name(&self) -> String {
        let arch = match self.arch {
            Arch::A => "A",
            Arch::B => "B",
        };
        format!("L{}-C{}-{}", self.layers, self.channels, arch)
    }

    fn validate(&self) -> Result<()> {
        if self.layers < 2 {
            return Err(Error::Config(format!("need at least 2 layers, got {}", self.layers)));
        }
        let min_c = match self.arch {
            Arch::A => 2,
            Arch::B => 4,
        };
        if self.channels < min_c {
            return Err(Error::Config(format!(
                "arch {:?} needs at least {min_c} channels, got {}",
                self.arch, self.channels
            )));
        }
        Ok(())
    }
}

/// Output channel count per layer, e.g. `[16, 8, 2]` for L3-C16-B.
///
/// Arch A keeps C channels in every hidden layer; arch B halves per layer
/// with a floor of min(8, C/2). The last layer always has two channels.
pub fn channel_counts(config: &ModelConfig) -> Result<Vec<usize>> {
    config.validate()?;
    let mut out = Vec::with_capacity(config.layers);
    match config.arch {
        Arch::A => {
            for _ in 0..config.layers - 1 {
                out.push(config.channels);
            }
        }
        Arch::B => {
            let floor = (config.channels / 2).min(8);
            for i in 0..config.layers - 1 {
                out.push((config.channels >> i).max(floor));
            }
        }
    }
    out.push(IO_CHANNELS);
    Ok(out)
}

/// Per-layer `(c_in, c_out)` pairs, starting from the two-channel input.
pub fn channel_schedule(config: &ModelConfig) -> Result<Vec<(usize, usize)>> {
    let counts = channel_counts(config)?;
    let mut schedule = Vec::with_capacity(counts.len());
    let mut c_in = IO_CHANNELS;
    for &c_out in &counts {
        schedule.push((c_in, c_out));
        c_in = c_out;
    }
    Ok(schedule)
}

// ---------------------------------------------------------------------------
// Quantizer functions
// ---------------------------------------------------------------------------

/// Sign binarization with Q_B(0) = +1.
pub fn quantize_binary<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one()
    } else {
        -S::one()
    }
}

/// Number of codebook levels per side for a symmetric integer codebook:
/// q = 2^(b-1) - 1.
pub fn integer_levels(bits: u8) -> i64 {
    (1i64 << (bits - 1)) - 1
}

/// Symmetric integer quantization with dynamic-range scaling:
/// `clamp(round(x/alpha * q), -q, q) * alpha / q` with q = 2^(b-1) - 1.
/// Ties round half away from zero.
pub fn quantize_integer<S: Scalar>(x: S, alpha: S, bits: u8) -> Result<S> {
    if alpha <= S::zero() {
        return Err(Error::Config(format!("dynamic range must be positive, got {alpha}")));
    }
    if !(2..=8).contains(&bits) {
        return Err(Error::Config(format!("integer quantization needs 2..=8 bits, got {bits}")));
    }
    Ok(quantize_integer_unchecked(x, alpha, bits))
}

#[inline]
pub(crate) fn quantize_integer_unchecked<S: Scalar>(x: S, alpha: S, bits: u8) -> S {
    let q = S::from_f64(integer_levels(bits) as f64);
    let code = (x / alpha * q).round().max(-q).min(q);
    code * alpha / q
}

/// Integer code in [-q, q] for packing; same rounding as [`quantize_integer`].
#[inline]
pub(crate) fn integer_code<S: Scalar>(x: S, alpha: S, bits: u8) -> i64 {
    let q = integer_levels(bits);
    let qs = S::from_f64(q as f64);
    let code = (x / alpha * qs).round().max(-qs).min(qs);
    code.as_f64() as i64
}

/// Per-layer dynamic range for weights: the maximum absolute value over the
/// real-valued auxiliary weights, with a fallback of 1.0 for all-zero layers.
pub fn weight_dynamic_range<S: Scalar>(weights: &[S]) -> S {
    let max = weights.iter().fold(S::zero(), |acc, &w| acc.max(w.abs()));
    if max > S::zero() {
        max
    } else {
        log::warn!("all-zero weights; dynamic range falls back to 1.0");
        S::one()
    }
}

/// Exponential moving average of per-batch activation maxima. The first
/// observation seeds the average; updates apply `decay * ema + (1-decay) * x`.
/// Frozen (not updated) at evaluation time by simply not calling `update`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmaRange {
    decay: f64,
    value: Option<f64>,
}

impl EmaRange {
    pub fn new(decay: f64) -> Self {
        EmaRange { decay, value: None }
    }

    /// Default activation-range tracker (decay 0.9).
    pub fn activation() -> Self {
        Self::new(0.9)
    }

    /// Fold one batch maximum into the average. Non-positive maxima are
    /// ignored so a degenerate batch cannot zero out the range.
    pub fn update(&mut self, batch_max: f64) {
        if !(batch_max > 0.0) {
            return;
        }
        self.value = Some(match self.value {
            None => batch_max,
            Some(v) => self.decay * v + (1.0 - self.decay) * batch_max,
        });
    }

    /// Current range; 1.0 until the first positive observation.
    pub fn value(&self) -> f64 {
        self.value.unwrap_or(1.0)
    }

    pub fn set(&mut self, value: f64) {
        self.value = if value > 0.0 { Some(value) } else { None };
    }
}

// ---------------------------------------------------------------------------
// Straight-through gradient surrogates
// ---------------------------------------------------------------------------

/// Which quantization function a gradient passes through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SteKind {
    /// Weight quantizer: identity surrogate.
    WeightQuant,
    /// Sign activation: tanh surrogate.
    SignAct,
    /// Integer activation: clipped identity on [-alpha, alpha].
    IntegerAct,
}

/// Backward surrogate for a quantization function. `preact` is the cached
/// real-valued input of the quantizer; `alpha` is the dynamic range (only
/// used by the integer kind).
#[inline]
pub fn ste_backward<S: Scalar>(kind: SteKind, upstream: S, preact: S, alpha: S) -> S {
    match kind {
        SteKind::WeightQuant => upstream,
        SteKind::SignAct => {
            let t = preact.tanh();
            upstream * (S::one() - t * t)
        }
        SteKind::IntegerAct => {
            if preact.abs() <= alpha {
                upstream
            } else {
                S::zero()
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Model builder
// ---------------------------------------------------------------------------

/// Build a quantization-aware denoiser from a configuration.
///
/// Layer layout: layer 1 is Conv + activation, layers 2..L-1 are
/// Conv + BatchNorm + activation, and the output layer is a plain linear
/// Conv. Hidden activations are ReLU for real models and the quantized
/// activation otherwise; with quantized activations the input map is
/// quantized as feature map 0. Initialization is seeded and Kaiming-style.
pub fn build_model<S: Scalar>(config: &ModelConfig, seed: u64) -> Result<crate::nn::DenoiserModel<S>> {
    use crate::nn::{Activation, BatchNorm, Conv2d, ConvBlock, DenoiserModel, InputQuant};
    use crate::resource::layer_has_batchnorm;
    use rand::SeedableRng;

    let schedule = channel_schedule(config)?;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let layers = schedule.len();
    let hidden_act = match config.quant.act_scheme {
        ActScheme::None => Activation::Relu,
        ActScheme::BinarySign => Activation::Sign,
        ActScheme::IntegerDynamic => Activation::IntegerAct(config.quant.act_bits),
    };
    let mut blocks = Vec::with_capacity(layers);
    for (idx, &(c_in, c_out)) in schedule.iter().enumerate() {
        let conv = Conv2d::<S>::init(c_in, c_out, &mut rng);
        let last = idx + 1 == layers;
        let bn = if layer_has_batchnorm(idx, layers) { Some(BatchNorm::new(c_out)) } else { None };
        let act = if last { Activation::Linear } else { hidden_act };
        blocks.push(ConvBlock::new(conv, bn, act, config.quant.weight_scheme, config.quant.weight_bits));
    }
    let input_quant = match config.quant.act_scheme {
        ActScheme::None => None,
        s => Some(InputQuant::new(s, config.quant.act_bits)),
    };
    let mut model = DenoiserModel::from_blocks(blocks, input_quant)?;
    model.label = format!("{}_{}", config.name(), config.quant.tag());
    Ok(model)
}

// ---------------------------------------------------------------------------
// Bit packing (little-endian bit order)
// ---------------------------------------------------------------------------

/// Pack unsigned values of `bits` bits each, LSB-first: value `i` occupies
/// stream bits `[i*bits, (i+1)*bits)`, and stream bit `j` is bit `j % 8` of
/// byte `j / 8`.
pub fn pack_bits(values: &[u32], bits: u8) -> Vec<u8> {
    assert!((1..=8).contains(&bits), "pack_bits supports 1..=8 bits");
    let total_bits = values.len() * bits as usize;
    let mut out = vec![0u8; (total_bits + 7) / 8];
    let mut pos = 0usize;
    for &v in values {
        debug_assert!(bits == 8 || v < (1u32 << bits), "value {v} out of range for {bits} bits");
        for b in 0..bits as usize {
            if (v >> b) & 1 == 1 {
                out[(pos + b) / 8] |= 1 << ((pos + b) % 8);
            }
        }
        pos += bits as usize;
    }
    out
}

/// Inverse of [`pack_bits`].
pub fn unpack_bits(bytes: &[u8], bits: u8, count: usize) -> Result<Vec<u32>> {
    assert!((1..=8).contains(&bits), "unpack_bits supports 1..=8 bits");
    let needed = (count * bits as usize + 7) / 8;
    if bytes.len() < needed {
        return Err(Error::Dataset(format!(
            "packed stream too short: need {needed} bytes for {count} x {bits}-bit values, got {}",
            bytes.len()
        )));
    }
    let mut out = Vec::with_capacity(count);
    let mut pos = 0usize;
    for _ in 0..count {
        let mut v = 0u32;
        for b in 0..bits as usize {
            if (bytes[(pos + b) / 8] >> ((pos + b) % 8)) & 1 == 1 {
                v |= 1 << b;
            }
        }
        out.push(v);
        pos += bits as usize;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sign_of_zero_is_positive() {
        assert_eq!(quantize_binary(0.0f64), 1.0);
        assert_eq!(quantize_binary(-0.3f64), -1.0);
        assert_eq!(quantize_binary(7.2f64), 1.0);
    }

    #[test]
    fn integer_quantizer_scalar_values() {
        // x = 0 maps to 0 for any alpha/bits.
        assert_eq!(quantize_integer(0.0f64, 3.0, 4).unwrap(), 0.0);
        // Endpoint maps to the top level exactly.
        assert_eq!(quantize_integer(1.0f64, 1.0, 8).unwrap(), 1.0);
        // Half-away-from-zero ties: 0.5 * 127 = 63.5 rounds to 64.
        let v = quantize_integer(0.5f64, 1.0, 8).unwrap();
        assert!((v - 64.0 / 127.0).abs() < 1e-15, "got {v}");
    }

    #[test]
    fn integer_quantizer_rejects_bad_inputs() {
        assert!(matches!(quantize_integer(0.1f64, 0.0, 4), Err(Error::Config(_))));
        assert!(matches!(quantize_integer(0.1f64, -1.0, 4), Err(Error::Config(_))));
        assert!(matches!(quantize_integer(0.1f64, 1.0, 9), Err(Error::Config(_))));
    }

    #[test]
    fn weight_range_is_max_abs_with_fallback() {
        assert_eq!(weight_dynamic_range(&[-3.0f64, 0.5, 2.0]), 3.0);
        assert_eq!(weight_dynamic_range(&[0.25f64, 0.25, 0.25]), 0.25);
        assert_eq!(weight_dynamic_range(&[0.0f64, 0.0]), 1.0);
    }

    #[test]
    fn ema_follows_stated_recurrence() {
        // Batch maxima [1, 2, 2] with decay 0.9 seeded at the first value:
        // 0.9 * (0.9 * 1 + 0.1 * 2) + 0.1 * 2 = 1.19
        let mut ema = EmaRange::new(0.9);
        for x in [1.0, 2.0, 2.0] {
            ema.update(x);
        }
        assert!((ema.value() - 1.19).abs() < 1e-12, "got {}", ema.value());
    }

    #[test]
    fn ema_ignores_nonpositive_and_falls_back_to_one() {
        let mut ema = EmaRange::new(0.9);
        assert_eq!(ema.value(), 1.0);
        ema.update(0.0);
        assert_eq!(ema.value(), 1.0);
        ema.update(2.0);
        assert_eq!(ema.value(), 2.0);
    }

    #[test]
    fn ste_surrogates_match_closed_forms() {
        assert_eq!(ste_backward(SteKind::WeightQuant, 0.7f64, 123.0, 1.0), 0.7);
        // tanh'(0) = 1
        assert_eq!(ste_backward(SteKind::SignAct, 1.0f64, 0.0, 1.0), 1.0);
        let p = 0.8f64;
        let expect = 1.0 - p.tanh().powi(2);
        assert!((ste_backward(SteKind::SignAct, 1.0, p, 1.0) - expect).abs() < 1e-15);
        // Clipped identity: inside passes, outside blocks.
        let a = 0.7f64;
        assert_eq!(ste_backward(SteKind::IntegerAct, 1.0f64, 0.5 * a, a), 1.0);
        assert_eq!(ste_backward(SteKind::IntegerAct, 1.0f64, 2.0 * a, a), 0.0);
        assert_eq!(ste_backward(SteKind::IntegerAct, 1.0f64, a, a), 1.0);
    }

    #[test]
    fn schedule_matches_reference_shapes() {
        let real = QuantSpec::real();
        let c = |l, ch, arch| ModelConfig::new(l, ch, arch, real).unwrap();
        assert_eq!(channel_counts(&c(3, 32, Arch::A)).unwrap(), vec![32, 32, 2]);
        assert_eq!(channel_counts(&c(3, 32, Arch::B)).unwrap(), vec![32, 16, 2]);
        assert_eq!(
            channel_counts(&c(7, 256, Arch::B)).unwrap(),
            vec![256, 128, 64, 32, 16, 8, 2]
        );
        // Halving floors at min(8, C/2).
        assert_eq!(
            channel_counts(&c(7, 32, Arch::B)).unwrap(),
            vec![32, 16, 8, 8, 8, 8, 2]
        );
        assert_eq!(channel_counts(&c(3, 8, Arch::B)).unwrap(), vec![8, 4, 2]);
        assert_eq!(
            channel_schedule(&c(3, 16, Arch::B)).unwrap(),
            vec![(2, 16), (16, 8), (8, 2)]
        );
    }

    #[test]
    fn config_validation_and_names() {
        let real = QuantSpec::real();
        assert!(ModelConfig::new(1, 16, Arch::A, real).is_err());
        assert!(ModelConfig::new(3, 2, Arch::B, real).is_err());
        let cfg = ModelConfig::from_name("L3-C16-B", real).unwrap();
        assert_eq!(cfg.name(), "L3-C16-B");
        assert_eq!((cfg.layers, cfg.channels, cfg.arch), (3, 16, Arch::B));
        assert!(ModelConfig::from_name("L3C16B", real).is_err());
        assert_eq!(ModelConfig::from_name("L7_C256_B", real).unwrap().name(), "L7-C256-B");
    }

    #[test]
    fn quant_spec_scheme_follows_bits() {
        let s = QuantSpec::uniform(1).unwrap();
        assert_eq!(s.weight_scheme, WeightScheme::BinarySign);
        assert_eq!(s.act_scheme, ActScheme::BinarySign);
        let s = QuantSpec::uniform(8).unwrap();
        assert_eq!(s.weight_scheme, WeightScheme::IntegerDynamic);
        let s = QuantSpec::uniform(32).unwrap();
        assert!(s.is_real());
        assert!(QuantSpec::uniform(3).is_err());
        assert_eq!(QuantSpec::from_bits(1, 8).unwrap().tag(), "w1a8");
    }

    proptest! {
        #[test]
        fn integer_quantizer_is_monotone(xs in proptest::collection::vec(-4.0f64..4.0, 2..40),
                                         alpha in 0.1f64..5.0,
                                         bits in 2u8..=8) {
            let mut sorted = xs.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let q: Vec<f64> = sorted.iter().map(|&x| quantize_integer(x, alpha, bits).unwrap()).collect();
            for w in q.windows(2) {
                prop_assert!(w[1] >= w[0]);
            }
        }

        #[test]
        fn integer_quantizer_error_bound(x in -1.0f64..1.0, alpha in 0.1f64..5.0, bits in 2u8..=8) {
            let scaled = x * alpha; // |scaled| <= alpha
            let q = quantize_integer(scaled, alpha, bits).unwrap();
            let bound = alpha / (2.0 * integer_levels(bits) as f64);
            prop_assert!((q - scaled).abs() <= bound * (1.0 + 1e-12));
        }

        #[test]
        fn integer_codebook_cardinality(alpha in 0.1f64..5.0, bits in 2u8..=8) {
            let mut values: Vec<i64> = (-2000..2000)
                .map(|i| integer_code(i as f64 * 0.005 * alpha, alpha, bits))
                .collect();
            values.sort_unstable();
            values.dedup();
            prop_assert!(values.len() as i64 <= (1i64 << bits) - 1);
        }

        #[test]
        fn packing_round_trips(values in proptest::collection::vec(0u32..256, 0..200), bits in 1u8..=8) {
            let mask = if bits == 8 { 0xffu32 } else { (1u32 << bits) - 1 };
            let vals: Vec<u32> = values.iter().map(|v| v & mask).collect();
            let packed = pack_bits(&vals, bits);
            prop_assert_eq!(packed.len(), (vals.len() * bits as usize + 7) / 8);
            let back = unpack_bits(&packed, bits, vals.len()).unwrap();
            prop_assert_eq!(back, vals);
        }
    }

    #[test]
    fn builder_respects_quant_spec() {
        use crate::nn::{Activation, Mode, Tensor};
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(2);
        let mut x = Tensor::<f64>::zeros([2, 2, 8, 8]);
        x.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));

        // 32/32 forward is identical to the real model with the same seed.
        let real_cfg = ModelConfig::from_name("L3-C8-B", QuantSpec::real()).unwrap();
        let mut real = build_model::<f64>(&real_cfg, 42).unwrap();
        let mut real2 = build_model::<f64>(&real_cfg, 42).unwrap();
        let a = real.forward(&x, Mode::Train).unwrap();
        let b = real2.forward(&x, Mode::Train).unwrap();
        assert_eq!(a.data(), b.data());
        assert!(real.input_quant.is_none());
        assert_eq!(real.blocks[0].act, Activation::Relu);
        assert!(real.blocks[0].bn.is_none(), "first layer carries no batchnorm");
        assert!(real.blocks[1].bn.is_some());
        assert!(real.blocks[2].bn.is_none());
        assert_eq!(real.blocks[2].act, Activation::Linear);

        // Binary weights: every effective weight is +-alpha.
        let bin_cfg = ModelConfig::from_name("L3-C8-B", QuantSpec::from_bits(1, 32).unwrap()).unwrap();
        let bin = build_model::<f64>(&bin_cfg, 42).unwrap();
        for block in &bin.blocks {
            let alpha = weight_dynamic_range(&block.conv.weight);
            for w in block.effective_weights() {
                assert!(w == alpha || w == -alpha, "effective weight {w} not +-{alpha}");
            }
        }

        // Sign activations: every hidden feature-map value is +-1.
        let sign_cfg = ModelConfig::from_name("L3-C8-B", QuantSpec::from_bits(32, 1).unwrap()).unwrap();
        let mut sign = build_model::<f64>(&sign_cfg, 42).unwrap();
        assert!(sign.input_quant.is_some());
        let y0 = sign.blocks[0].forward_train(&x).unwrap();
        assert!(y0.data().iter().all(|&v| v == 1.0 || v == -1.0));
        let y = sign.forward(&x, Mode::Train).unwrap();
        assert_eq!(y.shape(), x.shape());
    }

    #[test]
    fn qat_training_with_zero_lr_keeps_aux_weights() {
        use crate::nn::{fit, Mode, PatchSet, Tensor, TrainConfig};
        use rand::{Rng, SeedableRng};
        let cfg = ModelConfig::from_name("L3-C8-B", QuantSpec::uniform(8).unwrap()).unwrap();
        let mut model = build_model::<f64>(&cfg, 5).unwrap();
        let w0: Vec<Vec<f64>> = model.blocks.iter().map(|b| b.conv.weight.clone()).collect();

        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(8);
        let mut set = PatchSet::new(8, 8);
        for _ in 0..8 {
            let t: Vec<f64> = (0..128).map(|_| rng.gen_range(-0.5..0.5)).collect();
            set.inputs.push(t.clone());
            set.targets.push(t);
            set.scales.push(1.0);
        }
        let tc = TrainConfig { lr: 0.0, batch: 4, max_epochs: 2, patience: 4, seed: 1 };
        fit(&mut model, &set, &set, &tc).unwrap();
        for (blk, w) in model.blocks.iter().zip(&w0) {
            assert_eq!(&blk.conv.weight, w);
        }
        // And the 32-bit QAT forward equals the real forward bit for bit.
        let real = build_model::<f64>(
            &ModelConfig::from_name("L3-C8-B", QuantSpec::real()).unwrap(),
            5,
        )
        .unwrap();
        let quant32 = build_model::<f64>(
            &ModelConfig::from_name("L3-C8-B", QuantSpec::uniform(32).unwrap()).unwrap(),
            5,
        )
        .unwrap();
        let mut x = Tensor::<f64>::zeros([1, 2, 8, 8]);
        x.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        let a = real.forward_eval(&x).unwrap();
        let mut q = quant32;
        let b = q.forward(&x, Mode::Eval).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn packing_bit_order_is_lsb_first() {
        // Two 4-bit values 0x3, 0xA -> byte 0xA3.
        assert_eq!(pack_bits(&[0x3, 0xA], 4), vec![0xA3]);
        // 6-bit values crossing a byte boundary: 0b000001, 0b000010
        // stream bits: 1,0,0,0,0,0 | 0,1,0,0,0,0 -> byte0 = 0b10000001, byte1 = 0b0000.
        assert_eq!(pack_bits(&[1, 2], 6), vec![0b1000_0001, 0b0000_0000]);
    }
}
