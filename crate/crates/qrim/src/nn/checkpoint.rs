//! Checkpoint serialization (`QRIM` format, version 1, little-endian).
//!
//! Layout: magic `QRIM`, u16 version, input-quantizer record, u16 layer
//! count, then per layer: channel counts, activation tag + bits + range,
//! weight scheme + bits + dynamic range, optional BatchNorm parameters, the
//! bias vector, the auxiliary weights as 32-bit floats, and, for quantized
//! layers, the packed discrete codes (little-endian bit order). Packed codes
//! are the deployment payload; the auxiliary weights make the round trip
//! bit-exact for training-resolution inference.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::batchnorm::BatchNorm;
use crate::nn::conv::Conv2d;
use crate::nn::model::{Activation, ConvBlock, DenoiserModel, InputQuant};
use crate::nn::tensor::Scalar;
use crate::quant::{integer_code, integer_levels, pack_bits, ActScheme, WeightScheme};

pub const MAGIC: &[u8; 4] = b"QRIM";
pub const VERSION: u16 = 1;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f32_slice<S: Scalar>(&mut self, vs: &[S]) {
        for &v in vs {
            self.f32(v.as_f64() as f32);
        }
    }
    fn bytes(&mut self, vs: &[u8]) {
        self.buf.extend_from_slice(vs);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Dataset("checkpoint truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f32_vec<S: Scalar>(&mut self, n: usize) -> Result<Vec<S>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(S::from_f64(self.f32()? as f64));
        }
        Ok(out)
    }
}

fn act_tag(act: Activation) -> (u8, u8) {
    match act {
        Activation::Relu => (0, 32),
        Activation::Sign => (1, 1),
        Activation::Linear => (2, 32),
        Activation::IntegerAct(b) => (3, b),
    }
}

fn act_from_tag(tag: u8, bits: u8) -> Result<Activation> {
    Ok(match tag {
        0 => Activation::Relu,
        1 => Activation::Sign,
        2 => Activation::Linear,
        3 => Activation::IntegerAct(bits),
        _ => return Err(Error::Dataset(format!("unknown activation tag {tag}"))),
    })
}

fn weight_scheme_tag(s: WeightScheme) -> u8 {
    match s {
        WeightScheme::None => 0,
        WeightScheme::BinarySign => 1,
        WeightScheme::IntegerDynamic => 2,
    }
}

fn weight_scheme_from_tag(tag: u8) -> Result<WeightScheme> {
    Ok(match tag {
        0 => WeightScheme::None,
        1 => WeightScheme::BinarySign,
        2 => WeightScheme::IntegerDynamic,
        _ => return Err(Error::Dataset(format!("unknown weight scheme tag {tag}"))),
    })
}

fn act_scheme_tag(s: ActScheme) -> u8 {
    match s {
        ActScheme::None => 0,
        ActScheme::BinarySign => 1,
        ActScheme::IntegerDynamic => 2,
    }
}

fn act_scheme_from_tag(tag: u8) -> Result<ActScheme> {
    Ok(match tag {
        0 => ActScheme::None,
        1 => ActScheme::BinarySign,
        2 => ActScheme::IntegerDynamic,
        _ => return Err(Error::Dataset(format!("unknown activation scheme tag {tag}"))),
    })
}

/// Packed discrete codes for one quantized layer.
fn packed_weights<S: Scalar>(block: &ConvBlock<S>) -> Vec<u8> {
    let w = &block.conv.weight;
    match block.weight_scheme {
        WeightScheme::None => Vec::new(),
        WeightScheme::BinarySign => {
            let codes: Vec<u32> = w.iter().map(|&v| if v >= S::zero() { 1 } else { 0 }).collect();
            pack_bits(&codes, 1)
        }
        WeightScheme::IntegerDynamic => {
            let alpha = crate::quant::weight_dynamic_range(w);
            let q = integer_levels(block.weight_bits);
            let codes: Vec<u32> = w
                .iter()
                .map(|&v| (integer_code(v, alpha, block.weight_bits) + q) as u32)
                .collect();
            pack_bits(&codes, block.weight_bits)
        }
    }
}

pub fn model_to_bytes<S: Scalar>(model: &DenoiserModel<S>) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u16(VERSION);
    match &model.input_quant {
        Some(iq) => {
            w.u8(act_scheme_tag(iq.scheme));
            w.u8(iq.bits);
            w.f32(iq.range.value() as f32);
        }
        None => {
            w.u8(0);
            w.u8(32);
            w.f32(1.0);
        }
    }
    w.u16(model.blocks.len() as u16);
    for block in &model.blocks {
        w.u32(block.conv.c_in as u32);
        w.u32(block.conv.c_out as u32);
        let (tag, bits) = act_tag(block.act);
        w.u8(tag);
        w.u8(bits);
        w.f32(block.act_range.value() as f32);
        w.u8(weight_scheme_tag(block.weight_scheme));
        w.u8(block.weight_bits);
        w.f32(block.alpha_w as f32);
        match &block.bn {
            Some(bn) => {
                w.u8(1);
                w.f32(bn.epsilon as f32);
                w.f32(bn.momentum as f32);
                w.f32_slice(&bn.gamma);
                w.f32_slice(&bn.beta);
                w.f32_slice(&bn.running_mean);
                w.f32_slice(&bn.running_var);
            }
            None => w.u8(0),
        }
        w.f32_slice(&block.conv.bias);
        w.f32_slice(&block.conv.weight);
        if block.weight_scheme != WeightScheme::None {
            w.bytes(&packed_weights(block));
        }
    }
    w.buf
}

pub fn model_from_bytes<S: Scalar>(bytes: &[u8]) -> Result<DenoiserModel<S>> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err(Error::Dataset("not a QRIM checkpoint (bad magic)".into()));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::Dataset(format!("unsupported checkpoint version {version}")));
    }
    let iq_scheme = act_scheme_from_tag(r.u8()?)?;
    let iq_bits = r.u8()?;
    let iq_alpha = r.f32()? as f64;
    let input_quant = match iq_scheme {
        ActScheme::None => None,
        s => {
            let mut iq = InputQuant::new(s, iq_bits);
            iq.range.set(iq_alpha);
            Some(iq)
        }
    };
    let n_layers = r.u16()? as usize;
    let mut blocks = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let c_in = r.u32()? as usize;
        let c_out = r.u32()? as usize;
        let act_tag = r.u8()?;
        let act_bits = r.u8()?;
        let act_alpha = r.f32()? as f64;
        let act = act_from_tag(act_tag, act_bits)?;
        let w_scheme = weight_scheme_from_tag(r.u8()?)?;
        let w_bits = r.u8()?;
        let w_alpha = r.f32()? as f64;
        let bn = if r.u8()? == 1 {
            let mut bn = BatchNorm::<S>::new(c_out);
            bn.epsilon = r.f32()? as f64;
            bn.momentum = r.f32()? as f64;
            bn.gamma = r.f32_vec(c_out)?;
            bn.beta = r.f32_vec(c_out)?;
            bn.running_mean = r.f32_vec(c_out)?;
            bn.running_var = r.f32_vec(c_out)?;
            Some(bn)
        } else {
            None
        };
        let bias: Vec<S> = r.f32_vec(c_out)?;
        let weight: Vec<S> = r.f32_vec(c_out * c_in * 9)?;
        if w_scheme != WeightScheme::None {
            let packed_len = (weight.len() * w_bits as usize + 7) / 8;
            r.take(packed_len)?; // deployment payload; aux weights are authoritative here
        }
        let conv = Conv2d { c_in, c_out, weight, bias };
        let mut block = ConvBlock::new(conv, bn, act, w_scheme, w_bits);
        block.act_range.set(act_alpha);
        block.alpha_w = w_alpha;
        blocks.push(block);
    }
    DenoiserModel::from_blocks(blocks, input_quant)
}

pub fn save_model<S: Scalar>(model: &DenoiserModel<S>, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, model_to_bytes(model))?;
    Ok(())
}

pub fn load_model<S: Scalar>(path: &Path) -> Result<DenoiserModel<S>> {
    let bytes = fs::read(path)?;
    model_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::Mode;
    use crate::nn::tensor::Tensor;
    use crate::quant::{build_model, ModelConfig, QuantSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn roundtrip(cfg: ModelConfig) {
        let mut model = build_model::<f32>(&cfg, 99).unwrap();
        // Push some state through so BN stats and ranges move off init.
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mut x = Tensor::<f32>::zeros([2, 2, 8, 8]);
        x.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        let _ = model.forward(&x, Mode::Train).unwrap();

        let bytes = model_to_bytes(&model);
        let loaded = model_from_bytes::<f32>(&bytes).unwrap();
        assert_eq!(model_to_bytes(&loaded), bytes, "byte-exact round trip");

        let y0 = model.forward_eval(&x).unwrap();
        let y1 = loaded.forward_eval(&x).unwrap();
        assert_eq!(y0.data(), y1.data(), "forward must be identical after reload");
    }

    #[test]
    fn roundtrips_across_quant_modes() {
        for bits in [32u8, 8, 2, 1] {
            let cfg = ModelConfig::from_name("L3-C8-B", QuantSpec::uniform(bits).unwrap()).unwrap();
            roundtrip(cfg);
        }
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(model_from_bytes::<f32>(b"NOPE").is_err());
        let cfg = ModelConfig::from_name("L3-C8-B", QuantSpec::real()).unwrap();
        let model = build_model::<f32>(&cfg, 1).unwrap();
        let bytes = model_to_bytes(&model);
        assert!(model_from_bytes::<f32>(&bytes[..bytes.len() - 3]).is_err());
    }
}
