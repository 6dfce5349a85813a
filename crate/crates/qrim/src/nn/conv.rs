//! 2-D convolution with fixed 3x3 kernels, stride 1 and zero-padding 1, so
//! spatial dimensions are preserved. Forward and backward are written as
//! shifted row operations over contiguous slices; batches fan out over the
//! rayon pool with a fixed reduction order, so results are bit-deterministic
//! regardless of thread count.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::tensor::{Scalar, Tensor};

pub const KERNEL: usize = 3;
const K2: usize = KERNEL * KERNEL;

/// Convolution parameters: weights `[c_out][c_in][3][3]` (flattened) plus one
/// bias per output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<S> {
    pub c_in: usize,
    pub c_out: usize,
    pub weight: Vec<S>,
    pub bias: Vec<S>,
}

impl<S: Scalar> Conv2d<S> {
    /// Kaiming-style uniform init over fan-in = 9 * c_in; biases start at 0.
    pub fn init(c_in: usize, c_out: usize, rng: &mut ChaCha12Rng) -> Self {
        let bound = (6.0 / (K2 * c_in) as f64).sqrt();
        let weight = (0..c_out * c_in * K2)
            .map(|_| S::from_f64(rng.gen_range(-bound..bound)))
            .collect();
        Conv2d { c_in, c_out, weight, bias: vec![S::zero(); c_out] }
    }

    pub fn zeros(c_in: usize, c_out: usize) -> Self {
        Conv2d { c_in, c_out, weight: vec![S::zero(); c_out * c_in * K2], bias: vec![S::zero(); c_out] }
    }

    #[inline]
    pub fn weight_count(&self) -> usize {
        self.weight.len()
    }
}

#[inline]
fn row_range(k: usize, len: usize) -> (usize, usize) {
    // Valid output positions for kernel offset k (0, 1, 2) with padding 1.
    match k {
        0 => (1, len),
        1 => (0, len),
        _ => (0, len.saturating_sub(1)),
    }
}

/// out[b,co,y,x] = bias[co] + sum_{ci,ky,kx} w[co,ci,ky,kx] * in[b,ci,y+ky-1,x+kx-1]
pub fn conv2d_forward<S: Scalar>(
    input: &Tensor<S>,
    weight: &[S],
    bias: &[S],
    c_in: usize,
    c_out: usize,
) -> Result<Tensor<S>> {
    if input.channels() != c_in {
        return Err(Error::Shape(format!(
            "conv expects {c_in} input channels, got {}",
            input.channels()
        )));
    }
    if weight.len() != c_out * c_in * K2 || bias.len() != c_out {
        return Err(Error::Shape("conv weight/bias buffers do not match channel counts".into()));
    }
    let (batch, h, w) = (input.batch(), input.rows(), input.cols());
    let mut out = Tensor::zeros([batch, c_out, h, w]);
    let plane = h * w;
    out.data_mut()
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(idx, out_plane)| {
            let b = idx / c_out;
            let co = idx % c_out;
            out_plane.iter_mut().for_each(|v| *v = bias[co]);
            for ci in 0..c_in {
                let in_plane = input.plane(b, ci);
                for ky in 0..KERNEL {
                    let (oy0, oy1) = row_range(ky, h);
                    for kx in 0..KERNEL {
                        let wv = weight[((co * c_in + ci) * KERNEL + ky) * KERNEL + kx];
                        let (ox0, ox1) = row_range(kx, w);
                        if ox0 >= ox1 {
                            continue;
                        }
                        let seg = ox1 - ox0;
                        for oy in oy0..oy1 {
                            let iy = oy + ky - 1;
                            let ix0 = ox0 + kx - 1;
                            let src = &in_plane[iy * w + ix0..iy * w + ix0 + seg];
                            let dst = &mut out_plane[oy * w + ox0..oy * w + ox0 + seg];
                            for (d, &s) in dst.iter_mut().zip(src) {
                                *d = *d + wv * s;
                            }
                        }
                    }
                }
            }
        });
    Ok(out)
}

/// Gradients of [`conv2d_forward`]: input gradient plus per-weight and
/// per-bias gradients (summed over the batch in index order).
pub fn conv2d_backward<S: Scalar>(
    input: &Tensor<S>,
    weight: &[S],
    grad_out: &Tensor<S>,
    c_in: usize,
    c_out: usize,
) -> Result<(Tensor<S>, Vec<S>, Vec<S>)> {
    if input.channels() != c_in || grad_out.channels() != c_out {
        return Err(Error::Shape("conv backward channel mismatch".into()));
    }
    if input.batch() != grad_out.batch() || input.rows() != grad_out.rows() || input.cols() != grad_out.cols()
    {
        return Err(Error::Shape("conv backward spatial/batch mismatch".into()));
    }
    let (batch, h, w) = (input.batch(), input.rows(), input.cols());
    let plane = h * w;

    // d input
    let mut grad_in = Tensor::zeros([batch, c_in, h, w]);
    grad_in
        .data_mut()
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(idx, gin_plane)| {
            let b = idx / c_in;
            let ci = idx % c_in;
            for co in 0..c_out {
                let gout_plane = grad_out.plane(b, co);
                for ky in 0..KERNEL {
                    let (oy0, oy1) = row_range(ky, h);
                    for kx in 0..KERNEL {
                        let wv = weight[((co * c_in + ci) * KERNEL + ky) * KERNEL + kx];
                        let (ox0, ox1) = row_range(kx, w);
                        if ox0 >= ox1 {
                            continue;
                        }
                        let seg = ox1 - ox0;
                        for oy in oy0..oy1 {
                            let iy = oy + ky - 1;
                            let ix0 = ox0 + kx - 1;
                            let src = &gout_plane[oy * w + ox0..oy * w + ox0 + seg];
                            let dst = &mut gin_plane[iy * w + ix0..iy * w + ix0 + seg];
                            for (d, &s) in dst.iter_mut().zip(src) {
                                *d = *d + wv * s;
                            }
                        }
                    }
                }
            }
        });

    // d weight / d bias: per-sample partials, reduced in batch order.
    let partials: Vec<(Vec<S>, Vec<S>)> = (0..batch)
        .into_par_iter()
        .map(|b| {
            let mut gw = vec![S::zero(); c_out * c_in * K2];
            let mut gb = vec![S::zero(); c_out];
            for co in 0..c_out {
                let gout_plane = grad_out.plane(b, co);
                gb[co] = gout_plane.iter().copied().sum();
                for ci in 0..c_in {
                    let in_plane = input.plane(b, ci);
                    for ky in 0..KERNEL {
                        let (oy0, oy1) = row_range(ky, h);
                        for kx in 0..KERNEL {
                            let (ox0, ox1) = row_range(kx, w);
                            if ox0 >= ox1 {
                                continue;
                            }
                            let seg = ox1 - ox0;
                            let mut acc = S::zero();
                            for oy in oy0..oy1 {
                                let iy = oy + ky - 1;
                                let ix0 = ox0 + kx - 1;
                                let a = &gout_plane[oy * w + ox0..oy * w + ox0 + seg];
                                let bseg = &in_plane[iy * w + ix0..iy * w + ix0 + seg];
                                acc = acc + a.iter().zip(bseg).map(|(&x, &y)| x * y).sum::<S>();
                            }
                            gw[((co * c_in + ci) * KERNEL + ky) * KERNEL + kx] = acc;
                        }
                    }
                }
            }
            (gw, gb)
        })
        .collect();

    let mut grad_w = vec![S::zero(); c_out * c_in * K2];
    let mut grad_b = vec![S::zero(); c_out];
    for (gw, gb) in partials {
        for (d, s) in grad_w.iter_mut().zip(gw) {
            *d = *d + s;
        }
        for (d, s) in grad_b.iter_mut().zip(gb) {
            *d = *d + s;
        }
    }
    Ok((grad_in, grad_w, grad_b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    /// Direct six-loop convolution used as the oracle.
    fn conv_naive(input: &Tensor<f64>, weight: &[f64], bias: &[f64], c_in: usize, c_out: usize) -> Tensor<f64> {
        let (batch, h, w) = (input.batch(), input.rows(), input.cols());
        let mut out = Tensor::zeros([batch, c_out, h, w]);
        for b in 0..batch {
            for co in 0..c_out {
                for y in 0..h {
                    for x in 0..w {
                        let mut acc = bias[co];
                        for ci in 0..c_in {
                            for ky in 0..KERNEL {
                                for kx in 0..KERNEL {
                                    let iy = y as isize + ky as isize - 1;
                                    let ix = x as isize + kx as isize - 1;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    acc += weight[((co * c_in + ci) * KERNEL + ky) * KERNEL + kx]
                                        * input.at(b, ci, iy as usize, ix as usize);
                                }
                            }
                        }
                        out.set(b, co, y, x, acc);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn identity_kernel_passes_input_through() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mut input = Tensor::<f64>::zeros([1, 1, 5, 5]);
        input.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        let mut weight = vec![0.0; 9];
        weight[4] = 1.0; // center tap
        let out = conv2d_forward(&input, &weight, &[0.0], 1, 1).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn all_ones_kernel_counts_padding() {
        let input = Tensor::<f64>::from_vec([1, 1, 4, 4], vec![1.0; 16]).unwrap();
        let out = conv2d_forward(&input, &[1.0; 9], &[0.0], 1, 1).unwrap();
        // Interior cells see the full 3x3 support, corners only 2x2.
        assert_eq!(out.at(0, 0, 1, 1), 9.0);
        assert_eq!(out.at(0, 0, 2, 2), 9.0);
        assert_eq!(out.at(0, 0, 0, 0), 4.0);
        assert_eq!(out.at(0, 0, 0, 3), 4.0);
        assert_eq!(out.at(0, 0, 3, 3), 4.0);
        assert_eq!(out.at(0, 0, 0, 1), 6.0); // edge, non-corner
    }

    #[test]
    fn forward_matches_naive_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let (c_in, c_out) = (2, 3);
        let mut input = Tensor::<f64>::zeros([1, c_in, 5, 5]);
        input.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        let conv = Conv2d::<f64>::init(c_in, c_out, &mut rng);
        let fast = conv2d_forward(&input, &conv.weight, &conv.bias, c_in, c_out).unwrap();
        let slow = conv_naive(&input, &conv.weight, &conv.bias, c_in, c_out);
        for (a, b) in fast.data().iter().zip(slow.data()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut input = Tensor::<f64>::zeros([2, 2, 4, 4]);
        input.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
        let conv = Conv2d::<f64>::init(2, 2, &mut rng);
        let gout = Tensor::<f64>::zeros([2, 2, 4, 4]);
        let (gin, gw, gb) = conv2d_backward(&input, &conv.weight, &gout, 2, 2).unwrap();
        assert!(gin.data().iter().all(|&v| v == 0.0));
        assert!(gw.iter().all(|&v| v == 0.0));
        assert!(gb.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn channel_mismatch_is_a_shape_error() {
        let input = Tensor::<f64>::zeros([1, 3, 4, 4]);
        let conv = Conv2d::<f64>::zeros(2, 2);
        assert!(conv2d_forward(&input, &conv.weight, &conv.bias, 2, 2).is_err());
    }
}
