//! Per-channel batch normalization. Training mode normalizes with batch
//! statistics (biased variance) and updates running estimates; eval mode is a
//! deterministic affine map from the running estimates.

use crate::error::{Error, Result};
use crate::nn::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<S> {
    pub channels: usize,
    pub gamma: Vec<S>,
    pub beta: Vec<S>,
    pub running_mean: Vec<S>,
    pub running_var: Vec<S>,
    /// Weight of the current batch statistic in the running update.
    pub momentum: f64,
    pub epsilon: f64,
    pub grad_gamma: Vec<S>,
    pub grad_beta: Vec<S>,
    cache: Option<BnCache<S>>,
}

#[derive(Debug, Clone, PartialEq)]
struct BnCache<S> {
    xhat: Tensor<S>,
    inv_std: Vec<S>,
}

impl<S: Scalar> BatchNorm<S> {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            channels,
            gamma: vec![S::one(); channels],
            beta: vec![S::zero(); channels],
            running_mean: vec![S::zero(); channels],
            running_var: vec![S::one(); channels],
            momentum: 0.1,
            epsilon: 1e-5,
            grad_gamma: vec![S::zero(); channels],
            grad_beta: vec![S::zero(); channels],
            cache: None,
        }
    }

    pub fn forward_train(&mut self, x: &Tensor<S>) -> Result<Tensor<S>> {
        if x.channels() != self.channels {
            return Err(Error::Shape("batchnorm channel mismatch".into()));
        }
        if x.batch() < 2 {
            return Err(Error::Config("batchnorm training mode needs batch >= 2".into()));
        }
        let (batch, h, w) = (x.batch(), x.rows(), x.cols());
        let n = S::from_f64((batch * h * w) as f64);
        let mut out = Tensor::zeros(x.shape());
        let mut xhat = Tensor::zeros(x.shape());
        let mut inv_std = vec![S::zero(); self.channels];
        let mom = S::from_f64(self.momentum);
        let one_minus = S::from_f64(1.0 - self.momentum);
        for c in 0..self.channels {
            let mut sum = S::zero();
            for b in 0..batch {
                sum = sum + x.plane(b, c).iter().copied().sum::<S>();
            }
            let mean = sum / n;
            let mut var_sum = S::zero();
            for b in 0..batch {
                var_sum =
                    var_sum + x.plane(b, c).iter().map(|&v| (v - mean) * (v - mean)).sum::<S>();
            }
            let var = var_sum / n;
            let istd = S::one() / (var + S::from_f64(self.epsilon)).sqrt();
            inv_std[c] = istd;
            let (g, be) = (self.gamma[c], self.beta[c]);
            for b in 0..batch {
                let xp = x.plane(b, c);
                for (hv, &v) in xhat.plane_mut(b, c).iter_mut().zip(xp) {
                    *hv = (v - mean) * istd;
                }
                let hp = xhat.plane(b, c);
                for (o, &hv) in out.plane_mut(b, c).iter_mut().zip(hp) {
                    *o = g * hv + be;
                }
            }
            self.running_mean[c] = one_minus * self.running_mean[c] + mom * mean;
            self.running_var[c] = one_minus * self.running_var[c] + mom * var;
        }
        self.cache = Some(BnCache { xhat, inv_std });
        Ok(out)
    }

    /// Deterministic affine map from running statistics.
    pub fn forward_eval(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        if x.channels() != self.channels {
            return Err(Error::Shape("batchnorm channel mismatch".into()));
        }
        let mut out = Tensor::zeros(x.shape());
        for c in 0..self.channels {
            let istd = S::one() / (self.running_var[c] + S::from_f64(self.epsilon)).sqrt();
            let scale = self.gamma[c] * istd;
            let shift = self.beta[c] - scale * self.running_mean[c];
            for b in 0..x.batch() {
                let xp = x.plane(b, c);
                for (o, &v) in out.plane_mut(b, c).iter_mut().zip(xp) {
                    *o = scale * v + shift;
                }
            }
        }
        Ok(out)
    }

    /// Gradients w.r.t. input, gamma and beta (stored on the layer). Consumes
    /// the cached forward activations.
    pub fn backward(&mut self, grad_out: &Tensor<S>) -> Result<Tensor<S>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::Usage("batchnorm backward without cached forward".into()))?;
        let (batch, h, w) = (grad_out.batch(), grad_out.rows(), grad_out.cols());
        let n = S::from_f64((batch * h * w) as f64);
        let mut grad_in = Tensor::zeros(grad_out.shape());
        for c in 0..self.channels {
            let mut dbeta = S::zero();
            let mut dgamma = S::zero();
            for b in 0..batch {
                let go = grad_out.plane(b, c);
                let xh = cache.xhat.plane(b, c);
                dbeta = dbeta + go.iter().copied().sum::<S>();
                dgamma = dgamma + go.iter().zip(xh).map(|(&g, &x)| g * x).sum::<S>();
            }
            self.grad_gamma[c] = dgamma;
            self.grad_beta[c] = dbeta;
            let scale = self.gamma[c] * cache.inv_std[c];
            let mean_db = dbeta / n;
            let mean_dg = dgamma / n;
            for b in 0..batch {
                let go = grad_out.plane(b, c);
                let xh = cache.xhat.plane(b, c);
                for ((g, &go_v), &xh_v) in
                    grad_in.plane_mut(b, c).iter_mut().zip(go).zip(xh)
                {
                    *g = scale * (go_v - mean_db - xh_v * mean_dg);
                }
            }
        }
        Ok(grad_in)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn normalized_input_passes_through() {
        // Zero-mean unit-variance input with gamma=1, beta=0 stays put.
        let n = 512;
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let mut vals: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        vals.iter_mut().for_each(|v| *v -= mean);
        let var = vals.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let std = var.sqrt();
        vals.iter_mut().for_each(|v| *v /= std);
        let x = Tensor::from_vec([2, 1, 16, 16], vals).unwrap();
        let mut bn = BatchNorm::<f64>::new(1);
        let y = bn.forward_train(&x).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn batch_of_one_is_rejected_in_training() {
        let x = Tensor::<f64>::zeros([1, 2, 4, 4]);
        let mut bn = BatchNorm::<f64>::new(2);
        assert!(matches!(bn.forward_train(&x), Err(Error::Config(_))));
        // Eval mode accepts single samples.
        assert!(bn.forward_eval(&x).is_ok());
    }

    #[test]
    fn eval_mode_is_affine_per_channel() {
        let mut bn = BatchNorm::<f64>::new(1);
        bn.running_mean[0] = 2.0;
        bn.running_var[0] = 4.0;
        bn.gamma[0] = 3.0;
        bn.beta[0] = 0.5;
        let x = Tensor::from_vec([1, 1, 1, 2], vec![2.0, 4.0]).unwrap();
        let y = bn.forward_eval(&x).unwrap();
        let istd = 1.0 / (4.0f64 + 1e-5).sqrt();
        assert!((y.data()[0] - 0.5).abs() < 1e-12);
        assert!((y.data()[1] - (3.0 * 2.0 * istd + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn backward_requires_cached_forward() {
        let mut bn = BatchNorm::<f64>::new(1);
        let g = Tensor::<f64>::zeros([2, 1, 2, 2]);
        assert!(matches!(bn.backward(&g), Err(Error::Usage(_))));
    }
}
