//! Adam optimizer with bias correction:
//! m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2,
//! p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps).

use crate::nn::tensor::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Optimizer state: step counter plus first/second moment buffers, one group
/// per parameter buffer, allocated lazily in group order.
#[derive(Debug, Clone)]
pub struct AdamState<S> {
    pub t: u64,
    moments: Vec<(Vec<S>, Vec<S>)>,
}

impl<S: Scalar> AdamState<S> {
    pub fn new() -> Self {
        AdamState { t: 0, moments: Vec::new() }
    }

    /// Advance the step counter; call once per optimization step before the
    /// per-group updates.
    pub fn begin_step(&mut self) {
        self.t += 1;
    }

    /// Update one parameter group in place.
    pub fn update(&mut self, group: usize, params: &mut [S], grads: &[S], cfg: &AdamConfig) {
        assert_eq!(params.len(), grads.len(), "param/grad length mismatch");
        while self.moments.len() <= group {
            self.moments.push((Vec::new(), Vec::new()));
        }
        let (m, v) = &mut self.moments[group];
        if m.is_empty() {
            m.resize(params.len(), S::zero());
            v.resize(params.len(), S::zero());
        }
        let b1 = S::from_f64(cfg.beta1);
        let b2 = S::from_f64(cfg.beta2);
        let one = S::one();
        let lr = S::from_f64(cfg.lr);
        let eps = S::from_f64(cfg.epsilon);
        let bc1 = one - S::from_f64(cfg.beta1.powi(self.t as i32));
        let bc2 = one - S::from_f64(cfg.beta2.powi(self.t as i32));
        for ((p, &g), (mi, vi)) in
            params.iter_mut().zip(grads).zip(m.iter_mut().zip(v.iter_mut()))
        {
            *mi = b1 * *mi + (one - b1) * g;
            *vi = b2 * *vi + (one - b2) * g * g;
            let mhat = *mi / bc1;
            let vhat = *vi / bc2;
            *p = *p - lr * mhat / (vhat.sqrt() + eps);
        }
    }
}

impl<S: Scalar> Default for AdamState<S> {
    fn default() -> Self {
        Self::new()
    }
}

/// One Adam step on a single scalar parameter; convenience for tests and
/// small calibration loops.
pub fn adam_step_scalar<S: Scalar>(
    state: &mut AdamState<S>,
    cfg: &AdamConfig,
    param: S,
    grad: S,
) -> S {
    let mut p = [param];
    state.begin_step();
    state.update(0, &mut p, &[grad], cfg);
    p[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_matches_closed_form() {
        // t = 1: mhat = g, vhat = g^2, so delta = -lr * g / (|g| + eps).
        let cfg = AdamConfig::default();
        for &g in &[1.0f64, -2.5, 0.3] {
            let mut st = AdamState::new();
            let p1 = adam_step_scalar(&mut st, &cfg, 0.0, g);
            let expect = -cfg.lr * g / (g.abs() + cfg.epsilon);
            assert!((p1 - expect).abs() < 1e-15, "{p1} vs {expect}");
        }
        // Pinned magnitude for g = 1 and the defaults.
        let mut st = AdamState::new();
        let p1 = adam_step_scalar(&mut st, &cfg, 0.0, 1.0f64);
        assert!((p1 + 9.99999e-4).abs() < 1e-9, "{p1}");
        assert!((p1 + 1e-3 / (1.0 + 1e-8)).abs() < 1e-18);
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let cfg = AdamConfig::default();
        let mut st = AdamState::new();
        let mut p = [3.5f64, -1.0];
        st.begin_step();
        st.update(0, &mut p, &[0.0, 0.0], &cfg);
        assert_eq!(p, [3.5, -1.0]);
    }

    #[test]
    fn groups_are_independent() {
        let cfg = AdamConfig::default();
        let mut st = AdamState::new();
        let mut a = [0.0f64];
        let mut b = [0.0f64];
        st.begin_step();
        st.update(0, &mut a, &[1.0], &cfg);
        st.update(1, &mut b, &[-1.0], &cfg);
        assert!((a[0] + b[0]).abs() < 1e-15);
    }
}
