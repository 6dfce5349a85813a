//! IF signal to range-Doppler map: a DFT over fast time for each ramp
//! followed by a DFT over slow time for each range bin, plus the two-channel
//! normalization that feeds the denoiser and its exact inverse.
//!
//! Power-of-two lengths go through an iterative radix-2 FFT; other lengths
//! fall back to the direct per-dimension DFT (the factored double sum).
//! `dft_2d_reference` is the literal O(N^2 M^2) double sum kept around as the
//! verification oracle. Transforms are unnormalized (no 1/(NM) factor).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::nn::tensor::{Scalar, Tensor};
use crate::sim::IfSignal;

/// Fast-/slow-time taper applied before the transforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    None,
    Hann,
}

/// Processing stage of a map. Transitions only move forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Time,
    Range,
    RangeDoppler,
}

/// Complex map of shape `rows x cols` (range bins x doppler bins after both
/// transforms), stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RdMap {
    rows: usize,
    cols: usize,
    stage: Stage,
    data: Vec<Complex64>,
}

impl RdMap {
    pub fn new(rows: usize, cols: usize, stage: Stage, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "map length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        Ok(RdMap { rows, cols, stage, data })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }
    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }
    #[inline]
    pub fn stage(&self) -> Stage {
        self.stage
    }
    #[inline]
    pub fn data(&self) -> &[Complex64] {
        &self.data
    }
    #[inline]
    pub fn at(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    /// Per-cell magnitudes.
    pub fn magnitude(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.norm()).collect()
    }

    /// Cell of maximum magnitude (ties resolved to the earliest cell).
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0usize, 0.0f64);
        for (i, z) in self.data.iter().enumerate() {
            let m = z.norm();
            if m > best.1 {
                best = (i, m);
            }
        }
        (best.0 / self.cols, best.0 % self.cols)
    }
}

fn hann(len: usize) -> Vec<f64> {
    (0..len).map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / len as f64).cos())).collect()
}

/// One-dimensional DFT plan: radix-2 FFT for power-of-two lengths, direct
/// evaluation otherwise.
struct DftPlan {
    len: usize,
    pow2: bool,
    /// FFT: `len/2` butterfly twiddles; direct: full `len`-entry table.
    twiddles: Vec<Complex64>,
}

impl DftPlan {
    fn new(len: usize) -> Self {
        let pow2 = len.is_power_of_two();
        let count = if pow2 { len / 2 } else { len };
        let twiddles = (0..count)
            .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / len as f64))
            .collect();
        DftPlan { len, pow2, twiddles }
    }

    fn run(&self, io: &mut [Complex64], scratch: &mut [Complex64]) {
        debug_assert_eq!(io.len(), self.len);
        if self.pow2 {
            self.fft(io);
        } else {
            self.direct(io, scratch);
        }
    }

    fn fft(&self, buf: &mut [Complex64]) {
        let n = self.len;
        // Bit-reversal permutation.
        let mut j = 0usize;
        for i in 1..n {
            let mut bit = n >> 1;
            while j & bit != 0 {
                j ^= bit;
                bit >>= 1;
            }
            j |= bit;
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut len = 2usize;
        while len <= n {
            let step = n / len;
            let half = len / 2;
            for start in (0..n).step_by(len) {
                for k in 0..half {
                    let w = self.twiddles[k * step];
                    let u = buf[start + k];
                    let v = buf[start + k + half] * w;
                    buf[start + k] = u + v;
                    buf[start + k + half] = u - v;
                }
            }
            len <<= 1;
        }
    }

    fn direct(&self, io: &mut [Complex64], scratch: &mut [Complex64]) {
        let n = self.len;
        scratch[..n].copy_from_slice(io);
        for (k, out) in io.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (idx, &v) in scratch[..n].iter().enumerate() {
                acc += v * self.twiddles[(idx * k) % n];
            }
            *out = acc;
        }
    }
}

/// Both DFT stages: over fast time `n` for each ramp, then over slow time
/// `m` for each range bin. With `Window::Hann` the taper applies to both
/// dimensions independently before the transforms.
pub fn dft_2d(signal: &IfSignal, window: Window) -> RdMap {
    let (rows, cols) = (signal.n_samples(), signal.n_ramps());
    let mut data = signal.data().to_vec();
    if window == Window::Hann {
        let wn = hann(rows);
        let wm = hann(cols);
        for r in 0..rows {
            for c in 0..cols {
                data[r * cols + c] *= wn[r] * wm[c];
            }
        }
    }

    let plan_rows = DftPlan::new(rows);
    let plan_cols = DftPlan::new(cols);
    let mut scratch = vec![Complex64::new(0.0, 0.0); rows.max(cols)];
    let mut column = vec![Complex64::new(0.0, 0.0); rows];

    // DFT over n for each m (columns, stride `cols`).
    for c in 0..cols {
        for r in 0..rows {
            column[r] = data[r * cols + c];
        }
        plan_rows.run(&mut column, &mut scratch);
        for r in 0..rows {
            data[r * cols + c] = column[r];
        }
    }
    // DFT over m for each n (contiguous rows).
    for r in 0..rows {
        plan_cols.run(&mut data[r * cols..(r + 1) * cols], &mut scratch);
    }

    RdMap { rows, cols, stage: Stage::RangeDoppler, data }
}

/// Literal double-sum 2-D DFT, O(N^2 M^2); the verification oracle for
/// [`dft_2d`]. Not used on any production path.
pub fn dft_2d_reference(signal: &IfSignal, window: Window) -> RdMap {
    let (rows, cols) = (signal.n_samples(), signal.n_ramps());
    let mut input = signal.data().to_vec();
    if window == Window::Hann {
        let wn = hann(rows);
        let wm = hann(cols);
        for r in 0..rows {
            for c in 0..cols {
                input[r * cols + c] *= wn[r] * wm[c];
            }
        }
    }
    let mut data = vec![Complex64::new(0.0, 0.0); rows * cols];
    for p in 0..rows {
        for q in 0..cols {
            let mut acc = Complex64::new(0.0, 0.0);
            for n in 0..rows {
                for m in 0..cols {
                    let ang = -2.0 * PI * (p as f64 * n as f64 / rows as f64 + q as f64 * m as f64 / cols as f64);
                    acc += input[n * cols + m] * Complex64::from_polar(1.0, ang);
                }
            }
            data[p * cols + q] = acc;
        }
    }
    RdMap { rows, cols, stage: Stage::RangeDoppler, data }
}

/// Two-channel real representation of a range-Doppler map, scaled so the
/// maximum complex magnitude is 1. Channel 0 holds real parts, channel 1
/// imaginary parts; `scale` restores the original map.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedPatch {
    pub rows: usize,
    pub cols: usize,
    /// `[2 * rows * cols]`: real plane then imaginary plane.
    pub channels: Vec<f64>,
    pub scale: f64,
}

impl NormalizedPatch {
    pub fn from_channels(rows: usize, cols: usize, channels: Vec<f64>, scale: f64) -> Result<Self> {
        if channels.len() != 2 * rows * cols {
            return Err(Error::Shape("patch needs exactly two rows x cols channels".into()));
        }
        if !(scale > 0.0) {
            return Err(Error::Config(format!("patch scale must be positive, got {scale}")));
        }
        Ok(NormalizedPatch { rows, cols, channels, scale })
    }

    /// `[1, 2, rows, cols]` tensor for the network.
    pub fn to_tensor<S: Scalar>(&self) -> Tensor<S> {
        let data = self.channels.iter().map(|&v| S::from_f64(v)).collect();
        Tensor::from_vec([1, 2, self.rows, self.cols], data).expect("patch shape")
    }

    /// Reinterpret a `[1, 2, rows, cols]` network output as a patch carrying
    /// the given scale.
    pub fn from_tensor<S: Scalar>(tensor: &Tensor<S>, scale: f64) -> Result<Self> {
        if tensor.batch() != 1 || tensor.channels() != 2 {
            return Err(Error::Shape("expected a [1, 2, rows, cols] tensor".into()));
        }
        let channels = tensor.data().iter().map(|v| v.as_f64()).collect();
        Self::from_channels(tensor.rows(), tensor.cols(), channels, scale)
    }
}

/// Scale a map by the inverse of its maximum magnitude and split into
/// real/imaginary channels. An all-zero map cannot be normalized.
pub fn normalize(map: &RdMap) -> Result<NormalizedPatch> {
    if map.stage() != Stage::RangeDoppler {
        return Err(Error::Config("normalize expects a range-Doppler stage map".into()));
    }
    let scale = map.data.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
    if !(scale > 0.0) {
        return Err(Error::DegenerateInput("cannot normalize an all-zero map".into()));
    }
    scale_by(map, scale)
}

/// Split into channels using an externally chosen scale (training pairs use
/// the interfered map's scale for the clean target, so values may exceed 1).
pub fn scale_by(map: &RdMap, scale: f64) -> Result<NormalizedPatch> {
    if !(scale > 0.0) {
        return Err(Error::Config(format!("scale must be positive, got {scale}")));
    }
    let cells = map.rows * map.cols;
    let mut channels = vec![0.0f64; 2 * cells];
    for (i, z) in map.data.iter().enumerate() {
        channels[i] = z.re / scale;
        channels[cells + i] = z.im / scale;
    }
    NormalizedPatch::from_channels(map.rows, map.cols, channels, scale)
}

/// Exact inverse of [`normalize`]: reassemble the complex map and undo the
/// scale.
pub fn denormalize(patch: &NormalizedPatch) -> Result<RdMap> {
    if !(patch.scale > 0.0) {
        return Err(Error::Config(format!("scale must be positive, got {}", patch.scale)));
    }
    let cells = patch.rows * patch.cols;
    let data = (0..cells)
        .map(|i| Complex64::new(patch.channels[i] * patch.scale, patch.channels[cells + i] * patch.scale))
        .collect();
    RdMap::new(patch.rows, patch.cols, Stage::RangeDoppler, data)
}
