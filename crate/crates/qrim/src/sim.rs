//! Synthetic FMCW snapshot generator: time-domain IF signal matrices with
//! object reflections, receiver noise and burst-like non-coherent
//! interference, paired with exact ground-truth peak cells.
//!
//! Targets are placed on-grid (integer range/doppler bins) so the clean
//! range-Doppler map has exact single-cell peaks; an off-grid mode is not
//! part of the standard pipeline. All randomness comes from seeded ChaCha12
//! streams, so identical inputs give bit-identical outputs.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// One point reflector, parameterized directly by its map cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub range_bin: usize,
    pub doppler_bin: usize,
    /// Linear magnitude of the per-sample sinusoid (> 0).
    pub amplitude: f64,
    /// Initial phase in radians.
    pub phase: f64,
}

/// One time-domain interference burst: a raised-cosine tapered linear chirp
/// confined to a single ramp. Non-coherent interferers are not phase-locked
/// to the victim's ramp timing, so each burst carries its own phase offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Burst {
    /// Ramp (slow-time column) the burst lands in.
    pub ramp: usize,
    /// Center sample within the ramp.
    pub center: usize,
    /// Support width in samples (even, > 0).
    pub width: usize,
    /// Normalized frequency change per sample, in (-0.5, 0.5).
    pub chirp_slope: f64,
    /// Linear magnitude (>= 0).
    pub amplitude: f64,
    /// Carrier phase offset in radians.
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InterferenceSpec {
    pub bursts: Vec<Burst>,
}

/// Ground-truth description of one snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    /// Fast-time samples per ramp (N).
    pub n_samples: usize,
    /// Ramps per snapshot (M).
    pub n_ramps: usize,
    pub targets: Vec<Target>,
    /// Per-component standard deviation of the complex receiver noise.
    pub noise_std: f64,
    pub interference: InterferenceSpec,
    pub seed: u64,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 8 || self.n_ramps < 8 {
            return Err(Error::Config(format!(
                "snapshot must be at least 8x8, got {}x{}",
                self.n_samples, self.n_ramps
            )));
        }
        if self.noise_std < 0.0 {
            return Err(Error::Config("noise_std must be non-negative".into()));
        }
        for t in &self.targets {
            if t.range_bin >= self.n_samples || t.doppler_bin >= self.n_ramps {
                return Err(Error::Config(format!(
                    "target cell ({}, {}) outside {}x{} map",
                    t.range_bin, t.doppler_bin, self.n_samples, self.n_ramps
                )));
            }
            if !(t.amplitude > 0.0) {
                return Err(Error::Config("target amplitude must be positive".into()));
            }
        }
        validate_bursts(&self.interference, self.n_samples, self.n_ramps)?;
        Ok(())
    }

    /// Ground-truth peak cells, one per target.
    pub fn truth_cells(&self) -> Vec<(usize, usize)> {
        self.targets.iter().map(|t| (t.range_bin, t.doppler_bin)).collect()
    }
}

fn validate_bursts(spec: &InterferenceSpec, n_samples: usize, n_ramps: usize) -> Result<()> {
    for b in &spec.bursts {
        if b.ramp >= n_ramps {
            return Err(Error::Config(format!("burst ramp {} outside {} ramps", b.ramp, n_ramps)));
        }
        if b.width == 0 || b.width % 2 != 0 {
            return Err(Error::Config(format!("burst width must be even and positive, got {}", b.width)));
        }
        let half = b.width / 2;
        if b.center < half || b.center + half > n_samples {
            return Err(Error::Config(format!(
                "burst [{} +- {}] does not fit inside a {}-sample ramp",
                b.center, half, n_samples
            )));
        }
        if b.chirp_slope.abs() >= 0.5 {
            return Err(Error::Config("chirp slope must lie in (-0.5, 0.5) per sample".into()));
        }
        if b.amplitude < 0.0 {
            return Err(Error::Config("burst amplitude must be non-negative".into()));
        }
    }
    Ok(())
}

/// Time-domain IF matrix `s[n, m]` (row-major over fast time `n`).
#[derive(Debug, Clone, PartialEq)]
pub struct IfSignal {
    data: Vec<Complex64>,
    scene: Scene,
}

impl IfSignal {
    pub fn new(data: Vec<Complex64>, scene: Scene) -> Result<Self> {
        scene.validate()?;
        if data.len() != scene.n_samples * scene.n_ramps {
            return Err(Error::Shape(format!(
                "signal length {} does not match {}x{}",
                data.len(),
                scene.n_samples,
                scene.n_ramps
            )));
        }
        if !data.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::Numerics("non-finite IF samples".into()));
        }
        Ok(IfSignal { data, scene })
    }

    #[inline]
    pub fn n_samples(&self) -> usize {
        self.scene.n_samples
    }
    #[inline]
    pub fn n_ramps(&self) -> usize {
        self.scene.n_ramps
    }
    #[inline]
    pub fn data(&self) -> &[Complex64] {
        &self.data
    }
    #[inline]
    pub fn at(&self, n: usize, m: usize) -> Complex64 {
        self.data[n * self.scene.n_ramps + m]
    }
    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    /// Convenience: both DFT stages at once.
    pub fn to_rd_map(&self, window: crate::rd::Window) -> crate::rd::RdMap {
        crate::rd::dft_2d(self, window)
    }
}

/// Sum of target sinusoids plus receiver noise; no interference.
///
/// Target k contributes `A_k * exp(j(2 pi (r_k n / N + d_k m / M) + phi_k))`,
/// noise is circularly-symmetric complex Gaussian with per-component std
/// `noise_std`, drawn in row-major order from a ChaCha12 stream seeded by the
/// scene seed.
pub fn synthesize_clean(scene: &Scene) -> Result<IfSignal> {
    scene.validate()?;
    let (n_fast, n_ramps) = (scene.n_samples, scene.n_ramps);
    let mut data = vec![Complex64::new(0.0, 0.0); n_fast * n_ramps];
    for t in &scene.targets {
        let base = Complex64::from_polar(t.amplitude, t.phase);
        let step_n: Vec<Complex64> = (0..n_fast)
            .map(|n| Complex64::from_polar(1.0, 2.0 * PI * t.range_bin as f64 * n as f64 / n_fast as f64))
            .collect();
        let step_m: Vec<Complex64> = (0..n_ramps)
            .map(|m| Complex64::from_polar(1.0, 2.0 * PI * t.doppler_bin as f64 * m as f64 / n_ramps as f64))
            .collect();
        for n in 0..n_fast {
            let row_base = base * step_n[n];
            let row = &mut data[n * n_ramps..(n + 1) * n_ramps];
            for (cell, sm) in row.iter_mut().zip(&step_m) {
                *cell += row_base * sm;
            }
        }
    }
    if scene.noise_std > 0.0 {
        let mut rng = ChaCha12Rng::seed_from_u64(scene.seed);
        for cell in data.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *cell += Complex64::new(scene.noise_std * re, scene.noise_std * im);
        }
    }
    IfSignal::new(data, scene.clone())
}

/// Add interference bursts on top of a signal. Each burst adds
/// `amplitude * taper(k) * exp(j (pi slope k^2 + phase))` for
/// `|k| <= width/2` in its ramp, where `taper` is a raised-cosine (Hann)
/// window that reaches zero at the burst edges. Only the burst's own ramp
/// column is touched.
pub fn add_interference(signal: &IfSignal, spec: &InterferenceSpec) -> Result<IfSignal> {
    let (n_fast, n_ramps) = (signal.n_samples(), signal.n_ramps());
    validate_bursts(spec, n_fast, n_ramps)?;
    let mut data = signal.data.clone();
    for b in &spec.bursts {
        if b.amplitude == 0.0 {
            continue;
        }
        let half = (b.width / 2) as i64;
        for k in -half..=half {
            let n = b.center as i64 + k;
            if n < 0 || n >= n_fast as i64 {
                continue;
            }
            let taper = 0.5 * (1.0 + (2.0 * PI * k as f64 / b.width as f64).cos());
            let phase = PI * b.chirp_slope * (k * k) as f64 + b.phase;
            data[n as usize * n_ramps + b.ramp] +=
                Complex64::from_polar(b.amplitude * taper, phase);
        }
    }
    IfSignal::new(data, signal.scene.clone())
}

/// Sampling ranges for random scenes. Integer ranges are inclusive; float
/// ranges are half-open (a point range `lo == hi` yields that value).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneParams {
    pub n_samples: usize,
    pub n_ramps: usize,
    pub target_count: (usize, usize),
    pub amplitude: (f64, f64),
    /// Minimum toroidal Chebyshev distance between target cells.
    pub min_separation: usize,
    /// Sub-span of range bins targets may occupy (inclusive).
    pub range_bin_span: (usize, usize),
    /// Sub-span of doppler bins targets may occupy (inclusive).
    pub doppler_bin_span: (usize, usize),
    pub noise_std: f64,
    /// Interference events per snapshot. One event is a non-coherent
    /// interferer active over a contiguous span of ramps: every ramp in the
    /// span receives one burst with an independent center and phase.
    pub burst_count: (usize, usize),
    pub burst_width: (usize, usize),
    /// Chirp-slope magnitude range; the sign is drawn uniformly per event.
    pub burst_slope: (f64, f64),
    /// Per-ramp burst amplitude range (constant within an event).
    pub burst_amplitude: (f64, f64),
    /// Ramps an event stays active for (contiguous span, inclusive range).
    pub burst_ramp_span: (usize, usize),
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            n_samples: 96,
            n_ramps: 96,
            target_count: (6, 12),
            amplitude: (1.0, 3.0),
            min_separation: 4,
            range_bin_span: (0, 95),
            doppler_bin_span: (0, 95),
            noise_std: 0.1,
            burst_count: (1, 2),
            burst_width: (24, 56),
            burst_slope: (0.004, 0.015),
            burst_amplitude: (40.0, 160.0),
            burst_ramp_span: (48, 96),
        }
    }
}

impl SceneParams {
    fn validate(&self) -> Result<()> {
        if self.n_samples < 8 || self.n_ramps < 8 {
            return Err(Error::Config("snapshot must be at least 8x8".into()));
        }
        let ord = |name: &str, (lo, hi): (usize, usize)| {
            if lo > hi {
                Err(Error::Config(format!("empty {name} range [{lo}, {hi}]")))
            } else {
                Ok(())
            }
        };
        let ordf = |name: &str, (lo, hi): (f64, f64)| {
            if !(lo <= hi) {
                Err(Error::Config(format!("empty {name} range [{lo}, {hi}]")))
            } else {
                Ok(())
            }
        };
        ord("target_count", self.target_count)?;
        ordf("amplitude", self.amplitude)?;
        ord("burst_count", self.burst_count)?;
        ord("burst_width", self.burst_width)?;
        ordf("burst_slope", self.burst_slope)?;
        ordf("burst_amplitude", self.burst_amplitude)?;
        if self.amplitude.0 <= 0.0 {
            return Err(Error::Config("amplitude range must be positive".into()));
        }
        if self.range_bin_span.1 >= self.n_samples || self.doppler_bin_span.1 >= self.n_ramps {
            return Err(Error::Config("bin span exceeds map".into()));
        }
        ord("range_bin_span", self.range_bin_span)?;
        ord("doppler_bin_span", self.doppler_bin_span)?;
        if self.burst_width.0 < 2 {
            return Err(Error::Config("burst width must be at least 2".into()));
        }
        if self.burst_width.1 > self.n_samples {
            return Err(Error::Config("burst width exceeds ramp length".into()));
        }
        if self.burst_slope.1 >= 0.5 || self.burst_slope.0 < 0.0 {
            return Err(Error::Config("slope magnitudes must lie in [0, 0.5)".into()));
        }
        ord("burst_ramp_span", self.burst_ramp_span)?;
        if self.burst_ramp_span.0 < 1 || self.burst_ramp_span.1 > self.n_ramps {
            return Err(Error::Config("burst ramp span must fit the snapshot".into()));
        }
        if self.noise_std < 0.0 {
            return Err(Error::Config("noise_std must be non-negative".into()));
        }
        Ok(())
    }
}

fn sample_f64(rng: &mut ChaCha12Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// Toroidal Chebyshev distance between two cells.
fn torus_chebyshev(a: (usize, usize), b: (usize, usize), rows: usize, cols: usize) -> usize {
    let d = |x: usize, y: usize, len: usize| {
        let d = x.abs_diff(y);
        d.min(len - d)
    };
    d(a.0, b.0, rows).max(d(a.1, b.1, cols))
}

/// Draw a scene from the given parameter ranges. Deterministic for a fixed
/// seed; target cells are distinct and respect the minimum separation.
pub fn sample_random_scene(params: &SceneParams, seed: u64) -> Result<Scene> {
    params.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let count = rng.gen_range(params.target_count.0..=params.target_count.1);

    let span_cells = (params.range_bin_span.1 - params.range_bin_span.0 + 1)
        * (params.doppler_bin_span.1 - params.doppler_bin_span.0 + 1);
    if count > span_cells {
        return Err(Error::Config(format!(
            "cannot place {count} distinct targets in {span_cells} cells"
        )));
    }

    let mut cells: Vec<(usize, usize)> = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while cells.len() < count {
        let cell = (
            rng.gen_range(params.range_bin_span.0..=params.range_bin_span.1),
            rng.gen_range(params.doppler_bin_span.0..=params.doppler_bin_span.1),
        );
        let ok = cells.iter().all(|&c| {
            let d = torus_chebyshev(c, cell, params.n_samples, params.n_ramps);
            d != 0 && d >= params.min_separation
        });
        if ok {
            cells.push(cell);
        }
        attempts += 1;
        if attempts > 1000 * count.max(1) {
            return Err(Error::Config(format!(
                "cannot place {count} targets with separation {} in the given spans",
                params.min_separation
            )));
        }
    }

    let targets: Vec<Target> = cells
        .into_iter()
        .map(|(r, d)| {
            let amplitude = sample_f64(&mut rng, params.amplitude);
            let phase = rng.gen_range(0.0..2.0 * PI);
            Target { range_bin: r, doppler_bin: d, amplitude, phase }
        })
        .collect();

    let n_events = rng.gen_range(params.burst_count.0..=params.burst_count.1);
    let mut bursts: Vec<Burst> = Vec::new();
    for _ in 0..n_events {
        let half_lo = (params.burst_width.0 + 1) / 2;
        let half_hi = params.burst_width.1 / 2;
        let half = rng.gen_range(half_lo..=half_hi.max(half_lo));
        let width = 2 * half;
        let slope_mag = sample_f64(&mut rng, params.burst_slope);
        let slope = if rng.gen_bool(0.5) { slope_mag } else { -slope_mag };
        let amplitude = sample_f64(&mut rng, params.burst_amplitude);
        let span = rng.gen_range(params.burst_ramp_span.0..=params.burst_ramp_span.1);
        let start = rng.gen_range(0..=params.n_ramps - span);
        for ramp in start..start + span {
            let center = rng.gen_range(half..=params.n_samples - half);
            let phase = rng.gen_range(0.0..2.0 * PI);
            bursts.push(Burst { ramp, center, width, chirp_slope: slope, amplitude, phase });
        }
    }

    Ok(Scene {
        n_samples: params.n_samples,
        n_ramps: params.n_ramps,
        targets,
        noise_std: params.noise_std,
        interference: InterferenceSpec { bursts },
        seed: rng.gen::<u64>(),
    })
}
