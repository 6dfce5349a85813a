//! 2-D cell-averaging CFAR over range-Doppler magnitudes.
//!
//! Each cell is compared against `scale_factor` times the mean *power*
//! (squared magnitude) of the surrounding training band, excluding a guard
//! box; `scale_from_pfa` gives the exact scale for a target false-alarm
//! probability under exponentially distributed noise power. Detected cells
//! must also be local maxima within the guard window (peak consolidation).
//! Both map axes are circular spectra, so the window wraps by default.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfarConfig {
    /// Training cells per dimension on each side of the guard band.
    pub train_cells: usize,
    /// Guard cells per dimension on each side of the cell under test.
    pub guard_cells: usize,
    /// Threshold multiplier on the mean training power.
    pub scale_factor: f64,
    /// Toroidal window (both RD axes are circular spectra).
    pub wrap: bool,
}

impl CfarConfig {
    /// Configuration with the scale factor calibrated from a target
    /// false-alarm probability.
    pub fn from_pfa(train_cells: usize, guard_cells: usize, p_fa: f64, wrap: bool) -> Result<Self> {
        if train_cells < 1 {
            return Err(Error::Config("need at least one training cell per side".into()));
        }
        let cfg = CfarConfig { train_cells, guard_cells, scale_factor: 0.0, wrap };
        let scale_factor = scale_from_pfa(p_fa, cfg.n_train())?;
        Ok(CfarConfig { scale_factor, ..cfg })
    }

    /// Half-width of the full window.
    pub fn window_radius(&self) -> usize {
        self.train_cells + self.guard_cells
    }

    /// Training-band cell count: full window minus the guard box.
    pub fn n_train(&self) -> usize {
        let outer = 2 * self.window_radius() + 1;
        let guard = 2 * self.guard_cells + 1;
        outer * outer - guard * guard
    }

    fn validate(&self) -> Result<()> {
        if self.train_cells < 1 {
            return Err(Error::Config("need at least one training cell per side".into()));
        }
        if !(self.scale_factor > 0.0) {
            return Err(Error::Config("scale factor must be positive".into()));
        }
        Ok(())
    }
}

impl Default for CfarConfig {
    /// 8 training and 2 guard cells per dimension, P_fa = 1e-3, wrapping.
    fn default() -> Self {
        Self::from_pfa(8, 2, 1e-3, true).expect("default config is valid")
    }
}

/// Exact CA-CFAR calibration for exponentially distributed power:
/// `scale = n (P_fa^(-1/n) - 1)`, applied to the mean of `n` training-cell
/// powers.
pub fn scale_from_pfa(p_fa: f64, n_train: usize) -> Result<f64> {
    if !(p_fa > 0.0 && p_fa < 1.0) {
        return Err(Error::Config(format!("P_fa must lie in (0, 1), got {p_fa}")));
    }
    if n_train == 0 {
        return Err(Error::Config("n_train must be positive".into()));
    }
    let n = n_train as f64;
    Ok(n * (p_fa.powf(-1.0 / n) - 1.0))
}

/// One detected peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub row: usize,
    pub col: usize,
    pub magnitude: f64,
}

/// Unique detected cells with positive magnitudes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionList {
    pub cells: Vec<Detection>,
}

impl DetectionList {
    pub fn len(&self) -> usize {
        self.cells.len()
    }
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
    pub fn positions(&self) -> Vec<(usize, usize)> {
        self.cells.iter().map(|d| (d.row, d.col)).collect()
    }
}

/// Summed-area table over the (padded) power map for O(1) box sums.
struct BoxSums {
    width: usize,
    integral: Vec<f64>,
    counts: Vec<u32>,
}

impl BoxSums {
    /// `pad` extra cells on every side: wrapped copies when `wrap`, zeros
    /// (with zero counts) otherwise.
    fn new(power: &[f64], rows: usize, cols: usize, pad: usize, wrap: bool) -> Self {
        let h = rows + 2 * pad;
        let w = cols + 2 * pad;
        let mut integral = vec![0.0f64; (h + 1) * (w + 1)];
        let mut counts = vec![0u32; (h + 1) * (w + 1)];
        for r in 0..h {
            for c in 0..w {
                let rr = r as isize - pad as isize;
                let cc = c as isize - pad as isize;
                let (v, k) = if wrap {
                    let sr = rr.rem_euclid(rows as isize) as usize;
                    let sc = cc.rem_euclid(cols as isize) as usize;
                    (power[sr * cols + sc], 1u32)
                } else if rr >= 0 && cc >= 0 && (rr as usize) < rows && (cc as usize) < cols {
                    (power[rr as usize * cols + cc as usize], 1u32)
                } else {
                    (0.0, 0)
                };
                let idx = (r + 1) * (w + 1) + (c + 1);
                integral[idx] =
                    v + integral[idx - 1] + integral[idx - (w + 1)] - integral[idx - (w + 1) - 1];
                counts[idx] = k + counts[idx - 1] + counts[idx - (w + 1)] - counts[idx - (w + 1) - 1];
            }
        }
        BoxSums { width: w, integral, counts }
    }

    /// Sum and count over the inclusive padded-coordinate box.
    fn query(&self, r0: usize, c0: usize, r1: usize, c1: usize) -> (f64, u32) {
        let w1 = self.width + 1;
        let a = (r1 + 1) * w1 + (c1 + 1);
        let b = r0 * w1 + c0;
        let c = r0 * w1 + (c1 + 1);
        let d = (r1 + 1) * w1 + c0;
        (
            self.integral[a] + self.integral[b] - self.integral[c] - self.integral[d],
            self.counts[a] + self.counts[b] - self.counts[c] - self.counts[d],
        )
    }
}

/// Run CA-CFAR over a `rows x cols` magnitude map.
///
/// A cell is detected iff its squared magnitude exceeds `scale_factor` times
/// the mean training power and it is the maximum of its guard window (ties
/// go to the lexicographically earliest cell). Returns cells in row-major
/// order.
pub fn ca_cfar(magnitude: &[f64], rows: usize, cols: usize, config: &CfarConfig) -> Result<DetectionList> {
    config.validate()?;
    if magnitude.len() != rows * cols {
        return Err(Error::Shape(format!(
            "magnitude length {} does not match {rows}x{cols}",
            magnitude.len()
        )));
    }
    let radius = config.window_radius();
    if rows < 2 * radius + 1 || cols < 2 * radius + 1 {
        return Err(Error::Config(format!(
            "{rows}x{cols} map is smaller than the {0}x{0} CFAR window",
            2 * radius + 1
        )));
    }
    if magnitude.iter().any(|&m| !(m >= 0.0)) {
        return Err(Error::Config("magnitudes must be non-negative and finite".into()));
    }

    let power: Vec<f64> = magnitude.iter().map(|&m| m * m).collect();
    let sums = BoxSums::new(&power, rows, cols, radius, config.wrap);
    let g = config.guard_cells;
    let mut cells = Vec::new();

    for r in 0..rows {
        for c in 0..cols {
            let m = magnitude[r * cols + c];
            if !(m > 0.0) {
                continue;
            }
            // Padded coordinates of the cell under test.
            let (pr, pc) = (r + radius, c + radius);
            let (outer_sum, outer_n) = sums.query(pr - radius, pc - radius, pr + radius, pc + radius);
            let (guard_sum, guard_n) = sums.query(pr - g, pc - g, pr + g, pc + g);
            let band_sum = outer_sum - guard_sum;
            let band_n = outer_n - guard_n;
            if band_n == 0 {
                continue;
            }
            let threshold = config.scale_factor * band_sum / band_n as f64;
            if !(power[r * cols + c] > threshold) {
                continue;
            }
            if is_guard_local_max(magnitude, rows, cols, r, c, g, config.wrap) {
                cells.push(Detection { row: r, col: c, magnitude: m });
            }
        }
    }
    Ok(DetectionList { cells })
}

fn is_guard_local_max(
    magnitude: &[f64],
    rows: usize,
    cols: usize,
    r: usize,
    c: usize,
    guard: usize,
    wrap: bool,
) -> bool {
    let m = magnitude[r * cols + c];
    let g = guard as isize;
    for dr in -g..=g {
        for dc in -g..=g {
            if dr == 0 && dc == 0 {
                continue;
            }
            let (nr, nc) = if wrap {
                (
                    (r as isize + dr).rem_euclid(rows as isize) as usize,
                    (c as isize + dc).rem_euclid(cols as isize) as usize,
                )
            } else {
                let nr = r as isize + dr;
                let nc = c as isize + dc;
                if nr < 0 || nc < 0 || nr >= rows as isize || nc >= cols as isize {
                    continue;
                }
                (nr as usize, nc as usize)
            };
            if (nr, nc) == (r, c) {
                continue; // wrapped onto the cell itself (tiny maps)
            }
            let nm = magnitude[nr * cols + nc];
            if nm > m || (nm == m && (nr, nc) < (r, c)) {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn scale_calibration_closed_forms() {
        // n = 1, P_fa = 0.5 -> 1 * (2 - 1) = 1.
        assert!((scale_from_pfa(0.5, 1).unwrap() - 1.0).abs() < 1e-12);
        // P_fa -> 1 drives the scale to zero.
        assert!(scale_from_pfa(1.0 - 1e-12, 64).unwrap() < 1e-9);
        // Monotone: smaller P_fa means a larger scale.
        let a = scale_from_pfa(1e-2, 416).unwrap();
        let b = scale_from_pfa(1e-3, 416).unwrap();
        let c = scale_from_pfa(1e-4, 416).unwrap();
        assert!(a < b && b < c);
        assert!(scale_from_pfa(0.0, 4).is_err());
        assert!(scale_from_pfa(1.0, 4).is_err());
    }

    #[test]
    fn default_config_matches_stated_defaults() {
        let cfg = CfarConfig::default();
        assert_eq!(cfg.train_cells, 8);
        assert_eq!(cfg.guard_cells, 2);
        assert_eq!(cfg.n_train(), 21 * 21 - 5 * 5);
        assert!(cfg.wrap);
        let expect = scale_from_pfa(1e-3, cfg.n_train()).unwrap();
        assert!((cfg.scale_factor - expect).abs() < 1e-12);
    }

    #[test]
    fn all_zero_map_yields_no_detections() {
        let cfg = CfarConfig::default();
        let mag = vec![0.0; 96 * 96];
        assert!(ca_cfar(&mag, 96, 96, &cfg).unwrap().is_empty());
    }

    #[test]
    fn dominant_single_peak_is_the_only_detection() {
        let cfg = CfarConfig::default();
        let mut mag = vec![1.0; 96 * 96];
        mag[40 * 96 + 50] = 100.0;
        let det = ca_cfar(&mag, 96, 96, &cfg).unwrap();
        assert_eq!(det.positions(), vec![(40, 50)]);
    }

    #[test]
    fn small_maps_are_rejected() {
        let cfg = CfarConfig::default();
        let mag = vec![1.0; 16 * 16];
        assert!(matches!(ca_cfar(&mag, 16, 16, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn wrap_makes_edge_peaks_equivalent_to_center_peaks() {
        let cfg = CfarConfig::default();
        let (rows, cols) = (64, 64);
        let base: Vec<f64> = (0..rows * cols).map(|i| 0.5 + 0.0001 * (i % 17) as f64).collect();
        let mut edge = base.clone();
        edge[0] = 50.0; // corner peak
        let det_edge = ca_cfar(&edge, rows, cols, &cfg).unwrap();
        assert_eq!(det_edge.positions(), vec![(0, 0)]);

        // Same field circularly shifted to the middle.
        let (sr, sc) = (30, 30);
        let mut shifted = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                shifted[((r + sr) % rows) * cols + ((c + sc) % cols)] = edge[r * cols + c];
            }
        }
        let det_center = ca_cfar(&shifted, rows, cols, &cfg).unwrap();
        assert_eq!(det_center.positions(), vec![(sr, sc)]);
    }

    #[test]
    fn detections_are_guard_local_maxima() {
        let cfg = CfarConfig::default();
        let (rows, cols) = (64, 64);
        let mut mag = vec![1.0; rows * cols];
        // A tight cluster: only the strongest survives consolidation.
        mag[30 * cols + 30] = 40.0;
        mag[30 * cols + 31] = 30.0;
        mag[31 * cols + 30] = 35.0;
        let det = ca_cfar(&mag, rows, cols, &cfg).unwrap();
        assert_eq!(det.positions(), vec![(30, 30)]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn power_of_two_rescaling_keeps_detections(seed in 0u64..500, k in -8i32..8) {
            use rand::{Rng, SeedableRng};
            let cfg = CfarConfig::default();
            let (rows, cols) = (48, 48);
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
            let mut mag: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(0.0..1.0)).collect();
            for _ in 0..4 {
                let r = rng.gen_range(0..rows);
                let c = rng.gen_range(0..cols);
                mag[r * cols + c] += rng.gen_range(5.0..50.0);
            }
            let factor = (2.0f64).powi(k);
            let scaled: Vec<f64> = mag.iter().map(|m| m * factor).collect();
            let a = ca_cfar(&mag, rows, cols, &cfg).unwrap();
            let b = ca_cfar(&scaled, rows, cols, &cfg).unwrap();
            prop_assert_eq!(a.positions(), b.positions());
        }
    }

    #[test]
    fn arbitrary_positive_rescaling_keeps_detections() {
        use rand::{Rng, SeedableRng};
        let cfg = CfarConfig::default();
        let (rows, cols) = (48, 48);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(77);
        let mut mag: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(0.0..1.0)).collect();
        mag[20 * cols + 20] += 30.0;
        mag[40 * cols + 8] += 12.0;
        let scaled: Vec<f64> = mag.iter().map(|m| m * 3.7).collect();
        let a = ca_cfar(&mag, rows, cols, &cfg).unwrap();
        let b = ca_cfar(&scaled, rows, cols, &cfg).unwrap();
        assert_eq!(a.positions(), b.positions());
        assert!(!a.is_empty());
    }
}
