//! Exact inference-memory and operation accounting for any model/quantization
//! configuration.
//!
//! The accounting mirrors on-chip deployment: total memory = packed conv
//! weights + the two consecutive feature maps with the largest combined size
//! + the real-valued parameter overhead (biases and BatchNorm affine
//! parameters, always stored at 32 bit). Dynamic-range scalars (one 32-bit
//! value per quantized entity) are reported separately and excluded from the
//! total, since they are negligible. Units are base-1024 (kB = 1024 B).

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::quant::{channel_schedule, ActScheme, ModelConfig, QuantSpec, WeightScheme};

/// Per-layer breakdown of a [`ResourceReport`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerResource {
    pub c_in: usize,
    pub c_out: usize,
    /// 3x3 kernel weight count (biases excluded).
    pub weights: u64,
    /// Packed storage for those weights at the configured bit-width.
    pub weight_bytes: u64,
    pub macs: u64,
}

/// Memory and operation budget for one configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceReport {
    pub config: ModelConfig,
    pub rows: usize,
    pub cols: usize,
    /// Packed conv-kernel storage (bias-free) at the weight bit-width.
    pub weight_bytes: u64,
    /// Largest sum of two consecutive feature maps at the activation
    /// bit-width. The network input counts as feature map 0.
    pub featuremap_bytes: u64,
    /// Biases (all layers) + BatchNorm gamma/beta (hidden layers after the
    /// first), stored at 32 bit regardless of quantization.
    pub overhead_bytes: u64,
    /// Dynamic-range scalars; excluded from `total_bytes`.
    pub alpha_bytes: u64,
    /// weight_bytes + featuremap_bytes + overhead_bytes.
    pub total_bytes: u64,
    /// Multiply-accumulate count for one inference.
    pub macs: u64,
    pub per_layer: Vec<LayerResource>,
}

impl ResourceReport {
    pub fn weight_kb(&self) -> f64 {
        self.weight_bytes as f64 / 1024.0
    }
    pub fn featuremap_kb(&self) -> f64 {
        self.featuremap_bytes as f64 / 1024.0
    }
    pub fn total_kb(&self) -> f64 {
        self.total_bytes as f64 / 1024.0
    }
    pub fn weight_mb(&self) -> f64 {
        self.weight_bytes as f64 / (1024.0 * 1024.0)
    }
    pub fn featuremap_mb(&self) -> f64 {
        self.featuremap_bytes as f64 / (1024.0 * 1024.0)
    }
    pub fn total_mb(&self) -> f64 {
        self.total_bytes as f64 / (1024.0 * 1024.0)
    }
    pub fn mega_ops(&self) -> f64 {
        self.macs as f64 / 1e6
    }
}

/// Bias-free 3x3 weight count: sum of 9 * c_in * c_out over the schedule.
pub fn count_weights(schedule: &[(usize, usize)]) -> u64 {
    schedule.iter().map(|&(ci, co)| 9 * ci as u64 * co as u64).sum()
}

/// Packed byte size of one layer's weights at `bits` bits per weight.
fn layer_weight_bytes(ci: usize, co: usize, bits: u8) -> u64 {
    let w = 9 * ci as u64 * co as u64;
    (w * bits as u64 + 7) / 8
}

/// Packed weight storage for the whole schedule.
pub fn weight_store_bytes(schedule: &[(usize, usize)], bits: u8) -> u64 {
    schedule.iter().map(|&(ci, co)| layer_weight_bytes(ci, co, bits)).sum()
}

/// Worst-case storage for two consecutive feature maps, each map holding
/// `channels * rows * cols` values at `act_bits` bits. Feature map 0 is the
/// network input; it is counted at the activation bit-width like every other
/// map (quantized-activation models quantize their input representation too).
pub fn featuremap_bytes(schedule: &[(usize, usize)], rows: usize, cols: usize, act_bits: u8) -> u64 {
    if schedule.is_empty() {
        return 0;
    }
    let cells = rows as u64 * cols as u64;
    let map_bytes =
        |ch: usize| -> u64 { (ch as u64 * cells * act_bits as u64 + 7) / 8 };
    let mut maps = Vec::with_capacity(schedule.len() + 1);
    maps.push(map_bytes(schedule[0].0));
    for &(_, co) in schedule {
        maps.push(map_bytes(co));
    }
    maps.windows(2).map(|w| w[0] + w[1]).max().unwrap_or(0)
}

/// Multiply-accumulate count: every 3x3 weight fires once per output cell.
pub fn count_macs(schedule: &[(usize, usize)], rows: usize, cols: usize) -> u64 {
    count_weights(schedule) * rows as u64 * cols as u64
}

/// Whether layer `idx` (0-based) of an `layers`-deep model carries BatchNorm:
/// hidden layers after the first, never the output layer.
pub fn layer_has_batchnorm(idx: usize, layers: usize) -> bool {
    idx > 0 && idx + 1 < layers
}

/// 32-bit parameter overhead in values: one bias per output channel on every
/// layer, plus gamma and beta per channel on BatchNorm layers.
pub fn overhead_values(schedule: &[(usize, usize)]) -> u64 {
    let layers = schedule.len();
    schedule
        .iter()
        .enumerate()
        .map(|(idx, &(_, co))| {
            let bn = if layer_has_batchnorm(idx, layers) { 2 * co as u64 } else { 0 };
            co as u64 + bn
        })
        .sum()
}

fn effective_weight_bits(spec: &QuantSpec) -> u8 {
    match spec.weight_scheme {
        WeightScheme::None => 32,
        _ => spec.weight_bits,
    }
}

fn effective_act_bits(spec: &QuantSpec) -> u8 {
    match spec.act_scheme {
        ActScheme::None => 32,
        _ => spec.act_bits,
    }
}

/// Full budget for one configuration on `rows x cols` snapshots.
pub fn report(config: &ModelConfig, rows: usize, cols: usize) -> Result<ResourceReport> {
    let schedule = channel_schedule(config)?;
    let w_bits = effective_weight_bits(&config.quant);
    let a_bits = effective_act_bits(&config.quant);
    let per_layer: Vec<LayerResource> = schedule
        .iter()
        .map(|&(ci, co)| LayerResource {
            c_in: ci,
            c_out: co,
            weights: 9 * ci as u64 * co as u64,
            weight_bytes: layer_weight_bytes(ci, co, w_bits),
            macs: 9 * ci as u64 * co as u64 * rows as u64 * cols as u64,
        })
        .collect();
    let weight_bytes = per_layer.iter().map(|l| l.weight_bytes).sum();
    let fm_bytes = featuremap_bytes(&schedule, rows, cols, a_bits);
    let overhead_bytes = 4 * overhead_values(&schedule);
    let quant_w_layers = if config.quant.weight_scheme == WeightScheme::None {
        0
    } else {
        schedule.len() as u64
    };
    let quant_a_stages = if config.quant.act_scheme == ActScheme::None {
        0
    } else {
        schedule.len() as u64 + 1 // hidden + output activations plus the input stage
    };
    let alpha_bytes = 4 * (quant_w_layers + quant_a_stages);
    Ok(ResourceReport {
        config: *config,
        rows,
        cols,
        weight_bytes,
        featuremap_bytes: fm_bytes,
        overhead_bytes,
        alpha_bytes,
        total_bytes: weight_bytes + fm_bytes + overhead_bytes,
        macs: count_macs(&schedule, rows, cols),
        per_layer,
    })
}

// ---------------------------------------------------------------------------
// Pareto scan
// ---------------------------------------------------------------------------

/// One candidate for the Pareto scan: anything with a memory cost and an F1.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoPoint<K> {
    pub key: K,
    pub memory_bytes: f64,
    pub f1: f64,
}

/// Keys of the points not dominated in (memory down, F1 up), in input order.
/// A point is dominated if another is at least as good on both axes and
/// strictly better on one.
pub fn pareto_front<K: Clone>(points: &[ParetoPoint<K>]) -> Vec<K> {
    points
        .iter()
        .filter(|p| {
            !points.iter().any(|q| {
                q.memory_bytes <= p.memory_bytes
                    && q.f1 >= p.f1
                    && (q.memory_bytes < p.memory_bytes || q.f1 > p.f1)
            })
        })
        .map(|p| p.key.clone())
        .collect()
}

/// Pareto scan over model configurations with externally supplied scores.
pub fn pareto_scan(
    configs: &[ModelConfig],
    scores: &HashMap<ModelConfig, f64>,
    rows: usize,
    cols: usize,
) -> Result<Vec<ModelConfig>> {
    let mut points = Vec::with_capacity(configs.len());
    for cfg in configs {
        let f1 = *scores
            .get(cfg)
            .ok_or_else(|| Error::Usage(format!("missing score for {} {}", cfg.name(), cfg.quant.tag())))?;
        let rep = report(cfg, rows, cols)?;
        points.push(ParetoPoint { key: *cfg, memory_bytes: rep.total_bytes as f64, f1 });
    }
    Ok(pareto_front(&points))
}

// ---------------------------------------------------------------------------
// Emission helpers
// ---------------------------------------------------------------------------

/// Short quantization label: R (real), B (binary weights), S (sign
/// activations), otherwise the full `wXaY` tag.
pub fn quant_label(spec: &QuantSpec) -> String {
    match (spec.weight_scheme, spec.act_scheme) {
        (WeightScheme::None, ActScheme::None) => "R".to_string(),
        (WeightScheme::BinarySign, ActScheme::None) => "B".to_string(),
        (WeightScheme::None, ActScheme::BinarySign) => "S".to_string(),
        _ => spec.tag(),
    }
}

/// The standard model grid used by the budget tables: the real-valued
/// architectures spanning 8 to 1024 channels.
pub fn standard_grid() -> Vec<ModelConfig> {
    use crate::quant::Arch::{A, B};
    let real = QuantSpec::real();
    [
        (3, 8, B),
        (3, 8, A),
        (3, 16, B),
        (3, 16, A),
        (7, 32, B),
        (7, 32, A),
        (7, 256, B),
        (7, 256, A),
        (3, 1024, B),
        (5, 1024, B),
        (7, 1024, B),
        (3, 1024, A),
        (5, 1024, A),
        (7, 1024, A),
    ]
    .iter()
    .map(|&(l, c, arch)| ModelConfig::new(l, c, arch, real).expect("stock grid is valid"))
    .collect()
}

/// CSV rows (with header) for a list of reports.
pub fn reports_to_csv(reports: &[ResourceReport]) -> String {
    let mut out = String::from(
        "model,quant,weight_bits,act_bits,weight_bytes,featuremap_bytes,overhead_bytes,alpha_bytes,total_bytes,macs,weight_mb,featuremap_mb,total_mb,mega_ops\n",
    );
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.3}\n",
            r.config.name(),
            quant_label(&r.config.quant),
            r.config.quant.weight_bits,
            r.config.quant.act_bits,
            r.weight_bytes,
            r.featuremap_bytes,
            r.overhead_bytes,
            r.alpha_bytes,
            r.total_bytes,
            r.macs,
            r.weight_mb(),
            r.featuremap_mb(),
            r.total_mb(),
            r.mega_ops(),
        ));
    }
    out
}

/// Markdown table with the budget-summary column layout.
pub fn reports_to_markdown(reports: &[ResourceReport]) -> String {
    let mut out = String::from(
        "| Name | L | C | A | Q | Weights [MB] | Feature-Maps [MB] | Total [MB] | Operations *10^6 |\n",
    );
    out.push_str("|---|---|---|---|---|---|---|---|---|\n");
    for r in reports {
        let arch = match r.config.arch {
            crate::quant::Arch::A => "A",
            crate::quant::Arch::B => "B",
        };
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {:.3} | {:.2} | {:.2} | {:.0} |\n",
            r.config.name(),
            r.config.layers,
            r.config.channels,
            arch,
            quant_label(&r.config.quant),
            r.weight_mb(),
            r.featuremap_mb(),
            r.total_mb(),
            r.mega_ops(),
        ));
    }
    out
}

/// Canonical snapshot cell count used by the published budget tables.
pub const REFERENCE_CELLS: usize = 9216;

/// Default snapshot edge (96 x 96 cells = [`REFERENCE_CELLS`]).
pub const DEFAULT_EDGE: usize = 96;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::Arch;

    fn cfg(name: &str, w: u8, a: u8) -> ModelConfig {
        ModelConfig::from_name(name, QuantSpec::from_bits(w, a).unwrap()).unwrap()
    }

    #[test]
    fn weight_counts() {
        let sched = channel_schedule(&cfg("L3-C16-B", 32, 32)).unwrap();
        assert_eq!(count_weights(&sched), 1584);
        let sched = channel_schedule(&cfg("L3-C8-B", 32, 32)).unwrap();
        assert_eq!(count_weights(&sched), 504);
        assert_eq!(count_weights(&[(2, 2)]), 36);
        assert_eq!(count_weights(&[]), 0);
    }

    #[test]
    fn featuremap_pairs() {
        // 24 channels * 9216 cells * 4 B = 864 kB for L3-C16-B at 32 bit.
        let sched = channel_schedule(&cfg("L3-C16-B", 32, 32)).unwrap();
        assert_eq!(featuremap_bytes(&sched, 96, 96, 32), 884_736);
        // Binary activations: (256+256) * 9216 / 8 B.
        let sched = channel_schedule(&cfg("L7-C256-A", 32, 1)).unwrap();
        assert_eq!(featuremap_bytes(&sched, 96, 96, 1), 589_824);
        // Single 2->2 layer at 32 bit: (2+2) * 9216 * 4 B = 144 kB.
        assert_eq!(featuremap_bytes(&[(2, 2)], 96, 96, 32), 147_456);
    }

    #[test]
    fn mac_counts() {
        let sched = channel_schedule(&cfg("L3-C8-B", 32, 32)).unwrap();
        assert_eq!(count_macs(&sched, 96, 96), 4_644_864);
        let sched = channel_schedule(&cfg("L7-C256-B", 32, 32)).unwrap();
        assert_eq!(count_weights(&sched), 397_584);
        assert_eq!(count_macs(&sched, 96, 96), 3_664_134_144);
        assert_eq!(count_macs(&[], 96, 96), 0);
    }

    #[test]
    fn overhead_counts_biases_and_bn_affine() {
        // L3-C16-B: biases 16+8+2 = 26, BN on the middle layer only: 2*8 = 16.
        let sched = channel_schedule(&cfg("L3-C16-B", 32, 32)).unwrap();
        assert_eq!(overhead_values(&sched), 42);
        // L7-C256-A: biases 6*256+2, BN on layers 2..6: 2*5*256.
        let sched = channel_schedule(&cfg("L7-C256-A", 32, 32)).unwrap();
        assert_eq!(overhead_values(&sched), 1538 + 2560);
        assert!(layer_has_batchnorm(1, 3));
        assert!(!layer_has_batchnorm(0, 3));
        assert!(!layer_has_batchnorm(2, 3));
    }

    #[test]
    fn report_matches_reference_rows() {
        // Sign-activation L7-C256-A: 11.285 / 0.56 / 11.86 MB.
        let r = report(&cfg("L7-C256-A", 32, 1), 96, 96).unwrap();
        assert_eq!(r.weight_bytes, 11_833_344);
        assert_eq!(r.featuremap_bytes, 589_824);
        assert!((r.total_mb() - 11.86).abs() < 0.005, "total {}", r.total_mb());

        // Binary-weight L7-C32-A: 0.006 / 2.25 / 2.26 MB.
        let r = report(&cfg("L7-C32-A", 1, 32), 96, 96).unwrap();
        assert_eq!(r.weight_bytes, 5_904);
        assert_eq!(r.featuremap_bytes, 2_359_296);
        assert!((r.total_mb() - 2.26).abs() < 0.005, "total {}", r.total_mb());

        // 8-bit L3-C16-B: 217.71 kB total.
        let r = report(&cfg("L3-C16-B", 8, 8), 96, 96).unwrap();
        assert_eq!(r.weight_bytes, 1_584);
        assert_eq!(r.featuremap_bytes, 221_184);
        assert_eq!(r.overhead_bytes, 168);
        assert_eq!(r.total_bytes, 222_936);
        assert!((r.total_kb() - 217.71).abs() < 0.005, "total {}", r.total_kb());
    }

    #[test]
    fn binary_weights_are_32x_smaller_on_the_standard_grid() {
        for base in standard_grid() {
            let real = report(&base, 96, 96).unwrap();
            let bin_cfg =
                ModelConfig::new(base.layers, base.channels, base.arch, QuantSpec::from_bits(1, 32).unwrap())
                    .unwrap();
            let bin = report(&bin_cfg, 96, 96).unwrap();
            assert_eq!(real.weight_bytes, 32 * bin.weight_bytes, "{}", base.name());
        }
    }

    #[test]
    fn monotonic_in_bits_and_channels() {
        let fields = |r: &ResourceReport| {
            (r.weight_bytes, r.featuremap_bytes, r.overhead_bytes, r.total_bytes, r.macs)
        };
        let mut prev: Option<(u64, u64, u64, u64, u64)> = None;
        for bits in [1u8, 2, 4, 6, 8, 32] {
            let r = report(&cfg("L3-C16-B", bits, bits), 96, 96).unwrap();
            if let Some(p) = prev {
                let c = fields(&r);
                assert!(c.0 >= p.0 && c.1 >= p.1 && c.2 >= p.2 && c.3 >= p.3 && c.4 >= p.4);
            }
            prev = Some(fields(&r));
        }
        let mut prev: Option<(u64, u64, u64, u64, u64)> = None;
        for ch in [8usize, 16, 32, 64] {
            let cfg = ModelConfig::new(3, ch, Arch::B, QuantSpec::real()).unwrap();
            let r = report(&cfg, 96, 96).unwrap();
            if let Some(p) = prev {
                let c = fields(&r);
                assert!(c.0 >= p.0 && c.1 >= p.1 && c.2 >= p.2 && c.3 >= p.3 && c.4 >= p.4);
            }
            prev = Some(fields(&r));
        }
    }

    #[test]
    fn pareto_basics() {
        let single = vec![ParetoPoint { key: "a", memory_bytes: 10.0, f1: 0.5 }];
        assert_eq!(pareto_front(&single), vec!["a"]);

        let two = vec![
            ParetoPoint { key: "good", memory_bytes: 5.0, f1: 0.9 },
            ParetoPoint { key: "bad", memory_bytes: 10.0, f1: 0.5 },
        ];
        assert_eq!(pareto_front(&two), vec!["good"]);

        // Incomparable points both stay.
        let two = vec![
            ParetoPoint { key: "small", memory_bytes: 5.0, f1: 0.5 },
            ParetoPoint { key: "strong", memory_bytes: 10.0, f1: 0.9 },
        ];
        assert_eq!(pareto_front(&two), vec!["small", "strong"]);
    }

    #[test]
    fn pareto_scan_requires_scores() {
        let configs = vec![cfg("L3-C8-B", 32, 32)];
        let scores = HashMap::new();
        assert!(matches!(
            pareto_scan(&configs, &scores, 96, 96),
            Err(Error::Usage(_))
        ));
    }
}
