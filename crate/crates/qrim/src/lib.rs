//! Desk-scale FMCW radar interference mitigation with quantized CNN
//! denoisers.
//!
//! The crate covers the full pipeline:
//!
//! - [`sim`] — synthetic IF-signal snapshots: on-grid targets, receiver
//!   noise, and burst-like non-coherent interference with exact ground truth.
//! - [`rd`] — range-Doppler processing: two DFT stages (radix-2 FFT with a
//!   direct fallback and a double-sum oracle) and two-channel normalization.
//! - [`nn`] — a minimal deterministic tensor engine: 3x3 same-padding conv,
//!   BatchNorm, ReLU/linear, MSE, Adam, training loop, checkpoint I/O.
//! - [`quant`] — quantization-aware training: sign and symmetric-integer
//!   quantizers, per-layer dynamic ranges, straight-through gradient
//!   surrogates, bit packing, and the model builder (architectures A/B).
//! - [`cfar`] — 2-D cell-averaging CFAR detection with exact false-alarm
//!   calibration and peak consolidation.
//! - [`metrics`] — greedy detection matching, precision/recall/F1, and
//!   mean +- std aggregation.
//! - [`resource`] — exact memory/operation budgets (packed weights, worst
//!   consecutive feature-map pair, parameter overhead, MACs) and Pareto
//!   scans over (memory, F1).
//! - [`experiment`] — the reproducible harness tying it together: dataset
//!   files (QRDS), model grids, bit-width sweeps, CSV emission.
//!
//! # Quick start
//!
//! ```
//! use qrim::prelude::*;
//!
//! // A scene with one target, no noise, no interference...
//! let scene = Scene {
//!     n_samples: 16,
//!     n_ramps: 16,
//!     targets: vec![Target { range_bin: 5, doppler_bin: 3, amplitude: 1.0, phase: 0.0 }],
//!     noise_std: 0.0,
//!     interference: InterferenceSpec::default(),
//!     seed: 1,
//! };
//! // ...transforms to a single exact peak of height N*M.
//! let map = synthesize_clean(&scene).unwrap().to_rd_map(Window::None);
//! assert_eq!(map.argmax(), (5, 3));
//! assert!((map.at(5, 3).norm() - 256.0).abs() < 1e-9);
//! ```
//!
//! # Runnable examples
//!
//! Each major capability has a runnable example (`cargo run --release
//! --example <name>`):
//!
//! - `synthesize_and_detect` — scene -> RD map -> CA-CFAR -> F1.
//! - `train_denoiser` — train a small real-valued denoiser end to end.
//! - `quantized_training` — QAT with binary/integer weights & activations.
//! - `memory_budget` — the standard-grid budget table.
//! - `bit_width_sweep` — weight/feature-map/total memory across bit-widths.
//! - `pareto_front` — Pareto scan over (total memory, F1) operating points.
//! - `dataset_files` — QRDS dataset and QRIM checkpoint round trips.
//!
//! The `qrim` binary exposes the same machinery as subcommands:
//! `gen-data`, `train`, `infer`, `budget`, `sweep-bits`, `pareto`.

pub mod cfar;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod nn;
pub mod quant;
pub mod rd;
pub mod resource;
pub mod sim;

pub use error::{Error, Result};

/// The common imports for pipeline work.
pub mod prelude {
    pub use crate::cfar::{ca_cfar, scale_from_pfa, CfarConfig, Detection, DetectionList};
    pub use crate::error::{Error, Result};
    pub use crate::experiment::{
        generate_all, run_experiment, Dataset, ExperimentConfig, ExperimentData,
    };
    pub use crate::metrics::{aggregate, match_and_score, MatchConfig, Score};
    pub use crate::nn::{
        fit, mse_loss, DenoiserModel, Mode, PatchSet, Scalar, Tensor, TrainConfig,
    };
    pub use crate::quant::{
        build_model, channel_counts, channel_schedule, quantize_binary, quantize_integer,
        Arch, ModelConfig, QuantSpec,
    };
    pub use crate::rd::{denormalize, dft_2d, normalize, NormalizedPatch, RdMap, Window};
    pub use crate::resource::{pareto_front, report, ParetoPoint, ResourceReport};
    pub use crate::sim::{
        add_interference, sample_random_scene, synthesize_clean, Burst, IfSignal,
        InterferenceSpec, Scene, SceneParams, Target,
    };
}
