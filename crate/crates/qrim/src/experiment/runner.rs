//! Experiment orchestration: train the model grid on a generated dataset,
//! score every run with CA-CFAR + F1 on the test split, budget each
//! configuration, and emit deterministic CSVs (rows are sorted by grid
//! order; all float text uses shortest round-trip formatting).

use std::fs;
use std::path::{Path, PathBuf};

use crate::cfar::{ca_cfar, CfarConfig};
use crate::error::{Error, Result};
use crate::experiment::config::{mix_seed, ExperimentConfig};
use crate::experiment::dataset::{Dataset, ExperimentData};
use crate::metrics::{match_and_score, MatchConfig, Score};
use crate::nn::checkpoint::{load_model, save_model};
use crate::nn::{fit, DenoiserModel, PatchSet, Scalar, TrainConfig};
use crate::quant::build_model;
use crate::rd::{denormalize, normalize, scale_by, NormalizedPatch};
use crate::resource::{quant_label, report, ResourceReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub model: String,
    pub quant: String,
    pub weight_bits: u8,
    pub act_bits: u8,
    pub repeat: usize,
    pub seed: u64,
    pub status: RunStatus,
    pub epochs: usize,
    pub val_mse: f64,
    pub score: Score,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct AggregateRecord {
    pub model: String,
    pub quant: String,
    pub weight_bits: u8,
    pub act_bits: u8,
    /// Number of successful repeats behind the mean.
    pub n: usize,
    pub f1_mean: f64,
    pub f1_std: f64,
    pub precision_mean: f64,
    pub recall_mean: f64,
    pub resource: ResourceReport,
}

#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub config_hash: String,
    pub records: Vec<RunRecord>,
    pub aggregates: Vec<AggregateRecord>,
    pub baseline_clean: Score,
    pub baseline_interfered: Score,
    pub failures: usize,
}

/// Normalized training pairs: inputs scaled by the interfered map's maximum
/// magnitude, clean targets scaled by the same factor.
pub fn build_patchset<S: Scalar>(ds: &Dataset) -> Result<PatchSet<S>> {
    let mut set = PatchSet::new(ds.rows, ds.cols);
    for i in 0..ds.len() {
        let interfered = ds.map_of(i, true);
        let patch = normalize(&interfered)
            .map_err(|e| Error::Dataset(format!("snapshot {i}: {e}")))?;
        let clean = ds.map_of(i, false);
        let target = scale_by(&clean, patch.scale)?;
        set.scales.push(patch.scale);
        set.inputs.push(patch.channels.iter().map(|&v| S::from_f64(v)).collect());
        set.targets.push(target.channels.iter().map(|&v| S::from_f64(v)).collect());
    }
    Ok(set)
}

/// Micro-averaged detection score of raw maps (no model): the clean- and
/// interfered-input CFAR baselines.
pub fn score_raw_maps(
    ds: &Dataset,
    interfered: bool,
    cfar: &CfarConfig,
    matching: &MatchConfig,
) -> Result<Score> {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_count = 0usize;
    for i in 0..ds.len() {
        let map = ds.map_of(i, interfered);
        let det = ca_cfar(&map.magnitude(), ds.rows, ds.cols, cfar)?;
        let s = match_and_score(&det, &ds.truth_of(i), matching);
        tp += s.true_positives;
        fp += s.false_positives;
        fn_count += s.false_negatives;
    }
    Ok(Score::from_counts(tp, fp, fn_count))
}

/// Micro-averaged detection score of a model's denoised maps over a dataset.
pub fn evaluate_model<S: Scalar>(
    model: &DenoiserModel<S>,
    ds: &Dataset,
    cfar: &CfarConfig,
    matching: &MatchConfig,
) -> Result<Score> {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_count = 0usize;
    for i in 0..ds.len() {
        let s = score_one_snapshot(model, ds, i, cfar, matching)?.0;
        tp += s.true_positives;
        fp += s.false_positives;
        fn_count += s.false_negatives;
    }
    Ok(Score::from_counts(tp, fp, fn_count))
}

/// Denoise one snapshot and score it; also returns the denoised patch for
/// optional dumping.
pub fn score_one_snapshot<S: Scalar>(
    model: &DenoiserModel<S>,
    ds: &Dataset,
    index: usize,
    cfar: &CfarConfig,
    matching: &MatchConfig,
) -> Result<(Score, NormalizedPatch)> {
    let interfered = ds.map_of(index, true);
    let patch = normalize(&interfered)?;
    let x = patch.to_tensor::<S>();
    let out = model.forward_eval(&x)?;
    let denoised = NormalizedPatch::from_tensor(&out, patch.scale)?;
    let map = denormalize(&denoised)?;
    let det = ca_cfar(&map.magnitude(), ds.rows, ds.cols, cfar)?;
    let score = match_and_score(&det, &ds.truth_of(index), matching);
    Ok((score, denoised))
}

/// Train and evaluate the whole grid. Checkpoints and CSVs land under
/// `out_dir` when given; failed runs are recorded and never abort the grid.
pub fn run_experiment<S: Scalar>(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    out_dir: Option<&Path>,
) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let cfar = cfg.cfar.to_config()?;
    let matching = cfg.matching;
    let config_hash = cfg.hash();

    let train_set: PatchSet<S> = build_patchset(&data.train)?;
    let val_set: PatchSet<S> = build_patchset(&data.val)?;

    let baseline_clean = score_raw_maps(&data.test, false, &cfar, &matching)?;
    let baseline_interfered = score_raw_maps(&data.test, true, &cfar, &matching)?;

    let mut records = Vec::new();
    let mut aggregates = Vec::new();
    let mut failures = 0usize;

    for (mi, entry) in cfg.models.iter().enumerate() {
        let model_cfg = entry.to_model_config()?;
        let resource = report(&model_cfg, data.train.rows, data.train.cols)?;
        let mut ok_scores: Vec<Score> = Vec::new();
        for repeat in 0..cfg.training.repeats {
            let run_seed = mix_seed(&[cfg.dataset.seed, 0x7241, mi as u64, repeat as u64]);
            let mut model = build_model::<S>(&model_cfg, run_seed)?;
            let train_cfg = TrainConfig {
                lr: cfg.training.lr,
                batch: cfg.training.batch,
                max_epochs: cfg.training.max_epochs,
                patience: cfg.training.patience,
                seed: mix_seed(&[run_seed, 0x5487]),
            };
            let outcome = fit(&mut model, &train_set, &val_set, &train_cfg)?;
            let mut record = RunRecord {
                model: model_cfg.name(),
                quant: quant_label(&model_cfg.quant),
                weight_bits: model_cfg.quant.weight_bits,
                act_bits: model_cfg.quant.act_bits,
                repeat,
                seed: run_seed,
                status: if outcome.failed { RunStatus::Failed } else { RunStatus::Ok },
                epochs: outcome.epochs,
                val_mse: outcome.best_val_mse,
                score: Score::from_counts(0, 0, 0),
                checkpoint: None,
            };
            if outcome.failed {
                failures += 1;
                records.push(record);
                continue;
            }
            if let Some(dir) = out_dir {
                let path = dir
                    .join("checkpoints")
                    .join(format!("{}_{}_r{repeat}.qrim", model_cfg.name(), model_cfg.quant.tag()));
                save_model(&model, &path)?;
                // Evaluate through the reloaded checkpoint so scores describe
                // exactly what is on disk.
                model = load_model::<S>(&path)?;
                record.checkpoint = Some(path);
            }
            record.score = evaluate_model(&model, &data.test, &cfar, &matching)?;
            ok_scores.push(record.score);
            records.push(record);
        }
        let (f1_mean, f1_std) = if ok_scores.is_empty() {
            (0.0, 0.0)
        } else {
            crate::metrics::aggregate(&ok_scores)?
        };
        let n = ok_scores.len();
        let pmean = if n > 0 { ok_scores.iter().map(|s| s.precision).sum::<f64>() / n as f64 } else { 0.0 };
        let rmean = if n > 0 { ok_scores.iter().map(|s| s.recall).sum::<f64>() / n as f64 } else { 0.0 };
        aggregates.push(AggregateRecord {
            model: model_cfg.name(),
            quant: quant_label(&model_cfg.quant),
            weight_bits: model_cfg.quant.weight_bits,
            act_bits: model_cfg.quant.act_bits,
            n,
            f1_mean,
            f1_std,
            precision_mean: pmean,
            recall_mean: rmean,
            resource,
        });
    }

    let summary = ExperimentSummary {
        config_hash,
        records,
        aggregates,
        baseline_clean,
        baseline_interfered,
        failures,
    };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("results.csv"), results_csv(&summary))?;
        fs::write(dir.join("baselines.csv"), baselines_csv(&summary))?;
        fs::write(dir.join("f1_vs_memory.csv"), f1_vs_memory_csv(&summary))?;
        fs::write(dir.join("f1_vs_bits.csv"), f1_vs_bits_csv(&summary))?;
    }
    Ok(summary)
}

fn f(v: f64) -> String {
    format!("{v}")
}

/// Per-run rows plus one aggregate row per grid entry.
pub fn results_csv(s: &ExperimentSummary) -> String {
    let mut out = String::from(
        "kind,model,quant,weight_bits,act_bits,repeat,seed,config_hash,status,epochs,val_mse,precision,recall,f1,f1_std,tp,fp,fn,weight_bytes,featuremap_bytes,overhead_bytes,total_bytes,macs\n",
    );
    for a in &s.aggregates {
        for r in s.records.iter().filter(|r| r.model == a.model && r.quant == a.quant) {
            let status = match r.status {
                RunStatus::Ok => "ok",
                RunStatus::Failed => "failed",
            };
            out.push_str(&format!(
                "run,{},{},{},{},{},{},{},{},{},{},{},{},{},,{},{},{},{},{},{},{},{}\n",
                r.model,
                r.quant,
                r.weight_bits,
                r.act_bits,
                r.repeat,
                r.seed,
                s.config_hash,
                status,
                r.epochs,
                f(r.val_mse),
                f(r.score.precision),
                f(r.score.recall),
                f(r.score.f1),
                r.score.true_positives,
                r.score.false_positives,
                r.score.false_negatives,
                a.resource.weight_bytes,
                a.resource.featuremap_bytes,
                a.resource.overhead_bytes,
                a.resource.total_bytes,
                a.resource.macs,
            ));
        }
        out.push_str(&format!(
            "aggregate,{},{},{},{},,,{},,,,{},{},{},{},,,,{},{},{},{},{}\n",
            a.model,
            a.quant,
            a.weight_bits,
            a.act_bits,
            s.config_hash,
            f(a.precision_mean),
            f(a.recall_mean),
            f(a.f1_mean),
            f(a.f1_std),
            a.resource.weight_bytes,
            a.resource.featuremap_bytes,
            a.resource.overhead_bytes,
            a.resource.total_bytes,
            a.resource.macs,
        ));
    }
    out
}

pub fn baselines_csv(s: &ExperimentSummary) -> String {
    let mut out = String::from("input,config_hash,precision,recall,f1,tp,fp,fn\n");
    for (name, sc) in [("clean", &s.baseline_clean), ("interfered", &s.baseline_interfered)] {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            name,
            s.config_hash,
            f(sc.precision),
            f(sc.recall),
            f(sc.f1),
            sc.true_positives,
            sc.false_positives,
            sc.false_negatives,
        ));
    }
    out
}

/// Aggregate F1 against total inference memory, one row per grid entry.
pub fn f1_vs_memory_csv(s: &ExperimentSummary) -> String {
    let mut out = String::from("model,quant,total_bytes,total_mb,f1_mean,f1_std,macs\n");
    for a in &s.aggregates {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            a.model,
            a.quant,
            a.resource.total_bytes,
            f(a.resource.total_mb()),
            f(a.f1_mean),
            f(a.f1_std),
            a.resource.macs,
        ));
    }
    out
}

/// Bit-width sweep view: rows for grid entries with uniform weight/act bits.
pub fn f1_vs_bits_csv(s: &ExperimentSummary) -> String {
    let mut out = String::from("bits,model,weight_kb,featuremap_kb,total_kb,f1_mean,f1_std\n");
    for a in &s.aggregates {
        if a.weight_bits != a.act_bits {
            continue;
        }
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            a.weight_bits,
            a.model,
            f(a.resource.weight_kb()),
            f(a.resource.featuremap_kb()),
            f(a.resource.total_kb()),
            f(a.f1_mean),
            f(a.f1_std),
        ));
    }
    out
}

/// Score a checkpoint against a dataset; per-snapshot CSV rows plus a final
/// micro-averaged row, optionally dumping denoised maps alongside the inputs.
pub fn infer<S: Scalar>(
    checkpoint: &Path,
    dataset: &Dataset,
    out_csv: &Path,
    dump: Option<&Path>,
    cfar: &CfarConfig,
    matching: &MatchConfig,
) -> Result<Score> {
    let model = load_model::<S>(checkpoint)?;
    let mut rows = String::from("snapshot,precision,recall,f1,tp,fp,fn\n");
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_count = 0usize;
    let mut dumped = dataset.clone();
    for i in 0..dataset.len() {
        let (s, denoised) = score_one_snapshot(&model, dataset, i, cfar, matching)?;
        tp += s.true_positives;
        fp += s.false_positives;
        fn_count += s.false_negatives;
        rows.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            i,
            f(s.precision),
            f(s.recall),
            f(s.f1),
            s.true_positives,
            s.false_positives,
            s.false_negatives
        ));
        if dump.is_some() {
            let map = denormalize(&denoised)?;
            dumped.records[i].clean = map
                .data()
                .iter()
                .map(|z| num_complex::Complex32::new(z.re as f32, z.im as f32))
                .collect();
        }
    }
    let total = Score::from_counts(tp, fp, fn_count);
    rows.push_str(&format!(
        "all,{},{},{},{},{},{}\n",
        f(total.precision),
        f(total.recall),
        f(total.f1),
        total.true_positives,
        total.false_positives,
        total.false_negatives
    ));
    if let Some(dir) = out_csv.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(out_csv, rows)?;
    if let Some(path) = dump {
        // Denoised maps ride in the clean-map slot of the QRDS layout.
        crate::experiment::dataset::write_dataset(&dumped, path)?;
    }
    Ok(total)
}
