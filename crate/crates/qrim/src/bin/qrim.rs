//! Command-line front end: dataset generation, training runs, inference,
//! memory budgets, bit-width sweeps and Pareto scans.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qrim::cfar::CfarConfig;
use qrim::error::{Error, Result};
use qrim::experiment::{
    generate_all, read_all, read_dataset, run_experiment, write_all, ExperimentConfig,
    ExperimentSummary,
};
use qrim::metrics::MatchConfig;
use qrim::quant::{ModelConfig, QuantSpec};
use qrim::resource::{
    pareto_front, report, reports_to_csv, reports_to_markdown, standard_grid, ParetoPoint,
    DEFAULT_EDGE,
};

#[derive(Parser)]
#[command(name = "qrim", about = "FMCW radar interference mitigation with quantized CNN denoisers", version)]
struct Cli {
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the dataset seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config's output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the train/val/test QRDS dataset files.
    GenData(ConfigArgs),
    /// Train the configured model grid and emit result CSVs.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Dataset directory (generated on the fly when omitted).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Run in 64-bit test precision instead of f32.
        #[arg(long)]
        f64: bool,
    },
    /// Score a checkpoint against a QRDS dataset.
    Infer {
        /// QRIM checkpoint path.
        #[arg(long)]
        checkpoint: PathBuf,
        /// QRDS dataset file.
        #[arg(long)]
        data: PathBuf,
        /// Per-snapshot score CSV to write.
        #[arg(long)]
        out: PathBuf,
        /// Optional QRDS dump of denoised maps.
        #[arg(long)]
        dump: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run in 64-bit test precision instead of f32.
        #[arg(long)]
        f64: bool,
    },
    /// Memory/operation budgets for the configured grid (or the standard
    /// model grid when no config is given).
    Budget {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Also print a Markdown table.
        #[arg(long)]
        markdown: bool,
        /// Snapshot edge length (rows = cols).
        #[arg(long, default_value_t = DEFAULT_EDGE)]
        edge: usize,
    },
    /// Budget sweep over bit-widths for one base model.
    SweepBits {
        /// Base model name, e.g. L3-C16-B.
        #[arg(long, default_value = "L3-C16-B")]
        model: String,
        /// Comma-separated bit-widths for weights and activations alike.
        #[arg(long, default_value = "1,2,4,6,8,32")]
        bits: String,
        #[arg(long, default_value_t = DEFAULT_EDGE)]
        edge: usize,
        /// CSV output path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pareto front over (total memory, F1) points from a CSV.
    Pareto {
        /// Input CSV with header `id,total_bytes,f1` (extra columns ignored).
        #[arg(long)]
        input: PathBuf,
        /// CSV output path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.dataset.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.display().to_string();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_summary(summary: &ExperimentSummary) {
    println!(
        "baselines: clean F1 {:.4}, interfered F1 {:.4}",
        summary.baseline_clean.f1, summary.baseline_interfered.f1
    );
    for a in &summary.aggregates {
        println!(
            "{:>10} {:>6}: F1 {:.4} +- {:.4} over {} runs, total {:.2} kB, {:.0}e6 MACs",
            a.model,
            a.quant,
            a.f1_mean,
            a.f1_std,
            a.n,
            a.resource.total_kb(),
            a.resource.mega_ops()
        );
    }
    if summary.failures > 0 {
        println!("{} run(s) failed", summary.failures);
    }
}

fn cmd_gen_data(args: &ConfigArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let data = generate_all(&cfg.dataset)?;
    let dir = PathBuf::from(&cfg.output_dir).join("data");
    write_all(&data, &dir)?;
    println!(
        "wrote {} train / {} val / {} test snapshots ({}x{}) to {}",
        data.train.len(),
        data.val.len(),
        data.test.len(),
        data.train.rows,
        data.train.cols,
        dir.display()
    );
    Ok(())
}

fn cmd_train(args: &ConfigArgs, data_dir: &Option<PathBuf>, use_f64: bool) -> Result<usize> {
    let cfg = load_config(args)?;
    let data = match data_dir {
        Some(dir) => read_all(dir)?,
        None => generate_all(&cfg.dataset)?,
    };
    let out_dir = PathBuf::from(&cfg.output_dir);
    let summary = if use_f64 {
        run_experiment::<f64>(&cfg, &data, Some(&out_dir))?
    } else {
        run_experiment::<f32>(&cfg, &data, Some(&out_dir))?
    };
    print_summary(&summary);
    println!("results written to {}", out_dir.display());
    Ok(summary.failures)
}

fn cfar_and_match(config: &Option<PathBuf>) -> Result<(CfarConfig, MatchConfig)> {
    let cfg = match config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    Ok((cfg.cfar.to_config()?, cfg.matching))
}

fn cmd_infer(
    checkpoint: &Path,
    data: &Path,
    out: &Path,
    dump: Option<&Path>,
    config: &Option<PathBuf>,
    use_f64: bool,
) -> Result<()> {
    let dataset = read_dataset(data)?;
    let (cfar, matching) = cfar_and_match(config)?;
    let score = if use_f64 {
        qrim::experiment::infer::<f64>(checkpoint, &dataset, out, dump, &cfar, &matching)?
    } else {
        qrim::experiment::infer::<f32>(checkpoint, &dataset, out, dump, &cfar, &matching)?
    };
    println!(
        "{}: precision {:.4}, recall {:.4}, F1 {:.4} over {} snapshots",
        checkpoint.display(),
        score.precision,
        score.recall,
        score.f1,
        dataset.len()
    );
    Ok(())
}

fn cmd_budget(args: &ConfigArgs, markdown: bool, edge: usize) -> Result<()> {
    let grid: Vec<ModelConfig> = match &args.config {
        Some(_) => {
            let cfg = load_config(args)?;
            cfg.models.iter().map(|m| m.to_model_config()).collect::<Result<_>>()?
        }
        None => standard_grid(),
    };
    let reports: Vec<_> = grid.iter().map(|c| report(c, edge, edge)).collect::<Result<_>>()?;
    let csv = reports_to_csv(&reports);
    match &args.out {
        Some(path) => {
            std::fs::write(path, &csv)?;
            println!("budget CSV written to {}", path.display());
        }
        None => print!("{csv}"),
    }
    if markdown {
        print!("{}", reports_to_markdown(&reports));
    }
    Ok(())
}

fn cmd_sweep_bits(model: &str, bits: &str, edge: usize, out: &Option<PathBuf>) -> Result<()> {
    let mut reports = Vec::new();
    for part in bits.split(',') {
        let b: u8 = part
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad bit-width '{part}'")))?;
        let cfg = ModelConfig::from_name(model, QuantSpec::uniform(b)?)?;
        reports.push(report(&cfg, edge, edge)?);
    }
    let mut csv = String::from("bits,model,weight_kb,featuremap_kb,overhead_kb,total_kb\n");
    for r in &reports {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.config.quant.weight_bits,
            r.config.name(),
            r.weight_kb(),
            r.featuremap_kb(),
            r.overhead_bytes as f64 / 1024.0,
            r.total_kb(),
        ));
    }
    match out {
        Some(path) => {
            std::fs::write(path, &csv)?;
            println!("sweep CSV written to {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_pareto(input: &Path, out: &Option<PathBuf>) -> Result<()> {
    let text = std::fs::read_to_string(input)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Dataset("empty pareto input".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |name: &str| -> Result<usize> {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| Error::Dataset(format!("missing column '{name}' in {header}")))
    };
    let id_col = find("id").or_else(|_| find("model"))?;
    let mem_col = find("total_bytes")?;
    let f1_col = find("f1").or_else(|_| find("f1_mean"))?;
    let mut points = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parse = |i: usize| -> Result<f64> {
            fields
                .get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Dataset(format!("bad numeric field in line '{line}'")))
        };
        points.push(ParetoPoint {
            key: fields[id_col].trim().to_string(),
            memory_bytes: parse(mem_col)?,
            f1: parse(f1_col)?,
        });
    }
    let front = pareto_front(&points);
    let keep: HashMap<&String, ()> = front.iter().map(|k| (k, ())).collect();
    let mut csv = String::from("id,total_bytes,f1\n");
    for p in &points {
        if keep.contains_key(&p.key) {
            csv.push_str(&format!("{},{},{}\n", p.key, p.memory_bytes, p.f1));
        }
    }
    match out {
        Some(path) => {
            std::fs::write(path, &csv)?;
            println!(
                "pareto front ({} of {} points) written to {}",
                front.len(),
                points.len(),
                path.display()
            );
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<usize> {
    match &cli.command {
        Command::GenData(args) => cmd_gen_data(args).map(|_| 0),
        Command::Train { cfg, data, f64 } => cmd_train(cfg, data, *f64),
        Command::Infer { checkpoint, data, out, dump, config, f64 } => {
            cmd_infer(checkpoint, data, out, dump.as_deref(), config, *f64).map(|_| 0)
        }
        Command::Budget { cfg, markdown, edge } => cmd_budget(cfg, *markdown, *edge).map(|_| 0),
        Command::SweepBits { model, bits, edge, out } => {
            cmd_sweep_bits(model, bits, *edge, out).map(|_| 0)
        }
        Command::Pareto { input, out } => cmd_pareto(input, out).map(|_| 0),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("cannot configure {threads} threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(&cli) {
        // Exit code mirrors the number of failed grid runs (0 = all green).
        Ok(failures) => ExitCode::from(failures.min(255) as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
