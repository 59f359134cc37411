//! Subcommands behind the `detcal` binary.
//!
//! Exit codes: 0 success, 1 I/O or other failure, 2 malformed input,
//! 3 nothing left to evaluate, 4 training diverged. Data files contain no
//! timestamps; progress notes go to stderr.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::calibration::temperature::{apply_temperature, argmax, fit_temperature, TemperatureLink};
use crate::calibration::{Ablation, TrainConfig};
use crate::coco;
use crate::error::{Error, Result};
use crate::geometry::{match_detections, DEFAULT_IOU_THRESHOLD};
use crate::metrics::{
    d_ece, reliability_csv_string, reliability_json, reliability_table, CalibrationReport, DEFAULT_BINS,
};
use crate::numeric;
use crate::toy::{self, ExperimentRun};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_EMPTY: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;

/// Environment variable capping the worker count (0 = automatic).
pub const THREADS_ENV: &str = "DETCAL_THREADS";

#[derive(Debug, Parser)]
#[command(name = "detcal", version, about = "Calibration metrics and mechanisms for object detectors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Match COCO detections to annotations and report D-ECE.
    Evaluate(EvaluateArgs),
    /// Convert a report into reliability-diagram rows.
    Reliability(ReliabilityArgs),
    /// Fit a post-hoc temperature on held-out logits.
    FitTemperature(FitTemperatureArgs),
    /// Train the synthetic detector head and report calibration.
    ToyTrain(ToyTrainArgs),
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// COCO results JSON.
    #[arg(long)]
    pub preds: PathBuf,
    /// COCO annotation JSON.
    #[arg(long)]
    pub gts: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    /// IoU threshold for a true positive.
    #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
    pub iou: f64,
    /// Drop detections scoring below this value.
    #[arg(long, default_value_t = 0.0)]
    pub score_floor: f64,
    /// Write the report as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct ReliabilityArgs {
    /// Report JSON written by `evaluate --out` or `toy-train`.
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
    pub format: TableFormat,
}

#[derive(Debug, Args)]
pub struct FitTemperatureArgs {
    /// CSV of logits, one row per sample, no header.
    #[arg(long)]
    pub logits: PathBuf,
    /// One zero-based class index per line, aligned with the logit rows.
    #[arg(long)]
    pub labels: PathBuf,
    /// softmax-NLL or sigmoid-NLL.
    #[arg(long, default_value = "softmax-NLL")]
    pub mode: String,
    /// Write per-row predictions and rescaled confidences as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ToyMode {
    Baseline,
    #[value(name = "mod_only")]
    ModOnly,
    #[value(name = "mix_only")]
    MixOnly,
    Full,
    All,
}

impl ToyMode {
    fn ablation(self) -> Option<Ablation> {
        match self {
            ToyMode::Baseline => Some(Ablation::Baseline),
            ToyMode::ModOnly => Some(Ablation::ModOnly),
            ToyMode::MixOnly => Some(Ablation::MixOnly),
            ToyMode::Full => Some(Ablation::Full),
            ToyMode::All => None,
        }
    }
}

#[derive(Debug, Args)]
pub struct ToyTrainArgs {
    /// JSON training configuration; missing fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: ToyMode,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of consecutive seeds averaged in `--mode all`.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parse { .. } | Error::InvalidConfig(_) | Error::LengthMismatch { .. } => EXIT_PARSE,
        Error::NoSamples | Error::NoDetectionsAboveFloor => EXIT_EMPTY,
        Error::Diverged { .. } => EXIT_DIVERGED,
        _ => EXIT_FAILURE,
    }
}

/// Worker count from `DETCAL_THREADS`; `None` means automatic.
pub fn thread_cap(value: Option<&str>) -> Result<Option<usize>> {
    match value.map(str::trim) {
        None | Some("") => Ok(None),
        Some(v) => match v.parse::<usize>() {
            Ok(0) => Ok(None),
            Ok(n) => Ok(Some(n)),
            Err(_) => Err(Error::InvalidArgument(format!("{THREADS_ENV} must be an integer, got {v:?}"))),
        },
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Evaluate(a) => cmd_evaluate(&a, out),
        Command::Reliability(a) => cmd_reliability(&a, out),
        Command::FitTemperature(a) => cmd_fit_temperature(&a, out),
        Command::ToyTrain(a) => cmd_toy_train(&a, out),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn report_json(report: &CalibrationReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

fn print_bins(report: &CalibrationReport, out: &mut dyn Write) -> Result<()> {
    writeln!(out, "{:>6} {:>6} {:>7} {:>10} {:>10} {:>8}", "lo", "hi", "count", "mean_x", "mean_y", "gap")?;
    for row in reliability_table(report) {
        writeln!(
            out,
            "{:>6.2} {:>6.2} {:>7} {:>10.4} {:>10.4} {:>+8.4}",
            row.bin_lo, row.bin_hi, row.count, row.mean_confidence, row.mean_outcome, row.gap
        )?;
    }
    Ok(())
}

pub fn cmd_evaluate(args: &EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let (dets, gts) = coco::load_pair(&args.preds, &args.gts)?;
    let matched = match_detections(&dets, &gts, args.iou)?;
    let report = d_ece(&matched, args.bins, args.score_floor)?;
    let tp = matched
        .iter()
        .filter(|m| m.detection.score >= args.score_floor && m.is_correct())
        .count();
    writeln!(out, "D-ECE: {:.4}", report.error)?;
    writeln!(out, "detections: {} (true positives: {tp}, ground truths: {})", report.total, gts.len())?;
    print_bins(&report, out)?;
    if let Some(path) = &args.out {
        write_file(path, &report_json(&report))?;
    }
    Ok(())
}

pub fn load_report(path: &Path) -> Result<CalibrationReport> {
    let text = fs::read_to_string(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let report: CalibrationReport = serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
        path: format!("{}: {}", path.display(), e.path()),
        message: e.into_inner().to_string(),
    })?;
    let counted: usize = report.bins.iter().map(|b| b.count).sum();
    if counted != report.total {
        return Err(Error::Parse {
            path: format!("{}: total", path.display()),
            message: format!("bin counts sum to {counted}, total says {}", report.total),
        });
    }
    Ok(report)
}

pub fn cmd_reliability(args: &ReliabilityArgs, out: &mut dyn Write) -> Result<()> {
    let report = load_report(&args.report)?;
    let rows = reliability_table(&report);
    let text = match args.format {
        TableFormat::Csv => reliability_csv_string(&rows),
        TableFormat::Json => reliability_json(&rows) + "\n",
    };
    write_file(&args.out, &text)?;
    writeln!(out, "{} rows ({} {:.4})", rows.len(), report.metric_kind, report.error)?;
    Ok(())
}

pub fn read_logits_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    let mut width = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .enumerate()
            .map(|(j, field)| {
                field.trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                    path: format!("{}: line {}, field {}", path.display(), i + 1, j + 1),
                    message: format!("expected a finite number, got {field:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if *width.get_or_insert(row.len()) != row.len() {
            return Err(Error::Parse {
                path: format!("{}: line {}", path.display(), i + 1),
                message: format!("expected {} values, got {}", width.unwrap_or(0), row.len()),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<usize>().map_err(|_| Error::Parse {
                path: format!("{}: line {}", path.display(), i + 1),
                message: format!("expected a class index, got {:?}", l.trim()),
            })
        })
        .collect()
}

pub fn cmd_fit_temperature(args: &FitTemperatureArgs, out: &mut dyn Write) -> Result<()> {
    let link: TemperatureLink = args.mode.parse().map_err(|e: Error| Error::Parse {
        path: "--mode".into(),
        message: e.to_string(),
    })?;
    let logits = read_logits_csv(&args.logits)?;
    let labels = read_labels(&args.labels)?;
    if logits.len() != labels.len() {
        return Err(Error::LengthMismatch {
            what: "logit rows vs labels",
            left: logits.len(),
            right: labels.len(),
        });
    }
    if let Some((i, (row, y))) = logits.iter().zip(&labels).enumerate().find(|(_, (r, y))| **y >= r.len()) {
        return Err(Error::Parse {
            path: format!("{}: line {}", args.labels.display(), i + 1),
            message: format!("label {y} out of range for {} logits", row.len()),
        });
    }
    let t = fit_temperature(&logits, &labels, link)?;
    writeln!(out, "T = {t:.4}")?;
    if let Some(path) = &args.out {
        let scaled = apply_temperature(&logits, t);
        let mut text = String::from("row,label,predicted,confidence_before,confidence_after\n");
        for (i, ((raw, s), y)) in logits.iter().zip(&scaled).zip(&labels).enumerate() {
            let k = argmax(raw);
            debug_assert_eq!(k, argmax(s));
            let conf = |row: &[f64]| match link {
                TemperatureLink::SoftmaxNll => crate::tensor::softmax(row)[k],
                TemperatureLink::SigmoidNll => numeric::sigmoid(row[k]),
            };
            text.push_str(&format!("{i},{y},{k},{},{}\n", conf(raw), conf(s)));
        }
        write_file(path, &text)?;
    }
    Ok(())
}

/// Contents of `report_<mode>.json` written by `toy-train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyReport {
    pub mode: Ablation,
    pub seed: u64,
    pub accuracy: f64,
    pub d_ece: CalibrationReport,
    pub d_uce: CalibrationReport,
}

fn trace_csv(run: &ExperimentRun) -> Result<String> {
    let mut buf = Vec::new();
    toy::train::write_trace_csv(&run.trace, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv is utf-8"))
}

pub fn cmd_toy_train(args: &ToyTrainArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => TrainConfig::load(path)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;

    let modes: Vec<Ablation> = match args.mode.ablation() {
        Some(m) => vec![m],
        None => Ablation::ALL.to_vec(),
    };
    let seeds: Vec<u64> = match args.mode {
        ToyMode::All => (0..args.seeds.max(1)).map(|i| cfg.seed + i).collect(),
        _ => vec![cfg.seed],
    };
    let mut all_runs = Vec::with_capacity(modes.len());
    for &mode in &modes {
        let runs = seeds
            .iter()
            .map(|&seed| toy::run_experiment(&TrainConfig { seed, ..cfg.clone() }, mode))
            .collect::<Result<Vec<_>>>()?;
        let run = &runs[0];
        let report = ToyReport {
            mode,
            seed: cfg.seed,
            accuracy: run.evaluation.accuracy,
            d_ece: run.evaluation.d_ece.clone(),
            d_uce: run.evaluation.d_uce.clone(),
        };
        write_file(&args.out_dir.join(format!("loss_trace_{mode}.csv")), &trace_csv(run)?)?;
        write_file(
            &args.out_dir.join(format!("report_{mode}.json")),
            &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"),
        )?;
        writeln!(
            out,
            "{mode:<9} D-ECE {:.4}  D-UCE {:.4}  accuracy {:.4}",
            report.d_ece.error, report.d_uce.error, report.accuracy
        )?;
        all_runs.push((mode, runs));
    }

    if args.mode == ToyMode::All {
        let summary = toy::summarize(&seeds, &all_runs);
        if seeds.len() > 1 {
            for e in &summary.entries {
                writeln!(out, "{:<9} mean D-ECE {:.4} over {} seeds", e.mode, e.d_ece, seeds.len())?;
            }
        }
        write_file(
            &args.out_dir.join("ablation_summary.json"),
            &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"),
        )?;
    }
    Ok(())
}
