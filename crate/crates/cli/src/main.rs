//! Command-line front end for the switchgear diagnosis engine.
//!
//! Subcommands cover the full artifact pipeline: `simulate` writes synthetic
//! telemetry datasets, `train` fits a model from dataset files and writes a
//! checkpoint, `predict` labels feature vectors with a checkpoint,
//! `experiment` reproduces the comparison suites (main arms, ablations,
//! labeled-size sweep, baseline comparison), and `gradcheck` audits every
//! analytic gradient against finite differences.
//!
//! Machine-readable payloads go to standard output; human status lines go
//! to standard error. Exit codes: 0 on success, 1 on a usage error, 2 on a
//! runtime failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use rln_core::features::{
    load_dataset, partition_records, split_dataset, DatasetFormat, DatasetRecord, FeatureVector,
    LabeledSample, SplitSpec,
};
use rln_core::harness::{
    report_to_json_bytes, run_ablations, run_baseline_comparison, run_gradient_checks,
    run_main_experiment, run_size_sweep, ExperimentConfig, ExperimentReport,
};
use rln_core::simulator::{generate_dataset, write_dataset_files, DatasetManifest, ScenarioConfig};
use rln_core::training::{fit, load_model, predict, save_model, TrainConfig};

/// Pass/fail tolerance for the gradient audit: worst relative error against
/// central finite differences at step 1e-5.
const GRAD_TOLERANCE: f64 = 1e-4;

/// Labeled fraction the `train` subcommand assigns to the support set; the
/// rest forms the query set (no held-out test partition when training for
/// deployment).
const TRAIN_SUPPORT_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    /// Pretty-printed JSON.
    Json,
    /// Comma-separated values.
    Csv,
}

#[derive(Debug, Parser)]
#[command(
    name = "rln",
    version,
    about = "Semi-supervised switchgear condition diagnosis",
    long_about = "Semi-supervised switchgear condition diagnosis: prototype centers with \
                  learned decision radii, plus a telemetry simulator, baselines, and a \
                  reproducible experiment harness.\n\nMachine-readable payloads go to standard \
                  output; status lines go to standard error. Exit codes: 0 success, 1 usage \
                  error, 2 runtime failure."
)]
struct Cli {
    /// Seed override: the scenario seed for `simulate` and `experiment`, the
    /// training seed for `train`.
    #[arg(long, global = true, value_name = "SEED")]
    seed: Option<u64>,
    /// JSON configuration file: a scenario for `simulate`, training
    /// hyperparameters for `train`, an experiment bundle for `experiment`.
    /// Defaults are used when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Where artifacts are written: a directory for `simulate`, `predict`,
    /// `experiment`, and `gradcheck`; the checkpoint path for `train`.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Payload format. Defaults per subcommand: csv for `simulate` dataset
    /// files and `predict` labels, json for `experiment` and `gradcheck`
    /// output.
    #[arg(long, global = true, value_enum, value_name = "FORMAT")]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic telemetry dataset (labeled + unlabeled files
    /// and a manifest).
    Simulate,
    /// Train a model from dataset files and write a checkpoint.
    Train {
        /// Directory holding the dataset (as written by `simulate`).
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
    },
    /// Label feature vectors from a dataset file using a checkpoint.
    Predict {
        /// Checkpoint file written by `train`.
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        /// Input records (csv or json dataset file; labels, if present, are
        /// ignored).
        #[arg(long = "in", value_name = "PATH")]
        input: PathBuf,
    },
    /// Run an experiment suite and emit reports (JSON plus CSV side-files).
    Experiment {
        /// Replace the configured seed list with 0..N.
        #[arg(long, global = true, value_name = "N")]
        seeds: Option<u64>,
        #[command(subcommand)]
        kind: ExperimentKind,
    },
    /// Audit analytic gradients against central finite differences.
    Gradcheck {
        /// Random seeded points per component.
        #[arg(long, default_value_t = 20, value_name = "N")]
        points: usize,
    },
}

#[derive(Debug, Subcommand)]
enum ExperimentKind {
    /// Strong-supervision arm (no unlabeled data) versus the complete
    /// weak-supervision method on shared partitions.
    Main,
    /// The complete model and its four single-ingredient ablations.
    Ablate,
    /// Accuracy of every model as the labeled training pool shrinks.
    Sweep {
        /// Labeled training-pool sizes to evaluate.
        #[arg(
            long,
            value_delimiter = ',',
            num_args = 1..,
            default_values_t = [200usize, 150, 100, 50],
            value_name = "SIZES"
        )]
        sizes: Vec<usize>,
    },
    /// The trained model versus SVM, KNN, and CNN baselines on identical
    /// splits.
    Baselines,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate => simulate(&cli.config, cli.seed, cli.out.as_deref(), cli.format),
        Command::Train { ref data } => {
            train(&cli.config, cli.seed, data, cli.out.as_deref())
        }
        Command::Predict {
            ref model,
            ref input,
        } => run_predict(model, input, cli.out.as_deref(), cli.format),
        Command::Experiment { seeds, ref kind } => experiment(
            &cli.config,
            cli.seed,
            seeds,
            kind,
            cli.out.as_deref(),
            cli.format,
        ),
        Command::Gradcheck { points } => gradcheck(points, cli.out.as_deref(), cli.format),
    }
}

/// Loads a JSON config file, or the type's default when no path is given.
fn load_config<T>(path: &Option<PathBuf>, what: &str) -> Result<T>
where
    T: serde::de::DeserializeOwned + Default,
{
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let bytes = fs::read(p)
                .with_context(|| format!("reading {what} config {}", p.display()))?;
            serde_json::from_slice(&bytes)
                .with_context(|| format!("parsing {what} config {}", p.display()))
        }
    }
}

/// Creates `dir` (default `.`) and returns it.
fn ensure_dir(out: Option<&Path>) -> Result<PathBuf> {
    let dir = out.map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    fs::create_dir_all(&dir)
        .with_context(|| format!("creating output directory {}", dir.display()))?;
    Ok(dir)
}

/// Writes one artifact into `dir` and reports it on standard error.
fn write_artifact(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

/// Infers a dataset file's encoding from its extension (default csv).
fn dataset_format(path: &Path) -> DatasetFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => DatasetFormat::Json,
        _ => DatasetFormat::Csv,
    }
}

fn print_stdout(bytes: &[u8]) -> Result<()> {
    std::io::stdout()
        .write_all(bytes)
        .context("writing to standard output")
}

fn simulate(
    config: &Option<PathBuf>,
    seed: Option<u64>,
    out: Option<&Path>,
    format: Option<Format>,
) -> Result<()> {
    let mut scenario: ScenarioConfig = load_config(config, "scenario")?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    let file_format = match format.unwrap_or(Format::Csv) {
        Format::Csv => DatasetFormat::Csv,
        Format::Json => DatasetFormat::Json,
    };
    let dir = ensure_dir(out)?;
    let dataset = generate_dataset(&scenario).context("generating the dataset")?;
    let manifest = write_dataset_files(&dataset, &scenario, &dir, file_format)
        .context("writing dataset files")?;
    eprintln!(
        "wrote {}, {}, manifest.json to {} ({} labeled, {} unlabeled records)",
        manifest.labeled_file,
        manifest.unlabeled_file,
        dir.display(),
        dataset.labeled.len(),
        dataset.unlabeled.len(),
    );
    Ok(())
}

/// Loads the labeled and unlabeled pools from a dataset directory, following
/// the manifest when one is present.
fn load_data_dir(dir: &Path) -> Result<(Vec<LabeledSample>, Vec<FeatureVector>)> {
    let manifest_path = dir.join("manifest.json");
    let (labeled_path, unlabeled_path) = if manifest_path.exists() {
        let bytes = fs::read(&manifest_path)
            .with_context(|| format!("reading {}", manifest_path.display()))?;
        let manifest: DatasetManifest = serde_json::from_slice(&bytes)
            .with_context(|| format!("parsing {}", manifest_path.display()))?;
        (
            dir.join(&manifest.labeled_file),
            dir.join(&manifest.unlabeled_file),
        )
    } else if dir.join("labeled.csv").exists() {
        (dir.join("labeled.csv"), dir.join("unlabeled.csv"))
    } else {
        (dir.join("labeled.json"), dir.join("unlabeled.json"))
    };

    let mut records: Vec<DatasetRecord> = load_dataset(&labeled_path, dataset_format(&labeled_path))
        .with_context(|| format!("loading {}", labeled_path.display()))?;
    if unlabeled_path.exists() {
        records.extend(
            load_dataset(&unlabeled_path, dataset_format(&unlabeled_path))
                .with_context(|| format!("loading {}", unlabeled_path.display()))?,
        );
    }
    Ok(partition_records(records))
}

fn train(
    config: &Option<PathBuf>,
    seed: Option<u64>,
    data: &Path,
    out: Option<&Path>,
) -> Result<()> {
    let mut train_config: TrainConfig = load_config(config, "training")?;
    if let Some(seed) = seed {
        train_config.seed = seed;
    }
    let (labeled, unlabeled) = load_data_dir(data)?;
    if labeled.is_empty() {
        bail!("the dataset at {} holds no labeled records", data.display());
    }
    // Deployment training uses every labeled record: half of each class
    // anchors the centers (support), the other half supervises (query).
    let spec = SplitSpec::Fractions {
        support: TRAIN_SUPPORT_FRACTION,
        query: 1.0 - TRAIN_SUPPORT_FRACTION,
        test: 0.0,
    };
    let split = split_dataset(&labeled, &unlabeled, &spec, train_config.seed)
        .context("splitting the labeled pool")?;
    let model = fit(&split, &train_config).context("training")?;

    let out_path = match out {
        Some(p) if p.is_dir() => p.join("model.json"),
        Some(p) => p.to_path_buf(),
        None => PathBuf::from("model.json"),
    };
    if let Some(parent) = out_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))?;
    }
    save_model(&model, &out_path).context("writing the checkpoint")?;
    eprintln!(
        "trained on {} support + {} query labeled records ({} unlabeled), {} epochs; wrote {}",
        split.support.len(),
        split.query.len(),
        split.unlabeled.len(),
        model.history.len(),
        out_path.display(),
    );
    Ok(())
}

fn run_predict(
    model_path: &Path,
    input: &Path,
    out: Option<&Path>,
    format: Option<Format>,
) -> Result<()> {
    let model = load_model(model_path)
        .with_context(|| format!("loading checkpoint {}", model_path.display()))?;
    let records = load_dataset(input, dataset_format(input))
        .with_context(|| format!("loading {}", input.display()))?;

    let mut labels = Vec::with_capacity(records.len());
    for (x, _) in &records {
        labels.push(predict(&model, x).context("predicting")?);
    }

    let format = format.unwrap_or(Format::Csv);
    let (bytes, file_name) = match format {
        Format::Csv => {
            let mut text = String::from("label,p1,p2,p3,p4,p5,p6,p7\n");
            for (label, probabilities) in &labels {
                text.push_str(&label.class().to_string());
                for p in probabilities {
                    text.push(',');
                    text.push_str(&p.to_string());
                }
                text.push('\n');
            }
            (text.into_bytes(), "labels.csv")
        }
        Format::Json => {
            let rows: Vec<serde_json::Value> = labels
                .iter()
                .map(|(label, probabilities)| {
                    serde_json::json!({
                        "label": label.class(),
                        "probabilities": probabilities,
                    })
                })
                .collect();
            (report_to_json_bytes(&rows)?, "labels.json")
        }
    };
    match out {
        Some(dir) => {
            let dir = ensure_dir(Some(dir))?;
            write_artifact(&dir, file_name, &bytes)?;
        }
        None => print_stdout(&bytes)?,
    }
    eprintln!("labeled {} records with {}", labels.len(), model_path.display());
    Ok(())
}

/// One summary row per report: name plus accuracy means and spreads.
fn summary_csv(reports: &[(&str, &ExperimentReport)]) -> String {
    let mut text = String::from(
        "name,mean_average_accuracy,spread_average_accuracy,\
         mean_overall_accuracy,spread_overall_accuracy\n",
    );
    for (name, report) in reports {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            name,
            report.mean_average_accuracy,
            report.spread_average_accuracy,
            report.mean_overall_accuracy,
            report.spread_overall_accuracy,
        ));
    }
    text
}

fn experiment(
    config: &Option<PathBuf>,
    seed: Option<u64>,
    seeds: Option<u64>,
    kind: &ExperimentKind,
    out: Option<&Path>,
    format: Option<Format>,
) -> Result<()> {
    let mut cfg: ExperimentConfig = load_config(config, "experiment")?;
    if let Some(seed) = seed {
        cfg.scenario.seed = seed;
    }
    if let Some(n) = seeds {
        if n == 0 {
            bail!("--seeds must be at least 1");
        }
        cfg.seeds = (0..n).collect();
    }
    let format = format.unwrap_or(Format::Json);
    let dir = out.map(|d| ensure_dir(Some(d))).transpose()?;

    // Each suite produces one JSON payload and one CSV payload; the chosen
    // format goes to standard output and both are written as artifacts.
    let (json_bytes, csv_text, stem) = match kind {
        ExperimentKind::Main => {
            let (strong, weak) = run_main_experiment(&cfg)?;
            let csv = summary_csv(&[
                ("strong-supervision", &strong),
                ("weak-supervision", &weak),
            ]);
            let payload = serde_json::json!({ "strong": strong, "weak": weak });
            (report_to_json_bytes(&payload)?, csv, "main")
        }
        ExperimentKind::Ablate => {
            let reports = run_ablations(&cfg)?;
            let rows: Vec<(&str, &ExperimentReport)> = reports
                .iter()
                .map(|(name, report)| (name.as_str(), report))
                .collect();
            let csv = summary_csv(&rows);
            let payload: Vec<serde_json::Value> = reports
                .iter()
                .map(|(name, report)| {
                    serde_json::json!({ "variant": name, "report": report })
                })
                .collect();
            (report_to_json_bytes(&payload)?, csv, "ablations")
        }
        ExperimentKind::Sweep { sizes } => {
            let sweep = run_size_sweep(&cfg, sizes)?;
            (report_to_json_bytes(&sweep)?, sweep.to_csv(), "sweep")
        }
        ExperimentKind::Baselines => {
            let comparison = run_baseline_comparison(&cfg)?;
            (
                report_to_json_bytes(&comparison)?,
                comparison.to_csv(),
                "baselines",
            )
        }
    };

    if let Some(dir) = &dir {
        write_artifact(dir, &format!("{stem}.json"), &json_bytes)?;
        write_artifact(dir, &format!("{stem}.csv"), csv_text.as_bytes())?;
    }
    match format {
        Format::Json => print_stdout(&json_bytes),
        Format::Csv => print_stdout(csv_text.as_bytes()),
    }
}

fn gradcheck(points: usize, out: Option<&Path>, format: Option<Format>) -> Result<()> {
    let summaries = run_gradient_checks(points).context("running the gradient audit")?;
    let json_bytes = report_to_json_bytes(&summaries)?;
    if let Some(dir) = out {
        let dir = ensure_dir(Some(dir))?;
        write_artifact(&dir, "gradcheck.json", &json_bytes)?;
    }
    match format.unwrap_or(Format::Json) {
        Format::Json => print_stdout(&json_bytes)?,
        Format::Csv => {
            let mut text = String::from("component,points,checked,skipped,max_rel_err,passed\n");
            for s in &summaries {
                text.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    s.name,
                    s.points,
                    s.checked,
                    s.skipped,
                    s.max_rel_err,
                    s.passed(GRAD_TOLERANCE),
                ));
            }
            print_stdout(text.as_bytes())?;
        }
    }
    let failures: Vec<&str> = summaries
        .iter()
        .filter(|s| !s.passed(GRAD_TOLERANCE))
        .map(|s| s.name.as_str())
        .collect();
    if !failures.is_empty() {
        bail!(
            "gradient audit failed (relative error ≥ {GRAD_TOLERANCE}): {}",
            failures.join(", ")
        );
    }
    eprintln!(
        "gradient audit passed: {} components at {points} points each (tolerance {GRAD_TOLERANCE})",
        summaries.len()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn sweep_sizes_parse_from_a_comma_list() {
        let cli = Cli::try_parse_from([
            "rln",
            "experiment",
            "sweep",
            "--sizes",
            "200,50",
            "--seeds",
            "3",
        ])
        .unwrap();
        match cli.command {
            Command::Experiment {
                seeds: Some(3),
                kind: ExperimentKind::Sweep { ref sizes },
            } => assert_eq!(sizes, &[200, 50]),
            other => panic!("unexpected parse: {other:?}"),
        }
    }

    #[test]
    fn unknown_flags_are_usage_errors() {
        let err = Cli::try_parse_from(["rln", "simulate", "--bogus"]).unwrap_err();
        assert_ne!(err.kind(), ErrorKind::DisplayHelp);
    }
}
