//! Command-line pipeline: generate synthetic datasets, train, evaluate,
//! export diagnostics, and verify gradients.
//!
//! Exit codes are fixed for scripting: 0 success, 1 check failure,
//! 2 configuration error, 3 I/O error, 4 parse error, 5 shape mismatch.
//! Logging is controlled by `DYGED_LOG={error|info|debug}`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dyged::checkpoint;
use dyged::config::RunConfig;
use dyged::dataset::{read_dataset, write_dataset};
use dyged::error::Error;
use dyged::eval::{export, EvalReport};
use dyged::features::FeatureMode;
use dyged::gradcheck::{check_all, GradCheckSettings, GRAD_TOLERANCE};
use dyged::model::{score_windows, validate_compatible, PreparedDataset};
use dyged::params::Variant;
use dyged::synth::{generate, GenSpec};
use dyged::train::{run_experiment, train};

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_PARSE: u8 = 4;
const EXIT_SHAPE: u8 = 5;

#[derive(Parser)]
#[command(name = "dyged", version, about = "Event detection on dynamic graph snapshots")]
struct Cli {
    /// Worker threads for parallel sections (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Architecture variant: full|CT|NL|NA|mean|max.
    #[arg(long, value_parser = clap::builder::ValueParser::new(parse_variant))]
    variant: Option<Variant>,
    /// Node features: static|dynamic|both.
    #[arg(long, value_parser = clap::builder::ValueParser::new(parse_features))]
    features: Option<FeatureMode>,
    /// Window order (a window holds k+1 snapshots).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_features(s: &str) -> Result<FeatureMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a generator spec.
    Gen {
        /// Generator spec (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        /// Seed override.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model and write a checkpoint, loss trace, and config echo.
    Train {
        /// Run configuration (TOML); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset directory (overrides the config's `dataset`).
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Run the nested cross-validation experiment from the config's
        /// [experiment] section instead of a single training pass.
        #[arg(long)]
        experiment: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Score a dataset with a checkpoint, export the report, print AUC.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export scores, attention, and embeddings without requiring a
    /// defined AUC (works on single-class datasets).
    Export {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify analytic gradients against finite differences for every
    /// variant on a small instance.
    Gradcheck {
        /// Optional run configuration; only the seed is used.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Test hook: corrupt one adjoint so the check must fail.
        #[arg(long, hide = true)]
        corrupt_adjoint: bool,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Dim(_) => EXIT_SHAPE,
        Error::Config(_) | Error::UndefinedMetric(_) => EXIT_CONFIG,
        Error::Contract(_) => EXIT_CHECK_FAILED,
        Error::Parse { .. } => EXIT_PARSE,
        Error::Io { .. } => EXIT_IO,
    }
}

fn ensure_dir(path: &Path) -> Result<(), Error> {
    if !path.exists() {
        std::fs::create_dir(path).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn load_run_config(path: Option<&Path>) -> Result<RunConfig, Error> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn cmd_gen(config: &Path, out: &Path, seed: Option<u64>) -> Result<(), Error> {
    let mut spec = GenSpec::load(config)?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    ensure_dir(out)?;
    let graph = generate(&spec)?;
    write_dataset(out, &graph)?;
    // Echo the effective spec next to the data for provenance.
    spec.save(&out.join("genspec.toml"))?;
    log::info!(
        "generated n={} T={} dataset at {}",
        graph.n(),
        graph.len(),
        out.display()
    );
    Ok(())
}

fn apply_overrides(cfg: &mut RunConfig, dataset: Option<PathBuf>, ov: &Overrides) {
    if let Some(d) = dataset {
        cfg.dataset = Some(d);
    }
    if let Some(seed) = ov.seed {
        cfg.train.seed = seed;
    }
    if let Some(v) = ov.variant {
        cfg.train.variant = v;
    }
    if let Some(f) = ov.features {
        cfg.train.features = f;
    }
    if let Some(k) = ov.k {
        cfg.train.k = k;
    }
    if let Some(e) = ov.epochs {
        cfg.train.epochs = e;
    }
}

fn cmd_train(
    config: Option<&Path>,
    dataset: Option<PathBuf>,
    out: &Path,
    experiment: bool,
    overrides: &Overrides,
) -> Result<(), Error> {
    let mut cfg = load_run_config(config)?;
    apply_overrides(&mut cfg, dataset, overrides);
    cfg.train.validate()?;
    let dataset_dir = cfg.dataset.clone().ok_or_else(|| {
        Error::Config("no dataset given: pass --dataset or set `dataset` in the config".into())
    })?;
    let graph = read_dataset(&dataset_dir)?;
    ensure_dir(out)?;
    cfg.save(&out.join("config_echo.toml"))?;

    if experiment {
        let exp = cfg.experiment.clone().ok_or_else(|| {
            Error::Config("--experiment needs an [experiment] section in the config".into())
        })?;
        let outcome = run_experiment(&graph, &cfg.train, exp.folds, exp.repetitions)?;
        let mut report = String::from("fold\trepetition\tseed\tauc\n");
        for run in &outcome.runs {
            report.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                run.fold,
                run.repetition,
                run.seed,
                run.report.auc.unwrap_or(f64::NAN)
            ));
        }
        let path = out.join("experiment.tsv");
        std::fs::write(&path, report).map_err(|e| Error::io(&path, e))?;
        println!("mean_auc={} stdev_auc={}", outcome.mean_auc, outcome.stdev_auc);
        return Ok(());
    }

    let data = PreparedDataset::from_graph(&graph, cfg.train.k, cfg.train.features)?;
    let outcome = train(&data, 0..data.num_windows(), &cfg.train)?;
    checkpoint::save(&outcome.params, &out.join("model.ckpt"))?;

    let mut trace = String::from("epoch\tloss\n");
    for (epoch, loss) in outcome.loss_trace.iter().enumerate() {
        trace.push_str(&format!("{}\t{}\n", epoch, loss));
    }
    let trace_path = out.join("loss_trace.tsv");
    std::fs::write(&trace_path, trace).map_err(|e| Error::io(&trace_path, e))?;
    log::info!(
        "trained {} epochs, final loss {}",
        outcome.loss_trace.len(),
        outcome.loss_trace.last().unwrap_or(&f64::NAN)
    );
    Ok(())
}

fn score_dataset(checkpoint_path: &Path, dataset: &Path) -> Result<EvalReport, Error> {
    let params = checkpoint::load(checkpoint_path)?;
    let graph = read_dataset(dataset)?;
    let data = PreparedDataset::from_graph(&graph, params.config.k, params.config.features)?;
    validate_compatible(&params, &data)?;
    let scored = score_windows(&data, 0..data.num_windows(), &params)?;
    Ok(EvalReport::from_scored(&scored))
}

fn cmd_eval(checkpoint_path: &Path, dataset: &Path, out: &Path) -> Result<(), Error> {
    let report = score_dataset(checkpoint_path, dataset)?;
    let auc = report.require_auc()?;
    ensure_dir(out)?;
    export(&report, out)?;
    println!("AUC={auc}");
    Ok(())
}

fn cmd_export(checkpoint_path: &Path, dataset: &Path, out: &Path) -> Result<(), Error> {
    let report = score_dataset(checkpoint_path, dataset)?;
    ensure_dir(out)?;
    export(&report, out)?;
    match report.auc {
        Some(auc) => println!("AUC={auc}"),
        None => log::info!("AUC undefined for this dataset; exported files only"),
    }
    Ok(())
}

fn cmd_gradcheck(config: Option<&Path>, seed: Option<u64>, corrupt: bool) -> Result<bool, Error> {
    let cfg = load_run_config(config)?;
    let settings = GradCheckSettings {
        seed: seed.unwrap_or(cfg.train.seed),
        ..GradCheckSettings::default()
    };
    let reports = check_all(&settings, corrupt)?;
    let mut failures = Vec::new();
    for report in &reports {
        for tensor in &report.tensors {
            println!(
                "variant={} tensor={} max_rel_err={:.3e}",
                report.variant, tensor.name, tensor.max_rel_err
            );
            if tensor.max_rel_err >= GRAD_TOLERANCE {
                failures.push(format!("{}/{}", report.variant, tensor.name));
            }
        }
        println!(
            "variant={} {}",
            report.variant,
            if report.passed() { "ok" } else { "FAILED" }
        );
    }
    if failures.is_empty() {
        println!("gradcheck passed (tolerance {GRAD_TOLERANCE})");
        Ok(true)
    } else {
        println!(
            "gradcheck FAILED (tolerance {GRAD_TOLERANCE}): {}",
            failures.join(", ")
        );
        Ok(false)
    }
}

fn run(cli: Cli) -> Result<bool, Error> {
    dyged::par::configure_threads(cli.jobs);
    match cli.command {
        Command::Gen { config, out, seed } => {
            cmd_gen(&config, &out, seed)?;
            Ok(true)
        }
        Command::Train {
            config,
            dataset,
            out,
            experiment,
            overrides,
        } => {
            cmd_train(config.as_deref(), dataset, &out, experiment, &overrides)?;
            Ok(true)
        }
        Command::Eval {
            checkpoint,
            dataset,
            out,
        } => {
            cmd_eval(&checkpoint, &dataset, &out)?;
            Ok(true)
        }
        Command::Export {
            checkpoint,
            dataset,
            out,
        } => {
            cmd_export(&checkpoint, &dataset, &out)?;
            Ok(true)
        }
        Command::Gradcheck {
            config,
            seed,
            corrupt_adjoint,
        } => cmd_gradcheck(config.as_deref(), seed, corrupt_adjoint),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("DYGED_LOG", "error"),
    )
    .format_timestamp(None)
    .init();

    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_CHECK_FAILED),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
