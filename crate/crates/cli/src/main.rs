//! `geocp`: generate data, train models and run the studies from a JSON config.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use geocp::data::{apply_shift, read_dataset, write_dataset, Split};
use geocp::experiments::{
    self, canon_training_data, predictor_training_data, prepare_canonicalizer, prepare_predictor,
    stream, stream_seed, trial_data, trial_seed, ExperimentConfig, Study, SummaryRow,
};
use geocp::model::{export_logits, load_json, save_json, Classifier};
use geocp::{CyclicGroup, Error};

#[derive(Debug, Parser)]
#[command(
    name = "geocp",
    version,
    about = "Conformal prediction under rotation shifts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config's `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed, overriding the config's `base_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of trials, overriding the config's `trials`.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write training, calibration and test glyph sets (CP2T).
    GenData,
    /// Train the predictor and save it as JSON.
    TrainPredictor,
    /// Train a canonicalizer for the config's group (or `--group`).
    TrainCanon {
        /// Rotation group order.
        #[arg(long)]
        group: Option<u32>,
    },
    /// Write a frozen logits table (CP2L) for a dataset.
    ExportLogits {
        /// Predictor JSON written by `train-predictor`.
        #[arg(long)]
        model: PathBuf,
        /// CP2T dataset.
        #[arg(long)]
        data: PathBuf,
    },
    RunRobustness,
    RunGroupMap,
    RunDoubleShift,
    RunCoverageSanity,
}

impl Command {
    fn study(&self) -> Option<Study> {
        match self {
            Command::RunRobustness => Some(Study::Robustness),
            Command::RunGroupMap => Some(Study::GroupMap),
            Command::RunDoubleShift => Some(Study::DoubleShift),
            Command::RunCoverageSanity => Some(Study::CoverageSanity),
            _ => None,
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Training(_) => 3,
        Error::Io { .. } | Error::Parse { .. } => 4,
        Error::Config(_) | Error::InvalidArgument(_) | Error::Lookup(_) => 2,
    }
}

fn load_config(common: &Common, study: Option<Study>) -> geocp::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::new(study.unwrap_or(Study::Robustness)),
    };
    if let Some(study) = study {
        if cfg.study != study {
            return Err(Error::Config(format!(
                "config describes a {} study, not {study}",
                cfg.study
            )));
        }
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.base_seed = seed;
    }
    if let Some(trials) = common.trials {
        cfg.trials = trials;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_summary(rows: &[SummaryRow]) {
    println!("variant\tmethod\tshift\tkappa\tpartition\tcoverage\tset_size\taccuracy");
    for r in rows.iter().filter(|r| r.partition.is_none()) {
        println!(
            "{}\t{}\t{}\t{}\t-\t{:.4} ± {:.4}\t{:.3} ± {:.3}\t{}",
            r.variant,
            r.method,
            r.shift,
            r.kappa.map_or("-".into(), |k| k.to_string()),
            r.coverage_mean,
            r.coverage_sd,
            r.set_size_mean,
            r.set_size_sd,
            r.accuracy_mean.map_or("-".into(), |a| format!("{a:.4}")),
        );
    }
}

fn gen_data(cfg: &ExperimentConfig) -> geocp::Result<()> {
    let out = &cfg.output_dir;
    let ts = trial_seed(cfg, 0);
    write_dataset(&predictor_training_data(cfg)?, &out.join("train.cp2t"))?;
    write_dataset(&canon_training_data(cfg)?, &out.join("canon_train.cp2t"))?;
    let cal = trial_data(
        cfg,
        stream_seed(ts, stream::CAL_DATA),
        cfg.data.cal_count,
        Split::Calibration,
    )?;
    let cal = apply_shift(
        &cal,
        &cfg.calibration_shift,
        cfg.group,
        stream_seed(ts, stream::CAL_SHIFT),
    )?;
    write_dataset(&cal, &out.join("cal.cp2t"))?;
    let test = trial_data(
        cfg,
        stream_seed(ts, stream::TEST_DATA),
        cfg.data.test_count,
        Split::Test,
    )?;
    let test = apply_shift(
        &test,
        &cfg.test_shift,
        cfg.group,
        stream_seed(ts, stream::TEST_SHIFT),
    )?;
    write_dataset(&test, &out.join("test.cp2t"))?;
    println!(
        "wrote train, canon_train, cal and test sets to {}",
        out.display()
    );
    Ok(())
}

fn report_training(
    name: &str,
    report: &geocp::model::TrainReport,
    out: &Path,
) -> geocp::Result<()> {
    save_json(report, &out.join(format!("{name}_report.json")))?;
    println!(
        "{name}: {} epochs, final loss {:.5}{}",
        report.epoch_losses.len(),
        report.epoch_losses.last().copied().unwrap_or(f64::NAN),
        if report.stopped_early {
            " (stopped early)"
        } else {
            ""
        }
    );
    Ok(())
}

fn execute(cli: &Cli) -> geocp::Result<()> {
    if let Some(n) = cli.common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot start {n} threads: {e}")))?;
    }
    let cfg = load_config(&cli.common, cli.command.study())?;
    let out = &cfg.output_dir;
    match &cli.command {
        Command::GenData => gen_data(&cfg),
        Command::TrainPredictor => {
            let mut cfg = cfg.clone();
            cfg.predictor.model = None;
            let (clf, report) = prepare_predictor(&cfg)?;
            save_json(&clf, &out.join("predictor.json"))?;
            if let Some(r) = report {
                report_training("predictor", &r, out)?;
            }
            Ok(())
        }
        Command::TrainCanon { group } => {
            let g = match group {
                Some(n) => CyclicGroup::new(*n)?,
                None => cfg.group,
            };
            let mut cfg = cfg.clone();
            cfg.canonicalizer.models.clear();
            let (cn, report) = prepare_canonicalizer(&cfg, g)?;
            let name = format!("cn{}", g.order());
            save_json(&cn, &out.join(format!("{name}.json")))?;
            if let Some(r) = report {
                report_training(&name, &r, out)?;
            }
            Ok(())
        }
        Command::ExportLogits { model, data } => {
            let clf: Classifier = load_json(model)?;
            let d = read_dataset(data, Split::Test, cfg.group)?;
            let path = out.join("logits.cp2l");
            export_logits(&clf, &d, &path)?;
            println!("wrote {} logit rows to {}", d.len(), path.display());
            Ok(())
        }
        Command::RunRobustness
        | Command::RunGroupMap
        | Command::RunDoubleShift
        | Command::RunCoverageSanity => {
            let result = experiments::run(&cfg)?;
            print_summary(&result.summary);
            println!("results in {}", result.output_dir.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
