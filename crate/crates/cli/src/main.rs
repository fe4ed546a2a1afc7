//! `cliffkit` command-line front end.
//!
//! Exit codes: 0 success, 2 bad input/schema/config, 3 infeasible
//! constraints, 4 internal error.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cliffkit::cliffgraph::SplitFractions;
use cliffkit::config::{FingerprintConfig, RunConfig, DEFAULT_DEGREE_CAP, DEFAULT_SEED};
use cliffkit::dataio::{
    load_dataset, load_split_artifact, read_predictions, save_dataset, save_split_artifact, write_predictions,
    DataError, TableFormat,
};
use cliffkit::diagnostics::{write_json, write_tsv};
use cliffkit::pairgen::{write_pair_dump, PairGenConfig};
use cliffkit::pipeline::{build_split, evaluate_split, format_summary, predict_all, split_report, train_linear};
use cliffkit::severity::SeverityConfig;
use cliffkit::synth::{planted_cliff_dataset, SynthConfig};
use cliffkit::trainer::{read_model, write_model, write_trace, ControllerConfig, Objective, TrainingConfig};
use cliffkit::{Error, ErrorClass};

#[derive(Parser)]
#[command(name = "cliffkit", version, about = "Cliff-aware splits, severity scoring and severity-weighted training")]
struct Cli {
    /// Worker threads (0 = all cores); outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a cliff-aware split and print its partition summary.
    Split(SplitCmd),
    /// Train the built-in linear predictor on a split.
    Train(TrainCmd),
    /// Evaluate a model or a predictions file on the test split.
    Eval(EvalCmd),
    /// Model-free split diagnostics: shift, nearest-train similarity, quartiles.
    Diagnose(DiagnoseCmd),
    /// Write a synthetic planted-cliff dataset.
    Synth(SynthCmd),
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Json,
    Tsv,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Base,
    Cliff,
}

#[derive(Args)]
struct ConfigArgs {
    /// Fingerprint radius.
    #[arg(long, default_value_t = FingerprintConfig::default().radius)]
    radius: usize,
    /// Fingerprint width in bits (power of two).
    #[arg(long, default_value_t = FingerprintConfig::default().width)]
    width: usize,
    /// Similarity floor τ for candidate pairs and severity neighbors.
    #[arg(long, default_value_t = PairGenConfig::default().tau)]
    tau: f64,
    /// Similarity exponent α of the cliff score.
    #[arg(long, default_value_t = PairGenConfig::default().alpha)]
    alpha: f64,
    /// Rank exponent β of the cliff score.
    #[arg(long, default_value_t = PairGenConfig::default().beta)]
    beta: f64,
    /// Top fraction of candidate pairs kept as raw cliffs.
    #[arg(long = "tau-c", default_value_t = PairGenConfig::default().tau_c_quantile)]
    tau_c: f64,
    /// Keep only each molecule's most similar partners during pair generation.
    #[arg(long)]
    per_molecule_cap: Option<usize>,
    /// Maximum cliff-graph degree.
    #[arg(long, default_value_t = DEFAULT_DEGREE_CAP)]
    degree_cap: usize,
    /// Training fraction.
    #[arg(long, default_value_t = SplitFractions::default().train)]
    train_frac: f64,
    /// Validation fraction.
    #[arg(long, default_value_t = SplitFractions::default().val)]
    val_frac: f64,
    /// Test fraction.
    #[arg(long, default_value_t = SplitFractions::default().test)]
    test_frac: f64,
    /// Severity neighbor budget K.
    #[arg(long, default_value_t = SeverityConfig::default().k)]
    k: usize,
    /// Severity aggregation budget M.
    #[arg(long, default_value_t = SeverityConfig::default().m)]
    m: usize,
    /// Percentile of training gaps used to normalize severity.
    #[arg(long, default_value_t = SeverityConfig::default().norm_percentile)]
    norm_percentile: f64,
    /// Base cliff weight λ (0 turns the cliff term off).
    #[arg(long, default_value_t = ControllerConfig::default().lambda_base)]
    lambda_base: f64,
    /// Controller gain γ.
    #[arg(long, default_value_t = ControllerConfig::default().gamma)]
    gamma: f64,
    /// Lower clip on the λ multiplier.
    #[arg(long, default_value_t = ControllerConfig::default().s_min)]
    s_min: f64,
    /// Upper clip on the λ multiplier.
    #[arg(long, default_value_t = ControllerConfig::default().s_max)]
    s_max: f64,
    /// EMA smoothing of the validation gap.
    #[arg(long, default_value_t = ControllerConfig::default().ema_alpha)]
    ema_alpha: f64,
    /// Stabilizer in the gap denominator.
    #[arg(long, default_value_t = ControllerConfig::default().epsilon)]
    epsilon: f64,
    /// Training epochs.
    #[arg(long, default_value_t = TrainingConfig::default().epochs)]
    epochs: usize,
    /// Mini-batch size.
    #[arg(long, default_value_t = TrainingConfig::default().batch_size)]
    batch_size: usize,
    /// Learning rate.
    #[arg(long, default_value_t = TrainingConfig::default().learning_rate)]
    lr: f64,
    /// Training objective.
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Cliff)]
    objective: ObjectiveArg,
    /// Keep λ at its base value when validation lacks Q1 or Q4 molecules.
    #[arg(long)]
    freeze_on_starvation: bool,
    /// Seed for every random choice.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

impl ConfigArgs {
    fn to_config(&self) -> RunConfig {
        RunConfig {
            fingerprint: FingerprintConfig {
                radius: self.radius,
                width: self.width,
            },
            pairs: PairGenConfig {
                tau: self.tau,
                alpha: self.alpha,
                beta: self.beta,
                tau_c_quantile: self.tau_c,
                per_molecule_cap: self.per_molecule_cap,
            },
            degree_cap: self.degree_cap,
            fractions: SplitFractions {
                train: self.train_frac,
                val: self.val_frac,
                test: self.test_frac,
            },
            severity: SeverityConfig {
                tau: self.tau,
                k: self.k,
                m: self.m,
                norm_percentile: self.norm_percentile,
            },
            controller: ControllerConfig {
                lambda_base: self.lambda_base,
                gamma: self.gamma,
                s_min: self.s_min,
                s_max: self.s_max,
                ema_alpha: self.ema_alpha,
                epsilon: self.epsilon,
            },
            training: TrainingConfig {
                epochs: self.epochs,
                batch_size: self.batch_size,
                learning_rate: self.lr,
                objective: match self.objective {
                    ObjectiveArg::Base => Objective::Base,
                    ObjectiveArg::Cliff => Objective::Cliff,
                },
                freeze_on_starvation: self.freeze_on_starvation,
            },
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct SplitCmd {
    /// Dataset (CSV, or TSV for .tsv/.tab).
    #[arg(long)]
    input: PathBuf,
    /// Split artifact to write.
    #[arg(long)]
    output: PathBuf,
    /// Optional tab-separated dump of all candidate pairs.
    #[arg(long)]
    pairs_out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct TrainCmd {
    #[arg(long)]
    input: PathBuf,
    /// Split artifact.
    #[arg(long)]
    split: PathBuf,
    /// Model file to write.
    #[arg(long)]
    model_out: PathBuf,
    /// Per-epoch trace (tab-separated) to write.
    #[arg(long)]
    trace_out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvalCmd {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    split: PathBuf,
    /// Trained model file.
    #[arg(long, conflicts_with = "predictions", required_unless_present = "predictions")]
    model: Option<PathBuf>,
    /// `id,prediction` file instead of a model.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Also write the model's predictions for every molecule.
    #[arg(long, requires = "model")]
    predictions_out: Option<PathBuf>,
    /// Report to write.
    #[arg(long)]
    output: PathBuf,
    /// Report format.
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    format: ReportFormat,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct DiagnoseCmd {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    split: PathBuf,
    /// Report to write.
    #[arg(long)]
    output: PathBuf,
    /// Report format.
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    format: ReportFormat,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct SynthCmd {
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = SynthConfig::default().n_molecules)]
    n: usize,
    #[arg(long, default_value_t = SynthConfig::default().n_families)]
    families: usize,
    #[arg(long, default_value_t = SynthConfig::default().width)]
    width: usize,
    /// Bits shared by every member of a family.
    #[arg(long, default_value_t = SynthConfig::default().base_bits)]
    base_bits: usize,
    #[arg(long, default_value_t = SynthConfig::default().substituents_per_family)]
    substituents_per_family: usize,
    #[arg(long, default_value_t = SynthConfig::default().substituents_per_molecule)]
    substituents_per_molecule: usize,
    #[arg(long, default_value_t = SynthConfig::default().substituent_bits)]
    substituent_bits: usize,
    /// Number of global one-bit switches that cause cliffs.
    #[arg(long, default_value_t = SynthConfig::default().n_switches)]
    switches: usize,
    #[arg(long, default_value_t = SynthConfig::default().switch_probability)]
    switch_probability: f64,
    #[arg(long, default_value_t = SynthConfig::default().switch_magnitude)]
    switch_magnitude: f64,
    #[arg(long, default_value_t = SynthConfig::default().noise)]
    noise: f64,
    #[arg(long, default_value_t = SynthConfig::default().seed)]
    seed: u64,
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(path).map_err(DataError::from)?))
}

fn write_report<T: serde::Serialize>(value: &T, path: &Path, format: ReportFormat) -> Result<(), Error> {
    let out = create(path)?;
    match format {
        ReportFormat::Json => write_json(value, out),
        ReportFormat::Tsv => write_tsv(value, out),
    }
    .map_err(DataError::from)?;
    Ok(())
}

fn run_split(cmd: &SplitCmd) -> Result<(), Error> {
    let config = cmd.config.to_config();
    config.validate()?;
    let dataset = load_dataset(&cmd.input, TableFormat::from_path(&cmd.input))?;
    log::info!("loaded {} molecules", dataset.len());
    let run = build_split(&dataset, &config)?;
    save_split_artifact(&run.artifact, &cmd.output)?;
    if let Some(path) = &cmd.pairs_out {
        write_pair_dump(&run.pairs, &run.dataset.ids(), create(path)?).map_err(DataError::from)?;
    }
    let report = split_report(&run.dataset, &run.artifact)?;
    if report.coverage.to_bits() != run.artifact.meta.coverage.to_bits() || report.test_test_edges != 0 {
        return Err(Error::Internal("split self-check failed".into()));
    }
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    lock.write_all(format_summary(&report, &run.artifact.meta).as_bytes())
        .map_err(DataError::from)?;
    Ok(())
}

fn run_train(cmd: &TrainCmd) -> Result<(), Error> {
    let config = cmd.config.to_config();
    config.validate()?;
    let dataset = load_dataset(&cmd.input, TableFormat::from_path(&cmd.input))?;
    let artifact = load_split_artifact(&cmd.split)?;
    let (model, trace) = train_linear(&dataset, &artifact, &config)?;
    write_model(&model, create(&cmd.model_out)?)?;
    write_trace(&trace, create(&cmd.trace_out)?).map_err(DataError::from)?;
    if let Some(last) = trace.last() {
        log::info!("final epoch {}: lambda {} val mae {:?}", last.epoch, last.lambda, last.val_mae);
    }
    Ok(())
}

fn run_eval(cmd: &EvalCmd) -> Result<(), Error> {
    let dataset = load_dataset(&cmd.input, TableFormat::from_path(&cmd.input))?;
    let artifact = load_split_artifact(&cmd.split)?;
    let predictions = match (&cmd.model, &cmd.predictions) {
        (Some(path), _) => {
            let model = read_model(BufReader::new(File::open(path).map_err(DataError::from)?))?;
            let preds = predict_all(&model, &dataset, &artifact)?;
            if let Some(out) = &cmd.predictions_out {
                write_predictions(&preds, create(out)?)?;
            }
            preds
        }
        (None, Some(path)) => read_predictions(
            File::open(path).map_err(DataError::from)?,
            TableFormat::from_path(path),
        )?,
        (None, None) => return Err(Error::Config("need --model or --predictions".into())),
    };
    let report = evaluate_split(&dataset, &artifact, &predictions)?;
    write_report(&report, &cmd.output, cmd.format)
}

fn run_diagnose(cmd: &DiagnoseCmd) -> Result<(), Error> {
    let dataset = load_dataset(&cmd.input, TableFormat::from_path(&cmd.input))?;
    let artifact = load_split_artifact(&cmd.split)?;
    let report = split_report(&dataset, &artifact)?;
    write_report(&report, &cmd.output, cmd.format)
}

fn run_synth(cmd: &SynthCmd) -> Result<(), Error> {
    let dataset = planted_cliff_dataset(&SynthConfig {
        n_molecules: cmd.n,
        n_families: cmd.families,
        width: cmd.width,
        base_bits: cmd.base_bits,
        substituents_per_family: cmd.substituents_per_family,
        substituents_per_molecule: cmd.substituents_per_molecule,
        substituent_bits: cmd.substituent_bits,
        n_switches: cmd.switches,
        switch_probability: cmd.switch_probability,
        switch_magnitude: cmd.switch_magnitude,
        noise: cmd.noise,
        seed: cmd.seed,
    })?;
    save_dataset(&dataset, &cmd.output, TableFormat::from_path(&cmd.output))?;
    Ok(())
}

fn run(command: &Command) -> Result<(), Error> {
    match command {
        Command::Split(c) => run_split(c),
        Command::Train(c) => run_train(c),
        Command::Eval(c) => run_eval(c),
        Command::Diagnose(c) => run_diagnose(c),
        Command::Synth(c) => run_synth(c),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .init();
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(4);
        }
    };
    match pool.install(|| run(&cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Input => 2,
                ErrorClass::Infeasible => 3,
                ErrorClass::Internal => 4,
            })
        }
    }
}
