use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use ncfair::array_io::{read_array, read_subset, SubsetSpec};
use ncfair::fairness::{
    becpro_diff, bias_nli, bios_gaps, read_records, stereoset, winobias, AssociationRecord,
    BiosRecord, CorefRecord, NliRecord, StereoRecord,
};
use ncfair::json::{format_sig17, ser_f64};
use ncfair::train::{run, EpochLog, RunArtifacts, TrainConfig};
use ncfair::{nc_report, ClassStatsAccumulator, NcReport, WeightMatrix};

/// Neural-collapse diagnostics, collapse-regularized training and fairness scoring.
#[derive(Debug, Parser)]
#[command(name = "ncfair", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Accumulate (representations, labels) into a class-statistics snapshot.
    Stats(StatsArgs),
    /// Compute collapse metrics from a snapshot and a classifier matrix.
    Nc(NcArgs),
    /// Train the synthetic masked language model from a config.
    Train(TrainArgs),
    /// Train once per regularizer weight and compare the final epochs.
    Sweep(SweepArgs),
    /// Score a per-example record file with one fairness evaluator.
    Fairness(FairnessArgs),
    /// Baseline versus regularized training on the default synthetic corpus.
    Demo(DemoArgs),
}

#[derive(Debug, Clone, Copy, Default, ValueEnum)]
enum Format {
    #[default]
    Json,
    /// Plain-text table (sweep only; other subcommands print JSON).
    Table,
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// N x d representations (.npy, <f4 or <f8).
    #[arg(long, value_name = "PATH")]
    reprs: PathBuf,
    /// N integer class labels (.npy, <i8).
    #[arg(long, value_name = "PATH")]
    labels: PathBuf,
    /// Snapshot directory to write.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Existing snapshot to merge the new statistics into [default: none].
    #[arg(long, value_name = "PATH")]
    stats: Option<PathBuf>,
    /// Number of classes [default: largest label + 1, or the merged snapshot's].
    #[arg(long, value_name = "N")]
    vocab_size: Option<usize>,
}

#[derive(Debug, Args)]
struct NcArgs {
    /// Snapshot directory written by `stats`.
    #[arg(long, value_name = "PATH")]
    stats: PathBuf,
    /// C x d classifier rows (.npy).
    #[arg(long, value_name = "PATH")]
    weights: PathBuf,
    /// C classifier biases (.npy) [default: zeros].
    #[arg(long, value_name = "PATH")]
    bias: Option<PathBuf>,
    /// Subset file of token ids [default: whole vocabulary].
    #[arg(long, value_name = "PATH")]
    subset: Option<PathBuf>,
    /// Representations for NC4; requires --labels [default: none, NC4 omitted].
    #[arg(long, value_name = "PATH", requires = "labels")]
    reprs: Option<PathBuf>,
    /// Labels for NC4; requires --reprs [default: none].
    #[arg(long, value_name = "PATH", requires = "reprs")]
    labels: Option<PathBuf>,
    /// Write the report here instead of stdout [default: stdout].
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// JSON training config; omitted keys take their defaults [default: all defaults].
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Run artifact directory.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Override the regularizer weight [default: from config, 3].
    #[arg(long, value_name = "F64")]
    alpha: Option<f64>,
    /// Override the initialization/shuffling seed [default: from config, 0].
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// JSON training config shared by every run [default: all defaults].
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Comma-separated regularizer weights.
    #[arg(
        long,
        value_name = "LIST",
        value_delimiter = ',',
        default_value = "0,1,3,5,10,30,50"
    )]
    alpha: Vec<f64>,
    /// Override the initialization/shuffling seed [default: from config, 0].
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Directory receiving one run directory per weight and sweep.json.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Worker threads [default: available parallelism].
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Suite {
    /// Columns: score_stereo, score_anti, score_unrelated.
    Stereoset,
    /// Columns: group (female|male), association.
    Becpro,
    /// Columns: category (1A|1P|2A|2P), correct (true|false).
    Winobias,
    /// Columns: gender (M|F), gold, predicted.
    Bios,
    /// Columns: entail, neutral, contradict.
    Nli,
}

#[derive(Debug, Args)]
struct FairnessArgs {
    #[arg(value_enum)]
    suite: Suite,
    /// Per-example CSV with a header row.
    #[arg(value_name = "RECORDS")]
    records: PathBuf,
    /// Comma-separated thresholds for the nli suite.
    #[arg(
        long,
        value_name = "LIST",
        value_delimiter = ',',
        default_value = "0.5,0.7"
    )]
    tau: Vec<f64>,
    /// Write the scores here instead of stdout [default: stdout].
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Args)]
struct DemoArgs {
    /// Seed for corpus generation and training.
    #[arg(long, value_name = "U64", default_value_t = 7)]
    seed: u64,
    /// Regularizer weight of the regularized run.
    #[arg(long, value_name = "F64", default_value_t = 3.0)]
    alpha: f64,
    /// Output directory (baseline/, regularized/, summary.json).
    #[arg(long, value_name = "PATH", default_value = "ncfair-demo")]
    out: PathBuf,
}

/// Errors the user can fix by changing the command line.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Stats(a) => cmd_stats(a),
        Command::Nc(a) => cmd_nc(a),
        Command::Train(a) => cmd_train(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Fairness(a) => cmd_fairness(a),
        Command::Demo(a) => cmd_demo(a),
    }
}

fn emit(value: &impl serde::Serialize, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json_only(format: Format) -> Result<()> {
    match format {
        Format::Json => Ok(()),
        Format::Table => Err(usage("--format table is only supported by sweep")),
    }
}

fn cmd_stats(a: StatsArgs) -> Result<()> {
    let reps = read_array(&a.reprs)?;
    let labels = read_array(&a.labels)?;
    if reps.ndim() != 2 {
        bail!(
            "{}: representations must be 2-D, got {:?}",
            a.reprs.display(),
            reps.shape()
        );
    }
    let label_ids = labels.to_labels()?;
    let base = a
        .stats
        .as_ref()
        .map(|p| {
            ClassStatsAccumulator::load_snapshot(p)
                .with_context(|| format!("loading {}", p.display()))
        })
        .transpose()?;
    let needed = label_ids.iter().max().map_or(0, |m| m + 1);
    let vocab = a
        .vocab_size
        .or(base.as_ref().map(ClassStatsAccumulator::vocab_size))
        .unwrap_or(needed);
    let mut acc = ClassStatsAccumulator::new(vocab, reps.cols());
    acc.accumulate(&reps, &labels)?;
    if let Some(base) = base {
        acc.merge_from(&base)?;
    }
    acc.save_snapshot(&a.out)?;
    emit(
        &json!({
            "snapshot": a.out.display().to_string(),
            "vocab_size": acc.vocab_size(),
            "dim": acc.dim(),
            "tokens_seen": acc.tokens_seen(),
            "classes_seen": acc.classes_seen().count(),
        }),
        None,
    )
}

fn cmd_nc(a: NcArgs) -> Result<()> {
    json_only(a.format)?;
    let acc = ClassStatsAccumulator::load_snapshot(&a.stats)
        .with_context(|| format!("loading snapshot {}", a.stats.display()))?;
    let w = read_array(&a.weights)?;
    let bias = a.bias.as_ref().map(read_array).transpose()?;
    let weights = WeightMatrix::from_arrays(&w, bias.as_ref())?;
    let subset = match &a.subset {
        Some(p) => read_subset(p, acc.vocab_size())?,
        None => SubsetSpec::whole(acc.vocab_size())?,
    };
    let stream = match (&a.reprs, &a.labels) {
        (Some(r), Some(l)) => Some((read_array(r)?, read_array(l)?)),
        _ => None,
    };
    let report = nc_report(
        &acc,
        &weights,
        &subset,
        stream.as_ref().map(|(r, l)| (r, l)),
    )?;
    emit(&report, a.out.as_deref())
}

fn load_config(path: Option<&Path>) -> Result<TrainConfig> {
    match path {
        None => Ok(TrainConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

/// Final-epoch outcome of one run.
#[derive(Debug, Serialize)]
struct RunSummary<'a> {
    #[serde(serialize_with = "ser_f64")]
    alpha: f64,
    epochs: usize,
    #[serde(rename = "final")]
    last: Option<&'a EpochLog>,
}

impl<'a> RunSummary<'a> {
    fn of(artifacts: &'a RunArtifacts) -> Self {
        RunSummary {
            alpha: artifacts.config.alpha,
            epochs: artifacts.log.len(),
            last: artifacts.final_epoch(),
        }
    }
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    json_only(a.format)?;
    let mut config = load_config(a.config.as_deref())?;
    if let Some(alpha) = a.alpha {
        config.alpha = alpha;
    }
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    let artifacts = run(&config)?;
    artifacts.write(&a.out)?;
    emit(&RunSummary::of(&artifacts), None)
}

fn alpha_dir(alpha: f64) -> String {
    format!(
        "alpha_{}",
        format_sig17(alpha).unwrap_or_else(|| alpha.to_string())
    )
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    if a.alpha.is_empty() {
        return Err(usage("--alpha needs at least one value"));
    }
    let mut base = load_config(a.config.as_deref())?;
    if let Some(seed) = a.seed {
        base.seed = seed;
    }
    let threads = a
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);
    if threads == 0 {
        return Err(usage("--threads must be >= 1"));
    }

    let configs: Vec<TrainConfig> = a
        .alpha
        .iter()
        .map(|&alpha| TrainConfig {
            alpha,
            ..base.clone()
        })
        .collect();
    let mut results: Vec<Option<Result<RunArtifacts>>> = (0..configs.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (chunk_idx, chunk) in results
            .chunks_mut(configs.len().div_ceil(threads))
            .enumerate()
        {
            let start = chunk_idx * configs.len().div_ceil(threads);
            let configs = &configs;
            scope.spawn(move || {
                for (k, slot) in chunk.iter_mut().enumerate() {
                    *slot = Some(run(&configs[start + k]).map_err(anyhow::Error::from));
                }
            });
        }
    });

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut runs = Vec::new();
    for (config, result) in configs.iter().zip(results) {
        let artifacts = result
            .expect("every sweep slot is filled")
            .with_context(|| format!("alpha = {}", config.alpha))?;
        artifacts.write(a.out.join(alpha_dir(config.alpha)))?;
        runs.push(artifacts);
    }
    let table = json!({ "runs": runs.iter().map(RunSummary::of).collect::<Vec<_>>() });
    let text = serde_json::to_string_pretty(&table)? + "\n";
    let p = a.out.join("sweep.json");
    fs::write(&p, &text).with_context(|| format!("writing {}", p.display()))?;
    match a.format {
        Format::Json => {
            print!("{text}");
            Ok(())
        }
        Format::Table => {
            println!(
                "{:>8} {:>10} {:>10} {:>10} {:>10} {:>10}",
                "alpha", "L_mlm", "nc3_u", "nc1", "stereo", "acc%"
            );
            for r in &runs {
                let Some(f) = r.final_epoch() else {
                    println!("{:>8} (no epochs)", r.config.alpha);
                    continue;
                };
                println!(
                    "{:>8} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.2}",
                    r.config.alpha,
                    f.loss_mlm,
                    f.report.nc3_u,
                    f.report.nc1,
                    f.stereotype_preference,
                    f.masked_accuracy,
                );
            }
            Ok(())
        }
    }
}

fn cmd_fairness(a: FairnessArgs) -> Result<()> {
    json_only(a.format)?;
    let out = a.out.as_deref();
    let path = &a.records;
    match a.suite {
        Suite::Stereoset => emit(&stereoset(&read_records::<StereoRecord>(path)?)?, out),
        Suite::Becpro => emit(
            &becpro_diff(&read_records::<AssociationRecord>(path)?)?,
            out,
        ),
        Suite::Winobias => emit(&winobias(&read_records::<CorefRecord>(path)?)?, out),
        Suite::Bios => emit(&bios_gaps(&read_records::<BiosRecord>(path)?)?, out),
        Suite::Nli => {
            if a.tau.is_empty() {
                return Err(usage("--tau needs at least one value"));
            }
            emit(&bias_nli(&read_records::<NliRecord>(path)?, &a.tau)?, out)
        }
    }
}

#[derive(Debug, Serialize)]
struct DemoRun<'a> {
    #[serde(serialize_with = "ser_f64")]
    alpha: f64,
    report: &'a NcReport,
    #[serde(serialize_with = "ser_f64")]
    stereotype_preference: f64,
    #[serde(serialize_with = "ser_f64")]
    masked_accuracy: f64,
    #[serde(serialize_with = "ser_f64")]
    loss_mlm: f64,
}

#[derive(Debug, Serialize)]
struct DemoSummary<'a> {
    seed: u64,
    baseline: DemoRun<'a>,
    regularized: DemoRun<'a>,
}

impl<'a> DemoRun<'a> {
    fn of(r: &'a RunArtifacts) -> Result<Self> {
        let last = r
            .final_epoch()
            .ok_or_else(|| anyhow!("run logged no epochs"))?;
        Ok(DemoRun {
            alpha: r.config.alpha,
            report: &last.report,
            stereotype_preference: last.stereotype_preference,
            masked_accuracy: last.masked_accuracy,
            loss_mlm: last.loss_mlm,
        })
    }
}

fn cmd_demo(a: DemoArgs) -> Result<()> {
    let config = TrainConfig::seeded(a.seed);
    let mut runs = Vec::new();
    for (name, alpha) in [("baseline", 0.0), ("regularized", a.alpha)] {
        let artifacts = run(&TrainConfig {
            alpha,
            ..config.clone()
        })
        .map_err(|e| anyhow!("{name} run: {e}"))?;
        artifacts.write(a.out.join(name))?;
        runs.push(artifacts);
    }
    let summary = DemoSummary {
        seed: a.seed,
        baseline: DemoRun::of(&runs[0])?,
        regularized: DemoRun::of(&runs[1])?,
    };
    let p = a.out.join("summary.json");
    let text = serde_json::to_string_pretty(&summary)? + "\n";
    fs::write(&p, &text).with_context(|| format!("writing {}", p.display()))?;
    print!("{text}");
    Ok(())
}
