//! digitnet — config-driven frontend over the digit-recognition library:
//! prepare and inspect data, train, evaluate, classify single images,
//! verify gradients, and run the full experiment matrix.

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rand::distributions::Uniform;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use digitnet_core::data::{write_idx_images, write_idx_labels, DigestReport};
use digitnet_core::gradcheck::{check_model, GradCheckSettings};
use digitnet_core::nn::{ActivationKind, ArchitectureDescriptor, LayerSpec, ModelState};
use digitnet_core::train::Metrics;
use digitnet_core::Tensor;

use digitnet_cli::config::{RunConfig, RunType};
use digitnet_cli::{run, sweep, CliError, Result};

/// The four files a data directory is expected to hold.
const DATA_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

#[derive(Parser)]
#[command(
    name = "digitnet",
    version,
    about = "Train and run a small convolutional digit recognizer"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Run configuration file (`key = value` lines).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Directory holding the four IDX files under their standard names;
    /// overrides the config's data paths.
    #[arg(long, global = true, value_name = "DIR")]
    data_dir: Option<PathBuf>,

    /// Output directory; overrides the config's `out_dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// PRNG seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the raw data, write the configured subset, print its digest.
    Prepare,
    /// Train per the config; write the run log and per-epoch checkpoints.
    Train,
    /// Evaluate a checkpoint on the test split.
    Eval {
        /// Checkpoint to evaluate; overrides the config's `weights` path.
        #[arg(long, value_name = "FILE")]
        weights: Option<PathBuf>,
    },
    /// Classify one PGM image with a trained checkpoint.
    Detect {
        /// Binary (P5) PGM image, 28x28 or 32x32, maxval 255.
        image: PathBuf,
        /// Checkpoint to use; overrides the config's `weights` path.
        #[arg(long, value_name = "FILE")]
        weights: Option<PathBuf>,
    },
    /// Verify backpropagation against finite differences, layer by layer.
    Gradcheck {
        /// Activation to build the probe network with.
        #[arg(long, default_value = "tanh")]
        nonlinearity: String,
        /// How many parameters to sample.
        #[arg(long, default_value_t = 200)]
        samples: usize,
        /// Class label of the probe sample.
        #[arg(long, default_value_t = 3)]
        label: usize,
    },
    /// Run the experiment matrix: all presets, or just the named ones.
    Sweep {
        /// Preset names (e.g. E-baseline); empty runs the full matrix.
        presets: Vec<String>,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // --help and --version land here too; only real usage errors
            // exit nonzero.
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = dispatch(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let config = load_config(&cli.global)?;
    match cli.command {
        Command::Prepare => cmd_prepare(&config),
        Command::Train => cmd_train(&config),
        Command::Eval { weights } => cmd_eval(&config, weights),
        Command::Detect { image, weights } => cmd_detect(&config, image, weights),
        Command::Gradcheck {
            nonlinearity,
            samples,
            label,
        } => cmd_gradcheck(&config, &nonlinearity, samples, label),
        Command::Sweep { presets } => cmd_sweep(&config, &presets),
    }
}

/// Loads the config file (or the defaults) and applies the global flag
/// overrides: flags beat config values.
fn load_config(global: &GlobalArgs) -> Result<RunConfig> {
    let mut config = match &global.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(dir) = &global.data_dir {
        config.train_images = Some(dir.join(DATA_FILES[0]));
        config.train_labels = Some(dir.join(DATA_FILES[1]));
        config.test_images = Some(dir.join(DATA_FILES[2]));
        config.test_labels = Some(dir.join(DATA_FILES[3]));
    }
    if let Some(dir) = &global.out_dir {
        config.out_dir = dir.clone();
    }
    if let Some(seed) = global.seed {
        config.train.seed = seed;
    }
    Ok(config)
}

fn print_digest(split: &str, report: &DigestReport) {
    println!("{split}: {} samples", report.count);
    println!("  per-class counts: {:?}", report.per_class_counts);
    println!(
        "  pixel stats: mean {:.6}, std {:.6}",
        report.stats.mean, report.stats.std
    );
    println!("  content hash: {}", report.content_hash);
}

/// Parses the raw IDX files, prepares the configured subset, prints both
/// splits' digests, and writes the subset back out as IDX files under the
/// output directory so later runs can point `--data-dir` at it.
fn cmd_prepare(config: &RunConfig) -> Result<()> {
    let (train_report, test_report) = run::digest_reports(config)?;
    print_digest("train", &train_report);
    print_digest("test", &test_report);

    // Re-read the raw files to slice out the subset in its original u8
    // form: the prepared tensors are normalized floats, but the artifact
    // on disk stays in the interchange format.
    let [train_images, train_labels, test_images, test_labels] = config.data_paths()?;
    let out = &config.out_dir;
    for source in [train_images, train_labels, test_images, test_labels] {
        if let (Ok(src), Ok(dst)) = (source.canonicalize(), out.canonicalize()) {
            if src.parent() == Some(dst.as_path()) {
                return Err(CliError::Usage(format!(
                    "writing the subset into {} would overwrite the source data; choose a different --out-dir",
                    out.display()
                )));
            }
        }
    }
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;

    let train = run::read_raw(train_images, train_labels)?;
    let test = run::read_raw(test_images, test_labels)?;
    let train_count = config.train.train_count;
    let test_count = config.train.test_count;
    for (raw, count, image_name, label_name) in [
        (&train, train_count, DATA_FILES[0], DATA_FILES[1]),
        (&test, test_count, DATA_FILES[2], DATA_FILES[3]),
    ] {
        if raw.len() < count {
            // prepare() already validated this; defensive double-check.
            return Err(CliError::Usage(format!(
                "subset of {count} requested but only {} samples present",
                raw.len()
            )));
        }
        let images = write_idx_images(&raw.images()[..count])?;
        let labels = write_idx_labels(&raw.labels()[..count])?;
        let image_path = out.join(image_name);
        fs::write(&image_path, images).map_err(|e| CliError::io(&image_path, e))?;
        let label_path = out.join(label_name);
        fs::write(&label_path, labels).map_err(|e| CliError::io(&label_path, e))?;
    }
    println!("wrote {}-sample train / {}-sample test subset to {}",
        train_count, test_count, out.display());
    Ok(())
}

fn print_epoch(record: &run::EpochRecord) {
    println!(
        "epoch {:>3}  train {:>5.1}%  test {:>5.1}%  eta {}  {:.1}s",
        record.epoch,
        record.train.accuracy,
        record.test.accuracy,
        record.eta,
        record.seconds,
    );
}

fn cmd_train(config: &RunConfig) -> Result<()> {
    if config.runtype != RunType::Train {
        return Err(CliError::Usage(String::from(
            "this config has runtype = detect; the train command needs runtype = train",
        )));
    }
    let (train_set, test_set) = run::load_datasets(config)?;
    let out = config.out_dir.clone();
    let log = run::fit(config, &train_set, &test_set, &out, &mut print_epoch)?;
    let csv_path = out.join("runlog.csv");
    log.write_csv(&csv_path)?;
    let config_path = out.join("config.txt");
    fs::write(&config_path, &log.config_text).map_err(|e| CliError::io(&config_path, e))?;
    if let Some(last) = log.entries.last() {
        println!(
            "final: test accuracy {:.1}%, test error {:.1}% after {} epochs (log: {})",
            last.test.accuracy,
            last.test.error_rate,
            last.epoch,
            csv_path.display(),
        );
    }
    Ok(())
}

fn print_metrics(metrics: &Metrics) {
    println!(
        "test accuracy {:.1}%  ({} samples, error {:.1}%)",
        metrics.accuracy,
        metrics.sample_count,
        metrics.error_rate,
    );
    println!("per-class accuracy:");
    for (class, acc) in metrics.per_class_accuracy.iter().enumerate() {
        println!("  {class}: {:.1}%", acc);
    }
    println!("confusion matrix (rows: true class, cols: predicted):");
    for row in &metrics.confusion {
        let cells: Vec<String> = row.iter().map(|c| format!("{c:>4}")).collect();
        println!("  {}", cells.join(" "));
    }
}

fn cmd_eval(config: &RunConfig, weights: Option<PathBuf>) -> Result<()> {
    let mut config = config.clone();
    if weights.is_some() {
        config.weights = weights;
    }
    let model = run::load_weights(&config)?;
    let metrics = run::evaluate_checkpoint(&config, &model)?;
    print_metrics(&metrics);
    Ok(())
}

fn cmd_detect(config: &RunConfig, image: PathBuf, weights: Option<PathBuf>) -> Result<()> {
    if config.runtype != RunType::Detect {
        return Err(CliError::Usage(String::from(
            "the detect command needs a config with runtype = detect",
        )));
    }
    let mut config = config.clone();
    if weights.is_some() {
        config.weights = weights;
    }
    let model = run::load_weights(&config)?;
    let detection = run::detect(&model, &image)?;
    println!("class: {}", detection.class);
    let scores: Vec<String> = detection.scores.iter().map(|s| s.to_string()).collect();
    println!("scores: {}", scores.join(" "));
    Ok(())
}

/// One line per layer for gradient-check output, e.g. `conv 6@5x5`.
fn describe_layer(layer: &LayerSpec) -> String {
    match layer {
        LayerSpec::Conv { maps, kh, kw } => format!("conv {maps}@{kh}x{kw}"),
        LayerSpec::Act(kind) => kind.name().to_string(),
        LayerSpec::Subsample { ph, pw, trainable } => {
            if *trainable {
                format!("subsample {ph}x{pw} (trainable)")
            } else {
                format!("subsample {ph}x{pw}")
            }
        }
        LayerSpec::Full { units } => format!("full {units}"),
    }
}

/// A synthetic normalized input in the range the data pipeline produces.
fn synthetic_input(seed: u64) -> Result<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new_inclusive(-1.5, 1.5);
    let tensor = Tensor::from_vec(
        &[1, 32, 32],
        (0..32 * 32).map(|_| rng.sample(dist)).collect(),
    )?;
    Ok(tensor)
}

fn cmd_gradcheck(config: &RunConfig, nonlinearity: &str, samples: usize, label: usize) -> Result<()> {
    let kind = ActivationKind::from_name(nonlinearity).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown nonlinearity {nonlinearity:?} (expected tanh, stdsig, abs, or relu)"
        ))
    })?;
    if label >= 10 {
        return Err(CliError::Usage(format!(
            "label {label} is out of range (0-9)"
        )));
    }
    if samples == 0 {
        return Err(CliError::Usage(String::from(
            "at least one parameter must be sampled",
        )));
    }
    let seed = config.train.seed;
    let arch = ArchitectureDescriptor::digits32().with_activation(kind);
    let model = ModelState::init(arch, seed)?;
    let input = synthetic_input(seed ^ 0xD1F7)?;
    let settings = GradCheckSettings {
        max_params: samples,
        ..GradCheckSettings::default()
    };
    let outcome = check_model(&model, &input, label, &settings)?;

    println!(
        "gradient check: {} network, seed {seed}, {} parameters sampled, {} excluded near kinks",
        kind.name(),
        outcome.checked,
        outcome.skipped,
    );
    for summary in &outcome.layers {
        let desc = describe_layer(&model.arch.layers[summary.layer]);
        println!(
            "  layer {:>2} ({:<24}) worst rel error {:>10.3e}  checked {:>3}  excluded {:>3}",
            summary.layer, desc, summary.worst_rel_error, summary.checked, summary.skipped,
        );
    }
    if outcome.passed() {
        println!("pass: all layers within tolerance {:.0e}", settings.rel_tol);
        Ok(())
    } else if outcome.checked == 0 {
        Err(CliError::GradCheck(String::from(
            "no parameters were checked: every probe landed near an activation kink",
        )))
    } else {
        let worst = outcome
            .failures
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
            .expect("failures is non-empty when a checked sweep fails");
        Err(CliError::GradCheck(format!(
            "{} of {} sampled gradients disagree with finite differences; worst at layer {} ({}), tensor {}, offset {}: rel error {:.3e}",
            outcome.failures.len(),
            outcome.checked,
            worst.layer,
            describe_layer(&model.arch.layers[worst.layer]),
            worst.tensor,
            worst.offset,
            worst.rel_error,
        )))
    }
}

fn cmd_sweep(config: &RunConfig, names: &[String]) -> Result<()> {
    let selection: Vec<&'static sweep::SweepPreset> = if names.is_empty() {
        sweep::PRESETS.iter().collect()
    } else {
        names
            .iter()
            .map(|name| {
                sweep::preset(name).ok_or_else(|| {
                    let known: Vec<&str> = sweep::PRESETS.iter().map(|p| p.name).collect();
                    CliError::Usage(format!(
                        "unknown preset {name:?}; available: {}",
                        known.join(", ")
                    ))
                })
            })
            .collect::<Result<_>>()?
    };
    let (train_set, test_set) = run::load_datasets(config)?;
    let entries = sweep::run_sweep(
        config,
        &selection,
        &train_set,
        &test_set,
        &config.out_dir,
        &mut |line| println!("{line}"),
    )?;
    println!();
    print!("{}", sweep::summary_csv(&entries));
    println!("summary written to {}", config.out_dir.join("summary.csv").display());
    Ok(())
}
