//! Flat `key = value` run configuration. One assignment per line, `#`
//! starts a comment, keys are single identifiers. Unknown or repeated keys
//! are rejected with their line number so a typo cannot silently fall back
//! to a default.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;

use digitnet_core::nn::ActivationKind;
use digitnet_core::optim::{AnnealPolicy, TrainConfig};

use crate::CliError;

/// What the run does: train a model or classify one image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunType {
    Train,
    Detect,
}

/// Fully resolved run configuration: optimizer hyperparameters plus file
/// locations. Every field has a default except the data paths, which are
/// validated by the commands that need them.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub runtype: RunType,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    /// Checkpoint consumed by detect mode.
    pub weights: Option<PathBuf>,
    /// Directory receiving checkpoints and the run log.
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            train: TrainConfig::default(),
            runtype: RunType::Train,
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
            weights: None,
            out_dir: PathBuf::from("runs"),
        }
    }
}

fn parse_num<T: std::str::FromStr>(line_no: usize, key: &str, value: &str) -> Result<T, CliError> {
    value.parse().map_err(|_| CliError::Config {
        line: line_no,
        message: format!("value {value:?} for key {key:?} is not valid"),
    })
}

impl RunConfig {
    /// Parses the `key = value` dialect; errors carry the offending line
    /// number.
    pub fn parse(text: &str) -> Result<RunConfig, CliError> {
        let mut config = RunConfig::default();
        let mut seen: BTreeSet<String> = BTreeSet::new();
        for (index, raw_line) in text.lines().enumerate() {
            let line_no = index + 1;
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Config {
                    line: line_no,
                    message: format!("expected `key = value`, found {line:?}"),
                });
            };
            let key = key.trim();
            let value = value.trim();
            if value.is_empty() {
                return Err(CliError::Config {
                    line: line_no,
                    message: format!("key {key:?} has no value"),
                });
            }
            if !seen.insert(key.to_string()) {
                return Err(CliError::Config {
                    line: line_no,
                    message: format!("key {key:?} is set twice"),
                });
            }
            match key {
                "eta" => config.train.learning_rate = parse_num(line_no, key, value)?,
                "momentum" => config.train.momentum = parse_num(line_no, key, value)?,
                "decay" => config.train.weight_decay = parse_num(line_no, key, value)?,
                "reg" => config.train.l2_reg = parse_num(line_no, key, value)?,
                "iterations" => config.train.epochs = parse_num(line_no, key, value)?,
                "seed" => config.train.seed = parse_num(line_no, key, value)?,
                "train_size" => config.train.train_count = parse_num(line_no, key, value)?,
                "test_size" => config.train.test_count = parse_num(line_no, key, value)?,
                "nonlinearity" => {
                    config.train.activation =
                        ActivationKind::from_name(value).ok_or_else(|| CliError::Config {
                            line: line_no,
                            message: format!(
                                "unknown nonlinearity {value:?} (expected tanh, stdsig, abs, or relu)"
                            ),
                        })?
                }
                "anneal" => match value {
                    "off" => config.train.anneal = AnnealPolicy::Off,
                    "plateau" => {
                        if !matches!(config.train.anneal, AnnealPolicy::Plateau { .. }) {
                            config.train.anneal = AnnealPolicy::Plateau { patience: 3 };
                        }
                    }
                    other => {
                        return Err(CliError::Config {
                            line: line_no,
                            message: format!(
                                "unknown anneal mode {other:?} (expected off or plateau)"
                            ),
                        })
                    }
                },
                "anneal_patience" => {
                    let patience: u32 = parse_num(line_no, key, value)?;
                    config.train.anneal = AnnealPolicy::Plateau { patience };
                }
                "runtype" => match value {
                    "train" => config.runtype = RunType::Train,
                    "detect" => config.runtype = RunType::Detect,
                    other => {
                        return Err(CliError::Config {
                            line: line_no,
                            message: format!(
                                "unknown runtype {other:?} (expected train or detect)"
                            ),
                        })
                    }
                },
                "train_images" => config.train_images = Some(PathBuf::from(value)),
                "train_labels" => config.train_labels = Some(PathBuf::from(value)),
                "test_images" => config.test_images = Some(PathBuf::from(value)),
                "test_labels" => config.test_labels = Some(PathBuf::from(value)),
                "weights" => config.weights = Some(PathBuf::from(value)),
                "out_dir" => config.out_dir = PathBuf::from(value),
                other => {
                    return Err(CliError::Config {
                        line: line_no,
                        message: format!("unknown key {other:?}"),
                    });
                }
            }
        }
        config.train.validate().map_err(CliError::Core)?;
        Ok(config)
    }

    /// Renders every effective value back to config text; `parse` of the
    /// result reproduces `self` exactly.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let t = &self.train;
        let _ = writeln!(out, "eta = {}", t.learning_rate);
        let _ = writeln!(out, "momentum = {}", t.momentum);
        let _ = writeln!(out, "decay = {}", t.weight_decay);
        let _ = writeln!(out, "reg = {}", t.l2_reg);
        let _ = writeln!(out, "iterations = {}", t.epochs);
        let _ = writeln!(out, "seed = {}", t.seed);
        let _ = writeln!(out, "nonlinearity = {}", t.activation.name());
        let _ = writeln!(out, "train_size = {}", t.train_count);
        let _ = writeln!(out, "test_size = {}", t.test_count);
        match t.anneal {
            AnnealPolicy::Off => {
                let _ = writeln!(out, "anneal = off");
            }
            AnnealPolicy::Plateau { patience } => {
                let _ = writeln!(out, "anneal = plateau");
                let _ = writeln!(out, "anneal_patience = {patience}");
            }
        }
        let _ = writeln!(
            out,
            "runtype = {}",
            match self.runtype {
                RunType::Train => "train",
                RunType::Detect => "detect",
            }
        );
        let paths = [
            ("train_images", &self.train_images),
            ("train_labels", &self.train_labels),
            ("test_images", &self.test_images),
            ("test_labels", &self.test_labels),
            ("weights", &self.weights),
        ];
        for (key, value) in paths {
            if let Some(path) = value {
                let _ = writeln!(out, "{key} = {}", path.display());
            }
        }
        let _ = writeln!(out, "out_dir = {}", self.out_dir.display());
        out
    }

    /// The four dataset paths, or an error naming the first missing one.
    pub fn data_paths(&self) -> Result<[&PathBuf; 4], CliError> {
        let entries = [
            ("train_images", &self.train_images),
            ("train_labels", &self.train_labels),
            ("test_images", &self.test_images),
            ("test_labels", &self.test_labels),
        ];
        let mut resolved = Vec::with_capacity(4);
        for (key, value) in entries {
            match value {
                Some(path) => resolved.push(path),
                None => {
                    return Err(CliError::Usage(format!(
                        "config is missing the {key} path"
                    )))
                }
            }
        }
        Ok([resolved[0], resolved[1], resolved[2], resolved[3]])
    }
}
