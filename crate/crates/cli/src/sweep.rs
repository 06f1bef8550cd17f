//! The experiment sweep: the full hyperparameter matrix as one command.
//! Each preset names a small set of overrides on the shared baseline
//! configuration; every preset trains into its own subdirectory, a failing
//! preset is recorded without aborting the rest, and the sweep ends with
//! one summary row per preset.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use digitnet_core::data::PreparedDataset;

use crate::config::RunConfig;
use crate::run::{fit, RunLog};
use crate::{CliError, Result};

/// One named experiment: overrides applied on top of the baseline config.
pub struct SweepPreset {
    pub name: &'static str,
    pub overrides: &'static [(&'static str, &'static str)],
    /// What the run demonstrates, for progress output.
    pub note: &'static str,
}

/// The experiment matrix. The baseline trains with the default rate; the
/// others vary exactly one axis each: rate (too high, too low, too low but
/// given more epochs), activation (absolute value, standard sigmoid),
/// heavy-ball momentum with weight decay, and L2 regularization at three
/// strengths.
pub const PRESETS: &[SweepPreset] = &[
    SweepPreset {
        name: "E-baseline",
        overrides: &[("eta", "0.0001")],
        note: "reference run at the default learning rate",
    },
    SweepPreset {
        name: "E-eta-high",
        overrides: &[("eta", "0.01")],
        note: "rate high enough to destabilize training",
    },
    SweepPreset {
        name: "E-eta-low-20",
        overrides: &[("eta", "0.00001")],
        note: "rate too low to converge in the standard epoch budget",
    },
    SweepPreset {
        name: "E-eta-low-50",
        overrides: &[("eta", "0.00001"), ("iterations", "50")],
        note: "the same low rate given 50 epochs",
    },
    SweepPreset {
        name: "E-abs",
        overrides: &[("nonlinearity", "abs")],
        note: "absolute-value activation",
    },
    SweepPreset {
        name: "E-stdsig",
        overrides: &[("nonlinearity", "stdsig")],
        note: "standard sigmoid activation",
    },
    SweepPreset {
        name: "E-momentum",
        overrides: &[("momentum", "0.9"), ("decay", "0.0005")],
        note: "heavy-ball momentum with weight decay",
    },
    SweepPreset {
        name: "E-reg-1e-5",
        overrides: &[("reg", "0.00001")],
        note: "weak L2 regularization",
    },
    SweepPreset {
        name: "E-reg-1e-4",
        overrides: &[("reg", "0.0001")],
        note: "moderate L2 regularization",
    },
    SweepPreset {
        name: "E-reg-1e-3",
        overrides: &[("reg", "0.001")],
        note: "strong L2 regularization",
    },
];

/// Looks up a preset by name.
pub fn preset(name: &str) -> Option<&'static SweepPreset> {
    PRESETS.iter().find(|p| p.name == name)
}

/// Applies overrides by rewriting the serialized config and reparsing it,
/// so every override passes through exactly the same parsing and
/// validation as a hand-written file.
pub fn apply_overrides(base: &RunConfig, overrides: &[(&str, &str)]) -> Result<RunConfig> {
    let mut text = String::new();
    for line in base.serialize().lines() {
        let key = line.split('=').next().unwrap_or("").trim();
        if !overrides.iter().any(|(k, _)| *k == key) {
            text.push_str(line);
            text.push('\n');
        }
    }
    for (key, value) in overrides {
        let _ = writeln!(text, "{key} = {value}");
    }
    RunConfig::parse(&text)
}

/// The result of one preset: its log on success, the error text otherwise.
pub struct SweepEntry {
    pub name: &'static str,
    pub outcome: core::result::Result<RunLog, String>,
}

/// The summary table: one row per preset with final test accuracy, final
/// test error, and the 1-based epoch of the first test-error minimum.
/// A failed preset keeps its row with the cells left empty.
pub fn summary_csv(entries: &[SweepEntry]) -> String {
    let mut out = String::from("preset,final_accuracy,final_error,epochs_to_best\n");
    for entry in entries {
        match &entry.outcome {
            Ok(log) => {
                let Some(last) = log.entries.last() else {
                    let _ = writeln!(out, "{},,,", entry.name);
                    continue;
                };
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    entry.name,
                    last.test.accuracy,
                    last.test.error_rate,
                    log.epochs_to_best()
                );
            }
            Err(_) => {
                let _ = writeln!(out, "{},,,", entry.name);
            }
        }
    }
    out
}

fn run_preset(
    base: &RunConfig,
    preset: &SweepPreset,
    train_set: &PreparedDataset,
    test_set: &PreparedDataset,
    out_dir: &Path,
    progress: &mut dyn FnMut(&str),
) -> Result<RunLog> {
    let config = apply_overrides(base, preset.overrides)?;
    let dir = out_dir.join(preset.name);
    let log = fit(&config, train_set, test_set, &dir, &mut |record| {
        progress(&format!(
            "  epoch {:>2}  train {:>5.1}%  test {:>5.1}%",
            record.epoch,
            record.train.accuracy,
            record.test.accuracy,
        ));
    })?;
    log.write_csv(&dir.join("runlog.csv"))?;
    let config_path = dir.join("config.txt");
    fs::write(&config_path, &log.config_text).map_err(|e| CliError::io(&config_path, e))?;
    Ok(log)
}

/// Runs the selected presets (typically all of [`PRESETS`]) against
/// shared, already-prepared datasets. Each preset writes its run log,
/// effective config, and per-epoch checkpoints under
/// `out_dir/<preset-name>/`; the summary lands in `out_dir/summary.csv`.
/// One preset failing does not stop the others.
pub fn run_sweep(
    base: &RunConfig,
    selection: &[&'static SweepPreset],
    train_set: &PreparedDataset,
    test_set: &PreparedDataset,
    out_dir: &Path,
    progress: &mut dyn FnMut(&str),
) -> Result<Vec<SweepEntry>> {
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut entries = Vec::with_capacity(selection.len());
    for preset in selection {
        progress(&format!("{}: {}", preset.name, preset.note));
        let outcome = run_preset(base, preset, train_set, test_set, out_dir, progress);
        if let Err(err) = &outcome {
            progress(&format!("{} failed: {err}", preset.name));
        }
        entries.push(SweepEntry {
            name: preset.name,
            outcome: outcome.map_err(|e| e.to_string()),
        });
    }
    let summary = summary_csv(&entries);
    let path = out_dir.join("summary.csv");
    fs::write(&path, summary).map_err(|e| CliError::io(&path, e))?;
    Ok(entries)
}
