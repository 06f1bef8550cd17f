//! Central finite-difference verification of the analytic gradients.
//!
//! For a sampled set of parameters the scalar loss is probed at ±step and
//! the quotient compared against the backward pass. Probes that push an
//! abs/relu pre-activation onto (or across) its kink are excluded: the
//! loss is not differentiable there, so a finite difference says nothing
//! about the analytic gradient.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::{loss_mse, LayerParams, LayerSpec, ModelState, Tape};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckSettings {
    /// Half-width of the central difference.
    pub step: f64,
    /// Maximum allowed |analytic − numeric| relative to
    /// max(|analytic|, |numeric|, `small_grad_threshold`).
    pub rel_tol: f64,
    /// Absolute escape hatch: a disagreement this small always passes.
    pub abs_tol: f64,
    /// Denominator floor for the relative test; below it the comparison is
    /// effectively absolute, since finite-difference roundoff dominates
    /// gradients this small.
    pub small_grad_threshold: f64,
    /// How many parameters to sample (all of them when the model is smaller).
    pub max_params: usize,
    /// Seed of the parameter-sampling PRNG.
    pub seed: u64,
    /// A probe is excluded when any abs/relu pre-activation comes within
    /// this margin of zero in any of the three passes.
    pub kink_margin: f64,
}

impl Default for GradCheckSettings {
    fn default() -> GradCheckSettings {
        GradCheckSettings {
            step: 1e-5,
            rel_tol: 1e-5,
            abs_tol: 1e-9,
            small_grad_threshold: 1e-5,
            max_params: 200,
            seed: 7,
            kink_margin: 1e-4,
        }
    }
}

/// One compared parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamReport {
    pub layer: usize,
    pub tensor: &'static str,
    pub offset: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

/// Per-layer tally of a sweep: how many of the layer's sampled parameters
/// were compared, how many were excluded, and the worst relative error
/// among the compared ones.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSummary {
    pub layer: usize,
    pub checked: usize,
    pub skipped: usize,
    pub worst_rel_error: f64,
}

/// Result of a finite-difference sweep.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckOutcome {
    pub checked: usize,
    pub skipped: usize,
    pub worst: Option<ParamReport>,
    pub failures: Vec<ParamReport>,
    /// One entry per layer that had sampled parameters, ordered by layer.
    pub layers: Vec<LayerSummary>,
}

impl CheckOutcome {
    /// True when at least one parameter was actually compared and none
    /// disagreed. An all-skipped sweep verifies nothing and fails.
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.failures.is_empty()
    }

    fn layer_entry(&mut self, layer: usize) -> &mut LayerSummary {
        match self.layers.binary_search_by_key(&layer, |s| s.layer) {
            Ok(i) => &mut self.layers[i],
            Err(i) => {
                self.layers.insert(
                    i,
                    LayerSummary {
                        layer,
                        checked: 0,
                        skipped: 0,
                        worst_rel_error: 0.0,
                    },
                );
                &mut self.layers[i]
            }
        }
    }
}

/// Location of one scalar parameter: layer index, tensor within the layer,
/// flat offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Slot {
    layer: usize,
    tensor: &'static str,
    offset: usize,
}

fn enumerate_slots(params: &[LayerParams]) -> Vec<Slot> {
    let mut slots = Vec::new();
    for (layer, param) in params.iter().enumerate() {
        for (name, tensor) in param.named_tensors() {
            for offset in 0..tensor.len() {
                slots.push(Slot {
                    layer,
                    tensor: name,
                    offset,
                });
            }
        }
    }
    slots
}

fn slot_value_mut<'a>(params: &'a mut [LayerParams], slot: Slot) -> &'a mut f64 {
    let tensor = match (&mut params[slot.layer], slot.tensor) {
        (LayerParams::Conv { kernels, .. }, "kernels") => kernels,
        (LayerParams::Conv { bias, .. }, "bias") => bias,
        (LayerParams::Subsample { gain, .. }, "gain") => gain,
        (LayerParams::Subsample { bias, .. }, "bias") => bias,
        (LayerParams::Full { weight, .. }, "weight") => weight,
        (LayerParams::Full { bias, .. }, "bias") => bias,
        _ => unreachable!("slot enumerated from the same parameter list"),
    };
    &mut tensor.data_mut()[slot.offset]
}

fn slot_value(params: &[LayerParams], slot: Slot) -> f64 {
    let tensor = match (&params[slot.layer], slot.tensor) {
        (LayerParams::Conv { kernels, .. }, "kernels") => kernels,
        (LayerParams::Conv { bias, .. }, "bias") => bias,
        (LayerParams::Subsample { gain, .. }, "gain") => gain,
        (LayerParams::Subsample { bias, .. }, "bias") => bias,
        (LayerParams::Full { weight, .. }, "weight") => weight,
        (LayerParams::Full { bias, .. }, "bias") => bias,
        _ => unreachable!("slot enumerated from the same parameter list"),
    };
    tensor.data()[slot.offset]
}

/// Pre-activation values of every kinked activation layer, for exclusion
/// tests. Empty when the architecture has no abs/relu layers.
fn kink_inputs(model: &ModelState, tape: &Tape) -> Vec<Vec<f64>> {
    model
        .arch
        .layers
        .iter()
        .enumerate()
        .filter_map(|(i, layer)| match layer {
            LayerSpec::Act(kind) if kind.has_kink() => {
                Some(tape.entries[i].input.data().to_vec())
            }
            _ => None,
        })
        .collect()
}

fn near_or_across_kink(base: &[Vec<f64>], probe: &[Vec<f64>], margin: f64) -> bool {
    for (base_layer, probe_layer) in base.iter().zip(probe) {
        for (&b, &p) in base_layer.iter().zip(probe_layer) {
            if p == b {
                // The probe did not move this unit, so its kink cannot
                // distort the difference quotient. Without this guard a
                // large network always has some unit sitting within the
                // margin and every probe would be excluded.
                continue;
            }
            if b.signum() != p.signum() || b.abs() < margin || p.abs() < margin {
                return true;
            }
        }
    }
    false
}

/// Verifies the model's own backward pass against finite differences on
/// one (input, label) sample.
pub fn check_model(
    model: &ModelState,
    input: &Tensor,
    label: usize,
    settings: &GradCheckSettings,
) -> Result<CheckOutcome> {
    let tape = model.forward(input)?;
    let (_, loss_grad) = loss_mse(&tape.output, label)?;
    let analytic = model.backward(&tape, &loss_grad)?;
    check_against(model, input, label, &analytic, settings)
}

/// Compares the supplied analytic gradients against finite differences.
/// Exposed separately so tests can prove the checker flags wrong gradients.
pub fn check_against(
    model: &ModelState,
    input: &Tensor,
    label: usize,
    analytic: &[LayerParams],
    settings: &GradCheckSettings,
) -> Result<CheckOutcome> {
    let base_tape = model.forward(input)?;
    let has_kinks = model
        .arch
        .layers
        .iter()
        .any(|l| matches!(l, LayerSpec::Act(kind) if kind.has_kink()));
    let base_kinks = if has_kinks {
        kink_inputs(model, &base_tape)
    } else {
        Vec::new()
    };

    let slots = enumerate_slots(&model.params);
    let sampled: Vec<Slot> = if slots.len() <= settings.max_params {
        slots
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
        rand::seq::index::sample(&mut rng, slots.len(), settings.max_params)
            .into_iter()
            .map(|i| slots[i])
            .collect()
    };

    let mut probe = model.clone();
    let mut outcome = CheckOutcome::default();
    for slot in sampled {
        let original = slot_value(&model.params, slot);
        let mut excluded = false;
        let mut losses = [0.0; 2];
        for (pass, delta) in [settings.step, -settings.step].into_iter().enumerate() {
            *slot_value_mut(&mut probe.params, slot) = original + delta;
            let tape = probe.forward(input)?;
            if has_kinks {
                let probe_kinks = kink_inputs(&probe, &tape);
                if near_or_across_kink(&base_kinks, &probe_kinks, settings.kink_margin) {
                    excluded = true;
                    break;
                }
            }
            let (loss, _) = loss_mse(&tape.output, label)?;
            losses[pass] = loss;
        }
        *slot_value_mut(&mut probe.params, slot) = original;
        if excluded {
            outcome.skipped += 1;
            outcome.layer_entry(slot.layer).skipped += 1;
            continue;
        }

        let numeric = (losses[0] - losses[1]) / (2.0 * settings.step);
        let a = slot_grad(analytic, slot);
        let diff = (a - numeric).abs();
        // Clamping the denominator turns the relative test into an absolute
        // one below `small_grad_threshold`, where difference-quotient
        // roundoff swamps any relative comparison.
        let rel_error = diff
            / a.abs()
                .max(numeric.abs())
                .max(settings.small_grad_threshold);
        let ok = rel_error <= settings.rel_tol || diff <= settings.abs_tol;
        let report = ParamReport {
            layer: slot.layer,
            tensor: slot.tensor,
            offset: slot.offset,
            analytic: a,
            numeric,
            rel_error,
        };
        outcome.checked += 1;
        let entry = outcome.layer_entry(slot.layer);
        entry.checked += 1;
        entry.worst_rel_error = entry.worst_rel_error.max(rel_error);
        if outcome
            .worst
            .as_ref()
            .map_or(true, |w| rel_error > w.rel_error)
        {
            outcome.worst = Some(report.clone());
        }
        if !ok {
            outcome.failures.push(report);
        }
    }
    Ok(outcome)
}

fn slot_grad(grads: &[LayerParams], slot: Slot) -> f64 {
    slot_value(grads, slot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ActivationKind, ArchitectureDescriptor};
    use alloc::vec;

    fn tiny_model(kind: ActivationKind) -> ModelState {
        let arch = ArchitectureDescriptor {
            input_shape: [1, 3, 3],
            layers: vec![
                LayerSpec::Conv { maps: 1, kh: 2, kw: 2 },
                LayerSpec::Act(kind),
                LayerSpec::Full { units: 2 },
            ],
        };
        let params = vec![
            LayerParams::Conv {
                kernels: Tensor::from_vec(&[1, 1, 2, 2], vec![0.6, -0.4, 0.3, 0.2]).unwrap(),
                bias: Tensor::from_vec(&[1], vec![0.15]).unwrap(),
            },
            LayerParams::None,
            LayerParams::Full {
                weight: Tensor::from_vec(
                    &[2, 4],
                    vec![0.7, -0.3, 0.4, 0.1, -0.2, 0.5, -0.6, 0.8],
                )
                .unwrap(),
                bias: Tensor::from_vec(&[2], vec![0.05, -0.1]).unwrap(),
            },
        ];
        ModelState {
            arch,
            params,
            norm_stats: crate::data::NormStats::IDENTITY,
            seed: 0,
            epoch: 0,
        }
    }

    fn tiny_input() -> Tensor {
        Tensor::from_vec(
            &[1, 3, 3],
            vec![0.9, -0.3, 0.7, 0.5, -0.8, 0.2, -0.6, 0.4, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn tiny_tanh_net_passes_exhaustively() {
        let model = tiny_model(ActivationKind::Tanh);
        let outcome =
            check_model(&model, &tiny_input(), 1, &GradCheckSettings::default()).unwrap();
        // 15 parameters, all checked, none skipped.
        assert_eq!(outcome.checked, 15);
        assert_eq!(outcome.skipped, 0);
        assert!(outcome.passed(), "worst: {:?}", outcome.worst);
    }

    #[test]
    fn layer_summaries_conserve_totals_and_carry_the_global_worst() {
        let model = tiny_model(ActivationKind::Tanh);
        let outcome =
            check_model(&model, &tiny_input(), 1, &GradCheckSettings::default()).unwrap();
        let layers: Vec<usize> = outcome.layers.iter().map(|s| s.layer).collect();
        assert_eq!(layers, vec![0, 2], "conv and dense layers have parameters");
        assert_eq!(outcome.layers[0].checked, 5);
        assert_eq!(outcome.layers[1].checked, 10);
        let checked: usize = outcome.layers.iter().map(|s| s.checked).sum();
        let skipped: usize = outcome.layers.iter().map(|s| s.skipped).sum();
        assert_eq!(checked, outcome.checked);
        assert_eq!(skipped, outcome.skipped);
        let per_layer_worst = outcome
            .layers
            .iter()
            .fold(0.0f64, |acc, s| acc.max(s.worst_rel_error));
        assert_eq!(per_layer_worst, outcome.worst.as_ref().unwrap().rel_error);
    }

    #[test]
    fn abs_net_away_from_kinks_passes() {
        let model = tiny_model(ActivationKind::Abs);
        let outcome =
            check_model(&model, &tiny_input(), 0, &GradCheckSettings::default()).unwrap();
        assert!(outcome.passed(), "worst: {:?}", outcome.worst);
        assert_eq!(outcome.skipped, 0);
    }

    #[test]
    fn corrupted_gradients_are_flagged_at_their_layer() {
        let model = tiny_model(ActivationKind::Tanh);
        let input = tiny_input();
        let tape = model.forward(&input).unwrap();
        let (_, loss_grad) = loss_mse(&tape.output, 1).unwrap();
        let mut grads = model.backward(&tape, &loss_grad).unwrap();
        if let LayerParams::Conv { kernels, .. } = &mut grads[0] {
            for g in kernels.data_mut() {
                *g *= 2.0;
            }
        }
        let outcome =
            check_against(&model, &input, 1, &grads, &GradCheckSettings::default()).unwrap();
        assert!(!outcome.passed());
        assert!(!outcome.failures.is_empty());
        assert!(outcome.failures.iter().all(|f| f.layer == 0));
        assert!(outcome
            .failures
            .iter()
            .all(|f| f.tensor == "kernels"));
    }

    #[test]
    fn relu_probes_touching_a_kink_are_excluded() {
        let mut model = tiny_model(ActivationKind::Relu);
        // Park every relu input exactly on the kink: with a zero kernel and
        // zero bias all conv outputs are 0.
        if let LayerParams::Conv { kernels, bias } = &mut model.params[0] {
            for w in kernels.data_mut() {
                *w = 0.0;
            }
            bias.data_mut()[0] = 0.0;
        }
        let outcome =
            check_model(&model, &tiny_input(), 0, &GradCheckSettings::default()).unwrap();
        // Probing any of the 5 conv parameters pushes relu inputs off the
        // kink, so those comparisons are invalid and must be skipped. The 10
        // dense parameters sit downstream and leave the relu inputs frozen;
        // their difference quotients stay valid and must still be checked.
        assert_eq!(outcome.skipped, 5);
        assert_eq!(outcome.checked, 10);
        assert!(outcome.passed(), "worst: {:?}", outcome.worst);
    }

    #[test]
    fn all_skipped_sweep_does_not_pass() {
        // A zeroed dense layer straight into relu: every input pixel is
        // nonzero, so perturbing any weight or bias moves a pre-activation
        // off the kink and every probe is excluded. Verifying nothing must
        // not count as success.
        let arch = ArchitectureDescriptor {
            input_shape: [1, 3, 3],
            layers: vec![
                LayerSpec::Full { units: 2 },
                LayerSpec::Act(ActivationKind::Relu),
            ],
        };
        let model = ModelState {
            arch,
            params: vec![
                LayerParams::Full {
                    weight: Tensor::zeros(&[2, 9]),
                    bias: Tensor::zeros(&[2]),
                },
                LayerParams::None,
            ],
            norm_stats: crate::data::NormStats::IDENTITY,
            seed: 0,
            epoch: 0,
        };
        let outcome =
            check_model(&model, &tiny_input(), 0, &GradCheckSettings::default()).unwrap();
        assert_eq!(outcome.checked, 0);
        assert_eq!(outcome.skipped, 20);
        assert!(!outcome.passed());
    }

    #[test]
    fn sampling_respects_max_params() {
        let model = ModelState::init(ArchitectureDescriptor::digits32(), 4).unwrap();
        let input = Tensor::filled(&[1, 32, 32], 0.1);
        let settings = GradCheckSettings {
            max_params: 25,
            ..GradCheckSettings::default()
        };
        let outcome = check_model(&model, &input, 3, &settings).unwrap();
        assert_eq!(outcome.checked + outcome.skipped, 25);
        assert!(outcome.passed(), "worst: {:?}", outcome.worst);
    }
}
