//! Network structure: layer specs, architecture validation, and the preset
//! used for digit recognition.

mod activation;
mod model;

pub use activation::{ActivationKind, STDSIG_SCALE, STDSIG_SLOPE};
pub use model::{loss_mse, predict, LayerParams, ModelState, Tape};

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// One layer of the network, by role and geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    /// Valid 2-D convolution with full input/output channel connectivity.
    Conv { maps: usize, kh: usize, kw: usize },
    /// Pointwise nonlinearity; the kind is shared by the whole network.
    Act(ActivationKind),
    /// Average pooling over non-overlapping windows. When `trainable`, each
    /// output map is scaled by a per-map gain and shifted by a per-map bias;
    /// otherwise it is a plain average.
    Subsample { ph: usize, pw: usize, trainable: bool },
    /// Dense layer over the flattened input.
    Full { units: usize },
}

/// A full network: input geometry plus an ordered layer list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchitectureDescriptor {
    pub input_shape: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

impl ArchitectureDescriptor {
    /// The six-layer convolutional network trained on 32x32 digit images:
    /// three conv stages interleaved with trainable average subsampling,
    /// ending in a ten-unit linear readout. Spatial trace
    /// 32 -> 28 -> 14 -> 9 -> 4 -> 1, 35722 trainable parameters.
    pub fn digits32() -> ArchitectureDescriptor {
        use ActivationKind::Tanh;
        ArchitectureDescriptor {
            input_shape: [1, 32, 32],
            layers: alloc::vec![
                LayerSpec::Conv { maps: 6, kh: 5, kw: 5 },
                LayerSpec::Act(Tanh),
                LayerSpec::Subsample { ph: 2, pw: 2, trainable: true },
                LayerSpec::Act(Tanh),
                LayerSpec::Conv { maps: 16, kh: 6, kw: 6 },
                LayerSpec::Act(Tanh),
                LayerSpec::Subsample { ph: 2, pw: 2, trainable: true },
                LayerSpec::Act(Tanh),
                LayerSpec::Conv { maps: 120, kh: 4, kw: 4 },
                LayerSpec::Act(Tanh),
                LayerSpec::Full { units: 10 },
            ],
        }
    }

    /// Same structure with every activation layer replaced by `kind`.
    pub fn with_activation(mut self, kind: ActivationKind) -> ArchitectureDescriptor {
        for layer in &mut self.layers {
            if let LayerSpec::Act(k) = layer {
                *k = kind;
            }
        }
        self
    }

    /// Checks that every layer is geometrically possible on its input and
    /// returns the shape trace: entry 0 is the input shape, entry `i + 1`
    /// the output shape of layer `i`. Conv and Subsample require rank-3
    /// inputs; Full flattens anything.
    pub fn validate(&self) -> Result<Vec<Vec<usize>>> {
        if self.input_shape.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArchitecture(format!(
                "input shape {:?} has a zero dimension",
                self.input_shape
            )));
        }
        if self.layers.is_empty() {
            return Err(Error::InvalidArchitecture(String::from(
                "architecture has no layers",
            )));
        }
        let mut trace: Vec<Vec<usize>> = Vec::with_capacity(self.layers.len() + 1);
        trace.push(self.input_shape.to_vec());
        let mut shape: Vec<usize> = self.input_shape.to_vec();
        for (index, layer) in self.layers.iter().enumerate() {
            shape = layer_output_shape(*layer, &shape).map_err(|e| {
                Error::InvalidArchitecture(format!("error at layer {index}: {e}"))
            })?;
            trace.push(shape.clone());
        }
        Ok(trace)
    }
}

fn layer_output_shape(layer: LayerSpec, input: &[usize]) -> Result<Vec<usize>> {
    match layer {
        LayerSpec::Conv { maps, kh, kw } => {
            if input.len() != 3 {
                return Err(Error::InvalidGeometry {
                    layer: "conv",
                    reason: format!("needs a rank-3 input, got rank {}", input.len()),
                });
            }
            let (h, w) = (input[1], input[2]);
            if maps == 0 || kh == 0 || kw == 0 {
                return Err(Error::InvalidGeometry {
                    layer: "conv",
                    reason: String::from("maps and kernel dimensions must be positive"),
                });
            }
            if kh > h || kw > w {
                return Err(Error::InvalidGeometry {
                    layer: "conv",
                    reason: format!("kernel {kh}x{kw} exceeds input {h}x{w}"),
                });
            }
            Ok(alloc::vec![maps, h - kh + 1, w - kw + 1])
        }
        LayerSpec::Act(_) => Ok(input.to_vec()),
        LayerSpec::Subsample { ph, pw, .. } => {
            if input.len() != 3 {
                return Err(Error::InvalidGeometry {
                    layer: "subsample",
                    reason: format!("needs a rank-3 input, got rank {}", input.len()),
                });
            }
            let (h, w) = (input[1], input[2]);
            if ph == 0 || pw == 0 {
                return Err(Error::InvalidGeometry {
                    layer: "subsample",
                    reason: String::from("window dimensions must be positive"),
                });
            }
            if ph > h || pw > w {
                return Err(Error::InvalidGeometry {
                    layer: "subsample",
                    reason: format!("window {ph}x{pw} exceeds input {h}x{w}"),
                });
            }
            Ok(alloc::vec![input[0], h / ph, w / pw])
        }
        LayerSpec::Full { units } => {
            if units == 0 {
                return Err(Error::InvalidGeometry {
                    layer: "full",
                    reason: String::from("unit count must be positive"),
                });
            }
            Ok(alloc::vec![units])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digits32_trace_matches_hand_computation() {
        let arch = ArchitectureDescriptor::digits32();
        let trace = arch.validate().unwrap();
        let expected: &[&[usize]] = &[
            &[1, 32, 32],
            &[6, 28, 28],
            &[6, 28, 28],
            &[6, 14, 14],
            &[6, 14, 14],
            &[16, 9, 9],
            &[16, 9, 9],
            &[16, 4, 4],
            &[16, 4, 4],
            &[120, 1, 1],
            &[120, 1, 1],
            &[10],
        ];
        assert_eq!(trace.len(), expected.len());
        for (got, want) in trace.iter().zip(expected) {
            assert_eq!(got.as_slice(), *want);
        }
    }

    #[test]
    fn oversized_kernel_is_rejected_with_layer_index() {
        let arch = ArchitectureDescriptor {
            input_shape: [1, 4, 4],
            layers: alloc::vec![LayerSpec::Conv { maps: 1, kh: 5, kw: 5 }],
        };
        let err = arch.validate().unwrap_err();
        let msg = alloc::format!("{err}");
        assert!(msg.contains("layer 0"), "{msg}");
    }

    #[test]
    fn full_after_conv_flattens() {
        let arch = ArchitectureDescriptor {
            input_shape: [1, 6, 6],
            layers: alloc::vec![
                LayerSpec::Conv { maps: 2, kh: 3, kw: 3 },
                LayerSpec::Act(ActivationKind::Tanh),
                LayerSpec::Full { units: 5 },
            ],
        };
        let trace = arch.validate().unwrap();
        assert_eq!(trace.last().unwrap().as_slice(), &[5]);
    }

    #[test]
    fn with_activation_swaps_every_act_layer() {
        let arch = ArchitectureDescriptor::digits32().with_activation(ActivationKind::Abs);
        let acts: Vec<_> = arch
            .layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Act(k) => Some(*k),
                _ => None,
            })
            .collect();
        assert_eq!(acts.len(), 5);
        assert!(acts.iter().all(|&k| k == ActivationKind::Abs));
    }

    #[test]
    fn zero_input_dimension_is_rejected() {
        let arch = ArchitectureDescriptor {
            input_shape: [1, 0, 32],
            layers: alloc::vec![LayerSpec::Full { units: 10 }],
        };
        assert!(arch.validate().is_err());
    }

    #[test]
    fn pooling_floors_odd_extents() {
        let arch = ArchitectureDescriptor {
            input_shape: [3, 9, 7],
            layers: alloc::vec![LayerSpec::Subsample { ph: 2, pw: 2, trainable: true }],
        };
        let trace = arch.validate().unwrap();
        assert_eq!(trace[1].as_slice(), &[3, 4, 3]);
    }
}
