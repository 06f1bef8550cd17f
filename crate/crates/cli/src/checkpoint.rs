//! Binary model checkpoints.
//!
//! A checkpoint is a single self-describing file carrying everything needed
//! to rebuild a [`ModelState`] bit for bit: the architecture, the
//! normalization statistics of the training data, the seed, the number of
//! completed epochs, and every parameter tensor.
//!
//! Layout (all integers little-endian, all floats IEEE-754 f64
//! little-endian):
//!
//! ```text
//! magic          8  bytes  "DGNCKPT\0"
//! version        u32       currently 1
//! input shape    3 × u64
//! layer count    u64
//! per layer      tag u8, then tag-specific fields:
//!                  1 = conv       maps, kh, kw      (3 × u64)
//!                  2 = activation kind              (u8: 0 tanh, 1 stdsig,
//!                                                       2 abs, 3 relu)
//!                  3 = subsample  ph, pw, trainable (2 × u64, u8)
//!                  4 = full       units             (u64)
//! norm mean      f64
//! norm std       f64
//! seed           u64
//! epoch          u32
//! per layer      each parameter tensor in declaration order:
//!                  rank u64, dims rank × u64, values f64 × len
//! ```
//!
//! Tensors carry no names on disk; their identity is fixed by the layer
//! specs decoded just before them, which also pin the expected shapes. Any
//! mismatch — wrong magic, unknown version or tag, shape disagreement,
//! non-finite value, or trailing bytes — fails the load.

use std::fs;
use std::path::Path;

use digitnet_core::data::NormStats;
use digitnet_core::nn::{
    ActivationKind, ArchitectureDescriptor, LayerParams, LayerSpec, ModelState,
};
use digitnet_core::Tensor;

use crate::{CliError, Result};

const MAGIC: &[u8; 8] = b"DGNCKPT\0";
const VERSION: u32 = 1;

/// Serializes a model to the checkpoint byte format.
pub fn encode(model: &ModelState) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for &dim in &model.arch.input_shape {
        out.extend_from_slice(&(dim as u64).to_le_bytes());
    }
    out.extend_from_slice(&(model.arch.layers.len() as u64).to_le_bytes());
    for layer in &model.arch.layers {
        encode_layer_spec(*layer, &mut out);
    }
    out.extend_from_slice(&model.norm_stats.mean.to_le_bytes());
    out.extend_from_slice(&model.norm_stats.std.to_le_bytes());
    out.extend_from_slice(&model.seed.to_le_bytes());
    out.extend_from_slice(&model.epoch.to_le_bytes());
    for param in &model.params {
        for (_, tensor) in param.named_tensors() {
            encode_tensor(tensor, &mut out);
        }
    }
    out
}

/// Parses checkpoint bytes back into a model. The architecture is
/// re-validated and every tensor is checked against the shape the
/// architecture implies, so a decoded model is as trustworthy as a freshly
/// initialized one.
pub fn decode(bytes: &[u8]) -> Result<ModelState> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(MAGIC.len())?;
    if magic != MAGIC {
        return Err(CliError::Checkpoint(format!(
            "bad magic {:02x?}, not a checkpoint file",
            &magic[..magic.len().min(8)]
        )));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CliError::Checkpoint(format!(
            "unsupported version {version}, this build reads version {VERSION}"
        )));
    }
    let input_shape = [r.dimension()?, r.dimension()?, r.dimension()?];
    let layer_count = r.u64()?;
    if layer_count > 1024 {
        return Err(CliError::Checkpoint(format!(
            "implausible layer count {layer_count}"
        )));
    }
    let mut layers = Vec::with_capacity(layer_count as usize);
    for _ in 0..layer_count {
        layers.push(decode_layer_spec(&mut r)?);
    }
    let arch = ArchitectureDescriptor {
        input_shape,
        layers,
    };
    arch.validate()?;

    let mean = r.f64()?;
    let std = r.f64()?;
    if !mean.is_finite() || !std.is_finite() || std <= 0.0 {
        return Err(CliError::Checkpoint(format!(
            "normalization stats mean {mean} / std {std} are not usable"
        )));
    }
    let seed = r.u64()?;
    let epoch = r.u32()?;

    // Initialize a model with the right parameter skeleton, then overwrite
    // every tensor from the file. init() pins the expected shapes, so a
    // tensor that disagrees is rejected rather than silently accepted.
    let mut model = ModelState::init(arch, seed)?;
    model.norm_stats = NormStats { mean, std };
    model.epoch = epoch;
    for param in &mut model.params {
        match param {
            LayerParams::Conv { kernels, bias }
            | LayerParams::Subsample { gain: kernels, bias }
            | LayerParams::Full {
                weight: kernels,
                bias,
            } => {
                *kernels = r.tensor_with_shape(kernels.shape())?;
                *bias = r.tensor_with_shape(bias.shape())?;
            }
            LayerParams::None => {}
        }
    }
    if r.pos != bytes.len() {
        return Err(CliError::Checkpoint(format!(
            "{} trailing bytes after the last tensor",
            bytes.len() - r.pos
        )));
    }
    Ok(model)
}

/// Writes a model checkpoint to `path`.
pub fn save(model: &ModelState, path: &Path) -> Result<()> {
    fs::write(path, encode(model)).map_err(|e| CliError::io(path, e))
}

/// Reads a model checkpoint from `path`.
pub fn load(path: &Path) -> Result<ModelState> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes)
}

fn encode_layer_spec(layer: LayerSpec, out: &mut Vec<u8>) {
    match layer {
        LayerSpec::Conv { maps, kh, kw } => {
            out.push(1);
            for dim in [maps, kh, kw] {
                out.extend_from_slice(&(dim as u64).to_le_bytes());
            }
        }
        LayerSpec::Act(kind) => {
            out.push(2);
            out.push(match kind {
                ActivationKind::Tanh => 0,
                ActivationKind::StdSig => 1,
                ActivationKind::Abs => 2,
                ActivationKind::Relu => 3,
            });
        }
        LayerSpec::Subsample { ph, pw, trainable } => {
            out.push(3);
            for dim in [ph, pw] {
                out.extend_from_slice(&(dim as u64).to_le_bytes());
            }
            out.push(trainable as u8);
        }
        LayerSpec::Full { units } => {
            out.push(4);
            out.extend_from_slice(&(units as u64).to_le_bytes());
        }
    }
}

fn decode_layer_spec(r: &mut Reader) -> Result<LayerSpec> {
    match r.u8()? {
        1 => Ok(LayerSpec::Conv {
            maps: r.dimension()?,
            kh: r.dimension()?,
            kw: r.dimension()?,
        }),
        2 => {
            let kind = match r.u8()? {
                0 => ActivationKind::Tanh,
                1 => ActivationKind::StdSig,
                2 => ActivationKind::Abs,
                3 => ActivationKind::Relu,
                other => {
                    return Err(CliError::Checkpoint(format!(
                        "unknown activation code {other}"
                    )))
                }
            };
            Ok(LayerSpec::Act(kind))
        }
        3 => Ok(LayerSpec::Subsample {
            ph: r.dimension()?,
            pw: r.dimension()?,
            trainable: match r.u8()? {
                0 => false,
                1 => true,
                other => {
                    return Err(CliError::Checkpoint(format!(
                        "subsample trainable flag must be 0 or 1, got {other}"
                    )))
                }
            },
        }),
        4 => Ok(LayerSpec::Full {
            units: r.dimension()?,
        }),
        other => Err(CliError::Checkpoint(format!("unknown layer tag {other}"))),
    }
}

fn encode_tensor(tensor: &Tensor, out: &mut Vec<u8>) {
    out.extend_from_slice(&(tensor.shape().len() as u64).to_le_bytes());
    for &dim in tensor.shape() {
        out.extend_from_slice(&(dim as u64).to_le_bytes());
    }
    for &value in tensor.data() {
        out.extend_from_slice(&value.to_le_bytes());
    }
}

/// Cursor over the checkpoint bytes; every read is bounds-checked so a
/// truncated file reports where it ran out instead of panicking.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(CliError::Checkpoint(format!(
                "file truncated: wanted {n} bytes at offset {}, {} left",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// A u64 field that must fit a usize tensor/layer dimension.
    fn dimension(&mut self) -> Result<usize> {
        let raw = self.u64()?;
        usize::try_from(raw)
            .ok()
            .filter(|&d| d <= (1 << 32))
            .ok_or_else(|| CliError::Checkpoint(format!("implausible dimension {raw}")))
    }

    fn tensor_with_shape(&mut self, expected: &[usize]) -> Result<Tensor> {
        let rank = self.dimension()?;
        if rank != expected.len() {
            return Err(CliError::Checkpoint(format!(
                "tensor rank {rank} where the architecture implies rank {}",
                expected.len()
            )));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(self.dimension()?);
        }
        if dims != expected {
            return Err(CliError::Checkpoint(format!(
                "tensor shape {dims:?} where the architecture implies {expected:?}"
            )));
        }
        let len: usize = dims.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            let value = self.f64()?;
            if !value.is_finite() {
                return Err(CliError::Checkpoint(format!(
                    "non-finite parameter value at offset {}",
                    self.pos - 8
                )));
            }
            data.push(value);
        }
        Ok(Tensor::from_vec(&dims, data)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use digitnet_core::nn::ArchitectureDescriptor;

    fn sample_model() -> ModelState {
        let mut model =
            ModelState::init(ArchitectureDescriptor::digits32(), 11).unwrap();
        model.norm_stats = NormStats {
            mean: 33.25,
            std: 78.5,
        };
        model.epoch = 7;
        model
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let model = sample_model();
        let decoded = decode(&encode(&model)).unwrap();
        assert_eq!(decoded.param_digest(), model.param_digest());
        assert_eq!(decoded.arch, model.arch);
        assert_eq!(decoded.seed, model.seed);
        assert_eq!(decoded.epoch, model.epoch);
        assert_eq!(decoded.norm_stats.mean.to_bits(), model.norm_stats.mean.to_bits());
        assert_eq!(decoded.norm_stats.std.to_bits(), model.norm_stats.std.to_bits());
    }

    #[test]
    fn round_trip_preserves_nondefault_activation() {
        let arch = ArchitectureDescriptor::digits32().with_activation(ActivationKind::StdSig);
        let model = ModelState::init(arch, 3).unwrap();
        let decoded = decode(&encode(&model)).unwrap();
        assert_eq!(decoded.arch, model.arch);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut bytes = encode(&sample_model());
        bytes[0] = b'X';
        let err = decode(&bytes).unwrap_err();
        assert!(format!("{err}").contains("magic"), "{err}");
    }

    #[test]
    fn unsupported_version_is_rejected() {
        let mut bytes = encode(&sample_model());
        bytes[8..12].copy_from_slice(&99u32.to_le_bytes());
        let err = decode(&bytes).unwrap_err();
        assert!(format!("{err}").contains("version 99"), "{err}");
    }

    #[test]
    fn truncation_anywhere_is_rejected() {
        let bytes = encode(&sample_model());
        // Chopping at a spread of depths must always fail cleanly, never
        // panic: inside the header, inside the specs, inside tensor data.
        for cut in [3, 11, 40, 60, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                decode(&bytes[..cut]).is_err(),
                "decode of {cut}-byte prefix should fail"
            );
        }
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let mut bytes = encode(&sample_model());
        bytes.push(0);
        let err = decode(&bytes).unwrap_err();
        assert!(format!("{err}").contains("trailing"), "{err}");
    }

    #[test]
    fn non_finite_parameter_is_rejected() {
        let model = sample_model();
        let mut bytes = encode(&model);
        let tail = bytes.len() - 8;
        bytes[tail..].copy_from_slice(&f64::NAN.to_le_bytes());
        let err = decode(&bytes).unwrap_err();
        assert!(format!("{err}").contains("non-finite"), "{err}");
    }

    #[test]
    fn unknown_layer_tag_is_rejected() {
        let mut bytes = encode(&sample_model());
        // First layer tag sits right after magic, version, input shape and
        // layer count: 8 + 4 + 24 + 8.
        bytes[44] = 9;
        let err = decode(&bytes).unwrap_err();
        assert!(format!("{err}").contains("layer tag"), "{err}");
    }

    #[test]
    fn save_and_load_via_files(){
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let model = sample_model();
        save(&model, &path).unwrap();
        let loaded = load(&path).unwrap();
        assert_eq!(loaded.param_digest(), model.param_digest());
    }

    #[test]
    fn missing_file_reports_path() {
        let err = load(Path::new("/nonexistent/model.ckpt")).unwrap_err();
        assert!(format!("{err}").contains("/nonexistent/model.ckpt"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }
}
