//! Crate-internal SHA-256 helpers shared by the digest functions.

use alloc::string::String;

use sha2::{Digest, Sha256};

use crate::tensor::Tensor;

pub(crate) fn finish_hex(hasher: Sha256) -> String {
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        use core::fmt::Write;
        let _ = write!(hex, "{byte:02x}");
    }
    hex
}

/// Feeds rank, dimensions, and little-endian float bytes so that tensors of
/// different shapes but equal flat data hash differently.
pub(crate) fn update_tensor(hasher: &mut Sha256, tensor: &Tensor) {
    hasher.update((tensor.rank() as u64).to_le_bytes());
    for &dim in tensor.shape() {
        hasher.update((dim as u64).to_le_bytes());
    }
    for &value in tensor.data() {
        hasher.update(value.to_le_bytes());
    }
}
