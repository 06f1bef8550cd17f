//! Dense n-dimensional `f64` arrays and the raw numeric kernels every
//! layer is built on.
//!
//! A [`Tensor`] is a shape vector plus a flat row-major buffer (last axis
//! contiguous). Tensors are immutable by convention: no operation mutates
//! its inputs, so values are safe to share across threads. All reductions
//! run in a fixed order, keeping results bit-reproducible.

mod conv;
mod pool;

pub use conv::{conv2d_backward, conv2d_valid_fast, conv2d_valid_naive};
pub use pool::{avg_pool, avg_pool_backward};

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Dense n-dimensional array of 64-bit floats.
///
/// Invariants: the shape is non-empty, every dimension is at least 1, and
/// `data.len() == shape.iter().product()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::InvalidDimension("tensor shape must be non-empty"));
    }
    if shape.iter().any(|&d| d == 0) {
        return Err(Error::InvalidDimension("tensor dimensions must be >= 1"));
    }
    Ok(shape.iter().product())
}

pub(crate) fn shape_string(shape: &[usize]) -> String {
    let mut s = String::new();
    for (i, d) in shape.iter().enumerate() {
        if i > 0 {
            s.push('x');
        }
        s.push_str(&format!("{d}"));
    }
    s
}

impl Tensor {
    /// All-zero tensor of the given shape.
    ///
    /// Panics on an empty shape or zero dimension: constructor shapes come
    /// from code, not from input data.
    pub fn zeros(shape: &[usize]) -> Tensor {
        let volume = check_shape(shape).expect("invalid tensor shape");
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; volume],
        }
    }

    /// Tensor filled with a constant. Panics like [`Tensor::zeros`].
    pub fn filled(shape: &[usize], value: f64) -> Tensor {
        let volume = check_shape(shape).expect("invalid tensor shape");
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; volume],
        }
    }

    /// Wraps a flat row-major buffer.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        let volume = check_shape(shape)?;
        if data.len() != volume {
            return Err(Error::DataLength {
                expected: volume,
                actual: data.len(),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        false // every dimension is >= 1
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Row-major element read; for tests and cold paths.
    pub fn get(&self, index: &[usize]) -> f64 {
        assert_eq!(index.len(), self.shape.len(), "index rank mismatch");
        let mut offset = 0;
        for (i, (&ix, &dim)) in index.iter().zip(&self.shape).enumerate() {
            assert!(ix < dim, "index {ix} out of bounds for axis {i} (size {dim})");
            offset = offset * dim + ix;
        }
        self.data[offset]
    }

    /// Reinterprets the buffer under a new shape of equal volume. Zero-copy:
    /// the element sequence is preserved exactly.
    pub fn reshape(self, new_shape: &[usize]) -> Result<Tensor> {
        let volume = check_shape(new_shape)?;
        if volume != self.data.len() {
            return Err(Error::DataLength {
                expected: volume,
                actual: self.data.len(),
            });
        }
        Ok(Tensor {
            shape: new_shape.to_vec(),
            data: self.data,
        })
    }

    /// Collapses to a rank-1 tensor.
    pub fn flatten(self) -> Tensor {
        let n = self.data.len();
        Tensor {
            shape: vec![n],
            data: self.data,
        }
    }

    /// Elementwise sum. Shapes must match exactly.
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other, "elementwise add")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    /// Elementwise scaling by a scalar.
    pub fn scale(&self, factor: f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|a| a * factor).collect(),
        }
    }

    /// Elementwise product. Shapes must match exactly.
    pub fn hadamard(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other, "hadamard product")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    /// Index of the largest element; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        let mut best_val = self.data[0];
        for (i, &v) in self.data.iter().enumerate().skip(1) {
            if v > best_val {
                best = i;
                best_val = v;
            }
        }
        best
    }

    /// True when every element is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn check_same_shape(&self, other: &Tensor, context: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                context,
                expected: shape_string(&self.shape),
                actual: shape_string(&other.shape),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_wrong_length() {
        let err = Tensor::from_vec(&[2, 3], vec![1.0; 5]).unwrap_err();
        assert_eq!(
            err,
            Error::DataLength {
                expected: 6,
                actual: 5
            }
        );
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(Tensor::from_vec(&[3, 0], vec![]).is_err());
        assert!(Tensor::from_vec(&[], vec![]).is_err());
    }

    #[test]
    #[should_panic(expected = "invalid tensor shape")]
    fn zeros_panics_on_zero_dimension() {
        let _ = Tensor::zeros(&[3, 0]);
    }

    #[test]
    fn reshape_preserves_element_sequence_bit_exactly() {
        let data: Vec<f64> = (0..24).map(|i| (i as f64) * 0.1 - 1.0).collect();
        let t = Tensor::from_vec(&[2, 3, 4], data.clone()).unwrap();
        let r = t.reshape(&[4, 6]).unwrap();
        assert_eq!(r.shape(), &[4, 6]);
        let back = r.reshape(&[2, 3, 4]).unwrap();
        assert_eq!(back.data(), data.as_slice());
        let bits_equal = back
            .data()
            .iter()
            .zip(&data)
            .all(|(a, b)| a.to_bits() == b.to_bits());
        assert!(bits_equal);
    }

    #[test]
    fn reshape_rejects_volume_change() {
        let t = Tensor::zeros(&[2, 3]);
        assert!(t.reshape(&[7]).is_err());
    }

    #[test]
    fn add_and_hadamard_require_equal_shapes() {
        let a = Tensor::zeros(&[2, 2]);
        let b = Tensor::zeros(&[4]);
        assert!(a.add(&b).is_err());
        assert!(a.hadamard(&b).is_err());
    }

    #[test]
    fn elementwise_ops() {
        let a = Tensor::from_vec(&[3], vec![1.0, -2.0, 3.0]).unwrap();
        let b = Tensor::from_vec(&[3], vec![0.5, 4.0, -1.0]).unwrap();
        assert_eq!(a.add(&b).unwrap().data(), &[1.5, 2.0, 2.0]);
        assert_eq!(a.scale(2.0).data(), &[2.0, -4.0, 6.0]);
        assert_eq!(a.hadamard(&b).unwrap().data(), &[0.5, -8.0, -3.0]);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        let t = Tensor::from_vec(&[4], vec![1.0, 3.0, 3.0, 0.0]).unwrap();
        assert_eq!(t.argmax(), 1);
        let flat = Tensor::filled(&[10], 0.25);
        assert_eq!(flat.argmax(), 0);
    }

    #[test]
    fn argmax_invariant_under_constant_shift() {
        let t = Tensor::from_vec(&[5], vec![0.1, 0.9, -0.3, 0.4, 0.7]).unwrap();
        let shifted = Tensor::from_vec(&[5], t.data().iter().map(|v| v + 123.5).collect()).unwrap();
        assert_eq!(t.argmax(), shifted.argmax());
    }

    #[test]
    fn get_indexes_row_major() {
        let t = Tensor::from_vec(&[2, 2, 2], (0..8).map(|i| i as f64).collect()).unwrap();
        assert_eq!(t.get(&[0, 0, 0]), 0.0);
        assert_eq!(t.get(&[0, 1, 0]), 2.0);
        assert_eq!(t.get(&[1, 0, 1]), 5.0);
        assert_eq!(t.get(&[1, 1, 1]), 7.0);
    }
}
