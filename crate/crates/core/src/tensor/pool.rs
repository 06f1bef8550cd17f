//! Non-overlapping average pooling with floor semantics.
//!
//! Windows stride by their own size; trailing rows/columns that do not fill
//! a whole window are discarded, and receive zero gradient on the way back.

use alloc::vec;

use super::{shape_string, Tensor};
use crate::error::{Error, Result};

fn pool_geometry(shape: &[usize], ph: usize, pw: usize) -> Result<(usize, usize, usize, usize, usize)> {
    if shape.len() != 3 {
        return Err(Error::ShapeMismatch {
            context: "avg_pool input (want channels x height x width)",
            expected: alloc::string::String::from("rank 3"),
            actual: shape_string(shape),
        });
    }
    if ph == 0 || pw == 0 {
        return Err(Error::InvalidDimension("pool window must be >= 1"));
    }
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    if ph > h {
        return Err(Error::WindowTooLarge {
            what: "pool window height",
            axis: "height",
            window: ph,
            input: h,
        });
    }
    if pw > w {
        return Err(Error::WindowTooLarge {
            what: "pool window width",
            axis: "width",
            window: pw,
            input: w,
        });
    }
    Ok((c, h, w, h / ph, w / pw))
}

/// Mean over each non-overlapping `ph`x`pw` window, per channel.
pub fn avg_pool(input: &Tensor, ph: usize, pw: usize) -> Result<Tensor> {
    let (c, h, w, out_h, out_w) = pool_geometry(input.shape(), ph, pw)?;
    let inp = input.data();
    let inv_area = 1.0 / (ph * pw) as f64;
    let mut out = vec![0.0; c * out_h * out_w];

    for ch in 0..c {
        for oy in 0..out_h {
            for ox in 0..out_w {
                let mut acc = 0.0;
                for i in 0..ph {
                    let base = (ch * h + oy * ph + i) * w + ox * pw;
                    for v in &inp[base..base + pw] {
                        acc += v;
                    }
                }
                out[(ch * out_h + oy) * out_w + ox] = acc * inv_area;
            }
        }
    }
    Tensor::from_vec(&[c, out_h, out_w], out)
}

/// Adjoint of [`avg_pool`]: spreads `grad_out[c,y,x] / (ph*pw)` uniformly
/// over the source window; discarded border rows/columns get zero.
pub fn avg_pool_backward(
    grad_out: &Tensor,
    input_shape: &[usize],
    ph: usize,
    pw: usize,
) -> Result<Tensor> {
    let (c, h, w, out_h, out_w) = pool_geometry(input_shape, ph, pw)?;
    if grad_out.shape() != [c, out_h, out_w] {
        return Err(Error::ShapeMismatch {
            context: "avg_pool grad_out",
            expected: shape_string(&[c, out_h, out_w]),
            actual: shape_string(grad_out.shape()),
        });
    }
    let go = grad_out.data();
    let inv_area = 1.0 / (ph * pw) as f64;
    let mut grad_in = vec![0.0; c * h * w];

    for ch in 0..c {
        for oy in 0..out_h {
            for ox in 0..out_w {
                let share = go[(ch * out_h + oy) * out_w + ox] * inv_area;
                for i in 0..ph {
                    let base = (ch * h + oy * ph + i) * w + ox * pw;
                    for slot in &mut grad_in[base..base + pw] {
                        *slot += share;
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[c, h, w], grad_in)
}
