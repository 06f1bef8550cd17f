//! Valid 2-D cross-correlation (no kernel flip, stride 1, no padding, full
//! connectivity across input channels) and its exact adjoint.
//!
//! Two forward paths share one contract: [`conv2d_valid_naive`] is the
//! reference quadruple loop, [`conv2d_valid_fast`] gathers input patches
//! first and then reduces each output as a contiguous dot product. Both
//! accumulate in the same (channel, row, col) order, so their outputs are
//! bit-identical.

use alloc::vec;

use super::{shape_string, Tensor};
use crate::error::{Error, Result};

struct ConvGeometry {
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    out_h: usize,
    out_w: usize,
}

fn conv_geometry(input: &Tensor, kernels: &Tensor, bias: Option<&Tensor>) -> Result<ConvGeometry> {
    if input.rank() != 3 {
        return Err(Error::ShapeMismatch {
            context: "conv input (want channels x height x width)",
            expected: alloc::string::String::from("rank 3"),
            actual: shape_string(input.shape()),
        });
    }
    if kernels.rank() != 4 {
        return Err(Error::ShapeMismatch {
            context: "conv kernels (want out x in x kh x kw)",
            expected: alloc::string::String::from("rank 4"),
            actual: shape_string(kernels.shape()),
        });
    }
    let (cin, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (cout, kcin, kh, kw) = (
        kernels.shape()[0],
        kernels.shape()[1],
        kernels.shape()[2],
        kernels.shape()[3],
    );
    if kcin != cin {
        return Err(Error::ShapeMismatch {
            context: "conv kernel channel axis",
            expected: shape_string(&[cin]),
            actual: shape_string(&[kcin]),
        });
    }
    if kh > h {
        return Err(Error::WindowTooLarge {
            what: "conv kernel height",
            axis: "height",
            window: kh,
            input: h,
        });
    }
    if kw > w {
        return Err(Error::WindowTooLarge {
            what: "conv kernel width",
            axis: "width",
            window: kw,
            input: w,
        });
    }
    if let Some(bias) = bias {
        if bias.shape() != [cout] {
            return Err(Error::ShapeMismatch {
                context: "conv bias",
                expected: shape_string(&[cout]),
                actual: shape_string(bias.shape()),
            });
        }
    }
    Ok(ConvGeometry {
        cin,
        h,
        w,
        cout,
        kh,
        kw,
        out_h: h - kh + 1,
        out_w: w - kw + 1,
    })
}

/// Reference implementation:
/// `out[o,y,x] = bias[o] + sum over (c,i,j) of input[c,y+i,x+j] * kernels[o,c,i,j]`.
pub fn conv2d_valid_naive(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let g = conv_geometry(input, kernels, Some(bias))?;
    let inp = input.data();
    let ker = kernels.data();
    let b = bias.data();
    let mut out = vec![0.0; g.cout * g.out_h * g.out_w];

    for o in 0..g.cout {
        for y in 0..g.out_h {
            for x in 0..g.out_w {
                let mut acc = b[o];
                for c in 0..g.cin {
                    for i in 0..g.kh {
                        for j in 0..g.kw {
                            let iv = inp[(c * g.h + y + i) * g.w + x + j];
                            let kv = ker[((o * g.cin + c) * g.kh + i) * g.kw + j];
                            acc += iv * kv;
                        }
                    }
                }
                out[(o * g.out_h + y) * g.out_w + x] = acc;
            }
        }
    }
    Tensor::from_vec(&[g.cout, g.out_h, g.out_w], out)
}

/// Patch-gathering implementation of the same contract.
///
/// For every output position the receptive field is copied once into a
/// contiguous row (in channel-major, then row, then column order), and each
/// output map reduces that row against its flattened kernel. The reduction
/// visits terms in the same order as the naive loop.
pub fn conv2d_valid_fast(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let g = conv_geometry(input, kernels, Some(bias))?;
    let inp = input.data();
    let ker = kernels.data();
    let b = bias.data();

    let patch_len = g.cin * g.kh * g.kw;
    let positions = g.out_h * g.out_w;
    let mut patches = vec![0.0; positions * patch_len];

    // Gather: patches[p] holds the receptive field of output position p.
    let mut at = 0;
    for y in 0..g.out_h {
        for x in 0..g.out_w {
            for c in 0..g.cin {
                for i in 0..g.kh {
                    let src = (c * g.h + y + i) * g.w + x;
                    patches[at..at + g.kw].copy_from_slice(&inp[src..src + g.kw]);
                    at += g.kw;
                }
            }
        }
    }

    let mut out = vec![0.0; g.cout * positions];
    for o in 0..g.cout {
        let krow = &ker[o * patch_len..(o + 1) * patch_len];
        let bias_o = b[o];
        let dst = &mut out[o * positions..(o + 1) * positions];
        for (p, slot) in dst.iter_mut().enumerate() {
            let patch = &patches[p * patch_len..(p + 1) * patch_len];
            let mut acc = bias_o;
            for (kv, iv) in krow.iter().zip(patch) {
                acc += kv * iv;
            }
            *slot = acc;
        }
    }
    Tensor::from_vec(&[g.cout, g.out_h, g.out_w], out)
}

/// Exact gradients of the valid correlation.
///
/// Returns `(grad_input, grad_kernels, grad_bias)` where
/// `grad_bias[o] = sum over (y,x) of grad_out[o,y,x]`,
/// `grad_kernels[o,c,i,j] = sum over (y,x) of grad_out[o,y,x] * input[c,y+i,x+j]`,
/// and `grad_input` is the adjoint (full correlation with flipped kernels).
pub fn conv2d_backward(
    input: &Tensor,
    kernels: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let g = conv_geometry(input, kernels, None)?;
    if grad_out.shape() != [g.cout, g.out_h, g.out_w] {
        return Err(Error::ShapeMismatch {
            context: "conv grad_out",
            expected: shape_string(&[g.cout, g.out_h, g.out_w]),
            actual: shape_string(grad_out.shape()),
        });
    }

    let inp = input.data();
    let ker = kernels.data();
    let go = grad_out.data();

    let mut grad_input = vec![0.0; g.cin * g.h * g.w];
    let mut grad_kernels = vec![0.0; g.cout * g.cin * g.kh * g.kw];
    let mut grad_bias = vec![0.0; g.cout];

    for o in 0..g.cout {
        for y in 0..g.out_h {
            let row = (o * g.out_h + y) * g.out_w;
            for x in 0..g.out_w {
                let gval = go[row + x];
                grad_bias[o] += gval;
                for c in 0..g.cin {
                    for i in 0..g.kh {
                        let in_base = (c * g.h + y + i) * g.w + x;
                        let k_base = ((o * g.cin + c) * g.kh + i) * g.kw;
                        let gi = &mut grad_input[in_base..in_base + g.kw];
                        let gk = &mut grad_kernels[k_base..k_base + g.kw];
                        let iv = &inp[in_base..in_base + g.kw];
                        let kv = &ker[k_base..k_base + g.kw];
                        for j in 0..g.kw {
                            gi[j] += gval * kv[j];
                            gk[j] += gval * iv[j];
                        }
                    }
                }
            }
        }
    }

    Ok((
        Tensor::from_vec(&[g.cin, g.h, g.w], grad_input)?,
        Tensor::from_vec(&[g.cout, g.cin, g.kh, g.kw], grad_kernels)?,
        Tensor::from_vec(&[g.cout], grad_bias)?,
    ))
}
