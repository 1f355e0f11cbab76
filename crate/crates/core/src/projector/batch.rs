//! Batch-level forward passes. Each sample is evaluated on its own tape, so
//! outputs are covariant under any permutation of the batch axis.

use super::graph::{self, SampleVars};
use super::ProjectorParams;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::tensor::ops::adaptive_avg_pool2d_flat;
use crate::tensor::{Binder, Tape, TensorF, Var};

fn batch_len(op: &'static str, tensors: &[&TensorF], rank: usize) -> Result<usize> {
    let first = tensors[0];
    for t in tensors {
        if t.rank() != rank {
            return Err(Error::Contract(format!("{op} expects rank-{rank} batches, got {:?}", t.shape())));
        }
        if t.dim(0) != first.dim(0) {
            return Err(Error::dim(op, first.shape(), t.shape()));
        }
    }
    Ok(first.dim(0))
}

/// Run `build` once per sample with forward-only parameter bindings and
/// stack the results.
fn per_sample<F>(exec: Exec, params: &ProjectorParams, n: usize, build: F) -> Result<TensorF>
where
    F: Fn(&mut Tape, &mut Binder, usize) -> Result<Var> + Sync + Send,
{
    let outs = exec.map_range(n, |i| -> Result<TensorF> {
        let mut tape = Tape::new();
        let mut binder = Binder::frozen(&params.store);
        let v = build(&mut tape, &mut binder, i)?;
        Ok(tape.value(v).clone())
    });
    TensorF::stack(&outs.into_iter().collect::<Result<Vec<_>>>()?)
}

fn row(r: &TensorF, i: usize) -> Result<TensorF> {
    let v = r.index_outer(i)?;
    let n = v.numel();
    v.reshape(&[1, n])
}

/// `[b, d_R] -> [b, T_c, d]`
pub fn stack_features(r: &TensorF, params: &ProjectorParams) -> Result<TensorF> {
    let n = batch_len("stack_features", &[r], 2)?;
    per_sample(Exec::Sequential, params, n, |tape, b, i| {
        let x = tape.constant(row(r, i)?);
        graph::stack_features(tape, b, &params.dims, x)
    })
}

/// `[b, T_c, d] -> [b, T_c, D]`, mixing with the class embedding.
pub fn mix_base(r_stack: &TensorF, params: &ProjectorParams) -> Result<TensorF> {
    let n = batch_len("mix_base", &[r_stack], 3)?;
    per_sample(Exec::Sequential, params, n, |tape, b, i| {
        let x = tape.constant(r_stack.index_outer(i)?);
        let c = b.var(tape, "class_embed")?;
        graph::mix_base(tape, b, c, x)
    })
}

/// `[b, T_c, d] -> [b, T_v, D]`; the output stands in for the vision tokens.
pub fn fuse_replace(r_stack: &TensorF, params: &ProjectorParams) -> Result<TensorF> {
    let n = batch_len("fuse_replace", &[r_stack], 3)?;
    per_sample(Exec::Sequential, params, n, |tape, b, i| {
        let x = tape.constant(r_stack.index_outer(i)?);
        let c = b.var(tape, "class_embed")?;
        graph::replace(tape, b, c, x)
    })
}

pub fn fuse_learned_mixing(f_i: &TensorF, r_i: &TensorF, params: &ProjectorParams) -> Result<TensorF> {
    let n = batch_len("fuse_learned_mixing", &[f_i, r_i], 3)?;
    per_sample(Exec::Sequential, params, n, |tape, b, i| {
        let f = tape.constant(f_i.index_outer(i)?);
        let r = tape.constant(r_i.index_outer(i)?);
        graph::learned_mixing(tape, b, f, r)
    })
}

pub fn fuse_weighted_addition(f_i: &TensorF, r_i: &TensorF, params: &ProjectorParams) -> Result<TensorF> {
    let n = batch_len("fuse_weighted_addition", &[f_i, r_i], 3)?;
    per_sample(Exec::Sequential, params, n, |tape, b, i| {
        let f = tape.constant(f_i.index_outer(i)?);
        let r = tape.constant(r_i.index_outer(i)?);
        graph::weighted_addition(tape, b, f, r)
    })
}

/// Token-axis concatenation; both halves are copied bit-exactly.
pub fn fuse_concat(f_i: &TensorF, r_i: &TensorF) -> Result<TensorF> {
    let n = batch_len("fuse_concat", &[f_i, r_i], 3)?;
    let outs = (0..n)
        .map(|i| crate::tensor::ops::concat2(&f_i.index_outer(i)?, &r_i.index_outer(i)?, 0))
        .collect::<Result<Vec<_>>>()?;
    TensorF::stack(&outs)
}

/// Adaptive average pooling of one sample's masks `[n_cls, H, W]` to `[n_cls, g*g]`.
pub fn pool_segmaps_raw(masks: &TensorF, g: usize) -> Result<TensorF> {
    adaptive_avg_pool2d_flat(masks, g, g)
}

/// `[b, n_cls, H, W] -> [b, T_c, d_s]`
pub fn pool_segmaps(s: &TensorF, params: &ProjectorParams) -> Result<TensorF> {
    let n = batch_len("pool_segmaps", &[s], 4)?;
    if s.dim(1) != params.dims.n_cls {
        return Err(Error::Config(format!(
            "segmentation stack has {} classes, projector expects {}",
            s.dim(1),
            params.dims.n_cls
        )));
    }
    per_sample(Exec::Sequential, params, n, |tape, b, i| {
        let pooled = tape.constant(pool_segmaps_raw(&s.index_outer(i)?, params.dims.g)?);
        graph::segmap_tokens(tape, b, &params.dims, pooled)
    })
}

/// `S_I` from `R_I: [b, T_c, D]` and `S_loc: [b, T_c, d_s]`.
pub fn fuse_segmap_tokens(r_i: &TensorF, s_loc: &TensorF, params: &ProjectorParams) -> Result<TensorF> {
    let n = batch_len("fuse_segmap_tokens", &[r_i, s_loc], 3)?;
    per_sample(Exec::Sequential, params, n, |tape, b, i| {
        let r = tape.constant(r_i.index_outer(i)?);
        let s = tape.constant(s_loc.index_outer(i)?);
        graph::fuse_segmap_tokens(tape, b, r, s)
    })
}

/// Full modified projector: fusion then the perceptron, `[b, T_out, D_llm]`.
/// `s` holds raw masks `[b, n_cls, H, W]` and is required iff the variant
/// uses segmentation maps.
pub fn projector_forward(
    params: &ProjectorParams,
    f_i: &TensorF,
    r: &TensorF,
    s: Option<&TensorF>,
    exec: Exec,
) -> Result<TensorF> {
    params.variant.validate()?;
    let n = batch_len("projector_forward", &[f_i], 3)?;
    if r.rank() != 2 || r.dim(0) != n {
        return Err(Error::dim("projector_forward", f_i.shape(), r.shape()));
    }
    if let Some(s) = s {
        if s.rank() != 4 || s.dim(0) != n {
            return Err(Error::dim("projector_forward", f_i.shape(), s.shape()));
        }
        if s.dim(1) != params.dims.n_cls {
            return Err(Error::Config(format!(
                "segmentation stack has {} classes, projector expects {}",
                s.dim(1),
                params.dims.n_cls
            )));
        }
    }
    per_sample(exec, params, n, |tape, b, i| {
        let f = tape.constant(f_i.index_outer(i)?);
        let x = tape.constant(row(r, i)?);
        let seg = match s {
            Some(s) => Some(tape.constant(pool_segmaps_raw(&s.index_outer(i)?, params.dims.g)?)),
            None => None,
        };
        graph::projector(tape, b, &params.dims, &params.variant, SampleVars { f_i: f, r: x, seg })
    })
}
