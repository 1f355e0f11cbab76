//! Per-sample graph construction. Tokens are rows: every tensor here is
//! `[tokens, width]`.

use super::{Dims, FusionKind, FusionVariant};
use crate::error::{Error, Result};
use crate::tensor::ops::ADAIN_EPS;
use crate::tensor::{Binder, Tape, Var};

/// One sample's inputs, already on the tape.
#[derive(Debug, Clone, Copy)]
pub struct SampleVars {
    /// vision tokens `[T_v, D]`
    pub f_i: Var,
    /// intermediate features `[1, d_R]`
    pub r: Var,
    /// pooled masks `[n_cls, g*g]`
    pub seg: Option<Var>,
}

fn lin(tape: &mut Tape, b: &mut Binder, x: Var, prefix: &str) -> Result<Var> {
    let w = b.var(tape, &format!("{prefix}.w"))?;
    let bias = b.var(tape, &format!("{prefix}.b"))?;
    tape.linear(x, w, bias)
}

/// `R_stack`: the embedded feature vector repeated over the class tokens.
pub fn stack_features(tape: &mut Tape, b: &mut Binder, dims: &Dims, r: Var) -> Result<Var> {
    let row = lin(tape, b, r, "feat")?;
    tape.repeat_rows(row, dims.t_c)
}

/// `R_I = Lin1(C ++ R_stack)` with the concatenation along the embedding axis.
pub fn mix_base(tape: &mut Tape, b: &mut Binder, c: Var, r_stack: Var) -> Result<Var> {
    let cat = tape.concat(c, r_stack, 1)?;
    lin(tape, b, cat, "mix1")
}

/// Learned map along the token axis, `[T_c, D] -> [T_v, D]`.
pub fn token_adapt(tape: &mut Tape, b: &mut Binder, x: Var) -> Result<Var> {
    let xt = tape.transpose(x)?;
    let y = lin(tape, b, xt, "adapter")?;
    tape.transpose(y)
}

/// Conv over `adain(C, R_stack)` lifting `d` channels to `D`, then the token adapter.
pub fn replace(tape: &mut Tape, b: &mut Binder, c: Var, r_stack: Var) -> Result<Var> {
    let normed = tape.adain(c, r_stack, ADAIN_EPS)?;
    let channels_first = tape.transpose(normed)?;
    let k = b.var(tape, "replace.conv.k")?;
    let bias = b.var(tape, "replace.conv.b")?;
    let conv = tape.conv1d(channels_first, k, bias, 1, 1)?;
    let tokens = tape.transpose(conv)?;
    token_adapt(tape, b, tokens)
}

pub fn learned_mixing(tape: &mut Tape, b: &mut Binder, f_i: Var, r_i: Var) -> Result<Var> {
    let cat = tape.concat(f_i, r_i, 0)?;
    lin(tape, b, cat, "mix2")
}

pub fn weighted_addition(tape: &mut Tape, b: &mut Binder, f_i: Var, r_i: Var) -> Result<Var> {
    let adapted = token_adapt(tape, b, r_i)?;
    let alpha = b.var(tape, "alpha")?;
    tape.scaled_add(f_i, adapted, alpha)
}

pub fn concat(tape: &mut Tape, f_i: Var, r_i: Var) -> Result<Var> {
    tape.concat(f_i, r_i, 0)
}

/// `S_loc` from pooled masks: kernel-1 conv across classes, then a spatial linear.
pub fn segmap_tokens(tape: &mut Tape, b: &mut Binder, dims: &Dims, pooled: Var) -> Result<Var> {
    let shape = tape.value(pooled).shape();
    if shape != [dims.n_cls, dims.g * dims.g] {
        return Err(Error::Config(format!(
            "pooled segmentation maps have shape {shape:?}, expected [{}, {}]",
            dims.n_cls,
            dims.g * dims.g
        )));
    }
    let k = b.var(tape, "seg.conv.k")?;
    let bias = b.var(tape, "seg.conv.b")?;
    let mixed = tape.conv1d(pooled, k, bias, 1, 0)?;
    lin(tape, b, mixed, "seg.spatial")
}

/// `S_I = Lin(R_I ++ S_loc)` along the embedding axis.
pub fn fuse_segmap_tokens(tape: &mut Tape, b: &mut Binder, r_i: Var, s_loc: Var) -> Result<Var> {
    let (a, c) = (tape.value(r_i).dim(0), tape.value(s_loc).dim(0));
    if a != c {
        return Err(Error::dim("fuse_segmap_tokens", tape.value(r_i).shape(), tape.value(s_loc).shape()));
    }
    let cat = tape.concat(r_i, s_loc, 1)?;
    lin(tape, b, cat, "seg.fuse")
}

/// The fusion function applied before the perceptron.
pub fn fusion(tape: &mut Tape, b: &mut Binder, dims: &Dims, variant: &FusionVariant, x: SampleVars) -> Result<Var> {
    variant.validate()?;
    if variant.use_segmaps != x.seg.is_some() {
        return Err(Error::Config(if variant.use_segmaps {
            "segmentation maps required by this variant are missing".into()
        } else {
            "segmentation maps given to a variant that does not use them".into()
        }));
    }
    if variant.kind == FusionKind::Baseline {
        return Ok(x.f_i);
    }
    let r_stack = stack_features(tape, b, dims, x.r)?;
    let c = b.var(tape, "class_embed")?;
    match variant.kind {
        FusionKind::Baseline => unreachable!(),
        FusionKind::Replace => replace(tape, b, c, r_stack),
        FusionKind::LearnedMixing => {
            let r_i = mix_base(tape, b, c, r_stack)?;
            learned_mixing(tape, b, x.f_i, r_i)
        }
        FusionKind::WeightedAddition { .. } => {
            let r_i = mix_base(tape, b, c, r_stack)?;
            weighted_addition(tape, b, x.f_i, r_i)
        }
        FusionKind::Concatenation => {
            let r_i = mix_base(tape, b, c, r_stack)?;
            let out = concat(tape, x.f_i, r_i)?;
            match x.seg {
                Some(pooled) => {
                    let s_loc = segmap_tokens(tape, b, dims, pooled)?;
                    let s_i = fuse_segmap_tokens(tape, b, r_i, s_loc)?;
                    tape.concat(out, s_i, 0)
                }
                None => Ok(out),
            }
        }
    }
}

/// The original two-layer perceptron with GELU, applied per token.
pub fn perceptron(tape: &mut Tape, b: &mut Binder, x: Var) -> Result<Var> {
    let h = lin(tape, b, x, "proj.fc1")?;
    let h = tape.gelu(h);
    lin(tape, b, h, "proj.fc2")
}

pub fn projector(tape: &mut Tape, b: &mut Binder, dims: &Dims, variant: &FusionVariant, x: SampleVars) -> Result<Var> {
    let fused = fusion(tape, b, dims, variant, x)?;
    perceptron(tape, b, fused)
}
