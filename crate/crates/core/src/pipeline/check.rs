use super::lm::{add_toylm_params, pooled_masks, prefix_tokens, sample_vars, sequence_loss};
use super::{gen_synthetic_dataset, TaskSpec};
use crate::error::Result;
use crate::exec::Exec;
use crate::projector::{Dims, FusionVariant, ProjectorParams};
use crate::tensor::gradcheck::{grad_check_sampled, grad_check_with, CheckReport};
use crate::tensor::{Binder, Tape, TensorF, Var};

/// Finite-difference check of every projector and decoder parameter of
/// `variant`, through the teacher-forced loss of one synthetic sample.
/// `per_param` limits the entries compared in each tensor.
pub fn end_to_end_grad_check(
    dims: Dims,
    variant: FusionVariant,
    per_param: Option<usize>,
    eps: f64,
    tol: f64,
    seed: u64,
    exec: Exec,
) -> Result<CheckReport> {
    let task = TaskSpec::default_task();
    let sample = gen_synthetic_dataset(&task, 1, &dims, seed, Exec::Sequential)?.remove(0);
    let mut params = ProjectorParams::init(dims, variant, seed)?;
    add_toylm_params(&mut params, task.vocab.len(), seed)?;
    let pooled = if variant.use_segmaps { Some(pooled_masks(&params, &sample)?) } else { None };

    let named: Vec<(String, TensorF)> = params.store.iter().map(|(n, p)| (n.to_string(), p.value.clone())).collect();
    let names: Vec<String> = named.iter().map(|(n, _)| n.clone()).collect();
    let build = |tape: &mut Tape, vars: &[Var]| {
        let mut b = Binder::from_vars(&names, vars);
        let x = sample_vars(tape, &params, &sample, pooled.as_ref())?;
        let prefix = prefix_tokens(tape, &mut b, &params, x)?;
        sequence_loss(tape, &mut b, prefix, &sample.prompt, &sample.report)
    };
    match per_param {
        Some(k) => grad_check_sampled(&named, build, eps, tol, k, seed, exec),
        None => grad_check_with(&named, build, eps, tol, exec),
    }
}
