//! Central finite-difference verification of tape gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Tape, TensorF, Var};
use crate::error::{Error, Result};
use crate::exec::Exec;

pub const DEFAULT_FD_EPS: f64 = 1e-6;
pub const DEFAULT_REL_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub max_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub params: Vec<ParamCheck>,
    pub tol: f64,
    /// Largest `|analytic - numeric| / max(1, |numeric|)` over all entries.
    pub max_error: f64,
    pub checked_entries: usize,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.max_error <= self.tol
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_error.total_cmp(&b.max_error))
    }
}

impl std::fmt::Display for CheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        write!(
            f,
            "{verdict}: max rel err {:.3e} over {} entries (tol {:.0e})",
            self.max_error, self.checked_entries, self.tol
        )?;
        if let Some(w) = self.worst() {
            write!(
                f,
                "; worst {}[{}] analytic {:.6e} numeric {:.6e}",
                w.name, w.worst_index, w.analytic, w.numeric
            )?;
        }
        Ok(())
    }
}

fn eval_loss<F>(params: &[(String, TensorF)], build: &F, as_params: bool) -> Result<(Tape, Vec<Var>, Var)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params
        .iter()
        .map(|(_, t)| tape.leaf(t.clone(), as_params))
        .collect();
    let loss = build(&mut tape, &vars)?;
    if tape.value(loss).numel() != 1 {
        return Err(Error::Contract(format!(
            "gradient check needs a scalar loss, got shape {:?}",
            tape.value(loss).shape()
        )));
    }
    Ok((tape, vars, loss))
}

pub fn analytic_gradients<F>(params: &[(String, TensorF)], build: &F) -> Result<Vec<TensorF>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let (tape, vars, loss) = eval_loss(params, build, true)?;
    let mut grads = tape.backward(loss)?;
    Ok(vars
        .iter()
        .zip(params)
        .map(|(v, (_, t))| grads.take(*v).unwrap_or_else(|| TensorF::zeros(t.shape())))
        .collect())
}

pub fn numeric_gradients<F>(params: &[(String, TensorF)], build: &F, eps: f64, exec: Exec) -> Result<Vec<TensorF>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var> + Sync,
{
    let coords = all_coords(params);
    let values = numeric_at(params, build, eps, exec, &coords)?;
    let mut out: Vec<TensorF> = params.iter().map(|(_, t)| TensorF::zeros(t.shape())).collect();
    for (&(p, i), v) in coords.iter().zip(values) {
        out[p].data_mut()[i] = v;
    }
    Ok(out)
}

fn all_coords(params: &[(String, TensorF)]) -> Vec<(usize, usize)> {
    params
        .iter()
        .enumerate()
        .flat_map(|(p, (_, t))| (0..t.numel()).map(move |i| (p, i)))
        .collect()
}

/// Up to `per_param` distinct entries of each tensor, chosen by `seed`.
fn sampled_coords(params: &[(String, TensorF)], per_param: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Vec::new();
    for (p, (_, t)) in params.iter().enumerate() {
        let n = t.numel();
        if n <= per_param {
            coords.extend((0..n).map(|i| (p, i)));
        } else {
            let mut picked = rand::seq::index::sample(&mut rng, n, per_param).into_vec();
            picked.sort_unstable();
            coords.extend(picked.into_iter().map(|i| (p, i)));
        }
    }
    coords
}

/// Central differences of the loss at the given `(param, entry)` coordinates.
fn numeric_at<F>(params: &[(String, TensorF)], build: &F, eps: f64, exec: Exec, coords: &[(usize, usize)]) -> Result<Vec<f64>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var> + Sync,
{
    let loss_at = |p: usize, i: usize, delta: f64| -> Result<f64> {
        let mut perturbed = params.to_vec();
        perturbed[p].1.data_mut()[i] += delta;
        let (tape, _, loss) = eval_loss(&perturbed, build, false)?;
        Ok(tape.value(loss).data()[0])
    };
    exec.map(coords, |&(p, i)| -> Result<f64> {
        let plus = loss_at(p, i, eps)?;
        let minus = loss_at(p, i, -eps)?;
        Ok((plus - minus) / (2.0 * eps))
    })
    .into_iter()
    .collect()
}

/// Compare two gradient sets entry by entry.
pub fn compare(names: &[String], analytic: &[TensorF], numeric: &[TensorF], tol: f64) -> CheckReport {
    let coords: Vec<(usize, usize)> = numeric
        .iter()
        .enumerate()
        .flat_map(|(p, t)| (0..t.numel()).map(move |i| (p, i)))
        .collect();
    let values: Vec<f64> = numeric.iter().flat_map(|t| t.data().iter().copied()).collect();
    compare_at(names, analytic, &coords, &values, tol)
}

fn compare_at(names: &[String], analytic: &[TensorF], coords: &[(usize, usize)], numeric: &[f64], tol: f64) -> CheckReport {
    let mut worst: Vec<Option<ParamCheck>> = vec![None; names.len()];
    let mut max_error = 0.0f64;
    for (&(p, i), &nv) in coords.iter().zip(numeric) {
        let av = analytic[p].data()[i];
        let err = (av - nv).abs() / nv.abs().max(1.0);
        max_error = max_error.max(err);
        if worst[p].as_ref().is_none_or(|w| err > w.max_error) {
            worst[p] = Some(ParamCheck {
                name: names[p].clone(),
                max_error: err,
                worst_index: i,
                analytic: av,
                numeric: nv,
            });
        }
    }
    CheckReport {
        params: worst.into_iter().flatten().collect(),
        tol,
        max_error,
        checked_entries: coords.len(),
    }
}

/// Check the tape gradient of the scalar returned by `build` against central
/// differences for every entry of every parameter.
pub fn grad_check<F>(params: &[(String, TensorF)], build: F, eps: f64, tol: f64) -> Result<CheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var> + Sync,
{
    grad_check_with(params, build, eps, tol, Exec::default())
}

pub fn grad_check_with<F>(params: &[(String, TensorF)], build: F, eps: f64, tol: f64, exec: Exec) -> Result<CheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var> + Sync,
{
    check_coords(params, &build, eps, tol, exec, &all_coords(params))
}

/// Like [`grad_check_with`], but compares at most `per_param` seeded random
/// entries of each tensor. The analytic gradient is still computed in full.
pub fn grad_check_sampled<F>(
    params: &[(String, TensorF)],
    build: F,
    eps: f64,
    tol: f64,
    per_param: usize,
    seed: u64,
    exec: Exec,
) -> Result<CheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var> + Sync,
{
    check_coords(params, &build, eps, tol, exec, &sampled_coords(params, per_param, seed))
}

fn check_coords<F>(
    params: &[(String, TensorF)],
    build: &F,
    eps: f64,
    tol: f64,
    exec: Exec,
    coords: &[(usize, usize)],
) -> Result<CheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var> + Sync,
{
    let analytic = analytic_gradients(params, build)?;
    let numeric = numeric_at(params, build, eps, exec, coords)?;
    let names: Vec<String> = params.iter().map(|(n, _)| n.clone()).collect();
    Ok(compare_at(&names, &analytic, coords, &numeric, tol))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn non_scalar_loss_is_contract_error() {
        let params = vec![("x".to_string(), TensorF::zeros(&[2, 2]))];
        let err = grad_check(&params, |_t, v| Ok(v[0]), DEFAULT_FD_EPS, DEFAULT_REL_TOL).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn doubled_analytic_gradient_fails() {
        // loss = sum(0.5 * x) has gradient 0.5 everywhere
        let params = vec![("x".to_string(), TensorF::full(&[2, 3], 1.3))];
        let build = |t: &mut Tape, v: &[Var]| t.weighted_sum(v[0], TensorF::full(&[2, 3], 0.5));
        let analytic: Vec<TensorF> = analytic_gradients(&params, &build)
            .unwrap()
            .into_iter()
            .map(|g| g.scale(2.0))
            .collect();
        let numeric = numeric_gradients(&params, &build, DEFAULT_FD_EPS, Exec::Sequential).unwrap();
        let report = compare(&["x".into()], &analytic, &numeric, DEFAULT_REL_TOL);
        assert!(!report.passed());
        assert!((report.max_error - 0.5).abs() < 1e-6, "{report}");
        assert_eq!(report.worst().unwrap().name, "x");
    }
}
