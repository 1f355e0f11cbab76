//! Adam with a linear-warmup cosine learning-rate schedule.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};

use super::{GradMap, ParamStore, TensorF};
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

static CLAMP_WARNED: AtomicBool = AtomicBool::new(false);

fn warmup_steps(total: usize, warmup_ratio: f64) -> usize {
    // 0.03 * 100 is 3.0000000000000004 in binary; guard the ceiling
    ((warmup_ratio * total as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Learning rate at `step`: linear warmup from 0 to `base_lr` over the first
/// `ceil(warmup_ratio * total)` steps, then half-cosine decay to 0 at `total`.
/// Steps past `total` clamp to 0.
pub fn cosine_lr(step: usize, total: usize, warmup_ratio: f64, base_lr: f64) -> f64 {
    if step > total {
        if !CLAMP_WARNED.swap(true, Ordering::Relaxed) {
            log::warn!("lr schedule queried at step {step} > total {total}; clamping to 0");
        }
        return 0.0;
    }
    let warm = warmup_steps(total, warmup_ratio);
    if step < warm {
        return base_lr * step as f64 / warm as f64;
    }
    if total == warm {
        return base_lr;
    }
    let progress = (step - warm) as f64 / (total - warm) as f64;
    base_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

#[derive(Debug, Clone)]
pub struct OptimState {
    pub first_moment: BTreeMap<String, TensorF>,
    pub second_moment: BTreeMap<String, TensorF>,
    pub step: usize,
    pub base_lr: f64,
    pub warmup_ratio: f64,
    pub total_steps: usize,
}

impl OptimState {
    pub fn new(base_lr: f64, warmup_ratio: f64, total_steps: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&warmup_ratio) {
            return Err(Error::Config(format!("warmup ratio {warmup_ratio} outside [0, 1]")));
        }
        if total_steps == 0 || (warmup_ratio > 0.0 && warmup_ratio * total_steps as f64 + 1e-9 < 1.0) {
            return Err(Error::Config(format!(
                "schedule needs total * warmup_ratio >= 1 (total {total_steps}, ratio {warmup_ratio})"
            )));
        }
        Ok(Self {
            first_moment: BTreeMap::new(),
            second_moment: BTreeMap::new(),
            step: 0,
            base_lr,
            warmup_ratio,
            total_steps,
        })
    }

    pub fn current_lr(&self) -> f64 {
        cosine_lr(self.step, self.total_steps, self.warmup_ratio, self.base_lr)
    }

    /// One Adam update of every trainable parameter that has a gradient.
    /// Frozen parameters are left bit-identical. Returns the learning rate used.
    pub fn adam_step(&mut self, params: &mut ParamStore, grads: &GradMap) -> Result<f64> {
        let lr = self.current_lr();
        let t = (self.step + 1) as i32;
        let bc1 = 1.0 - ADAM_BETA1.powi(t);
        let bc2 = 1.0 - ADAM_BETA2.powi(t);
        for (name, g) in grads {
            if !params.is_trainable(name) {
                continue;
            }
            let p = params.get_mut(name)?;
            if p.shape() != g.shape() {
                return Err(Error::dim("adam_step", p.shape(), g.shape()));
            }
            let m = self
                .first_moment
                .entry(name.clone())
                .or_insert_with(|| TensorF::zeros(g.shape()));
            let v = self
                .second_moment
                .entry(name.clone())
                .or_insert_with(|| TensorF::zeros(g.shape()));
            for (((pv, mv), vv), &gv) in p
                .data_mut()
                .iter_mut()
                .zip(m.data_mut())
                .zip(v.data_mut())
                .zip(g.data())
            {
                *mv = ADAM_BETA1 * *mv + (1.0 - ADAM_BETA1) * gv;
                *vv = ADAM_BETA2 * *vv + (1.0 - ADAM_BETA2) * gv * gv;
                let mhat = *mv / bc1;
                let vhat = *vv / bc2;
                *pv -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
            }
        }
        self.step += 1;
        Ok(lr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_examples() {
        assert_eq!(cosine_lr(0, 100, 0.03, 2e-5), 0.0);
        assert_eq!(cosine_lr(3, 100, 0.03, 2e-5), 2e-5);
        assert!(cosine_lr(100, 100, 0.03, 2e-5).abs() < 1e-20);
        assert_eq!(cosine_lr(101, 100, 0.03, 2e-5), 0.0);
    }

    #[test]
    fn schedule_warmup_is_linear_and_decay_monotone() {
        let lr1 = cosine_lr(1, 100, 0.03, 3.0);
        let lr2 = cosine_lr(2, 100, 0.03, 3.0);
        assert!((lr1 - 1.0).abs() < 1e-12 && (lr2 - 2.0).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for s in 3..=100 {
            let lr = cosine_lr(s, 100, 0.03, 3.0);
            assert!(lr <= prev);
            prev = lr;
        }
    }

    #[test]
    fn rejects_short_schedule() {
        assert!(OptimState::new(1e-3, 0.03, 10).is_err());
        assert!(OptimState::new(1e-3, 0.03, 34).is_ok());
    }

    #[test]
    fn adam_moves_against_gradient_and_skips_frozen() {
        let mut params = ParamStore::new();
        params.insert("a", TensorF::vector(vec![1.0, -1.0]));
        params.insert("b", TensorF::vector(vec![5.0]));
        params.set_trainable("b", false).unwrap();
        let mut grads = GradMap::new();
        grads.insert("a".into(), TensorF::vector(vec![0.5, -2.0]));
        grads.insert("b".into(), TensorF::vector(vec![1.0]));

        let mut st = OptimState::new(0.1, 0.0, 10).unwrap();
        st.adam_step(&mut params, &grads).unwrap();
        let a = params.get("a").unwrap().data();
        // first bias-corrected Adam step moves each coordinate by ~lr
        assert!(a[0] < 1.0 && a[1] > -1.0);
        assert!((1.0 - a[0] - cosine_lr(0, 10, 0.0, 0.1)).abs() < 1e-6);
        assert_eq!(params.get("b").unwrap().data(), &[5.0]);
        assert_eq!(st.step, 1);
    }
}
