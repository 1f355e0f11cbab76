use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::budget::{segmap_specs, specs, Init, ParamSpec};
use super::{Dims, FusionKind, FusionVariant};
use crate::error::{Error, Result};
use crate::tensor::{ParamStore, TensorF};

const PROJECTOR_PREFIXES: [&str; 8] = ["class_embed", "feat.", "mix1.", "mix2.", "alpha", "adapter.", "replace.", "seg."];

/// Whether `name` belongs to the modified projector (including the original
/// perceptron) rather than the decoder it feeds.
pub fn is_projector_param(name: &str) -> bool {
    name.starts_with("proj.") || PROJECTOR_PREFIXES.iter().any(|p| name.starts_with(p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Stage1,
    Stage2,
}

/// Projector parameters plus any extra entries (such as a decoder under
/// `lm.`) that train alongside them.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorParams {
    pub dims: Dims,
    pub variant: FusionVariant,
    pub store: ParamStore,
    pub(crate) stage1_complete: bool,
}

/// Per-parameter seed so a tensor's initial value does not depend on which
/// other parameters exist.
fn param_seed(seed: u64, name: &str) -> u64 {
    let digest = Sha256::digest(name.as_bytes());
    seed ^ u64::from_le_bytes(digest[..8].try_into().unwrap())
}

pub(crate) fn init_tensor(spec: &ParamSpec, seed: u64) -> TensorF {
    let n: usize = spec.shape.iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(param_seed(seed, &spec.name));
    let data: Vec<f64> = match spec.init {
        Init::Uniform { fan_in } => {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            (0..n).map(|_| dist.sample(&mut rng)).collect()
        }
        Init::Normal { std } => {
            let dist = Normal::new(0.0, std).expect("positive std");
            (0..n).map(|_| dist.sample(&mut rng)).collect()
        }
        Init::Const(v) => vec![v; n],
    };
    TensorF::new(spec.shape.clone(), data).expect("spec shape")
}

impl ProjectorParams {
    pub fn init(dims: Dims, variant: FusionVariant, seed: u64) -> Result<Self> {
        dims.validate()?;
        variant.validate()?;
        let mut store = ParamStore::new();
        for s in specs(&variant, &dims) {
            store.insert(s.name.clone(), init_tensor(&s, seed));
        }
        let p = Self { dims, variant, store, stage1_complete: false };
        p.check_shapes()?;
        Ok(p)
    }

    /// Every tensor the variant needs exists with its expected shape.
    pub fn check_shapes(&self) -> Result<()> {
        for s in specs(&self.variant, &self.dims) {
            let t = self.store.get(&s.name)?;
            if t.shape() != s.shape.as_slice() {
                return Err(Error::dim("parameter shape", &s.shape, t.shape()));
            }
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&TensorF> {
        self.store.get(name)
    }

    pub fn alpha(&self) -> Option<f64> {
        self.store.get("alpha").ok().map(|t| t.data()[0])
    }

    pub fn stage1_complete(&self) -> bool {
        self.stage1_complete
    }

    pub fn mark_stage1_complete(&mut self) {
        self.stage1_complete = true;
    }

    /// Attach a freshly initialized segmentation-map branch to a
    /// concatenation projector.
    pub fn add_segmap_branch(&mut self, seed: u64) -> Result<()> {
        if self.variant.kind != FusionKind::Concatenation {
            return Err(Error::Config("segmentation maps need the concatenation variant".into()));
        }
        for s in segmap_specs(&self.dims) {
            self.store.insert(s.name.clone(), init_tensor(&s, seed));
        }
        self.variant.use_segmaps = true;
        Ok(())
    }

    /// Element count of the projector entries (extras such as `lm.` excluded).
    pub fn num_projector_elements(&self) -> usize {
        self.store
            .iter()
            .filter(|(n, _)| is_projector_param(n))
            .map(|(_, p)| p.value.numel())
            .sum()
    }

    /// Stage 1 trains everything; stage 2 trains only the projector and
    /// needs a completed stage 1.
    pub fn freeze_mask(&mut self, stage: Stage) -> Result<()> {
        match stage {
            Stage::Stage1 => self.store.set_all_trainable(true),
            Stage::Stage2 => {
                if !self.stage1_complete {
                    return Err(Error::Sequencing("stage 2 requested before stage 1 completed or was loaded".into()));
                }
                if self.variant.use_segmaps && !self.store.contains("seg.fuse.w") {
                    return Err(Error::Sequencing("stage 2 with segmentation maps needs the segmap branch".into()));
                }
                let names: Vec<String> = self.store.names().map(str::to_string).collect();
                for n in names {
                    self.store.set_trainable(&n, is_projector_param(&n))?;
                }
            }
        }
        Ok(())
    }
}
