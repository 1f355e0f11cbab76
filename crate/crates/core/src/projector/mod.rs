//! The modified projector: class-embedding fusion variants in front of the
//! original two-layer perceptron, parameter budgets, stage-wise freezing and
//! checkpoints.

mod batch;
mod budget;
mod checkpoint;
pub mod graph;
mod params;

pub use batch::{
    fuse_concat, fuse_learned_mixing, fuse_replace, fuse_segmap_tokens, fuse_weighted_addition, mix_base,
    pool_segmaps, pool_segmaps_raw, projector_forward, stack_features,
};
pub use budget::{count_params, param_shapes, ParamBudget, DEFAULT_BACKBONE_SIZE};
pub use checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use params::{is_projector_param, ProjectorParams, Stage};

pub(crate) use budget::{Init, ParamSpec};
pub(crate) use params::init_tensor;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Token counts and widths of every tensor flowing through the projector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// vision token count
    pub t_v: usize,
    /// vision embedding width
    pub d_vis: usize,
    /// class-embedding token count
    pub t_c: usize,
    /// class-embedding depth
    pub d_cls: usize,
    /// intermediate-feature width
    pub d_r: usize,
    pub n_cls: usize,
    /// pooled spatial grid side
    pub g: usize,
    /// decoder embedding width
    pub d_llm: usize,
    /// width of the pooled segmentation tokens
    pub d_s: usize,
}

impl Dims {
    pub fn desk() -> Self {
        Self { t_v: 36, d_vis: 64, t_c: 16, d_cls: 32, d_r: 48, n_cls: 212, g: 8, d_llm: 64, d_s: 32 }
    }

    pub fn paper() -> Self {
        Self { t_v: 576, d_vis: 1024, t_c: 256, d_cls: 512, d_r: 6144, n_cls: 212, g: 16, d_llm: 4096, d_s: 512 }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper" => Ok(Self::paper()),
            other => Err(Error::Config(format!("unknown preset {other:?} (expected desk or paper)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("t_v", self.t_v),
            ("d_vis", self.d_vis),
            ("t_c", self.t_c),
            ("d_cls", self.d_cls),
            ("d_r", self.d_r),
            ("n_cls", self.n_cls),
            ("g", self.g),
            ("d_llm", self.d_llm),
            ("d_s", self.d_s),
        ];
        match fields.iter().find(|(_, v)| *v == 0) {
            Some((name, _)) => Err(Error::Config(format!("dimension {name} must be positive"))),
            None => Ok(()),
        }
    }

    pub(crate) fn as_array(&self) -> [usize; 9] {
        [self.t_v, self.d_vis, self.t_c, self.d_cls, self.d_r, self.n_cls, self.g, self.d_llm, self.d_s]
    }

    pub(crate) fn from_array(a: [usize; 9]) -> Self {
        let [t_v, d_vis, t_c, d_cls, d_r, n_cls, g, d_llm, d_s] = a;
        Self { t_v, d_vis, t_c, d_cls, d_r, n_cls, g, d_llm, d_s }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FusionKind {
    /// No class embedding; the projector sees the vision tokens only.
    Baseline,
    Replace,
    LearnedMixing,
    WeightedAddition { alpha_init: f64 },
    Concatenation,
}

impl FusionKind {
    pub(crate) fn code(&self) -> u8 {
        match self {
            FusionKind::Baseline => 0,
            FusionKind::Replace => 1,
            FusionKind::LearnedMixing => 2,
            FusionKind::WeightedAddition { .. } => 3,
            FusionKind::Concatenation => 4,
        }
    }

    pub(crate) fn from_code(code: u8, alpha_init: f64) -> Option<Self> {
        Some(match code {
            0 => FusionKind::Baseline,
            1 => FusionKind::Replace,
            2 => FusionKind::LearnedMixing,
            3 => FusionKind::WeightedAddition { alpha_init },
            4 => FusionKind::Concatenation,
            _ => return None,
        })
    }

    pub(crate) fn alpha_init(&self) -> f64 {
        match self {
            FusionKind::WeightedAddition { alpha_init } => *alpha_init,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionVariant {
    #[serde(flatten)]
    pub kind: FusionKind,
    #[serde(default)]
    pub use_segmaps: bool,
}

impl FusionVariant {
    pub fn new(kind: FusionKind, use_segmaps: bool) -> Result<Self> {
        let v = Self { kind, use_segmaps };
        v.validate()?;
        Ok(v)
    }

    pub fn baseline() -> Self {
        Self { kind: FusionKind::Baseline, use_segmaps: false }
    }

    pub fn concat() -> Self {
        Self { kind: FusionKind::Concatenation, use_segmaps: false }
    }

    pub fn concat_segmaps() -> Self {
        Self { kind: FusionKind::Concatenation, use_segmaps: true }
    }

    pub fn validate(&self) -> Result<()> {
        if self.use_segmaps && self.kind != FusionKind::Concatenation {
            return Err(Error::Config(format!(
                "segmentation maps are only fused with concatenation, not {:?}",
                self.kind
            )));
        }
        Ok(())
    }

    /// Names accepted on the command line: `baseline`, `replace`,
    /// `learned-mixing`, `weighted-addition[:alpha]`, `concat`, `concat-segmaps`.
    pub fn parse(name: &str) -> Result<Self> {
        let (head, arg) = match name.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (name, None),
        };
        let v = match head {
            "baseline" => Self::baseline(),
            "replace" => Self { kind: FusionKind::Replace, use_segmaps: false },
            "learned-mixing" => Self { kind: FusionKind::LearnedMixing, use_segmaps: false },
            "weighted-addition" => {
                let alpha_init = match arg {
                    Some(a) => a
                        .parse()
                        .map_err(|_| Error::Config(format!("bad alpha in {name:?}")))?,
                    None => 0.0,
                };
                Self { kind: FusionKind::WeightedAddition { alpha_init }, use_segmaps: false }
            }
            "concat" => Self::concat(),
            "concat-segmaps" => Self::concat_segmaps(),
            _ => return Err(Error::Config(format!("unknown fusion variant {name:?}"))),
        };
        if arg.is_some() && !matches!(v.kind, FusionKind::WeightedAddition { .. }) {
            return Err(Error::Config(format!("variant {head:?} takes no argument")));
        }
        Ok(v)
    }

    /// Number of tokens handed to the perceptron.
    pub fn output_tokens(&self, dims: &Dims) -> usize {
        match self.kind {
            FusionKind::Baseline | FusionKind::Replace | FusionKind::WeightedAddition { .. } => dims.t_v,
            FusionKind::LearnedMixing => dims.t_v + dims.t_c,
            FusionKind::Concatenation if self.use_segmaps => dims.t_v + 2 * dims.t_c,
            FusionKind::Concatenation => dims.t_v + dims.t_c,
        }
    }
}
