use std::collections::BTreeMap;

use serde::Serialize;

use super::{Dims, FusionKind, FusionVariant};

/// Backbone size the added fraction is measured against.
pub const DEFAULT_BACKBONE_SIZE: f64 = 7.06e9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Init {
    /// uniform in `±1/sqrt(fan_in)`
    Uniform { fan_in: usize },
    Normal { std: f64 },
    Const(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

fn spec(out: &mut Vec<ParamSpec>, name: &str, shape: &[usize], init: Init) {
    out.push(ParamSpec { name: name.to_string(), shape: shape.to_vec(), init });
}

fn linear(out: &mut Vec<ParamSpec>, prefix: &str, d_in: usize, d_out: usize) {
    let init = Init::Uniform { fan_in: d_in };
    spec(out, &format!("{prefix}.w"), &[d_in, d_out], init);
    spec(out, &format!("{prefix}.b"), &[d_out], init);
}

pub(crate) fn segmap_specs(dims: &Dims) -> Vec<ParamSpec> {
    let mut out = Vec::new();
    let init = Init::Uniform { fan_in: dims.n_cls };
    spec(&mut out, "seg.conv.k", &[dims.t_c, dims.n_cls, 1], init);
    spec(&mut out, "seg.conv.b", &[dims.t_c], init);
    linear(&mut out, "seg.spatial", dims.g * dims.g, dims.d_s);
    linear(&mut out, "seg.fuse", dims.d_vis + dims.d_s, dims.d_vis);
    out
}

pub(crate) fn specs(variant: &FusionVariant, dims: &Dims) -> Vec<ParamSpec> {
    let mut out = Vec::new();
    if variant.kind != FusionKind::Baseline {
        spec(&mut out, "class_embed", &[dims.t_c, dims.d_cls], Init::Normal { std: 0.02 });
        linear(&mut out, "feat", dims.d_r, dims.d_cls);
    }
    match variant.kind {
        FusionKind::Baseline => {}
        FusionKind::Replace => {
            let init = Init::Uniform { fan_in: dims.d_cls * 3 };
            spec(&mut out, "replace.conv.k", &[dims.d_vis, dims.d_cls, 3], init);
            spec(&mut out, "replace.conv.b", &[dims.d_vis], init);
            linear(&mut out, "adapter", dims.t_c, dims.t_v);
        }
        FusionKind::LearnedMixing => {
            linear(&mut out, "mix1", 2 * dims.d_cls, dims.d_vis);
            linear(&mut out, "mix2", dims.d_vis, dims.d_vis);
        }
        FusionKind::WeightedAddition { alpha_init } => {
            linear(&mut out, "mix1", 2 * dims.d_cls, dims.d_vis);
            linear(&mut out, "adapter", dims.t_c, dims.t_v);
            spec(&mut out, "alpha", &[1], Init::Const(alpha_init));
        }
        FusionKind::Concatenation => {
            linear(&mut out, "mix1", 2 * dims.d_cls, dims.d_vis);
        }
    }
    if variant.use_segmaps {
        out.extend(segmap_specs(dims));
    }
    linear(&mut out, "proj.fc1", dims.d_vis, dims.d_llm);
    linear(&mut out, "proj.fc2", dims.d_llm, dims.d_llm);
    out
}

/// Every projector parameter name with its shape, without allocating tensors.
pub fn param_shapes(variant: &FusionVariant, dims: &Dims) -> Vec<(String, Vec<usize>)> {
    specs(variant, dims).into_iter().map(|s| (s.name, s.shape)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamBudget {
    /// element counts keyed by component (`class_embed`, `feat`, `mix1`, `seg.fuse`, ...)
    pub components: BTreeMap<String, usize>,
    /// original perceptron
    pub projector: usize,
    /// class embedding and feature path
    pub feature_branch: usize,
    /// segmentation-map path
    pub segmap_branch: usize,
    pub added: usize,
    pub backbone_size: f64,
    pub added_fraction: f64,
}

fn component_of(name: &str) -> &str {
    match name.rsplit_once('.') {
        Some((head, "w" | "b" | "k")) => head,
        _ => name,
    }
}

pub fn count_params(variant: &FusionVariant, dims: &Dims, backbone_size: f64) -> ParamBudget {
    let mut components = BTreeMap::new();
    let (mut projector, mut feature_branch, mut segmap_branch) = (0, 0, 0);
    for s in specs(variant, dims) {
        let n: usize = s.shape.iter().product();
        *components.entry(component_of(&s.name).to_string()).or_insert(0) += n;
        if s.name.starts_with("proj.") {
            projector += n;
        } else if s.name.starts_with("seg.") {
            segmap_branch += n;
        } else {
            feature_branch += n;
        }
    }
    let added = feature_branch + segmap_branch;
    ParamBudget {
        components,
        projector,
        feature_branch,
        segmap_branch,
        added,
        backbone_size,
        added_fraction: added as f64 / backbone_size,
    }
}
