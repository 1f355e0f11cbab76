//! Binary segmentation stacks: the `SSTK` codec, the 212-class table,
//! superclass aggregation, class shuffling and per-class presence.

mod classes;
mod mask;

pub use classes::{ClassTable, SuperclassMap, PATHOLOGY_RANGE, FOREIGN_OBJECT_RANGE};
pub use mask::{MaskStack, SSTK_MAGIC, SSTK_VERSION};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_MIN_AREA_FRACTION: f64 = 0.001;

/// OR member-class masks into one mask per superclass, in the map's order.
pub fn aggregate_superclasses(stack: &MaskStack, map: &SuperclassMap) -> Result<MaskStack> {
    if stack.n_cls() != map.n_classes() {
        return Err(Error::Config(format!(
            "stack has {} classes but the superclass map covers {}",
            stack.n_cls(),
            map.n_classes()
        )));
    }
    let mut out = MaskStack::empty(map.n_superclasses(), stack.height(), stack.width());
    for class in 0..stack.n_cls() {
        let sc = map.superclass_of(class)?;
        out.or_class_from(sc, stack, class);
    }
    Ok(out)
}

/// Seeded permutation of `0..n`.
pub fn class_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    perm
}

/// Reorder the class axis: output class `i` is input class `perm[i]`, with
/// `perm = class_permutation(n_cls, seed)`.
pub fn shuffle_classes(stack: &MaskStack, seed: u64) -> MaskStack {
    let perm = class_permutation(stack.n_cls(), seed);
    stack.permute_classes(&perm)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Presence {
    pub present: bool,
    pub area_fraction: f64,
}

pub fn presence(stack: &MaskStack, min_area_fraction: f64) -> Result<Vec<Presence>> {
    if !(0.0..1.0).contains(&min_area_fraction) {
        return Err(Error::Contract(format!(
            "min_area_fraction {min_area_fraction} outside [0, 1)"
        )));
    }
    let total = (stack.height() * stack.width()) as f64;
    Ok((0..stack.n_cls())
        .map(|c| {
            let area = stack.area(c);
            let area_fraction = area as f64 / total;
            Presence {
                present: area > 0 && area_fraction >= min_area_fraction,
                area_fraction,
            }
        })
        .collect())
}
