use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{TaskSpec, Vocab};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::ground::FindingMapping;
use crate::metrics::{CeVector, Finding, N_FINDINGS};
use crate::projector::Dims;
use crate::segstack::{class_permutation, MaskStack, FOREIGN_OBJECT_RANGE};
use crate::tensor::fixture::{self, Precision};
use crate::tensor::ops::adaptive_avg_pool2d_flat;
use crate::tensor::TensorF;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub id: String,
    pub z: CeVector,
    /// `[d_R]`
    pub r: TensorF,
    /// `[T_v, D]`
    pub f_i: TensorF,
    pub masks: MaskStack,
    pub report: Vec<usize>,
    pub prompt: Vec<usize>,
}

/// Seeded draws shared by every sample of one dataset.
struct Fixed {
    /// `[d_R, 14]`
    a: Vec<f64>,
    /// `[T_v, D]`
    base: Vec<f64>,
    /// `[D]`
    v: Vec<f64>,
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn grid_side(t_v: usize) -> Result<usize> {
    let s = (t_v as f64).sqrt().round() as usize;
    if s * s != t_v {
        return Err(Error::Config(format!("vision token count {t_v} is not a square grid")));
    }
    Ok(s)
}

fn fill(stack: &mut MaskStack, class: usize, y: usize, x: usize, h: usize, w: usize) {
    for yy in y..y + h {
        for xx in x..x + w {
            stack.set(class, yy, xx, true);
        }
    }
}

fn sample_one(
    task: &TaskSpec,
    dims: &Dims,
    mapping: &FindingMapping,
    fixed: &Fixed,
    seed: u64,
    i: usize,
) -> Result<SyntheticSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64 + 1);

    let mut flags = [false; N_FINDINGS];
    for f in Finding::all().filter(|f| *f != Finding::NO_FINDING) {
        flags[f.index()] = rng.random_bool(task.prior);
    }
    let z = CeVector::from_pathologies(flags);

    let side = task.mask_side;
    let mut masks = MaskStack::empty(dims.n_cls, side, side);
    for &(c, y, x, h, w) in &task.anatomy {
        fill(&mut masks, c, y, x, h, w);
    }
    let (lo, hi) = task.lesion_side;
    for (f, classes) in mapping.mapped() {
        if !z.get(f) {
            continue;
        }
        let (ry, rx, rh, rw) = task.lesion_regions[f.index()]
            .ok_or_else(|| Error::Config(format!("no lesion region for {}", f.name())))?;
        let c = classes[rng.random_range(0..classes.len())];
        let h = rng.random_range(lo..=hi);
        let w = rng.random_range(lo..=hi);
        let y = ry + rng.random_range(0..=rh - h);
        let x = rx + rng.random_range(0..=rw - w);
        fill(&mut masks, c, y, x, h, w);
    }

    // what the vision encoder sees: every labelled pixel, without class identity
    let mut union = vec![0.0; side * side];
    for c in 0..dims.n_cls {
        for yy in 0..side {
            for xx in 0..side {
                if masks.get(c, yy, xx) {
                    union[yy * side + xx] = 1.0;
                }
            }
        }
    }
    let g = grid_side(dims.t_v)?;
    let occ = adaptive_avg_pool2d_flat(&TensorF::new(vec![1, side, side], union)?, g, g)?;

    let d = dims.d_vis;
    let noise = normals(&mut rng, dims.t_v * d);
    let f_i: Vec<f64> = (0..dims.t_v * d)
        .map(|k| {
            let (p, j) = (k / d, k % d);
            fixed.base[k] + occ.data()[p] * fixed.v[j] + task.noise * noise[k]
        })
        .collect();

    let noise = normals(&mut rng, dims.d_r);
    let r: Vec<f64> = (0..dims.d_r)
        .map(|row| {
            let signal: f64 = (0..N_FINDINGS)
                .filter(|&k| z.0[k])
                .map(|k| fixed.a[row * N_FINDINGS + k] * task.feature_gain[k])
                .sum();
            signal + task.noise * noise[row]
        })
        .collect();

    Ok(SyntheticSample {
        id: format!("s{i:05}"),
        z,
        r: TensorF::vector(r),
        f_i: TensorF::new(vec![dims.t_v, d], f_i)?,
        masks,
        report: task.report_tokens(&z),
        prompt: task.prompt.clone(),
    })
}

/// `n` samples drawn from `task`, deterministic in `seed` and independent of
/// `exec`.
pub fn gen_synthetic_dataset(task: &TaskSpec, n: usize, dims: &Dims, seed: u64, exec: Exec) -> Result<Vec<SyntheticSample>> {
    dims.validate()?;
    if n == 0 {
        return Err(Error::Contract("dataset size must be at least 1".into()));
    }
    if dims.n_cls <= *FOREIGN_OBJECT_RANGE.end() {
        return Err(Error::Config(format!("synthetic masks need the full class table, got {} classes", dims.n_cls)));
    }
    let g = grid_side(dims.t_v)?;
    if g > task.mask_side || dims.g > task.mask_side {
        return Err(Error::Config(format!("mask side {} is smaller than the pooling grid", task.mask_side)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fixed = Fixed {
        a: normals(&mut rng, dims.d_r * N_FINDINGS),
        base: normals(&mut rng, dims.t_v * dims.d_vis),
        v: normals(&mut rng, dims.d_vis),
    };
    let mapping = FindingMapping::default_mapping();
    exec.map_range(n, |i| sample_one(task, dims, &mapping, &fixed, seed, i))
        .into_iter()
        .collect()
}

/// Index lists of an 80/10/10 train/val/test split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_dataset(n: usize, seed: u64) -> Split {
    let perm = class_permutation(n, seed);
    let n_train = n * 8 / 10;
    let n_val = n / 10;
    Split {
        train: perm[..n_train].to_vec(),
        val: perm[n_train..n_train + n_val].to_vec(),
        test: perm[n_train + n_val..].to_vec(),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexLine {
    id: String,
    z: Vec<bool>,
    prompt: String,
    report: String,
    f_i: String,
    r: String,
    masks: String,
}

/// `index.jsonl` plus `masks/<id>.sstk` and `tensors/<id>.{fi,r}.tnsr`.
pub fn write_dataset(dir: &Path, samples: &[SyntheticSample], vocab: &Vocab) -> Result<()> {
    for sub in ["masks", "tensors"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let mut index = Vec::new();
    for s in samples {
        let line = IndexLine {
            id: s.id.clone(),
            z: s.z.0.to_vec(),
            prompt: vocab.decode(&s.prompt),
            report: vocab.decode(&s.report),
            f_i: format!("tensors/{}.fi.tnsr", s.id),
            r: format!("tensors/{}.r.tnsr", s.id),
            masks: format!("masks/{}.sstk", s.id),
        };
        fixture::write_file(dir.join(&line.f_i), &s.f_i, Precision::F64)?;
        fixture::write_file(dir.join(&line.r), &s.r, Precision::F64)?;
        s.masks.write_file(&dir.join(&line.masks))?;
        serde_json::to_writer(&mut index, &line)?;
        index.push(b'\n');
    }
    let path = dir.join("index.jsonl");
    let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    f.write_all(&index).map_err(|e| Error::io(&path, e))
}

pub fn read_dataset(dir: &Path, vocab: &Vocab) -> Result<Vec<SyntheticSample>> {
    let path = dir.join("index.jsonl");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let l: IndexLine = serde_json::from_str(line)?;
        let z: [bool; N_FINDINGS] = l
            .z
            .as_slice()
            .try_into()
            .map_err(|_| Error::Config(format!("sample {} has {} finding flags", l.id, l.z.len())))?;
        out.push(SyntheticSample {
            z: CeVector(z),
            r: fixture::read_file(dir.join(&l.r))?,
            f_i: fixture::read_file(dir.join(&l.f_i))?,
            masks: MaskStack::read_file(&dir.join(&l.masks))?,
            report: vocab.encode(&l.report)?,
            prompt: vocab.encode(&l.prompt)?,
            id: l.id,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> Vec<SyntheticSample> {
        gen_synthetic_dataset(&TaskSpec::default_task(), 24, &Dims::desk(), seed, Exec::Parallel).unwrap()
    }

    #[test]
    fn same_seed_same_bits() {
        let a = small(3);
        let b = gen_synthetic_dataset(&TaskSpec::default_task(), 24, &Dims::desk(), 3, Exec::Sequential).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, small(4));
    }

    #[test]
    fn split_covers_every_sample_once() {
        let s = split_dataset(512, 1);
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (409, 51, 52));
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..512).collect::<Vec<_>>());
    }

    #[test]
    fn disk_round_trip() {
        let task = TaskSpec::default_task();
        let data = small(9);
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &data, &task.vocab).unwrap();
        assert_eq!(read_dataset(dir.path(), &task.vocab).unwrap(), data);
    }
}
