use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use segfuse::pipeline::{gen_synthetic_dataset, init_model, train_stage, TaskSpec, TrainConfig};
use segfuse::projector::{projector_forward, Dims, FusionVariant, ProjectorParams, Stage};
use segfuse::{Exec, TensorF};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn forward(c: &mut Criterion) {
    let d = Dims::desk();
    let b = 16;
    let task = TaskSpec::default_task();
    let samples = gen_synthetic_dataset(&task, b, &d, 1, Exec::Parallel).unwrap();
    let f = TensorF::stack(&samples.iter().map(|s| s.f_i.clone()).collect::<Vec<_>>()).unwrap();
    let r = TensorF::stack(&samples.iter().map(|s| s.r.clone()).collect::<Vec<_>>()).unwrap();
    let s = TensorF::stack(&samples.iter().map(|s| s.masks.to_tensor()).collect::<Vec<_>>()).unwrap();
    let p = ProjectorParams::init(d, FusionVariant::concat_segmaps(), 0).unwrap();

    let mut g = c.benchmark_group("projector_forward");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |bench| {
            bench.iter(|| projector_forward(&p, &f, &r, Some(&s), exec).unwrap())
        });
    }
    g.finish();
}

fn training(c: &mut Criterion) {
    let d = Dims::desk();
    let task = TaskSpec::default_task();
    let samples = gen_synthetic_dataset(&task, 64, &d, 2, Exec::Parallel).unwrap();
    let train: Vec<usize> = (0..64).collect();
    let cfg = TrainConfig { batch_size: 16, ..TrainConfig::default() };
    let base = init_model(d, FusionVariant::concat(), task.vocab.len(), 0).unwrap();

    let mut g = c.benchmark_group("train_stage");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |bench| {
            bench.iter(|| {
                let mut p = base.clone();
                train_stage(&mut p, &samples, &train, Stage::Stage1, 1, &cfg, 0, exec).unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(benches, forward, training);
criterion_main!(benches);
