use std::hint::black_box;
use std::path::PathBuf;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use ringkit_core::hiergraph::{build_hier_graph, build_vocab, HierGraph};
use ringkit_core::model::{collate, forward, mae_loss, Bound, ModelConfig, ModelParams};
use ringkit_core::rings::find_smallest_rings;
use ringkit_core::smiles::parse_smiles;
use ringkit_core::tensor::{Tape, Tensor};

fn corpus() -> Vec<String> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/osc_surrogate_350.csv");
    std::fs::read_to_string(path)
        .expect("surrogate corpus")
        .lines()
        .skip(1)
        .take(64)
        .map(|l| l.split(',').next().unwrap().to_string())
        .collect()
}

fn preprocessing(c: &mut Criterion) {
    let smiles = corpus();
    let mut group = c.benchmark_group("preprocess");
    group.throughput(Throughput::Elements(smiles.len() as u64));
    group.bench_function("parse", |b| {
        b.iter(|| {
            for s in &smiles {
                black_box(parse_smiles(s).unwrap());
            }
        })
    });
    let parsed: Vec<_> = smiles.iter().map(|s| parse_smiles(s).unwrap()).collect();
    group.bench_function("rings", |b| {
        b.iter_batched(
            || parsed.clone(),
            |mut graphs| {
                for g in &mut graphs {
                    black_box(find_smallest_rings(g).unwrap());
                }
            },
            BatchSize::SmallInput,
        )
    });
    group.bench_function("hier_graph", |b| {
        b.iter(|| {
            for s in &smiles {
                black_box(build_hier_graph(s, true).unwrap());
            }
        })
    });
    group.finish();
}

fn model(c: &mut Criterion) {
    let graphs: Vec<HierGraph> = corpus().iter().take(32).map(|s| build_hier_graph(s, true).unwrap()).collect();
    let refs: Vec<&HierGraph> = graphs.iter().collect();
    let vocab = build_vocab(&graphs).unwrap();
    let config = ModelConfig::desk(3).with_vocab(&vocab);
    let params = ModelParams::<f32>::init(&config, 0).unwrap();
    let batch = collate(&refs, &vocab, &config).unwrap();
    let target = Tensor::<f32>::zeros(refs.len(), 3);

    let mut group = c.benchmark_group("desk_model_batch32");
    group.sample_size(10);
    group.bench_function("collate", |b| b.iter(|| black_box(collate(&refs, &vocab, &config).unwrap())));
    group.bench_function("forward", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let bound = Bound::new(&mut tape, &params, false);
            black_box(forward(&mut tape, &config, &batch, &bound).unwrap().pred)
        })
    });
    group.bench_function("forward_backward", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let bound = Bound::new(&mut tape, &params, true);
            let out = forward(&mut tape, &config, &batch, &bound).unwrap();
            let loss = mae_loss(&mut tape, out.pred, &target).unwrap();
            black_box(tape.backward(loss).unwrap())
        })
    });
    group.finish();
}

criterion_group!(benches, preprocessing, model);
criterion_main!(benches);
