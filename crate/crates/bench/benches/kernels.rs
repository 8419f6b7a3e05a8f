use std::hint::black_box;
use std::rc::Rc;

use criterion::{criterion_group, criterion_main, Criterion};
use safer_bench::{preset_graph, random_tensor};
use safer_core::autodiff::Tape;
use safer_core::gnn::{EncoderConfig, EncoderKind, GnnEncoder, GraphViews};
use safer_core::graph::normalize::normalize_diagonal_enhanced;
use safer_core::graph::partition;
use safer_core::hyperbolic::{exp0_raw, log0_raw};
use safer_core::tensor::matmul_plain;

fn dense(c: &mut Criterion) {
    let a = random_tensor(256, 256, 1);
    let b = random_tensor(256, 64, 2);
    c.bench_function("gemm 256x256x64", |bench| bench.iter(|| matmul_plain(black_box(&a), black_box(&b)).unwrap()));

    let rows = random_tensor(10_000, 16, 3).to_rows();
    c.bench_function("exp0/log0 10k x 16", |bench| {
        bench.iter(|| {
            for r in &rows {
                black_box(log0_raw(&exp0_raw(r, 0.7), 0.7));
            }
        })
    });
}

fn graph(c: &mut Criterion) {
    let g = preset_graph("gossipcop-like", 1);
    let adj = normalize_diagonal_enhanced(&g).unwrap().matrix;
    let h = random_tensor(g.node_count(), 64, 4);
    c.bench_function("spmm adjacency x 64", |bench| bench.iter(|| adj.spmm(black_box(&h)).unwrap()));

    c.bench_function("partition 60 clusters", |bench| bench.iter(|| partition(black_box(&g), 60, 7).unwrap()));

    let features = Rc::new(g.features().clone());
    for kind in [EncoderKind::Gcn, EncoderKind::Gat, EncoderKind::Rgcn, EncoderKind::Hygcn] {
        let cfg = EncoderConfig::for_kind(kind);
        let enc = GnnEncoder::new(cfg.clone(), g.feature_dim(), 1).unwrap();
        let views = GraphViews::new(&g, &cfg).unwrap();
        c.bench_function(&format!("{} forward+backward", kind.as_str()), |bench| {
            bench.iter(|| {
                let tape = Tape::new();
                let bound = enc.params.bind(&tape);
                let loss = enc.embed(&bound, &views, &features, None).unwrap().square().mean();
                tape.backward(loss).unwrap()
            })
        });
    }
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = dense, graph
}
criterion_main!(benches);
