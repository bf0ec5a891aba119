use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use csikd::autodiff::{Tape, Tensor};

fn filled(shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|i| ((i * 7919) % 1000) as f64 / 1000.0 - 0.5).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn conv2d(c: &mut Criterion) {
    let mut g = c.benchmark_group("conv2d");
    for (c_in, c_out, kh, kw) in [(2, 2, 3, 3), (2, 16, 1, 9), (16, 16, 9, 1)] {
        let x = filled(&[32, c_in, 32, 32]);
        let k = filled(&[c_out, c_in, kh, kw]);
        let b = filled(&[c_out]);
        let id = format!("{c_in}->{c_out} {kh}x{kw}");
        g.bench_function(BenchmarkId::new("forward", &id), |bench| {
            bench.iter(|| {
                let mut t = Tape::new();
                let (xv, kv, bv) = (t.constant(x.clone()), t.constant(k.clone()), t.constant(b.clone()));
                black_box(t.conv2d(xv, kv, bv).unwrap());
            })
        });
        g.bench_function(BenchmarkId::new("forward+backward", &id), |bench| {
            bench.iter(|| {
                let mut t = Tape::new();
                let (xv, kv, bv) = (t.variable(x.clone()), t.variable(k.clone()), t.variable(b.clone()));
                let y = t.conv2d(xv, kv, bv).unwrap();
                let s = t.sum(y);
                t.backward(s).unwrap();
                black_box(t.grad(kv).map(|g| g[0]));
            })
        });
    }
    g.finish();
}

fn dense(c: &mut Criterion) {
    let x = filled(&[32, 2048]);
    let w = filled(&[128, 2048]);
    let b = filled(&[128]);
    c.bench_function("dense 2048->128 batch 32", |bench| {
        bench.iter(|| {
            let mut t = Tape::new();
            let (xv, wv, bv) = (t.constant(x.clone()), t.constant(w.clone()), t.constant(b.clone()));
            black_box(t.dense(xv, wv, bv).unwrap());
        })
    });
}

criterion_group!(benches, conv2d, dense);
criterion_main!(benches);
