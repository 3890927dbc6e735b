//! Parallel vs. serial batch evaluation of the training loss and weight
//! gradient. The two entry points are bit-identical in output; this suite
//! measures what the rayon chunking buys (or costs) at various batch sizes
//! on the desk-scale architecture.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hjflow::lie_poisson::QuadraticHamiltonian;
use hjflow::net::{loss_and_weight_grad, loss_and_weight_grad_serial, GeneratingFunctionNet};
use hjflow::train::{sample_collocation, HjResidual, TrainingConfig};

fn bench_loss_grad(c: &mut Criterion) {
    let net = GeneratingFunctionNet::init_xavier(&[4, 64, 64, 64, 1], 0).unwrap();
    let residual = HjResidual::new(QuadraticHamiltonian::default());
    let mut group = c.benchmark_group("loss_and_weight_grad");
    group.sample_size(20);
    for &n in &[512usize, 2048, 5000] {
        let mut cfg = TrainingConfig::desk_scale(0);
        cfg.n_points = n;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let points = sample_collocation(&cfg, &mut rng);
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::new("parallel", n), &points, |b, pts| {
            b.iter(|| loss_and_weight_grad(&net, pts, &residual).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("serial", n), &points, |b, pts| {
            b.iter(|| loss_and_weight_grad_serial(&net, pts, &residual).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_loss_grad);
criterion_main!(benches);
