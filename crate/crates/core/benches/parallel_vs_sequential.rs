use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use msfde_core::montecarlo::{simulate_with, McConfig, PsiMode};
use msfde_core::par::Execution;
use msfde_core::quadrature::{convolve, KernelView};
use msfde_core::volterra_ms::ProblemInstance;
use msfde_core::{FiniteSignedMeasure, FunctionTable, Grid};

const STRATEGIES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn delay_instance() -> ProblemInstance {
    let grid = Grid::new(0.01, 10.0, 1.0).unwrap();
    ProblemInstance::new(
        FiniteSignedMeasure::from_atoms(1.0, &[(0.0, -1.5), (-1.0, -0.3)]).unwrap(),
        FiniteSignedMeasure::from_atoms(1.0, &[(-1.0, 0.5)]).unwrap(),
        FunctionTable::horizon_fn(grid, |_| 0.0),
        FunctionTable::horizon_fn(grid, |t| (-t).exp()),
        FunctionTable::history_fn(grid, |_| 1.0),
        grid,
    )
    .unwrap()
}

fn monte_carlo(c: &mut Criterion) {
    let inst = delay_instance();
    let cfg = McConfig { paths: 2048, seed: 1, psi_mode: PsiMode::Deterministic };
    let mut group = c.benchmark_group("monte_carlo");
    group.sample_size(10);
    for (name, exec) in STRATEGIES {
        group.bench_function(BenchmarkId::new(name, cfg.paths), |b| {
            b.iter(|| simulate_with(black_box(&inst), &cfg, exec).unwrap())
        });
    }
    group.finish();
}

fn convolution(c: &mut Criterion) {
    let mut group = c.benchmark_group("convolution");
    for n in [1_000usize, 8_000] {
        let h = 10.0 / n as f64;
        let k: Vec<f64> = (0..n).map(|i| (-(i as f64) * h).exp()).collect();
        let y: Vec<f64> = (0..n).map(|i| (i as f64 * h).cos()).collect();
        for (name, exec) in STRATEGIES {
            group.bench_function(BenchmarkId::new(name, n), |b| {
                b.iter(|| convolve(KernelView::continuous(black_box(&k)), black_box(&y), h, exec))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, monte_carlo, convolution);
criterion_main!(benches);
