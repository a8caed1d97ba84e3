use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lattice_szego::experiment::{run_experiment_with, ExperimentConfig, Family};
use lattice_szego::lattice::LatticeBox;
use lattice_szego::spectral::HamiltonianModel;
use lattice_szego::symbols::{quantize, quantize_raw, NamedSymbol, TorusGrid, DEFAULT_CUTOFF};
use lattice_szego::szego::{convergence_sweep, default_kappa, rhs_multiplication, TestFunction};
use lattice_szego::tauberian::geometric;
use lattice_szego::Execution;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn bench_quantize(c: &mut Criterion) {
    let mut group = c.benchmark_group("quantize_raw");
    let grid = TorusGrid::new(2, 32).unwrap();
    let lattice = LatticeBox::cube(2, 20);
    let sigma = NamedSymbol::ShiftedCosine { c0: 2.0, gamma: 1.0 }.build(&grid, &lattice).unwrap();
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::new(name, "d2_L20"), |bench| {
            bench.iter(|| quantize_raw(&sigma, &lattice, DEFAULT_CUTOFF, exec).unwrap())
        });
    }
    group.finish();
}

fn bench_sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("convergence_sweep");
    let model = HamiltonianModel::new(1, 100, 2.0, 0.5).unwrap();
    let grid = TorusGrid::with_default_points(1).unwrap();
    let sigma = NamedSymbol::TrigPoly { coefficients: vec![2.0, 1.0] }
        .build(&grid, &LatticeBox::cube(1, 0))
        .unwrap();
    let b = quantize(
        &NamedSymbol::TrigPoly { coefficients: vec![2.0, 1.0] }.build(&grid, model.lattice()).unwrap(),
        model.lattice(),
        DEFAULT_CUTOFF,
        Execution::Sequential,
    )
    .unwrap()
    .operator;
    let f = TestFunction::Polynomial(vec![0.0, 0.0, 1.0]);
    let lambdas = geometric(50.0, 4000.0, 16);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::new(name, "L100_16pts"), |bench| {
            bench.iter(|| {
                convergence_sweep(&model.spectrum, &b, &f, &lambdas, default_kappa(2.0), |_| {
                    rhs_multiplication(&sigma, &f)
                }, exec)
                .unwrap()
            })
        });
    }
    group.finish();
}

fn bench_experiment(c: &mut Criterion) {
    let mut group = c.benchmark_group("szego2_experiment");
    group.sample_size(10);
    let pairs: Vec<(String, String)> = [("L", "60"), ("lambda_start", "100"), ("lambda_count", "4")]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
    let config = ExperimentConfig::from_pairs(Family::Szego2, &pairs).unwrap();
    for (name, exec) in MODES {
        group.bench_function(name, |bench| bench.iter(|| run_experiment_with(&config, exec).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, bench_quantize, bench_sweep, bench_experiment);
criterion_main!(benches);
