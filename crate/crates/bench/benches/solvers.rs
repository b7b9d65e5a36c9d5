use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use qvix_core::*;

fn neumann(n: usize) -> EllipticOperator {
    EllipticOperator::assemble(Grid::unit(n).unwrap(), 1.0, BoundaryCondition::Neumann).unwrap()
}

fn vi_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_vi");
    for n in [65, 257, 1025] {
        let op = neumann(n);
        let g = *op.grid();
        let f = DualElement::new(
            g,
            g.nodes().iter().map(|x| 4.0 * (6.0 * x).sin()).collect(),
        )
        .unwrap();
        let phi = NodalFunction::from_fn(g, |x| 0.5 + 0.5 * x).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| solve_vi(&op, black_box(&f), &phi, &SolverOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn extremal_min(c: &mut Criterion) {
    let mut group = c.benchmark_group("iterate_min_thermoforming");
    for n in [33, 129] {
        let op = neumann(n);
        let g = *op.grid();
        let mould = NodalFunction::from_fn(g, |x| 0.95 - 0.4 * x + 0.4 * x * x).unwrap();
        let map = ThermoformingMap::new(1.0, 1.0, 0.1, mould).unwrap();
        let f = DualElement::constant(g, 1.0);
        let start = NodalFunction::zeros(g);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| {
                iterate_min(&op, black_box(&f), &map, &start, &ExtremalOptions::default()).unwrap()
            })
        });
    }
    group.finish();
}

fn thermoforming_evaluate(c: &mut Criterion) {
    let op = neumann(129);
    let g = *op.grid();
    let map = ThermoformingMap::new(1.0, 1.0, 0.1, NodalFunction::constant(g, 1.0)).unwrap();
    let u = NodalFunction::from_fn(g, |x| 0.6 + 0.3 * x).unwrap();
    c.bench_function("thermoforming_evaluate_129", |b| {
        b.iter(|| map.evaluate(black_box(&u)).unwrap())
    });
}

criterion_group!(benches, vi_solve, extremal_min, thermoforming_evaluate);
criterion_main!(benches);
