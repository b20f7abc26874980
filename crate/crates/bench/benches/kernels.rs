use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use sben_core::liouville::flow_sums;
use sben_core::stochastic::{reduce_to_force_density, ForceSampler};
use sben_core::*;

fn oscillator(dissipation: Dissipation, initial: InitialCondition, horizon: f64, step: f64) -> Scenario {
    let ham = CataloguedHamiltonian::separable(1.0, PotentialEnergy::Harmonic { stiffness: 1.0 }).unwrap();
    Scenario::new(Arc::new(ham), dissipation, initial, horizon, step).unwrap()
}

fn point() -> InitialCondition {
    InitialCondition::Point(PhasePoint::new(vec![1.0], vec![0.3]).unwrap())
}

fn solver_step(c: &mut Criterion) {
    let mut g = c.benchmark_group("solve_step");
    for (name, phi) in [
        ("quadratic", Dissipation::quadratic(0.5).unwrap()),
        ("dry_friction", Dissipation::dry_friction(0.3).unwrap()),
    ] {
        let s = oscillator(phi, point(), 1.0, 1e-3);
        let z = s.initial_point().unwrap().clone();
        g.bench_function(name, |b| b.iter(|| solve_step(&s, 0.0, black_box(&z), 1e-3).unwrap()));
    }
    g.finish();
}

fn conjugate(c: &mut Criterion) {
    let phi = Dissipation::quadratic(0.5).unwrap();
    let z = PhasePoint::new(vec![0.0], vec![0.4]).unwrap();
    c.bench_function("symplectic_conjugate", |b| b.iter(|| symplectic_conjugate(&phi, black_box(&z))));
    c.bench_function("grid_conjugate_51", |b| b.iter(|| grid_symplectic_conjugate(&phi, 5.0, 51).unwrap()));
}

fn sampler(c: &mut Criterion) {
    let s = Scenario {
        beta: 4.0,
        ..oscillator(Dissipation::quadratic(0.5).unwrap(), point(), 1.0, 1e-2)
    };
    let z = s.initial_point().unwrap().clone();
    let density = reduce_to_force_density(&s, 0.0, &z).unwrap();
    let mut g = c.benchmark_group("force_draw");
    for backend in [SamplerBackend::ExactGaussian, SamplerBackend::Metropolis] {
        let mut sampler = ForceSampler::new(backend);
        let mut rng = trajectory_rng(0, 0);
        g.bench_function(format!("{backend:?}"), |b| b.iter(|| sampler.draw(&density, &mut rng).unwrap()));
    }
    g.finish();
}

fn liouville(c: &mut Criterion) {
    let s = oscillator(
        Dissipation::quadratic(0.5).unwrap(),
        InitialCondition::Set(PhaseBox::cube(1, -1.0, 1.0)),
        1.0,
        1e-2,
    );
    let spec = GibbsSpec::for_scenario(&s, 16).unwrap();
    let mut g = c.benchmark_group("flow_sums");
    g.sample_size(10);
    g.bench_function("16x16_100_steps", |b| b.iter(|| flow_sums(&spec, &s, &FlowKind::Sben, 16, &[]).unwrap()));
    g.finish();
}

criterion_group!(benches, solver_step, conjugate, sampler, liouville);
criterion_main!(benches);
