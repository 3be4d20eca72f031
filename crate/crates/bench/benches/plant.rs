use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use vshp::sim::Simulator;
use vshp::smallsignal::{analyse, power_grid, sweep};
use vshp::{ModelKind, Plant, PlantInputs, PlantParams};

fn derivatives(c: &mut Criterion) {
    let p = PlantParams::reference();
    let u = PlantInputs::new(0.6, 1.0);
    for kind in ModelKind::ALL {
        let plant = Plant::assemble(kind, p).unwrap();
        let x = plant.trim(&u).unwrap().state;
        c.bench_function(&format!("derivatives/{kind}"), |b| {
            b.iter(|| plant.derivatives(black_box(&x), &u).unwrap())
        });
    }
}

fn stepping(c: &mut Criterion) {
    let plant = Plant::assemble(ModelKind::Euler, PlantParams::reference()).unwrap();
    let u0 = PlantInputs::new(0.9, 1.0);
    let x0 = plant.trim(&u0).unwrap().state;
    // one second after a load rejection: limiter switching in every step
    let u = PlantInputs::new(0.3, 1.0);
    c.bench_function("simulate/euler 1 s after load rejection", |b| {
        b.iter(|| {
            let mut sim = Simulator::new(&plant, x0.clone(), &u0, 0.0, 1e-3).unwrap();
            for _ in 0..1000 {
                sim.step(&u).unwrap();
            }
            black_box(sim.state()[0])
        })
    });
}

fn analysis(c: &mut Criterion) {
    let p = PlantParams::reference();
    let plant = Plant::assemble(ModelKind::Euler, p).unwrap();
    let u = PlantInputs::new(0.6, 1.0);
    c.bench_function("trim+modes/euler", |b| {
        b.iter(|| analyse(&plant, black_box(&u)).unwrap())
    });
    c.bench_function("sweep/euler P* grid", |b| {
        b.iter(|| sweep(ModelKind::Euler, &p, &power_grid(1.0)).unwrap())
    });
}

criterion_group!(benches, derivatives, stepping, analysis);
criterion_main!(benches);
