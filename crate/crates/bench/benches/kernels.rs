use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use epirisk_bench::{ensemble, identity_index, network, SEED};
use epirisk_core::da::{da_cycle, forecast, DAConfig, PriorSpec};
use epirisk_core::kmc::{init_world, WorldParams};
use epirisk_core::network::{sample_day_schedule, DEFAULT_DEACTIVATION_RATE};
use epirisk_core::observations::{administer_tests, status_observations, AssaySpec};
use epirisk_core::riskmodel::{IntegratorConfig, ModelContacts};
use epirisk_core::rng::{Purpose, Seeds};

fn schedule(c: &mut Criterion) {
    let net = network(5000);
    let seeds = Seeds::new(SEED, 0);
    c.bench_function("schedule/day_5000", |b| {
        let mut day = 0;
        b.iter(|| {
            day += 1;
            sample_day_schedule(&net, day, DEFAULT_DEACTIVATION_RATE, &seeds)
        })
    });
}

fn kmc(c: &mut Criterion) {
    let base = network(5000);
    let seeds = Seeds::new(SEED, 0);
    let sched = sample_day_schedule(&base, 0, DEFAULT_DEACTIVATION_RATE, &seeds);
    c.bench_function("kmc/day_5000", |b| {
        b.iter_batched(
            || {
                let mut net = base.clone();
                let world = init_world(&mut net, 0.05, WorldParams::default(), &seeds).unwrap();
                (net, world)
            },
            |(mut net, mut world)| world.run(&mut net, &sched, 1.0, None).unwrap(),
            BatchSize::LargeInput,
        )
    });
}

fn riskmodel(c: &mut Criterion) {
    let net = network(2000);
    let seeds = Seeds::new(SEED, 0);
    let sched = sample_day_schedule(&net, 0, DEFAULT_DEACTIVATION_RATE, &seeds);
    let contacts = ModelContacts::from_schedule(&net, &sched, &identity_index(&net), 0.1, 1.0, |_| true);
    let base = ensemble(&net, 20);
    let integ = IntegratorConfig::default();
    let mut group = c.benchmark_group("riskmodel");
    group.sample_size(10);
    group.bench_function("forecast_day_2000x20", |b| {
        b.iter_batched(
            || base.clone(),
            |mut ens| forecast(&mut ens, &contacts, 0.0, 1.0, 1, &integ).unwrap(),
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

fn assimilation(c: &mut Criterion) {
    let mut net = network(2000);
    let seeds = Seeds::new(SEED, 0);
    let world = init_world(&mut net, 0.05, WorldParams::default(), &seeds).unwrap();
    let sched = sample_day_schedule(&net, 0, DEFAULT_DEACTIVATION_RATE, &seeds);
    let index = identity_index(&net);
    let contacts = ModelContacts::from_schedule(&net, &sched, &index, 0.1, 1.0, |_| true);
    let users: Vec<usize> = (0..net.population()).collect();
    let mut obs = administer_tests(
        world.health_slice(),
        &users,
        500,
        &AssaySpec::DIAGNOSTIC,
        0.05,
        0,
        1.0,
        &mut seeds.rng(Purpose::Tests, 0),
    );
    obs.extend(status_observations(world.health_slice(), &users, 0, 1.0));
    let base = ensemble(&net, 20);
    let cfg = DAConfig {
        members: 20,
        ..Default::default()
    };
    let prior = PriorSpec::default();
    let integ = IntegratorConfig::default();
    let mut group = c.benchmark_group("da");
    group.sample_size(10);
    group.bench_function("cycle_2000x20", |b| {
        b.iter_batched(
            || base.clone(),
            |mut ens| da_cycle(&mut ens, &contacts, 0.0, &obs, &index, &cfg, &prior, &integ, 0, &seeds).unwrap(),
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

criterion_group!(benches, schedule, kmc, riskmodel, assimilation);
criterion_main!(benches);
