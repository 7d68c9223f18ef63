use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use vaporcell::atomic::all_d1_lines;
use vaporcell::data::linspace;
use vaporcell::hanle::{fit_zero_field_resonance, modulated_response, synthesize_resonance};
use vaporcell::lineshape::{fit_absorption, synthesize_absorption, AbsorptionParams};
use vaporcell::sigproc::{lock_in, synthesize_quadrature, welch_asd, LowPass, SensorNoise, WelchOptions};
use vaporcell::sns::{simulate_spin_noise, SpinNoiseConfig};
use vaporcell::thermal::{simulate_pid, PidGains, ThermalPlant, CELSIUS_OFFSET};
use vaporcell::{AtomicData, BlochConfig, HanleParams};

fn absorption(c: &mut Criterion) {
    let lines = all_d1_lines(&AtomicData::default());
    let truth = AbsorptionParams::default();
    let data = synthesize_absorption(linspace(-60.0, 60.0, 601), &truth, &lines, 0.01, 1).unwrap();
    let start = AbsorptionParams {
        linewidth: 12.0,
        ..truth.clone()
    };
    c.bench_function("fit_absorption 601 pts", |b| {
        b.iter(|| fit_absorption(black_box(&data), &start, &lines).unwrap())
    });
}

fn hanle(c: &mut Criterion) {
    let p = HanleParams {
        a0: 1.0,
        a1: 10.0,
        c0: 0.2,
        c1: 0.0,
        bx0: 0.5,
        delta_b: 10.5,
    };
    let (a, q) = synthesize_resonance(&linspace(-60.0, 60.0, 241), &p, 0.01, 2).unwrap();
    let guess = HanleParams::initial_guess(&a, &q);
    c.bench_function("fit_zero_field_resonance 241 pts", |b| {
        b.iter(|| fit_zero_field_resonance(black_box(&a), &q, &guess).unwrap())
    });
}

fn bloch(c: &mut Criterion) {
    let cfg = BlochConfig {
        duration: 0.12,
        ..BlochConfig::default()
    };
    c.bench_function("modulated_response 0.12 s", |b| {
        b.iter(|| modulated_response(black_box(&cfg), 890.0, 160.0, 1.0).unwrap())
    });
}

fn signal(c: &mut Criterion) {
    let ts = synthesize_quadrature(&SensorNoise::operating_point(), 3).unwrap();
    let opts = WelchOptions::new(2000);
    c.bench_function("welch_asd 200k samples", |b| {
        b.iter(|| welch_asd(black_box(&ts), &opts).unwrap())
    });
    c.bench_function("lock_in 200k samples", |b| {
        b.iter(|| lock_in(black_box(&ts), 89.0, 0.0, LowPass::SinglePole { cutoff: 5.0 }).unwrap())
    });
}

fn spin_noise(c: &mut Criterion) {
    let mut cfg = SpinNoiseConfig::natural(&AtomicData::default(), 10.0);
    cfg.duration = 0.1;
    c.bench_function("simulate_spin_noise 40k samples", |b| {
        b.iter(|| simulate_spin_noise(black_box(&cfg), 4).unwrap())
    });
}

fn thermal(c: &mut Criterion) {
    let plant = ThermalPlant::default();
    let gains = PidGains::tuned(200.0 + CELSIUS_OFFSET);
    c.bench_function("simulate_pid 3000 s", |b| {
        b.iter(|| simulate_pid(black_box(&plant), &gains, 3000.0, 1.0, 5).unwrap())
    });
}

criterion_group!(benches, absorption, hanle, bloch, signal, spin_noise, thermal);
criterion_main!(benches);
