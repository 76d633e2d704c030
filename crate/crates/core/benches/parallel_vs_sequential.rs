use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use reqm::afc::{simulate_spectral_multimode, Channel, CombSpec, Envelope, MultimodeSettings, PulseTrainSpec, ToothShape};
use reqm::coherence::synthesize_hole_widths;
use reqm::exec::Exec;
use reqm::fitting::{fit_hole_broadening, fit_multiexponential, grid_oracle, FitProblem, HoleWidthOptions, MultiExpOptions};
use reqm::model::SpectralDiffusionParams;
use reqm::noise::Noise;
use reqm::population::{linear_grid, log_grid, synthesize_shb_decay, ExponentialMixture};
use reqm::trace::TimeTrace;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn shb_trace() -> TimeTrace {
    let mix = ExponentialMixture::from_pairs(&[(0.4, 1.99e-3), (0.4, 55.14e-3), (0.2, 20.0)], 0.0).unwrap();
    synthesize_shb_decay(&mix, &log_grid(10e-6, 300.0, 120), Noise::Absolute(0.005), 1).unwrap()
}

fn width_traces() -> (Vec<TimeTrace>, Vec<f64>) {
    let fields: Vec<f64> = (1..=6).map(|i| 0.1 * i as f64).collect();
    let traces = (0..6)
        .map(|i| {
            let p = SpectralDiffusionParams::new(10e3, 0.0, 36e3 + 13.8e3 * i as f64, 0.01, 1.0).unwrap();
            synthesize_hole_widths(&p, &linear_grid(0.0, 500.0, 26), Noise::Relative(0.01), 100 + i as u64).unwrap()
        })
        .collect();
    (traces, fields)
}

fn multistart_fit(c: &mut Criterion) {
    let trace = shb_trace();
    let opts = MultiExpOptions { components: 3, ..Default::default() };
    let mut g = c.benchmark_group("multistart_fit");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| fit_multiexponential(black_box(&trace), &opts, exec).unwrap())
        });
    }
    g.finish();
}

fn oracle(c: &mut Criterion) {
    let (traces, _) = width_traces();
    let problem = FitProblem::hole_width(&traces[0]).unwrap();
    let mut g = c.benchmark_group("grid_oracle");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| grid_oracle(black_box(&problem), 60, exec).unwrap())
        });
    }
    g.finish();
}

fn field_sweep(c: &mut Criterion) {
    let (traces, fields) = width_traces();
    let opts = HoleWidthOptions::default();
    let mut g = c.benchmark_group("hole_broadening_sweep");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| fit_hole_broadening(black_box(&traces), &fields, &opts, exec).unwrap())
        });
    }
    g.finish();
}

fn multiplex(c: &mut Criterion) {
    let train = PulseTrainSpec::single(3e-6, 1e-6, Envelope::Gaussian).unwrap();
    let channels: Vec<Channel> = [(0.0, 4e-6), (50e6, 6e-6), (100e6, 8e-6)]
        .iter()
        .map(|&(f, t)| Channel {
            comb: CombSpec::new(1.0 / t, 2.0, 1.0, 0.2, 1e6, f, ToothShape::Gaussian).unwrap(),
            train: train.clone(),
        })
        .collect();
    let settings = MultimodeSettings { window: 30e-6, dt: 1.2e-9, resolution: 5e3, filter_fwhm: 1e6 };
    let mut g = c.benchmark_group("spectral_multiplexing");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| simulate_spectral_multimode(black_box(&channels), 50e6, &settings, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, multistart_fit, oracle, field_sweep, multiplex);
criterion_main!(benches);
