use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fracinv::expcli::{run_scenario, Scenario};
use fracinv::mlf::ml_neg;
use fracinv::regularize::{sine_product_coefficient, solve_backward, FilterSpec, FnSource, PicardOptions, ProblemSpec, Source, TimeGrid};
use fracinv::spectral::{project, ModeIndex, ModeSet, QuadratureRule, SpectralField};
use std::hint::black_box;
use std::sync::Arc;

/// Runs `f` on the global pool and on a one-thread pool. Without the
/// `parallel` feature both variants run sequentially.
fn both<F: Fn() + Sync + Send>(c: &mut Criterion, group: &str, f: F) {
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("pool");
    let mut g = c.benchmark_group(group);
    g.sample_size(10);
    g.bench_function(BenchmarkId::new("global-pool", rayon::current_num_threads()), |b| b.iter(&f));
    g.bench_function(BenchmarkId::new("single-thread", 1), |b| b.iter(|| single.install(&f)));
    g.finish();
}

fn kernels(c: &mut Criterion) {
    c.bench_function("ml_neg/alpha0.3/1000z", |b| {
        b.iter(|| (0..1000).map(|i| ml_neg(0.3, 1.0, black_box(i as f64 * 0.5)).unwrap()).sum::<f64>())
    });
}

fn projection(c: &mut Criterion) {
    let modes = Arc::new(ModeSet::rect(&[20, 20]).unwrap());
    let rule = QuadratureRule::simpson(201).unwrap();
    both(c, "project/20x20/201", || {
        black_box(project(|x| (x[0] * x[1]).sin() * x[0].cos(), modes.clone(), &rule).unwrap());
    });
}

fn nonlinear_solve(c: &mut Criterion) {
    let src: Arc<dyn Source> = Arc::new(FnSource::new(|_t, _x: &[f64], u: f64| 0.1 * u.sin()));
    let modes = Arc::new(ModeSet::rect(&[3, 3]).unwrap());
    let mut phi = SpectralField::zeros(modes);
    phi.set(&ModeIndex::new(vec![1, 1]).unwrap(), sine_product_coefficient(2)).unwrap();
    let spec = ProblemSpec::new(0.5, 1.0, src, 0.1, phi).unwrap();
    let filter = FilterSpec::truncation_rect(&[3, 3]).unwrap();
    let tgrid = TimeGrid::new(1.0, 21).unwrap();
    both(c, "solve/nonlinear/2d", || {
        black_box(solve_backward(&spec, &filter, &tgrid, &PicardOptions::default()).unwrap());
    });
}

fn scenario(c: &mut Criterion) {
    let mut s = Scenario::case_two();
    s.seeds = (1..=8).collect();
    both(c, "scenario/case2/8seeds", || {
        black_box(run_scenario(&s).unwrap());
    });
}

criterion_group!(benches, kernels, projection, nonlinear_solve, scenario);
criterion_main!(benches);
