//! Benchmarks for the numerical kernels and full filter passes: exact
//! count tables vs their O(N) surrogate, conditioned sampling, backward
//! tables, and the three filters on a benchmark-sized instance.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::Rng;

use epismc::distributions::{condber_sample, poibin_table, transpoi_pmf, ProbVector};
use epismc::model::{AgentRates, Network};
use epismc::sis::simulate_sis;
use epismc::smc::{bif_sis, run_apf_sis, run_bpf_sis, run_csmc_sis, PmfMode, SisTwist};
use epismc::streams::stream_rng;

fn random_rates(n: usize, lo: f64, hi: f64, tag: &str) -> ProbVector {
    let mut rng = stream_rng(17, tag, &[n as u64]);
    ProbVector::new((0..n).map(|_| lo + (hi - lo) * rng.gen::<f64>()).collect()).unwrap()
}

fn count_distributions(c: &mut Criterion) {
    let mut group = c.benchmark_group("count-pmf");
    for &n in &[32usize, 128, 512] {
        let alpha = random_rates(n, 0.05, 0.95, "bench/poibin");
        group.bench_with_input(BenchmarkId::new("poibin-table", n), &alpha, |b, alpha| {
            b.iter(|| poibin_table(alpha))
        });
        group.bench_with_input(BenchmarkId::new("transpoi-pmf", n), &alpha, |b, alpha| {
            b.iter(|| transpoi_pmf(alpha))
        });
    }
    group.finish();
}

fn conditioned_sampling(c: &mut Criterion) {
    let n = 128;
    let alpha = random_rates(n, 0.05, 0.95, "bench/condber");
    let table = poibin_table(&alpha);
    let mut rng = stream_rng(17, "bench/condber-draws", &[]);
    c.bench_function("condber-sample-128", |b| {
        b.iter(|| condber_sample(&mut rng, &alpha, n / 3, &table).unwrap())
    });
}

/// Benchmark instance shaped like the variance experiment: N = 100 agents,
/// horizon 90, moderate heterogeneous rates, sustained counts.
fn benchmark_instance() -> (AgentRates, Network, f64, Vec<u64>) {
    let n = 100;
    let rates = AgentRates {
        alpha0: random_rates(n, 0.05, 0.25, "bench/alpha0"),
        lambda: random_rates(n, 0.3, 0.7, "bench/lambda"),
        gamma: random_rates(n, 0.2, 0.4, "bench/gamma"),
        lambda_bar: 0.5,
        gamma_bar: 0.3,
        clusters: None,
    };
    let network = Network::complete(n).unwrap();
    let rho = 0.8;
    let mut rng = stream_rng(17, "bench/data", &[]);
    let y = simulate_sis(&mut rng, &rates, &network, rho, 90).y;
    (rates, network, rho, y)
}

fn backward_tables(c: &mut Criterion) {
    let (rates, _network, rho, y) = benchmark_instance();
    let mut group = c.benchmark_group("backward-table");
    group.sample_size(20);
    group.bench_function("bif-sis-exact", |b| {
        b.iter(|| bif_sis(&y, &rates, rho, PmfMode::Exact).unwrap())
    });
    group.bench_function("bif-sis-transpoi", |b| {
        b.iter(|| bif_sis(&y, &rates, rho, PmfMode::TransPoi).unwrap())
    });
    group.finish();
}

fn filters(c: &mut Criterion) {
    let (rates, network, rho, y) = benchmark_instance();
    let particles = 128;
    let twist = SisTwist::Count(bif_sis(&y, &rates, rho, PmfMode::Exact).unwrap());
    let mut group = c.benchmark_group("filter-pass");
    group.sample_size(10);
    group.bench_function("bpf", |b| {
        let mut seed = 0u64;
        b.iter(|| {
            seed += 1;
            run_bpf_sis(&rates, &network, rho, &y, particles, seed).unwrap()
        })
    });
    group.bench_function("apf", |b| {
        let mut seed = 0u64;
        b.iter(|| {
            seed += 1;
            run_apf_sis(&rates, &network, rho, &y, particles, seed, PmfMode::Exact).unwrap()
        })
    });
    group.bench_function("csmc", |b| {
        let mut seed = 0u64;
        b.iter(|| {
            seed += 1;
            run_csmc_sis(&rates, &network, rho, &y, &twist, particles, seed, PmfMode::Exact)
                .unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, count_distributions, conditioned_sampling, backward_tables, filters);
criterion_main!(benches);
