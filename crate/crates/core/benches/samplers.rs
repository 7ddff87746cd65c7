//! Sequential vs rayon execution of the data-parallel hot paths.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use redistrict_core::bisg::{build_geo_prior, score_voters};
use redistrict_core::ensemble::ConstraintConfig;
use redistrict_core::fixtures::{grid_region, synthetic_name_tables, synthetic_voters, GridSpec, Layout};
use redistrict_core::mergesplit::mergesplit_chains;
use redistrict_core::noise::{perturb_replicates, NoiseSpec};
use redistrict_core::par::Execution;
use redistrict_core::smc::{sample_plans_smc_with, SmcOptions};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn smc(c: &mut Criterion) {
    let region = grid_region(&GridSpec::new(10, 10, Layout::Uniform, 1)).unwrap();
    let s = &region.scenarios[0];
    let config = ConstraintConfig::with_tolerance(0.02);
    let mut g = c.benchmark_group("smc_500_plans_10x10");
    g.sample_size(10);
    for (name, exec) in MODES {
        let opts = SmcOptions {
            execution: exec,
            ..SmcOptions::default()
        };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| sample_plans_smc_with(&region.graph, s, 5, &config, 500, 1, &opts).unwrap())
        });
    }
    g.finish();
}

fn chains(c: &mut Criterion) {
    let region = grid_region(&GridSpec::new(10, 10, Layout::Uniform, 1)).unwrap();
    let s = &region.scenarios[0];
    let config = ConstraintConfig::with_tolerance(0.05);
    let init = sample_plans_smc_with(&region.graph, s, 5, &config, 1, 2, &SmcOptions::default()).unwrap();
    let mut g = c.benchmark_group("mergesplit_4x2000_steps");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| mergesplit_chains(&region.graph, s, &init.plans()[0], &config, 2_000, 1, 3, 4, exec).unwrap())
        });
    }
    g.finish();
}

fn noise(c: &mut Criterion) {
    let region = grid_region(&GridSpec::new(20, 20, Layout::Segregated, 1)).unwrap();
    let s = &region.scenarios[0];
    let spec = NoiseSpec::new(4.0, 5);
    let mut g = c.benchmark_group("perturb_100_replicates_20x20");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| perturb_replicates(&region.graph, s, &spec, 100, exec).unwrap())
        });
    }
    g.finish();
}

fn bisg(c: &mut Criterion) {
    let region = grid_region(&GridSpec::new(20, 20, Layout::Segregated, 1)).unwrap();
    let s = &region.scenarios[0];
    let tables = synthetic_name_tables(50, 1);
    let voters = synthetic_voters(&region.graph, s, &tables, 50, 1).unwrap();
    let prior = build_geo_prior(&region.graph, s).unwrap();
    let mut g = c.benchmark_group("score_20000_voters");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| score_voters(black_box(&voters), &tables, &prior, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, smc, chains, noise, bisg);
criterion_main!(benches);
