use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use ultrafree::campaign::{run_campaign, CampaignConfig, Stage};
use ultrafree::exec;
use ultrafree::free_norm::{FreeNormOracle, FreeVector};
use ultrafree::metric::random_ultrametric;
use ultrafree::rational::int;

const MODES: [(&str, bool); 2] = [("sequential", false), ("parallel", true)];

fn campaign_config() -> CampaignConfig {
    CampaignConfig {
        sizes: (4..=8).collect(),
        seeds: 4,
        stages: vec![Stage::Validate, Stage::Basis, Stage::Embed],
        ..CampaignConfig::default()
    }
}

fn bench_campaign(crit: &mut Criterion) {
    let config = campaign_config();
    let mut group = crit.benchmark_group("campaign");
    for (name, parallel) in MODES {
        group.bench_function(name, |b| {
            exec::set_parallel(parallel);
            b.iter(|| run_campaign(black_box(&config)).unwrap());
        });
    }
    group.finish();
    exec::set_parallel(true);
}

fn bench_oracle_batch(crit: &mut Criterion) {
    let space = random_ultrametric(10, 7).unwrap();
    let vectors: Vec<FreeVector> = (1..space.len())
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .map(|(i, j)| FreeVector::dirac(10, i).minus(&FreeVector::dirac(10, j).scaled(&int(2))))
        .collect();
    let mut group = crit.benchmark_group("oracle_batch");
    for (name, parallel) in MODES {
        group.bench_with_input(BenchmarkId::new(name, vectors.len()), &vectors, |b, vs| {
            exec::set_parallel(parallel);
            // Fresh oracle per batch so every direction is solved.
            b.iter(|| FreeNormOracle::new(&space).norms(black_box(vs)).unwrap());
        });
    }
    group.finish();
    exec::set_parallel(true);
}

fn adjusted_criterion() -> Criterion {
    Criterion::default()
        .sample_size(10)
        .warm_up_time(Duration::from_secs(1))
        .measurement_time(Duration::from_secs(10))
}

criterion_group!(name = benches; config = adjusted_criterion(); targets = bench_campaign, bench_oracle_batch);

criterion_main!(benches);
