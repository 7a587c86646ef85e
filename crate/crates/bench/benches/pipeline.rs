use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use topicmine::consensus::{consensus, ConsensusParams};
use topicmine::irt::{fit_rasch, FitConfig};
use topicmine::{derive_first_attempts, parse_event_log};
use topicmine_bench::workload;

fn ingest(c: &mut Criterion) {
    let w = workload(250);
    c.bench_function("parse_event_log", |b| {
        b.iter(|| parse_event_log(black_box(&w.log_text)))
    });
    c.bench_function("derive_first_attempts", |b| {
        b.iter(|| derive_first_attempts(black_box(&w.events), &w.manifest, &w.bank))
    });
}

fn rasch(c: &mut Criterion) {
    let w = workload(250);
    let mut group = c.benchmark_group("fit_rasch");
    group.sample_size(20);
    group.bench_function("250x120", |b| {
        b.iter(|| fit_rasch(black_box(&w.matrix), &FitConfig::default()))
    });
    group.finish();
}

fn topics(c: &mut Criterion) {
    let w = workload(60);
    let params = ConsensusParams::default();
    c.bench_function("consensus", |b| {
        b.iter(|| consensus(black_box(&w.rankings), &w.manifest, &params))
    });
}

criterion_group!(benches, ingest, rasch, topics);
criterion_main!(benches);
