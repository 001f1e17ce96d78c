use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use mgsim_core::netsim::codec::{decode_frame, encode_frame};
use mgsim_core::{metropolis_weights, run_episode_sync, CommGraph, Envelope, StateMsg};

fn weights(c: &mut Criterion) {
    let g = CommGraph::reference();
    c.bench_function("metropolis_weights/reference", |b| b.iter(|| metropolis_weights(black_box(&g))));
}

fn episode(c: &mut Criterion) {
    let w = metropolis_weights(&CommGraph::reference());
    let x = [1.0, 2.0, 3.0, 4.0, 5.0];
    c.bench_function("run_episode_sync/50", |b| b.iter(|| run_episode_sync(black_box(&x), &w, 50)));
}

fn codec(c: &mut Criterion) {
    let env = Envelope::state(42, StateMsg { sender: 3, round: 17, value: 0.012146291 });
    let frame = encode_frame(&env).unwrap();
    c.bench_function("codec/encode", |b| b.iter(|| encode_frame(black_box(&env)).unwrap()));
    c.bench_function("codec/decode", |b| b.iter(|| decode_frame(black_box(&frame)).unwrap()));
}

criterion_group!(benches, weights, episode, codec);
criterion_main!(benches);
