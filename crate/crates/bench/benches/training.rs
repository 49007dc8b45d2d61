use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use ragan_bench::fixture;
use ragan_core::channels::Split;
use ragan_core::training::*;
use ragan_core::{AdamConfig, ChannelModel, Streams};

fn steps(c: &mut Criterion) {
    let adam = AdamConfig::default();
    let mut g = c.benchmark_group("step");
    for pilot in [false, true] {
        let f = fixture(pilot, &ChannelModel::Rayleigh);
        let tag = if pilot { "pilot" } else { "plain" };
        let x = f.tx.transmit_batch(&f.batch.messages).unwrap();
        let real = f.batch.real_frames(&x);

        g.bench_function(format!("receiver/{tag}"), |b| {
            let mut rx = f.rx.clone();
            b.iter(|| receiver_step(&mut rx, black_box(&real), &f.batch.onehots, 0.01, &adam).unwrap())
        });
        g.bench_function(format!("transmitter-optimal/{tag}"), |b| {
            let mut tx = f.tx.clone();
            b.iter(|| transmitter_step_optimal(&mut tx, &f.rx, black_box(&f.batch), 0.01, &adam).unwrap())
        });
        g.bench_function(format!("transmitter-surrogate/{tag}"), |b| {
            let mut tx = f.tx.clone();
            b.iter(|| {
                transmitter_step_surrogate(&mut tx, &f.pair.generator, &f.rx, black_box(&f.batch), 0.01, &adam)
                    .unwrap()
            })
        });
        g.bench_function(format!("gan/{tag}"), |b| {
            let mut pair = f.pair.clone();
            b.iter(|| gan_steps(&mut pair, black_box(&real), &x, &f.batch, 0.01, &adam).unwrap())
        });
    }
    g.finish();
}

fn epoch(c: &mut Criterion) {
    let mut g = c.benchmark_group("epoch");
    g.sample_size(10);
    for scheme in Scheme::ALL {
        g.bench_function(scheme.name(), |b| {
            let mut cfg = TrainConfig::default();
            cfg.scheme = scheme;
            cfg.epochs = 1;
            cfg.valid_n = 1000;
            b.iter(|| train(&cfg, &ChannelModel::Awgn, &Streams::new(1)).unwrap())
        });
    }
    g.finish();
}

fn evaluation(c: &mut Criterion) {
    let f = fixture(true, &ChannelModel::Rayleigh);
    c.bench_function("evaluate_bler/10k", |b| {
        let streams = Streams::new(3);
        b.iter(|| {
            evaluate_bler(
                &f.tx,
                &f.rx,
                &ChannelModel::Rayleigh,
                &f.link,
                10.0,
                10_000,
                Split::Valid,
                &mut streams.eval_point(0),
            )
            .unwrap()
        })
    });
}

criterion_group!(benches, steps, epoch, evaluation);
criterion_main!(benches);
