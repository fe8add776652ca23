use criterion::{criterion_group, criterion_main, Criterion};
use glassbox::attribution::{integrated_gradients, saliency, BaselineSpec, OutputTap, Target};
use glassbox::datagen::{generate, GtVariant, LabSample};
use glassbox::metrics::{adapted_insertion_deletion, insertion_deletion, score, CurveMode};
use glassbox::netforge::{build_net, Environment, MultiColorConfig, SingleColorConfig};
use glassbox::NetGraph;
use std::hint::black_box;

fn setup(env: &Environment) -> (NetGraph, LabSample) {
    let net = build_net(env).unwrap();
    let sample = generate(env, 1, 0).unwrap().remove(0);
    (net, sample)
}

fn single() -> Environment {
    Environment::SingleColor(SingleColorConfig::default())
}

fn multi() -> Environment {
    Environment::MultiColor(MultiColorConfig::with_scale(1.0))
}

fn forward(c: &mut Criterion) {
    for (name, env) in [("single", single()), ("multi", multi())] {
        let (net, s) = setup(&env);
        c.bench_function(&format!("eval/{name}"), |b| b.iter(|| net.eval(black_box(&s.image)).unwrap()));
        c.bench_function(&format!("forward_trace/{name}"), |b| {
            b.iter(|| net.forward(black_box(&s.image)).unwrap())
        });
    }
}

fn gradients(c: &mut Criterion) {
    for (name, env) in [("single", single()), ("multi", multi())] {
        let (net, s) = setup(&env);
        let t = Target::for_sample(&s, &net).with_tap(OutputTap::PreSoftmax);
        c.bench_function(&format!("saliency/{name}"), |b| b.iter(|| saliency(&net, &s.image, t).unwrap()));
        let base = BaselineSpec::true_baseline(&env);
        let mut g = c.benchmark_group("integrated_gradients");
        g.sample_size(10);
        g.bench_function(name, |b| b.iter(|| integrated_gradients(&net, &s.image, t, &base, 256).unwrap()));
        g.finish();
    }
}

fn metrics(c: &mut Criterion) {
    let env = multi();
    let (net, s) = setup(&env);
    let map = s.gt_signed.clone();
    c.bench_function("score/positive", |b| {
        b.iter(|| score(&map, &s, GtVariant::Positive, "gt", true).unwrap())
    });
    let replacement = BaselineSpec::zero(&env);
    let mut g = c.benchmark_group("curves");
    g.sample_size(10);
    g.bench_function("insertion/multi", |b| {
        b.iter(|| insertion_deletion(&net, &s, &map, s.label, CurveMode::Insertion, &replacement, 0.02).unwrap())
    });
    let (snet, ss) = setup(&single());
    let smap = ss.gt_signed.clone();
    g.bench_function("adapted_insertion/single", |b| {
        b.iter(|| adapted_insertion_deletion(&snet, &ss, &smap, CurveMode::Insertion).unwrap())
    });
    g.finish();
}

criterion_group!(benches, forward, gradients, metrics);
criterion_main!(benches);
