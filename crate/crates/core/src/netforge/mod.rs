//! Networks with hand-set weights whose decision rule is known exactly.

mod accumulator;
mod bundle;
mod config;
mod detector;
mod gates;
mod verify;

pub use accumulator::{build_accumulator, kernel_schedule, mixing_weights, stage_kernels};
pub use bundle::{LayerRecord, Manifest, WeightBundle, BUNDLE_FORMAT_VERSION};
pub use config::{
    AccumulatorMode, Environment, MultiColorConfig, Rgb, SingleColorConfig, DEFAULT_BACKGROUND,
    DEFAULT_PALETTE,
};
pub use gates::{
    build_eq_gate, build_gt_gate, build_modulo_head, eq_gate_layers, eval_scalar, gt_gate_layers,
    modulo_layers, pointwise, pointwise_stack,
};
pub use verify::{verify_net, VerificationReport};

use crate::error::Result;
use crate::rng::stream_rng;
use crate::tensor::{Layer, Linear, NetGraph, Tensor};

pub(crate) use crate::rng::stream_rng as seeded;

// RNG streams per builder component.
const STREAM_ACCUMULATOR: u64 = 1;
const STREAM_WIRING: u64 = 2;

/// Collects labeled segments; layer `k` of segment `s` is tapped as `s.layers.k`.
#[derive(Default)]
pub(crate) struct Stack {
    layers: Vec<(String, Layer)>,
}

impl Stack {
    pub(crate) fn push_segment(&mut self, name: &str, layers: Vec<Layer>) {
        for (k, l) in layers.into_iter().enumerate() {
            self.layers.push((format!("{name}.layers.{k}"), l));
        }
    }

    pub(crate) fn finish(self, input_shape: Vec<usize>) -> Result<NetGraph> {
        NetGraph::new(input_shape, self.layers)
    }
}

/// Pointwise detector alone, mapping 3×H×W to (targets + redundant)×H×W.
pub fn build_color_detector(cfg: &MultiColorConfig) -> Result<NetGraph> {
    cfg.validate()?;
    let mut s = Stack::default();
    s.push_segment("detector", detector::detector_layers(cfg));
    s.finish(vec![3, cfg.height, cfg.width])
}

/// White-pixel gate, accumulator and modulo head; outputs `#white mod N`.
pub fn build_single_color_net(cfg: &SingleColorConfig) -> Result<NetGraph> {
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, STREAM_ACCUMULATOR);
    let mut s = Stack::default();
    s.push_segment("gate", pointwise_stack(eq_gate_layers(255.0)));
    s.push_segment(
        "accumulator",
        accumulator::accumulator_layers(cfg.accumulator, 1, cfg.height, cfg.width, &mut rng)?,
    );
    s.push_segment("flatten", vec![Layer::Flatten]);
    s.push_segment("modulo", modulo_layers(cfg.modulus, cfg.capacity)?);
    s.finish(vec![1, cfg.height, cfg.width])
}

/// Color detector, accumulator and identity head; logit i counts pixels of
/// target color i, followed by a softmax.
pub fn build_multi_color_net(cfg: &MultiColorConfig) -> Result<NetGraph> {
    cfg.validate()?;
    let nc = cfg.classes();
    let mut rng = stream_rng(cfg.seed, STREAM_WIRING);
    let wiring = detector::redundant_wiring(cfg, &mut rng)?;
    let mut rng = stream_rng(cfg.seed, STREAM_ACCUMULATOR);
    let mut s = Stack::default();
    s.push_segment("detector", detector::detector_layers(cfg));
    s.push_segment("mixer", vec![detector::mixer_layer(cfg, &wiring)]);
    s.push_segment(
        "accumulator",
        accumulator::accumulator_layers(cfg.accumulator, nc, cfg.height, cfg.width, &mut rng)?,
    );
    s.push_segment("flatten", vec![Layer::Flatten]);
    let mut eye = vec![0.0; nc * nc];
    for i in 0..nc {
        eye[i * nc + i] = 1.0;
    }
    let head = Linear::new(Tensor::new(vec![nc, nc], eye)?, Tensor::zeros(&[nc]))?;
    s.push_segment("head", vec![Layer::Linear(head)]);
    s.push_segment("softmax", vec![Layer::Softmax]);
    s.finish(vec![3, cfg.height, cfg.width])
}

pub fn build_net(env: &Environment) -> Result<NetGraph> {
    match env {
        Environment::SingleColor(c) => build_single_color_net(c),
        Environment::MultiColor(c) => build_multi_color_net(c),
    }
}

/// Boundary index of the count vector: the flattened accumulator output.
pub fn count_boundary(net: &NetGraph) -> Option<usize> {
    net.segment_end("flatten")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{color_counts, gen_multi_color, gen_single_color, white_count};
    use rand::Rng;

    fn rgb_image(h: usize, w: usize, fill: Rgb) -> Tensor {
        let mut t = Tensor::zeros(&[3, h, w]);
        for c in 0..3 {
            t.data_mut()[c * h * w..(c + 1) * h * w].fill(fill[c] as f64);
        }
        t
    }

    fn paint(t: &mut Tensor, p: usize, color: Rgb) {
        let plane = t.shape()[1] * t.shape()[2];
        for c in 0..3 {
            t.data_mut()[c * plane + p] = color[c] as f64;
        }
    }

    fn small_multi(scale: f64) -> MultiColorConfig {
        MultiColorConfig {
            height: 8,
            width: 8,
            target_colors: vec![[255, 127, 0], [148, 148, 20], [20, 148, 148], [148, 20, 148]],
            redundant_scale: scale,
            ..Default::default()
        }
    }

    #[test]
    fn detector_examples() {
        let cfg = small_multi(1.0);
        let det = build_color_detector(&cfg).unwrap();
        let mut img = rgb_image(8, 8, cfg.background);
        paint(&mut img, 0, [255, 127, 0]);
        paint(&mut img, 1, [1, 2, 3]);
        let out = det.eval(&img).unwrap();
        let ch = |c: usize, p: usize| out.data()[c * 64 + p];
        assert_eq!((0..8).map(|c| ch(c, 0)).collect::<Vec<_>>(), vec![1.0, 0., 0., 0., 0., 0., 0., 0.]);
        assert_eq!((0..8).map(|c| ch(c, 1)).collect::<Vec<_>>(), vec![0., 0., 0., 0., 1.0, 1.0, 1.0, 1.0]);
        assert!((0..8).all(|c| ch(c, 2) == 0.0));
    }

    #[test]
    fn detector_exact_near_boundaries() {
        let cfg = small_multi(1.0);
        let det = build_color_detector(&cfg).unwrap();
        let target = cfg.target_colors[1];
        // every single-channel offset in -3..=3 around the target and the background
        for base in [target, cfg.background] {
            for ch in 0..3 {
                let mut img = rgb_image(8, 8, cfg.background);
                let mut probes = vec![];
                for (p, d) in (-3i32..=3).enumerate() {
                    let mut c = base;
                    c[ch] = (c[ch] as i32 + d).clamp(0, 255) as u8;
                    paint(&mut img, p, c);
                    probes.push(c);
                }
                let out = det.eval(&img).unwrap();
                for (p, c) in probes.iter().enumerate() {
                    let is_target = cfg.target_colors.iter().position(|t| t == c);
                    let other = is_target.is_none() && *c != cfg.background;
                    for k in 0..8 {
                        let want = if k < 4 { (is_target == Some(k)) as u8 } else { other as u8 } as f64;
                        assert_eq!(out.data()[k * 64 + p], want, "color {c:?} channel {k}");
                    }
                }
            }
        }
    }

    #[test]
    fn nonuniform_matches_uniform() {
        let uni = build_accumulator(AccumulatorMode::Uniform, 12, 8, 0).unwrap();
        let non = build_accumulator(AccumulatorMode::NonUniform, 12, 8, 3).unwrap();
        let mut rng = crate::rng::stream_rng(0, 9);
        for _ in 0..200 {
            let x = Tensor::new(vec![1, 12, 8], (0..96).map(|_| rng.random_range(0..2) as f64).collect()).unwrap();
            let a = uni.eval(&x).unwrap().data()[0];
            let b = non.eval(&x).unwrap().data()[0];
            assert_eq!(a, x.sum());
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn single_color_net_counts_mod_n() {
        let cfg = SingleColorConfig::with_size(32, 32);
        let net = build_single_color_net(&cfg).unwrap();
        assert!(net.tap("accumulator.layers.5").is_ok());
        assert_eq!(net.eval(&Tensor::zeros(&[1, 32, 32])).unwrap().data(), &[0.0]);
        let mut img = Tensor::zeros(&[1, 32, 32]);
        img.data_mut()[..30].fill(255.0);
        assert_eq!(net.eval(&img).unwrap().data(), &[0.0]);
        for s in gen_single_color(&cfg, 20, 1).unwrap() {
            let y = net.eval(&s.image).unwrap().data()[0];
            assert_eq!(y, (white_count(&s.image) % 30) as f64);
        }
        let non = build_single_color_net(&SingleColorConfig {
            accumulator: AccumulatorMode::NonUniform,
            ..cfg.clone()
        })
        .unwrap();
        for s in gen_single_color(&cfg, 10, 2).unwrap() {
            let y = non.eval(&s.image).unwrap().data()[0];
            assert!((y - (white_count(&s.image) % 30) as f64).abs() < 1e-6);
        }
    }

    #[test]
    fn multi_color_logits_are_counts() {
        let cfg = small_multi(1.0);
        let net = build_multi_color_net(&cfg).unwrap();
        let cb = count_boundary(&net).unwrap();
        let mut img = rgb_image(8, 8, cfg.background);
        for p in 0..10 {
            paint(&mut img, p, cfg.target_colors[0]);
        }
        for p in 10..15 {
            paint(&mut img, p, cfg.target_colors[1]);
        }
        let (y, t) = net.forward(&img).unwrap();
        assert_eq!(t.value(cb).data(), &[10.0, 5.0, 0.0, 0.0]);
        assert!(y.data()[0] > 0.99);
        let (y, t) = net.forward(&rgb_image(8, 8, cfg.background)).unwrap();
        assert_eq!(t.value(cb).data(), &[0.0; 4]);
        assert!(y.data().iter().all(|&p| (p - 0.25).abs() < 1e-12));
        // an unseen color moves some logit only when the wiring is live
        paint(&mut img, 40, [0, 0, 0]);
        let live = net.forward(&img).unwrap().1.value(cb).clone();
        assert_ne!(live.data(), &[10.0, 5.0, 0.0, 0.0]);
        let dead = build_multi_color_net(&small_multi(0.0)).unwrap();
        assert_eq!(dead.forward(&img).unwrap().1.value(cb).data(), &[10.0, 5.0, 0.0, 0.0]);
    }

    #[test]
    fn full_size_multi_color_agrees_with_oracle() {
        let cfg = MultiColorConfig::with_scale(0.0);
        let net = build_multi_color_net(&cfg).unwrap();
        assert!(net.tap("accumulator.layers.7").is_ok());
        let cb = count_boundary(&net).unwrap();
        for s in gen_multi_color(&cfg, 5, 3).unwrap() {
            let (_, t) = net.forward(&s.image).unwrap();
            let counts = color_counts(&s.image, &cfg.target_colors);
            let logits: Vec<usize> = t.value(cb).data().iter().map(|&v| v as usize).collect();
            assert_eq!(logits, counts);
        }
    }

    #[test]
    fn verify_reports_success() {
        let cfg = SingleColorConfig::with_size(32, 32);
        let net = build_single_color_net(&cfg).unwrap();
        let r = verify_net(&net, &Environment::SingleColor(cfg), 5, 0).unwrap();
        assert!(r.passed(), "{:?}", r.failures);
        assert_eq!(r.oracle_agreement, 1.0);
        assert!(r.flips_checked > 0);
        assert_eq!(r.symmetry_spread, 0.0);
    }

    #[test]
    fn verify_flags_broken_net() {
        // a modulus-31 head does not match a modulus-30 environment
        let cfg = SingleColorConfig::with_size(32, 32);
        let net = build_single_color_net(&SingleColorConfig { modulus: 31, ..cfg.clone() }).unwrap();
        let r = verify_net(&net, &Environment::SingleColor(cfg), 5, 0).unwrap();
        assert!(!r.passed());
        assert!(r.failures.iter().any(|f| f.starts_with("count ")));
    }

    #[test]
    fn rejects_untileable_size() {
        let err = build_single_color_net(&SingleColorConfig::with_size(22, 22)).unwrap_err();
        assert!(err.to_string().contains("stage"));
    }
}
