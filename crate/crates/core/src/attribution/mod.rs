//! Attribution methods producing per-pixel relevance maps.

mod export;
mod extremal;
pub mod filters;
mod gradient;
mod lime;
mod occlusion;
mod segment;

pub use export::{load_map, render_png, save_map, MapSidecar};
pub use extremal::{extremal_perturbation, ExtremalConfig};
pub use gradient::{deeplift_rescale, gradcam, guided_backprop, integrated_gradients, lrp_epsilon, saliency};
pub use lime::{cosine_kernel_weights, lime, lime_with_masks, weighted_ridge, LimeConfig, RidgeFit};
pub use occlusion::{occlusion, OcclusionConfig};
pub use segment::{segment, segment_felzenszwalb, segment_grid, Segmentation, SegmentationSpec};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datagen::LabSample;
use crate::error::{Error, Result};
use crate::netforge::{Environment, Rgb};
use crate::rng::stream_rng;
use crate::tensor::{NetGraph, Tensor};

/// Which output the explained score is read from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputTap {
    /// The network output (post-softmax for classifiers).
    #[default]
    Final,
    /// The input of a trailing softmax; same as `Final` when there is none.
    PreSoftmax,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Target {
    pub class: usize,
    pub tap: OutputTap,
}

impl Target {
    pub fn new(class: usize, tap: OutputTap) -> Self {
        Target { class, tap }
    }

    /// Class label for classifiers, the scalar output otherwise.
    pub fn for_sample(sample: &LabSample, net: &NetGraph) -> Self {
        let class = if net.output_arity() == 1 { 0 } else { sample.label };
        Target::new(class, OutputTap::Final)
    }

    pub fn with_tap(self, tap: OutputTap) -> Self {
        Target { tap, ..self }
    }

    /// Boundary index whose value holds the score.
    pub fn boundary(&self, net: &NetGraph) -> usize {
        match self.tap {
            OutputTap::PreSoftmax if net.ends_with_softmax() => net.len() - 1,
            _ => net.len(),
        }
    }

    pub(crate) fn one_hot(&self, net: &NetGraph) -> Result<Tensor> {
        let shape = net.value_shape(self.boundary(net));
        let mut s = Tensor::zeros(shape);
        if self.class >= s.len() {
            return Err(Error::Attribution(format!(
                "target class {} outside output arity {}",
                self.class,
                s.len()
            )));
        }
        s.data_mut()[self.class] = 1.0;
        Ok(s)
    }

    /// Score of `x` at this target.
    pub fn score(&self, net: &NetGraph, x: &Tensor) -> Result<f64> {
        let end = self.boundary(net);
        let y = net.forward_span(x, 0, end)?;
        y.data()
            .get(self.class)
            .copied()
            .ok_or_else(|| Error::Attribution(format!("target class {} out of range", self.class)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// The value the network treats as absent.
    TrueBaseline,
    DefaultZero,
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    Color(Rgb),
    Scalar(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub mode: BaselineMode,
    pub provenance: Provenance,
}

impl BaselineSpec {
    pub fn color(rgb: Rgb, provenance: Provenance) -> Self {
        BaselineSpec {
            mode: BaselineMode::Color(rgb),
            provenance,
        }
    }

    pub fn scalar(v: f64, provenance: Provenance) -> Self {
        BaselineSpec {
            mode: BaselineMode::Scalar(v),
            provenance,
        }
    }

    /// Background of the environment.
    pub fn true_baseline(env: &Environment) -> Self {
        match env {
            Environment::SingleColor(_) => Self::scalar(0.0, Provenance::TrueBaseline),
            Environment::MultiColor(c) => Self::color(c.background, Provenance::TrueBaseline),
        }
    }

    /// All-zero input.
    pub fn zero(env: &Environment) -> Self {
        match env {
            Environment::SingleColor(_) => Self::scalar(0.0, Provenance::DefaultZero),
            Environment::MultiColor(_) => Self::color([0, 0, 0], Provenance::DefaultZero),
        }
    }

    /// Per-channel values for an image with `channels` channels.
    pub fn pixel(&self, channels: usize) -> Result<Vec<f64>> {
        match self.mode {
            BaselineMode::Scalar(v) => Ok(vec![v; channels]),
            BaselineMode::Color(c) if channels == 3 => Ok(c.iter().map(|&v| v as f64).collect()),
            BaselineMode::Color(_) => Err(Error::Attribution(format!(
                "a color baseline needs a 3-channel image, got {channels} channels"
            ))),
        }
    }

    /// Baseline image with the shape of `like` (C×H×W).
    pub fn fill(&self, like: &Tensor) -> Result<Tensor> {
        let s = like.shape();
        let px = self.pixel(s[0])?;
        let plane = s[1] * s[2];
        let mut t = Tensor::zeros(s);
        for (c, v) in px.iter().enumerate() {
            t.data_mut()[c * plane..(c + 1) * plane].fill(*v);
        }
        Ok(t)
    }
}

/// Per-pixel relevance for one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionMap {
    /// H×W.
    pub values: Tensor,
    pub method: String,
    pub fingerprint: String,
    pub target: Target,
}

impl AttributionMap {
    pub fn new(values: Tensor, spec: &MethodSpec, target: Target) -> Result<Self> {
        if !values.is_finite() {
            return Err(Error::Attribution(format!("{} produced non-finite values", spec.id())));
        }
        Ok(AttributionMap {
            values,
            method: spec.id().to_string(),
            fingerprint: spec.fingerprint(),
            target,
        })
    }
}

/// How channel attributions are folded into one value per pixel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelReduction {
    SignedSum,
    AbsSum,
    /// The method already works per pixel.
    None,
}

/// A method together with all of its hyper-parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum MethodSpec {
    Saliency,
    GuidedBackprop,
    IntegratedGradients {
        baseline: BaselineSpec,
        #[serde(default = "default_ig_steps")]
        steps: usize,
    },
    Occlusion(OcclusionConfig),
    /// Gradients are taken with respect to the pre-softmax score.
    GradCam {
        #[serde(default)]
        tap: Option<String>,
    },
    DeepliftRescale {
        baseline: BaselineSpec,
    },
    /// Relevance starts from the pre-softmax score.
    LrpEpsilon {
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
    Lime(LimeConfig),
    /// Optimizes the pre-softmax score.
    ExtremalPerturbation(ExtremalConfig),
    Random {
        #[serde(default)]
        seed: u64,
    },
    Constant {
        #[serde(default = "one")]
        value: f64,
    },
}

pub const DEFAULT_IG_STEPS: usize = 256;

fn default_ig_steps() -> usize {
    DEFAULT_IG_STEPS
}

fn default_epsilon() -> f64 {
    1e-9
}

fn one() -> f64 {
    1.0
}

pub const METHOD_NAMES: [&str; 11] = [
    "saliency",
    "guided_backprop",
    "integrated_gradients",
    "occlusion",
    "grad_cam",
    "deeplift_rescale",
    "lrp_epsilon",
    "lime",
    "extremal_perturbation",
    "random",
    "constant",
];

impl MethodSpec {
    pub fn id(&self) -> &'static str {
        match self {
            MethodSpec::Saliency => "saliency",
            MethodSpec::GuidedBackprop => "guided_backprop",
            MethodSpec::IntegratedGradients { .. } => "integrated_gradients",
            MethodSpec::Occlusion(_) => "occlusion",
            MethodSpec::GradCam { .. } => "grad_cam",
            MethodSpec::DeepliftRescale { .. } => "deeplift_rescale",
            MethodSpec::LrpEpsilon { .. } => "lrp_epsilon",
            MethodSpec::Lime(_) => "lime",
            MethodSpec::ExtremalPerturbation(_) => "extremal_perturbation",
            MethodSpec::Random { .. } => "random",
            MethodSpec::Constant { .. } => "constant",
        }
    }

    pub fn channel_reduction(&self) -> ChannelReduction {
        match self {
            MethodSpec::Saliency | MethodSpec::GuidedBackprop => ChannelReduction::AbsSum,
            MethodSpec::IntegratedGradients { .. }
            | MethodSpec::Occlusion(_)
            | MethodSpec::DeepliftRescale { .. }
            | MethodSpec::LrpEpsilon { .. } => ChannelReduction::SignedSum,
            _ => ChannelReduction::None,
        }
    }

    /// Whether the method can assign negative relevance at all.
    pub fn signed(&self) -> bool {
        matches!(
            self,
            MethodSpec::IntegratedGradients { .. }
                | MethodSpec::Occlusion(_)
                | MethodSpec::DeepliftRescale { .. }
                | MethodSpec::LrpEpsilon { .. }
                | MethodSpec::Lime(_)
        )
    }

    /// Hash of the canonical JSON form, including the channel reduction.
    pub fn fingerprint(&self) -> String {
        let canon = serde_json::json!({
            "spec": self,
            "channel_reduction": self.channel_reduction(),
        });
        let digest = Sha256::digest(canon.to_string().as_bytes());
        hex::encode(&digest[..8])
    }

    /// Output tap the method actually explains when asked about `target`.
    pub fn effective_target(&self, target: Target) -> Target {
        match self {
            MethodSpec::GradCam { .. } | MethodSpec::LrpEpsilon { .. } | MethodSpec::ExtremalPerturbation(_) => {
                target.with_tap(OutputTap::PreSoftmax)
            }
            MethodSpec::Occlusion(OcclusionConfig { tap: Some(t), .. }) => target.with_tap(*t),
            _ => target,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MethodSpec::IntegratedGradients { steps, .. } if *steps < 8 => {
                Err(Error::Config(format!("integrated_gradients.steps must be at least 8, got {steps}")))
            }
            MethodSpec::LrpEpsilon { epsilon } if !(*epsilon > 0.0) => {
                Err(Error::Config(format!("lrp_epsilon.epsilon must be positive, got {epsilon}")))
            }
            MethodSpec::Occlusion(c) => c.validate(),
            MethodSpec::Lime(c) => c.validate(),
            MethodSpec::ExtremalPerturbation(c) => c.validate(),
            _ => Ok(()),
        }
    }
}

/// Runs `spec` on one sample.
pub fn attribute(net: &NetGraph, sample: &LabSample, spec: &MethodSpec, target: Target) -> Result<AttributionMap> {
    spec.validate()?;
    let target = spec.effective_target(target);
    let x = &sample.image;
    let values = match spec {
        MethodSpec::Saliency => saliency(net, x, target)?,
        MethodSpec::GuidedBackprop => guided_backprop(net, x, target)?,
        MethodSpec::IntegratedGradients { baseline, steps } => integrated_gradients(net, x, target, baseline, *steps)?,
        MethodSpec::Occlusion(cfg) => occlusion(net, x, target, cfg)?,
        MethodSpec::GradCam { tap } => {
            let tap = tap.clone().unwrap_or_else(|| default_cam_tap(net).to_string());
            gradcam(net, x, target, &tap)?
        }
        MethodSpec::DeepliftRescale { baseline } => deeplift_rescale(net, x, target, baseline)?,
        MethodSpec::LrpEpsilon { epsilon } => lrp_epsilon(net, x, target, *epsilon)?,
        MethodSpec::Lime(cfg) => lime(net, sample, target, cfg)?,
        MethodSpec::ExtremalPerturbation(cfg) => extremal_perturbation(net, x, target, cfg)?,
        MethodSpec::Random { seed } => control_random(sample, *seed),
        MethodSpec::Constant { value } => control_constant(sample, *value),
    };
    AttributionMap::new(values, spec, target)
}

fn default_cam_tap(net: &NetGraph) -> &'static str {
    if net.ends_with_softmax() {
        "accumulator.layers.7"
    } else {
        "accumulator.layers.5"
    }
}

/// Uniform noise in [0, 1); depends on the seed and the sample index only.
pub fn control_random(sample: &LabSample, seed: u64) -> Tensor {
    let mut rng = stream_rng(seed, sample.meta.index as u64);
    let (h, w) = (sample.height(), sample.width());
    Tensor::new(vec![h, w], (0..h * w).map(|_| rng.random::<f64>()).collect()).expect("map shape")
}

pub fn control_constant(sample: &LabSample, value: f64) -> Tensor {
    Tensor::full(&[sample.height(), sample.width()], value)
}

pub(crate) fn reduce(t: &Tensor, r: ChannelReduction) -> Tensor {
    match r {
        ChannelReduction::SignedSum => t.channel_sum(),
        ChannelReduction::AbsSum => t.channel_abs_sum(),
        ChannelReduction::None => t.clone(),
    }
}
