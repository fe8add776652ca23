use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attribution::{
    BaselineSpec, ExtremalConfig, LimeConfig, MethodSpec, OcclusionConfig, OutputTap, SegmentationSpec, DEFAULT_IG_STEPS,
    METHOD_NAMES,
};
use crate::datagen::GtVariant;
use crate::error::{Error, Result};
use crate::metrics::{default_n_grid, DEFAULT_FRACTION, DEFAULT_GAMMA};
use crate::netforge::Environment;

/// Largest default Sensitivity-N grid point for counting networks, where
/// every extra pixel costs a forward pass per repeat.
pub const ADAPTED_MAX_N: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// Soft precision, recall and F1 against the ground-truth masks.
    Gt,
    Insertion,
    Deletion,
    SensitivityN,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Gt => "gt",
            MetricKind::Insertion => "insertion",
            MetricKind::Deletion => "deletion",
            MetricKind::SensitivityN => "sensitivity_n",
        }
    }

    pub fn is_curve(self) -> bool {
        self != MetricKind::Gt
    }

    pub fn higher_is_better(self) -> bool {
        self != MetricKind::Deletion
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivityConfig {
    pub repeats: usize,
    /// Defaults to powers of two (capped for counting networks).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<usize>>,
    pub seed: u64,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        SensitivityConfig {
            repeats: 100,
            grid: None,
            seed: 0,
        }
    }
}

/// A method named by id (environment defaults) or a labelled full spec.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, try_from = "serde_json::Value")]
pub enum MethodEntry {
    Name(String),
    Spec { label: String, spec: MethodSpec },
}

impl TryFrom<serde_json::Value> for MethodEntry {
    type Error = String;

    fn try_from(v: serde_json::Value) -> Result<Self, String> {
        match v {
            serde_json::Value::String(s) => Ok(MethodEntry::Name(s)),
            serde_json::Value::Object(mut m) => {
                let label = match m.remove("label") {
                    Some(serde_json::Value::String(s)) => s,
                    Some(_) => return Err("method label must be a string".into()),
                    None => return Err("method entry needs a `label`".into()),
                };
                let spec = m.remove("spec").ok_or_else(|| format!("method `{label}` needs a `spec`"))?;
                if let Some(k) = m.keys().next() {
                    return Err(format!("method `{label}`: unknown field `{k}`"));
                }
                let spec = serde_json::from_value(spec).map_err(|e| format!("method `{label}`: {e}"))?;
                Ok(MethodEntry::Spec { label, spec })
            }
            _ => Err("method entries are names or {label, spec} objects".into()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedMethod {
    pub label: String,
    pub spec: MethodSpec,
}

/// A full experiment: environment, data, methods and metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub environment: Environment,
    pub dataset: DatasetConfig,
    /// Empty means every method with its environment defaults.
    #[serde(default)]
    pub methods: Vec<MethodEntry>,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<MetricKind>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Empty means the variants that apply to the environment.
    #[serde(default)]
    pub variants: Vec<GtVariant>,
    /// Variant whose F1 ranks methods in the rank table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_variant: Option<GtVariant>,
    #[serde(default = "default_fraction")]
    pub curve_fraction: f64,
    /// Replacement for perturbation metrics; black when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replacement: Option<BaselineSpec>,
    #[serde(default)]
    pub sensitivity: SensitivityConfig,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_metrics() -> Vec<MetricKind> {
    vec![MetricKind::Gt, MetricKind::Insertion, MetricKind::Deletion, MetricKind::SensitivityN]
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

fn default_fraction() -> f64 {
    DEFAULT_FRACTION
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn config_err(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {msg}"))
}

impl RunConfig {
    pub fn new(environment: Environment, count: usize, seed: u64) -> Self {
        RunConfig {
            environment,
            dataset: DatasetConfig { count, seed },
            methods: Vec::new(),
            metrics: default_metrics(),
            gamma: DEFAULT_GAMMA,
            variants: Vec::new(),
            rank_variant: None,
            curve_fraction: DEFAULT_FRACTION,
            replacement: None,
            sensitivity: SensitivityConfig::default(),
            output: default_output(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::load(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::load(path, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.environment.validate().map_err(|e| config_err("environment", strip(e)))?;
        if self.dataset.count == 0 {
            return Err(config_err("dataset.count", "must be positive"));
        }
        let methods = self.resolved_methods()?;
        if methods.is_empty() {
            return Err(config_err("methods", "no methods to run"));
        }
        if self.metrics.is_empty() {
            return Err(config_err("metrics", "at least one metric is required"));
        }
        let mut seen = BTreeSet::new();
        for m in &self.metrics {
            if !seen.insert(m) {
                return Err(config_err("metrics", format!("`{}` listed twice", m.name())));
            }
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(config_err("gamma", format!("must be in [0, 1], got {}", self.gamma)));
        }
        if !(self.curve_fraction > 0.0 && self.curve_fraction <= 1.0) {
            return Err(config_err(
                "curve_fraction",
                format!("must be in (0, 1], got {}", self.curve_fraction),
            ));
        }
        if let Some(r) = &self.replacement {
            r.pixel(self.environment.channels()).map_err(|e| config_err("replacement", strip(e)))?;
        }
        if self.sensitivity.repeats < 2 {
            return Err(config_err(
                "sensitivity.repeats",
                format!("must be at least 2, got {}", self.sensitivity.repeats),
            ));
        }
        let pixels = self.pixels();
        let grid = self.n_grid();
        if grid.is_empty() || grid.iter().any(|&n| n == 0 || n > pixels) || grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(config_err(
                "sensitivity.grid",
                format!("must be strictly increasing within 1..={pixels}, got {grid:?}"),
            ));
        }
        let variants = self.variants();
        let mut names = BTreeSet::new();
        for v in &variants {
            if !names.insert(v.name()) {
                return Err(config_err("variants", format!("`{}` listed twice", v.name())));
            }
        }
        if let Some(rv) = self.rank_variant {
            if !variants.contains(&rv) {
                return Err(config_err("rank_variant", format!("`{}` is not among the scored variants", rv.name())));
            }
        }
        Ok(())
    }

    pub fn pixels(&self) -> usize {
        self.environment.height() * self.environment.width()
    }

    pub fn is_counting(&self) -> bool {
        matches!(self.environment, Environment::SingleColor(_))
    }

    pub fn n_grid(&self) -> Vec<usize> {
        if let Some(g) = &self.sensitivity.grid {
            return g.clone();
        }
        let mut g = default_n_grid(self.pixels());
        if self.is_counting() {
            g.retain(|&n| n <= ADAPTED_MAX_N);
        }
        g
    }

    pub fn variants(&self) -> Vec<GtVariant> {
        if !self.variants.is_empty() {
            return self.variants.clone();
        }
        match self.environment {
            Environment::SingleColor(_) => vec![GtVariant::Overall],
            Environment::MultiColor(_) => vec![
                GtVariant::Overall,
                GtVariant::Positive,
                GtVariant::Negative,
                GtVariant::SmoothedPositive { radius: 2 },
            ],
        }
    }

    pub fn rank_variant(&self) -> GtVariant {
        self.rank_variant.unwrap_or(match self.environment {
            Environment::SingleColor(_) => GtVariant::Overall,
            Environment::MultiColor(_) => GtVariant::Positive,
        })
    }

    pub fn replacement(&self) -> BaselineSpec {
        self.replacement.unwrap_or_else(|| BaselineSpec::zero(&self.environment))
    }

    /// Methods with labels; names resolve to environment defaults.
    pub fn resolved_methods(&self) -> Result<Vec<ResolvedMethod>> {
        let entries: Vec<MethodEntry> = if self.methods.is_empty() {
            METHOD_NAMES.iter().map(|n| MethodEntry::Name(n.to_string())).collect()
        } else {
            self.methods.clone()
        };
        let mut out = Vec::with_capacity(entries.len());
        let mut labels = BTreeSet::new();
        for (i, e) in entries.into_iter().enumerate() {
            let field = format!("methods[{i}]");
            let m = match e {
                MethodEntry::Name(name) => ResolvedMethod {
                    spec: default_method_spec(&name, &self.environment).map_err(|e| config_err(&field, strip(e)))?,
                    label: name,
                },
                MethodEntry::Spec { label, spec } => ResolvedMethod { label, spec },
            };
            if m.label.is_empty() || m.label.contains(['/', '\\']) || m.label.starts_with('.') {
                return Err(config_err(&field, format!("label `{}` is not a valid file name", m.label)));
            }
            m.spec.validate().map_err(|e| config_err(&field, strip(e)))?;
            if !labels.insert(m.label.clone()) {
                return Err(config_err(&field, format!("duplicate label `{}`", m.label)));
            }
            out.push(m);
        }
        Ok(out)
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        e => e.to_string(),
    }
}

/// Hyper-parameters used when a method is requested by name.
pub fn default_method_spec(name: &str, env: &Environment) -> Result<MethodSpec> {
    let multi = matches!(env, Environment::MultiColor(_));
    Ok(match name {
        "saliency" => MethodSpec::Saliency,
        "guided_backprop" => MethodSpec::GuidedBackprop,
        "integrated_gradients" => MethodSpec::IntegratedGradients {
            baseline: BaselineSpec::true_baseline(env),
            steps: DEFAULT_IG_STEPS,
        },
        "occlusion" if multi => MethodSpec::Occlusion(OcclusionConfig {
            window: [3, 5, 5],
            strides: [3, 3, 3],
            baseline: BaselineSpec::true_baseline(env),
            tap: Some(OutputTap::PreSoftmax),
        }),
        "occlusion" => MethodSpec::Occlusion(OcclusionConfig {
            window: [1, 5, 5],
            strides: [1, 3, 3],
            baseline: BaselineSpec::zero(env),
            tap: None,
        }),
        "grad_cam" => MethodSpec::GradCam { tap: None },
        "deeplift_rescale" => MethodSpec::DeepliftRescale {
            baseline: BaselineSpec::zero(env),
        },
        "lrp_epsilon" => MethodSpec::LrpEpsilon { epsilon: 1e-9 },
        "lime" => MethodSpec::Lime(LimeConfig::new(SegmentationSpec::Felzenszwalb {
            scale: 1.0,
            sigma: 0.8,
            min_size: 20,
        })),
        "extremal_perturbation" => MethodSpec::ExtremalPerturbation(ExtremalConfig::default()),
        "random" => MethodSpec::Random { seed: 0 },
        "constant" => MethodSpec::Constant { value: 1.0 },
        _ => {
            return Err(Error::Config(format!(
                "unknown method `{name}`; known methods: {}",
                METHOD_NAMES.join(", ")
            )))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netforge::{MultiColorConfig, SingleColorConfig};

    fn multi() -> RunConfig {
        RunConfig::new(Environment::MultiColor(MultiColorConfig::default()), 4, 1)
    }

    #[test]
    fn every_named_method_resolves() {
        for env in [
            Environment::MultiColor(MultiColorConfig::default()),
            Environment::SingleColor(SingleColorConfig::default()),
        ] {
            for name in METHOD_NAMES {
                let spec = default_method_spec(name, &env).unwrap();
                assert_eq!(spec.id(), name);
                spec.validate().unwrap();
            }
        }
    }

    #[test]
    fn zero_count_names_the_field() {
        let mut c = multi();
        c.dataset.count = 0;
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("dataset.count"), "{msg}");
    }

    #[test]
    fn unknown_method_is_rejected_with_the_list() {
        let mut c = multi();
        c.methods = vec![MethodEntry::Name("saliency".into()), MethodEntry::Name("shap".into())];
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("methods[1]") && msg.contains("shap") && msg.contains("lime"), "{msg}");
    }

    #[test]
    fn duplicate_labels_are_rejected() {
        let mut c = multi();
        c.methods = vec![MethodEntry::Name("saliency".into()), MethodEntry::Name("saliency".into())];
        assert!(c.validate().unwrap_err().to_string().contains("duplicate"));
    }

    #[test]
    fn bad_scalars_are_rejected() {
        let mut c = multi();
        c.gamma = 1.5;
        assert!(c.validate().unwrap_err().to_string().contains("gamma"));
        let mut c = multi();
        c.sensitivity.repeats = 1;
        assert!(c.validate().unwrap_err().to_string().contains("sensitivity.repeats"));
        let mut c = multi();
        c.sensitivity.grid = Some(vec![4, 2]);
        assert!(c.validate().unwrap_err().to_string().contains("sensitivity.grid"));
        let mut c = multi();
        c.metrics = vec![MetricKind::Gt, MetricKind::Gt];
        assert!(c.validate().unwrap_err().to_string().contains("metrics"));
    }

    #[test]
    fn json_round_trip_with_labelled_specs() {
        let text = r#"{
            "environment": {"kind": "multi_color", "redundant_scale": 0.0},
            "dataset": {"count": 3, "seed": 9},
            "methods": ["saliency", {"label": "ig_black", "spec": {"method": "integrated_gradients",
                "baseline": {"mode": {"color": [0, 0, 0]}, "provenance": "default_zero"}, "steps": 32}}],
            "metrics": ["gt", "insertion"],
            "gamma": 0.6
        }"#;
        let c = RunConfig::from_json(text).unwrap();
        c.validate().unwrap();
        let m = c.resolved_methods().unwrap();
        assert_eq!(m[1].label, "ig_black");
        assert_eq!(m[1].spec.id(), "integrated_gradients");
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn malformed_method_entry_reports_the_label() {
        let text = r#"{"environment": {"kind": "single_color"}, "dataset": {"count": 1},
            "methods": [{"label": "x", "spec": {"method": "lrp_epsilon", "epsilon": "big"}}]}"#;
        let msg = RunConfig::from_json(text).unwrap_err().to_string();
        assert!(msg.contains("method `x`"), "{msg}");
    }

    #[test]
    fn counting_grid_is_capped() {
        let c = RunConfig::new(Environment::SingleColor(SingleColorConfig::default()), 1, 0);
        assert_eq!(*c.n_grid().last().unwrap(), ADAPTED_MAX_N);
        assert_eq!(*multi().n_grid().last().unwrap(), 2048);
    }
}
