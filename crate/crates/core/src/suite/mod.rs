//! End-to-end experiment runs: configuration, attribution over a dataset and
//! the evaluation report.

mod config;
mod report;

pub use config::{
    default_method_spec, DatasetConfig, MethodEntry, MetricKind, ResolvedMethod, RunConfig, SensitivityConfig,
    ADAPTED_MAX_N,
};
pub use report::{evaluate, mean_curve, CurveSummary, EvalReport, MethodReport, SkippedCell, VariantScores};

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::attribution::{attribute, AttributionMap, Target};
use crate::datagen::{generate, LabSample};
use crate::error::Result;
use crate::netforge::build_net;
use crate::tensor::NetGraph;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Short hash of the compact JSON form of `v`.
pub fn fingerprint_of<T: Serialize + ?Sized>(v: &T) -> String {
    let json = serde_json::to_string(v).expect("serializable value");
    hex::encode(&Sha256::digest(json.as_bytes())[..8])
}

/// Attribution maps keyed by (method label, sample index); failed cells hold
/// the error text.
pub type MapTable = BTreeMap<(String, usize), std::result::Result<AttributionMap, String>>;

/// Runs every method on every sample in parallel.
pub fn compute_maps(net: &NetGraph, samples: &[LabSample], methods: &[ResolvedMethod]) -> MapTable {
    let jobs: Vec<(usize, usize)> = (0..methods.len())
        .flat_map(|m| (0..samples.len()).map(move |s| (m, s)))
        .collect();
    jobs.par_iter()
        .map(|&(mi, si)| {
            let m = &methods[mi];
            let s = &samples[si];
            let map = attribute(net, s, &m.spec, Target::for_sample(s, net)).map_err(|e| e.to_string());
            ((m.label.clone(), si), map)
        })
        .collect()
}

/// Result of a run kept in memory.
pub struct Run {
    pub net: NetGraph,
    pub samples: Vec<LabSample>,
    pub maps: MapTable,
    pub report: EvalReport,
}

/// Builds the network, generates the data, attributes and evaluates.
pub fn run_in_memory(cfg: &RunConfig) -> Result<Run> {
    cfg.validate()?;
    let net = build_net(&cfg.environment)?;
    let samples = generate(&cfg.environment, cfg.dataset.count, cfg.dataset.seed)?;
    let methods = cfg.resolved_methods()?;
    let maps = compute_maps(&net, &samples, &methods);
    let report = evaluate(&net, &samples, &methods, cfg, |label, i| lookup(&maps, label, i))?;
    Ok(Run {
        net,
        samples,
        maps,
        report,
    })
}

pub fn lookup(maps: &MapTable, label: &str, sample: usize) -> std::result::Result<AttributionMap, String> {
    match maps.get(&(label.to_string(), sample)) {
        Some(Ok(m)) => Ok(m.clone()),
        Some(Err(e)) => Err(format!("attribution failed: {e}")),
        None => Err("no attribution map".into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::GtVariant;
    use crate::netforge::{Environment, MultiColorConfig, SingleColorConfig};

    fn small_multi() -> RunConfig {
        let env = Environment::MultiColor(MultiColorConfig {
            height: 32,
            width: 32,
            redundant_scale: 0.0,
            ..Default::default()
        });
        let mut cfg = RunConfig::new(env, 3, 5);
        cfg.methods = ["saliency", "integrated_gradients", "random", "constant"]
            .iter()
            .map(|n| MethodEntry::Name(n.to_string()))
            .collect();
        cfg.sensitivity.repeats = 8;
        cfg
    }

    #[test]
    fn multi_color_run_fills_every_cell() {
        let run = run_in_memory(&small_multi()).unwrap();
        let r = &run.report;
        assert!(r.skipped.is_empty(), "{:?}", r.skipped);
        assert_eq!(r.methods.len(), 4);
        for m in &r.methods {
            assert_eq!(m.scores.len(), 4);
            assert_eq!(m.curves.len(), 3);
            for c in &m.curves {
                assert_eq!(c.samples, 3);
                assert!(c.mean_auc.is_finite());
            }
        }
        let neg = r.method("saliency").unwrap().variant(GtVariant::Negative).unwrap();
        assert!(neg.incapable && neg.f1 == 0.0);
        let table = r.rank_table.as_ref().unwrap();
        assert_eq!(table.methods.len(), 4);
        assert!(table.spearman.contains_key("insertion"));
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 1 + 4 * 4);
        assert!(csv.lines().next().unwrap().ends_with("sensitivity_n_auc"));
    }

    #[test]
    fn reports_are_deterministic() {
        let cfg = small_multi();
        let a = serde_json::to_string(&run_in_memory(&cfg).unwrap().report).unwrap();
        let b = serde_json::to_string(&run_in_memory(&cfg).unwrap().report).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_maps_become_skipped_cells() {
        let cfg = small_multi();
        let net = build_net(&cfg.environment).unwrap();
        let samples = generate(&cfg.environment, 2, 0).unwrap();
        let methods = cfg.resolved_methods().unwrap();
        let mut maps = compute_maps(&net, &samples, &methods);
        maps.remove(&("random".to_string(), 1));
        let r = evaluate(&net, &samples, &methods, &cfg, |l, i| lookup(&maps, l, i)).unwrap();
        assert_eq!(r.skipped.len(), 1);
        assert_eq!(r.skipped[0].method, "random");
        assert_eq!(r.skipped[0].sample, Some(1));
        assert_eq!(r.method("random").unwrap().scores[0].samples, 1);
    }

    #[test]
    fn single_color_run_uses_adapted_metrics() {
        let env = Environment::SingleColor(SingleColorConfig::with_size(32, 32));
        let mut cfg = RunConfig::new(env, 2, 1);
        cfg.methods = ["integrated_gradients", "random", "constant"]
            .iter()
            .map(|n| MethodEntry::Name(n.to_string()))
            .collect();
        cfg.sensitivity.repeats = 4;
        let r = run_in_memory(&cfg).unwrap().report;
        assert!(r.skipped.is_empty(), "{:?}", r.skipped);
        let ig = r.method("integrated_gradients").unwrap();
        assert_eq!(ig.curves[0].protocol, "adapted");
        let ins = ig.curve(MetricKind::Insertion).unwrap().mean_auc;
        let del = ig.curve(MetricKind::Deletion).unwrap().mean_auc;
        assert!((ins + del - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fingerprints_track_content() {
        let a = small_multi();
        let mut b = a.clone();
        assert_eq!(fingerprint_of(&a), fingerprint_of(&b));
        b.gamma = 0.6;
        assert_ne!(fingerprint_of(&a), fingerprint_of(&b));
        assert_eq!(fingerprint_of(&a.environment), fingerprint_of(&b.environment));
    }
}
