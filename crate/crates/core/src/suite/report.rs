use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{MetricKind, ResolvedMethod, RunConfig};
use super::{fingerprint_of, TOOL_VERSION};
use crate::attribution::AttributionMap;
use crate::datagen::{GtVariant, LabSample};
use crate::error::{Error, Result};
use crate::metrics::{
    adapted_insertion_deletion, build_rank_table, faithfulness_test, insertion_deletion, score, CurveMode, CurveResult,
    FaithfulnessVerdict, MethodSummary, MetricDirection, RankTable, ScoreTriple, SensitivityPlan,
};
use crate::tensor::NetGraph;

/// Scores of one method against one ground-truth variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantScores {
    pub variant: GtVariant,
    pub samples: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// The method cannot produce the sign this variant asks for.
    pub incapable: bool,
    /// Faithfulness test on the mean F1.
    pub verdict: FaithfulnessVerdict,
    /// Fraction of samples whose own F1 passes.
    pub pass_rate: f64,
    pub per_sample: Vec<ScoreTriple>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub metric: MetricKind,
    /// Standard or adapted protocol.
    pub protocol: String,
    pub samples: usize,
    pub mean_auc: f64,
    pub aucs: Vec<f64>,
    pub mean_curve: CurveResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub label: String,
    pub method: String,
    pub fingerprint: String,
    pub scores: Vec<VariantScores>,
    pub curves: Vec<CurveSummary>,
}

impl MethodReport {
    pub fn variant(&self, v: GtVariant) -> Option<&VariantScores> {
        self.scores.iter().find(|s| s.variant == v)
    }

    pub fn curve(&self, m: MetricKind) -> Option<&CurveSummary> {
        self.curves.iter().find(|c| c.metric == m)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedCell {
    pub method: String,
    pub metric: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<usize>,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tool_version: String,
    pub environment_fingerprint: String,
    pub config_fingerprint: String,
    pub samples: usize,
    pub gamma: f64,
    pub metrics: Vec<MetricKind>,
    pub methods: Vec<MethodReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_table: Option<RankTable>,
    pub skipped: Vec<SkippedCell>,
}

impl EvalReport {
    pub fn method(&self, label: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.label == label)
    }

    /// One row per (method, variant) with the curve AUCs repeated on each row.
    pub fn to_csv(&self) -> String {
        let curves: Vec<MetricKind> = self.metrics.iter().copied().filter(|m| m.is_curve()).collect();
        let mut s = String::from("label,method,fingerprint,variant,samples,precision,recall,f1,incapable,gamma,pass,pass_rate");
        for m in &curves {
            s.push_str(&format!(",{}_auc", m.name()));
        }
        s.push('\n');
        let auc_cells = |m: &MethodReport| -> String {
            curves
                .iter()
                .map(|k| m.curve(*k).map_or(String::new(), |c| c.mean_auc.to_string()))
                .map(|v| format!(",{v}"))
                .collect()
        };
        for m in &self.methods {
            if m.scores.is_empty() {
                s.push_str(&format!("{},{},{},,,,,,,,,{}\n", m.label, m.method, m.fingerprint, auc_cells(m)));
            }
            for v in &m.scores {
                s.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{}{}\n",
                    m.label,
                    m.method,
                    m.fingerprint,
                    v.variant.name(),
                    v.samples,
                    v.precision,
                    v.recall,
                    v.f1,
                    v.incapable,
                    v.verdict.gamma,
                    v.verdict.pass,
                    v.pass_rate,
                    auc_cells(m)
                ));
            }
        }
        s
    }
}

/// Everything computed for one (method, sample) cell.
struct Cell {
    scores: Vec<ScoreTriple>,
    curves: Vec<(MetricKind, CurveResult)>,
    skipped: Vec<SkippedCell>,
}

fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Pointwise mean of curves; curves on different grids are first resampled
/// linearly onto a shared uniform grid.
pub fn mean_curve(curves: &[&CurveResult]) -> CurveResult {
    let Some(first) = curves.first() else {
        return CurveResult::new(Vec::new(), Vec::new());
    };
    if curves.iter().all(|c| c.x == first.x) {
        let y = (0..first.x.len()).map(|i| mean(curves.iter().map(|c| c.y[i]))).collect();
        return CurveResult::new(first.x.clone(), y);
    }
    let lo = curves.iter().map(|c| c.x[0]).fold(f64::INFINITY, f64::min);
    let hi = curves.iter().map(|c| *c.x.last().unwrap()).fold(f64::NEG_INFINITY, f64::max);
    let n = 101;
    let xs: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let ys = xs.iter().map(|&x| mean(curves.iter().map(|c| interp(c, x)))).collect();
    CurveResult::new(xs, ys)
}

fn interp(c: &CurveResult, x: f64) -> f64 {
    let i = c.x.partition_point(|&v| v < x);
    if i == 0 {
        return c.y[0];
    }
    if i == c.x.len() {
        return *c.y.last().unwrap();
    }
    let (x0, x1, y0, y1) = (c.x[i - 1], c.x[i], c.y[i - 1], c.y[i]);
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Scores and curves for every configured (method, sample) cell. `lookup`
/// returns the map of a method label on a sample index, or the reason it is
/// unavailable.
pub fn evaluate<F>(
    net: &NetGraph,
    samples: &[LabSample],
    methods: &[ResolvedMethod],
    cfg: &RunConfig,
    lookup: F,
) -> Result<EvalReport>
where
    F: Fn(&str, usize) -> std::result::Result<AttributionMap, String> + Sync,
{
    cfg.validate()?;
    let counting = cfg.is_counting();
    let variants = if cfg.metrics.contains(&MetricKind::Gt) {
        cfg.variants()
    } else {
        Vec::new()
    };
    let replacement = cfg.replacement();
    let grid = cfg.n_grid();
    let plans: Vec<std::result::Result<SensitivityPlan, String>> = if cfg.metrics.contains(&MetricKind::SensitivityN) {
        samples
            .par_iter()
            .map(|s| {
                let plan = if counting {
                    SensitivityPlan::adapted(net, s, &grid, cfg.sensitivity.repeats, cfg.sensitivity.seed)
                } else {
                    SensitivityPlan::standard(
                        net,
                        s,
                        s.label,
                        &replacement,
                        &grid,
                        cfg.sensitivity.repeats,
                        cfg.sensitivity.seed,
                    )
                };
                plan.map_err(|e| e.to_string())
            })
            .collect()
    } else {
        Vec::new()
    };

    let jobs: Vec<(usize, usize)> = (0..methods.len())
        .flat_map(|m| (0..samples.len()).map(move |s| (m, s)))
        .collect();
    let cells: Vec<Cell> = jobs
        .par_iter()
        .map(|&(mi, si)| {
            let m = &methods[mi];
            let sample = &samples[si];
            let mut cell = Cell {
                scores: Vec::new(),
                curves: Vec::new(),
                skipped: Vec::new(),
            };
            let skip = |metric: &str, reason: String| SkippedCell {
                method: m.label.clone(),
                metric: metric.to_string(),
                sample: Some(si),
                reason,
            };
            let map = match lookup(&m.label, si) {
                Ok(map) => map,
                Err(reason) => {
                    cell.skipped.push(skip("*", reason));
                    return cell;
                }
            };
            let values = &map.values;
            for &v in &variants {
                match score(values, sample, v, &m.label, m.spec.signed()) {
                    Ok(t) => cell.scores.push(t),
                    Err(e) => cell.skipped.push(skip(&format!("gt/{}", v.name()), e.to_string())),
                }
            }
            for &metric in cfg.metrics.iter().filter(|k| k.is_curve()) {
                let res = match metric {
                    MetricKind::Insertion | MetricKind::Deletion => {
                        let mode = if metric == MetricKind::Insertion {
                            CurveMode::Insertion
                        } else {
                            CurveMode::Deletion
                        };
                        if counting {
                            adapted_insertion_deletion(net, sample, values, mode)
                        } else {
                            insertion_deletion(net, sample, values, sample.label, mode, &replacement, cfg.curve_fraction)
                        }
                        .map_err(|e| e.to_string())
                    }
                    MetricKind::SensitivityN => match &plans[si] {
                        Ok(p) => p.curve(values).map_err(|e| e.to_string()),
                        Err(e) => Err(e.clone()),
                    },
                    MetricKind::Gt => unreachable!(),
                };
                match res {
                    Ok(c) => cell.curves.push((metric, c)),
                    Err(reason) => cell.skipped.push(skip(metric.name(), reason)),
                }
            }
            cell
        })
        .collect();

    let protocol = if counting { "adapted" } else { "standard" };
    let mut reports = Vec::with_capacity(methods.len());
    let mut skipped = Vec::new();
    for (mi, m) in methods.iter().enumerate() {
        let mine = &cells[mi * samples.len()..(mi + 1) * samples.len()];
        for c in mine {
            skipped.extend(c.skipped.iter().cloned());
        }
        let mut scores = Vec::new();
        for &v in &variants {
            let per: Vec<ScoreTriple> = mine
                .iter()
                .flat_map(|c| c.scores.iter().filter(|t| t.variant == v).cloned())
                .collect();
            if per.is_empty() {
                continue;
            }
            let f1 = mean(per.iter().map(|t| t.f1));
            let verdict = FaithfulnessVerdict {
                gamma: cfg.gamma,
                f1,
                pass: f1 >= cfg.gamma,
            };
            let passing = per.iter().filter(|t| faithfulness_test(t, cfg.gamma).pass).count();
            scores.push(VariantScores {
                variant: v,
                samples: per.len(),
                precision: mean(per.iter().map(|t| t.precision)),
                recall: mean(per.iter().map(|t| t.recall)),
                f1,
                incapable: per.iter().all(|t| t.incapable),
                verdict,
                pass_rate: passing as f64 / per.len() as f64,
                per_sample: per,
            });
        }
        let mut curves = Vec::new();
        for &metric in cfg.metrics.iter().filter(|k| k.is_curve()) {
            let got: Vec<&CurveResult> = mine
                .iter()
                .flat_map(|c| c.curves.iter().filter(|(k, _)| *k == metric).map(|(_, r)| r))
                .collect();
            if got.is_empty() {
                continue;
            }
            let aucs: Vec<f64> = got.iter().map(|c| c.auc).collect();
            curves.push(CurveSummary {
                metric,
                protocol: protocol.to_string(),
                samples: got.len(),
                mean_auc: mean(aucs.iter().copied()),
                aucs,
                mean_curve: mean_curve(&got),
            });
        }
        reports.push(MethodReport {
            label: m.label.clone(),
            method: m.spec.id().to_string(),
            fingerprint: m.spec.fingerprint(),
            scores,
            curves,
        });
    }

    let rank_table = rank(&reports, cfg, &mut skipped)?;
    Ok(EvalReport {
        tool_version: TOOL_VERSION.to_string(),
        environment_fingerprint: fingerprint_of(&cfg.environment),
        config_fingerprint: fingerprint_of(cfg),
        samples: samples.len(),
        gamma: cfg.gamma,
        metrics: cfg.metrics.clone(),
        methods: reports,
        rank_table,
        skipped,
    })
}

fn rank(reports: &[MethodReport], cfg: &RunConfig, skipped: &mut Vec<SkippedCell>) -> Result<Option<RankTable>> {
    let variant = cfg.rank_variant();
    let curve_metrics: Vec<MetricKind> = cfg.metrics.iter().copied().filter(|m| m.is_curve()).collect();
    let mut why = None;
    if !cfg.metrics.contains(&MetricKind::Gt) {
        why = Some("ground-truth scores were not requested".to_string());
    } else if curve_metrics.is_empty() {
        why = Some("no perturbation metric was requested".to_string());
    }
    let mut rows = Vec::new();
    if why.is_none() {
        for r in reports {
            let (Some(gt), true) = (r.variant(variant), curve_metrics.iter().all(|&m| r.curve(m).is_some())) else {
                skipped.push(SkippedCell {
                    method: r.label.clone(),
                    metric: "rank_table".into(),
                    sample: None,
                    reason: "missing scores or curves".into(),
                });
                continue;
            };
            let metrics: BTreeMap<String, f64> = curve_metrics
                .iter()
                .map(|&m| (m.name().to_string(), r.curve(m).unwrap().mean_auc))
                .collect();
            rows.push(MethodSummary {
                method: r.label.clone(),
                gt_f1: gt.f1,
                metrics,
            });
        }
        if rows.len() < 3 {
            why = Some(format!("rank table needs at least 3 complete methods, got {}", rows.len()));
        }
    }
    if let Some(reason) = why {
        skipped.push(SkippedCell {
            method: "*".into(),
            metric: "rank_table".into(),
            sample: None,
            reason,
        });
        return Ok(None);
    }
    let dirs: Vec<MetricDirection> = curve_metrics
        .iter()
        .map(|m| MetricDirection::new(m.name(), m.higher_is_better()))
        .collect();
    build_rank_table(&rows, &dirs, variant).map(Some).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("rank table: {m}")),
        e => e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_curve_on_shared_grid_averages_pointwise() {
        let a = CurveResult::new(vec![0.0, 0.5, 1.0], vec![0.0, 1.0, 1.0]);
        let b = CurveResult::new(vec![0.0, 0.5, 1.0], vec![1.0, 0.0, 0.0]);
        let m = mean_curve(&[&a, &b]);
        assert_eq!(m.y, vec![0.5, 0.5, 0.5]);
    }

    #[test]
    fn mean_curve_resamples_mixed_grids() {
        let a = CurveResult::new(vec![0.0, 1.0], vec![0.0, 1.0]);
        let b = CurveResult::new(vec![0.0, 0.5, 1.0], vec![0.0, 0.5, 1.0]);
        let m = mean_curve(&[&a, &b]);
        assert_eq!(m.x.len(), 101);
        for (x, y) in m.x.iter().zip(&m.y) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((m.auc - 0.5).abs() < 1e-12);
    }
}
