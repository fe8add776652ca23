use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::stats::{average_ranks, spearman};
use crate::datagen::GtVariant;
use crate::error::{Error, Result};

/// Summary numbers for one method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub gt_f1: f64,
    /// Metric name to summary value (mean AUC or mean correlation).
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricDirection {
    pub name: String,
    pub higher_is_better: bool,
}

impl MetricDirection {
    pub fn new(name: &str, higher_is_better: bool) -> Self {
        MetricDirection {
            name: name.to_string(),
            higher_is_better,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub variant: GtVariant,
    pub methods: Vec<String>,
    /// Rank 1 is best; ties share their average rank.
    pub gt_ranks: Vec<f64>,
    pub metric_ranks: BTreeMap<String, Vec<f64>>,
    /// Spearman correlation of each metric's ranking with the ground-truth one.
    pub spearman: BTreeMap<String, f64>,
}

fn best_first(values: &[f64], higher_is_better: bool) -> Vec<f64> {
    let keyed: Vec<f64> = values.iter().map(|&v| if higher_is_better { -v } else { v }).collect();
    average_ranks(&keyed)
}

pub fn build_rank_table(rows: &[MethodSummary], metrics: &[MetricDirection], variant: GtVariant) -> Result<RankTable> {
    if rows.len() < 3 {
        return Err(Error::Config(format!("rank table needs at least 3 methods, got {}", rows.len())));
    }
    let gt: Vec<f64> = rows.iter().map(|r| r.gt_f1).collect();
    let gt_ranks = best_first(&gt, true);
    let mut metric_ranks = BTreeMap::new();
    let mut rho = BTreeMap::new();
    for m in metrics {
        let vals = rows
            .iter()
            .map(|r| {
                r.metrics
                    .get(&m.name)
                    .copied()
                    .ok_or_else(|| Error::Config(format!("method {} has no value for metric {}", r.method, m.name)))
            })
            .collect::<Result<Vec<f64>>>()?;
        let ranks = best_first(&vals, m.higher_is_better);
        rho.insert(m.name.clone(), spearman(&gt_ranks, &ranks)?);
        metric_ranks.insert(m.name.clone(), ranks);
    }
    Ok(RankTable {
        variant,
        methods: rows.iter().map(|r| r.method.clone()).collect(),
        gt_ranks,
        metric_ranks,
        spearman: rho,
    })
}
