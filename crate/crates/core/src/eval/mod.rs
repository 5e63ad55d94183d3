//! Attribute MSE, raw link metrics, the graph-blind baselines and evaluation reports.

mod baselines;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::dataio::{DatasetSplit, EntityId, Snapshot};
use crate::inference::{teacher_forced_attributes, teacher_forced_rankings, AttributePrediction, Rankings};
use crate::model::{ModelError, ModelParams};
use crate::training::portion_ranges;

pub use baselines::{GruBaseline, GruBaselineConfig, HistoricAverage};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no aligned (entity, tick) pairs to score")]
    Empty,
    #[error("prediction for entity {entity} at tick {tick} has no ground truth")]
    Misaligned { entity: EntityId, tick: u64 },
    #[error("arity mismatch at entity {entity}, tick {tick}")]
    Arity { entity: EntityId, tick: u64 },
    #[error("no ranking for ({tick}, {head}, {relation})")]
    MissingRanking { tick: u64, head: EntityId, relation: usize },
    #[error("true tail {tail} absent from ranking for ({tick}, {head}, {relation})")]
    TailNotRanked { tick: u64, head: EntityId, relation: usize, tail: EntityId },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss during baseline training")]
    NonFinite,
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

/// Attribute vectors keyed by `(entity, tick)`.
pub type AttributeTable = BTreeMap<(EntityId, u64), Vec<f64>>;

/// Mean squared error over every aligned pair and attribute dimension.
pub fn attribute_mse(predictions: &AttributeTable, truth: &AttributeTable) -> Result<f64, EvalError> {
    if predictions.is_empty() {
        return Err(EvalError::Empty);
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for (&(entity, tick), p) in predictions {
        let t = truth.get(&(entity, tick)).ok_or(EvalError::Misaligned { entity, tick })?;
        if t.len() != p.len() {
            return Err(EvalError::Arity { entity, tick });
        }
        sum += p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        n += p.len();
    }
    if n == 0 {
        return Err(EvalError::Empty);
    }
    Ok(sum / n as f64)
}

/// Splits predictions into the two tables `attribute_mse` expects.
pub fn tables(preds: &[AttributePrediction]) -> (AttributeTable, AttributeTable) {
    let p = preds.iter().map(|x| ((x.entity, x.tick), x.predicted.clone())).collect();
    let t = preds.iter().map(|x| ((x.entity, x.tick), x.actual.clone())).collect();
    (p, t)
}

/// MSE of paired predictions; NaN when there are none.
pub fn prediction_mse(preds: &[AttributePrediction]) -> f64 {
    let (p, t) = tables(preds);
    attribute_mse(&p, &t).unwrap_or(f64::NAN)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkMetrics {
    pub mrr: f64,
    pub hits: BTreeMap<usize, f64>,
    pub count: usize,
}

/// Raw MRR and Hits@k of the true tails of `truth` against `rankings`.
pub fn link_metrics<'s>(
    rankings: &Rankings,
    truth: impl IntoIterator<Item = &'s Snapshot>,
    ks: &[usize],
) -> Result<LinkMetrics, EvalError> {
    let mut rr = 0.0;
    let mut hits: BTreeMap<usize, usize> = ks.iter().map(|&k| (k, 0)).collect();
    let mut count = 0usize;
    for s in truth {
        let tick = s.timestamp();
        for e in s.events() {
            let key = (tick, e.head, e.relation);
            let ranking = rankings.get(&key).ok_or(EvalError::MissingRanking {
                tick,
                head: e.head,
                relation: e.relation,
            })?;
            let pos = ranking.iter().position(|&t| t == e.tail).ok_or(EvalError::TailNotRanked {
                tick,
                head: e.head,
                relation: e.relation,
                tail: e.tail,
            })?;
            let rank = pos + 1;
            rr += 1.0 / rank as f64;
            for (&k, n) in hits.iter_mut() {
                if rank <= k {
                    *n += 1;
                }
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(EvalError::Empty);
    }
    Ok(LinkMetrics {
        mrr: rr / count as f64,
        hits: hits.into_iter().map(|(k, n)| (k, n as f64 / count as f64)).collect(),
        count,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub checkpoint_hash: Option<String>,
    pub dataset: String,
    pub portion: String,
    pub horizon: usize,
    pub variant: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityError {
    pub entity: EntityId,
    pub mse: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Raw attribute units.
    pub attribute_mse: f64,
    pub attribute_mse_normalized: f64,
    pub mrr: Option<f64>,
    pub hits: BTreeMap<usize, f64>,
    pub num_attribute_targets: usize,
    pub num_link_queries: usize,
    pub per_entity: Vec<EntityError>,
    pub meta: ReportMeta,
}

impl EvalReport {
    /// Builds the attribute part of a report from normalized predictions.
    pub fn from_predictions(preds: &[AttributePrediction], split: &DatasetSplit, meta: ReportMeta) -> Result<Self, EvalError> {
        let stats = &split.stats;
        let raw: Vec<AttributePrediction> = preds
            .iter()
            .map(|p| AttributePrediction {
                predicted: stats.denormalize(&p.predicted),
                actual: stats.denormalize(&p.actual),
                ..p.clone()
            })
            .collect();
        let (p, t) = tables(&raw);
        let raw_mse = attribute_mse(&p, &t)?;
        let (pn, tn) = tables(preds);
        let normalized_mse = attribute_mse(&pn, &tn)?;
        let mut per: BTreeMap<EntityId, (f64, usize)> = BTreeMap::new();
        for x in &raw {
            let e = per.entry(x.entity).or_default();
            e.0 += x.predicted.iter().zip(&x.actual).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            e.1 += x.predicted.len();
        }
        Ok(Self {
            attribute_mse: raw_mse,
            attribute_mse_normalized: normalized_mse,
            mrr: None,
            hits: BTreeMap::new(),
            num_attribute_targets: raw.len(),
            num_link_queries: 0,
            per_entity: per
                .into_iter()
                .map(|(entity, (s, n))| EntityError {
                    entity,
                    mse: s / n as f64,
                    count: n,
                })
                .collect(),
            meta,
        })
    }

    pub fn with_links(mut self, links: LinkMetrics) -> Self {
        self.mrr = Some(links.mrr);
        self.hits = links.hits;
        self.num_link_queries = links.count;
        self
    }

    pub fn per_entity_csv(&self) -> String {
        let mut out = String::from("entity,mse,count\n");
        for e in &self.per_entity {
            let _ = writeln!(out, "{},{},{}", e.entity, e.mse, e.count);
        }
        out
    }

    /// Writes `report.json` and `per_entity.csv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<(), EvalError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)? + "\n")?;
        std::fs::write(dir.join("per_entity.csv"), self.per_entity_csv())?;
        Ok(())
    }
}

pub const DEFAULT_KS: [usize; 3] = [1, 3, 10];

/// Teacher-forced evaluation of a trained model on one portion (0 train, 1 valid, 2 test).
pub fn evaluate(
    params: &ModelParams,
    split: &DatasetSplit,
    portion: usize,
    seq_len: usize,
    meta: ReportMeta,
) -> Result<EvalReport, EvalError> {
    let norm = split.normalize();
    let timeline = norm.all_snapshots();
    let range = portion_ranges(&norm)[portion].clone();
    let preds = teacher_forced_attributes(params, &timeline, range.clone(), seq_len)?;
    let report = EvalReport::from_predictions(&preds, &norm, meta)?;
    let rankings = teacher_forced_rankings(params, &timeline, range.clone(), seq_len)?;
    match link_metrics(&rankings, timeline[range].iter().copied(), &DEFAULT_KS) {
        Ok(links) => Ok(report.with_links(links)),
        Err(EvalError::Empty) => Ok(report),
        Err(e) => Err(e),
    }
}

/// Raw-unit test MSE of the historic average fitted on the training portion.
pub fn historic_average_mse(split: &DatasetSplit, portion: usize) -> Result<f64, EvalError> {
    let norm = split.normalize();
    let timeline = norm.all_snapshots();
    let ha = HistoricAverage::fit(&norm.train, norm.attr_arity);
    let preds = ha.predictions(&timeline, portion_ranges(&norm)[portion].clone());
    Ok(EvalReport::from_predictions(&preds, &norm, ReportMeta::default())?.attribute_mse)
}

/// Raw-unit MSE of a trained GRU baseline on one portion.
pub fn gru_baseline_mse(model: &GruBaseline, split: &DatasetSplit, portion: usize) -> Result<f64, EvalError> {
    let norm = split.normalize();
    let timeline = norm.all_snapshots();
    let preds = model.predictions(&timeline, portion_ranges(&norm)[portion].clone())?;
    Ok(EvalReport::from_predictions(&preds, &norm, ReportMeta::default())?.attribute_mse)
}
