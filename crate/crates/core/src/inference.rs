//! Tail ranking, teacher-forced one-step prediction, and autonomous
//! multi-step rollout that feeds predicted snapshots back into the history.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use thiserror::Error;

use crate::autodiff::{softmax, Tape};
use crate::dataio::{DataError, EntityId, Event, RelationId, Snapshot};
use crate::model::{step_history, tail_logits, HistoryState, ModelError, ModelParams, Net};

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("forecast horizon must be at least 1")]
    ZeroHorizon,
    #[error("top_k must be at least 1")]
    ZeroTopK,
    #[error("query set is empty")]
    EmptyQueries,
    #[error("cut {cut} outside 1..={len}")]
    BadCut { cut: usize, len: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForecastConfig {
    pub horizon: usize,
    pub top_k: usize,
    /// `(head, relation)` pairs rolled forward; `None` uses the pairs of the last observed snapshot.
    pub queries: Option<Vec<(EntityId, RelationId)>>,
}

impl Default for ForecastConfig {
    fn default() -> Self {
        Self {
            horizon: 1,
            top_k: 5,
            queries: None,
        }
    }
}

/// One rolled-forward tick.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastStep {
    pub tick: u64,
    /// Predicted edges carrying predicted attributes.
    pub snapshot: Snapshot,
    /// Predicted attribute of every entity.
    pub attributes: BTreeMap<EntityId, Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Forecast {
    pub queries: Vec<(EntityId, RelationId)>,
    pub steps: Vec<ForecastStep>,
    /// History after the last step, ready to continue from.
    pub state: HistoryState,
}

/// Sorts candidates by descending score, ties by ascending id, and attaches
/// softmax probabilities.
pub fn rank_by_logits(logits: &[f64]) -> Vec<(EntityId, f64)> {
    let probs = softmax(logits);
    let mut order: Vec<EntityId> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    order.into_iter().map(|e| (e, probs[e])).collect()
}

pub fn rank_tails(state: &HistoryState, h: EntityId, r: RelationId, params: &ModelParams) -> Result<Vec<(EntityId, f64)>, ModelError> {
    Ok(rank_by_logits(&tail_logits(state, h, r, params)?))
}

/// History after the last `seq_len` snapshots of `history`, starting from zero state.
pub fn warm_state(params: &ModelParams, history: &[Snapshot], seq_len: usize) -> Result<HistoryState, ModelError> {
    let start = history.len().saturating_sub(seq_len);
    HistoryState::replay(params, &history[start..])
}

/// Distinct `(head, relation)` pairs of a snapshot, ascending.
pub fn observed_pairs(snapshot: &Snapshot) -> Vec<(EntityId, RelationId)> {
    snapshot
        .events()
        .iter()
        .map(|e| (e.head, e.relation))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Predicts one tick ahead of `state` and returns the step with the advanced state.
pub fn forecast_step(
    state: &HistoryState,
    params: &ModelParams,
    queries: &[(EntityId, RelationId)],
    top_k: usize,
) -> Result<(ForecastStep, HistoryState), InferenceError> {
    if top_k == 0 {
        return Err(InferenceError::ZeroTopK);
    }
    let tick = state.next_tick();
    let mut attributes = BTreeMap::new();
    for h in 0..params.dims().num_entities {
        attributes.insert(h, crate::model::predict_attribute(state, h, params)?);
    }
    let mut events = Vec::new();
    for &(h, r) in queries {
        for (t, _) in rank_tails(state, h, r, params)?.into_iter().take(top_k) {
            events.push(Event {
                head: h,
                relation: r,
                tail: t,
                attr_head: attributes[&h].clone(),
                attr_tail: attributes[&t].clone(),
                timestamp: tick,
            });
        }
    }
    let snapshot = Snapshot::new(tick, events)?;
    let next = step_history(&snapshot, state, params)?;
    Ok((
        ForecastStep {
            tick,
            snapshot,
            attributes,
        },
        next,
    ))
}

/// Rolls `horizon` ticks forward from `state` without reading any observed data.
pub fn forecast_from_state(
    state: &HistoryState,
    params: &ModelParams,
    queries: &[(EntityId, RelationId)],
    horizon: usize,
    top_k: usize,
) -> Result<Forecast, InferenceError> {
    if horizon == 0 {
        return Err(InferenceError::ZeroHorizon);
    }
    if queries.is_empty() {
        return Err(InferenceError::EmptyQueries);
    }
    let mut state = state.clone();
    let mut steps = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let (step, next) = forecast_step(&state, params, queries, top_k)?;
        steps.push(step);
        state = next;
    }
    Ok(Forecast {
        queries: queries.to_vec(),
        steps,
        state,
    })
}

/// Forecasts past `snapshots[..cut]`. Snapshots from `cut` on are never read.
pub fn forecast(
    snapshots: &[Snapshot],
    cut: usize,
    params: &ModelParams,
    seq_len: usize,
    config: &ForecastConfig,
) -> Result<Forecast, InferenceError> {
    if cut == 0 || cut > snapshots.len() {
        return Err(InferenceError::BadCut {
            cut,
            len: snapshots.len(),
        });
    }
    let history = &snapshots[..cut];
    let state = warm_state(params, history, seq_len)?;
    let queries = match &config.queries {
        Some(q) => q.clone(),
        None => observed_pairs(&history[cut - 1]),
    };
    forecast_from_state(&state, params, &queries, config.horizon, config.top_k)
}

/// Attribute prediction for one `(entity, tick)` target.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributePrediction {
    pub entity: EntityId,
    pub tick: u64,
    pub predicted: Vec<f64>,
    pub actual: Vec<f64>,
}

/// One-step predictions for every head of `timeline[j]`, `j` in `targets`,
/// each from the true preceding `seq_len` snapshots.
pub fn teacher_forced_attributes(
    params: &ModelParams,
    timeline: &[&Snapshot],
    targets: Range<usize>,
    seq_len: usize,
) -> Result<Vec<AttributePrediction>, ModelError> {
    let none = BTreeSet::new();
    let mut out = Vec::new();
    for j in targets {
        let target = timeline[j];
        let window = &timeline[j.saturating_sub(seq_len)..j];
        for h in target.heads() {
            let mut tape = Tape::new();
            let net = Net::bind(&mut tape, params, false);
            let hist = net.roll_head(&mut tape, window, h, Some(&none))?;
            let pred = net.attribute_head(&mut tape, hist.attr, h)?;
            let actual = target.attribute(h).ok_or(ModelError::MissingAttribute {
                entity: h,
                tick: target.timestamp(),
            })?;
            out.push(AttributePrediction {
                entity: h,
                tick: target.timestamp(),
                predicted: tape.value(pred).to_vec(),
                actual: actual.to_vec(),
            });
        }
    }
    Ok(out)
}

/// Rankings keyed by `(tick, head, relation)`.
pub type Rankings = BTreeMap<(u64, EntityId, RelationId), Vec<EntityId>>;

/// Teacher-forced tail rankings for every `(head, relation)` of the target snapshots.
pub fn teacher_forced_rankings(
    params: &ModelParams,
    timeline: &[&Snapshot],
    targets: Range<usize>,
    seq_len: usize,
) -> Result<Rankings, ModelError> {
    let variant = params.variant();
    let mut out = BTreeMap::new();
    for j in targets {
        let target = timeline[j];
        let window = &timeline[j.saturating_sub(seq_len)..j];
        for h in target.heads() {
            let rels = target.relations_of(h);
            let mut tape = Tape::new();
            let net = Net::bind(&mut tape, params, false);
            let hist = net.roll_head(&mut tape, window, h, Some(&rels))?;
            for &r in &rels {
                let logits = net.tail_head(&mut tape, hist.interaction(r, variant), h, r)?;
                let ranking = rank_by_logits(tape.value(logits)).into_iter().map(|(e, _)| e).collect();
                out.insert((target.timestamp(), h, r), ranking);
            }
        }
    }
    Ok(out)
}
