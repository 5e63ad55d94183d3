use std::collections::BTreeMap;

use super::{HeadHistory, ModelError, ModelParams, Net, VariantKind};
use crate::autodiff::{Tape, Tensor};
use crate::dataio::{EntityId, RelationId, Snapshot};

/// Hidden states carried across ticks. Absent entries read as zero.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HistoryState {
    h_a: BTreeMap<EntityId, Vec<f64>>,
    h_i: BTreeMap<(EntityId, RelationId), Vec<f64>>,
    current_tick: Option<u64>,
}

impl HistoryState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_parts(
        h_a: BTreeMap<EntityId, Vec<f64>>,
        h_i: BTreeMap<(EntityId, RelationId), Vec<f64>>,
        current_tick: Option<u64>,
    ) -> Self {
        Self { h_a, h_i, current_tick }
    }

    pub fn current_tick(&self) -> Option<u64> {
        self.current_tick
    }

    /// Tick the next snapshot gets when none is known.
    pub fn next_tick(&self) -> u64 {
        self.current_tick.map_or(0, |t| t + 1)
    }

    pub fn attribute_hidden(&self, h: EntityId) -> Option<&[f64]> {
        self.h_a.get(&h).map(Vec::as_slice)
    }

    /// State the tail head reads for `(h, r)` under `variant`.
    pub fn interaction_hidden(&self, h: EntityId, r: RelationId, variant: VariantKind) -> Option<&[f64]> {
        match variant {
            VariantKind::Full | VariantKind::Decoupled => self.h_i.get(&(h, r)).map(Vec::as_slice),
            VariantKind::SharedHistory => self.attribute_hidden(h),
            VariantKind::TimeIndependent => None,
        }
    }

    pub fn attribute_states(&self) -> &BTreeMap<EntityId, Vec<f64>> {
        &self.h_a
    }

    pub fn interaction_states(&self) -> &BTreeMap<(EntityId, RelationId), Vec<f64>> {
        &self.h_i
    }

    /// Folds [`step_history`] over `snapshots` starting from the empty state.
    pub fn replay<'s>(params: &ModelParams, snapshots: impl IntoIterator<Item = &'s Snapshot>) -> Result<Self, ModelError> {
        let mut state = Self::new();
        for s in snapshots {
            state = step_history(s, &state, params)?;
        }
        Ok(state)
    }
}

fn row(tape: &mut Tape<'_>, v: Option<&[f64]>) -> Option<crate::autodiff::Var> {
    v.map(|x| tape.constant(Tensor::row(x.to_vec())))
}

/// Returns the state after observing `snapshot`. Every head updates its
/// attribute state and its interaction state for each relation it used;
/// everything else carries over. The input state is left untouched.
pub fn step_history(snapshot: &Snapshot, state: &HistoryState, params: &ModelParams) -> Result<HistoryState, ModelError> {
    if let Some(current) = state.current_tick {
        if snapshot.timestamp() <= current {
            return Err(ModelError::TickRegression {
                current,
                found: snapshot.timestamp(),
            });
        }
    }
    let mut next = state.clone();
    next.current_tick = Some(snapshot.timestamp());
    if params.layout().gru_a.is_none() {
        return Ok(next);
    }
    let mut tape = Tape::new();
    let net = Net::bind(&mut tape, params, false);
    for h in snapshot.heads() {
        let mut prev = HeadHistory {
            attr: row(&mut tape, state.attribute_hidden(h)),
            inter: BTreeMap::new(),
        };
        for r in snapshot.relations_of(h) {
            if let Some(v) = row(&mut tape, state.h_i.get(&(h, r)).map(Vec::as_slice)) {
                prev.inter.insert(r, v);
            }
        }
        let hist = net.step_head(&mut tape, snapshot, h, &prev, None)?;
        if let Some(v) = hist.attr {
            next.h_a.insert(h, tape.value(v).to_vec());
        }
        for (r, v) in hist.inter {
            next.h_i.insert((h, r), tape.value(v).to_vec());
        }
    }
    Ok(next)
}

/// Attribute forecast for the tick after the state's current tick.
pub fn predict_attribute(state: &HistoryState, h: EntityId, params: &ModelParams) -> Result<Vec<f64>, ModelError> {
    let mut tape = Tape::new();
    let net = Net::bind(&mut tape, params, false);
    let hidden = row(&mut tape, state.attribute_hidden(h));
    let out = net.attribute_head(&mut tape, hidden, h)?;
    Ok(tape.value(out).to_vec())
}

/// Unnormalized scores over every candidate tail of `(h, r)`.
pub fn tail_logits(state: &HistoryState, h: EntityId, r: RelationId, params: &ModelParams) -> Result<Vec<f64>, ModelError> {
    let mut tape = Tape::new();
    let net = Net::bind(&mut tape, params, false);
    let hidden = row(&mut tape, state.interaction_hidden(h, r, params.variant()));
    let out = net.tail_head(&mut tape, hidden, h, r)?;
    Ok(tape.value(out).to_vec())
}
