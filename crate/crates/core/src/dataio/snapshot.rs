use std::collections::{BTreeMap, BTreeSet};

use super::{DataError, EntityId, Event, RelationId};

/// Interaction part of an event: `(h, r, t, tick)` without attributes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Interaction {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
    pub timestamp: u64,
}

/// All events sharing one tick, indexed by head.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    timestamp: u64,
    events: Vec<Event>,
    by_head: BTreeMap<EntityId, Vec<usize>>,
    attributes: BTreeMap<EntityId, Vec<f64>>,
}

impl Snapshot {
    /// Builds a snapshot, checking that every event carries `timestamp` and
    /// that each entity has a single attribute vector at this tick.
    pub fn new(timestamp: u64, events: Vec<Event>) -> Result<Self, DataError> {
        let mut by_head: BTreeMap<EntityId, Vec<usize>> = BTreeMap::new();
        let mut attributes: BTreeMap<EntityId, Vec<f64>> = BTreeMap::new();
        for (i, e) in events.iter().enumerate() {
            if e.timestamp != timestamp {
                return Err(DataError::MixedTimestamps {
                    expected: timestamp,
                    found: e.timestamp,
                });
            }
            by_head.entry(e.head).or_default().push(i);
            for (entity, attr) in [(e.head, &e.attr_head), (e.tail, &e.attr_tail)] {
                match attributes.get(&entity) {
                    Some(existing) if existing != attr => {
                        return Err(DataError::ConflictingAttributes { entity, timestamp });
                    }
                    Some(_) => {}
                    None => {
                        attributes.insert(entity, attr.clone());
                    }
                }
            }
        }
        Ok(Self {
            timestamp,
            events,
            by_head,
            attributes,
        })
    }

    pub fn empty(timestamp: u64) -> Self {
        Self {
            timestamp,
            events: Vec::new(),
            by_head: BTreeMap::new(),
            attributes: BTreeMap::new(),
        }
    }

    pub fn timestamp(&self) -> u64 {
        self.timestamp
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Heads with at least one event, ascending.
    pub fn heads(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.by_head.keys().copied()
    }

    /// `E_{h,τ}`: events whose head is `h` (empty when `h` is not a head here).
    pub fn events_of(&self, head: EntityId) -> impl Iterator<Item = &Event> + '_ {
        self.by_head
            .get(&head)
            .into_iter()
            .flatten()
            .map(move |&i| &self.events[i])
    }

    /// Distinct relations `r` with an event `(head, r, ·)` at this tick.
    pub fn relations_of(&self, head: EntityId) -> BTreeSet<RelationId> {
        self.events_of(head).map(|e| e.relation).collect()
    }

    pub fn attribute(&self, entity: EntityId) -> Option<&[f64]> {
        self.attributes.get(&entity).map(Vec::as_slice)
    }

    /// Attribute view `G^A`: entity → attribute vector for entities observed here.
    pub fn attributes(&self) -> &BTreeMap<EntityId, Vec<f64>> {
        &self.attributes
    }

    /// Interaction view `G^I`.
    pub fn interactions(&self) -> Vec<Interaction> {
        self.events
            .iter()
            .map(|e| Interaction {
                head: e.head,
                relation: e.relation,
                tail: e.tail,
                timestamp: e.timestamp,
            })
            .collect()
    }

    /// Rebuilds a snapshot from its interaction and attribute views.
    pub fn from_views(
        timestamp: u64,
        interactions: &[Interaction],
        attributes: &BTreeMap<EntityId, Vec<f64>>,
    ) -> Result<Self, DataError> {
        let attr = |e: EntityId| {
            attributes.get(&e).cloned().ok_or(DataError::MissingAttribute {
                entity: e,
                timestamp,
            })
        };
        let events = interactions
            .iter()
            .map(|i| {
                Ok(Event {
                    head: i.head,
                    relation: i.relation,
                    tail: i.tail,
                    attr_head: attr(i.head)?,
                    attr_tail: attr(i.tail)?,
                    timestamp: i.timestamp,
                })
            })
            .collect::<Result<Vec<_>, DataError>>()?;
        Self::new(timestamp, events)
    }

    /// Applies `f` to every attribute vector in events and the attribute view.
    pub fn map_attributes(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let events = self
            .events
            .iter()
            .map(|e| Event {
                attr_head: f(&e.attr_head),
                attr_tail: f(&e.attr_tail),
                ..e.clone()
            })
            .collect();
        Self {
            timestamp: self.timestamp,
            events,
            by_head: self.by_head.clone(),
            attributes: self.attributes.iter().map(|(&k, v)| (k, f(v))).collect(),
        }
    }
}

/// Groups timestamp-sorted events into one snapshot per distinct tick. Gaps
/// between ticks are kept as gaps.
pub fn build_snapshots(events: &[Event]) -> Result<Vec<Snapshot>, DataError> {
    if events.windows(2).any(|w| w[0].timestamp > w[1].timestamp) {
        return Err(DataError::NotSorted);
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start < events.len() {
        let ts = events[start].timestamp;
        let end = start + events[start..].iter().take_while(|e| e.timestamp == ts).count();
        out.push(Snapshot::new(ts, events[start..end].to_vec())?);
        start = end;
    }
    Ok(out)
}
