//! Event files, snapshots and temporal splits.

mod io;
mod snapshot;
mod split;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{
    format_events, load_dataset, load_events, load_split_files, parse_events, write_events, write_snapshots,
    write_vocabulary, Metadata, Vocabulary,
};
pub use snapshot::{build_snapshots, Interaction, Snapshot};
pub use split::{split_by_time, DatasetSplit, NormStats, SplitRegime};

pub type EntityId = usize;
pub type RelationId = usize;

/// One hextuple `(head, relation, tail, attr_head, attr_tail, timestamp)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
    pub attr_head: Vec<f64>,
    pub attr_tail: Vec<f64>,
    pub timestamp: u64,
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: attribute arity {found}, expected {expected}")]
    Arity { line: usize, expected: usize, found: usize },
    #[error("line {line}: unknown {kind} '{name}' (not in training vocabulary)")]
    UnknownId { kind: &'static str, name: String, line: usize },
    #[error("entity {entity} has conflicting attributes at tick {timestamp}")]
    ConflictingAttributes { entity: EntityId, timestamp: u64 },
    #[error("entity {entity} has no attribute at tick {timestamp}")]
    MissingAttribute { entity: EntityId, timestamp: u64 },
    #[error("snapshot at tick {expected} given an event at tick {found}")]
    MixedTimestamps { expected: u64, found: u64 },
    #[error("snapshot ticks within '{0}' are not strictly increasing")]
    UnorderedSplit(&'static str),
    #[error("events are not sorted by timestamp")]
    NotSorted,
    #[error("need at least 3 snapshots to split, got {0}")]
    TooFewSnapshots(usize),
    #[error("invalid split fractions {0:?}")]
    BadFractions([f64; 3]),
    #[error("split portion '{0}' is empty")]
    EmptyPortion(&'static str),
    #[error("no event file found in {0} (expected events.tsv or train/valid/test.tsv)")]
    MissingData(PathBuf),
}
