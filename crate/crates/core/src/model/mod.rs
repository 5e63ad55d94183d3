//! Entity embeddings, neighbourhood aggregators, the two history GRUs and
//! the attribute and tail prediction heads, plus the ablation variants.

mod checkpoint;
mod forward;
mod history;
mod params;
#[cfg(test)]
mod tests;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::dataio::{EntityId, RelationId};

pub use checkpoint::{checkpoint_bytes, file_sha256, load_checkpoint, save_checkpoint, CheckpointMeta, CHECKPOINT_VERSION};
pub use forward::{gru_cell, HeadHistory, Net, Task};
pub use history::{predict_attribute, step_history, tail_logits, HistoryState};
pub use params::{GruSlots, Layout, ModelParams};

/// Which model variant is trained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantKind {
    #[default]
    Full,
    /// Separate static embeddings and attribute projections per task.
    Decoupled,
    /// Link prediction reads the attribute history; no interaction GRU.
    SharedHistory,
    /// No history at all: both heads see static embeddings only.
    TimeIndependent,
}

impl VariantKind {
    pub const ALL: [VariantKind; 4] = [
        VariantKind::Full,
        VariantKind::Decoupled,
        VariantKind::SharedHistory,
        VariantKind::TimeIndependent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VariantKind::Full => "full",
            VariantKind::Decoupled => "decoupled",
            VariantKind::SharedHistory => "shared_history",
            VariantKind::TimeIndependent => "time_independent",
        }
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VariantKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VariantKind::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown variant '{s}' (expected full, decoupled, shared_history or time_independent)"))
    }
}

/// Sizes that fix every parameter shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelDims {
    pub num_entities: usize,
    pub num_relations: usize,
    pub attr_arity: usize,
    /// `d`
    pub embed_dim: usize,
    /// `m`
    pub hidden_dim: usize,
}

impl ModelDims {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.num_entities == 0
            || self.num_relations == 0
            || self.attr_arity == 0
            || self.embed_dim == 0
            || self.hidden_dim == 0
        {
            return Err(ModelError::Checkpoint(format!("all model dimensions must be positive, got {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("attribute arity {found}, expected {expected}")]
    Arity { expected: usize, found: usize },
    #[error("entity id {0} out of range")]
    UnknownEntity(EntityId),
    #[error("relation id {0} out of range")]
    UnknownRelation(RelationId),
    #[error("entity {entity} has no attribute at tick {tick}")]
    MissingAttribute { entity: EntityId, tick: u64 },
    #[error("snapshot tick {found} does not follow current tick {current}")]
    TickRegression { current: u64, found: u64 },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
