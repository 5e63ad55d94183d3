//! Forward pass expressed on a [`Tape`], shared by training and inference.

use std::collections::{BTreeMap, BTreeSet};

use super::{GruSlots, ModelError, ModelParams, VariantKind};
use crate::autodiff::{AutodiffError, Tape, Tensor, Var};
use crate::dataio::{EntityId, RelationId, Snapshot};

/// GRU cell on `1 x in` input `x` and `1 x m` state `h`, with weights
/// `[wx (in x 3m), uzr (m x 2m), un (m x m), b (1 x 3m)]`:
///
/// ```text
/// z, r = σ(x Wx_zr + b_zr + h Uzr)
/// n    = tanh(x Wx_n + b_n + (r ⊙ h) Un)
/// h'   = (1 - z) ⊙ n + z ⊙ h
/// ```
pub fn gru_cell(tape: &mut Tape<'_>, weights: [Var; 4], x: Var, h: Var) -> Result<Var, AutodiffError> {
    let [wx, uzr, un, b] = weights;
    let m = tape.shape(h)[1];
    let gx = tape.affine(x, wx, b)?;
    let gh = tape.matmul(h, uzr)?;
    let gx_zr = tape.slice_cols(gx, 0, 2 * m)?;
    let pre = tape.add(gx_zr, gh)?;
    let gates = tape.sigmoid(pre)?;
    let z = tape.slice_cols(gates, 0, m)?;
    let r = tape.slice_cols(gates, m, m)?;
    let rh = tape.hadamard(r, h)?;
    let hn = tape.matmul(rh, un)?;
    let gx_n = tape.slice_cols(gx, 2 * m, m)?;
    let n_pre = tape.add(gx_n, hn)?;
    let n = tape.tanh(n_pre)?;
    // (1 - z) n + z h = n + z (h - n)
    let diff = tape.sub(h, n)?;
    let zd = tape.hadamard(z, diff)?;
    tape.add(n, zd)
}

/// Which task's copy of the static embedding and `W1` to read. Only the
/// decoupled variant keeps them apart.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Attribute,
    Interaction,
}

/// Hidden states of one head on the tape: `H_A(h)` and `H_I(h, r)` for the
/// relations that have been rolled.
#[derive(Clone, Debug, Default)]
pub struct HeadHistory {
    pub attr: Option<Var>,
    pub inter: BTreeMap<RelationId, Var>,
}

impl HeadHistory {
    /// Hidden state read by the tail head for relation `r`.
    pub fn interaction(&self, r: RelationId, variant: VariantKind) -> Option<Var> {
        match variant {
            VariantKind::Full | VariantKind::Decoupled => self.inter.get(&r).copied(),
            VariantKind::SharedHistory => self.attr,
            VariantKind::TimeIndependent => None,
        }
    }
}

/// Model parameters bound to a tape.
pub struct Net<'p> {
    params: &'p ModelParams,
    vars: Vec<Var>,
}

impl<'p> Net<'p> {
    /// Registers every parameter as a borrowed leaf; `trainable` decides
    /// whether they are differentiation targets.
    pub fn bind(tape: &mut Tape<'p>, params: &'p ModelParams, trainable: bool) -> Self {
        let vars = params.tensors().iter().map(|t| tape.borrowed(t, trainable)).collect();
        Self { params, vars }
    }

    /// Wraps leaves already on the tape, one per tensor in layout order.
    pub fn with_vars(params: &'p ModelParams, vars: Vec<Var>) -> Self {
        assert_eq!(vars.len(), params.tensors().len(), "one var per parameter tensor");
        Self { params, vars }
    }

    pub fn params(&self) -> &'p ModelParams {
        self.params
    }

    /// Parameter leaves in layout order.
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    fn v(&self, slot: usize) -> Var {
        self.vars[slot]
    }

    fn variant(&self) -> VariantKind {
        self.params.variant()
    }

    fn check_entity(&self, e: EntityId) -> Result<(), ModelError> {
        if e < self.params.dims().num_entities {
            Ok(())
        } else {
            Err(ModelError::UnknownEntity(e))
        }
    }

    fn check_relation(&self, r: RelationId) -> Result<(), ModelError> {
        if r < self.params.dims().num_relations {
            Ok(())
        } else {
            Err(ModelError::UnknownRelation(r))
        }
    }

    fn check_arity(&self, a: &[f64]) -> Result<(), ModelError> {
        let k = self.params.dims().attr_arity;
        if a.len() == k {
            Ok(())
        } else {
            Err(ModelError::Arity {
                expected: k,
                found: a.len(),
            })
        }
    }

    fn static_slots(&self, task: Task) -> (usize, usize) {
        let l = self.params.layout();
        match task {
            Task::Attribute => (l.entity_attr, l.w1_attr),
            Task::Interaction => (l.entity_inter, l.w1_inter),
        }
    }

    fn zeros(&self, tape: &mut Tape<'_>, width: usize) -> Var {
        tape.constant(Tensor::zeros(vec![1, width]))
    }

    /// `c_h` as a `1 x d` row.
    pub fn static_embedding(&self, tape: &mut Tape<'_>, task: Task, h: EntityId) -> Result<Var, ModelError> {
        self.check_entity(h)?;
        let (c, _) = self.static_slots(task);
        Ok(tape.gather_rows(self.v(c), vec![h])?)
    }

    /// `e_r` as a `1 x d` row.
    pub fn relation_embedding(&self, tape: &mut Tape<'_>, r: RelationId) -> Result<Var, ModelError> {
        self.check_relation(r)?;
        Ok(tape.gather_rows(self.v(self.params.layout().relation), vec![r])?)
    }

    /// `e_{h,τ} = (c_h; a W1)`, length `2d`.
    pub fn entity_embedding(&self, tape: &mut Tape<'_>, task: Task, h: EntityId, a: &[f64]) -> Result<Var, ModelError> {
        self.check_arity(a)?;
        let c = self.static_embedding(tape, task, h)?;
        let (_, w1) = self.static_slots(task);
        let a = tape.constant(Tensor::row(a.to_vec()));
        let dynamic = tape.matmul(a, self.v(w1))?;
        Ok(tape.concat(&[c, dynamic])?)
    }

    fn neighbours(&self, snapshot: &Snapshot, h: EntityId) -> Result<(Vec<EntityId>, Vec<RelationId>), ModelError> {
        let mut tails = Vec::new();
        let mut rels = Vec::new();
        for e in snapshot.events_of(h) {
            self.check_entity(e.tail)?;
            self.check_relation(e.relation)?;
            tails.push(e.tail);
            rels.push(e.relation);
        }
        Ok((tails, rels))
    }

    /// `A_{h,τ}`: the entity embedding followed by the mean of
    /// `(e_t; e_r) W2` over `h`'s events, length `3d`. No events give a zero mean term.
    pub fn attribute_aggregate(&self, tape: &mut Tape<'_>, snapshot: &Snapshot, h: EntityId) -> Result<Var, ModelError> {
        let d = self.params.dims().embed_dim;
        let k = self.params.dims().attr_arity;
        self.check_entity(h)?;
        let a_h = snapshot.attribute(h).ok_or(ModelError::MissingAttribute {
            entity: h,
            tick: snapshot.timestamp(),
        })?;
        let e_h = self.entity_embedding(tape, Task::Attribute, h, a_h)?;
        let (tails, rels) = self.neighbours(snapshot, h)?;
        let mean = if tails.is_empty() {
            self.zeros(tape, d)
        } else {
            let mut attrs = Vec::with_capacity(tails.len() * k);
            for e in snapshot.events_of(h) {
                self.check_arity(&e.attr_tail)?;
                attrs.extend_from_slice(&e.attr_tail);
            }
            let (c, w1) = self.static_slots(Task::Attribute);
            let n = tails.len();
            let c_t = tape.gather_rows(self.v(c), tails)?;
            let a_t = tape.constant(Tensor::matrix(n, k, attrs)?);
            let d_t = tape.matmul(a_t, self.v(w1))?;
            let e_r = tape.gather_rows(self.v(self.params.layout().relation), rels)?;
            let x = tape.concat(&[c_t, d_t, e_r])?;
            let y = tape.matmul(x, self.v(self.params.layout().w2))?;
            tape.mean_rows(y)?
        };
        Ok(tape.concat(&[e_h, mean])?)
    }

    /// `I_{h,τ}`: `c_h` followed by the mean of `(c_t; e_r) W3`, length `2d`.
    /// Attributes are never read.
    pub fn interaction_aggregate(&self, tape: &mut Tape<'_>, snapshot: &Snapshot, h: EntityId) -> Result<Var, ModelError> {
        let d = self.params.dims().embed_dim;
        let c_h = self.static_embedding(tape, Task::Interaction, h)?;
        let (tails, rels) = self.neighbours(snapshot, h)?;
        let mean = if tails.is_empty() {
            self.zeros(tape, d)
        } else {
            let (c, _) = self.static_slots(Task::Interaction);
            let c_t = tape.gather_rows(self.v(c), tails)?;
            let e_r = tape.gather_rows(self.v(self.params.layout().relation), rels)?;
            let x = tape.concat(&[c_t, e_r])?;
            let y = tape.matmul(x, self.v(self.params.layout().w3))?;
            tape.mean_rows(y)?
        };
        Ok(tape.concat(&[c_h, mean])?)
    }

    /// One GRU step. `h = None` is the zero state.
    pub fn gru(&self, tape: &mut Tape<'_>, slots: GruSlots, x: Var, h: Option<Var>) -> Result<Var, ModelError> {
        let m = self.params.dims().hidden_dim;
        let h = match h {
            Some(h) => h,
            None => self.zeros(tape, m),
        };
        let weights = [self.v(slots.wx), self.v(slots.uzr), self.v(slots.un), self.v(slots.b)];
        Ok(gru_cell(tape, weights, x, h)?)
    }

    /// Advances one head's history over one snapshot. Interaction states are
    /// only rolled for relations in `only` when given.
    pub fn step_head(
        &self,
        tape: &mut Tape<'_>,
        snapshot: &Snapshot,
        h: EntityId,
        prev: &HeadHistory,
        only: Option<&BTreeSet<RelationId>>,
    ) -> Result<HeadHistory, ModelError> {
        let layout = self.params.layout();
        let mut next = prev.clone();
        let Some(gru_a) = layout.gru_a else {
            return Ok(next);
        };
        if snapshot.events_of(h).next().is_none() {
            return Ok(next);
        }
        let a = self.attribute_aggregate(tape, snapshot, h)?;
        next.attr = Some(self.gru(tape, gru_a, a, prev.attr)?);
        if let Some(gru_i) = layout.gru_i {
            let rels: Vec<RelationId> = snapshot
                .relations_of(h)
                .into_iter()
                .filter(|r| only.map_or(true, |s| s.contains(r)))
                .collect();
            if !rels.is_empty() {
                let i = self.interaction_aggregate(tape, snapshot, h)?;
                let c_h = self.static_embedding(tape, Task::Interaction, h)?;
                for r in rels {
                    let e_r = self.relation_embedding(tape, r)?;
                    let x = tape.concat(&[i, c_h, e_r])?;
                    let state = self.gru(tape, gru_i, x, prev.inter.get(&r).copied())?;
                    next.inter.insert(r, state);
                }
            }
        }
        Ok(next)
    }

    /// Rolls a head from the zero state over `window`.
    pub fn roll_head(
        &self,
        tape: &mut Tape<'_>,
        window: &[&Snapshot],
        h: EntityId,
        only: Option<&BTreeSet<RelationId>>,
    ) -> Result<HeadHistory, ModelError> {
        let mut hist = HeadHistory::default();
        for s in window {
            hist = self.step_head(tape, s, h, &hist, only)?;
        }
        Ok(hist)
    }

    /// `f_A`: affine map of `(H_A(h); c_h)`, or of `c_h` alone without history.
    pub fn attribute_head(&self, tape: &mut Tape<'_>, hidden: Option<Var>, h: EntityId) -> Result<Var, ModelError> {
        let layout = self.params.layout();
        let c_h = self.static_embedding(tape, Task::Attribute, h)?;
        let x = if self.variant() == VariantKind::TimeIndependent {
            c_h
        } else {
            let hidden = match hidden {
                Some(v) => v,
                None => self.zeros(tape, self.params.dims().hidden_dim),
            };
            tape.concat(&[hidden, c_h])?
        };
        Ok(tape.affine(x, self.v(layout.head_a_w), self.v(layout.head_a_b))?)
    }

    /// `f_I`: raw tail logits from `(H_I(h, r); c_h; e_r)`, or `(c_h; e_r)` without history.
    pub fn tail_head(&self, tape: &mut Tape<'_>, hidden: Option<Var>, h: EntityId, r: RelationId) -> Result<Var, ModelError> {
        let layout = self.params.layout();
        let c_h = self.static_embedding(tape, Task::Interaction, h)?;
        let e_r = self.relation_embedding(tape, r)?;
        let x = if self.variant() == VariantKind::TimeIndependent {
            tape.concat(&[c_h, e_r])?
        } else {
            let hidden = match hidden {
                Some(v) => v,
                None => self.zeros(tape, self.params.dims().hidden_dim),
            };
            tape.concat(&[hidden, c_h, e_r])?
        };
        Ok(tape.affine(x, self.v(layout.head_i_w), self.v(layout.head_i_b))?)
    }
}
