//! Graph-blind baselines: historic average and a GRU over each entity's own series.

use std::collections::BTreeMap;
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::autodiff::{clip_global_norm, AdamConfig, AdamState, Tape, Tensor, Var};
use crate::dataio::{DatasetSplit, EntityId, Snapshot};
use crate::inference::AttributePrediction;
use crate::model::gru_cell;
use crate::training::{examples_in, portion_ranges};

/// Per-entity mean of the training observations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoricAverage {
    pub per_entity: BTreeMap<EntityId, Vec<f64>>,
    /// Mean over every training observation, used for entities never seen in training.
    pub global: Vec<f64>,
}

impl HistoricAverage {
    pub fn fit<'s>(train: impl IntoIterator<Item = &'s Snapshot>, arity: usize) -> Self {
        let mut sums: BTreeMap<EntityId, (Vec<f64>, usize)> = BTreeMap::new();
        let mut global = vec![0.0; arity];
        let mut total = 0usize;
        for s in train {
            for (&e, a) in s.attributes() {
                let entry = sums.entry(e).or_insert_with(|| (vec![0.0; arity], 0));
                for i in 0..arity {
                    entry.0[i] += a[i];
                    global[i] += a[i];
                }
                entry.1 += 1;
                total += 1;
            }
        }
        let per_entity = sums
            .into_iter()
            .map(|(e, (s, n))| (e, s.into_iter().map(|x| x / n as f64).collect()))
            .collect();
        if total > 0 {
            global.iter_mut().for_each(|g| *g /= total as f64);
        }
        Self { per_entity, global }
    }

    pub fn predict(&self, entity: EntityId) -> Vec<f64> {
        self.per_entity.get(&entity).unwrap_or(&self.global).clone()
    }

    /// Constant forecast for every head of `timeline[j]`, `j` in `targets`.
    pub fn predictions(&self, timeline: &[&Snapshot], targets: Range<usize>) -> Vec<AttributePrediction> {
        targets
            .flat_map(|j| {
                let s = timeline[j];
                s.heads().map(move |h| AttributePrediction {
                    entity: h,
                    tick: s.timestamp(),
                    predicted: self.predict(h),
                    actual: s.attribute(h).expect("heads carry attributes").to_vec(),
                })
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GruBaselineConfig {
    pub hidden_dim: usize,
    /// 1 or 2 stacked layers.
    pub layers: usize,
    /// Past observations fed to the GRU.
    pub seq_len: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for GruBaselineConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 32,
            layers: 1,
            seq_len: 10,
            epochs: 50,
            lr: 1e-3,
            batch_size: 64,
            patience: 20,
            seed: 0,
        }
    }
}

/// GRU over one entity's attribute history with weights shared across
/// entities. It never sees edges or entity identities.
#[derive(Clone, Debug, PartialEq)]
pub struct GruBaseline {
    config: GruBaselineConfig,
    arity: usize,
    /// Per layer `[wx, uzr, un, b]`, then the output map `[w, b]`.
    tensors: Vec<Tensor>,
}

/// Each entity's observations as `(timeline index, attribute)`, in order.
type Series = BTreeMap<EntityId, Vec<(usize, Vec<f64>)>>;

fn series_of(timeline: &[&Snapshot]) -> Series {
    let mut out: Series = BTreeMap::new();
    for (j, s) in timeline.iter().enumerate() {
        for (&e, a) in s.attributes() {
            out.entry(e).or_default().push((j, a.clone()));
        }
    }
    out
}

/// Up to `len` observations of `entity` strictly before timeline index `j`.
fn history(series: &Series, entity: EntityId, j: usize, len: usize) -> &[(usize, Vec<f64>)] {
    let Some(obs) = series.get(&entity) else {
        return &[];
    };
    let end = obs.partition_point(|(i, _)| *i < j);
    &obs[end.saturating_sub(len)..end]
}

impl GruBaseline {
    fn init(config: &GruBaselineConfig, arity: usize) -> Self {
        let m = config.hidden_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut xavier = |r: usize, c: usize| {
            let limit = (6.0 / (r + c) as f64).sqrt();
            Tensor::matrix(r, c, (0..r * c).map(|_| rng.gen_range(-limit..=limit)).collect()).expect("shape")
        };
        let mut tensors = Vec::new();
        for layer in 0..config.layers {
            let input = if layer == 0 { arity } else { m };
            tensors.push(xavier(input, 3 * m));
            tensors.push(xavier(m, 2 * m));
            tensors.push(xavier(m, m));
            tensors.push(Tensor::zeros(vec![1, 3 * m]));
        }
        tensors.push(xavier(m, arity));
        tensors.push(Tensor::zeros(vec![1, arity]));
        Self {
            config: config.clone(),
            arity,
            tensors,
        }
    }

    fn forward(&self, tape: &mut Tape<'_>, vars: &[Var], obs: &[(usize, Vec<f64>)]) -> Result<Var, EvalError> {
        let m = self.config.hidden_dim;
        let mut states: Vec<Var> = (0..self.config.layers)
            .map(|_| tape.constant(Tensor::zeros(vec![1, m])))
            .collect();
        for (_, a) in obs {
            let mut x = tape.constant(Tensor::row(a.clone()));
            for (layer, state) in states.iter_mut().enumerate() {
                let w = &vars[4 * layer..4 * layer + 4];
                *state = gru_cell(tape, [w[0], w[1], w[2], w[3]], x, *state)?;
                x = *state;
            }
        }
        let top = *states.last().expect("at least one layer");
        let n = vars.len();
        Ok(tape.affine(top, vars[n - 2], vars[n - 1])?)
    }

    /// Next-value prediction from the given observations (oldest first).
    pub fn predict(&self, obs: &[(usize, Vec<f64>)]) -> Result<Vec<f64>, EvalError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = self.tensors.iter().map(|t| tape.borrowed(t, false)).collect();
        let out = self.forward(&mut tape, &vars, obs)?;
        Ok(tape.value(out).to_vec())
    }

    /// One-step predictions for every head of `timeline[j]`, `j` in `targets`.
    pub fn predictions(&self, timeline: &[&Snapshot], targets: Range<usize>) -> Result<Vec<AttributePrediction>, EvalError> {
        let series = series_of(timeline);
        let mut out = Vec::new();
        for j in targets {
            let s = timeline[j];
            for h in s.heads() {
                out.push(AttributePrediction {
                    entity: h,
                    tick: s.timestamp(),
                    predicted: self.predict(history(&series, h, j, self.config.seq_len))?,
                    actual: s.attribute(h).expect("heads carry attributes").to_vec(),
                });
            }
        }
        Ok(out)
    }

    /// Trains on the normalized split with MSE, keeping the weights with the
    /// lowest validation MSE.
    pub fn train(split: &DatasetSplit, config: &GruBaselineConfig) -> Result<Self, EvalError> {
        if !(1..=2).contains(&config.layers) {
            return Err(EvalError::InvalidConfig("layers must be 1 or 2".into()));
        }
        if config.hidden_dim == 0 || config.seq_len == 0 || config.epochs == 0 || config.batch_size == 0 {
            return Err(EvalError::InvalidConfig("sizes must be positive".into()));
        }
        let norm = split.normalize();
        let timeline = norm.all_snapshots();
        let series = series_of(&timeline);
        let [train_range, valid_range, _] = portion_ranges(&norm);
        let mut examples = examples_in(&timeline, train_range);
        let mut model = Self::init(config, norm.attr_arity);
        let mut adam = AdamState::new(
            AdamConfig {
                lr: config.lr,
                ..AdamConfig::default()
            },
            &model.tensors,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        let val_mse = |m: &Self| -> Result<f64, EvalError> {
            let preds = m.predictions(&timeline, valid_range.clone())?;
            Ok(super::prediction_mse(&preds))
        };
        let mut best = model.clone();
        let mut best_val = val_mse(&model)?;
        let mut stale = 0;
        for _ in 0..config.epochs {
            examples.shuffle(&mut rng);
            for batch in examples.chunks(config.batch_size) {
                let mut grads = {
                    let mut tape = Tape::new();
                    let vars: Vec<Var> = model.tensors.iter().map(|t| tape.param(t)).collect();
                    let mut terms = Vec::with_capacity(batch.len());
                    for &(j, h) in batch {
                        let pred = model.forward(&mut tape, &vars, history(&series, h, j, config.seq_len))?;
                        let truth = tape.constant(Tensor::row(timeline[j].attribute(h).expect("head").to_vec()));
                        terms.push(tape.mse(pred, truth)?);
                    }
                    let sum = tape.add_all(&terms)?.expect("nonempty batch");
                    let loss = tape.scale(sum, 1.0 / batch.len() as f64)?;
                    if !tape.value(loss)[0].is_finite() {
                        return Err(EvalError::NonFinite);
                    }
                    let mut g = tape.backward(loss)?;
                    vars.iter()
                        .zip(&model.tensors)
                        .map(|(&v, t)| g.take(v).unwrap_or_else(|| vec![0.0; t.numel()]))
                        .collect::<Vec<_>>()
                };
                clip_global_norm(&mut grads, 1.0);
                adam.step(&mut model.tensors, &grads)?;
            }
            let val = val_mse(&model)?;
            if val < best_val {
                best_val = val;
                best = model.clone();
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    break;
                }
            }
        }
        Ok(best)
    }

    pub fn arity(&self) -> usize {
        self.arity
    }
}
