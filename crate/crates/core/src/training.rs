//! Joint optimization of `L = L_I + λ L_A` with validation-based checkpoint selection.

use std::io::Write;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{clip_global_norm, AdamConfig, AdamState, AutodiffError, Tape, Tensor, Var};
use crate::dataio::{DatasetSplit, EntityId, NormStats, Snapshot};
use crate::inference::teacher_forced_attributes;
use crate::model::{save_checkpoint, CheckpointMeta, ModelDims, ModelError, ModelParams, Net, VariantKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub lr: f64,
    /// Truncation `L`: snapshots unrolled before each target.
    pub seq_len: usize,
    pub seed: u64,
    pub variant: VariantKind,
    pub checkpoint_dir: Option<PathBuf>,
    pub eval_every: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Heads per minibatch.
    pub batch_size: usize,
    /// Evaluations without improvement before stopping.
    pub patience: usize,
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            epochs: 100,
            lr: 1e-3,
            seq_len: 10,
            seed: 0,
            variant: VariantKind::Full,
            checkpoint_dir: None,
            eval_every: 1,
            embed_dim: 32,
            hidden_dim: 200,
            batch_size: 64,
            patience: 20,
            clip_norm: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad("lambda must be a nonnegative number");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad("lr must be positive");
        }
        if self.seq_len == 0 || self.eval_every == 0 || self.batch_size == 0 {
            return bad("seq_len, eval_every and batch_size must be at least 1");
        }
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return bad("embed_dim and hidden_dim must be at least 1");
        }
        if !(self.clip_norm > 0.0) {
            return bad("clip_norm must be positive");
        }
        Ok(())
    }

    pub fn dims(&self, split: &DatasetSplit) -> ModelDims {
        ModelDims {
            num_entities: split.num_entities,
            num_relations: split.num_relations,
            attr_arity: split.attr_arity,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("window needs at least 2 snapshots, got {0}")]
    ShortWindow(usize),
    #[error("split portion '{0}' is empty")]
    EmptyPortion(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// `(L, L_I, L_A)` of one batch or window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub interaction: f64,
    pub attribute: f64,
}

/// Example: predict snapshot `timeline[.0]` for head `.1`.
pub type Example = (usize, EntityId);

/// Loss nodes of one batch.
#[derive(Clone, Copy, Debug)]
pub struct BatchLoss {
    pub total: Var,
    pub interaction: Var,
    pub attribute: Var,
}

impl BatchLoss {
    pub fn values(&self, tape: &Tape<'_>) -> LossBreakdown {
        LossBreakdown {
            total: tape.value(self.total)[0],
            interaction: tape.value(self.interaction)[0],
            attribute: tape.value(self.attribute)[0],
        }
    }
}

/// Records the joint loss of `examples` on `tape`: cross-entropy summed over
/// every target event plus `λ` times the attribute MSE averaged over heads.
pub fn batch_loss(
    tape: &mut Tape<'_>,
    net: &Net<'_>,
    timeline: &[&Snapshot],
    examples: &[Example],
    seq_len: usize,
    lambda: f64,
) -> Result<BatchLoss, ModelError> {
    let variant = net.params().variant();
    let mut ce_terms = Vec::new();
    let mut mse_terms = Vec::new();
    for &(j, h) in examples {
        let target = timeline[j];
        let window = &timeline[j.saturating_sub(seq_len)..j];
        let rels = target.relations_of(h);
        let hist = net.roll_head(tape, window, h, Some(&rels))?;
        let pred = net.attribute_head(tape, hist.attr, h)?;
        let actual = target.attribute(h).ok_or(ModelError::MissingAttribute {
            entity: h,
            tick: target.timestamp(),
        })?;
        let truth = tape.constant(Tensor::row(actual.to_vec()));
        mse_terms.push(tape.mse(pred, truth)?);
        for e in target.events_of(h) {
            let logits = net.tail_head(tape, hist.interaction(e.relation, variant), h, e.relation)?;
            ce_terms.push(tape.cross_entropy(logits, e.tail)?);
        }
    }
    let interaction = match tape.add_all(&ce_terms)? {
        Some(v) => v,
        None => tape.constant(Tensor::scalar(0.0)),
    };
    let attribute = match tape.add_all(&mse_terms)? {
        Some(v) => tape.scale(v, 1.0 / mse_terms.len() as f64)?,
        None => tape.constant(Tensor::scalar(0.0)),
    };
    let weighted = tape.scale(attribute, lambda)?;
    let total = tape.add(interaction, weighted)?;
    Ok(BatchLoss {
        total,
        interaction,
        attribute,
    })
}

fn forward_loss(
    params: &ModelParams,
    timeline: &[&Snapshot],
    examples: &[Example],
    seq_len: usize,
    lambda: f64,
) -> Result<LossBreakdown, ModelError> {
    let mut tape = Tape::new();
    let net = Net::bind(&mut tape, params, false);
    let loss = batch_loss(&mut tape, &net, timeline, examples, seq_len, lambda)?;
    Ok(loss.values(&tape))
}

/// Loss of a window whose last snapshot is the target and whose prefix is
/// the history, over every head of the target.
pub fn compute_loss(window: &[&Snapshot], params: &ModelParams, lambda: f64) -> Result<LossBreakdown, TrainError> {
    if window.len() < 2 {
        return Err(TrainError::ShortWindow(window.len()));
    }
    let j = window.len() - 1;
    let examples: Vec<Example> = window[j].heads().map(|h| (j, h)).collect();
    Ok(forward_loss(params, window, &examples, j, lambda)?)
}

/// Gradient of the batch loss with respect to every parameter tensor, in
/// layout order, with the loss values.
pub fn loss_and_grad(
    params: &ModelParams,
    timeline: &[&Snapshot],
    examples: &[Example],
    seq_len: usize,
    lambda: f64,
) -> Result<(LossBreakdown, Vec<Vec<f64>>), ModelError> {
    let mut tape = Tape::new();
    let net = Net::bind(&mut tape, params, true);
    let loss = batch_loss(&mut tape, &net, timeline, examples, seq_len, lambda)?;
    let values = loss.values(&tape);
    let mut grads = tape.backward(loss.total)?;
    let out = net
        .vars()
        .iter()
        .zip(params.tensors())
        .map(|(&v, t)| grads.take(v).unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect();
    Ok((values, out))
}

/// Timeline index ranges of the three portions.
pub fn portion_ranges(split: &DatasetSplit) -> [Range<usize>; 3] {
    let a = split.train.len();
    let b = a + split.valid.len();
    [0..a, a..b, b..b + split.test.len()]
}

/// Every `(target, head)` pair with at least one earlier snapshot.
pub fn examples_in(timeline: &[&Snapshot], range: Range<usize>) -> Vec<Example> {
    range
        .filter(|&j| j > 0)
        .flat_map(|j| timeline[j].heads().map(move |h| (j, h)))
        .collect()
}

/// Mean training loss over fixed-order batches, without updating anything.
pub fn train_loss(split: &DatasetSplit, params: &ModelParams, config: &TrainConfig) -> Result<LossBreakdown, TrainError> {
    let norm = split.normalize();
    let timeline = norm.all_snapshots();
    let examples = examples_in(&timeline, portion_ranges(&norm)[0].clone());
    mean_over_batches(&examples, config.batch_size, |batch| {
        Ok(forward_loss(params, &timeline, batch, config.seq_len, config.lambda)?)
    })
}

fn mean_over_batches(
    examples: &[Example],
    batch_size: usize,
    mut f: impl FnMut(&[Example]) -> Result<LossBreakdown, TrainError>,
) -> Result<LossBreakdown, TrainError> {
    let mut sum = LossBreakdown {
        total: 0.0,
        interaction: 0.0,
        attribute: 0.0,
    };
    let mut n = 0usize;
    for batch in examples.chunks(batch_size) {
        let l = f(batch)?;
        sum.total += l.total;
        sum.interaction += l.interaction;
        sum.attribute += l.attribute;
        n += 1;
    }
    let n = n.max(1) as f64;
    Ok(LossBreakdown {
        total: sum.total / n,
        interaction: sum.interaction / n,
        attribute: sum.attribute / n,
    })
}

/// Teacher-forced attribute MSE over one portion: `(raw, normalized)`.
///
/// `norm` must be normalized; raw errors are measured after mapping
/// predictions and targets back through `stats`.
pub fn portion_mse(
    params: &ModelParams,
    norm: &DatasetSplit,
    portion: usize,
    seq_len: usize,
) -> Result<(f64, f64), ModelError> {
    let timeline = norm.all_snapshots();
    let range = portion_ranges(norm)[portion].clone();
    let preds = teacher_forced_attributes(params, &timeline, range, seq_len)?;
    Ok(mse_pair(&preds, &norm.stats))
}

fn mse_pair(preds: &[crate::inference::AttributePrediction], stats: &NormStats) -> (f64, f64) {
    let (mut raw, mut normed, mut n) = (0.0, 0.0, 0usize);
    for p in preds {
        let pr = stats.denormalize(&p.predicted);
        let ar = stats.denormalize(&p.actual);
        for i in 0..pr.len() {
            raw += (pr[i] - ar[i]) * (pr[i] - ar[i]);
            normed += (p.predicted[i] - p.actual[i]) * (p.predicted[i] - p.actual[i]);
            n += 1;
        }
    }
    if n == 0 {
        (f64::NAN, f64::NAN)
    } else {
        (raw / n as f64, normed / n as f64)
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    #[serde(rename = "L")]
    pub loss: f64,
    #[serde(rename = "L_I")]
    pub loss_interaction: f64,
    #[serde(rename = "L_A")]
    pub loss_attribute: f64,
    pub val_mse: Option<f64>,
    pub wall_time: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub best: ModelParams,
    /// Parameters after the last completed update.
    pub last: ModelParams,
    pub best_meta: CheckpointMeta,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    /// Epoch 0 holds the untrained model.
    pub records: Vec<EpochRecord>,
    pub checkpoint: Option<PathBuf>,
    pub checkpoint_hash: Option<String>,
    pub stopped_early: bool,
    /// Why the run stopped before finishing, if a non-finite loss or gradient ended it.
    pub aborted: Option<String>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    }
}

struct Sink {
    log: Option<(PathBuf, std::fs::File)>,
    best: Option<PathBuf>,
}

impl Sink {
    fn open(dir: Option<&Path>) -> Result<Self, TrainError> {
        let Some(dir) = dir else {
            return Ok(Self { log: None, best: None });
        };
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let log_path = dir.join("train_log.jsonl");
        let file = std::fs::File::create(&log_path).map_err(io_err(&log_path))?;
        Ok(Self {
            log: Some((log_path, file)),
            best: Some(dir.join("best.json")),
        })
    }

    fn record(&mut self, r: &EpochRecord) -> Result<(), TrainError> {
        if let Some((path, file)) = &mut self.log {
            let line = serde_json::to_string(r).expect("record serializes");
            writeln!(file, "{line}").map_err(io_err(path))?;
        }
        Ok(())
    }
}

/// Trains on `split.train`, evaluating attribute MSE on `split.valid` every
/// `eval_every` epochs and keeping the parameters with the lowest value.
pub fn train(split: &DatasetSplit, config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if split.train.len() < 2 {
        return Err(TrainError::EmptyPortion("train"));
    }
    if split.valid.is_empty() {
        return Err(TrainError::EmptyPortion("valid"));
    }
    let norm = split.normalize();
    let timeline = norm.all_snapshots();
    let [train_range, _, _] = portion_ranges(&norm);
    let mut examples = examples_in(&timeline, train_range);
    if examples.is_empty() {
        return Err(TrainError::EmptyPortion("train"));
    }

    let mut params = ModelParams::init(config.dims(split), config.variant, config.seed);
    let mut adam = AdamState::new(
        AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        },
        params.tensors(),
    );
    let mut shuffle = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle.set_stream(1);
    let mut sink = Sink::open(config.checkpoint_dir.as_deref())?;
    let start = Instant::now();
    let meta_for = |epoch: usize, val: f64| CheckpointMeta {
        seq_len: config.seq_len,
        stats: norm.stats.clone(),
        epoch,
        val_mse: Some(val),
    };

    let init_loss = train_loss(&norm, &params, config)?;
    let (init_val, _) = portion_mse(&params, &norm, 1, config.seq_len)?;
    let mut records = vec![EpochRecord {
        epoch: 0,
        loss: init_loss.total,
        loss_interaction: init_loss.interaction,
        loss_attribute: init_loss.attribute,
        val_mse: Some(init_val),
        wall_time: start.elapsed().as_secs_f64(),
    }];
    sink.record(&records[0])?;
    let mut best = params.clone();
    let mut best_epoch = 0;
    let mut best_val = init_val;
    let mut checkpoint_hash = None;
    if let Some(path) = &sink.best {
        checkpoint_hash = Some(save_checkpoint(path, &best, &meta_for(0, best_val))?);
    }
    let mut stale = 0usize;
    let mut stopped_early = false;
    let mut aborted = None;

    'epochs: for epoch in 1..=config.epochs {
        examples.shuffle(&mut shuffle);
        let mut sum = [0.0; 3];
        let mut batches = 0usize;
        for batch in examples.chunks(config.batch_size) {
            let (loss, mut grads) = loss_and_grad(&params, &timeline, batch, config.seq_len, config.lambda)?;
            if !loss.total.is_finite() {
                aborted = Some(format!("non-finite loss at epoch {epoch}"));
                break 'epochs;
            }
            clip_global_norm(&mut grads, config.clip_norm);
            match adam.step(params.tensors_mut(), &grads) {
                Ok(()) => {}
                Err(AutodiffError::NonFiniteGradient { .. }) => {
                    aborted = Some(format!("non-finite gradient at epoch {epoch}"));
                    break 'epochs;
                }
                Err(e) => return Err(e.into()),
            }
            sum[0] += loss.total;
            sum[1] += loss.interaction;
            sum[2] += loss.attribute;
            batches += 1;
        }
        let n = batches.max(1) as f64;
        let mut record = EpochRecord {
            epoch,
            loss: sum[0] / n,
            loss_interaction: sum[1] / n,
            loss_attribute: sum[2] / n,
            val_mse: None,
            wall_time: 0.0,
        };
        if epoch % config.eval_every == 0 || epoch == config.epochs {
            let (val, _) = portion_mse(&params, &norm, 1, config.seq_len)?;
            record.val_mse = Some(val);
            if val < best_val {
                best_val = val;
                best_epoch = epoch;
                best = params.clone();
                stale = 0;
                if let Some(path) = &sink.best {
                    checkpoint_hash = Some(save_checkpoint(path, &best, &meta_for(epoch, val))?);
                }
            } else {
                stale += 1;
            }
        }
        record.wall_time = start.elapsed().as_secs_f64();
        log::info!(
            "epoch {epoch}: L={:.6} L_I={:.6} L_A={:.6} val_mse={:?}",
            record.loss,
            record.loss_interaction,
            record.loss_attribute,
            record.val_mse
        );
        sink.record(&record)?;
        records.push(record);
        if stale >= config.patience {
            stopped_early = true;
            break;
        }
    }
    if let Some(reason) = &aborted {
        log::error!("{reason}; keeping the checkpoint from epoch {best_epoch}");
    }

    Ok(TrainOutcome {
        best_meta: meta_for(best_epoch, best_val),
        best,
        last: params,
        best_epoch,
        best_val_mse: best_val,
        records,
        checkpoint: sink.best,
        checkpoint_hash,
        stopped_early,
        aborted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{build_snapshots, split_by_time, Event, Metadata, Vocabulary};
    use crate::synth::{generate, SynthConfig};

    fn ev(h: usize, r: usize, t: usize, ah: f64, at: f64, ts: u64) -> Event {
        Event {
            head: h,
            relation: r,
            tail: t,
            attr_head: vec![ah],
            attr_tail: vec![at],
            timestamp: ts,
        }
    }

    fn dims(n: usize) -> ModelDims {
        ModelDims {
            num_entities: n,
            num_relations: 2,
            attr_arity: 1,
            embed_dim: 2,
            hidden_dim: 3,
        }
    }

    fn hand_window() -> Vec<Snapshot> {
        vec![
            Snapshot::new(0, vec![ev(0, 0, 1, 0.5, -1.0, 0)]).unwrap(),
            Snapshot::new(1, vec![ev(0, 1, 1, 2.0, 3.0, 1), ev(1, 0, 0, 3.0, 2.0, 1), ev(0, 0, 1, 2.0, 3.0, 1)]).unwrap(),
        ]
    }

    #[test]
    fn zero_parameters_closed_form() {
        let snaps = hand_window();
        let window: Vec<&Snapshot> = snaps.iter().collect();
        let p = ModelParams::zeros(dims(2), VariantKind::Full);
        let l = compute_loss(&window, &p, 1.0).unwrap();
        assert!((l.interaction - 3.0 * 2f64.ln()).abs() < 1e-12);
        // Heads 0 and 1 with true attributes 2 and 3.
        assert!((l.attribute - (4.0 + 9.0) / 2.0).abs() < 1e-12);
        assert!((l.total - l.interaction - l.attribute).abs() < 1e-12);
    }

    #[test]
    fn lambda_is_a_linear_weight() {
        let snaps = hand_window();
        let window: Vec<&Snapshot> = snaps.iter().collect();
        let p = ModelParams::init(dims(2), VariantKind::Full, 3);
        let l0 = compute_loss(&window, &p, 0.0).unwrap();
        assert_eq!(l0.total, l0.interaction);
        let l1 = compute_loss(&window, &p, 0.7).unwrap();
        let l2 = compute_loss(&window, &p, 1.4).unwrap();
        assert!((l2.total - l1.total - 0.7 * l1.attribute).abs() < 1e-12);
        assert!(matches!(compute_loss(&window[..1], &p, 1.0), Err(TrainError::ShortWindow(1))));
    }

    fn small_split(seed: u64) -> DatasetSplit {
        let out = generate(&SynthConfig {
            num_entities: 6,
            num_ticks: 30,
            density: 0.3,
            seed,
            ..Default::default()
        })
        .unwrap();
        let meta = Metadata {
            entities: Vocabulary::numbered(6),
            relations: Vocabulary::numbered(3),
            ticks: (0..30).collect(),
            attr_arity: 1,
        };
        split_by_time(build_snapshots(&out.events).unwrap(), [0.6, 0.2, 0.2], &meta).unwrap()
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            seq_len: 3,
            embed_dim: 3,
            hidden_dim: 4,
            batch_size: 16,
            lr: 1e-2,
            ..Default::default()
        }
    }

    #[test]
    fn one_small_step_descends() {
        let split = small_split(0).normalize();
        let timeline = split.all_snapshots();
        let examples = examples_in(&timeline, 1..6);
        for seed in 0..10 {
            let mut p = ModelParams::init(dims6(), VariantKind::Full, seed);
            let (before, grads) = loss_and_grad(&p, &timeline, &examples, 3, 1.0).unwrap();
            for (t, g) in p.tensors_mut().iter_mut().zip(&grads) {
                for (x, gi) in t.data_mut().iter_mut().zip(g) {
                    *x -= 1e-4 * gi;
                }
            }
            let after = forward_loss(&p, &timeline, &examples, 3, 1.0).unwrap();
            assert!(after.total < before.total, "seed {seed}");
        }
    }

    fn dims6() -> ModelDims {
        ModelDims {
            num_entities: 6,
            num_relations: 3,
            attr_arity: 1,
            embed_dim: 3,
            hidden_dim: 4,
        }
    }

    #[test]
    fn reruns_are_identical() {
        let split = small_split(1);
        let a = train(&split, &small_config()).unwrap();
        let b = train(&split, &small_config()).unwrap();
        let curve = |o: &TrainOutcome| o.records.iter().map(|r| (r.loss, r.val_mse)).collect::<Vec<_>>();
        assert_eq!(curve(&a), curve(&b));
        assert_eq!(a.best, b.best);
        assert_eq!(a.records.len(), 4);
        assert!(a.records[0].val_mse.unwrap() >= a.best_val_mse);
    }

    #[test]
    fn checkpoint_reload_reproduces_validation_mse() {
        let split = small_split(2);
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            checkpoint_dir: Some(dir.path().to_path_buf()),
            ..small_config()
        };
        let out = train(&split, &cfg).unwrap();
        let path = out.checkpoint.clone().unwrap();
        let (params, meta) = crate::model::load_checkpoint(&path).unwrap();
        let (val, _) = portion_mse(&params, &split.normalize(), 1, meta.seq_len).unwrap();
        assert_eq!(val.to_bits(), out.best_val_mse.to_bits());
        assert_eq!(meta.val_mse, Some(out.best_val_mse));
        let log = std::fs::read_to_string(dir.path().join("train_log.jsonl")).unwrap();
        assert_eq!(log.lines().count(), out.records.len());
        let first: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
        for key in ["epoch", "L", "L_I", "L_A", "val_mse", "wall_time"] {
            assert!(first.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn decoupled_copies_get_no_attribute_gradient() {
        let split = small_split(3).normalize();
        let timeline = split.all_snapshots();
        let examples = examples_in(&timeline, 1..10);
        let p = ModelParams::init(dims6(), VariantKind::Decoupled, 1);
        let idx = |name: &str| p.layout().names().iter().position(|n| n == name).unwrap();
        // λ-only gradient: the difference between the λ=1 and λ=0 gradients.
        let (_, with) = loss_and_grad(&p, &timeline, &examples, 3, 1.0).unwrap();
        let (_, without) = loss_and_grad(&p, &timeline, &examples, 3, 0.0).unwrap();
        for name in ["entity_static_inter", "w1_inter"] {
            let i = idx(name);
            assert_eq!(with[i], without[i], "{name}");
        }
        let (_, attr_only) = loss_and_grad(&p, &timeline, &[], 3, 1.0).unwrap();
        assert!(attr_only.iter().flatten().all(|g| *g == 0.0));
        // Interaction-only loss leaves the attribute copies untouched.
        for name in ["entity_static", "w1"] {
            assert!(without[idx(name)].iter().all(|g| *g == 0.0), "{name}");
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let split = small_split(0);
        for cfg in [
            TrainConfig { lambda: -1.0, ..small_config() },
            TrainConfig { epochs: 0, ..small_config() },
            TrainConfig { seq_len: 0, ..small_config() },
        ] {
            assert!(matches!(train(&split, &cfg), Err(TrainError::InvalidConfig(_))));
        }
        let cfg: Result<TrainConfig, _> = serde_json::from_str(r#"{"lambda": 2.0, "bogus": 1}"#);
        assert!(cfg.is_err());
        let cfg: TrainConfig = serde_json::from_str(r#"{"lambda": 2.0, "variant": "shared_history"}"#).unwrap();
        assert_eq!(cfg.lambda, 2.0);
        assert_eq!(cfg.variant, VariantKind::SharedHistory);
        assert_eq!(cfg.hidden_dim, 200);
    }
}
