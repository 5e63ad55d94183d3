use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::{grad_check, Tape, Tensor};
use crate::dataio::{Event, Snapshot};

fn ev(h: usize, r: usize, t: usize, ah: &[f64], at: &[f64], ts: u64) -> Event {
    Event {
        head: h,
        relation: r,
        tail: t,
        attr_head: ah.to_vec(),
        attr_tail: at.to_vec(),
        timestamp: ts,
    }
}

fn dims(n: usize, r: usize, k: usize, d: usize, m: usize) -> ModelDims {
    ModelDims {
        num_entities: n,
        num_relations: r,
        attr_arity: k,
        embed_dim: d,
        hidden_dim: m,
    }
}

fn set(p: &mut ModelParams, name: &str, values: &[f64]) {
    let t = p.get_mut(name).unwrap();
    assert_eq!(t.numel(), values.len(), "{name}");
    t.data_mut().copy_from_slice(values);
}

fn eval<F>(params: &ModelParams, f: F) -> Vec<f64>
where
    F: for<'t> FnOnce(&mut Tape<'t>, &Net<'t>) -> Result<crate::autodiff::Var, ModelError>,
{
    let mut tape = Tape::new();
    let net = Net::bind(&mut tape, params, false);
    let v = f(&mut tape, &net).unwrap();
    tape.value(v).to_vec()
}

/// d = 1, k = 1 toy: entity 0 has c = 1, entity 1 has c = 2, W1 = 1,
/// e_0 = 1, W2 and W3 all ones.
fn toy_params() -> ModelParams {
    let mut p = ModelParams::zeros(dims(3, 2, 1, 1, 1), VariantKind::Full);
    set(&mut p, "entity_static", &[1.0, 2.0, 0.0]);
    set(&mut p, "w1", &[1.0]);
    set(&mut p, "relation", &[1.0, 3.0]);
    set(&mut p, "w2", &[1.0, 1.0, 1.0]);
    set(&mut p, "w3", &[1.0, 1.0]);
    p
}

#[test]
fn entity_embedding_hand_example() {
    let mut p = ModelParams::zeros(dims(1, 1, 1, 1, 1), VariantKind::Full);
    set(&mut p, "entity_static", &[2.0]);
    set(&mut p, "w1", &[3.0]);
    assert_eq!(eval(&p, |t, n| n.entity_embedding(t, Task::Attribute, 0, &[5.0])), vec![2.0, 15.0]);
    assert_eq!(eval(&p, |t, n| n.entity_embedding(t, Task::Attribute, 0, &[0.0])), vec![2.0, 0.0]);
    let mut tape = Tape::new();
    let net = Net::bind(&mut tape, &p, false);
    assert!(matches!(
        net.entity_embedding(&mut tape, Task::Attribute, 0, &[1.0, 2.0]),
        Err(ModelError::Arity { expected: 1, found: 2 })
    ));
}

#[test]
fn attribute_aggregate_hand_example() {
    let p = toy_params();
    let s = Snapshot::new(0, vec![ev(0, 0, 1, &[1.0], &[3.0], 0)]).unwrap();
    let a = eval(&p, |t, n| n.attribute_aggregate(t, &s, 0));
    assert_eq!(a, vec![1.0, 1.0, 6.0]);
    // Duplicated event: the mean is unchanged.
    let dup = Snapshot::new(0, vec![ev(0, 0, 1, &[1.0], &[3.0], 0); 2]).unwrap();
    assert_eq!(eval(&p, |t, n| n.attribute_aggregate(t, &dup, 0)), a);
}

#[test]
fn empty_neighbourhood_gives_zero_mean() {
    let p = toy_params();
    // Entity 1 is only a tail, so it has an attribute but no events of its own.
    let s = Snapshot::new(0, vec![ev(0, 0, 1, &[1.0], &[3.0], 0)]).unwrap();
    assert_eq!(eval(&p, |t, n| n.attribute_aggregate(t, &s, 1)), vec![2.0, 3.0, 0.0]);
    assert_eq!(eval(&p, |t, n| n.interaction_aggregate(t, &s, 1)), vec![2.0, 0.0]);
}

#[test]
fn interaction_aggregate_hand_example() {
    let p = toy_params();
    // c_t = 2 for the tail, e_r = 3 for relation 1.
    let s = Snapshot::new(0, vec![ev(0, 1, 1, &[1.0], &[3.0], 0)]).unwrap();
    assert_eq!(eval(&p, |t, n| n.interaction_aggregate(t, &s, 0)), vec![1.0, 5.0]);
}

#[test]
fn unknown_ids_rejected() {
    let p = toy_params();
    let s = Snapshot::new(0, vec![ev(0, 0, 7, &[1.0], &[3.0], 0)]).unwrap();
    let mut tape = Tape::new();
    let net = Net::bind(&mut tape, &p, false);
    assert!(matches!(net.attribute_aggregate(&mut tape, &s, 0), Err(ModelError::UnknownEntity(7))));
    let s = Snapshot::new(0, vec![ev(0, 5, 1, &[1.0], &[3.0], 0)]).unwrap();
    assert!(matches!(net.interaction_aggregate(&mut tape, &s, 0), Err(ModelError::UnknownRelation(5))));
}

/// Row-major `[rows, cols]` entry.
fn at(t: &Tensor, i: usize, j: usize) -> f64 {
    t.data()[i * t.shape()[1] + j]
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Textbook GRU cell written with scalar loops.
fn gru_oracle(p: &ModelParams, prefix: &str, x: &[f64], h: &[f64]) -> Vec<f64> {
    let wx = p.get(&format!("{prefix}.wx")).unwrap();
    let uzr = p.get(&format!("{prefix}.uzr")).unwrap();
    let un = p.get(&format!("{prefix}.un")).unwrap();
    let b = p.get(&format!("{prefix}.b")).unwrap().data();
    let m = h.len();
    let lin = |col: usize| -> f64 { b[col] + x.iter().enumerate().map(|(i, xi)| xi * at(wx, i, col)).sum::<f64>() };
    let z: Vec<f64> = (0..m)
        .map(|j| sigmoid(lin(j) + (0..m).map(|l| h[l] * at(uzr, l, j)).sum::<f64>()))
        .collect();
    let r: Vec<f64> = (0..m)
        .map(|j| sigmoid(lin(m + j) + (0..m).map(|l| h[l] * at(uzr, l, m + j)).sum::<f64>()))
        .collect();
    let n: Vec<f64> = (0..m)
        .map(|j| (lin(2 * m + j) + (0..m).map(|l| r[l] * h[l] * at(un, l, j)).sum::<f64>()).tanh())
        .collect();
    (0..m).map(|j| (1.0 - z[j]) * n[j] + z[j] * h[j]).collect()
}

fn random_params(d: ModelDims, variant: VariantKind, seed: u64) -> ModelParams {
    let mut p = ModelParams::init(d, variant, seed);
    // Nonzero biases so every term of the cell is exercised.
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
    for t in p.tensors_mut() {
        for x in t.data_mut() {
            *x += rng.gen_range(-0.3..0.3);
        }
    }
    p
}

#[test]
fn gru_matches_scalar_oracle() {
    let d = dims(4, 2, 2, 3, 5);
    let p = random_params(d, VariantKind::Full, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let h: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let slots = p.layout().gru_a.unwrap();
    let got = eval(&p, |t, n| {
        let xv = t.constant(Tensor::row(x.clone()));
        let hv = t.constant(Tensor::row(h.clone()));
        n.gru(t, slots, xv, Some(hv))
    });
    for (g, o) in got.iter().zip(gru_oracle(&p, "gru_a", &x, &h)) {
        assert!((g - o).abs() < 1e-10);
    }
}

#[test]
fn first_history_step_is_one_gru_cell() {
    let d = dims(3, 2, 1, 2, 3);
    let p = random_params(d, VariantKind::Full, 4);
    let s = Snapshot::new(0, vec![ev(0, 1, 2, &[0.7], &[-0.4], 0)]).unwrap();
    let state = step_history(&s, &HistoryState::new(), &p).unwrap();

    // A = (c_0; a_0 W1; (c_2; a_2 W1; e_1) W2), computed with loops.
    let c = p.get("entity_static").unwrap();
    let w1 = p.get("w1").unwrap();
    let rel = p.get("relation").unwrap();
    let w2 = p.get("w2").unwrap();
    let mut a: Vec<f64> = (0..2).map(|j| at(c, 0, j)).collect();
    a.extend((0..2).map(|j| 0.7 * at(w1, 0, j)));
    let mut nb: Vec<f64> = (0..2).map(|j| at(c, 2, j)).collect();
    nb.extend((0..2).map(|j| -0.4 * at(w1, 0, j)));
    nb.extend((0..2).map(|j| at(rel, 1, j)));
    a.extend((0..2).map(|j| (0..6).map(|i| nb[i] * at(w2, i, j)).sum::<f64>()));
    let expect = gru_oracle(&p, "gru_a", &a, &[0.0; 3]);
    for (g, o) in state.attribute_hidden(0).unwrap().iter().zip(&expect) {
        assert!((g - o).abs() < 1e-10);
    }

    // I = (c_0; (c_2; e_1) W3), GRU input (I; c_0; e_1).
    let w3 = p.get("w3").unwrap();
    let mut x: Vec<f64> = (0..2).map(|j| at(c, 0, j)).collect();
    let pair = [at(c, 2, 0), at(c, 2, 1), at(rel, 1, 0), at(rel, 1, 1)];
    x.extend((0..2).map(|j| (0..4).map(|i| pair[i] * at(w3, i, j)).sum::<f64>()));
    x.extend([at(c, 0, 0), at(c, 0, 1), at(rel, 1, 0), at(rel, 1, 1)]);
    let expect = gru_oracle(&p, "gru_i", &x, &[0.0; 3]);
    let got = state.interaction_hidden(0, 1, VariantKind::Full).unwrap();
    for (g, o) in got.iter().zip(&expect) {
        assert!((g - o).abs() < 1e-10);
    }
    assert!(state.attribute_hidden(2).is_none());
    assert!(state.interaction_hidden(0, 0, VariantKind::Full).is_none());
}

#[test]
fn empty_snapshot_only_advances_tick() {
    let p = random_params(dims(3, 2, 1, 2, 3), VariantKind::Full, 5);
    let s0 = Snapshot::new(0, vec![ev(0, 1, 2, &[0.7], &[-0.4], 0)]).unwrap();
    let state = step_history(&s0, &HistoryState::new(), &p).unwrap();
    let next = step_history(&Snapshot::empty(1), &state, &p).unwrap();
    assert_eq!(next.current_tick(), Some(1));
    assert_eq!(next.attribute_states(), state.attribute_states());
    assert_eq!(next.interaction_states(), state.interaction_states());
    assert!(matches!(
        step_history(&s0, &next, &p),
        Err(ModelError::TickRegression { current: 1, found: 0 })
    ));
}

#[test]
fn event_order_does_not_matter() {
    let p = random_params(dims(4, 2, 1, 2, 3), VariantKind::Full, 6);
    let events = vec![
        ev(0, 1, 2, &[0.1], &[0.2], 0),
        ev(1, 0, 3, &[0.5], &[0.9], 0),
        ev(0, 0, 3, &[0.1], &[0.9], 0),
        ev(1, 1, 0, &[0.5], &[0.1], 0),
    ];
    let mut rev = events.clone();
    rev.reverse();
    let a = step_history(&Snapshot::new(0, events).unwrap(), &HistoryState::new(), &p).unwrap();
    let b = step_history(&Snapshot::new(0, rev).unwrap(), &HistoryState::new(), &p).unwrap();
    for (x, y) in a.attribute_states().values().zip(b.attribute_states().values()) {
        for (u, v) in x.iter().zip(y) {
            assert!((u - v).abs() < 1e-14);
        }
    }
    assert_eq!(a.interaction_states().len(), 4);
    // Head 1 alone gives the same state for head 1.
    let solo = Snapshot::new(0, vec![ev(1, 0, 3, &[0.5], &[0.9], 0), ev(1, 1, 0, &[0.5], &[0.1], 0)]).unwrap();
    let c = step_history(&solo, &HistoryState::new(), &p).unwrap();
    assert_eq!(c.attribute_hidden(1), a.attribute_hidden(1));
}

#[test]
fn predict_attribute_hand_example() {
    let mut p = ModelParams::zeros(dims(2, 1, 1, 1, 1), VariantKind::Full);
    assert_eq!(predict_attribute(&HistoryState::new(), 0, &p).unwrap(), vec![0.0]);
    set(&mut p, "entity_static", &[1.0, 0.0]);
    set(&mut p, "head_a.w", &[2.0, 3.0]);
    set(&mut p, "head_a.b", &[0.5]);
    let state = HistoryState::from_parts(BTreeMap::from([(0, vec![0.25])]), BTreeMap::new(), Some(0));
    // 2 * 0.25 + 3 * 1 + 0.5
    assert_eq!(predict_attribute(&state, 0, &p).unwrap(), vec![4.0]);
    // Entity 1 has no history: 2 * 0 + 3 * 0 + 0.5.
    assert_eq!(predict_attribute(&state, 1, &p).unwrap(), vec![0.5]);
    for k in [1, 2] {
        let q = ModelParams::init(dims(3, 2, k, 2, 3), VariantKind::Full, 1);
        assert_eq!(predict_attribute(&HistoryState::new(), 0, &q).unwrap().len(), k);
    }
}

#[test]
fn tail_logits_hand_example() {
    let p = ModelParams::zeros(dims(3, 1, 1, 1, 1), VariantKind::Full);
    assert_eq!(tail_logits(&HistoryState::new(), 0, 0, &p).unwrap(), vec![0.0; 3]);
    let mut p = p;
    set(&mut p, "entity_static", &[1.0, 1.0, 1.0]);
    set(&mut p, "relation", &[1.0]);
    // Rows: hidden, c_h, e_r.
    set(&mut p, "head_i.w", &[0.0, 0.0, 0.0, 0.0, 0.0, 5.0, 1.0, 0.0, 0.0]);
    let logits = tail_logits(&HistoryState::new(), 0, 0, &p).unwrap();
    assert_eq!(logits, vec![1.0, 0.0, 5.0]);
    let q = ModelParams::init(dims(7, 2, 1, 2, 3), VariantKind::Full, 1);
    assert_eq!(tail_logits(&HistoryState::new(), 3, 1, &q).unwrap().len(), 7);
}

fn random_snapshot(rng: &mut ChaCha8Rng, n: usize, r: usize, k: usize, ts: u64, events: usize) -> Snapshot {
    let attrs: Vec<Vec<f64>> = (0..n).map(|_| (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let evs = (0..events)
        .map(|_| {
            let (h, t) = (rng.gen_range(0..n), rng.gen_range(0..n));
            ev(h, rng.gen_range(0..r), t, &attrs[h], &attrs[t], ts)
        })
        .collect();
    Snapshot::new(ts, evs).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn dimension_laws(d in 1usize..5, k in 1usize..4, m in 1usize..6, seed in 0u64..1000) {
        let md = dims(4, 3, k, d, m);
        let p = ModelParams::init(md, VariantKind::Full, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_snapshot(&mut rng, 4, 3, k, 0, 6);
        let h = s.heads().next().unwrap();
        let r = s.events_of(h).next().unwrap().relation;
        let mut tape = Tape::new();
        let net = Net::bind(&mut tape, &p, false);
        let e = net.entity_embedding(&mut tape, Task::Attribute, h, s.attribute(h).unwrap()).unwrap();
        prop_assert_eq!(tape.shape(e), &[1, 2 * d]);
        let a = net.attribute_aggregate(&mut tape, &s, h).unwrap();
        prop_assert_eq!(tape.shape(a), &[1, 3 * d]);
        let i = net.interaction_aggregate(&mut tape, &s, h).unwrap();
        prop_assert_eq!(tape.shape(i), &[1, 2 * d]);
        prop_assert_eq!(p.layout().shapes()[p.layout().gru_i.unwrap().wx][0], 4 * d);
        let hist = net.step_head(&mut tape, &s, h, &HeadHistory::default(), None).unwrap();
        prop_assert_eq!(tape.shape(hist.attr.unwrap()), &[1, m]);
        prop_assert_eq!(tape.shape(hist.inter[&r]), &[1, m]);
    }

    #[test]
    fn interaction_aggregate_ignores_attributes(seed in 0u64..1000, delta in -5.0f64..5.0) {
        let p = ModelParams::init(dims(5, 2, 2, 3, 2), VariantKind::Full, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_snapshot(&mut rng, 5, 2, 2, 0, 8);
        let shifted = s.map_attributes(|a| a.iter().map(|x| x + delta).collect());
        for h in s.heads() {
            let x = eval(&p, |t, n| n.interaction_aggregate(t, &s, h));
            let y = eval(&p, |t, n| n.interaction_aggregate(t, &shifted, h));
            prop_assert_eq!(x, y);
        }
    }

    #[test]
    fn history_is_causal(seed in 0u64..1000, cut in 1usize..5) {
        let p = ModelParams::init(dims(5, 2, 1, 2, 3), VariantKind::Full, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let snaps: Vec<Snapshot> = (0..6).map(|t| random_snapshot(&mut rng, 5, 2, 1, t, 5)).collect();
        let mut altered = snaps.clone();
        for s in &mut altered[cut..] {
            *s = random_snapshot(&mut rng, 5, 2, 1, s.timestamp(), 7);
        }
        let a = HistoryState::replay(&p, &snaps[..cut]).unwrap();
        let b = HistoryState::replay(&p, &altered[..cut]).unwrap();
        for h in 0..5 {
            prop_assert_eq!(predict_attribute(&a, h, &p).unwrap(), predict_attribute(&b, h, &p).unwrap());
            prop_assert_eq!(tail_logits(&a, h, 1, &p).unwrap(), tail_logits(&b, h, 1, &p).unwrap());
        }
    }

    #[test]
    fn shared_history_reads_attribute_state(seed in 0u64..1000) {
        let p = ModelParams::init(dims(5, 3, 1, 2, 3), VariantKind::SharedHistory, seed);
        prop_assert!(p.layout().gru_i.is_none());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let snaps: Vec<Snapshot> = (0..4).map(|t| random_snapshot(&mut rng, 5, 3, 1, t, 6)).collect();
        let state = HistoryState::replay(&p, &snaps).unwrap();
        for h in 0..5 {
            for r in 0..3 {
                prop_assert_eq!(
                    state.interaction_hidden(h, r, VariantKind::SharedHistory),
                    state.attribute_hidden(h)
                );
            }
        }
    }
}

#[test]
fn time_independent_never_updates() {
    let p = ModelParams::init(dims(5, 2, 1, 2, 3), VariantKind::TimeIndependent, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let snaps: Vec<Snapshot> = (0..4).map(|t| random_snapshot(&mut rng, 5, 2, 1, t, 6)).collect();
    let state = HistoryState::replay(&p, &snaps).unwrap();
    assert!(state.attribute_states().is_empty());
    assert!(state.interaction_states().is_empty());
    assert_eq!(state.current_tick(), Some(3));
    // f_A(c_h) only: the head weight has d rows.
    assert_eq!(p.get("head_a.w").unwrap().shape(), &[2, 1]);
    assert_eq!(p.get("head_i.w").unwrap().shape(), &[4, 5]);
}

/// One-step joint loss of a single head: tail cross-entropy summed over its
/// target events plus the squared attribute error.
fn toy_loss<'t>(
    tape: &mut Tape<'t>,
    net: &Net<'_>,
    window: &[&Snapshot],
    target: &Snapshot,
    h: usize,
) -> Result<crate::autodiff::Var, ModelError> {
    let variant = net.params().variant();
    let rels: BTreeSet<usize> = target.relations_of(h);
    let hist = net.roll_head(tape, window, h, Some(&rels))?;
    let pred = net.attribute_head(tape, hist.attr, h)?;
    let truth = tape.constant(Tensor::row(target.attribute(h).unwrap().to_vec()));
    let mut loss = tape.mse(pred, truth)?;
    for e in target.events_of(h) {
        let logits = net.tail_head(tape, hist.interaction(e.relation, variant), h, e.relation)?;
        let ce = tape.cross_entropy(logits, e.tail)?;
        loss = tape.add(loss, ce)?;
    }
    Ok(loss)
}

#[test]
fn full_model_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let snaps: Vec<Snapshot> = (0..3).map(|t| random_snapshot(&mut rng, 3, 2, 1, t, 4)).collect();
    let target = &snaps[2];
    let h = target.heads().next().unwrap();
    for variant in VariantKind::ALL {
        let p = random_params(dims(3, 2, 1, 2, 3), variant, 2);
        let window: Vec<&Snapshot> = snaps[..2].iter().collect();
        let report = grad_check(
            |tape, vars| {
                let net = Net::with_vars(&p, vars.to_vec());
                toy_loss(tape, &net, &window, target, h).map_err(|e| match e {
                    ModelError::Autodiff(a) => a,
                    other => panic!("{other}"),
                })
            },
            p.tensors(),
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.passed, "{variant}: {}", report.max_rel_error);
    }
}

#[test]
fn decoupled_tasks_do_not_share_static_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let snaps: Vec<Snapshot> = (0..3).map(|t| random_snapshot(&mut rng, 4, 2, 2, t, 6)).collect();
    let target = &snaps[2];
    let p = random_params(dims(4, 2, 2, 2, 3), VariantKind::Decoupled, 3);
    let window: Vec<&Snapshot> = snaps[..2].iter().collect();
    let idx = |name: &str| p.layout().names().iter().position(|n| n == name).unwrap();
    for h in target.heads() {
        let rels = target.relations_of(h);
        // Attribute loss alone.
        let mut tape = Tape::new();
        let net = Net::bind(&mut tape, &p, true);
        let hist = net.roll_head(&mut tape, &window, h, Some(&rels)).unwrap();
        let pred = net.attribute_head(&mut tape, hist.attr, h).unwrap();
        let truth = tape.constant(Tensor::row(target.attribute(h).unwrap().to_vec()));
        let loss = tape.mse(pred, truth).unwrap();
        let g = tape.backward(loss).unwrap();
        for name in ["entity_static_inter", "w1_inter"] {
            let grad = g.get(net.vars()[idx(name)]).unwrap_or(&[]);
            assert!(grad.iter().all(|x| *x == 0.0), "{name}");
        }
        assert!(g.get(net.vars()[idx("entity_static")]).unwrap().iter().any(|x| *x != 0.0));

        // Interaction loss alone.
        let mut tape = Tape::new();
        let net = Net::bind(&mut tape, &p, true);
        let hist = net.roll_head(&mut tape, &window, h, Some(&rels)).unwrap();
        let e = target.events_of(h).next().unwrap();
        let logits = net
            .tail_head(&mut tape, hist.interaction(e.relation, VariantKind::Decoupled), h, e.relation)
            .unwrap();
        let loss = tape.cross_entropy(logits, e.tail).unwrap();
        let g = tape.backward(loss).unwrap();
        for name in ["entity_static", "w1"] {
            let grad = g.get(net.vars()[idx(name)]).unwrap_or(&[]);
            assert!(grad.iter().all(|x| *x == 0.0), "{name}");
        }
    }
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let p = random_params(dims(5, 2, 2, 3, 4), VariantKind::Decoupled, 8);
    let meta = CheckpointMeta {
        seq_len: 4,
        stats: crate::dataio::NormStats {
            mean: vec![0.1, 1.0 / 3.0],
            std: vec![2.0, std::f64::consts::PI],
        },
        epoch: 3,
        val_mse: Some(0.125),
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.json");
    let hash = save_checkpoint(&path, &p, &meta).unwrap();
    assert_eq!(hash, file_sha256(&path).unwrap());
    let (q, m) = load_checkpoint(&path).unwrap();
    assert_eq!(q, p);
    assert_eq!(m, meta);
    for (a, b) in p.tensors().iter().zip(q.tensors()) {
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}

#[test]
fn checkpoint_rejects_dimension_mismatch() {
    let p = ModelParams::init(dims(5, 2, 1, 3, 4), VariantKind::Full, 8);
    let meta = CheckpointMeta {
        seq_len: 4,
        stats: crate::dataio::NormStats::identity(1),
        epoch: 0,
        val_mse: None,
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.json");
    save_checkpoint(&path, &p, &meta).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();

    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["dims"]["hidden_dim"] = 5.into();
    std::fs::write(&path, v.to_string()).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(ModelError::Checkpoint(_))));

    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["params"][0]["shape"] = serde_json::json!([15, 1]);
    std::fs::write(&path, v.to_string()).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(ModelError::Checkpoint(_))));
}

#[test]
fn variant_names_parse() {
    for v in VariantKind::ALL {
        assert_eq!(v.name().parse::<VariantKind>().unwrap(), v);
    }
    assert!("joint".parse::<VariantKind>().is_err());
}
