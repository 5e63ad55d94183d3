use serde::{Deserialize, Serialize};

use super::{DataError, Metadata, Snapshot};

/// Per-dimension standardization statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    /// Population std; zero-variance dimensions are stored as 1.
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn identity(arity: usize) -> Self {
        Self {
            mean: vec![0.0; arity],
            std: vec![1.0; arity],
        }
    }

    /// Fits on each distinct `(entity, tick)` observation, so an entity with
    /// many events at one tick is counted once.
    pub fn fit(snapshots: &[Snapshot], arity: usize) -> Self {
        let mut sum = vec![0.0; arity];
        let mut count = 0usize;
        for s in snapshots {
            for a in s.attributes().values() {
                for (acc, v) in sum.iter_mut().zip(a) {
                    *acc += v;
                }
                count += 1;
            }
        }
        if count == 0 {
            return Self::identity(arity);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut var = vec![0.0; arity];
        for s in snapshots {
            for a in s.attributes().values() {
                for ((acc, v), m) in var.iter_mut().zip(a).zip(&mean) {
                    *acc += (v - m) * (v - m);
                }
            }
        }
        let std = var
            .iter()
            .map(|v| {
                let sd = (v / count as f64).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn denormalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    /// Factor converting a squared error in normalized units of dimension `d` to raw units.
    pub fn variance_scale(&self, d: usize) -> f64 {
        self.std[d] * self.std[d]
    }
}

/// How the split was produced.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SplitRegime {
    Fractions([f64; 3]),
    PreSplit,
}

/// Train/valid/test snapshot sequences with train-only normalization stats.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<Snapshot>,
    pub valid: Vec<Snapshot>,
    pub test: Vec<Snapshot>,
    pub num_entities: usize,
    pub num_relations: usize,
    pub attr_arity: usize,
    pub stats: NormStats,
    pub regime: SplitRegime,
    normalized: bool,
}

fn check_order(part: &[Snapshot], name: &'static str) -> Result<(), DataError> {
    if part.windows(2).all(|w| w[0].timestamp() < w[1].timestamp()) {
        Ok(())
    } else {
        Err(DataError::UnorderedSplit(name))
    }
}

impl DatasetSplit {
    pub fn from_parts(
        train: Vec<Snapshot>,
        valid: Vec<Snapshot>,
        test: Vec<Snapshot>,
        meta: &Metadata,
        regime: SplitRegime,
    ) -> Result<Self, DataError> {
        if train.is_empty() {
            return Err(DataError::EmptyPortion("train"));
        }
        check_order(&train, "train")?;
        check_order(&valid, "valid")?;
        check_order(&test, "test")?;
        let stats = NormStats::fit(&train, meta.attr_arity);
        Ok(Self {
            train,
            valid,
            test,
            num_entities: meta.num_entities(),
            num_relations: meta.num_relations(),
            attr_arity: meta.attr_arity,
            stats,
            regime,
            normalized: false,
        })
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    fn map(&self, f: impl Fn(&[f64]) -> Vec<f64> + Copy, normalized: bool) -> Self {
        let m = |part: &[Snapshot]| part.iter().map(|s| s.map_attributes(f)).collect();
        Self {
            train: m(&self.train),
            valid: m(&self.valid),
            test: m(&self.test),
            stats: self.stats.clone(),
            normalized,
            ..*self
        }
    }

    /// Standardizes every portion with the training statistics.
    pub fn normalize(&self) -> Self {
        if self.normalized {
            return self.clone();
        }
        let stats = &self.stats;
        self.map(|x| stats.normalize(x), true)
    }

    pub fn denormalize(&self) -> Self {
        if !self.normalized {
            return self.clone();
        }
        let stats = &self.stats;
        self.map(|x| stats.denormalize(x), false)
    }

    /// Train, valid and test snapshots in order.
    pub fn all_snapshots(&self) -> Vec<&Snapshot> {
        self.train.iter().chain(&self.valid).chain(&self.test).collect()
    }
}

/// Contiguous prefix/middle/suffix split on snapshot boundaries.
///
/// Train gets `floor(f0·n)` snapshots, valid `floor(f1·n)`, and test the
/// remainder; every portion must end up nonempty.
pub fn split_by_time(snapshots: Vec<Snapshot>, fractions: [f64; 3], meta: &Metadata) -> Result<DatasetSplit, DataError> {
    let n = snapshots.len();
    if n < 3 {
        return Err(DataError::TooFewSnapshots(n));
    }
    let sum: f64 = fractions.iter().sum();
    if fractions.iter().any(|f| !(*f > 0.0) || !f.is_finite()) || (sum - 1.0).abs() > 1e-9 {
        return Err(DataError::BadFractions(fractions));
    }
    let floor = |f: f64| (f * n as f64 + 1e-9).floor() as usize;
    let n_train = floor(fractions[0]);
    let n_valid = floor(fractions[1]);
    if n_train == 0 {
        return Err(DataError::EmptyPortion("train"));
    }
    if n_valid == 0 {
        return Err(DataError::EmptyPortion("valid"));
    }
    if n_train + n_valid >= n {
        return Err(DataError::EmptyPortion("test"));
    }
    let mut rest = snapshots;
    let test = rest.split_off(n_train + n_valid);
    let valid = rest.split_off(n_train);
    DatasetSplit::from_parts(rest, valid, test, meta, SplitRegime::Fractions(fractions))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::dataio::{Event, Vocabulary};

    fn meta(k: usize) -> Metadata {
        Metadata {
            entities: Vocabulary::numbered(3),
            relations: Vocabulary::numbered(1),
            ticks: Vec::new(),
            attr_arity: k,
        }
    }

    fn snap(ts: u64, attrs: &[Vec<f64>]) -> Snapshot {
        let events = attrs
            .iter()
            .enumerate()
            .map(|(h, a)| Event {
                head: h,
                relation: 0,
                tail: h,
                attr_head: a.clone(),
                attr_tail: a.clone(),
                timestamp: ts,
            })
            .collect();
        Snapshot::new(ts, events).unwrap()
    }

    fn snaps(n: usize) -> Vec<Snapshot> {
        (0..n as u64).map(|t| snap(t, &[vec![t as f64]])).collect()
    }

    #[test]
    fn exact_division() {
        let s = split_by_time(snaps(10), [0.8, 0.1, 0.1], &meta(1)).unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (8, 1, 1));
    }

    #[test]
    fn floor_then_remainder() {
        // floor(7.0)=7, floor(1.5)=1, remainder 2
        let s = split_by_time(snaps(10), [0.7, 0.15, 0.15], &meta(1)).unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (7, 1, 2));
        assert_eq!(s.valid[0].timestamp(), 7);
        assert_eq!(s.regime, SplitRegime::Fractions([0.7, 0.15, 0.15]));
    }

    #[test]
    fn too_few_snapshots() {
        assert!(matches!(
            split_by_time(snaps(2), [0.5, 0.25, 0.25], &meta(1)),
            Err(DataError::TooFewSnapshots(2))
        ));
        assert!(matches!(
            split_by_time(snaps(5), [0.5, 0.6, -0.1], &meta(1)),
            Err(DataError::BadFractions(_))
        ));
    }

    #[test]
    fn stats_come_from_train_only() {
        let s = split_by_time(snaps(10), [0.5, 0.2, 0.3], &meta(1)).unwrap();
        // train ticks 0..5 -> values 0..4
        assert_eq!(s.stats.mean, vec![2.0]);
        assert!((s.stats.std[0] - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn constant_dimension_passes_through() {
        let parts: Vec<Snapshot> = (0..4).map(|t| snap(t, &[vec![0.0], vec![0.0]])).collect();
        let s = split_by_time(parts, [0.5, 0.25, 0.25], &meta(1)).unwrap();
        assert_eq!(s.stats.std, vec![1.0]);
        let n = s.normalize();
        assert_eq!(n.train, s.train);
    }

    #[test]
    fn direct_formula() {
        let stats = NormStats {
            mean: vec![5.0],
            std: vec![2.0],
        };
        assert_eq!(stats.normalize(&[9.0]), vec![2.0]);
        assert_eq!(stats.denormalize(&[2.0]), vec![9.0]);
    }

    proptest! {
        #[test]
        fn normalize_round_trip(values in prop::collection::vec(-1e3f64..1e3, 10..40)) {
            let parts: Vec<Snapshot> = values
                .chunks(2)
                .enumerate()
                .map(|(t, c)| snap(t as u64, &c.iter().map(|v| vec![*v, -v]).collect::<Vec<_>>()))
                .collect();
            let s = split_by_time(parts, [0.6, 0.2, 0.2], &meta(2)).unwrap();
            let back = s.normalize().denormalize();
            for (a, b) in s.all_snapshots().into_iter().zip(back.all_snapshots()) {
                for (x, y) in a.attributes().values().zip(b.attributes().values()) {
                    for (u, v) in x.iter().zip(y) {
                        prop_assert!((u - v).abs() <= 1e-12 * u.abs().max(1.0));
                    }
                }
            }
        }
    }
}
