//! Pre-split loading at the size of a real country-level interaction dataset.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dartnet::dataio::{load_dataset, write_snapshots, SplitRegime};

const SIZES: [usize; 3] = [463_188, 57_898, 57_900];
const ENTITIES: usize = 58;
const RELATIONS: usize = 178;
const TICKS: [std::ops::Range<u64>; 3] = [0..1600, 1600..1800, 1800..2000];

/// Writes the three files. Attributes are a fixed function of (entity, tick)
/// so every mention agrees.
fn write_files(dir: &Path) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let attr: Vec<Vec<f64>> = (0..ENTITIES)
        .map(|_| {
            let base = rng.gen_range(-3.0..3.0);
            (0..2000).map(|t| base + (t as f64 * 0.01).sin()).collect()
        })
        .collect();
    for (k, name) in ["train", "valid", "test"].iter().enumerate() {
        let mut lines: Vec<(u64, String)> = Vec::with_capacity(SIZES[k]);
        for i in 0..SIZES[k] {
            // The first lines of train cover every entity and relation.
            let (h, r) = if k == 0 && i < RELATIONS {
                (i % ENTITIES, i)
            } else {
                (rng.gen_range(0..ENTITIES), rng.gen_range(0..RELATIONS))
            };
            let t = rng.gen_range(0..ENTITIES);
            let tick = if k == 0 && i < RELATIONS { 0 } else { rng.gen_range(TICKS[k].clone()) };
            let raw_tick = tick * 24;
            let line = format!("c{h}\tr{r}\tc{t}\t{raw_tick}\t{}\t{}\n", attr[h][tick as usize], attr[t][tick as usize]);
            lines.push((tick, line));
        }
        lines.sort_by_key(|l| l.0);
        let mut text = String::with_capacity(lines.len() * 48);
        for (_, l) in &lines {
            let _ = write!(text, "{l}");
        }
        std::fs::write(dir.join(format!("{name}.tsv")), text).unwrap();
    }
}

#[test]
fn presplit_files_load_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    write_files(dir.path());
    let (split, meta) = load_dataset(dir.path(), [0.8, 0.1, 0.1]).unwrap();
    assert_eq!(split.regime, SplitRegime::PreSplit);
    assert_eq!(split.num_entities, ENTITIES);
    assert_eq!(split.num_relations, RELATIONS);
    assert_eq!(split.attr_arity, 1);
    let counts: Vec<usize> = [&split.train, &split.valid, &split.test]
        .iter()
        .map(|p| p.iter().map(|s| s.events().len()).sum())
        .collect();
    assert_eq!(counts, SIZES);
    assert_eq!(meta.raw_tick(split.valid[0].timestamp()) % 24, 0);

    let back = tempfile::tempdir().unwrap();
    for (name, portion) in [("train", &split.train), ("valid", &split.valid), ("test", &split.test)] {
        write_snapshots(back.path().join(format!("{name}.tsv")), portion, &meta, &[]).unwrap();
    }
    let (again, meta2) = load_dataset(back.path(), [0.8, 0.1, 0.1]).unwrap();
    assert_eq!(meta2.ticks, meta.ticks);
    assert_eq!(meta2.entities.names(), meta.entities.names());
    assert_eq!(again.train, split.train);
    assert_eq!(again.valid, split.valid);
    assert_eq!(again.test, split.test);
}
