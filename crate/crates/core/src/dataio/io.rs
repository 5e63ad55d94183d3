use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use super::{build_snapshots, split_by_time, DataError, DatasetSplit, Event, Snapshot, SplitRegime};

/// Bijection between external string ids and dense integers.
///
/// Ids that all parse as unsigned integers are ordered numerically,
/// otherwise lexicographically, so the mapping does not depend on file order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Vocabulary {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_names<I: IntoIterator<Item = String>>(names: I) -> Self {
        let set: BTreeSet<String> = names.into_iter().collect();
        let mut names: Vec<String> = set.into_iter().collect();
        if names.iter().all(|n| n.parse::<u64>().is_ok()) {
            names.sort_by_key(|n| n.parse::<u64>().unwrap());
        }
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Self { names, index }
    }

    /// Vocabulary with names `"0".."n-1"`.
    pub fn numbered(n: usize) -> Self {
        Self::from_names((0..n).map(|i| i.to_string()))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (i, n) in self.names.iter().enumerate() {
            let _ = writeln!(out, "{i}\t{n}");
        }
        out
    }
}

/// Everything needed to map dense ids back to the file's own identifiers.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Metadata {
    pub entities: Vocabulary,
    pub relations: Vocabulary,
    /// Raw timestamp for each consecutive tick index.
    pub ticks: Vec<u64>,
    pub attr_arity: usize,
}

impl Metadata {
    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    /// Raw timestamp of a tick; ticks past the known range extrapolate by one per tick.
    pub fn raw_tick(&self, tick: u64) -> u64 {
        match self.ticks.get(tick as usize) {
            Some(&raw) => raw,
            None => {
                let last = self.ticks.last().copied().unwrap_or(0);
                let known = self.ticks.len() as u64;
                last + (tick + 1).saturating_sub(known)
            }
        }
    }
}

struct RawEvent {
    line: usize,
    head: String,
    relation: String,
    tail: String,
    timestamp: u64,
    attr_head: Vec<f64>,
    attr_tail: Vec<f64>,
}

fn parse_attrs(field: &str, line: usize) -> Result<Vec<f64>, DataError> {
    field
        .split(',')
        .map(|s| {
            let v: f64 = s.trim().parse().map_err(|_| DataError::Malformed {
                line,
                reason: format!("bad attribute value '{s}'"),
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(DataError::Malformed {
                    line,
                    reason: format!("non-finite attribute '{s}'"),
                })
            }
        })
        .collect()
}

fn parse_raw(text: &str, arity: &mut Option<usize>) -> Result<Vec<RawEvent>, DataError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() != 6 {
            return Err(DataError::Malformed {
                line: line_no,
                reason: format!("expected 6 tab-separated fields, found {}", fields.len()),
            });
        }
        let timestamp = fields[3].trim().parse().map_err(|_| DataError::Malformed {
            line: line_no,
            reason: format!("bad timestamp '{}'", fields[3]),
        })?;
        let attr_head = parse_attrs(fields[4], line_no)?;
        let attr_tail = parse_attrs(fields[5], line_no)?;
        let expected = *arity.get_or_insert(attr_head.len());
        for found in [attr_head.len(), attr_tail.len()] {
            if found != expected {
                return Err(DataError::Arity {
                    line: line_no,
                    expected,
                    found,
                });
            }
        }
        out.push(RawEvent {
            line: line_no,
            head: fields[0].to_string(),
            relation: fields[1].to_string(),
            tail: fields[2].to_string(),
            timestamp,
            attr_head,
            attr_tail,
        });
    }
    Ok(out)
}

fn resolve(raw: Vec<RawEvent>, meta: &Metadata) -> Result<Vec<Event>, DataError> {
    let tick_of: HashMap<u64, u64> = meta.ticks.iter().enumerate().map(|(i, &t)| (t, i as u64)).collect();
    let mut events = Vec::with_capacity(raw.len());
    for r in raw {
        let lookup = |vocab: &super::Vocabulary, kind, name: &str| {
            vocab.id(name).ok_or_else(|| DataError::UnknownId {
                kind,
                name: name.to_string(),
                line: r.line,
            })
        };
        events.push(Event {
            head: lookup(&meta.entities, "entity", &r.head)?,
            relation: lookup(&meta.relations, "relation", &r.relation)?,
            tail: lookup(&meta.entities, "entity", &r.tail)?,
            attr_head: r.attr_head,
            attr_tail: r.attr_tail,
            timestamp: tick_of[&r.timestamp],
        });
    }
    events.sort_by_key(|e| e.timestamp);
    Ok(events)
}

fn vocab_from(raw: &[RawEvent]) -> (Vocabulary, Vocabulary) {
    let entities = Vocabulary::from_names(raw.iter().flat_map(|r| [r.head.clone(), r.tail.clone()]));
    let relations = Vocabulary::from_names(raw.iter().map(|r| r.relation.clone()));
    (entities, relations)
}

fn distinct_ticks<'a>(raws: impl Iterator<Item = &'a RawEvent>) -> Vec<u64> {
    raws.map(|r| r.timestamp).collect::<BTreeSet<_>>().into_iter().collect()
}

/// Parses one event file. Timestamps are re-indexed to consecutive ticks
/// `0..T`; events come back sorted by tick, ties in input order.
pub fn parse_events(text: &str) -> Result<(Vec<Event>, Metadata), DataError> {
    let mut arity = None;
    let raw = parse_raw(text, &mut arity)?;
    if raw.is_empty() {
        log::warn!("event file contains no events");
    }
    let (entities, relations) = vocab_from(&raw);
    let meta = Metadata {
        entities,
        relations,
        ticks: distinct_ticks(raw.iter()),
        attr_arity: arity.unwrap_or(0),
    };
    let events = resolve(raw, &meta)?;
    Ok((events, meta))
}

fn read(path: &Path) -> Result<String, DataError> {
    std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_events(path: impl AsRef<Path>) -> Result<(Vec<Event>, Metadata), DataError> {
    parse_events(&read(path.as_ref())?)
}

/// Loads three pre-split files. Vocabularies come from the training file
/// alone; ids first seen in valid or test are rejected.
pub fn load_split_files(
    train: impl AsRef<Path>,
    valid: impl AsRef<Path>,
    test: impl AsRef<Path>,
) -> Result<([Vec<Event>; 3], Metadata), DataError> {
    let mut arity = None;
    let raws = [
        parse_raw(&read(train.as_ref())?, &mut arity)?,
        parse_raw(&read(valid.as_ref())?, &mut arity)?,
        parse_raw(&read(test.as_ref())?, &mut arity)?,
    ];
    let (entities, relations) = vocab_from(&raws[0]);
    let meta = Metadata {
        entities,
        relations,
        ticks: distinct_ticks(raws.iter().flatten()),
        attr_arity: arity.unwrap_or(0),
    };
    let [a, b, c] = raws;
    let events = [resolve(a, &meta)?, resolve(b, &meta)?, resolve(c, &meta)?];
    Ok((events, meta))
}

/// Loads a dataset directory holding either `train.tsv`/`valid.tsv`/`test.tsv`
/// or a single `events.tsv` that is split by `fractions`.
pub fn load_dataset(dir: impl AsRef<Path>, fractions: [f64; 3]) -> Result<(DatasetSplit, Metadata), DataError> {
    let dir = dir.as_ref();
    let train = dir.join("train.tsv");
    if train.exists() {
        let ([tr, va, te], meta) = load_split_files(&train, dir.join("valid.tsv"), dir.join("test.tsv"))?;
        let split = DatasetSplit::from_parts(
            build_snapshots(&tr)?,
            build_snapshots(&va)?,
            build_snapshots(&te)?,
            &meta,
            SplitRegime::PreSplit,
        )?;
        return Ok((split, meta));
    }
    let events = dir.join("events.tsv");
    if !events.exists() {
        return Err(DataError::MissingData(dir.to_path_buf()));
    }
    let (events, meta) = load_events(&events)?;
    let snapshots = build_snapshots(&events)?;
    let split = split_by_time(snapshots, fractions, &meta)?;
    Ok((split, meta))
}

fn join_attrs(out: &mut String, attrs: &[f64]) {
    for (i, v) in attrs.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{v}");
    }
}

/// Renders events in the tab-separated event format. `comments` become
/// leading `#` lines.
pub fn format_events<'a>(events: impl IntoIterator<Item = &'a Event>, meta: &Metadata, comments: &[&str]) -> String {
    let mut out = String::new();
    for c in comments {
        let _ = writeln!(out, "# {c}");
    }
    let name = |v: &Vocabulary, id: usize| v.name(id).map_or_else(|| id.to_string(), str::to_string);
    for e in events {
        let _ = write!(
            out,
            "{}\t{}\t{}\t{}\t",
            name(&meta.entities, e.head),
            name(&meta.relations, e.relation),
            name(&meta.entities, e.tail),
            meta.raw_tick(e.timestamp)
        );
        join_attrs(&mut out, &e.attr_head);
        out.push('\t');
        join_attrs(&mut out, &e.attr_tail);
        out.push('\n');
    }
    out
}

fn write(path: &Path, text: &str) -> Result<(), DataError> {
    std::fs::write(path, text).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_events(path: impl AsRef<Path>, events: &[Event], meta: &Metadata, comments: &[&str]) -> Result<(), DataError> {
    write(path.as_ref(), &format_events(events, meta, comments))
}

pub fn write_snapshots(path: impl AsRef<Path>, snapshots: &[Snapshot], meta: &Metadata, comments: &[&str]) -> Result<(), DataError> {
    let events = snapshots.iter().flat_map(|s| s.events().iter());
    write(path.as_ref(), &format_events(events, meta, comments))
}

/// Emits `entities.tsv` and `relations.tsv` (`id<TAB>name`) into `dir`.
pub fn write_vocabulary(dir: impl AsRef<Path>, meta: &Metadata) -> Result<(), DataError> {
    let dir = dir.as_ref();
    write(&dir.join("entities.tsv"), &meta.entities.to_tsv())?;
    write(&dir.join("relations.tsv"), &meta.relations.to_tsv())
}
