//! Line-oriented text dumps of graphs and the structural audit run on them.
//!
//! A graph dump has one vertex per line, tab separated:
//! `digest id [causes] weight round is_last [svp] message`, where lists are
//! comma separated inside brackets, unknown values are `-`, and `message` is
//! the hex wire form (or `-`). Lines starting with `#` are ignored.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

use crate::graph::LamportGraph;
use crate::message::{hash, Digest, Message, VirtualId};
use crate::weight::Weight;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {reason}")]
pub struct DumpError {
    pub line: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DumpRecord {
    pub digest: Digest,
    pub id: VirtualId,
    pub causes: Vec<Digest>,
    pub weight: Weight,
    pub round: Option<u64>,
    pub is_last: Option<bool>,
    pub svp: Option<BTreeSet<u64>>,
    pub message: Option<Message>,
}

fn list<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    let inner: Vec<String> = items.into_iter().map(|x| x.to_string()).collect();
    format!("[{}]", inner.join(","))
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map_or_else(|| "-".to_string(), |x| x.to_string())
}

pub fn dump_graph(g: &LamportGraph) -> String {
    let mut out = String::new();
    for v in g.vertices() {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            v.digest(),
            v.id(),
            list(v.digests()),
            v.weight(),
            opt(v.round()),
            opt(v.is_last().map(u8::from)),
            v.svp().map_or_else(|| "-".to_string(), list),
            hex::encode(v.message().to_bytes()),
        );
    }
    out
}

fn parse_list<T: std::str::FromStr>(field: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    let inner = field
        .strip_prefix('[')
        .and_then(|f| f.strip_suffix(']'))
        .ok_or_else(|| format!("expected a bracketed list, got {field:?}"))?;
    if inner.is_empty() {
        return Ok(Vec::new());
    }
    inner
        .split(',')
        .map(|x| x.parse::<T>().map_err(|e| e.to_string()))
        .collect()
}

fn parse_record(line: &str) -> Result<DumpRecord, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 8 {
        return Err(format!("expected 8 fields, got {}", fields.len()));
    }
    let digest = fields[0].parse::<Digest>().map_err(|e| e.to_string())?;
    let id = fields[1].parse::<VirtualId>().map_err(|e| e.to_string())?;
    let causes = parse_list::<Digest>(fields[2])?;
    let weight = fields[3].parse::<Weight>().map_err(|e| e.to_string())?;
    let round = match fields[4] {
        "-" => None,
        r => Some(r.parse::<u64>().map_err(|e| e.to_string())?),
    };
    let is_last = match fields[5] {
        "-" => None,
        "1" => Some(true),
        "0" => Some(false),
        other => return Err(format!("bad is_last {other:?}")),
    };
    let svp = match fields[6] {
        "-" => None,
        s => Some(parse_list::<u64>(s)?.into_iter().collect()),
    };
    let message = match fields[7] {
        "-" => None,
        hexed => {
            let bytes = hex::decode(hexed).map_err(|e| e.to_string())?;
            Some(Message::from_bytes(&bytes).map_err(|e| e.to_string())?)
        }
    };
    Ok(DumpRecord {
        digest,
        id,
        causes,
        weight,
        round,
        is_last,
        svp,
        message,
    })
}

pub fn parse_dump(text: &str) -> Result<Vec<DumpRecord>, DumpError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(n, l)| parse_record(l).map_err(|reason| DumpError { line: n + 1, reason }))
        .collect()
}

/// Messages of the records in an order where causes come first. Records
/// without a message, or that are part of a cycle or depend on missing
/// digests, are left out.
pub fn messages_in_causal_order(records: &[DumpRecord]) -> Vec<Message> {
    let by_digest: HashMap<&Digest, &DumpRecord> = records.iter().map(|r| (&r.digest, r)).collect();
    topological(records, &by_digest)
        .into_iter()
        .filter_map(|r| r.message.clone())
        .collect()
}

fn topological<'a>(records: &'a [DumpRecord], by_digest: &HashMap<&Digest, &'a DumpRecord>) -> Vec<&'a DumpRecord> {
    let mut pending: HashMap<&Digest, usize> = HashMap::new();
    let mut effects: HashMap<&Digest, Vec<&Digest>> = HashMap::new();
    let mut blocked = BTreeSet::new();
    for r in records {
        pending.insert(&r.digest, r.causes.len());
        for c in &r.causes {
            if by_digest.contains_key(c) {
                effects.entry(c).or_default().push(&r.digest);
            } else {
                blocked.insert(r.digest);
            }
        }
    }
    let mut queue: VecDeque<&Digest> = records
        .iter()
        .filter(|r| r.causes.is_empty())
        .map(|r| &r.digest)
        .collect();
    let mut out = Vec::new();
    while let Some(d) = queue.pop_front() {
        out.push(by_digest[d]);
        for e in effects.get(d).into_iter().flatten() {
            let p = pending.get_mut(e).expect("every record has a counter");
            *p -= 1;
            if *p == 0 && !blocked.contains(*e) {
                queue.push_back(e);
            }
        }
    }
    out
}

/// Result of one structural check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckResult {
    pub name: &'static str,
    pub failures: Vec<String>,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuditReport {
    pub checks: Vec<CheckResult>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }
}

/// Runs the structural checks on a parsed dump: digests, past-closure,
/// acyclicity, round monotonicity, last-vertex separation and svp nesting.
pub fn audit(records: &[DumpRecord]) -> AuditReport {
    let mut by_digest: HashMap<&Digest, &DumpRecord> = HashMap::new();
    let mut digests = CheckResult {
        name: "digests",
        failures: Vec::new(),
    };
    for r in records {
        if by_digest.insert(&r.digest, r).is_some() {
            digests.failures.push(format!("duplicate vertex {}", r.digest));
        }
        if let Some(m) = &r.message {
            if hash(&m.to_bytes()) != r.digest || m.digests() != r.causes.as_slice() || m.id() != &r.id {
                digests.failures.push(format!("record {} does not match its message", r.digest));
            }
        }
    }

    let mut closure = CheckResult {
        name: "past-closure",
        failures: Vec::new(),
    };
    for r in records {
        for c in &r.causes {
            if !by_digest.contains_key(c) {
                closure
                    .failures
                    .push(format!("past-closure violated: {} references missing {}", r.digest, c));
            }
        }
    }

    let mut acyclic = CheckResult {
        name: "acyclicity",
        failures: Vec::new(),
    };
    let sorted = topological(records, &by_digest);
    if closure.passed() && sorted.len() != by_digest.len() {
        acyclic.failures.push(format!(
            "cycle detected: {} vertices cannot be ordered",
            by_digest.len() - sorted.len()
        ));
    }

    let mut monotone = CheckResult {
        name: "round monotonicity",
        failures: Vec::new(),
    };
    let mut separation = CheckResult {
        name: "last-vertex separation",
        failures: Vec::new(),
    };
    for r in records {
        for c in r.causes.iter().filter_map(|c| by_digest.get(c)) {
            if let (Some(rv), Some(rc)) = (r.round, c.round) {
                if rc > rv {
                    monotone
                        .failures
                        .push(format!("round monotonicity violated: {} (round {rv}) acknowledges {} (round {rc})", r.digest, c.digest));
                }
                if c.is_last == Some(true) && rv <= rc {
                    separation.failures.push(format!(
                        "last-vertex separation violated: {} (round {rv}) acknowledges last {} (round {rc})",
                        r.digest, c.digest
                    ));
                }
            }
        }
    }

    let mut nesting = CheckResult {
        name: "svp nesting",
        failures: Vec::new(),
    };
    let mut pasts: BTreeMap<Digest, BTreeSet<Digest>> = BTreeMap::new();
    for r in &sorted {
        let mut past = BTreeSet::from([r.digest]);
        for c in &r.causes {
            if let Some(p) = pasts.get(c) {
                past.extend(p.iter().copied());
            }
        }
        pasts.insert(r.digest, past);
    }
    for r in &sorted {
        let Some(svp) = &r.svp else { continue };
        let Some(&top) = svp.last() else { continue };
        if r.is_last != Some(true) {
            nesting.failures.push(format!("svp nesting violated: {} is not last but has a pattern", r.digest));
            continue;
        }
        if r.round.is_none_or(|round| top >= round) {
            nesting.failures.push(format!("svp nesting violated: {} has pattern round {top} at or above its own", r.digest));
            continue;
        }
        let mut rest = svp.clone();
        rest.remove(&top);
        let nested = pasts[&r.digest].iter().filter_map(|d| by_digest.get(d)).any(|x| {
            x.round == Some(top) && x.is_last == Some(true) && x.svp.as_ref() == Some(&rest)
        });
        if !nested {
            nesting.failures.push(format!(
                "svp nesting violated: no last round-{top} vertex in the past of {} carries the nested sequence",
                r.digest
            ));
        }
    }

    AuditReport {
        checks: vec![digests, closure, acyclic, monotone, separation, nesting],
    }
}

/// Parses `position digest` lines.
pub fn parse_order(text: &str) -> Result<Vec<Digest>, DumpError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#')) {
        let err = |reason: String| DumpError { line: n + 1, reason };
        let (pos, digest) = line
            .split_once('\t')
            .ok_or_else(|| err("expected `position<TAB>digest`".into()))?;
        let pos: usize = pos.parse().map_err(|e: std::num::ParseIntError| err(e.to_string()))?;
        if pos != out.len() {
            return Err(err(format!("expected position {}, got {pos}", out.len())));
        }
        out.push(digest.parse().map_err(|e: crate::message::HexError| err(e.to_string()))?);
    }
    Ok(out)
}

/// Comparison of two order dumps.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderDiff {
    pub common_prefix: usize,
    pub first_divergence: Option<usize>,
    /// Share of the shorter order that agrees position by position.
    pub agreement: f64,
}

pub fn diff_orders(a: &[Digest], b: &[Digest]) -> OrderDiff {
    let common_prefix = a.iter().zip(b).take_while(|(x, y)| x == y).count();
    let shorter = a.len().min(b.len());
    let matching = a.iter().zip(b).filter(|(x, y)| x == y).count();
    OrderDiff {
        common_prefix,
        first_divergence: (common_prefix < shorter).then_some(common_prefix),
        agreement: if shorter == 0 { 1.0 } else { matching as f64 / shorter as f64 },
    }
}
