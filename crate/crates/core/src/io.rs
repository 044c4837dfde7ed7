//! Line-delimited result lists and profiles, and JSON documents.
//!
//! Result lists hold one item per line:
//!
//! ```text
//! {"user_id":"u1","query_id":"q1","rank":1,"item_id":"doc9","annotations":{"stance":{"pro":1.0}}}
//! ```
//!
//! Ranks of a list must be exactly `1..=k`. Repeating a line verbatim is
//! harmless; two different records for the same `(user, query, rank)` are a
//! format error. Annotation weights may be off by up to [`LOAD_TOLERANCE`];
//! sums further from 1 than the in-memory tolerance are renormalized on load,
//! so everything the writer emits reloads unchanged.
//!
//! Profiles hold one user per line: `{"user_id", "protected", "other"}`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{BiasError, Result};
use crate::ranking::{
    check_weights, AttrValue, AttributeKind, AttributeSchema, GroundTruth, RankedList, ResultItem,
    UserProfile, WeightMap, SUM_TOLERANCE,
};

/// Tolerance on annotation weights summing to one in input files.
pub const LOAD_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ListRecord {
    pub user_id: String,
    pub query_id: String,
    pub rank: usize,
    pub item_id: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub annotations: BTreeMap<String, WeightMap>,
}

pub type ListKey = (String, String);

/// Lists keyed by `(user_id, query_id)`, plus anything worth telling the
/// user that did not prevent loading.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadedLists {
    pub lists: BTreeMap<ListKey, RankedList>,
    pub warnings: Vec<String>,
}

fn format_error(path: &str, line: usize, message: impl Into<String>) -> BiasError {
    BiasError::Format {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

fn open(path: &Path) -> Result<BufReader<fs::File>> {
    fs::File::open(path)
        .map(BufReader::new)
        .map_err(|e| BiasError::io(path, e))
}

/// Non-blank lines with their 1-based line numbers.
fn lines(reader: impl BufRead, label: &str) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| format_error(label, i + 1, e.to_string()))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

fn renormalize(weights: &mut WeightMap) {
    let total: f64 = weights.values().sum();
    if (total - 1.0).abs() <= SUM_TOLERANCE {
        return;
    }
    for w in weights.values_mut() {
        *w /= total;
    }
}

pub fn load_result_lists(path: impl AsRef<Path>) -> Result<LoadedLists> {
    let path = path.as_ref();
    read_result_lists(open(path)?, &path.display().to_string())
}

/// Parses result-list records; `label` names the source in errors.
pub fn read_result_lists(reader: impl BufRead, label: &str) -> Result<LoadedLists> {
    let lines = lines(reader, label)?;
    let mut out = LoadedLists::default();
    if lines.is_empty() {
        out.warnings.push(format!("{label}: no result lists"));
        return Ok(out);
    }
    // (user, query) -> rank -> (line, record)
    let mut grouped: BTreeMap<ListKey, BTreeMap<usize, (usize, ListRecord)>> = BTreeMap::new();
    let mut repeated = 0usize;
    for (n, line) in lines {
        let mut rec: ListRecord =
            serde_json::from_str(&line).map_err(|e| format_error(label, n, e.to_string()))?;
        if rec.rank == 0 {
            return Err(format_error(label, n, "ranks start at 1"));
        }
        for (attr, weights) in &mut rec.annotations {
            check_weights(weights, LOAD_TOLERANCE)
                .map_err(|e| format_error(label, n, format!("attribute {attr:?}: {e}")))?;
            renormalize(weights);
        }
        let ranks = grouped
            .entry((rec.user_id.clone(), rec.query_id.clone()))
            .or_default();
        match ranks.get(&rec.rank) {
            Some((_, existing)) if *existing == rec => repeated += 1,
            Some((first, _)) => {
                return Err(format_error(
                    label,
                    n,
                    format!(
                        "second record for user {:?}, query {:?}, rank {} (first on line {first})",
                        rec.user_id, rec.query_id, rec.rank
                    ),
                ))
            }
            None => {
                ranks.insert(rec.rank, (n, rec));
            }
        }
    }
    if repeated > 0 {
        out.warnings
            .push(format!("{label}: {repeated} repeated line(s) ignored"));
    }
    for ((user, query), ranks) in grouped {
        let mut items = Vec::with_capacity(ranks.len());
        for (expected, (rank, (n, rec))) in (1..).zip(ranks) {
            if rank != expected {
                return Err(format_error(
                    label,
                    n,
                    format!("list for user {user:?}, query {query:?} has no rank {expected}"),
                ));
            }
            items.push(
                ResultItem::new(rec.item_id, rec.annotations)
                    .map_err(|e| format_error(label, n, e.to_string()))?,
            );
        }
        let list = RankedList::new(query.clone(), user.clone(), items)
            .map_err(|e| format_error(label, 0, format!("user {user:?}, query {query:?}: {e}")))?;
        out.lists.insert((user, query), list);
    }
    Ok(out)
}

pub fn write_result_lists<'a>(
    mut w: impl Write,
    lists: impl IntoIterator<Item = &'a RankedList>,
) -> std::io::Result<()> {
    for list in lists {
        for (i, item) in list.items().iter().enumerate() {
            let rec = ListRecord {
                user_id: list.user_id().to_string(),
                query_id: list.query_id().to_string(),
                rank: i + 1,
                item_id: item.item_id().to_string(),
                annotations: item.annotations().clone(),
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn save_result_lists<'a>(
    path: impl AsRef<Path>,
    lists: impl IntoIterator<Item = &'a RankedList>,
) -> Result<()> {
    let mut buf = Vec::new();
    write_result_lists(&mut buf, lists).expect("writing to memory");
    write_atomic(path, &buf)
}

pub fn load_profiles(path: impl AsRef<Path>) -> Result<Vec<UserProfile>> {
    let path = path.as_ref();
    read_profiles(open(path)?, &path.display().to_string())
}

pub fn read_profiles(reader: impl BufRead, label: &str) -> Result<Vec<UserProfile>> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for (n, line) in lines(reader, label)? {
        let p: UserProfile =
            serde_json::from_str(&line).map_err(|e| format_error(label, n, e.to_string()))?;
        if !seen.insert(p.user_id().to_string()) {
            return Err(format_error(
                label,
                n,
                format!("duplicate profile {:?}", p.user_id()),
            ));
        }
        out.push(p);
    }
    Ok(out)
}

pub fn write_profiles<'a>(
    mut w: impl Write,
    profiles: impl IntoIterator<Item = &'a UserProfile>,
) -> std::io::Result<()> {
    for p in profiles {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_profiles<'a>(
    path: impl AsRef<Path>,
    profiles: impl IntoIterator<Item = &'a UserProfile>,
) -> Result<()> {
    let mut buf = Vec::new();
    write_profiles(&mut buf, profiles).expect("writing to memory");
    write_atomic(path, &buf)
}

/// Reads one JSON document.
pub fn load_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| BiasError::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| format_error(&path.display().to_string(), e.line(), e.to_string()))
}

/// Pretty JSON with a trailing newline.
pub fn to_json_pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut buf = serde_json::to_vec_pretty(value).expect("serializable value");
    buf.push(b'\n');
    buf
}

pub fn save_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    write_atomic(path, &to_json_pretty(value))
}

/// Writes `bytes` to a temporary sibling, then renames it over `path`.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let mut tmp = PathBuf::from(path);
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    tmp.set_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, bytes).map_err(|e| BiasError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| BiasError::io(path, e))
}

/// Attribute declarations for an audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaFile {
    pub attributes: Vec<AttributeSchema>,
}

impl SchemaFile {
    pub fn get(&self, name: &str) -> Option<&AttributeSchema> {
        self.attributes.iter().find(|a| a.name() == name)
    }

    /// The differentiating attribute called `name`, or the only one declared.
    pub fn differentiating(&self, name: Option<&str>) -> Result<&AttributeSchema> {
        let mut candidates = self
            .attributes
            .iter()
            .filter(|a| a.kind() == AttributeKind::Differentiating)
            .filter(|a| name.is_none_or(|n| a.name() == n));
        match (candidates.next(), candidates.next(), name) {
            (Some(a), None, _) | (Some(a), Some(_), Some(_)) => Ok(a),
            (None, _, Some(n)) => Err(BiasError::Schema(format!(
                "no differentiating attribute {n:?} in the schema"
            ))),
            (None, _, None) => Err(BiasError::Schema(
                "the schema declares no differentiating attribute".into(),
            )),
            (Some(_), Some(_), None) => Err(BiasError::Config(
                "the schema declares several differentiating attributes; set `attribute`".into(),
            )),
        }
    }

    /// Checks that every profile's protected values are declared.
    pub fn check_profiles(&self, profiles: &[UserProfile]) -> Result<()> {
        for p in profiles {
            for (name, value) in p.protected() {
                let Some(schema) = self.get(name) else {
                    continue;
                };
                let known = match value {
                    AttrValue::Text(t) => schema.index_of(t).is_some(),
                    AttrValue::Number(_) => false,
                };
                if !known {
                    return Err(BiasError::Profile(format!(
                        "user {:?}: {value} is not a declared value of {name:?}",
                        p.user_id()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A ground-truth document: one distribution for every query, or a default
/// plus per-query overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroundTruthFile {
    Single(GroundTruth),
    PerQuery {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        default: Option<GroundTruth>,
        queries: BTreeMap<String, GroundTruth>,
    },
}
