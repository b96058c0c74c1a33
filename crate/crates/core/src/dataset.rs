//! Interaction log ingestion, the per-user interaction filter and the
//! chronological leave-one-out split.
//!
//! Each retained user's sequence is ordered by timestamp (stable, so equal
//! timestamps keep input order). The last item is the test item, the one
//! before it the validation item, and everything earlier is the training
//! prefix.

use std::collections::HashMap;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_index, Error, Result};

pub const DEFAULT_MIN_USER_INTERACTIONS: usize = 5;

const SNAPSHOT_FORMAT: &str = "iafmc-dataset";
const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct RawInteraction {
    pub user_key: String,
    pub item_key: String,
    pub timestamp: i64,
    /// Parsed for validation only; all interactions count as positive feedback.
    pub rating: Option<f64>,
}

/// Positions of the fields within one CSV line.
///
/// The default (`ColumnMap::auto()`) accepts `user,item,timestamp` and
/// `user,item,rating,timestamp`. An explicit map such as
/// `user=0,item=1,rating=2,timestamp=3` picks columns out of wider exports;
/// extra columns are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ColumnMap {
    explicit: Option<ExplicitColumns>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ExplicitColumns {
    user: usize,
    item: usize,
    rating: Option<usize>,
    timestamp: usize,
}

impl ColumnMap {
    pub fn auto() -> Self {
        Self::default()
    }

    pub fn explicit(user: usize, item: usize, rating: Option<usize>, timestamp: usize) -> Self {
        Self {
            explicit: Some(ExplicitColumns {
                user,
                item,
                rating,
                timestamp,
            }),
        }
    }

    fn resolve(&self, field_count: usize) -> std::result::Result<ExplicitColumns, String> {
        match self.explicit {
            Some(cols) => {
                let needed = [cols.user, cols.item, cols.timestamp]
                    .into_iter()
                    .chain(cols.rating)
                    .max()
                    .unwrap_or(0)
                    + 1;
                if field_count < needed {
                    return Err(format!("expected at least {needed} fields, found {field_count}"));
                }
                Ok(cols)
            }
            None => match field_count {
                3 => Ok(ExplicitColumns {
                    user: 0,
                    item: 1,
                    rating: None,
                    timestamp: 2,
                }),
                4 => Ok(ExplicitColumns {
                    user: 0,
                    item: 1,
                    rating: Some(2),
                    timestamp: 3,
                }),
                n => Err(format!("expected 3 or 4 fields, found {n}")),
            },
        }
    }
}

impl FromStr for ColumnMap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == "auto" {
            return Ok(Self::auto());
        }
        let (mut user, mut item, mut rating, mut timestamp) = (None, None, None, None);
        for part in s.split(',') {
            let (name, pos) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("column spec `{part}` is not name=index")))?;
            let pos: usize = pos
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("column index `{pos}` is not an integer")))?;
            let slot = match name.trim() {
                "user" => &mut user,
                "item" => &mut item,
                "rating" => &mut rating,
                "timestamp" => &mut timestamp,
                other => return Err(Error::InvalidArgument(format!("unknown column `{other}`"))),
            };
            *slot = Some(pos);
        }
        match (user, item, timestamp) {
            (Some(u), Some(i), Some(t)) => Ok(Self::explicit(u, i, rating, t)),
            _ => Err(Error::InvalidArgument(
                "column spec needs user, item and timestamp".into(),
            )),
        }
    }
}

/// Parses comma-separated interaction lines. Blank lines are skipped; line
/// numbers in errors are 1-based and count every physical line.
pub fn parse_interactions<R: BufRead>(reader: R, columns: ColumnMap, skip_header: bool) -> Result<Vec<RawInteraction>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if skip_header && idx == 0 {
            continue;
        }
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_line(line, line_no, columns)?);
    }
    Ok(out)
}

pub fn parse_interactions_str(text: &str) -> Result<Vec<RawInteraction>> {
    parse_interactions(text.as_bytes(), ColumnMap::auto(), false)
}

fn parse_line(line: &str, line_no: usize, columns: ColumnMap) -> Result<RawInteraction> {
    let err = |message: String| Error::Parse { line: line_no, message };
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    let cols = columns.resolve(fields.len()).map_err(err)?;

    let user_key = fields[cols.user];
    let item_key = fields[cols.item];
    if user_key.is_empty() || item_key.is_empty() {
        return Err(err("empty user or item key".into()));
    }
    let ts_field = fields[cols.timestamp];
    let timestamp: i64 = ts_field
        .parse()
        .map_err(|_| err(format!("timestamp `{ts_field}` is not an integer")))?;
    let rating = match cols.rating.map(|c| fields[c]) {
        None | Some("") => None,
        Some(r) => Some(
            r.parse::<f64>()
                .map_err(|_| err(format!("rating `{r}` is not a number")))?,
        ),
    };
    Ok(RawInteraction {
        user_key: user_key.to_owned(),
        item_key: item_key.to_owned(),
        timestamp,
        rating,
    })
}

/// A user's sequence cut into training prefix, validation item and test item.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Split<'a> {
    pub train: &'a [usize],
    pub validation: usize,
    pub test: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HoldOut {
    Validation,
    Test,
}

impl FromStr for HoldOut {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "validation" | "val" => Ok(Self::Validation),
            "test" => Ok(Self::Test),
            other => Err(Error::InvalidArgument(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    user_keys: Vec<String>,
    item_keys: Vec<String>,
    user_index: HashMap<String, usize>,
    item_index: HashMap<String, usize>,
    sequences: Vec<Vec<usize>>,
    /// Sorted, deduplicated items of each training prefix.
    train_items: Vec<Vec<usize>>,
    min_user_interactions: usize,
}

/// Groups interactions by user, drops users below `min_user_interactions`,
/// orders each sequence by timestamp and assigns contiguous indices in order
/// of first appearance among the retained interactions.
pub fn build_dataset(raw: &[RawInteraction], min_user_interactions: usize) -> Result<Dataset> {
    if min_user_interactions < 3 {
        return Err(Error::InvalidArgument(format!(
            "min_user_interactions must be at least 3, got {min_user_interactions}"
        )));
    }

    let mut user_order: Vec<&str> = Vec::new();
    let mut by_user: HashMap<&str, Vec<&RawInteraction>> = HashMap::new();
    for r in raw {
        by_user
            .entry(r.user_key.as_str())
            .or_insert_with(|| {
                user_order.push(r.user_key.as_str());
                Vec::new()
            })
            .push(r);
    }

    let mut user_keys = Vec::new();
    let mut item_keys: Vec<String> = Vec::new();
    let mut item_index: HashMap<String, usize> = HashMap::new();
    let mut sequences = Vec::new();
    for key in user_order {
        let mut events = by_user.remove(key).unwrap_or_default();
        if events.len() < min_user_interactions {
            continue;
        }
        events.sort_by_key(|r| r.timestamp);
        let seq = events
            .iter()
            .map(|r| {
                *item_index.entry(r.item_key.clone()).or_insert_with(|| {
                    item_keys.push(r.item_key.clone());
                    item_keys.len() - 1
                })
            })
            .collect();
        user_keys.push(key.to_owned());
        sequences.push(seq);
    }

    if user_keys.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(Dataset::assemble(
        user_keys,
        item_keys,
        sequences,
        min_user_interactions,
    ))
}

impl Dataset {
    fn assemble(
        user_keys: Vec<String>,
        item_keys: Vec<String>,
        sequences: Vec<Vec<usize>>,
        min_user_interactions: usize,
    ) -> Self {
        let user_index = user_keys.iter().enumerate().map(|(i, k)| (k.clone(), i)).collect();
        let item_index = item_keys.iter().enumerate().map(|(i, k)| (k.clone(), i)).collect();
        let train_items = sequences
            .iter()
            .map(|s| {
                let mut items = s[..s.len() - 2].to_vec();
                items.sort_unstable();
                items.dedup();
                items
            })
            .collect();
        Self {
            user_keys,
            item_keys,
            user_index,
            item_index,
            sequences,
            train_items,
            min_user_interactions,
        }
    }

    /// Builds a dataset directly from index sequences over `n_items` items,
    /// with synthetic keys `u<idx>` / `i<idx>`. Items that never occur keep
    /// their index.
    pub fn from_sequences(sequences: Vec<Vec<usize>>, n_items: usize) -> Result<Self> {
        if sequences.is_empty() || n_items == 0 {
            return Err(Error::EmptyDataset);
        }
        validate_sequences(&sequences, n_items, 3).map_err(Error::InvalidArgument)?;
        let user_keys = (0..sequences.len()).map(|u| format!("u{u}")).collect();
        let item_keys = (0..n_items).map(|i| format!("i{i}")).collect();
        Ok(Self::assemble(user_keys, item_keys, sequences, 3))
    }

    pub fn n_users(&self) -> usize {
        self.sequences.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_keys.len()
    }

    pub fn min_user_interactions(&self) -> usize {
        self.min_user_interactions
    }

    pub fn sequence(&self, user: usize) -> &[usize] {
        &self.sequences[user]
    }

    pub fn sequences(&self) -> &[Vec<usize>] {
        &self.sequences
    }

    pub fn split(&self, user: usize) -> Split<'_> {
        let s = &self.sequences[user];
        let n = s.len();
        Split {
            train: &s[..n - 2],
            validation: s[n - 2],
            test: s[n - 1],
        }
    }

    pub fn train(&self, user: usize) -> &[usize] {
        let s = &self.sequences[user];
        &s[..s.len() - 2]
    }

    pub fn held_out(&self, user: usize, which: HoldOut) -> usize {
        let split = self.split(user);
        match which {
            HoldOut::Validation => split.validation,
            HoldOut::Test => split.test,
        }
    }

    pub fn train_prefixes(&self) -> impl Iterator<Item = &[usize]> + '_ {
        (0..self.n_users()).map(move |u| self.train(u))
    }

    /// Distinct training items of `user`, ascending.
    pub fn train_items(&self, user: usize) -> &[usize] {
        &self.train_items[user]
    }

    pub fn in_train(&self, user: usize, item: usize) -> bool {
        self.train_items[user].binary_search(&item).is_ok()
    }

    /// How often each item occurs across all training prefixes.
    pub fn train_item_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_items()];
        for prefix in self.train_prefixes() {
            for &i in prefix {
                counts[i] += 1;
            }
        }
        counts
    }

    pub fn user_key(&self, user: usize) -> Result<&str> {
        check_index("user", user, self.n_users())?;
        Ok(&self.user_keys[user])
    }

    pub fn item_key(&self, item: usize) -> Result<&str> {
        check_index("item", item, self.n_items())?;
        Ok(&self.item_keys[item])
    }

    pub fn user_id(&self, key: &str) -> Option<usize> {
        self.user_index.get(key).copied()
    }

    pub fn item_id(&self, key: &str) -> Option<usize> {
        self.item_index.get(key).copied()
    }

    pub fn n_interactions(&self) -> usize {
        self.sequences.iter().map(Vec::len).sum()
    }

    pub fn stats(&self) -> DatasetStats {
        let users = self.n_users();
        let items = self.n_items();
        let interactions = self.n_interactions();
        DatasetStats {
            users,
            items,
            interactions,
            density: interactions as f64 / (users as f64 * items as f64),
            avg_per_user: interactions as f64 / users as f64,
        }
    }

    pub fn to_writer<W: Write>(&self, writer: W) -> Result<()> {
        let snapshot = Snapshot {
            format: SNAPSHOT_FORMAT.into(),
            version: SNAPSHOT_VERSION,
            min_user_interactions: self.min_user_interactions,
            users: self.user_keys.clone(),
            items: self.item_keys.clone(),
            sequences: self.sequences.clone(),
        };
        serde_json::to_writer(writer, &snapshot).map_err(|e| Error::Io(e.into()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.to_writer(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let snapshot: Snapshot = serde_json::from_reader(reader).map_err(|e| Error::Load(e.to_string()))?;
        if snapshot.format != SNAPSHOT_FORMAT {
            return Err(Error::Load(format!("unexpected format tag `{}`", snapshot.format)));
        }
        if snapshot.version != SNAPSHOT_VERSION {
            return Err(Error::Load(format!(
                "unsupported dataset version {} (expected {SNAPSHOT_VERSION})",
                snapshot.version
            )));
        }
        if snapshot.sequences.is_empty() {
            return Err(Error::Load("dataset has no users".into()));
        }
        if snapshot.users.len() != snapshot.sequences.len() {
            return Err(Error::Load("user key count does not match sequence count".into()));
        }
        validate_sequences(
            &snapshot.sequences,
            snapshot.items.len(),
            snapshot.min_user_interactions.max(3),
        )
        .map_err(Error::Load)?;
        let ds = Self::assemble(
            snapshot.users,
            snapshot.items,
            snapshot.sequences,
            snapshot.min_user_interactions,
        );
        if ds.user_index.len() != ds.n_users() || ds.item_index.len() != ds.n_items() {
            return Err(Error::Load("duplicate user or item keys".into()));
        }
        Ok(ds)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_reader(bytes)
    }
}

fn validate_sequences(sequences: &[Vec<usize>], n_items: usize, min_len: usize) -> std::result::Result<(), String> {
    for (u, s) in sequences.iter().enumerate() {
        if s.len() < min_len {
            return Err(format!(
                "user {u} has {} interactions, need at least {min_len}",
                s.len()
            ));
        }
        if let Some(&bad) = s.iter().find(|&&i| i >= n_items) {
            return Err(format!("user {u} references item {bad} but only {n_items} items exist"));
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    format: String,
    version: u32,
    min_user_interactions: usize,
    users: Vec<String>,
    items: Vec<String>,
    sequences: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub density: f64,
    pub avg_per_user: f64,
}
