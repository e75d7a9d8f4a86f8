//! Interaction logs: loading, chronological splitting and block streaming.
//!
//! Raw user and item identifiers are compacted to dense indices. Users are
//! numbered by the time of their first interaction, so ascending user index is
//! also the natural stream order used by the sequential trainers.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    /// `+1.0` for a preferred item, `-1.0` otherwise.
    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    pub fn is_positive(self) -> bool {
        matches!(self, Label::Positive)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Interaction {
    pub user: u32,
    pub item: u32,
    pub timestamp: i64,
    pub label: Label,
}

/// One parsed row before identifier compaction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawRecord {
    pub user: String,
    pub item: String,
    pub timestamp: i64,
    pub label: Label,
}

/// Bidirectional map between raw identifiers and dense indices.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IdMap {
    ids: Vec<String>,
    lookup: HashMap<String, u32>,
}

impl IdMap {
    fn intern(&mut self, raw: &str) -> u32 {
        if let Some(&idx) = self.lookup.get(raw) {
            return idx;
        }
        let idx = self.ids.len() as u32;
        self.ids.push(raw.to_owned());
        self.lookup.insert(raw.to_owned(), idx);
        idx
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, raw: &str) -> Option<u32> {
        self.lookup.get(raw).copied()
    }

    pub fn raw(&self, index: u32) -> Option<&str> {
        self.ids.get(index as usize).map(String::as_str)
    }
}

/// A time-ordered interaction log with compacted indices.
#[derive(Clone, Debug)]
pub struct Corpus {
    /// Sorted by `(user, timestamp)`; ties keep input order.
    pub interactions: Vec<Interaction>,
    pub users: IdMap,
    pub items: IdMap,
}

impl Corpus {
    pub fn from_records(records: Vec<RawRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyCorpus("no interactions".into()));
        }

        // Order users by first interaction time, ties by first appearance.
        let mut first_seen: HashMap<&str, (i64, usize)> = HashMap::new();
        for (pos, rec) in records.iter().enumerate() {
            first_seen
                .entry(rec.user.as_str())
                .and_modify(|e| e.0 = e.0.min(rec.timestamp))
                .or_insert((rec.timestamp, pos));
        }
        let mut user_order: Vec<(&str, (i64, usize))> = first_seen.into_iter().collect();
        user_order.sort_by_key(|&(_, key)| key);

        let mut users = IdMap::default();
        for (raw, _) in &user_order {
            users.intern(raw);
        }

        let mut keyed: Vec<(u32, usize)> = records
            .iter()
            .enumerate()
            .map(|(pos, rec)| (users.index_of(&rec.user).expect("interned"), pos))
            .collect();
        // Stable sort keeps duplicate rows in input order.
        keyed.sort_by_key(|&(user, pos)| (user, records[pos].timestamp));

        let mut items = IdMap::default();
        let interactions = keyed
            .into_iter()
            .map(|(user, pos)| {
                let rec = &records[pos];
                Interaction {
                    user,
                    item: items.intern(&rec.item),
                    timestamp: rec.timestamp,
                    label: rec.label,
                }
            })
            .collect();

        Ok(Corpus {
            interactions,
            users,
            items,
        })
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    /// Per-user contiguous slices, indexed by dense user id.
    pub fn user_streams(&self) -> Vec<&[Interaction]> {
        let mut out = Vec::with_capacity(self.n_users());
        let mut start = 0;
        for user in 0..self.n_users() as u32 {
            let end = start
                + self.interactions[start..]
                    .iter()
                    .take_while(|x| x.user == user)
                    .count();
            out.push(&self.interactions[start..end]);
            start = end;
        }
        out
    }

    /// Writes the corpus back out as `user<TAB>item<TAB>timestamp<TAB>label`
    /// with raw identifiers and `1` / `-1` labels.
    pub fn write_tsv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        for x in &self.interactions {
            writeln!(
                w,
                "{}\t{}\t{}\t{}",
                self.users.raw(x.user).unwrap_or_default(),
                self.items.raw(x.item).unwrap_or_default(),
                x.timestamp,
                if x.label.is_positive() { 1 } else { -1 }
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Delimiter {
    Tab,
    Comma,
}

impl Delimiter {
    fn byte(self) -> u8 {
        match self {
            Delimiter::Tab => b'\t',
            Delimiter::Comma => b',',
        }
    }
}

/// Zero-based column positions of the four required fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ColumnMap {
    pub user: usize,
    pub item: usize,
    pub timestamp: usize,
    pub label: usize,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            user: 0,
            item: 1,
            timestamp: 2,
            label: 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LabelColumn {
    /// `1`, `+1`, `true` are positive; `-1`, `0`, `false` negative.
    Binary,
    /// Explicit ratings, positive when `rating >= threshold`.
    Rating { threshold: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InputFormat {
    pub delimiter: Delimiter,
    pub columns: ColumnMap,
    pub label: LabelColumn,
    pub has_header: bool,
}

impl Default for InputFormat {
    fn default() -> Self {
        InputFormat {
            delimiter: Delimiter::Tab,
            columns: ColumnMap::default(),
            label: LabelColumn::Binary,
            has_header: false,
        }
    }
}

fn parse_label(field: &str, column: LabelColumn) -> std::result::Result<Label, String> {
    match column {
        LabelColumn::Binary => match field {
            "1" | "+1" | "true" => Ok(Label::Positive),
            "-1" | "0" | "false" => Ok(Label::Negative),
            other => Err(format!("invalid label {other:?}")),
        },
        LabelColumn::Rating { threshold } => {
            let rating: f64 = field
                .parse()
                .map_err(|_| format!("invalid rating {field:?}"))?;
            if !rating.is_finite() {
                return Err(format!("non-finite rating {field:?}"));
            }
            Ok(if rating >= threshold {
                Label::Positive
            } else {
                Label::Negative
            })
        }
    }
}

/// Parses delimiter-separated rows. Lines starting with `#` are skipped.
pub fn read_records<R: Read>(reader: R, format: &InputFormat) -> Result<Vec<RawRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(format.delimiter.byte())
        .has_headers(format.has_header)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);

    let cols = format.columns;
    let width = cols.user.max(cols.item).max(cols.timestamp).max(cols.label) + 1;
    let mut out = Vec::new();
    let mut row = csv::StringRecord::new();
    loop {
        let more = rdr.read_record(&mut row).map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::Parse {
                line,
                message: e.to_string(),
            }
        })?;
        if !more {
            break;
        }
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let fail = |message: String| Error::Parse { line, message };
        if row.len() < width {
            return Err(fail(format!(
                "expected at least {width} columns, found {}",
                row.len()
            )));
        }
        let timestamp_field = &row[cols.timestamp];
        let timestamp = timestamp_field
            .parse::<i64>()
            .map_err(|_| fail(format!("invalid timestamp {timestamp_field:?}")))?;
        let label = parse_label(&row[cols.label], format.label).map_err(fail)?;
        out.push(RawRecord {
            user: row[cols.user].to_owned(),
            item: row[cols.item].to_owned(),
            timestamp,
            label,
        });
    }
    Ok(out)
}

pub fn load_interactions(path: &Path, format: &InputFormat) -> Result<Corpus> {
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    let records = read_records(file, format)?;
    if records.is_empty() {
        return Err(Error::EmptyCorpus(format!("{} has no rows", path.display())));
    }
    Corpus::from_records(records)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.7,
        }
    }
}

impl SplitSpec {
    pub fn new(train_fraction: f64) -> Result<Self> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::config(format!(
                "train fraction must lie in (0, 1), got {train_fraction}"
            )));
        }
        Ok(SplitSpec { train_fraction })
    }

    /// `ceil(f * n)`, guarded against representation error in `f`.
    pub fn train_len(&self, n: usize) -> usize {
        let raw = self.train_fraction * n as f64;
        ((raw - 1e-9).ceil().max(0.0) as usize).min(n)
    }
}

/// Per-user train and test streams after a chronological split.
#[derive(Clone, Debug)]
pub struct SplitCorpus {
    pub n_users: usize,
    pub n_items: usize,
    pub train: Vec<Vec<Interaction>>,
    pub test: Vec<Vec<Interaction>>,
    /// Users excluded by a filter are inactive: no train, no test.
    pub active: Vec<bool>,
}

impl SplitCorpus {
    /// Whether the user's train stream holds at least one item of each label.
    pub fn trainable(&self, user: usize) -> bool {
        has_both_labels(&self.train[user])
    }

    pub fn trainable_users(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_users).filter(|&u| self.trainable(u))
    }

    pub fn n_train_interactions(&self) -> usize {
        self.train.iter().map(Vec::len).sum()
    }

    /// Copy keeping only users for which `keep` holds.
    pub fn retain_users(&self, keep: &[bool]) -> SplitCorpus {
        let mut out = self.clone();
        for u in 0..self.n_users {
            if !keep[u] {
                out.train[u].clear();
                out.test[u].clear();
                out.active[u] = false;
            }
        }
        out
    }

    pub fn active_users(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    /// Mean number of complete blocks over trainable users, rounded, at least 1.
    pub fn average_block_count(&self) -> usize {
        let counts: Vec<usize> = self
            .trainable_users()
            .map(|u| stream_blocks(&self.train[u]).count())
            .collect();
        if counts.is_empty() {
            return 1;
        }
        let mean = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
        (mean.round() as usize).max(1)
    }
}

pub fn has_both_labels(stream: &[Interaction]) -> bool {
    let pos = stream.iter().any(|x| x.label.is_positive());
    let neg = stream.iter().any(|x| !x.label.is_positive());
    pos && neg
}

/// Distinct positive and negative items of a stream, in first-appearance order.
pub fn item_sets(stream: &[Interaction]) -> (Vec<u32>, Vec<u32>) {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for x in stream {
        let set = if x.label.is_positive() {
            &mut pos
        } else {
            &mut neg
        };
        if !set.contains(&x.item) {
            set.push(x.item);
        }
    }
    (pos, neg)
}

/// Sends the oldest `ceil(f * n_u)` interactions of every user to train and
/// the rest to test.
pub fn chronological_split(corpus: &Corpus, spec: SplitSpec) -> Result<SplitCorpus> {
    let spec = SplitSpec::new(spec.train_fraction)?;
    let mut train = Vec::with_capacity(corpus.n_users());
    let mut test = Vec::with_capacity(corpus.n_users());
    for stream in corpus.user_streams() {
        let cut = spec.train_len(stream.len());
        train.push(stream[..cut].to_vec());
        test.push(stream[cut..].to_vec());
    }
    // A user with no train rows cannot be scored; drop their test rows too.
    for u in 0..train.len() {
        if train[u].is_empty() {
            test[u].clear();
        }
    }
    Ok(SplitCorpus {
        n_users: corpus.n_users(),
        n_items: corpus.n_items(),
        active: train.iter().map(|t| !t.is_empty()).collect(),
        train,
        test,
    })
}

/// A run of non-preferred items closed by preferred ones, for one user.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub user: u32,
    pub index: usize,
    pub negatives: Vec<u32>,
    pub positives: Vec<u32>,
}

impl Block {
    pub fn n_pairs(&self) -> usize {
        self.negatives.len() * self.positives.len()
    }
}

/// Iterator over the blocks of one user's time-ordered stream.
///
/// Items are added to the negative or positive set by label; as soon as both
/// sets are non-empty the block is emitted and both sets are reset. Trailing
/// items that never complete a block are dropped. An item already present in
/// the open block is ignored, which keeps the two sets disjoint.
pub struct BlockStream<'a> {
    events: std::slice::Iter<'a, Interaction>,
    next_index: usize,
}

pub fn stream_blocks(stream: &[Interaction]) -> BlockStream<'_> {
    BlockStream {
        events: stream.iter(),
        next_index: 0,
    }
}

impl Iterator for BlockStream<'_> {
    type Item = Block;

    fn next(&mut self) -> Option<Block> {
        let mut negatives: Vec<u32> = Vec::new();
        let mut positives: Vec<u32> = Vec::new();
        for x in self.events.by_ref() {
            if negatives.contains(&x.item) || positives.contains(&x.item) {
                continue;
            }
            if x.label.is_positive() {
                positives.push(x.item);
            } else {
                negatives.push(x.item);
            }
            if !negatives.is_empty() && !positives.is_empty() {
                let block = Block {
                    user: x.user,
                    index: self.next_index,
                    negatives,
                    positives,
                };
                self.next_index += 1;
                return Some(block);
            }
        }
        None
    }
}
