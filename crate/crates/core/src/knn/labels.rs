//! Labeled channel sets and the labels CSV (`channel_id,label_kind,label,tag`).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Binary,
    Categorical,
    Numeric,
}

impl LabelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelKind::Binary => "binary",
            LabelKind::Categorical => "categorical",
            LabelKind::Numeric => "numeric",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Label {
    Binary(bool),
    Categorical(String),
    /// Political lean: -1 left, 0 centre, 1 right.
    Numeric(f64),
}

impl Label {
    pub fn kind(&self) -> LabelKind {
        match self {
            Label::Binary(_) => LabelKind::Binary,
            Label::Categorical(_) => LabelKind::Categorical,
            Label::Numeric(_) => LabelKind::Numeric,
        }
    }

    /// Binary labels as 0/1, numeric labels as themselves.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Label::Binary(b) => Some(if *b { 1.0 } else { 0.0 }),
            Label::Numeric(x) => Some(*x),
            Label::Categorical(_) => None,
        }
    }

    pub fn parse(kind: LabelKind, raw: &str) -> Result<Self> {
        let raw = raw.trim();
        match kind {
            LabelKind::Binary => match raw {
                "0" => Ok(Label::Binary(false)),
                "1" => Ok(Label::Binary(true)),
                _ => Err(Error::InvalidLabel(format!("binary label must be 0 or 1, got {raw:?}"))),
            },
            LabelKind::Categorical if !raw.is_empty() => Ok(Label::Categorical(raw.to_string())),
            LabelKind::Categorical => Err(Error::InvalidLabel("empty categorical label".into())),
            LabelKind::Numeric => match raw {
                "-1" => Ok(Label::Numeric(-1.0)),
                "0" => Ok(Label::Numeric(0.0)),
                "1" => Ok(Label::Numeric(1.0)),
                _ => Err(Error::InvalidLabel(format!("numeric label must be -1, 0 or 1, got {raw:?}"))),
            },
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Binary(b) => write!(f, "{}", u8::from(*b)),
            Label::Categorical(s) => f.write_str(s),
            Label::Numeric(x) => write!(f, "{x}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    kind: LabelKind,
    labels: BTreeMap<String, Label>,
}

impl LabeledDataset {
    pub fn new(kind: LabelKind, labels: BTreeMap<String, Label>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyInput("labeled dataset"));
        }
        let mut ds = LabeledDataset { kind, labels: BTreeMap::new() };
        for (id, label) in labels {
            ds.insert(id, label)?;
        }
        Ok(ds)
    }

    pub fn binary<I, S>(items: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, bool)>,
        S: Into<String>,
    {
        Self::new(
            LabelKind::Binary,
            items.into_iter().map(|(id, b)| (id.into(), Label::Binary(b))).collect(),
        )
    }

    pub fn kind(&self) -> LabelKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Label> {
        self.labels.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.labels.contains_key(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Label)> {
        self.labels.iter()
    }

    pub fn channels(&self) -> BTreeSet<String> {
        self.labels.keys().cloned().collect()
    }

    /// Insert or replace a label; the label must match the dataset's kind.
    pub fn insert(&mut self, id: String, label: Label) -> Result<()> {
        if label.kind() != self.kind {
            return Err(Error::LabelKind { expected: self.kind.as_str(), got: label.kind().as_str() });
        }
        if let Label::Numeric(x) = label {
            if ![-1.0, 0.0, 1.0].contains(&x) {
                return Err(Error::InvalidLabel(format!("numeric label must be -1, 0 or 1, got {x}")));
            }
        }
        if id.is_empty() {
            return Err(Error::InvalidLabel("empty channel id".into()));
        }
        self.labels.insert(id, label);
        Ok(())
    }

    fn binary_filter(&self, want: bool) -> BTreeSet<String> {
        self.labels
            .iter()
            .filter(|(_, l)| matches!(l, Label::Binary(b) if *b == want))
            .map(|(id, _)| id.clone())
            .collect()
    }

    pub fn positives(&self) -> BTreeSet<String> {
        self.binary_filter(true)
    }

    pub fn negatives(&self) -> BTreeSet<String> {
        self.binary_filter(false)
    }

    /// Copy without the given channels. May be empty, unlike a freshly built dataset.
    pub fn without(&self, removed: &BTreeSet<String>) -> LabeledDataset {
        LabeledDataset {
            kind: self.kind,
            labels: self
                .labels
                .iter()
                .filter(|(id, _)| !removed.contains(*id))
                .map(|(id, l)| (id.clone(), l.clone()))
                .collect(),
        }
    }
}

/// One row of the labels CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRow {
    pub channel_id: String,
    pub label_kind: LabelKind,
    pub label: String,
    pub tag: String,
}

pub fn read_label_rows(path: &Path) -> Result<Vec<LabelRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| map_csv(path, e))?;
    let mut rows = Vec::new();
    for (i, row) in rdr.deserialize::<LabelRow>().enumerate() {
        let row = row.map_err(|e| Error::format(path, i + 2, e.to_string()))?;
        Label::parse(row.label_kind, &row.label).map_err(|e| Error::format(path, i + 2, e.to_string()))?;
        rows.push(row);
    }
    Ok(rows)
}

fn map_csv(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, 0, format!("{other:?}")),
    }
}

/// Tags present in the rows, sorted.
pub fn tags(rows: &[LabelRow]) -> Vec<String> {
    rows.iter().map(|r| r.tag.clone()).collect::<BTreeSet<_>>().into_iter().collect()
}

/// Build the dataset for one tag. All rows for the tag must share a label kind.
pub fn dataset_for_tag(rows: &[LabelRow], tag: &str) -> Result<LabeledDataset> {
    let mut selected = rows.iter().filter(|r| r.tag == tag).peekable();
    let kind = selected.peek().ok_or(Error::EmptyInput("no rows for tag"))?.label_kind;
    let mut labels = BTreeMap::new();
    for r in selected {
        if r.label_kind != kind {
            return Err(Error::LabelKind { expected: kind.as_str(), got: r.label_kind.as_str() });
        }
        labels.insert(r.channel_id.clone(), Label::parse(kind, &r.label)?);
    }
    LabeledDataset::new(kind, labels)
}

pub fn label_rows_to_csv(rows: &[LabelRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::io("<labels>", e.into_error()))
}

pub fn dataset_to_rows(ds: &LabeledDataset, tag: &str) -> Vec<LabelRow> {
    ds.iter()
        .map(|(id, l)| LabelRow {
            channel_id: id.clone(),
            label_kind: ds.kind(),
            label: l.to_string(),
            tag: tag.to_string(),
        })
        .collect()
}
