//! Pair file: one metadata record, then one JSON record per pair.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{serialize_pair, Bucket, DatasetSplit, LabeledPair, MatchLabel, PairError, SerializedPair};
use crate::catalog::CatalogStore;
use crate::provenance::Provenance;
use crate::pairforge::render_fragments;
use crate::text::Tokenizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairFileMeta {
    pub budget: usize,
    pub tokenizer_id: String,
    pub seed: u64,
    pub ratio: String,
    pub train: usize,
    pub eval: usize,
    #[serde(flatten)]
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRecord {
    pub split: SplitName,
    pub left_id: String,
    pub right_id: String,
    pub label: MatchLabel,
    pub bucket: Bucket,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin_group: Option<String>,
    pub tokens: Vec<String>,
    pub left_token_count: usize,
    pub right_token_count: usize,
    pub truncated_left: bool,
    pub truncated_right: bool,
    /// Untokenized `key: value` rendering of each side, for consumers that
    /// tokenize with their own vocabulary.
    pub left_text: String,
    pub right_text: String,
}

impl PairRecord {
    pub fn serialized(&self) -> SerializedPair {
        SerializedPair {
            tokens: self.tokens.clone(),
            left_token_count: self.left_token_count,
            right_token_count: self.right_token_count,
            truncated_left: self.truncated_left,
            truncated_right: self.truncated_right,
        }
    }

    pub fn pair(&self) -> Result<LabeledPair, PairError> {
        LabeledPair::new(&self.left_id, &self.right_id, self.bucket, self.origin_group.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairFile {
    pub meta: PairFileMeta,
    pub records: Vec<PairRecord>,
}

impl PairFile {
    pub fn split(&self, which: SplitName) -> impl Iterator<Item = &PairRecord> {
        self.records.iter().filter(move |r| r.split == which)
    }
}

fn record_for(
    split: SplitName,
    pair: &LabeledPair,
    store: &CatalogStore,
    tokenizer: &dyn Tokenizer,
    budget: usize,
) -> Result<PairRecord, PairError> {
    let left = store
        .product(pair.left_id())
        .ok_or_else(|| PairError::UnknownProduct(pair.left_id().to_string()))?;
    let right = store
        .product(pair.right_id())
        .ok_or_else(|| PairError::UnknownProduct(pair.right_id().to_string()))?;
    let s = serialize_pair(left, right, tokenizer, budget)?;
    Ok(PairRecord {
        split,
        left_id: pair.left_id().to_string(),
        right_id: pair.right_id().to_string(),
        label: pair.label(),
        bucket: pair.bucket(),
        origin_group: pair.origin_group().map(str::to_string),
        tokens: s.tokens,
        left_token_count: s.left_token_count,
        right_token_count: s.right_token_count,
        truncated_left: s.truncated_left,
        truncated_right: s.truncated_right,
        left_text: render_fragments(left).join("; "),
        right_text: render_fragments(right).join("; "),
    })
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> PairError + '_ {
    move |source| PairError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Streams the split to `out`, train records first. Returns records written.
pub fn write_pairs<W: Write>(
    split: &DatasetSplit,
    store: &CatalogStore,
    tokenizer: &dyn Tokenizer,
    budget: usize,
    provenance: &Provenance,
    mut out: W,
) -> Result<usize, std::io::Error> {
    let meta = PairFileMeta {
        budget,
        tokenizer_id: tokenizer.id().to_string(),
        seed: split.seed,
        ratio: split.ratio.to_string(),
        train: split.train.len(),
        eval: split.eval.len(),
        provenance: provenance.clone(),
    };
    serde_json::to_writer(&mut out, &meta)?;
    out.write_all(b"\n")?;
    let mut n = 0;
    for (name, pairs) in [(SplitName::Train, &split.train), (SplitName::Eval, &split.eval)] {
        for pair in pairs {
            let rec = record_for(name, pair, store, tokenizer, budget)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))?;
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
            n += 1;
        }
    }
    out.flush()?;
    Ok(n)
}

pub fn export_pairs(
    split: &DatasetSplit,
    store: &CatalogStore,
    tokenizer: &dyn Tokenizer,
    budget: usize,
    provenance: &Provenance,
    path: impl AsRef<Path>,
) -> Result<usize, PairError> {
    let path = path.as_ref();
    // validate every pair before touching the filesystem
    if budget < super::MIN_BUDGET {
        return Err(PairError::BudgetTooSmall {
            got: budget,
            min: super::MIN_BUDGET,
        });
    }
    for p in split.train.iter().chain(&split.eval) {
        for id in [p.left_id(), p.right_id()] {
            if store.product(id).is_none() {
                return Err(PairError::UnknownProduct(id.to_string()));
            }
        }
    }
    let file = File::create(path).map_err(io_err(path))?;
    write_pairs(split, store, tokenizer, budget, provenance, BufWriter::new(file)).map_err(io_err(path))
}

pub fn read_pairs(path: impl AsRef<Path>) -> Result<PairFile, PairError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    read_pairs_from(BufReader::new(file))
}

pub fn read_pairs_from<R: BufRead>(reader: R) -> Result<PairFile, PairError> {
    let mut meta: Option<PairFileMeta> = None;
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| PairError::Format {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |e: serde_json::Error| PairError::Format {
            line: line_no,
            message: e.to_string(),
        };
        if meta.is_none() {
            meta = Some(serde_json::from_str(&line).map_err(bad)?);
        } else {
            records.push(serde_json::from_str(&line).map_err(bad)?);
        }
    }
    let meta = meta.ok_or_else(|| PairError::Format {
        line: 0,
        message: "missing metadata record".into(),
    })?;
    Ok(PairFile { meta, records })
}
