//! Labeled pair dataset construction: positives from variation groups,
//! difficulty-bucketed negatives, group-disjoint splitting and fixed-budget
//! serialization.

mod export;
mod negatives;
mod serialize;
mod split;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::catalog::CatalogStore;

pub use export::{export_pairs, read_pairs, read_pairs_from, write_pairs, PairFile, PairFileMeta, PairRecord, SplitName};
pub use negatives::{bucket_of, sample_negatives, sample_random_negatives, sample_with, NegativeMix, Sampler};
pub use serialize::{render_fragments, serialize_pair, SerializedPair, BOS, DEFAULT_BUDGET, MIN_BUDGET, PAD, SEP, UNK};
pub use split::{label_imbalance, split_dataset, split_dataset_with, DatasetSplit, SplitOptions, SplitReport};

#[derive(Debug, thiserror::Error)]
pub enum PairError {
    #[error("a pair needs two distinct products, got {0:?} twice")]
    SameProduct(String),
    #[error("unknown product {0:?}")]
    UnknownProduct(String),
    #[error("invalid mix: {0}")]
    InvalidMix(String),
    #[error("no candidate pairs exist for the {bucket} bucket but {requested} were requested")]
    EmptyPool { bucket: Bucket, requested: usize },
    #[error("the {bucket} bucket has {available} candidate pairs but {requested} were requested")]
    PoolExhausted {
        bucket: Bucket,
        requested: usize,
        available: usize,
    },
    #[error("split ratio must lie strictly between 0 and 1, got {0}")]
    InvalidRatio(String),
    #[error("splitting needs at least 2 groups, found {0}")]
    TooFewGroups(usize),
    #[error("positive pair ({left}, {right}) does not lie within one variation group")]
    UngroupedPositive { left: String, right: String },
    #[error("token budget must be at least {min}, got {got}")]
    BudgetTooSmall { got: usize, min: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("pair file line {line}: {message}")]
    Format { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchLabel {
    VariantMatch,
    Mismatch,
}

impl MatchLabel {
    pub fn is_match(self) -> bool {
        self == MatchLabel::VariantMatch
    }
}

impl fmt::Display for MatchLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchLabel::VariantMatch => "variant_match",
            MatchLabel::Mismatch => "mismatch",
        })
    }
}

/// Provenance of a labeled pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucket {
    Positive,
    /// Same brand and product type, different group.
    Hard,
    /// Same product type, different brand.
    Medium,
    /// Different product type and different brand.
    Easy,
    /// Uniformly drawn non-positive pair.
    Random,
}

impl Bucket {
    pub const INFORMED: [Bucket; 3] = [Bucket::Hard, Bucket::Medium, Bucket::Easy];

    pub fn label(self) -> MatchLabel {
        match self {
            Bucket::Positive => MatchLabel::VariantMatch,
            _ => MatchLabel::Mismatch,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Bucket::Positive => "positive",
            Bucket::Hard => "hard",
            Bucket::Medium => "medium",
            Bucket::Easy => "easy",
            Bucket::Random => "random",
        }
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Two distinct products with a match label. The smaller id is always on
/// the left.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabeledPair {
    left_id: String,
    right_id: String,
    bucket: Bucket,
    origin_group: Option<String>,
}

impl LabeledPair {
    pub fn new(a: &str, b: &str, bucket: Bucket, origin_group: Option<String>) -> Result<Self, PairError> {
        if a == b {
            return Err(PairError::SameProduct(a.to_string()));
        }
        let (left, right) = if a < b { (a, b) } else { (b, a) };
        Ok(Self {
            left_id: left.to_string(),
            right_id: right.to_string(),
            bucket,
            origin_group,
        })
    }

    pub fn positive(a: &str, b: &str, group: &str) -> Result<Self, PairError> {
        Self::new(a, b, Bucket::Positive, Some(group.to_string()))
    }

    pub fn negative(a: &str, b: &str, bucket: Bucket) -> Result<Self, PairError> {
        debug_assert_ne!(bucket, Bucket::Positive);
        Self::new(a, b, bucket, None)
    }

    pub fn left_id(&self) -> &str {
        &self.left_id
    }

    pub fn right_id(&self) -> &str {
        &self.right_id
    }

    pub fn label(&self) -> MatchLabel {
        self.bucket.label()
    }

    pub fn bucket(&self) -> Bucket {
        self.bucket
    }

    pub fn origin_group(&self) -> Option<&str> {
        self.origin_group.as_deref()
    }

    pub fn key(&self) -> (&str, &str) {
        (&self.left_id, &self.right_id)
    }
}

/// Every unordered within-group pair, ordered by group id then pair.
pub fn extract_positive_pairs(store: &CatalogStore) -> Vec<LabeledPair> {
    let mut out = Vec::new();
    for group in store.groups() {
        let mut ids: Vec<&str> = group.member_ids().iter().map(String::as_str).collect();
        ids.sort_unstable();
        for (i, a) in ids.iter().enumerate() {
            for b in &ids[i + 1..] {
                out.push(LabeledPair::positive(a, b, group.id()).expect("members are distinct"));
            }
        }
    }
    out
}

/// Tally of pairs per bucket, in bucket order.
pub fn bucket_counts(pairs: &[LabeledPair]) -> std::collections::BTreeMap<Bucket, usize> {
    let mut counts = std::collections::BTreeMap::new();
    for p in pairs {
        *counts.entry(p.bucket()).or_insert(0) += 1;
    }
    counts
}
