//! Metrics over match scores and attribute labels, plus the learning-curve
//! experiment and report writers.

mod curve;
mod report;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::attrkit::{AttrLabel, AttrLabels};
use crate::matchkit::{classify, MatchError, MatchScore, MatchVerdict};
use crate::pairforge::{MatchLabel, PairError};
use crate::scalar::{ratio, Scalar};
use crate::text::normalize_key;

pub use curve::{learning_curve, CurveBackend, CurveConfig, CurvePoint, HandleBackend};
pub use report::{write_report_csv, write_report_json, ExperimentRow, ReportFile, CSV_COLUMNS};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("{predicted} predictions but {gold} gold labels")]
    LengthMismatch { predicted: usize, gold: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error("AUROC needs both classes, got {positives} positive and {negatives} negative")]
    MissingClass { positives: u64, negatives: u64 },
    #[error("score {index} is not a number")]
    NotANumber { index: usize },
    #[error("gold label set is empty")]
    EmptyGold,
    #[error("train size {size} exceeds the {available} available training pairs")]
    SizeTooLarge { size: usize, available: usize },
    #[error("curve sizes must be positive and strictly ascending, got {0:?}")]
    BadSizes(Vec<usize>),
    #[error(transparent)]
    Pair(#[from] PairError),
    #[error(transparent)]
    Match(#[from] MatchError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&mut self, predicted: MatchLabel, gold: MatchLabel) {
        match (predicted.is_match(), gold.is_match()) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }
}

/// Confusion counts with `variant_match` as the positive class.
pub fn confusion<F>(verdicts: &[MatchVerdict<F>], gold: &[MatchLabel]) -> Result<ConfusionCounts, EvalError> {
    let labels: Vec<MatchLabel> = verdicts.iter().map(|v| v.label).collect();
    confusion_from_labels(&labels, gold)
}

pub fn confusion_from_labels(predicted: &[MatchLabel], gold: &[MatchLabel]) -> Result<ConfusionCounts, EvalError> {
    if predicted.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            predicted: predicted.len(),
            gold: gold.len(),
        });
    }
    let mut c = ConfusionCounts::default();
    for (&p, &g) in predicted.iter().zip(gold) {
        c.add(p, g);
    }
    Ok(c)
}

/// Label for a score: the backend's own verdict when it gave one,
/// otherwise the thresholded probability.
pub fn predicted_label<F: Scalar>(score: &MatchScore<F>, threshold: F) -> MatchLabel {
    score.verdict().map_or_else(|| classify(score, threshold).label, |v| v.label)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct MetricsReport<F> {
    pub auroc: Option<F>,
    pub accuracy: F,
    pub precision: F,
    pub recall: F,
    pub f1: F,
    pub n: u64,
    pub confusion: ConfusionCounts,
    /// Precision had no predicted positives and was set to 0.
    pub precision_undefined: bool,
    /// Recall had no gold positives and was set to 0.
    pub recall_undefined: bool,
    pub config_digest: Option<String>,
}

pub fn basic_metrics<F: Scalar>(c: &ConfusionCounts) -> Result<MetricsReport<F>, EvalError> {
    let total = c.total();
    if total == 0 {
        return Err(EvalError::Empty);
    }
    let precision: F = ratio(c.tp, c.tp + c.fp);
    let recall: F = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall > F::zero() {
        (precision + precision) * recall / (precision + recall)
    } else {
        F::zero()
    };
    Ok(MetricsReport {
        auroc: None,
        accuracy: ratio(c.tp + c.tn, total),
        precision,
        recall,
        f1,
        n: total,
        confusion: *c,
        precision_undefined: c.tp + c.fp == 0,
        recall_undefined: c.tp + c.fn_ == 0,
        config_digest: None,
    })
}

/// Rank statistic with half credit for ties: the probability that a random
/// positive outscores a random negative.
///
/// Computed from the integer `2 * wins + ties` so the result is exactly the
/// value a pairwise count would give.
pub fn auroc<F: Scalar>(scores: &[F], gold: &[MatchLabel]) -> Result<F, EvalError> {
    if scores.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            predicted: scores.len(),
            gold: gold.len(),
        });
    }
    if let Some(index) = scores.iter().position(|s| s.is_nan()) {
        return Err(EvalError::NotANumber { index });
    }
    let positives = gold.iter().filter(|g| g.is_match()).count() as u64;
    let negatives = gold.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::MissingClass { positives, negatives });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("NaN excluded"));
    let mut twice_wins: u128 = 0;
    let mut negatives_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u128, 0u128);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if gold[order[j]].is_match() {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        twice_wins += 2 * pos * negatives_below + pos * neg;
        negatives_below += neg;
        i = j;
    }
    let denom = 2 * positives as u128 * negatives as u128;
    Ok(F::from_u128(twice_wins).expect("finite") / F::from_u128(denom).expect("finite"))
}

/// Full report for scored pairs: thresholded metrics plus AUROC when both
/// classes are present.
pub fn evaluate_scores<F: Scalar>(
    scores: &[MatchScore<F>],
    gold: &[MatchLabel],
    threshold: F,
) -> Result<MetricsReport<F>, EvalError> {
    let predicted: Vec<MatchLabel> = scores.iter().map(|s| predicted_label(s, threshold)).collect();
    let mut report = basic_metrics(&confusion_from_labels(&predicted, gold)?)?;
    let probs: Vec<F> = scores.iter().map(MatchScore::probability).collect();
    report.auroc = match auroc(&probs, gold) {
        Ok(a) => Some(a),
        Err(EvalError::MissingClass { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(report)
}

fn normalized_set<'a>(names: impl IntoIterator<Item = &'a str>) -> BTreeSet<String> {
    names.into_iter().map(normalize_key).filter(|k| !k.is_empty()).collect()
}

/// Fraction of gold variation keys that were predicted, after key
/// normalization. Extra predictions are ignored. `None` when the gold set
/// is empty after applying `filter`.
pub fn variation_recall<'a, F: Scalar>(
    predicted: impl IntoIterator<Item = &'a str>,
    gold: impl IntoIterator<Item = &'a str>,
    filter: Option<&[&str]>,
) -> Option<F> {
    let predicted = normalized_set(predicted);
    let mut gold = normalized_set(gold);
    if let Some(filter) = filter {
        let keep = normalized_set(filter.iter().copied());
        gold.retain(|k| keep.contains(k));
    }
    if gold.is_empty() {
        return None;
    }
    let hit = gold.iter().filter(|k| predicted.contains(*k)).count() as u64;
    Some(ratio(hit, gold.len() as u64))
}

/// A gold key that was missed while a similar name was predicted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearMiss {
    pub gold: String,
    pub predicted: String,
    pub similarity: f64,
}

pub const NEAR_MISS_THRESHOLD: f64 = 0.75;

/// Missed gold keys whose closest prediction has normalized Levenshtein
/// similarity of at least [`NEAR_MISS_THRESHOLD`].
pub fn near_misses<'a>(
    predicted: impl IntoIterator<Item = &'a str>,
    gold: impl IntoIterator<Item = &'a str>,
) -> Vec<NearMiss> {
    let predicted = normalized_set(predicted);
    normalized_set(gold)
        .into_iter()
        .filter(|g| !predicted.contains(g))
        .filter_map(|g| {
            predicted
                .iter()
                .map(|p| (p, strsim::normalized_levenshtein(&g, p)))
                .filter(|(_, s)| *s >= NEAR_MISS_THRESHOLD)
                .max_by(|a, b| a.1.total_cmp(&b.1).then_with(|| b.0.cmp(a.0)))
                .map(|(p, s)| NearMiss {
                    gold: g.clone(),
                    predicted: p.clone(),
                    similarity: s,
                })
        })
        .collect()
}

/// Mean of per-group recall over the groups that had gold keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct RecallSummary<F> {
    pub mean: Option<F>,
    pub evaluated: usize,
    pub skipped: usize,
}

impl<F: Scalar> RecallSummary<F> {
    pub fn from_recalls(recalls: impl IntoIterator<Item = Option<F>>) -> Self {
        let mut sum = F::zero();
        let (mut evaluated, mut skipped) = (0usize, 0usize);
        for r in recalls {
            match r {
                Some(r) => {
                    sum = sum + r;
                    evaluated += 1;
                }
                None => skipped += 1,
            }
        }
        Self {
            mean: (evaluated > 0).then(|| sum / F::from_count(evaluated as u64)),
            evaluated,
            skipped,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTally {
    pub correct: u64,
    pub total: u64,
}

impl ClassTally {
    pub fn accuracy<F: Scalar>(&self) -> Option<F> {
        (self.total > 0).then(|| ratio(self.correct, self.total))
    }
}

/// Correct/total counts per gold class; accumulates across groups.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttrTally {
    pub common: ClassTally,
    pub variation: ClassTally,
}

impl AttrTally {
    /// Scores every gold key; keys missing from `predicted` count as wrong.
    pub fn add(&mut self, predicted: &AttrLabels, gold: &AttrLabels) {
        for (key, &g) in gold {
            let class = match g {
                AttrLabel::Common => &mut self.common,
                AttrLabel::Variation => &mut self.variation,
            };
            class.total += 1;
            if predicted.get(&normalize_key(key)).or_else(|| predicted.get(key)) == Some(&g) {
                class.correct += 1;
            }
        }
    }

    pub fn overall(&self) -> ClassTally {
        ClassTally {
            correct: self.common.correct + self.variation.correct,
            total: self.common.total + self.variation.total,
        }
    }

    pub fn accuracy<F: Scalar>(&self) -> Result<AttrAccuracy<F>, EvalError> {
        let overall = self.overall();
        if overall.total == 0 {
            return Err(EvalError::EmptyGold);
        }
        Ok(AttrAccuracy {
            common: self.common.accuracy(),
            variation: self.variation.accuracy(),
            overall: overall.accuracy().expect("non-empty"),
            tally: *self,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct AttrAccuracy<F> {
    /// `None` when gold has no key of the class.
    pub common: Option<F>,
    pub variation: Option<F>,
    pub overall: F,
    pub tally: AttrTally,
}

pub fn attr_accuracy<F: Scalar>(predicted: &AttrLabels, gold: &AttrLabels) -> Result<AttrAccuracy<F>, EvalError> {
    let mut t = AttrTally::default();
    t.add(predicted, gold);
    t.accuracy()
}
