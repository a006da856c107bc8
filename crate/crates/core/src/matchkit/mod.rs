//! Variant-match scoring behind one contract: a deterministic baseline, an
//! oracle, a remote batch scorer and a zero-shot generative matcher.

mod generative;
mod transport;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::catalog::{CatalogStore, Product};
use crate::concurrency::bounded_map;
use crate::pairforge::{serialize_pair, LabeledPair, MatchLabel, DEFAULT_BUDGET};
use crate::scalar::Scalar;
use crate::text::{value_tokens, BasicTokenizer, Tokenizer};

pub use generative::{build_match_prompt, parse_match_response, GenerationParams, GenerativeClient};
pub use transport::{Client, Endpoint, HttpTransport, RetryPolicy, Transport, TransportFailure, DEFAULT_TIMEOUT};

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_BATCH_SIZE: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MatchError {
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed backend response: {message}")]
    Parse { message: String, raw: String },
    #[error("invalid endpoint {0}")]
    InvalidEndpoint(String),
    #[error("unknown product {0:?}")]
    UnknownProduct(String),
    #[error("cannot serialize pair: {0}")]
    Serialize(String),
}

impl MatchError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, MatchError::Transport { .. })
    }

    /// Raw backend payload for parse errors.
    pub fn raw(&self) -> Option<&str> {
        match self {
            MatchError::Parse { raw, .. } => Some(raw),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSource {
    Baseline,
    Remote,
    Generative,
    Oracle,
}

impl fmt::Display for ScoreSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreSource::Baseline => "baseline",
            ScoreSource::Remote => "remote",
            ScoreSource::Generative => "generative",
            ScoreSource::Oracle => "oracle",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct MatchVerdict<F> {
    pub label: MatchLabel,
    pub similarity: F,
    /// The similarity was not stated by the backend and took its default.
    #[serde(default)]
    pub default_used: bool,
}

/// A probability in `[0, 1]` and the backend that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound = "F: Scalar")]
pub struct MatchScore<F> {
    probability: F,
    source: ScoreSource,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    verdict: Option<MatchVerdict<F>>,
}

impl<F: Scalar> MatchScore<F> {
    /// `None` unless `probability` lies in `[0, 1]`.
    pub fn new(probability: F, source: ScoreSource) -> Option<Self> {
        probability.in_unit_interval().then_some(Self {
            probability,
            source,
            degenerate: false,
            verdict: None,
        })
    }

    pub fn probability(&self) -> F {
        self.probability
    }

    pub fn source(&self) -> ScoreSource {
        self.source
    }

    /// Set when the baseline had no attributes on either side.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// The parsed answer behind a generative score.
    pub fn verdict(&self) -> Option<&MatchVerdict<F>> {
        self.verdict.as_ref()
    }
}

/// `variant_match` iff `probability >= threshold`.
pub fn classify<F: Scalar>(score: &MatchScore<F>, threshold: F) -> MatchVerdict<F> {
    let label = if score.probability >= threshold {
        MatchLabel::VariantMatch
    } else {
        MatchLabel::Mismatch
    };
    MatchVerdict {
        label,
        similarity: score.probability,
        default_used: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineScore<F> {
    pub value: F,
    pub degenerate: bool,
}

fn key_token_set(p: &Product) -> BTreeSet<(&str, String)> {
    p.attributes()
        .iter()
        .flat_map(|a| value_tokens(&a.value).into_iter().map(move |t| (a.key.as_str(), t)))
        .collect()
}

/// Jaccard similarity of the two products' `(key, value token)` sets.
/// Two empty sets score 0 and are flagged degenerate.
pub fn baseline_score<F: Scalar>(left: &Product, right: &Product) -> BaselineScore<F> {
    let a = key_token_set(left);
    let b = key_token_set(right);
    let inter = a.intersection(&b).count() as u64;
    let union = (a.len() + b.len()) as u64 - inter;
    BaselineScore {
        value: crate::scalar::ratio(inter, union),
        degenerate: union == 0,
    }
}

/// Truth table of positive (within-group) pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OracleTable {
    group_of: BTreeMap<String, String>,
}

impl OracleTable {
    pub fn from_store(store: &CatalogStore) -> Self {
        let mut group_of = BTreeMap::new();
        for g in store.groups() {
            for m in g.member_ids() {
                group_of.insert(m.clone(), g.id().to_string());
            }
        }
        Self { group_of }
    }

    /// Builds the table from labeled positives; products linked by a chain of
    /// positives share a group.
    pub fn from_pairs(pairs: &[LabeledPair]) -> Self {
        let mut parent: BTreeMap<String, String> = BTreeMap::new();
        fn find(parent: &mut BTreeMap<String, String>, x: &str) -> String {
            let mut root = x.to_string();
            while let Some(p) = parent.get(&root).filter(|p| **p != root) {
                root = p.clone();
            }
            parent.insert(x.to_string(), root.clone());
            root
        }
        for p in pairs.iter().filter(|p| p.label().is_match()) {
            let a = find(&mut parent, p.left_id());
            let b = find(&mut parent, p.right_id());
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            parent.insert(hi, lo);
        }
        let ids: Vec<String> = parent.keys().cloned().collect();
        let group_of = ids.iter().map(|id| (id.clone(), find(&mut parent, id))).collect();
        Self { group_of }
    }

    pub fn is_match(&self, a: &str, b: &str) -> bool {
        a != b && matches!((self.group_of.get(a), self.group_of.get(b)), (Some(x), Some(y)) if x == y)
    }
}

/// Batch scorer speaking the `{"pairs":[{"tokens":[...]}]}` →
/// `{"scores":[...]}` protocol.
#[derive(Clone)]
pub struct RemoteScorer {
    client: Client,
    tokenizer: Arc<dyn Tokenizer>,
    budget: usize,
    batch_size: usize,
}

impl fmt::Debug for RemoteScorer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RemoteScorer")
            .field("client", &self.client)
            .field("tokenizer", &self.tokenizer.id())
            .field("budget", &self.budget)
            .field("batch_size", &self.batch_size)
            .finish()
    }
}

#[derive(Deserialize)]
struct ScoresReply {
    scores: Vec<f64>,
}

impl RemoteScorer {
    pub fn new(client: Client) -> Self {
        Self {
            client,
            tokenizer: Arc::new(BasicTokenizer),
            budget: DEFAULT_BUDGET,
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }

    pub fn with_tokenizer(mut self, tokenizer: Arc<dyn Tokenizer>, budget: usize) -> Self {
        self.tokenizer = tokenizer;
        self.budget = budget;
        self
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// Scores one batch in a single request.
    pub fn score_batch<F: Scalar>(&self, pairs: &[(&Product, &Product)]) -> Result<Vec<MatchScore<F>>, MatchError> {
        let mut items = Vec::with_capacity(pairs.len());
        for (l, r) in pairs {
            let s = serialize_pair(l, r, self.tokenizer.as_ref(), self.budget)
                .map_err(|e| MatchError::Serialize(e.to_string()))?;
            items.push(json!({ "tokens": s.tokens }));
        }
        let body = json!({ "pairs": items });
        self.client.call(&body, |raw| {
            let bad = |message: String| MatchError::Parse {
                message,
                raw: raw.to_string(),
            };
            let reply: ScoresReply = serde_json::from_str(raw).map_err(|e| bad(format!("bad scores reply: {e}")))?;
            if reply.scores.len() != pairs.len() {
                return Err(bad(format!("expected {} scores, got {}", pairs.len(), reply.scores.len())));
            }
            reply
                .scores
                .iter()
                .enumerate()
                .map(|(i, &p)| {
                    MatchScore::new(F::from_f64_lossy(p), ScoreSource::Remote)
                        .ok_or_else(|| bad(format!("score {i} = {p} is outside [0, 1]")))
                })
                .collect()
        })
    }
}

/// Which backend produces scores.
#[derive(Debug, Clone)]
pub enum ClassifierHandle {
    Baseline,
    Oracle(OracleTable),
    Remote(RemoteScorer),
    Generative {
        client: GenerativeClient,
        params: GenerationParams,
    },
}

impl ClassifierHandle {
    pub fn source(&self) -> ScoreSource {
        match self {
            ClassifierHandle::Baseline => ScoreSource::Baseline,
            ClassifierHandle::Oracle(_) => ScoreSource::Oracle,
            ClassifierHandle::Remote(_) => ScoreSource::Remote,
            ClassifierHandle::Generative { .. } => ScoreSource::Generative,
        }
    }

    pub fn generative(client: GenerativeClient) -> Self {
        ClassifierHandle::Generative {
            client,
            params: GenerationParams::MATCHING,
        }
    }
}

/// Scores one pair. Generative scores use the stated similarity as the
/// probability and keep the verdict alongside.
pub fn score_pair<F: Scalar>(
    handle: &ClassifierHandle,
    left: &Product,
    right: &Product,
) -> Result<MatchScore<F>, MatchError> {
    match handle {
        ClassifierHandle::Baseline => {
            let b = baseline_score::<F>(left, right);
            let mut s = MatchScore::new(b.value, ScoreSource::Baseline).expect("jaccard lies in [0, 1]");
            s.degenerate = b.degenerate;
            Ok(s)
        }
        ClassifierHandle::Oracle(table) => {
            let p = if table.is_match(left.id(), right.id()) {
                F::one()
            } else {
                F::zero()
            };
            Ok(MatchScore::new(p, ScoreSource::Oracle).expect("0 or 1"))
        }
        ClassifierHandle::Remote(scorer) => Ok(scorer.score_batch(&[(left, right)])?.remove(0)),
        ClassifierHandle::Generative { client, params } => {
            let completion = client.complete(&build_match_prompt(left, right), params)?;
            let verdict = parse_match_response::<F>(&completion)?;
            let mut s = MatchScore::new(verdict.similarity, ScoreSource::Generative).expect("parser bounds similarity");
            s.verdict = Some(verdict);
            Ok(s)
        }
    }
}

/// Scores many pairs with at most `workers` requests in flight. Remote
/// pairs are grouped into batches. Results are in input order.
pub fn score_pairs<F: Scalar>(
    handle: &ClassifierHandle,
    pairs: &[(&Product, &Product)],
    workers: usize,
) -> Vec<Result<MatchScore<F>, MatchError>> {
    match handle {
        ClassifierHandle::Baseline | ClassifierHandle::Oracle(_) => {
            pairs.iter().map(|(l, r)| score_pair(handle, l, r)).collect()
        }
        ClassifierHandle::Remote(scorer) => {
            let batches: Vec<&[(&Product, &Product)]> = pairs.chunks(scorer.batch_size).collect();
            bounded_map(&batches, workers, |batch| (batch.len(), scorer.score_batch::<F>(batch)))
                .into_iter()
                .flat_map(|(n, res)| match res {
                    Ok(scores) => scores.into_iter().map(Ok).collect::<Vec<_>>(),
                    Err(e) => vec![Err(e); n],
                })
                .collect()
        }
        ClassifierHandle::Generative { .. } => bounded_map(pairs, workers, |(l, r)| score_pair(handle, l, r)),
    }
}

/// Resolves product ids against the store, then scores.
pub fn score_labeled<F: Scalar>(
    handle: &ClassifierHandle,
    store: &CatalogStore,
    pairs: &[LabeledPair],
    workers: usize,
) -> Result<Vec<Result<MatchScore<F>, MatchError>>, MatchError> {
    let resolved = pairs
        .iter()
        .map(|p| {
            let get = |id: &str| store.product(id).ok_or_else(|| MatchError::UnknownProduct(id.to_string()));
            Ok((get(p.left_id())?, get(p.right_id())?))
        })
        .collect::<Result<Vec<_>, MatchError>>()?;
    Ok(score_pairs(handle, &resolved, workers))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{CatalogBuilder, VariationGroup};

    fn product(id: &str, attrs: &[(&str, &str)]) -> Product {
        let mut b = Product::builder(id);
        for (k, v) in attrs {
            b = b.attr(*k, *v);
        }
        b.build().unwrap()
    }

    #[test]
    fn baseline_examples() {
        let l = product("l", &[("brand", "acme"), ("color", "red")]);
        let r = product("r", &[("brand", "acme"), ("color", "blue")]);
        assert_eq!(baseline_score::<f64>(&l, &r).value, 1.0 / 3.0);
        assert_eq!(baseline_score::<f64>(&l, &l).value, 1.0);
        let d = product("d", &[("size", "xl")]);
        assert_eq!(baseline_score::<f64>(&l, &d).value, 0.0);
        let e = product("e", &[]);
        let s = baseline_score::<f32>(&e, &e);
        assert_eq!(s.value, 0.0);
        assert!(s.degenerate);
        assert!(!baseline_score::<f64>(&l, &e).degenerate);
    }

    #[test]
    fn baseline_uses_value_tokens() {
        let l = product("l", &[("title", "Red Shirt")]);
        let r = product("r", &[("title", "red, shirt!")]);
        assert_eq!(baseline_score::<f64>(&l, &r).value, 1.0);
        // the same token under another key does not count
        let k = product("k", &[("name", "red shirt")]);
        assert_eq!(baseline_score::<f64>(&l, &k).value, 0.0);
    }

    #[test]
    fn classify_threshold() {
        let s = |p: f64| MatchScore::new(p, ScoreSource::Baseline).unwrap();
        assert_eq!(classify(&s(0.6), 0.5).label, MatchLabel::VariantMatch);
        assert_eq!(classify(&s(0.5), 0.5).label, MatchLabel::VariantMatch);
        assert_eq!(classify(&s(0.49), 0.5).label, MatchLabel::Mismatch);
        assert_eq!(classify(&s(0.49), 0.5).similarity, 0.49);
    }

    #[test]
    fn score_range_enforced() {
        assert!(MatchScore::new(1.5f64, ScoreSource::Remote).is_none());
        assert!(MatchScore::new(f64::NAN, ScoreSource::Remote).is_none());
        assert!(MatchScore::new(0.0f32, ScoreSource::Remote).is_some());
    }

    fn two_group_store() -> CatalogStore {
        let mut b = CatalogBuilder::new();
        for id in ["a1", "a2", "b1", "b2", "c"] {
            b.add_product(product(id, &[("title", id)])).unwrap();
        }
        b.add_group(VariationGroup::new("A", vec!["a1".into(), "a2".into()], None).unwrap())
            .unwrap();
        b.add_group(VariationGroup::new("B", vec!["b1".into(), "b2".into()], None).unwrap())
            .unwrap();
        b.build().unwrap()
    }

    #[test]
    fn oracle_from_store_and_pairs_agree() {
        let store = two_group_store();
        let from_store = OracleTable::from_store(&store);
        let from_pairs = OracleTable::from_pairs(&crate::pairforge::extract_positive_pairs(&store));
        let ids = ["a1", "a2", "b1", "b2", "c"];
        for a in ids {
            for b in ids {
                assert_eq!(from_store.is_match(a, b), from_pairs.is_match(a, b), "{a} {b}");
            }
        }
        assert!(from_store.is_match("a1", "a2"));
        assert!(!from_store.is_match("a1", "b1"));
        assert!(!from_store.is_match("c", "c"));
    }

    #[test]
    fn oracle_handle_scores() {
        let store = two_group_store();
        let h = ClassifierHandle::Oracle(OracleTable::from_store(&store));
        let p = |id| store.product(id).unwrap();
        assert_eq!(score_pair::<f64>(&h, p("a1"), p("a2")).unwrap().probability(), 1.0);
        assert_eq!(score_pair::<f64>(&h, p("a2"), p("a1")).unwrap().probability(), 1.0);
        assert_eq!(score_pair::<f64>(&h, p("a1"), p("b2")).unwrap().probability(), 0.0);
    }

    #[test]
    fn unknown_product_in_labeled_pairs() {
        let store = two_group_store();
        let pairs = vec![LabeledPair::positive("a1", "zz", "A").unwrap()];
        assert!(matches!(
            score_labeled::<f64>(&ClassifierHandle::Baseline, &store, &pairs, 1),
            Err(MatchError::UnknownProduct(id)) if id == "zz"
        ));
    }
}
