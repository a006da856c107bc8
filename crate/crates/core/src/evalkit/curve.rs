use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{evaluate_scores, EvalError, MetricsReport};
use crate::catalog::CatalogStore;
use crate::concurrency::DEFAULT_WORKERS;
use crate::matchkit::{score_labeled, ClassifierHandle, MatchScore};
use crate::pairforge::{extract_positive_pairs, sample_with, split_dataset, LabeledPair, MatchLabel, Sampler};
use crate::scalar::Scalar;

/// A scorer that may learn from a training subset.
pub trait CurveBackend<F: Scalar> {
    fn id(&self) -> String;

    fn fit(&mut self, store: &CatalogStore, train: &[LabeledPair]) -> Result<(), EvalError>;

    fn score(&self, store: &CatalogStore, eval: &[LabeledPair]) -> Result<Vec<MatchScore<F>>, EvalError>;
}

/// Wraps a fixed classifier; fitting does nothing, so its curve is flat.
#[derive(Debug, Clone)]
pub struct HandleBackend {
    pub handle: ClassifierHandle,
    pub workers: usize,
}

impl HandleBackend {
    pub fn new(handle: ClassifierHandle) -> Self {
        Self {
            handle,
            workers: DEFAULT_WORKERS,
        }
    }
}

impl<F: Scalar> CurveBackend<F> for HandleBackend {
    fn id(&self) -> String {
        self.handle.source().to_string()
    }

    fn fit(&mut self, _: &CatalogStore, _: &[LabeledPair]) -> Result<(), EvalError> {
        Ok(())
    }

    fn score(&self, store: &CatalogStore, eval: &[LabeledPair]) -> Result<Vec<MatchScore<F>>, EvalError> {
        score_labeled(&self.handle, store, eval, self.workers)?
            .into_iter()
            .map(|r| r.map_err(EvalError::from))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveConfig {
    pub sampler: Sampler,
    pub sizes: Vec<usize>,
    pub ratio: Ratio<u64>,
    pub seed: u64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct CurvePoint<F> {
    pub train_size: usize,
    pub sampler: String,
    pub backend: String,
    pub metrics: MetricsReport<F>,
}

/// Builds one balanced pair pool and split, then for each size fits the
/// backend on a class-balanced prefix of the shuffled training side and
/// scores the fixed evaluation side. Prefixes are nested, so each size's
/// training set contains every smaller one.
pub fn learning_curve<F: Scalar>(
    store: &CatalogStore,
    config: &CurveConfig,
    backend: &mut dyn CurveBackend<F>,
) -> Result<Vec<CurvePoint<F>>, EvalError> {
    if config.sizes.is_empty() || config.sizes[0] == 0 || config.sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EvalError::BadSizes(config.sizes.clone()));
    }
    let positives = extract_positive_pairs(store);
    let negatives = sample_with(store, &positives, &config.sampler, positives.len(), config.seed)?;
    let pool: Vec<LabeledPair> = positives.into_iter().chain(negatives).collect();
    let split = split_dataset(store, &pool, config.ratio, config.seed)?;
    if let Some(&too_big) = config.sizes.iter().find(|&&s| s > split.train.len()) {
        return Err(EvalError::SizeTooLarge {
            size: too_big,
            available: split.train.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x6375_7276_6500_0000);
    let (mut pos, mut neg): (Vec<&LabeledPair>, Vec<&LabeledPair>) =
        split.train.iter().partition(|p| p.label().is_match());
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let gold: Vec<MatchLabel> = split.eval.iter().map(LabeledPair::label).collect();
    let threshold = F::from_f64_lossy(config.threshold);
    let mut points = Vec::with_capacity(config.sizes.len());
    for &size in &config.sizes {
        let train = balanced_prefix(&pos, &neg, size);
        backend.fit(store, &train)?;
        let scores = backend.score(store, &split.eval)?;
        points.push(CurvePoint {
            train_size: size,
            sampler: config.sampler.name().to_string(),
            backend: backend.id(),
            metrics: evaluate_scores(&scores, &gold, threshold)?,
        });
    }
    Ok(points)
}

/// `size` pairs: half from each class where possible, the rest from
/// whichever class has pairs left.
fn balanced_prefix(pos: &[&LabeledPair], neg: &[&LabeledPair], size: usize) -> Vec<LabeledPair> {
    let take_pos = size.div_ceil(2).min(pos.len());
    let take_neg = (size - take_pos).min(neg.len());
    let take_pos = (size - take_neg).min(pos.len());
    pos[..take_pos].iter().chain(&neg[..take_neg]).map(|p| (*p).clone()).collect()
}
