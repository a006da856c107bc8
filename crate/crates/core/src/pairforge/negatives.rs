//! Negative pair sampling.
//!
//! Informed sampling stratifies mismatches by difficulty. Buckets are
//! mutually exclusive, checked in priority order hard > medium > easy, and
//! pairs inside one variation group never qualify (they are positives).
//! Pairs sharing a brand but not a product type belong to no bucket.

use std::collections::{HashMap, HashSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Bucket, LabeledPair, PairError};
use crate::catalog::{CatalogStore, Product};
use crate::text::normalize_value;

/// Requested share of each informed bucket. Fractions are non-negative and
/// sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NegativeMix {
    pub hard: f64,
    pub medium: f64,
    pub easy: f64,
}

impl Default for NegativeMix {
    fn default() -> Self {
        Self {
            hard: 0.5,
            medium: 0.3,
            easy: 0.2,
        }
    }
}

impl NegativeMix {
    pub fn validate(&self) -> Result<(), PairError> {
        for (name, f) in [("hard", self.hard), ("medium", self.medium), ("easy", self.easy)] {
            if !f.is_finite() || f < 0.0 {
                return Err(PairError::InvalidMix(format!("{name} fraction {f} must be a non-negative number")));
            }
        }
        let sum = self.hard + self.medium + self.easy;
        if (sum - 1.0).abs() > 1e-6 {
            return Err(PairError::InvalidMix(format!("fractions sum to {sum}, expected 1")));
        }
        Ok(())
    }

    fn fraction(&self, bucket: Bucket) -> f64 {
        match bucket {
            Bucket::Hard => self.hard,
            Bucket::Medium => self.medium,
            Bucket::Easy => self.easy,
            _ => 0.0,
        }
    }

    /// Per-bucket counts `[hard, medium, easy]`: medium and easy get
    /// `round(count * fraction)`, hard takes the remainder. If rounding
    /// overshoots, units are taken back from easy, then medium.
    pub fn allocate(&self, count: usize) -> [usize; 3] {
        let medium = (count as f64 * self.medium).round() as i64;
        let easy = (count as f64 * self.easy).round() as i64;
        let mut alloc = [count as i64 - medium - easy, medium, easy];
        for idx in [2, 1] {
            while alloc[0] < 0 && alloc[idx] > 0 {
                alloc[idx] -= 1;
                alloc[0] += 1;
            }
        }
        alloc.map(|v| v.max(0) as usize)
    }
}

/// Negative sampling strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Sampler {
    Informed(NegativeMix),
    Random,
}

impl Default for Sampler {
    fn default() -> Self {
        Sampler::Informed(NegativeMix::default())
    }
}

impl Sampler {
    pub fn name(&self) -> &'static str {
        match self {
            Sampler::Informed(_) => "informed",
            Sampler::Random => "random",
        }
    }
}

pub fn sample_with(
    store: &CatalogStore,
    positives: &[LabeledPair],
    sampler: &Sampler,
    count: usize,
    seed: u64,
) -> Result<Vec<LabeledPair>, PairError> {
    match sampler {
        Sampler::Informed(mix) => sample_negatives(store, positives, mix, count, seed),
        Sampler::Random => sample_random_negatives(store, positives, count, seed),
    }
}

/// Bucket a pair of catalog products falls into, or `None` if the pair is
/// a positive (same group, or the same product) or qualifies for no bucket.
pub fn bucket_of(store: &CatalogStore, a: &Product, b: &Product) -> Option<Bucket> {
    if a.id() == b.id() {
        return None;
    }
    if let (Some(ga), Some(gb)) = (store.group_of(a.id()), store.group_of(b.id())) {
        if ga == gb {
            return None;
        }
    }
    classify(a, b)
}

fn classify(a: &Product, b: &Product) -> Option<Bucket> {
    let same_type = a.same_product_type(b);
    let same_brand = a.same_brand(b);
    match (same_brand, same_type) {
        (true, true) => Some(Bucket::Hard),
        (false, true) => Some(Bucket::Medium),
        (false, false) => Some(Bucket::Easy),
        (true, false) => None,
    }
}

/// Dense view of the catalog used by the samplers.
struct Pools<'a> {
    products: Vec<&'a Product>,
    unit: Vec<usize>,
    unit_members: Vec<Vec<usize>>,
    brand: Vec<Option<String>>,
    ptype: Vec<Option<String>>,
    by_brand_type: HashMap<(String, String), Vec<usize>>,
    by_type: HashMap<String, Vec<usize>>,
    by_brand: HashMap<String, Vec<usize>>,
    index_of: HashMap<&'a str, usize>,
}

impl<'a> Pools<'a> {
    fn new(store: &'a CatalogStore) -> Self {
        let products: Vec<&Product> = store.products().collect();
        let index_of: HashMap<&str, usize> = products.iter().enumerate().map(|(i, p)| (p.id(), i)).collect();
        let mut unit_ids: HashMap<&str, usize> = HashMap::new();
        let mut unit = Vec::with_capacity(products.len());
        let mut unit_members: Vec<Vec<usize>> = Vec::new();
        for (i, p) in products.iter().enumerate() {
            let u = match store.group_of(p.id()) {
                Some(g) => *unit_ids.entry(g).or_insert_with(|| {
                    unit_members.push(Vec::new());
                    unit_members.len() - 1
                }),
                None => {
                    unit_members.push(Vec::new());
                    unit_members.len() - 1
                }
            };
            unit_members[u].push(i);
            unit.push(u);
        }
        let brand: Vec<Option<String>> = products.iter().map(|p| p.brand().map(normalize_value)).collect();
        let ptype: Vec<Option<String>> = products.iter().map(|p| p.product_type().map(normalize_value)).collect();
        let mut by_brand_type: HashMap<(String, String), Vec<usize>> = HashMap::new();
        let mut by_type: HashMap<String, Vec<usize>> = HashMap::new();
        let mut by_brand: HashMap<String, Vec<usize>> = HashMap::new();
        for i in 0..products.len() {
            if let Some(t) = &ptype[i] {
                by_type.entry(t.clone()).or_default().push(i);
            }
            if let Some(b) = &brand[i] {
                by_brand.entry(b.clone()).or_default().push(i);
            }
            if let (Some(b), Some(t)) = (&brand[i], &ptype[i]) {
                by_brand_type.entry((b.clone(), t.clone())).or_default().push(i);
            }
        }
        Self {
            products,
            unit,
            unit_members,
            brand,
            ptype,
            by_brand_type,
            by_type,
            by_brand,
            index_of,
        }
    }

    fn same_brand(&self, a: usize, b: usize) -> bool {
        matches!((&self.brand[a], &self.brand[b]), (Some(x), Some(y)) if x == y)
    }

    fn same_type(&self, a: usize, b: usize) -> bool {
        matches!((&self.ptype[a], &self.ptype[b]), (Some(x), Some(y)) if x == y)
    }

    /// Bucket predicate over dense indices, including the group exclusion.
    fn bucket(&self, a: usize, b: usize) -> Option<Bucket> {
        if a == b || self.unit[a] == self.unit[b] {
            return None;
        }
        match (self.same_brand(a, b), self.same_type(a, b)) {
            (true, true) => Some(Bucket::Hard),
            (false, true) => Some(Bucket::Medium),
            (false, false) => Some(Bucket::Easy),
            (true, false) => None,
        }
    }

    fn len_of<K: std::hash::Hash + Eq>(map: &HashMap<K, Vec<usize>>, key: Option<K>) -> usize {
        key.and_then(|k| map.get(&k)).map_or(0, Vec::len)
    }

    fn bt_key(&self, a: usize) -> Option<(String, String)> {
        Some((self.brand[a].clone()?, self.ptype[a].clone()?))
    }

    /// Number of partners `x` with `bucket(a, x) == bucket`.
    fn candidate_count(&self, a: usize, bucket: Bucket) -> usize {
        let n_bt = Self::len_of(&self.by_brand_type, self.bt_key(a));
        let n_type = Self::len_of(&self.by_type, self.ptype[a].clone());
        let n_brand = Self::len_of(&self.by_brand, self.brand[a].clone());
        let raw = match bucket {
            Bucket::Hard => n_bt,
            Bucket::Medium => n_type - n_bt,
            Bucket::Easy => self.products.len() + n_bt - n_type - n_brand,
            Bucket::Random => self.products.len(),
            Bucket::Positive => 0,
        };
        // partners inside a's own unit (a included) satisfy the raw relation
        // but are excluded by the group rule
        let own = self.unit_members[self.unit[a]]
            .iter()
            .filter(|&&x| match bucket {
                Bucket::Random => true,
                _ => self.raw_relation(a, x) == Some(bucket),
            })
            .count();
        raw - own
    }

    fn raw_relation(&self, a: usize, x: usize) -> Option<Bucket> {
        match (self.same_brand(a, x), self.same_type(a, x)) {
            (true, true) => Some(Bucket::Hard),
            (false, true) => Some(Bucket::Medium),
            (false, false) => Some(Bucket::Easy),
            (true, false) => None,
        }
    }

    fn accepts(&self, a: usize, x: usize, bucket: Bucket) -> bool {
        match bucket {
            Bucket::Random => a != x && self.unit[a] != self.unit[x],
            _ => self.bucket(a, x) == Some(bucket),
        }
    }

    /// Product list that contains every valid partner of `a`.
    fn superset(&self, a: usize, bucket: Bucket) -> Option<&[usize]> {
        match bucket {
            Bucket::Hard => self.bt_key(a).and_then(|k| self.by_brand_type.get(&k)).map(Vec::as_slice),
            Bucket::Medium => self.ptype[a].as_ref().and_then(|t| self.by_type.get(t)).map(Vec::as_slice),
            _ => None,
        }
    }

    fn draw_partner(&self, rng: &mut ChaCha8Rng, a: usize, bucket: Bucket) -> usize {
        const TRIES: usize = 64;
        let n = self.products.len();
        let superset = self.superset(a, bucket);
        for _ in 0..TRIES {
            let x = match superset {
                Some(list) => list[rng.random_range(0..list.len())],
                None => rng.random_range(0..n),
            };
            if self.accepts(a, x, bucket) {
                return x;
            }
        }
        let candidates: Vec<usize> = match superset {
            Some(list) => list.iter().copied().filter(|&x| self.accepts(a, x, bucket)).collect(),
            None => (0..n).filter(|&x| self.accepts(a, x, bucket)).collect(),
        };
        candidates[rng.random_range(0..candidates.len())]
    }

    /// Every unordered pair in the bucket, ascending.
    fn enumerate(&self, bucket: Bucket) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut push_from = |list: &[usize]| {
            for (i, &a) in list.iter().enumerate() {
                for &b in &list[i + 1..] {
                    if self.accepts(a, b, bucket) {
                        out.push((a.min(b), a.max(b)));
                    }
                }
            }
        };
        match bucket {
            Bucket::Hard => self.by_brand_type.values().for_each(|l| push_from(l)),
            Bucket::Medium => self.by_type.values().for_each(|l| push_from(l)),
            _ => {
                let all: Vec<usize> = (0..self.products.len()).collect();
                push_from(&all);
            }
        }
        out.sort_unstable();
        out
    }

    fn canonical(&self, a: usize, b: usize) -> (usize, usize) {
        // dense indices follow id order, so this matches LabeledPair order
        (a.min(b), a.max(b))
    }
}

/// Draws `count` mismatches split across the informed buckets by `mix`.
///
/// Output is sorted by canonical pair and is a pure function of the inputs.
/// A bucket that is asked for pairs but has no candidates is an error.
pub fn sample_negatives(
    store: &CatalogStore,
    positives: &[LabeledPair],
    mix: &NegativeMix,
    count: usize,
    seed: u64,
) -> Result<Vec<LabeledPair>, PairError> {
    mix.validate()?;
    let alloc = mix.allocate(count);
    debug_assert_eq!(alloc.iter().sum::<usize>(), count);
    let pools = Pools::new(store);
    let mut seen = seen_from_positives(&pools, positives)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for (bucket, requested) in Bucket::INFORMED.into_iter().zip(alloc) {
        debug_assert!(requested == 0 || mix.fraction(bucket) > 0.0 || bucket == Bucket::Hard);
        draw_bucket(&pools, bucket, requested, &mut seen, &mut rng, &mut out)?;
    }
    finish(&pools, out)
}

/// Draws `count` uniformly random non-positive pairs, bucket `Random`.
pub fn sample_random_negatives(
    store: &CatalogStore,
    positives: &[LabeledPair],
    count: usize,
    seed: u64,
) -> Result<Vec<LabeledPair>, PairError> {
    let pools = Pools::new(store);
    let mut seen = seen_from_positives(&pools, positives)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    draw_bucket(&pools, Bucket::Random, count, &mut seen, &mut rng, &mut out)?;
    finish(&pools, out)
}

fn seen_from_positives(pools: &Pools<'_>, positives: &[LabeledPair]) -> Result<HashSet<(usize, usize)>, PairError> {
    let mut seen = HashSet::with_capacity(positives.len());
    for p in positives {
        let a = *pools
            .index_of
            .get(p.left_id())
            .ok_or_else(|| PairError::UnknownProduct(p.left_id().to_string()))?;
        let b = *pools
            .index_of
            .get(p.right_id())
            .ok_or_else(|| PairError::UnknownProduct(p.right_id().to_string()))?;
        seen.insert(pools.canonical(a, b));
    }
    Ok(seen)
}

fn draw_bucket(
    pools: &Pools<'_>,
    bucket: Bucket,
    requested: usize,
    seen: &mut HashSet<(usize, usize)>,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<(usize, usize, Bucket)>,
) -> Result<(), PairError> {
    if requested == 0 {
        return Ok(());
    }
    let weights: Vec<u64> = (0..pools.products.len())
        .map(|a| pools.candidate_count(a, bucket) as u64)
        .collect();
    let ordered_total: u64 = weights.iter().sum();
    if ordered_total == 0 {
        return Err(PairError::EmptyPool { bucket, requested });
    }
    let already_taken = seen
        .iter()
        .filter(|&&(a, b)| pools.accepts(a, b, bucket))
        .count();
    let available = (ordered_total / 2) as usize - already_taken;
    if requested > available {
        return Err(PairError::PoolExhausted {
            bucket,
            requested,
            available,
        });
    }

    if requested * 2 > available {
        let mut all: Vec<(usize, usize)> = pools
            .enumerate(bucket)
            .into_iter()
            .filter(|p| !seen.contains(p))
            .collect();
        all.shuffle(rng);
        for pair in all.into_iter().take(requested) {
            seen.insert(pair);
            out.push((pair.0, pair.1, bucket));
        }
        return Ok(());
    }

    let anchors = WeightedIndex::new(&weights).expect("positive total weight");
    let mut drawn = 0;
    while drawn < requested {
        let a = anchors.sample(rng);
        let x = pools.draw_partner(rng, a, bucket);
        let pair = pools.canonical(a, x);
        if seen.insert(pair) {
            out.push((pair.0, pair.1, bucket));
            drawn += 1;
        }
    }
    Ok(())
}

fn finish(pools: &Pools<'_>, mut raw: Vec<(usize, usize, Bucket)>) -> Result<Vec<LabeledPair>, PairError> {
    raw.sort_unstable();
    raw.into_iter()
        .map(|(a, b, bucket)| LabeledPair::negative(pools.products[a].id(), pools.products[b].id(), bucket))
        .collect()
}
