//! Group-disjoint train/eval splitting.
//!
//! The unit of assignment is the variation group; a product outside every
//! group is its own unit. A negative is kept only when both of its units land
//! on the same side. Cross-split negatives are dropped and counted.
//!
//! Assignment happens in two passes: a seeded greedy fill towards the target
//! ratio, then a hill climb that moves single units while that brings the
//! realized (post-balancing) train fraction closer to the target. When the
//! input carries both labels, each side is then trimmed to equal class counts.

use std::collections::{BTreeSet, HashMap};

use num_rational::Ratio;
use num_traits::ToPrimitive;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{LabeledPair, MatchLabel, PairError};
use crate::catalog::CatalogStore;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitOptions {
    /// Trim the majority class on each side to the minority count.
    pub balance: bool,
    /// The hill climb stops once the realized train fraction is this close
    /// to the target.
    pub tolerance: f64,
    pub max_passes: usize,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self {
            balance: true,
            tolerance: 0.005,
            max_passes: 50,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitReport {
    pub units: usize,
    pub cross_split_dropped: usize,
    pub balance_dropped: usize,
    pub moves: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<LabeledPair>,
    pub eval: Vec<LabeledPair>,
    pub seed: u64,
    pub ratio: Ratio<u64>,
    pub train_groups: BTreeSet<String>,
    pub eval_groups: BTreeSet<String>,
    pub report: SplitReport,
}

impl DatasetSplit {
    pub fn train_fraction(&self) -> f64 {
        let total = self.train.len() + self.eval.len();
        if total == 0 {
            0.0
        } else {
            self.train.len() as f64 / total as f64
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.eval.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `|positives - negatives| / total` for one side; `0` when empty.
pub fn label_imbalance(pairs: &[LabeledPair]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let pos = pairs.iter().filter(|p| p.label().is_match()).count() as f64;
    let neg = pairs.len() as f64 - pos;
    (pos - neg).abs() / pairs.len() as f64
}

pub fn split_dataset(
    store: &CatalogStore,
    pairs: &[LabeledPair],
    ratio: Ratio<u64>,
    seed: u64,
) -> Result<DatasetSplit, PairError> {
    split_dataset_with(store, pairs, ratio, seed, SplitOptions::default())
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Unit {
    Group(String),
    Product(String),
}

struct Assignment {
    in_train: Vec<bool>,
    positives: Vec<usize>,
    /// Negative edges per unit (the other endpoint's unit; self-loops allowed).
    edges: Vec<Vec<usize>>,
    pos: [usize; 2],
    neg: [usize; 2],
    balance: bool,
    train_count: usize,
}

impl Assignment {
    fn side(&self, u: usize) -> usize {
        usize::from(!self.in_train[u])
    }

    fn effective(&self, pos: [usize; 2], neg: [usize; 2]) -> f64 {
        let size = |s: usize| {
            if self.balance {
                2 * pos[s].min(neg[s])
            } else {
                pos[s] + neg[s]
            }
        };
        let (t, e) = (size(0), size(1));
        if t + e == 0 {
            let (t, e) = (pos[0] + neg[0], pos[1] + neg[1]);
            if t + e == 0 {
                return 0.0;
            }
            return t as f64 / (t + e) as f64;
        }
        t as f64 / (t + e) as f64
    }

    fn fraction(&self) -> f64 {
        self.effective(self.pos, self.neg)
    }

    /// Counts after moving unit `u` to the other side.
    fn moved_counts(&self, u: usize) -> ([usize; 2], [usize; 2]) {
        let from = self.side(u);
        let to = 1 - from;
        let mut pos = self.pos;
        let mut neg = self.neg;
        pos[from] -= self.positives[u];
        pos[to] += self.positives[u];
        for &v in &self.edges[u] {
            if v == u {
                neg[from] -= 1;
                neg[to] += 1;
            } else if self.side(v) == from {
                neg[from] -= 1;
            } else {
                neg[to] += 1;
            }
        }
        (pos, neg)
    }

    fn recount(&mut self) {
        self.pos = [0, 0];
        self.neg = [0, 0];
        for u in 0..self.in_train.len() {
            self.pos[self.side(u)] += self.positives[u];
        }
        for u in 0..self.edges.len() {
            for &v in &self.edges[u] {
                // each edge is stored at both endpoints; count it once
                if u <= v && self.side(u) == self.side(v) {
                    self.neg[self.side(u)] += 1;
                }
            }
        }
        self.train_count = self.in_train.iter().filter(|&&t| t).count();
    }
}

pub fn split_dataset_with(
    store: &CatalogStore,
    pairs: &[LabeledPair],
    ratio: Ratio<u64>,
    seed: u64,
    options: SplitOptions,
) -> Result<DatasetSplit, PairError> {
    let target = ratio.to_f64().unwrap_or(f64::NAN);
    if *ratio.denom() == 0 || !(target > 0.0 && target < 1.0) {
        return Err(PairError::InvalidRatio(format!("{ratio}")));
    }

    let unit_of = |id: &str| -> Result<Unit, PairError> {
        if store.product(id).is_none() {
            return Err(PairError::UnknownProduct(id.to_string()));
        }
        Ok(match store.group_of(id) {
            Some(g) => Unit::Group(g.to_string()),
            None => Unit::Product(id.to_string()),
        })
    };

    let mut pair_units: Vec<(Unit, Unit)> = Vec::with_capacity(pairs.len());
    let mut unit_set: BTreeSet<Unit> = BTreeSet::new();
    for p in pairs {
        let (a, b) = (unit_of(p.left_id())?, unit_of(p.right_id())?);
        if p.label().is_match() && (a != b || matches!(a, Unit::Product(_))) {
            return Err(PairError::UngroupedPositive {
                left: p.left_id().to_string(),
                right: p.right_id().to_string(),
            });
        }
        unit_set.insert(a.clone());
        unit_set.insert(b.clone());
        pair_units.push((a, b));
    }
    if unit_set.len() < 2 {
        return Err(PairError::TooFewGroups(unit_set.len()));
    }
    let units: Vec<Unit> = unit_set.into_iter().collect();
    let index: HashMap<&Unit, usize> = units.iter().enumerate().map(|(i, u)| (u, i)).collect();
    let pair_idx: Vec<(usize, usize)> = pair_units.iter().map(|(a, b)| (index[a], index[b])).collect();

    let has_pos = pairs.iter().any(|p| p.label().is_match());
    let has_neg = pairs.iter().any(|p| !p.label().is_match());
    let mut asg = Assignment {
        in_train: vec![false; units.len()],
        positives: vec![0; units.len()],
        edges: vec![Vec::new(); units.len()],
        pos: [0, 0],
        neg: [0, 0],
        balance: options.balance && has_pos && has_neg,
        train_count: 0,
    };
    // weights counted in half-pairs so negatives split evenly between units
    let mut weight = vec![0usize; units.len()];
    for (p, &(a, b)) in pairs.iter().zip(&pair_idx) {
        if p.label().is_match() {
            asg.positives[a] += 1;
            weight[a] += 2;
        } else {
            asg.edges[a].push(b);
            if a != b {
                asg.edges[b].push(a);
            }
            weight[a] += 1;
            weight[b] += 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..units.len()).collect();
    order.shuffle(&mut rng);
    let total_weight: usize = weight.iter().sum();
    let target_weight = target * total_weight as f64;
    let mut train_weight = 0usize;
    for &u in &order {
        if (train_weight as f64) < target_weight {
            asg.in_train[u] = true;
            train_weight += weight[u];
        }
    }
    if asg.in_train.iter().all(|&t| t) {
        asg.in_train[*order.last().expect("at least two units")] = false;
    }
    if asg.in_train.iter().all(|&t| !t) {
        asg.in_train[order[0]] = true;
    }
    asg.recount();

    let mut moves = 0;
    for _ in 0..options.max_passes {
        if (asg.fraction() - target).abs() <= options.tolerance {
            break;
        }
        let mut improved = false;
        for &u in &order {
            let current = (asg.fraction() - target).abs();
            if current <= options.tolerance {
                break;
            }
            let from_train = asg.in_train[u];
            if from_train && asg.train_count == 1 || !from_train && asg.train_count == units.len() - 1 {
                continue;
            }
            let (pos, neg) = asg.moved_counts(u);
            if (asg.effective(pos, neg) - target).abs() + 1e-12 < current {
                asg.in_train[u] = !from_train;
                asg.pos = pos;
                asg.neg = neg;
                asg.train_count = if from_train { asg.train_count - 1 } else { asg.train_count + 1 };
                moves += 1;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }

    let mut sides: [Vec<LabeledPair>; 2] = [Vec::new(), Vec::new()];
    let mut cross = 0;
    for (p, &(a, b)) in pairs.iter().zip(&pair_idx) {
        if asg.side(a) == asg.side(b) {
            sides[asg.side(a)].push(p.clone());
        } else {
            cross += 1;
        }
    }
    let mut balance_dropped = 0;
    if asg.balance {
        for side in sides.iter_mut() {
            balance_dropped += trim_to_balance(side, &mut rng);
        }
    }

    let group_names = |train: bool| -> BTreeSet<String> {
        units
            .iter()
            .enumerate()
            .filter(|&(u, _)| asg.in_train[u] == train)
            .filter_map(|(_, unit)| match unit {
                Unit::Group(g) => Some(g.clone()),
                Unit::Product(_) => None,
            })
            .collect()
    };
    let [train, eval] = sides;
    Ok(DatasetSplit {
        train,
        eval,
        seed,
        ratio,
        train_groups: group_names(true),
        eval_groups: group_names(false),
        report: SplitReport {
            units: units.len(),
            cross_split_dropped: cross,
            balance_dropped,
            moves,
        },
    })
}

/// Drops a seeded random subset of the majority class, keeping input order.
fn trim_to_balance(pairs: &mut Vec<LabeledPair>, rng: &mut ChaCha8Rng) -> usize {
    let pos: Vec<usize> = (0..pairs.len()).filter(|&i| pairs[i].label() == MatchLabel::VariantMatch).collect();
    let neg: Vec<usize> = (0..pairs.len()).filter(|&i| pairs[i].label() == MatchLabel::Mismatch).collect();
    let (mut major, minor_len) = if pos.len() > neg.len() {
        (pos, neg.len())
    } else {
        (neg, pos.len())
    };
    if major.len() == minor_len {
        return 0;
    }
    major.shuffle(rng);
    let mut drop: Vec<usize> = major[minor_len..].to_vec();
    drop.sort_unstable();
    let dropped = drop.len();
    let mut keep = vec![true; pairs.len()];
    for i in drop {
        keep[i] = false;
    }
    let mut it = keep.into_iter();
    pairs.retain(|_| it.next().expect("same length"));
    dropped
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{synth_catalog, CatalogBuilder, Product, SynthSpec, VariationGroup};
    use crate::pairforge::{extract_positive_pairs, sample_negatives, NegativeMix};

    fn equal_groups(n_groups: usize, size: usize) -> CatalogStore {
        let mut b = CatalogBuilder::new();
        for g in 0..n_groups {
            let ids: Vec<String> = (0..size).map(|m| format!("g{g:02}m{m}")).collect();
            for id in &ids {
                b.add_product(Product::builder(id).brand("Acme").product_type("Mug").build().unwrap())
                    .unwrap();
            }
            b.add_group(VariationGroup::new(format!("g{g:02}"), ids, None).unwrap()).unwrap();
        }
        b.build().unwrap()
    }

    fn groups_of(store: &CatalogStore, pairs: &[LabeledPair]) -> BTreeSet<String> {
        pairs
            .iter()
            .flat_map(|p| [p.left_id(), p.right_id()])
            .filter_map(|id| store.group_of(id).map(str::to_string))
            .collect()
    }

    #[test]
    fn ten_groups_no_leakage() {
        let store = equal_groups(10, 3);
        let pos = extract_positive_pairs(&store);
        let neg = sample_negatives(
            &store,
            &pos,
            &NegativeMix {
                hard: 1.0,
                medium: 0.0,
                easy: 0.0,
            },
            pos.len(),
            4,
        )
        .unwrap();
        let all: Vec<LabeledPair> = pos.into_iter().chain(neg).collect();
        let split = split_dataset(&store, &all, Ratio::new(7, 10), 1).unwrap();
        let train = groups_of(&store, &split.train);
        let eval = groups_of(&store, &split.eval);
        assert!(train.is_disjoint(&eval));
        assert!(split.train_groups.is_disjoint(&split.eval_groups));
        assert_eq!(split.train_groups.len() + split.eval_groups.len(), 10);
        assert!((6..=7).contains(&split.train_groups.len()), "{}", split.train_groups.len());
    }

    #[test]
    fn half_ratio_two_groups_one_each() {
        let store = equal_groups(2, 3);
        let pos = extract_positive_pairs(&store);
        let split = split_dataset(&store, &pos, Ratio::new(1, 2), 9).unwrap();
        assert_eq!(split.train_groups.len(), 1);
        assert_eq!(split.eval_groups.len(), 1);
        assert_eq!(split.train.len(), 3);
        assert_eq!(split.eval.len(), 3);
    }

    #[test]
    fn ratio_bounds() {
        let store = equal_groups(3, 2);
        let pos = extract_positive_pairs(&store);
        for r in [Ratio::new(0, 1), Ratio::new(1, 1), Ratio::new(3, 2)] {
            assert!(matches!(split_dataset(&store, &pos, r, 0), Err(PairError::InvalidRatio(_))));
        }
    }

    #[test]
    fn needs_two_groups() {
        let store = equal_groups(1, 3);
        let pos = extract_positive_pairs(&store);
        assert!(matches!(
            split_dataset(&store, &pos, Ratio::new(7, 10), 0),
            Err(PairError::TooFewGroups(1))
        ));
    }

    #[test]
    fn deterministic_and_balanced() {
        let spec = SynthSpec {
            n_types: 3,
            brands_per_type: 3,
            groups_per_brand: 8,
            ..SynthSpec::default()
        };
        let store = synth_catalog(&spec, 2).unwrap();
        let pos = extract_positive_pairs(&store);
        let neg = sample_negatives(&store, &pos, &NegativeMix::default(), pos.len(), 3).unwrap();
        let all: Vec<LabeledPair> = pos.into_iter().chain(neg).collect();
        let a = split_dataset(&store, &all, Ratio::new(7, 10), 5).unwrap();
        let b = split_dataset(&store, &all, Ratio::new(7, 10), 5).unwrap();
        assert_eq!(a, b);
        assert!(label_imbalance(&a.train) <= 0.02);
        assert!(label_imbalance(&a.eval) <= 0.02);
        assert!((a.train_fraction() - 0.7).abs() <= 0.02, "{}", a.train_fraction());
        assert!(a.report.cross_split_dropped > 0);
    }

    #[test]
    fn trimming_keeps_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut pairs = vec![
            LabeledPair::positive("a", "b", "g").unwrap(),
            LabeledPair::positive("c", "d", "h").unwrap(),
            LabeledPair::negative("a", "c", crate::pairforge::Bucket::Hard).unwrap(),
        ];
        assert_eq!(trim_to_balance(&mut pairs, &mut rng), 1);
        assert_eq!(pairs.len(), 2);
        assert!(pairs[0].label().is_match());
        assert!(!pairs[1].label().is_match());
    }
}
