//! Seeded synthetic catalogs with planted variation keys.
//!
//! Every group shares brand, product type, title and all common keys across
//! its members, and carries pairwise-distinct values on each planted
//! variation key. The planted keys are recorded as the group's gold labels.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CatalogBuilder, CatalogError, CatalogStore, Product, VariationGroup};
use crate::text::normalize_key;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n_types: usize,
    pub brands_per_type: usize,
    pub groups_per_brand: usize,
    /// Inclusive bounds on members per group.
    pub group_size_range: (usize, usize),
    pub variation_keys_per_group: usize,
    /// Keys a group's planted variation keys are drawn from.
    pub variation_key_pool: Vec<String>,
    /// Keys whose value is shared by every member of a group.
    pub common_keys: Vec<String>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_types: 4,
            brands_per_type: 4,
            groups_per_brand: 8,
            group_size_range: (2, 6),
            variation_keys_per_group: 2,
            variation_key_pool: ["color", "size", "style", "pattern"].map(String::from).to_vec(),
            common_keys: ["material", "item_package_quantity"].map(String::from).to_vec(),
        }
    }
}

const PRODUCT_TYPES: &[&str] = &[
    "Keyboard", "Dress", "Ring", "Watch", "Sneaker", "Mug", "Backpack", "Lamp", "Headphones", "Jacket",
    "Sofa", "Tent",
];

const BRANDS: &[&str] = &[
    "Acme", "Globex", "Initech", "Umbrella", "Hooli", "Vandelay", "Stark", "Wayne", "Wonka", "Tyrell",
    "Cyberdyne", "Soylent", "Oscorp", "Aperture", "Monarch", "Nakatomi", "Duff", "Gringotts", "Vehement",
    "Massive",
];

const MODEL_WORDS: &[&str] = &[
    "Aurora", "Summit", "Harbor", "Nova", "Echo", "Vertex", "Pioneer", "Atlas", "Zephyr", "Lumen", "Orbit",
    "Cascade", "Ember", "Falcon", "Granite", "Horizon",
];

/// Word list backing a synthetic attribute key, or `None` for unknown keys.
pub fn value_vocabulary(key: &str) -> Option<&'static [&'static str]> {
    let words: &[&str] = match key {
        "color" => &[
            "Red", "Blue", "Green", "Black", "White", "Navy", "Olive", "Coral", "Teal", "Beige", "Maroon",
            "Silver", "Gold", "Ivory", "Charcoal", "Mustard", "Lavender", "Crimson", "Turquoise", "Graphite",
        ],
        "size" => &[
            "XX-Small", "X-Small", "Small", "Medium", "Large", "X-Large", "XX-Large", "3X-Large", "4X-Large",
            "5X-Large",
        ],
        "style" => &[
            "Classic", "Modern", "Vintage", "Sport", "Slim", "Relaxed", "Minimalist", "Rugged", "Elegant",
            "Retro",
        ],
        "pattern" => &[
            "Solid", "Striped", "Plaid", "Floral", "Checked", "Dotted", "Paisley", "Camouflage",
            "Herringbone", "Houndstooth",
        ],
        "material" => &[
            "Cotton", "Linen", "Wool", "Silk", "Polyester", "Leather", "Denim", "Cashmere", "Nylon",
            "Bamboo", "Steel", "Oak",
        ],
        "flavor" => &[
            "Vanilla", "Chocolate", "Strawberry", "Mango", "Mint", "Caramel", "Lemon", "Cherry", "Coconut",
            "Hazelnut", "Peach", "Raspberry",
        ],
        "capacity" => &["8 oz", "12 oz", "16 oz", "20 oz", "24 oz", "32 oz", "40 oz", "64 oz"],
        "length" => &["Mini", "Midi", "Maxi", "Knee", "Ankle", "Cropped", "Regular", "Long"],
        "scent" => &["Lavender", "Citrus", "Sandalwood", "Rose", "Jasmine", "Cedar", "Ocean", "Amber"],
        "metal" => &["Yellow Gold", "White Gold", "Rose Gold", "Platinum", "Sterling Silver", "Titanium"],
        "switch" => &["Linear", "Tactile", "Clicky", "Silent Linear", "Optical", "Speed"],
        "item_package_quantity" => &["1", "2", "3", "4", "6", "8", "10", "12", "24", "36"],
        _ => return None,
    };
    Some(words)
}

fn indexed_name(list: &[&str], i: usize) -> String {
    let base = list[i % list.len()];
    match i / list.len() {
        0 => base.to_string(),
        round => format!("{base} {}", round + 1),
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<(Vec<String>, Vec<String>), CatalogError> {
        let fail = |m: String| Err(CatalogError::Synth(m));
        if self.n_types == 0 || self.brands_per_type == 0 || self.groups_per_brand == 0 {
            return fail("type, brand and group counts must be at least 1".into());
        }
        let (lo, hi) = self.group_size_range;
        if lo == 0 || lo > hi {
            return fail(format!("group_size_range ({lo}, {hi}) must satisfy 1 <= min <= max"));
        }
        if self.variation_keys_per_group == 0 {
            return fail("variation_keys_per_group must be at least 1".into());
        }
        let pool = dedup_keys(&self.variation_key_pool);
        let common = dedup_keys(&self.common_keys);
        if pool.len() < self.variation_keys_per_group {
            return fail(format!(
                "variation_key_pool has {} keys but {} are planted per group",
                pool.len(),
                self.variation_keys_per_group
            ));
        }
        for key in pool.iter().chain(&common) {
            let Some(words) = value_vocabulary(key) else {
                return fail(format!("no value vocabulary for key {key:?}"));
            };
            if pool.contains(key) && words.len() < hi {
                return fail(format!(
                    "key {key:?} has {} vocabulary values but groups of {hi} need {hi} distinct values",
                    words.len()
                ));
            }
        }
        for reserved in ["brand", "product_type", "title"] {
            if pool.iter().chain(&common).any(|k| k == reserved) {
                return fail(format!("{reserved:?} is generated and cannot be configured"));
            }
        }
        Ok((pool, common))
    }
}

fn dedup_keys(keys: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for k in keys.iter().map(|k| normalize_key(k)) {
        if !out.contains(&k) {
            out.push(k);
        }
    }
    out
}

/// Generates a catalog that is a pure function of `(spec, seed)`.
pub fn synth_catalog(spec: &SynthSpec, seed: u64) -> Result<CatalogStore, CatalogError> {
    let (pool, common) = spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut builder = CatalogBuilder::new();
    let mut next_product = 0usize;
    let mut next_group = 0usize;
    let (lo, hi) = spec.group_size_range;

    for t in 0..spec.n_types {
        let product_type = indexed_name(PRODUCT_TYPES, t);
        for b in 0..spec.brands_per_type {
            let brand = indexed_name(BRANDS, t * spec.brands_per_type + b);
            for _ in 0..spec.groups_per_brand {
                let group_id = format!("g{next_group:06}");
                next_group += 1;
                let size = rng.random_range(lo..=hi);

                let mut planted: Vec<&String> = pool.choose_multiple(&mut rng, spec.variation_keys_per_group).collect();
                planted.sort_by_key(|k| pool.iter().position(|p| p == *k));
                let mut varying: Vec<Vec<&str>> = Vec::with_capacity(planted.len());
                for key in &planted {
                    let mut words = value_vocabulary(key).expect("validated").to_vec();
                    words.shuffle(&mut rng);
                    words.truncate(size);
                    varying.push(words);
                }
                let shared: Vec<(&String, &str)> = common
                    .iter()
                    .filter(|k| !planted.contains(k))
                    .map(|k| (k, *value_vocabulary(k).expect("validated").choose(&mut rng).expect("non-empty")))
                    .collect();
                let title = format!(
                    "{brand} {product_type} {} {}",
                    MODEL_WORDS.choose(&mut rng).expect("non-empty"),
                    rng.random_range(100..1000)
                );

                let mut members = Vec::with_capacity(size);
                for m in 0..size {
                    let id = format!("p{next_product:07}");
                    next_product += 1;
                    let mut pb = Product::builder(&id)
                        .brand(&brand)
                        .product_type(&product_type)
                        .attr("title", &title);
                    for (key, value) in &shared {
                        pb = pb.attr(key.as_str(), *value);
                    }
                    for (key, values) in planted.iter().zip(&varying) {
                        pb = pb.attr(key.as_str(), values[m]);
                    }
                    builder.add_product(pb.build()?)?;
                    members.push(id);
                }
                let gold = planted.iter().map(|k| (*k).clone()).collect();
                builder.add_group(VariationGroup::new(group_id, members, Some(gold))?)?;
            }
        }
    }
    builder.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn one_group_spec() -> SynthSpec {
        SynthSpec {
            n_types: 1,
            brands_per_type: 1,
            groups_per_brand: 1,
            group_size_range: (3, 3),
            variation_keys_per_group: 1,
            variation_key_pool: vec!["color".into()],
            common_keys: vec!["material".into()],
        }
    }

    #[test]
    fn single_group_differs_only_in_color() {
        let store = synth_catalog(&one_group_spec(), 7).unwrap();
        let group = store.groups().next().unwrap();
        assert_eq!(group.gold_variation_keys(), Some(&["color".to_string()][..]));
        let members = store.members(group);
        assert_eq!(members.len(), 3);
        let colors: BTreeSet<&str> = members.iter().map(|p| p.get("color").unwrap()).collect();
        assert_eq!(colors.len(), 3);
        for p in &members[1..] {
            for a in p.attributes() {
                if a.key != "color" {
                    assert_eq!(members[0].get(&a.key), Some(a.value.as_str()), "key {}", a.key);
                }
            }
        }
    }

    #[test]
    fn deterministic_bytes() {
        let a = synth_catalog(&one_group_spec(), 7).unwrap().to_jsonl_bytes();
        let b = synth_catalog(&one_group_spec(), 7).unwrap().to_jsonl_bytes();
        assert_eq!(a, b);
        let c = synth_catalog(&SynthSpec::default(), 1).unwrap().to_jsonl_bytes();
        let d = synth_catalog(&SynthSpec::default(), 2).unwrap().to_jsonl_bytes();
        assert_ne!(c, d);
    }

    #[test]
    fn group_sizes_within_bounds_exhaustive() {
        let spec = SynthSpec {
            n_types: 2,
            brands_per_type: 2,
            groups_per_brand: 10,
            group_size_range: (2, 6),
            ..SynthSpec::default()
        };
        let store = synth_catalog(&spec, 11).unwrap();
        assert_eq!(store.group_count(), 40);
        let sizes: BTreeSet<usize> = store.groups().map(|g| g.len()).collect();
        assert!(sizes.iter().all(|s| (2..=6).contains(s)), "{sizes:?}");
    }

    #[test]
    fn vocabulary_too_small_is_error() {
        let spec = SynthSpec {
            group_size_range: (2, 11),
            variation_key_pool: vec!["size".into()],
            variation_keys_per_group: 1,
            ..SynthSpec::default()
        };
        assert!(matches!(synth_catalog(&spec, 0), Err(CatalogError::Synth(_))));
    }

    #[test]
    fn zero_counts_rejected() {
        let spec = SynthSpec {
            n_types: 0,
            ..SynthSpec::default()
        };
        assert!(synth_catalog(&spec, 0).is_err());
        let spec = SynthSpec {
            group_size_range: (0, 3),
            ..SynthSpec::default()
        };
        assert!(synth_catalog(&spec, 0).is_err());
    }

    #[test]
    fn unknown_key_rejected() {
        let spec = SynthSpec {
            common_keys: vec!["warranty".into()],
            ..SynthSpec::default()
        };
        assert!(synth_catalog(&spec, 0).is_err());
    }
}
