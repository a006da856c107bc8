//! Product and variation-group data model, the catalog store, file ingestion
//! and the seeded synthetic catalog generator.

mod ingest;
mod synth;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::text::{normalize_key, normalize_value};

pub use ingest::{ingest_catalog, ingest_reader, CatalogFormat, IngestReport, Ingested, RecordError};
pub use synth::{synth_catalog, value_vocabulary, SynthSpec};

pub const BRAND_KEY: &str = "brand";
pub const PRODUCT_TYPE_KEY: &str = "product_type";

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("invalid product {id:?}: {reason}")]
    InvalidProduct { id: String, reason: String },
    #[error("invalid group {id:?}: {reason}")]
    InvalidGroup { id: String, reason: String },
    #[error("product {0:?} appears twice with conflicting bodies")]
    ConflictingProduct(String),
    #[error("group {0:?} appears twice with conflicting bodies")]
    ConflictingGroup(String),
    #[error("group {group:?} references unknown product {product:?}")]
    UnknownMember { group: String, product: String },
    #[error("product {product:?} belongs to both group {first:?} and group {second:?}")]
    MultipleGroups {
        product: String,
        first: String,
        second: String,
    },
    #[error("group {group:?} lists gold variation key {key:?} that no member has")]
    GoldKeyNotPresent { group: String, key: String },
    #[error("synthetic catalog spec: {0}")]
    Synth(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Write(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Attribute {
    pub key: String,
    pub value: String,
}

/// A catalog listing: an identifier plus ordered attribute key-value pairs.
///
/// Keys are normalized and unique. When `brand` or `product_type` is set it
/// is mirrored as an attribute with the same value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Product {
    id: String,
    brand: Option<String>,
    product_type: Option<String>,
    attributes: Vec<Attribute>,
    source_url: Option<String>,
}

impl Product {
    pub fn builder(id: impl Into<String>) -> ProductBuilder {
        ProductBuilder {
            id: id.into(),
            brand: None,
            product_type: None,
            attributes: Vec::new(),
            source_url: None,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn brand(&self) -> Option<&str> {
        self.brand.as_deref()
    }

    pub fn product_type(&self) -> Option<&str> {
        self.product_type.as_deref()
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn source_url(&self) -> Option<&str> {
        self.source_url.as_deref()
    }

    /// Value stored under an already-normalized key.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.attributes
            .iter()
            .find(|a| a.key == key)
            .map(|a| a.value.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.attributes.iter().map(|a| a.key.as_str())
    }

    /// `same brand` in the negative-sampling sense: both present and equal
    /// after value normalization. A missing brand never matches.
    pub fn same_brand(&self, other: &Product) -> bool {
        same_optional(self.brand(), other.brand())
    }

    pub fn same_product_type(&self, other: &Product) -> bool {
        same_optional(self.product_type(), other.product_type())
    }

    /// Index key: raw brand and product type.
    pub fn brand_type_key(&self) -> BrandTypeKey {
        (self.brand.clone(), self.product_type.clone())
    }
}

fn same_optional(a: Option<&str>, b: Option<&str>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => normalize_value(x) == normalize_value(y),
        _ => false,
    }
}

pub type BrandTypeKey = (Option<String>, Option<String>);

#[derive(Debug, Clone)]
pub struct ProductBuilder {
    id: String,
    brand: Option<String>,
    product_type: Option<String>,
    attributes: Vec<(String, String)>,
    source_url: Option<String>,
}

impl ProductBuilder {
    pub fn brand(mut self, brand: impl Into<String>) -> Self {
        self.brand = Some(brand.into());
        self
    }

    pub fn product_type(mut self, product_type: impl Into<String>) -> Self {
        self.product_type = Some(product_type.into());
        self
    }

    pub fn maybe_brand(mut self, brand: Option<String>) -> Self {
        self.brand = brand;
        self
    }

    pub fn maybe_product_type(mut self, product_type: Option<String>) -> Self {
        self.product_type = product_type;
        self
    }

    pub fn attr(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.attributes.push((key.into(), value.into()));
        self
    }

    pub fn source_url(mut self, url: impl Into<String>) -> Self {
        self.source_url = Some(url.into());
        self
    }

    pub fn maybe_source_url(mut self, url: Option<String>) -> Self {
        self.source_url = url;
        self
    }

    pub fn build(self) -> Result<Product, CatalogError> {
        let invalid = |reason: String| CatalogError::InvalidProduct {
            id: self.id.clone(),
            reason,
        };
        if self.id.trim().is_empty() {
            return Err(invalid("empty product_id".into()));
        }
        let mut attributes: Vec<Attribute> = Vec::with_capacity(self.attributes.len() + 2);
        for (raw_key, value) in &self.attributes {
            let key = normalize_key(raw_key);
            if key.is_empty() {
                return Err(invalid(format!("attribute key {raw_key:?} is blank")));
            }
            if attributes.iter().any(|a| a.key == key) {
                return Err(invalid(format!("duplicate attribute key {key:?}")));
            }
            attributes.push(Attribute {
                key,
                value: value.clone(),
            });
        }
        let brand = mirror_field(&mut attributes, BRAND_KEY, self.brand.clone()).map_err(&invalid)?;
        let product_type =
            mirror_field(&mut attributes, PRODUCT_TYPE_KEY, self.product_type.clone()).map_err(&invalid)?;
        Ok(Product {
            id: self.id.clone(),
            brand,
            product_type,
            attributes,
            source_url: self.source_url.clone(),
        })
    }
}

fn blank_to_none(v: Option<String>) -> Option<String> {
    v.filter(|s| !s.trim().is_empty())
}

/// Keeps a first-class field and its attribute mirror in agreement.
fn mirror_field(
    attributes: &mut Vec<Attribute>,
    key: &str,
    field: Option<String>,
) -> Result<Option<String>, String> {
    let field = blank_to_none(field);
    let existing = attributes.iter().find(|a| a.key == key).map(|a| a.value.clone());
    match (field, existing) {
        (Some(f), Some(a)) if f != a => Err(format!("{key} field {f:?} disagrees with attribute value {a:?}")),
        (Some(f), Some(_)) => Ok(Some(f)),
        (Some(f), None) => {
            attributes.push(Attribute {
                key: key.to_string(),
                value: f.clone(),
            });
            Ok(Some(f))
        }
        (None, a) => Ok(blank_to_none(a)),
    }
}

/// Products co-listed on one webpage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariationGroup {
    id: String,
    member_ids: Vec<String>,
    gold_variation_keys: Option<Vec<String>>,
}

impl VariationGroup {
    pub fn new(
        id: impl Into<String>,
        member_ids: Vec<String>,
        gold_variation_keys: Option<Vec<String>>,
    ) -> Result<Self, CatalogError> {
        let id = id.into();
        let invalid = |reason: &str| CatalogError::InvalidGroup {
            id: id.clone(),
            reason: reason.to_string(),
        };
        if id.trim().is_empty() {
            return Err(invalid("empty group_id"));
        }
        if member_ids.is_empty() {
            return Err(invalid("group has no members"));
        }
        let distinct: BTreeSet<&String> = member_ids.iter().collect();
        if distinct.len() != member_ids.len() {
            return Err(invalid("duplicate member ids"));
        }
        let gold_variation_keys = gold_variation_keys.map(|keys| {
            let mut seen = BTreeSet::new();
            keys.iter()
                .map(|k| normalize_key(k))
                .filter(|k| !k.is_empty() && seen.insert(k.clone()))
                .collect()
        });
        Ok(Self {
            id,
            member_ids,
            gold_variation_keys,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn member_ids(&self) -> &[String] {
        &self.member_ids
    }

    pub fn len(&self) -> usize {
        self.member_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_ids.is_empty()
    }

    pub fn gold_variation_keys(&self) -> Option<&[String]> {
        self.gold_variation_keys.as_deref()
    }
}

/// Immutable, indexed collection of products and variation groups.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CatalogStore {
    products: BTreeMap<String, Product>,
    groups: BTreeMap<String, VariationGroup>,
    by_brand_type: BTreeMap<BrandTypeKey, BTreeSet<String>>,
    group_of: HashMap<String, String>,
}

impl CatalogStore {
    pub fn product(&self, id: &str) -> Option<&Product> {
        self.products.get(id)
    }

    /// Products in ascending id order.
    pub fn products(&self) -> impl Iterator<Item = &Product> {
        self.products.values()
    }

    pub fn product_count(&self) -> usize {
        self.products.len()
    }

    pub fn group(&self, id: &str) -> Option<&VariationGroup> {
        self.groups.get(id)
    }

    /// Groups in ascending id order.
    pub fn groups(&self) -> impl Iterator<Item = &VariationGroup> {
        self.groups.values()
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn group_of(&self, product_id: &str) -> Option<&str> {
        self.group_of.get(product_id).map(String::as_str)
    }

    /// Members of a group, in the group's listed order.
    pub fn members(&self, group: &VariationGroup) -> Vec<&Product> {
        group
            .member_ids
            .iter()
            .map(|id| &self.products[id])
            .collect()
    }

    pub fn with_brand_type(&self, brand: Option<&str>, product_type: Option<&str>) -> Option<&BTreeSet<String>> {
        self.by_brand_type
            .get(&(brand.map(str::to_string), product_type.map(str::to_string)))
    }

    pub fn brand_type_index(&self) -> &BTreeMap<BrandTypeKey, BTreeSet<String>> {
        &self.by_brand_type
    }

    /// Writes the store as catalog records: an optional leading metadata
    /// record, products by id, then groups by id.
    pub fn write_jsonl<W: Write>(
        &self,
        mut out: W,
        meta: Option<&serde_json::Map<String, serde_json::Value>>,
    ) -> Result<(), CatalogError> {
        if let Some(meta) = meta {
            serde_json::to_writer(&mut out, &CatalogRecord::Meta(meta.clone())).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        for p in self.products.values() {
            serde_json::to_writer(&mut out, &CatalogRecord::Product(ProductRecord::from(p)))
                .map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        for g in self.groups.values() {
            serde_json::to_writer(&mut out, &CatalogRecord::Group(GroupRecord::from(g)))
                .map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_jsonl_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf, None).expect("in-memory write");
        buf
    }
}

/// Whether adding a record changed the builder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AddOutcome {
    Inserted,
    Duplicate,
}

/// Accumulates products and groups; cross-record checks run in [`build`].
///
/// [`build`]: CatalogBuilder::build
#[derive(Debug, Default)]
pub struct CatalogBuilder {
    products: BTreeMap<String, Product>,
    groups: BTreeMap<String, VariationGroup>,
}

impl CatalogBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_product(&mut self, product: Product) -> Result<AddOutcome, CatalogError> {
        match self.products.get(product.id()) {
            Some(existing) if *existing == product => Ok(AddOutcome::Duplicate),
            Some(_) => Err(CatalogError::ConflictingProduct(product.id.clone())),
            None => {
                self.products.insert(product.id.clone(), product);
                Ok(AddOutcome::Inserted)
            }
        }
    }

    pub fn add_group(&mut self, group: VariationGroup) -> Result<AddOutcome, CatalogError> {
        match self.groups.get(group.id()) {
            Some(existing) if *existing == group => Ok(AddOutcome::Duplicate),
            Some(_) => Err(CatalogError::ConflictingGroup(group.id.clone())),
            None => {
                self.groups.insert(group.id.clone(), group);
                Ok(AddOutcome::Inserted)
            }
        }
    }

    pub fn build(self) -> Result<CatalogStore, CatalogError> {
        let mut group_of: HashMap<String, String> = HashMap::new();
        for g in self.groups.values() {
            for m in &g.member_ids {
                if !self.products.contains_key(m) {
                    return Err(CatalogError::UnknownMember {
                        group: g.id.clone(),
                        product: m.clone(),
                    });
                }
                if let Some(first) = group_of.insert(m.clone(), g.id.clone()) {
                    return Err(CatalogError::MultipleGroups {
                        product: m.clone(),
                        first,
                        second: g.id.clone(),
                    });
                }
            }
            if let Some(gold) = &g.gold_variation_keys {
                for key in gold {
                    let present = g
                        .member_ids
                        .iter()
                        .any(|m| self.products[m].get(key).is_some());
                    if !present {
                        return Err(CatalogError::GoldKeyNotPresent {
                            group: g.id.clone(),
                            key: key.clone(),
                        });
                    }
                }
            }
        }
        let mut by_brand_type: BTreeMap<BrandTypeKey, BTreeSet<String>> = BTreeMap::new();
        for p in self.products.values() {
            by_brand_type
                .entry(p.brand_type_key())
                .or_default()
                .insert(p.id.clone());
        }
        Ok(CatalogStore {
            products: self.products,
            groups: self.groups,
            by_brand_type,
            group_of,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
pub(crate) enum CatalogRecord {
    Product(ProductRecord),
    Group(GroupRecord),
    Meta(serde_json::Map<String, serde_json::Value>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct ProductRecord {
    product_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    brand: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    product_type: Option<String>,
    #[serde(default)]
    attributes: Vec<Attribute>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source_url: Option<String>,
}

impl From<&Product> for ProductRecord {
    fn from(p: &Product) -> Self {
        Self {
            product_id: p.id.clone(),
            brand: p.brand.clone(),
            product_type: p.product_type.clone(),
            attributes: p.attributes.clone(),
            source_url: p.source_url.clone(),
        }
    }
}

impl ProductRecord {
    pub(crate) fn into_product(self) -> Result<Product, CatalogError> {
        let mut b = Product::builder(self.product_id)
            .maybe_brand(self.brand)
            .maybe_product_type(self.product_type)
            .maybe_source_url(self.source_url);
        for a in self.attributes {
            b = b.attr(a.key, a.value);
        }
        b.build()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct GroupRecord {
    group_id: String,
    member_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gold_variation_keys: Option<Vec<String>>,
}

impl From<&VariationGroup> for GroupRecord {
    fn from(g: &VariationGroup) -> Self {
        Self {
            group_id: g.id.clone(),
            member_ids: g.member_ids.clone(),
            gold_variation_keys: g.gold_variation_keys.clone(),
        }
    }
}

impl GroupRecord {
    pub(crate) fn into_group(self) -> Result<VariationGroup, CatalogError> {
        VariationGroup::new(self.group_id, self.member_ids, self.gold_variation_keys)
    }
}
