//! Variation/common attribute identification for variation groups.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::catalog::{CatalogStore, Product, VariationGroup};
use crate::concurrency::bounded_map;
use crate::matchkit::{GenerationParams, GenerativeClient, MatchError};
use crate::prompt::{fill, render_group_blocks, ATTR_TEMPLATE, RAG_CONTEXT_TEMPLATE};
use crate::provenance::Provenance;
use crate::text::{normalize_key, normalize_value};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AttrError {
    #[error("variation attributes need a group of at least 2 products, got {0}")]
    GroupTooSmall(usize),
    #[error("unparseable attribute response: {message}")]
    Parse { message: String, raw: String },
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error("unknown product {0:?}")]
    UnknownProduct(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttrLabel {
    Variation,
    Common,
}

impl fmt::Display for AttrLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttrLabel::Variation => "variation",
            AttrLabel::Common => "common",
        })
    }
}

pub type AttrLabels = BTreeMap<String, AttrLabel>;

/// Keys labeled `variation`, in key order.
pub fn variation_keys(labels: &AttrLabels) -> BTreeSet<String> {
    labels
        .iter()
        .filter(|(_, l)| **l == AttrLabel::Variation)
        .map(|(k, _)| k.clone())
        .collect()
}

/// Labels each key by its distinct-value ratio: `variation` iff
/// `distinct / group_size > 0.9`. When only some members have a key, the
/// absence counts as one more distinct value.
pub fn heuristic_labels(group: &[&Product]) -> Result<AttrLabels, AttrError> {
    let n = group.len();
    if n < 2 {
        return Err(AttrError::GroupTooSmall(n));
    }
    let mut values: BTreeMap<&str, (BTreeSet<String>, usize)> = BTreeMap::new();
    for p in group {
        for a in p.attributes() {
            let entry = values.entry(a.key.as_str()).or_default();
            entry.0.insert(normalize_value(&a.value));
            entry.1 += 1;
        }
    }
    Ok(values
        .into_iter()
        .map(|(key, (distinct, holders))| {
            let d = distinct.len() + usize::from(holders < n);
            let label = if 10 * d > 9 * n {
                AttrLabel::Variation
            } else {
                AttrLabel::Common
            };
            (key.to_string(), label)
        })
        .collect())
}

/// Known variation attributes for a product type and a brand.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RagContext {
    pub product_type: String,
    pub brand: String,
    pub type_variation_attrs: Vec<String>,
    pub brand_variation_attrs: Vec<String>,
}

impl RagContext {
    /// The two context sentences, type first.
    pub fn render(&self) -> String {
        fill(
            RAG_CONTEXT_TEMPLATE,
            &[
                ("product_type", &self.product_type),
                ("product_type_variation_attributes", &self.type_variation_attrs.join(", ")),
                ("brand", &self.brand),
                ("brand_variation_attributes", &self.brand_variation_attrs.join(", ")),
            ],
        )
    }
}

fn group_variation_keys(store: &CatalogStore, group: &VariationGroup) -> Vec<String> {
    match group.gold_variation_keys() {
        Some(keys) => keys.to_vec(),
        None if group.len() >= 2 => heuristic_labels(&store.members(group))
            .map(|l| variation_keys(&l).into_iter().collect())
            .unwrap_or_default(),
        None => Vec::new(),
    }
}

/// Collects variation attributes from groups sharing the product type or
/// the brand. Groups containing any of `query_members` are skipped.
/// Type and brand comparisons ignore case and whitespace runs.
pub fn retrieve_variation_context(
    store: &CatalogStore,
    product_type: &str,
    brand: &str,
    query_members: &[&str],
) -> RagContext {
    let want_type = normalize_value(product_type);
    let want_brand = normalize_value(brand);
    let matches = |v: Option<&str>, want: &str| !want.is_empty() && v.is_some_and(|v| normalize_value(v) == want);
    let mut by_type = BTreeSet::new();
    let mut by_brand = BTreeSet::new();
    for group in store.groups() {
        if group.member_ids().iter().any(|m| query_members.contains(&m.as_str())) {
            continue;
        }
        let members = store.members(group);
        let type_hit = members.iter().any(|p| matches(p.product_type(), &want_type));
        let brand_hit = members.iter().any(|p| matches(p.brand(), &want_brand));
        if !type_hit && !brand_hit {
            continue;
        }
        for key in group_variation_keys(store, group) {
            let key = normalize_key(&key);
            if type_hit {
                by_type.insert(key.clone());
            }
            if brand_hit {
                by_brand.insert(key);
            }
        }
    }
    RagContext {
        product_type: product_type.to_string(),
        brand: brand.to_string(),
        type_variation_attrs: by_type.into_iter().collect(),
        brand_variation_attrs: by_brand.into_iter().collect(),
    }
}

/// The variation-attribute prompt for `group`, with the context sentences
/// inserted before the product listing when `context` is given.
pub fn build_attr_prompt(group: &[&Product], context: Option<&RagContext>) -> String {
    let rag = context.map(|c| format!("{}\n\n", c.render())).unwrap_or_default();
    fill(
        ATTR_TEMPLATE,
        &[("rag_context", &rag), ("variation_group_products", &render_group_blocks(group))],
    )
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttrPrediction {
    pub different: Vec<String>,
    pub same: Vec<String>,
    #[serde(default)]
    pub reason: Vec<String>,
    /// Names listed under both `different` and `same`.
    #[serde(default)]
    pub contradictions: Vec<String>,
    /// Text surrounded the JSON object.
    #[serde(default)]
    pub prose_detected: bool,
}

impl AttrPrediction {
    /// Builds a prediction from raw name lists, normalizing and recording
    /// contradictions.
    pub fn from_lists(different: &[&str], same: &[&str]) -> Self {
        let different = normalized_unique(different.iter().copied());
        let same = normalized_unique(same.iter().copied());
        let contradictions = different.iter().filter(|d| same.contains(d)).cloned().collect();
        Self {
            different,
            same,
            reason: Vec::new(),
            contradictions,
            prose_detected: false,
        }
    }
}

fn normalized_unique<'a>(names: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    names
        .map(normalize_key)
        .filter(|k| !k.is_empty() && seen.insert(k.clone()))
        .collect()
}

fn first_json_object(text: &str) -> Option<(serde_json::Map<String, Value>, usize, usize)> {
    for (start, _) in text.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&text[start..]).into_iter::<Value>();
        if let Some(Ok(Value::Object(map))) = stream.next() {
            return Some((map, start, start + stream.byte_offset()));
        }
    }
    None
}

fn string_list(value: &Value, key: &str, raw: &str) -> Result<Vec<String>, AttrError> {
    let bad = || AttrError::Parse {
        message: format!("{key:?} must be an array of strings"),
        raw: raw.to_string(),
    };
    value
        .as_array()
        .ok_or_else(bad)?
        .iter()
        .map(|v| v.as_str().map(str::to_string).ok_or_else(bad))
        .collect()
}

/// Extracts the first JSON object in `text` and reads its `Different`,
/// `Same` and optional `Reason` entries.
pub fn parse_attr_response(text: &str) -> Result<AttrPrediction, AttrError> {
    let parse_error = |message: String| AttrError::Parse {
        message,
        raw: text.to_string(),
    };
    let (obj, start, end) = first_json_object(text).ok_or_else(|| parse_error("no JSON object found".into()))?;
    let field = |k: &str| obj.get(k).ok_or_else(|| parse_error(format!("missing key {k:?}")));
    let different = string_list(field("Different")?, "Different", text)?;
    let same = string_list(field("Same")?, "Same", text)?;
    let reason = match obj.get("Reason") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::String(s)) => vec![s.clone()],
        Some(v) => string_list(v, "Reason", text)?,
    };
    let d: Vec<&str> = different.iter().map(String::as_str).collect();
    let s: Vec<&str> = same.iter().map(String::as_str).collect();
    let mut pred = AttrPrediction::from_lists(&d, &s);
    pred.reason = reason;
    pred.prose_detected = !text[..start].trim().is_empty() || !text[end..].trim().is_empty();
    Ok(pred)
}

/// Maps names to labels. A name in both lists becomes `variation` and adds
/// one to the penalty count.
pub fn reconcile_labels(pred: &AttrPrediction) -> (AttrLabels, usize) {
    let mut labels = AttrLabels::new();
    let mut penalty = 0;
    for name in &pred.same {
        labels.insert(normalize_key(name), AttrLabel::Common);
    }
    for name in &pred.different {
        if labels.insert(normalize_key(name), AttrLabel::Variation) == Some(AttrLabel::Common) {
            penalty += 1;
        }
    }
    (labels, penalty)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttrMethod {
    Heuristic,
    ZeroShot,
    Rag,
}

impl AttrMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            AttrMethod::Heuristic => "heuristic",
            AttrMethod::ZeroShot => "zero_shot",
            AttrMethod::Rag => "rag",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttrOutcome {
    pub group_id: String,
    pub method: AttrMethod,
    pub labels: AttrLabels,
    pub penalty_count: usize,
    pub raw: Option<AttrPrediction>,
}

fn resolve<'a>(store: &'a CatalogStore, group: &VariationGroup) -> Result<Vec<&'a Product>, AttrError> {
    group
        .member_ids()
        .iter()
        .map(|id| store.product(id).ok_or_else(|| AttrError::UnknownProduct(id.clone())))
        .collect()
}

/// Type and brand of the first member that has each.
fn group_identity(members: &[&Product]) -> (String, String) {
    let first = |f: fn(&Product) -> Option<&str>| members.iter().find_map(|p| f(p)).unwrap_or("").to_string();
    (first(Product::product_type), first(Product::brand))
}

/// Retrieve, prompt, complete, parse and reconcile for one group.
pub fn identify_attributes(
    client: &GenerativeClient,
    store: &CatalogStore,
    group: &VariationGroup,
    use_rag: bool,
    params: &GenerationParams,
) -> Result<AttrOutcome, AttrError> {
    let members = resolve(store, group)?;
    if members.len() < 2 {
        return Err(AttrError::GroupTooSmall(members.len()));
    }
    let context = use_rag.then(|| {
        let (product_type, brand) = group_identity(&members);
        let ids: Vec<&str> = group.member_ids().iter().map(String::as_str).collect();
        retrieve_variation_context(store, &product_type, &brand, &ids)
    });
    let prompt = build_attr_prompt(&members, context.as_ref());
    let completion = client.complete(&prompt, params)?;
    let pred = parse_attr_response(&completion)?;
    let (labels, penalty_count) = reconcile_labels(&pred);
    Ok(AttrOutcome {
        group_id: group.id().to_string(),
        method: if use_rag { AttrMethod::Rag } else { AttrMethod::ZeroShot },
        labels,
        penalty_count,
        raw: Some(pred),
    })
}

/// Runs [`identify_attributes`] over many groups with at most `workers`
/// requests in flight. A failing group yields an error in its slot.
pub fn identify_batch(
    client: &GenerativeClient,
    store: &CatalogStore,
    groups: &[&VariationGroup],
    use_rag: bool,
    params: &GenerationParams,
    workers: usize,
) -> Vec<Result<AttrOutcome, AttrError>> {
    bounded_map(groups, workers, |g| identify_attributes(client, store, g, use_rag, params))
}

pub fn heuristic_outcome(store: &CatalogStore, group: &VariationGroup) -> Result<AttrOutcome, AttrError> {
    let members = resolve(store, group)?;
    Ok(AttrOutcome {
        group_id: group.id().to_string(),
        method: AttrMethod::Heuristic,
        labels: heuristic_labels(&members)?,
        penalty_count: 0,
        raw: None,
    })
}

/// One report line. Failed groups carry `error` and no labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttrReportRecord {
    pub group_id: String,
    pub method: AttrMethod,
    pub labels: AttrLabels,
    pub penalty_count: usize,
    pub raw: Option<AttrPrediction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl AttrReportRecord {
    pub fn from_result(group_id: &str, method: AttrMethod, result: &Result<AttrOutcome, AttrError>) -> Self {
        match result {
            Ok(o) => Self {
                group_id: o.group_id.clone(),
                method: o.method,
                labels: o.labels.clone(),
                penalty_count: o.penalty_count,
                raw: o.raw.clone(),
                error: None,
            },
            Err(e) => Self {
                group_id: group_id.to_string(),
                method,
                labels: AttrLabels::new(),
                penalty_count: 0,
                raw: None,
                error: Some(e.to_string()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttrReportMeta {
    pub method: AttrMethod,
    pub groups: usize,
    pub failed: usize,
    #[serde(flatten)]
    pub provenance: Provenance,
}

/// Newline-delimited report: a metadata line, then one record per group.
pub fn write_attr_report<W: Write>(
    records: &[AttrReportRecord],
    method: AttrMethod,
    provenance: &Provenance,
    mut out: W,
) -> std::io::Result<()> {
    let meta = AttrReportMeta {
        method,
        groups: records.len(),
        failed: records.iter().filter(|r| r.error.is_some()).count(),
        provenance: provenance.clone(),
    };
    serde_json::to_writer(&mut out, &meta)?;
    out.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_attr_report(text: &str) -> Result<(AttrReportMeta, Vec<AttrReportRecord>), serde_json::Error> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let meta = serde_json::from_str(lines.next().unwrap_or(""))?;
    let records = lines.map(serde_json::from_str).collect::<Result<_, _>>()?;
    Ok((meta, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(id: &str, attrs: &[(&str, &str)]) -> Product {
        let mut b = Product::builder(id);
        for (k, v) in attrs {
            b = b.attr(*k, *v);
        }
        b.build().unwrap()
    }

    #[test]
    fn heuristic_examples() {
        let g = [
            p("a", &[("color", "red"), ("brand", "acme")]),
            p("b", &[("color", "blue"), ("brand", "acme")]),
            p("c", &[("color", "green"), ("brand", "Acme")]),
        ];
        let refs: Vec<&Product> = g.iter().collect();
        let labels = heuristic_labels(&refs).unwrap();
        assert_eq!(labels["color"], AttrLabel::Variation);
        assert_eq!(labels["brand"], AttrLabel::Common);
    }

    #[test]
    fn nine_of_ten_is_common() {
        let g: Vec<Product> = (0..10).map(|i| p(&format!("p{i}"), &[("size", &format!("s{}", i.min(8)))])).collect();
        let refs: Vec<&Product> = g.iter().collect();
        assert_eq!(heuristic_labels(&refs).unwrap()["size"], AttrLabel::Common);
    }

    #[test]
    fn partial_key_counts_absence() {
        // two holders with distinct values plus absence: 3 of 3
        let g = [p("a", &[("size", "s")]), p("b", &[("size", "m")]), p("c", &[])];
        let refs: Vec<&Product> = g.iter().collect();
        assert_eq!(heuristic_labels(&refs).unwrap()["size"], AttrLabel::Variation);
        // same value on both holders plus absence: 2 of 3
        let g = [p("a", &[("size", "s")]), p("b", &[("size", "s")]), p("c", &[])];
        let refs: Vec<&Product> = g.iter().collect();
        assert_eq!(heuristic_labels(&refs).unwrap()["size"], AttrLabel::Common);
    }

    #[test]
    fn singleton_rejected() {
        let a = p("a", &[]);
        assert_eq!(heuristic_labels(&[&a]), Err(AttrError::GroupTooSmall(1)));
    }

    #[test]
    fn parser_examples() {
        let pr = parse_attr_response(r#"{"Different":["color"],"Same":["color"]}"#).unwrap();
        assert_eq!(pr.contradictions, vec!["color"]);
        assert!(!pr.prose_detected);
        let pr = parse_attr_response(r#"Sure! {"Different":["size"],"Same":["brand"]}"#).unwrap();
        assert_eq!(pr.different, vec!["size"]);
        assert_eq!(pr.same, vec!["brand"]);
        assert!(pr.prose_detected);
    }

    #[test]
    fn parser_skips_unbalanced_brace_before_object() {
        let pr = parse_attr_response(r#"Always begin with "{" ok: {"Different":[],"Same":["Item Type"]} done"#).unwrap();
        assert_eq!(pr.same, vec!["item_type"]);
    }

    #[test]
    fn parser_errors() {
        for bad in [
            "no json here",
            r#"{"Different":["a"]}"#,
            r#"{"Different":"a","Same":[]}"#,
            r#"{"Different":[1],"Same":[]}"#,
            r#"{"Different":[],"Same":[],"Reason":5}"#,
        ] {
            assert!(matches!(parse_attr_response(bad), Err(AttrError::Parse { raw, .. }) if raw == bad), "{bad}");
        }
    }

    #[test]
    fn reconcile_counts_overlap() {
        let (labels, penalty) = reconcile_labels(&AttrPrediction::from_lists(&["color", "size"], &["color", "size", "brand"]));
        assert_eq!(penalty, 2);
        assert_eq!(labels["color"], AttrLabel::Variation);
        assert_eq!(labels["size"], AttrLabel::Variation);
        assert_eq!(labels["brand"], AttrLabel::Common);
        let (_, penalty) = reconcile_labels(&AttrPrediction::from_lists(&["color"], &["brand"]));
        assert_eq!(penalty, 0);
    }

    #[test]
    fn prompt_without_context_has_no_rag_sentence() {
        let g = [p("a", &[("color", "red")]), p("b", &[("color", "blue")])];
        let refs: Vec<&Product> = g.iter().collect();
        let text = build_attr_prompt(&refs, None);
        assert!(text.contains("Compare the details in the all products above"));
        assert!(!text.contains("Usual different attributes"));
        assert!(text.contains("Below are the products' descriptions: <product 1>\ncolor = red,\n</product 1>\n<product 2>"));
        assert_eq!(text, build_attr_prompt(&refs, None));
    }

    #[test]
    fn prompt_with_context_orders_type_then_brand() {
        let g = [p("a", &[("color", "red")]), p("b", &[("color", "blue")])];
        let refs: Vec<&Product> = g.iter().collect();
        let ctx = RagContext {
            product_type: "Shirt".into(),
            brand: "Acme".into(),
            type_variation_attrs: vec!["color".into(), "size".into()],
            brand_variation_attrs: vec!["fit".into()],
        };
        let text = build_attr_prompt(&refs, Some(&ctx));
        let t = text.find("Usual different attributes for Shirt products are color, size.").unwrap();
        let b = text.find("Usual different attributes for Acme products are fit.").unwrap();
        assert!(t < b);
    }
}
