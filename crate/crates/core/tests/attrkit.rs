mod common;

use std::collections::BTreeSet;
use std::sync::Arc;
use std::sync::atomic::Ordering;

use serde_json::json;
use varm::attrkit::{
    identify_attributes, identify_batch, parse_attr_response, read_attr_report, reconcile_labels,
    retrieve_variation_context, write_attr_report, AttrError, AttrLabel, AttrMethod, AttrReportRecord,
};
use varm::catalog::{ingest_catalog, CatalogBuilder, CatalogFormat, CatalogStore, Product, VariationGroup};
use varm::matchkit::{Client, Endpoint, GenerationParams, GenerativeClient, HttpTransport, RetryPolicy};
use varm::provenance::Provenance;

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");

fn keyboard_catalog() -> CatalogStore {
    ingest_catalog(format!("{FIXTURES}/keyboard_catalog.jsonl"), CatalogFormat::JsonLines).unwrap().store
}

fn set(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

#[test]
fn keyboard_razer_context() {
    let ctx = retrieve_variation_context(&keyboard_catalog(), "Keyboard", "Razer", &[]);
    assert_eq!(
        ctx.brand_variation_attrs.iter().cloned().collect::<BTreeSet<_>>(),
        set(&["keyboard_switch", "keyboard_layout", "color/design"])
    );
    assert_eq!(
        ctx.type_variation_attrs.iter().cloned().collect::<BTreeSet<_>>(),
        set(&["keyboard_switch", "keyboard_layout", "color/design", "switch", "model"])
    );
}

#[test]
fn absent_type_gives_empty_lists() {
    let ctx = retrieve_variation_context(&keyboard_catalog(), "Toaster", "Nobody", &[]);
    assert!(ctx.type_variation_attrs.is_empty());
    assert!(ctx.brand_variation_attrs.is_empty());
}

#[test]
fn query_group_is_excluded() {
    let ctx = retrieve_variation_context(&keyboard_catalog(), "Keyboard", "Razer", &["kb-razer-huntsman-mini"]);
    assert!(ctx.brand_variation_attrs.is_empty());
    assert_eq!(ctx.type_variation_attrs, vec!["model", "switch"]);
}

fn p(id: &str, brand: &str, attrs: &[(&str, &str)]) -> Product {
    let mut b = Product::builder(id).brand(brand).product_type("Shirt");
    for (k, v) in attrs {
        b = b.attr(*k, *v);
    }
    b.build().unwrap()
}

#[test]
fn brand_lists_are_unioned_and_deduplicated() {
    let mut b = CatalogBuilder::new();
    b.add_product(p("a", "Acme", &[("color", "red")])).unwrap();
    b.add_product(p("b", "Acme", &[("color", "red"), ("size", "m")])).unwrap();
    b.add_group(VariationGroup::new("g1", vec!["a".into()], Some(vec!["color".into()])).unwrap()).unwrap();
    b.add_group(VariationGroup::new("g2", vec!["b".into()], Some(vec!["Color".into(), "size".into()])).unwrap())
        .unwrap();
    let ctx = retrieve_variation_context(&b.build().unwrap(), "shirt", "ACME", &[]);
    assert_eq!(ctx.brand_variation_attrs, vec!["color", "size"]);
}

#[test]
fn retrieval_falls_back_to_heuristic_without_gold() {
    let mut b = CatalogBuilder::new();
    b.add_product(p("a", "Acme", &[("color", "red"), ("fit", "slim")])).unwrap();
    b.add_product(p("b", "Acme", &[("color", "blue"), ("fit", "slim")])).unwrap();
    b.add_group(VariationGroup::new("g", vec!["a".into(), "b".into()], None).unwrap()).unwrap();
    let ctx = retrieve_variation_context(&b.build().unwrap(), "Shirt", "Acme", &[]);
    assert_eq!(ctx.brand_variation_attrs, vec!["color"]);
}

fn block(name: &str) -> String {
    std::fs::read_to_string(format!("{FIXTURES}/{name}")).unwrap()
}

#[test]
fn first_example_reply() {
    let pred = parse_attr_response(&block("attr_reply1.txt")).unwrap();
    assert!(pred.contradictions.is_empty());
    assert_eq!(
        pred.different,
        vec![
            "item_name",
            "item_id",
            "item_package_weight",
            "color",
            "included_components",
            "model_name",
            "size",
            "grip_size",
            "head_size"
        ]
    );
    assert_eq!(pred.same, vec!["brand", "product_type", "item_type"]);
    assert_eq!(pred.reason.len(), 1);
}

#[test]
fn second_example_reply() {
    let pred = parse_attr_response(&block("attr_reply2.txt")).unwrap();
    assert!(pred.contradictions.is_empty());
    assert_eq!(pred.different, vec!["color", "size", "item_name", "item_id", "part_number", "generic_keyword"]);
    assert_eq!(
        pred.same,
        vec![
            "age_range_description",
            "brand_value",
            "closure_type",
            "material_composition",
            "item_type_keyword",
            "product_type",
            "care_instructions"
        ]
    );
    let (labels, penalty) = reconcile_labels(&pred);
    assert_eq!(penalty, 0);
    assert_eq!(labels.len(), 13);
}

fn keyboard_store() -> CatalogStore {
    let mut b = CatalogBuilder::new();
    let catalog = keyboard_catalog();
    for prod in catalog.products() {
        b.add_product(prod.clone()).unwrap();
    }
    for g in catalog.groups() {
        b.add_group(g.clone()).unwrap();
    }
    for (id, sw) in [("r1", "Linear"), ("r2", "Clicky")] {
        b.add_product(
            Product::builder(id)
                .brand("Razer")
                .product_type("Keyboard")
                .attr("keyboard switch", sw)
                .build()
                .unwrap(),
        )
        .unwrap();
    }
    b.add_group(VariationGroup::new("razer-new", vec!["r1".into(), "r2".into()], None).unwrap()).unwrap();
    b.add_product(Product::builder("solo").build().unwrap()).unwrap();
    b.add_group(VariationGroup::new("solo-g", vec!["solo".into()], None).unwrap()).unwrap();
    b.build().unwrap()
}

fn client(url: &str) -> GenerativeClient {
    GenerativeClient::new(Client::new(Endpoint::new(url).unwrap(), Arc::new(HttpTransport), RetryPolicy::no_delay(2)))
}

#[test]
fn identify_with_stub_and_rag() {
    let reply = json!({"completion": "{\"Different\": [\"Keyboard switch\", \"brand\"], \"Same\": [\"brand\", \"product_type\"]}"});
    let stub = common::serve(move |_, _| (200, reply.to_string()));
    let store = keyboard_store();
    let group = store.group("razer-new").unwrap();
    let out = identify_attributes(&client(&stub.url), &store, group, true, &GenerationParams::ATTRIBUTES).unwrap();
    assert_eq!(out.method, AttrMethod::Rag);
    assert_eq!(out.penalty_count, 1);
    assert_eq!(out.labels["keyboard_switch"], AttrLabel::Variation);
    assert_eq!(out.labels["brand"], AttrLabel::Variation);
    assert_eq!(out.labels["product_type"], AttrLabel::Common);
    let bodies = stub.bodies.lock().unwrap();
    let prompt = bodies[0]["prompt"].as_str().unwrap();
    assert!(prompt.contains("Usual different attributes for Razer products are color/design, keyboard_layout, keyboard_switch."));
    assert_eq!(bodies[0]["params"], json!({"max_tokens": 500, "temperature": 0.0, "top_k": null, "top_p": 0.9}));
}

#[test]
fn batch_keeps_going_past_failures() {
    let stub = common::serve(|_, _| (200, json!({"completion": "I am not sure."}).to_string()));
    let store = keyboard_store();
    let groups = vec![store.group("razer-new").unwrap(), store.group("solo-g").unwrap()];
    let out = identify_batch(&client(&stub.url), &store, &groups, false, &GenerationParams::ATTRIBUTES, 2);
    assert_eq!(out.len(), 2);
    assert!(matches!(&out[0], Err(AttrError::Parse { raw, .. }) if raw == "I am not sure."));
    assert!(matches!(&out[1], Err(AttrError::GroupTooSmall(1))));
    assert_eq!(stub.hits.load(Ordering::SeqCst), 1);

    let records: Vec<AttrReportRecord> = groups
        .iter()
        .zip(&out)
        .map(|(g, r)| AttrReportRecord::from_result(g.id(), AttrMethod::ZeroShot, r))
        .collect();
    let mut buf = Vec::new();
    write_attr_report(&records, AttrMethod::ZeroShot, &Provenance::with_digest("x"), &mut buf).unwrap();
    let (meta, back) = read_attr_report(std::str::from_utf8(&buf).unwrap()).unwrap();
    assert_eq!(meta.failed, 2);
    assert_eq!(meta.provenance.config_digest.as_deref(), Some("x"));
    assert_eq!(back, records);
}
