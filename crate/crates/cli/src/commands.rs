use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use varm::attrkit::{
    heuristic_outcome, identify_batch, read_attr_report, variation_keys, write_attr_report, AttrError, AttrLabel,
    AttrLabels, AttrMethod, AttrReportRecord,
};
use varm::catalog::{ingest_catalog, synth_catalog, CatalogFormat, CatalogStore};
use varm::evalkit::{
    auroc, basic_metrics, confusion_from_labels, learning_curve, near_misses, predicted_label, variation_recall,
    write_report_csv, write_report_json, AttrTally, CurveConfig, EvalError, ExperimentRow, HandleBackend,
    RecallSummary, ReportFile,
};
use varm::matchkit::{
    score_labeled, Client, ClassifierHandle, GenerativeClient, HttpTransport, OracleTable, RemoteScorer,
};
use varm::pairforge::{
    bucket_counts, export_pairs, extract_positive_pairs, read_pairs, sample_with, split_dataset, LabeledPair,
    SplitName,
};
use varm::provenance::Provenance;

use crate::config::{BackendKind, MethodKind, Needs, RunConfig, SplitSel};
use crate::failure::{Categorize, Category, Failure};
use crate::scores::{read_scores, write_scores, ScoreMeta, ScoreRecord};
use crate::{Cli, Command};

type Result<T> = std::result::Result<T, Failure>;

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path).cat_ctx(Category::Config, format!("reading {}", path.display()))?;
    RunConfig::from_toml(&text).map_err(|e| Failure::msg(Category::Config, format!("{}: {e}", path.display())))
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Folds command flags into the config and reports which endpoints the
/// command will need.
fn apply_overrides(cfg: &mut RunConfig, command: &Command, out: Option<PathBuf>) -> Needs {
    match command {
        Command::Ingest { .. } => Needs::default(),
        Command::Synth => {
            set(&mut cfg.paths.catalog, out);
            Needs::default()
        }
        Command::Pairs {
            catalog,
            sampler,
            ratio,
            budget,
        } => {
            set(&mut cfg.paths.catalog, catalog.clone());
            set(&mut cfg.paths.pairs, out);
            set(&mut cfg.pairs.sampler, *sampler);
            set(&mut cfg.pairs.ratio, ratio.clone());
            set(&mut cfg.pairs.budget, *budget);
            Needs::default()
        }
        Command::Match {
            catalog,
            pairs,
            backend,
            split,
            threshold,
            remote_url,
            generative_url,
        } => {
            set(&mut cfg.paths.catalog, catalog.clone());
            set(&mut cfg.paths.pairs, pairs.clone());
            set(&mut cfg.paths.scores, out);
            set(&mut cfg.matching.backend, *backend);
            set(&mut cfg.matching.split, *split);
            set(&mut cfg.matching.threshold, *threshold);
            if remote_url.is_some() {
                cfg.remote.url = remote_url.clone();
            }
            if generative_url.is_some() {
                cfg.generative.url = generative_url.clone();
            }
            Needs::for_backend(cfg.matching.backend)
        }
        Command::Attrs {
            catalog,
            method,
            generative_url,
        } => {
            set(&mut cfg.paths.catalog, catalog.clone());
            set(&mut cfg.paths.attrs, out);
            set(&mut cfg.attrs.method, *method);
            if generative_url.is_some() {
                cfg.generative.url = generative_url.clone();
            }
            Needs {
                remote: false,
                generative: cfg.attrs.method != MethodKind::Heuristic,
            }
        }
        Command::Eval { scores, attrs, catalog } => {
            set(&mut cfg.paths.scores, scores.clone());
            set(&mut cfg.paths.attrs, attrs.clone());
            set(&mut cfg.paths.catalog, catalog.clone());
            set(&mut cfg.paths.report, out);
            Needs::default()
        }
        Command::Curve {
            catalog,
            backend,
            sampler,
            sizes,
            remote_url,
        } => {
            set(&mut cfg.paths.catalog, catalog.clone());
            set(&mut cfg.paths.curve, out);
            set(&mut cfg.curve.backend, *backend);
            set(&mut cfg.pairs.sampler, *sampler);
            set(&mut cfg.curve.sizes, sizes.clone());
            if remote_url.is_some() {
                cfg.remote.url = remote_url.clone();
            }
            Needs::for_backend(cfg.curve.backend)
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(cli.config.as_deref())?;
    cfg.apply_env(|k| std::env::var(k).ok().filter(|v| !v.is_empty()));
    set(&mut cfg.seed, cli.seed);
    set(&mut cfg.workers, cli.workers);
    let ingest_out = cli.out.clone();
    let needs = apply_overrides(&mut cfg, &cli.command, cli.out);
    let errors = cfg.validate(needs);
    if !errors.is_empty() {
        return Err(Failure::msg(
            Category::Config,
            format!("invalid configuration:\n  - {}", errors.join("\n  - ")),
        ));
    }
    let prov = Provenance::for_config(&cfg.digest_view());
    match cli.command {
        Command::Ingest { input } => cmd_ingest(&input, ingest_out.as_deref(), &prov),
        Command::Synth => cmd_synth(&cfg, &prov),
        Command::Pairs { .. } => cmd_pairs(&cfg, &prov),
        Command::Match { .. } => cmd_match(&cfg, &prov),
        Command::Attrs { .. } => cmd_attrs(&cfg, &prov),
        Command::Eval { scores, attrs, .. } => cmd_eval(&cfg, &prov, scores.is_some(), attrs.is_some()),
        Command::Curve { .. } => cmd_curve(&cfg, &prov),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .cat_ctx(Category::Output, format!("creating {}", path.display()))
}

fn write_catalog(store: &CatalogStore, path: &Path, prov: &Provenance) -> Result<()> {
    let meta = match serde_json::to_value(prov).expect("provenance serializes") {
        serde_json::Value::Object(m) => m,
        _ => unreachable!("provenance is a struct"),
    };
    store
        .write_jsonl(create(path)?, Some(&meta))
        .cat_ctx(Category::Output, format!("writing {}", path.display()))
}

fn load_catalog(path: &Path) -> Result<CatalogStore> {
    let ingested = ingest_catalog(path, CatalogFormat::JsonLines).cat(Category::Input)?;
    if !ingested.report.errors.is_empty() {
        eprintln!(
            "warning: {}: skipped {} malformed records",
            path.display(),
            ingested.report.errors.len()
        );
    }
    Ok(ingested.store)
}

fn cmd_ingest(input: &Path, out: Option<&Path>, prov: &Provenance) -> Result<()> {
    let ingested = ingest_catalog(input, CatalogFormat::JsonLines).cat(Category::Input)?;
    println!("{}: {}", input.display(), ingested.report.summary());
    for e in ingested.report.errors.iter().take(20) {
        println!("  line {}: {}", e.line, e.message);
    }
    if ingested.report.errors.len() > 20 {
        println!("  ... {} more", ingested.report.errors.len() - 20);
    }
    if let Some(out) = out {
        write_catalog(&ingested.store, out, prov)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn cmd_synth(cfg: &RunConfig, prov: &Provenance) -> Result<()> {
    let store = synth_catalog(&cfg.synth, cfg.seed).cat(Category::Config)?;
    write_catalog(&store, &cfg.paths.catalog, prov)?;
    println!(
        "wrote {} products in {} groups to {}",
        store.product_count(),
        store.group_count(),
        cfg.paths.catalog.display()
    );
    Ok(())
}

fn cmd_pairs(cfg: &RunConfig, prov: &Provenance) -> Result<()> {
    let store = load_catalog(&cfg.paths.catalog)?;
    let positives = extract_positive_pairs(&store);
    let count = (positives.len() as f64 * cfg.pairs.negatives_per_positive).round() as usize;
    let negatives = sample_with(&store, &positives, &cfg.pairs.sampler(), count, cfg.seed).cat(Category::Input)?;
    let all: Vec<LabeledPair> = positives.into_iter().chain(negatives).collect();
    let ratio = cfg.pairs.ratio().expect("validated");
    let split = split_dataset(&store, &all, ratio, cfg.seed).cat(Category::Input)?;
    let tokenizer = cfg.pairs.tokenizer().expect("validated");
    let n = export_pairs(&split, &store, tokenizer.as_ref(), cfg.pairs.budget, prov, &cfg.paths.pairs)
        .cat(Category::Output)?;
    for (name, pairs) in [("train", &split.train), ("eval", &split.eval)] {
        let tallies: Vec<String> = bucket_counts(pairs).iter().map(|(b, c)| format!("{b}={c}")).collect();
        println!("{name}: {} pairs ({})", pairs.len(), tallies.join(", "));
    }
    println!(
        "train fraction {:.4}; dropped {} cross-split and {} balancing pairs",
        split.train_fraction(),
        split.report.cross_split_dropped,
        split.report.balance_dropped
    );
    println!("wrote {n} pairs to {}", cfg.paths.pairs.display());
    Ok(())
}

fn build_handle(cfg: &RunConfig, kind: BackendKind, store: &CatalogStore) -> ClassifierHandle {
    match kind {
        BackendKind::Baseline => ClassifierHandle::Baseline,
        BackendKind::Oracle => ClassifierHandle::Oracle(OracleTable::from_store(store)),
        BackendKind::Remote => {
            let endpoint = cfg.remote.endpoint().expect("validated").expect("required");
            let tokenizer = Arc::from(cfg.pairs.tokenizer().expect("validated"));
            ClassifierHandle::Remote(
                RemoteScorer::new(Client::new(endpoint, Arc::new(HttpTransport), cfg.retry))
                    .with_tokenizer(tokenizer, cfg.pairs.budget)
                    .with_batch_size(cfg.matching.batch_size),
            )
        }
        BackendKind::Generative => ClassifierHandle::Generative {
            client: generative_client(cfg),
            params: cfg.generative.match_params,
        },
    }
}

fn generative_client(cfg: &RunConfig) -> GenerativeClient {
    let endpoint = cfg.generative.endpoint_config().endpoint().expect("validated").expect("required");
    GenerativeClient::new(Client::new(endpoint, Arc::new(HttpTransport), cfg.retry))
}

fn backend_name(kind: BackendKind) -> &'static str {
    match kind {
        BackendKind::Baseline => "baseline",
        BackendKind::Oracle => "oracle",
        BackendKind::Remote => "remote",
        BackendKind::Generative => "generative",
    }
}

fn cmd_match(cfg: &RunConfig, prov: &Provenance) -> Result<()> {
    let store = load_catalog(&cfg.paths.catalog)?;
    let file = read_pairs(&cfg.paths.pairs).cat(Category::Input)?;
    let selected: Vec<_> = file
        .records
        .iter()
        .filter(|r| match cfg.matching.split {
            SplitSel::All => true,
            SplitSel::Train => r.split == SplitName::Train,
            SplitSel::Eval => r.split == SplitName::Eval,
        })
        .collect();
    let pairs: Vec<LabeledPair> = selected.iter().map(|r| r.pair()).collect::<std::result::Result<_, _>>().cat(Category::Input)?;
    let handle = build_handle(cfg, cfg.matching.backend, &store);
    let results = score_labeled::<f64>(&handle, &store, &pairs, cfg.workers).cat(Category::Input)?;
    let records: Vec<ScoreRecord> = selected
        .iter()
        .zip(&results)
        .map(|(r, res)| ScoreRecord {
            split: r.split,
            left_id: r.left_id.clone(),
            right_id: r.right_id.clone(),
            gold: r.label,
            bucket: r.bucket,
            probability: res.as_ref().ok().map(|s| s.probability()),
            predicted: res.as_ref().ok().map(|s| predicted_label(s, cfg.matching.threshold)),
            default_used: res.as_ref().ok().and_then(|s| s.verdict()).is_some_and(|v| v.default_used),
            error: res.as_ref().err().map(|e| e.to_string()),
        })
        .collect();
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    let meta = ScoreMeta {
        backend: backend_name(cfg.matching.backend).to_string(),
        threshold: cfg.matching.threshold,
        pairs: records.len(),
        failed,
        provenance: prov.clone(),
    };
    write_scores(&meta, &records, create(&cfg.paths.scores)?)
        .cat_ctx(Category::Output, format!("writing {}", cfg.paths.scores.display()))?;
    println!(
        "scored {} pairs with {} ({failed} failed); wrote {}",
        records.len(),
        meta.backend,
        cfg.paths.scores.display()
    );
    if failed > 0 && failed == records.len() {
        let first = records.iter().find_map(|r| r.error.clone()).unwrap_or_default();
        return Err(Failure::msg(Category::Backend, format!("every pair failed; first error: {first}")));
    }
    Ok(())
}

fn cmd_attrs(cfg: &RunConfig, prov: &Provenance) -> Result<()> {
    let store = load_catalog(&cfg.paths.catalog)?;
    let groups: Vec<_> = store.groups().collect();
    let method: AttrMethod = cfg.attrs.method.into();
    let results: Vec<std::result::Result<_, AttrError>> = match cfg.attrs.method {
        MethodKind::Heuristic => groups.iter().map(|g| heuristic_outcome(&store, g)).collect(),
        MethodKind::ZeroShot | MethodKind::Rag => identify_batch(
            &generative_client(cfg),
            &store,
            &groups,
            cfg.attrs.method == MethodKind::Rag,
            &cfg.generative.attr_params,
            cfg.workers,
        ),
    };
    let records: Vec<AttrReportRecord> = groups
        .iter()
        .zip(&results)
        .map(|(g, r)| AttrReportRecord::from_result(g.id(), method, r))
        .collect();
    write_attr_report(&records, method, prov, create(&cfg.paths.attrs)?)
        .cat_ctx(Category::Output, format!("writing {}", cfg.paths.attrs.display()))?;
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    println!(
        "labeled {} groups with {} ({failed} failed); wrote {}",
        records.len(),
        method.as_str(),
        cfg.paths.attrs.display()
    );
    Ok(())
}

fn report_csv_path(report: &Path) -> PathBuf {
    report.with_extension("csv")
}

fn cmd_eval(cfg: &RunConfig, prov: &Provenance, with_scores: bool, with_attrs: bool) -> Result<()> {
    if !with_scores && !with_attrs {
        return Err(Failure::msg(Category::Config, "eval needs --scores and/or --attrs"));
    }
    let digest = prov.config_digest.clone().unwrap_or_default();
    let mut rows = Vec::new();
    let mut details = serde_json::Map::new();
    if with_scores {
        let path = &cfg.paths.scores;
        let text = std::fs::read_to_string(path).cat_ctx(Category::Input, format!("reading {}", path.display()))?;
        let (meta, records) = read_scores(&text).cat_ctx(Category::Input, path.display())?;
        let ok: Vec<&ScoreRecord> = records.iter().filter(|r| r.error.is_none()).collect();
        let gold: Vec<_> = ok.iter().map(|r| r.gold).collect();
        let predicted: Vec<_> = ok.iter().map(|r| r.predicted.expect("scored record")).collect();
        let probs: Vec<f64> = ok.iter().map(|r| r.probability.expect("scored record")).collect();
        let mut m = basic_metrics::<f64>(&confusion_from_labels(&predicted, &gold).cat(Category::Input)?)
            .cat_ctx(Category::Input, path.display())?;
        m.auroc = match auroc(&probs, &gold) {
            Ok(a) => Some(a),
            Err(EvalError::MissingClass { .. }) => None,
            Err(e) => return Err(Failure::new(Category::Input, e)),
        };
        m.config_digest = Some(digest.clone());
        let mut row = ExperimentRow::from_metrics("match", &meta.backend, cfg.seed, &digest, &m);
        row.skipped = (records.len() - ok.len()) as u64;
        println!(
            "match[{}]: n={} auroc={} accuracy={:.4} precision={:.4} recall={:.4} f1={:.4}",
            meta.backend,
            m.n,
            m.auroc.map_or("-".into(), |a| format!("{a:.4}")),
            m.accuracy,
            m.precision,
            m.recall,
            m.f1
        );
        rows.push(row);
        details.insert("match".into(), serde_json::to_value(&m).expect("serializes"));
        details.insert("scores_config_digest".into(), meta.provenance.config_digest.into());
    }
    if with_attrs {
        let store = load_catalog(&cfg.paths.catalog)?;
        let path = &cfg.paths.attrs;
        let text = std::fs::read_to_string(path).cat_ctx(Category::Input, format!("reading {}", path.display()))?;
        let (meta, records) = read_attr_report(&text).cat_ctx(Category::Input, path.display())?;
        let filter: Vec<&str> = cfg.attrs.recall_keys.iter().map(String::as_str).collect();
        let mut recall_all = Vec::new();
        let mut recall_sub = Vec::new();
        let mut tally = AttrTally::default();
        let mut misses = BTreeMap::new();
        let mut without_gold = 0u64;
        for r in records.iter().filter(|r| r.error.is_none()) {
            let Some(group) = store.group(&r.group_id) else {
                return Err(Failure::msg(Category::Input, format!("report names unknown group {:?}", r.group_id)));
            };
            let Some(gold) = group.gold_variation_keys() else {
                without_gold += 1;
                continue;
            };
            let predicted = variation_keys(&r.labels);
            let pred_iter = || predicted.iter().map(String::as_str);
            let gold_iter = || gold.iter().map(String::as_str);
            recall_all.push(variation_recall::<f64>(pred_iter(), gold_iter(), None));
            recall_sub.push(variation_recall::<f64>(pred_iter(), gold_iter(), Some(&filter)));
            let gold_labels: AttrLabels = store
                .members(group)
                .iter()
                .flat_map(|p| p.keys())
                .map(|k| {
                    let label = if gold.iter().any(|g| g == k) {
                        AttrLabel::Variation
                    } else {
                        AttrLabel::Common
                    };
                    (k.to_string(), label)
                })
                .collect();
            tally.add(&r.labels, &gold_labels);
            let m = near_misses(pred_iter(), gold_iter());
            if !m.is_empty() {
                misses.insert(r.group_id.clone(), m);
            }
        }
        let failed = records.iter().filter(|r| r.error.is_some()).count() as u64;
        let method = meta.method.as_str();
        for (name, recalls) in [
            ("attr_recall_all".to_string(), recall_all),
            (format!("attr_recall_{}", filter.join("_")), recall_sub),
        ] {
            let s = RecallSummary::<f64>::from_recalls(recalls);
            let mut row = ExperimentRow::empty(&name, method, cfg.seed, &digest);
            row.n = s.evaluated as u64;
            row.recall_mean = s.mean;
            row.skipped = s.skipped as u64 + failed + without_gold;
            println!(
                "{name}[{method}]: mean={} over {} groups ({} skipped)",
                s.mean.map_or("-".into(), |m| format!("{m:.4}")),
                s.evaluated,
                row.skipped
            );
            rows.push(row);
        }
        let mut row = ExperimentRow::empty("attr_accuracy", method, cfg.seed, &digest);
        row.n = tally.overall().total;
        row.skipped = failed + without_gold;
        if let Ok(acc) = tally.accuracy::<f64>() {
            row.accuracy = Some(acc.overall);
            println!(
                "attr_accuracy[{method}]: overall={:.4} common={} variation={}",
                acc.overall,
                acc.common.map_or("-".into(), |a| format!("{a:.4}")),
                acc.variation.map_or("-".into(), |a| format!("{a:.4}"))
            );
            details.insert("attr_accuracy".into(), serde_json::to_value(&acc).expect("serializes"));
        }
        rows.push(row);
        details.insert("near_misses".into(), serde_json::to_value(&misses).expect("serializes"));
        details.insert("attrs_config_digest".into(), meta.provenance.config_digest.into());
    }
    let report = ReportFile {
        provenance: prov.clone(),
        rows,
        details: Some(details.into()),
    };
    let json_path = &cfg.paths.report;
    write_report_json(&report, create(json_path)?).cat_ctx(Category::Output, json_path.display())?;
    let csv_path = report_csv_path(json_path);
    write_report_csv(&report.rows, create(&csv_path)?).cat_ctx(Category::Output, csv_path.display())?;
    println!("wrote {} and {}", json_path.display(), csv_path.display());
    Ok(())
}

fn cmd_curve(cfg: &RunConfig, prov: &Provenance) -> Result<()> {
    let store = load_catalog(&cfg.paths.catalog)?;
    let config = CurveConfig {
        sampler: cfg.pairs.sampler(),
        sizes: cfg.curve.sizes.clone(),
        ratio: cfg.pairs.ratio().expect("validated"),
        seed: cfg.seed,
        threshold: cfg.matching.threshold,
    };
    let mut backend = HandleBackend {
        handle: build_handle(cfg, cfg.curve.backend, &store),
        workers: cfg.workers,
    };
    let points = learning_curve::<f64>(&store, &config, &mut backend).map_err(|e| {
        let category = match e {
            EvalError::Match(_) => Category::Backend,
            _ => Category::Input,
        };
        Failure::new(category, e)
    })?;
    let digest = prov.config_digest.clone().unwrap_or_default();
    let rows: Vec<_> = points
        .iter()
        .map(|p| ExperimentRow::from_curve_point("curve", cfg.seed, &digest, p))
        .collect();
    for p in &points {
        println!(
            "train_size={} auroc={} f1={:.4}",
            p.train_size,
            p.metrics.auroc.map_or("-".into(), |a| format!("{a:.4}")),
            p.metrics.f1
        );
    }
    write_report_csv(&rows, create(&cfg.paths.curve)?).cat_ctx(Category::Output, cfg.paths.curve.display())?;
    println!("wrote {}", cfg.paths.curve.display());
    Ok(())
}
