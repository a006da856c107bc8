use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::{AddOutcome, CatalogBuilder, CatalogError, CatalogRecord, CatalogStore};

/// Supported catalog file encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CatalogFormat {
    /// One JSON object per line, tagged by a `"record"` field.
    #[default]
    JsonLines,
}

/// A record that could not be used. Ingestion continues past it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordError {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for RecordError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub lines: usize,
    pub products: usize,
    pub groups: usize,
    pub duplicates: usize,
    pub meta_records: usize,
    pub errors: Vec<RecordError>,
}

impl IngestReport {
    pub fn summary(&self) -> String {
        format!(
            "{} products, {} groups, {} duplicate records skipped, {} malformed records",
            self.products,
            self.groups,
            self.duplicates,
            self.errors.len()
        )
    }
}

#[derive(Debug)]
pub struct Ingested {
    pub store: CatalogStore,
    pub report: IngestReport,
}

pub fn ingest_catalog(path: impl AsRef<Path>, format: CatalogFormat) -> Result<Ingested, CatalogError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CatalogError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    match format {
        CatalogFormat::JsonLines => ingest_reader(BufReader::new(file)),
    }
}

/// Reads catalog records line by line.
///
/// Malformed lines become [`RecordError`]s and are skipped. Conflicting
/// duplicates and broken cross-record references abort the ingest.
pub fn ingest_reader<R: BufRead>(reader: R) -> Result<Ingested, CatalogError> {
    let mut builder = CatalogBuilder::new();
    let mut report = IngestReport::default();
    for (idx, raw) in reader.split(b'\n').enumerate() {
        let line_no = idx + 1;
        let raw = raw?;
        report.lines = line_no;
        let line = match String::from_utf8(raw) {
            Ok(s) => s,
            Err(_) => {
                report.errors.push(RecordError {
                    line: line_no,
                    message: "invalid UTF-8".into(),
                });
                continue;
            }
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let record: CatalogRecord = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                report.errors.push(RecordError {
                    line: line_no,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let outcome = match record {
            CatalogRecord::Meta(_) => {
                report.meta_records += 1;
                continue;
            }
            CatalogRecord::Product(rec) => match rec.into_product() {
                Ok(p) => builder.add_product(p)?,
                Err(e) => {
                    report.errors.push(RecordError {
                        line: line_no,
                        message: e.to_string(),
                    });
                    continue;
                }
            },
            CatalogRecord::Group(rec) => match rec.into_group() {
                Ok(g) => builder.add_group(g)?,
                Err(e) => {
                    report.errors.push(RecordError {
                        line: line_no,
                        message: e.to_string(),
                    });
                    continue;
                }
            },
        };
        if outcome == AddOutcome::Duplicate {
            report.duplicates += 1;
        }
    }
    let store = builder.build()?;
    report.products = store.product_count();
    report.groups = store.group_count();
    Ok(Ingested { store, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ingest(text: &str) -> Result<Ingested, CatalogError> {
        ingest_reader(text.as_bytes())
    }

    #[test]
    fn minimal_file() {
        let text = r#"{"record":"product","product_id":"a","brand":"Acme","product_type":"Mug","attributes":[{"key":"Color","value":"red"}]}
{"record":"product","product_id":"b","brand":"Acme","product_type":"Mug","attributes":[{"key":"Color","value":"blue"}]}
{"record":"group","group_id":"g1","member_ids":["a","b"],"gold_variation_keys":["Color"]}
"#;
        let ing = ingest(text).unwrap();
        assert_eq!(ing.store.product_count(), 2);
        assert_eq!(ing.store.group_count(), 1);
        assert!(ing.report.errors.is_empty());
        assert_eq!(ing.store.with_brand_type(Some("Acme"), Some("Mug")).unwrap().len(), 2);
        assert_eq!(ing.store.group_of("a"), Some("g1"));
        assert_eq!(
            ing.store.group("g1").unwrap().gold_variation_keys(),
            Some(&["color".to_string()][..])
        );
    }

    #[test]
    fn empty_file() {
        let ing = ingest("").unwrap();
        assert_eq!(ing.store.product_count(), 0);
        assert!(ing.report.errors.is_empty());
    }

    #[test]
    fn malformed_records_reported_with_line_numbers() {
        let text = r#"{"record":"product","product_id":"a","attributes":[]}
not json
{"record":"product","product_id":"","attributes":[]}
{"record":"widget"}
{"record":"product","product_id":"b","attributes":[]}
"#;
        let ing = ingest(text).unwrap();
        assert_eq!(ing.store.product_count(), 2);
        let lines: Vec<usize> = ing.report.errors.iter().map(|e| e.line).collect();
        assert_eq!(lines, [2, 3, 4]);
    }

    #[test]
    fn identical_duplicate_is_idempotent() {
        let rec = r#"{"record":"product","product_id":"a","brand":"X","attributes":[]}"#;
        let ing = ingest(&format!("{rec}\n{rec}\n")).unwrap();
        assert_eq!(ing.store.product_count(), 1);
        assert_eq!(ing.report.duplicates, 1);
    }

    #[test]
    fn conflicting_duplicate_is_fatal() {
        let text = r#"{"record":"product","product_id":"a","brand":"X","attributes":[]}
{"record":"product","product_id":"a","brand":"Y","attributes":[]}
"#;
        assert!(matches!(ingest(text), Err(CatalogError::ConflictingProduct(id)) if id == "a"));
    }

    #[test]
    fn unknown_member_is_fatal() {
        let text = r#"{"record":"group","group_id":"g","member_ids":["ghost"]}"#;
        assert!(matches!(ingest(text), Err(CatalogError::UnknownMember { .. })));
    }

    #[test]
    fn meta_records_are_skipped() {
        let text = r#"{"record":"meta","tool":"varm"}
{"record":"product","product_id":"a","attributes":[]}
"#;
        let ing = ingest(text).unwrap();
        assert_eq!(ing.report.meta_records, 1);
        assert_eq!(ing.store.product_count(), 1);
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = ingest_catalog("/nonexistent/catalog.jsonl", CatalogFormat::JsonLines).unwrap_err();
        assert!(matches!(err, CatalogError::Io { .. }));
    }
}
