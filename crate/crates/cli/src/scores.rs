//! Score file: a metadata line, then one record per scored pair.

use std::io::Write;

use serde::{Deserialize, Serialize};
use varm::pairforge::{Bucket, MatchLabel, SplitName};
use varm::provenance::Provenance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMeta {
    pub backend: String,
    pub threshold: f64,
    pub pairs: usize,
    pub failed: usize,
    #[serde(flatten)]
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub split: SplitName,
    pub left_id: String,
    pub right_id: String,
    pub gold: MatchLabel,
    pub bucket: Bucket,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted: Option<MatchLabel>,
    /// Set when a generative reply omitted its similarity.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub default_used: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn write_scores<W: Write>(meta: &ScoreMeta, records: &[ScoreRecord], mut out: W) -> std::io::Result<()> {
    serde_json::to_writer(&mut out, meta)?;
    out.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_scores(text: &str) -> anyhow::Result<(ScoreMeta, Vec<ScoreRecord>)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or_else(|| anyhow::anyhow!("empty score file"))?;
    let meta = serde_json::from_str(first).map_err(|e| anyhow::anyhow!("line 1: {e}"))?;
    let records = lines
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| anyhow::anyhow!("line {}: {e}", i + 1)))
        .collect::<anyhow::Result<_>>()?;
    Ok((meta, records))
}
