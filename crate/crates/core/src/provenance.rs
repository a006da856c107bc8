//! Self-description stamped into every output file.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const TOOL_NAME: &str = "varm";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Hex SHA-256 of the canonical JSON form of `config` (object keys sorted).
pub fn config_digest<T: Serialize>(config: &T) -> String {
    let value = serde_json::to_value(config).expect("config serializes");
    let bytes = serde_json::to_vec(&value).expect("value serializes");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_digest: Option<String>,
    /// The resolved configuration the digest was computed from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

impl Default for Provenance {
    fn default() -> Self {
        Self {
            tool: TOOL_NAME.to_string(),
            version: TOOL_VERSION.to_string(),
            config_digest: None,
            config: None,
        }
    }
}

impl Provenance {
    pub fn with_digest(digest: impl Into<String>) -> Self {
        Self {
            config_digest: Some(digest.into()),
            ..Self::default()
        }
    }

    /// Stamps both the resolved config and its digest.
    pub fn for_config<T: Serialize>(config: &T) -> Self {
        Self {
            config_digest: Some(config_digest(config)),
            config: Some(serde_json::to_value(config).expect("config serializes")),
            ..Self::default()
        }
    }
}
