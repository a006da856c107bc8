use serde::{Deserialize, Serialize};
use serde_json::json;

use super::transport::Client;
use super::{MatchError, MatchVerdict};
use crate::catalog::Product;
use crate::pairforge::MatchLabel;
use crate::prompt::{fill, render_product_block, MATCH_TEMPLATE};
use crate::scalar::Scalar;

/// Sampling parameters sent with every generative request. Absent optional
/// values are sent as JSON `null`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub max_tokens: u32,
    pub temperature: f64,
    pub top_k: Option<u32>,
    pub top_p: Option<f64>,
}

impl GenerationParams {
    pub const MATCHING: GenerationParams = GenerationParams {
        max_tokens: 30,
        temperature: 0.0,
        top_k: Some(100),
        top_p: None,
    };

    pub const ATTRIBUTES: GenerationParams = GenerationParams {
        max_tokens: 500,
        temperature: 0.0,
        top_k: None,
        top_p: Some(0.9),
    };
}

/// Text completion service speaking the `{"prompt","params"}` →
/// `{"completion"}` protocol.
#[derive(Debug, Clone)]
pub struct GenerativeClient {
    client: Client,
}

#[derive(Deserialize)]
struct CompletionReply {
    completion: String,
}

impl GenerativeClient {
    pub fn new(client: Client) -> Self {
        Self { client }
    }

    pub fn client(&self) -> &Client {
        &self.client
    }

    pub fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String, MatchError> {
        let body = json!({ "prompt": prompt, "params": params });
        self.client.call(&body, |raw| {
            serde_json::from_str::<CompletionReply>(raw)
                .map(|r| r.completion)
                .map_err(|e| MatchError::Parse {
                    message: format!("bad completion reply: {e}"),
                    raw: raw.to_string(),
                })
        })
    }
}

pub fn build_match_prompt(left: &Product, right: &Product) -> String {
    fill(
        MATCH_TEMPLATE,
        &[
            ("product 1", &render_product_block(left, 1)),
            ("product 2", &render_product_block(right, 2)),
        ],
    )
}

const DECORATION: [char; 4] = ['"', '\'', '*', '`'];

/// Reads a yes/no verdict and an optional similarity from a completion.
///
/// The verdict is the first alphabetic word after any leading whitespace
/// or markdown/quote characters. The similarity is the first decimal
/// literal after it that lies in `[0, 1]` and is not negated.
pub fn parse_match_response<F: Scalar>(text: &str) -> Result<MatchVerdict<F>, MatchError> {
    let parse_error = |message: &str| MatchError::Parse {
        message: message.to_string(),
        raw: text.to_string(),
    };
    let start = text
        .char_indices()
        .find(|(_, c)| !(c.is_whitespace() || DECORATION.contains(c)))
        .map(|(i, _)| i)
        .ok_or_else(|| parse_error("empty response"))?;
    let body = &text[start..];
    let word_end = body
        .char_indices()
        .find(|(_, c)| !c.is_alphabetic())
        .map_or(body.len(), |(i, _)| i);
    let label = match body[..word_end].to_lowercase().as_str() {
        "yes" => MatchLabel::VariantMatch,
        "no" => MatchLabel::Mismatch,
        _ => return Err(parse_error("response does not start with yes or no")),
    };
    let similarity = first_unit_literal(&body[word_end..]);
    let default_used = similarity.is_none();
    let similarity = similarity.unwrap_or(if label.is_match() { 1.0 } else { 0.0 });
    Ok(MatchVerdict {
        label,
        similarity: F::from_f64_lossy(similarity),
        default_used,
    })
}

/// First `digits[.digits]` or `.digits` literal in `s` whose value is in
/// `[0, 1]`, skipping literals directly preceded by `-`.
fn first_unit_literal(s: &str) -> Option<f64> {
    let bytes = s.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let starts_number =
            bytes[i].is_ascii_digit() || (bytes[i] == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit));
        if !starts_number {
            i += 1;
            continue;
        }
        let begin = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
            i += 1;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
        }
        let negated = begin > 0 && bytes[begin - 1] == b'-';
        // all bytes in the literal are ASCII, so the slice is on char boundaries
        if let Ok(v) = s[begin..i].parse::<f64>() {
            if !negated && (0.0..=1.0).contains(&v) {
                return Some(v);
            }
        }
    }
    None
}
