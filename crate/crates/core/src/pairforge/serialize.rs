use serde::{Deserialize, Serialize};

use super::PairError;
use crate::catalog::Product;
use crate::text::Tokenizer;

pub const BOS: &str = "[BOS]";
pub const SEP: &str = "[SEP]";
pub const PAD: &str = "[PAD]";
/// Replaces content tokens that collide with a special symbol.
pub const UNK: &str = "[UNK]";

pub const DEFAULT_BUDGET: usize = 512;
pub const MIN_BUDGET: usize = 8;

/// Fixed-length classifier input for one product pair.
///
/// Layout: `[BOS] left [SEP] right [SEP] [PAD]...`, exactly `budget` tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SerializedPair {
    pub tokens: Vec<String>,
    pub left_token_count: usize,
    pub right_token_count: usize,
    pub truncated_left: bool,
    pub truncated_right: bool,
}

impl SerializedPair {
    pub fn budget(&self) -> usize {
        self.tokens.len()
    }

    pub fn left_tokens(&self) -> &[String] {
        &self.tokens[1..1 + self.left_token_count]
    }

    pub fn right_tokens(&self) -> &[String] {
        let start = 2 + self.left_token_count;
        &self.tokens[start..start + self.right_token_count]
    }

    pub fn padding(&self) -> usize {
        self.tokens.len() - 3 - self.left_token_count - self.right_token_count
    }
}

/// `"key: value"` fragments in stored attribute order.
pub fn render_fragments(product: &Product) -> Vec<String> {
    product
        .attributes()
        .iter()
        .map(|a| format!("{}: {}", a.key, a.value))
        .collect()
}

fn segment(product: &Product, tokenizer: &dyn Tokenizer, cap: usize) -> (Vec<String>, bool) {
    let mut tokens: Vec<String> = render_fragments(product)
        .iter()
        .flat_map(|f| tokenizer.tokenize(f))
        .map(|t| {
            if [BOS, SEP, PAD].contains(&t.as_str()) {
                UNK.to_string()
            } else {
                t
            }
        })
        .collect();
    let truncated = tokens.len() > cap;
    tokens.truncate(cap);
    (tokens, truncated)
}

/// Each side gets at most `floor((budget - 3) / 2)` content tokens; budget
/// left unused by a short side is padded, never lent to the other side.
pub fn serialize_pair(
    left: &Product,
    right: &Product,
    tokenizer: &dyn Tokenizer,
    budget: usize,
) -> Result<SerializedPair, PairError> {
    if budget < MIN_BUDGET {
        return Err(PairError::BudgetTooSmall {
            got: budget,
            min: MIN_BUDGET,
        });
    }
    let cap = (budget - 3) / 2;
    let (left_tokens, truncated_left) = segment(left, tokenizer, cap);
    let (right_tokens, truncated_right) = segment(right, tokenizer, cap);
    let mut tokens = Vec::with_capacity(budget);
    tokens.push(BOS.to_string());
    tokens.extend_from_slice(&left_tokens);
    tokens.push(SEP.to_string());
    tokens.extend_from_slice(&right_tokens);
    tokens.push(SEP.to_string());
    tokens.resize(budget, PAD.to_string());
    Ok(SerializedPair {
        tokens,
        left_token_count: left_tokens.len(),
        right_token_count: right_tokens.len(),
        truncated_left,
        truncated_right,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{BasicTokenizer, WhitespaceTokenizer};

    /// Product whose rendering is exactly `n` whitespace tokens
    /// ("k: v" renders to two).
    fn with_tokens(id: &str, n: usize) -> Product {
        assert!(n.is_multiple_of(2));
        let mut b = Product::builder(id);
        for i in 0..n / 2 {
            b = b.attr(format!("k{i}"), format!("v{i}"));
        }
        b.build().unwrap()
    }

    #[test]
    fn ten_and_ten_in_512() {
        let l = with_tokens("l", 10);
        let r = with_tokens("r", 10);
        let s = serialize_pair(&l, &r, &WhitespaceTokenizer, 512).unwrap();
        assert_eq!(s.tokens.len(), 512);
        assert_eq!(s.left_token_count, 10);
        assert_eq!(s.right_token_count, 10);
        let pads = s.tokens.iter().filter(|t| *t == PAD).count();
        assert_eq!(pads, 489);
        assert_eq!(s.padding(), 489);
        assert!(!s.truncated_left && !s.truncated_right);
        assert_eq!(s.tokens[0], BOS);
        assert_eq!(s.tokens[11], SEP);
        assert_eq!(s.tokens[22], SEP);
    }

    #[test]
    fn long_left_truncated_to_254() {
        let l = with_tokens("l", 300);
        let r = with_tokens("r", 10);
        let s = serialize_pair(&l, &r, &WhitespaceTokenizer, 512).unwrap();
        assert_eq!(s.left_token_count, 254);
        assert!(s.truncated_left);
        assert!(!s.truncated_right);
        assert_eq!(s.tokens.len(), 512);
        // the short side does not lend its unused budget
        assert_eq!(s.padding(), 512 - 3 - 254 - 10);
    }

    #[test]
    fn swapping_sides_swaps_segments() {
        let a = Product::builder("a").brand("Razer").attr("color", "Mercury").build().unwrap();
        let b = Product::builder("b").brand("HyperX").attr("switch", "Red").build().unwrap();
        let ab = serialize_pair(&a, &b, &BasicTokenizer, 64).unwrap();
        let ba = serialize_pair(&b, &a, &BasicTokenizer, 64).unwrap();
        assert_eq!(ab.left_tokens(), ba.right_tokens());
        assert_eq!(ab.right_tokens(), ba.left_tokens());
        assert_eq!(ab.padding(), ba.padding());
    }

    #[test]
    fn budget_floor() {
        let a = with_tokens("a", 2);
        assert!(matches!(
            serialize_pair(&a, &a, &BasicTokenizer, 7),
            Err(PairError::BudgetTooSmall { got: 7, .. })
        ));
        let s = serialize_pair(&a, &a, &BasicTokenizer, 8).unwrap();
        assert_eq!(s.tokens.len(), 8);
        assert!(s.left_token_count <= 2);
    }

    #[test]
    fn special_symbols_in_content_are_escaped() {
        let a = Product::builder("a").attr("note", "[SEP]").build().unwrap();
        let s = serialize_pair(&a, &a, &WhitespaceTokenizer, 16).unwrap();
        assert_eq!(s.tokens.iter().filter(|t| *t == SEP).count(), 2);
    }
}
