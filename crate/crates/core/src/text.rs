//! Key/value normalization and the tokenizer contract.

/// Canonical form of an attribute key: trimmed, lowercased, with every run
/// of internal whitespace collapsed to a single `_`.
///
/// `"Keyboard  Switch"` becomes `"keyboard_switch"`; `"Color/Design"`
/// becomes `"color/design"`. Other punctuation is preserved.
pub fn normalize_key(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for (i, word) in raw.split_whitespace().enumerate() {
        if i > 0 {
            out.push('_');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

/// Canonical form of an attribute value for equality comparisons:
/// lowercased with whitespace runs collapsed to one space.
pub fn normalize_value(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for (i, word) in raw.split_whitespace().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

/// Lowercased alphanumeric runs of a value. Punctuation and whitespace only
/// separate tokens.
pub fn value_tokens(raw: &str) -> Vec<String> {
    raw.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.chars().flat_map(char::to_lowercase).collect())
        .collect()
}

/// Deterministic text-to-token-symbols mapping used for pair serialization.
pub trait Tokenizer: Send + Sync {
    /// Stable identifier written into exported files.
    fn id(&self) -> &str;

    fn tokenize(&self, text: &str) -> Vec<String>;
}

/// Splits on whitespace, emits each punctuation or symbol character as its
/// own token, and lowercases everything.
#[derive(Debug, Clone, Copy, Default)]
pub struct BasicTokenizer;

impl BasicTokenizer {
    pub const ID: &'static str = "basic-v1";
}

impl Tokenizer for BasicTokenizer {
    fn id(&self) -> &str {
        Self::ID
    }

    fn tokenize(&self, text: &str) -> Vec<String> {
        let mut tokens = Vec::new();
        let mut current = String::new();
        for c in text.chars() {
            if c.is_alphanumeric() {
                current.extend(c.to_lowercase());
                continue;
            }
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            if !c.is_whitespace() {
                tokens.push(c.to_lowercase().collect());
            }
        }
        if !current.is_empty() {
            tokens.push(current);
        }
        tokens
    }
}

/// Whitespace-only splitting without case folding.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl WhitespaceTokenizer {
    pub const ID: &'static str = "whitespace-v1";
}

impl Tokenizer for WhitespaceTokenizer {
    fn id(&self) -> &str {
        Self::ID
    }

    fn tokenize(&self, text: &str) -> Vec<String> {
        text.split_whitespace().map(str::to_owned).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_normalization() {
        assert_eq!(normalize_key("Keyboard switch"), "keyboard_switch");
        assert_eq!(normalize_key("  Item   Package\tQuantity "), "item_package_quantity");
        assert_eq!(normalize_key("Color/Design"), "color/design");
        assert_eq!(normalize_key("product_type"), "product_type");
        assert_eq!(normalize_key(""), "");
    }

    #[test]
    fn flavour_is_not_flavor() {
        assert_ne!(normalize_key("flavour"), normalize_key("Flavor"));
    }

    #[test]
    fn value_normalization_folds_case_and_space() {
        assert_eq!(normalize_value(" Linear  Optical "), "linear optical");
    }

    #[test]
    fn basic_tokenizer_splits_punctuation() {
        let toks = BasicTokenizer.tokenize("brand: Razer, US-Mercury");
        assert_eq!(toks, ["brand", ":", "razer", ",", "us", "-", "mercury"]);
    }

    #[test]
    fn value_tokens_drop_punctuation() {
        assert_eq!(value_tokens("Linear Optical-Switch!"), ["linear", "optical", "switch"]);
        assert!(value_tokens(" - ").is_empty());
    }
}
