//! Versioned prompt templates and the product block rendering they embed.

use crate::catalog::Product;

pub const MATCH_TEMPLATE: &str = include_str!("../templates/match_prompt.v1.txt");
pub const ATTR_TEMPLATE: &str = include_str!("../templates/attr_prompt.v1.txt");
pub const RAG_CONTEXT_TEMPLATE: &str = include_str!("../templates/attr_rag_context.v1.txt");

pub const TEMPLATE_VERSION: &str = "v1";

/// Substitutes `{name}` placeholders in one left-to-right pass.
///
/// Only names listed in `values` are replaced; any other brace text (the
/// JSON examples inside the attribute template, for instance) is copied
/// through unchanged. Substituted text is never rescanned.
pub fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + values.iter().map(|(_, v)| v.len()).sum::<usize>());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let replacement = after.find('}').and_then(|close| {
            let name = &after[..close];
            let valid = !name.is_empty()
                && name
                    .chars()
                    .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == ' ');
            if !valid {
                return None;
            }
            values.iter().find(|(n, _)| *n == name).map(|(_, v)| (*v, close))
        });
        match replacement {
            Some((value, close)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Tagged attribute listing for one product:
///
/// ```text
/// <product 1>
/// keyboard switch = Linear Optical,
/// brand = Razer,
/// </product 1>
/// ```
///
/// Underscores in keys render as spaces.
pub fn render_product_block(product: &Product, index: usize) -> String {
    let mut out = format!("<product {index}>\n");
    for attr in product.attributes() {
        out.push_str(&attr.key.replace('_', " "));
        out.push_str(" = ");
        out.push_str(&attr.value);
        out.push_str(",\n");
    }
    out.push_str(&format!("</product {index}>"));
    out
}

pub fn render_group_blocks(group: &[&Product]) -> String {
    group
        .iter()
        .enumerate()
        .map(|(i, p)| render_product_block(p, i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_leaves_unknown_braces() {
        let t = r#"{a} and {"Different": [x]} and {b} {missing}"#;
        assert_eq!(fill(t, &[("a", "1"), ("b", "{a}")]), r#"1 and {"Different": [x]} and {a} {missing}"#);
    }

    #[test]
    fn fill_handles_unclosed_brace() {
        assert_eq!(fill("x {a", &[("a", "1")]), "x {a");
        assert_eq!(fill("\"{\"", &[("a", "1")]), "\"{\"");
    }

    #[test]
    fn templates_have_no_trailing_newline() {
        for t in [MATCH_TEMPLATE, ATTR_TEMPLATE, RAG_CONTEXT_TEMPLATE] {
            assert!(!t.ends_with('\n'));
        }
    }

    #[test]
    fn block_rendering() {
        let p = Product::builder("x")
            .brand("Razer")
            .attr("keyboard_switch", "Linear Optical")
            .build()
            .unwrap();
        assert_eq!(
            render_product_block(&p, 2),
            "<product 2>\nkeyboard switch = Linear Optical,\nbrand = Razer,\n</product 2>"
        );
        let empty = Product::builder("e").build().unwrap();
        assert_eq!(render_product_block(&empty, 1), "<product 1>\n</product 1>");
    }
}
