use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Default caption instruction sent with every candidate image.
pub const DEFAULT_PROMPT: &str = "Please describe this aerial/drone-view image in detail. Focus on: \
(1) the main building or structure in the center of the image and its architectural features; \
(2) the surrounding buildings and their relative positions (left, right, top, bottom); \
(3) significant landmarks such as parking lots, sports fields, roads, or vegetation; \
(4) the overall spatial layout and arrangement of objects. Please be specific and precise.";

/// Lowercase hex SHA-256 of `text`.
pub fn digest_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    text: String,
    hash: String,
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into();
        let hash = digest_hex(&text);
        Self { text, hash }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::new(DEFAULT_PROMPT)
    }
}

pub fn render_prompt(template: &PromptTemplate) -> &str {
    template.text()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_prompt_text() {
        let t = PromptTemplate::default();
        let rendered = render_prompt(&t);
        assert!(rendered.starts_with("Please describe this aerial/drone-view image in detail."));
        for point in ["(1) the main building", "(2) the surrounding", "(3) significant landmarks", "(4) the overall"] {
            assert!(rendered.contains(point), "{point}");
        }
        assert!(rendered.ends_with("Please be specific and precise."));
        assert_eq!(t.hash(), digest_hex(rendered));
    }

    #[test]
    fn custom_template_identity() {
        let t = PromptTemplate::new("X");
        assert_eq!(render_prompt(&t), "X");
        assert_eq!(t.hash(), digest_hex("X"));
        assert_eq!(render_prompt(&t).as_bytes(), render_prompt(&t.clone()).as_bytes());
        // sha256("X")
        assert_eq!(t.hash(), "4b68ab3847feda7d6c62c1fbcbeebfa35eab7351ed5e78f4ddadea5df64b8015");
    }
}
