use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GenError;
use crate::corpus::{normalize_domain, Label};

pub const PLACEHOLDER: &str = "{}";

/// Appended verbatim after every rendered instruction. Starts with a newline
/// so that plain concatenation separates it from the source text.
pub const DEFAULT_TRAILING: &str = "\nOnly output the text in double quotes with no text before or after it.";

const DEFAULT_CATALOG: &str = include_str!("../../data/prompt_catalog.jsonl");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    #[serde(rename = "label")]
    pub target_label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    pub instruction: String,
}

impl PromptTemplate {
    pub fn new(target_label: Label, domain: Option<&str>, instruction: impl Into<String>) -> Result<Self, GenError> {
        let t = PromptTemplate {
            target_label,
            domain: domain.and_then(normalize_domain),
            instruction: instruction.into(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn has_placeholder(&self) -> bool {
        self.instruction.contains(PLACEHOLDER)
    }

    pub fn validate(&self) -> Result<(), GenError> {
        if self.target_label == Label::HumanWritten {
            return Err(GenError::Template("a prompt cannot target the human-written class".into()));
        }
        if self.instruction.trim().is_empty() {
            return Err(GenError::Template("empty instruction".into()));
        }
        if self.instruction.matches(PLACEHOLDER).count() > 1 {
            return Err(GenError::Template(format!("more than one placeholder in {:?}", self.instruction)));
        }
        Ok(())
    }

    pub fn applies_to(&self, label: Label, domain: &str) -> bool {
        self.target_label == label && self.domain.as_deref().is_none_or(|d| d == domain)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrailingPrompt(String);

impl TrailingPrompt {
    pub fn new(text: impl Into<String>) -> Result<Self, GenError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(GenError::Template("trailing prompt must be non-empty".into()));
        }
        Ok(TrailingPrompt(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl Default for TrailingPrompt {
    fn default() -> Self {
        TrailingPrompt(DEFAULT_TRAILING.to_string())
    }
}

/// Substitutes `source` for the placeholder (once) and appends the trailing
/// prompt. Nothing else in the instruction is touched.
pub fn render_prompt(t: &PromptTemplate, trailing: &TrailingPrompt, source: &str) -> Result<String, GenError> {
    let body = if t.has_placeholder() {
        if source.trim().is_empty() {
            return Err(GenError::PlaceholderMismatch("template expects source text but none was given".into()));
        }
        t.instruction.replacen(PLACEHOLDER, source, 1)
    } else {
        if !source.is_empty() {
            return Err(GenError::PlaceholderMismatch("template has no placeholder for the source text".into()));
        }
        t.instruction.clone()
    };
    Ok(body + trailing.as_str())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CatalogHeader {
    catalog_version: u32,
}

/// Versioned collection of prompt templates, one JSON object per line.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptCatalog {
    pub version: u32,
    pub templates: Vec<PromptTemplate>,
}

impl PromptCatalog {
    pub const VERSION: u32 = 1;

    pub fn parse_str(input: &str) -> Result<Self, GenError> {
        let mut version = None;
        let mut templates = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |e: serde_json::Error| GenError::Catalog { line: i + 1, message: e.to_string() };
            if version.is_none() {
                if let Ok(h) = serde_json::from_str::<CatalogHeader>(line) {
                    if h.catalog_version != Self::VERSION {
                        return Err(GenError::Catalog {
                            line: i + 1,
                            message: format!("unsupported catalog version {}", h.catalog_version),
                        });
                    }
                    version = Some(h.catalog_version);
                    continue;
                }
            }
            let mut t: PromptTemplate = serde_json::from_str(line).map_err(err)?;
            t.domain = t.domain.as_deref().and_then(normalize_domain);
            t.validate()
                .map_err(|e| GenError::Catalog { line: i + 1, message: e.to_string() })?;
            templates.push(t);
        }
        Ok(PromptCatalog { version: version.unwrap_or(Self::VERSION), templates })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GenError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_str(&text)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::json!({ "catalog_version": self.version }).to_string();
        out.push('\n');
        for t in &self.templates {
            out.push_str(&serde_json::to_string(t).expect("template serializes"));
            out.push('\n');
        }
        out
    }

    /// Templates usable for `label` in `domain`. Domain-specific templates
    /// take precedence; generic ones are used only when none exist.
    pub fn pool(&self, label: Label, domain: &str) -> Vec<&PromptTemplate> {
        let specific: Vec<_> = self
            .templates
            .iter()
            .filter(|t| t.target_label == label && t.domain.as_deref() == Some(domain))
            .collect();
        if !specific.is_empty() {
            return specific;
        }
        self.templates.iter().filter(|t| t.target_label == label && t.domain.is_none()).collect()
    }

    pub fn extend(&mut self, other: PromptCatalog) {
        self.templates.extend(other.templates);
    }
}

impl Default for PromptCatalog {
    fn default() -> Self {
        Self::parse_str(DEFAULT_CATALOG).expect("bundled catalog is valid")
    }
}
