//! Four-class corpus data model and manifest files.
//!
//! A manifest file is UTF-8 JSON Lines. An optional first line of the form
//! `{"manifest": {"provenance": ..., "seed": ..., "stats": [...]}}` carries the
//! manifest-level fields; every other line is one [`LabeledText`] record with
//! the fields `id`, `text`, `label`, `domain`, `generator` and optional `split`.

mod split;
mod stats;

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use split::{balance_classes, largest_remainder_counts, stratified_split};
pub use stats::{corpus_stats, CorpusStats, StatsKey};

/// Domains shipped with the bundled data, in display order.
pub const BUNDLED_DOMAINS: [&str; 6] = ["arxiv", "wikipedia", "wikihow", "reddit", "peerread", "outfox"];

pub const HUMAN_GENERATOR: &str = "human";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("invalid record {id:?}: {message}")]
    InvalidRecord { id: String, message: String },
    #[error("stored statistics do not match entries: {0}")]
    StatsMismatch(String),
    #[error("split ratios must be non-negative and sum to 1 (got {0:?})")]
    BadRatios([f64; 3]),
}

/// The four classes, with stable integer codes 0..=3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    HumanWritten,
    MachineGenerated,
    MachineHumanized,
    MachinePolished,
}

impl Label {
    pub const ALL: [Label; 4] = [
        Label::HumanWritten,
        Label::MachineGenerated,
        Label::MachineHumanized,
        Label::MachinePolished,
    ];
    pub const COUNT: usize = 4;

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Label> {
        Label::ALL.get(code).copied()
    }

    /// Wire and file name.
    pub fn name(self) -> &'static str {
        match self {
            Label::HumanWritten => "human_written",
            Label::MachineGenerated => "machine_generated",
            Label::MachineHumanized => "machine_humanized",
            Label::MachinePolished => "machine_polished",
        }
    }

    pub fn roman(self) -> &'static str {
        ["I", "II", "III", "IV"][self.code()]
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Label::HumanWritten => "Human-Written",
            Label::MachineGenerated => "Machine-Generated",
            Label::MachineHumanized => "Machine-Written Machine-Humanized",
            Label::MachinePolished => "Human-Written Machine-Polished",
        }
    }

    pub fn is_machine_involved(self) -> bool {
        self != Label::HumanWritten
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown label {0:?}")]
pub struct UnknownLabel(pub String);

impl FromStr for Label {
    type Err = UnknownLabel;

    /// Accepts the snake_case name, the PascalCase variant name, the roman
    /// numeral (I-IV) or the integer code.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if let Ok(code) = t.parse::<usize>() {
            return Label::from_code(code).ok_or_else(|| UnknownLabel(s.to_string()));
        }
        let norm: String = t.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        Label::ALL
            .into_iter()
            .find(|l| {
                norm == l.name().replace('_', "") || t.eq_ignore_ascii_case(l.roman())
            })
            .ok_or_else(|| UnknownLabel(s.to_string()))
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Code(u64),
            Name(String),
        }
        match Raw::deserialize(d)? {
            Raw::Code(c) => Label::from_code(c as usize)
                .ok_or_else(|| serde::de::Error::custom(format!("label code {c} out of range 0-3"))),
            Raw::Name(n) => n.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "dev" | "valid" | "validation" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// Maps display names ("arXiv", "Reddit ELI5", "OUTFOX", ...) to the
/// lowercase domain token. Unknown names are lowercased with inner
/// whitespace replaced by `_`. Returns `None` for an empty name.
pub fn normalize_domain(name: &str) -> Option<String> {
    let t = name.trim();
    if t.is_empty() {
        return None;
    }
    let lower = t.to_lowercase();
    let mapped = match lower.as_str() {
        "reddit eli5" | "reddit_eli5" | "eli5" => "reddit".to_string(),
        _ => lower.split_whitespace().collect::<Vec<_>>().join("_"),
    };
    Some(mapped)
}

fn is_domain_token(d: &str) -> bool {
    !d.is_empty()
        && d.chars()
            .all(|c| c.is_lowercase() || c.is_ascii_digit() || c == '_' || c == '-' || c == '.')
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledText {
    pub id: String,
    pub text: String,
    pub label: Label,
    pub domain: String,
    pub generator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl LabeledText {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: Label, domain: impl Into<String>, generator: impl Into<String>) -> Self {
        LabeledText {
            id: id.into(),
            text: text.into(),
            label,
            domain: domain.into(),
            generator: generator.into(),
            split: None,
        }
    }

    pub fn human(id: impl Into<String>, text: impl Into<String>, domain: impl Into<String>) -> Self {
        Self::new(id, text, Label::HumanWritten, domain, HUMAN_GENERATOR)
    }

    pub fn word_count(&self) -> usize {
        crate::words::word_count(&self.text)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let fail = |message: String| CorpusError::InvalidRecord { id: self.id.clone(), message };
        if self.id.trim().is_empty() {
            return Err(fail("empty id".into()));
        }
        if self.text.trim().is_empty() {
            return Err(fail("text is empty".into()));
        }
        if !is_domain_token(&self.domain) {
            return Err(fail(format!("invalid domain {:?}", self.domain)));
        }
        let is_human_gen = self.generator == HUMAN_GENERATOR;
        if (self.label == Label::HumanWritten) != is_human_gen {
            return Err(fail(format!(
                "label {} inconsistent with generator {:?}",
                self.label, self.generator
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
struct ManifestHeader {
    #[serde(default)]
    provenance: String,
    #[serde(default)]
    seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stats: Option<Vec<stats::StatsRow>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub entries: Vec<LabeledText>,
    pub provenance: String,
    pub seed: u64,
}

impl DatasetManifest {
    pub fn new(entries: Vec<LabeledText>) -> Self {
        DatasetManifest { entries, ..Default::default() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Checks record invariants and id uniqueness.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let mut seen = HashSet::new();
        for (i, e) in self.entries.iter().enumerate() {
            e.validate()?;
            if !seen.insert(e.id.as_str()) {
                return Err(CorpusError::DuplicateId { line: i + 1, id: e.id.clone() });
            }
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> Vec<LabeledText> {
        self.entries.iter().filter(|e| e.split == Some(split)).cloned().collect()
    }

    /// Distinct domains in first-seen order.
    pub fn domains(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for e in &self.entries {
            if !out.iter().any(|d| d == &e.domain) {
                out.push(e.domain.clone());
            }
        }
        out
    }

    pub fn parse_str(input: &str) -> Result<DatasetManifest, CorpusError> {
        Self::parse_lines(input.lines().map(|l| Ok(l.to_string())))
    }

    fn parse_lines<I>(lines: I) -> Result<DatasetManifest, CorpusError>
    where
        I: Iterator<Item = std::io::Result<String>>,
    {
        let mut manifest = DatasetManifest::default();
        let mut header: Option<ManifestHeader> = None;
        let mut seen = HashSet::new();
        for (idx, line) in lines.enumerate() {
            let line_no = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value = serde_json::from_str(&line)
                .map_err(|e| CorpusError::Parse { line: line_no, message: e.to_string() })?;
            if let Some(h) = value.get("manifest") {
                if manifest.entries.is_empty() && header.is_none() {
                    let h: ManifestHeader = serde_json::from_value(h.clone())
                        .map_err(|e| CorpusError::Parse { line: line_no, message: format!("bad header: {e}") })?;
                    header = Some(h);
                    continue;
                }
                return Err(CorpusError::Parse { line: line_no, message: "manifest header must be the first line".into() });
            }
            let mut rec: LabeledText = serde_json::from_value(value)
                .map_err(|e| CorpusError::Parse { line: line_no, message: e.to_string() })?;
            rec.domain = normalize_domain(&rec.domain).unwrap_or_default();
            rec.validate().map_err(|e| CorpusError::Parse { line: line_no, message: e.to_string() })?;
            if !seen.insert(rec.id.clone()) {
                return Err(CorpusError::DuplicateId { line: line_no, id: rec.id });
            }
            manifest.entries.push(rec);
        }
        if let Some(h) = header {
            manifest.provenance = h.provenance;
            manifest.seed = h.seed;
            if let Some(rows) = h.stats {
                let stored = CorpusStats::from_rows(&rows);
                let actual = corpus_stats(&manifest);
                if stored != actual {
                    return Err(CorpusError::StatsMismatch(format!(
                        "stored total {} vs recomputed {}",
                        stored.total(),
                        actual.total()
                    )));
                }
            }
        }
        Ok(manifest)
    }

    /// Serializes to the line format. `with_stats` embeds the recomputed
    /// count table in the header.
    pub fn to_jsonl(&self, with_stats: bool) -> String {
        let mut out = String::new();
        let header = ManifestHeader {
            provenance: self.provenance.clone(),
            seed: self.seed,
            stats: with_stats.then(|| corpus_stats(self).rows()),
        };
        out.push_str(&serde_json::json!({ "manifest": header }).to_string());
        out.push('\n');
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let path = path.as_ref();
        let tmp = path.with_extension("jsonl.tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(self.to_jsonl(true).as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(tmp, path)?;
        Ok(())
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest, CorpusError> {
    let f = fs::File::open(path)?;
    DatasetManifest::parse_lines(BufReader::new(f).lines())
}
