use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{DatasetManifest, Label};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StatsKey {
    pub domain: String,
    pub generator: String,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub(crate) struct StatsRow {
    pub domain: String,
    pub generator: String,
    pub label: Label,
    pub count: usize,
}

/// Counts keyed by (domain, generator, label).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CorpusStats {
    pub counts: BTreeMap<StatsKey, usize>,
}

pub fn corpus_stats(m: &DatasetManifest) -> CorpusStats {
    let mut counts = BTreeMap::new();
    for e in &m.entries {
        let key = StatsKey { domain: e.domain.clone(), generator: e.generator.clone(), label: e.label };
        *counts.entry(key).or_insert(0) += 1;
    }
    CorpusStats { counts }
}

impl CorpusStats {
    pub(crate) fn from_rows(rows: &[StatsRow]) -> Self {
        let mut counts = BTreeMap::new();
        for r in rows {
            let key = StatsKey { domain: r.domain.clone(), generator: r.generator.clone(), label: r.label };
            *counts.entry(key).or_insert(0) += r.count;
        }
        counts.retain(|_, c| *c > 0);
        CorpusStats { counts }
    }

    pub(crate) fn rows(&self) -> Vec<StatsRow> {
        self.counts
            .iter()
            .map(|(k, c)| StatsRow { domain: k.domain.clone(), generator: k.generator.clone(), label: k.label, count: *c })
            .collect()
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn domains(&self) -> BTreeSet<&str> {
        self.counts.keys().map(|k| k.domain.as_str()).collect()
    }

    /// Per-domain totals by label.
    pub fn by_domain(&self) -> BTreeMap<&str, [usize; 4]> {
        let mut out: BTreeMap<&str, [usize; 4]> = BTreeMap::new();
        for (k, c) in &self.counts {
            out.entry(k.domain.as_str()).or_default()[k.label.code()] += c;
        }
        out
    }

    /// Aligned table: one row per (domain, generator), one column per class.
    pub fn render_table(&self) -> String {
        let mut grid: BTreeMap<(&str, &str), [usize; 4]> = BTreeMap::new();
        for (k, c) in &self.counts {
            grid.entry((k.domain.as_str(), k.generator.as_str())).or_default()[k.label.code()] += c;
        }
        let dw = grid.keys().map(|(d, _)| d.len()).max().unwrap_or(0).max("Domain".len());
        let gw = grid.keys().map(|(_, g)| g.len()).max().unwrap_or(0).max("Generator".len());
        let mut out = String::new();
        let _ = write!(out, "{:<dw$}  {:<gw$}", "Domain", "Generator");
        for l in Label::ALL {
            let _ = write!(out, "  {:>9}", l.roman());
        }
        let _ = writeln!(out, "  {:>9}", "Total");
        for ((d, g), row) in &grid {
            let _ = write!(out, "{d:<dw$}  {g:<gw$}");
            for c in row {
                let _ = write!(out, "  {c:>9}");
            }
            let _ = writeln!(out, "  {:>9}", row.iter().sum::<usize>());
        }
        let _ = write!(out, "{:<dw$}  {:<gw$}", "Total", "");
        let mut totals = [0usize; 4];
        for row in grid.values() {
            for (t, c) in totals.iter_mut().zip(row) {
                *t += c;
            }
        }
        for t in totals {
            let _ = write!(out, "  {t:>9}");
        }
        let _ = writeln!(out, "  {:>9}", self.total());
        out
    }

    /// Tab-separated `domain generator label count` rows with a header.
    pub fn render_tsv(&self) -> String {
        let mut out = String::from("domain\tgenerator\tlabel\tcount\n");
        for (k, c) in &self.counts {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", k.domain, k.generator, k.label, c);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LabeledText;

    #[test]
    fn empty_manifest_has_empty_table() {
        let s = corpus_stats(&DatasetManifest::default());
        assert!(s.is_empty());
        assert_eq!(s.total(), 0);
    }

    #[test]
    fn counts_conserve_and_group() {
        let entries = vec![
            LabeledText::human("a", "x", "arxiv"),
            LabeledText::new("b", "x", Label::MachineGenerated, "arxiv", "gpt-4o"),
            LabeledText::new("c", "x", Label::MachineGenerated, "arxiv", "gpt-4o"),
            LabeledText::new("d", "x", Label::MachinePolished, "reddit", "gemma-7b"),
        ];
        let m = DatasetManifest::new(entries.clone());
        let s = corpus_stats(&m);
        assert_eq!(s.total(), 4);
        // direct count oracle
        for e in &entries {
            let expected = entries
                .iter()
                .filter(|o| o.domain == e.domain && o.generator == e.generator && o.label == e.label)
                .count();
            let key = StatsKey { domain: e.domain.clone(), generator: e.generator.clone(), label: e.label };
            assert_eq!(s.counts[&key], expected);
        }
        assert_eq!(s.domains().len(), 2);
        assert_eq!(s.by_domain().len(), 2);
        let table = s.render_table();
        assert!(table.lines().any(|l| l.starts_with("arxiv ") && l.contains("gpt-4o")));
        assert_eq!(s.render_tsv().lines().count(), 4);
    }
}
