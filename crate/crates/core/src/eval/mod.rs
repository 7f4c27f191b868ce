//! Confusion matrices, macro-averaged metrics, per-domain evaluation and the
//! binary human/machine collapse.

mod probe;
mod render;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use probe::{pooled_features, LinearProbe, ProbeConfig};
pub use render::{render_grid, render_svg, render_table};

use crate::corpus::{Label, LabeledText};
use crate::neural::{argmax, ClassifierModel, NeuralError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("nothing to evaluate: the split is empty")]
    EmptySplit,
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

/// Square count matrix; rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(n: usize) -> Self {
        ConfusionMatrix { counts: vec![vec![0; n]; n] }
    }

    /// Panics unless `rows` is square.
    pub fn from_rows(rows: Vec<Vec<u64>>) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "confusion matrix must be square");
        ConfusionMatrix { counts: rows }
    }

    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut cm = ConfusionMatrix::new(n);
        for (t, p) in pairs {
            cm.add(t, p);
        }
        cm
    }

    pub fn size(&self) -> usize {
        self.counts.len()
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.size()).map(|i| self.counts[i][i]).sum()
    }

    pub fn true_count(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn predicted_count(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }

    /// Elementwise sum. Panics on size mismatch.
    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.size(), other.size());
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.trace(), self.total())
    }

    /// Zero when nothing was predicted as `class`.
    pub fn precision(&self, class: usize) -> f64 {
        ratio(self.counts[class][class], self.predicted_count(class))
    }

    /// Zero when `class` never occurs.
    pub fn recall(&self, class: usize) -> f64 {
        ratio(self.counts[class][class], self.true_count(class))
    }

    pub fn f1(&self, class: usize) -> f64 {
        let (p, r) = (self.precision(class), self.recall(class));
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    fn macro_of(&self, f: impl Fn(usize) -> f64) -> f64 {
        (0..self.size()).map(f).sum::<f64>() / self.size() as f64
    }

    pub fn macro_precision(&self) -> f64 {
        self.macro_of(|c| self.precision(c))
    }

    pub fn macro_recall(&self) -> f64 {
        self.macro_of(|c| self.recall(c))
    }

    pub fn macro_f1(&self) -> f64 {
        self.macro_of(|c| self.f1(c))
    }

    /// Classes with no true instances in the matrix.
    pub fn absent_classes(&self) -> Vec<usize> {
        (0..self.size()).filter(|&c| self.true_count(c) == 0).collect()
    }

    /// Maps class 0 to human (0) and every other class to machine (1).
    pub fn binary_collapse(&self) -> ConfusionMatrix {
        let side = |c: usize| usize::from(c != 0);
        let mut out = ConfusionMatrix::new(2);
        for (t, row) in self.counts.iter().enumerate() {
            for (p, &n) in row.iter().enumerate() {
                out.counts[side(t)][side(p)] += n;
            }
        }
        out
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Macro F1 as a fraction in [0, 1].
pub fn macro_f1(cm: &ConfusionMatrix) -> f64 {
    cm.macro_f1()
}

/// Metrics in percent; the matrix keeps raw counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1_macro: f64,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Self {
        let warnings = confusion
            .absent_classes()
            .into_iter()
            .map(|c| {
                let name = if confusion.size() == Label::COUNT {
                    Label::from_code(c).expect("class index").name().to_string()
                } else {
                    format!("class {c}")
                };
                let msg = format!("{name} has no examples; its precision, recall and F1 count as 0 in the macro average");
                tracing::warn!("{msg}");
                msg
            })
            .collect();
        EvalReport {
            precision: 100.0 * confusion.macro_precision(),
            recall: 100.0 * confusion.macro_recall(),
            f1_macro: 100.0 * confusion.macro_f1(),
            accuracy: 100.0 * confusion.accuracy(),
            confusion,
            warnings,
        }
    }

    pub fn total(&self) -> u64 {
        self.confusion.total()
    }
}

/// Human vs machine metrics from a four-way matrix.
pub fn binary_collapse(cm: &ConfusionMatrix) -> EvalReport {
    EvalReport::from_confusion(cm.binary_collapse())
}

const CHUNK: usize = 64;

/// Argmax label code per text, dropout off.
pub fn predict_labels(model: &ClassifierModel, texts: &[&str]) -> Result<Vec<usize>, NeuralError> {
    let mut out = Vec::with_capacity(texts.len());
    for chunk in texts.chunks(CHUNK) {
        let ids: Vec<Vec<u32>> = chunk.iter().map(|t| model.encode(t).ids).collect();
        let fwd = model.forward(&ids)?;
        out.extend(fwd.label_logits.rows().into_iter().map(argmax));
    }
    Ok(out)
}

fn confusion_for(model: &ClassifierModel, split: &[LabeledText]) -> Result<ConfusionMatrix, EvalError> {
    let texts: Vec<&str> = split.iter().map(|e| e.text.as_str()).collect();
    let preds = predict_labels(model, &texts)?;
    Ok(ConfusionMatrix::from_pairs(Label::COUNT, split.iter().map(|e| e.label.code()).zip(preds)))
}

pub fn evaluate(model: &ClassifierModel, split: &[LabeledText]) -> Result<EvalReport, EvalError> {
    if split.is_empty() {
        return Err(EvalError::EmptySplit);
    }
    Ok(EvalReport::from_confusion(confusion_for(model, split)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainReport {
    pub domain: String,
    /// The model was not trained on this domain.
    pub unseen: bool,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossDomainReport {
    pub domains: Vec<DomainReport>,
    pub pooled: EvalReport,
}

/// One report per domain (sorted by name) plus the pooled report, whose
/// matrix is the sum of the per-domain matrices. Domains missing from the
/// model's domain list are flagged unseen.
pub fn cross_domain_evaluate(model: &ClassifierModel, entries: &[LabeledText]) -> Result<CrossDomainReport, EvalError> {
    if entries.is_empty() {
        return Err(EvalError::EmptySplit);
    }
    let mut groups: BTreeMap<&str, Vec<LabeledText>> = BTreeMap::new();
    for e in entries {
        groups.entry(e.domain.as_str()).or_default().push(e.clone());
    }
    let mut pooled = ConfusionMatrix::new(Label::COUNT);
    let mut domains = Vec::with_capacity(groups.len());
    for (domain, items) in groups {
        let cm = confusion_for(model, &items)?;
        pooled.merge(&cm);
        domains.push(DomainReport {
            domain: domain.to_string(),
            unseen: model.domain_index(domain).is_none(),
            report: EvalReport::from_confusion(cm),
        });
    }
    Ok(CrossDomainReport { domains, pooled: EvalReport::from_confusion(pooled) })
}

#[cfg(test)]
mod tests;
