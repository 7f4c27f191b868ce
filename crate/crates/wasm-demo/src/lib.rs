//! Browser bindings. Every export takes plain values and returns a JSON
//! string; failures come back as `{"error": ...}` so the page never has to
//! catch exceptions.

use mgtd_core::corpus::Label;
use mgtd_core::genpipe::clean_generation;
use mgtd_core::service::{check_length, MAX_WORDS, MIN_WORDS};
use mgtd_core::{ConfusionMatrix, EvalReport, GrlSchedule};
use serde_json::{json, Value};
use wasm_bindgen::prelude::wasm_bindgen;

fn error(msg: impl std::fmt::Display) -> String {
    json!({ "error": msg.to_string() }).to_string()
}

fn report_json(r: &EvalReport) -> Value {
    json!({
        "precision": r.precision,
        "recall": r.recall,
        "f1_macro": r.f1_macro,
        "accuracy": r.accuracy,
        "total": r.total(),
        "warnings": r.warnings,
    })
}

/// Macro metrics for a 4x4 confusion matrix given as 16 row-major counts
/// (rows are true classes), plus the human-vs-machine collapse.
#[wasm_bindgen]
pub fn metrics(counts: &[u32]) -> String {
    let n = Label::COUNT;
    if counts.len() != n * n {
        return error(format!("expected {} counts, got {}", n * n, counts.len()));
    }
    let rows: Vec<Vec<u64>> = counts.chunks(n).map(|r| r.iter().map(|&c| u64::from(c)).collect()).collect();
    let cm = ConfusionMatrix::from_rows(rows);
    if cm.total() == 0 {
        return error("the matrix is empty");
    }
    let per_class: Vec<Value> = Label::ALL
        .iter()
        .map(|l| {
            let c = l.code();
            json!({ "label": l.name(), "precision": cm.precision(c), "recall": cm.recall(c), "f1": cm.f1(c) })
        })
        .collect();
    let binary = EvalReport::from_confusion(cm.binary_collapse());
    let four = EvalReport::from_confusion(cm);
    json!({ "four_way": report_json(&four), "binary": report_json(&binary), "per_class": per_class }).to_string()
}

/// `points` samples of the reversal coefficient over training progress.
/// `mode` is `annealed` or `constant:<lambda>`.
#[wasm_bindgen]
pub fn grl_curve(mode: &str, points: u32) -> String {
    let schedule: GrlSchedule = match mode.parse() {
        Ok(s) => s,
        Err(e) => return error(e),
    };
    let points = points.clamp(2, 1000);
    let curve: Vec<[f64; 2]> = (0..points)
        .map(|i| {
            let p = f64::from(i) / f64::from(points - 1);
            [p, schedule.lambda(p)]
        })
        .collect();
    json!({ "mode": mode, "curve": curve }).to_string()
}

/// Applies the generation cleaner, then the service's word gate.
#[wasm_bindgen]
pub fn check_text(text: &str) -> String {
    let cleaned = clean_generation(text);
    let gate = match check_length(&cleaned) {
        Ok(words) => json!({ "ok": true, "words": words }),
        Err(e) => json!({ "ok": false, "code": e.code(), "message": e.to_string() }),
    };
    json!({
        "cleaned": cleaned,
        "changed": cleaned != text,
        "gate": gate,
        "min_words": MIN_WORDS,
        "max_words": MAX_WORDS,
    })
    .to_string()
}
