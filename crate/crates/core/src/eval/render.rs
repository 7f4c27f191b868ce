use std::fmt::Write;

use super::{ConfusionMatrix, EvalReport};

/// Aligned table with one row per named report: Prec, Recall, F1-Macro, Acc.
pub fn render_table(rows: &[(&str, &EvalReport)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(5);
    let mut out = format!("{:<width$}  {:>6}  {:>6}  {:>8}  {:>6}\n", "Model", "Prec", "Recall", "F1-Macro", "Acc");
    for (name, r) in rows {
        let _ = writeln!(
            out,
            "{name:<width$}  {:>6.2}  {:>6.2}  {:>8.2}  {:>6.2}",
            r.precision, r.recall, r.f1_macro, r.accuracy
        );
    }
    out
}

/// Text grid with row/column headers. `names` must match the matrix size.
pub fn render_grid(cm: &ConfusionMatrix, names: &[&str]) -> String {
    assert_eq!(names.len(), cm.size());
    let cell = cm
        .rows()
        .iter()
        .flatten()
        .map(|c| c.to_string().len())
        .chain(names.iter().map(|n| n.len()))
        .max()
        .unwrap_or(1);
    let head = names.iter().map(|n| n.len()).max().unwrap_or(1).max("true\\pred".len());
    let mut out = format!("{:<head$}", "true\\pred");
    for n in names {
        let _ = write!(out, "  {n:>cell$}");
    }
    out.push('\n');
    for (name, row) in names.iter().zip(cm.rows()) {
        let _ = write!(out, "{name:<head$}");
        for c in row {
            let _ = write!(out, "  {c:>cell$}");
        }
        out.push('\n');
    }
    out
}

/// Row-normalized heatmap as a standalone SVG document.
pub fn render_svg(cm: &ConfusionMatrix, names: &[&str], title: &str) -> String {
    assert_eq!(names.len(), cm.size());
    let n = cm.size();
    let (cell, left, top) = (90usize, 110usize, 60usize);
    let w = left + n * cell + 20;
    let h = top + n * cell + 40;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    let _ = writeln!(s, "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>", w / 2, escape(title));
    for (j, name) in names.iter().enumerate() {
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
            left + j * cell + cell / 2,
            top - 8,
            escape(name)
        );
    }
    for (i, row) in cm.rows().iter().enumerate() {
        let total: u64 = row.iter().sum();
        let y = top + i * cell;
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>",
            left - 8,
            y + cell / 2 + 4,
            escape(names[i])
        );
        for (j, &c) in row.iter().enumerate() {
            let frac = if total == 0 { 0.0 } else { c as f64 / total as f64 };
            let shade = (255.0 - 200.0 * frac).round() as u8;
            let ink = if frac > 0.5 { "#fff" } else { "#000" };
            let x = left + j * cell;
            let _ = writeln!(
                s,
                "<rect x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" fill=\"rgb({shade},{shade},255)\" stroke=\"#888\"/>"
            );
            let _ = writeln!(
                s,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"{ink}\">{c} ({:.1}%)</text>",
                x + cell / 2,
                y + cell / 2 + 4,
                frac * 100.0
            );
        }
    }
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">predicted</text>",
        left + n * cell / 2,
        h - 12
    );
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
