//! Tab-separated predictions: a header naming the class order, then one
//! `id<TAB>label<TAB>p1,...,pK` line per instance.
//!
//! ```text
//! id<TAB>label<TAB>proba:1,2,3
//! hinge-0001<TAB>2<TAB>0.2,0.5,0.3
//! ```

use std::fmt::Write as _;

use cmqe_core::Label;

use crate::error::{CliError, Result};

const PROBA_PREFIX: &str = "proba:";

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub id: String,
    pub label: Label,
    pub proba: Vec<f64>,
}

pub fn render(class_labels: &[Label], rows: &[Prediction]) -> String {
    let mut out = String::new();
    let classes: Vec<String> = class_labels.iter().map(Label::to_string).collect();
    writeln!(out, "id\tlabel\t{PROBA_PREFIX}{}", classes.join(",")).unwrap();
    for r in rows {
        let p: Vec<String> = r.proba.iter().map(f64::to_string).collect();
        writeln!(out, "{}\t{}\t{}", r.id, r.label, p.join(",")).unwrap();
    }
    out
}

/// Parses a predictions file. Only the id and label columns are required.
pub fn parse(text: &str) -> Result<Vec<Prediction>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.starts_with("id\tlabel") => {}
        _ => {
            return Err(CliError::Runtime(
                "predictions file lacks the `id<TAB>label` header".into(),
            ))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: String| CliError::Runtime(format!("predictions line {}: {m}", i + 1));
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or_default();
        let label = fields
            .next()
            .ok_or_else(|| bad("missing label column".into()))?;
        let label: Label = label.trim().parse().map_err(bad)?;
        let proba = match fields.next() {
            Some(p) if !p.is_empty() => p
                .split(',')
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|e| bad(format!("probability `{v}`: {e}")))
                })
                .collect::<Result<_>>()?,
            _ => Vec::new(),
        };
        rows.push(Prediction {
            id: id.to_string(),
            label,
            proba,
        });
    }
    Ok(rows)
}
