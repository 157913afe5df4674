//! CSV report rows.

use crate::error::{Error, Result};
use crate::metrics::{EvalReport, IoUReport};

pub const EVAL_HEADER: &str = "method,head,aupr,auroc,fpr95,positives,negatives";

/// One evaluated scorer run. Floats use Rust's shortest round-trip formatting.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub method: String,
    pub head: String,
    pub report: EvalReport,
}

impl EvalRow {
    pub fn to_csv(&self) -> String {
        let r = &self.report;
        format!(
            "{},{},{},{},{},{},{}",
            self.method, self.head, r.aupr, r.auroc, r.fpr95, r.positives, r.negatives
        )
    }

    pub fn parse(line: &str) -> Result<Self> {
        let cols: Vec<&str> = line.trim().split(',').collect();
        if cols.len() != 7 {
            return Err(Error::format("csv", "row", format!("expected 7 columns, found {}", cols.len())));
        }
        let float = |i: usize, name: &str| {
            cols[i]
                .parse::<f64>()
                .map_err(|e| Error::format("csv", name, format!("{e}")))
        };
        let count = |i: usize, name: &str| {
            cols[i]
                .parse::<usize>()
                .map_err(|e| Error::format("csv", name, format!("{e}")))
        };
        Ok(Self {
            method: cols[0].to_string(),
            head: cols[1].to_string(),
            report: EvalReport {
                aupr: float(2, "aupr")?,
                auroc: float(3, "auroc")?,
                fpr95: float(4, "fpr95")?,
                positives: count(5, "positives")?,
                negatives: count(6, "negatives")?,
            },
        })
    }
}

pub fn eval_csv(rows: &[EvalRow]) -> String {
    let mut out = format!("{EVAL_HEADER}\n");
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

/// Parse a CSV produced by [`eval_csv`].
pub fn parse_eval_csv(text: &str) -> Result<Vec<EvalRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(EVAL_HEADER) {
        return Err(Error::format("csv", "header", format!("expected `{EVAL_HEADER}`")));
    }
    lines.filter(|l| !l.trim().is_empty()).map(EvalRow::parse).collect()
}

pub fn train_csv(losses: &[f64], accuracies: &[f64]) -> String {
    let mut out = String::from("epoch,loss,accuracy\n");
    for (t, (l, a)) in losses.iter().zip(accuracies).enumerate() {
        out.push_str(&format!("{t},{l},{a}\n"));
    }
    out
}

pub fn iou_header(classes: usize) -> String {
    let mut out = String::from("model,head");
    for c in 0..classes {
        out.push_str(&format!(",iou_{c}"));
    }
    out.push_str(",miou");
    out
}

/// IoU row at four decimals; classes with no union are left empty.
pub fn iou_row(model: &str, head: &str, report: &IoUReport) -> String {
    let mut out = format!("{model},{head}");
    for v in &report.per_class_iou {
        match v {
            Some(v) => out.push_str(&format!(",{v:.4}")),
            None => out.push(','),
        }
    }
    out.push_str(&format!(",{:.4}", report.miou));
    out
}
