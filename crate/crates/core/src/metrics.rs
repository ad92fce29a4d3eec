//! Confusion matrix and the agreement metrics derived from it.
//!
//! All metrics are computed over non-void pixels only. Metrics that are
//! undefined for the given counts (empty matrix, `0/0` ratios) are `None`.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// `C x C` tallies indexed `(reference, predicted)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    /// Builds a matrix from row-major `(reference, predicted)` rows.
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let classes = rows.len();
        if rows.iter().any(|r| r.len() != classes) {
            return Err(Error::InvalidArgument("confusion matrix must be square".into()));
        }
        Ok(ConfusionMatrix {
            classes,
            counts: rows.concat(),
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, reference: usize, predicted: usize) -> u64 {
        self.counts[reference * self.classes + predicted]
    }

    /// Increments `(label, prediction)` once per non-void pixel.
    pub fn accumulate(&mut self, labels: &[u8], predictions: &[u8], void_mask: &[bool]) -> Result<()> {
        if labels.len() != predictions.len() || labels.len() != void_mask.len() {
            return Err(Error::shape(
                "confusion inputs (labels/predictions/void)",
                labels.len(),
                format!("{}/{}", predictions.len(), void_mask.len()),
            ));
        }
        for ((&l, &p), &v) in labels.iter().zip(predictions).zip(void_mask) {
            if v {
                continue;
            }
            let (l, p) = (l as usize, p as usize);
            if l >= self.classes || p >= self.classes {
                return Err(Error::InvalidArgument(format!(
                    "class pair ({l}, {p}) outside a {}-class matrix",
                    self.classes
                )));
            }
            self.counts[l * self.classes + p] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::shape("confusion merge classes", self.classes, other.classes));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    pub fn row_total(&self, c: usize) -> u64 {
        (0..self.classes).map(|p| self.get(c, p)).sum()
    }

    pub fn col_total(&self, c: usize) -> u64 {
        (0..self.classes).map(|r| self.get(r, c)).sum()
    }

    pub fn overall_accuracy(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| self.trace() as f64 / total as f64)
    }

    /// Mean per-class recall over classes present in the reference.
    pub fn average_accuracy(&self) -> Option<f64> {
        let recalls: Vec<f64> = (0..self.classes)
            .filter_map(|c| {
                let row = self.row_total(c);
                (row > 0).then(|| self.get(c, c) as f64 / row as f64)
            })
            .collect();
        (!recalls.is_empty()).then(|| recalls.iter().sum::<f64>() / recalls.len() as f64)
    }

    /// Cohen's kappa, `(p_o - p_e) / (1 - p_e)`.
    pub fn kappa(&self) -> Option<f64> {
        let total = self.total();
        if total == 0 {
            return None;
        }
        let t = total as f64;
        let p_o = self.trace() as f64 / t;
        let p_e = (0..self.classes)
            .map(|c| self.row_total(c) as f64 * self.col_total(c) as f64)
            .sum::<f64>()
            / (t * t);
        (p_e < 1.0).then(|| (p_o - p_e) / (1.0 - p_e))
    }

    /// Per-class F1; `None` for classes absent from both reference and prediction.
    pub fn f1_per_class(&self) -> Vec<Option<f64>> {
        (0..self.classes)
            .map(|c| {
                let (tp, row, col) = (self.get(c, c) as f64, self.row_total(c), self.col_total(c));
                if row == 0 && col == 0 {
                    return None;
                }
                let precision = if col > 0 { tp / col as f64 } else { 0.0 };
                let recall = if row > 0 { tp / row as f64 } else { 0.0 };
                Some(if precision + recall > 0.0 {
                    2.0 * precision * recall / (precision + recall)
                } else {
                    0.0
                })
            })
            .collect()
    }

    pub fn mean_f1(&self) -> Option<f64> {
        let f1: Vec<f64> = self.f1_per_class().into_iter().flatten().collect();
        (!f1.is_empty()).then(|| f1.iter().sum::<f64>() / f1.len() as f64)
    }

    pub fn report(&self) -> MetricsReport {
        MetricsReport {
            matrix: self.clone(),
            overall_accuracy: self.overall_accuracy(),
            average_accuracy: self.average_accuracy(),
            kappa: self.kappa(),
            f1: self.f1_per_class(),
            mean_f1: self.mean_f1(),
        }
    }
}

/// Every metric for one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub matrix: ConfusionMatrix,
    pub overall_accuracy: Option<f64>,
    pub average_accuracy: Option<f64>,
    pub kappa: Option<f64>,
    pub f1: Vec<Option<f64>>,
    pub mean_f1: Option<f64>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "NA".into())
}

impl MetricsReport {
    pub fn csv_header(classes: usize) -> String {
        let mut h = String::from("label");
        for c in 0..classes {
            write!(h, ",f1_{c}").unwrap();
        }
        h.push_str(",mean_f1,oa,aa,kappa,pixels");
        h
    }

    /// One CSV row matching [`Self::csv_header`].
    pub fn csv_row(&self, label: &str) -> String {
        let mut row = label.to_string();
        for f in &self.f1 {
            write!(row, ",{}", cell(*f)).unwrap();
        }
        write!(
            row,
            ",{},{},{},{},{}",
            cell(self.mean_f1),
            cell(self.overall_accuracy),
            cell(self.average_accuracy),
            cell(self.kappa),
            self.matrix.total()
        )
        .unwrap();
        row
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "pixels            {}", self.matrix.total()).unwrap();
        writeln!(out, "overall accuracy  {}", cell(self.overall_accuracy)).unwrap();
        writeln!(out, "average accuracy  {}", cell(self.average_accuracy)).unwrap();
        writeln!(out, "kappa             {}", cell(self.kappa)).unwrap();
        writeln!(out, "mean f1           {}", cell(self.mean_f1)).unwrap();
        for (c, f) in self.f1.iter().enumerate() {
            writeln!(out, "f1 class {c:<8} {}", cell(*f)).unwrap();
        }
        out
    }
}
