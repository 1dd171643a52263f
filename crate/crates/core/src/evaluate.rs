//! Value-level evaluation of a result instance against ground truth.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{normalize_name, Relation};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct MetricsReport {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub accuracy: Option<f64>,
    pub npv: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl MetricsReport {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> MetricsReport {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            _ => None,
        };
        MetricsReport {
            tp,
            fp,
            fn_,
            tn,
            precision,
            recall,
            f1,
            accuracy: ratio(tp + tn, tp + fp + tn + fn_),
            npv: ratio(tn, tn + fn_),
        }
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
        write!(
            f,
            "TP={} FP={} FN={} TN={} precision={} recall={} f1={} accuracy={} npv={}",
            self.tp,
            self.fp,
            self.fn_,
            self.tn,
            show(self.precision),
            show(self.recall),
            show(self.f1),
            show(self.accuracy),
            show(self.npv)
        )
    }
}

fn is_marked(value: Option<&str>) -> bool {
    matches!(
        value.map(|v| v.trim().to_lowercase()).as_deref(),
        Some("1" | "true" | "yes" | "y" | "x")
    )
}

/// Aligns result and truth tuples on `keys` and counts cells.
///
/// An aligned cell is TP when equal (two nulls are equal) and FP otherwise.
/// Unaligned result tuples contribute FP cells, unaligned truth tuples FN
/// cells. Truth tuples flagged in `excluded_marker` are not expected: they
/// count as TN cells when absent from the result and FP cells when present.
pub fn evaluate(
    result: &Relation,
    truth: &Relation,
    keys: &[String],
    excluded_marker: Option<&str>,
) -> Result<MetricsReport> {
    let marker = excluded_marker.map(normalize_name);
    let marker_idx = match &marker {
        Some(m) => Some(
            truth
                .index_of(m)
                .ok_or_else(|| Error::Evaluation(format!("ground truth has no marker column `{m}`")))?,
        ),
        None => None,
    };
    let truth_attrs: Vec<&String> = truth
        .attributes()
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != marker_idx)
        .map(|(_, a)| a)
        .collect();
    let result_set: BTreeSet<&String> = result.attributes().iter().collect();
    let truth_set: BTreeSet<&String> = truth_attrs.iter().copied().collect();
    if result_set != truth_set {
        return Err(Error::Evaluation(format!(
            "schema mismatch: result has [{}], ground truth has [{}]",
            result.attributes().join(", "),
            truth_attrs.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
        )));
    }
    let keys: Vec<String> = keys.iter().map(|k| normalize_name(k)).collect();
    if keys.is_empty() {
        return Err(Error::Evaluation("no key attributes given".into()));
    }
    let key_idx = |rel: &Relation| -> Result<Vec<usize>> {
        keys.iter()
            .map(|k| {
                rel.index_of(k)
                    .ok_or_else(|| Error::Evaluation(format!("key attribute `{k}` missing from {}", rel.name())))
            })
            .collect()
    };
    let (rk, tk) = (key_idx(result)?, key_idx(truth)?);
    // result column for each truth attribute
    let columns: Vec<(usize, usize)> = truth_attrs
        .iter()
        .map(|a| (truth.index_of(a).expect("own attribute"), result.index_of(a).expect("same schema")))
        .collect();
    let width = columns.len() as u64;

    let mut by_key: BTreeMap<Vec<Option<&str>>, usize> = BTreeMap::new();
    for row in 0..truth.len() {
        let key: Vec<Option<&str>> = tk.iter().map(|&i| truth.cell(row, i)).collect();
        if by_key.insert(key.clone(), row).is_some() {
            return Err(Error::Evaluation(format!(
                "duplicate ground-truth key ({})",
                key.iter().map(|k| k.unwrap_or("")).collect::<Vec<_>>().join(", ")
            )));
        }
    }

    let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
    let mut matched = BTreeSet::new();
    for row in 0..result.len() {
        let key: Vec<Option<&str>> = rk.iter().map(|&i| result.cell(row, i)).collect();
        let target = by_key.get(&key).copied().filter(|t| !matched.contains(t));
        match target {
            Some(t) if !marker_idx.is_some_and(|m| is_marked(truth.cell(t, m))) => {
                matched.insert(t);
                for &(ti, ri) in &columns {
                    if truth.cell(t, ti) == result.cell(row, ri) {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                }
            }
            Some(t) => {
                matched.insert(t);
                fp += width;
            }
            None => fp += width,
        }
    }
    for row in (0..truth.len()).filter(|r| !matched.contains(r)) {
        if marker_idx.is_some_and(|m| is_marked(truth.cell(row, m))) {
            tn += width;
        } else {
            fn_ += width;
        }
    }
    Ok(MetricsReport::from_counts(tp, fp, fn_, tn))
}
