use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Default)]
struct Counts {
    tp: usize,
    predicted: usize,
    gold: usize,
}

/// Per-class precision/recall/f1 over the union of gold and predicted labels,
/// plus the support-weighted f1.
pub fn classification_report<L: AsRef<str>>(gold: &[L], pred: &[L]) -> Result<(f64, Vec<ClassMetrics>), EvalError> {
    if gold.len() != pred.len() {
        return Err(EvalError::LengthMismatch { gold: gold.len(), pred: pred.len() });
    }
    if gold.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut counts: BTreeMap<&str, Counts> = BTreeMap::new();
    for (g, p) in gold.iter().zip(pred) {
        let (g, p) = (g.as_ref(), p.as_ref());
        counts.entry(g).or_default().gold += 1;
        counts.entry(p).or_default().predicted += 1;
        if g == p {
            counts.entry(g).or_default().tp += 1;
        }
    }
    let n = gold.len() as f64;
    let mut weighted = 0.0;
    let mut per_class = Vec::with_capacity(counts.len());
    for (label, c) in counts {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(c.tp, c.predicted);
        let recall = ratio(c.tp, c.gold);
        // 2PR/(P+R) written in counts; zero when both are zero.
        let f1 = ratio(2 * c.tp, c.predicted + c.gold);
        weighted += c.gold as f64 * f1;
        per_class.push(ClassMetrics { label: label.to_string(), precision, recall, f1, support: c.gold });
    }
    Ok((weighted / n, per_class))
}

pub fn weighted_f1<L: AsRef<str>>(gold: &[L], pred: &[L]) -> Result<f64, EvalError> {
    classification_report(gold, pred).map(|(f1, _)| f1)
}

/// Distinct labels, handy for building fixtures.
pub fn label_set<L: AsRef<str>>(labels: &[L]) -> BTreeSet<String> {
    labels.iter().map(|l| l.as_ref().to_string()).collect()
}
