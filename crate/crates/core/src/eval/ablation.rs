use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{classification_report, ClassMetrics, EvalError};
use crate::classifier::{train, SoftmaxModel, TrainConfig};
use crate::dataset::{extract_examples, partition_by_sessions, split_sessions, DatasetVariant, TrainingExample};
use crate::embed::{Embedder, EmbedderConfig};
use crate::scalar::Scalar;
use crate::session::Session;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: Option<DatasetVariant>,
    pub weighted_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub n_train: usize,
    pub n_test: usize,
    pub threshold: f64,
    pub set_size_histogram: BTreeMap<usize, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

impl EvalReport {
    fn skipped(variant: DatasetVariant, n_train: usize, n_test: usize, threshold: f64, reason: String) -> Self {
        EvalReport {
            variant: Some(variant),
            weighted_f1: 0.0,
            per_class: Vec::new(),
            n_train,
            n_test,
            threshold,
            set_size_histogram: BTreeMap::new(),
            skipped: Some(reason),
        }
    }

    pub fn is_skipped(&self) -> bool {
        self.skipped.is_some()
    }
}

/// Argmax weighted f1 and the set-size histogram of `model` on `examples`.
pub fn evaluate<T: Scalar, E: Embedder<T> + ?Sized>(
    model: &SoftmaxModel<T>,
    embedder: &E,
    examples: &[TrainingExample],
    threshold: f64,
) -> Result<EvalReport, EvalError> {
    if examples.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut predicted = Vec::with_capacity(examples.len());
    let mut hist = BTreeMap::new();
    for ex in examples {
        let v = embedder.embed(&ex.input_text)?;
        let (top, _) = model.predict_top(&v)?;
        predicted.push(top.to_string());
        let size = model.predict_set(&v, threshold)?.len();
        *hist.entry(size).or_insert(0) += 1;
    }
    let gold: Vec<&str> = examples.iter().map(|e| e.label.as_str()).collect();
    let predicted: Vec<&str> = predicted.iter().map(String::as_str).collect();
    let (weighted_f1, per_class) = classification_report(&gold, &predicted)?;
    Ok(EvalReport {
        variant: examples[0].meta.variant.into(),
        weighted_f1,
        per_class,
        n_train: 0,
        n_test: examples.len(),
        threshold,
        set_size_histogram: hist,
        skipped: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub split_seed: u64,
    pub test_fraction: f64,
    pub threshold: f64,
    /// Run variants on separate threads.
    pub parallel: bool,
}

impl AblationConfig {
    pub fn with_seed(split_seed: u64) -> Self {
        AblationConfig { split_seed, test_fraction: 0.2, threshold: 0.1, parallel: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub split_seed: u64,
    pub train_seed: u64,
    pub n_sessions: usize,
    pub n_test_sessions: usize,
    pub rows: Vec<EvalReport>,
}

impl AblationReport {
    pub fn row(&self, variant: DatasetVariant) -> Option<&EvalReport> {
        self.rows.iter().find(|r| r.variant == Some(variant))
    }

    pub fn f1(&self, variant: DatasetVariant) -> Option<f64> {
        self.row(variant).filter(|r| !r.is_skipped()).map(|r| r.weighted_f1)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned text table: configuration | weighted f1 on test | training datapoints.
    pub fn to_table(&self) -> String {
        let head = ("", "f1 on test (weighted)", "# datapoints training", "# test");
        let rows: Vec<(String, String, String, String)> = self
            .rows
            .iter()
            .map(|r| {
                let name = r.variant.map(|v| v.description()).unwrap_or("?").to_string();
                let f1 = match &r.skipped {
                    Some(_) => "skipped".to_string(),
                    None => format!("{:.2}%", 100.0 * r.weighted_f1),
                };
                (name, f1, group_thousands(r.n_train), group_thousands(r.n_test))
            })
            .collect();
        let w0 = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(head.0.len());
        let w1 = rows.iter().map(|r| r.1.len()).max().unwrap_or(0).max(head.1.len());
        let w2 = rows.iter().map(|r| r.2.len()).max().unwrap_or(0).max(head.2.len());
        let w3 = rows.iter().map(|r| r.3.len()).max().unwrap_or(0).max(head.3.len());
        let mut out = String::new();
        let _ = writeln!(out, "{:<w0$} | {:>w1$} | {:>w2$} | {:>w3$}", head.0, head.1, head.2, head.3);
        let _ = writeln!(out, "{}", "-".repeat(w0 + w1 + w2 + w3 + 9));
        for r in rows {
            let _ = writeln!(out, "{:<w0$} | {:>w1$} | {:>w2$} | {:>w3$}", r.0, r.1, r.2, r.3);
        }
        out
    }
}

fn group_thousands(n: usize) -> String {
    let s = n.to_string();
    let mut out = String::new();
    for (i, c) in s.chars().enumerate() {
        if i > 0 && (s.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn run_variant<T: Scalar>(
    sessions: &[Session],
    variant: DatasetVariant,
    test_ids: &BTreeSet<String>,
    embedder: &dyn Embedder<T>,
    train_cfg: &TrainConfig,
    threshold: f64,
) -> Result<EvalReport, EvalError> {
    let examples = extract_examples(sessions, variant);
    let (train_set, test_set) = partition_by_sessions(&examples, test_ids);
    if train_set.is_empty() || test_set.is_empty() {
        return Ok(EvalReport::skipped(
            variant,
            train_set.len(),
            test_set.len(),
            threshold,
            "empty train or test split".into(),
        ));
    }
    let labels: BTreeSet<&str> = train_set.iter().map(|e| e.label.as_str()).collect();
    if labels.len() < 2 {
        return Ok(EvalReport::skipped(
            variant,
            train_set.len(),
            test_set.len(),
            threshold,
            "single-class training set".into(),
        ));
    }
    let model = train(&train_set, embedder, train_cfg)?;
    let mut report = evaluate(&model, embedder, &test_set, threshold)?;
    report.variant = Some(variant);
    report.n_train = train_set.len();
    Ok(report)
}

/// Trains and evaluates each variant on one shared session-level split.
pub fn run_ablation<T: Scalar>(
    sessions: &[Session],
    variants: &[DatasetVariant],
    embedder_cfg: &EmbedderConfig,
    train_cfg: &TrainConfig,
    config: &AblationConfig,
) -> Result<AblationReport, EvalError> {
    let test_ids = split_sessions(sessions.iter().map(|s| s.id.as_str()), config.split_seed, config.test_fraction)?;
    let embedder = embedder_cfg.build::<T>()?;
    let embedder: &dyn Embedder<T> = embedder.as_ref();
    let run = |v: DatasetVariant| run_variant(sessions, v, &test_ids, embedder, train_cfg, config.threshold);

    let rows: Vec<Result<EvalReport, EvalError>> = if config.parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = variants.iter().map(|&v| scope.spawn(move || run(v))).collect();
            handles.into_iter().map(|h| h.join().expect("variant thread panicked")).collect()
        })
    } else {
        variants.iter().map(|&v| run(v)).collect()
    };
    Ok(AblationReport {
        split_seed: config.split_seed,
        train_seed: train_cfg.seed,
        n_sessions: sessions.len(),
        n_test_sessions: test_ids.len(),
        rows: rows.into_iter().collect::<Result<_, _>>()?,
    })
}
