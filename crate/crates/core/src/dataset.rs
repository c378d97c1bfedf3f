//! Training-example extraction from sessions.
//!
//! A pair of adjacent queries `(prev, cur)` yields examples when `cur` led to
//! at least one order, `prev` led to none, and the two share a token. Each
//! distinct ordered product type of `cur` becomes one single-label example.
//! Six variants control how much of the previous activity is rendered.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::{
    normalize, render_context_text, ContextConfig, EngagementKinds, SessionContext, Transition, TransitionFilter,
    TAG_CUR,
};
use crate::session::Session;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("unknown dataset variant {0:?}")]
    UnknownVariant(String),
    #[error("need at least 2 sessions to split, found {0}")]
    TooFewSessions(usize),
    #[error("test fraction must lie in (0, 1), got {0}")]
    BadFraction(f64),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetVariant {
    CurOnly,
    CurPrev,
    CurPrevAtc,
    CurPrevClick,
    CurPrevB2n,
    CurPrevN2b,
}

impl DatasetVariant {
    pub const ALL: [DatasetVariant; 6] = [
        DatasetVariant::CurPrevAtc,
        DatasetVariant::CurPrevClick,
        DatasetVariant::CurPrevB2n,
        DatasetVariant::CurPrevN2b,
        DatasetVariant::CurPrev,
        DatasetVariant::CurOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetVariant::CurOnly => "cur_only",
            DatasetVariant::CurPrev => "cur_prev",
            DatasetVariant::CurPrevAtc => "cur_prev_atc",
            DatasetVariant::CurPrevClick => "cur_prev_click",
            DatasetVariant::CurPrevB2n => "cur_prev_b2n",
            DatasetVariant::CurPrevN2b => "cur_prev_n2b",
        }
    }

    /// Row label in the ablation table.
    pub fn description(self) -> &'static str {
        match self {
            DatasetVariant::CurOnly => "current query",
            DatasetVariant::CurPrev => "current query, previous query",
            DatasetVariant::CurPrevAtc => "current query, previous query, previous ATCed item attribs",
            DatasetVariant::CurPrevClick => "current query, previous query, previous Clicked item attribs",
            DatasetVariant::CurPrevB2n => "current query, previous query: only broad to narrow transitions",
            DatasetVariant::CurPrevN2b => "current query, previous query: only narrow to broad transitions",
        }
    }

    /// Context configuration this variant renders with.
    pub fn context_config(self) -> ContextConfig {
        let (engagement_kinds, transition_filter) = match self {
            DatasetVariant::CurOnly | DatasetVariant::CurPrev => (EngagementKinds::None, TransitionFilter::All),
            DatasetVariant::CurPrevAtc => (EngagementKinds::Atc, TransitionFilter::All),
            DatasetVariant::CurPrevClick => (EngagementKinds::Click, TransitionFilter::All),
            DatasetVariant::CurPrevB2n => (EngagementKinds::None, TransitionFilter::BroadToNarrow),
            DatasetVariant::CurPrevN2b => (EngagementKinds::None, TransitionFilter::NarrowToBroad),
        };
        ContextConfig { engagement_kinds, max_desc_tokens: 0, transition_filter }
    }

    pub fn uses_context(self) -> bool {
        self != DatasetVariant::CurOnly
    }
}

impl fmt::Display for DatasetVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetVariant {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DatasetVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| DatasetError::UnknownVariant(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExampleMeta {
    pub session_id: String,
    pub query_seq: u64,
    pub transition: Transition,
    pub variant: DatasetVariant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrainingExample {
    #[serde(rename = "input")]
    pub input_text: String,
    pub label: String,
    pub meta: ExampleMeta,
}

/// Extracts the examples of `variant` from `sessions`, sorted by
/// `(session_id, query_seq, label)`.
pub fn extract_examples(sessions: &[Session], variant: DatasetVariant) -> Vec<TrainingExample> {
    let config = variant.context_config();
    let mut out = Vec::new();
    for session in sessions {
        let queries: Vec<_> = session.queries().collect();
        let outcomes = session.outcomes();
        for i in 1..queries.len() {
            let (prev, cur) = (queries[i - 1], queries[i]);
            let (prev_out, cur_out) = (&outcomes[i - 1], &outcomes[i]);
            if !cur_out.has_order() || prev_out.has_order() {
                continue;
            }
            let Ok(cur_tokens) = normalize(&cur.raw_query) else {
                continue;
            };
            let ctx = SessionContext::gated(
                &prev.raw_query,
                &prev_out.atc_items,
                &prev_out.clicked_items,
                &cur_tokens,
                &config,
            );
            if !config.transition_filter.admits(ctx.transition) {
                continue;
            }
            let rendered = if variant.uses_context() { ctx.clone() } else { SessionContext::empty() };
            let Ok(input_text) = render_context_text(&rendered, &cur.raw_query, &config) else {
                continue;
            };
            for label in &cur_out.ordered_pts {
                out.push(TrainingExample {
                    input_text: input_text.clone(),
                    label: label.clone(),
                    meta: ExampleMeta {
                        session_id: session.id.clone(),
                        query_seq: cur.seq,
                        transition: ctx.transition,
                        variant,
                    },
                });
            }
        }
    }
    out.sort_by(|a, b| {
        (&a.meta.session_id, a.meta.query_seq, &a.label).cmp(&(&b.meta.session_id, b.meta.query_seq, &b.label))
    });
    out
}

/// Session-level split: picks `round(n * test_fraction)` (at least 1, at most
/// `n - 1`) of the distinct session ids as the test side.
pub fn split_sessions<'a, I>(session_ids: I, seed: u64, test_fraction: f64) -> Result<BTreeSet<String>, DatasetError>
where
    I: IntoIterator<Item = &'a str>,
{
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DatasetError::BadFraction(test_fraction));
    }
    let ids: BTreeSet<&str> = session_ids.into_iter().collect();
    let n = ids.len();
    if n < 2 {
        return Err(DatasetError::TooFewSessions(n));
    }
    let mut ids: Vec<&str> = ids.into_iter().collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    Ok(ids[..n_test].iter().map(|s| s.to_string()).collect())
}

/// Returns `(train, test)` with every session entirely on one side.
pub fn split_dataset(
    examples: &[TrainingExample],
    seed: u64,
    test_fraction: f64,
) -> Result<(Vec<TrainingExample>, Vec<TrainingExample>), DatasetError> {
    let test_ids = split_sessions(examples.iter().map(|e| e.meta.session_id.as_str()), seed, test_fraction)?;
    Ok(partition_by_sessions(examples, &test_ids))
}

pub fn partition_by_sessions(
    examples: &[TrainingExample],
    test_ids: &BTreeSet<String>,
) -> (Vec<TrainingExample>, Vec<TrainingExample>) {
    examples.iter().cloned().partition(|e| !test_ids.contains(&e.meta.session_id))
}

pub fn write_dataset<W: Write>(writer: W, examples: &[TrainingExample]) -> Result<(), DatasetError> {
    let mut w = BufWriter::new(writer);
    for ex in examples {
        serde_json::to_writer(&mut w, ex).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset<R: BufRead>(reader: R) -> Result<Vec<TrainingExample>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ex: TrainingExample =
            serde_json::from_str(&line).map_err(|e| DatasetError::Malformed { line: i + 1, message: e.to_string() })?;
        if ex.label.is_empty() || !ex.input_text.split_whitespace().any(|t| t == TAG_CUR) {
            return Err(DatasetError::Malformed {
                line: i + 1,
                message: "example needs a non-empty label and a [CUR] segment".into(),
            });
        }
        out.push(ex);
    }
    Ok(out)
}

pub fn write_dataset_file(path: &Path, examples: &[TrainingExample]) -> Result<(), DatasetError> {
    write_dataset(File::create(path)?, examples)
}

pub fn read_dataset_file(path: &Path) -> Result<Vec<TrainingExample>, DatasetError> {
    read_dataset(BufReader::new(File::open(path)?))
}
