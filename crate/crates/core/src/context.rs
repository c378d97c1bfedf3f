//! Query normalization, the token-match gate between consecutive queries,
//! broad/narrow transition labels and rendering of the field-tagged context
//! text that the embedder consumes.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::session::{ItemAttributes, Session};

pub const TAG_PREV: &str = "[PREV]";
pub const TAG_ATC: &str = "[ATC]";
pub const TAG_CLICK: &str = "[CLK]";
pub const TAG_CUR: &str = "[CUR]";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContextError {
    #[error("query is empty after normalization: {0:?}")]
    EmptyQuery(String),
    #[error("no query with seq {0} in session")]
    UnknownQuery(u64),
    #[error("unknown {what} value {value:?}")]
    BadValue { what: &'static str, value: String },
}

/// Normalized query tokens in issue order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSet {
    tokens: Vec<String>,
}

impl TokenSet {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn set(&self) -> BTreeSet<&str> {
        self.tokens.iter().map(String::as_str).collect()
    }

    /// Number of distinct tokens.
    pub fn distinct_len(&self) -> usize {
        self.set().len()
    }

    pub fn joined(&self) -> String {
        self.tokens.join(" ")
    }
}

impl fmt::Display for TokenSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.joined())
    }
}

/// Splits on whitespace, lowercases, removes `[`/`]` and trims
/// non-alphanumerics from both ends of every token. Empty tokens are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let lowered: String = raw.to_lowercase().chars().filter(|c| *c != '[' && *c != ']').collect();
            let trimmed = lowered.trim_matches(|c: char| !c.is_alphanumeric());
            (!trimmed.is_empty()).then(|| trimmed.to_string())
        })
        .collect()
}

pub fn normalize(raw_query: &str) -> Result<TokenSet, ContextError> {
    let tokens = tokenize(raw_query);
    if tokens.is_empty() {
        return Err(ContextError::EmptyQuery(raw_query.to_string()));
    }
    Ok(TokenSet { tokens })
}

/// The gate: do the two queries share at least one token?
pub fn token_match(prev: &TokenSet, cur: &TokenSet) -> bool {
    let cur = cur.set();
    prev.tokens.iter().any(|t| cur.contains(t.as_str()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transition {
    Identical,
    BroadToNarrow,
    NarrowToBroad,
    Lateral,
    Unrelated,
}

impl Transition {
    pub fn as_str(self) -> &'static str {
        match self {
            Transition::Identical => "identical",
            Transition::BroadToNarrow => "broad_to_narrow",
            Transition::NarrowToBroad => "narrow_to_broad",
            Transition::Lateral => "lateral",
            Transition::Unrelated => "unrelated",
        }
    }
}

/// Broad vs narrow is decided by distinct token count: more tokens is narrower.
pub fn classify_transition(prev: &TokenSet, cur: &TokenSet) -> Transition {
    if !token_match(prev, cur) {
        return Transition::Unrelated;
    }
    let (p, c) = (prev.set(), cur.set());
    if p == c {
        return Transition::Identical;
    }
    match c.len().cmp(&p.len()) {
        std::cmp::Ordering::Greater => Transition::BroadToNarrow,
        std::cmp::Ordering::Less => Transition::NarrowToBroad,
        std::cmp::Ordering::Equal => Transition::Lateral,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngagementKinds {
    #[default]
    None,
    Atc,
    Click,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionFilter {
    #[default]
    All,
    BroadToNarrow,
    NarrowToBroad,
}

impl TransitionFilter {
    pub fn admits(self, t: Transition) -> bool {
        match self {
            TransitionFilter::All => t != Transition::Unrelated,
            TransitionFilter::BroadToNarrow => t == Transition::BroadToNarrow,
            TransitionFilter::NarrowToBroad => t == Transition::NarrowToBroad,
        }
    }
}

impl FromStr for EngagementKinds {
    type Err = ContextError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(EngagementKinds::None),
            "atc" => Ok(EngagementKinds::Atc),
            "click" => Ok(EngagementKinds::Click),
            _ => Err(ContextError::BadValue { what: "engagement_kinds", value: s.into() }),
        }
    }
}

impl FromStr for TransitionFilter {
    type Err = ContextError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(TransitionFilter::All),
            "broad_to_narrow" => Ok(TransitionFilter::BroadToNarrow),
            "narrow_to_broad" => Ok(TransitionFilter::NarrowToBroad),
            _ => Err(ContextError::BadValue { what: "transition_filter", value: s.into() }),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct ContextConfig {
    pub engagement_kinds: EngagementKinds,
    /// Description tokens appended per item; 0 leaves descriptions out.
    pub max_desc_tokens: usize,
    pub transition_filter: TransitionFilter,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrevQuery {
    pub raw: String,
    pub tokens: TokenSet,
}

/// Gated session context for one query. An empty context (no previous
/// query, no items, `Unrelated`) means query-only mode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionContext {
    pub prev_query: Option<PrevQuery>,
    pub prev_atc_items: Vec<ItemAttributes>,
    pub prev_clicked_items: Vec<ItemAttributes>,
    pub transition: Transition,
}

impl Default for SessionContext {
    fn default() -> Self {
        SessionContext::empty()
    }
}

impl SessionContext {
    pub fn empty() -> Self {
        SessionContext {
            prev_query: None,
            prev_atc_items: Vec::new(),
            prev_clicked_items: Vec::new(),
            transition: Transition::Unrelated,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.prev_query.is_none()
    }

    /// Applies the gate to a previous query and its engagements.
    pub fn gated(
        prev_raw: &str,
        atc: &[ItemAttributes],
        clicked: &[ItemAttributes],
        current: &TokenSet,
        config: &ContextConfig,
    ) -> Self {
        let Ok(prev) = normalize(prev_raw) else {
            return SessionContext::empty();
        };
        let transition = classify_transition(&prev, current);
        if transition == Transition::Unrelated {
            return SessionContext::empty();
        }
        let (prev_atc_items, prev_clicked_items) = match config.engagement_kinds {
            EngagementKinds::None => (Vec::new(), Vec::new()),
            EngagementKinds::Atc => (atc.to_vec(), Vec::new()),
            EngagementKinds::Click => (Vec::new(), clicked.to_vec()),
        };
        SessionContext {
            prev_query: Some(PrevQuery { raw: prev_raw.to_string(), tokens: prev }),
            prev_atc_items,
            prev_clicked_items,
            transition,
        }
    }
}

/// Context for the query `current_query_seq`, built from the nearest earlier
/// query of the session when it passes the token-match gate.
pub fn build_context(
    session: &Session,
    current_query_seq: u64,
    config: &ContextConfig,
) -> Result<SessionContext, ContextError> {
    let current = session.query(current_query_seq).ok_or(ContextError::UnknownQuery(current_query_seq))?;
    let cur_tokens = normalize(&current.raw_query)?;
    let Some(prev) = session.previous_query(current_query_seq) else {
        return Ok(SessionContext::empty());
    };
    let outcome = session.outcome_for(prev.seq);
    Ok(SessionContext::gated(&prev.raw_query, &outcome.atc_items, &outcome.clicked_items, &cur_tokens, config))
}

fn push_item(out: &mut Vec<String>, tag: &str, item: &ItemAttributes, max_desc_tokens: usize) {
    out.push(tag.to_string());
    out.extend(tokenize(&item.title));
    for field in [&item.brand, &item.gender, &item.size].into_iter().flatten() {
        out.extend(tokenize(field));
    }
    if max_desc_tokens > 0 {
        if let Some(desc) = &item.description {
            out.extend(tokenize(desc).into_iter().take(max_desc_tokens));
        }
    }
}

/// Context segments without the `[CUR]` part: the cached session-state text.
pub fn render_state_text(ctx: &SessionContext, config: &ContextConfig) -> String {
    let mut parts = Vec::new();
    render_state_into(&mut parts, ctx, config);
    parts.join(" ")
}

fn render_state_into(parts: &mut Vec<String>, ctx: &SessionContext, config: &ContextConfig) {
    if let Some(prev) = &ctx.prev_query {
        parts.push(TAG_PREV.to_string());
        parts.extend(prev.tokens.tokens().iter().cloned());
    }
    for item in &ctx.prev_atc_items {
        push_item(parts, TAG_ATC, item, config.max_desc_tokens);
    }
    for item in &ctx.prev_clicked_items {
        push_item(parts, TAG_CLICK, item, config.max_desc_tokens);
    }
}

/// `[PREV] .. [ATC] .. [CLK] .. [CUR] ..`, omitting absent segments.
pub fn render_context_text(
    ctx: &SessionContext,
    current_query: &str,
    config: &ContextConfig,
) -> Result<String, ContextError> {
    let cur = normalize(current_query)?;
    let mut parts = Vec::new();
    render_state_into(&mut parts, ctx, config);
    parts.push(TAG_CUR.to_string());
    parts.extend(cur.tokens().iter().cloned());
    Ok(parts.join(" "))
}
