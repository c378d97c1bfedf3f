//! Sessions, query and engagement events, and ingestion of raw JSONL event logs.
//!
//! A session is the time-bounded run of one user's queries together with the
//! clicks, add-to-carts and orders placed on the results of those queries.
//! Ingestion groups records by `session_id`, orders them by `(ts, seq)` and
//! splits a session wherever two consecutive events are further apart than
//! the configured gap.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default inactivity gap that closes a session (30 minutes).
pub const DEFAULT_SESSION_GAP_MS: u64 = 30 * 60 * 1000;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("failed to read event stream: {0}")]
    Io(#[from] std::io::Error),
    #[error("session gap must be positive")]
    ZeroGap,
}

/// Attributes of an engaged item. Only `title`, `brand`, `gender`, `size`
/// and (optionally) `description` are ever rendered into context text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ItemAttributes {
    pub item_id: String,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub brand: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gender: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub product_type: String,
}

impl ItemAttributes {
    pub fn is_valid(&self) -> bool {
        !self.title.trim().is_empty() && !self.product_type.trim().is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryEvent {
    pub session_id: String,
    pub seq: u64,
    pub timestamp: i64,
    pub raw_query: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngagementKind {
    Click,
    Atc,
    Order,
}

impl EngagementKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EngagementKind::Click => "click",
            EngagementKind::Atc => "atc",
            EngagementKind::Order => "order",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngagementEvent {
    pub session_id: String,
    pub seq: u64,
    pub timestamp: i64,
    pub query_seq: u64,
    pub kind: EngagementKind,
    pub item: ItemAttributes,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
pub enum Event {
    Query(QueryEvent),
    Engagement(EngagementEvent),
}

impl Event {
    pub fn session_id(&self) -> &str {
        match self {
            Event::Query(q) => &q.session_id,
            Event::Engagement(e) => &e.session_id,
        }
    }

    pub fn seq(&self) -> u64 {
        match self {
            Event::Query(q) => q.seq,
            Event::Engagement(e) => e.seq,
        }
    }

    pub fn timestamp(&self) -> i64 {
        match self {
            Event::Query(q) => q.timestamp,
            Event::Engagement(e) => e.timestamp,
        }
    }

    fn set_session_id(&mut self, id: &str) {
        match self {
            Event::Query(q) => q.session_id = id.to_string(),
            Event::Engagement(e) => e.session_id = id.to_string(),
        }
    }
}

/// A reconstructed session. `geo`, `device` and `facets` are carried through
/// untouched and never embedded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub events: Vec<Event>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geo: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub facets: Option<Vec<String>>,
}

impl Session {
    pub fn new(id: impl Into<String>) -> Self {
        Session { id: id.into(), events: Vec::new(), geo: None, device: None, facets: None }
    }

    pub fn queries(&self) -> impl Iterator<Item = &QueryEvent> {
        self.events.iter().filter_map(|e| match e {
            Event::Query(q) => Some(q),
            Event::Engagement(_) => None,
        })
    }

    pub fn engagements(&self) -> impl Iterator<Item = &EngagementEvent> {
        self.events.iter().filter_map(|e| match e {
            Event::Engagement(e) => Some(e),
            Event::Query(_) => None,
        })
    }

    pub fn query(&self, seq: u64) -> Option<&QueryEvent> {
        self.queries().find(|q| q.seq == seq)
    }

    /// Nearest query issued before the query with sequence number `seq`.
    pub fn previous_query(&self, seq: u64) -> Option<&QueryEvent> {
        let mut prev = None;
        for q in self.queries() {
            if q.seq == seq {
                return prev;
            }
            prev = Some(q);
        }
        None
    }

    /// Per-query engagement rollup; see [`query_outcomes`].
    pub fn outcomes(&self) -> Vec<QueryOutcome> {
        query_outcomes(self)
    }

    pub fn outcome_for(&self, query_seq: u64) -> QueryOutcome {
        outcome_of(self, query_seq)
    }
}

/// What happened after a single query: ordered product types plus the
/// engaged items, deduplicated by `item_id` with precedence order > atc > click.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub query_seq: u64,
    pub ordered_pts: BTreeSet<String>,
    pub ordered_items: Vec<ItemAttributes>,
    pub atc_items: Vec<ItemAttributes>,
    pub clicked_items: Vec<ItemAttributes>,
}

impl QueryOutcome {
    pub fn has_order(&self) -> bool {
        !self.ordered_items.is_empty()
    }
}

pub fn query_outcomes(session: &Session) -> Vec<QueryOutcome> {
    session.queries().map(|q| outcome_of(session, q.seq)).collect()
}

fn outcome_of(session: &Session, query_seq: u64) -> QueryOutcome {
    // Strongest engagement per item, remembering first-seen order.
    let mut strongest: Vec<(EngagementKind, &ItemAttributes)> = Vec::new();
    for e in session.engagements().filter(|e| e.query_seq == query_seq) {
        match strongest.iter_mut().find(|(_, it)| it.item_id == e.item.item_id) {
            Some(slot) => {
                if e.kind > slot.0 {
                    *slot = (e.kind, &e.item);
                }
            }
            None => strongest.push((e.kind, &e.item)),
        }
    }

    let mut out = QueryOutcome { query_seq, ..QueryOutcome::default() };
    for (kind, item) in strongest {
        match kind {
            EngagementKind::Order => {
                out.ordered_pts.insert(item.product_type.clone());
                out.ordered_items.push(item.clone());
            }
            EngagementKind::Atc => out.atc_items.push(item.clone()),
            EngagementKind::Click => out.clicked_items.push(item.clone()),
        }
    }
    out
}

/// One line of the input event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub session_id: String,
    pub seq: u64,
    pub ts: i64,
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_seq: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item: Option<ItemAttributes>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geo: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub facets: Option<Vec<String>>,
}

impl EventRecord {
    /// Structural validation of a single record, independent of its session.
    pub fn to_event(&self) -> Option<Event> {
        match self.kind.as_str() {
            "query" => {
                let raw = self.query.as_ref()?;
                if raw.trim().is_empty() {
                    return None;
                }
                Some(Event::Query(QueryEvent {
                    session_id: self.session_id.clone(),
                    seq: self.seq,
                    timestamp: self.ts,
                    raw_query: raw.clone(),
                }))
            }
            other => {
                let kind = match other {
                    "click" => EngagementKind::Click,
                    "atc" => EngagementKind::Atc,
                    "order" => EngagementKind::Order,
                    _ => return None,
                };
                let item = self.item.as_ref().filter(|i| i.is_valid())?;
                Some(Event::Engagement(EngagementEvent {
                    session_id: self.session_id.clone(),
                    seq: self.seq,
                    timestamp: self.ts,
                    query_seq: self.query_seq?,
                    kind,
                    item: item.clone(),
                }))
            }
        }
    }

    pub fn from_event(event: &Event) -> Self {
        match event {
            Event::Query(q) => EventRecord {
                session_id: q.session_id.clone(),
                seq: q.seq,
                ts: q.timestamp,
                kind: "query".into(),
                query: Some(q.raw_query.clone()),
                query_seq: None,
                item: None,
                geo: None,
                device: None,
                facets: None,
            },
            Event::Engagement(e) => EventRecord {
                session_id: e.session_id.clone(),
                seq: e.seq,
                ts: e.timestamp,
                kind: e.kind.as_str().into(),
                query: None,
                query_seq: Some(e.query_seq),
                item: Some(e.item.clone()),
                geo: None,
                device: None,
                facets: None,
            },
        }
    }
}

/// Flattens sessions back into event records (the synthetic corpus format).
/// Split sessions keep their suffixed ids.
pub fn session_records(session: &Session) -> Vec<EventRecord> {
    let mut out: Vec<EventRecord> = session.events.iter().map(EventRecord::from_event).collect();
    if let Some(first) = out.first_mut() {
        first.geo = session.geo.clone();
        first.device = session.device.clone();
        first.facets = session.facets.clone();
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestStats {
    pub records: usize,
    pub malformed: usize,
    pub sessions: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub sessions: Vec<Session>,
    pub stats: IngestStats,
}

/// Reads JSONL event records and reconstructs sessions.
///
/// Malformed lines are skipped and counted; only a failing reader is fatal.
pub fn ingest_events<R: BufRead>(reader: R, session_gap_ms: u64) -> Result<Ingested, IngestError> {
    if session_gap_ms == 0 {
        return Err(IngestError::ZeroGap);
    }
    let mut records = Vec::new();
    let mut malformed = 0usize;
    let mut total = 0usize;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        match serde_json::from_str::<EventRecord>(&line) {
            Ok(r) => records.push(r),
            Err(_) => malformed += 1,
        }
    }
    let (sessions, dropped) = build_sessions(records, session_gap_ms);
    let stats = IngestStats { records: total, malformed: malformed + dropped, sessions: sessions.len() };
    Ok(Ingested { sessions, stats })
}

/// Groups already-parsed records into sessions. Returns the sessions (sorted
/// by id) and the number of records rejected as malformed.
pub fn build_sessions(records: Vec<EventRecord>, session_gap_ms: u64) -> (Vec<Session>, usize) {
    struct Meta {
        geo: Option<String>,
        device: Option<String>,
        facets: Option<Vec<String>>,
    }

    let mut dropped = 0usize;
    let mut groups: BTreeMap<String, Vec<(Event, String)>> = BTreeMap::new();
    let mut metas: BTreeMap<String, Meta> = BTreeMap::new();
    for r in records {
        match r.to_event() {
            Some(ev) => {
                // Canonical encoding breaks ties between records sharing (ts, seq).
                let key = serde_json::to_string(&r).unwrap_or_default();
                let meta = metas.entry(r.session_id.clone()).or_insert(Meta { geo: None, device: None, facets: None });
                // Pass-through fields: smallest value wins so the result is order independent.
                merge_min(&mut meta.geo, r.geo);
                merge_min(&mut meta.device, r.device);
                merge_min(&mut meta.facets, r.facets);
                groups.entry(r.session_id).or_default().push((ev, key));
            }
            None => dropped += 1,
        }
    }

    let mut sessions = Vec::new();
    for (id, mut events) in groups {
        events.sort_by(|(a, ka), (b, kb)| (a.timestamp(), a.seq(), ka).cmp(&(b.timestamp(), b.seq(), kb)));

        // Enforce strictly increasing seq.
        let mut ordered: Vec<Event> = Vec::with_capacity(events.len());
        for (ev, _) in events {
            match ordered.last() {
                Some(last) if ev.seq() <= last.seq() => dropped += 1,
                _ => ordered.push(ev),
            }
        }

        let mut segments: Vec<Vec<Event>> = Vec::new();
        for ev in ordered {
            let split = match segments.last().and_then(|s| s.last()) {
                Some(last) => ev.timestamp().saturating_sub(last.timestamp()) > session_gap_ms as i64,
                None => true,
            };
            if split {
                segments.push(Vec::new());
            }
            segments.last_mut().expect("segment pushed").push(ev);
        }

        let n_segments = segments.len();
        let meta = metas.remove(&id);
        for (i, segment) in segments.into_iter().enumerate() {
            let sid = if n_segments > 1 { format!("{id}#{}", i + 1) } else { id.clone() };
            let mut seen_queries = HashSet::new();
            let mut session = Session::new(sid.clone());
            for mut ev in segment {
                let keep = match &ev {
                    Event::Query(q) => {
                        seen_queries.insert(q.seq);
                        true
                    }
                    Event::Engagement(e) => seen_queries.contains(&e.query_seq),
                };
                if keep {
                    ev.set_session_id(&sid);
                    session.events.push(ev);
                } else {
                    dropped += 1;
                }
            }
            if session.events.is_empty() {
                continue;
            }
            if let Some(m) = &meta {
                session.geo = m.geo.clone();
                session.device = m.device.clone();
                session.facets = m.facets.clone();
            }
            sessions.push(session);
        }
    }
    sessions.sort_by(|a, b| a.id.cmp(&b.id));
    (sessions, dropped)
}

fn merge_min<T: Ord>(slot: &mut Option<T>, value: Option<T>) {
    if let Some(v) = value {
        match slot {
            Some(cur) if *cur <= v => {}
            _ => *slot = Some(v),
        }
    }
}
