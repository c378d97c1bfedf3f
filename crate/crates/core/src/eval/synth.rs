//! Seeded generator of synthetic search sessions with a known funnel.
//!
//! Every broad term is shared by `ambiguity` product types; every product
//! type owns one modifier word, so a narrow query (`broad modifier`)
//! identifies it. A session picks a target product type, issues the broad
//! query and then follows one of a few paths:
//!
//! * order straight away on the broad query;
//! * refine to the narrow query (broad to narrow) and maybe order there;
//! * after an unconverted narrow query, either broaden back to the broad
//!   query (narrow to broad, ordering the original target only with
//!   probability `broaden_fidelity`) or move sideways to a sibling product
//!   type (lateral);
//! * without a refinement, repeat the broad query (identical) and maybe order.
//!
//! With probability `noise` a session starts with an unrelated broad query
//! from a different broad term, so its first pair fails the token gate.
//! ATCed items carry the target product type; clicked items are drawn from
//! any product type behind the broad term.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::session::{EngagementEvent, EngagementKind, Event, ItemAttributes, QueryEvent, Session};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_sessions: usize,
    pub n_product_types: usize,
    pub n_broad_terms: usize,
    /// Product types per broad term.
    pub ambiguity: usize,
    pub p_narrow_followup: f64,
    pub p_order_after_narrow: f64,
    pub p_order_after_broad: f64,
    pub p_atc: f64,
    pub p_click: f64,
    pub noise: f64,
    /// After an unconverted narrow query: chance of going back to the broad query.
    pub p_broaden: f64,
    /// After an unconverted narrow query that is not broadened: chance of a sibling narrow query.
    pub p_lateral: f64,
    /// Chance that a broadened query orders the original target.
    pub broaden_fidelity: f64,
    pub p_order_after_broaden: f64,
    /// Without a refinement: chance of re-issuing the broad query.
    pub p_repeat: f64,
    /// Item titles contain the product type's modifier and broad term.
    pub pt_bearing_titles: bool,
    pub start_ts: i64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 42,
            n_sessions: 50_000,
            n_product_types: 200,
            n_broad_terms: 40,
            ambiguity: 5,
            p_narrow_followup: 0.7,
            p_order_after_narrow: 0.6,
            p_order_after_broad: 0.3,
            p_atc: 0.4,
            p_click: 0.5,
            noise: 0.1,
            p_broaden: 0.5,
            p_lateral: 0.3,
            broaden_fidelity: 0.5,
            p_order_after_broaden: 0.8,
            p_repeat: 0.6,
            pt_bearing_titles: true,
            start_ts: 1_693_526_400_000,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |msg: String| Err(EvalError::BadSynthConfig(msg));
        let probs = [
            ("p_narrow_followup", self.p_narrow_followup),
            ("p_order_after_narrow", self.p_order_after_narrow),
            ("p_order_after_broad", self.p_order_after_broad),
            ("p_atc", self.p_atc),
            ("p_click", self.p_click),
            ("noise", self.noise),
            ("p_broaden", self.p_broaden),
            ("p_lateral", self.p_lateral),
            ("broaden_fidelity", self.broaden_fidelity),
            ("p_order_after_broaden", self.p_order_after_broaden),
            ("p_repeat", self.p_repeat),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is not a probability"));
            }
        }
        if self.ambiguity < 2 {
            return bad("ambiguity must be at least 2".into());
        }
        if self.n_broad_terms < 2 {
            return bad("need at least 2 broad terms".into());
        }
        if self.n_product_types != self.n_broad_terms * self.ambiguity {
            return bad(format!(
                "n_product_types ({}) must equal n_broad_terms * ambiguity ({})",
                self.n_product_types,
                self.n_broad_terms * self.ambiguity
            ));
        }
        Ok(())
    }
}

const ONSETS: &[&str] =
    &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr", "gr", "kl", "pl", "st", "tr"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];
const N_BRANDS: usize = 24;
const N_FILLERS: usize = 16;

struct Vocabulary {
    broad: Vec<String>,
    modifiers: Vec<String>,
    brands: Vec<String>,
    fillers: Vec<String>,
}

impl Vocabulary {
    fn generate(rng: &mut ChaCha8Rng, n_broad: usize, n_pt: usize) -> Self {
        let mut used = BTreeSet::new();
        let mut words = |n: usize, syllables: usize, rng: &mut ChaCha8Rng| -> Vec<String> {
            let mut out = Vec::with_capacity(n);
            while out.len() < n {
                let w: String = (0..syllables)
                    .map(|_| format!("{}{}", ONSETS.choose(rng).unwrap(), VOWELS.choose(rng).unwrap()))
                    .collect();
                if used.insert(w.clone()) {
                    out.push(w);
                }
            }
            out
        };
        let broad = words(n_broad, 2, rng);
        let modifiers = words(n_pt, 3, rng);
        let brands = words(N_BRANDS, 2, rng);
        let fillers = words(N_FILLERS, 3, rng);
        Vocabulary { broad, modifiers, brands, fillers }
    }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

struct Catalog {
    vocab: Vocabulary,
    ambiguity: usize,
    labels: Vec<String>,
    pt_bearing_titles: bool,
}

impl Catalog {
    fn broad_of(&self, pt: usize) -> usize {
        pt / self.ambiguity
    }

    fn broad_query(&self, pt: usize) -> String {
        self.vocab.broad[self.broad_of(pt)].clone()
    }

    fn narrow_query(&self, pt: usize) -> String {
        format!("{} {}", self.vocab.broad[self.broad_of(pt)], self.vocab.modifiers[pt])
    }

    fn sibling(&self, pt: usize, rng: &mut ChaCha8Rng) -> usize {
        let base = self.broad_of(pt) * self.ambiguity;
        base + rng.random_range(0..self.ambiguity)
    }

    fn item(&self, pt: usize, rng: &mut ChaCha8Rng) -> ItemAttributes {
        let brand = self.vocab.brands.choose(rng).unwrap();
        let filler = self.vocab.fillers.choose(rng).unwrap();
        let title = if self.pt_bearing_titles {
            format!(
                "{} {} {} {}",
                capitalize(brand),
                capitalize(&self.vocab.modifiers[pt]),
                capitalize(&self.vocab.broad[self.broad_of(pt)]),
                filler
            )
        } else {
            format!("{} {} {}", capitalize(brand), filler, self.vocab.fillers.choose(rng).unwrap())
        };
        ItemAttributes {
            item_id: format!("it-{pt:04}-{:02}", rng.random_range(0..50u32)),
            title,
            brand: Some(capitalize(brand)),
            gender: None,
            size: None,
            description: None,
            product_type: self.labels[pt].clone(),
        }
    }
}

struct SessionWriter {
    session: Session,
    seq: u64,
    ts: i64,
}

impl SessionWriter {
    fn new(id: String, ts: i64) -> Self {
        SessionWriter { session: Session::new(id), seq: 0, ts }
    }

    fn tick(&mut self, rng: &mut ChaCha8Rng) {
        self.seq += 1;
        self.ts += rng.random_range(5_000..60_000i64);
    }

    fn query(&mut self, q: String, rng: &mut ChaCha8Rng) -> u64 {
        self.tick(rng);
        self.session.events.push(Event::Query(QueryEvent {
            session_id: self.session.id.clone(),
            seq: self.seq,
            timestamp: self.ts,
            raw_query: q,
        }));
        self.seq
    }

    fn engage(&mut self, query_seq: u64, kind: EngagementKind, item: ItemAttributes, rng: &mut ChaCha8Rng) {
        self.tick(rng);
        self.session.events.push(Event::Engagement(EngagementEvent {
            session_id: self.session.id.clone(),
            seq: self.seq,
            timestamp: self.ts,
            query_seq,
            kind,
            item,
        }));
    }
}

/// Generates `config.n_sessions` sessions; identical configs give identical output.
pub fn generate_synthetic_corpus(config: &SynthConfig) -> Result<Vec<Session>, EvalError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let vocab = Vocabulary::generate(&mut rng, config.n_broad_terms, config.n_product_types);
    let labels = (0..config.n_product_types)
        .map(|pt| format!("{} {}", capitalize(&vocab.modifiers[pt]), capitalize(&vocab.broad[pt / config.ambiguity])))
        .collect();
    let catalog = Catalog { vocab, ambiguity: config.ambiguity, labels, pt_bearing_titles: config.pt_bearing_titles };

    let width = config.n_sessions.max(1).to_string().len();
    let mut sessions = Vec::with_capacity(config.n_sessions);
    for i in 0..config.n_sessions {
        let start = config.start_ts + i as i64 * 3_600_000;
        let mut w = SessionWriter::new(format!("syn-{i:0width$}"), start);
        generate_session(&mut w, &catalog, config, &mut rng);
        sessions.push(w.session);
    }
    Ok(sessions)
}

fn generate_session(w: &mut SessionWriter, cat: &Catalog, cfg: &SynthConfig, rng: &mut ChaCha8Rng) {
    let n_pt = cfg.n_product_types;
    let target = rng.random_range(0..n_pt);

    // Browse `query` looking for `pt`: optional click on any sibling, optional ATC of `pt`.
    let browse = |w: &mut SessionWriter, rng: &mut ChaCha8Rng, query_seq: u64, pt: usize| {
        if rng.random_bool(cfg.p_click) {
            let clicked = cat.sibling(pt, rng);
            let item = cat.item(clicked, rng);
            w.engage(query_seq, EngagementKind::Click, item, rng);
        }
        if rng.random_bool(cfg.p_atc) {
            let item = cat.item(pt, rng);
            w.engage(query_seq, EngagementKind::Atc, item, rng);
        }
    };
    let order = |w: &mut SessionWriter, rng: &mut ChaCha8Rng, query_seq: u64, pt: usize| {
        let item = cat.item(pt, rng);
        w.engage(query_seq, EngagementKind::Order, item, rng);
    };

    if rng.random_bool(cfg.noise) {
        // Intent switch: the opening query belongs to another broad term.
        let offset = rng.random_range(1..cfg.n_broad_terms);
        let other_broad = (cat.broad_of(target) + offset) % cfg.n_broad_terms;
        let other = other_broad * cfg.ambiguity + rng.random_range(0..cfg.ambiguity);
        let q = w.query(cat.broad_query(other), rng);
        browse(w, rng, q, other);
        let q = if rng.random_bool(0.5) { cat.narrow_query(target) } else { cat.broad_query(target) };
        let q = w.query(q, rng);
        browse(w, rng, q, target);
        if rng.random_bool(cfg.p_order_after_narrow) {
            order(w, rng, q, target);
        }
        return;
    }

    let q1 = w.query(cat.broad_query(target), rng);
    browse(w, rng, q1, target);
    if rng.random_bool(cfg.p_order_after_broad) {
        order(w, rng, q1, target);
        return;
    }

    if rng.random_bool(cfg.p_narrow_followup) {
        let q2 = w.query(cat.narrow_query(target), rng);
        browse(w, rng, q2, target);
        if rng.random_bool(cfg.p_order_after_narrow) {
            order(w, rng, q2, target);
            return;
        }
        if rng.random_bool(cfg.p_broaden) {
            let q3 = w.query(cat.broad_query(target), rng);
            if rng.random_bool(cfg.p_order_after_broaden) {
                let pt = if rng.random_bool(cfg.broaden_fidelity) { target } else { cat.sibling(target, rng) };
                order(w, rng, q3, pt);
            }
        } else if rng.random_bool(cfg.p_lateral) {
            let mut other = cat.sibling(target, rng);
            if other == target {
                other = cat.broad_of(target) * cfg.ambiguity + (target + 1) % cfg.ambiguity;
            }
            let q3 = w.query(cat.narrow_query(other), rng);
            if rng.random_bool(cfg.p_order_after_narrow) {
                order(w, rng, q3, other);
            }
        }
    } else if rng.random_bool(cfg.p_repeat) {
        let q2 = w.query(cat.broad_query(target), rng);
        browse(w, rng, q2, target);
        if rng.random_bool(cfg.p_order_after_broad) {
            order(w, rng, q2, target);
        }
    }
}
