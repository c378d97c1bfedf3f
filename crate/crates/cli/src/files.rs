use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use session_intent::session::{ingest_events, IngestStats, Session, DEFAULT_SESSION_GAP_MS};

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

pub fn write_sessions(path: &Path, sessions: &[Session]) -> Result<()> {
    let mut w = create(path)?;
    for s in sessions {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a session JSONL file, or an event JSONL file which is then
/// sessionized with the default gap. The first non-empty line decides.
pub fn load_sessions(path: &Path) -> Result<(Vec<Session>, Option<IngestStats>)> {
    let open = || -> Result<BufReader<File>> {
        Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
    };
    let first = open()?.lines().map_while(|l| l.ok()).find(|l| !l.trim().is_empty());
    let Some(first) = first else {
        return Ok((Vec::new(), None));
    };
    let is_session = serde_json::from_str::<serde_json::Value>(&first)
        .map(|v| v.get("events").is_some_and(|e| e.is_array()))
        .unwrap_or(false);
    if !is_session {
        let ingested = ingest_events(open()?, DEFAULT_SESSION_GAP_MS)?;
        return Ok((ingested.sessions, Some(ingested.stats)));
    }
    let mut sessions = Vec::new();
    for (i, line) in open()?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: Session = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}: not a session record", path.display(), i + 1))?;
        sessions.push(s);
    }
    Ok((sessions, None))
}
