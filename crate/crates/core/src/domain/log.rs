//! Session log: one JSON object per line, one line per request.
//!
//! Field order: `session, t, rec_history, ad_history, context, rec_candidates,
//! ad_candidates, rec_list, ad_id, ad_slot, r_rs, r_as, revenue, terminal`.
//! `ad_id = -1, ad_slot = 0` encodes "no ad".

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdDecision, AdId, Context, ItemId};
use crate::error::{RamError, Result};
use crate::state::BrowsingHistory;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionLogRecord {
    pub session: u64,
    pub t: u32,
    pub rec_history: Vec<ItemId>,
    pub ad_history: Vec<AdId>,
    pub context: Context,
    pub rec_candidates: Vec<ItemId>,
    pub ad_candidates: Vec<AdId>,
    pub rec_list: Vec<ItemId>,
    pub ad_id: i64,
    pub ad_slot: usize,
    /// Dwell time in minutes.
    pub r_rs: f64,
    /// 1 if the user continued to the next list, 0 if they left.
    pub r_as: u8,
    pub revenue: f64,
    pub terminal: bool,
}

impl SessionLogRecord {
    pub fn ad_decision(&self, k: usize) -> Result<AdDecision> {
        AdDecision::from_log(self.ad_id, self.ad_slot, k)
    }

    pub fn history(&self, cap: usize) -> BrowsingHistory {
        BrowsingHistory::from_parts(&self.rec_history, &self.ad_history, cap)
    }
}

pub fn write_log(path: &Path, records: &[SessionLogRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| RamError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("log records always serialize");
        writeln!(w, "{line}").map_err(|e| RamError::io(path, e))?;
    }
    w.flush().map_err(|e| RamError::io(path, e))
}

pub fn read_log(path: &Path) -> Result<Vec<SessionLogRecord>> {
    let file = File::open(path).map_err(|e| RamError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| RamError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| RamError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn into_result(self) -> Result<Vec<String>> {
        if self.errors.is_empty() {
            Ok(self.warnings)
        } else {
            Err(RamError::Validation(self.errors))
        }
    }
}

/// Structural checks on a log: reward ranges, action encodings, session
/// ordering, terminal placement and the history chain between consecutive
/// requests (`history_cap` is the FIFO cap used when the log was produced).
pub fn validate_log(
    records: &[SessionLogRecord],
    k: usize,
    history_cap: usize,
) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let mut seen_sessions = HashSet::new();
    let mut i = 0;
    while i < records.len() {
        let session = records[i].session;
        if !seen_sessions.insert(session) {
            rep.errors
                .push(format!("record {i}: session {session} is not contiguous"));
        }
        let mut j = i;
        while j < records.len() && records[j].session == session {
            j += 1;
        }
        validate_session(&records[i..j], i, k, history_cap, &mut rep);
        i = j;
    }
    rep
}

fn validate_session(
    recs: &[SessionLogRecord],
    offset: usize,
    k: usize,
    cap: usize,
    rep: &mut ValidationReport,
) {
    let session = recs[0].session;
    for (n, r) in recs.iter().enumerate() {
        let at = offset + n;
        let mut err = |m: String| {
            rep.errors
                .push(format!("record {at} (session {session}, t {}): {m}", r.t))
        };
        if r.t as usize != n {
            err(format!("expected t = {n}"));
        }
        if r.r_as > 1 {
            err(format!("r_as must be 0 or 1, got {}", r.r_as));
        }
        if !(r.r_rs.is_finite() && r.r_rs >= 0.0) {
            err(format!(
                "dwell {} is not a finite non-negative value",
                r.r_rs
            ));
        }
        if !(r.revenue.is_finite() && r.revenue >= 0.0) {
            err(format!(
                "revenue {} is not a finite non-negative value",
                r.revenue
            ));
        }
        if let Err(e) = r.context.check() {
            err(e.to_string());
        }
        match r.ad_decision(k) {
            Ok(AdDecision::NoAd) => {
                if r.revenue != 0.0 {
                    err(format!("revenue {} recorded without an ad", r.revenue));
                }
            }
            Ok(AdDecision::Insert { ad, .. }) => {
                if !r.ad_candidates.contains(&ad) {
                    err(format!("inserted ad {} is not among the candidates", ad.0));
                }
            }
            Err(e) => err(e.to_string()),
        }
        if r.rec_list.len() != k {
            err(format!(
                "rec-list has {} items, expected {k}",
                r.rec_list.len()
            ));
        }
        let uniq: HashSet<_> = r.rec_list.iter().collect();
        if uniq.len() != r.rec_list.len() {
            err("rec-list contains duplicates".into());
        }
        if r.rec_list.iter().any(|id| !r.rec_candidates.contains(id)) {
            err("rec-list item outside the candidate pool".into());
        }
        let last = n + 1 == recs.len();
        if r.terminal && !last {
            err("terminal record is not the last of its session".into());
        }
        if r.r_as == 0 && !r.terminal {
            err("user left but the record is not terminal".into());
        }
        if !last {
            let next = &recs[n + 1];
            let expected = r
                .history(cap)
                .transition(&r.rec_list, r.ad_decision(k).ok().and_then(|d| d.ad()));
            if expected.rec_ids() != next.rec_history || expected.ad_ids() != next.ad_history {
                err("next record's history is not the transition of this one".into());
            }
        }
    }
    if !recs.last().map(|r| r.terminal).unwrap_or(true) {
        rep.warnings.push(format!(
            "session {session} has no terminal record (partial session)"
        ));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn record(session: u64, t: u32, terminal: bool) -> SessionLogRecord {
        let base = t * 6;
        SessionLogRecord {
            session,
            t,
            rec_history: (0..base).map(ItemId).collect(),
            ad_history: vec![],
            context: Context::new(1, 0, 1, (t % 4) as u8).unwrap(),
            rec_candidates: (base..base + 15).map(ItemId).collect(),
            ad_candidates: (0..5).map(AdId).collect(),
            rec_list: (base..base + 6).map(ItemId).collect(),
            ad_id: -1,
            ad_slot: 0,
            r_rs: 1.25 + t as f64,
            r_as: if terminal { 0 } else { 1 },
            revenue: 0.0,
            terminal,
        }
    }

    #[test]
    fn empty_file_reads_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("log.jsonl");
        std::fs::write(&p, "").unwrap();
        assert!(read_log(&p).unwrap().is_empty());
    }

    #[test]
    fn three_request_session_round_trips() {
        let recs = vec![record(7, 0, false), record(7, 1, false), record(7, 2, true)];
        let rep = validate_log(&recs, 6, 100);
        assert!(rep.is_ok(), "{:?}", rep.errors);
        assert!(rep.warnings.is_empty());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("log.jsonl");
        write_log(&p, &recs).unwrap();
        assert_eq!(read_log(&p).unwrap(), recs);
    }

    #[test]
    fn malformed_line_names_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("log.jsonl");
        let good = serde_json::to_string(&record(1, 0, true)).unwrap();
        std::fs::write(&p, format!("{good}\n{{not json\n")).unwrap();
        match read_log(&p) {
            Err(RamError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn partial_session_warns() {
        let recs = vec![record(1, 0, false), record(1, 1, false)];
        let rep = validate_log(&recs, 6, 100);
        assert!(rep.is_ok());
        assert_eq!(rep.warnings.len(), 1);
    }

    #[test]
    fn revenue_without_ad_is_an_error() {
        let mut r = record(1, 0, true);
        r.revenue = 0.3;
        assert!(!validate_log(&[r], 6, 100).is_ok());
    }

    #[test]
    fn broken_chain_is_an_error() {
        let mut recs = vec![record(1, 0, false), record(1, 1, true)];
        recs[1].rec_history.pop();
        assert!(!validate_log(&recs, 6, 100).is_ok());
    }

    #[test]
    fn early_terminal_is_an_error() {
        let recs = vec![record(1, 0, true), record(1, 1, true)];
        assert!(!validate_log(&recs, 6, 100).is_ok());
    }

    proptest! {
        #[test]
        fn arbitrary_records_round_trip(
            dwell in 0.0f64..1e3,
            rev in 0.0f64..10.0,
            ad in -1i64..40,
            slot in 0usize..8,
            session in 0u64..u64::MAX,
        ) {
            let mut r = record(session, 0, true);
            r.r_rs = dwell;
            r.revenue = rev;
            r.ad_id = ad;
            r.ad_slot = slot;
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("log.jsonl");
            write_log(&p, std::slice::from_ref(&r)).unwrap();
            let back = read_log(&p).unwrap();
            prop_assert_eq!(back.len(), 1);
            prop_assert_eq!(back[0].r_rs.to_bits(), dwell.to_bits());
            prop_assert_eq!(&back[0], &r);
        }
    }
}
