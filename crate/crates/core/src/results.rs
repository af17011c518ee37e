//! Append-only journal of audit outcomes.
//!
//! Each line is one JSON record. An audit interrupted mid-write leaves at
//! most one partial trailing line, which is dropped when the journal is
//! reopened so the audit can resume from the outcomes that made it to disk.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::liveness::RoundOutcome;
use crate::memento::ArchiveRound;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JournalRecord {
    Live { uri: String, outcome: RoundOutcome },
    Archive { uri: String, outcome: ArchiveRound },
}

/// Outcomes read back from a journal, keyed by URI.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Recovered {
    pub live: HashMap<String, Vec<RoundOutcome>>,
    pub archive: HashMap<String, Vec<ArchiveRound>>,
    /// True when a partial trailing line was discarded.
    pub truncated: bool,
}

impl Recovered {
    pub fn record_count(&self) -> usize {
        self.live.values().map(Vec::len).sum::<usize>() + self.archive.values().map(Vec::len).sum::<usize>()
    }
}

pub struct Journal {
    path: PathBuf,
    file: Mutex<File>,
}

impl Journal {
    /// Opens (or creates) a journal and returns what it already holds.
    pub fn open(path: impl AsRef<Path>) -> io::Result<(Journal, Recovered)> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new().create(true).read(true).append(true).open(&path)?;
        let (recovered, good_len) = read_records(BufReader::new(&mut file), &path)?;
        if recovered.truncated {
            file.set_len(good_len)?;
        }
        file.seek(SeekFrom::End(0))?;
        Ok((
            Journal {
                path,
                file: Mutex::new(file),
            },
            recovered,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, record: &JournalRecord) -> io::Result<()> {
        let mut line = serde_json::to_string(record).map_err(io::Error::other)?;
        line.push('\n');
        let mut file = self.file.lock().unwrap_or_else(|e| e.into_inner());
        file.write_all(line.as_bytes())?;
        file.flush()
    }

    pub fn append_live(&self, uri: &str, outcome: &RoundOutcome) -> io::Result<()> {
        self.append(&JournalRecord::Live {
            uri: uri.to_string(),
            outcome: outcome.clone(),
        })
    }

    pub fn append_archive(&self, uri: &str, outcome: &ArchiveRound) -> io::Result<()> {
        self.append(&JournalRecord::Archive {
            uri: uri.to_string(),
            outcome: outcome.clone(),
        })
    }
}

/// Reads a journal without opening it for writing.
pub fn read_journal(path: impl AsRef<Path>) -> io::Result<Recovered> {
    let path = path.as_ref();
    match File::open(path) {
        Ok(f) => read_records(BufReader::new(f), path).map(|(r, _)| r),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Recovered::default()),
        Err(e) => Err(e),
    }
}

fn read_records<R: BufRead>(mut input: R, path: &Path) -> io::Result<(Recovered, u64)> {
    let mut out = Recovered::default();
    let mut good_len = 0u64;
    let mut line_no = 0;
    let mut buf = Vec::new();
    let mut pending_error: Option<io::Error> = None;
    loop {
        buf.clear();
        let n = input.read_until(b'\n', &mut buf)?;
        if n == 0 {
            break;
        }
        line_no += 1;
        if let Some(err) = pending_error.take() {
            // a bad line followed by more data is corruption, not truncation
            return Err(err);
        }
        let complete = buf.ends_with(b"\n");
        let text = String::from_utf8_lossy(&buf);
        if text.trim().is_empty() {
            good_len += n as u64;
            continue;
        }
        match serde_json::from_str::<JournalRecord>(text.trim()) {
            Ok(record) if complete => {
                good_len += n as u64;
                match record {
                    JournalRecord::Live { uri, outcome } => out.live.entry(uri).or_default().push(outcome),
                    JournalRecord::Archive { uri, outcome } => out.archive.entry(uri).or_default().push(outcome),
                }
            }
            Ok(_) => out.truncated = true,
            Err(e) => {
                pending_error = Some(io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("{}:{line_no}: {e}", path.display()),
                ));
            }
        }
    }
    if pending_error.is_some() {
        out.truncated = true;
    }
    for v in out.live.values_mut() {
        v.sort_by_key(|o| o.round);
    }
    for v in out.archive.values_mut() {
        v.sort_by_key(|o| o.round);
    }
    Ok((out, good_len))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liveness::Reason;
    use crate::memento::ArchiveOutcome;
    use chrono::{TimeZone, Utc};

    fn live(round: u32, reason: Reason) -> RoundOutcome {
        RoundOutcome {
            round,
            at: Utc.with_ymd_and_hms(2012, 4, 1, 0, 0, 0).unwrap(),
            reason,
            similarity: None,
        }
    }

    #[test]
    fn roundtrip_and_truncated_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.jsonl");
        {
            let (j, rec) = Journal::open(&path).unwrap();
            assert_eq!(rec.record_count(), 0);
            j.append_live("http://a/", &live(1, Reason::Timeout)).unwrap();
            j.append_live("http://a/", &live(2, Reason::Ok)).unwrap();
            j.append_archive(
                "http://a/",
                &ArchiveRound {
                    round: 1,
                    at: Utc.with_ymd_and_hms(2012, 4, 1, 0, 0, 0).unwrap(),
                    outcome: ArchiveOutcome::Mementos { count: 3 },
                },
            )
            .unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(br#"{"kind":"live","uri":"http://b/","outc"#).unwrap();
        drop(f);

        let (j, rec) = Journal::open(&path).unwrap();
        assert!(rec.truncated);
        assert_eq!(rec.live["http://a/"].len(), 2);
        assert_eq!(rec.archive["http://a/"].len(), 1);
        assert!(!rec.live.contains_key("http://b/"));
        j.append_live("http://b/", &live(1, Reason::Http4xx(404))).unwrap();
        drop(j);

        let rec = read_journal(&path).unwrap();
        assert!(!rec.truncated);
        assert_eq!(rec.live["http://b/"][0].reason, Reason::Http4xx(404));
        assert_eq!(rec.record_count(), 4);
    }

    #[test]
    fn corruption_in_the_middle_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.jsonl");
        std::fs::write(&path, "garbage\n{\"kind\":\"live\"}\n").unwrap();
        assert!(Journal::open(&path).is_err());
        assert_eq!(read_journal(dir.path().join("none")).unwrap().record_count(), 0);
    }
}
