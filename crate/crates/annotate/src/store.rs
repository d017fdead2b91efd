//! Append-only event log with periodic snapshots.
//!
//! `log.jsonl` holds one `{seq, event}` record per line. `snapshot.json`
//! holds the board after event `seq`. Recovery loads the snapshot and
//! replays later records. A torn final line (crash mid-write) is dropped.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::AnnotateError;
use crate::project::{Board, Catalog, Event};

pub const LOG_FILE: &str = "log.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";
pub const DEFAULT_SNAPSHOT_EVERY: u64 = 256;

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    seq: u64,
    event: Event,
}

#[derive(Debug, Serialize, Deserialize)]
struct Snapshot {
    seq: u64,
    board: Board,
}

pub struct EventLog {
    dir: PathBuf,
    file: File,
    seq: u64,
    snapshot_seq: u64,
    pub snapshot_every: u64,
}

impl EventLog {
    pub fn open(dir: &Path, catalog: &Catalog) -> Result<(Self, Board), AnnotateError> {
        fs::create_dir_all(dir).map_err(|e| AnnotateError::io(dir, e))?;
        let snap_path = dir.join(SNAPSHOT_FILE);
        let (mut board, snapshot_seq) = if snap_path.exists() {
            let text = fs::read_to_string(&snap_path).map_err(|e| AnnotateError::io(&snap_path, e))?;
            let snap: Snapshot = serde_json::from_str(&text).map_err(|e| AnnotateError::CorruptLog {
                path: snap_path.clone(),
                line: e.line(),
                message: e.to_string(),
            })?;
            (snap.board, snap.seq)
        } else {
            (Board::default(), 0)
        };

        let log_path = dir.join(LOG_FILE);
        let mut seq = snapshot_seq;
        if log_path.exists() {
            let good_len = replay(&log_path, catalog, &mut board, &mut seq)?;
            let len = fs::metadata(&log_path).map_err(|e| AnnotateError::io(&log_path, e))?.len();
            if good_len < len {
                let f = OpenOptions::new().write(true).open(&log_path).map_err(|e| AnnotateError::io(&log_path, e))?;
                f.set_len(good_len).map_err(|e| AnnotateError::io(&log_path, e))?;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(|e| AnnotateError::io(&log_path, e))?;
        Ok((
            Self {
                dir: dir.to_path_buf(),
                file,
                seq,
                snapshot_seq,
                snapshot_every: DEFAULT_SNAPSHOT_EVERY,
            },
            board,
        ))
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    /// Durably record `event`; `board` is the state after it.
    pub fn append(&mut self, event: &Event, board: &Board) -> Result<(), AnnotateError> {
        let record = Record {
            seq: self.seq + 1,
            event: event.clone(),
        };
        let mut line = serde_json::to_string(&record).expect("events serialize");
        line.push('\n');
        let path = self.dir.join(LOG_FILE);
        self.file.write_all(line.as_bytes()).map_err(|e| AnnotateError::io(&path, e))?;
        self.file.sync_data().map_err(|e| AnnotateError::io(&path, e))?;
        self.seq += 1;
        if self.snapshot_every > 0 && self.seq - self.snapshot_seq >= self.snapshot_every {
            self.snapshot(board)?;
        }
        Ok(())
    }

    pub fn snapshot(&mut self, board: &Board) -> Result<(), AnnotateError> {
        let snap = Snapshot {
            seq: self.seq,
            board: board.clone(),
        };
        let path = self.dir.join(SNAPSHOT_FILE);
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let text = serde_json::to_string(&snap).expect("board serializes");
        fs::write(&tmp, text).map_err(|e| AnnotateError::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| AnnotateError::io(&path, e))?;
        self.snapshot_seq = self.seq;
        Ok(())
    }
}

/// Apply records newer than `seq`; returns the byte length of the valid prefix.
fn replay(path: &Path, catalog: &Catalog, board: &mut Board, seq: &mut u64) -> Result<u64, AnnotateError> {
    let file = File::open(path).map_err(|e| AnnotateError::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut good = 0u64;
    let mut line_no = 0;
    let mut buf = String::new();
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf).map_err(|e| AnnotateError::io(path, e))?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let corrupt = |message: String| AnnotateError::CorruptLog {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        if !buf.ends_with('\n') {
            // torn write at the tail
            break;
        }
        let record: Record = serde_json::from_str(buf.trim_end()).map_err(|e| corrupt(e.to_string()))?;
        if record.seq > *seq {
            if record.seq != *seq + 1 {
                return Err(corrupt(format!("expected seq {}, found {}", *seq + 1, record.seq)));
            }
            board
                .apply(catalog, &record.event)
                .map_err(|e| corrupt(format!("event does not replay: {e}")))?;
            *seq = record.seq;
        }
        good += n as u64;
    }
    Ok(good)
}
