//! Annotation store persisted as an append-only JSON-lines journal plus snapshots.
//!
//! Every write is appended to `journal.jsonl` with a global sequence number before it
//! becomes visible. Every `snapshot_every` writes, the full state is written to
//! `snapshot.json` (via a temporary file and rename) and the journal is truncated.
//! Loading applies the snapshot, then every journal entry with a higher sequence
//! number.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use monoball::data::BallAnnotation;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const JOURNAL_FILE: &str = "journal.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: corrupt entry: {source}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoredAnnotation {
    pub annotation: BallAnnotation,
    /// Starts at 0 for annotations shipped with the manifest; every write adds 1.
    pub revision: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct JournalEntry {
    seq: u64,
    image_id: String,
    revision: u64,
    annotation: BallAnnotation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Snapshot {
    seq: u64,
    annotations: BTreeMap<String, StoredAnnotation>,
}

#[derive(Debug)]
pub struct AnnotationStore {
    dir: PathBuf,
    annotations: BTreeMap<String, StoredAnnotation>,
    seq: u64,
    since_snapshot: usize,
    snapshot_every: usize,
    journal: File,
}

impl AnnotationStore {
    /// Opens the store in `dir`, seeding absent images from `initial`.
    pub fn open(
        dir: &Path,
        initial: impl IntoIterator<Item = (String, BallAnnotation)>,
        snapshot_every: usize,
    ) -> Result<Self> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut annotations: BTreeMap<String, StoredAnnotation> = initial
            .into_iter()
            .map(|(id, annotation)| (id, StoredAnnotation { annotation, revision: 0 }))
            .collect();
        let mut seq = 0;

        let snapshot_path = dir.join(SNAPSHOT_FILE);
        if snapshot_path.exists() {
            let text = fs::read_to_string(&snapshot_path).map_err(io_err(&snapshot_path))?;
            let snap: Snapshot = serde_json::from_str(&text).map_err(|source| StoreError::Corrupt {
                path: snapshot_path.clone(),
                line: source.line(),
                source,
            })?;
            seq = snap.seq;
            annotations.extend(snap.annotations);
        }

        let journal_path = dir.join(JOURNAL_FILE);
        let mut since_snapshot = 0;
        if journal_path.exists() {
            let reader = BufReader::new(File::open(&journal_path).map_err(io_err(&journal_path))?);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(io_err(&journal_path))?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: JournalEntry = serde_json::from_str(&line).map_err(|source| StoreError::Corrupt {
                    path: journal_path.clone(),
                    line: i + 1,
                    source,
                })?;
                if entry.seq <= seq {
                    continue;
                }
                seq = entry.seq;
                since_snapshot += 1;
                annotations.insert(
                    entry.image_id,
                    StoredAnnotation {
                        annotation: entry.annotation,
                        revision: entry.revision,
                    },
                );
            }
        }
        let journal = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&journal_path)
            .map_err(io_err(&journal_path))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            annotations,
            seq,
            since_snapshot,
            snapshot_every: snapshot_every.max(1),
            journal,
        })
    }

    pub fn get(&self, image_id: &str) -> Option<&StoredAnnotation> {
        self.annotations.get(image_id)
    }

    pub fn annotations(&self) -> &BTreeMap<String, StoredAnnotation> {
        &self.annotations
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    /// Journals and applies a new annotation; returns the new revision.
    pub fn put(&mut self, image_id: &str, annotation: BallAnnotation) -> Result<u64> {
        let revision = self.annotations.get(image_id).map_or(1, |a| a.revision + 1);
        let entry = JournalEntry {
            seq: self.seq + 1,
            image_id: image_id.to_string(),
            revision,
            annotation,
        };
        let mut line = serde_json::to_string(&entry).expect("journal entry serializes");
        line.push('\n');
        let path = self.dir.join(JOURNAL_FILE);
        self.journal.write_all(line.as_bytes()).map_err(io_err(&path))?;
        self.journal.sync_data().map_err(io_err(&path))?;

        self.seq = entry.seq;
        self.annotations
            .insert(entry.image_id, StoredAnnotation { annotation, revision });
        self.since_snapshot += 1;
        if self.since_snapshot >= self.snapshot_every {
            self.snapshot()?;
        }
        Ok(revision)
    }

    /// Writes the full state and truncates the journal.
    pub fn snapshot(&mut self) -> Result<()> {
        let snap = Snapshot {
            seq: self.seq,
            annotations: self.annotations.clone(),
        };
        let path = self.dir.join(SNAPSHOT_FILE);
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        {
            let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
            f.write_all(serde_json::to_string(&snap).expect("snapshot serializes").as_bytes())
                .map_err(io_err(&tmp))?;
            f.sync_all().map_err(io_err(&tmp))?;
        }
        fs::rename(&tmp, &path).map_err(io_err(&path))?;
        let journal_path = self.dir.join(JOURNAL_FILE);
        self.journal.set_len(0).map_err(io_err(&journal_path))?;
        self.since_snapshot = 0;
        Ok(())
    }
}
