//! Append-only journal: one JSON record per line, written and flushed
//! before any mutation is acknowledged. A torn final line (partial write
//! at crash) is tolerated on replay and dropped; a malformed line anywhere
//! else aborts recovery with its position.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::Utc;
use serde::{Deserialize, Serialize};

use crate::error::VdcError;
use crate::identity::ObjectId;
use crate::types::{
    ClaimInfo, Dataset, NonDeterminismIncident, ProvenanceRecord, Recipe, Replica, Transformation,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", content = "payload")]
pub enum Event {
    TransformationRegistered {
        transformation: Transformation,
    },
    RecipeRegistered {
        recipe: Recipe,
    },
    RecipeValidated {
        name: String,
        note: String,
    },
    SiteRecipeBound {
        site: String,
        recipe: String,
    },
    DatasetComposed {
        dataset: Dataset,
    },
    ReplicaRegistered {
        replica: Replica,
    },
    ReplicasDropped {
        object_id: ObjectId,
    },
    DerivationClaimed {
        id: ObjectId,
        claim: ClaimInfo,
    },
    DerivationCompleted {
        id: ObjectId,
        provenance: ProvenanceRecord,
        replica: Replica,
    },
    DerivationFailed {
        id: ObjectId,
        ce_id: String,
        reason: String,
        terminal: bool,
    },
    DerivationRetried {
        id: ObjectId,
    },
    GcSweep {
        now: i64,
        requeued: Vec<ObjectId>,
        failed: Vec<ObjectId>,
    },
    DatasetReprocessed {
        dataset: String,
        recipe: String,
    },
    NonDeterminismObserved {
        incident: NonDeterminismIncident,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Record {
    pub seq: u64,
    pub ts: String,
    #[serde(flatten)]
    pub event: Event,
}

/// Where records go. The in-memory sink backs tests and the deterministic
/// simulation; the file sink is the durable write-ahead log.
pub enum Journal {
    File(BufWriter<File>),
    Memory(Vec<u8>),
}

impl Journal {
    pub fn open_file(path: &Path) -> Result<Self, VdcError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Journal::File(BufWriter::new(file)))
    }

    pub fn in_memory() -> Self {
        Journal::Memory(Vec::new())
    }

    /// Write one record and flush it; callers must not acknowledge the
    /// mutation unless this returns Ok.
    pub fn append(&mut self, seq: u64, event: &Event) -> Result<(), VdcError> {
        let record = Record {
            seq,
            ts: Utc::now().to_rfc3339(),
            event: event.clone(),
        };
        let mut line = serde_json::to_vec(&record)
            .map_err(|e| VdcError::UnencodableValue(e.to_string()))?;
        line.push(b'\n');
        match self {
            Journal::File(w) => {
                w.write_all(&line)?;
                w.flush()?;
            }
            Journal::Memory(buf) => buf.extend_from_slice(&line),
        }
        Ok(())
    }
}

/// Read back every fully written record. The final line may be torn; it is
/// dropped. Any earlier malformed line is a hard error with its line
/// number (1-based).
pub fn read_records(path: &Path) -> Result<Vec<Record>, VdcError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let reader = BufReader::new(File::open(path)?);
    let lines: Vec<String> = reader.lines().collect::<Result<_, _>>()?;
    parse_records(&lines)
}

pub fn parse_records(lines: &[String]) -> Result<Vec<Record>, VdcError> {
    let mut records = Vec::with_capacity(lines.len());
    let last = lines.len();
    for (idx, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Record>(line) {
            Ok(rec) => {
                if let Some(prev) = records.last() {
                    let prev: &Record = prev;
                    if rec.seq <= prev.seq {
                        return Err(VdcError::CorruptRecord {
                            line: idx + 1,
                            detail: format!(
                                "sequence number {} not after {}",
                                rec.seq, prev.seq
                            ),
                        });
                    }
                }
                records.push(rec);
            }
            Err(e) if idx + 1 == last => {
                // torn final write from a crash: drop it
                let _ = e;
                break;
            }
            Err(e) => {
                return Err(VdcError::CorruptRecord {
                    line: idx + 1,
                    detail: e.to_string(),
                });
            }
        }
    }
    Ok(records)
}
