//! Append-only block log plus derived-state checkpoints.
//!
//! Layout of a data directory:
//!
//! ```text
//! platform.json            network members, seed and platform parameters
//! blocks.log               one committed block per line: hex of its canonical bytes
//! blocks.jsonl             the same blocks as JSON, one per line, for reading by eye
//! alerts.jsonl             every alert raised by monitoring, one per line
//! checkpoints/NNNNNNNNNN.json   engine and derived state after block NNNNNNNNNN
//! ```
//!
//! Line `i` (1-based) holds the block at height `i`; the line number is the record's
//! sequence number. A final line without its newline is a torn write and is dropped.
//! The two `.jsonl` files are never read back; they are rewritten from the log on open.

use std::fs::{self, File, OpenOptions};
use std::io::{Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::{from_hex, to_hex, Canonical};
use crate::contracts::Engine;
use crate::crypto::Hash;
use crate::health::Alert;
use crate::ledger::{verify_chain, ChainStatus, LedgerBlock};
use crate::platform::{Derived, PlatformSpec};

pub const SPEC_FILE: &str = "platform.json";
pub const LOG_FILE: &str = "blocks.log";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const MIRROR_FILE: &str = "blocks.jsonl";
pub const ALERT_FILE: &str = "alerts.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("data directory {0} does not exist")]
    MissingDir(PathBuf),
    #[error("data directory {0} holds no platform")]
    NotInitialized(PathBuf),
    #[error("data directory {0} already holds a platform")]
    AlreadyInitialized(PathBuf),
    #[error("corrupt log at sequence {seq}: {reason}")]
    CorruptLog { seq: u64, reason: String },
    #[error("invalid platform file: {0}")]
    BadSpec(String),
    #[error("i/o error: {0}")]
    Io(String),
}

fn io(e: std::io::Error) -> StoreError {
    StoreError::Io(e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub height: u64,
    pub tip_hash: Hash,
    pub engine: Engine,
    pub derived: Derived,
}

/// Blocks read back from a log, genesis excluded.
#[derive(Debug, Clone)]
pub struct LogContents {
    pub spec: PlatformSpec,
    pub blocks: Vec<LedgerBlock>,
    /// Byte length of the intact prefix (torn tail excluded).
    pub intact_len: u64,
}

#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    log: File,
    mirror: File,
    alerts: File,
}

impl Store {
    /// Initialize `dir` (created if needed) for a new platform.
    pub fn create(dir: &Path, spec: &PlatformSpec) -> Result<Self, StoreError> {
        fs::create_dir_all(dir.join(CHECKPOINT_DIR)).map_err(io)?;
        if dir.join(SPEC_FILE).exists() || dir.join(LOG_FILE).exists() {
            return Err(StoreError::AlreadyInitialized(dir.to_path_buf()));
        }
        let text = serde_json::to_string_pretty(spec).map_err(|e| StoreError::BadSpec(e.to_string()))?;
        write_atomic(&dir.join(SPEC_FILE), text.as_bytes())?;
        let log = OpenOptions::new().create(true).append(true).open(dir.join(LOG_FILE)).map_err(io)?;
        let mirror = File::create(dir.join(MIRROR_FILE)).map_err(io)?;
        let alerts = File::create(dir.join(ALERT_FILE)).map_err(io)?;
        Ok(Self { dir: dir.to_path_buf(), log, mirror, alerts })
    }

    /// Read and verify the log, drop a torn tail, and reopen for appending.
    pub fn open(dir: &Path) -> Result<(Self, LogContents), StoreError> {
        let contents = read_log(dir)?;
        let mut log = OpenOptions::new().write(true).open(dir.join(LOG_FILE)).map_err(io)?;
        log.set_len(contents.intact_len).map_err(io)?;
        log.seek(SeekFrom::End(0)).map_err(io)?;
        let mut mirror = File::create(dir.join(MIRROR_FILE)).map_err(io)?;
        let mut text = String::new();
        for block in &contents.blocks {
            text.push_str(&json_line(block)?);
        }
        mirror.write_all(text.as_bytes()).map_err(io)?;
        let alerts = File::create(dir.join(ALERT_FILE)).map_err(io)?;
        Ok((Self { dir: dir.to_path_buf(), log, mirror, alerts }, contents))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn append(&mut self, block: &LedgerBlock) -> Result<(), StoreError> {
        let mut line = to_hex(&block.to_canonical());
        line.push('\n');
        self.log.write_all(line.as_bytes()).map_err(io)?;
        self.log.flush().map_err(io)?;
        self.mirror.write_all(json_line(block)?.as_bytes()).map_err(io)
    }

    pub fn append_alerts(&mut self, alerts: &[Alert]) -> Result<(), StoreError> {
        let mut text = String::new();
        for a in alerts {
            text.push_str(&json_line(a)?);
        }
        self.alerts.write_all(text.as_bytes()).map_err(io)
    }

    pub fn write_checkpoint(&self, ck: &Checkpoint) -> Result<(), StoreError> {
        let text = serde_json::to_vec(ck).map_err(|e| StoreError::Io(e.to_string()))?;
        write_atomic(&checkpoint_path(&self.dir, ck.height), &text)
    }
}

fn json_line<T: Serialize>(value: &T) -> Result<String, StoreError> {
    let mut line = serde_json::to_string(value).map_err(|e| StoreError::Io(e.to_string()))?;
    line.push('\n');
    Ok(line)
}

fn checkpoint_path(dir: &Path, height: u64) -> PathBuf {
    dir.join(CHECKPOINT_DIR).join(format!("{height:010}.json"))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

pub fn read_spec(dir: &Path) -> Result<PlatformSpec, StoreError> {
    if !dir.is_dir() {
        return Err(StoreError::MissingDir(dir.to_path_buf()));
    }
    let path = dir.join(SPEC_FILE);
    if !path.exists() || !dir.join(LOG_FILE).exists() {
        return Err(StoreError::NotInitialized(dir.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(io)?;
    serde_json::from_str(&text).map_err(|e| StoreError::BadSpec(e.to_string()))
}

/// Decode every complete line and verify the chain (hashes, links, signatures, quorum
/// certificates). Fails with the first bad sequence number.
pub fn read_log(dir: &Path) -> Result<LogContents, StoreError> {
    let spec = read_spec(dir)?;
    let raw = fs::read(dir.join(LOG_FILE)).map_err(io)?;
    let intact_len = raw.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let mut blocks = Vec::new();
    let lines = raw[..intact_len].split(|&b| b == b'\n');
    let complete = raw[..intact_len].iter().filter(|&&b| b == b'\n').count();
    for (i, line) in lines.take(complete).enumerate() {
        let seq = i as u64 + 1;
        let corrupt = |reason: &str| StoreError::CorruptLog { seq, reason: reason.to_string() };
        let text = std::str::from_utf8(line).map_err(|_| corrupt("not text"))?;
        let bytes = from_hex(text).ok_or_else(|| corrupt("not hex"))?;
        let block = LedgerBlock::from_canonical(&bytes).map_err(|e| corrupt(&e.to_string()))?;
        if block.height != seq {
            return Err(corrupt("sequence does not match block height"));
        }
        blocks.push(block);
    }
    let network = spec.network();
    let mut chain = Vec::with_capacity(blocks.len() + 1);
    chain.push(LedgerBlock::genesis());
    chain.extend(blocks.iter().cloned());
    if let ChainStatus::Corrupt { height } = verify_chain(&chain, &network) {
        return Err(StoreError::CorruptLog {
            seq: height,
            reason: "block fails hash, signature or quorum verification".into(),
        });
    }
    Ok(LogContents { spec, blocks, intact_len: intact_len as u64 })
}

/// Latest readable checkpoint at or below `max_height` whose tip hash matches `blocks`.
pub fn latest_checkpoint(dir: &Path, blocks: &[LedgerBlock], max_height: u64) -> Option<Checkpoint> {
    let mut heights: Vec<u64> = fs::read_dir(dir.join(CHECKPOINT_DIR))
        .ok()?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            name.strip_suffix(".json")?.parse().ok()
        })
        .filter(|h| *h >= 1 && *h <= max_height)
        .collect();
    heights.sort_unstable();
    heights.into_iter().rev().find_map(|h| {
        let bytes = fs::read(checkpoint_path(dir, h)).ok()?;
        let ck: Checkpoint = serde_json::from_slice(&bytes).ok()?;
        let block = blocks.get(h as usize - 1)?;
        (ck.height == h && ck.tip_hash == block.block_hash).then_some(ck)
    })
}
