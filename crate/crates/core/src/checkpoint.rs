//! On-disk snapshots of [`LengthAccumulator`]s plus a per-length timing log.
//!
//! Layout of a checkpoint directory:
//!
//! ```text
//! len_<s>.ckpt    one file per combination length, replaced atomically
//! timings.csv     s,elapsed_seconds,combinations  (completed lengths only)
//! ```
//!
//! `len_<s>.ckpt` is little-endian:
//!
//! | offset | size  | field                                   |
//! |--------|-------|-----------------------------------------|
//! | 0      | 8     | magic `b"SITECKPT"`                     |
//! | 8      | 1     | format version (`1`)                    |
//! | 9      | 3     | zero padding                            |
//! | 12     | 32    | dataset fingerprint (SHA-256)           |
//! | 44     | 4     | `m` (u32)                               |
//! | 48     | 4     | `s` (u32)                               |
//! | 52     | 8     | `n` (u64)                               |
//! | 60     | 8     | combinations done (u64)                 |
//! | 68     | 8     | elapsed seconds (f64)                   |
//! | 76     | 8 n   | observation ratios (f64 each)           |
//! | ...    | 8 n m | contribution counts, row-major (u64)    |
//! | end-32 | 32    | SHA-256 of every preceding byte         |

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::combinatorics::choose;
use crate::error::{Error, Result};
use crate::ranking::LengthAccumulator;

pub const MAGIC: &[u8; 8] = b"SITECKPT";
pub const FORMAT_VERSION: u8 = 1;
const HEADER_LEN: usize = 76;
const TIMINGS_FILE: &str = "timings.csv";

pub fn checkpoint_path(dir: &Path, s: usize) -> PathBuf {
    dir.join(format!("len_{s}.ckpt"))
}

pub fn encode(acc: &LengthAccumulator, fingerprint: &[u8; 32]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * acc.n * (acc.m + 1) + 32);
    buf.extend_from_slice(MAGIC);
    buf.push(FORMAT_VERSION);
    buf.extend_from_slice(&[0u8; 3]);
    buf.extend_from_slice(fingerprint);
    buf.extend_from_slice(&(acc.m as u32).to_le_bytes());
    buf.extend_from_slice(&(acc.s as u32).to_le_bytes());
    buf.extend_from_slice(&(acc.n as u64).to_le_bytes());
    buf.extend_from_slice(&acc.combos_done.to_le_bytes());
    buf.extend_from_slice(&acc.elapsed_seconds.to_le_bytes());
    for v in &acc.nr_row {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for c in &acc.oc {
        buf.extend_from_slice(&c.to_le_bytes());
    }
    let digest: [u8; 32] = Sha256::digest(&buf).into();
    buf.extend_from_slice(&digest);
    buf
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let out: [u8; N] = self.bytes[self.pos..self.pos + N].try_into().unwrap();
        self.pos += N;
        out
    }
}

/// Decode and verify a checkpoint. `path` is only used in error messages.
pub fn decode(bytes: &[u8], path: &Path) -> Result<([u8; 32], LengthAccumulator)> {
    let corrupt = |message: String| Error::CheckpointCorrupt {
        path: path.to_path_buf(),
        message,
    };
    if bytes.len() < HEADER_LEN + 32 {
        return Err(corrupt(format!("truncated ({} bytes)", bytes.len())));
    }
    if &bytes[..8] != MAGIC {
        return Err(corrupt("bad magic".into()));
    }
    if bytes[8] != FORMAT_VERSION {
        return Err(corrupt(format!("unsupported version {}", bytes[8])));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    let expected: [u8; 32] = Sha256::digest(body).into();
    if digest != expected {
        return Err(corrupt("checksum mismatch".into()));
    }

    let mut cur = Cursor {
        bytes: body,
        pos: 12,
    };
    let fingerprint: [u8; 32] = cur.take();
    let m = u32::from_le_bytes(cur.take()) as usize;
    let s = u32::from_le_bytes(cur.take()) as usize;
    let n = u64::from_le_bytes(cur.take()) as usize;
    let combos_done = u64::from_le_bytes(cur.take());
    let elapsed_seconds = f64::from_le_bytes(cur.take());

    let expected_len = n
        .checked_mul(m + 1)
        .and_then(|x| x.checked_mul(8))
        .and_then(|x| x.checked_add(HEADER_LEN));
    if expected_len != Some(body.len()) {
        return Err(corrupt(format!(
            "length {} does not match n={n}, m={m}",
            body.len()
        )));
    }
    if s == 0 || s > m || m > crate::combinatorics::MAX_OBJECTIVES {
        return Err(corrupt(format!("invalid length s={s} for m={m}")));
    }
    if combos_done > choose(m, s) {
        return Err(corrupt(format!(
            "{combos_done} combinations recorded, only {} exist",
            choose(m, s)
        )));
    }

    let nr_row = (0..n).map(|_| f64::from_le_bytes(cur.take())).collect();
    let oc = (0..n * m).map(|_| u64::from_le_bytes(cur.take())).collect();
    Ok((
        fingerprint,
        LengthAccumulator {
            s,
            m,
            n,
            nr_row,
            oc,
            combos_done,
            elapsed_seconds,
        },
    ))
}

/// Write `acc` to `len_<s>.ckpt` via a temp file and rename, so a failed
/// write never clobbers the previous checkpoint.
pub fn save(acc: &LengthAccumulator, dir: &Path, fingerprint: &[u8; 32]) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = checkpoint_path(dir, acc.s);
    let tmp = dir.join(format!(".len_{}.ckpt.tmp", acc.s));
    let bytes = encode(acc, fingerprint);
    let written = (|| -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        Ok(())
    })();
    if let Err(e) = written {
        let _ = fs::remove_file(&tmp);
        return Err(e.into());
    }
    fs::rename(&tmp, &path)?;
    log::debug!(
        "checkpoint s={} at {}/{} -> {}",
        acc.s,
        acc.combos_done,
        acc.total(),
        path.display()
    );
    Ok(path)
}

/// Load the checkpoint for length `s`, if any. A checkpoint written for a
/// different matrix is an error, never a silent restart.
pub fn load(dir: &Path, s: usize, fingerprint: &[u8; 32]) -> Result<Option<LengthAccumulator>> {
    let path = checkpoint_path(dir, s);
    let bytes = match fs::read(&path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let (stored, acc) = decode(&bytes, &path)?;
    if &stored != fingerprint {
        return Err(Error::FingerprintMismatch { path });
    }
    if acc.s != s {
        return Err(Error::CheckpointCorrupt {
            path,
            message: format!("file holds length {}", acc.s),
        });
    }
    Ok(Some(acc))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub s: usize,
    pub elapsed_seconds: f64,
    pub combinations: u64,
}

/// Insert or replace the timing row for `row.s`.
pub fn record_timing(dir: &Path, row: TimingRow) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut rows = timing_report(dir)?;
    rows.retain(|r| r.s != row.s);
    rows.push(row);
    rows.sort_by_key(|r| r.s);
    let tmp = dir.join(".timings.csv.tmp");
    {
        let mut w = csv::Writer::from_path(&tmp)?;
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    fs::rename(tmp, dir.join(TIMINGS_FILE))?;
    Ok(())
}

/// One row per completed length, ascending `s`. Missing file means no rows.
pub fn timing_report(dir: &Path) -> Result<Vec<TimingRow>> {
    let path = dir.join(TIMINGS_FILE);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows: Vec<TimingRow> = reader.deserialize().collect::<Result<_, _>>()?;
    rows.sort_by_key(|r| r.s);
    Ok(rows)
}
