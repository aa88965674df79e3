//! Activation dumps: per-box latent ReLU vectors exported by a detector.
//!
//! Two encodings are accepted. JSONL, one record per line:
//!
//! ```text
//! {"frame": "000001", "box": "b0", "layer": "roi.0", "role": "gt", "score": 0.9, "values": [0.0, 1.5]}
//! ```
//!
//! and a packed little-endian binary starting with the magic `NAPD`:
//! version `u8 = 1`, dim `u32`, record count `u64`, a string table
//! (`u32` count, then `u32` length-prefixed UTF-8 strings), then per record
//! frame/box/layer string indices (`u32` each), role `u8`, score `f32`
//! (NaN when absent) and `dim` values as `f32`.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DUMP_MAGIC: &[u8; 4] = b"NAPD";
pub const DUMP_VERSION: u8 = 1;

/// Values below zero by more than this are not ReLU outputs.
const RELU_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Source ground truth, feeds the pattern bank.
    Gt,
    /// Source validation true positive, feeds layer selection.
    Tp,
    /// Source validation false positive, feeds layer selection.
    Fp,
    /// Target-domain detection, feeds frame scoring.
    Det,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Gt => "gt",
            Role::Tp => "tp",
            Role::Fp => "fp",
            Role::Det => "det",
        }
    }

    fn code(self) -> u8 {
        self as u8
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Role::Gt),
            1 => Ok(Role::Tp),
            2 => Ok(Role::Fp),
            3 => Ok(Role::Det),
            c => Err(Error::UnknownRole(format!("code {c}"))),
        }
    }
}

impl std::str::FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gt" => Ok(Role::Gt),
            "tp" => Ok(Role::Tp),
            "fp" => Ok(Role::Fp),
            "det" => Ok(Role::Det),
            other => Err(Error::UnknownRole(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationRecord {
    pub frame_id: String,
    pub box_id: String,
    pub layer_id: String,
    pub role: Role,
    pub score: Option<f64>,
    pub values: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonRecord {
    frame: String,
    #[serde(rename = "box")]
    box_id: String,
    layer: String,
    role: String,
    #[serde(default)]
    score: Option<f64>,
    values: Vec<f64>,
}

#[derive(Serialize)]
struct JsonRecordOut<'a> {
    frame: &'a str,
    #[serde(rename = "box")]
    box_id: &'a str,
    layer: &'a str,
    role: Role,
    #[serde(skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
    values: &'a [f64],
}

impl ActivationRecord {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        let raw: JsonRecord =
            serde_json::from_str(line).map_err(|e| Error::Schema(e.to_string()))?;
        let record = ActivationRecord {
            role: raw.role.parse()?,
            frame_id: raw.frame,
            box_id: raw.box_id,
            layer_id: raw.layer,
            score: raw.score,
            values: raw.values,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&JsonRecordOut {
            frame: &self.frame_id,
            box_id: &self.box_id,
            layer: &self.layer_id,
            role: self.role,
            score: self.score,
            values: &self.values,
        })
        .expect("activation record serializes")
    }

    fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Schema("empty values vector".into()));
        }
        if let Some((j, v)) = self
            .values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < -RELU_TOLERANCE)
        {
            return Err(Error::Schema(format!(
                "value {j} = {v} is not a finite ReLU output"
            )));
        }
        Ok(())
    }
}

/// Tracks the dimension seen for each layer.
#[derive(Default)]
struct LayerDims(HashMap<String, usize>);

impl LayerDims {
    fn check(&mut self, record: &ActivationRecord) -> Result<()> {
        match self.0.get(&record.layer_id) {
            Some(&d) if d != record.dim() => Err(Error::LayerDimensionMismatch {
                layer: record.layer_id.clone(),
                expected: d,
                found: record.dim(),
            }),
            Some(_) => Ok(()),
            None => {
                self.0.insert(record.layer_id.clone(), record.dim());
                Ok(())
            }
        }
    }
}

/// Parses JSONL. Errors carry the 1-based line number.
pub fn parse_activation_jsonl<R: BufRead>(reader: R) -> Result<Vec<ActivationRecord>, (usize, Error)> {
    let mut dims = LayerDims::default();
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| (i + 1, e.into()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = ActivationRecord::from_json_line(&line).map_err(|e| (i + 1, e))?;
        dims.check(&record).map_err(|e| (i + 1, e))?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_activation_jsonl(records: &[ActivationRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_json_line());
        out.push('\n');
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Schema(format!("truncated binary dump at byte {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_activation_binary(bytes: &[u8]) -> Result<Vec<ActivationRecord>> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != DUMP_MAGIC {
        return Err(Error::Schema("missing NAPD magic".into()));
    }
    let version = cur.u8()?;
    if version != DUMP_VERSION {
        return Err(Error::Schema(format!("unsupported dump version {version}")));
    }
    let dim = cur.u32()? as usize;
    let count = cur.u64()?;
    let n_strings = cur.u32()? as usize;
    let mut strings = Vec::with_capacity(n_strings.min(1 << 20));
    for _ in 0..n_strings {
        let len = cur.u32()? as usize;
        let s = std::str::from_utf8(cur.take(len)?)
            .map_err(|e| Error::Schema(format!("string table: {e}")))?;
        strings.push(s.to_string());
    }
    let lookup = |idx: u32| -> Result<String> {
        strings
            .get(idx as usize)
            .cloned()
            .ok_or_else(|| Error::Schema(format!("string index {idx} out of range")))
    };
    let mut out = Vec::new();
    for _ in 0..count {
        let frame_id = lookup(cur.u32()?)?;
        let box_id = lookup(cur.u32()?)?;
        let layer_id = lookup(cur.u32()?)?;
        let role = Role::from_code(cur.u8()?)?;
        let score = cur.f32()?;
        let values = (0..dim)
            .map(|_| cur.f32().map(f64::from))
            .collect::<Result<Vec<_>>>()?;
        let record = ActivationRecord {
            frame_id,
            box_id,
            layer_id,
            role,
            score: (!score.is_nan()).then_some(f64::from(score)),
            values,
        };
        record.validate()?;
        out.push(record);
    }
    if cur.pos != bytes.len() {
        return Err(Error::Schema(format!(
            "{} trailing bytes after last record",
            bytes.len() - cur.pos
        )));
    }
    Ok(out)
}

/// Packs records into the binary dump format. All records must share one
/// dimension since the header stores a single `dim`.
pub fn encode_activation_binary(records: &[ActivationRecord]) -> Result<Vec<u8>> {
    let dim = records.first().map_or(0, ActivationRecord::dim);
    let mut table: Vec<&str> = Vec::new();
    let mut index: HashMap<&str, u32> = HashMap::new();
    let mut ids = Vec::with_capacity(records.len());
    for r in records {
        if r.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: r.dim(),
            });
        }
        let mut triple = [0u32; 3];
        for (slot, s) in triple.iter_mut().zip([&r.frame_id, &r.box_id, &r.layer_id]) {
            *slot = match index.get(s.as_str()) {
                Some(&i) => i,
                None => {
                    let i = table.len() as u32;
                    table.push(s.as_str());
                    index.insert(s.as_str(), i);
                    i
                }
            };
        }
        ids.push(triple);
    }
    let mut out = Vec::new();
    out.extend_from_slice(DUMP_MAGIC);
    out.push(DUMP_VERSION);
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(records.len() as u64).to_le_bytes());
    out.extend_from_slice(&(table.len() as u32).to_le_bytes());
    for s in &table {
        out.extend_from_slice(&(s.len() as u32).to_le_bytes());
        out.extend_from_slice(s.as_bytes());
    }
    for (r, triple) in records.iter().zip(&ids) {
        for i in triple {
            out.extend_from_slice(&i.to_le_bytes());
        }
        out.push(r.role.code());
        out.extend_from_slice(&r.score.map_or(f32::NAN, |s| s as f32).to_le_bytes());
        for v in &r.values {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Reads a dump from disk, sniffing the binary magic; anything else is JSONL.
pub fn read_activation_dump(path: &Path) -> Result<Vec<ActivationRecord>> {
    let bytes = std::fs::read(path).map_err(|e| Error::from(e).in_file(path))?;
    if bytes.starts_with(DUMP_MAGIC) {
        let records = decode_activation_binary(&bytes).map_err(|e| e.in_file(path))?;
        let mut dims = LayerDims::default();
        for r in &records {
            dims.check(r).map_err(|e| e.in_file(path))?;
        }
        Ok(records)
    } else {
        parse_activation_jsonl(bytes.as_slice()).map_err(|(line, e)| e.at_line(path, line))
    }
}
