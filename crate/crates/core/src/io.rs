//! File formats.
//!
//! * `MMFS` feature container: little-endian header followed by `L·d`
//!   row-major `f32` values.
//!
//!   | offset | size | field                          |
//!   |-------:|-----:|--------------------------------|
//!   | 0      | 4    | magic `b"MMFS"`                |
//!   | 4      | 4    | version (`u32`, = 1)           |
//!   | 8      | 1    | modality (0 video, 1 audio, 2 fused) |
//!   | 9      | 8    | L (`u64`)                      |
//!   | 17     | 8    | d (`u64`)                      |
//!   | 25     | 8    | start_offset (`f64`)           |
//!   | 33     | 8    | hop (`f64`)                    |
//!   | 41     | 8    | window (`f64`)                 |
//!   | 49     | 4·L·d| payload                        |
//!
//! * Proposal / annotation records: UTF-8, one JSON object per line with
//!   exactly the fields `video_id, t_start, t_end, label[, score]`.
//!
//! * `MMCK` parameter checkpoints: a section table (name + shape) followed
//!   by `f64` payloads, one matrix or text blob per section.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::types::{FeatureSequence, GroundTruth, Modality, Proposal, ProposalSet, Segment, SnippetTiming};

pub const FEATURE_MAGIC: &[u8; 4] = b"MMFS";
pub const FEATURE_VERSION: u32 = 1;
pub const FEATURE_HEADER_LEN: usize = 49;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MMCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureFileHeader {
    pub modality: Modality,
    pub len: u64,
    pub dim: u64,
    pub start_offset: f64,
    pub hop: f64,
    pub window: f64,
}

impl FeatureFileHeader {
    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(FEATURE_MAGIC);
        out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
        out.push(self.modality.code());
        out.extend_from_slice(&self.len.to_le_bytes());
        out.extend_from_slice(&self.dim.to_le_bytes());
        out.extend_from_slice(&self.start_offset.to_le_bytes());
        out.extend_from_slice(&self.hop.to_le_bytes());
        out.extend_from_slice(&self.window.to_le_bytes());
    }

    fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < FEATURE_HEADER_LEN {
            return Err(Error::Length {
                expected: FEATURE_HEADER_LEN as u64,
                actual: bytes.len() as u64,
            });
        }
        if &bytes[0..4] != FEATURE_MAGIC {
            return Err(Error::Format(format!("bad magic {:?}", &bytes[0..4])));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FEATURE_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let modality = Modality::from_code(bytes[8])
            .ok_or_else(|| Error::Format(format!("unknown modality code {}", bytes[8])))?;
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        Ok(Self {
            modality,
            len: u64_at(9),
            dim: u64_at(17),
            start_offset: f64_at(25),
            hop: f64_at(33),
            window: f64_at(41),
        })
    }
}

/// Encodes a sequence as an `MMFS` byte buffer. Values are narrowed to
/// `f32`; a value that overflows `f32` is a validation error.
pub fn encode_features(seq: &FeatureSequence) -> Result<Vec<u8>> {
    let t = seq.timing();
    let header = FeatureFileHeader {
        modality: seq.modality(),
        len: seq.len() as u64,
        dim: seq.dim() as u64,
        start_offset: t.start_offset(),
        hop: t.hop(),
        window: t.window(),
    };
    let values = seq.data().as_slice();
    let mut out = Vec::with_capacity(FEATURE_HEADER_LEN + 4 * values.len());
    header.encode(&mut out);
    for &v in values {
        let narrow = v as f32;
        if !narrow.is_finite() {
            return Err(Error::validation(format!("value {v} does not fit in f32")));
        }
        out.extend_from_slice(&narrow.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureSequence> {
    let header = FeatureFileHeader::decode(bytes)?;
    if header.len == 0 || header.dim == 0 {
        return Err(Error::Format(format!("empty shape {}x{}", header.len, header.dim)));
    }
    let count = header
        .len
        .checked_mul(header.dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format("shape overflows".into()))?;
    let expected = FEATURE_HEADER_LEN as u64 + count;
    if bytes.len() as u64 != expected {
        return Err(Error::Length {
            expected,
            actual: bytes.len() as u64,
        });
    }
    let timing = SnippetTiming::new(header.start_offset, header.hop, header.window)?;
    let data: Vec<f64> = bytes[FEATURE_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let matrix = Matrix::from_vec(header.len as usize, header.dim as usize, data)?;
    FeatureSequence::new(header.modality, matrix, timing)
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureSequence> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes)
}

pub fn write_features(seq: &FeatureSequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_features(seq)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProposalRecord {
    video_id: String,
    t_start: f64,
    t_end: f64,
    label: String,
    score: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentRecord {
    video_id: String,
    t_start: f64,
    t_end: f64,
    label: String,
}

/// Reads newline-delimited JSON records, calling `f` with each non-blank
/// line's parsed value and its 1-based line number.
pub(crate) fn read_records<T, F>(path: &Path, mut f: F) -> Result<()>
where
    T: for<'de> Deserialize<'de>,
    F: FnMut(T, usize) -> std::result::Result<(), String>,
{
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record_err = |message: String| Error::Record {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let rec: T = serde_json::from_str(&line).map_err(|e| record_err(e.to_string()))?;
        f(rec, line_no).map_err(record_err)?;
    }
    Ok(())
}

pub(crate) fn write_records<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for rec in records {
        let line = serde_json::to_string(&rec).expect("records serialize");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Groups records by `video_id` in order of first appearance; within a
/// video, line order is preserved.
fn group_by_video<T>(items: Vec<(String, T)>) -> Vec<(String, Vec<T>)> {
    let mut groups: Vec<(String, Vec<T>)> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for (vid, item) in items {
        let slot = *index.entry(vid.clone()).or_insert_with(|| {
            groups.push((vid, Vec::new()));
            groups.len() - 1
        });
        groups[slot].1.push(item);
    }
    groups
}

pub fn read_proposals(path: impl AsRef<Path>) -> Result<Vec<ProposalSet>> {
    let path = path.as_ref();
    let mut items = Vec::new();
    read_records(path, |r: ProposalRecord, _| {
        let p = Proposal::new(r.t_start, r.t_end, r.label, r.score).map_err(|e| e.to_string())?;
        items.push((r.video_id, p));
        Ok(())
    })?;
    Ok(group_by_video(items)
        .into_iter()
        .map(|(video_id, proposals)| ProposalSet { video_id, proposals })
        .collect())
}

pub fn write_proposals(sets: &[ProposalSet], path: impl AsRef<Path>) -> Result<()> {
    let records = sets.iter().flat_map(|s| {
        s.proposals.iter().map(move |p| ProposalRecord {
            video_id: s.video_id.clone(),
            t_start: p.t_start,
            t_end: p.t_end,
            label: p.label.clone(),
            score: p.score,
        })
    });
    write_records(path.as_ref(), records)
}

/// Reads annotation records. The line format carries no duration, so each
/// video's duration is the latest segment end.
pub fn read_ground_truth(path: impl AsRef<Path>) -> Result<Vec<GroundTruth>> {
    let path = path.as_ref();
    let mut items = Vec::new();
    read_records(path, |r: SegmentRecord, _| {
        if !(r.t_start.is_finite() && r.t_end.is_finite()) || r.t_start < 0.0 || r.t_start >= r.t_end {
            return Err(format!("invalid segment [{}, {}]", r.t_start, r.t_end));
        }
        items.push((r.video_id, Segment::new(r.t_start, r.t_end, r.label)));
        Ok(())
    })?;
    group_by_video(items)
        .into_iter()
        .map(|(vid, segments)| {
            let duration = segments.iter().map(|s| s.t_end).fold(0.0, f64::max);
            GroundTruth::new(vid, duration, segments)
        })
        .collect()
}

pub fn write_ground_truth(gts: &[GroundTruth], path: impl AsRef<Path>) -> Result<()> {
    let records = gts.iter().flat_map(|g| {
        g.segments.iter().map(move |s| SegmentRecord {
            video_id: g.video_id.clone(),
            t_start: s.t_start,
            t_end: s.t_end,
            label: s.label.clone(),
        })
    });
    write_records(path.as_ref(), records)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Section {
    Matrix(Matrix),
    Text(String),
}

/// Named sections of `f64` matrices and text, stored in the `MMCK` container.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub sections: Vec<(String, Section)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put_matrix(&mut self, name: impl Into<String>, m: Matrix) {
        self.sections.push((name.into(), Section::Matrix(m)));
    }

    pub fn put_text(&mut self, name: impl Into<String>, s: impl Into<String>) {
        self.sections.push((name.into(), Section::Text(s.into())));
    }

    pub fn matrix(&self, name: &str) -> Result<&Matrix> {
        match self.sections.iter().find(|(n, _)| n == name) {
            Some((_, Section::Matrix(m))) => Ok(m),
            _ => Err(Error::Format(format!("checkpoint has no matrix section {name:?}"))),
        }
    }

    pub fn text(&self, name: &str) -> Result<&str> {
        match self.sections.iter().find(|(n, _)| n == name) {
            Some((_, Section::Text(s))) => Ok(s),
            _ => Err(Error::Format(format!("checkpoint has no text section {name:?}"))),
        }
    }

    pub fn has(&self, name: &str) -> bool {
        self.sections.iter().any(|(n, _)| n == name)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.sections.len() as u32).to_le_bytes());
        for (name, section) in &self.sections {
            let name = name.as_bytes();
            match section {
                Section::Matrix(m) => {
                    out.push(0);
                    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
                    out.extend_from_slice(name);
                    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
                    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
                }
                Section::Text(s) => {
                    out.push(1);
                    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
                    out.extend_from_slice(name);
                    out.extend_from_slice(&(s.len() as u64).to_le_bytes());
                    out.extend_from_slice(&0u64.to_le_bytes());
                }
            }
        }
        for (_, section) in &self.sections {
            match section {
                Section::Matrix(m) => m
                    .as_slice()
                    .iter()
                    .for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
                Section::Text(s) => out.extend_from_slice(s.as_bytes()),
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("bad checkpoint magic".into()));
        }
        let version = cur.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let count = cur.u32()? as usize;
        let mut table = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let kind = cur.take(1)?[0];
            let name_len = u16::from_le_bytes(cur.take(2)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(cur.take(name_len)?)
                .map_err(|_| Error::Format("section name is not UTF-8".into()))?
                .to_string();
            let a = cur.u64()?;
            let b = cur.u64()?;
            table.push((kind, name, a, b));
        }
        let mut sections = Vec::with_capacity(table.len());
        for (kind, name, a, b) in table {
            let section = match kind {
                0 => {
                    let n = a
                        .checked_mul(b)
                        .and_then(|n| n.checked_mul(8))
                        .ok_or_else(|| Error::Format("section shape overflows".into()))?;
                    let data = cur
                        .take(n as usize)?
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect();
                    Section::Matrix(Matrix::from_vec(a as usize, b as usize, data)?)
                }
                1 => {
                    let s = std::str::from_utf8(cur.take(a as usize)?)
                        .map_err(|_| Error::Format("text section is not UTF-8".into()))?;
                    Section::Text(s.to_string())
                }
                k => return Err(Error::Format(format!("unknown section kind {k}"))),
            };
            sections.push((name, section));
        }
        if cur.pos != bytes.len() {
            return Err(Error::Length {
                expected: cur.pos as u64,
                actual: bytes.len() as u64,
            });
        }
        Ok(Self { sections })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(Error::Length {
                expected: (self.pos + n) as u64,
                actual: self.bytes.len() as u64,
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
