//! `FEMB` embedding-store format and a tab-separated text importer.
//!
//! Binary layout: magic `FEMB`, u16 version, u32 n_samples, u32 dim,
//! u32 vocab_size (all little-endian); vocabulary codes then sample ids as
//! u16-length-prefixed UTF-8; embeddings as n × dim f32 row-major; then per
//! sample a u32 label count followed by u32 label ids.

use std::path::Path;

use super::{EmbeddingDataset, LabelVocabulary};
use crate::bytes::{put_f32_block, ByteReader, Truncation};
use crate::error::{Error, Result};
use crate::numkit::Matrix;

pub const FEMB_MAGIC: &[u8; 4] = b"FEMB";
pub const FEMB_VERSION: u16 = 1;

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<()> {
    let len = u16::try_from(s.len()).map_err(|_| Error::Config(format!("string of {} bytes exceeds u16 length", s.len())))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

fn read_str(r: &mut ByteReader<'_>, what: &str) -> Result<String> {
    let len = r.u16_le(what)? as usize;
    let start = r.position();
    let bytes = r.take(len, what)?;
    String::from_utf8(bytes.to_vec()).map_err(|_| Error::format(start, format!("{what} is not valid UTF-8")))
}

pub fn encode_dataset(ds: &EmbeddingDataset) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(18 + ds.len() * (ds.dim() * 4 + 16));
    out.extend_from_slice(FEMB_MAGIC);
    out.extend_from_slice(&FEMB_VERSION.to_le_bytes());
    for v in [ds.len(), ds.dim(), ds.n_labels()] {
        let v = u32::try_from(v).map_err(|_| Error::Config("dataset too large for FEMB".into()))?;
        out.extend_from_slice(&v.to_le_bytes());
    }
    for code in ds.vocab.codes() {
        put_str(&mut out, code)?;
    }
    for id in &ds.sample_ids {
        put_str(&mut out, id)?;
    }
    put_f32_block(&mut out, ds.x.as_slice().iter().copied());
    for set in &ds.labels {
        out.extend_from_slice(&(set.len() as u32).to_le_bytes());
        for &l in set {
            out.extend_from_slice(&l.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<EmbeddingDataset> {
    let mut r = ByteReader::new(bytes, Truncation::Length);
    let magic = r.take(4, "magic").map_err(|_| Error::format(0, "file too short for magic"))?;
    if magic != FEMB_MAGIC {
        return Err(Error::format(0, format!("bad magic {magic:?}")));
    }
    let version = r.u16_le("version")?;
    if version != FEMB_VERSION {
        return Err(Error::format(4, format!("unsupported FEMB version {version}")));
    }
    let n = r.u32_le("n_samples")? as usize;
    let dim = r.u32_le("dim")? as usize;
    let vocab_size = r.u32_le("vocab_size")? as usize;

    let vocab_pos = r.position();
    let codes = (0..vocab_size)
        .map(|_| read_str(&mut r, "vocabulary code"))
        .collect::<Result<Vec<_>>>()?;
    let vocab = LabelVocabulary::from_sorted(codes)
        .map_err(|_| Error::format(vocab_pos, "vocabulary not sorted and unique"))?;
    let sample_ids = (0..n)
        .map(|_| read_str(&mut r, "sample id"))
        .collect::<Result<Vec<_>>>()?;
    let cells = n
        .checked_mul(dim)
        .ok_or_else(|| Error::length(r.position(), "n × dim overflows"))?;
    let x = Matrix::from_vec(n, dim, r.f32_block(cells, "embeddings")?)?;

    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let pos = r.position();
        let count = r.u32_le("label count")? as usize;
        if count > vocab_size {
            return Err(Error::length(pos, format!("sample {i} declares {count} labels, vocabulary has {vocab_size}")));
        }
        let mut set = Vec::with_capacity(count);
        for _ in 0..count {
            let pos = r.position();
            let id = r.u32_le("label id")?;
            if id as usize >= vocab_size || set.last().is_some_and(|&prev| prev >= id) {
                return Err(Error::format(pos, format!("invalid label id {id} for sample {i}")));
            }
            set.push(id);
        }
        labels.push(set);
    }
    if r.remaining() != 0 {
        return Err(Error::length(r.position(), format!("{} trailing bytes", r.remaining())));
    }
    EmbeddingDataset::new(sample_ids, x, labels, vocab)
}

pub fn save_dataset(ds: &EmbeddingDataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_dataset(ds)?)?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<EmbeddingDataset> {
    decode_dataset(&std::fs::read(path)?)
}

/// Parses `id<TAB>v1,v2,…<TAB>code1;code2` lines. Blank lines are skipped;
/// the label field may be empty.
pub fn import_text(text: &str) -> Result<EmbeddingDataset> {
    let mut ids = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut codes: Vec<Vec<String>> = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        let line = line.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let (id, values, labels) = match (fields.next(), fields.next(), fields.next(), fields.next()) {
            (Some(id), Some(v), labels, None) => (id, v, labels.unwrap_or("")),
            _ => return Err(Error::format(start, "expected 2 or 3 tab-separated fields")),
        };
        let row = values
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format(start, format!("bad embedding value: {e}")))?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::format(start, format!("expected {} values, found {}", first.len(), row.len())));
            }
        }
        if let Some(bad) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::format(start, format!("non-finite embedding value {bad}")));
        }
        ids.push(id.to_string());
        rows.push(row);
        codes.push(
            labels
                .split(';')
                .map(str::trim)
                .filter(|c| !c.is_empty())
                .map(String::from)
                .collect(),
        );
    }
    let x = if rows.is_empty() { Matrix::zeros(0, 0) } else { Matrix::from_rows(&rows) };
    EmbeddingDataset::from_codes(ids, x, &codes)
}
