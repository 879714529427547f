//! On-disk dataset formats.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! magic "CSSMDS01" (8 bytes)
//! u32 version = 1, u32 M, u32 T, u32 n_samples, u32 n_classes, f64 fs
//! per sample: u32 label, u32 group_id, M*T f32 (electrode-major)
//! ```
//!
//! Values are stored in single precision; saving rounds to the nearest f32.
//! The CSV importer rounds the same way so both paths load identical data.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::dataset::{LabeledDataset, SignalTensor};
use crate::error::{CssmError, Result};

pub const DATASET_MAGIC: &[u8; 8] = b"CSSMDS01";
pub const DATASET_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 * 5 + 8;

pub fn encode_dataset(ds: &LabeledDataset) -> Result<Vec<u8>> {
    ds.validate()?;
    let (m, t, fs) = ds
        .dims()
        .ok_or_else(|| CssmError::config("cannot save an empty dataset"))?;
    let mut buf = Vec::with_capacity(HEADER_LEN + ds.len() * (8 + 4 * m * t));
    buf.extend_from_slice(DATASET_MAGIC);
    for v in [
        DATASET_VERSION,
        m as u32,
        t as u32,
        ds.len() as u32,
        ds.n_classes as u32,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&fs.to_le_bytes());
    for ((s, &label), &group) in ds.samples.iter().zip(&ds.labels).zip(&ds.groups) {
        buf.extend_from_slice(&(label as u32).to_le_bytes());
        buf.extend_from_slice(&group.to_le_bytes());
        for &v in s.data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(buf)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(CssmError::format(
                self.pos as u64,
                format!(
                    "truncated while reading {what}: need {n} bytes, {} left",
                    self.bytes.len() - self.pos
                ),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode_dataset(bytes: &[u8]) -> Result<LabeledDataset> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(8, "magic")?;
    if magic != DATASET_MAGIC {
        return Err(CssmError::format(0, "bad magic, expected \"CSSMDS01\""));
    }
    let version = r.u32("version")?;
    if version != DATASET_VERSION {
        return Err(CssmError::format(
            8,
            format!("unsupported version {version}"),
        ));
    }
    let m = r.u32("M")? as usize;
    let t = r.u32("T")? as usize;
    let n = r.u32("n_samples")? as usize;
    let n_classes = r.u32("n_classes")? as usize;
    let fs_offset = r.pos;
    let fs = r.f64("fs")?;
    if m < 1 || t < 2 {
        return Err(CssmError::format(
            12,
            format!("invalid dimensions M={m}, T={t}"),
        ));
    }
    if !(fs > 0.0 && fs.is_finite()) {
        return Err(CssmError::format(
            fs_offset as u64,
            format!("invalid sampling rate {fs}"),
        ));
    }
    let per_sample = 8 + 4 * m * t;
    let expected = HEADER_LEN + n * per_sample;
    if bytes.len() > expected {
        return Err(CssmError::format(
            expected as u64,
            format!(
                "dimension mismatch: {} trailing bytes after {n} samples of {m}x{t}",
                bytes.len() - expected
            ),
        ));
    }
    let mut samples = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    for i in 0..n {
        let label_offset = r.pos;
        let label = r.u32("label")? as usize;
        if label >= n_classes {
            return Err(CssmError::format(
                label_offset as u64,
                format!("sample {i}: label {label} outside [0, {n_classes})"),
            ));
        }
        let group = r.u32("group id")?;
        let raw = r.take(4 * m * t, "sample values")?;
        let data: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let s = SignalTensor::new(m, t, data, fs)
            .map_err(|e| CssmError::format(label_offset as u64, format!("sample {i}: {e}")))?;
        samples.push(s);
        labels.push(label);
        groups.push(group);
    }
    LabeledDataset::new(samples, labels, groups, n_classes)
}

/// Writes atomically: the dataset lands under `path` only once fully written.
pub fn save_dataset(ds: &LabeledDataset, path: &Path) -> Result<()> {
    let bytes = encode_dataset(ds)?;
    write_atomic(path, &bytes)
}

pub fn load_dataset(path: &Path) -> Result<LabeledDataset> {
    let bytes = fs::read(path).map_err(|e| CssmError::io(path, e))?;
    decode_dataset(&bytes)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    let mut f = fs::File::create(&tmp).map_err(|e| CssmError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| CssmError::io(&tmp, e))?;
    f.sync_all().map_err(|e| CssmError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| CssmError::io(path, e))
}

/// Parses one `M rows x T columns` CSV table (comma separated, no header).
pub fn parse_csv_table(text: &str) -> Result<(usize, usize, Vec<f64>)> {
    let mut data = Vec::new();
    let mut n_cols = None;
    let mut n_rows = 0;
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|c| {
                c.trim().parse::<f64>().map_err(|_| {
                    CssmError::format(
                        line_no as u64,
                        format!("line {}: bad number {c:?}", line_no + 1),
                    )
                })
            })
            .collect::<Result<_>>()?;
        match n_cols {
            None => n_cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(CssmError::format(
                    line_no as u64,
                    format!("line {}: {} columns, expected {c}", line_no + 1, row.len()),
                ))
            }
            _ => {}
        }
        data.extend(row.into_iter().map(|v| v as f32 as f64));
        n_rows += 1;
    }
    let t = n_cols.ok_or_else(|| CssmError::format(0, "empty CSV table"))?;
    Ok((n_rows, t, data))
}

/// Imports a dataset of one-CSV-per-sample files.
///
/// The manifest is a CSV with header `file,label,group`; `file` paths are
/// resolved relative to the manifest's directory.
pub fn import_csv_dataset(manifest: &Path, fs: f64, n_classes: usize) -> Result<LabeledDataset> {
    let text = fs::read_to_string(manifest).map_err(|e| CssmError::io(manifest, e))?;
    let base = manifest.parent().unwrap_or_else(|| Path::new("."));
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    let mut groups = Vec::new();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "file,label,group" => {}
        _ => {
            return Err(CssmError::format(
                0,
                "manifest header must be `file,label,group`",
            ))
        }
    }
    for (line_no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(CssmError::format(
                line_no as u64,
                format!("manifest line {}: expected 3 columns", line_no + 1),
            ));
        }
        let bad = |what: &str| {
            CssmError::format(
                line_no as u64,
                format!("manifest line {}: bad {what}", line_no + 1),
            )
        };
        let label: usize = cols[1].parse().map_err(|_| bad("label"))?;
        let group: u32 = cols[2].parse().map_err(|_| bad("group"))?;
        let path = base.join(cols[0]);
        let table = fs::read_to_string(&path).map_err(|e| CssmError::io(&path, e))?;
        let (m, t, data) = parse_csv_table(&table)?;
        samples.push(SignalTensor::new(m, t, data, fs)?);
        labels.push(label);
        groups.push(group);
    }
    LabeledDataset::new(samples, labels, groups, n_classes)
}
