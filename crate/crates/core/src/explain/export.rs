//! Writing explanation maps as CSV, raw binary, electrode scores and PPM.
//!
//! Heatmaps use the "hot" colormap on min-max normalised values `s`:
//! red `3s`, green `3s - 1`, blue `3s - 2`, each clamped to `[0, 1]`.
//! A constant map is drawn entirely at `s = 0` (black).

use std::path::{Path, PathBuf};

use super::gradcam::ExplanationMap;
use crate::error::{CssmError, Result};
use crate::signal_io::write_atomic;
use crate::tensor::Tensor;

pub const MAP_MAGIC: &[u8; 8] = b"CSSMMAP1";

fn check_2d(z: &Tensor) -> Result<(usize, usize)> {
    match *z.shape() {
        [r, c] => Ok((r, c)),
        ref s => Err(CssmError::dim(format!("expected a 2-D map, got {s:?}"))),
    }
}

/// One row per map row: `label,v_0,...,v_(T-1)`, after a header line
/// `<label_title>,0,1,...` naming the time indices.
pub fn map_csv(z: &Tensor, label_title: &str, row_labels: &[String]) -> Result<String> {
    let (rows, cols) = check_2d(z)?;
    if row_labels.len() != rows {
        return Err(CssmError::dim(format!(
            "{} labels for {rows} map rows",
            row_labels.len()
        )));
    }
    let mut s = String::from(label_title);
    for t in 0..cols {
        s.push_str(&format!(",{t}"));
    }
    s.push('\n');
    for (label, row) in row_labels.iter().zip(z.data().chunks_exact(cols)) {
        s.push_str(label);
        for v in row {
            s.push_str(&format!(",{v:e}"));
        }
        s.push('\n');
    }
    Ok(s)
}

/// Inverse of [`map_csv`]: row labels and the `[rows x T]` values.
pub fn parse_map_csv(text: &str) -> Result<(Vec<String>, Tensor)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| CssmError::config("empty map CSV"))?;
    let cols = header.split(',').count() - 1;
    let mut labels = Vec::new();
    let mut data = Vec::new();
    for (i, line) in lines.enumerate() {
        let mut cells = line.split(',');
        labels.push(cells.next().unwrap_or_default().to_string());
        let before = data.len();
        for c in cells {
            data.push(
                c.trim()
                    .parse::<f64>()
                    .map_err(|e| CssmError::config(format!("map CSV row {}: {e}", i + 1)))?,
            );
        }
        if data.len() - before != cols {
            return Err(CssmError::dim(format!(
                "map CSV row {} has {} values, expected {cols}",
                i + 1,
                data.len() - before
            )));
        }
    }
    Ok((
        labels.clone(),
        Tensor::from_vec(&[labels.len(), cols], data),
    ))
}

/// Magic, `u32` rows, `u32` columns, then row-major little-endian `f64`.
pub fn encode_map(z: &Tensor) -> Result<Vec<u8>> {
    let (rows, cols) = check_2d(z)?;
    let mut out = Vec::with_capacity(16 + 8 * z.len());
    out.extend_from_slice(MAP_MAGIC);
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    for v in z.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_map(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 16 || &bytes[..8] != MAP_MAGIC {
        return Err(CssmError::format(0, "not a map file (bad magic)"));
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if body.len() != 8 * rows * cols {
        return Err(CssmError::format(
            16,
            format!(
                "expected {} value bytes, found {}",
                8 * rows * cols,
                body.len()
            ),
        ));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Tensor::from_vec(&[rows, cols], data))
}

/// `electrode_label,score` with the temporal mean of each row of `z_ch`.
pub fn topo_csv(z_ch: &Tensor, electrode_labels: &[String]) -> Result<String> {
    let (rows, cols) = check_2d(z_ch)?;
    if electrode_labels.len() != rows {
        return Err(CssmError::dim(format!(
            "{} labels for {rows} electrodes",
            electrode_labels.len()
        )));
    }
    let mut s = String::from("electrode_label,score\n");
    for (label, row) in electrode_labels.iter().zip(z_ch.data().chunks_exact(cols)) {
        s.push_str(&format!(
            "{label},{:e}\n",
            row.iter().sum::<f64>() / cols as f64
        ));
    }
    Ok(s)
}

pub fn hot_color(s: f64) -> [u8; 3] {
    let ch = |x: f64| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
    [ch(3.0 * s), ch(3.0 * s - 1.0), ch(3.0 * s - 2.0)]
}

/// Binary PPM (`P6`), one pixel per map entry: width `T`, height rows.
pub fn heatmap_ppm(z: &Tensor) -> Result<Vec<u8>> {
    let (rows, cols) = check_2d(z)?;
    let lo = z.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = z.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let mut out = format!("P6\n{cols} {rows}\n255\n").into_bytes();
    for &v in z.data() {
        let s = if span > 0.0 { (v - lo) / span } else { 0.0 };
        out.extend_from_slice(&hot_color(s));
    }
    Ok(out)
}

/// Width, height and pixels of a `P6` image written by [`heatmap_ppm`].
pub fn parse_ppm(bytes: &[u8]) -> Result<(usize, usize, Vec<[u8; 3]>)> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(CssmError::format(pos as u64, "truncated PPM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    let num = |i: usize| {
        fields[i]
            .parse::<usize>()
            .map_err(|_| CssmError::format(0, format!("bad PPM header field {:?}", fields[i])))
    };
    if fields[0] != "P6" {
        return Err(CssmError::format(0, "not a P6 image"));
    }
    let (w, h) = (num(1)?, num(2)?);
    let px = bytes
        .get(pos..)
        .filter(|b| b.len() == 3 * w * h)
        .ok_or_else(|| CssmError::format(pos as u64, "PPM pixel data has the wrong length"))?;
    Ok((
        w,
        h,
        px.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
    ))
}

/// Writes `<stem>_ch.csv`, `<stem>_ch.bin`, `<stem>_topo.csv`,
/// `<stem>_freq.csv`, `<stem>_freq.bin` for the maps present, plus `.ppm`
/// heatmaps when `heatmaps` is set. Returns the written paths.
pub fn export_maps(
    map: &ExplanationMap,
    electrode_labels: &[String],
    freqs_hz: &[f64],
    dir: &Path,
    stem: &str,
    heatmaps: bool,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| CssmError::io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: String, bytes: Vec<u8>| -> Result<()> {
        let p = dir.join(name);
        write_atomic(&p, &bytes)?;
        written.push(p);
        Ok(())
    };
    if let Some(z) = &map.z_ch {
        put(
            format!("{stem}_ch.csv"),
            map_csv(z, "electrode", electrode_labels)?.into_bytes(),
        )?;
        put(format!("{stem}_ch.bin"), encode_map(z)?)?;
        put(
            format!("{stem}_topo.csv"),
            topo_csv(z, electrode_labels)?.into_bytes(),
        )?;
        if heatmaps {
            put(format!("{stem}_ch.ppm"), heatmap_ppm(z)?)?;
        }
    }
    if let Some(z) = &map.z_freq {
        let labels: Vec<String> = freqs_hz.iter().map(|f| format!("{f:.4}")).collect();
        put(
            format!("{stem}_freq.csv"),
            map_csv(z, "freq_hz", &labels)?.into_bytes(),
        )?;
        put(format!("{stem}_freq.bin"), encode_map(z)?)?;
        if heatmaps {
            put(format!("{stem}_freq.ppm"), heatmap_ppm(z)?)?;
        }
    }
    Ok(written)
}
