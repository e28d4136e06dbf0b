//! Dataset readers (IDX, CSV, libsvm) and result writers.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::dataset::{DataSet, Provenance};
use crate::error::{KkmError, Result};

const IDX_U8_IMAGES: u32 = 0x0000_0803;
const IDX_U8_LABELS: u32 = 0x0000_0801;
const IDX_F32_IMAGES: u32 = 0x0000_0D03;

fn read_all(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| KkmError::io(path, e))
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| KkmError::format_at_offset(path, offset, "file ends inside the header"))
}

/// Images as `(n, d, values)`; u8 pixels are scaled to `[0, 1]`.
pub fn read_idx_images(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let bytes = read_all(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    let width = match magic {
        IDX_U8_IMAGES => 1,
        IDX_F32_IMAGES => 4,
        other => {
            return Err(KkmError::format_at_offset(
                path,
                0,
                format!("bad image magic 0x{other:08x}, expected 0x{IDX_U8_IMAGES:08x} or 0x{IDX_F32_IMAGES:08x}"),
            ))
        }
    };
    let n = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    let d = rows * cols;
    if n == 0 || d == 0 {
        return Err(KkmError::format_at_offset(path, 4, "image count and dimensions must be positive"));
    }
    let need = n * d * width;
    let body = &bytes[16..];
    if body.len() < need {
        return Err(KkmError::format_at_offset(
            path,
            16 + body.len(),
            format!("truncated pixel data: expected {need} bytes after the header, found {}", body.len()),
        ));
    }
    if body.len() > need {
        return Err(KkmError::format_at_offset(path, 16 + need, "trailing bytes after pixel data"));
    }
    let values = if width == 1 {
        body.iter().map(|&p| p as f64 / 255.0).collect()
    } else {
        body.chunks_exact(4)
            .map(|b| f32::from_be_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect()
    };
    Ok((n, d, values))
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u32>> {
    let bytes = read_all(path)?;
    let magic = be_u32(&bytes, 0, path)?;
    if magic != IDX_U8_LABELS {
        return Err(KkmError::format_at_offset(
            path,
            0,
            format!("bad label magic 0x{magic:08x}, expected 0x{IDX_U8_LABELS:08x}"),
        ));
    }
    let n = be_u32(&bytes, 4, path)? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(KkmError::format_at_offset(
            path,
            8 + body.len().min(n),
            format!("label section holds {} bytes, header says {n}", body.len()),
        ));
    }
    Ok(body.iter().map(|&b| b as u32).collect())
}

pub fn load_idx(images: &Path, labels: Option<&Path>) -> Result<DataSet> {
    let (n, d, values) = read_idx_images(images)?;
    let labels = match labels {
        Some(p) => {
            let l = read_idx_labels(p)?;
            if l.len() != n {
                return Err(KkmError::format_at_offset(
                    p,
                    4,
                    format!("label count {} does not match image count {n}", l.len()),
                ));
            }
            Some(l)
        }
        None => None,
    };
    let ds = DataSet::new(n, d, values, labels)?;
    Ok(ds.with_provenance(Provenance {
        source: images.display().to_string(),
        format: "idx".into(),
        notes: vec!["u8 pixels scaled to [0,1]".into()],
    }))
}

/// Writes samples as an f32 IDX image file with shape `n × 1 × d`.
pub fn write_idx_images_f32(path: &Path, data: &DataSet) -> Result<()> {
    let f = File::create(path).map_err(|e| KkmError::io(path, e))?;
    let mut w = BufWriter::new(f);
    let io = |e| KkmError::io(path, e);
    w.write_all(&IDX_F32_IMAGES.to_be_bytes()).map_err(io)?;
    for v in [data.len() as u32, 1, data.dim() as u32] {
        w.write_all(&v.to_be_bytes()).map_err(io)?;
    }
    for &v in data.samples() {
        w.write_all(&(v as f32).to_be_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_idx_labels(path: &Path, labels: &[u32]) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + labels.len());
    bytes.extend_from_slice(&IDX_U8_LABELS.to_be_bytes());
    bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &l in labels {
        let b = u8::try_from(l).map_err(|_| KkmError::input(format!("label {l} does not fit in an IDX byte")))?;
        bytes.push(b);
    }
    std::fs::write(path, bytes).map_err(|e| KkmError::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> KkmError {
    if e.is_io_error() {
        if let csv::ErrorKind::Io(io) = e.into_kind() {
            return KkmError::io(path, io);
        }
        unreachable!("is_io_error checked the kind");
    }
    let line = e.position().map_or(0, |p| p.line() as usize);
    KkmError::format_at_line(path, line, e.to_string())
}

/// Numeric CSV, one sample per row. With `has_labels` the last column is an
/// integer class id. A first row with no numeric field is taken as a header.
pub fn load_csv(path: &Path, has_labels: bool) -> Result<DataSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;
    let mut n = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(n + 1, |p| p.line() as usize);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if n == 0 && width.is_none() && rec.iter().all(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        match width {
            None => width = Some(rec.len()),
            Some(w) if w != rec.len() => {
                return Err(KkmError::format_at_line(
                    path,
                    line,
                    format!("ragged row: {} fields, expected {w}", rec.len()),
                ))
            }
            _ => {}
        }
        let feat_end = if has_labels { rec.len() - 1 } else { rec.len() };
        if feat_end == 0 {
            return Err(KkmError::format_at_line(path, line, "row has no feature columns"));
        }
        for (k, field) in rec.iter().enumerate() {
            if k < feat_end {
                let v: f64 = field.parse().map_err(|_| {
                    KkmError::format_at_line(path, line, format!("non-numeric field '{field}' in column {}", k + 1))
                })?;
                if !v.is_finite() {
                    return Err(KkmError::format_at_line(path, line, format!("non-finite value in column {}", k + 1)));
                }
                samples.push(v);
            } else {
                labels.push(parse_label(field).ok_or_else(|| {
                    KkmError::format_at_line(path, line, format!("label '{field}' is not a non-negative integer"))
                })?);
            }
        }
        n += 1;
    }
    let Some(w) = width else {
        return Err(KkmError::input(format!("{} contains no samples", path.display())));
    };
    let d = if has_labels { w - 1 } else { w };
    let ds = DataSet::new(n, d, samples, has_labels.then_some(labels))?;
    Ok(ds.with_provenance(Provenance {
        source: path.display().to_string(),
        format: "csv".into(),
        notes: Vec::new(),
    }))
}

fn parse_label(field: &str) -> Option<u32> {
    field.parse::<u32>().ok().or_else(|| {
        let v: f64 = field.parse().ok()?;
        (v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64).then_some(v as u32)
    })
}

/// libsvm rows `label idx:value ...` with 1-based indices, densified to `dim`.
pub fn load_libsvm(path: &Path, dim: usize) -> Result<DataSet> {
    if dim == 0 {
        return Err(KkmError::input("libsvm input needs a positive --dim"));
    }
    let f = File::open(path).map_err(|e| KkmError::io(path, e))?;
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for (k, line) in BufReader::new(f).lines().enumerate() {
        let lineno = k + 1;
        let line = line.map_err(|e| KkmError::io(path, e))?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let label = parts.next().expect("non-empty line");
        labels.push(
            parse_label(label)
                .ok_or_else(|| KkmError::format_at_line(path, lineno, format!("label '{label}' is not a non-negative integer")))?,
        );
        let base = samples.len();
        samples.resize(base + dim, 0.0);
        for tok in parts {
            let (i, v) = tok
                .split_once(':')
                .ok_or_else(|| KkmError::format_at_line(path, lineno, format!("expected index:value, got '{tok}'")))?;
            let i: usize = i
                .parse()
                .map_err(|_| KkmError::format_at_line(path, lineno, format!("bad feature index '{i}'")))?;
            if i == 0 || i > dim {
                return Err(KkmError::format_at_line(
                    path,
                    lineno,
                    format!("feature index {i} outside 1..={dim}"),
                ));
            }
            let v: f64 = v
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| KkmError::format_at_line(path, lineno, format!("bad feature value '{v}'")))?;
            samples[base + i - 1] = v;
        }
    }
    if labels.is_empty() {
        return Err(KkmError::input(format!("{} contains no samples", path.display())));
    }
    let ds = DataSet::new(labels.len(), dim, samples, Some(labels))?;
    Ok(ds.with_provenance(Provenance {
        source: path.display().to_string(),
        format: "libsvm".into(),
        notes: vec![format!("densified to {dim} features")],
    }))
}

/// Label vectors from `sample_index,label` CSV (header optional) or a single
/// label column.
pub fn read_labels_csv(path: &Path) -> Result<Vec<u32>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if out.is_empty() && rec.iter().all(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        let (idx, label) = match rec.len() {
            1 => (out.len(), &rec[0]),
            2 => {
                let i: usize = rec[0]
                    .parse()
                    .map_err(|_| KkmError::format_at_line(path, line, format!("bad sample index '{}'", &rec[0])))?;
                (i, &rec[1])
            }
            n => return Err(KkmError::format_at_line(path, line, format!("expected 1 or 2 fields, got {n}"))),
        };
        if idx != out.len() {
            return Err(KkmError::format_at_line(
                path,
                line,
                format!("sample index {idx} out of order, expected {}", out.len()),
            ));
        }
        out.push(parse_label(label).ok_or_else(|| KkmError::format_at_line(path, line, format!("bad label '{label}'")))?);
    }
    if out.is_empty() {
        return Err(KkmError::input(format!("{} contains no labels", path.display())));
    }
    Ok(out)
}

pub fn write_labels_csv(path: &Path, labels: &[u32]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["sample_index", "label"]).map_err(|e| csv_error(path, e))?;
    for (i, l) in labels.iter().enumerate() {
        w.write_record([i.to_string(), l.to_string()]).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| KkmError::io(path, e))
}

/// `cluster,global_sample_index`; absent medoids are skipped.
pub fn write_medoids_csv(path: &Path, medoids: &[Option<usize>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["cluster", "global_sample_index"]).map_err(|e| csv_error(path, e))?;
    for (j, m) in medoids.iter().enumerate() {
        if let Some(m) = m {
            w.write_record([j.to_string(), m.to_string()]).map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| KkmError::io(path, e))
}

/// Features followed by the label column when labels are present.
pub fn write_dataset_csv(path: &Path, data: &DataSet) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut rec: Vec<String> = Vec::with_capacity(data.dim() + 1);
    for i in 0..data.len() {
        rec.clear();
        rec.extend(data.row(i).iter().map(|v| v.to_string()));
        if let Some(l) = data.labels() {
            rec.push(l[i].to_string());
        }
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| KkmError::io(path, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = File::create(path).map_err(|e| KkmError::io(path, e))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| KkmError::io(path, std::io::Error::other(e)))?;
    w.write_all(b"\n").map_err(|e| KkmError::io(path, e))?;
    w.flush().map_err(|e| KkmError::io(path, e))
}
