//! Dataset persistence.
//!
//! Binary layout (all little-endian): magic `BCTD`, format version u32,
//! num_samples u64, dim u32, num_classes u32, then per sample a u32 label
//! followed by `dim` f64 values. Round-trips are bit-exact. A CSV importer
//! (header `label,f0,...,f{dim-1}`) is provided for interoperability.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};

pub(crate) const DATASET_MAGIC: &[u8; 4] = b"BCTD";
pub(crate) const FORMAT_VERSION: u32 = 1;

pub(crate) fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn write_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn read_u32(r: &mut impl Read, path: &Path, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::corrupt(path, format!("truncated while reading {what}")))?;
    Ok(u32::from_le_bytes(buf))
}

pub(crate) fn read_u64(r: &mut impl Read, path: &Path, what: &str) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)
        .map_err(|_| Error::corrupt(path, format!("truncated while reading {what}")))?;
    Ok(u64::from_le_bytes(buf))
}

pub(crate) fn read_f64(r: &mut impl Read, path: &Path, what: &str) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)
        .map_err(|_| Error::corrupt(path, format!("truncated while reading {what}")))?;
    Ok(f64::from_le_bytes(buf))
}

pub(crate) fn read_magic(r: &mut impl Read, path: &Path, expect: &[u8; 4]) -> Result<()> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::corrupt(path, "truncated magic"))?;
    if &buf != expect {
        return Err(Error::corrupt(
            path,
            format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&buf),
                String::from_utf8_lossy(expect)
            ),
        ));
    }
    Ok(())
}

pub(crate) fn expect_eof(r: &mut impl Read, path: &Path) -> Result<()> {
    let mut buf = [0u8; 1];
    match r.read(&mut buf)? {
        0 => Ok(()),
        _ => Err(Error::corrupt(path, "trailing bytes after payload")),
    }
}

pub fn save_dataset(ds: &LabeledDataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(DATASET_MAGIC)?;
    write_u32(&mut w, FORMAT_VERSION)?;
    write_u64(&mut w, ds.len() as u64)?;
    write_u32(&mut w, ds.dim() as u32)?;
    write_u32(&mut w, ds.num_classes())?;
    for i in 0..ds.len() {
        write_u32(&mut w, ds.label(i))?;
        for &v in ds.feature(i) {
            write_f64(&mut w, v)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<LabeledDataset> {
    let mut r = BufReader::new(File::open(path)?);
    read_magic(&mut r, path, DATASET_MAGIC)?;
    let version = read_u32(&mut r, path, "version")?;
    if version != FORMAT_VERSION {
        return Err(Error::corrupt(path, format!("unsupported version {version}")));
    }
    let n = read_u64(&mut r, path, "num_samples")? as usize;
    let dim = read_u32(&mut r, path, "dim")? as usize;
    let num_classes = read_u32(&mut r, path, "num_classes")?;
    if dim == 0 || num_classes == 0 {
        return Err(Error::corrupt(path, "zero dim or class count"));
    }
    let mut features = Array2::<f64>::zeros((n, dim));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = read_u32(&mut r, path, "label")?;
        if label >= num_classes {
            return Err(Error::corrupt(path, format!("label {label} >= {num_classes}")));
        }
        labels.push(label);
        for j in 0..dim {
            features[(i, j)] = read_f64(&mut r, path, "feature")?;
        }
    }
    expect_eof(&mut r, path)?;
    LabeledDataset::new(features, labels, num_classes)
        .map_err(|e| Error::corrupt(path, e.to_string()))
}

/// Imports `label,f0,...,f{dim-1}` CSV. The class count is inferred as
/// max(label)+1; classes absent from the file are still counted.
pub fn load_dataset_csv(path: &Path) -> Result<LabeledDataset> {
    let mut text = String::new();
    BufReader::new(File::open(path)?).read_to_string(&mut text)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());

    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::corrupt(path, "empty file"))?;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.first() != Some(&"label") || cols.len() < 2 {
        return Err(Error::corrupt(path, "header must start with 'label,f0,...'"));
    }
    let dim = cols.len() - 1;
    for (j, c) in cols[1..].iter().enumerate() {
        if *c != format!("f{j}") {
            return Err(Error::corrupt(path, format!("expected column f{j}, got '{c}'")));
        }
    }

    let mut rows: Vec<f64> = Vec::new();
    let mut labels: Vec<u32> = Vec::new();
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != dim + 1 {
            return Err(Error::corrupt(
                path,
                format!("line {}: expected {} fields, got {}", lineno + 1, dim + 1, fields.len()),
            ));
        }
        let label: u32 = fields[0].trim().parse().map_err(|_| {
            Error::corrupt(path, format!("line {}: bad label '{}'", lineno + 1, fields[0]))
        })?;
        labels.push(label);
        for f in &fields[1..] {
            let v: f64 = f.trim().parse().map_err(|_| {
                Error::corrupt(path, format!("line {}: bad value '{f}'", lineno + 1))
            })?;
            rows.push(v);
        }
    }
    if labels.is_empty() {
        return Err(Error::corrupt(path, "no data rows"));
    }
    let n = labels.len();
    let num_classes = labels.iter().copied().max().unwrap_or(0) + 1;
    let features = Array2::from_shape_vec((n, dim), rows)
        .map_err(|e| Error::corrupt(path, e.to_string()))?;
    LabeledDataset::new(features, labels, num_classes)
        .map_err(|e| Error::corrupt(path, e.to_string()))
}
