//! Feature matrices on disk.
//!
//! Two encodings are supported:
//!
//! * **FMAT** binary: `b"FMAT"`, a version byte, `u32` rows, `u32` cols (both
//!   little-endian), then `rows * cols` little-endian IEEE-754 values in
//!   row-major order. Version `0x01` stores `f32` and is the feature-file
//!   format; version `0x02` stores `f64` and is used for fitted statistics.
//!   Labels live in a companion **FLAB** file: `b"FLAB"`, `0x01`, `u32` count,
//!   then `count` little-endian `i32` class indices.
//! * **CSV**: one sample per line, comma separated. A header line is optional;
//!   when present and its last column is named `label`, that column carries
//!   the class index.
//!
//! In memory every matrix is `f64`. Writing FMAT v1 rounds to the nearest
//! `f32`, so a binary round-trip is bit-exact for any `f32`-representable data.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const FMAT_MAGIC: &[u8; 4] = b"FMAT";
pub const FLAB_MAGIC: &[u8; 4] = b"FLAB";
pub const FMAT_VERSION_F32: u8 = 0x01;
pub const FMAT_VERSION_F64: u8 = 0x02;
pub const FLAB_VERSION: u8 = 0x01;

/// On-disk encoding of a feature file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Binary,
    Csv,
}

impl Format {
    /// Sniffs the first bytes of a file: FMAT magic means binary, anything else CSV.
    pub fn detect(path: &Path) -> Result<Format> {
        let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut magic = [0u8; 4];
        let mut filled = 0;
        while filled < 4 {
            match file.read(&mut magic[filled..]) {
                Ok(0) => break,
                Ok(n) => filled += n,
                Err(e) => return Err(Error::io(path, e)),
            }
        }
        Ok(if filled == 4 && &magic == FMAT_MAGIC {
            Format::Binary
        } else {
            Format::Csv
        })
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fmat" | "binary" | "bin" => Ok(Format::Binary),
            "csv" => Ok(Format::Csv),
            other => Err(Error::Parameter(format!("unknown format `{other}`"))),
        }
    }
}

/// An N x d embedding matrix with optional class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    data: DMatrix<f64>,
    labels: Option<Vec<u32>>,
    n_classes: usize,
}

impl FeatureSet {
    pub fn new(data: DMatrix<f64>, labels: Option<Vec<u32>>) -> Result<Self> {
        if data.nrows() < 1 {
            return Err(Error::Shape("feature set needs at least one row".into()));
        }
        if data.ncols() < 2 {
            return Err(Error::Shape(format!(
                "feature dimension must be at least 2, got {}",
                data.ncols()
            )));
        }
        check_finite(&data)?;
        let n_classes = match &labels {
            Some(l) => {
                if l.len() != data.nrows() {
                    return Err(Error::Label(format!(
                        "{} labels for {} rows",
                        l.len(),
                        data.nrows()
                    )));
                }
                count_classes(l)?
            }
            None => 0,
        };
        Ok(FeatureSet {
            data,
            labels,
            n_classes,
        })
    }

    /// Builds a set from row vectors.
    pub fn from_rows(rows: &[Vec<f64>], labels: Option<Vec<u32>>) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::Shape(format!(
                "row {bad} has {} columns, expected {d}",
                rows[bad].len()
            )));
        }
        let data = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
        FeatureSet::new(data, labels)
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn n_samples(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    /// Number of classes implied by the labels (0 when unlabeled).
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.data.row(i).transpose()
    }

    pub fn with_labels(self, labels: Vec<u32>) -> Result<Self> {
        FeatureSet::new(self.data, Some(labels))
    }

    pub fn without_labels(self) -> Self {
        FeatureSet {
            data: self.data,
            labels: None,
            n_classes: 0,
        }
    }

    pub fn into_parts(self) -> (DMatrix<f64>, Option<Vec<u32>>) {
        (self.data, self.labels)
    }
}

fn check_finite(data: &DMatrix<f64>) -> Result<()> {
    for i in 0..data.nrows() {
        for j in 0..data.ncols() {
            if !data[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// Validates that labels form a dense range `[0, N_c)` and returns `N_c`.
fn count_classes(labels: &[u32]) -> Result<usize> {
    let Some(&max) = labels.iter().max() else {
        return Ok(0);
    };
    let n_classes = max as usize + 1;
    let mut seen = vec![false; n_classes];
    for &l in labels {
        seen[l as usize] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::Label(format!(
            "class {missing} has no samples (labels span 0..{n_classes})"
        )));
    }
    Ok(n_classes)
}

fn labels_from_i64(raw: &[i64]) -> Result<Vec<u32>> {
    raw.iter()
        .enumerate()
        .map(|(i, &v)| {
            u32::try_from(v)
                .map_err(|_| Error::Label(format!("label {v} at index {i} is out of range")))
        })
        .collect()
}

/// Formats a value with 17 significant digits, like C's `%.17g`.
pub fn fmt_g17(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let mantissa = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (16 - exp) as usize;
        trim_fraction(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Path of the FLAB file that accompanies a binary feature file.
pub fn companion_labels_path(path: &Path) -> PathBuf {
    path.with_extension("flab")
}

/// Reads a feature file. Binary files pick up labels from their companion
/// FLAB file when it exists; CSV files carry them in a `label` column.
pub fn read_features(path: &Path, format: Format) -> Result<FeatureSet> {
    match format {
        Format::Binary => {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            let data = read_fmat(&mut BufReader::new(file)).map_err(|e| at_path(e, path))?;
            let companion = companion_labels_path(path);
            let labels = if companion != path && companion.exists() {
                Some(read_labels(&companion)?)
            } else {
                None
            };
            FeatureSet::new(data, labels)
        }
        Format::Csv => read_csv(path),
    }
}

/// Writes a feature file; binary sets with labels also get a companion FLAB file.
pub fn write_features(set: &FeatureSet, path: &Path, format: Format) -> Result<()> {
    match format {
        Format::Binary => {
            let file = File::create(path).map_err(|e| Error::io(path, e))?;
            let mut w = BufWriter::new(file);
            write_fmat(&mut w, set.data(), FMAT_VERSION_F32).map_err(|e| at_path(e, path))?;
            w.flush().map_err(|e| Error::io(path, e))?;
            if let Some(labels) = set.labels() {
                write_labels(&companion_labels_path(path), labels)?;
            }
            Ok(())
        }
        Format::Csv => write_csv(set, path),
    }
}

fn at_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { source, .. } => Error::io(path, source),
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    }
}

fn read_exact_or_format<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Format(format!("truncated {what}"))
        } else {
            Error::io("<stream>", e)
        }
    })
}

/// Decodes one FMAT block (either version) from a reader.
pub fn read_fmat<R: Read>(r: &mut R) -> Result<DMatrix<f64>> {
    let mut header = [0u8; 13];
    read_exact_or_format(r, &mut header, "FMAT header")?;
    if &header[..4] != FMAT_MAGIC {
        return Err(Error::Format("bad magic, expected FMAT".into()));
    }
    let version = header[4];
    let rows = u32::from_le_bytes(header[5..9].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(header[9..13].try_into().unwrap()) as usize;
    let width = match version {
        FMAT_VERSION_F32 => 4,
        FMAT_VERSION_F64 => 8,
        v => return Err(Error::Format(format!("unsupported FMAT version {v:#04x}"))),
    };
    let mut data = DMatrix::<f64>::zeros(rows, cols);
    let mut row_buf = vec![0u8; cols * width];
    for i in 0..rows {
        read_exact_or_format(r, &mut row_buf, "FMAT payload")?;
        for (j, chunk) in row_buf.chunks_exact(width).enumerate() {
            let v = if width == 4 {
                f32::from_le_bytes(chunk.try_into().unwrap()) as f64
            } else {
                f64::from_le_bytes(chunk.try_into().unwrap())
            };
            if !v.is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
            data[(i, j)] = v;
        }
    }
    Ok(data)
}

/// Encodes a matrix as one FMAT block of the given version.
pub fn write_fmat<W: Write>(w: &mut W, data: &DMatrix<f64>, version: u8) -> Result<()> {
    let rows =
        u32::try_from(data.nrows()).map_err(|_| Error::Shape("too many rows for FMAT".into()))?;
    let cols = u32::try_from(data.ncols())
        .map_err(|_| Error::Shape("too many columns for FMAT".into()))?;
    let io = |e| Error::io("<stream>", e);
    w.write_all(FMAT_MAGIC).map_err(io)?;
    w.write_all(&[version]).map_err(io)?;
    w.write_all(&rows.to_le_bytes()).map_err(io)?;
    w.write_all(&cols.to_le_bytes()).map_err(io)?;
    for i in 0..data.nrows() {
        for j in 0..data.ncols() {
            let v = data[(i, j)];
            match version {
                FMAT_VERSION_F32 => {
                    let narrow = v as f32;
                    if !narrow.is_finite() {
                        return Err(Error::NonFinite { row: i, col: j });
                    }
                    w.write_all(&narrow.to_le_bytes()).map_err(io)?;
                }
                FMAT_VERSION_F64 => {
                    if !v.is_finite() {
                        return Err(Error::NonFinite { row: i, col: j });
                    }
                    w.write_all(&v.to_le_bytes()).map_err(io)?;
                }
                other => {
                    return Err(Error::Format(format!(
                        "unsupported FMAT version {other:#04x}"
                    )))
                }
            }
        }
    }
    Ok(())
}

/// Size in bytes of an encoded FMAT block.
pub fn fmat_encoded_len(rows: usize, cols: usize, version: u8) -> usize {
    let width = if version == FMAT_VERSION_F64 { 8 } else { 4 };
    13 + rows * cols * width
}

/// Reads a label file: FLAB binary, or plain text with one integer per line.
pub fn read_labels(path: &Path) -> Result<Vec<u32>> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(FLAB_MAGIC) {
        decode_flab(&bytes).map_err(|e| at_path(e, path))
    } else {
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::Format(format!("{}: not FLAB and not text", path.display())))?;
        let mut raw = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line == "label") {
                continue;
            }
            let v: i64 = line.parse().map_err(|_| {
                Error::Format(format!(
                    "{}:{}: bad label `{line}`",
                    path.display(),
                    lineno + 1
                ))
            })?;
            raw.push(v);
        }
        labels_from_i64(&raw)
    }
}

fn decode_flab(bytes: &[u8]) -> Result<Vec<u32>> {
    if bytes.len() < 9 || &bytes[..4] != FLAB_MAGIC {
        return Err(Error::Format("bad FLAB header".into()));
    }
    if bytes[4] != FLAB_VERSION {
        return Err(Error::Format(format!(
            "unsupported FLAB version {:#04x}",
            bytes[4]
        )));
    }
    let count = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let payload = &bytes[9..];
    if payload.len() != count * 4 {
        return Err(Error::Format(format!(
            "FLAB declares {count} labels but carries {} bytes",
            payload.len()
        )));
    }
    let raw: Vec<i64> = payload
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes(c.try_into().unwrap()) as i64)
        .collect();
    labels_from_i64(&raw)
}

pub fn write_labels(path: &Path, labels: &[u32]) -> Result<()> {
    let count =
        u32::try_from(labels.len()).map_err(|_| Error::Shape("too many labels for FLAB".into()))?;
    let mut bytes = Vec::with_capacity(9 + labels.len() * 4);
    bytes.extend_from_slice(FLAB_MAGIC);
    bytes.push(FLAB_VERSION);
    bytes.extend_from_slice(&count.to_le_bytes());
    for &l in labels {
        let v = i32::try_from(l).map_err(|_| Error::Label(format!("label {l} exceeds i32")))?;
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_csv(path: &Path) -> Result<FeatureSet> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut values: Vec<f64> = Vec::new();
    let mut raw_labels: Vec<i64> = Vec::new();
    let mut cols: Option<usize> = None;
    let mut label_col = false;
    let mut rows = 0usize;
    let mut first = true;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if first {
            first = false;
            if fields.iter().any(|f| f.parse::<f64>().is_err()) {
                label_col = fields
                    .last()
                    .is_some_and(|f| f.eq_ignore_ascii_case("label"));
                cols = Some(fields.len() - usize::from(label_col));
                continue;
            }
        }
        let n_feat = fields.len() - usize::from(label_col);
        match cols {
            Some(c) if c != n_feat => {
                return Err(Error::Format(format!(
                    "{}:{}: expected {c} feature columns, found {n_feat}",
                    path.display(),
                    lineno + 1
                )))
            }
            None => cols = Some(n_feat),
            _ => {}
        }
        for (j, field) in fields[..n_feat].iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::Format(format!(
                    "{}:{}: cannot parse `{field}` as a number",
                    path.display(),
                    lineno + 1
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite { row: rows, col: j });
            }
            values.push(v);
        }
        if label_col {
            let field = fields[n_feat];
            let v: i64 = field.parse().map_err(|_| {
                Error::Label(format!(
                    "{}:{}: bad label `{field}`",
                    path.display(),
                    lineno + 1
                ))
            })?;
            raw_labels.push(v);
        }
        rows += 1;
    }

    let cols = cols.unwrap_or(0);
    if rows == 0 {
        return Err(Error::Format(format!("{}: no data rows", path.display())));
    }
    let data = DMatrix::from_row_slice(rows, cols, &values);
    let labels = if label_col {
        Some(labels_from_i64(&raw_labels)?)
    } else {
        None
    };
    FeatureSet::new(data, labels)
}

fn write_csv(set: &FeatureSet, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let d = set.dim();
    if set.labels().is_some() {
        let header: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
        writeln!(w, "{},label", header.join(",")).map_err(io)?;
    }
    let mut line = String::new();
    for i in 0..set.n_samples() {
        line.clear();
        for j in 0..d {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&fmt_g17(set.data()[(i, j)]));
        }
        if let Some(labels) = set.labels() {
            line.push(',');
            line.push_str(&labels[i].to_string());
        }
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Scales every row to unit Euclidean norm.
pub fn l2_normalize(set: &FeatureSet) -> Result<FeatureSet> {
    let mut data = set.data().clone();
    for (i, mut row) in data.row_iter_mut().enumerate() {
        let norm = row.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::DegenerateFeature { row: i });
        }
        row /= norm;
    }
    Ok(FeatureSet {
        data,
        labels: set.labels.clone(),
        n_classes: set.n_classes,
    })
}

/// Unit-normalizes a single vector in place; `None` for a zero vector.
pub(crate) fn normalize_in_place(v: &mut DVector<f64>) -> Option<()> {
    let norm = v.norm();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    *v /= norm;
    Some(())
}
