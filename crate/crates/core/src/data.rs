//! Feature and label files: CSV tables, IDX image/label files, min-max scaling.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Cursor, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LdfaError, Result};
use crate::features::FeatureMatrix;
use crate::numerics::Matrix;

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Csv,
    Idx,
}

/// Unscaled samples as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RawData {
    /// `D x N`.
    pub values: Matrix,
    pub format: InputFormat,
}

impl RawData {
    pub fn new(values: Matrix, format: InputFormat) -> Self {
        RawData { values, format }
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.ncols() == 0
    }
}

/// Per-dimension map `x -> (x - offset) * scale + base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
    pub base: Vec<f64>,
}

impl Normalization {
    /// Min-max to `[0, 1]` for CSV input (constant dimensions go to 0.5);
    /// fixed `1/255` for IDX pixels.
    pub fn fit(raw: &RawData) -> Result<Self> {
        let d = raw.dim();
        if raw.is_empty() {
            return Err(invalid("cannot fit a normalization to zero samples"));
        }
        Ok(match raw.format {
            InputFormat::Idx => Normalization { offset: vec![0.0; d], scale: vec![1.0 / 255.0; d], base: vec![0.0; d] },
            InputFormat::Csv => {
                let mut n = Normalization { offset: vec![0.0; d], scale: vec![0.0; d], base: vec![0.0; d] };
                for (i, row) in raw.values.rows().into_iter().enumerate() {
                    let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    n.offset[i] = lo;
                    if hi > lo {
                        n.scale[i] = 1.0 / (hi - lo);
                    } else {
                        n.base[i] = 0.5;
                    }
                }
                n
            }
        })
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn apply(&self, raw: &Matrix) -> Result<FeatureMatrix> {
        if raw.nrows() != self.dim() && raw.ncols() > 0 {
            return Err(invalid(format!("data has dimension {}, expected {}", raw.nrows(), self.dim())));
        }
        let mut out = Matrix::zeros((self.dim(), raw.ncols()));
        for ((i, j), v) in out.indexed_iter_mut() {
            *v = (raw[[i, j]] - self.offset[i]) * self.scale[i] + self.base[i];
        }
        Ok(FeatureMatrix::from_columns(out))
    }
}

/// Normalized features with optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub raw: RawData,
    pub features: FeatureMatrix,
    pub normalization: Normalization,
    pub labels: Option<Vec<String>>,
}

impl Dataset {
    pub fn from_raw(raw: RawData, labels: Option<Vec<String>>) -> Result<Self> {
        if let Some(l) = &labels {
            check_label_count(raw.len(), l.len())?;
        }
        let normalization = Normalization::fit(&raw)?;
        let features = normalization.apply(&raw.values)?;
        Ok(Dataset { raw, features, normalization, labels })
    }
}

fn check_label_count(samples: usize, labels: usize) -> Result<()> {
    if samples != labels {
        return Err(invalid(format!("{samples} samples but {labels} labels")));
    }
    Ok(())
}

/// One numeric sample per row; returns `D x N`. Blank lines are skipped.
pub fn parse_csv(reader: impl Read) -> Result<Matrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            LdfaError::Parse { line, message: e.to_string() }
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let row = rec
            .iter()
            .map(|cell| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| LdfaError::Parse { line, message: format!("not a finite number: {cell:?}") })
            })
            .collect::<Result<Vec<f64>>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(LdfaError::Parse { line, message: format!("expected {w} values, found {}", row.len()) })
            }
            _ => {}
        }
        rows.push(row);
    }
    let d = width.unwrap_or(0);
    Ok(Matrix::from_shape_fn((d, rows.len()), |(i, j)| rows[j][i]))
}

/// IDX image file: big-endian magic, count, rows, cols, then `u8` pixels.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Matrix> {
    let mut cur = Cursor::new(bytes);
    let magic = cur.read_u32::<BigEndian>()?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(invalid(format!("IDX image magic {magic:#010x}, expected {IDX_IMAGE_MAGIC:#010x}")));
    }
    let n = cur.read_u32::<BigEndian>()? as usize;
    let rows = cur.read_u32::<BigEndian>()? as usize;
    let cols = cur.read_u32::<BigEndian>()? as usize;
    let d = rows * cols;
    let pixels = &bytes[16..];
    if pixels.len() != n * d {
        return Err(invalid(format!("IDX header declares {} pixels, file holds {}", n * d, pixels.len())));
    }
    Ok(Matrix::from_shape_fn((d, n), |(i, j)| pixels[j * d + i] as f64))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<String>> {
    let mut cur = Cursor::new(bytes);
    let magic = cur.read_u32::<BigEndian>()?;
    if magic != IDX_LABEL_MAGIC {
        return Err(invalid(format!("IDX label magic {magic:#010x}, expected {IDX_LABEL_MAGIC:#010x}")));
    }
    let n = cur.read_u32::<BigEndian>()? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(invalid(format!("IDX header declares {n} labels, file holds {}", body.len())));
    }
    Ok(body.iter().map(u8::to_string).collect())
}

/// One label per line; trailing blank lines are ignored.
pub fn parse_label_lines(reader: impl BufRead) -> Result<Vec<String>> {
    let mut labels = reader.lines().map(|l| l.map(|s| s.trim().to_string())).collect::<io::Result<Vec<_>>>()?;
    while labels.last().is_some_and(String::is_empty) {
        labels.pop();
    }
    if let Some(i) = labels.iter().position(String::is_empty) {
        return Err(LdfaError::Parse { line: i + 1, message: "empty label".into() });
    }
    Ok(labels)
}

fn starts_with_magic(bytes: &[u8], magic: u32) -> bool {
    bytes.len() >= 4 && u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) == magic
}

/// Reads a CSV table or an IDX image file (detected by its magic number).
pub fn read_raw(path: &Path) -> Result<RawData> {
    let bytes = std::fs::read(path)?;
    if starts_with_magic(&bytes, IDX_IMAGE_MAGIC) {
        Ok(RawData::new(parse_idx_images(&bytes)?, InputFormat::Idx))
    } else {
        Ok(RawData::new(parse_csv(bytes.as_slice())?, InputFormat::Csv))
    }
}

pub fn read_labels(path: &Path) -> Result<Vec<String>> {
    let bytes = std::fs::read(path)?;
    if starts_with_magic(&bytes, IDX_LABEL_MAGIC) {
        parse_idx_labels(&bytes)
    } else {
        parse_label_lines(bytes.as_slice())
    }
}

/// Reads and normalizes features, and reads labels if a path is given.
pub fn load_features(path: &Path, labels_path: Option<&Path>) -> Result<Dataset> {
    let raw = read_raw(path)?;
    let labels = labels_path.map(read_labels).transpose()?;
    Dataset::from_raw(raw, labels)
}

/// Reads a `D x N` matrix written by [`write_matrix_csv`].
pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    parse_csv(BufReader::new(File::open(path)?))
}

/// One column per row, shortest round-trip float formatting.
pub fn write_matrix_csv(mut w: impl Write, m: &Matrix) -> Result<()> {
    for col in m.columns() {
        let line: Vec<String> = col.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn min_max_endpoints() {
        let raw = RawData::new(parse_csv("0,10\n1,20\n".as_bytes()).unwrap(), InputFormat::Csv);
        let ds = Dataset::from_raw(raw, None).unwrap();
        assert_eq!(ds.features.matrix(), &array![[0.0, 1.0], [0.0, 1.0]]);
    }

    #[test]
    fn constant_column_maps_to_half() {
        let raw = RawData::new(parse_csv("3,1\n3,2\n3,5\n".as_bytes()).unwrap(), InputFormat::Csv);
        let ds = Dataset::from_raw(raw, None).unwrap();
        assert!(ds.features.matrix().row(0).iter().all(|&v| v == 0.5));
        assert_eq!(ds.features.matrix().row(1).to_vec(), vec![0.0, 0.25, 1.0]);
    }

    #[test]
    fn ragged_and_non_numeric_rows_report_line() {
        match parse_csv("1,2\n3,4\n5\n".as_bytes()) {
            Err(LdfaError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        match parse_csv("1,2\n3,x\n".as_bytes()) {
            Err(LdfaError::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("\"x\""));
            }
            other => panic!("{other:?}"),
        }
        assert!(parse_csv("1,nan\n".as_bytes()).is_err());
    }

    #[test]
    fn empty_and_blank_lines() {
        assert_eq!(parse_csv("".as_bytes()).unwrap().dim(), (0, 0));
        assert_eq!(parse_csv("1,2\n\n3,4\n".as_bytes()).unwrap(), array![[1.0, 3.0], [2.0, 4.0]]);
    }

    #[test]
    fn label_count_mismatch_names_both() {
        let raw = RawData::new(array![[0.0, 1.0, 2.0]], InputFormat::Csv);
        let err = Dataset::from_raw(raw, Some(vec!["a".into(), "b".into()])).unwrap_err().to_string();
        assert!(err.contains('3') && err.contains('2'), "{err}");
    }

    #[test]
    fn label_lines() {
        assert_eq!(parse_label_lines("a\n b \nc\n\n".as_bytes()).unwrap(), vec!["a", "b", "c"]);
        assert!(parse_label_lines("a\n\nc\n".as_bytes()).is_err());
    }

    #[test]
    fn idx_round_trip() {
        let mut bytes = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 3];
        bytes.extend([0u8, 255, 51, 1, 2, 3]);
        let m = parse_idx_images(&bytes).unwrap();
        assert_eq!(m, array![[0.0, 1.0], [255.0, 2.0], [51.0, 3.0]]);
        let ds = Dataset::from_raw(RawData::new(m, InputFormat::Idx), None).unwrap();
        assert_eq!(ds.features.matrix()[[2, 0]], 51.0 / 255.0);
        assert!(parse_idx_images(&bytes[..20]).is_err());
        let labels = [0u8, 0, 8, 1, 0, 0, 0, 2, 7, 3];
        assert_eq!(parse_idx_labels(&labels).unwrap(), vec!["7", "3"]);
    }

    #[test]
    fn stored_normalization_is_reused_verbatim() {
        let raw = RawData::new(array![[0.0, 4.0]], InputFormat::Csv);
        let n = Normalization::fit(&raw).unwrap();
        let q = n.apply(&array![[2.0, 8.0]]).unwrap();
        assert_eq!(q.matrix(), &array![[0.5, 2.0]]);
        assert!(n.apply(&array![[1.0], [2.0]]).is_err());
    }

    #[test]
    fn matrix_csv_round_trip_is_exact() {
        let m = array![[0.1, 1.0 / 3.0], [-2.5e-17, 7.0]];
        let mut buf = Vec::new();
        write_matrix_csv(&mut buf, &m).unwrap();
        assert_eq!(parse_csv(buf.as_slice()).unwrap(), m);
    }
}
