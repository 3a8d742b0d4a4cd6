//! Matrix files: delimited text and the `GMTX` little-endian binary container.
//!
//! Binary layout: `"GMTX"`, version `u32 = 1`, rows `u64`, cols `u64`,
//! element width `u32` (4 or 8), then row-major `f32`/`f64` values.

use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::DenseMatrix;

pub const MATRIX_MAGIC: &[u8; 4] = b"GMTX";
const MATRIX_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixFormat {
    DelimitedText,
    RawBinary,
}

impl MatrixFormat {
    /// `.gmtx` and `.bin` files are binary, everything else is text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("gmtx") | Some("bin") => MatrixFormat::RawBinary,
            _ => MatrixFormat::DelimitedText,
        }
    }
}

impl FromStr for MatrixFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" | "csv" | "tsv" => Ok(MatrixFormat::DelimitedText),
            "binary" | "gmtx" => Ok(MatrixFormat::RawBinary),
            other => Err(Error::config(format!("unknown matrix format {other:?}"))),
        }
    }
}

/// A matrix with the column names from a text header, if there was one.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledMatrix {
    pub matrix: DenseMatrix,
    pub column_labels: Option<Vec<String>>,
}

pub fn load_matrix(path: &Path, format: MatrixFormat) -> Result<DenseMatrix> {
    load_labeled(path, format).map(|m| m.matrix)
}

pub fn load_labeled(path: &Path, format: MatrixFormat) -> Result<LabeledMatrix> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let with_path = |e: Error| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    };
    match format {
        MatrixFormat::DelimitedText => read_delimited(reader).map_err(with_path),
        MatrixFormat::RawBinary => read_raw_binary(reader)
            .map(|matrix| LabeledMatrix {
                matrix,
                column_labels: None,
            })
            .map_err(with_path),
    }
}

pub fn save_matrix(path: &Path, matrix: &DenseMatrix, format: MatrixFormat) -> Result<()> {
    let mut buf = Vec::new();
    match format {
        MatrixFormat::DelimitedText => write_delimited(&mut buf, matrix, None)?,
        MatrixFormat::RawBinary => write_raw_binary(&mut buf, matrix)?,
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Comma- or tab-separated numbers, one sample per line. The delimiter is a
/// tab if the first line has one. A first row with any non-numeric cell is
/// taken as a header.
pub fn read_delimited<R: Read>(mut reader: R) -> Result<LabeledMatrix> {
    let mut text = String::new();
    reader
        .read_to_string(&mut text)
        .map_err(|e| Error::format(format!("unreadable text: {e}")))?;
    let first_line = text.lines().next().unwrap_or("");
    let delimiter = if first_line.contains('\t') { b'\t' } else { b',' };
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut labels = None;
    let mut cols = None;
    let mut data = Vec::new();
    let mut rows = 0;
    for (idx, record) in csv.records().enumerate() {
        let record = record.map_err(|e| Error::format(format!("malformed text: {e}")))?;
        let line = record.position().map_or(idx as u64 + 1, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if idx == 0 => {
                labels = Some(record.iter().map(str::to_string).collect::<Vec<_>>());
                cols = Some(record.len());
                continue;
            }
            Err(_) => {
                let bad = record.iter().find(|c| c.parse::<f64>().is_err()).unwrap_or("");
                return Err(Error::format(format!("line {line}: non-numeric cell {bad:?}")));
            }
        };
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::format(format!("line {line}: non-finite value {bad}")));
        }
        match cols {
            None => cols = Some(values.len()),
            Some(c) if c != values.len() => {
                return Err(Error::format(format!(
                    "line {line}: {} fields, expected {c}",
                    values.len()
                )))
            }
            _ => {}
        }
        data.extend(values);
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::format("no numeric rows"));
    }
    let matrix = DenseMatrix::new(rows, cols.unwrap_or(0), data)?;
    Ok(LabeledMatrix {
        matrix,
        column_labels: labels,
    })
}

/// Comma-separated text with the shortest round-tripping decimal form of
/// every value, so reading it back is bit-exact.
pub fn write_delimited<W: Write>(w: &mut W, matrix: &DenseMatrix, labels: Option<&[String]>) -> Result<()> {
    let mut csv = csv::WriterBuilder::new().from_writer(w);
    let fail = |e: csv::Error| Error::format(format!("writing text: {e}"));
    if let Some(l) = labels {
        if l.len() != matrix.cols() {
            return Err(Error::shape(format!(
                "{} labels for {} columns",
                l.len(),
                matrix.cols()
            )));
        }
        csv.write_record(l).map_err(fail)?;
    }
    for row in matrix.row_iter() {
        csv.write_record(row.iter().map(|v| v.to_string())).map_err(fail)?;
    }
    csv.flush().map_err(|e| Error::format(format!("writing text: {e}")))
}

pub fn write_raw_binary<W: Write>(w: &mut W, matrix: &DenseMatrix) -> Result<()> {
    let mut buf = Vec::with_capacity(28 + 8 * matrix.as_slice().len());
    buf.extend_from_slice(MATRIX_MAGIC);
    buf.extend_from_slice(&MATRIX_VERSION.to_le_bytes());
    buf.extend_from_slice(&(matrix.rows() as u64).to_le_bytes());
    buf.extend_from_slice(&(matrix.cols() as u64).to_le_bytes());
    buf.extend_from_slice(&8u32.to_le_bytes());
    for v in matrix.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
        .map_err(|e| Error::format(format!("writing matrix: {e}")))
}

/// Single-precision variant of [`write_raw_binary`] (element width 4).
pub fn write_raw_binary_f32<W: Write>(w: &mut W, matrix: &DenseMatrix) -> Result<()> {
    let mut buf = Vec::with_capacity(28 + 4 * matrix.as_slice().len());
    buf.extend_from_slice(MATRIX_MAGIC);
    buf.extend_from_slice(&MATRIX_VERSION.to_le_bytes());
    buf.extend_from_slice(&(matrix.rows() as u64).to_le_bytes());
    buf.extend_from_slice(&(matrix.cols() as u64).to_le_bytes());
    buf.extend_from_slice(&4u32.to_le_bytes());
    for v in matrix.as_slice() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    w.write_all(&buf)
        .map_err(|e| Error::format(format!("writing matrix: {e}")))
}

pub fn read_raw_binary<R: Read>(mut r: R) -> Result<DenseMatrix> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::format(format!("unreadable matrix: {e}")))?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4)? != MATRIX_MAGIC {
        return Err(Error::format("offset 0: bad magic, expected GMTX"));
    }
    let version = cur.u32()?;
    if version != MATRIX_VERSION {
        return Err(Error::format(format!("offset 4: unsupported version {version}")));
    }
    let rows = cur.u64()? as usize;
    let cols = cur.u64()? as usize;
    let width = cur.u32()?;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::format("offset 8: matrix size overflows"))?;
    let data: Vec<f64> = match width {
        8 => cur
            .take(count.checked_mul(8).ok_or_else(|| Error::format("size overflows"))?)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
        4 => cur
            .take(count.checked_mul(4).ok_or_else(|| Error::format("size overflows"))?)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect(),
        other => return Err(Error::format(format!("offset 24: element width {other} is not 4 or 8"))),
    };
    if cur.pos != bytes.len() {
        return Err(Error::format(format!("offset {}: trailing bytes", cur.pos)));
    }
    DenseMatrix::new(rows, cols, data).map_err(|e| Error::format(e.to_string()))
}

pub(crate) struct Cursor<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> Cursor<'a> {
    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::format(format!(
                "offset {}: truncated, needed {n} more bytes, {} left",
                self.pos,
                self.bytes.len() - self.pos
            ))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n.checked_mul(8).ok_or_else(|| Error::format("size overflows"))?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use proptest::prelude::*;

    #[test]
    fn plain_comma_text() {
        let m = read_delimited("1,2\n3,4".as_bytes()).unwrap();
        assert_eq!(m.matrix, DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap());
        assert_eq!(m.column_labels, None);
    }

    #[test]
    fn header_is_detected_and_kept() {
        let m = read_delimited("geneA,geneB\n1,2\n3.5,-4e2\n".as_bytes()).unwrap();
        assert_eq!(m.column_labels, Some(vec!["geneA".into(), "geneB".into()]));
        assert_eq!(m.matrix.shape(), (2, 2));
        assert_eq!(m.matrix.get(1, 1), -400.0);
    }

    #[test]
    fn tabs_and_blank_lines() {
        let m = read_delimited("a\tb\tc\n1\t2\t3\n\n4\t5\t6\n".as_bytes()).unwrap();
        assert_eq!(m.matrix.shape(), (2, 3));
    }

    #[test]
    fn bad_text_reports_the_line() {
        let e = read_delimited("1,2\n3,x\n".as_bytes()).unwrap_err();
        assert!(matches!(&e, Error::Format(m) if m.contains("line 2")), "{e}");
        let e = read_delimited("1,2\n3,4,5\n".as_bytes()).unwrap_err();
        assert!(matches!(&e, Error::Format(m) if m.contains("line 2")), "{e}");
        assert!(read_delimited("".as_bytes()).is_err());
        assert!(read_delimited("1,NaN\n".as_bytes()).is_err());
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let m = DenseMatrix::new(3, 4, SeededRng::new(1, "m").standard_normal(12)).unwrap();
        let mut buf = Vec::new();
        write_raw_binary(&mut buf, &m).unwrap();
        assert_eq!(read_raw_binary(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn single_precision_binary() {
        let m = DenseMatrix::from_rows(&[[0.5, -2.25, 1e10]]).unwrap();
        let mut buf = Vec::new();
        write_raw_binary_f32(&mut buf, &m).unwrap();
        assert_eq!(buf.len(), 28 + 12);
        assert_eq!(read_raw_binary(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn corrupt_binary_is_rejected_with_offsets() {
        let m = DenseMatrix::zeros(2, 2);
        let mut buf = Vec::new();
        write_raw_binary(&mut buf, &m).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_raw_binary(bad.as_slice()), Err(Error::Format(m)) if m.contains("offset 0")));
        assert!(matches!(read_raw_binary(&buf[..buf.len() - 1]), Err(Error::Format(m)) if m.contains("truncated")));
        let mut wide = buf.clone();
        wide[24] = 2;
        assert!(read_raw_binary(wide.as_slice()).is_err());
    }

    #[test]
    fn files_by_extension() {
        let dir = tempfile::tempdir().unwrap();
        let m = DenseMatrix::from_rows(&[[1.0, 0.1 + 0.2], [1e-300, -7.0]]).unwrap();
        for name in ["m.csv", "m.gmtx"] {
            let p = dir.path().join(name);
            let fmt = MatrixFormat::from_path(&p);
            save_matrix(&p, &m, fmt).unwrap();
            assert_eq!(load_matrix(&p, fmt).unwrap(), m);
        }
        let missing = dir.path().join("nope.csv");
        assert!(matches!(
            load_matrix(&missing, MatrixFormat::DelimitedText),
            Err(Error::Io { .. })
        ));
    }

    proptest! {
        #[test]
        fn text_round_trip_is_bit_exact(values in prop::collection::vec(-1e12f64..1e12, 1..40), cols in 1usize..5) {
            let rows = values.len() / cols;
            prop_assume!(rows > 0);
            let m = DenseMatrix::new(rows, cols, values[..rows * cols].to_vec()).unwrap();
            let mut buf = Vec::new();
            write_delimited(&mut buf, &m, None).unwrap();
            prop_assert_eq!(read_delimited(buf.as_slice()).unwrap().matrix, m);
        }
    }
}
