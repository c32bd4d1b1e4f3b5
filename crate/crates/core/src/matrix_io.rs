//! Weight matrices, conv tensors and the WMAT on-disk format.
//!
//! A layer is stored as an `n_l x n_{l+1}` matrix: rows are input neurons,
//! columns are output neurons, data is row-major `f64`.
//!
//! WMAT is one ASCII header line followed by the raw payload:
//!
//! ```text
//! WMAT1 rows=<R> cols=<C> dtype=f64 order=row-major endian=little\n
//! <R*C little-endian f64>
//! ```

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WMAT_MAGIC: &str = "WMAT1";

/// CSV import/export is limited to this many entries.
pub const CSV_MAX_ENTRIES: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl WeightMatrix {
    /// Builds a matrix from row-major data, checking shape and finiteness.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidShape(format!(
                "matrix must be at least 1x1, got {rows}x{cols}"
            )));
        }
        let expected = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::InvalidShape(format!("{rows}x{cols} overflows usize")))?;
        if data.len() != expected {
            return Err(Error::InvalidShape(format!(
                "{rows}x{cols} needs {expected} entries, got {}",
                data.len()
            )));
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: k / cols,
                col: k % cols,
                value: data[k],
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    /// Builds from nested rows. Ragged input is rejected.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != n_cols {
                return Err(Error::InvalidShape(format!(
                    "row {i} has {} entries, expected {n_cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(n_rows, n_cols, data)
    }

    /// Skips validation; callers guarantee the invariants.
    pub(crate) fn from_parts_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, col)).collect()
    }

    /// Entries sorted by `f64::total_cmp`; two matrices hold the same
    /// multiset of bit patterns iff these vectors are bitwise equal.
    pub fn sorted_entries(&self) -> Vec<f64> {
        let mut v = self.data.clone();
        v.sort_unstable_by(f64::total_cmp);
        v
    }

    pub fn transpose(&self) -> WeightMatrix {
        WeightMatrix {
            rows: self.cols,
            cols: self.rows,
            data: transpose_data(&self.data, self.rows, self.cols),
        }
    }
}

/// Blocked out-of-place transpose of a row-major `rows x cols` buffer.
pub(crate) fn transpose_data(src: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    const BLOCK: usize = 32;
    let mut dst = vec![0.0; src.len()];
    for i0 in (0..rows).step_by(BLOCK) {
        let i1 = (i0 + BLOCK).min(rows);
        for j0 in (0..cols).step_by(BLOCK) {
            let j1 = (j0 + BLOCK).min(cols);
            for i in i0..i1 {
                for j in j0..j1 {
                    dst[j * rows + i] = src[i * cols + j];
                }
            }
        }
    }
    dst
}

/// Free-function form of [`WeightMatrix::transpose`].
pub fn transpose(m: &WeightMatrix) -> WeightMatrix {
    m.transpose()
}

/// A `w x h x z x o` convolution kernel. `data` is laid out with `w`
/// varying slowest and `o` fastest, so filter position `(iw, ih, iz)` and
/// output channel `io` live at `(((iw*h)+ih)*z+iz)*o + io`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvTensor {
    w: usize,
    h: usize,
    z: usize,
    o: usize,
    data: Vec<f64>,
}

impl ConvTensor {
    pub fn new(w: usize, h: usize, z: usize, o: usize, data: Vec<f64>) -> Result<Self> {
        let expected = [w, h, z, o]
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::InvalidShape("conv tensor size overflows".into()))?;
        if expected == 0 {
            return Err(Error::InvalidShape(format!(
                "conv dims must be positive, got {w}x{h}x{z}x{o}"
            )));
        }
        if data.len() != expected {
            return Err(Error::InvalidShape(format!(
                "conv tensor {w}x{h}x{z}x{o} needs {expected} entries, got {}",
                data.len()
            )));
        }
        if let Some(k) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: k / o,
                col: k % o,
                value: data[k],
            });
        }
        Ok(Self { w, h, z, o, data })
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.w, self.h, self.z, self.o)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, iw: usize, ih: usize, iz: usize, io: usize) -> f64 {
        self.data[conv_row_index(iw, ih, iz, self.h, self.z) * self.o + io]
    }

    /// Fan-in of one output channel.
    pub fn fan_in(&self) -> usize {
        self.w * self.h * self.z
    }
}

/// Row of the 2-D form that holds filter position `(iw, ih, iz)`.
#[inline]
pub fn conv_row_index(iw: usize, ih: usize, iz: usize, h: usize, z: usize) -> usize {
    (iw * h + ih) * z + iz
}

/// Reshapes a conv kernel into its `(w*h*z) x o` layer matrix.
pub fn conv_to_2d(t: &ConvTensor) -> WeightMatrix {
    // The storage order already matches the row formula, so this is a
    // relabelling of the buffer.
    WeightMatrix::from_parts_unchecked(t.fan_in(), t.o, t.data.clone())
}

/// Inverse of [`conv_to_2d`] for a kernel with the given spatial dims.
pub fn conv_from_2d(m: &WeightMatrix, w: usize, h: usize, z: usize) -> Result<ConvTensor> {
    if w * h * z != m.rows() {
        return Err(Error::InvalidShape(format!(
            "{w}x{h}x{z} filters need {} rows, matrix has {}",
            w * h * z,
            m.rows()
        )));
    }
    ConvTensor::new(w, h, z, m.cols(), m.data().to_vec())
}

fn wmat_header(rows: usize, cols: usize) -> String {
    format!("{WMAT_MAGIC} rows={rows} cols={cols} dtype=f64 order=row-major endian=little\n")
}

/// Size in bytes of the WMAT header for a given shape.
pub fn wmat_header_len(rows: usize, cols: usize) -> usize {
    wmat_header(rows, cols).len()
}

pub fn write_wmat<W: Write>(m: &WeightMatrix, mut out: W) -> std::io::Result<()> {
    out.write_all(wmat_header(m.rows, m.cols).as_bytes())?;
    let mut buf = Vec::with_capacity(m.data.len() * 8);
    for v in &m.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    out.flush()
}

pub fn read_wmat<R: Read>(input: R) -> Result<WeightMatrix> {
    let mut reader = BufReader::new(input);
    let mut header = Vec::new();
    reader
        .read_until(b'\n', &mut header)
        .map_err(|e| Error::MalformedHeader(e.to_string()))?;
    if header.last() != Some(&b'\n') {
        return Err(Error::MalformedHeader("missing header terminator".into()));
    }
    let header = std::str::from_utf8(&header[..header.len() - 1])
        .map_err(|_| Error::MalformedHeader("header is not ASCII".into()))?;
    let (rows, cols) = parse_header(header)?;

    let mut payload = Vec::new();
    reader
        .read_to_end(&mut payload)
        .map_err(|e| Error::MalformedHeader(e.to_string()))?;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::MalformedHeader("shape overflows".into()))?;
    if payload.len() != expected {
        return Err(Error::PayloadMismatch {
            rows,
            cols,
            expected,
            actual: payload.len(),
        });
    }
    let data: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    WeightMatrix::new(rows, cols, data)
}

fn parse_header(header: &str) -> Result<(usize, usize)> {
    let mut fields = header.split(' ');
    if fields.next() != Some(WMAT_MAGIC) {
        return Err(Error::MalformedHeader(format!("bad magic in {header:?}")));
    }
    let mut rows = None;
    let mut cols = None;
    for field in fields {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| Error::MalformedHeader(format!("bad field {field:?}")))?;
        match key {
            "rows" | "cols" => {
                let n: usize = value
                    .parse()
                    .map_err(|_| Error::MalformedHeader(format!("bad {key} {value:?}")))?;
                if key == "rows" {
                    rows = Some(n);
                } else {
                    cols = Some(n);
                }
            }
            "dtype" if value == "f64" => {}
            "order" if value == "row-major" => {}
            "endian" if value == "little" => {}
            _ => {
                return Err(Error::MalformedHeader(format!(
                    "unsupported field {field:?}"
                )))
            }
        }
    }
    match (rows, cols) {
        (Some(r), Some(c)) if r > 0 && c > 0 => Ok((r, c)),
        (Some(_), Some(_)) => Err(Error::MalformedHeader("zero dimension".into())),
        _ => Err(Error::MalformedHeader("missing rows or cols".into())),
    }
}

pub fn save_matrix(m: &WeightMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_wmat(m, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<WeightMatrix> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_wmat(file)
}

/// Plain comma-separated rows, shortest round-trip decimal formatting.
pub fn to_csv(m: &WeightMatrix) -> Result<String> {
    if m.data.len() > CSV_MAX_ENTRIES {
        return Err(Error::InvalidShape(format!(
            "csv export limited to {CSV_MAX_ENTRIES} entries"
        )));
    }
    let mut out = String::new();
    for i in 0..m.rows {
        let line: Vec<String> = m.row(i).iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    Ok(out)
}

pub fn from_csv(text: &str) -> Result<WeightMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut total = 0usize;
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| {
                f.trim().parse::<f64>().map_err(|e| Error::Csv {
                    line: k + 1,
                    message: format!("{f:?}: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        total += row.len();
        if total > CSV_MAX_ENTRIES {
            return Err(Error::InvalidShape(format!(
                "csv import limited to {CSV_MAX_ENTRIES} entries"
            )));
        }
        rows.push(row);
    }
    WeightMatrix::from_rows(&rows)
}

pub fn save_csv(m: &WeightMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_csv(m)?).map_err(|e| Error::io(path, e))
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<WeightMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_csv(&text)
}
