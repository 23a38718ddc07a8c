//! Matrix Market reader and writer for dense real matrices and vectors.
//!
//! Writers emit `array` format with 17 significant digits so values round-trip
//! exactly. The reader accepts `array` and `coordinate` real/integer files,
//! `general` or `symmetric`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "%%MatrixMarket matrix array real general").map_err(io)?;
    writeln!(w, "{} {}", m.nrows(), m.ncols()).map_err(io)?;
    // array format is column-major, as is nalgebra storage
    for v in m.iter() {
        writeln!(w, "{v:.16e}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Coordinate format listing only nonzero entries.
pub fn write_matrix_coordinate(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    let nnz = m.iter().filter(|v| **v != 0.0).count();
    writeln!(w, "%%MatrixMarket matrix coordinate real general").map_err(io)?;
    writeln!(w, "{} {} {}", m.nrows(), m.ncols(), nnz).map_err(io)?;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if v != 0.0 {
                writeln!(w, "{} {} {v:.16e}", i + 1, j + 1).map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)
}

pub fn write_vector(path: &Path, v: &DVector<f64>) -> Result<()> {
    write_matrix(path, &DMatrix::from_column_slice(v.len(), 1, v.as_slice()))
}

#[derive(Clone, Copy, PartialEq)]
enum Layout {
    Array,
    Coordinate,
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let perr = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line: line + 1,
        msg,
    };

    let (no, header) = match lines.next() {
        Some((no, l)) => (no, l.map_err(|e| Error::io(path, e))?),
        None => return Err(perr(0, "empty file".into())),
    };
    let tokens: Vec<String> = header.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(perr(no, format!("not a Matrix Market header: {header:?}")));
    }
    let layout = match tokens[2].as_str() {
        "array" => Layout::Array,
        "coordinate" => Layout::Coordinate,
        other => return Err(perr(no, format!("unsupported format {other:?}"))),
    };
    if !matches!(tokens[3].as_str(), "real" | "integer" | "double") {
        return Err(perr(no, format!("unsupported field {:?}", tokens[3])));
    }
    let symmetric = match tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(perr(no, format!("unsupported symmetry {other:?}"))),
    };

    let mut data = lines.filter_map(|(no, l)| match l {
        Ok(l) => {
            let t = l.trim();
            if t.is_empty() || t.starts_with('%') {
                None
            } else {
                Some(Ok((no, t.to_string())))
            }
        }
        Err(e) => Some(Err(Error::io(path, e))),
    });

    let (sno, size) = data.next().ok_or_else(|| perr(no, "missing size line".into()))??;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| perr(sno, format!("bad size token {t:?}"))))
        .collect::<Result<_>>()?;
    let want = if layout == Layout::Array { 2 } else { 3 };
    if dims.len() != want {
        return Err(perr(sno, format!("size line needs {want} integers")));
    }
    let (nr, nc) = (dims[0], dims[1]);
    if symmetric && nr != nc {
        return Err(perr(sno, "symmetric matrix must be square".into()));
    }
    let parse_f = |no: usize, t: &str| -> Result<f64> {
        let v: f64 = t.parse().map_err(|_| perr(no, format!("bad number {t:?}")))?;
        if !v.is_finite() {
            return Err(perr(no, format!("non-finite value {t:?}")));
        }
        Ok(v)
    };

    let mut m = DMatrix::zeros(nr, nc);
    match layout {
        Layout::Array => {
            // symmetric arrays store the lower triangle column by column
            let slots: Vec<(usize, usize)> = (0..nc)
                .flat_map(|j| (if symmetric { j } else { 0 }..nr).map(move |i| (i, j)))
                .collect();
            let mut idx = 0;
            for item in data {
                let (no, line) = item?;
                for t in line.split_whitespace() {
                    if idx >= slots.len() {
                        return Err(perr(no, "more values than the declared size".into()));
                    }
                    let (i, j) = slots[idx];
                    let v = parse_f(no, t)?;
                    m[(i, j)] = v;
                    if symmetric {
                        m[(j, i)] = v;
                    }
                    idx += 1;
                }
            }
            if idx != slots.len() {
                return Err(perr(sno, format!("expected {} values, found {idx}", slots.len())));
            }
        }
        Layout::Coordinate => {
            let nnz = dims[2];
            let mut count = 0;
            for item in data {
                let (no, line) = item?;
                let t: Vec<&str> = line.split_whitespace().collect();
                if t.len() != 3 {
                    return Err(perr(no, "coordinate entry needs `row col value`".into()));
                }
                let i: usize = t[0].parse().map_err(|_| perr(no, format!("bad row {:?}", t[0])))?;
                let j: usize = t[1].parse().map_err(|_| perr(no, format!("bad column {:?}", t[1])))?;
                if i == 0 || j == 0 || i > nr || j > nc {
                    return Err(perr(no, format!("entry ({i}, {j}) outside {nr}x{nc}")));
                }
                let v = parse_f(no, t[2])?;
                m[(i - 1, j - 1)] += v;
                if symmetric && i != j {
                    m[(j - 1, i - 1)] += v;
                }
                count += 1;
            }
            if count != nnz {
                return Err(perr(sno, format!("expected {nnz} entries, found {count}")));
            }
        }
    }
    Ok(m)
}

/// Read an `n x 1` (or `1 x n`) matrix as a vector.
pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    let m = read_matrix(path)?;
    if m.ncols() == 1 {
        Ok(m.column(0).into_owned())
    } else if m.nrows() == 1 {
        Ok(m.row(0).transpose())
    } else {
        Err(Error::Parse {
            path: path.to_path_buf(),
            line: 2,
            msg: format!("expected a vector, found a {}x{} matrix", m.nrows(), m.ncols()),
        })
    }
}
