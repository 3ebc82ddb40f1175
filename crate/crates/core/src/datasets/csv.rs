//! Plain-text matrix files.
//!
//! The first line holds `rows,cols`; each following line holds one matrix row
//! as comma-separated values. Values are written with the shortest
//! representation that parses back to the same `f64`, so a write/read round
//! trip is bit-exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Writes `m` to `out`.
pub fn write_matrix<W: Write>(m: &DMatrix<f64>, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{},{}", m.nrows(), m.ncols())?;
    let mut line = String::new();
    for row in m.row_iter() {
        line.clear();
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&v.to_string());
        }
        writeln!(out, "{line}")?;
    }
    out.flush()
}

/// Reads a matrix written by [`write_matrix`].
pub fn read_matrix<R: BufRead>(input: R) -> Result<DMatrix<f64>> {
    let mut lines = input.lines().enumerate();
    let (rows, cols) = match lines.next() {
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "empty file, expected a `rows,cols` header".into(),
            })
        }
        Some((_, line)) => parse_header(&line.map_err(|e| parse_io(1, e))?)?,
    };
    let mut data = DMatrix::zeros(rows, cols);
    let mut found = 0;
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(|e| parse_io(lineno, e))?;
        if line.trim().is_empty() {
            continue;
        }
        if found == rows {
            return Err(Error::RowCount {
                expected_rows: rows,
                found_rows: found + 1,
            });
        }
        let mut count = 0;
        for (j, token) in line.split(',').enumerate() {
            if j >= cols {
                count = j + 1;
                continue;
            }
            data[(found, j)] = token.trim().parse::<f64>().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("non-numeric token `{}` in field {}", token.trim(), j + 1),
            })?;
            count = j + 1;
        }
        if count != cols {
            return Err(Error::Parse {
                line: lineno,
                message: format!("row has {count} fields, header declares {cols}"),
            });
        }
        found += 1;
    }
    if found != rows {
        return Err(Error::RowCount {
            expected_rows: rows,
            found_rows: found,
        });
    }
    Ok(data)
}

fn parse_io(line: usize, e: std::io::Error) -> Error {
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let bad = || Error::Parse {
        line: 1,
        message: format!("malformed header `{line}`, expected `rows,cols`"),
    };
    let mut parts = line.split(',');
    let rows = parts.next().and_then(|s| s.trim().parse().ok()).ok_or_else(bad)?;
    let cols = parts.next().and_then(|s| s.trim().parse().ok()).ok_or_else(bad)?;
    if parts.next().is_some() {
        return Err(bad());
    }
    Ok((rows, cols))
}

/// Writes `m` to the file at `path`, creating parent directories.
pub fn write_matrix_csv(m: &DMatrix<f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_matrix(m, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

/// Reads the matrix file at `path`.
pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_matrix(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn round(m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut buf = Vec::new();
        write_matrix(m, &mut buf).unwrap();
        read_matrix(buf.as_slice()).unwrap()
    }

    #[test]
    fn bit_identical_round_trip() {
        let m = DMatrix::from_fn(3, 4, |i, j| (i as f64 + 0.1).powf(j as f64 + 0.3) / 7.0 - 1e-300);
        let back = round(&m);
        for (a, b) in m.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/m.csv");
        let m = DMatrix::from_fn(2, 5, |i, j| (i * 5 + j) as f64 / 3.0);
        write_matrix_csv(&m, &path).unwrap();
        assert_eq!(read_matrix_csv(&path).unwrap(), m);
    }

    #[test]
    fn empty_file_has_line_number() {
        match read_matrix("".as_bytes()) {
            Err(Error::Parse { line: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn row_count_mismatch() {
        match read_matrix("3,2\n1,2\n3,4\n".as_bytes()) {
            Err(Error::RowCount {
                expected_rows: 3,
                found_rows: 2,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            read_matrix("1,2\n1,2\n3,4\n".as_bytes()),
            Err(Error::RowCount { .. })
        ));
    }

    #[test]
    fn malformed_rows() {
        match read_matrix("2,2\n1,2\n3\n".as_bytes()) {
            Err(Error::Parse { line: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match read_matrix("1,2\n1,x\n".as_bytes()) {
            Err(Error::Parse { line: 2, message }) => assert!(message.contains('x')),
            other => panic!("unexpected {other:?}"),
        }
        assert!(read_matrix("2,2,2\n".as_bytes()).is_err());
        assert!(read_matrix("1,2\n1,2,3\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn any_finite_values_round_trip(v in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 12)) {
            let m = DMatrix::from_vec(3, 4, v);
            let back = round(&m);
            for (a, b) in m.iter().zip(back.iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
