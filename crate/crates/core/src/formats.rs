//! Text formats for matrices and vectors.
//!
//! `.lsm`: header `LSM m n`, then one `i j re im` line per stored entry.
//! `.vec`: header `VEC n`, then one `i re im` line per stored entry.
//! Indices are 1-based, omitted entries are zero, blank lines and lines
//! starting with `#` are skipped. Repeated entries overwrite.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::access::LsMatrix;
use crate::dense::{DenseMatrix, DenseVector, Scalar};
use crate::error::{Error, Result};

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Content lines with their 1-based line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(no, line)| {
        let line = line.trim();
        (!line.is_empty() && !line.starts_with('#')).then(|| (no + 1, line.split_whitespace().collect()))
    })
}

fn parse_usize(tok: &str, line: usize, what: &str) -> Result<usize> {
    tok.parse().map_err(|_| parse_error(line, format!("bad {what} `{tok}`")))
}

fn parse_f64(tok: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = tok.parse().map_err(|_| parse_error(line, format!("bad {what} `{tok}`")))?;
    if !v.is_finite() {
        return Err(parse_error(line, format!("non-finite {what} `{tok}`")));
    }
    Ok(v)
}

fn parse_index(tok: &str, line: usize, bound: usize, what: &str) -> Result<usize> {
    let i = parse_usize(tok, line, what)?;
    if i == 0 || i > bound {
        return Err(parse_error(line, format!("{what} {i} outside 1..={bound}")));
    }
    Ok(i - 1)
}

pub fn parse_lsm(text: &str) -> Result<DenseMatrix> {
    let mut it = lines(text);
    let (hline, header) = it.next().ok_or_else(|| parse_error(1, "missing `LSM m n` header"))?;
    if header.len() != 3 || header[0] != "LSM" {
        return Err(parse_error(hline, "expected `LSM m n`"));
    }
    let m = parse_usize(header[1], hline, "row count")?;
    let n = parse_usize(header[2], hline, "column count")?;
    if m == 0 || n == 0 {
        return Err(parse_error(hline, "dimensions must be positive"));
    }
    let mut a = DenseMatrix::zeros(m, n);
    for (no, toks) in it {
        if toks.len() != 4 {
            return Err(parse_error(no, format!("expected `i j re im`, found {} fields", toks.len())));
        }
        let i = parse_index(toks[0], no, m, "row index")?;
        let j = parse_index(toks[1], no, n, "column index")?;
        a[(i, j)] = Scalar::new(parse_f64(toks[2], no, "real part")?, parse_f64(toks[3], no, "imaginary part")?);
    }
    Ok(a)
}

pub fn parse_vec(text: &str) -> Result<DenseVector> {
    let mut it = lines(text);
    let (hline, header) = it.next().ok_or_else(|| parse_error(1, "missing `VEC n` header"))?;
    if header.len() != 2 || header[0] != "VEC" {
        return Err(parse_error(hline, "expected `VEC n`"));
    }
    let n = parse_usize(header[1], hline, "length")?;
    if n == 0 {
        return Err(parse_error(hline, "length must be positive"));
    }
    let mut v = DenseVector::zeros(n);
    for (no, toks) in it {
        if toks.len() != 3 {
            return Err(parse_error(no, format!("expected `i re im`, found {} fields", toks.len())));
        }
        let i = parse_index(toks[0], no, n, "index")?;
        v[i] = Scalar::new(parse_f64(toks[1], no, "real part")?, parse_f64(toks[2], no, "imaginary part")?);
    }
    Ok(v)
}

/// Nonzero entries only; floats print in shortest round-trip form.
pub fn format_lsm(a: &DenseMatrix) -> String {
    let mut out = format!("LSM {} {}\n", a.rows(), a.cols());
    for i in 0..a.rows() {
        for (j, z) in a.row(i).iter().enumerate() {
            if z.norm_sqr() != 0.0 {
                out.push_str(&format!("{} {} {:?} {:?}\n", i + 1, j + 1, z.re, z.im));
            }
        }
    }
    out
}

pub fn format_vec(v: &DenseVector) -> String {
    let mut out = format!("VEC {}\n", v.len());
    for (i, z) in v.iter().enumerate() {
        if z.norm_sqr() != 0.0 {
            out.push_str(&format!("{} {:?} {:?}\n", i + 1, z.re, z.im));
        }
    }
    out
}

pub fn read_lsm(path: &Path) -> Result<DenseMatrix> {
    parse_lsm(&fs::read_to_string(path)?)
}

pub fn read_vec(path: &Path) -> Result<DenseVector> {
    parse_vec(&fs::read_to_string(path)?)
}

pub fn write_lsm(path: &Path, a: &DenseMatrix) -> Result<()> {
    write_text(path, &format_lsm(a))
}

pub fn write_vec(path: &Path, v: &DenseVector) -> Result<()> {
    write_text(path, &format_vec(v))
}

/// Matrix straight from the file into length-square access.
pub fn load_ls_matrix(path: &Path) -> Result<LsMatrix> {
    LsMatrix::from_dense(&read_lsm(path)?)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lsm_round_trip() {
        let a = DenseMatrix::from_fn(3, 4, |i, j| {
            if (i + j) % 2 == 0 {
                Scalar::new(0.1 * i as f64 - 1.0 / 3.0, j as f64 * 1e-17)
            } else {
                Scalar::new(0.0, 0.0)
            }
        });
        assert_eq!(parse_lsm(&format_lsm(&a)).unwrap(), a);
    }

    #[test]
    fn vec_round_trip() {
        let v = DenseVector::from(vec![Scalar::new(1.0, -2.5), Scalar::new(0.0, 0.0), Scalar::new(f64::MIN_POSITIVE, 1e300)]);
        assert_eq!(parse_vec(&format_vec(&v)).unwrap(), v);
    }

    #[test]
    fn sparse_input_with_comments() {
        let a = parse_lsm("# demo\nLSM 2 3\n\n1 1 3 0\n2 3 0 -4\n").unwrap();
        assert_eq!(a[(0, 0)], Scalar::new(3.0, 0.0));
        assert_eq!(a[(1, 2)], Scalar::new(0.0, -4.0));
        assert_eq!(a.frobenius_norm(), 5.0);
        let v = parse_vec("VEC 3\n2 1 1\n").unwrap();
        assert_eq!(v[0], Scalar::new(0.0, 0.0));
        assert_eq!(v[1], Scalar::new(1.0, 1.0));
    }

    fn line_of(err: Error) -> usize {
        match err {
            Error::Parse { line, .. } => line,
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        assert_eq!(line_of(parse_lsm("").unwrap_err()), 1);
        assert_eq!(line_of(parse_lsm("VEC 2\n").unwrap_err()), 1);
        assert_eq!(line_of(parse_lsm("LSM 2 2\n1 1 1 0\n3 1 1 0\n").unwrap_err()), 3);
        assert_eq!(line_of(parse_lsm("LSM 2 2\n0 1 1 0\n").unwrap_err()), 2);
        assert_eq!(line_of(parse_lsm("LSM 2 2\n1 1 x 0\n").unwrap_err()), 2);
        assert_eq!(line_of(parse_lsm("LSM 2 2\n1 1 1\n").unwrap_err()), 2);
        assert_eq!(line_of(parse_lsm("LSM 2 2\n\n\n1 1 nan 0\n").unwrap_err()), 4);
        assert_eq!(line_of(parse_lsm("LSM 0 2\n").unwrap_err()), 1);
        assert_eq!(line_of(parse_vec("VEC 2\n1 1 0\n2 1\n").unwrap_err()), 3);
    }

    #[test]
    fn file_round_trip() {
        let dir = std::env::temp_dir().join(format!("lsq-formats-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let a = DenseMatrix::from_real(2, 2, &[1.0, 2.0, 0.0, -1.5]).unwrap();
        let path = dir.join("a.lsm");
        write_lsm(&path, &a).unwrap();
        assert_eq!(read_lsm(&path).unwrap(), a);
        assert!((load_ls_matrix(&path).unwrap().frobenius_norm_sqr() - 7.25).abs() < 1e-14);
        assert!(matches!(read_vec(&dir.join("missing.vec")), Err(Error::Io(_))));
        fs::remove_dir_all(&dir).unwrap();
    }
}
