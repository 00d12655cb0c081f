//! Text formats.
//!
//! Sparse matrices use a coordinate format:
//!
//! ```text
//! %%matrix coordinate real
//! <rows> <cols> <nnz>
//! <row> <col> <value>      (1-based, one triple per line)
//! ```
//!
//! Dense matrices are a `<rows> <cols>` header followed by one line of
//! whitespace-separated values per row. Floats are written in Rust's shortest
//! round-trip form, so reading back reproduces every value bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{DenseMatrix, MaskMatrix, SparseMatrix};

pub const COORDINATE_HEADER: &str = "%%matrix coordinate real";

pub fn write_sparse<W: Write>(out: &mut W, m: &SparseMatrix) -> std::io::Result<()> {
    writeln!(out, "{COORDINATE_HEADER}")?;
    writeln!(out, "{} {} {}", m.rows(), m.cols(), m.nnz())?;
    for r in 0..m.rows() {
        for (c, v) in m.row_iter(r) {
            writeln!(out, "{} {} {:?}", r + 1, c + 1, v)?;
        }
    }
    Ok(())
}

pub fn write_dense<W: Write>(out: &mut W, m: &DenseMatrix) -> std::io::Result<()> {
    writeln!(out, "{} {}", m.rows(), m.cols())?;
    let mut line = String::new();
    for r in 0..m.rows() {
        line.clear();
        for (j, v) in m.row(r).iter().enumerate() {
            if j > 0 {
                line.push(' ');
            }
            line.push_str(&format!("{v:?}"));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Masks are written as coordinate matrices whose stored entries are all `1`.
pub fn write_mask<W: Write>(out: &mut W, m: &MaskMatrix) -> std::io::Result<()> {
    let mut entries: Vec<(usize, usize)> = m.entries().collect();
    entries.sort_unstable();
    writeln!(out, "{COORDINATE_HEADER}")?;
    writeln!(out, "{} {} {}", m.rows(), m.cols(), entries.len())?;
    for (r, c) in entries {
        writeln!(out, "{} {} 1", r + 1, c + 1)?;
    }
    Ok(())
}

fn content_lines<R: BufRead>(input: R) -> impl Iterator<Item = (usize, std::io::Result<String>)> {
    input
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| match l {
            Ok(s) => {
                let t = s.trim();
                !t.is_empty() && !t.starts_with('%')
            }
            Err(_) => true,
        })
}

fn parse_num<T: std::str::FromStr>(
    tok: Option<&str>,
    path: &Path,
    line: usize,
    what: &str,
) -> Result<T> {
    tok.ok_or_else(|| Error::parse(path, line, format!("missing {what}")))?
        .parse()
        .map_err(|_| Error::parse(path, line, format!("malformed {what}")))
}

type Triplets = (usize, usize, Vec<(usize, usize, f64)>);

fn read_triplets<R: BufRead>(input: R, path: &Path) -> Result<Triplets> {
    let mut input = input;
    let mut first = String::new();
    input
        .read_line(&mut first)
        .map_err(|e| Error::io(path, e))?;
    if first.trim() != COORDINATE_HEADER {
        return Err(Error::parse(
            path,
            1,
            format!("expected `{COORDINATE_HEADER}`"),
        ));
    }
    let mut lines = content_lines(input).map(|(n, l)| (n + 1, l));
    let (hline, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 2, "missing size line"))?;
    let header = header.map_err(|e| Error::io(path, e))?;
    let mut toks = header.split_whitespace();
    let rows: usize = parse_num(toks.next(), path, hline, "row count")?;
    let cols: usize = parse_num(toks.next(), path, hline, "column count")?;
    let nnz: usize = parse_num(toks.next(), path, hline, "entry count")?;
    let mut triplets = Vec::with_capacity(nnz);
    for (ln, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut toks = line.split_whitespace();
        let r: usize = parse_num(toks.next(), path, ln, "row index")?;
        let c: usize = parse_num(toks.next(), path, ln, "column index")?;
        let v: f64 = parse_num(toks.next(), path, ln, "value")?;
        if r == 0 || c == 0 || r > rows || c > cols {
            return Err(Error::parse(
                path,
                ln,
                format!("index ({r}, {c}) outside {rows}x{cols}"),
            ));
        }
        if !v.is_finite() {
            return Err(Error::parse(path, ln, "non-finite value"));
        }
        triplets.push((r - 1, c - 1, v));
    }
    if triplets.len() != nnz {
        return Err(Error::parse(
            path,
            hline,
            format!("header declares {nnz} entries, found {}", triplets.len()),
        ));
    }
    Ok((rows, cols, triplets))
}

pub fn read_sparse<R: BufRead>(input: R, path: &Path) -> Result<SparseMatrix> {
    let (rows, cols, triplets) = read_triplets(input, path)?;
    let mut seen: Vec<(usize, usize)> = triplets.iter().map(|&(r, c, _)| (r, c)).collect();
    seen.sort_unstable();
    if seen.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::parse(path, 0, "duplicate coordinate entries"));
    }
    SparseMatrix::from_triplets(rows, cols, &triplets)
}

pub fn read_mask<R: BufRead>(input: R, path: &Path) -> Result<MaskMatrix> {
    let (rows, cols, triplets) = read_triplets(input, path)?;
    let entries: Vec<(usize, usize)> = triplets
        .into_iter()
        .filter(|&(_, _, v)| v != 0.0)
        .map(|(r, c, _)| (r, c))
        .collect();
    MaskMatrix::from_entries(rows, cols, &entries)
}

pub fn read_dense<R: BufRead>(input: R, path: &Path) -> Result<DenseMatrix> {
    let mut lines = content_lines(input);
    let (hline, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "missing size line"))?;
    let header = header.map_err(|e| Error::io(path, e))?;
    let mut toks = header.split_whitespace();
    let rows: usize = parse_num(toks.next(), path, hline, "row count")?;
    let cols: usize = parse_num(toks.next(), path, hline, "column count")?;
    let mut data = Vec::with_capacity(rows * cols);
    for (ln, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = parse_num(Some(tok), path, ln, "value")?;
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(Error::parse(path, ln, format!("expected {cols} values")));
        }
    }
    if data.len() != rows * cols {
        return Err(Error::parse(path, hline, format!("expected {rows} rows")));
    }
    DenseMatrix::from_vec(rows, cols, data).map_err(|e| Error::parse(path, 0, e.to_string()))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn save(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    f(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_sparse(path: &Path) -> Result<SparseMatrix> {
    read_sparse(open(path)?, path)
}

pub fn load_dense(path: &Path) -> Result<DenseMatrix> {
    read_dense(open(path)?, path)
}

pub fn load_mask(path: &Path) -> Result<MaskMatrix> {
    read_mask(open(path)?, path)
}

pub fn save_sparse(path: &Path, m: &SparseMatrix) -> Result<()> {
    save(path, |out| write_sparse(out, m))
}

pub fn save_dense(path: &Path, m: &DenseMatrix) -> Result<()> {
    save(path, |out| write_dense(out, m))
}

pub fn save_mask(path: &Path, m: &MaskMatrix) -> Result<()> {
    save(path, |out| write_mask(out, m))
}
