//! Matrix Market coordinate I/O for symmetric matrices (debug dumps).

use std::io::{self, BufRead, Write};

use crate::scalar::Real;

use super::SparseSymMatrix;

/// Writes the stored lower triangle with 17 significant digits.
pub fn write_matrix_market<T: Real, W: Write>(a: &SparseSymMatrix<T>, mut w: W) -> io::Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate real symmetric")?;
    writeln!(w, "{} {} {}", a.dim(), a.dim(), a.nnz())?;
    for (i, j, v) in a.iter() {
        writeln!(w, "{} {} {:.16e}", i + 1, j + 1, v.as_f64())?;
    }
    Ok(())
}

pub fn read_matrix_market<R: BufRead>(r: R) -> io::Result<SparseSymMatrix<f64>> {
    let bad = |msg: &str| io::Error::new(io::ErrorKind::InvalidData, msg.to_string());
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| bad("empty file"))??;
    if !header.starts_with("%%MatrixMarket matrix coordinate real symmetric") {
        return Err(bad("unsupported Matrix Market header"));
    }
    let mut size: Option<(usize, usize)> = None;
    let mut trip = Vec::new();
    for line in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let f: Vec<&str> = t.split_whitespace().collect();
        match size {
            None => {
                if f.len() != 3 {
                    return Err(bad("size line"));
                }
                let n: usize = f[0].parse().map_err(|_| bad("size line"))?;
                let nnz: usize = f[2].parse().map_err(|_| bad("size line"))?;
                size = Some((n, nnz));
            }
            Some(_) => {
                if f.len() != 3 {
                    return Err(bad("entry line"));
                }
                let i: usize = f[0].parse().map_err(|_| bad("row index"))?;
                let j: usize = f[1].parse().map_err(|_| bad("column index"))?;
                let v: f64 = f[2].parse().map_err(|_| bad("value"))?;
                trip.push((i - 1, j - 1, v));
            }
        }
    }
    let (n, nnz) = size.ok_or_else(|| bad("missing size line"))?;
    if trip.len() != nnz {
        return Err(bad("entry count mismatch"));
    }
    SparseSymMatrix::from_triplets(n, &trip).map_err(|e| bad(&e.to_string()))
}
