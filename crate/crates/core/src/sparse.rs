//! Row-compressed sparse matrices and the coordinate file format.
//!
//! Coordinate files hold one header line `dim nnz` followed by `nnz` lines
//! `row col value` with 0-based indices and 17 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Square CSR matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < dim && c < dim, "triplet ({r}, {c}) outside {dim}x{dim}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            dim,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(col, value)` pairs of one row.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    /// `y = A x`, rows in parallel.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        });
    }

    /// Largest absolute row sum, an upper bound on the spectral norm.
    pub fn norm_inf(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Exact structural and numerical symmetry.
    pub fn is_symmetric(&self) -> bool {
        self.triplets().all(|(i, j, v)| self.get(j, i) == v)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.dim, self.dim);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }

    pub fn from_dense(m: &nalgebra::DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols());
        let triplets = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
            .filter(|&(i, j)| m[(i, j)] != 0.0)
            .map(|(i, j)| (i, j, m[(i, j)]))
            .collect();
        Self::from_triplets(m.nrows(), triplets)
    }

    /// `self + factor * other`.
    pub fn add_scaled(&self, other: &CsrMatrix, factor: f64) -> CsrMatrix {
        assert_eq!(self.dim, other.dim);
        let mut t: Vec<_> = self.triplets().collect();
        t.extend(other.triplets().map(|(i, j, v)| (i, j, factor * v)));
        Self::from_triplets(self.dim, t)
    }
}

pub fn format_coo(m: &CsrMatrix) -> String {
    let mut s = String::new();
    writeln!(s, "{} {}", m.dim(), m.nnz()).unwrap();
    for (i, j, v) in m.triplets() {
        writeln!(s, "{i} {j} {v:.16e}").unwrap();
    }
    s
}

pub fn parse_coo(text: &str) -> Result<CsrMatrix> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty coordinate file".into()))?;
    let mut it = header.split_whitespace();
    let parse_usize = |s: Option<&str>, what: &str| -> Result<usize> {
        s.and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad {what} in coordinate file")))
    };
    let dim = parse_usize(it.next(), "dimension")?;
    let nnz = parse_usize(it.next(), "nnz")?;
    let mut triplets = Vec::with_capacity(nnz);
    for line in lines {
        let mut it = line.split_whitespace();
        let i = parse_usize(it.next(), "row")?;
        let j = parse_usize(it.next(), "column")?;
        let v: f64 = it
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad value in '{line}'")))?;
        if i >= dim || j >= dim {
            return Err(Error::Parse(format!(
                "entry ({i}, {j}) outside dimension {dim}"
            )));
        }
        triplets.push((i, j, v));
    }
    if triplets.len() != nnz {
        return Err(Error::Parse(format!(
            "header announces {nnz} entries, found {}",
            triplets.len()
        )));
    }
    Ok(CsrMatrix::from_triplets(dim, triplets))
}

pub fn write_coo(m: &CsrMatrix, path: &Path) -> Result<()> {
    std::fs::write(path, format_coo(m)).map_err(|e| Error::io(path, e))
}

pub fn read_coo(path: &Path) -> Result<CsrMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_coo(&text)
}
