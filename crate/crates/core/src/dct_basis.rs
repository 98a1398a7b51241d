//! Low-frequency 2D DCT dictionary for the smooth layer.
//!
//! A frequency pair `(u, v)` is (vertical, horizontal): `u` indexes the row
//! direction and `v` the column direction, so the zig-zag walk starts
//! `(0,0) -> (0,1) -> (1,0)` as in JPEG. Atoms are vectorized row-major,
//! matching [`crate::image_io::GrayImage`].

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// First `k` frequency pairs of the JPEG zig-zag scan over an `n`×`n` plane.
pub fn zigzag_order(n: usize, k: usize) -> Result<Vec<(usize, usize)>> {
    if k == 0 || k > n * n {
        return Err(Error::InvalidArgument(format!(
            "k = {k} outside 1..={} for n = {n}",
            n * n
        )));
    }
    let mut out = Vec::with_capacity(k);
    'diag: for d in 0..(2 * n - 1) {
        let lo = d.saturating_sub(n - 1);
        let hi = d.min(n - 1);
        let rows: Box<dyn Iterator<Item = usize>> = if d % 2 == 1 {
            Box::new(lo..=hi)
        } else {
            Box::new((lo..=hi).rev())
        };
        for u in rows {
            out.push((u, d - u));
            if out.len() == k {
                break 'diag;
            }
        }
    }
    Ok(out)
}

fn dct_scale(freq: usize, n: usize) -> f64 {
    if freq == 0 {
        (1.0 / n as f64).sqrt()
    } else {
        (2.0 / n as f64).sqrt()
    }
}

/// Orthonormal DCT-II atom for frequency `(u, v)`, row-major over an `n`×`n` block.
pub fn dct_atom(u: usize, v: usize, n: usize) -> Result<Vec<f64>> {
    if u >= n || v >= n {
        return Err(Error::InvalidArgument(format!(
            "frequency ({u}, {v}) outside {n}x{n} plane"
        )));
    }
    let nf = n as f64;
    let row_profile: Vec<f64> = (0..n)
        .map(|y| dct_scale(u, n) * (PI * u as f64 * (2 * y + 1) as f64 / (2.0 * nf)).cos())
        .collect();
    let col_profile: Vec<f64> = (0..n)
        .map(|x| dct_scale(v, n) * (PI * v as f64 * (2 * x + 1) as f64 / (2.0 * nf)).cos())
        .collect();
    Ok(row_profile
        .iter()
        .flat_map(|r| col_profile.iter().map(move |c| r * c))
        .collect())
}

/// The N²×K dictionary `P`, stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    n: usize,
    k: usize,
    freq_pairs: Vec<(usize, usize)>,
    data: Vec<f64>,
}

impl BasisMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Length of a vectorized block, N².
    pub fn dim(&self) -> usize {
        self.n * self.n
    }

    pub fn freq_pairs(&self) -> &[(usize, usize)] {
        &self.freq_pairs
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let d = self.dim();
        &self.data[j * d..(j + 1) * d]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim())
    }

    /// `P · coeffs`
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        debug_assert_eq!(coeffs.len(), self.k);
        let mut out = vec![0.0; self.dim()];
        for (col, &c) in self.columns().zip(coeffs) {
            if c != 0.0 {
                out.iter_mut().zip(col).for_each(|(o, p)| *o += c * p);
            }
        }
        out
    }

    /// `Pᵀ · signal`
    pub fn analyze(&self, signal: &[f64]) -> Vec<f64> {
        debug_assert_eq!(signal.len(), self.dim());
        self.columns()
            .map(|col| col.iter().zip(signal).map(|(p, s)| p * s).sum())
            .collect()
    }

    /// Dense copy as an N²×K nalgebra matrix.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.dim(), self.k, &self.data)
    }

    /// `PᵀP`
    pub fn gram(&self) -> DMatrix<f64> {
        let m = self.to_matrix();
        m.transpose() * m
    }
}

/// Build `P` from the first `k` zig-zag atoms of an `n`×`n` DCT.
pub fn build_basis(n: usize, k: usize) -> Result<BasisMatrix> {
    let freq_pairs = zigzag_order(n, k)?;
    let mut data = Vec::with_capacity(n * n * k);
    for &(u, v) in &freq_pairs {
        data.extend(dct_atom(u, v, n)?);
    }
    Ok(BasisMatrix {
        n,
        k,
        freq_pairs,
        data,
    })
}
