//! Compressed sparse row storage.

use std::io::{self, Write};

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Pattern from sorted, deduplicated column lists; values zeroed.
    pub fn from_pattern(rows: Vec<Vec<u32>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let nnz: usize = rows.iter().map(Vec::len).sum();
        let mut cols = Vec::with_capacity(nnz);
        for r in rows {
            cols.extend_from_slice(&r);
            row_ptr.push(cols.len());
        }
        CsrMatrix { n, row_ptr, cols, values: vec![0.0; nnz] }
    }

    pub fn from_dense(a: &[Vec<f64>]) -> Self {
        let rows = a
            .iter()
            .map(|r| r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, _)| j as u32).collect())
            .collect();
        let mut m = CsrMatrix::from_pattern(rows);
        for i in 0..m.n {
            for idx in m.row_ptr[i]..m.row_ptr[i + 1] {
                m.values[idx] = a[i][m.cols[idx] as usize];
            }
        }
        m
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CsrMatrix::from_pattern((0..n).map(|i| vec![i as u32]).collect());
        m.values.fill(1.0);
        m
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.values[r])
    }

    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let (c, _) = self.row(i);
        c.binary_search(&(j as u32)).ok().map(|k| self.row_ptr[i] + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |k| self.values[k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(&j, &a)| a * x[j as usize]).sum()
            })
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                row[j as usize] = a;
            }
        }
        d
    }

    /// Largest |a_ij − a_ji| relative to the largest |a_ij|.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                scale = scale.max(a.abs());
                worst = worst.max((a - self.get(j as usize, i)).abs());
            }
        }
        if scale > 0.0 {
            worst / scale
        } else {
            0.0
        }
    }

    /// Coordinate text format: a header line `n n nnz`, then `i j value`
    /// lines with 1-based indices.
    pub fn write_coo(&self, mut out: impl Write) -> io::Result<()> {
        writeln!(out, "{} {} {}", self.n, self.n, self.nnz())?;
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                writeln!(out, "{} {} {:.17e}", i + 1, j + 1, a)?;
            }
        }
        Ok(())
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}
