//! Supernodal-by-entity sparse Cholesky factorization.
//!
//! DOFs are grouped into blocks (one per mesh entity); the block graph is
//! ordered by minimum degree, which eliminates cell interiors first (static
//! condensation) and then the skeleton. Blocks are dense row-major.

use super::sparse::CsrMatrix;
use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::ops::Range;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactorError {
    #[error("matrix is not positive definite: pivot {pivot:e} in block {block}")]
    NotPositiveDefinite { block: usize, pivot: f64 },
    #[error("block partition does not cover 0..{n}")]
    BadBlocks { n: usize },
}

pub struct BlockCholesky {
    n: usize,
    blocks: Vec<Range<usize>>,
    /// Elimination order of blocks.
    order: Vec<usize>,
    /// For each block: later-eliminated neighbor blocks, sorted by id.
    structure: Vec<Vec<usize>>,
    diag: Vec<Vec<f64>>,
    off: Vec<Vec<Vec<f64>>>,
    /// Symmetric diagonal scaling applied before factoring.
    scale: Vec<f64>,
}

fn minimum_degree(adj: &mut [Vec<usize>], weight: &[usize]) -> (Vec<usize>, Vec<Vec<usize>>) {
    let nb = adj.len();
    let degree = |a: &Vec<usize>| a.iter().map(|&c| weight[c]).sum::<usize>();
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> = BinaryHeap::new();
    let mut current = vec![0usize; nb];
    for b in 0..nb {
        current[b] = degree(&adj[b]);
        heap.push(Reverse((current[b], b)));
    }
    let mut done = vec![false; nb];
    let mut order = Vec::with_capacity(nb);
    let mut structure = vec![Vec::new(); nb];
    let mut merged = Vec::new();
    while let Some(Reverse((d, v))) = heap.pop() {
        if done[v] || d != current[v] {
            continue;
        }
        done[v] = true;
        order.push(v);
        let nbrs = std::mem::take(&mut adj[v]);
        for &u in &nbrs {
            // adj[u] ← adj[u] ∪ nbrs \ {u, v}
            merged.clear();
            let (a, b) = (&adj[u], &nbrs);
            let (mut i, mut j) = (0, 0);
            while i < a.len() || j < b.len() {
                let x = if j == b.len() || (i < a.len() && a[i] < b[j]) {
                    i += 1;
                    a[i - 1]
                } else if i == a.len() || b[j] < a[i] {
                    j += 1;
                    b[j - 1]
                } else {
                    i += 1;
                    j += 1;
                    a[i - 1]
                };
                if x != u && x != v {
                    merged.push(x);
                }
            }
            adj[u].clear();
            adj[u].extend_from_slice(&merged);
            current[u] = degree(&adj[u]);
            heap.push(Reverse((current[u], u)));
        }
        structure[v] = nbrs;
    }
    (order, structure)
}

/// In-place lower Cholesky of a dense n×n row-major block.
fn dense_cholesky(a: &mut [f64], n: usize) -> Result<(), f64> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for t in 0..j {
            d -= a[j * n + t] * a[j * n + t];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(d);
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let (ri, rj) = (i * n, j * n);
            let mut s = a[ri + j];
            for t in 0..j {
                s -= a[ri + t] * a[rj + t];
            }
            a[ri + j] = s / d;
        }
        for t in j + 1..n {
            a[j * n + t] = 0.0;
        }
    }
    Ok(())
}

/// Solves L y = b in place (L lower, row-major n×n).
fn forward(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for t in 0..i {
            s -= l[i * n + t] * b[t];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Solves Lᵀ x = b in place.
fn backward(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let x = b[i] / l[i * n + i];
        b[i] = x;
        for t in 0..i {
            b[t] -= l[i * n + t] * x;
        }
    }
}

/// c (m×k) −= a (m×n) · b (k×n)ᵀ, all row-major.
fn gemm_nt_sub(c: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, n: usize) {
    for r in 0..m {
        let ar = &a[r * n..(r + 1) * n];
        let cr = &mut c[r * k..(r + 1) * k];
        for (cc, cv) in cr.iter_mut().enumerate() {
            let br = &b[cc * n..(cc + 1) * n];
            let mut s = 0.0;
            for t in 0..n {
                s += ar[t] * br[t];
            }
            *cv -= s;
        }
    }
}

impl BlockCholesky {
    pub fn factor(a: &CsrMatrix, blocks: &[Range<usize>]) -> Result<Self, FactorError> {
        let n = a.n;
        let mut block_of = vec![usize::MAX; n];
        for (b, r) in blocks.iter().enumerate() {
            for i in r.clone() {
                if i >= n || block_of[i] != usize::MAX {
                    return Err(FactorError::BadBlocks { n });
                }
                block_of[i] = b;
            }
        }
        if block_of.contains(&usize::MAX) {
            return Err(FactorError::BadBlocks { n });
        }
        let nb = blocks.len();
        let size: Vec<usize> = blocks.iter().map(|r| r.len()).collect();

        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nb];
        for (b, r) in blocks.iter().enumerate() {
            let list = &mut adj[b];
            for i in r.clone() {
                let (cols, _) = a.row(i);
                list.extend(cols.iter().map(|&j| block_of[j as usize]).filter(|&c| c != b));
            }
            list.sort_unstable();
            list.dedup();
        }
        let (order, structure) = minimum_degree(&mut adj, &size);
        let mut position = vec![0; nb];
        for (p, &b) in order.iter().enumerate() {
            position[b] = p;
        }

        let scale: Vec<f64> = a.diagonal().iter().map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 1.0 }).collect();
        let mut diag: Vec<Vec<f64>> = size.iter().map(|&s| vec![0.0; s * s]).collect();
        let mut off: Vec<Vec<Vec<f64>>> =
            (0..nb).map(|b| structure[b].iter().map(|&i| vec![0.0; size[i] * size[b]]).collect()).collect();
        for i in 0..n {
            let bi = block_of[i];
            let li = i - blocks[bi].start;
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let j = j as usize;
                let bj = block_of[j];
                let lj = j - blocks[bj].start;
                let v = v * scale[i] * scale[j];
                if bi == bj {
                    diag[bi][li * size[bi] + lj] = v;
                } else if position[bj] < position[bi] {
                    // Row block bi of column block bj.
                    let slot = structure[bj].binary_search(&bi).expect("structure contains neighbors");
                    off[bj][slot][li * size[bj] + lj] = v;
                }
            }
        }

        for &j in &order {
            let sj = size[j];
            dense_cholesky(&mut diag[j], sj).map_err(|pivot| FactorError::NotPositiveDefinite { block: j, pivot })?;
            let lj = std::mem::take(&mut diag[j]);
            let mut col = std::mem::take(&mut off[j]);
            for (slot, &i) in structure[j].iter().enumerate() {
                let blk = &mut col[slot];
                for r in 0..size[i] {
                    forward(&lj, sj, &mut blk[r * sj..(r + 1) * sj]);
                }
            }
            let st = &structure[j];
            for (s1, &i) in st.iter().enumerate() {
                for (s2, &k) in st.iter().enumerate() {
                    if i == k {
                        gemm_nt_sub(&mut diag[i], &col[s1], &col[s1], size[i], size[i], sj);
                    } else if position[k] < position[i] {
                        let slot = structure[k].binary_search(&i).expect("fill is in the structure");
                        gemm_nt_sub(&mut off[k][slot], &col[s1], &col[s2], size[i], size[k], sj);
                    }
                }
            }
            diag[j] = lj;
            off[j] = col;
        }
        Ok(BlockCholesky { n, blocks: blocks.to_vec(), order, structure, diag, off, scale })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves A x = b using the factorization.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = b.iter().zip(&self.scale).map(|(v, s)| v * s).collect();
        for &j in &self.order {
            let rj = self.blocks[j].clone();
            let sj = rj.len();
            forward(&self.diag[j], sj, &mut y[rj.clone()]);
            for (slot, &i) in self.structure[j].iter().enumerate() {
                let blk = &self.off[j][slot];
                let ri = self.blocks[i].clone();
                for r in 0..ri.len() {
                    let mut s = 0.0;
                    for t in 0..sj {
                        s += blk[r * sj + t] * y[rj.start + t];
                    }
                    y[ri.start + r] -= s;
                }
            }
        }
        for &j in self.order.iter().rev() {
            let rj = self.blocks[j].clone();
            let sj = rj.len();
            for (slot, &i) in self.structure[j].iter().enumerate() {
                let blk = &self.off[j][slot];
                let ri = self.blocks[i].clone();
                for r in 0..ri.len() {
                    let xr = y[ri.start + r];
                    for t in 0..sj {
                        y[rj.start + t] -= blk[r * sj + t] * xr;
                    }
                }
            }
            backward(&self.diag[j], sj, &mut y[rj]);
        }
        for (v, s) in y.iter_mut().zip(&self.scale) {
            *v *= s;
        }
        y
    }

    /// Nonzeros stored in the factor.
    pub fn factor_nnz(&self) -> usize {
        self.diag.iter().map(Vec::len).sum::<usize>() + self.off.iter().flatten().map(Vec::len).sum::<usize>()
    }
}
