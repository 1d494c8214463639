//! Galerkin assembly for a(u,v) = ∫ ε²∇v·A∇u + cuv and its SPD solve.

pub mod cholesky;
pub mod sparse;

pub use cholesky::{BlockCholesky, FactorError};
pub use sparse::{dot, norm2, CsrMatrix};

use crate::basis::{shape_1d, BasisError, QuadratureRule};
use crate::exec::Exec;
use crate::geometry::{GeometryError, Mat2, Point};
use crate::space::FESpace;
use std::ops::Range;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Factor(#[from] FactorError),
    #[error("solver stalled at relative residual {achieved:e} (target {target:e})")]
    NoConvergence { achieved: f64, target: f64 },
    #[error("coefficient bound violated: {0}")]
    Coefficients(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

pub type ScalarFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type TensorFn = Arc<dyn Fn(Point) -> Mat2 + Send + Sync>;

#[derive(Clone)]
pub enum Scalar {
    Constant(f64),
    Field(ScalarFn),
}

impl Scalar {
    pub fn field(f: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        Scalar::Field(Arc::new(f))
    }

    pub fn eval(&self, x: Point) -> f64 {
        match self {
            Scalar::Constant(c) => *c,
            Scalar::Field(f) => f(x),
        }
    }

    pub fn constant(&self) -> Option<f64> {
        match self {
            Scalar::Constant(c) => Some(*c),
            Scalar::Field(_) => None,
        }
    }

    pub fn scaled(&self, s: f64) -> Scalar {
        match self {
            Scalar::Constant(c) => Scalar::Constant(s * c),
            Scalar::Field(f) => {
                let f = f.clone();
                Scalar::field(move |x| s * f(x))
            }
        }
    }
}

impl std::fmt::Debug for Scalar {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scalar::Constant(c) => write!(f, "Constant({c})"),
            Scalar::Field(_) => write!(f, "Field(..)"),
        }
    }
}

#[derive(Clone)]
pub enum Tensor {
    Constant(Mat2),
    Field(TensorFn),
}

impl Tensor {
    pub fn identity() -> Self {
        Tensor::Constant([[1.0, 0.0], [0.0, 1.0]])
    }

    pub fn eval(&self, x: Point) -> Mat2 {
        match self {
            Tensor::Constant(a) => *a,
            Tensor::Field(f) => f(x),
        }
    }

    pub fn constant(&self) -> Option<Mat2> {
        match self {
            Tensor::Constant(a) => Some(*a),
            Tensor::Field(_) => None,
        }
    }
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Tensor::Constant(a) => write!(f, "Constant({a:?})"),
            Tensor::Field(_) => write!(f, "Field(..)"),
        }
    }
}

/// Coefficients of −ε²∇·(A∇u) + cu = f with u = 0 on ∂Ω.
#[derive(Clone, Debug)]
pub struct ProblemData {
    pub eps: f64,
    pub diffusion: Tensor,
    pub reaction: Scalar,
    pub load: Scalar,
    /// Lower bound on the smallest eigenvalue of A.
    pub alpha0: f64,
    /// Lower bound on c.
    pub c0: f64,
}

impl ProblemData {
    /// A = I, c = 1.
    pub fn model(eps: f64, load: Scalar) -> Self {
        ProblemData { eps, diffusion: Tensor::identity(), reaction: Scalar::Constant(1.0), load, alpha0: 1.0, c0: 1.0 }
    }

    /// Checks ε ∈ (0,1], symmetry and ellipticity of A and c ≥ c₀ at the given points.
    pub fn validate(&self, samples: &[Point]) -> Result<(), SystemError> {
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(SystemError::Coefficients(format!("eps = {} outside (0,1]", self.eps)));
        }
        if !(self.alpha0 > 0.0 && self.c0 > 0.0) {
            return Err(SystemError::Coefficients("alpha0 and c0 must be positive".into()));
        }
        for &x in samples {
            let a = self.diffusion.eval(x);
            if (a[0][1] - a[1][0]).abs() > 1e-14 * (a[0][0].abs() + a[1][1].abs()) {
                return Err(SystemError::Coefficients(format!("A is not symmetric at {x:?}")));
            }
            let tr = a[0][0] + a[1][1];
            let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            let lmin = 0.5 * (tr - (tr * tr - 4.0 * det).max(0.0).sqrt());
            if lmin < self.alpha0 * (1.0 - 1e-12) {
                return Err(SystemError::Coefficients(format!("smallest eigenvalue of A is {lmin} at {x:?}")));
            }
            let c = self.reaction.eval(x);
            if c < self.c0 * (1.0 - 1e-12) {
                return Err(SystemError::Coefficients(format!("c = {c} below c0 at {x:?}")));
            }
        }
        Ok(())
    }
}

/// 1D basis tables on a Gauss rule; `v[i * n + q]` = φ_i(x_q).
#[derive(Clone, Debug)]
pub struct Tables {
    pub p: usize,
    pub rule: QuadratureRule,
    pub v: Vec<f64>,
    pub d: Vec<f64>,
}

impl Tables {
    pub fn new(p: usize, n_quad: usize) -> Result<Self, BasisError> {
        let rule = crate::basis::gauss_rule(n_quad)?;
        let np = p + 1;
        let (mut v, mut d) = (vec![0.0; np * n_quad], vec![0.0; np * n_quad]);
        let (mut bv, mut bd) = (vec![0.0; np], vec![0.0; np]);
        for (q, &x) in rule.nodes.iter().enumerate() {
            shape_1d(p, x, &mut bv, &mut bd);
            for i in 0..np {
                v[i * n_quad + q] = bv[i];
                d[i * n_quad + q] = bd[i];
            }
        }
        Ok(Tables { p, rule, v, d })
    }

    pub fn n(&self) -> usize {
        self.rule.len()
    }

    /// ∫ a_i b_k over (0,1) for all i, k (row-major (p+1)²).
    fn gram(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let (np, n) = (self.p + 1, self.n());
        let mut g = vec![0.0; np * np];
        for i in 0..np {
            for k in 0..np {
                g[i * np + k] = (0..n).map(|q| self.rule.weights[q] * a[i * n + q] * b[k * n + q]).sum();
            }
        }
        g
    }
}

/// Dense element matrix (row-major, local tensor order) and load vector.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalSystem {
    pub matrix: Vec<f64>,
    pub load: Vec<f64>,
}

pub fn element_matrix(
    space: &FESpace,
    k: usize,
    problem: &ProblemData,
    quad_order: usize,
) -> Result<LocalSystem, SystemError> {
    let t = Tables::new(space.p, quad_order)?;
    element_matrix_with(space, k, problem, &t)
}

fn inv_a_invt(inv: &Mat2, a: &Mat2) -> Mat2 {
    // inv · A · invᵀ
    let mut m = [[0.0; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            let mut s = 0.0;
            for x in 0..2 {
                for y in 0..2 {
                    s += inv[r][x] * a[x][y] * inv[c][y];
                }
            }
            m[r][c] = s;
        }
    }
    m
}

pub fn element_matrix_with(
    space: &FESpace,
    k: usize,
    problem: &ProblemData,
    t: &Tables,
) -> Result<LocalSystem, SystemError> {
    let mesh = &space.mesh;
    let np = space.p + 1;
    let nl = np * np;
    let n = t.n();
    let w = &t.rule.weights;
    let eps2 = problem.eps * problem.eps;
    let mut matrix = vec![0.0; nl * nl];
    let mut load = vec![0.0; nl];

    if let (true, Some(a), Some(c)) = (mesh.affine[k], problem.diffusion.constant(), problem.reaction.constant()) {
        let j = mesh.jacobian(k, [0.5, 0.5])?;
        let g = inv_a_invt(&j.inverse(), &a);
        let (g11, g12, g22) = (eps2 * j.det * g[0][0], eps2 * j.det * g[0][1], eps2 * j.det * g[1][1]);
        let m = c * j.det;
        let m1 = t.gram(&t.v, &t.v);
        let k1 = t.gram(&t.d, &t.d);
        let c1 = t.gram(&t.d, &t.v);
        for jj in 0..np {
            for l in 0..np {
                let (mjl, kjl, cjl, clj) = (m1[jj * np + l], k1[jj * np + l], c1[jj * np + l], c1[l * np + jj]);
                for i in 0..np {
                    let row = &mut matrix[(i + np * jj) * nl + np * l..(i + np * jj) * nl + np * l + np];
                    for (kk, out) in row.iter_mut().enumerate() {
                        let (mik, kik) = (m1[i * np + kk], k1[i * np + kk]);
                        *out = g11 * kik * mjl
                            + g12 * (c1[i * np + kk] * clj + c1[kk * np + i] * cjl)
                            + g22 * mik * kjl
                            + m * mik * mjl;
                    }
                }
            }
        }
        if let Some(f) = problem.load.constant() {
            let m1v: Vec<f64> = (0..np).map(|i| (0..n).map(|q| w[q] * t.v[i * n + q]).sum()).collect();
            for jj in 0..np {
                for i in 0..np {
                    load[i + np * jj] = f * j.det * m1v[i] * m1v[jj];
                }
            }
            return Ok(LocalSystem { matrix, load });
        }
        load_by_quadrature(space, k, problem, t, &mut load)?;
        return Ok(LocalSystem { matrix, load });
    }

    // Pointwise metric terms, indexed [b * n + a] for the point (x_a, x_b).
    let mut g11 = vec![0.0; n * n];
    let mut g12 = vec![0.0; n * n];
    let mut g22 = vec![0.0; n * n];
    let mut mm = vec![0.0; n * n];
    for b in 0..n {
        for a in 0..n {
            let x = [t.rule.nodes[a], t.rule.nodes[b]];
            let j = mesh.jacobian(k, x)?;
            let phys = mesh.map_point(k, x);
            let g = inv_a_invt(&j.inverse(), &problem.diffusion.eval(phys));
            let s = w[a] * w[b] * j.det;
            g11[b * n + a] = eps2 * s * g[0][0];
            g12[b * n + a] = eps2 * s * g[0][1];
            g22[b * n + a] = eps2 * s * g[1][1];
            mm[b * n + a] = s * problem.reaction.eval(phys);
        }
    }
    // Contract the ξ direction: s1 pairs with φ_jφ_l, s2 with φ_jφ'_l, s4 with φ'_jφ'_l.
    let mut s1 = vec![0.0; n * np * np];
    let mut s2 = vec![0.0; n * np * np];
    let mut s4 = vec![0.0; n * np * np];
    for b in 0..n {
        let (r11, r12, r22, rm) = (&g11[b * n..], &g12[b * n..], &g22[b * n..], &mm[b * n..]);
        for i in 0..np {
            let (vi, di) = (&t.v[i * n..(i + 1) * n], &t.d[i * n..(i + 1) * n]);
            for kk in 0..np {
                let (vk, dk) = (&t.v[kk * n..(kk + 1) * n], &t.d[kk * n..(kk + 1) * n]);
                let (mut a1, mut a2, mut a4) = (0.0, 0.0, 0.0);
                for a in 0..n {
                    a1 += r11[a] * di[a] * dk[a] + rm[a] * vi[a] * vk[a];
                    a2 += r12[a] * di[a] * vk[a];
                    a4 += r22[a] * vi[a] * vk[a];
                }
                let idx = (b * np + i) * np + kk;
                s1[idx] = a1;
                s2[idx] = a2;
                s4[idx] = a4;
            }
        }
    }
    for jj in 0..np {
        for l in jj..np {
            let mut block = vec![0.0; np * np];
            for b in 0..n {
                let (vj, dj, vl, dl) = (t.v[jj * n + b], t.d[jj * n + b], t.v[l * n + b], t.d[l * n + b]);
                let (c1, c2, c3, c4) = (vj * vl, vj * dl, dj * vl, dj * dl);
                let base = b * np * np;
                for i in 0..np {
                    for kk in 0..np {
                        block[i * np + kk] += c1 * s1[base + i * np + kk]
                            + c2 * s2[base + i * np + kk]
                            + c3 * s2[base + kk * np + i]
                            + c4 * s4[base + i * np + kk];
                    }
                }
            }
            for i in 0..np {
                for kk in 0..np {
                    let v = block[i * np + kk];
                    matrix[(i + np * jj) * nl + kk + np * l] = v;
                    matrix[(kk + np * l) * nl + i + np * jj] = v;
                }
            }
        }
    }
    load_by_quadrature(space, k, problem, t, &mut load)?;
    Ok(LocalSystem { matrix, load })
}

fn load_by_quadrature(
    space: &FESpace,
    k: usize,
    problem: &ProblemData,
    t: &Tables,
    load: &mut [f64],
) -> Result<(), SystemError> {
    let mesh = &space.mesh;
    let np = space.p + 1;
    let n = t.n();
    let w = &t.rule.weights;
    let mut fw = vec![0.0; n * n];
    for b in 0..n {
        for a in 0..n {
            let x = [t.rule.nodes[a], t.rule.nodes[b]];
            let det = mesh.jacobian(k, x)?.det;
            fw[b * n + a] = w[a] * w[b] * det * problem.load.eval(mesh.map_point(k, x));
        }
    }
    for b in 0..n {
        for i in 0..np {
            let s: f64 = (0..n).map(|a| fw[b * n + a] * t.v[i * n + a]).sum();
            for jj in 0..np {
                load[i + np * jj] += s * t.v[jj * n + b];
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Contiguous DOF blocks (one per mesh entity) used by the factorization.
    pub blocks: Vec<Range<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AssemblyOptions {
    /// Gauss points per direction; defaults to p + 2.
    pub quad_order: Option<usize>,
    pub exec: Exec,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        AssemblyOptions { quad_order: None, exec: Exec::Sequential }
    }
}

/// Block sparsity pattern of a space: CSR pattern on free DOFs.
pub fn sparsity(space: &FESpace) -> CsrMatrix {
    let nb = space.blocks.len();
    let mut block_of = vec![0u32; space.n_dofs];
    for (b, r) in space.blocks.iter().enumerate() {
        for i in r.clone() {
            block_of[i] = b as u32;
        }
    }
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); nb];
    let mut local = Vec::with_capacity(9);
    for k in 0..space.mesh.len() {
        local.clear();
        local.extend(space.element_dofs(k).iter().filter(|&&g| space.is_free(g)).map(|&g| block_of[g]));
        local.sort_unstable();
        local.dedup();
        for &a in &local {
            adj[a as usize].extend_from_slice(&local);
        }
    }
    let mut rows = Vec::with_capacity(space.n_dofs);
    for (b, r) in space.blocks.iter().enumerate() {
        let list = &mut adj[b];
        list.sort_unstable();
        list.dedup();
        let cols: Vec<u32> = list.iter().flat_map(|&c| space.blocks[c as usize].clone().map(|g| g as u32)).collect();
        for _ in r.clone() {
            rows.push(cols.clone());
        }
    }
    CsrMatrix::from_pattern(rows)
}

pub fn assemble(space: &FESpace, problem: &ProblemData) -> Result<SparseSystem, SystemError> {
    assemble_with(space, problem, &AssemblyOptions::default())
}

pub fn assemble_with(
    space: &FESpace,
    problem: &ProblemData,
    opts: &AssemblyOptions,
) -> Result<SparseSystem, SystemError> {
    let tables = Tables::new(space.p, opts.quad_order.unwrap_or(space.p + 2))?;
    let mut matrix = sparsity(space);
    let mut rhs = vec![0.0; space.n_dofs];
    let nl = space.local_dofs();
    const BATCH: usize = 64;
    let ne = space.mesh.len();
    let mut start = 0;
    while start < ne {
        let end = (start + BATCH).min(ne);
        let locals = opts.exec.map(end - start, |i| element_matrix_with(space, start + i, problem, &tables));
        for (i, local) in locals.into_iter().enumerate() {
            let local = local?;
            let k = start + i;
            let (dofs, signs) = (space.element_dofs(k), space.element_signs(k));
            for r in 0..nl {
                let gr = dofs[r];
                if !space.is_free(gr) {
                    continue;
                }
                rhs[gr] += signs[r] * local.load[r];
                let (row_start, row_end) = (matrix.row_ptr[gr], matrix.row_ptr[gr + 1]);
                let cols = &matrix.cols[row_start..row_end];
                for c in 0..nl {
                    let gc = dofs[c];
                    if !space.is_free(gc) {
                        continue;
                    }
                    let pos = row_start + cols.binary_search(&(gc as u32)).expect("pattern covers element");
                    matrix.values[pos] += signs[r] * signs[c] * local.matrix[r * nl + c];
                }
            }
        }
        start = end;
    }
    Ok(SparseSystem { matrix, rhs, blocks: space.blocks.clone() })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub coeffs: Vec<f64>,
    /// ‖Ax − b‖ / ‖b‖ (0 when b = 0).
    pub residual: f64,
    pub refinements: usize,
}

pub fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(u, v)| u - v).collect();
    let nb = norm2(b);
    if nb == 0.0 {
        norm2(&r)
    } else {
        norm2(&r) / nb
    }
}

/// Direct solve with iterative refinement until the relative residual is
/// at most `tol`.
pub fn solve(system: &SparseSystem, tol: f64) -> Result<Solution, SystemError> {
    let n = system.matrix.n;
    if system.rhs.len() != n {
        return Err(SystemError::Dimension { expected: n, got: system.rhs.len() });
    }
    if n == 0 {
        return Ok(Solution { coeffs: Vec::new(), residual: 0.0, refinements: 0 });
    }
    let blocks = if system.blocks.is_empty() { (0..n).map(|i| i..i + 1).collect() } else { system.blocks.clone() };
    let factor = BlockCholesky::factor(&system.matrix, &blocks)?;
    solve_factored(&factor, &system.matrix, &system.rhs, tol)
}

pub fn solve_factored(
    factor: &BlockCholesky,
    a: &CsrMatrix,
    b: &[f64],
    tol: f64,
) -> Result<Solution, SystemError> {
    if norm2(b) == 0.0 {
        return Ok(Solution { coeffs: vec![0.0; b.len()], residual: 0.0, refinements: 0 });
    }
    let mut x = factor.solve(b);
    let mut res = relative_residual(a, &x, b);
    let mut refinements = 0;
    while res > tol && refinements < 8 {
        let ax = a.mul_vec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(u, v)| u - v).collect();
        let dx = factor.solve(&r);
        let candidate: Vec<f64> = x.iter().zip(&dx).map(|(u, v)| u + v).collect();
        let cres = relative_residual(a, &candidate, b);
        refinements += 1;
        if cres >= res {
            break;
        }
        x = candidate;
        res = cres;
    }
    if res > tol {
        return Err(SystemError::NoConvergence { achieved: res, target: tol });
    }
    Ok(Solution { coeffs: x, residual: res, refinements })
}
