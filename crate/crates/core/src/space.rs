//! Continuous piecewise-Q_p spaces on conforming quadrilateral meshes.

use crate::basis::{shape_1d, tensor_index};
use crate::geometry::{GeometryError, Point};
use crate::mesh::{Mesh, Violation};
use std::ops::Range;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("polynomial degree must be at least 1, got {0}")]
    InvalidDegree(usize),
    #[error("mesh is not conforming ({} violations, first: {})", .0.len(), .0[0])]
    NonConforming(Vec<Violation>),
    #[error("coefficient vector has length {got}, space has {expected} free DOFs")]
    LengthMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Boundary treatment of the space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Constraint {
    /// Homogeneous Dirichlet data on ∂Ω, eliminated.
    Dirichlet,
    /// No constraints (full S^{p,1}).
    Free,
}

/// Kind of mesh entity owning a block of DOFs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Entity {
    Vertex(usize),
    Edge(usize),
    Cell(usize),
}

#[derive(Clone, Debug)]
pub struct FESpace {
    pub mesh: Arc<Mesh>,
    pub p: usize,
    /// Free DOFs are numbered 0..n_dofs, constrained ones n_dofs..n_total.
    pub n_dofs: usize,
    pub n_total: usize,
    /// Per element, (p+1)² global indices in local tensor order.
    dof_map: Vec<usize>,
    signs: Vec<f64>,
    /// Contiguous free-DOF ranges, one per free entity.
    pub blocks: Vec<Range<usize>>,
    pub block_entities: Vec<Entity>,
}

impl FESpace {
    pub fn local_dofs(&self) -> usize {
        (self.p + 1) * (self.p + 1)
    }

    pub fn element_dofs(&self, k: usize) -> &[usize] {
        let n = self.local_dofs();
        &self.dof_map[k * n..(k + 1) * n]
    }

    pub fn element_signs(&self, k: usize) -> &[f64] {
        let n = self.local_dofs();
        &self.signs[k * n..(k + 1) * n]
    }

    pub fn is_free(&self, g: usize) -> bool {
        g < self.n_dofs
    }

    pub fn dirichlet_set(&self) -> Range<usize> {
        self.n_dofs..self.n_total
    }

    /// Signed local coefficients of element k (constrained DOFs read as 0).
    pub fn gather(&self, coeffs: &[f64], k: usize, out: &mut [f64]) {
        for ((o, &g), &s) in out.iter_mut().zip(self.element_dofs(k)).zip(self.element_signs(k)) {
            *o = if g < self.n_dofs { s * coeffs[g] } else { 0.0 };
        }
    }

    /// Value and physical gradient of the discrete function at F_k(x̂).
    pub fn evaluate(&self, coeffs: &[f64], k: usize, x: Point) -> Result<(f64, [f64; 2]), SpaceError> {
        if coeffs.len() != self.n_dofs {
            return Err(SpaceError::LengthMismatch { expected: self.n_dofs, got: coeffs.len() });
        }
        let mut local = vec![0.0; self.local_dofs()];
        self.gather(coeffs, k, &mut local);
        let (v, g) = eval_local(self.p, &local, x);
        let inv = self.mesh.jacobian(k, x)?.inverse();
        Ok((v, [inv[0][0] * g[0] + inv[1][0] * g[1], inv[0][1] * g[0] + inv[1][1] * g[1]]))
    }
}

/// Value and reference gradient of Σ local[i,j] φ_i(ξ)φ_j(η).
pub fn eval_local(p: usize, local: &[f64], x: Point) -> (f64, [f64; 2]) {
    let n = p + 1;
    let mut buf = [0.0f64; 4 * 32];
    let mut heap;
    let b: &mut [f64] = if n <= 32 {
        &mut buf[..4 * n]
    } else {
        heap = vec![0.0; 4 * n];
        &mut heap
    };
    let (vx, rest) = b.split_at_mut(n);
    let (dx, rest) = rest.split_at_mut(n);
    let (vy, dy) = rest.split_at_mut(n);
    shape_1d(p, x[0], vx, dx);
    shape_1d(p, x[1], vy, dy);
    let (mut v, mut gx, mut gy) = (0.0, 0.0, 0.0);
    for j in 0..n {
        let (mut s, mut sd) = (0.0, 0.0);
        for i in 0..n {
            let c = local[i + n * j];
            s += c * vx[i];
            sd += c * dx[i];
        }
        v += s * vy[j];
        gx += sd * vy[j];
        gy += s * dy[j];
    }
    (v, [gx, gy])
}

pub fn build_space(mesh: impl Into<Arc<Mesh>>, p: usize) -> Result<FESpace, SpaceError> {
    build_space_with(mesh, p, Constraint::Dirichlet)
}

pub fn build_space_with(mesh: impl Into<Arc<Mesh>>, p: usize, constraint: Constraint) -> Result<FESpace, SpaceError> {
    let mesh: Arc<Mesh> = mesh.into();
    if p == 0 {
        return Err(SpaceError::InvalidDegree(p));
    }
    let v = mesh.violations();
    if !v.is_empty() {
        return Err(SpaceError::NonConforming(v));
    }
    let constrained_vertex = |v: usize| constraint == Constraint::Dirichlet && mesh.boundary_vertex[v];
    let constrained_edge = |e: usize| constraint == Constraint::Dirichlet && mesh.boundary_edge[e];
    let ne = p - 1;
    let ni = ne * ne;

    // Free entities first (vertices, edges, cells), then constrained ones.
    let mut vertex_start = vec![0; mesh.vertices.len()];
    let mut edge_start = vec![0; mesh.edges.len()];
    let mut cell_start = vec![0; mesh.len()];
    let mut blocks = Vec::new();
    let mut block_entities = Vec::new();
    let mut next = 0;
    for v in 0..mesh.vertices.len() {
        if !constrained_vertex(v) {
            vertex_start[v] = next;
            blocks.push(next..next + 1);
            block_entities.push(Entity::Vertex(v));
            next += 1;
        }
    }
    if ne > 0 {
        for e in 0..mesh.edges.len() {
            if !constrained_edge(e) {
                edge_start[e] = next;
                blocks.push(next..next + ne);
                block_entities.push(Entity::Edge(e));
                next += ne;
            }
        }
    }
    if ni > 0 {
        for (k, start) in cell_start.iter_mut().enumerate() {
            *start = next;
            blocks.push(next..next + ni);
            block_entities.push(Entity::Cell(k));
            next += ni;
        }
    }
    let n_dofs = next;
    for v in 0..mesh.vertices.len() {
        if constrained_vertex(v) {
            vertex_start[v] = next;
            next += 1;
        }
    }
    if ne > 0 {
        for e in 0..mesh.edges.len() {
            if constrained_edge(e) {
                edge_start[e] = next;
                next += ne;
            }
        }
    }

    let nl = (p + 1) * (p + 1);
    let mut dof_map = vec![0; mesh.len() * nl];
    let mut signs = vec![1.0; mesh.len() * nl];
    for k in 0..mesh.len() {
        let vs = mesh.element_vertices[k];
        let es = mesh.element_edges[k];
        let map = &mut dof_map[k * nl..(k + 1) * nl];
        let sg = &mut signs[k * nl..(k + 1) * nl];
        for (c, &(i, j)) in [(0, 0), (1, 0), (1, 1), (0, 1)].iter().enumerate() {
            map[tensor_index(p, i, j)] = vertex_start[vs[c]];
        }
        for e in crate::geometry::LocalEdge::ALL {
            let (a, b) = e.corners();
            let reversed = vs[a] > vs[b];
            let start = edge_start[es[e.index()]];
            for kk in 2..=p {
                let (i, j) = match e {
                    crate::geometry::LocalEdge::Bottom => (kk, 0),
                    crate::geometry::LocalEdge::Right => (1, kk),
                    crate::geometry::LocalEdge::Top => (kk, 1),
                    crate::geometry::LocalEdge::Left => (0, kk),
                };
                let l = tensor_index(p, i, j);
                map[l] = start + kk - 2;
                sg[l] = if reversed && kk % 2 == 1 { -1.0 } else { 1.0 };
            }
        }
        for j in 2..=p {
            for i in 2..=p {
                map[tensor_index(p, i, j)] = cell_start[k] + (i - 2) + ne * (j - 2);
            }
        }
    }
    Ok(FESpace { mesh, p, n_dofs, n_total: next, dof_map, signs, blocks, block_entities })
}
