//! Refinement patterns on the reference square, spectral boundary layer
//! meshes built from them, conformity checks, and the nested refinement used
//! for reference solutions.

use crate::geometry::{
    bilinear_jacobian, bilinear_point, mat_mul, BoundaryContact, GeometryError, Jacobian, LocalEdge, Mat2,
    MacroTriangulation, Point,
};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("invalid mesh parameter: {0}")]
    InvalidParameter(String),
    #[error("expected {expected} per-macro entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("macro element {macro_id}: {reason}")]
    Inadmissible { macro_id: usize, reason: String },
    #[error("mesh is not conforming: {}", summarize(.0))]
    NonConforming(Vec<Violation>),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid pattern assignment document: {0}")]
    Document(String),
}

fn summarize(v: &[Violation]) -> String {
    match v.first() {
        Some(first) if v.len() > 1 => format!("{first} (and {} more)", v.len() - 1),
        Some(first) => first.to_string(),
        None => "no violations".into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionTag {
    Large,
    Aniso,
    CornerLayer,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    Trivial,
    BoundaryLayer,
    TensorProduct,
    Mixed,
    Geometric,
}

impl PatternKind {
    fn has_corner_block(self) -> bool {
        matches!(self, PatternKind::TensorProduct | PatternKind::Mixed | PatternKind::Geometric)
    }
}

/// Placement of a pattern inside the reference square. Patterns are built
/// with their refinement corner at (0,0); the mirrored frame moves it to
/// (1,0) via ξ ↦ 1−ξ.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    #[default]
    Identity,
    MirrorX,
}

impl Frame {
    pub fn apply(self, p: Point) -> Point {
        match self {
            Frame::Identity => p,
            Frame::MirrorX => [1.0 - p[0], p[1]],
        }
    }

    pub fn matrix(self) -> Mat2 {
        match self {
            Frame::Identity => [[1.0, 0.0], [0.0, 1.0]],
            Frame::MirrorX => [[-1.0, 0.0], [0.0, 1.0]],
        }
    }

    /// Vertex order that keeps the composed map orientation-preserving.
    fn orient(self, q: [usize; 4]) -> [usize; 4] {
        match self {
            Frame::Identity => q,
            Frame::MirrorX => [q[1], q[0], q[3], q[2]],
        }
    }
}

pub fn compute_kappa(lambda: f64, p: usize, eps: f64) -> Result<f64, MeshError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(MeshError::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    if p == 0 {
        return Err(MeshError::InvalidParameter("degree must be at least 1".into()));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(MeshError::InvalidParameter(format!("eps must lie in (0,1], got {eps}")));
    }
    Ok((lambda * p as f64 * eps).min(0.5))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshParams {
    pub lambda: f64,
    pub sigma: f64,
    pub kappa: f64,
    /// Geometric refinement depth per macro element.
    pub layers: Vec<usize>,
    pub p: usize,
    pub eps: f64,
}

impl MeshParams {
    pub fn new(lambda: f64, sigma: f64, p: usize, eps: f64, layers: Vec<usize>) -> Result<Self, MeshError> {
        let kappa = compute_kappa(lambda, p, eps)?;
        check_pattern_params(kappa, sigma, 0)?;
        Ok(MeshParams { lambda, sigma, kappa, layers, p, eps })
    }
}

fn check_pattern_params(kappa: f64, sigma: f64, layers: usize) -> Result<(), MeshError> {
    if !(kappa > 0.0 && kappa <= 0.5) {
        return Err(MeshError::InvalidParameter(format!("kappa must lie in (0,1/2], got {kappa}")));
    }
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(MeshError::InvalidParameter(format!("sigma must lie in (0,1), got {sigma}")));
    }
    if layers > 0 && sigma >= 0.5 {
        return Err(MeshError::InvalidParameter(format!(
            "geometric rings of convex quadrilaterals need sigma < 1/2, got {sigma}"
        )));
    }
    if kappa * sigma.powi(layers as i32) < 1e-300 {
        return Err(MeshError::InvalidParameter(format!("{layers} geometric layers underflow kappa*sigma^L")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternCell {
    pub nodes: [usize; 4],
    pub tag: RegionTag,
    /// Set on the innermost square of a corner block.
    pub inner_square: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternMesh {
    pub kind: PatternKind,
    pub kappa: f64,
    pub sigma: f64,
    pub layers: usize,
    pub frame: Frame,
    /// Node coordinates in the pattern frame (refinement corner at origin).
    pub nodes: Vec<Point>,
    pub cells: Vec<PatternCell>,
}

impl PatternMesh {
    pub fn quad(&self, c: usize) -> [Point; 4] {
        self.cells[c].nodes.map(|n| self.nodes[n])
    }

    /// Cell corners in reference-square coordinates.
    pub fn reference_quad(&self, c: usize) -> [Point; 4] {
        self.quad(c).map(|p| self.frame.apply(p))
    }

    pub fn mirrored(mut self) -> Self {
        self.frame = match self.frame {
            Frame::Identity => Frame::MirrorX,
            Frame::MirrorX => Frame::Identity,
        };
        for c in &mut self.cells {
            c.nodes = [c.nodes[1], c.nodes[0], c.nodes[3], c.nodes[2]];
        }
        self
    }
}

#[derive(Default)]
struct NodeSet {
    nodes: Vec<Point>,
    index: HashMap<(u64, u64), usize>,
}

impl NodeSet {
    fn add(&mut self, p: Point) -> usize {
        let key = ((p[0] + 0.0).to_bits(), (p[1] + 0.0).to_bits());
        let next = self.nodes.len();
        *self.index.entry(key).or_insert_with(|| {
            self.nodes.push(p);
            next
        })
    }
}

/// Corner block on (0,s)²: L rings of three convex quadrilaterals each,
/// graded by σ toward the origin, and the innermost square (0,sσ^L)².
///
/// Ring j lies between r1 = sσ^{j+1} and r0 = sσ^j and shares the interior
/// node (ρ,ρ), ρ = r0(1/4 + σ/2), between a kite and two trapezoids.
fn corner_block(ns: &mut NodeSet, s: f64, sigma: f64, layers: usize, out: &mut Vec<(Point4, bool)>) {
    for j in 0..layers {
        let r0 = s * sigma.powi(j as i32);
        let r1 = s * sigma.powi(j as i32 + 1);
        let rho = r0 * (0.25 + 0.5 * sigma);
        let a = [0.0, r0];
        let b = [r0, r0];
        let c = [r0, 0.0];
        let d = [r1, 0.0];
        let e = [r1, r1];
        let f = [0.0, r1];
        let m = [rho, rho];
        for q in [[m, c, b, a], [d, c, m, e], [f, e, m, a]] {
            out.push((q, false));
        }
    }
    let r = s * sigma.powi(layers as i32);
    out.push(([[0.0, 0.0], [r, 0.0], [r, r], [0.0, r]], true));
    for (q, _) in out.iter() {
        for p in q {
            ns.add(*p);
        }
    }
}

type Point4 = [Point; 4];

pub fn build_pattern(kind: PatternKind, kappa: f64, sigma: f64, layers: usize) -> Result<PatternMesh, MeshError> {
    let layers = if kind.has_corner_block() { layers } else { 0 };
    check_pattern_params(kappa, sigma, layers)?;
    let k = kappa;
    let mut ns = NodeSet::default();
    let mut quads: Vec<(Point4, RegionTag, bool)> = Vec::new();
    match kind {
        PatternKind::Trivial => {
            quads.push(([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]], RegionTag::Large, false));
        }
        PatternKind::BoundaryLayer => {
            quads.push(([[0.0, 0.0], [1.0, 0.0], [1.0, k], [0.0, k]], RegionTag::Aniso, false));
            quads.push(([[0.0, k], [1.0, k], [1.0, 1.0], [0.0, 1.0]], RegionTag::Large, false));
        }
        PatternKind::TensorProduct | PatternKind::Mixed | PatternKind::Geometric => {
            let mut block = Vec::new();
            corner_block(&mut ns, k, sigma, layers, &mut block);
            quads.extend(block.into_iter().map(|(q, inner)| (q, RegionTag::CornerLayer, inner)));
            quads.push(([[k, 0.0], [1.0, 0.0], [1.0, k], [k, k]], RegionTag::Aniso, false));
            quads.push(([[0.0, k], [k, k], [k, 1.0], [0.0, 1.0]], RegionTag::Aniso, false));
            quads.push(([[k, k], [1.0, k], [1.0, 1.0], [k, 1.0]], RegionTag::Large, false));
        }
    }
    let cells = quads
        .into_iter()
        .map(|(q, tag, inner_square)| PatternCell { nodes: q.map(|p| ns.add(p)), tag, inner_square })
        .collect();
    Ok(PatternMesh { kind, kappa, sigma, layers, frame: Frame::Identity, nodes: ns.nodes, cells })
}

/// Pattern choice for one macro element.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternAssignment {
    pub pattern: PatternKind,
    #[serde(default)]
    pub mirrored: bool,
    /// Whether this macro receives the corner-refinement depth L.
    #[serde(default)]
    pub corner_refined: bool,
}

impl PatternAssignment {
    pub fn new(pattern: PatternKind) -> Self {
        PatternAssignment { pattern, mirrored: false, corner_refined: false }
    }
}

/// The checked-in pattern assignment for [`crate::geometry::build_lshape_macro`].
pub fn lshape_assignment() -> Vec<PatternAssignment> {
    #[derive(Deserialize)]
    struct Entry {
        #[serde(flatten)]
        assignment: PatternAssignment,
    }
    let entries: Vec<Entry> =
        serde_json::from_str(include_str!("../data/lshape_patterns.json")).expect("bundled assignment parses");
    entries.into_iter().map(|e| e.assignment).collect()
}

pub fn parse_assignment(text: &str) -> Result<Vec<PatternAssignment>, MeshError> {
    serde_json::from_str(text).map_err(|e| MeshError::Document(e.to_string()))
}

/// Depth vector: `corner_layers` on corner-refined macros, 0 elsewhere.
pub fn layers_for(assignment: &[PatternAssignment], corner_layers: usize) -> Vec<usize> {
    assignment.iter().map(|a| if a.corner_refined { corner_layers } else { 0 }).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParentLink {
    pub element: usize,
    /// Corners in the parent's reference coordinates.
    pub quad: [Point; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub macro_id: usize,
    pub frame: Frame,
    /// Corners in the pattern frame of the macro element.
    pub quad: [Point; 4],
    pub tag: RegionTag,
    /// Depth L of the corner block if this is its innermost square.
    pub inner_depth: Option<usize>,
    pub parent: Option<ParentLink>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    UnmatchedEdge { element: usize, edge: LocalEdge, from: Point, to: Point },
    OvershareEdge { vertices: [usize; 2], count: usize },
    InvertedElement { element: usize, det: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnmatchedEdge { element, edge, from, to } => write!(
                f,
                "edge {edge:?} of element {element} from ({:.6e}, {:.6e}) to ({:.6e}, {:.6e}) has no matching neighbor",
                from[0], from[1], to[0], to[1]
            ),
            Violation::OvershareEdge { vertices, count } => {
                write!(f, "edge {vertices:?} is shared by {count} elements")
            }
            Violation::InvertedElement { element, det } => write!(f, "element {element} has det J = {det:e}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConformityReport {
    pub passed: bool,
    pub violations: Vec<Violation>,
    /// Smallest distance from a large element to ∂Ω.
    pub large_to_boundary: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub macro_tri: MacroTriangulation,
    pub params: MeshParams,
    pub elements: Vec<Element>,
    pub vertices: Vec<Point>,
    pub element_vertices: Vec<[usize; 4]>,
    /// Global edges as (lower, higher) vertex index.
    pub edges: Vec<[usize; 2]>,
    pub element_edges: Vec<[usize; 4]>,
    pub edge_multiplicity: Vec<usize>,
    pub boundary_edge: Vec<bool>,
    pub boundary_vertex: Vec<bool>,
    /// Element map is affine (parallelogram cell in an affine macro).
    pub affine: Vec<bool>,
}

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

impl Mesh {
    pub fn from_patterns(
        macro_tri: MacroTriangulation,
        patterns: &[PatternMesh],
        params: MeshParams,
    ) -> Result<Mesh, MeshError> {
        if patterns.len() != macro_tri.elements.len() {
            return Err(MeshError::LengthMismatch { expected: macro_tri.elements.len(), got: patterns.len() });
        }
        let mut elements = Vec::new();
        for (m, pat) in patterns.iter().enumerate() {
            for (c, cell) in pat.cells.iter().enumerate() {
                elements.push(Element {
                    macro_id: m,
                    frame: pat.frame,
                    quad: pat.quad(c),
                    tag: cell.tag,
                    inner_depth: cell.inner_square.then_some(pat.layers),
                    parent: None,
                });
            }
        }
        Ok(Mesh::from_elements(macro_tri, elements, params))
    }

    /// Builds the global vertex/edge topology by merging coincident corners.
    pub fn from_elements(macro_tri: MacroTriangulation, elements: Vec<Element>, params: MeshParams) -> Mesh {
        let corner_points: Vec<[Point; 4]> = elements
            .iter()
            .map(|e| e.quad.map(|q| macro_tri.elements[e.macro_id].map.map_point(e.frame.apply(q))))
            .collect();
        let n = elements.len() * 4;
        let mut pts = Vec::with_capacity(n);
        let mut tol = Vec::with_capacity(n);
        for c in &corner_points {
            let size = (0..4).map(|i| dist(c[i], c[(i + 1) % 4])).fold(f64::INFINITY, f64::min);
            for p in c {
                let mag = p[0].abs().max(p[1].abs());
                pts.push(*p);
                tol.push((1e-9 * size).max(8.0 * f64::EPSILON * mag).min(0.1 * size));
            }
        }
        let max_tol = tol.iter().copied().fold(0.0, f64::max);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| pts[a][0].total_cmp(&pts[b][0]).then(pts[a][1].total_cmp(&pts[b][1])));
        let mut parent: Vec<usize> = (0..n).collect();
        for (oi, &i) in order.iter().enumerate() {
            for &j in order[..oi].iter().rev() {
                if pts[i][0] - pts[j][0] > max_tol {
                    break;
                }
                if dist(pts[i], pts[j]) <= tol[i].min(tol[j]) {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    if ri != rj {
                        parent[ri.max(rj)] = ri.min(rj);
                    }
                }
            }
        }
        let mut vid = vec![usize::MAX; n];
        let mut vertices = Vec::new();
        let mut element_vertices = Vec::with_capacity(elements.len());
        for k in 0..elements.len() {
            let mut vs = [0; 4];
            for c in 0..4 {
                let r = find(&mut parent, 4 * k + c);
                if vid[r] == usize::MAX {
                    vid[r] = vertices.len();
                    vertices.push(pts[r]);
                }
                vs[c] = vid[r];
            }
            element_vertices.push(vs);
        }

        let mut edge_index: HashMap<[usize; 2], usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut edge_multiplicity = Vec::new();
        let mut element_edges = Vec::with_capacity(elements.len());
        for vs in &element_vertices {
            let mut es = [0; 4];
            for e in LocalEdge::ALL {
                let (a, b) = e.corners();
                let key = [vs[a].min(vs[b]), vs[a].max(vs[b])];
                let id = *edge_index.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edge_multiplicity.push(0);
                    edges.len() - 1
                });
                edge_multiplicity[id] += 1;
                es[e.index()] = id;
            }
            element_edges.push(es);
        }

        let mut boundary_edge = vec![false; edges.len()];
        let mut boundary_vertex = vec![false; vertices.len()];
        for (k, el) in elements.iter().enumerate() {
            for e in LocalEdge::ALL {
                let id = element_edges[k][e.index()];
                if edge_multiplicity[id] != 1 {
                    continue;
                }
                let (a, b) = e.corners();
                let (pa, pb) = (el.frame.apply(el.quad[a]), el.frame.apply(el.quad[b]));
                let side = macro_side(pa, pb);
                if let Some(side) = side {
                    if macro_tri.is_boundary_edge(el.macro_id, side) {
                        boundary_edge[id] = true;
                        boundary_vertex[element_vertices[k][a]] = true;
                        boundary_vertex[element_vertices[k][b]] = true;
                    }
                }
            }
        }

        let affine = elements
            .iter()
            .map(|e| {
                let q = &e.quad;
                let scale = dist(q[0], q[2]).max(dist(q[1], q[3]));
                let skew = dist([q[0][0] + q[2][0], q[0][1] + q[2][1]], [q[1][0] + q[3][0], q[1][1] + q[3][1]]);
                macro_tri.elements[e.macro_id].map.is_affine() && skew <= 1e-14 * scale
            })
            .collect();

        Mesh {
            macro_tri,
            params,
            elements,
            vertices,
            element_vertices,
            edges,
            element_edges,
            edge_multiplicity,
            boundary_edge,
            boundary_vertex,
            affine,
        }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Macro-reference coordinates of an element-reference point.
    pub fn macro_point(&self, k: usize, x: Point) -> Point {
        let e = &self.elements[k];
        e.frame.apply(bilinear_point(&e.quad, x))
    }

    pub fn map_point(&self, k: usize, x: Point) -> Point {
        let e = &self.elements[k];
        self.macro_tri.elements[e.macro_id].map.map_point(self.macro_point(k, x))
    }

    /// Jacobian of the composed element map, without positivity check.
    pub fn raw_jacobian(&self, k: usize, x: Point) -> Jacobian {
        let e = &self.elements[k];
        let jm = self.macro_tri.elements[e.macro_id].map.raw_jacobian(self.macro_point(k, x));
        let jq = bilinear_jacobian(&e.quad, x);
        Jacobian::new(mat_mul(&jm.matrix, &mat_mul(&e.frame.matrix(), &jq)))
    }

    pub fn jacobian(&self, k: usize, x: Point) -> Result<Jacobian, GeometryError> {
        let j = self.raw_jacobian(k, x);
        if j.det > 0.0 && j.det.is_finite() {
            Ok(j)
        } else {
            Err(GeometryError::DegenerateMap { x: x[0], y: x[1], det: j.det })
        }
    }

    pub fn element_area(&self, k: usize) -> f64 {
        if self.affine[k] {
            return self.raw_jacobian(k, [0.5, 0.5]).det;
        }
        let g = [0.5 - 0.5 / 3f64.sqrt(), 0.5 + 0.5 / 3f64.sqrt()];
        let mut a = 0.0;
        for &x in &g {
            for &y in &g {
                a += 0.25 * self.raw_jacobian(k, [x, y]).det;
            }
        }
        a
    }

    pub fn area(&self) -> f64 {
        // Pairwise-style summation keeps tiny corner cells from being lost.
        let mut areas: Vec<f64> = (0..self.len()).map(|k| self.element_area(k)).collect();
        areas.sort_by(f64::total_cmp);
        areas.iter().sum()
    }

    /// Largest ratio of Jacobian singular values over the corners and center.
    pub fn aspect_ratio(&self, k: usize) -> f64 {
        [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]]
            .iter()
            .map(|&x| self.raw_jacobian(k, x).condition())
            .fold(0.0, f64::max)
    }

    /// Structural violations (cheap); used as a precondition by spaces.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (k, _) in self.elements.iter().enumerate() {
            for &x in &[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]] {
                let det = self.raw_jacobian(k, x).det;
                if !(det > 0.0) {
                    out.push(Violation::InvertedElement { element: k, det });
                    break;
                }
            }
            for e in LocalEdge::ALL {
                let id = self.element_edges[k][e.index()];
                if self.edge_multiplicity[id] == 1 && !self.boundary_edge[id] {
                    let (a, b) = e.corners();
                    out.push(Violation::UnmatchedEdge {
                        element: k,
                        edge: e,
                        from: self.vertices[self.element_vertices[k][a]],
                        to: self.vertices[self.element_vertices[k][b]],
                    });
                }
            }
        }
        for (id, &m) in self.edge_multiplicity.iter().enumerate() {
            if m > 2 {
                out.push(Violation::OvershareEdge { vertices: self.edges[id], count: m });
            }
        }
        out
    }

    /// Distance between the union of large elements and ∂Ω.
    pub fn large_to_boundary(&self) -> Option<f64> {
        let bsegs: Vec<(Point, Point)> = self
            .macro_tri
            .boundary_edges
            .iter()
            .map(|&(m, e)| {
                let map = &self.macro_tri.elements[m].map;
                let (a, b) = e.corners();
                (map.map_point(crate::geometry::REF_CORNERS[a]), map.map_point(crate::geometry::REF_CORNERS[b]))
            })
            .collect();
        let mut best: Option<f64> = None;
        for (k, el) in self.elements.iter().enumerate() {
            if el.tag != RegionTag::Large {
                continue;
            }
            let v = self.element_vertices[k].map(|i| self.vertices[i]);
            for i in 0..4 {
                let s = (v[i], v[(i + 1) % 4]);
                for b in &bsegs {
                    let d = segment_distance(s, *b);
                    best = Some(best.map_or(d, |x| x.min(d)));
                }
            }
        }
        best
    }

    /// Fingerprint of the element geometry, used to verify nesting.
    pub fn signature(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.elements.len().hash(&mut h);
        for e in &self.elements {
            e.macro_id.hash(&mut h);
            for p in &e.quad {
                p[0].to_bits().hash(&mut h);
                p[1].to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    pub fn dump_json(&self) -> String {
        #[derive(Serialize)]
        struct Dumped<'a> {
            params: &'a MeshParams,
            elements: Vec<DumpedElement>,
            conformity: ConformityReport,
        }
        #[derive(Serialize)]
        struct DumpedElement {
            macro_id: usize,
            reference_quad: [Point; 4],
            physical_quad: [Point; 4],
            tag: RegionTag,
        }
        let elements = (0..self.len())
            .map(|k| {
                let e = &self.elements[k];
                DumpedElement {
                    macro_id: e.macro_id,
                    reference_quad: e.quad.map(|q| e.frame.apply(q)),
                    physical_quad: self.element_vertices[k].map(|v| self.vertices[v]),
                    tag: e.tag,
                }
            })
            .collect();
        serde_json::to_string_pretty(&Dumped { params: &self.params, elements, conformity: check_conformity(self) })
            .expect("serializable")
    }

    /// Nested refinement: anisotropic cells are split once transversally,
    /// the splits are closed for conformity by bisection, and two more
    /// geometric rings are inserted at every corner block of depth L ≥ 1.
    pub fn refine_for_reference(&self) -> Result<Mesh, MeshError> {
        let n = self.len();
        // split[k] = [bisect ξ-edges, bisect η-edges]
        let mut split = vec![[false; 2]; n];
        for (k, el) in self.elements.iter().enumerate() {
            if el.tag == RegionTag::Aniso {
                let v = self.element_vertices[k].map(|i| self.vertices[i]);
                let (lu, lv) = (dist(v[0], v[1]), dist(v[0], v[3]));
                split[k][if lu > lv { 1 } else { 0 }] = true;
            }
        }
        let dir = |e: LocalEdge| match e {
            LocalEdge::Bottom | LocalEdge::Top => 0,
            LocalEdge::Right | LocalEdge::Left => 1,
        };
        loop {
            let mut bisected = vec![false; self.edges.len()];
            for k in 0..n {
                for e in LocalEdge::ALL {
                    if split[k][dir(e)] {
                        bisected[self.element_edges[k][e.index()]] = true;
                    }
                }
            }
            let mut changed = false;
            for k in 0..n {
                for e in LocalEdge::ALL {
                    if bisected[self.element_edges[k][e.index()]] && !split[k][dir(e)] {
                        split[k][dir(e)] = true;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }

        let mut fine = Vec::new();
        for (k, el) in self.elements.iter().enumerate() {
            let us: &[f64] = if split[k][0] { &[0.0, 0.5, 1.0] } else { &[0.0, 1.0] };
            let vs: &[f64] = if split[k][1] { &[0.0, 0.5, 1.0] } else { &[0.0, 1.0] };
            for j in 0..vs.len() - 1 {
                for i in 0..us.len() - 1 {
                    let sub = [[us[i], vs[j]], [us[i + 1], vs[j]], [us[i + 1], vs[j + 1]], [us[i], vs[j + 1]]];
                    let quad = sub.map(|x| bilinear_point(&el.quad, x));
                    // The sub-cell (0,s)² at the corner of an innermost square
                    // receives two further geometric rings.
                    let s = quad.iter().map(|q| q[0].max(q[1])).fold(0.0, f64::max);
                    let is_square = el.inner_depth.is_some_and(|l| l > 0)
                        && quad.iter().any(|q| q[0] == 0.0 && q[1] == 0.0)
                        && quad.iter().all(|q| (q[0] == 0.0 || q[0] == s) && (q[1] == 0.0 || q[1] == s));
                    if is_square {
                        let mut ns = NodeSet::default();
                        let mut block = Vec::new();
                        corner_block(&mut ns, s, self.params.sigma, 2, &mut block);
                        for (q, _) in block {
                            let idx = el.frame.orient([0, 1, 2, 3]);
                            let q = idx.map(|i| q[i]);
                            let parent_quad = q.map(|p| inverse_bilinear(&el.quad, p));
                            fine.push(Element {
                                macro_id: el.macro_id,
                                frame: el.frame,
                                quad: q,
                                tag: el.tag,
                                inner_depth: None,
                                parent: Some(ParentLink { element: k, quad: parent_quad }),
                            });
                        }
                    } else {
                        fine.push(Element {
                            macro_id: el.macro_id,
                            frame: el.frame,
                            quad,
                            tag: el.tag,
                            inner_depth: None,
                            parent: Some(ParentLink { element: k, quad: sub }),
                        });
                    }
                }
            }
        }
        let mut params = self.params.clone();
        for l in &mut params.layers {
            if *l > 0 {
                *l += 2;
            }
        }
        let mesh = Mesh::from_elements(self.macro_tri.clone(), fine, params);
        let v = mesh.violations();
        if v.is_empty() {
            Ok(mesh)
        } else {
            Err(MeshError::NonConforming(v))
        }
    }
}

/// Side of the reference square containing both points, if any.
fn macro_side(a: Point, b: Point) -> Option<LocalEdge> {
    let on = |x: f64, v: f64| (x - v).abs() <= 1e-14;
    if on(a[1], 0.0) && on(b[1], 0.0) {
        Some(LocalEdge::Bottom)
    } else if on(a[0], 1.0) && on(b[0], 1.0) {
        Some(LocalEdge::Right)
    } else if on(a[1], 1.0) && on(b[1], 1.0) {
        Some(LocalEdge::Top)
    } else if on(a[0], 0.0) && on(b[0], 0.0) {
        Some(LocalEdge::Left)
    } else {
        None
    }
}

/// Inverse of the bilinear map through `quad` (Newton; exact for parallelograms).
pub fn inverse_bilinear(quad: &[Point; 4], p: Point) -> Point {
    let mut x = [0.5, 0.5];
    for _ in 0..50 {
        let f = bilinear_point(quad, x);
        let r = [f[0] - p[0], f[1] - p[1]];
        let j = Jacobian::new(bilinear_jacobian(quad, x));
        let inv = j.inverse();
        let dx = [inv[0][0] * r[0] + inv[0][1] * r[1], inv[1][0] * r[0] + inv[1][1] * r[1]];
        x = [x[0] - dx[0], x[1] - dx[1]];
        if dx[0].abs().max(dx[1].abs()) < 1e-15 {
            break;
        }
    }
    // Snap values that are exact up to roundoff.
    x.map(|c| {
        let r = (c * 4.0).round() / 4.0;
        if (c - r).abs() < 1e-13 {
            r
        } else {
            c
        }
    })
}

fn segment_distance(s: (Point, Point), t: (Point, Point)) -> f64 {
    fn point_seg(p: Point, a: Point, b: Point) -> f64 {
        let d = [b[0] - a[0], b[1] - a[1]];
        let l2 = d[0] * d[0] + d[1] * d[1];
        let t = if l2 > 0.0 { (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / l2).clamp(0.0, 1.0) } else { 0.0 };
        dist(p, [a[0] + t * d[0], a[1] + t * d[1]])
    }
    let cross = |o: Point, a: Point, b: Point| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let (a, b) = s;
    let (c, d) = t;
    let intersect = cross(a, b, c) * cross(a, b, d) < 0.0 && cross(c, d, a) * cross(c, d, b) < 0.0;
    if intersect {
        return 0.0;
    }
    point_seg(a, c, d).min(point_seg(b, c, d)).min(point_seg(c, a, b)).min(point_seg(d, a, b))
}

pub fn check_conformity(mesh: &Mesh) -> ConformityReport {
    let violations = mesh.violations();
    ConformityReport { passed: violations.is_empty(), violations, large_to_boundary: mesh.large_to_boundary() }
}

/// Validates an assignment against the admissibility rules for spectral
/// boundary layer meshes.
pub fn validate_assignment(macro_tri: &MacroTriangulation, assignment: &[PatternAssignment]) -> Result<(), MeshError> {
    if assignment.len() != macro_tri.elements.len() {
        return Err(MeshError::LengthMismatch { expected: macro_tri.elements.len(), got: assignment.len() });
    }
    for (m, a) in assignment.iter().enumerate() {
        let bad = |reason: String| Err(MeshError::Inadmissible { macro_id: m, reason });
        if a.mirrored && a.pattern != PatternKind::Mixed {
            return bad(format!("only mixed patterns may be mirrored, got {:?}", a.pattern));
        }
        match macro_tri.boundary_contact(m) {
            BoundaryContact::Other => return bad("boundary contact is not one of the admissible cases".into()),
            BoundaryContact::Empty => {}
            BoundaryContact::Vertex(c) => {
                if !a.pattern.has_corner_block() {
                    return bad(format!("vertex contact needs a tensor, mixed or geometric pattern, got {:?}", a.pattern));
                }
                let corner = if a.mirrored { 1 } else { 0 };
                if c != corner {
                    return bad(format!("boundary vertex is reference corner {c}, pattern refines toward corner {corner}"));
                }
            }
            BoundaryContact::Edge(e) => {
                if !matches!(a.pattern, PatternKind::BoundaryLayer | PatternKind::Mixed) {
                    return bad(format!("one boundary edge needs a boundary layer or mixed pattern, got {:?}", a.pattern));
                }
                if e != LocalEdge::Bottom {
                    return bad(format!("boundary edge must be the reference bottom edge, got {e:?}"));
                }
            }
            BoundaryContact::TwoEdges(e0, e1) => {
                if a.pattern != PatternKind::TensorProduct {
                    return bad(format!("two boundary edges need the tensor product pattern, got {:?}", a.pattern));
                }
                let mut es = [e0, e1];
                es.sort();
                if es != [LocalEdge::Bottom, LocalEdge::Left] {
                    return bad(format!("boundary edges must be bottom and left, got {es:?}"));
                }
            }
        }
    }
    Ok(())
}

pub fn generate_mesh(
    macro_tri: &MacroTriangulation,
    assignment: &[PatternAssignment],
    params: &MeshParams,
) -> Result<Mesh, MeshError> {
    validate_assignment(macro_tri, assignment)?;
    if params.layers.len() != assignment.len() {
        return Err(MeshError::LengthMismatch { expected: assignment.len(), got: params.layers.len() });
    }
    let patterns = assignment
        .iter()
        .zip(&params.layers)
        .map(|(a, &l)| {
            let p = build_pattern(a.pattern, params.kappa, params.sigma, l)?;
            Ok(if a.mirrored { p.mirrored() } else { p })
        })
        .collect::<Result<Vec<_>, MeshError>>()?;
    let mesh = Mesh::from_patterns(macro_tri.clone(), &patterns, params.clone())?;
    let v = mesh.violations();
    if v.is_empty() {
        Ok(mesh)
    } else {
        Err(MeshError::NonConforming(v))
    }
}

/// The study mesh on the L-shape: κ = min(λpε, 1/2), depth `layers` at the
/// corner-refined macros.
pub fn lshape_mesh(p: usize, eps: f64, lambda: f64, sigma: f64, layers: usize) -> Result<Mesh, MeshError> {
    let macro_tri = crate::geometry::build_lshape_macro();
    let assignment = lshape_assignment();
    let params = MeshParams::new(lambda, sigma, p, eps, layers_for(&assignment, layers))?;
    generate_mesh(&macro_tri, &assignment, &params)
}
