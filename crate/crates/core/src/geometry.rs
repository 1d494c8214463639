//! Macro triangulations of polygonal domains and their element maps.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

pub type Point = [f64; 2];
pub type Mat2 = [[f64; 2]; 2];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate element map at ({x}, {y}): det J = {det:e}")]
    DegenerateMap { x: f64, y: f64, det: f64 },
    #[error("macro element {element} references missing vertex {vertex}")]
    MissingVertex { element: usize, vertex: usize },
    #[error("macro element {element}: corner {corner} maps to {mapped:?}, expected vertex {vertex} at {expected:?}")]
    VertexMismatch { element: usize, corner: usize, vertex: usize, mapped: Point, expected: Point },
    #[error("macro elements {first} and {second} parametrize their shared edge incompatibly")]
    IncompatibleEdge { first: usize, second: usize },
    #[error("macro edge ({0}, {1}) is shared by more than two macro elements")]
    OvershareEdge(usize, usize),
    #[error("vertex {vertex} is a hanging node on an edge of macro element {element}")]
    HangingNode { vertex: usize, element: usize },
    #[error("invalid macro triangulation document: {0}")]
    Document(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jacobian {
    /// Row r, column c is ∂F_r/∂x̂_c.
    pub matrix: Mat2,
    pub det: f64,
}

impl Jacobian {
    pub fn new(matrix: Mat2) -> Self {
        let det = matrix[0][0] * matrix[1][1] - matrix[0][1] * matrix[1][0];
        Jacobian { matrix, det }
    }

    pub fn inverse(&self) -> Mat2 {
        let m = &self.matrix;
        let d = 1.0 / self.det;
        [[m[1][1] * d, -m[0][1] * d], [-m[1][0] * d, m[0][0] * d]]
    }

    /// (largest, smallest) singular value.
    pub fn singular_values(&self) -> (f64, f64) {
        let m = &self.matrix;
        let fro2 = m[0][0].powi(2) + m[0][1].powi(2) + m[1][0].powi(2) + m[1][1].powi(2);
        let d = self.det.abs();
        let disc = (fro2 * fro2 - 4.0 * d * d).max(0.0).sqrt();
        let s1 = ((fro2 + disc) / 2.0).sqrt();
        (s1, d / s1)
    }

    /// Ratio of the singular values (≥ 1).
    pub fn condition(&self) -> f64 {
        let (s1, s2) = self.singular_values();
        s1 / s2
    }
}

pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

/// Map from the reference square Ŝ = (0,1)² to a physical quadrilateral.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PatchMap {
    Affine { matrix: Mat2, offset: Point },
    /// Corners are the images of (0,0), (1,0), (1,1), (0,1).
    Bilinear { corners: [Point; 4] },
}

impl PatchMap {
    pub fn identity() -> Self {
        PatchMap::Affine { matrix: [[1.0, 0.0], [0.0, 1.0]], offset: [0.0, 0.0] }
    }

    pub fn is_affine(&self) -> bool {
        matches!(self, PatchMap::Affine { .. })
    }

    pub fn map_point(&self, x: Point) -> Point {
        match self {
            PatchMap::Affine { matrix: m, offset: b } => {
                [b[0] + m[0][0] * x[0] + m[0][1] * x[1], b[1] + m[1][0] * x[0] + m[1][1] * x[1]]
            }
            PatchMap::Bilinear { corners } => bilinear_point(corners, x),
        }
    }

    /// Jacobian without the positivity check.
    pub fn raw_jacobian(&self, x: Point) -> Jacobian {
        match self {
            PatchMap::Affine { matrix, .. } => Jacobian::new(*matrix),
            PatchMap::Bilinear { corners } => Jacobian::new(bilinear_jacobian(corners, x)),
        }
    }

    pub fn map_jacobian(&self, x: Point) -> Result<Jacobian, GeometryError> {
        let j = self.raw_jacobian(x);
        if j.det > 0.0 && j.det.is_finite() {
            Ok(j)
        } else {
            Err(GeometryError::DegenerateMap { x: x[0], y: x[1], det: j.det })
        }
    }

    pub fn corners(&self) -> [Point; 4] {
        [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]].map(|c| self.map_point(c))
    }
}

pub fn bilinear_point(c: &[Point; 4], x: Point) -> Point {
    let (u, v) = (x[0], x[1]);
    let w = [(1.0 - u) * (1.0 - v), u * (1.0 - v), u * v, (1.0 - u) * v];
    [
        w[0] * c[0][0] + w[1] * c[1][0] + w[2] * c[2][0] + w[3] * c[3][0],
        w[0] * c[0][1] + w[1] * c[1][1] + w[2] * c[2][1] + w[3] * c[3][1],
    ]
}

pub fn bilinear_jacobian(c: &[Point; 4], x: Point) -> Mat2 {
    let (u, v) = (x[0], x[1]);
    let mut m = [[0.0; 2]; 2];
    for r in 0..2 {
        m[r][0] = (1.0 - v) * (c[1][r] - c[0][r]) + v * (c[2][r] - c[3][r]);
        m[r][1] = (1.0 - u) * (c[3][r] - c[0][r]) + u * (c[2][r] - c[1][r]);
    }
    m
}

/// Edges of the reference square, each with its parameter direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalEdge {
    /// (0,0) → (1,0)
    Bottom,
    /// (1,0) → (1,1)
    Right,
    /// (0,1) → (1,1)
    Top,
    /// (0,0) → (0,1)
    Left,
}

impl LocalEdge {
    pub const ALL: [LocalEdge; 4] = [LocalEdge::Bottom, LocalEdge::Right, LocalEdge::Top, LocalEdge::Left];

    /// Local corner indices (start, end) in parameter direction.
    pub fn corners(self) -> (usize, usize) {
        match self {
            LocalEdge::Bottom => (0, 1),
            LocalEdge::Right => (1, 2),
            LocalEdge::Top => (3, 2),
            LocalEdge::Left => (0, 3),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Reference point at parameter t along the edge.
    pub fn point(self, t: f64) -> Point {
        match self {
            LocalEdge::Bottom => [t, 0.0],
            LocalEdge::Right => [1.0, t],
            LocalEdge::Top => [t, 1.0],
            LocalEdge::Left => [0.0, t],
        }
    }
}

pub const REF_CORNERS: [Point; 4] = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacroElement {
    /// Images of the reference corners (0,0), (1,0), (1,1), (0,1).
    pub vertices: [usize; 4],
    pub map: PatchMap,
}

/// How a macro element's closure meets ∂Ω.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryContact {
    Empty,
    /// Local corner index touching ∂Ω.
    Vertex(usize),
    Edge(LocalEdge),
    /// Two edges meeting at a domain corner.
    TwoEdges(LocalEdge, LocalEdge),
    /// Anything outside the four admissible cases.
    Other,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacroTriangulation {
    pub vertices: Vec<Point>,
    pub elements: Vec<MacroElement>,
    pub boundary_edges: Vec<(usize, LocalEdge)>,
    pub domain_corners: Vec<usize>,
}

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl MacroTriangulation {
    /// Validates the maps against the vertex list, checks that shared edges
    /// are parametrized compatibly and that there are no hanging nodes, and
    /// derives boundary edges and domain corners.
    pub fn new(vertices: Vec<Point>, elements: Vec<MacroElement>) -> Result<Self, GeometryError> {
        let scale = vertices
            .iter()
            .flat_map(|v| v.iter().map(|c| c.abs()))
            .fold(1.0f64, f64::max);
        let tol = 1e-12 * scale;
        for (k, el) in elements.iter().enumerate() {
            for (c, &v) in el.vertices.iter().enumerate() {
                let expected = *vertices.get(v).ok_or(GeometryError::MissingVertex { element: k, vertex: v })?;
                let mapped = el.map.map_point(REF_CORNERS[c]);
                if dist(mapped, expected) > tol {
                    return Err(GeometryError::VertexMismatch { element: k, corner: c, vertex: v, mapped, expected });
                }
            }
            for &x in &[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]] {
                el.map.map_jacobian(x)?;
            }
        }

        let mut shared: HashMap<(usize, usize), Vec<(usize, LocalEdge)>> = HashMap::new();
        for (k, el) in elements.iter().enumerate() {
            for e in LocalEdge::ALL {
                let (a, b) = e.corners();
                let (va, vb) = (el.vertices[a], el.vertices[b]);
                shared.entry((va.min(vb), va.max(vb))).or_default().push((k, e));
            }
        }
        let mut boundary_edges = Vec::new();
        let mut keys: Vec<_> = shared.keys().copied().collect();
        keys.sort_unstable();
        for key in keys {
            let users = &shared[&key];
            match users.len() {
                1 => boundary_edges.push(users[0]),
                2 => {
                    let (k0, e0) = users[0];
                    let (k1, e1) = users[1];
                    let same_dir = {
                        let (a0, _) = e0.corners();
                        let (a1, _) = e1.corners();
                        elements[k0].vertices[a0] == elements[k1].vertices[a1]
                    };
                    for &t in &[0.0, 0.5, 1.0] {
                        let p0 = elements[k0].map.map_point(e0.point(t));
                        let p1 = elements[k1].map.map_point(e1.point(if same_dir { t } else { 1.0 - t }));
                        if dist(p0, p1) > tol {
                            return Err(GeometryError::IncompatibleEdge { first: k0, second: k1 });
                        }
                    }
                }
                _ => return Err(GeometryError::OvershareEdge(key.0, key.1)),
            }
        }
        boundary_edges.sort_unstable();

        // Hanging nodes: no vertex may lie strictly inside another element's edge.
        for (k, el) in elements.iter().enumerate() {
            for e in LocalEdge::ALL {
                let (a, b) = e.corners();
                let (pa, pb) = (vertices[el.vertices[a]], vertices[el.vertices[b]]);
                let len = dist(pa, pb);
                for (v, &q) in vertices.iter().enumerate() {
                    if v == el.vertices[a] || v == el.vertices[b] {
                        continue;
                    }
                    let (da, db) = (dist(q, pa), dist(q, pb));
                    if da > tol && db > tol && (da + db - len).abs() <= tol {
                        return Err(GeometryError::HangingNode { vertex: v, element: k });
                    }
                }
            }
        }

        let mut tri = MacroTriangulation { vertices, elements, boundary_edges, domain_corners: Vec::new() };
        tri.domain_corners = tri.compute_domain_corners();
        Ok(tri)
    }

    fn boundary_segments(&self) -> Vec<(usize, usize)> {
        self.boundary_edges
            .iter()
            .map(|&(k, e)| {
                let (a, b) = e.corners();
                (self.elements[k].vertices[a], self.elements[k].vertices[b])
            })
            .collect()
    }

    fn compute_domain_corners(&self) -> Vec<usize> {
        let mut incident: HashMap<usize, Vec<usize>> = HashMap::new();
        for (a, b) in self.boundary_segments() {
            incident.entry(a).or_default().push(b);
            incident.entry(b).or_default().push(a);
        }
        let mut corners: Vec<usize> = incident
            .iter()
            .filter_map(|(&v, nb)| {
                if nb.len() != 2 {
                    return Some(v);
                }
                let p = self.vertices[v];
                let (a, b) = (self.vertices[nb[0]], self.vertices[nb[1]]);
                let (u, w) = ([a[0] - p[0], a[1] - p[1]], [b[0] - p[0], b[1] - p[1]]);
                let cross = u[0] * w[1] - u[1] * w[0];
                let scale = dist(a, p) * dist(b, p);
                (cross.abs() > 1e-12 * scale).then_some(v)
            })
            .collect();
        corners.sort_unstable();
        corners
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_segments().iter().any(|&(a, b)| a == v || b == v)
    }

    pub fn is_boundary_edge(&self, k: usize, e: LocalEdge) -> bool {
        self.boundary_edges.binary_search(&(k, e)).is_ok()
    }

    /// Classifies the intersection of macro element k's closure with ∂Ω.
    pub fn boundary_contact(&self, k: usize) -> BoundaryContact {
        let el = &self.elements[k];
        let edges: Vec<LocalEdge> = LocalEdge::ALL.into_iter().filter(|&e| self.is_boundary_edge(k, e)).collect();
        let bverts: Vec<usize> = (0..4).filter(|&c| self.is_boundary_vertex(el.vertices[c])).collect();
        let on_edges = |c: usize| {
            edges.iter().any(|e| {
                let (a, b) = e.corners();
                a == c || b == c
            })
        };
        match edges.len() {
            0 => match bverts.len() {
                0 => BoundaryContact::Empty,
                1 => BoundaryContact::Vertex(bverts[0]),
                _ => BoundaryContact::Other,
            },
            1 if bverts.iter().all(|&c| on_edges(c)) => BoundaryContact::Edge(edges[0]),
            2 if bverts.iter().all(|&c| on_edges(c)) => {
                let (a0, b0) = edges[0].corners();
                let (a1, b1) = edges[1].corners();
                let common = [a0, b0].into_iter().find(|c| *c == a1 || *c == b1);
                match common {
                    Some(c) if self.domain_corners.contains(&el.vertices[c]) => {
                        BoundaryContact::TwoEdges(edges[0], edges[1])
                    }
                    _ => BoundaryContact::Other,
                }
            }
            _ => BoundaryContact::Other,
        }
    }

    /// Total area ∫ det J over all macro elements.
    pub fn area(&self) -> f64 {
        let rule = crate::basis::gauss_rule(4).expect("nonempty rule");
        self.elements
            .iter()
            .map(|el| {
                let mut a = 0.0;
                for (i, &x) in rule.nodes.iter().enumerate() {
                    for (j, &y) in rule.nodes.iter().enumerate() {
                        a += rule.weights[i] * rule.weights[j] * el.map.raw_jacobian([x, y]).det;
                    }
                }
                a
            })
            .sum()
    }

    /// Smallest singular value of any macro Jacobian: physical distances
    /// are at least this factor times reference distances.
    pub fn min_scale(&self) -> f64 {
        let mut mu = f64::INFINITY;
        for el in &self.elements {
            for &x in &REF_CORNERS {
                mu = mu.min(el.map.raw_jacobian(x).singular_values().1);
            }
        }
        mu
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, GeometryError> {
        #[derive(Deserialize)]
        struct Doc {
            vertices: Vec<Point>,
            elements: Vec<MacroElement>,
        }
        let doc: Doc = serde_json::from_str(text).map_err(|e| GeometryError::Document(e.to_string()))?;
        MacroTriangulation::new(doc.vertices, doc.elements)
    }
}

/// Twelve squares of side 1/4 tiling (0,1)² \ [1/2,1)×[1/2,1).
///
/// Each frame is chosen so that boundary edges are the reference bottom
/// edge and boundary corners sit at reference (0,0) — except the two
/// macros whose only boundary corner is the foot of the reentrant corner's
/// incoming edge, which carry it at reference (1,0).
pub fn build_lshape_macro() -> MacroTriangulation {
    const Q: f64 = 0.25;
    // (column, row, origin, image of ξ-direction, image of η-direction)
    let frames: [(usize, usize, Point, Point, Point); 12] = [
        (0, 0, [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]),
        (1, 0, [0.25, 0.0], [1.0, 0.0], [0.0, 1.0]),
        (2, 0, [0.5, 0.0], [1.0, 0.0], [0.0, 1.0]),
        (3, 0, [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]),
        (0, 1, [0.0, 0.5], [0.0, -1.0], [1.0, 0.0]),
        (1, 1, [0.5, 0.5], [-1.0, 0.0], [0.0, -1.0]),
        (2, 1, [0.75, 0.5], [-1.0, 0.0], [0.0, -1.0]),
        (3, 1, [1.0, 0.5], [-1.0, 0.0], [0.0, -1.0]),
        (0, 2, [0.0, 0.75], [0.0, -1.0], [1.0, 0.0]),
        (1, 2, [0.5, 0.5], [0.0, 1.0], [-1.0, 0.0]),
        (0, 3, [0.0, 1.0], [0.0, -1.0], [1.0, 0.0]),
        (1, 3, [0.5, 1.0], [-1.0, 0.0], [0.0, -1.0]),
    ];
    let mut vertices = Vec::new();
    let mut index = HashMap::new();
    for j in 0..=4usize {
        for i in 0..=4usize {
            if i > 2 && j > 2 {
                continue;
            }
            index.insert((i, j), vertices.len());
            vertices.push([i as f64 * Q, j as f64 * Q]);
        }
    }
    let elements = frames
        .iter()
        .map(|&(_, _, o, ex, ey)| {
            let map = PatchMap::Affine { matrix: [[ex[0] * Q, ey[0] * Q], [ex[1] * Q, ey[1] * Q]], offset: o };
            let vs = REF_CORNERS.map(|c| {
                let p = map.map_point(c);
                index[&((p[0] / Q).round() as usize, (p[1] / Q).round() as usize)]
            });
            MacroElement { vertices: vs, map }
        })
        .collect();
    MacroTriangulation::new(vertices, elements).expect("L-shape layout is valid")
}
