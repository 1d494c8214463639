#![allow(dead_code)]

use hplayer::geometry::{MacroElement, MacroTriangulation, PatchMap, Point};
use hplayer::mesh::{build_pattern, Mesh, MeshParams, PatternKind};

/// One macro element covering (0,1)², refined by `kind`.
pub fn unit_square(kind: PatternKind, kappa_eps: f64) -> Mesh {
    let tri = MacroTriangulation::new(
        vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        vec![MacroElement { vertices: [0, 1, 2, 3], map: PatchMap::identity() }],
    )
    .unwrap();
    let params = MeshParams::new(1.0, 0.2, 1, kappa_eps, vec![0]).unwrap();
    let pat = build_pattern(kind, params.kappa, params.sigma, 0).unwrap();
    Mesh::from_patterns(tri, &[pat], params).unwrap()
}

/// Independent description of ∂Ω for Ω = (0,1)² \ [1/2,1)².
pub fn on_lshape_boundary(p: Point) -> bool {
    let t = 1e-12;
    let near = |a: f64, b: f64| (a - b).abs() < t;
    let within = |a: f64, lo: f64, hi: f64| a > lo - t && a < hi + t;
    (near(p[1], 0.0) && within(p[0], 0.0, 1.0))
        || (near(p[0], 0.0) && within(p[1], 0.0, 1.0))
        || (near(p[0], 1.0) && within(p[1], 0.0, 0.5))
        || (near(p[1], 1.0) && within(p[0], 0.0, 0.5))
        || (near(p[1], 0.5) && within(p[0], 0.5, 1.0))
        || (near(p[0], 0.5) && within(p[1], 0.5, 1.0))
}

/// Tensor Gauss–Legendre points and weights on (0,1)² from the 1D rule.
pub fn gauss_2d(n: usize) -> Vec<(Point, f64)> {
    let r = hplayer::basis::gauss_rule(n).unwrap();
    let mut out = Vec::new();
    for (i, &x) in r.nodes.iter().enumerate() {
        for (j, &y) in r.nodes.iter().enumerate() {
            out.push(([x, y], r.weights[i] * r.weights[j]));
        }
    }
    out
}
