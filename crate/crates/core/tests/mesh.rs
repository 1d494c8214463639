mod common;

use approx::assert_relative_eq;
use common::on_lshape_boundary;
use hplayer::geometry::{
    bilinear_jacobian, build_lshape_macro, Jacobian, MacroElement, MacroTriangulation, PatchMap, Point, REF_CORNERS,
};
use hplayer::mesh::{
    build_pattern, check_conformity, generate_mesh, layers_for, lshape_assignment, lshape_mesh, Mesh, MeshError,
    MeshParams, PatternKind, PatternMesh, RegionTag, Violation,
};

const CORNER_KINDS: [PatternKind; 3] = [PatternKind::TensorProduct, PatternKind::Mixed, PatternKind::Geometric];

fn shoelace(q: &[Point; 4]) -> f64 {
    0.5 * (0..4).map(|i| q[i][0] * q[(i + 1) % 4][1] - q[(i + 1) % 4][0] * q[i][1]).sum::<f64>()
}

fn cell_aspect(q: &[Point; 4]) -> f64 {
    REF_CORNERS.iter().chain(&[[0.5, 0.5]]).map(|&x| Jacobian::new(bilinear_jacobian(q, x)).condition()).fold(0.0, f64::max)
}

/// Ring enumeration: three cells per geometric layer, the innermost square,
/// two anisotropic collars and one large cell.
fn ring_oracle(layers: usize) -> (usize, usize, usize) {
    (3 * layers + 1, 2, 1)
}

fn tag_counts(p: &PatternMesh) -> (usize, usize, usize) {
    let count = |t| p.cells.iter().filter(|c| c.tag == t).count();
    (count(RegionTag::CornerLayer), count(RegionTag::Aniso), count(RegionTag::Large))
}

#[test]
fn pattern_cell_counts_match_ring_enumeration() {
    for kind in CORNER_KINDS {
        for l in 0..=10 {
            let p = build_pattern(kind, 0.1, 0.2, l).unwrap();
            assert_eq!(tag_counts(&p), ring_oracle(l), "{kind:?} L={l}");
            assert_eq!(p.cells.len(), 3 * l + 4);
        }
    }
    let bl = build_pattern(PatternKind::BoundaryLayer, 0.1, 0.2, 0).unwrap();
    assert_eq!(tag_counts(&bl), (0, 1, 1));
}

#[test]
fn boundary_layer_pattern_is_the_two_strip_split() {
    let p = build_pattern(PatternKind::BoundaryLayer, 0.1, 0.5, 0).unwrap();
    let mut cells: Vec<(RegionTag, f64, f64)> = (0..2)
        .map(|c| {
            let q = p.reference_quad(c);
            let ys: Vec<f64> = q.iter().map(|v| v[1]).collect();
            (p.cells[c].tag, ys.iter().cloned().fold(f64::INFINITY, f64::min), ys.iter().cloned().fold(0.0, f64::max))
        })
        .collect();
    cells.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    assert_eq!(cells, vec![(RegionTag::Aniso, 0.0, 0.1), (RegionTag::Large, 0.1, 1.0)]);
}

#[test]
fn patterns_tile_the_square_without_hanging_nodes() {
    for kind in CORNER_KINDS {
        for (kappa, l) in [(0.1, 0), (0.1, 3), (0.5, 2), (1e-6, 6)] {
            let p = build_pattern(kind, kappa, 0.2, l).unwrap();
            let total: f64 = (0..p.cells.len()).map(|c| shoelace(&p.quad(c))).sum();
            assert_relative_eq!(total, 1.0, max_relative = 1e-13);
            let corner: f64 = (0..p.cells.len())
                .filter(|&c| p.cells[c].tag == RegionTag::CornerLayer)
                .map(|c| shoelace(&p.quad(c)))
                .sum();
            assert_relative_eq!(corner, kappa * kappa, max_relative = 1e-12);
            for c in 0..p.cells.len() {
                let q = p.quad(c);
                assert!(shoelace(&q) > 0.0);
                if p.cells[c].tag == RegionTag::CornerLayer {
                    assert!(q.iter().all(|v| v[0] <= kappa && v[1] <= kappa));
                }
                for i in 0..4 {
                    let (a, b) = (q[i], q[(i + 1) % 4]);
                    for n in &p.nodes {
                        let cross = (b[0] - a[0]) * (n[1] - a[1]) - (b[1] - a[1]) * (n[0] - a[0]);
                        let t = ((n[0] - a[0]) * (b[0] - a[0]) + (n[1] - a[1]) * (b[1] - a[1]))
                            / ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2));
                        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
                        assert!(
                            !(cross.abs() < 1e-14 * len && t > 1e-12 && t < 1.0 - 1e-12),
                            "{kind:?} κ={kappa} L={l}: node {n:?} hangs on cell {c}"
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn aspect_ratios_by_region() {
    let sigma: f64 = 0.2;
    let bound = (1.0 / sigma - 1.0).max(2.0);
    for kind in CORNER_KINDS {
        for kappa in [0.5, 0.1, 1e-3, 1e-6] {
            for l in [0, 1, 4, 8] {
                let p = build_pattern(kind, kappa, sigma, l).unwrap();
                for c in 0..p.cells.len() {
                    let a = cell_aspect(&p.quad(c));
                    match p.cells[c].tag {
                        RegionTag::Aniso => assert_relative_eq!(a, (1.0 - kappa) / kappa, max_relative = 1e-12),
                        _ => assert!(a <= bound + 1e-12, "{kind:?} κ={kappa} L={l} cell {c}: {a}"),
                    }
                }
            }
        }
    }
}

#[test]
fn lshape_mesh_conforms_and_keeps_large_cells_away_from_the_boundary() {
    // λ = 1, p = 1, ε = 1e−2 gives κ = 0.01; the quarter-scale macros put the
    // large elements μκ = κ/4 away from ∂Ω.
    let mesh = lshape_mesh(1, 1e-2, 1.0, 0.2, 2).unwrap();
    let report = check_conformity(&mesh);
    assert!(report.passed, "{:?}", report.violations);
    let kappa = mesh.params.kappa;
    assert_relative_eq!(kappa, 0.01, max_relative = 1e-14);
    assert_relative_eq!(report.large_to_boundary.unwrap(), kappa / 4.0, max_relative = 1e-12);

    // Oracle: distance from densely sampled large-element edges to the six
    // boundary segments.
    let segs: [(Point, Point); 6] = [
        ([0.0, 0.0], [1.0, 0.0]),
        ([1.0, 0.0], [1.0, 0.5]),
        ([1.0, 0.5], [0.5, 0.5]),
        ([0.5, 0.5], [0.5, 1.0]),
        ([0.5, 1.0], [0.0, 1.0]),
        ([0.0, 1.0], [0.0, 0.0]),
    ];
    let seg_dist = |p: Point, (a, b): (Point, Point)| {
        let d = [b[0] - a[0], b[1] - a[1]];
        let t = (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / (d[0] * d[0] + d[1] * d[1])).clamp(0.0, 1.0);
        (p[0] - a[0] - t * d[0]).hypot(p[1] - a[1] - t * d[1])
    };
    let mut best = f64::INFINITY;
    for k in 0..mesh.len() {
        if mesh.elements[k].tag != RegionTag::Large {
            continue;
        }
        for e in hplayer::geometry::LocalEdge::ALL {
            for i in 0..=200 {
                let x = mesh.map_point(k, e.point(i as f64 / 200.0));
                best = best.min(segs.iter().map(|&s| seg_dist(x, s)).fold(f64::INFINITY, f64::min));
            }
        }
    }
    assert_relative_eq!(best, kappa / 4.0, max_relative = 1e-12);
}

#[test]
fn lshape_area_is_conserved() {
    for (p, eps, layers) in [(1, 1e-2, 0), (3, 1e-4, 4), (7, 1e-8, 8), (2, 0.5, 3)] {
        let mesh = lshape_mesh(p, eps, 5.0, 0.2, layers).unwrap();
        assert!(check_conformity(&mesh).passed);
        assert_relative_eq!(mesh.area(), 0.75, max_relative = 1e-12);
    }
}

#[test]
fn capped_kappa_still_conforms() {
    let mesh = lshape_mesh(2, 0.5, 1.0, 0.2, 3).unwrap();
    assert_eq!(mesh.params.kappa, 0.5);
    assert!(check_conformity(&mesh).passed);
    assert_relative_eq!(mesh.area(), 0.75, max_relative = 1e-12);
}

#[test]
fn trivial_patches_leave_macros_unrefined() {
    let tri = build_lshape_macro();
    let params = MeshParams::new(1.0, 0.2, 1, 0.1, vec![0; 12]).unwrap();
    let pats: Vec<_> = (0..12).map(|_| build_pattern(PatternKind::Trivial, 0.1, 0.2, 0).unwrap()).collect();
    let mesh = Mesh::from_patterns(tri, &pats, params).unwrap();
    assert_eq!(mesh.len(), 12);
    assert!(check_conformity(&mesh).passed);
}

#[test]
fn inadmissible_assignment_is_rejected() {
    let tri = build_lshape_macro();
    let mut assignment = lshape_assignment();
    // Macro 2 touches ∂Ω along one edge only.
    assignment[2].pattern = PatternKind::Trivial;
    let params = MeshParams::new(1.0, 0.2, 1, 1e-2, layers_for(&assignment, 2)).unwrap();
    assert!(matches!(generate_mesh(&tri, &assignment, &params), Err(MeshError::Inadmissible { macro_id: 2, .. })));

    let mut assignment = lshape_assignment();
    assignment[0].pattern = PatternKind::BoundaryLayer;
    assert!(generate_mesh(&tri, &assignment, &params).is_err());
}

#[test]
fn mismatched_neighbouring_patches_are_reported() {
    let tri = MacroTriangulation::new(
        vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, 1.0]],
        vec![
            MacroElement { vertices: [0, 1, 4, 3], map: PatchMap::identity() },
            MacroElement {
                vertices: [1, 2, 5, 4],
                map: PatchMap::Affine { matrix: [[1.0, 0.0], [0.0, 1.0]], offset: [1.0, 0.0] },
            },
        ],
    )
    .unwrap();
    let params = MeshParams::new(1.0, 0.2, 1, 0.1, vec![0, 0]).unwrap();
    let a = build_pattern(PatternKind::BoundaryLayer, 0.1, 0.2, 0).unwrap();
    let b = build_pattern(PatternKind::BoundaryLayer, 0.2, 0.2, 0).unwrap();
    let good = Mesh::from_patterns(tri.clone(), &[a.clone(), a.clone()], params.clone()).unwrap();
    assert!(check_conformity(&good).passed);
    let bad = Mesh::from_patterns(tri, &[a, b], params).unwrap();
    let report = check_conformity(&bad);
    assert!(!report.passed);
    assert!(report.violations.iter().all(|v| matches!(v, Violation::UnmatchedEdge { .. })));
    // The offending edges lie on the shared macro edge x = 1.
    for v in &report.violations {
        if let Violation::UnmatchedEdge { from, to, .. } = v {
            assert!((from[0] - 1.0).abs() < 1e-15 && (to[0] - 1.0).abs() < 1e-15, "{v}");
        }
    }
}

#[test]
fn single_cell_mesh_passes() {
    let mesh = common::unit_square(PatternKind::Trivial, 0.1);
    assert!(check_conformity(&mesh).passed);
}

#[test]
fn too_many_layers_underflow() {
    assert!(build_pattern(PatternKind::TensorProduct, 0.1, 0.2, 500).is_err());
}

#[test]
fn reference_mesh_nests_in_the_study_mesh() {
    let coarse = lshape_mesh(3, 1e-4, 5.0, 0.2, 4).unwrap();
    let fine = coarse.refine_for_reference().unwrap();
    assert!(fine.len() > coarse.len());
    assert!(check_conformity(&fine).passed);
    for k in 0..fine.len() {
        let link = fine.elements[k].parent.as_ref().expect("every fine element has a parent");
        for (c, q) in link.quad.iter().enumerate() {
            assert!(q.iter().all(|&t| (-1e-14..=1.0 + 1e-14).contains(&t)));
            let a = fine.map_point(k, REF_CORNERS[c]);
            let b = coarse.map_point(link.element, *q);
            assert!((a[0] - b[0]).abs() < 1e-14 && (a[1] - b[1]).abs() < 1e-14);
        }
    }
    // Two more corner rings and a second anisotropic layer.
    let corner = |m: &Mesh| m.elements.iter().filter(|e| e.tag == RegionTag::CornerLayer).count();
    assert!(corner(&fine) >= corner(&coarse) + 6 * 8);
}

#[test]
fn dump_is_valid_json() {
    let mesh = lshape_mesh(2, 1e-3, 5.0, 0.2, 3).unwrap();
    let v: serde_json::Value = serde_json::from_str(&mesh.dump_json()).unwrap();
    assert_eq!(v["elements"].as_array().unwrap().len(), mesh.len());
    assert_eq!(v["conformity"]["passed"], true);
    assert_eq!(v["params"]["kappa"].as_f64().unwrap(), mesh.params.kappa);
    // Boundary vertices are exactly the mesh vertices on ∂Ω.
    for (i, p) in mesh.vertices.iter().enumerate() {
        assert_eq!(mesh.boundary_vertex[i], on_lshape_boundary(*p), "vertex {p:?}");
    }
}
