mod common;

use approx::assert_relative_eq;
use common::{gauss_2d, unit_square};
use hplayer::analysis::{
    build_reference, difference_parts, error_norms, large_elements, weighted_l2_projection, AnalysisError,
    DifferenceParts, ProjectionSource, ReferenceSolution,
};
use hplayer::geometry::{Point, REF_CORNERS};
use hplayer::mesh::{lshape_mesh, PatternKind};
use hplayer::space::{build_space, build_space_with, Constraint, FESpace};
use hplayer::system::{assemble, dot, AssemblyOptions, ProblemData, Scalar};
use hplayer::Exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

fn lshape_space(p: usize, eps: f64) -> FESpace {
    build_space(lshape_mesh(p, eps, 5.0, 0.2, 2).unwrap(), p).unwrap()
}

fn self_reference(space: &FESpace, coeffs: Vec<f64>) -> ReferenceSolution {
    ReferenceSolution { space: space.clone(), coeffs, coarse_signature: space.mesh.signature(), residual: 0.0 }
}

fn parts(space: &FESpace, v: &[f64], problem: &ProblemData) -> DifferenceParts {
    let zero = vec![0.0; space.n_dofs];
    difference_parts(space, v, space, &zero, space.mesh.signature(), problem, Exec::Sequential).unwrap()
}

/// Nodal p = 1 interpolant, found by locating each DOF's vertex.
fn interpolate_p1(space: &FESpace, f: impl Fn(Point) -> f64) -> Vec<f64> {
    let mut c = vec![0.0; space.n_dofs];
    for g in 0..space.n_dofs {
        let mut e = vec![0.0; space.n_dofs];
        e[g] = 1.0;
        'found: for k in 0..space.mesh.len() {
            for x in REF_CORNERS {
                if (space.evaluate(&e, k, x).unwrap().0 - 1.0).abs() < 1e-12 {
                    c[g] = f(space.mesh.map_point(k, x));
                    break 'found;
                }
            }
        }
    }
    c
}

#[test]
fn identical_functions_have_zero_error() {
    let space = lshape_space(3, 1e-3);
    let u = random_vec(space.n_dofs, 5);
    let problem = ProblemData::model(1e-3, Scalar::Constant(1.0));
    let r = error_norms(&space, &u, &self_reference(&space, u.clone()), &problem, Exec::Sequential).unwrap();
    for e in [r.l2_error, r.balanced_seminorm_error, r.energy_error, r.linf_error] {
        assert!(e <= 1e-13, "{r:?}");
    }
}

/// v = x + 2y against 0 on the unit square: ‖v‖² = 8/3, |v|²_{H¹} = 5, max = 3.
#[test]
fn closed_form_norms_of_a_linear_function() {
    let space = build_space_with(unit_square(PatternKind::Trivial, 0.1), 1, Constraint::Free).unwrap();
    let v = interpolate_p1(&space, |x| x[0] + 2.0 * x[1]);
    for eps in [1.0, 1e-2, 1e-6] {
        let problem = ProblemData::model(eps, Scalar::Constant(0.0));
        let r = error_norms(&space, &v, &self_reference(&space, vec![0.0; 4]), &problem, Exec::Sequential).unwrap();
        assert_relative_eq!(r.l2_error, (8.0f64 / 3.0).sqrt(), max_relative = 1e-14);
        assert_relative_eq!(r.balanced_seminorm_error, eps.sqrt() * 5f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(r.energy_error, (eps * eps * 5.0 + 8.0 / 3.0).sqrt(), max_relative = 1e-14);
        assert_relative_eq!(r.linf_error, 3.0, max_relative = 1e-14);
        assert_relative_eq!(r.balanced_norm(), r.l2_error + r.balanced_seminorm_error);
    }
}

#[test]
fn foreign_references_are_rejected() {
    let problem = ProblemData::model(1e-2, Scalar::Constant(1.0));
    let coarse = lshape_space(2, 1e-2);
    let other = lshape_mesh(2, 1e-3, 5.0, 0.2, 2).unwrap();
    let reference = build_reference(&other, &problem, 1, &AssemblyOptions::default()).unwrap();
    let u = vec![0.0; coarse.n_dofs];
    assert_eq!(error_norms(&coarse, &u, &reference, &problem, Exec::Sequential), Err(AnalysisError::NotNested));
}

#[test]
fn reference_solution_properties() {
    let mesh = lshape_mesh(2, 1e-2, 5.0, 0.2, 3).unwrap();
    let zero = build_reference(&mesh, &ProblemData::model(1e-2, Scalar::Constant(0.0)), 2, &AssemblyOptions::default())
        .unwrap();
    assert_eq!(zero.p_ref(), 4);
    assert!(zero.mesh().len() > mesh.len());
    assert!(zero.coeffs.iter().all(|&c| c == 0.0));
    assert_eq!(zero.coarse_signature, mesh.signature());
    let one = build_reference(&mesh, &ProblemData::model(1e-2, Scalar::Constant(1.0)), 2, &AssemblyOptions::default())
        .unwrap();
    assert!(one.residual <= 1e-12);
}

#[test]
fn error_against_reference_shrinks_with_degree() {
    let eps = 1e-2;
    let problem = ProblemData::model(eps, Scalar::Constant(1.0));
    let mut last = f64::INFINITY;
    for p in 1..=3 {
        let mesh = lshape_mesh(p, eps, 5.0, 0.2, p + 1).unwrap();
        let space = build_space(mesh.clone(), p).unwrap();
        let sys = assemble(&space, &problem).unwrap();
        let u = hplayer::system::solve(&sys, 1e-12).unwrap().coeffs;
        let reference = build_reference(&mesh, &problem, 3, &AssemblyOptions::default()).unwrap();
        let r = error_norms(&space, &u, &reference, &problem, Exec::Sequential).unwrap();
        assert!(r.balanced_norm() < last);
        last = r.balanced_norm();
    }
}

#[test]
fn projection_reproduces_constants_and_discrete_functions() {
    let space = lshape_space(3, 1e-2);
    let large = large_elements(&space.mesh);
    assert!(!large.is_empty());
    let weight = Scalar::field(|x| 1.0 + x[0]);
    let proj = weighted_l2_projection(&space, &weight, ProjectionSource::Analytic(&|_| 2.5)).unwrap();
    let u = proj.splice(&vec![0.0; space.n_dofs]);
    let v = random_vec(space.n_dofs, 3);
    let pv = weighted_l2_projection(&space, &weight, ProjectionSource::Discrete(&v)).unwrap();
    let w = pv.splice(&vec![0.0; space.n_dofs]);
    for &k in &large {
        for (x, _) in gauss_2d(4) {
            assert!((space.evaluate(&u, k, x).unwrap().0 - 2.5).abs() <= 1e-12);
            let (a, b) = (space.evaluate(&w, k, x).unwrap().0, space.evaluate(&v, k, x).unwrap().0);
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn projection_is_idempotent() {
    let space = lshape_space(2, 1e-2);
    let weight = Scalar::Constant(1.0);
    let once = weighted_l2_projection(&space, &weight, ProjectionSource::Analytic(&|x| x[0].exp())).unwrap();
    let u = once.splice(&vec![0.0; space.n_dofs]);
    let twice = weighted_l2_projection(&space, &weight, ProjectionSource::Discrete(&u)).unwrap();
    assert_eq!(once.dofs, twice.dofs);
    let scale = once.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    for (a, b) in once.coeffs.iter().zip(&twice.coeffs) {
        assert!((a - b).abs() <= 1e-13 * scale, "{a} vs {b}");
    }
}

/// ∫_{Ω₀} c (e^x − Πu) φ_i for every basis function meeting Ω₀, by direct quadrature.
#[test]
fn projection_of_exp_is_orthogonal_on_large_elements() {
    let space = lshape_space(2, 1e-2);
    let c = |x: Point| 2.0 + x[1];
    let weight = Scalar::field(c);
    let proj = weighted_l2_projection(&space, &weight, ProjectionSource::Analytic(&|x| x[0].exp())).unwrap();
    assert!(proj.residual <= 1e-10);
    let pu = proj.splice(&vec![0.0; space.n_dofs]);
    let large = large_elements(&space.mesh);
    let rule = gauss_2d(10);
    let mut residual = Vec::new();
    let mut load = Vec::new();
    for &g in &proj.dofs {
        let mut e = vec![0.0; space.n_dofs];
        e[g] = 1.0;
        let (mut r, mut b) = (0.0, 0.0);
        for &k in &large {
            for &(x, w) in &rule {
                let phi = space.evaluate(&e, k, x).unwrap().0;
                if phi == 0.0 {
                    continue;
                }
                let y = space.mesh.map_point(k, x);
                let dx = w * space.mesh.jacobian(k, x).unwrap().det * c(y) * phi;
                r += dx * (y[0].exp() - space.evaluate(&pu, k, x).unwrap().0);
                b += dx * y[0].exp();
            }
        }
        residual.push(r);
        load.push(b);
    }
    let nr = residual.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = load.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(nr <= 1e-10 * nb, "{nr} vs {nb}");
}

#[test]
fn empty_large_region_is_rejected() {
    let mut m = unit_square(PatternKind::Trivial, 0.1);
    m.elements[0].tag = hplayer::mesh::RegionTag::Aniso;
    let aniso_only = build_space(m, 2).unwrap();
    assert!(matches!(
        weighted_l2_projection(&aniso_only, &Scalar::Constant(1.0), ProjectionSource::Analytic(&|_| 1.0)),
        Err(AnalysisError::EmptyRegion)
    ));
}

#[test]
fn norms_satisfy_triangle_inequality_and_homogeneity() {
    let eps = 1e-3;
    let space = lshape_space(3, eps);
    let problem = ProblemData::model(eps, Scalar::field(|x| 1.0 + x[0] * x[0]));
    for seed in 0..4 {
        let (v, w) = (random_vec(space.n_dofs, seed), random_vec(space.n_dofs, seed + 100));
        let sum: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a + b).collect();
        let scaled: Vec<f64> = v.iter().map(|a| -2.5 * a).collect();
        let (pv, pw, ps, pk) = (parts(&space, &v, &problem), parts(&space, &w, &problem), parts(&space, &sum, &problem), parts(&space, &scaled, &problem));
        let norms = |d: &DifferenceParts| [d.l2_sq.sqrt(), d.h1_sq.sqrt(), d.energy_sq.sqrt(), d.linf];
        let (nv, nw, ns, nk) = (norms(&pv), norms(&pw), norms(&ps), norms(&pk));
        for i in 0..4 {
            assert!(ns[i] <= nv[i] + nw[i] + 1e-12 * (nv[i] + nw[i]));
            assert_relative_eq!(nk[i], 2.5 * nv[i], max_relative = 1e-12);
        }
    }
}

#[test]
fn quadrature_energy_matches_the_assembled_form() {
    let eps = 1e-2;
    let space = lshape_space(3, eps);
    let problem = ProblemData::model(eps, Scalar::Constant(1.0));
    let sys = assemble(&space, &problem).unwrap();
    let v = random_vec(space.n_dofs, 42);
    let a_vv = dot(&v, &sys.matrix.mul_vec(&v));
    let d = parts(&space, &v, &problem);
    assert_relative_eq!(d.energy_sq, a_vv, max_relative = 1e-10);
    assert_relative_eq!(d.energy_sq, eps * eps * d.h1_sq + d.l2_sq, max_relative = 1e-12);
    // At ε < 1 the balanced seminorm dominates the energy seminorm.
    assert!(eps.sqrt() * d.h1_sq.sqrt() > eps * d.h1_sq.sqrt());
}

#[test]
fn sequential_and_parallel_error_integration_agree() {
    let space = lshape_space(3, 1e-3);
    let problem = ProblemData::model(1e-3, Scalar::Constant(1.0));
    let v = random_vec(space.n_dofs, 8);
    let r = self_reference(&space, vec![0.0; space.n_dofs]);
    let a = error_norms(&space, &v, &r, &problem, Exec::Sequential).unwrap();
    let b = error_norms(&space, &v, &r, &problem, Exec::Parallel).unwrap();
    assert_eq!((a.l2_error, a.balanced_seminorm_error, a.linf_error), (b.l2_error, b.balanced_seminorm_error, b.linf_error));
}
