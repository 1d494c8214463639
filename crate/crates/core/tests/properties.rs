
use hplayer::basis::gauss_rule;
use hplayer::mesh::{build_pattern, compute_kappa, lshape_mesh, PatternKind, RegionTag};
use hplayer::probes::{markov_ratio_of, Poly1d};
use hplayer::space::build_space;
use proptest::prelude::*;

fn shoelace(q: &[[f64; 2]; 4]) -> f64 {
    0.5 * (0..4).map(|i| q[i][0] * q[(i + 1) % 4][1] - q[(i + 1) % 4][0] * q[i][1]).sum::<f64>()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gauss_integrates_random_polynomials(n in 1usize..=12, coeffs in prop::collection::vec(-1.0f64..1.0, 1..24)) {
        let deg = (coeffs.len() - 1).min(2 * n - 1);
        let c = &coeffs[..=deg];
        let exact: f64 = c.iter().enumerate().map(|(k, a)| a / (k as f64 + 1.0)).sum();
        let got = gauss_rule(n).unwrap().integrate(|x| c.iter().rev().fold(0.0, |acc, a| acc * x + a));
        let scale: f64 = c.iter().map(|a| a.abs()).sum::<f64>().max(1e-300);
        prop_assert!((got - exact).abs() <= 1e-13 * scale);
    }

    #[test]
    fn kappa_is_capped_product(lambda in 0.01f64..10.0, p in 1usize..12, eps in 1e-10f64..1.0) {
        let k = compute_kappa(lambda, p, eps).unwrap();
        prop_assert_eq!(k, (lambda * p as f64 * eps).min(0.5));
    }

    #[test]
    fn corner_patterns_tile_the_square(
        kind in prop::sample::select(vec![PatternKind::TensorProduct, PatternKind::Mixed, PatternKind::Geometric]),
        kappa in 1e-8f64..=0.5,
        sigma in 0.05f64..0.49,
        layers in 0usize..=10,
    ) {
        let p = build_pattern(kind, kappa, sigma, layers).unwrap();
        prop_assert_eq!(p.cells.len(), 3 * layers + 4);
        let areas: Vec<f64> = (0..p.cells.len()).map(|c| shoelace(&p.quad(c))).collect();
        prop_assert!(areas.iter().all(|&a| a > 0.0));
        prop_assert!((areas.iter().sum::<f64>() - 1.0).abs() <= 1e-13);
        let corner: f64 = (0..p.cells.len()).filter(|&c| p.cells[c].tag == RegionTag::CornerLayer).map(|c| areas[c]).sum();
        prop_assert!((corner - kappa * kappa).abs() <= 1e-12 * kappa * kappa);
    }

    #[test]
    fn polynomial_division_identity(coeffs in prop::collection::vec(-5.0f64..5.0, 1..12), x in 0.0f64..1.0) {
        let f = Poly1d::new(coeffs);
        let (q, r) = f.divide_one_minus_x();
        prop_assert!(((1.0 - x) * q.eval(x) + r - f.eval(x)).abs() <= 1e-11);
        prop_assert!((r - f.eval(1.0)).abs() <= 1e-11);
    }

    #[test]
    fn markov_bound_holds_for_random_polynomials(coeffs in prop::collection::vec(-1.0f64..1.0, 2..9)) {
        let p = coeffs.len() - 1;
        prop_assert!(markov_ratio_of(&Poly1d::new(coeffs), p) <= 1.0 + 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn lshape_meshes_conform_with_exact_area(p in 1usize..=7, e in 2i32..=8, layers in 0usize..=8, lambda in 0.5f64..6.0) {
        let mesh = lshape_mesh(p, 10f64.powi(-e), lambda, 0.2, layers).unwrap();
        prop_assert!(mesh.violations().is_empty());
        prop_assert!((mesh.area() - 0.75).abs() <= 1e-12 * 0.75);
    }

    #[test]
    fn evaluation_is_linear(seed in any::<u64>(), a in -3.0f64..3.0) {
        use rand::{Rng, SeedableRng};
        let space = build_space(lshape_mesh(2, 1e-3, 5.0, 0.2, 2).unwrap(), 2).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let u: Vec<f64> = (0..space.n_dofs).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = u.iter().map(|x| a * x).collect();
        let k = rng.random_range(0..space.mesh.len());
        let x = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
        let (fu, _) = space.evaluate(&u, k, x).unwrap();
        let (fv, _) = space.evaluate(&v, k, x).unwrap();
        prop_assert!((fv - a * fu).abs() <= 1e-12 * (1.0 + fu.abs()));
    }
}
