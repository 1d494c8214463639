//! Integrated-Legendre shape functions on (0,1), their tensor products on the
//! reference square, and Gauss–Legendre quadrature.

use crate::geometry::Point;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BasisError {
    #[error("quadrature rule needs at least one node")]
    EmptyRule,
    #[error("polynomial degree must be at least 1, got {0}")]
    InvalidDegree(usize),
}

/// Gauss–Legendre rule mapped to (0,1). Weights sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Legendre polynomial P_n and its derivative at t ∈ [−1,1].
fn legendre(n: usize, t: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, t);
    for k in 1..n {
        let k = k as f64;
        let p2 = ((2.0 * k + 1.0) * t * p1 - k * p0) / (k + 1.0);
        p0 = p1;
        p1 = p2;
    }
    // P_n' from the standard identity; guarded at the endpoints.
    let dp = if (1.0 - t * t).abs() < 1e-300 {
        let s = if t > 0.0 { 1.0 } else { (-1.0f64).powi(n as i32 + 1) };
        s * (n * (n + 1)) as f64 / 2.0
    } else {
        n as f64 * (p0 - t * p1) / (1.0 - t * t)
    };
    (p1, dp)
}

pub fn gauss_rule(n: usize) -> Result<QuadratureRule, BasisError> {
    if n == 0 {
        return Err(BasisError::EmptyRule);
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, t);
            let dt = p / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, t);
        let w = 2.0 / ((1.0 - t * t) * dp * dp);
        // Symmetric pair, stored in ascending order on (0,1).
        nodes[i] = 0.5 * (1.0 - t);
        nodes[n - 1 - i] = 0.5 * (1.0 + t);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.5;
    }
    Ok(QuadratureRule { nodes, weights })
}

/// Values and first derivatives of φ_0..φ_p at one point of [0,1].
///
/// φ_0 = 1−x, φ_1 = x, and for k ≥ 2 the integrated Legendre bubble
/// φ_k(x) = √((2k−1)/2)·(P_k(t) − P_{k−2}(t))/(2k−1), t = 2x−1, so that
/// φ_k(1−x) = (−1)^k φ_k(x).
pub fn shape_1d(p: usize, x: f64, values: &mut [f64], derivs: &mut [f64]) {
    debug_assert!(values.len() > p && derivs.len() > p);
    values[0] = 1.0 - x;
    derivs[0] = -1.0;
    if p == 0 {
        return;
    }
    values[1] = x;
    derivs[1] = 1.0;
    if p == 1 {
        return;
    }
    let t = 2.0 * x - 1.0;
    // Legendre values P_0..P_p by recurrence.
    let mut leg = [0.0f64; 64];
    let mut legv;
    let leg_slice: &mut [f64] = if p < 64 {
        &mut leg[..=p]
    } else {
        legv = vec![0.0; p + 1];
        &mut legv[..]
    };
    leg_slice[0] = 1.0;
    leg_slice[1] = t;
    for k in 1..p {
        let kf = k as f64;
        leg_slice[k + 1] = ((2.0 * kf + 1.0) * t * leg_slice[k] - kf * leg_slice[k - 1]) / (kf + 1.0);
    }
    for k in 2..=p {
        let kf = k as f64;
        let c = ((2.0 * kf - 1.0) / 2.0).sqrt();
        values[k] = c * (leg_slice[k] - leg_slice[k - 2]) / (2.0 * kf - 1.0);
        derivs[k] = 2.0 * c * leg_slice[k - 1];
    }
}

/// Evaluation tables of the 1D basis at a list of points.
#[derive(Clone, Debug, PartialEq)]
pub struct Basis1D {
    pub p: usize,
    /// `values[k][q]` = φ_k(x_q).
    pub values: Vec<Vec<f64>>,
    pub derivs: Vec<Vec<f64>>,
}

pub fn shape_values_1d(p: usize, points: &[f64]) -> Result<Basis1D, BasisError> {
    if p == 0 {
        return Err(BasisError::InvalidDegree(p));
    }
    let mut values = vec![vec![0.0; points.len()]; p + 1];
    let mut derivs = vec![vec![0.0; points.len()]; p + 1];
    let mut v = vec![0.0; p + 1];
    let mut d = vec![0.0; p + 1];
    for (q, &x) in points.iter().enumerate() {
        shape_1d(p, x, &mut v, &mut d);
        for k in 0..=p {
            values[k][q] = v[k];
            derivs[k][q] = d[k];
        }
    }
    Ok(Basis1D { p, values, derivs })
}

/// Local index of the tensor function φ_i(ξ)φ_j(η).
#[inline]
pub fn tensor_index(p: usize, i: usize, j: usize) -> usize {
    i + (p + 1) * j
}

/// Values and reference gradients of the (p+1)² tensor functions at x̂.
pub fn tensor_shape_eval(p: usize, x: Point) -> (Vec<f64>, Vec<[f64; 2]>) {
    let n = p + 1;
    let (mut vx, mut dx, mut vy, mut dy) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    shape_1d(p, x[0], &mut vx, &mut dx);
    shape_1d(p, x[1], &mut vy, &mut dy);
    let mut values = vec![0.0; n * n];
    let mut grads = vec![[0.0; 2]; n * n];
    for j in 0..n {
        for i in 0..n {
            let k = tensor_index(p, i, j);
            values[k] = vx[i] * vy[j];
            grads[k] = [dx[i] * vy[j], vx[i] * dy[j]];
        }
    }
    (values, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn midpoint_and_two_point_rules() {
        let r = gauss_rule(1).unwrap();
        assert_eq!(r.nodes, vec![0.5]);
        assert_relative_eq!(r.weights[0], 1.0, epsilon = 1e-15);
        let r = gauss_rule(2).unwrap();
        let h = 0.5 / 3f64.sqrt();
        assert_relative_eq!(r.nodes[0], 0.5 - h, epsilon = 1e-15);
        assert_relative_eq!(r.nodes[1], 0.5 + h, epsilon = 1e-15);
        assert_relative_eq!(r.weights[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(r.integrate(|x| x.powi(3)), 0.25, epsilon = 1e-15);
        assert_eq!(gauss_rule(0), Err(BasisError::EmptyRule));
    }

    #[test]
    fn monomial_exactness() {
        for n in 1..=12 {
            let r = gauss_rule(n).unwrap();
            assert_relative_eq!(r.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
            for k in 0..2 * n {
                let exact = 1.0 / (k as f64 + 1.0);
                let got = r.integrate(|x| x.powi(k as i32));
                assert!(((got - exact) / exact).abs() <= 1e-13, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn vertex_and_bubble_structure() {
        let b = shape_values_1d(1, &[0.0]).unwrap();
        assert_eq!((b.values[0][0], b.values[1][0]), (1.0, 0.0));
        let b = shape_values_1d(3, &[0.0, 1.0]).unwrap();
        for k in 2..=3 {
            assert!(b.values[k][0].abs() < 1e-15 && b.values[k][1].abs() < 1e-15);
        }
        assert_eq!(b.values[0][1], 0.0);
        assert_eq!(b.values[1][1], 1.0);
        assert_eq!(shape_values_1d(0, &[0.5]), Err(BasisError::InvalidDegree(0)));
    }

    #[test]
    fn reflection_parity() {
        let p = 9;
        let (mut a, mut da, mut b, mut db) = (vec![0.0; 10], vec![0.0; 10], vec![0.0; 10], vec![0.0; 10]);
        for &x in &[0.1, 0.37, 0.5, 0.81] {
            shape_1d(p, x, &mut a, &mut da);
            shape_1d(p, 1.0 - x, &mut b, &mut db);
            for k in 2..=p {
                let s = if k % 2 == 0 { 1.0 } else { -1.0 };
                assert_relative_eq!(b[k], s * a[k], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn tensor_examples() {
        let (v, _) = tensor_shape_eval(1, [0.0, 0.0]);
        assert_eq!(v, vec![1.0, 0.0, 0.0, 0.0]);
        let (v, g) = tensor_shape_eval(1, [0.5, 0.5]);
        assert_relative_eq!(v.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        let k = tensor_index(1, 1, 1);
        assert_relative_eq!(g[k][0], 0.5);
        assert_relative_eq!(g[k][1], 0.5);
    }
}
