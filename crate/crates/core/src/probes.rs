//! Empirical checks of the polynomial inequalities behind the analysis:
//! Markov's inequality, the edge lifting on the reference triangle, the
//! anisotropic inverse estimates, and the balanced-norm bound for u_N.

use crate::analysis::{self, AnalysisError, ReferenceSolution};
use crate::basis::{gauss_rule, shape_1d};
use crate::exec::Exec;
use crate::geometry::Point;
use crate::space::FESpace;
use crate::system::ProblemData;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProbeError {
    #[error("invalid probe parameter: {0}")]
    InvalidParameter(String),
    #[error("edge data must vanish at both endpoints (f(0) = {f0:e}, f(1) = {f1:e})")]
    NonVanishingEdge { f0: f64, f1: f64 },
    #[error("∂yπ vanishes but π differs from its trace: numerator {0:e}")]
    InconsistentDegenerate(f64),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

/// One sweep of a probe: the largest observed ratio LHS/RHS.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub name: String,
    pub sweep: String,
    pub observed_max_ratio: f64,
    pub bound_form: String,
    pub seed: u64,
}

/// Polynomial in monomial form, ascending coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly1d {
    pub coeffs: Vec<f64>,
}

impl Poly1d {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Poly1d { coeffs }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.iter().rposition(|&c| c != 0.0).unwrap_or(0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Poly1d {
        Poly1d::new(self.coeffs.iter().enumerate().skip(1).map(|(k, &c)| k as f64 * c).collect())
    }

    pub fn scale(&self, s: f64) -> Poly1d {
        Poly1d::new(self.coeffs.iter().map(|c| s * c).collect())
    }

    pub fn add(&self, o: &Poly1d) -> Poly1d {
        let n = self.coeffs.len().max(o.coeffs.len());
        Poly1d::new(
            (0..n)
                .map(|k| self.coeffs.get(k).copied().unwrap_or(0.0) + o.coeffs.get(k).copied().unwrap_or(0.0))
                .collect(),
        )
    }

    pub fn mul(&self, o: &Poly1d) -> Poly1d {
        if self.coeffs.is_empty() || o.coeffs.is_empty() {
            return Poly1d::new(Vec::new());
        }
        let mut c = vec![0.0; self.coeffs.len() + o.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in o.coeffs.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        Poly1d::new(c)
    }

    /// (q, r) with f(x) = (1 − x)·q(x) + r, by synthetic division at x = 1.
    pub fn divide_one_minus_x(&self) -> (Poly1d, f64) {
        let n = self.coeffs.len();
        if n == 0 {
            return (Poly1d::new(Vec::new()), 0.0);
        }
        // f = (x − 1)s + f(1); q = −s.
        let mut s = vec![0.0; n.saturating_sub(1)];
        let mut carry = 0.0;
        for k in (1..n).rev() {
            carry += self.coeffs[k];
            s[k - 1] = carry;
        }
        let r = self.coeffs[0] + carry;
        (Poly1d::new(s.iter().map(|v| -v).collect()), r)
    }

    fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }
}

/// Shifted Legendre polynomials P_k(2x − 1), k = 0..=n, in monomial form.
fn shifted_legendre(n: usize) -> Vec<Poly1d> {
    let t = Poly1d::new(vec![-1.0, 2.0]);
    let mut out = vec![Poly1d::new(vec![1.0])];
    if n >= 1 {
        out.push(t.clone());
    }
    for k in 1..n {
        let kf = k as f64;
        let next = t.mul(&out[k]).scale((2.0 * kf + 1.0) / (kf + 1.0)).add(&out[k - 1].scale(-kf / (kf + 1.0)));
        out.push(next);
    }
    out
}

/// Σ c_k N_k in the 1D hierarchic basis (N_0 = 1−x, N_1 = x, integrated Legendre bubbles).
pub fn hierarchic_poly(coeffs: &[f64]) -> Poly1d {
    let p = coeffs.len().saturating_sub(1);
    let leg = shifted_legendre(p);
    let mut f = Poly1d::new(vec![0.0]);
    for (k, &c) in coeffs.iter().enumerate() {
        let basis = match k {
            0 => Poly1d::new(vec![1.0, -1.0]),
            1 => Poly1d::new(vec![0.0, 1.0]),
            _ => {
                let kf = k as f64;
                let s = ((2.0 * kf - 1.0) / 2.0).sqrt() / (2.0 * kf - 1.0);
                leg[k].add(&leg[k - 2].scale(-1.0)).scale(s)
            }
        };
        f = f.add(&basis.scale(c));
    }
    f
}

/// T_n(2x − 1) in monomial form.
pub fn chebyshev_01(n: usize) -> Poly1d {
    let t = Poly1d::new(vec![-1.0, 2.0]);
    let mut a = Poly1d::new(vec![1.0]);
    if n == 0 {
        return a;
    }
    let mut b = t.clone();
    for _ in 1..n {
        let c = t.mul(&b).scale(2.0).add(&a.scale(-1.0));
        a = b;
        b = c;
    }
    b
}

/// sup_{[a,b]} |f|: uniform sampling, then golden-section refinement around
/// every sampled local maximum.
pub fn sup_norm(f: impl Fn(f64) -> f64, a: f64, b: f64, samples: usize) -> f64 {
    let n = samples.max(8);
    let xs: Vec<f64> = (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect();
    let vals: Vec<f64> = xs.iter().map(|&x| f(x).abs()).collect();
    let mut best = vals.iter().fold(0.0f64, |m, &v| m.max(v));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for i in 1..n {
        if vals[i] >= vals[i - 1] && vals[i] >= vals[i + 1] {
            let (mut lo, mut hi) = (xs[i - 1], xs[i + 1]);
            let mut c = hi - g * (hi - lo);
            let mut d = lo + g * (hi - lo);
            let (mut fc, mut fd) = (f(c).abs(), f(d).abs());
            for _ in 0..200 {
                if hi - lo <= 1e-15 * (b - a) {
                    break;
                }
                if fc > fd {
                    hi = d;
                    d = c;
                    fd = fc;
                    c = hi - g * (hi - lo);
                    fc = f(c).abs();
                } else {
                    lo = c;
                    c = d;
                    fc = fd;
                    d = lo + g * (hi - lo);
                    fd = f(d).abs();
                }
            }
            best = best.max(fc).max(fd);
        }
    }
    best
}

fn sample_count(p: usize) -> usize {
    200 * (p + 1)
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

fn random_coeffs(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

/// ‖f′‖_∞ / (2p²‖f‖_∞) on (0,1).
pub fn markov_ratio_of(f: &Poly1d, p: usize) -> f64 {
    let n = sample_count(p);
    let sup = sup_norm(|x| f.eval(x), 0.0, 1.0, n);
    if sup == 0.0 {
        return 0.0;
    }
    let df = f.derivative();
    sup_norm(|x| df.eval(x), 0.0, 1.0, n) / (2.0 * (p * p) as f64 * sup)
}

/// Largest Markov ratio over random degree-p polynomials (hierarchic coefficients in [−1,1]).
pub fn markov_ratio(p: usize, trials: usize, seed: u64) -> Result<f64, ProbeError> {
    if p == 0 {
        return Err(ProbeError::InvalidParameter("markov_ratio needs p ≥ 1".into()));
    }
    let ratios = Exec::Sequential.map(trials, |t| {
        let f = hierarchic_poly(&random_coeffs(&mut trial_rng(seed, t), p + 1));
        markov_ratio_of(&f, p)
    });
    Ok(ratios.into_iter().fold(0.0, f64::max))
}

/// The lifting (x, y) ↦ f(x)(1 − x − y)/(1 − x) of edge data vanishing at 0 and 1.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeLift {
    /// f(x)/(1 − x), a polynomial.
    pub quotient: Poly1d,
}

impl EdgeLift {
    pub fn new(f: &Poly1d) -> Result<Self, ProbeError> {
        let tol = 1e-12 * f.max_abs_coeff().max(1.0);
        let (f0, f1) = (f.eval(0.0), f.eval(1.0));
        if f0.abs() > tol || f1.abs() > tol {
            return Err(ProbeError::NonVanishingEdge { f0, f1 });
        }
        Ok(EdgeLift { quotient: f.divide_one_minus_x().0 })
    }

    pub fn value(&self, x: Point) -> f64 {
        self.quotient.eval(x[0]) * (1.0 - x[0] - x[1])
    }

    pub fn gradient(&self, x: Point) -> [f64; 2] {
        let q = self.quotient.eval(x[0]);
        let dq = self.quotient.derivative().eval(x[0]);
        [dq * (1.0 - x[0] - x[1]) - q, -q]
    }
}

pub fn lift_edge_triangle(f: &Poly1d, points: &[Point]) -> Result<Vec<f64>, ProbeError> {
    let lift = EdgeLift::new(f)?;
    Ok(points.iter().map(|&x| lift.value(x)).collect())
}

/// Points (i/n, j/n) of the closed reference triangle.
pub fn triangle_grid(n: usize) -> Vec<Point> {
    let mut pts = Vec::new();
    for j in 0..=n {
        for i in 0..=n - j {
            pts.push([i as f64 / n as f64, j as f64 / n as f64]);
        }
    }
    pts
}

/// (sup|𝓛f|, sup|∇𝓛f|, sup|f|), the first two sampled on the triangle grid.
pub fn lift_sup_norms(f: &Poly1d, grid: usize) -> Result<(f64, f64, f64), ProbeError> {
    let lift = EdgeLift::new(f)?;
    let dq = lift.quotient.derivative();
    let (mut sl, mut sg) = (0.0f64, 0.0f64);
    for x in triangle_grid(grid) {
        let q = lift.quotient.eval(x[0]);
        let r = 1.0 - x[0] - x[1];
        sl = sl.max((q * r).abs());
        let g = [dq.eval(x[0]) * r - q, -q];
        sg = sg.max(g[0].hypot(g[1]));
    }
    let sf = sup_norm(|x| f.eval(x), 0.0, 1.0, sample_count(f.degree()));
    Ok((sl, sg, sf))
}

/// Random degree-p edge data vanishing at both endpoints (bubble coefficients in [−1,1]).
pub fn random_edge_poly(p: usize, rng: &mut impl Rng) -> Poly1d {
    let mut c = vec![0.0, 0.0];
    c.extend(random_coeffs(rng, p.saturating_sub(1)));
    hierarchic_poly(&c)
}

/// Largest observed (sup|𝓛f|/sup|f|, sup|∇𝓛f|/(p² sup|f|)) over random inputs.
pub fn lift_probe(p: usize, trials: usize, seed: u64) -> Result<(f64, f64), ProbeError> {
    if p < 2 {
        return Err(ProbeError::InvalidParameter("edge data vanishing at both ends needs p ≥ 2".into()));
    }
    let mut worst = (0.0f64, 0.0f64);
    for t in 0..trials {
        let f = random_edge_poly(p, &mut trial_rng(seed, t));
        let (sl, sg, sf) = lift_sup_norms(&f, 40 * p)?;
        worst.0 = worst.0.max(sl / sf);
        worst.1 = worst.1.max(sg / ((p * p) as f64 * sf));
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InverseDomain {
    /// S_h = (0,h_x) × (0,h_y), π ∈ Q_p.
    Rectangle,
    /// T_h = {0 < x < h_x, 0 < y < h_y(1 − x/h_x)}, π ∈ P_p.
    Triangle,
}

/// Terms of ‖π‖_∞ ≤ C p (h_y/h_x)^{1/2} ‖∂_yπ‖_{L²} + ‖π(·,0)‖_∞.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InverseTerms {
    pub sup: f64,
    pub trace_sup: f64,
    pub dy_l2: f64,
}

/// Polynomial on the scaled element given by coefficients in a product basis.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledPoly {
    pub domain: InverseDomain,
    pub p: usize,
    pub hx: f64,
    pub hy: f64,
    /// Rectangle: N_i(x/h_x)N_j(y/h_y), index i + (p+1)j. Triangle:
    /// L_i(x/h_x)L_j(y/h_y) (shifted Legendre) with i + j ≤ p, same indexing.
    pub coeffs: Vec<f64>,
}

impl ScaledPoly {
    fn basis_1d(&self, t: f64, v: &mut [f64], d: &mut [f64]) {
        match self.domain {
            InverseDomain::Rectangle => shape_1d(self.p, t, v, d),
            InverseDomain::Triangle => {
                let s = 2.0 * t - 1.0;
                v[0] = 1.0;
                d[0] = 0.0;
                if self.p >= 1 {
                    v[1] = s;
                    d[1] = 2.0;
                }
                for k in 1..self.p {
                    let kf = k as f64;
                    v[k + 1] = ((2.0 * kf + 1.0) * s * v[k] - kf * v[k - 1]) / (kf + 1.0);
                    // P'_{k+1} = P'_{k−1} + (2k+1) P_k, times dt/dx = 2.
                    d[k + 1] = d[k - 1] + 2.0 * (2.0 * kf + 1.0) * v[k];
                }
            }
        }
    }

    /// (π, ∂_yπ) at a physical point.
    pub fn eval(&self, x: f64, y: f64) -> (f64, f64) {
        let n = self.p + 1;
        let (mut vx, mut dx, mut vy, mut dy) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        self.basis_1d(x / self.hx, &mut vx, &mut dx);
        self.basis_1d(y / self.hy, &mut vy, &mut dy);
        let (mut v, mut g) = (0.0, 0.0);
        for j in 0..n {
            let row: f64 = (0..n).map(|i| self.coeffs[i + n * j] * vx[i]).sum();
            v += row * vy[j];
            g += row * dy[j] / self.hy;
        }
        (v, g)
    }

    pub fn scaled(&self, s: f64) -> ScaledPoly {
        ScaledPoly { coeffs: self.coeffs.iter().map(|c| s * c).collect(), ..self.clone() }
    }

    pub fn random(domain: InverseDomain, p: usize, hx: f64, hy: f64, rng: &mut impl Rng) -> ScaledPoly {
        let n = p + 1;
        let mut coeffs = random_coeffs(rng, n * n);
        if domain == InverseDomain::Triangle {
            for j in 0..n {
                for i in 0..n {
                    if i + j > p {
                        coeffs[i + n * j] = 0.0;
                    }
                }
            }
        }
        ScaledPoly { domain, p, hx, hy, coeffs }
    }

    pub fn terms(&self) -> InverseTerms {
        let m = 8 * (self.p + 2);
        let mut sup = 0.0f64;
        for j in 0..=m {
            let t = j as f64 / m as f64;
            for i in 0..=m {
                let s = i as f64 / m as f64;
                let (x, y) = match self.domain {
                    InverseDomain::Rectangle => (s * self.hx, t * self.hy),
                    // Collapsed grid covering the closed triangle.
                    InverseDomain::Triangle => (s * self.hx, t * self.hy * (1.0 - s)),
                };
                sup = sup.max(self.eval(x, y).0.abs());
            }
        }
        let trace_sup = sup_norm(|x| self.eval(x * self.hx, 0.0).0, 0.0, 1.0, sample_count(self.p));
        sup = sup.max(trace_sup);
        let rule = gauss_rule(self.p + 2).expect("positive order");
        let mut l2 = 0.0;
        for (a, &u) in rule.nodes.iter().enumerate() {
            for (b, &v) in rule.nodes.iter().enumerate() {
                let w = rule.weights[a] * rule.weights[b];
                let (x, y, det) = match self.domain {
                    InverseDomain::Rectangle => (u * self.hx, v * self.hy, self.hx * self.hy),
                    // Duffy map (u,v) ↦ (h_x u, h_y (1 − u) v).
                    InverseDomain::Triangle => (u * self.hx, v * self.hy * (1.0 - u), self.hx * self.hy * (1.0 - u)),
                };
                let g = self.eval(x, y).1;
                l2 += w * det * g * g;
            }
        }
        InverseTerms { sup, trace_sup, dy_l2: l2.sqrt() }
    }

    /// (‖π‖_∞ − ‖π(·,0)‖_∞)_+ / (p (h_y/h_x)^{1/2} ‖∂_yπ‖_{L²}).
    pub fn ratio(&self) -> Result<f64, ProbeError> {
        let t = self.terms();
        let num = (t.sup - t.trace_sup).max(0.0);
        let scale = self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        if t.dy_l2 <= 1e-14 * scale * (self.hx / self.hy).sqrt() {
            if num > 1e-12 * scale.max(t.sup) {
                return Err(ProbeError::InconsistentDegenerate(num));
            }
            return Ok(0.0);
        }
        Ok(num / (self.p as f64 * (self.hy / self.hx).sqrt() * t.dy_l2))
    }
}

/// Largest inverse-estimate ratio over random π on S_h and on T_h.
pub fn inverse_estimate_ratio(p: usize, hx: f64, hy: f64, trials: usize, seed: u64) -> Result<(f64, f64), ProbeError> {
    if p == 0 || !(hx > 0.0 && hx <= 1.0 && hy > 0.0 && hy <= 1.0) {
        return Err(ProbeError::InvalidParameter(format!("need p ≥ 1 and h ∈ (0,1], got p={p}, h=({hx},{hy})")));
    }
    let mut worst = (0.0f64, 0.0f64);
    for t in 0..trials {
        let mut rng = trial_rng(seed, t);
        worst.0 = worst.0.max(ScaledPoly::random(InverseDomain::Rectangle, p, hx, hy, &mut rng).ratio()?);
        worst.1 = worst.1.max(ScaledPoly::random(InverseDomain::Triangle, p, hx, hy, &mut rng).ratio()?);
    }
    Ok(worst)
}

/// Both sides of ε^{1/2}‖∇(u−u_N)‖ ≤ C[ε^{1/2}‖∇(u−Iu)‖ + ε^{−1/2}‖u−Iu‖_{L²(Ω\Ω₀)}]
/// with u replaced by the reference solution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lemma21 {
    pub lhs: f64,
    pub rhs: f64,
    /// None when the right-hand side vanishes.
    pub ratio: Option<f64>,
    /// Relative residual of the weighted L² orthogonality on Ω₀.
    pub orthogonality_residual: f64,
}

/// Iu is the weighted L² projection of u_ref on Ω₀, spliced into u_N.
pub fn lemma21_ratio(
    space: &FESpace,
    u_n: &[f64],
    reference: &ReferenceSolution,
    problem: &ProblemData,
    exec: Exec,
) -> Result<Lemma21, ProbeError> {
    let proj =
        analysis::weighted_l2_projection(space, &problem.reaction, analysis::ProjectionSource::Reference(reference))?;
    let iu = proj.splice(u_n);
    let parts = |c: &[f64]| {
        analysis::difference_parts(
            space,
            c,
            &reference.space,
            &reference.coeffs,
            reference.coarse_signature,
            problem,
            exec,
        )
    };
    let se = problem.eps.sqrt();
    let dn = parts(u_n)?;
    let di = parts(&iu)?;
    let lhs = se * dn.h1_sq.sqrt();
    let rhs = se * di.h1_sq.sqrt() + (di.l2_sq - di.l2_sq_large).max(0.0).sqrt() / se;
    let scale = lhs.max(rhs);
    let ratio = if rhs > 1e-300 && rhs > 1e-14 * scale { Some(lhs / rhs) } else { None };
    Ok(Lemma21 { lhs, rhs, ratio, orthogonality_residual: proj.residual })
}

pub const MARKOV_BOUND: &str = "|f'|_inf <= 2 p^2 |f|_inf on (0,1)";
pub const LIFT_BOUND: &str = "|L f|_inf <= |f|_inf; |grad L f|_inf <= C p^2 |f|_inf";
pub const INVERSE_BOUND: &str = "|pi|_inf <= C p (hy/hx)^(1/2) |d_y pi|_L2 + |pi(.,0)|_inf";
pub const LEMMA21_BOUND: &str =
    "eps^(1/2)|grad(u-u_N)| <= C [eps^(1/2)|grad(u-Iu)| + eps^(-1/2)|u-Iu|_L2(Omega\\Omega_0)]";

/// Markov, lifting and inverse-estimate sweeps (the sweeps that need no solve).
pub fn polynomial_probes(seed: u64) -> Result<Vec<ProbeResult>, ProbeError> {
    let mut out = Vec::new();
    for p in 1..=8 {
        out.push(ProbeResult {
            name: "markov_ratio".into(),
            sweep: format!("p={p} trials=200"),
            observed_max_ratio: markov_ratio(p, 200, seed)?,
            bound_form: MARKOV_BOUND.into(),
            seed,
        });
    }
    let (l, g) = lift_probe(6, 100, seed)?;
    for (name, v) in [("lift_edge_triangle_sup", l), ("lift_edge_triangle_grad", g)] {
        out.push(ProbeResult {
            name: name.into(),
            sweep: "p=6 trials=100".into(),
            observed_max_ratio: v,
            bound_form: LIFT_BOUND.into(),
            seed,
        });
    }
    let hs = [1.0, 1e-2, 1e-4];
    for p in 1..=8 {
        for &hx in &hs {
            for &hy in &hs {
                let (r, t) = inverse_estimate_ratio(p, hx, hy, 100, seed)?;
                for (name, v) in [("inverse_estimate_rectangle", r), ("inverse_estimate_triangle", t)] {
                    out.push(ProbeResult {
                        name: name.into(),
                        sweep: format!("p={p} hx={hx:e} hy={hy:e} trials=100"),
                        observed_max_ratio: v,
                        bound_form: INVERSE_BOUND.into(),
                        seed,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// The balanced-norm bound for every cell of a study configuration; a
/// vanishing right-hand side is reported with ratio 0 and marked degenerate.
pub fn lemma21_sweep(config: &crate::study::StudyConfig) -> Result<Vec<ProbeResult>, ProbeError> {
    let mut config = config.clone();
    config.reference = true;
    config.lemma21 = true;
    let output = crate::study::run_study(&config).map_err(|e| ProbeError::InvalidParameter(e.to_string()))?;
    let mut rows = Vec::new();
    for c in &output.cells {
        let sweep = format!("example={} p={} eps={:e}", config.example.name(), c.p, c.eps);
        let (sweep, ratio) = match &c.outcome {
            Ok(r) => match r.lemma21.and_then(|l| l.ratio) {
                Some(v) => (sweep, v),
                None => (format!("{sweep} degenerate"), 0.0),
            },
            Err(e) => (format!("{sweep} failed: {e}"), f64::NAN),
        };
        rows.push(ProbeResult { name: "lemma21_ratio".into(), sweep, observed_max_ratio: ratio, bound_form: LEMMA21_BOUND.into(), seed: 0 });
    }
    Ok(rows)
}

/// CSV with columns name, sweep, observed_max_ratio, bound_form, seed.
pub fn probes_csv(rows: &[ProbeResult]) -> String {
    let quote = |s: &str| format!("\"{}\"", s.replace('"', "\"\""));
    let mut out = String::from("name,sweep,observed_max_ratio,bound_form,seed\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.6e},{},{}\n",
            r.name,
            quote(&r.sweep),
            r.observed_max_ratio,
            quote(&r.bound_form),
            r.seed
        ));
    }
    out
}
