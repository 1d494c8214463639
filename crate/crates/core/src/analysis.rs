//! Error functionals against a nested reference solution, and the weighted
//! L² projection onto the large-element region Ω₀.

use crate::basis::gauss_rule;
use crate::exec::Exec;
use crate::geometry::{bilinear_point, Point};
use crate::mesh::{Mesh, MeshError, RegionTag};
use crate::space::{build_space, eval_local, FESpace, SpaceError};
use crate::system::{self, AssemblyOptions, BlockCholesky, CsrMatrix, ProblemData, Scalar, SystemError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("meshes are not nested: the fine mesh was not refined from the coarse one")]
    NotNested,
    #[error("the region of large elements is empty")]
    EmptyRegion,
    #[error("coefficient vector has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    System(#[from] SystemError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub p: usize,
    pub eps: f64,
    pub n_dofs: usize,
    pub l2_error: f64,
    /// √ε · |u_N − u_ref|_{H¹}.
    pub balanced_seminorm_error: f64,
    pub energy_error: f64,
    pub linf_error: f64,
    pub wall_time: f64,
}

impl ErrorReport {
    /// ‖·‖_{√ε} = √ε|·|_{H¹} + ‖·‖_{L²}.
    pub fn balanced_norm(&self) -> f64 {
        self.balanced_seminorm_error + self.l2_error
    }
}

/// Discrete solution on a refinement of a study mesh.
#[derive(Clone, Debug)]
pub struct ReferenceSolution {
    pub space: FESpace,
    pub coeffs: Vec<f64>,
    /// Signature of the mesh this one was refined from.
    pub coarse_signature: u64,
    pub residual: f64,
}

impl ReferenceSolution {
    pub fn p_ref(&self) -> usize {
        self.space.p
    }

    pub fn mesh(&self) -> &Mesh {
        &self.space.mesh
    }
}

/// Solves on the refined mesh at degree 2·p_max.
pub fn build_reference(
    coarse: &Mesh,
    problem: &ProblemData,
    p_max: usize,
    opts: &AssemblyOptions,
) -> Result<ReferenceSolution, AnalysisError> {
    let fine = coarse.refine_for_reference()?;
    let space = build_space(fine, 2 * p_max)?;
    let sys = system::assemble_with(&space, problem, opts)?;
    let sol = system::solve(&sys, 1e-12)?;
    Ok(ReferenceSolution { space, coeffs: sol.coeffs, coarse_signature: coarse.signature(), residual: sol.residual })
}

/// Squared integrals of a difference e = u_fine − u_coarse, plus its sampled maximum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DifferenceParts {
    pub l2_sq: f64,
    pub h1_sq: f64,
    pub energy_sq: f64,
    pub linf: f64,
    /// Contributions from fine elements inside coarse large elements.
    pub l2_sq_large: f64,
    pub h1_sq_large: f64,
}

impl DifferenceParts {
    fn add(&mut self, o: &DifferenceParts) {
        self.l2_sq += o.l2_sq;
        self.h1_sq += o.h1_sq;
        self.energy_sq += o.energy_sq;
        self.linf = self.linf.max(o.linf);
        self.l2_sq_large += o.l2_sq_large;
        self.h1_sq_large += o.h1_sq_large;
    }
}

fn physical_gradient(inv: &[[f64; 2]; 2], g: [f64; 2]) -> [f64; 2] {
    [inv[0][0] * g[0] + inv[1][0] * g[1], inv[0][1] * g[0] + inv[1][1] * g[1]]
}

/// For every fine element: its coarse element and the coarse reference
/// coordinates of its corners.
fn fine_to_coarse(coarse: &Mesh, fine: &Mesh, coarse_signature: u64) -> Result<Vec<(usize, [Point; 4])>, AnalysisError> {
    let unit = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    let sig = coarse.signature();
    if fine.signature() == sig {
        return Ok((0..fine.len()).map(|k| (k, unit)).collect());
    }
    if coarse_signature != sig {
        return Err(AnalysisError::NotNested);
    }
    fine.elements
        .iter()
        .map(|e| match &e.parent {
            Some(l) if l.element < coarse.len() => Ok((l.element, l.quad)),
            _ => Err(AnalysisError::NotNested),
        })
        .collect()
}

/// Integrates u_fine − u_coarse over the fine mesh with (p_max + 2)² Gauss
/// points per element; the maximum is sampled on a uniform grid of the same size.
pub fn difference_parts(
    coarse: &FESpace,
    coarse_coeffs: &[f64],
    fine: &FESpace,
    fine_coeffs: &[f64],
    coarse_signature: u64,
    problem: &ProblemData,
    exec: Exec,
) -> Result<DifferenceParts, AnalysisError> {
    for (s, c) in [(coarse, coarse_coeffs), (fine, fine_coeffs)] {
        if c.len() != s.n_dofs {
            return Err(AnalysisError::LengthMismatch { expected: s.n_dofs, got: c.len() });
        }
    }
    let links = fine_to_coarse(&coarse.mesh, &fine.mesh, coarse_signature)?;
    let n = fine.p.max(coarse.p) + 2;
    let rule = gauss_rule(n).map_err(SystemError::from)?;
    let eps2 = problem.eps * problem.eps;
    let grid: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();

    let per_element = |k: usize| -> Result<DifferenceParts, AnalysisError> {
        let (parent, quad) = links[k];
        let mut lf = vec![0.0; fine.local_dofs()];
        let mut lc = vec![0.0; coarse.local_dofs()];
        fine.gather(fine_coeffs, k, &mut lf);
        coarse.gather(coarse_coeffs, parent, &mut lc);
        let diff = |x: Point| -> Result<(f64, [f64; 2], Point, f64), AnalysisError> {
            let (vf, gf) = eval_local(fine.p, &lf, x);
            let jf = fine.mesh.jacobian(k, x).map_err(SpaceError::from)?;
            let gf = physical_gradient(&jf.inverse(), gf);
            let y = bilinear_point(&quad, x);
            let (vc, gc) = eval_local(coarse.p, &lc, y);
            let jc = coarse.mesh.jacobian(parent, y).map_err(SpaceError::from)?;
            let gc = physical_gradient(&jc.inverse(), gc);
            Ok((vf - vc, [gf[0] - gc[0], gf[1] - gc[1]], fine.mesh.map_point(k, x), jf.det))
        };
        let mut out = DifferenceParts::default();
        for b in 0..n {
            for a in 0..n {
                let x = [rule.nodes[a], rule.nodes[b]];
                let (e, g, phys, det) = diff(x)?;
                let w = rule.weights[a] * rule.weights[b] * det;
                let am = problem.diffusion.eval(phys);
                let agg = g[0] * (am[0][0] * g[0] + am[0][1] * g[1]) + g[1] * (am[1][0] * g[0] + am[1][1] * g[1]);
                out.l2_sq += w * e * e;
                out.h1_sq += w * (g[0] * g[0] + g[1] * g[1]);
                out.energy_sq += w * (eps2 * agg + problem.reaction.eval(phys) * e * e);
            }
        }
        for &yb in &grid {
            for &xa in &grid {
                let (vf, _) = eval_local(fine.p, &lf, [xa, yb]);
                let (vc, _) = eval_local(coarse.p, &lc, bilinear_point(&quad, [xa, yb]));
                out.linf = out.linf.max((vf - vc).abs());
            }
        }
        if coarse.mesh.elements[parent].tag == RegionTag::Large {
            out.l2_sq_large = out.l2_sq;
            out.h1_sq_large = out.h1_sq;
        }
        Ok(out)
    };

    let parts = exec.map(fine.mesh.len(), per_element);
    let mut total = DifferenceParts::default();
    for p in parts {
        total.add(&p?);
    }
    Ok(total)
}

pub fn error_norms(
    space: &FESpace,
    coeffs: &[f64],
    reference: &ReferenceSolution,
    problem: &ProblemData,
    exec: Exec,
) -> Result<ErrorReport, AnalysisError> {
    let d = difference_parts(
        space,
        coeffs,
        &reference.space,
        &reference.coeffs,
        reference.coarse_signature,
        problem,
        exec,
    )?;
    Ok(ErrorReport {
        p: space.p,
        eps: problem.eps,
        n_dofs: space.n_dofs,
        l2_error: d.l2_sq.sqrt(),
        balanced_seminorm_error: problem.eps.sqrt() * d.h1_sq.sqrt(),
        energy_error: d.energy_sq.sqrt(),
        linf_error: d.linf,
        wall_time: 0.0,
    })
}

/// Function to be projected.
#[derive(Clone, Copy)]
pub enum ProjectionSource<'a> {
    Analytic(&'a (dyn Fn(Point) -> f64 + Sync)),
    /// Coefficients in the projecting space itself.
    Discrete(&'a [f64]),
    Reference(&'a ReferenceSolution),
}

/// Π u on Ω₀, as values for the DOFs touching large elements.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    /// Global free DOF indices, ascending.
    pub dofs: Vec<usize>,
    pub coeffs: Vec<f64>,
    /// ‖Mx − b‖/‖b‖ of the orthogonality system.
    pub residual: f64,
}

impl Projection {
    /// Global coefficients equal to `base` except on the projected DOFs.
    pub fn splice(&self, base: &[f64]) -> Vec<f64> {
        let mut out = base.to_vec();
        for (&g, &c) in self.dofs.iter().zip(&self.coeffs) {
            out[g] = c;
        }
        out
    }
}

pub fn large_elements(mesh: &Mesh) -> Vec<usize> {
    (0..mesh.len()).filter(|&k| mesh.elements[k].tag == RegionTag::Large).collect()
}

/// Weighted L² projection: ∫_{Ω₀} c (u − Πu) v = 0 for all v ∈ V_N|_{Ω₀}.
pub fn weighted_l2_projection(
    space: &FESpace,
    weight: &Scalar,
    source: ProjectionSource<'_>,
) -> Result<Projection, AnalysisError> {
    let mesh = &space.mesh;
    let large = large_elements(mesh);
    if large.is_empty() {
        return Err(AnalysisError::EmptyRegion);
    }
    let mut dofs: Vec<usize> = large
        .iter()
        .flat_map(|&k| space.element_dofs(k).iter().copied().filter(|&g| space.is_free(g)))
        .collect();
    dofs.sort_unstable();
    dofs.dedup();
    if dofs.is_empty() {
        return Err(AnalysisError::EmptyRegion);
    }
    let mut local_of = vec![usize::MAX; space.n_dofs];
    for (i, &g) in dofs.iter().enumerate() {
        local_of[g] = i;
    }
    let m = dofs.len();
    let nl = space.local_dofs();
    let p = space.p;
    let mut dense = vec![vec![0.0; m]; m];
    let mut rhs = vec![0.0; m];

    let rule = gauss_rule(p + 2).map_err(SystemError::from)?;
    let mut shapes = vec![0.0; nl];
    let tensor = |x: Point, out: &mut [f64]| {
        let (v, _) = crate::basis::tensor_shape_eval(p, x);
        out.copy_from_slice(&v);
    };
    for &k in &large {
        let signs = space.element_signs(k);
        let ids: Vec<usize> = space.element_dofs(k).iter().map(|&g| if g < space.n_dofs { local_of[g] } else { usize::MAX }).collect();
        for (b, &xb) in rule.nodes.iter().enumerate() {
            for (a, &xa) in rule.nodes.iter().enumerate() {
                let x = [xa, xb];
                let det = mesh.jacobian(k, x).map_err(SpaceError::from)?.det;
                let w = rule.weights[a] * rule.weights[b] * det * weight.eval(mesh.map_point(k, x));
                tensor(x, &mut shapes);
                for r in 0..nl {
                    if ids[r] == usize::MAX {
                        continue;
                    }
                    for c in 0..nl {
                        if ids[c] != usize::MAX {
                            dense[ids[r]][ids[c]] += w * signs[r] * signs[c] * shapes[r] * shapes[c];
                        }
                    }
                }
            }
        }
    }

    // Load: integrate over sub-cells of each large element.
    let mut add_load = |k: usize, sub: [Point; 4], det_of: &dyn Fn(Point) -> Result<f64, AnalysisError>, u_of: &dyn Fn(Point) -> f64, n: usize| -> Result<(), AnalysisError> {
        let rule = gauss_rule(n).map_err(SystemError::from)?;
        let signs = space.element_signs(k);
        let gdofs = space.element_dofs(k);
        let mut shapes = vec![0.0; nl];
        for (b, &xb) in rule.nodes.iter().enumerate() {
            for (a, &xa) in rule.nodes.iter().enumerate() {
                let x = [xa, xb];
                let y = bilinear_point(&sub, x);
                let w = rule.weights[a] * rule.weights[b] * det_of(x)? * weight.eval(mesh.map_point(k, y)) * u_of(x);
                tensor(y, &mut shapes);
                for r in 0..nl {
                    if gdofs[r] < space.n_dofs {
                        rhs[local_of[gdofs[r]]] += w * signs[r] * shapes[r];
                    }
                }
            }
        }
        Ok(())
    };
    let unit = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    match source {
        ProjectionSource::Analytic(f) => {
            for &k in &large {
                let det = |x: Point| Ok(mesh.jacobian(k, x).map_err(SpaceError::from)?.det);
                add_load(k, unit, &det, &|x| f(mesh.map_point(k, x)), p + 6)?;
            }
        }
        ProjectionSource::Discrete(c) => {
            if c.len() != space.n_dofs {
                return Err(AnalysisError::LengthMismatch { expected: space.n_dofs, got: c.len() });
            }
            for &k in &large {
                let mut local = vec![0.0; nl];
                space.gather(c, k, &mut local);
                let det = |x: Point| Ok(mesh.jacobian(k, x).map_err(SpaceError::from)?.det);
                add_load(k, unit, &det, &|x| eval_local(p, &local, x).0, p + 2)?;
            }
        }
        ProjectionSource::Reference(r) => {
            let links = fine_to_coarse(mesh, r.mesh(), r.coarse_signature)?;
            let is_large: Vec<bool> = (0..mesh.len()).map(|k| mesh.elements[k].tag == RegionTag::Large).collect();
            for (f, &(k, quad)) in links.iter().enumerate() {
                if !is_large[k] {
                    continue;
                }
                let mut local = vec![0.0; r.space.local_dofs()];
                r.space.gather(&r.coeffs, f, &mut local);
                let det = |x: Point| Ok(r.mesh().jacobian(f, x).map_err(SpaceError::from)?.det);
                add_load(k, quad, &det, &|x| eval_local(r.p_ref(), &local, x).0, r.p_ref().max(p) + 2)?;
            }
        }
    }

    // Blocks follow the entity blocks of the space.
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < m {
        let bi = space.blocks.partition_point(|b| b.end <= dofs[i]);
        let mut j = i + 1;
        while j < m && dofs[j] < space.blocks[bi].end {
            j += 1;
        }
        blocks.push(i..j);
        i = j;
    }
    let matrix = CsrMatrix::from_dense(&dense);
    let factor = BlockCholesky::factor(&matrix, &blocks).map_err(SystemError::from)?;
    let (coeffs, residual) = if system::norm2(&rhs) == 0.0 {
        (vec![0.0; m], 0.0)
    } else {
        let sol = system::solve_factored(&factor, &matrix, &rhs, 1e-10)?;
        (sol.coeffs, sol.residual)
    };
    Ok(Projection { dofs, coeffs, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{MacroElement, MacroTriangulation, PatchMap};
    use crate::mesh::{build_pattern, MeshParams, PatternKind};
    use crate::space::{build_space_with, Constraint};

    fn unit_square() -> Mesh {
        let tri = MacroTriangulation::new(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            vec![MacroElement { vertices: [0, 1, 2, 3], map: PatchMap::identity() }],
        )
        .unwrap();
        let params = MeshParams::new(1.0, 0.2, 1, 0.1, vec![0]).unwrap();
        let pat = build_pattern(PatternKind::Trivial, params.kappa, params.sigma, 0).unwrap();
        Mesh::from_patterns(tri, &[pat], params).unwrap()
    }

    #[test]
    fn linear_function_against_zero() {
        let space = build_space_with(unit_square(), 1, Constraint::Free).unwrap();
        // Vertex DOFs of v = x: 1 at the right corners.
        let mut coeffs = vec![0.0; space.n_dofs];
        for (v, p) in space.mesh.vertices.iter().enumerate() {
            let g = space.element_dofs(0)[[0, 1, 3, 2][space.mesh.element_vertices[0].iter().position(|&u| u == v).unwrap()]];
            coeffs[g] = p[0];
        }
        let eps = 1e-4;
        let reference = ReferenceSolution {
            space: space.clone(),
            coeffs: vec![0.0; space.n_dofs],
            coarse_signature: space.mesh.signature(),
            residual: 0.0,
        };
        let problem = ProblemData::model(eps, Scalar::Constant(0.0));
        let r = error_norms(&space, &coeffs, &reference, &problem, Exec::Sequential).unwrap();
        assert!((r.l2_error - (1.0f64 / 3.0).sqrt()).abs() < 1e-14);
        assert!((r.balanced_seminorm_error - eps.sqrt()).abs() < 1e-14);
        assert!((r.linf_error - 1.0).abs() < 1e-14);
        assert!((r.energy_error - (eps * eps + 1.0 / 3.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn projection_of_constant_on_trivial_mesh() {
        let space = build_space_with(unit_square(), 2, Constraint::Free).unwrap();
        let proj = weighted_l2_projection(&space, &Scalar::Constant(2.0), ProjectionSource::Analytic(&|_| 3.0)).unwrap();
        let u = proj.splice(&vec![0.0; space.n_dofs]);
        for x in [[0.1, 0.2], [0.7, 0.9]] {
            assert!((space.evaluate(&u, 0, x).unwrap().0 - 3.0).abs() < 1e-12);
        }
    }
}
