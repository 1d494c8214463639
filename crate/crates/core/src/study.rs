//! The convergence study on the L-shape: sweeps over (p, ε), a disk cache of
//! reference solutions, and table emission.

use crate::analysis::{self, AnalysisError, ErrorReport, ReferenceSolution};
use crate::exec::Exec;
use crate::mesh::{lshape_mesh, Mesh, MeshError};
use crate::probes::{self, Lemma21, ProbeError};
use crate::space::{build_space, SpaceError};
use crate::system::{self, AssemblyOptions, ProblemData, Scalar, SystemError};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("invalid study configuration: {0}")]
    Config(String),
    #[error("reference cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Example {
    /// f ≡ 1.
    Constant,
    /// f = 1/(x² + y² + 0.15).
    Peak,
    /// f ≡ 0.
    Zero,
}

impl Example {
    pub fn name(self) -> &'static str {
        match self {
            Example::Constant => "constant",
            Example::Peak => "peak",
            Example::Zero => "zero",
        }
    }

    /// −ε²Δu + u = f.
    pub fn problem(self, eps: f64) -> ProblemData {
        let load = match self {
            Example::Constant => Scalar::Constant(1.0),
            Example::Peak => Scalar::field(|x| 1.0 / (x[0] * x[0] + x[1] * x[1] + 0.15)),
            Example::Zero => Scalar::Constant(0.0),
        };
        ProblemData::model(eps, load)
    }

    /// Extra Gauss points per direction for non-polynomial data.
    pub fn default_quad_boost(self) -> usize {
        match self {
            Example::Peak => 4,
            _ => 0,
        }
    }
}

impl std::str::FromStr for Example {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "constant" => Ok(Example::Constant),
            "peak" => Ok(Example::Peak),
            "zero" => Ok(Example::Zero),
            other => Err(format!("unknown example '{other}' (expected constant, peak or zero)")),
        }
    }
}

/// Geometric refinement depth at the corner-refined macros.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayersRule {
    PPlusOne,
    Fixed(usize),
}

impl LayersRule {
    pub fn layers(self, p: usize) -> usize {
        match self {
            LayersRule::PPlusOne => p + 1,
            LayersRule::Fixed(l) => l,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Markdown,
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "markdown" | "md" => Ok(Format::Markdown),
            other => Err(format!("unknown format '{other}' (expected csv or markdown)")),
        }
    }
}

pub const DEFAULT_LAMBDA: f64 = 5.0;
pub const DEFAULT_SIGMA: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub example: Example,
    pub eps_list: Vec<f64>,
    pub p_max: usize,
    pub lambda: f64,
    pub sigma: f64,
    pub layers: LayersRule,
    pub quad_boost: usize,
    pub format: Format,
    pub out: Option<PathBuf>,
    /// Compute errors against a reference solution.
    pub reference: bool,
    pub cache_dir: Option<PathBuf>,
    pub exec: Exec,
    /// Also evaluate the balanced-norm bound for every cell.
    pub lemma21: bool,
    /// Record wall times; otherwise the seconds column is 0.
    pub timings: bool,
}

impl StudyConfig {
    /// p = 1..7, ε = 1e−2..1e−8.
    pub fn full(example: Example) -> Self {
        StudyConfig {
            example,
            eps_list: (2..=8).map(|k| 10f64.powi(-k)).collect(),
            p_max: 7,
            lambda: DEFAULT_LAMBDA,
            sigma: DEFAULT_SIGMA,
            layers: LayersRule::PPlusOne,
            quad_boost: example.default_quad_boost(),
            format: Format::Csv,
            out: None,
            reference: true,
            cache_dir: None,
            exec: Exec::Sequential,
            lemma21: false,
            timings: false,
        }
    }

    /// p = 1..5, ε ∈ {1e−2, 1e−4, 1e−6}.
    pub fn quick(example: Example) -> Self {
        StudyConfig { eps_list: vec![1e-2, 1e-4, 1e-6], p_max: 5, ..StudyConfig::full(example) }
    }

    pub fn validate(&self) -> Result<(), StudyError> {
        let bad = |m: String| Err(StudyError::Config(m));
        if self.eps_list.is_empty() {
            return bad("eps list is empty".into());
        }
        if let Some(e) = self.eps_list.iter().find(|&&e| !(e > 0.0 && e <= 1.0)) {
            return bad(format!("eps = {e} outside (0,1]"));
        }
        if !(1..=12).contains(&self.p_max) {
            return bad(format!("p_max = {} outside 1..=12", self.p_max));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda = {} must be positive", self.lambda));
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return bad(format!("sigma = {} outside (0,1)", self.sigma));
        }
        if self.lemma21 && !self.reference {
            return bad("the balanced-norm bound needs the reference solution".into());
        }
        Ok(())
    }

    pub fn mesh(&self, p: usize, eps: f64) -> Result<Mesh, StudyError> {
        Ok(lshape_mesh(p, eps, self.lambda, self.sigma, self.layers.layers(p))?)
    }

    fn assembly(&self, p: usize) -> AssemblyOptions {
        AssemblyOptions { quad_order: Some(p + 2 + self.quad_boost), exec: self.exec }
    }
}

/// Solver diagnostics of one discrete solve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub n_dofs: usize,
    pub residual: f64,
    /// |a(u_N,u_N) − F(u_N)| / max(|F(u_N)|, tiny).
    pub energy_identity_gap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyCell {
    pub p: usize,
    pub eps: f64,
    pub outcome: Result<CellResult, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub report: Option<ErrorReport>,
    pub solve: SolveDiagnostics,
    pub reference: Option<SolveDiagnostics>,
    pub lemma21: Option<Lemma21>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyOutput {
    pub config: StudyConfig,
    /// Row-major over (p, ε): p outer, ε in input order.
    pub cells: Vec<StudyCell>,
}

impl StudyOutput {
    pub fn reports(&self) -> Vec<ErrorReport> {
        self.cells.iter().filter_map(|c| c.outcome.as_ref().ok().and_then(|r| r.report.clone())).collect()
    }

    pub fn report(&self, p: usize, eps: f64) -> Option<&ErrorReport> {
        self.cells
            .iter()
            .find(|c| c.p == p && c.eps == eps)
            .and_then(|c| c.outcome.as_ref().ok())
            .and_then(|r| r.report.as_ref())
    }
}

fn diagnostics(sys: &system::SparseSystem, sol: &system::Solution) -> SolveDiagnostics {
    let ax = sys.matrix.mul_vec(&sol.coeffs);
    let energy = system::dot(&sol.coeffs, &ax);
    let load = system::dot(&sys.rhs, &sol.coeffs);
    let gap = if load.abs() > 0.0 { (energy - load).abs() / load.abs() } else { (energy - load).abs() };
    SolveDiagnostics { n_dofs: sys.matrix.n, residual: sol.residual, energy_identity_gap: gap }
}

#[derive(Serialize, Deserialize, PartialEq)]
struct CacheMeta {
    example: Example,
    eps: f64,
    p: usize,
    p_max: usize,
    lambda: f64,
    sigma: f64,
    layers: usize,
    quad_boost: usize,
    coarse_signature: u64,
    fine_signature: u64,
    n_dofs: usize,
    residual: f64,
}

fn cache_key(meta: &CacheMeta) -> String {
    use std::hash::{Hash, Hasher};
    let mut h = std::collections::hash_map::DefaultHasher::new();
    meta.example.hash(&mut h);
    for v in [meta.eps, meta.lambda, meta.sigma] {
        v.to_bits().hash(&mut h);
    }
    (meta.p, meta.p_max, meta.layers, meta.quad_boost, meta.coarse_signature).hash(&mut h);
    format!("{}-{:016x}", meta.example.name(), h.finish())
}

fn load_cached(dir: &Path, meta: &CacheMeta, coarse: &Mesh) -> Result<Option<ReferenceSolution>, StudyError> {
    let key = cache_key(meta);
    let (mp, bp) = (dir.join(format!("{key}.json")), dir.join(format!("{key}.bin")));
    if !mp.exists() || !bp.exists() {
        return Ok(None);
    }
    let stored: CacheMeta =
        serde_json::from_str(&std::fs::read_to_string(&mp)?).map_err(|e| StudyError::Cache(e.to_string()))?;
    let fine = coarse.refine_for_reference()?;
    if stored.fine_signature != fine.signature()
        || stored.coarse_signature != meta.coarse_signature
        || stored.example != meta.example
        || stored.p_max != meta.p_max
    {
        return Ok(None);
    }
    let bytes = std::fs::read(&bp)?;
    if bytes.len() != 8 * stored.n_dofs {
        return Err(StudyError::Cache(format!("{} has {} bytes, expected {}", bp.display(), bytes.len(), 8 * stored.n_dofs)));
    }
    let coeffs: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let space = build_space(fine, 2 * meta.p_max)?;
    if space.n_dofs != stored.n_dofs {
        return Ok(None);
    }
    Ok(Some(ReferenceSolution { space, coeffs, coarse_signature: meta.coarse_signature, residual: stored.residual }))
}

fn store_cached(dir: &Path, meta: &CacheMeta, r: &ReferenceSolution) -> Result<(), StudyError> {
    std::fs::create_dir_all(dir)?;
    let key = cache_key(meta);
    let mut bytes = Vec::with_capacity(8 * r.coeffs.len());
    for c in &r.coeffs {
        bytes.extend_from_slice(&c.to_le_bytes());
    }
    std::fs::write(dir.join(format!("{key}.bin")), bytes)?;
    let json = serde_json::to_string_pretty(meta).map_err(|e| StudyError::Cache(e.to_string()))?;
    std::fs::write(dir.join(format!("{key}.json")), json)?;
    Ok(())
}

/// Reference for one study mesh: refined mesh, degree 2·p_max, solved to 1e−12.
pub fn reference_for(
    config: &StudyConfig,
    coarse: &Mesh,
    p: usize,
    eps: f64,
) -> Result<(ReferenceSolution, SolveDiagnostics), StudyError> {
    let problem = config.example.problem(eps);
    let mut meta = CacheMeta {
        example: config.example,
        eps,
        p,
        p_max: config.p_max,
        lambda: config.lambda,
        sigma: config.sigma,
        layers: config.layers.layers(p),
        quad_boost: config.quad_boost,
        coarse_signature: coarse.signature(),
        fine_signature: 0,
        n_dofs: 0,
        residual: 0.0,
    };
    if let Some(dir) = &config.cache_dir {
        if let Some(r) = load_cached(dir, &meta, coarse)? {
            let diag = SolveDiagnostics { n_dofs: r.space.n_dofs, residual: r.residual, energy_identity_gap: 0.0 };
            return Ok((r, diag));
        }
    }
    let fine = coarse.refine_for_reference()?;
    meta.fine_signature = fine.signature();
    let space = build_space(fine, 2 * config.p_max)?;
    let sys = system::assemble_with(&space, &problem, &config.assembly(2 * config.p_max))?;
    let sol = system::solve(&sys, 1e-12)?;
    let diag = diagnostics(&sys, &sol);
    let r = ReferenceSolution { space, coeffs: sol.coeffs, coarse_signature: meta.coarse_signature, residual: sol.residual };
    if let Some(dir) = &config.cache_dir {
        meta.n_dofs = r.space.n_dofs;
        meta.residual = r.residual;
        store_cached(dir, &meta, &r)?;
    }
    Ok((r, diag))
}

/// Solves and evaluates one (p, ε) cell.
pub fn run_cell(config: &StudyConfig, p: usize, eps: f64) -> Result<CellResult, StudyError> {
    let start = Instant::now();
    let problem = config.example.problem(eps);
    let mesh = config.mesh(p, eps)?;
    let space = build_space(mesh, p)?;
    let sys = system::assemble_with(&space, &problem, &config.assembly(p))?;
    let sol = system::solve(&sys, 1e-12)?;
    let solve = diagnostics(&sys, &sol);
    if !config.reference {
        return Ok(CellResult { report: None, solve, reference: None, lemma21: None });
    }
    let (reference, ref_diag) = reference_for(config, &space.mesh, p, eps)?;
    let mut report = analysis::error_norms(&space, &sol.coeffs, &reference, &problem, config.exec)?;
    report.wall_time = if config.timings { start.elapsed().as_secs_f64() } else { 0.0 };
    let lemma21 = if config.lemma21 {
        Some(probes::lemma21_ratio(&space, &sol.coeffs, &reference, &problem, config.exec)?)
    } else {
        None
    };
    Ok(CellResult { report: Some(report), solve, reference: Some(ref_diag), lemma21 })
}

/// Runs every (p, ε) cell; failures are recorded per cell and the sweep continues.
pub fn run_study(config: &StudyConfig) -> Result<StudyOutput, StudyError> {
    config.validate()?;
    let mut cells = Vec::new();
    for p in 1..=config.p_max {
        for &eps in &config.eps_list {
            let outcome = run_cell(config, p, eps).map_err(|e| e.to_string());
            cells.push(StudyCell { p, eps, outcome });
        }
    }
    Ok(StudyOutput { config: config.clone(), cells })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    L2,
    Balanced,
    Energy,
    Linf,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::L2, Metric::Balanced, Metric::Energy, Metric::Linf];

    pub fn name(self) -> &'static str {
        match self {
            Metric::L2 => "l2",
            Metric::Balanced => "balanced",
            Metric::Energy => "energy",
            Metric::Linf => "linf",
        }
    }

    pub fn of(self, r: &ErrorReport) -> f64 {
        match self {
            Metric::L2 => r.l2_error,
            Metric::Balanced => r.balanced_seminorm_error,
            Metric::Energy => r.energy_error,
            Metric::Linf => r.linf_error,
        }
    }
}

/// Scientific notation with `digits` decimals and a two-digit signed exponent: 1.23e-02.
pub fn format_sci(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{:.*e}", digits, x);
    let (mant, exp) = s.split_once('e').expect("exponent");
    let e: i32 = exp.parse().expect("integer exponent");
    format!("{mant}e{}{:02}", if e < 0 { '-' } else { '+' }, e.abs())
}

pub const GAP: &str = "-";

/// p as rows, ε as columns in the order given; missing cells are `-`.
pub fn emit_table(reports: &[ErrorReport], eps_list: &[f64], metric: Metric, format: Format) -> String {
    let mut ps: Vec<usize> = reports.iter().map(|r| r.p).collect();
    ps.sort_unstable();
    ps.dedup();
    let header: Vec<String> = eps_list.iter().map(|&e| format_sci(e, 0)).collect();
    let rows: Vec<(usize, Vec<String>)> = ps
        .iter()
        .map(|&p| {
            let vals = eps_list
                .iter()
                .map(|&e| {
                    reports
                        .iter()
                        .find(|r| r.p == p && r.eps == e)
                        .map_or_else(|| GAP.to_string(), |r| format_sci(metric.of(r), 2))
                })
                .collect();
            (p, vals)
        })
        .collect();
    let mut out = String::new();
    match format {
        Format::Csv => {
            out.push_str(&format!("p/eps,{}\n", header.join(",")));
            for (p, vals) in rows {
                out.push_str(&format!("{p},{}\n", vals.join(",")));
            }
        }
        Format::Markdown => {
            out.push_str(&format!("| p/eps | {} |\n", header.join(" | ")));
            out.push_str(&format!("|---|{}\n", "---|".repeat(header.len())));
            for (p, vals) in rows {
                out.push_str(&format!("| {p} | {} |\n", vals.join(" | ")));
            }
        }
    }
    out
}

pub const CSV_HEADER: &str = "example,p,eps,n_dofs,l2_error,balanced_h1semi_error,energy_error,linf_error,seconds";

/// One line per computed cell in the fixed column schema.
pub fn emit_csv(example: Example, reports: &[ErrorReport]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{:.3}\n",
            example.name(),
            r.p,
            format_sci(r.eps, 0),
            r.n_dofs,
            format_sci(r.l2_error, 6),
            format_sci(r.balanced_seminorm_error, 6),
            format_sci(r.energy_error, 6),
            format_sci(r.linf_error, 6),
            r.wall_time
        ));
    }
    out
}

/// Per-cell solver diagnostics (and the balanced-norm bound when computed).
pub fn emit_diagnostics(output: &StudyOutput) -> String {
    let mut out = String::from("p,eps,n_dofs,residual,energy_identity_gap,reference_residual,lemma21_ratio,status\n");
    for c in &output.cells {
        match &c.outcome {
            Ok(r) => out.push_str(&format!(
                "{},{},{},{},{},{},{},ok\n",
                c.p,
                format_sci(c.eps, 0),
                r.solve.n_dofs,
                format_sci(r.solve.residual, 2),
                format_sci(r.solve.energy_identity_gap, 2),
                r.reference.map_or_else(|| GAP.into(), |d| format_sci(d.residual, 2)),
                r.lemma21.and_then(|l| l.ratio).map_or_else(|| GAP.into(), |v| format_sci(v, 3)),
            )),
            Err(e) => out.push_str(&format!("{},{},-,-,-,-,-,\"{}\"\n", c.p, format_sci(c.eps, 0), e.replace('"', "'"))),
        }
    }
    out
}

/// Writes the long CSV, one table per metric and the diagnostics to `dir`.
pub fn write_outputs(output: &StudyOutput, dir: &Path) -> Result<Vec<PathBuf>, StudyError> {
    std::fs::create_dir_all(dir)?;
    let cfg = &output.config;
    let name = cfg.example.name();
    let reports = output.reports();
    let ext = match cfg.format {
        Format::Csv => "csv",
        Format::Markdown => "md",
    };
    let mut written = Vec::new();
    let mut put = |file: String, text: String| -> Result<(), StudyError> {
        let path = dir.join(file);
        std::fs::write(&path, text)?;
        written.push(path);
        Ok(())
    };
    put(format!("{name}_errors.csv"), emit_csv(cfg.example, &reports))?;
    for m in Metric::ALL {
        put(format!("{name}_{}.{ext}", m.name()), emit_table(&reports, &cfg.eps_list, m, cfg.format))?;
    }
    put(format!("{name}_diagnostics.csv"), emit_diagnostics(output))?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sci_format() {
        assert_eq!(format_sci(0.0123456, 2), "1.23e-02");
        assert_eq!(format_sci(2.71, 2), "2.71e+00");
        assert_eq!(format_sci(1e-8, 0), "1e-08");
        assert_eq!(format_sci(0.0, 2), "0.00e+00");
    }

    #[test]
    fn table_shapes() {
        let r = |p, eps, v| ErrorReport {
            p,
            eps,
            n_dofs: 1,
            l2_error: v,
            balanced_seminorm_error: v,
            energy_error: v,
            linf_error: v,
            wall_time: 0.0,
        };
        let t = emit_table(&[r(1, 1e-2, 0.0123456)], &[1e-2], Metric::L2, Format::Csv);
        assert_eq!(t, "p/eps,1e-02\n1,1.23e-02\n");
        let t = emit_table(&[r(1, 1e-2, 0.5)], &[1e-2, 1e-3], Metric::L2, Format::Markdown);
        assert!(t.contains("| 1 | 5.00e-01 | - |"));
    }
}
