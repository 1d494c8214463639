//! `hplayer` — convergence study, mesh dump and probe runner.

use clap::{Args, Parser, Subcommand, ValueEnum};
use hplayer::mesh::lshape_mesh;
use hplayer::probes::{self, ProbeResult};
use hplayer::study::{self, Example, Format, LayersRule, Metric, StudyConfig};
use hplayer::Exec;
use std::path::PathBuf;
use std::process::ExitCode;
use thiserror::Error;

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Study(#[from] study::StudyError),
    #[error(transparent)]
    Mesh(#[from] hplayer::mesh::MeshError),
    #[error(transparent)]
    Probe(#[from] probes::ProbeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Usage(String),
}

#[derive(Parser)]
#[command(name = "hplayer", version, about = "hp-FEM on spectral boundary layer meshes for −ε²Δu + u = f on the L-shape")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep (p, ε), compare against reference solutions and print error tables.
    Study(StudyArgs),
    /// Build one study mesh.
    Mesh(MeshArgs),
    /// Run the inequality probes and print one CSV row per sweep.
    Probes(ProbeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ExampleArg {
    Constant,
    Peak,
    Zero,
}

impl From<ExampleArg> for Example {
    fn from(e: ExampleArg) -> Self {
        match e {
            ExampleArg::Constant => Example::Constant,
            ExampleArg::Peak => Example::Peak,
            ExampleArg::Zero => Example::Zero,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Markdown,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    L2,
    Balanced,
    Energy,
    Linf,
    All,
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long, value_enum, default_value = "constant")]
    example: ExampleArg,
    /// Comma-separated ε values (default 1e-2,…,1e-8; with --quick 1e-2,1e-4,1e-6).
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// Largest polynomial degree (default 7; with --quick 5).
    #[arg(long)]
    pmax: Option<usize>,
    /// Layer width multiplier: κ = min(λpε, 1/2) in macro reference coordinates.
    #[arg(long, default_value_t = study::DEFAULT_LAMBDA)]
    lambda: f64,
    /// Geometric grading factor.
    #[arg(long, default_value_t = study::DEFAULT_SIGMA)]
    sigma: f64,
    /// Fixed corner refinement depth instead of p + 1.
    #[arg(long)]
    layers: Option<usize>,
    /// Extra Gauss points per direction (default: 4 for peak, 0 otherwise).
    #[arg(long)]
    quad_boost: Option<usize>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Table printed to stdout.
    #[arg(long, value_enum, default_value = "all")]
    metric: MetricArg,
    /// Directory for the CSV/markdown outputs.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    quick: bool,
    /// Accepted for interface symmetry with `probes`; the study is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory caching reference solutions between runs.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Skip reference solutions (solver diagnostics only).
    #[arg(long)]
    no_reference: bool,
    /// Also evaluate the balanced-norm bound per cell.
    #[arg(long)]
    lemma21: bool,
    /// Record wall times in the seconds column (otherwise 0, keeping output reproducible).
    #[arg(long)]
    timings: bool,
    /// Data-parallel assembly and error integration.
    #[arg(long)]
    parallel: bool,
}

#[derive(Args)]
struct MeshArgs {
    /// Print the mesh as JSON.
    #[arg(long)]
    dump: bool,
    /// Print the macro triangulation as JSON instead.
    #[arg(long)]
    macros: bool,
    #[arg(long, default_value_t = 1)]
    p: usize,
    #[arg(long, default_value_t = 1e-2)]
    eps: f64,
    #[arg(long, default_value_t = study::DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long, default_value_t = study::DEFAULT_SIGMA)]
    sigma: f64,
    #[arg(long)]
    layers: Option<usize>,
}

#[derive(Args)]
struct ProbeArgs {
    /// Run every probe sweep, including the balanced-norm bound over the quick grid.
    #[arg(long)]
    all: bool,
    #[arg(long, default_value_t = 20_240_601)]
    seed: u64,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    parallel: bool,
}

fn exec(parallel: bool) -> Exec {
    if parallel {
        Exec::Parallel
    } else {
        Exec::Sequential
    }
}

fn run_study(a: StudyArgs) -> Result<(), CliError> {
    let example = Example::from(a.example);
    let mut config = if a.quick { StudyConfig::quick(example) } else { StudyConfig::full(example) };
    if let Some(eps) = a.eps {
        config.eps_list = eps;
    }
    if let Some(p) = a.pmax {
        config.p_max = p;
    }
    config.lambda = a.lambda;
    config.sigma = a.sigma;
    if let Some(l) = a.layers {
        config.layers = LayersRule::Fixed(l);
    }
    if let Some(q) = a.quad_boost {
        config.quad_boost = q;
    }
    config.format = match a.format {
        FormatArg::Csv => Format::Csv,
        FormatArg::Markdown => Format::Markdown,
    };
    config.out = a.out.clone();
    config.cache_dir = a.cache;
    config.reference = !a.no_reference;
    config.lemma21 = a.lemma21;
    config.timings = a.timings;
    config.exec = exec(a.parallel);

    let output = study::run_study(&config)?;
    for c in &output.cells {
        if let Err(e) = &c.outcome {
            eprintln!("p={} eps={}: {e}", c.p, study::format_sci(c.eps, 0));
        }
    }
    let reports = output.reports();
    let metrics: Vec<Metric> = match a.metric {
        MetricArg::L2 => vec![Metric::L2],
        MetricArg::Balanced => vec![Metric::Balanced],
        MetricArg::Energy => vec![Metric::Energy],
        MetricArg::Linf => vec![Metric::Linf],
        MetricArg::All => Metric::ALL.to_vec(),
    };
    if config.reference {
        for m in metrics {
            println!("# {} {}", example.name(), m.name());
            print!("{}", study::emit_table(&reports, &config.eps_list, m, config.format));
            println!();
        }
    } else {
        print!("{}", study::emit_diagnostics(&output));
    }
    if let Some(dir) = &a.out {
        for p in study::write_outputs(&output, dir)? {
            eprintln!("wrote {}", p.display());
        }
    }
    Ok(())
}

fn run_mesh(a: MeshArgs) -> Result<(), CliError> {
    if a.macros {
        println!("{}", hplayer::geometry::build_lshape_macro().to_json());
        return Ok(());
    }
    let mesh = lshape_mesh(a.p, a.eps, a.lambda, a.sigma, a.layers.unwrap_or(a.p + 1))?;
    if a.dump {
        println!("{}", mesh.dump_json());
    } else {
        let report = hplayer::mesh::check_conformity(&mesh);
        println!(
            "elements={} vertices={} kappa={} conforming={} large_to_boundary={}",
            mesh.len(),
            mesh.vertices.len(),
            mesh.params.kappa,
            report.passed,
            report.large_to_boundary.map_or_else(|| "-".to_string(), |d| format!("{d:e}"))
        );
    }
    Ok(())
}

fn run_probes(a: ProbeArgs) -> Result<(), CliError> {
    let mut rows: Vec<ProbeResult> = probes::polynomial_probes(a.seed)?;
    let mut config = StudyConfig::quick(Example::Constant);
    config.exec = exec(a.parallel);
    rows.extend(probes::lemma21_sweep(&config)?);
    let csv = probes::probes_csv(&rows);
    match a.out {
        Some(path) => std::fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Study(a) => run_study(a),
        Command::Mesh(a) => run_mesh(a),
        Command::Probes(a) => {
            if !a.all {
                Err(CliError::Usage("nothing to run: pass --all".into()))
            } else {
                run_probes(a)
            }
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
