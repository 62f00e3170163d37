//! `cpgeom` command-line front end.
//!
//! Exit codes: 0 success, 2 invalid input or configuration, 3 runtime failure.

mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use thiserror::Error;

use cpgeom::analytic;
use cpgeom::delaunay::triangulate;
use cpgeom::exceedances::{angle_threshold, nn_threshold_closed_form, nn_threshold_numeric};
use cpgeom::experiments::{self, ExperimentConfig, ExperimentReport};
use cpgeom::geometry::Window;
use cpgeom::metrics::{cp_count_pmf_auto, d1, d_hat1, tv, Pmf};
use cpgeom::sampling::{
    expand_clusters, sample_compound_poisson, sample_gauss_poisson, sample_poisson, sample_typical_triangle,
    CompoundParams, GaussPoissonParams, Seed,
};

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn invalid(e: impl ToString) -> CliError {
    CliError::Validation(e.to_string())
}

fn runtime(e: impl ToString) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Parser)]
#[command(
    name = "cpgeom",
    version,
    about = "Exceedance processes of planar point processes and their compound Poisson limits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a study described by a JSON configuration.
    Run(RunArgs),
    /// Print exceedance thresholds as JSON.
    Threshold(ThresholdArgs),
    /// Evaluate a reference function and print it as JSON.
    Analytic(AnalyticArgs),
    /// Distances between point patterns or count laws.
    Metrics(MetricsArgs),
    /// Delaunay-triangulate a point file.
    Triangulate(TriangulateArgs),
    /// Draw a seeded sample and write it as CSV.
    Sample(SampleArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file (see schema/config.schema.json).
    config: PathBuf,
    /// Override a configuration field, e.g. `--set tau=5` or `--set params.p1=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory; defaults to the config's `output`, then `cpgeom-out`.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ThresholdKind {
    Angles,
    Nn,
}

#[derive(Args)]
struct ThresholdArgs {
    #[arg(long, value_enum)]
    kind: ThresholdKind,
    #[arg(long)]
    n: f64,
    #[arg(long)]
    tau: f64,
    #[arg(long)]
    p1: Option<f64>,
    #[arg(long)]
    p2: Option<f64>,
}

#[derive(Args)]
struct AnalyticArgs {
    /// One of: a_of_v, gp_void, mardia_pdf, mardia_cdf, mardia_quantile,
    /// cp_limit, poisson_partial_sum, pn2_integral.
    function: String,
    #[arg(allow_negative_numbers = true)]
    args: Vec<f64>,
    #[arg(long, default_value_t = 0.6)]
    p1: f64,
    #[arg(long, default_value_t = 0.2)]
    p2: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricKind {
    D1,
    DHat1,
    Tv,
    CpCount,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(value_enum)]
    metric: MetricKind,
    /// Point file (d1, d-hat1) or JSON probability list (tv).
    a: Option<String>,
    b: Option<String>,
    /// Limit parameter for `cp-count`.
    #[arg(long)]
    tau: Option<f64>,
}

#[derive(Args)]
struct TriangulateArgs {
    /// Points as CSV (`x,y` header) or JSON (`[[x, y], ...]`).
    input: PathBuf,
    /// Write the full triangulation JSON here instead of a summary on stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProcessKind {
    Poisson,
    GaussPoisson,
    Compound,
    TypicalTriangle,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(value_enum)]
    process: ProcessKind,
    /// Window scale: the sample covers `W_n`, the centred square of area n.
    #[arg(long, default_value_t = 100.0)]
    n: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    index: u64,
    #[arg(long, default_value_t = 1.0)]
    intensity: f64,
    #[arg(long, default_value_t = 0.6)]
    p1: f64,
    #[arg(long, default_value_t = 0.2)]
    p2: f64,
    /// Limit parameter of the compound law.
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn gp(p1: f64, p2: f64) -> CliResult<GaussPoissonParams> {
    GaussPoissonParams::from_p1_p2(p1, p2).map_err(invalid)
}

fn print_json(v: &Value) -> CliResult<()> {
    use std::io::Write;
    let text = serde_json::to_string_pretty(v).map_err(runtime)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(runtime(e)),
        _ => Ok(()),
    }
}

/// Sets `key` (dotted path) in a JSON object, parsing `raw` as JSON when possible.
fn apply_override(cfg: &mut Value, assignment: &str) -> CliResult<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| invalid(format!("override `{assignment}` is not KEY=VALUE")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = cfg;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| invalid(format!("cannot set `{key}`")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| json!({}));
        if node.is_null() {
            *node = json!({});
        }
    }
    Err(invalid(format!("empty override key in `{assignment}`")))
}

fn load_config(path: &Path, overrides: &[String]) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let mut value: Value = serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    let text = serde_json::to_string(&value).map_err(runtime)?;
    ExperimentConfig::from_json(&text).map_err(invalid)
}

fn write_outputs(dir: &Path, report: &ExperimentReport) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    let json = serde_json::to_string_pretty(report).map_err(runtime)?;
    std::fs::write(dir.join("report.json"), json + "\n").map_err(runtime)?;
    io::write_summary_csv(&dir.join("summary.csv"), &report.aggregates).map_err(runtime)
}

fn cmd_run(args: RunArgs) -> CliResult<()> {
    let cfg = load_config(&args.config, &args.overrides)?;
    let dir = args
        .output
        .or_else(|| cfg.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("cpgeom-out"));
    let report = experiments::run(&cfg).map_err(|e| match e {
        experiments::ExperimentError::InvalidConfig(m) => CliError::Validation(m),
        other => runtime(other),
    })?;
    write_outputs(&dir, &report)?;
    if !report.status.complete {
        let first = &report.status.failures[0];
        return Err(runtime(format!(
            "{} replication(s) failed (first: #{}: {}); partial results written to {}",
            report.status.failures.len(),
            first.index,
            first.error,
            dir.display()
        )));
    }
    eprintln!(
        "wrote {} and {}",
        dir.join("report.json").display(),
        dir.join("summary.csv").display()
    );
    Ok(())
}

fn cmd_threshold(args: ThresholdArgs) -> CliResult<()> {
    match args.kind {
        ThresholdKind::Angles => {
            let v = angle_threshold(args.n, args.tau).map_err(invalid)?;
            print_json(&json!({ "v_n": v }))
        }
        ThresholdKind::Nn => {
            let (p1, p2) = match (args.p1, args.p2) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(invalid("--p1 and --p2 are required for --kind nn")),
            };
            let params = gp(p1, p2)?;
            let numeric = nn_threshold_numeric(args.n, args.tau, &params).map_err(invalid)?;
            let closed = nn_threshold_closed_form(args.n, args.tau, &params);
            print_json(&json!({
                "v_n_numeric": numeric,
                "v_n_closed_form": closed.as_ref().ok(),
                "closed_form_error": closed.as_ref().err().map(|e| e.to_string()),
                "ratio_numeric_to_closed": closed.as_ref().ok().map(|c| numeric / c),
            }))
        }
    }
}

fn cmd_analytic(args: AnalyticArgs) -> CliResult<()> {
    let need = |k: usize| -> CliResult<&[f64]> {
        if args.args.len() == k {
            Ok(&args.args)
        } else {
            Err(invalid(format!(
                "{} takes {k} argument(s), got {}",
                args.function,
                args.args.len()
            )))
        }
    };
    let value = match args.function.as_str() {
        "a_of_v" => json!(analytic::a_of_v(need(1)?[0])),
        "gp_void" => json!(analytic::gp_void_prob(need(1)?[0], &gp(args.p1, args.p2)?)),
        "mardia_pdf" => json!(analytic::mardia_pdf(need(1)?[0])),
        "mardia_cdf" => json!(analytic::mardia_cdf(need(1)?[0])),
        "mardia_quantile" => json!(analytic::mardia_quantile(need(1)?[0])),
        "cp_limit" => {
            let tau = need(1)?[0];
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(invalid("tau must be positive"));
            }
            serde_json::to_value(analytic::cp_limit_params(tau)).map_err(runtime)?
        }
        "poisson_partial_sum" => {
            let a = need(2)?;
            if !(a[1] >= 1.0 && a[1].fract() == 0.0) {
                return Err(invalid("k must be a positive integer"));
            }
            json!(analytic::poisson_partial_sum(a[0], a[1] as usize))
        }
        "pn2_integral" => {
            let a = need(1)?[0];
            if !(a > 0.0 && a.is_finite()) {
                return Err(invalid("upper limit must be positive"));
            }
            json!(analytic::pn2_integral(a))
        }
        other => return Err(invalid(format!("unknown function `{other}`"))),
    };
    print_json(&json!({ "function": args.function, "args": args.args, "value": value }))
}

fn cmd_metrics(args: MetricsArgs) -> CliResult<()> {
    let both = || -> CliResult<(&str, &str)> {
        match (&args.a, &args.b) {
            (Some(a), Some(b)) => Ok((a.as_str(), b.as_str())),
            _ => Err(invalid("two inputs are required")),
        }
    };
    match args.metric {
        MetricKind::D1 | MetricKind::DHat1 => {
            let (a, b) = both()?;
            let (mu, chi) = (io::read_points(Path::new(a))?, io::read_points(Path::new(b))?);
            let r = if matches!(args.metric, MetricKind::D1) {
                d1(&mu, &chi)
            } else {
                d_hat1(&mu, &chi)
            };
            print_json(&serde_json::to_value(r).map_err(runtime)?)
        }
        MetricKind::Tv => {
            let (a, b) = both()?;
            let parse = |s: &str| -> CliResult<Pmf> {
                let v: Vec<f64> = serde_json::from_str(s).map_err(invalid)?;
                Pmf::new(v).map_err(invalid)
            };
            print_json(&json!({ "tv": tv(&parse(a)?, &parse(b)?) }))
        }
        MetricKind::CpCount => {
            let tau = args.tau.ok_or_else(|| invalid("--tau is required for cp-count"))?;
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(invalid("tau must be positive"));
            }
            let limit = analytic::cp_limit_params(tau);
            let pmf = cp_count_pmf_auto(&limit.cluster_masses()).map_err(runtime)?;
            print_json(&serde_json::to_value(pmf).map_err(runtime)?)
        }
    }
}

fn cmd_triangulate(args: TriangulateArgs) -> CliResult<()> {
    let pts = io::read_points(&args.input)?;
    let tri = triangulate(&pts).map_err(invalid)?;
    match args.output {
        Some(path) => {
            let json = serde_json::to_string(&tri).map_err(runtime)?;
            std::fs::write(&path, json).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
            print_json(
                &json!({ "points": pts.len(), "triangles": tri.len(), "hull_edges": tri.hull_edges(), "output": path }),
            )
        }
        None => {
            let min_angle = tri.triangles.iter().map(|t| t.min_angle).fold(f64::INFINITY, f64::min);
            print_json(&json!({
                "points": pts.len(),
                "triangles": tri.len(),
                "hull_edges": tri.hull_edges(),
                "smallest_angle": min_angle,
            }))
        }
    }
}

fn cmd_sample(args: SampleArgs) -> CliResult<()> {
    let seed = Seed::new(args.seed, args.index);
    let window = Window::from_scale(args.n).map_err(invalid)?;
    let rows: Vec<Vec<f64>> = match args.process {
        ProcessKind::Poisson => {
            let s = sample_poisson(args.intensity, &window, seed).map_err(invalid)?;
            s.points().iter().map(|p| vec![p.x, p.y]).collect()
        }
        ProcessKind::GaussPoisson => {
            let s = sample_gauss_poisson(&gp(args.p1, args.p2)?, &window, seed);
            s.points().iter().map(|p| vec![p.x, p.y]).collect()
        }
        ProcessKind::Compound => {
            if !(args.tau > 0.0 && args.tau.is_finite()) {
                return Err(invalid("tau must be positive"));
            }
            let limit = analytic::cp_limit_params(args.tau);
            let params = CompoundParams::new(limit.gamma, limit.cluster_law).map_err(invalid)?;
            let clusters = sample_compound_poisson(&params, &window, seed);
            debug_assert_eq!(
                expand_clusters(&clusters).len(),
                clusters.iter().map(|c| c.1).sum::<usize>()
            );
            clusters.iter().map(|(p, m)| vec![p.x, p.y, *m as f64]).collect()
        }
        ProcessKind::TypicalTriangle => {
            let t = sample_typical_triangle(seed);
            t.vertices().iter().map(|p| vec![p.x, p.y]).collect()
        }
    };
    let header: &[&str] = match args.process {
        ProcessKind::Compound => &["x", "y", "multiplicity"],
        _ => &["x", "y"],
    };
    match io::write_rows(args.output.as_deref(), header, &rows) {
        Err(e) if !io::is_broken_pipe(&e) => Err(runtime(e)),
        _ => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Threshold(a) => cmd_threshold(a),
        Command::Analytic(a) => cmd_analytic(a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::Triangulate(a) => cmd_triangulate(a),
        Command::Sample(a) => cmd_sample(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cpgeom: {e}");
            ExitCode::from(e.code())
        }
    }
}
