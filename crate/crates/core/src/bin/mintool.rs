use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use minsurf::convexity::tau_estimate;
use minsurf::inequalities::{delta_of_k, elliptic_coefficient_bounds, mu_estimate, ball_samples, RegConstants};
use minsurf::laminate::{build_laminate, h1h2_critical_map, LaminateSpec, Polygon};
use minsurf::matrix::GradientMatrix;
use minsurf::mms::{
    build_potentials, compactness_experiment, inclusion_residual, ma_potential, read_field, solve_dirichlet,
    write_field, Boundary, BoundaryPreset, CompactnessConfig, DiscreteField, Grid, Method, SolveParams,
    DEFAULT_TOL_CURL,
};
use minsurf::reports::{summarize, Report, Status};
use minsurf::suites::{run_suite, Suite, SuiteParams};
use minsurf::Error;

#[derive(Parser, Debug)]
#[command(name = "mintool", version, about = "Checks, solvers and constructions for the area functional")]
struct Cli {
    /// Seed of every sampled campaign.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a verification suite; exit 1 on any violation.
    Verify(VerifyArgs),
    /// Estimate a constant; exit 1 if it is not positive.
    Constants(ConstantsArgs),
    /// Solve the Dirichlet problem and reconstruct the potentials.
    Solve(SolveArgs),
    /// Build and audit a laminate, with an SVG of its cells.
    Laminate(LaminateArgs),
    /// Refinement experiment towards the constraint set.
    Compactness(CompactnessArgs),
    /// Summarize the reports found in the output directory.
    Report,
}

#[derive(Args, Debug, Serialize)]
struct VerifyArgs {
    #[arg(value_parser = parse_suite)]
    suite: Suite,
    #[arg(long)]
    samples: Option<u64>,
    /// Row counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Radius `R` (sampling radius for the pointwise suites).
    #[arg(long = "R")]
    #[serde(rename = "R")]
    r: Option<f64>,
    /// Fixed bound on `|B|` for the main inequality.
    #[arg(long)]
    k: Option<f64>,
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
enum ConstantName {
    Mu,
    Delta,
    Tau,
    Lambda,
    C1c2,
}

#[derive(Args, Debug, Serialize)]
struct ConstantsArgs {
    name: ConstantName,
    #[arg(long = "R", default_value_t = 1.0)]
    #[serde(rename = "R")]
    r: f64,
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = std::f64::consts::SQRT_2)]
    k: f64,
    #[arg(long, default_value_t = 100_000)]
    samples: u64,
}

#[derive(Args, Debug, Serialize)]
struct SolveArgs {
    /// Interior nodes per row; with `--h` unset the domain is the unit square.
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    #[arg(long)]
    h: Option<f64>,
    /// Preset name or the header of a field whose ring is used.
    #[arg(long, default_value = "scherk")]
    boundary: String,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    #[arg(long, default_value = "newton", value_parser = parse_method)]
    method: Method,
    #[arg(long, default_value_t = DEFAULT_TOL_CURL)]
    tol_curl: f64,
}

#[derive(Args, Debug, Serialize)]
struct LaminateArgs {
    #[arg(long, default_value_t = 0.5)]
    t: f64,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    /// Pure sawtooth between `H1` and `H2` with no collar.
    #[arg(long)]
    critical: bool,
    #[arg(long, default_value_t = 480.0)]
    svg_width: f64,
}

#[derive(Args, Debug, Serialize)]
struct CompactnessArgs {
    #[arg(long, default_value_t = 6)]
    levels: u32,
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Error from a run: bad input exits 2, a mathematical failure exits 1 with
/// a report.
enum Failure {
    Usage(String),
    Math(Box<Report>, String),
    Io(String),
}

type Outcome = Result<Report, Failure>;

fn classify(command: &str, seed: u64, params: &impl Serialize, e: Error) -> Failure {
    match e {
        Error::Invalid(_) | Error::Domain(_) | Error::Shape(_) => Failure::Usage(e.to_string()),
        Error::Numerical(_) | Error::Infeasible { .. } => {
            let msg = e.to_string();
            match Report::new(command, seed, params, Status::Violation, json!({ "error": msg })) {
                Ok(r) => Failure::Math(Box::new(r), msg),
                Err(e) => Failure::Io(e.to_string()),
            }
        }
        Error::Io(_) | Error::Json(_) => Failure::Io(e.to_string()),
    }
}

fn io(e: Error) -> Failure {
    Failure::Io(e.to_string())
}

fn verify(seed: u64, out: &Path, a: &VerifyArgs) -> Outcome {
    let params = SuiteParams {
        seed,
        samples: a.samples,
        n: a.n.clone(),
        radius: a.r,
        k: a.k,
    };
    let rep = run_suite(a.suite, &params).map_err(|e| classify("verify", seed, a, e))?;
    println!("suite {}", rep.suite);
    for c in &rep.checks {
        println!("  {}", c.line());
    }
    let status = Status::from_ok(rep.passed, Status::Violation);
    let report = Report::new("verify", seed, a, status, &rep).map_err(io)?;
    report.write(out, &format!("verify-{}", a.suite)).map_err(io)?;
    Ok(report)
}

fn constants(seed: u64, out: &Path, a: &ConstantsArgs) -> Outcome {
    let fail = |e| classify("constants", seed, a, e);
    let (value, result) = match a.name {
        ConstantName::Mu => {
            let est = mu_estimate(a.r, a.n, a.samples, seed).map_err(fail)?;
            (est.value, serde_json::to_value(&est))
        }
        ConstantName::Delta => {
            let v = delta_of_k(a.k).map_err(fail)?;
            (v, serde_json::to_value(json!({ "name": "delta(k)", "parameter": a.k, "value": v, "method": "analytic" })))
        }
        ConstantName::Tau => {
            let rep = tau_estimate(a.r, a.n, a.samples, seed).map_err(fail)?;
            (rep.tau, serde_json::to_value(&rep))
        }
        ConstantName::Lambda => {
            let c = RegConstants::new(a.r, a.n, a.samples, seed).map_err(fail)?;
            (c.lambda, serde_json::to_value(&c))
        }
        ConstantName::C1c2 => {
            let xs = ball_samples(&[a.n], a.r, a.samples, seed);
            let (c1, c2) = elliptic_coefficient_bounds(&xs, a.r).map_err(fail)?;
            (c1.value.min(c2.value), serde_json::to_value(json!({ "c1": c1, "c2": c2 })))
        }
    };
    let result = result.map_err(|e| Failure::Io(e.to_string()))?;
    println!("{:?} = {value:.6e}", a.name);
    let status = Status::from_ok(value > 0.0, Status::Violation);
    let name = serde_json::to_value(a.name).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
    let report = Report::new("constants", seed, a, status, result).map_err(io)?;
    report.write(out, &format!("constants-{name}")).map_err(io)?;
    Ok(report)
}

fn solve_grid(a: &SolveArgs) -> minsurf::Result<Grid> {
    match (a.nx, a.h) {
        (None, h) => Grid::unit_square(h.unwrap_or(1.0 / 32.0)),
        (Some(nx), h) => {
            let ny = a.ny.unwrap_or(nx);
            Grid::new(nx, ny, h.unwrap_or(1.0 / (nx + 1) as f64), [0.0, 0.0])
        }
    }
}

fn solve(seed: u64, out: &Path, a: &SolveArgs) -> Outcome {
    let fail = |e| classify("solve", seed, a, e);
    let boundary = match a.boundary.parse::<BoundaryPreset>() {
        Ok(p) => Boundary::Preset(p),
        Err(_) if Path::new(&a.boundary).is_file() => {
            Boundary::Field(read_field(Path::new(&a.boundary)).map_err(fail)?)
        }
        Err(e) => return Err(Failure::Usage(e.to_string())),
    };
    let grid = match &boundary {
        Boundary::Field(f) if a.nx.is_none() && a.h.is_none() => f.grid,
        _ => solve_grid(a).map_err(fail)?,
    };
    let params = SolveParams {
        tol: a.tol,
        max_iter: a.max_iter,
        method: a.method,
    };
    let (u, rep) = solve_dirichlet(&grid, &boundary, &params).map_err(fail)?;
    std::fs::create_dir_all(out).map_err(|e| Failure::Io(e.to_string()))?;
    write_field(&u, &out.join("u")).map_err(io)?;
    let pot = build_potentials(&u, a.tol_curl);
    write_field(&pot.v, &out.join("v")).map_err(io)?;
    write_field(&pot.w, &out.join("w")).map_err(io)?;
    let stacked = DiscreteField::stack(&[&u, &pot.v, &pot.w]).map_err(io)?;
    let inclusion = inclusion_residual(&stacked).map_err(fail)?;
    let deep_inclusion = grid
        .deep_interior()
        .map(|(i, j)| inclusion.get(i, j, 0))
        .fold(0.0f64, f64::max);
    let exact_error = match &boundary {
        Boundary::Preset(p) => grid
            .nodes()
            .filter_map(|(i, j)| {
                p.exact(grid.point(i, j))
                    .map(|e| e.iter().zip(u.node(i, j)).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
            })
            .reduce(f64::max),
        Boundary::Field(_) => None,
    };
    let monge_ampere = if u.components == 1 {
        match ma_potential(&pot.w, a.tol_curl) {
            Ok((z, ma)) => {
                write_field(&z, &out.join("z")).map_err(io)?;
                json!({
                    "max_div_w": ma.max_div_w,
                    "max_det_error": ma.max_det_error,
                    "max_det_error_near_ring": ma.max_det_error_near_ring,
                    "min_laplacian": ma.min_laplacian,
                    "min_eigenvalue": ma.min_eigenvalue,
                    "laplacian_positive": ma.laplacian_positive,
                })
            }
            Err(e) => json!({ "skipped": e.to_string() }),
        }
    } else {
        json!({ "skipped": "the potential z is defined for scalar maps" })
    };
    println!(
        "{:?}: {} iterations, energy {:.12}, residual {:.3e}, converged {}",
        rep.method, rep.iterations, rep.final_energy, rep.el_residual_norm, rep.converged
    );
    let result = json!({
        "grid": grid,
        "boundary": match &boundary {
            Boundary::Preset(p) => serde_json::to_value(p).unwrap_or_default(),
            Boundary::Field(_) => json!({ "field": a.boundary }),
        },
        "solve": rep,
        "max_error_vs_exact": exact_error,
        "potentials": {
            "curl_a": pot.curl_a,
            "curl_b": pot.curl_b,
            "path_discrepancy": pot.path_discrepancy,
            "tol_curl": pot.tol_curl,
            "integrable": pot.integrable,
        },
        "max_inclusion_residual_deep": deep_inclusion,
        "monge_ampere": monge_ampere,
        "fields": ["u.json", "v.json", "w.json"],
    });
    let status = Status::from_ok(rep.converged, Status::Failed);
    let report = Report::new("solve", seed, a, status, result).map_err(io)?;
    report.write(out, "solve").map_err(io)?;
    Ok(report)
}

fn laminate(seed: u64, out: &Path, a: &LaminateArgs) -> Outcome {
    let fail = |e| classify("laminate", seed, a, e);
    let domain = Polygon::unit_square();
    let b = GradientMatrix::from_flat(2, &[1.0, 0.0, 0.0, -1.0]);
    let c = GradientMatrix::from_flat(2, &[-1.0, 0.0, 0.0, -1.0]);
    let (map, result, ok) = if a.critical {
        let cm = h1h2_critical_map(&domain, a.eps).map_err(fail)?;
        let ok = cm.audit.passes;
        let result = json!({ "kind": "critical", "period": cm.period, "pieces": cm.map.pieces.len(), "audit": cm.audit });
        (cm.map, result, ok)
    } else {
        let spec = LaminateSpec::new(b, c, a.t, a.eps).map_err(fail)?;
        let lam = build_laminate(&spec, &domain).map_err(fail)?;
        let ok = lam.audit.passes && lam.audit.null_lagrangian.abs() <= 1e-10;
        let result = json!({
            "kind": "laminate",
            "spec": lam.spec,
            "period": lam.period,
            "periods": lam.periods,
            "collar_slope": lam.collar_slope,
            "pieces": lam.map.pieces.len(),
            "audit": lam.audit,
        });
        (lam.map, result, ok)
    };
    std::fs::create_dir_all(out).map_err(|e| Failure::Io(e.to_string()))?;
    let w = |name: &str, bytes: &[u8]| std::fs::write(out.join(name), bytes).map_err(|e| Failure::Io(e.to_string()));
    w("laminate.svg", map.to_svg(a.svg_width).as_bytes())?;
    let mut map_json = serde_json::to_vec(&map).map_err(|e| Failure::Io(e.to_string()))?;
    map_json.push(b'\n');
    w("laminate-map.json", &map_json)?;
    println!("{} pieces, audit {}", map.pieces.len(), if ok { "passes" } else { "fails" });
    let report = Report::new("laminate", seed, a, Status::from_ok(ok, Status::Failed), result).map_err(io)?;
    report.write(out, "laminate").map_err(io)?;
    Ok(report)
}

fn compactness(seed: u64, out: &Path, a: &CompactnessArgs) -> Outcome {
    if a.levels == 0 || a.levels > 8 {
        return Err(Failure::Usage(format!("--levels {} must be in 1..=8", a.levels)));
    }
    let cfg = CompactnessConfig::dyadic(a.levels);
    let rep = compactness_experiment(&cfg).map_err(|e| classify("compactness", seed, a, e))?;
    std::fs::create_dir_all(out).map_err(|e| Failure::Io(e.to_string()))?;
    let table = || -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_path(out.join("compactness.csv"))?;
        let mut header = vec!["level".to_string(), "h".into(), "eps".into(), "wavenumber".into()];
        header.extend((1..=cfg.weights.len()).map(|k| format!("weighted_residual_{k}")));
        header.push("gradient_distance".into());
        w.write_record(&header)?;
        for l in &rep.levels {
            let mut row = vec![l.level.to_string(), l.h.to_string(), l.eps.to_string(), l.wavenumber.to_string()];
            row.extend(l.weighted_residuals.iter().map(|v| v.to_string()));
            row.push(l.gradient_distance.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    };
    table().map_err(|e| Failure::Io(e.to_string()))?;
    for l in &rep.levels {
        println!("level {} h {:.5} residuals {:?} distance {:.4e}", l.level, l.h, l.weighted_residuals, l.gradient_distance);
    }
    let ok = rep.monotone && rep.levels.iter().all(|l| l.solve_converged);
    let report = Report::new("compactness", seed, a, Status::from_ok(ok, Status::Failed), &rep).map_err(io)?;
    report.write(out, "compactness").map_err(io)?;
    Ok(report)
}

fn report(seed: u64, out: &Path) -> Outcome {
    let entries = summarize(out).map_err(io)?;
    let ok = entries.iter().all(|e| e.status == Status::Ok);
    for e in &entries {
        println!("{:<28} {:<12} {:?}", e.file, e.command, e.status);
    }
    let report = Report::new("report", seed, json!({}), Status::from_ok(ok, Status::Violation), &entries).map_err(io)?;
    report.write(out, "summary").map_err(io)?;
    Ok(report)
}

fn set_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("MINTOOL_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| format!("MINTOOL_THREADS={v:?} is not a positive integer"))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = set_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let (seed, out) = (cli.seed, cli.out.as_path());
    let outcome = match &cli.command {
        Command::Verify(a) => verify(seed, out, a),
        Command::Constants(a) => constants(seed, out, a),
        Command::Solve(a) => solve(seed, out, a),
        Command::Laminate(a) => laminate(seed, out, a),
        Command::Compactness(a) => compactness(seed, out, a),
        Command::Report => report(seed, out),
    };
    match outcome {
        Ok(r) => ExitCode::from(r.status.exit_code() as u8),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Math(r, msg)) => {
            eprintln!("error: {msg}");
            let name = match &cli.command {
                Command::Constants(a) => format!("constants-{}", serde_json::to_value(a.name).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()),
                _ => r.command.clone(),
            };
            if let Err(e) = r.write(out, &name) {
                eprintln!("error: {e}");
            }
            ExitCode::from(1)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
