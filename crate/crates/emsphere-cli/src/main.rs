//! Command-line surface over the emsphere library.
//!
//! Subcommands: solve, verify, scan, obstruction, futaki, calibrate,
//! flow, eigen. Exit codes: 0 success, 1 internal or verification
//! failure, 2 solver stalled or nonzero obstruction, 3 invalid
//! configuration.

mod record;

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use emsphere::em_solver::reference_setup;
use emsphere::error::EmError;
use emsphere::functionals::linear_fit;
use emsphere::geometry::{apply_potential, round_reference, Potential};
use emsphere::grid::Grid;
use emsphere::sampling::{random_potential, seeded_rng};
use emsphere::sigma::normalize_weight;
use emsphere::verify::{run_suite, Suite};
use emsphere::{
    calibrate, continuity_solve, direct_solve, flow_run, futaki_invariant,
    lambda1_eigenspace, make_sigma, obstruction_on, ContinuityOpts,
};

use record::{ConfigEcho, ProfileRow, ResultRecord};

#[derive(Parser)]
#[command(
    name = "emsphere",
    about = "Rotation-invariant canonical metrics on the sphere: solvers, scans, and checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the canonical metric of a weight and write record + profile.
    Solve(SolveArgs),
    /// Run a named invariant battery; exit 0 only if every check passes.
    Verify(VerifyArgs),
    /// Sample energies of random potentials around the solution metric.
    Scan(ScanArgs),
    /// Print the obstruction integral of a weight.
    Obstruction(SigmaOnly),
    /// Print the holomorphic invariant of a weight at the round metric.
    Futaki(SigmaOnly),
    /// Tilt a weight until its obstruction integral vanishes.
    Calibrate(SigmaOnly),
    /// Run the smoothing flow from the round metric and report the bounds.
    Flow(FlowArgs),
    /// Eigenpairs of the twisted Laplacian near the critical eigenvalue.
    Eigen(EigenArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Continuity,
    Direct,
    Flow,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Continuity => write!(f, "continuity"),
            Method::Direct => write!(f, "direct"),
            Method::Flow => write!(f, "flow"),
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Weight descriptor: zero | lin:<a> | quad:<eps> | neglog:<C> | poly:<c0>,<c1>,...
    #[arg(long)]
    sigma: String,
    #[arg(long, default_value_t = 64)]
    grid_n: usize,
    #[arg(long, value_enum, default_value_t = Method::Continuity)]
    method: Method,
    #[arg(long, default_value_t = 0.05)]
    t_step_init: f64,
    #[arg(long, default_value_t = 1e-4)]
    t_step_min: f64,
    #[arg(long, default_value_t = 1e-10)]
    newton_tol: f64,
    #[arg(long, default_value_t = 30)]
    max_newton: usize,
    /// Flow step size (method = flow).
    #[arg(long, default_value_t = 1e-3)]
    ds: f64,
    /// Flow horizon (method = flow).
    #[arg(long, default_value_t = 1.0)]
    s_max: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the JSON result record here.
    #[arg(long)]
    out_json: Option<std::path::PathBuf>,
    /// Write the CSV profile (mu, psi, u, h, phi) here.
    #[arg(long)]
    out_csv: Option<std::path::PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// geometry | functionals | solver | flow | futaki | all
    #[arg(long)]
    suite: String,
    #[arg(long, default_value_t = 48)]
    grid_n: usize,
    #[arg(long, default_value_t = 20260809)]
    seed: u64,
}

#[derive(Args)]
struct ScanArgs {
    #[arg(long)]
    sigma: String,
    #[arg(long, default_value_t = 64)]
    grid_n: usize,
    /// Comma-separated list of potential amplitudes.
    #[arg(long, default_value = "0.1,0.3,0.5")]
    amplitudes: String,
    /// Samples per amplitude.
    #[arg(long, default_value_t = 50)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_csv: Option<std::path::PathBuf>,
}

#[derive(Args)]
struct SigmaOnly {
    #[arg(long)]
    sigma: String,
    #[arg(long, default_value_t = 64)]
    grid_n: usize,
}

#[derive(Args)]
struct FlowArgs {
    #[arg(long)]
    sigma: String,
    #[arg(long, default_value_t = 64)]
    grid_n: usize,
    #[arg(long, default_value_t = 1e-3)]
    ds: f64,
    #[arg(long, default_value_t = 1.0)]
    s_max: f64,
    /// Per-step monitor table destination.
    #[arg(long)]
    out_csv: Option<std::path::PathBuf>,
}

#[derive(Args)]
struct EigenArgs {
    #[arg(long)]
    sigma: String,
    #[arg(long, default_value_t = 64)]
    grid_n: usize,
    /// Evaluate at the round metric or at the solution of the weight.
    #[arg(long, default_value = "round")]
    at: String,
    /// Acceptance window around the critical eigenvalue.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

fn exit_code_for(err: &EmError) -> u8 {
    match err {
        EmError::SigmaParse(_) | EmError::NeglogOffset(_) | EmError::GridTooSmall { .. } => 3,
        EmError::Stalled { .. }
        | EmError::NoSolutionObstruction { .. }
        | EmError::CalibrationFailed { .. } => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Scan(args) => cmd_scan(args),
        Command::Obstruction(args) => cmd_obstruction(args),
        Command::Futaki(args) => cmd_futaki(args),
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::Flow(args) => cmd_flow(args),
        Command::Eigen(args) => cmd_eigen(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn cmd_solve(args: SolveArgs) -> Result<u8, EmError> {
    let started = Instant::now();
    let raw_sigma = make_sigma(&args.sigma)?;
    let grid = Arc::new(Grid::new(args.grid_n)?);
    let reference = round_reference(Arc::clone(&grid));
    let sigma = normalize_weight(&raw_sigma, &reference);
    let obstruction_raw = obstruction_on(&grid, &raw_sigma);

    let config = ConfigEcho {
        sigma: args.sigma.clone(),
        grid_n: args.grid_n,
        method: args.method.to_string(),
        t_step_init: args.t_step_init,
        t_step_min: args.t_step_min,
        newton_tol: args.newton_tol,
        max_newton: args.max_newton,
        ds: args.ds,
        s_max: args.s_max,
        seed: args.seed,
    };
    let mut record = ResultRecord::new(config, obstruction_raw);
    let profile: Vec<ProfileRow>;
    let mut code = 0u8;

    // Internal failures still leave a record behind (outcome "error").
    macro_rules! bail_with_record {
        ($err:expr) => {{
            record.outcome = "error".into();
            record.wall_time_ms = started.elapsed().as_millis() as u64;
            let json = serde_json::to_string_pretty(&record).expect("record serializes");
            println!("{json}");
            if let Some(path) = &args.out_json {
                let _ = std::fs::write(path, &json);
            }
            return Err($err);
        }};
    }

    match args.method {
        Method::Direct => match direct_solve(&sigma, Arc::clone(&grid)) {
            Ok(state) => {
                record.outcome = "converged".into();
                let f = futaki_invariant(&state, &sigma);
                record.futaki_re = f.re;
                record.futaki_im = f.im;
                record.residual_sup = equation_residual(&state, &sigma);
                profile = ProfileRow::from_state(&state, None);
            }
            Err(EmError::NoSolutionObstruction { .. }) => {
                record.outcome = "no-solution-obstruction".into();
                let f = futaki_invariant(&reference, &sigma);
                record.futaki_re = f.re;
                record.futaki_im = f.im;
                profile = ProfileRow::from_state(&reference, None);
                code = 2;
            }
            Err(other) => bail_with_record!(other),
        },
        Method::Continuity => {
            let opts = ContinuityOpts {
                t_step_init: args.t_step_init,
                t_step_min: args.t_step_min,
                newton_tol: args.newton_tol,
                max_newton: args.max_newton,
                ..Default::default()
            };
            match continuity_solve(&reference, &sigma, &opts) {
                Ok((potential, trace)) => {
                    record.outcome = "converged".into();
                    let state = match apply_potential(&potential) {
                        Ok(state) => state,
                        Err(err) => bail_with_record!(err),
                    };
                    let f = futaki_invariant(&state, &sigma);
                    record.futaki_re = f.re;
                    record.futaki_im = f.im;
                    let last = trace.steps.last().expect("trace nonempty");
                    record.fill_energies(&last.energies);
                    record.residual_sup = last.residual_sup;
                    record.steps = trace.steps.len();
                    profile = ProfileRow::from_state(&state, Some(&potential.phi));
                }
                Err(EmError::Stalled { osc, trace, .. }) => {
                    record.outcome = "stalled".into();
                    let f = futaki_invariant(&reference, &sigma);
                    record.futaki_re = f.re;
                    record.futaki_im = f.im;
                    let last = trace.steps.last().expect("trace nonempty");
                    record.fill_energies(&last.energies);
                    record.osc = osc;
                    record.residual_sup = last.residual_sup;
                    record.steps = trace.steps.len();
                    // stalled: the profile pairs the reference with the
                    // last accepted potential
                    profile = ProfileRow::from_state(&reference, Some(&last.phi));
                    code = 2;
                }
                Err(other) => bail_with_record!(other),
            }
        }
        Method::Flow => {
            let trace = match flow_run(&reference, &sigma, args.s_max, args.ds) {
                Ok(trace) => trace,
                Err(err) => bail_with_record!(err),
            };
            let last = trace.steps.last().expect("flow records its endpoint");
            record.outcome = "converged".into();
            let potential = Potential::new(reference.clone(), last.f.clone());
            let state = match apply_potential(&potential) {
                Ok(state) => state,
                Err(err) => bail_with_record!(err),
            };
            let f = futaki_invariant(&state, &sigma);
            record.futaki_re = f.re;
            record.futaki_im = f.im;
            record.fill_energies(&emsphere::functionals::evaluate(&potential, &sigma)?);
            record.residual_sup = last.fdot_sup;
            record.steps = trace.steps.len();
            profile = ProfileRow::from_state(&state, Some(&last.f));
        }
    }

    record.wall_time_ms = started.elapsed().as_millis() as u64;
    let json = serde_json::to_string_pretty(&record).expect("record serializes");
    println!("{json}");
    if let Some(path) = &args.out_json {
        std::fs::write(path, &json).map_err(io_error)?;
    }
    if let Some(path) = &args.out_csv {
        ProfileRow::write_csv(&profile, path).map_err(io_error)?;
    }
    Ok(code)
}

fn equation_residual(state: &emsphere::MetricState, sigma: &emsphere::SigmaSpec) -> f64 {
    let g = state.grid();
    let dpsi = g.deriv(state.psi());
    let d2psi = g.deriv(&dpsi);
    let twisted: Vec<f64> = state
        .psi()
        .iter()
        .zip(g.nodes())
        .map(|(p, m)| sigma.d1(*m) * p)
        .collect();
    let dtwisted = g.deriv(&twisted);
    (0..g.len())
        .map(|j| (-d2psi[j] + dtwisted[j] - 2.0).abs())
        .fold(0.0_f64, f64::max)
}

fn cmd_verify(args: VerifyArgs) -> Result<u8, EmError> {
    let suite: Suite = args.suite.parse()?;
    let checks = run_suite(suite, args.grid_n, args.seed)?;
    let mut all_pass = true;
    for check in &checks {
        println!("{check}");
        all_pass &= check.pass;
    }
    println!(
        "{}: {} checks, {} failed",
        if all_pass { "OK" } else { "FAILED" },
        checks.len(),
        checks.iter().filter(|c| !c.pass).count()
    );
    Ok(if all_pass { 0 } else { 1 })
}

fn cmd_scan(args: ScanArgs) -> Result<u8, EmError> {
    let raw = make_sigma(&args.sigma)?;
    let (reference, sigma) = reference_setup(&raw, args.grid_n)?;
    // scanning needs the solution metric as the basepoint
    let base = direct_solve(&sigma, reference.grid_arc())?;
    let amplitudes: Vec<f64> = args
        .amplitudes
        .split(',')
        .map(|a| a.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| EmError::SigmaParse(format!("bad amplitude list `{}`", args.amplitudes)))?;

    let mut rng = seeded_rng(args.seed);
    let mut lines = vec!["amplitude,sample,I_tilde,J_tilde,F_tilde,osc".to_string()];
    let mut points: Vec<(f64, f64)> = Vec::new();
    let mut min_f = f64::INFINITY;
    let mut gap_min = f64::INFINITY;
    for &amp in &amplitudes {
        for sample in 0..args.samples {
            let rec = if amp == 0.0 {
                let zero = vec![0.0; base.grid().len()];
                emsphere::functionals::evaluate(&Potential::new(base.clone(), zero), &sigma)?
            } else {
                let phi = random_potential(&base, amp, &mut rng)?;
                emsphere::functionals::evaluate(&Potential::new(base.clone(), phi), &sigma)?
            };
            lines.push(format!(
                "{amp:.6e},{sample},{:.16e},{:.16e},{:.16e},{:.16e}",
                rec.i, rec.j, rec.f, rec.osc
            ));
            points.push((rec.j, rec.f));
            min_f = min_f.min(rec.f);
            gap_min = gap_min.min(rec.i_minus_j);
        }
    }
    // report a linear floor F >= A J - B valid across the sample
    let slope = linear_fit(&points).map(|(a, _)| a).unwrap_or(0.0);
    let b = points
        .iter()
        .map(|(j, f)| slope * j - f)
        .fold(f64::NEG_INFINITY, f64::max);
    println!("scan: {} rows", points.len());
    println!("linear_floor_A = {slope:.6e}");
    println!("linear_floor_B = {b:.6e}");
    println!("min_F = {min_f:.6e}");
    println!("min_I_minus_J = {gap_min:.6e}");
    let csv = lines.join("\n") + "\n";
    if let Some(path) = &args.out_csv {
        std::fs::write(path, &csv).map_err(io_error)?;
    } else {
        print!("{csv}");
    }
    Ok(0)
}

fn cmd_obstruction(args: SigmaOnly) -> Result<u8, EmError> {
    let sigma = make_sigma(&args.sigma)?;
    let grid = Grid::new(args.grid_n)?;
    let value = obstruction_on(&grid, &sigma);
    println!("obstruction = {value:.12e}");
    Ok(if value.abs() > 1e-8 { 2 } else { 0 })
}

fn cmd_futaki(args: SigmaOnly) -> Result<u8, EmError> {
    // evaluated with the weight exactly as given (no normalization shift:
    // the shift rescales the value without moving its zero set)
    let sigma = make_sigma(&args.sigma)?;
    let grid = Arc::new(Grid::new(args.grid_n)?);
    let reference = round_reference(Arc::clone(&grid));
    let value = futaki_invariant(&reference, &sigma);
    let obstruction = obstruction_on(&grid, &sigma);
    println!("futaki_re = {:.12e}", value.re);
    println!("futaki_im = {:.12e}", value.im);
    println!("obstruction = {obstruction:.12e}");
    Ok(0)
}

fn cmd_calibrate(args: SigmaOnly) -> Result<u8, EmError> {
    let base = make_sigma(&args.sigma)?;
    let (tilt, calibrated) = calibrate(&base)?;
    println!("tilt = {tilt:.12e}");
    println!("calibrated = {calibrated}");
    println!(
        "residual_obstruction = {:.3e}",
        emsphere::obstruction(&calibrated)
    );
    println!("class = {}", calibrated.admissibility_class());
    Ok(0)
}

fn cmd_flow(args: FlowArgs) -> Result<u8, EmError> {
    let raw = make_sigma(&args.sigma)?;
    let (reference, sigma) = reference_setup(&raw, args.grid_n)?;
    let trace = flow_run(&reference, &sigma, args.s_max, args.ds)?;
    let report = emsphere::flow_bound_report(&trace);
    println!("steps = {}", trace.steps.len());
    println!("ds_used = {:.3e}", trace.ds);
    println!("initial_sup = {:.6e}", trace.initial_sup);
    println!("trivial_headroom = {}", report.trivial);
    println!("value_bound_max = {:.12}", report.value_bound_max);
    println!("gradient_bound_max = {:.12}", report.gradient_bound_max);
    println!("laplacian_margin_min = {:.3e}", report.laplacian_margin_min);
    println!("normalized_sup_growth_max = {:.3e}", report.max_principle_growth);
    println!("convexity_term_max = {:.3e}", report.convexity_max);
    println!("area_dev_max = {:.3e}", report.area_dev_max);
    if let Some(path) = &args.out_csv {
        let mut lines =
            vec!["s,fdot_sup,value_ratio,gradient_ratio,laplacian_margin,h_plus_sigma_sup".to_string()];
        for st in &trace.steps {
            lines.push(format!(
                "{:.6e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                st.s,
                st.fdot_sup,
                st.value_bound_ratio,
                st.gradient_bound_ratio,
                st.laplacian_bound_margin,
                st.h_plus_sigma_sup
            ));
        }
        std::fs::write(path, lines.join("\n") + "\n").map_err(io_error)?;
    }
    Ok(0)
}

fn cmd_eigen(args: EigenArgs) -> Result<u8, EmError> {
    let raw = make_sigma(&args.sigma)?;
    let (reference, sigma) = reference_setup(&raw, args.grid_n)?;
    let state = match args.at.as_str() {
        "round" => reference,
        "solution" => direct_solve(&sigma, reference.grid_arc())?,
        other => {
            return Err(EmError::SigmaParse(format!(
                "unknown basepoint `{other}` (round | solution)"
            )))
        }
    };
    let pairs = lambda1_eigenspace(&state, &sigma, args.tol)?;
    println!("eigenpairs_within_tol = {}", pairs.len());
    for (k, (lambda, field)) in pairs.iter().enumerate() {
        let lap = emsphere::weighted_laplacian(&state, &sigma, field);
        let residual = lap
            .iter()
            .zip(field)
            .map(|(a, v)| (a - lambda * v).abs())
            .fold(0.0_f64, f64::max);
        println!("lambda[{k}] = {lambda:.14} residual = {residual:.3e}");
    }
    Ok(0)
}

fn io_error(err: std::io::Error) -> EmError {
    EmError::Numerical(format!("io: {err}"))
}
