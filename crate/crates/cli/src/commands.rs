use kronmde::linalg::C64;
use kronmde::mde::{solve_at, MdeSolution, MdeSolver, SolverOptions};
use kronmde::model::{direct_hermitian, hermitize, validate};
use kronmde::sampler::{containment_report, global_law_distance, ContainmentReport, Membership, SampleConfig};
use kronmde::spectrum::{
    bracket_grid, compute_dos, estimate_support, pseudospectrum, pseudospectrum_family, ScanOptions, SupportEstimate,
};
use kronmde::superop::StabilityDiagnostics;
use kronmde::{modelfile, presets, Error, HermitianDysonData, KroneckerModel, Result};
use serde::Serialize;

use crate::args::*;
use crate::output::{emit, io_error, Run};

/// Outcome of a command that ran to completion; errors map to exit codes separately.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Success,
    NotConverged,
    PartialFailure,
    VerificationFailed,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Success => 0,
            Status::NotConverged => 3,
            Status::PartialFailure => 4,
            Status::VerificationFailed => 5,
        }
    }
}

/// Exit code of a library error: input problems are 2, numerical breakdowns 3.
pub fn error_code(e: &Error) -> u8 {
    match e {
        Error::NoConvergence { .. }
        | Error::Continuation { .. }
        | Error::Singular(_)
        | Error::Positivity(_)
        | Error::Eigensolver(_) => 3,
        Error::Dimension { .. }
        | Error::Validation(_)
        | Error::Contract(_)
        | Error::TooLarge { .. }
        | Error::Parse(_)
        | Error::Json(_)
        | Error::Io(_) => 2,
    }
}

fn load_model(src: &ModelSource) -> Result<KroneckerModel> {
    let model = match (&src.model, src.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
            modelfile::from_json(&text)?
        }
        (None, Some(p)) => presets::build(p.0, src.n.unwrap_or(1000)),
        (None, None) => return Err(Error::Contract("either --model or --preset is required".into())),
    };
    validate(&model)?.into_result()?;
    Ok(model)
}

fn hermitian_data(model: &KroneckerModel, zeta: Option<Complex>) -> Result<HermitianDysonData> {
    match zeta {
        Some(z) => hermitize(model, z.0),
        None if model.is_hermitian() => direct_hermitian(model),
        None => Err(Error::Contract(
            "the model is not Hermitian; pass --zeta to solve its Hermitization".into(),
        )),
    }
}

fn scan_options(scan: &ScanArgs, solver: &SolverArgs) -> ScanOptions {
    ScanOptions {
        solver: solver.options(scan.eta_floor),
        eta_floor: scan.eta_floor,
        in_threshold: scan.threshold,
    }
}

/// Continuation down to `Im z`; if it breaks down, a direct solve supplies the
/// unconverged iterate for the report.
fn solve_point(data: &HermitianDysonData, z: C64, opts: &SolverOptions) -> Result<MdeSolution> {
    if !(z.im > 0.0) {
        return Err(Error::Contract(format!("Im z must be positive, got z = {z}")));
    }
    match MdeSolver::new(data)?.solve_continuation(z.re, &[z.im], opts) {
        Ok(mut sols) => Ok(sols.remove(0)),
        Err(e @ (Error::Continuation { .. } | Error::NoConvergence { .. })) => {
            eprintln!("warning: {e}");
            solve_at(data, z, opts)
        }
        Err(e) => Err(e),
    }
}

pub fn preset(args: &PresetArgs) -> Result<Status> {
    if args.n == 0 {
        return Err(Error::Contract("--n must be positive".into()));
    }
    let mut text = modelfile::to_json_pretty(&presets::build(args.name.0, args.n))?;
    text.push('\n');
    emit(args.out.as_deref(), &text)?;
    Ok(Status::Success)
}

pub fn solve(cli: &Cli, args: &SolveArgs) -> Result<Status> {
    let mut run = Run::start("solve", cli);
    let model = load_model(&args.model.source)?;
    run.model_hash = modelfile::model_hash(&model)?;
    let data = hermitian_data(&model, args.model.zeta)?;
    let opts = args.solver.options(args.z.0.im.min(args.solver.eta_start));
    let sol = solve_point(&data, args.z.0, &opts)?;
    run.write_json(args.out.as_deref(), &sol)?;
    Ok(if sol.converged { Status::Success } else { Status::NotConverged })
}

pub fn dos(cli: &Cli, args: &DosArgs) -> Result<Status> {
    let mut run = Run::start("dos", cli);
    let model = load_model(&args.model.source)?;
    run.model_hash = modelfile::model_hash(&model)?;
    let data = hermitian_data(&model, args.model.zeta)?;
    if args.points < 2 {
        return Err(Error::Contract("--points must be at least 2".into()));
    }
    let grid = match args.e_range {
        Some(r) => r.grid(args.points),
        None => bracket_grid(&data, 0.25, args.points)?,
    };
    let curve = compute_dos(&data, &grid, args.eta, &args.solver.options(args.eta))?;
    run.write_csv(args.out.as_deref(), &curve.to_csv())?;
    if curve.failures > 0 {
        eprintln!(
            "warning: the solver failed at {} of {} energies; their rows are NaN",
            curve.failures,
            grid.len()
        );
        return Ok(Status::PartialFailure);
    }
    Ok(Status::Success)
}

pub fn support(cli: &Cli, args: &SupportArgs) -> Result<Status> {
    let mut run = Run::start("support", cli);
    let model = load_model(&args.model.source)?;
    run.model_hash = modelfile::model_hash(&model)?;
    let data = hermitian_data(&model, args.model.zeta)?;
    if args.points < 2 {
        return Err(Error::Contract("--points must be at least 2".into()));
    }
    let grid = match args.e_range {
        Some(r) => r.grid(args.points),
        None => bracket_grid(&data, 0.1, args.points)?,
    };
    let est: SupportEstimate = estimate_support(
        &data,
        &grid,
        args.scan.eta_floor,
        args.scan.threshold,
        &args.solver.options(args.scan.eta_floor),
    )?;
    run.write_json(args.out.as_deref(), &est)?;
    if est.unknown_count() > 0 {
        eprintln!("warning: {} grid points could not be classified", est.unknown_count());
        return Ok(Status::PartialFailure);
    }
    Ok(Status::Success)
}

#[derive(Serialize)]
struct PseudospectrumSummary {
    epsilon: f64,
    zeta_grid: kronmde::spectrum::ZetaGrid,
    points: usize,
    member_count: usize,
    tilde_count: usize,
    unknown_count: usize,
    scan_step: f64,
    scan_max_e: f64,
    eta_floor: f64,
    in_threshold: f64,
}

pub fn pseudospectrum_cmd(cli: &Cli, args: &PseudospectrumArgs) -> Result<Status> {
    let mut run = Run::start("pseudospectrum", cli);
    let model = load_model(&args.source)?;
    run.model_hash = modelfile::model_hash(&model)?;
    let scan = scan_options(&args.scan, &args.solver);
    let grid = pseudospectrum_family(&model, &args.grid, &[args.epsilon], &scan, args.step)?.remove(0);
    run.write_csv(args.out.as_deref(), &grid.to_csv())?;
    let unknown = grid.unknown_count();
    if let Some(path) = &args.report {
        let summary = PseudospectrumSummary {
            epsilon: grid.epsilon,
            zeta_grid: grid.zeta_grid,
            points: grid.member.len(),
            member_count: grid.member.iter().filter(|&&b| b).count(),
            tilde_count: grid.member_tilde.iter().filter(|&&b| b).count(),
            unknown_count: unknown,
            scan_step: grid.scan_step,
            scan_max_e: grid.scan_max_e,
            eta_floor: grid.eta_floor,
            in_threshold: grid.in_threshold,
        };
        run.write_json(Some(path), &summary)?;
    }
    if unknown > 0 {
        eprintln!("warning: {unknown} grid points are UNKNOWN and counted as members");
        return Ok(Status::PartialFailure);
    }
    Ok(Status::Success)
}

#[derive(Serialize)]
struct GlobalLaw {
    kolmogorov_distance: f64,
    bound: f64,
    eta: f64,
    grid_points: usize,
    passed: bool,
}

#[derive(Serialize)]
struct VerifyReport {
    passed: bool,
    containment: Option<ContainmentReport>,
    global_law: Option<GlobalLaw>,
}

/// Shift points of a model whose expectation blocks all equal one diagonal matrix.
fn example_points(model: &KroneckerModel) -> Result<Vec<C64>> {
    let blocks = &model.expectation.a_tilde;
    let first = &blocks[0];
    let diagonal = (0..first.nrows()).all(|i| (0..first.ncols()).all(|j| i == j || first[(i, j)] == C64::new(0.0, 0.0)));
    if !diagonal || blocks.iter().any(|b| b != first) {
        return Err(Error::Contract(
            "the example oracle needs identical diagonal expectation blocks".into(),
        ));
    }
    Ok(first.diagonal().iter().copied().collect())
}

pub fn verify(cli: &Cli, args: &VerifyArgs) -> Result<Status> {
    let mut run = Run::start("verify", cli);
    run.seed = Some(args.seed);
    let model = load_model(&args.source)?;
    run.model_hash = modelfile::model_hash(&model)?;
    let hermitian = model.is_hermitian();
    if args.oracle.is_none() && !hermitian {
        return Err(Error::Contract(
            "non-Hermitian models need --oracle (disk:R, example or grid:SPEC)".into(),
        ));
    }
    let cfg = SampleConfig {
        seed: args.seed,
        distribution: args.distribution.into(),
        trials: args.trials,
    };
    let scan = scan_options(&args.scan, &args.solver);
    let mask;
    let containment = match &args.oracle {
        None => None,
        Some(spec) => {
            let membership = match spec {
                OracleSpec::Disk(r) => Membership::Disk(*r),
                OracleSpec::Example => Membership::Example(example_points(&model)?),
                OracleSpec::Grid(g) => {
                    mask = pseudospectrum(&model, g, args.epsilon, &scan)?;
                    Membership::Grid(&mask)
                }
            };
            Some(containment_report(&model, &cfg, args.epsilon, &membership, args.max_n)?)
        }
    };
    let global_law = if hermitian {
        let data = direct_hermitian(&model)?;
        let grid = bracket_grid(&data, 0.25, 1201)?;
        let dos = compute_dos(&data, &grid, args.eta, &args.solver.options(args.eta))?;
        let d = global_law_distance(&model, &cfg, &dos)?;
        Some(GlobalLaw {
            kolmogorov_distance: d,
            bound: args.ks_bound,
            eta: args.eta,
            grid_points: grid.len(),
            passed: d < args.ks_bound,
        })
    } else {
        None
    };
    let passed = containment.as_ref().is_none_or(|c| c.passed()) && global_law.as_ref().is_none_or(|g| g.passed);
    let report = VerifyReport {
        passed,
        containment,
        global_law,
    };
    run.write_json(args.out.as_deref(), &report)?;
    Ok(if passed { Status::Success } else { Status::VerificationFailed })
}

#[derive(Serialize)]
struct DiagnoseReport {
    z: [f64; 2],
    converged: bool,
    residual: f64,
    iterations: usize,
    min_im_eig: f64,
    diagnostics: StabilityDiagnostics,
}

pub fn diagnose(cli: &Cli, args: &DiagnoseArgs) -> Result<Status> {
    let mut run = Run::start("diagnose", cli);
    let model = load_model(&args.model.source)?;
    run.model_hash = modelfile::model_hash(&model)?;
    let data = hermitian_data(&model, args.model.zeta)?;
    let z = args.z.0;
    let sol = solve_point(&data, z, &args.solver.options(z.im.min(args.solver.eta_start)))?;
    if !sol.converged {
        return Err(Error::NoConvergence {
            iterations: sol.iterations,
            residual: sol.residual,
        });
    }
    let diagnostics = kronmde::superop::f_operator_analysis(&data, &sol.m, z)?;
    let report = DiagnoseReport {
        z: [z.re, z.im],
        converged: sol.converged,
        residual: sol.residual,
        iterations: sol.iterations,
        min_im_eig: sol.min_im_eig,
        diagnostics,
    };
    run.write_json(args.out.as_deref(), &report)?;
    Ok(Status::Success)
}

pub fn run(cli: &Cli) -> Result<Status> {
    match &cli.command {
        Command::Solve(a) => solve(cli, a),
        Command::Dos(a) => dos(cli, a),
        Command::Support(a) => support(cli, a),
        Command::Pseudospectrum(a) => pseudospectrum_cmd(cli, a),
        Command::Verify(a) => verify(cli, a),
        Command::Diagnose(a) => diagnose(cli, a),
        Command::Preset(a) => preset(a),
    }
}
