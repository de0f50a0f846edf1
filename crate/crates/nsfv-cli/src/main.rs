//! Command-line front end.
//!
//! ```text
//! nsfv run      [config.cfg] [--key=value ...]   simulate, write diagnostics CSV (+ VTK)
//! nsfv verify   [--dims=2|3|both] [--grids=2,4,8,16,32] [--trials=100] [--seed=1]
//! nsfv renorm   [config.cfg] [--key=value ...]   renormalized-equation residuals on one step
//! nsfv converge [config.cfg] [--grids=16,32,64] [--mode=cauchy|reference] [--ref=128] [--out=study]
//! nsfv mms      [config.cfg] [--grids=16,32,64] [--out=mms_study]
//! ```
//!
//! Flags override config-file keys. Exit codes: 0 success, 1 verification or
//! I/O failure, 2 configuration error, 3 solver non-convergence, 4 loss of
//! positivity. `NSFV_THREADS` caps the worker pool; it never changes results.

use nsfv::config::{self, ConfigError};
use nsfv::mesh::Mesh;
use nsfv::stepper::{self, RunConfig, StepError, Stepper};
use nsfv::verify::{self, StudyMode};
use std::f64::consts::PI;
use std::process::ExitCode;

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("NSFV_THREADS") {
        match threads.parse::<usize>() {
            Ok(t) if t > 0 => nsfv::par::configure_threads(t),
            _ => {
                eprintln!("NSFV_THREADS must be a positive integer, got '{threads}'");
                return ExitCode::from(2);
            }
        }
    }

    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(command) = args.first() else {
        eprintln!("{USAGE}");
        return ExitCode::from(2);
    };
    let rest = &args[1..];
    let code = match command.as_str() {
        "run" => cmd_run(rest),
        "verify" => cmd_verify(rest),
        "renorm" => cmd_renorm(rest),
        "converge" => cmd_converge(rest),
        "mms" => cmd_mms(rest),
        "-h" | "--help" | "help" => {
            println!("{USAGE}");
            Ok(())
        }
        other => {
            eprintln!("unknown command '{other}'\n{USAGE}");
            return ExitCode::from(2);
        }
    };
    match code {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

const USAGE: &str = "usage: nsfv <run|verify|renorm|converge|mms> [config] [--key=value ...]";

/// CLI failure with a process exit code.
#[derive(Debug)]
enum CliError {
    Config(String),
    NonConvergence(String),
    Positivity(String),
    Failed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::NonConvergence(_) => 3,
            CliError::Positivity(_) => 4,
            CliError::Failed(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m)
            | CliError::NonConvergence(m)
            | CliError::Positivity(m)
            | CliError::Failed(m) => write!(f, "{m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<StepError> for CliError {
    fn from(e: StepError) -> Self {
        match &e {
            StepError::NonConvergence { .. } | StepError::LinearSolveFailure(_) => {
                CliError::NonConvergence(e.to_string())
            }
            StepError::PositivityLoss { .. } => CliError::Positivity(e.to_string()),
            StepError::Mesh(_) | StepError::Config(_) => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failed(e.to_string())
    }
}

type Flags = Vec<(String, String)>;

/// Split arguments into an optional positional config path and
/// `--key=value` flags.
fn split_args(args: &[String]) -> Result<(Option<&str>, Flags), CliError> {
    let mut path = None;
    let mut flags = Vec::new();
    for arg in args {
        if let Some(rest) = arg.strip_prefix("--") {
            let (key, value) = rest.split_once('=').ok_or_else(|| {
                CliError::Config(format!("flag '{arg}' must have the form --key=value"))
            })?;
            flags.push((key.to_string(), value.to_string()));
        } else if path.is_none() {
            path = Some(arg.as_str());
        } else {
            return Err(CliError::Config(format!("unexpected argument '{arg}'")));
        }
    }
    Ok((path, flags))
}

/// Flags consumed by the subcommands themselves, not the run config.
const SUBCOMMAND_FLAGS: [&str; 6] = ["grids", "mode", "ref", "out", "trials", "seed"];

fn load_config(args: &[String]) -> Result<(RunConfig, Flags), CliError> {
    let (path, mut flags) = split_args(args)?;
    let mut config = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read config '{p}': {e}")))?;
            config::parse_config(&text)?
        }
        None => config::parse_config("")?,
    };
    let passthrough: Flags = flags
        .iter()
        .filter(|(k, _)| SUBCOMMAND_FLAGS.contains(&k.as_str()))
        .cloned()
        .collect();
    flags.retain(|(k, _)| !SUBCOMMAND_FLAGS.contains(&k.as_str()));
    config::apply_overrides(&mut config, &flags)?;
    Ok((config, passthrough))
}

fn flag<'a>(flags: &'a [(String, String)], key: &str) -> Option<&'a str> {
    flags
        .iter()
        .rev()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
}

fn parse_grid_list(value: &str) -> Result<Vec<usize>, CliError> {
    let grids: Result<Vec<usize>, _> = value.split(',').map(|s| s.trim().parse()).collect();
    grids.map_err(|_| CliError::Config(format!("bad grid list '{value}'")))
}

fn cmd_run(args: &[String]) -> Result<(), CliError> {
    let (config, _) = load_config(args)?;
    println!("resolved configuration:\n{}", config::summarize(&config));
    let artifacts = stepper::run(&config)?;
    nsfv::io::write_diagnostics_file(&config.output.diagnostics_path, &artifacts.records)?;
    println!(
        "wrote {} records to {}",
        artifacts.records.len(),
        config.output.diagnostics_path
    );
    for state in &artifacts.snapshots {
        let path = format!(
            "{}_{:06}.vtk",
            config.output.snapshot_prefix, state.step_index
        );
        nsfv::io::write_snapshot_file(&path, state)?;
        println!("wrote snapshot {path}");
    }
    let first = artifacts.records.first().expect("run emits records");
    let last = artifacts.records.last().expect("run emits records");
    let mass_drift = ((last.mass - first.mass) / first.mass).abs();
    let worst_energy = artifacts
        .records
        .iter()
        .map(|r| r.energy_residual.abs())
        .fold(0.0, f64::max);
    let worst_entropy = artifacts
        .records
        .iter()
        .map(|r| r.entropy_residual.abs())
        .fold(0.0, f64::max);
    println!(
        "final time {:.6e}: mass drift {mass_drift:.3e}, max |energy residual| {worst_energy:.3e}, max |entropy residual| {worst_entropy:.3e}",
        last.time
    );
    Ok(())
}

fn cmd_verify(args: &[String]) -> Result<(), CliError> {
    let (_, flags) = split_args(args)?;
    let grids = match flag(&flags, "grids") {
        Some(v) => parse_grid_list(v)?,
        None => vec![2, 4, 8, 16, 32],
    };
    let dims: Vec<usize> = match flag(&flags, "dims").unwrap_or("both") {
        "2" => vec![2],
        "3" => vec![3],
        "both" => vec![2, 3],
        other => return Err(CliError::Config(format!("bad dims '{other}'"))),
    };
    let trials: usize = flag(&flags, "trials")
        .unwrap_or("100")
        .parse()
        .map_err(|_| CliError::Config("bad trials".into()))?;
    let seed: u64 = flag(&flags, "seed")
        .unwrap_or("1")
        .parse()
        .map_err(|_| CliError::Config("bad seed".into()))?;

    let tol = 1e-12;
    let mut failed = false;
    for &dim in &dims {
        for &n in &grids {
            let mesh = Mesh::unit(dim, n).map_err(|e| CliError::Config(e.to_string()))?;
            let report = verify::check_identities(&mesh, trials, seed);
            let conv = verify::check_convective_reformulation(
                &mesh,
                0.6,
                seed,
                |x| (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos(),
                |x, d| match d {
                    0 => 2.0 * PI * (2.0 * PI * x[0]).cos() * (2.0 * PI * x[1]).cos(),
                    1 => -2.0 * PI * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin(),
                    _ => 0.0,
                },
            );
            let worst = report.max_residual().max(conv);
            let status = if worst <= tol { "pass" } else { "FAIL" };
            println!(
                "dim {dim} n {n:>3}: max identity residual {:.3e}, convective reformulation {:.3e}  [{status}]",
                report.max_residual(),
                conv
            );
            if worst > tol {
                failed = true;
                for (name, value) in &report.entries {
                    println!("    {name}: {value:.3e}");
                }
            }
        }
    }
    if failed {
        Err(CliError::Failed(format!(
            "identity battery exceeded the {tol:.0e} threshold"
        )))
    } else {
        println!("all identities within {tol:.0e}");
        Ok(())
    }
}

fn cmd_renorm(args: &[String]) -> Result<(), CliError> {
    let (config, flags) = load_config(args)?;
    let seed: u64 = flag(&flags, "seed")
        .unwrap_or("1")
        .parse()
        .map_err(|_| CliError::Config("bad seed".into()))?;
    let stepper = Stepper::new(&config)?;
    let s0 = stepper.init_from_kind(config.init)?;
    let (s1, report) = stepper.step(&s0)?;
    println!(
        "one step at n = {}, dt = {:.3e}: {} Picard iterations, residual {:.3e}",
        config.n,
        stepper.dt(),
        report.picard_iterations,
        report.final_residual_norm
    );

    use rand::prelude::*;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mesh = stepper.mesh();
    let bound = 10.0 * config.solver.picard_tol;
    let mut worst: f64 = 0.0;
    let ones = nsfv::fields::CellField::constant(mesh, 1.0);
    let mut cases = vec![("phi = 1".to_string(), ones)];
    for i in 1..=3 {
        let values = (0..mesh.cell_count())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        cases.push((
            format!("random phi #{i}"),
            nsfv::fields::CellField::from_values(mesh, values),
        ));
    }
    for (label, phi) in &cases {
        let rc = verify::check_renormalized_continuity(&stepper, &s1, &s0, phi)?;
        let re = verify::check_renormalized_energy(&stepper, &s1, &s0, phi)?;
        println!("  {label:<14} continuity {rc:.3e}   internal energy {re:.3e}");
        worst = worst.max(rc).max(re);
    }
    if worst <= bound {
        println!("renormalized residuals within 10 * picard_tol = {bound:.3e}");
        Ok(())
    } else {
        Err(CliError::Failed(format!(
            "renormalized residual {worst:.3e} exceeds {bound:.3e}"
        )))
    }
}

fn cmd_converge(args: &[String]) -> Result<(), CliError> {
    let (config, flags) = load_config(args)?;
    let grids = match flag(&flags, "grids") {
        Some(v) => parse_grid_list(v)?,
        None => vec![16, 32, 64],
    };
    let mode = match flag(&flags, "mode").unwrap_or("cauchy") {
        "cauchy" => StudyMode::Cauchy,
        "reference" => {
            let n_ref = match flag(&flags, "ref") {
                Some(v) => v
                    .parse()
                    .map_err(|_| CliError::Config(format!("bad --ref '{v}'")))?,
                None => 2 * grids.iter().max().copied().unwrap_or(64),
            };
            StudyMode::Reference { n_ref }
        }
        other => return Err(CliError::Config(format!("bad mode '{other}'"))),
    };
    run_study(
        &config,
        &grids,
        mode,
        flag(&flags, "out").unwrap_or("study"),
    )
}

fn cmd_mms(args: &[String]) -> Result<(), CliError> {
    let (mut config, flags) = load_config(args)?;
    if config.dim != 2 {
        return Err(CliError::Config("the mms study is two-dimensional".into()));
    }
    config.init = nsfv::stepper::InitKind::Mms;
    config.forcing = nsfv::stepper::ForcingKind::Mms;
    let grids = match flag(&flags, "grids") {
        Some(v) => parse_grid_list(v)?,
        None => vec![16, 32, 64],
    };
    run_study(
        &config,
        &grids,
        StudyMode::Mms,
        flag(&flags, "out").unwrap_or("mms_study"),
    )
}

fn run_study(
    config: &RunConfig,
    grids: &[usize],
    mode: StudyMode,
    out: &str,
) -> Result<(), CliError> {
    let study = verify::convergence_study(config, grids, mode)?;
    print!("{}", nsfv::io::format_study(&study));
    let txt = format!("{out}.txt");
    let csv = format!("{out}.csv");
    std::fs::write(&txt, nsfv::io::format_study(&study))?;
    nsfv::io::write_study_csv(std::fs::File::create(&csv)?, &study)?;
    println!("wrote {txt} and {csv}");
    Ok(())
}
