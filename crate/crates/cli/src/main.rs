use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fracinv::experiments::{
    resolve_grading, run_alpha_sweep, run_conv_space, run_conv_time, run_direct, run_identify,
    run_noise_study, write_csv, ChecksTable, CoefficientTable, ConvTable, CsvTable, NoiseRowKind,
    ProblemSelection, SolutionTable,
};
use fracinv::inverse::{CouplingMode, IdentifyOptions};
use fracinv::problems::{PROBLEM_NAMES, RNG_ALGORITHM};
use fracinv::verify::run_property_suite;

#[derive(Parser, Debug)]
#[command(
    name = "fracinv",
    version,
    about = "Time-fractional diffusion on graded meshes and identification of the reaction coefficient p(t)"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Forward solve with the problem's known p; writes solution.csv and checks.csv
    Direct(DirectArgs),
    /// Recover p and u from the observation g; writes p_series.csv, solution.csv and checks.csv
    Identify(IdentifyArgs),
    /// Spatial refinement at fixed M; writes conv_space.csv
    ConvSpace(ConvSpaceArgs),
    /// Temporal refinement at fixed N; writes conv_time.csv
    ConvTime(ConvTimeArgs),
    /// Identification from noisy observations over several levels and seeds; writes noise.csv
    Noise(NoiseArgs),
    /// One identification per alpha; writes sweep.csv
    Sweep(SweepArgs),
    /// Run the property suite and print a pass/fail matrix
    Verify(VerifyArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Registered problem name
    #[arg(long, default_value = "manufactured")]
    problem: String,
    /// Mesh grading exponent r in t_k = T (k/M)^r [default: (2 - alpha)/alpha]
    #[arg(long = "r")]
    r: Option<f64>,
    /// Final time T (overrides the problem's value)
    #[arg(long = "T")]
    final_time: Option<f64>,
    /// Domain length l (overrides the problem's value)
    #[arg(long = "l")]
    length: Option<f64>,
    /// Output directory, created if missing
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

impl Common {
    fn selection(&self) -> ProblemSelection {
        ProblemSelection {
            name: self.problem.clone(),
            length: self.length,
            final_time: self.final_time,
        }
    }

    fn flags(&self) -> Vec<(&'static str, String)> {
        let mut f = vec![("--problem", self.problem.clone())];
        if let Some(r) = self.r {
            f.push(("--r", r.to_string()));
        }
        if let Some(t) = self.final_time {
            f.push(("--T", t.to_string()));
        }
        if let Some(l) = self.length {
            f.push(("--l", l.to_string()));
        }
        f
    }
}

#[derive(Args, Debug, Clone)]
struct Solver {
    /// Coupling between the solve and the recovery of p: lagged or iterated
    #[arg(long, default_value = "lagged")]
    mode: CouplingMode,
    /// Worker threads for independent runs
    #[arg(long, default_value_t = 1)]
    parallel: usize,
}

impl Solver {
    fn options(&self) -> IdentifyOptions {
        IdentifyOptions {
            mode: self.mode,
            ..Default::default()
        }
    }
}

#[derive(Args, Debug)]
struct DirectArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Spatial intervals
    #[arg(long = "N", default_value_t = 128)]
    n: usize,
    /// Time levels
    #[arg(long = "M", default_value_t = 128)]
    m: usize,
}

#[derive(Args, Debug)]
struct IdentifyArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    solver: Solver,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long = "N", default_value_t = 128)]
    n: usize,
    #[arg(long = "M", default_value_t = 128)]
    m: usize,
    /// Relative noise level delta on g and its Caputo derivative
    #[arg(long = "noise-level", default_value_t = 0.0)]
    noise_level: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args, Debug)]
struct ConvSpaceArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    solver: Solver,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Comma-separated, increasing
    #[arg(long = "N", value_delimiter = ',', default_value = "16,32,64,128")]
    n: Vec<usize>,
    #[arg(long = "M", default_value_t = 1000)]
    m: usize,
}

#[derive(Args, Debug)]
struct ConvTimeArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    solver: Solver,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long = "N", default_value_t = 128)]
    n: usize,
    /// Comma-separated, increasing
    #[arg(long = "M", value_delimiter = ',', default_value = "64,128,256,512")]
    m: Vec<usize>,
}

#[derive(Args, Debug)]
struct NoiseArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    solver: Solver,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long = "N", default_value_t = 128)]
    n: usize,
    #[arg(long = "M", default_value_t = 128)]
    m: usize,
    /// Comma-separated noise levels
    #[arg(
        long = "noise-level",
        value_delimiter = ',',
        default_value = "0,0.01,0.03,0.05"
    )]
    noise_level: Vec<f64>,
    /// Comma-separated seeds
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9,10")]
    seed: Vec<u64>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    solver: Solver,
    /// Comma-separated values in (0, 1)
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.5,0.9")]
    alpha: Vec<f64>,
    #[arg(long = "N", default_value_t = 128)]
    n: usize,
    #[arg(long = "M", default_value_t = 128)]
    m: usize,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, default_value_t = 1)]
    parallel: usize,
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn provenance(command: &str, flags: &[(&'static str, String)]) -> String {
    let mut line = format!("fracinv {command}");
    for (k, v) in flags {
        line.push_str(&format!(" {k} {v}"));
    }
    line.push_str(&format!(" rng={RNG_ALGORITHM}"));
    line
}

struct Output<'a> {
    dir: &'a Path,
    provenance: String,
}

impl<'a> Output<'a> {
    fn new(
        dir: &'a Path,
        command: &str,
        flags: &[(&'static str, String)],
    ) -> fracinv::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir,
            provenance: provenance(command, flags),
        })
    }

    fn write(&self, name: &str, table: &impl CsvTable) -> fracinv::Result<()> {
        let path = self.dir.join(name);
        write_csv(&path, &self.provenance, table)?;
        println!("wrote {}", path.display());
        Ok(())
    }
}

fn report_checks(ok: bool, stability_holds: bool, apriori_holds: bool, nonnegative: bool) {
    println!(
        "checks: stability {}, a priori {}{}",
        if stability_holds { "ok" } else { "FAILED" },
        if apriori_holds { "ok" } else { "FAILED" },
        if nonnegative {
            ""
        } else {
            " (p < 0 somewhere: bounds not claimed)"
        }
    );
    if !ok {
        eprintln!("property checks failed");
    }
}

fn direct(args: &DirectArgs) -> fracinv::Result<bool> {
    let spec = args.common.selection().build(args.alpha)?;
    let r = resolve_grading(args.common.r, args.alpha);
    let mut flags = args.common.flags();
    flags.extend([
        ("--alpha", args.alpha.to_string()),
        ("--N", args.n.to_string()),
        ("--M", args.m.to_string()),
    ]);
    let out = Output::new(&args.common.out, "direct", &flags)?;
    let run = run_direct(&spec, args.n, args.m, r)?;
    out.write(
        "solution.csv",
        &SolutionTable {
            field: &run.field,
            spec: &spec,
            grid: &run.grid,
            mesh: &run.mesh,
        },
    )?;
    out.write(
        "checks.csv",
        &ChecksTable {
            stability: &run.stability,
            apriori: &run.apriori,
        },
    )?;
    if let Some(e) = run.error_u {
        println!("u at t=T: max err {:e}, L2 err {:e}", e.max_err, e.l2_err);
    }
    let ok = run.checks_pass();
    report_checks(
        ok,
        run.stability.holds(),
        run.apriori.holds(),
        run.stability.coefficient_nonnegative,
    );
    Ok(ok)
}

fn identify(args: &IdentifyArgs) -> fracinv::Result<bool> {
    let spec = args.common.selection().build(args.alpha)?;
    let r = resolve_grading(args.common.r, args.alpha);
    let mut flags = args.common.flags();
    flags.extend([
        ("--alpha", args.alpha.to_string()),
        ("--N", args.n.to_string()),
        ("--M", args.m.to_string()),
        ("--mode", args.solver.mode.to_string()),
        ("--noise-level", args.noise_level.to_string()),
        ("--seed", args.seed.to_string()),
    ]);
    let out = Output::new(&args.common.out, "identify", &flags)?;
    let run = run_identify(
        &spec,
        args.n,
        args.m,
        r,
        args.noise_level,
        args.seed,
        &args.solver.options(),
    )?;
    out.write(
        "p_series.csv",
        &CoefficientTable {
            p: &run.field().p,
            spec: &spec,
            mesh: &run.mesh,
        },
    )?;
    out.write(
        "solution.csv",
        &SolutionTable {
            field: run.field(),
            spec: &spec,
            grid: &run.grid,
            mesh: &run.mesh,
        },
    )?;
    out.write(
        "checks.csv",
        &ChecksTable {
            stability: &run.stability,
            apriori: &run.apriori,
        },
    )?;
    if let Some(e) = run.error_p {
        println!("p: max err {:e}, L2 err {:e}", e.max_err, e.l2_err);
    }
    if let Some(e) = run.error_u {
        println!("u at t=T: max err {:e}, L2 err {:e}", e.max_err, e.l2_err);
    }
    let solves: usize = run.identification.solves_per_level.iter().sum();
    println!("linear solves: {solves}");
    let ok = run.checks_pass();
    report_checks(
        ok,
        run.stability.holds(),
        run.apriori.holds(),
        run.stability.coefficient_nonnegative,
    );
    Ok(ok)
}

fn print_conv(table: &ConvTable) {
    println!(
        "{:>6} {:>6} {:>6} {:>12} {:>12} {:>8}  status",
        "alpha", "N", "M", "max_err_u", "l2_err_u", "order"
    );
    for row in &table.rows {
        println!(
            "{:>6} {:>6} {:>6} {:>12.4e} {:>12.4e} {:>8}  {}",
            row.alpha,
            row.n,
            row.m,
            row.max_err_u,
            row.l2_err_u,
            row.order_max.map(|o| format!("{o:.3}")).unwrap_or_default(),
            row.status
        );
    }
}

fn conv_space(args: &ConvSpaceArgs) -> fracinv::Result<bool> {
    let mut flags = args.common.flags();
    flags.extend([
        ("--alpha", args.alpha.to_string()),
        ("--N", join(&args.n)),
        ("--M", args.m.to_string()),
        ("--mode", args.solver.mode.to_string()),
    ]);
    let out = Output::new(&args.common.out, "conv-space", &flags)?;
    let table = run_conv_space(
        &args.common.selection(),
        args.alpha,
        args.m,
        &args.n,
        args.common.r,
        &args.solver.options(),
        args.solver.parallel,
    )?;
    out.write("conv_space.csv", &table)?;
    print_conv(&table);
    Ok(table.all_ok())
}

fn conv_time(args: &ConvTimeArgs) -> fracinv::Result<bool> {
    let mut flags = args.common.flags();
    flags.extend([
        ("--alpha", args.alpha.to_string()),
        ("--N", args.n.to_string()),
        ("--M", join(&args.m)),
        ("--mode", args.solver.mode.to_string()),
    ]);
    let out = Output::new(&args.common.out, "conv-time", &flags)?;
    let table = run_conv_time(
        &args.common.selection(),
        args.alpha,
        args.n,
        &args.m,
        args.common.r,
        &args.solver.options(),
        args.solver.parallel,
    )?;
    out.write("conv_time.csv", &table)?;
    print_conv(&table);
    Ok(table.all_ok())
}

fn noise(args: &NoiseArgs) -> fracinv::Result<bool> {
    let mut flags = args.common.flags();
    flags.extend([
        ("--alpha", args.alpha.to_string()),
        ("--N", args.n.to_string()),
        ("--M", args.m.to_string()),
        ("--mode", args.solver.mode.to_string()),
        ("--noise-level", join(&args.noise_level)),
        ("--seed", join(&args.seed)),
    ]);
    let out = Output::new(&args.common.out, "noise", &flags)?;
    let table = run_noise_study(
        &args.common.selection(),
        args.alpha,
        args.n,
        args.m,
        args.common.r,
        &args.noise_level,
        &args.seed,
        &args.solver.options(),
        args.solver.parallel,
    )?;
    out.write("noise.csv", &table)?;
    println!(
        "{:>8} {:>14} {:>14}",
        "delta", "mean max_err_p", "sd max_err_p"
    );
    for (mean, sd) in table
        .summary(NoiseRowKind::Mean)
        .iter()
        .zip(table.summary(NoiseRowKind::Stddev))
    {
        println!(
            "{:>8} {:>14.4e} {:>14.4e}",
            mean.delta, mean.max_err_p, sd.max_err_p
        );
    }
    Ok(table.all_ok())
}

fn sweep(args: &SweepArgs) -> fracinv::Result<bool> {
    let mut flags = args.common.flags();
    flags.extend([
        ("--alpha", join(&args.alpha)),
        ("--N", args.n.to_string()),
        ("--M", args.m.to_string()),
        ("--mode", args.solver.mode.to_string()),
    ]);
    let out = Output::new(&args.common.out, "sweep", &flags)?;
    let table = run_alpha_sweep(
        &args.common.selection(),
        &args.alpha,
        args.n,
        args.m,
        args.common.r,
        &args.solver.options(),
        args.solver.parallel,
    )?;
    out.write("sweep.csv", &table)?;
    for (alpha, status) in &table.status {
        println!("alpha={alpha}: {status}");
    }
    Ok(table.all_ok())
}

fn verify(args: &VerifyArgs) -> bool {
    let outcomes = run_property_suite(args.parallel);
    let width = outcomes.iter().map(|o| o.name.len()).max().unwrap_or(0);
    for o in &outcomes {
        println!(
            "{:<width$}  {}  {}",
            o.name,
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    outcomes.iter().all(|o| o.passed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Direct(a) => direct(a),
        Command::Identify(a) => identify(a),
        Command::ConvSpace(a) => conv_space(a),
        Command::ConvTime(a) => conv_time(a),
        Command::Noise(a) => noise(a),
        Command::Sweep(a) => sweep(a),
        Command::Verify(a) => Ok(verify(a)),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, fracinv::Error::UnknownProblem(_)) {
                eprintln!("known problems: {}", PROBLEM_NAMES.join(", "));
            }
            ExitCode::from(2)
        }
    }
}
