//! `netdec`: Lagrangian decomposition and convex-relaxation bounds for AC OPF.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::error;
use netdec::bundle::BundleParams;
use netdec::run::{emit_report, run, Mode, OutputFormat, PartSpec, RunConfig};

/// Exit code when bounds break the expected SOC ≤ LD ≤ SDP ordering beyond tolerance.
const EXIT_ORDERING: u8 = 3;

#[derive(Parser)]
#[command(name = "netdec", version, about = "Lower bounds for AC optimal power flow by network decomposition")]
struct Cli {
    #[command(subcommand)]
    mode: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monolithic SOC relaxation.
    RelaxSoc(Common),
    /// Monolithic SDP relaxation.
    RelaxSdp(Common),
    /// Lagrangian dual bound via the proximal bundle method.
    Bound(Common),
    /// Grid-search AC upper bound (cases of at most 3 buses).
    Oracle(Common),
    /// Partition the network and report the cut.
    Partition(Common),
    /// Parse and validate a case file.
    Parse(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Structured,
    Csv,
}

#[derive(Args)]
struct Common {
    /// MATPOWER case file.
    #[arg(long)]
    case: PathBuf,
    /// Number of parts for the built-in partitioner.
    #[arg(long, conflicts_with = "partition_file")]
    parts: Option<usize>,
    /// Partition document: one `bus part` pair per line, parts numbered from 1.
    #[arg(long)]
    partition_file: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Relative termination tolerance of the bundle method.
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,
    /// Serious-step fraction, in (0, 1/2).
    #[arg(long, default_value_t = 0.1)]
    ml: f64,
    /// Initial proximal weight.
    #[arg(long, default_value_t = 1.0)]
    u0: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    /// Cut cap per part; ignored with --strict-bundle.
    #[arg(long, default_value_t = 100)]
    max_cuts: usize,
    /// Worker threads for subproblem solves.
    #[arg(long, env = "NETDEC_THREADS", default_value_t = 1)]
    threads: usize,
    /// AC objective used for gaps; defaults to the shipped PGLib value when known.
    #[arg(long)]
    ref_objective: Option<f64>,
    /// Also compute the SOC and SDP bounds.
    #[arg(long)]
    with_baselines: bool,
    /// Keep every cut (no eviction).
    #[arg(long)]
    strict_bundle: bool,
    /// Oracle grid step (p.u. and radians).
    #[arg(long, default_value_t = 1e-3)]
    resolution: f64,
    /// Report destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Structured)]
    format: Format,
}

fn config(mode: Mode, c: Common) -> RunConfig {
    let parts = match (c.partition_file, c.parts) {
        (Some(f), _) => PartSpec::File(f),
        (None, k) => PartSpec::Parts(k.unwrap_or(2)),
    };
    RunConfig {
        case_path: c.case,
        mode,
        parts,
        seed: c.seed,
        bundle: BundleParams {
            eps: c.eps,
            m_l: c.ml,
            u0: c.u0,
            max_iter: c.max_iter,
            max_cuts: c.max_cuts,
            strict_bundle: c.strict_bundle,
            ..BundleParams::default()
        },
        threads: c.threads,
        ref_objective: c.ref_objective,
        with_baselines: c.with_baselines,
        resolution: c.resolution,
        out: c.out,
        format: match c.format {
            Format::Structured => OutputFormat::Structured,
            Format::Csv => OutputFormat::Csv,
        },
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let cfg = match cli.mode {
        Command::RelaxSoc(c) => config(Mode::RelaxSoc, c),
        Command::RelaxSdp(c) => config(Mode::RelaxSdp, c),
        Command::Bound(c) => config(Mode::Bound, c),
        Command::Oracle(c) => config(Mode::Oracle, c),
        Command::Partition(c) => config(Mode::Partition, c),
        Command::Parse(c) => config(Mode::Parse, c),
    };
    let report = match run(&cfg) {
        Ok(r) => r,
        Err(e) => {
            error!("{e}");
            eprintln!("netdec: {e}");
            return ExitCode::FAILURE;
        }
    };
    if let Err(e) = emit_report(&report, cfg.format, cfg.out.as_deref()) {
        eprintln!("netdec: {e}");
        return ExitCode::FAILURE;
    }
    if report.bundle.as_ref().is_some_and(|b| b.termination.is_failure()) {
        eprintln!("netdec: bundle method stopped early: {:?}", report.bundle.as_ref().map(|b| &b.termination));
        return ExitCode::FAILURE;
    }
    if report.has_ordering_violation() {
        eprintln!("netdec: bound ordering violated beyond tolerance");
        return ExitCode::from(EXIT_ORDERING);
    }
    ExitCode::SUCCESS
}
