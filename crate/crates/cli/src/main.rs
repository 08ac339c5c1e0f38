//! `gnaf`: construct, verify and simulate distributed space-time codes.
//!
//! Exit status: 0 ok, 2 verification failure, 3 configuration or input
//! error, 4 resource guard (search too large to run exhaustively).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gnaf_core::designs::{relay_matrix_set, Design, VariableLevel};
use gnaf_core::dmg::emit_curves;
use gnaf_core::montecarlo::{resolve_workers, run_monte_carlo, with_workers};
use gnaf_core::pipeline::{build_family, metadata, parse_checks, run_checks, CdaParamsFile, CheckOptions, RunConfig};
use gnaf_core::precoding::parse_rotation;
use gnaf_core::receivers::Constellation;
use gnaf_core::sim::Variant;
use gnaf_core::verifier::{check_condition1, check_condition2};
use gnaf_core::{Error, Result};

#[derive(Parser)]
#[command(name = "gnaf", version, about = "Distributed space-time codes for GNAF relay networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a design and write it as JSON.
    Construct(ConstructArgs),
    /// Run algebraic checks on a design file.
    Verify(VerifyArgs),
    /// Monte Carlo symbol-error simulation from a TOML config.
    Simulate(SimulateArgs),
    /// Write diversity-multiplexing tradeoff bounds as CSV.
    Tradeoff(TradeoffArgs),
    /// Verify, then simulate, then write a result bundle.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct ConstructArgs {
    /// pciod, pciod-rect, ciod4, toeplitz, golden or cda.
    #[arg(long)]
    family: String,
    #[arg(long)]
    relays: Option<usize>,
    /// Complex symbols per codeword (toeplitz).
    #[arg(long)]
    t1: Option<usize>,
    /// Parameter file for cda: {"delta": [re, im], "theta": x, "sigma_table": [[[re, im], ..], ..]}.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    design: PathBuf,
    /// Comma-separated subset of clro,group,whitened,fulldiv,nvd.
    #[arg(long, default_value = "clro,group")]
    checks: String,
    /// Alphabet for the full-diversity check (unnormalized levels).
    #[arg(long, default_value = "qam4")]
    constellation: Constellation,
    #[arg(long, default_value_t = 50)]
    draws: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "gnaf-ii")]
    variant: Variant,
    /// Power used for the whitened check, in dB.
    #[arg(long, default_value_t = 10.0)]
    snr_db: f64,
    #[arg(long, value_delimiter = ',', default_value = "4,16")]
    nvd_sizes: Vec<usize>,
    /// Rotation file (n, then n^2 row-major numbers) replacing the built-in one.
    #[arg(long)]
    rotation: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; defaults to GNAF_WORKERS, then to all cores.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct TradeoffArgs {
    #[arg(long)]
    relays: usize,
    #[arg(long, default_value_t = 101)]
    samples: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory for report.json and results.csv.
    #[arg(long)]
    out: PathBuf,
    /// Simulate even when a check fails (the exit status still reports it).
    #[arg(long)]
    force: bool,
    #[arg(long)]
    workers: Option<usize>,
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn construct(args: ConstructArgs) -> Result<bool> {
    let params = match &args.params {
        Some(p) => Some((&serde_json::from_str::<CdaParamsFile>(&fs::read_to_string(p)?)?).into()),
        None => None,
    };
    let d = build_family(&args.family, args.relays, args.t1, params.as_ref())?;
    write(&args.out, &(d.to_json()? + "\n"))?;
    let c1 = check_condition1(&d, VariableLevel::Declared);
    let c2 = relay_matrix_set(&d).map(|rs| check_condition2(&rs).passed).unwrap_or(false);
    println!("family {}  T={} R={} K={}", d.family.as_str(), d.t, d.r, d.k);
    println!("partition {:?}", d.partition);
    println!("clro condition1={} condition2={}", c1.passed, c2);
    println!("wrote {}", args.out.display());
    Ok(true)
}

fn verify(args: VerifyArgs) -> Result<bool> {
    let d = Design::from_json(&fs::read_to_string(&args.design)?)?;
    let checks = parse_checks(&args.checks)?;
    let rotation = args.rotation.as_ref().map(|p| parse_rotation(&fs::read_to_string(p)?)).transpose()?;
    let opts = CheckOptions {
        constellation: args.constellation,
        draws: args.draws,
        seed: args.seed,
        variant: args.variant,
        p: 10f64.powf(args.snr_db / 10.0),
        pi: (1.0, 1.0, 1.0),
        nvd_sizes: args.nvd_sizes.clone(),
        rotation,
    };
    let reports = run_checks(&d, &checks, &opts)?;
    let text = serde_json::to_string_pretty(&serde_json::json!({
        "design": args.design,
        "seed": args.seed,
        "reports": reports,
    }))? + "\n";
    match &args.out {
        Some(path) => write(path, &text)?,
        None => print!("{text}"),
    }
    for r in &reports {
        eprintln!("{:<10} {}", r.check, if r.passed { "pass" } else { "FAIL" });
    }
    Ok(reports.iter().all(|r| r.passed))
}

fn simulate(args: SimulateArgs) -> Result<bool> {
    let (cfg, base) = RunConfig::load(&args.config)?;
    let design = cfg.design.build(&base)?;
    let rotation = cfg.load_rotation(&base)?;
    let settings = cfg.settings();
    let workers = resolve_workers(args.workers)?;
    let result = with_workers(workers, || run_monte_carlo(&design, &settings, rotation.as_ref()))??;
    write(&args.out, &result.to_csv(&metadata(&cfg, &design))?)?;
    for row in &result.rows {
        eprintln!("{:>6} dB  ser {:e}  ({} / {})", row.snr_db, row.ser, row.errors, row.trials);
    }
    Ok(true)
}

fn tradeoff(args: TradeoffArgs) -> Result<bool> {
    write(&args.out, &emit_curves(args.relays, args.samples)?)?;
    Ok(true)
}

fn pipeline(args: PipelineArgs) -> Result<bool> {
    let (cfg, base) = RunConfig::load(&args.config)?;
    let workers = resolve_workers(args.workers)?;
    let outcome = gnaf_core::pipeline::run_pipeline(&cfg, &base, &args.out, args.force, workers)?;
    for r in &outcome.reports {
        eprintln!("{:<10} {}", r.check, if r.passed { "pass" } else { "FAIL" });
        if !r.passed {
            eprintln!("  witness: {}", serde_json::to_string(&r.witness)?);
        }
    }
    match &outcome.csv_path {
        Some(p) => eprintln!("wrote {}", p.display()),
        None => eprintln!("verification failed; simulation skipped (use --force to run it anyway)"),
    }
    Ok(outcome.all_passed())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Construct(a) => construct(a),
        Command::Verify(a) => verify(a),
        Command::Simulate(a) => simulate(a),
        Command::Tradeoff(a) => tradeoff(a),
        Command::Pipeline(a) => pipeline(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    e.exit_code() as u8
}
