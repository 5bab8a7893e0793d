use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gna_bench::{run_bench, Settings};

#[derive(Parser)]
#[command(name = "gna", about = "Generalized nonlinear acceleration benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a method grid and write CSV traces plus summary.csv.
    Bench(BenchArgs),
}

#[derive(Args)]
struct BenchArgs {
    /// Flat `key = value` settings file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma separated `name[:beta][:ls]` list.
    #[arg(long)]
    methods: Option<String>,
    /// Default mixing parameter for methods without an explicit one.
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    #[arg(long)]
    line_search: bool,
    /// Window size; omit for full memory.
    #[arg(long)]
    nmax: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    /// Synthetic κ, or the target κ of a ridge problem.
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    reg: Option<f64>,
    /// Stop a cell once ‖r‖₂ ≤ tol·‖r₁‖₂.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
}

impl BenchArgs {
    fn settings(&self) -> Settings {
        Settings {
            methods: self.methods.clone(),
            beta: self.beta,
            line_search: self.line_search.then_some(true),
            nmax: self.nmax,
            iters: self.iters,
            kappa: self.kappa,
            seed: self.seed,
            out: self.out.clone(),
            reg: self.reg,
            tol: self.tol,
            workers: self.workers,
            ..Settings::default()
        }
    }
}

fn bench(args: BenchArgs) -> gna_bench::Result<i32> {
    let base = match &args.config {
        Some(path) => Settings::read(path)?,
        None => Settings::default(),
    };
    let config = base.overlay(args.settings()).resolve()?;
    let report = run_bench(&config)?;
    for cell in &report.cells {
        println!(
            "{:<24} final {:>10} violations {} {}",
            cell.label,
            cell.record
                .final_residual()
                .map(|r| format!("{r:.2e}"))
                .unwrap_or_else(|| "-".into()),
            cell.bound_violations,
            cell.status
        );
    }
    println!("summary written to {}", report.summary.display());
    Ok(report.exit_code())
}

fn main() -> ExitCode {
    let Command::Bench(args) = Cli::parse().command;
    match bench(args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
