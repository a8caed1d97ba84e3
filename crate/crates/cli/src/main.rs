use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lattice_szego::experiment::{read_pairs, run_experiment_with, write_report, ExperimentConfig, Family};
use lattice_szego::{Error, Execution};

#[derive(Parser)]
#[command(name = "szego-lab", version, about = "Spectral experiments for lattice Schrödinger operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalue counting against 2^d λ^{d/k}
    Weyl(Flags),
    /// Trace functional convergence for a multiplication symbol
    Szego(Flags),
    /// Trace functional convergence for an n-dependent symbol
    Szego2(Flags),
    /// Two-sided trace inequality with window r = λ^e
    LsBound(Flags),
    /// Resolvent trace ratios and kernel transforms
    Tauberian(Flags),
    /// Symbol calculus utilities (compose, power, class-probe)
    Symbol(Flags),
}

#[derive(Args, Default)]
#[command(allow_negative_numbers = true)]
struct Flags {
    /// Flat key=value file; flags given on the command line win
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    theta: Option<String>,
    /// Box radius, or "auto"
    #[arg(long = "L")]
    l: Option<String>,
    #[arg(long)]
    lambda_start: Option<String>,
    #[arg(long)]
    lambda_factor: Option<String>,
    #[arg(long)]
    lambda_count: Option<String>,
    /// trig-poly, shifted-cosine or diagonal
    #[arg(long)]
    symbol: Option<String>,
    /// Symbol parameter as key=val; repeatable
    #[arg(long = "symbol-param", value_name = "KEY=VAL")]
    symbol_param: Vec<String>,
    /// poly:c0,c1,... or exp, cos, sin
    #[arg(long)]
    f: Option<String>,
    #[arg(long)]
    kappa: Option<String>,
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    x_grid: Option<String>,
    /// Comma-separated window exponents (ls-bound)
    #[arg(long)]
    r_exponents: Option<String>,
    /// compose, power or class-probe (symbol)
    #[arg(long)]
    op: Option<String>,
    #[arg(long)]
    order: Option<String>,
    #[arg(long)]
    class_order: Option<String>,
    /// Output file; stdout when absent
    #[arg(long)]
    out: Option<String>,
    /// csv or json
    #[arg(long)]
    format: Option<String>,
    /// Run on a single thread
    #[arg(long)]
    sequential: bool,
}

impl Flags {
    fn pairs(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut push = |key: &str, v: &Option<String>| {
            if let Some(v) = v {
                out.push((key.to_string(), v.clone()));
            }
        };
        push("d", &self.d);
        push("k", &self.k);
        push("theta", &self.theta);
        push("L", &self.l);
        push("lambda_start", &self.lambda_start);
        push("lambda_factor", &self.lambda_factor);
        push("lambda_count", &self.lambda_count);
        push("symbol", &self.symbol);
        push("f", &self.f);
        push("kappa", &self.kappa);
        push("m", &self.m);
        push("x_grid", &self.x_grid);
        push("r_exponents", &self.r_exponents);
        push("op", &self.op);
        push("order", &self.order);
        push("class_order", &self.class_order);
        push("out", &self.out);
        push("format", &self.format);
        for p in &self.symbol_param {
            out.push(("symbol_param".to_string(), p.clone()));
        }
        out
    }
}

fn run(family: Family, flags: &Flags) -> Result<(), Error> {
    let mut pairs = match &flags.config {
        Some(path) => read_pairs(path)?,
        None => Vec::new(),
    };
    // symbol parameters from the file are replaced, not merged, by flag ones
    if !flags.symbol_param.is_empty() {
        pairs.retain(|(k, _)| k != "symbol_param");
    }
    pairs.extend(flags.pairs());
    let config = ExperimentConfig::from_pairs(family, &pairs)?;
    let exec = if flags.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    let report = run_experiment_with(&config, exec)?;
    match &config.out {
        Some(path) => write_report(&report, config.format, path),
        None => {
            print!("{}", report.render(config.format));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (family, flags) = match &cli.command {
        Command::Weyl(f) => (Family::Weyl, f),
        Command::Szego(f) => (Family::Szego, f),
        Command::Szego2(f) => (Family::Szego2, f),
        Command::LsBound(f) => (Family::LsBound, f),
        Command::Tauberian(f) => (Family::Tauberian, f),
        Command::Symbol(f) => (Family::Symbol, f),
    };
    match run(family, flags) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
