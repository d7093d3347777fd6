use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedalloc::Method;
use fedalloc_bench::{checks, load_config, report, run_suite, write_outputs, BenchError};

#[derive(Parser)]
#[command(version, about = "Seeded benchmark runs and acceptance checks for fedalloc")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the method suite and write the CSV tables.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Number of consecutive seeds starting at the config seed.
        #[arg(long)]
        seeds: Option<usize>,
        /// Comma-separated subset of proposed, random_pf, random_theta, random_all.
        #[arg(long, value_delimiter = ',', value_parser = parse_method)]
        methods: Option<Vec<Method>>,
    },
    /// Run the acceptance checks and print one line per check.
    OracleCheck {
        /// Only these check ids.
        #[arg(long = "check", value_parser = clap::value_parser!(u8).range(1..=8))]
        only: Vec<u8>,
    },
    /// Summarize the comparison table of a finished run.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::from_tag(s.trim()).ok_or_else(|| format!("unknown method `{s}`"))
}

fn run(
    config: PathBuf,
    out: PathBuf,
    seeds: Option<usize>,
    methods: Option<Vec<Method>>,
) -> Result<ExitCode, BenchError> {
    let mut cfg = load_config(&config)?;
    if let Some(n) = seeds {
        cfg.seeds = n;
    }
    cfg.validate()?;
    let methods = methods.unwrap_or_else(|| Method::ALL.to_vec());
    let output = run_suite(&cfg, &cfg.seed_list(), &methods);
    write_outputs(&output, &out)?;
    let failed = output.records.iter().filter(|r| r.outcome.is_err()).count();
    println!(
        "{} runs over {} seeds written to {}",
        output.records.len(),
        cfg.seeds,
        out.display()
    );
    if failed > 0 {
        println!("{failed} runs failed; see the flags column of comparison.csv");
    }
    Ok(ExitCode::SUCCESS)
}

fn oracle_check(only: Vec<u8>) -> ExitCode {
    let ids = if only.is_empty() { checks::CHECK_IDS.to_vec() } else { only };
    let mut all_passed = true;
    for id in ids {
        let outcome = checks::run_check(id);
        println!("{outcome}");
        all_passed &= outcome.passed;
    }
    if all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn summarize(input: PathBuf) -> Result<ExitCode, BenchError> {
    let rows = report::load_comparison(&input)?;
    print!("{}", report::summarize(&rows));
    let incomplete = rows.iter().any(|r| r.flags.iter().any(|f| f.ends_with(":error")));
    Ok(if incomplete { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out,
            seeds,
            methods,
        } => run(config, out, seeds, methods),
        Command::OracleCheck { only } => Ok(oracle_check(only)),
        Command::Report { input } => summarize(input),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(2)
    })
}
