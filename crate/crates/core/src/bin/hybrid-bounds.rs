use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hybrid_bounds::oracle::{run_suite, SuiteSize};
use hybrid_bounds::scenario::{
    builtin_scenario, evaluate, load_scenario, render, summary_table, OutputFormat, ScenarioSpec, SubsetSelector,
};
use hybrid_bounds::{Error, Result};

/// Position / velocity error bounds for hybrid GNSS + 5G vehicle positioning.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate anchor subsets of a scenario.
    Run(RunArgs),
    /// Check a scenario file against the schema.
    Validate {
        path: PathBuf,
    },
    /// Run the finite-difference cross-checks and print the worst deviations.
    Oracle {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Use a reduced suite size.
        #[arg(long)]
        quick: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (TOML).
    #[arg(long, conflicts_with = "builtin", required_unless_present = "builtin")]
    scenario: Option<PathBuf>,
    /// Built-in scenario, A or B.
    #[arg(long)]
    builtin: Option<String>,
    /// gNB indices, e.g. `0,1`.
    #[arg(long, value_delimiter = ',')]
    gnbs: Vec<usize>,
    /// Satellite indices: a list `0,2` or an inclusive range `0..3`.
    #[arg(long)]
    sats: Option<String>,
    /// Evaluate every non-empty anchor subset.
    #[arg(long, conflicts_with_all = ["gnbs", "sats"])]
    sweep_all: bool,
    /// Output file; results go to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: String,
}

fn parse_indices(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::Parse(format!("bad index list '{s}'"));
    if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        if b < a {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse().map_err(|_| bad()))
        .collect()
}

/// `Ok(false)` when some rows failed to compute.
fn run(args: RunArgs) -> Result<bool> {
    let format: OutputFormat = args.format.parse()?;
    let spec: ScenarioSpec = match (&args.scenario, &args.builtin) {
        (Some(p), _) => load_scenario(p)?,
        (None, Some(name)) => builtin_scenario(name)?,
        (None, None) => unreachable!("clap requires one of --scenario / --builtin"),
    };
    let selector = if args.sweep_all {
        SubsetSelector::AllSubsets
    } else {
        let sats = args.sats.as_deref().map(parse_indices).transpose()?.unwrap_or_default();
        SubsetSelector::explicit(args.gnbs.iter().copied(), sats)
    };
    let rows = evaluate(&spec, &selector)?;
    let text = render(&rows, format)?;
    match &args.out {
        Some(p) => {
            std::fs::write(p, text)?;
            eprint!("{}", summary_table(&rows));
        }
        None => print!("{text}"),
    }
    for r in rows.iter().filter(|r| r.error.is_some()) {
        eprintln!("row {} failed: {}", r.subset, r.error.as_deref().unwrap_or_default());
    }
    Ok(rows.iter().all(|r| r.error.is_none()))
}

fn oracle(seed: u64, quick: bool) -> Result<()> {
    let size = if quick {
        SuiteSize {
            fim_instances: 5,
            jacobian_states: 100,
            efim_instances: 20,
        }
    } else {
        SuiteSize::default()
    };
    let r = run_suite(size, seed)?;
    println!("fim_5g closed vs numeric (rel. Frobenius): {:.3e}", r.fim_5g);
    println!("transform_g vs finite differences:         {:.3e}", r.transform_g);
    println!("transform_s vs finite differences:         {:.3e}", r.transform_s);
    println!("EFIM Schur vs full inverse:                {:.3e}", r.efim);
    println!("W_eff^2 closed vs quadrature:              {:.3e}", r.w_eff);
    println!("T_eff^2 closed vs quadrature:              {:.3e}", r.t_eff);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Validate { path } => load_scenario(&path).map(|s| {
            println!(
                "{}: ok ({} gNBs, {} satellites)",
                path.display(),
                s.gnbs.len(),
                s.satellites.len()
            );
            true
        }),
        Command::Oracle { seed, quick } => oracle(seed, quick).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
