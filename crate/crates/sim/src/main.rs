use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::thread;

use clap::{Parser, Subcommand};
use serde::Serialize;
use usv_sim::{check_derivatives, compute_metrics, run_scenario, write_csv_file, Law, Report, Scenario, SimError};

#[derive(Parser)]
#[command(name = "usv-sim", version, about = "Closed-loop path-following simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its trace.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the law named in the scenario.
        #[arg(long)]
        law: Option<Law>,
        /// Also write the metrics report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run one scenario under several laws; writes `<law>.csv` and `report.json`.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "nmpc,pnmpc,sglos")]
        laws: Vec<Law>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference audit of path derivatives and input Jacobians.
    CheckDerivatives {
        #[arg(long, default_value_t = 500)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Serialize)]
struct Comparison<'a> {
    scenario: &'a str,
    reports: &'a [Report],
    /// Mean PNMPC solve time over mean NMPC solve time.
    pnmpc_nmpc_time_ratio: Option<f64>,
}

fn write_json<T: Serialize>(value: &T, path: &PathBuf) -> Result<(), SimError> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    fs::write(path, text + "\n").map_err(|source| SimError::Io { path: path.clone(), source })
}

fn check_constraints(rep: &Report) -> Result<(), SimError> {
    if rep.law.is_predictive() && rep.violations > 0 {
        return Err(SimError::Invariant(format!("{} issued {} infeasible commands", rep.law, rep.violations)));
    }
    Ok(())
}

fn simulate(config: PathBuf, out: PathBuf, law: Option<Law>, report: Option<PathBuf>) -> Result<(), SimError> {
    let mut sc = Scenario::load(&config)?;
    if let Some(law) = law {
        sc.law = law;
    }
    let trace = run_scenario(&sc)?;
    write_csv_file(&trace, &out)?;
    let rep = compute_metrics(&trace, sc.converge_band)?;
    if let Some(path) = report {
        write_json(&rep, &path)?;
    }
    println!("{}", serde_json::to_string(&rep).expect("report serializes"));
    check_constraints(&rep)
}

fn compare(config: PathBuf, laws: Vec<Law>, out: PathBuf) -> Result<(), SimError> {
    let sc = Scenario::load(&config)?;
    fs::create_dir_all(&out).map_err(|source| SimError::Io { path: out.clone(), source })?;
    let traces: Vec<_> = thread::scope(|s| {
        let handles: Vec<_> = laws.iter().map(|&law| {
            let sc = sc.with_law(law);
            s.spawn(move || run_scenario(&sc))
        }).collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
    });

    let mut reports = Vec::new();
    for (law, trace) in laws.iter().zip(traces) {
        let trace = trace?;
        write_csv_file(&trace, &out.join(format!("{law}.csv")))?;
        reports.push(compute_metrics(&trace, sc.converge_band)?);
    }
    let mean = |law| reports.iter().find(|r| r.law == law).map(|r| r.solve_time.mean);
    let ratio = match (mean(Law::Pnmpc), mean(Law::Nmpc)) {
        (Some(p), Some(n)) if n > 0.0 => Some(p / n),
        _ => None,
    };
    let summary = Comparison { scenario: &sc.name, reports: &reports, pnmpc_nmpc_time_ratio: ratio };
    write_json(&summary, &out.join("report.json"))?;
    for rep in &reports {
        println!(
            "{:6} rms(y_e) {:.4} m  converge {:>8}  violations {}  mean solve {:.3e} s",
            rep.law.name(),
            rep.rms_y_e,
            rep.time_to_converge.map_or("never".to_string(), |t| format!("{t:.1} s")),
            rep.violations,
            rep.solve_time.mean
        );
    }
    reports.iter().try_for_each(check_constraints)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, out, law, report } => simulate(config, out, law, report),
        Command::Compare { config, laws, out } => compare(config, laws, out),
        Command::CheckDerivatives { samples, seed } => {
            let rep = check_derivatives(samples, seed);
            println!("{}", serde_json::to_string(&rep).expect("report serializes"));
            if rep.passed() {
                Ok(())
            } else {
                Err(SimError::Invariant(format!("{} derivative checks failed", rep.failures)))
            }
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("usv-sim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
