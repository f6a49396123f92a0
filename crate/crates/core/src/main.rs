use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dsa_core::scenario::{
    compare, emit, format_compare, format_table, run_dsa, run_scan, run_static, write_compare, write_dsa_traces,
    write_rows, write_seed_rows, DsaResult, ScenarioConfig, ScenarioError, SweepResult,
};

#[derive(Parser)]
#[command(
    name = "dsa-sim",
    about = "Static vs dynamic spectrum access on a simulated 802.15.4 link"
)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
    /// Scenario file (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `outputs` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Use seeds 1..=N instead of the configured list.
    #[arg(long, global = true)]
    seeds: Option<u64>,
    /// Write protocol traces.
    #[arg(long, global = true)]
    trace: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Verb {
    /// Sweep the scan bands once and write one energy map per band.
    Scan,
    /// PSR/PRR on a fixed carrier across the PU sweep.
    Static,
    /// PSR/PRR with sensing and rendezvous across the PU sweep.
    Dsa,
    /// Run static and dsa and print the improvement table.
    Compare,
}

struct Failure {
    stage: &'static str,
    err: ScenarioError,
}

fn at(stage: &'static str) -> impl Fn(ScenarioError) -> Failure {
    move |err| Failure { stage, err }
}

fn write_sweep(dir: &Path, prefix: &str, r: &SweepResult) -> Result<(), ScenarioError> {
    emit(dir, &format!("{prefix}_per_seed.csv"), |w| {
        write_seed_rows(&r.per_seed, w)
    })?;
    emit(dir, &format!("{prefix}_summary.csv"), |w| write_rows(&r.summary, w))?;
    Ok(())
}

fn static_stage(cfg: &ScenarioConfig) -> Result<SweepResult, Failure> {
    let r = run_static(cfg).map_err(at("static"))?;
    write_sweep(&cfg.outputs, "static", &r).map_err(at("report"))?;
    println!(
        "static, carrier {} Hz\n{}",
        cfg.mode.static_freq,
        format_table(&r.summary)
    );
    Ok(r)
}

fn dsa_stage(cfg: &ScenarioConfig, trace: bool) -> Result<DsaResult, Failure> {
    let r = run_dsa(cfg).map_err(at("dsa"))?;
    write_sweep(&cfg.outputs, "dsa", &r.sweep).map_err(at("report"))?;
    if trace {
        emit(&cfg.outputs, "dsa_trace.csv", |w| write_dsa_traces(&r.runs, w)).map_err(at("report"))?;
    }
    let rounds: u32 = r.runs.iter().map(|x| x.rerendezvous).sum();
    let failures: u32 = r.runs.iter().map(|x| x.failures).sum();
    println!(
        "dsa, {} runs, {rounds} re-rendezvous, {failures} failed\n{}",
        r.runs.len(),
        format_table(&r.sweep.summary)
    );
    Ok(r)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let mut cfg = match &cli.config {
        Some(p) => ScenarioConfig::load(p).map_err(at("config"))?,
        None => ScenarioConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.outputs = out.clone();
    }
    if let Some(n) = cli.seeds {
        cfg.seeds = (1..=n).collect();
        cfg.validate().map_err(at("config"))?;
    }

    match cli.verb {
        Verb::Scan => {
            let seed = cfg.seeds[0];
            let maps = run_scan(&cfg, seed).map_err(at("scan"))?;
            for m in &maps {
                let name = format!("scan_{}_{}.csv", m.band.0, m.band.1);
                emit(&cfg.outputs, &name, |w| m.write_csv(w)).map_err(at("report"))?;
                let peak = m.argmax().map_or(f64::NAN, |e| e.energy_db);
                println!("{name}: {} bins, peak {peak:.1} dB", m.len());
            }
        }
        Verb::Static => {
            static_stage(&cfg)?;
        }
        Verb::Dsa => {
            dsa_stage(&cfg, cli.trace)?;
        }
        Verb::Compare => {
            let s = static_stage(&cfg)?;
            let d = dsa_stage(&cfg, cli.trace)?;
            let rows = compare(&s, &d.sweep);
            emit(&cfg.outputs, "compare.csv", |w| write_compare(&rows, w)).map_err(at("report"))?;
            println!("{}", format_compare(&rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("dsa-sim: {} failed: {}", f.stage, f.err);
            ExitCode::FAILURE
        }
    }
}
