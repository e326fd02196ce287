//! `procauth`: provision fixtures, simulate attack scenarios, sweep the
//! scenario lattice and replay traces.
//!
//! Exit codes: 0 on END or a clean report, 2 on ABORT or reported violations,
//! 1 on any error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use procauth_core::adversary::{apply_supply_chain, fixture, ScenarioFile, Seeds};
use procauth_core::crypto::{Backend, CryptoProvider};
use procauth_core::domain::{Run, Status};
use procauth_core::protocol::{Faults, Machine};
use procauth_core::provisioning::{
    provision, provision_default, ProvisionRecord, DEFAULT_AP_SEED, DEFAULT_BSP_SEED, DEFAULT_OEM_SEED,
};
use procauth_core::trace::{parse_jsonl, replay, to_jsonl, trace_of};
use procauth_core::verifier::{simulate, verify_all, Check, Lattice, LemmaReport};

#[derive(Parser)]
#[command(name = "procauth", version, about = "Processor authentication protocol model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate keys, the certificate chain and the ROM hash into a directory.
    Provision {
        #[arg(long)]
        out: PathBuf,
        /// Hex seed for the OEM root key.
        #[arg(long)]
        oem_seed: Option<String>,
        #[arg(long)]
        bsp_seed: Option<String>,
        #[arg(long)]
        ap_seed: Option<String>,
        #[arg(long, default_value = "concrete")]
        backend: Backend,
    },
    /// Execute one run of a scenario, attacking every targeted packet.
    Run {
        /// Scenario JSON file, or the name of a shipped fixture.
        scenario: String,
        #[arg(long, default_value = "concrete")]
        backend: Backend,
        #[command(flatten)]
        setup: Setup,
        /// Write the JSONL trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Explore every run of every scenario in a lattice and check all properties.
    Verify {
        #[arg(long, default_value = "full")]
        lattice: Lattice,
        #[arg(long, default_value = "symbolic")]
        backend: Backend,
        /// Write the JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write each counterexample as a JSONL trace plus its scenario file.
        #[arg(long)]
        counterexamples: Option<PathBuf>,
        #[arg(long = "inject-fault", value_name = "FAULT")]
        faults: Vec<String>,
    },
    /// Re-execute a JSONL trace and check every step reproduces.
    Replay {
        trace: PathBuf,
        /// Scenario the trace was recorded under (file or fixture name).
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value = "concrete")]
        backend: Backend,
        #[command(flatten)]
        setup: Setup,
    },
}

#[derive(Args)]
struct Setup {
    /// Hex run seed, overriding the scenario's.
    #[arg(long)]
    seed: Option<String>,
    /// Load keys and certificates from a provisioned directory instead of the
    /// scenario seeds.
    #[arg(long)]
    fixtures: Option<PathBuf>,
    #[arg(long = "inject-fault", value_name = "FAULT")]
    faults: Vec<String>,
}

fn parse_hex(what: &str, text: &str) -> Result<Vec<u8>> {
    let bytes = hex::decode(text.trim()).with_context(|| format!("{what} is not valid hex"))?;
    if bytes.is_empty() {
        bail!("{what} must not be empty");
    }
    Ok(bytes)
}

fn parse_faults(names: &[String]) -> Result<Faults> {
    let mut faults = Faults::none();
    for name in names {
        faults.enable(name).map_err(anyhow::Error::msg)?;
    }
    Ok(faults)
}

fn load_scenario(arg: &str) -> Result<ScenarioFile> {
    let path = Path::new(arg);
    if path.exists() {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return ScenarioFile::parse(&text).with_context(|| format!("parsing {}", path.display()));
    }
    fixture(arg).with_context(|| format!("{arg} is neither a file nor a shipped fixture"))
}

/// Everything needed to execute a scenario.
struct Prepared {
    machine: Machine,
    scenario: ScenarioFile,
    run_seed: Vec<u8>,
    s0: procauth_core::domain::ProtocolState,
}

fn prepare(scenario_arg: &str, backend: Backend, setup: &Setup) -> Result<Prepared> {
    let scenario = load_scenario(scenario_arg)?;
    let provider = CryptoProvider::new(backend);
    let record = match &setup.fixtures {
        Some(dir) => {
            let r = ProvisionRecord::read_dir(dir).with_context(|| format!("loading {}", dir.display()))?;
            r.validate(&provider)
                .with_context(|| format!("{} does not hold a valid {backend} provisioning", dir.display()))?;
            r
        }
        None => scenario.provision(&provider)?,
    };
    let run_seed = match &setup.seed {
        Some(s) => parse_hex("--seed", s)?,
        None => scenario.seeds.run.clone(),
    };
    let machine = Machine::new(provider)
        .with_mutation_seed(&scenario.scenario.mutation_seed)
        .with_faults(parse_faults(&setup.faults)?);
    let s0 = apply_supply_chain(&record, &scenario.scenario, &provider)?;
    Ok(Prepared {
        machine,
        scenario,
        run_seed,
        s0,
    })
}

fn describe(run: &Run) -> String {
    let reason = run
        .steps
        .iter()
        .filter_map(|s| s.failure)
        .last()
        .map(|f| format!(" ({f})"))
        .unwrap_or_default();
    let errors: Vec<String> = run
        .statuses()
        .into_iter()
        .filter(|s| matches!(s, Status::Err(_)))
        .map(|s| s.to_string())
        .collect();
    let via = if errors.is_empty() {
        String::new()
    } else {
        format!(" via {}", errors.join(", "))
    };
    format!("{} after {} steps{via}{reason}", run.final_state.status, run.len())
}

fn status_code(status: Status) -> ExitCode {
    match status {
        Status::End => ExitCode::SUCCESS,
        Status::Abort => ExitCode::from(2),
        _ => ExitCode::FAILURE,
    }
}

fn cmd_provision(out: &Path, seeds: [Option<String>; 3], backend: Backend) -> Result<ExitCode> {
    let [oem, bsp, ap] = seeds;
    let pick = |name: &str, s: Option<String>, default: &[u8]| -> Result<Vec<u8>> {
        s.map_or(Ok(default.to_vec()), |s| parse_hex(name, &s))
    };
    let provider = CryptoProvider::new(backend);
    let record = provision(
        &pick("--oem-seed", oem, DEFAULT_OEM_SEED)?,
        &pick("--bsp-seed", bsp, DEFAULT_BSP_SEED)?,
        &pick("--ap-seed", ap, DEFAULT_AP_SEED)?,
        &provider,
    )?;
    record
        .write_dir(out)
        .with_context(|| format!("writing {}", out.display()))?;
    println!("provisioned {backend} keys and certificates into {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_run(scenario: &str, backend: Backend, setup: &Setup, trace: Option<&Path>) -> Result<ExitCode> {
    let prep = prepare(scenario, backend, setup)?;
    let run = simulate(&prep.machine, &prep.s0, &prep.scenario.scenario, &prep.run_seed)?;
    if let Some(path) = trace {
        fs::write(path, to_jsonl(&trace_of(&run, &prep.machine.provider)))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    let name = prep.scenario.name.clone().unwrap_or_else(|| prep.scenario.scenario.label());
    println!("{name}: {}", describe(&run));
    Ok(status_code(run.final_state.status))
}

fn write_counterexamples(dir: &Path, report: &LemmaReport) -> Result<usize> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = 0;
    for result in &report.checks {
        for (i, cx) in result.counterexamples.iter().enumerate() {
            let stem = format!("{}-{i}", result.check);
            let scenario = ScenarioFile {
                name: Some(cx.scenario_label.clone()),
                scenario: cx.scenario.clone(),
                seeds: Seeds {
                    run: cx.run_seed.clone(),
                    ..Seeds::default()
                },
            };
            fs::write(dir.join(format!("{stem}.jsonl")), to_jsonl(&cx.trace))?;
            fs::write(dir.join(format!("{stem}.scenario.json")), scenario.to_json() + "\n")?;
            written += 1;
        }
    }
    Ok(written)
}

fn cmd_verify(
    lattice: Lattice,
    backend: Backend,
    report_path: Option<&Path>,
    cx_dir: Option<&Path>,
    faults: &[String],
) -> Result<ExitCode> {
    let provider = CryptoProvider::new(backend);
    let record = provision_default(&provider);
    let report = verify_all(&record, &lattice.points(), &provider, parse_faults(faults)?)?;
    if let Some(path) = report_path {
        fs::write(path, report.to_json() + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    println!(
        "{lattice} lattice, {backend} backend: {} scenarios, {} runs",
        report.scenarios.len(),
        report.total_runs
    );
    for check in Check::ALL {
        let r = report.check(check);
        let verdict = if r.passed { "pass" } else { "FAIL" };
        println!("  {:<15} {verdict}  {} violations / {} runs", check.name(), r.violations, r.runs_checked);
        for cx in &r.counterexamples {
            println!("      e.g. {} run {} ends {}", cx.scenario_label, cx.run_index, cx.final_status);
        }
    }
    if let Some(dir) = cx_dir {
        let n = write_counterexamples(dir, &report)?;
        println!("wrote {n} counterexample traces to {}", dir.display());
    }
    Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn cmd_replay(trace: &Path, scenario: &str, backend: Backend, setup: &Setup) -> Result<ExitCode> {
    let text = fs::read_to_string(trace).with_context(|| format!("reading {}", trace.display()))?;
    let records = parse_jsonl(&text)?;
    let prep = prepare(scenario, backend, setup)?;
    let run = replay(&prep.machine, &prep.s0, &prep.run_seed, &records)?;
    println!("replayed {} steps: {}", records.len(), describe(&run));
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::FAILURE } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match &cli.command {
        Command::Provision {
            out,
            oem_seed,
            bsp_seed,
            ap_seed,
            backend,
        } => cmd_provision(out, [oem_seed.clone(), bsp_seed.clone(), ap_seed.clone()], *backend),
        Command::Run {
            scenario,
            backend,
            setup,
            trace,
        } => cmd_run(scenario, *backend, setup, trace.as_deref()),
        Command::Verify {
            lattice,
            backend,
            report,
            counterexamples,
            faults,
        } => cmd_verify(*lattice, *backend, report.as_deref(), counterexamples.as_deref(), faults),
        Command::Replay {
            trace,
            scenario,
            backend,
            setup,
        } => cmd_replay(trace, scenario, *backend, setup),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
