//! Acceptance criteria, one line each.
//!
//! Every criterion is checked against values computed here independently of
//! the library: the expected detection phase per fixture, the run count per
//! lattice point from a separate walk of the branching tree, and the sample
//! sizes and time budgets pinned below. Exit status is nonzero if any
//! criterion fails.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand_core::RngCore;

use procauth_core::adversary::{apply_supply_chain, fixture, AttackScenario, TABLE4};
use procauth_core::crypto::{Certificate, CryptoProvider, RunRng};
use procauth_core::domain::{CheckPhase, PacketPhase, Run, Status};
use procauth_core::protocol::{Faults, Machine};
use procauth_core::provisioning::{provision_default, ProvisionRecord};
use procauth_core::trace::{replay, trace_of};
use procauth_core::verifier::{evaluate, explore, simulate, verify_all, Check, Lattice, DEFAULT_RUN_CAP};

const TABLE4_BUDGET: Duration = Duration::from_secs(5);
const LEMMA_BUDGET: Duration = Duration::from_secs(60);
const ROUND_TRIPS: usize = 1_000;
const DH_PAIRS: usize = 100;
const SIGNATURE_MUTATIONS: usize = 1_000;
const SHA256_EMPTY: &str = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855";
/// Sum of the per-point counts below over the 64-point lattice: 48 runs for
/// the tampered chains, 20 for an honest AP, 22 for a replaced AP.
const FULL_LATTICE_RUNS: usize = 90;

const BACKENDS: [CryptoProvider; 2] = [CryptoProvider::concrete(), CryptoProvider::symbolic()];

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn errors_in(run: &Run) -> Vec<Status> {
    run.statuses().into_iter().filter(|s| matches!(s, Status::Err(_))).collect()
}

fn fixture_run(name: &str, provider: CryptoProvider) -> (ProvisionRecord, Run) {
    let f = fixture(name).expect("shipped fixture");
    let record = f.provision(&provider).unwrap();
    let machine = Machine::new(provider).with_mutation_seed(&f.scenario.mutation_seed);
    let s0 = apply_supply_chain(&record, &f.scenario, &provider).unwrap();
    let run = simulate(&machine, &s0, &f.scenario, &f.seeds.run).unwrap();
    (record, run)
}

/// The detection matrix: which error each attack must end in.
fn expected_errors(name: &str) -> &'static [Status] {
    match name {
        "apr" | "rpm" => &[Status::Err(CheckPhase::Resp)],
        "cpm" => &[Status::Err(CheckPhase::Chal)],
        "crpm" => &[Status::Err(CheckPhase::ChalResp)],
        "rct" | "apct" => &[Status::Err(CheckPhase::ACerts), Status::Err(CheckPhase::BCerts)],
        _ => unreachable!(),
    }
}

fn table4_reproduction() -> Outcome {
    let started = Instant::now();
    for provider in BACKENDS {
        let backend = provider.backend();
        for name in TABLE4 {
            let (_, run) = fixture_run(name, provider);
            let errs = errors_in(&run);
            ensure(run.final_state.status == Status::Abort, || {
                format!("{name}/{backend} ended {}", run.final_state.status)
            })?;
            ensure(errs.len() == 1 && expected_errors(name).contains(&errs[0]), || {
                format!("{name}/{backend} visited {errs:?}")
            })?;
        }
        let (_, run) = fixture_run("benign", provider);
        let f = &run.final_state;
        ensure(f.status == Status::End, || format!("benign/{backend} ended {}", f.status))?;
        ensure(f.bsp.session_key.is_some() && f.bsp.session_key == f.ap.session_key, || {
            format!("benign/{backend} session keys differ")
        })?;
    }
    let elapsed = started.elapsed();
    ensure(elapsed < TABLE4_BUDGET, || format!("took {elapsed:?}, budget {TABLE4_BUDGET:?}"))?;
    Ok(format!("6 attacks detected at the expected phase and benign END, both backends, {elapsed:.2?}"))
}

fn lemma_suite() -> Outcome {
    let started = Instant::now();
    let provider = CryptoProvider::symbolic();
    let record = provision_default(&provider);
    let report = verify_all(&record, &Lattice::Full.points(), &provider, Faults::none()).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let summary: Vec<String> = Check::ALL
        .iter()
        .map(|&c| format!("{}={}", c.name(), report.check(c).violations))
        .collect();
    let line = format!("{} runs, violations: {}, {elapsed:.2?}", report.total_runs, summary.join(" "));
    ensure(report.violations() == 0 && elapsed < LEMMA_BUDGET, || line.clone())?;
    Ok(line)
}

/// Run count for a scenario, by walking the attack choices directly: a
/// tampered chain aborts before any packet is sent; an attacked packet is
/// rejected on arrival, except that a replaced AP ignores the
/// challenge-response it cannot read and carries on to the response.
fn oracle_run_count(sc: &AttackScenario) -> usize {
    if sc.root_cert_tampered || sc.ap_cert_tampered {
        return 1;
    }
    fn walk(sc: &AttackScenario, rest: &[PacketPhase]) -> usize {
        let Some((&phase, tail)) = rest.split_first() else {
            return 1;
        };
        let continue_after_attack = sc.ap_replaced && phase == PacketPhase::ChalResp;
        let skip = walk(sc, tail);
        if !sc.targets(phase) {
            return skip;
        }
        let take = if continue_after_attack { walk(sc, tail) } else { 1 };
        skip + take
    }
    walk(sc, &[PacketPhase::Chal, PacketPhase::ChalResp, PacketPhase::Resp])
}

fn exploration_counts() -> Outcome {
    let provider = CryptoProvider::symbolic();
    let record = provision_default(&provider);
    let mut total = 0;
    let mut expected_total = 0;
    for point in Lattice::Full.points() {
        let machine = Machine::new(provider).with_mutation_seed(&point.scenario.mutation_seed);
        let s0 = apply_supply_chain(&record, &point.scenario, &provider).unwrap();
        let runs = explore(&machine, &s0, &point.scenario, &point.run_seed, DEFAULT_RUN_CAP).map_err(|e| e.to_string())?;
        let expected = oracle_run_count(&point.scenario);
        ensure(runs.len() == expected, || {
            format!("{}: explored {} runs, oracle says {expected}", point.label, runs.len())
        })?;
        total += runs.len();
        expected_total += expected;
    }
    ensure(expected_total == FULL_LATTICE_RUNS && total == FULL_LATTICE_RUNS, || {
        format!("total {total}, oracle {expected_total}, pinned {FULL_LATTICE_RUNS}")
    })?;
    Ok(format!("64 lattice points match the branch oracle exactly, {total} runs"))
}

/// Every single-byte edit position inside the subject id, subject key and
/// signature fields of a canonical certificate encoding.
fn mutable_positions(cert: &Certificate) -> Vec<usize> {
    let mut out = Vec::new();
    let mut at = 0;
    let fields = [
        (cert.subject_id.len(), true),
        (cert.subject_public_key.0.len(), true),
        (cert.issuer_id.len(), false),
        (cert.signature.len(), true),
    ];
    for (len, include) in fields {
        at += 4;
        if include {
            out.extend(at..at + len);
        }
        at += len;
    }
    out
}

fn crypto_properties() -> Outcome {
    let empty = hex::encode(CryptoProvider::concrete().hash(b"").0);
    ensure(empty == SHA256_EMPTY, || format!("SHA-256(\"\") = {empty}"))?;
    for provider in BACKENDS {
        let backend = provider.backend();
        let mut rng = RunRng::from_seed_bytes(format!("acceptance/{backend}").as_bytes());

        for i in 0..ROUND_TRIPS {
            let pair = provider.gen_keypair(format!("rt-{i}").as_bytes(), "rt").unwrap();
            let mut msg = vec![0u8; (rng.next_u32() % 128) as usize];
            rng.fill_bytes(&mut msg);
            let ct = provider.encrypt(&pair.public_key, &msg, &mut rng).unwrap();
            ensure(provider.decrypt(&pair.private_key, &ct).as_deref() == Ok(&msg[..]), || {
                format!("{backend}: round trip {i} lost the message")
            })?;
        }

        for i in 0..DH_PAIRS {
            let a = provider.gen_ephemeral(&mut rng);
            let b = provider.gen_ephemeral(&mut rng);
            let ab = provider.derive_session_key(&a.private_key, &b.public_key).unwrap();
            let ba = provider.derive_session_key(&b.private_key, &a.public_key).unwrap();
            ensure(ab == ba, || format!("{backend}: DH pair {i} asymmetric"))?;
        }

        let oem = provider.gen_keypair(b"acceptance-oem", "oem").unwrap();
        let root = provider
            .sign_certificate(&oem.private_key, "oem", &oem.public_key, "oem")
            .unwrap();
        let mut accepted = 0;
        for i in 0..SIGNATURE_MUTATIONS {
            let subject = provider.gen_keypair(format!("subject-{}", i % 10).as_bytes(), "s").unwrap();
            let cert = provider
                .sign_certificate(&oem.private_key, "ap", &subject.public_key, "oem")
                .unwrap();
            let positions = mutable_positions(&cert);
            let mut bytes = cert.encode();
            let pos = positions[rng.next_u32() as usize % positions.len()];
            bytes[pos] ^= (rng.next_u32() % 255 + 1) as u8;
            if let Ok(mutated) = Certificate::decode(&bytes) {
                if provider.verify_certificate(&root, &mutated).valid {
                    accepted += 1;
                }
            }
        }
        ensure(accepted == 0, || format!("{backend}: {accepted} of {SIGNATURE_MUTATIONS} mutated certificates verified"))?;
    }
    Ok(format!(
        "{ROUND_TRIPS} round trips, {DH_PAIRS} DH pairs, {SIGNATURE_MUTATIONS}/{SIGNATURE_MUTATIONS} cert mutations rejected per backend; SHA-256 vector ok"
    ))
}

fn run_cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_procauth")).args(args).output().expect("binary runs")
}

fn determinism_replay() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut traces = 0;
    for name in std::iter::once("benign").chain(TABLE4) {
        for backend in ["concrete", "symbolic"] {
            let mut bytes = Vec::new();
            for attempt in 0..2 {
                let path = dir.path().join(format!("{name}-{backend}-{attempt}.jsonl"));
                let out = run_cli(&["run", name, "--backend", backend, "--seed", "0badc0de", "--trace", path.to_str().unwrap()]);
                ensure(matches!(out.status.code(), Some(0 | 2)), || {
                    format!("run {name} {backend}: {}", String::from_utf8_lossy(&out.stderr))
                })?;
                bytes.push(std::fs::read(&path).map_err(|e| e.to_string())?);
            }
            ensure(!bytes[0].is_empty() && bytes[0] == bytes[1], || format!("{name}/{backend}: traces differ"))?;
            let first = dir.path().join(format!("{name}-{backend}-0.jsonl"));
            let out = run_cli(&["replay", first.to_str().unwrap(), "--scenario", name, "--backend", backend, "--seed", "0badc0de"]);
            ensure(out.status.success(), || format!("replay {name}/{backend}: {}", String::from_utf8_lossy(&out.stderr)))?;
            traces += 1;
        }
    }

    // Counterexamples from weakened machines must replay to the same failure.
    let mut replayed = 0;
    for (fault, lattice) in [("skip-nonce-check", Lattice::Full), ("skip-ephe-hash-check", Lattice::Full), ("skip-cert-check", Lattice::Table4)] {
        let mut faults = Faults::none();
        faults.enable(fault).unwrap();
        let provider = CryptoProvider::symbolic();
        let record = provision_default(&provider);
        let report = verify_all(&record, &lattice.points(), &provider, faults).map_err(|e| e.to_string())?;
        ensure(!report.passed, || format!("{fault}: no counterexample found"))?;
        for result in report.checks.iter().filter(|c| !c.passed) {
            for cx in &result.counterexamples {
                let machine = Machine::new(provider).with_mutation_seed(&cx.scenario.mutation_seed).with_faults(faults);
                let s0 = apply_supply_chain(&record, &cx.scenario, &provider).unwrap();
                let run = replay(&machine, &s0, &cx.run_seed, &cx.trace).map_err(|e| format!("{fault}: {e}"))?;
                let idx = Check::ALL.iter().position(|c| *c == result.check).unwrap();
                ensure(run.final_state.status == cx.final_status && !evaluate(&run, &record)[idx], || {
                    format!("{fault}: {} counterexample did not reproduce", result.check)
                })?;
                ensure(trace_of(&run, &provider) == cx.trace, || format!("{fault}: trace differs on replay"))?;
                replayed += 1;
            }
        }
    }
    Ok(format!("{traces} CLI traces byte-identical across two runs and replayed; {replayed} fault-injection counterexamples reproduce"))
}

fn backend_agreement() -> Outcome {
    let mut compared = 0;
    for name in std::iter::once("benign").chain(TABLE4) {
        let f = fixture(name).unwrap();
        let explored: Vec<Vec<Vec<Status>>> = BACKENDS
            .iter()
            .map(|p| {
                let record = f.provision(p).unwrap();
                let machine = Machine::new(*p).with_mutation_seed(&f.scenario.mutation_seed);
                let s0 = apply_supply_chain(&record, &f.scenario, p).unwrap();
                explore(&machine, &s0, &f.scenario, &f.seeds.run, DEFAULT_RUN_CAP)
                    .unwrap()
                    .iter()
                    .map(Run::statuses)
                    .collect()
            })
            .collect();
        ensure(explored[0] == explored[1], || format!("{name}: status sequences differ between backends"))?;
        let single: BTreeSet<Vec<Status>> = BACKENDS.iter().map(|p| fixture_run(name, *p).1.statuses()).collect();
        ensure(single.len() == 1, || format!("{name}: single-run status sequences differ"))?;
        compared += explored[0].len();
    }
    Ok(format!("{compared} explored runs over 7 fixtures have identical status sequences"))
}

fn main() {
    // The binary under test must exist before the trace criterion runs.
    assert!(Path::new(env!("CARGO_BIN_EXE_procauth")).exists());
    let criteria: [(&str, fn() -> Outcome); 6] = [
        ("table4_reproduction", table4_reproduction),
        ("lemma_suite_full_lattice", lemma_suite),
        ("exploration_count_oracle", exploration_counts),
        ("crypto_properties", crypto_properties),
        ("determinism_and_replay", determinism_replay),
        ("backend_agreement", backend_agreement),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("{} of {} acceptance criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
