//! Exhaustive run exploration and the executable correctness and security
//! checks.
//!
//! Runs are abstracted to a three-valued high-level machine (running, ideal,
//! aborted) carrying the benignity of the current security context, and the
//! high-level properties are checked on that abstraction.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adversary::{apply_supply_chain, fixture, AttackScenario, DEFAULT_RUN_SEED, TABLE4};
use crate::crypto::{Backend, CryptoProvider, RunRng};
use crate::domain::{
    benignity, free_of_attack, security_context, CheckPhase, PacketPhase, ProtocolState, Run, RunStep, Status,
};
use crate::error::{Error, Result};
use crate::protocol::{attack_phase, enabled_events, EventKind, Faults, Machine};
use crate::provisioning::ProvisionRecord;
use crate::trace::{trace_of, TraceRecord};

pub const DEFAULT_RUN_CAP: usize = 10_000;

/// Longest possible run is the benign path plus three attacks.
const MAX_RUN_LEN: usize = 64;

/// Events the explorer takes at `s`: the protocol continuation, plus Attack
/// when the scenario targets the packet in flight.
fn choices(s: &ProtocolState, scenario: &AttackScenario) -> Vec<crate::protocol::EventLabel> {
    enabled_events(s)
        .into_iter()
        .filter(|e| {
            e.kind() != EventKind::Attack || attack_phase(s.status).is_some_and(|p| scenario.targets(p))
        })
        .collect()
}

fn step(machine: &Machine, run: &mut Vec<RunStep>, s: ProtocolState, e: crate::protocol::EventLabel, rng: &mut RunRng) -> Result<ProtocolState> {
    if run.len() >= MAX_RUN_LEN {
        return Err(Error::Invariant("run exceeded the maximum length"));
    }
    let t = machine.exec_event(&s, &e, rng)?;
    run.push(RunStep {
        state: s,
        event: e,
        failure: t.failure,
    });
    Ok(t.state)
}

/// Every maximal run from `s0`. Branches only where the scenario lets the
/// interposer act; each branch continues from a fork of the RNG stream.
/// The attack-free branch is listed first.
pub fn explore(
    machine: &Machine,
    s0: &ProtocolState,
    scenario: &AttackScenario,
    run_seed: &[u8],
    cap: usize,
) -> Result<Vec<Run>> {
    let mut runs = Vec::new();
    let mut stack = vec![(s0.clone(), RunRng::from_seed_bytes(run_seed), Vec::new())];
    while let Some((mut s, mut rng, mut steps)) = stack.pop() {
        loop {
            let mut next = choices(&s, scenario);
            if next.is_empty() {
                break;
            }
            let first = next.remove(0);
            // Pushed in reverse so branches pop in enumeration order.
            for e in next.into_iter().rev() {
                let mut branch_rng = rng.clone();
                let mut branch_steps = steps.clone();
                let t = step(machine, &mut branch_steps, s.clone(), e, &mut branch_rng)?;
                stack.push((t, branch_rng, branch_steps));
            }
            s = step(machine, &mut steps, s, first, &mut rng)?;
        }
        if runs.len() == cap {
            return Err(Error::ExplorationOverflow { cap });
        }
        runs.push(Run {
            steps,
            final_state: s,
        });
    }
    Ok(runs)
}

/// A single run in which the interposer acts at every targeted packet.
pub fn simulate(machine: &Machine, s0: &ProtocolState, scenario: &AttackScenario, run_seed: &[u8]) -> Result<Run> {
    let mut rng = RunRng::from_seed_bytes(run_seed);
    let mut steps = Vec::new();
    let mut s = s0.clone();
    while let Some(e) = choices(&s, scenario).pop() {
        s = step(machine, &mut steps, s, e, &mut rng)?;
    }
    Ok(Run {
        steps,
        final_state: s,
    })
}

/// Lemma 1: keys, ROM hashes and NVM never change along a run.
pub fn check_functional_correctness(run: &Run) -> bool {
    let s0 = run.initial();
    run.states().all(|s| {
        s.bsp.private_key == s0.bsp.private_key
            && s.ap.private_key == s0.ap.private_key
            && s.bsp.root_cert_hash == s0.bsp.root_cert_hash
            && s.ap.root_cert_hash == s0.ap.root_cert_hash
            && s.env.nvm == s0.env.nvm
    })
}

fn initially_benign(run: &Run, record: &ProvisionRecord) -> bool {
    benignity(&security_context(run.initial()), record)
}

/// Lemma 2.1: a benign, attack-free run ends in END.
pub fn check_security_normal(run: &Run, record: &ProvisionRecord) -> bool {
    !(initially_benign(run, record) && free_of_attack(run)) || run.final_state.status == Status::End
}

/// Lemma 2.2: a run from a tampered context aborts after an A_CERTS, B_CERTS
/// or RESP error.
pub fn check_security_tampered(run: &Run, record: &ProvisionRecord) -> bool {
    if initially_benign(run, record) {
        return true;
    }
    let statuses = run.statuses();
    let n = statuses.len() - 1;
    statuses[n] == Status::Abort
        && statuses[1..n].iter().any(|s| {
            matches!(
                s,
                Status::Err(CheckPhase::ACerts) | Status::Err(CheckPhase::BCerts) | Status::Err(CheckPhase::Resp)
            )
        })
}

/// Lemma 2.3: an attacked run aborts, and some attacked packet is rejected
/// later in the run at its own phase.
pub fn check_security_mitm(run: &Run) -> bool {
    if free_of_attack(run) {
        return true;
    }
    let statuses = run.statuses();
    let n = statuses.len() - 1;
    if statuses[n] != Status::Abort {
        return false;
    }
    (1..n).any(|i| match statuses[i] {
        Status::Attk(p) => statuses[i + 1..n].contains(&Status::Err(p.check_phase())),
        _ => false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Abstract {
    Running,
    Ideal,
    Aborted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HighLevelState {
    pub status: Abstract,
    pub benign: bool,
}

pub fn abstract_run(run: &Run, record: &ProvisionRecord) -> Vec<HighLevelState> {
    run.states()
        .map(|s| HighLevelState {
            status: match s.status {
                Status::End => Abstract::Ideal,
                Status::Abort => Abstract::Aborted,
                _ => Abstract::Running,
            },
            benign: benignity(&security_context(s), record),
        })
        .collect()
}

/// Property 1: benignity never changes along the abstract run.
pub fn check_property_1(abs: &[HighLevelState]) -> bool {
    abs.iter().all(|h| h.benign == abs[0].benign)
}

/// Property 2: the run ends ideal exactly when it started benign and no
/// attack happened.
pub fn check_property_2(abs: &[HighLevelState], run: &Run) -> bool {
    let ideal = abs.last().is_some_and(|h| h.status == Abstract::Ideal);
    ideal == (abs[0].benign && free_of_attack(run))
}

pub fn check_high_level(abs: &[HighLevelState], run: &Run) -> bool {
    check_property_1(abs) && check_property_2(abs, run)
}

/// Structural facts every explored run must satisfy: it ends terminal, its
/// states are pairwise distinct, no session key exists without both
/// ephemeral halves, and END means both sides hold the same key.
pub fn check_run_invariants(run: &Run) -> bool {
    let keys_backed = run.states().all(|s| {
        [&s.bsp, &s.ap]
            .iter()
            .all(|p| p.session_key.is_none() || (p.local_ephe_key.is_some() && p.remote_ephe_key.is_some()))
    });
    let f = &run.final_state;
    let end_agrees = f.status != Status::End || (f.bsp.session_key.is_some() && f.bsp.session_key == f.ap.session_key);
    f.status.is_terminal()
        && enabled_events(f).is_empty()
        && run.states_pairwise_distinct()
        && keys_backed
        && end_agrees
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Lemma1,
    Lemma2_1,
    Lemma2_2,
    Lemma2_3,
    Property1,
    Property2,
    /// A run the low-level lemmas accept must also satisfy the high-level
    /// properties under the abstraction.
    Refinement,
    RunInvariants,
}

impl Check {
    pub const ALL: [Check; 8] = [
        Check::Lemma1,
        Check::Lemma2_1,
        Check::Lemma2_2,
        Check::Lemma2_3,
        Check::Property1,
        Check::Property2,
        Check::Refinement,
        Check::RunInvariants,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::Lemma1 => "lemma_1",
            Check::Lemma2_1 => "lemma_2_1",
            Check::Lemma2_2 => "lemma_2_2",
            Check::Lemma2_3 => "lemma_2_3",
            Check::Property1 => "property_1",
            Check::Property2 => "property_2",
            Check::Refinement => "refinement",
            Check::RunInvariants => "run_invariants",
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Evaluates every check on one run; the result is indexed like [`Check::ALL`].
pub fn evaluate(run: &Run, record: &ProvisionRecord) -> [bool; 8] {
    let abs = abstract_run(run, record);
    let l1 = check_functional_correctness(run);
    let l21 = check_security_normal(run, record);
    let l22 = check_security_tampered(run, record);
    let l23 = check_security_mitm(run);
    let p1 = check_property_1(&abs);
    let p2 = check_property_2(&abs, run);
    let refinement = !(l1 && l21 && l22 && l23) || (p1 && p2);
    [l1, l21, l22, l23, p1, p2, refinement, check_run_invariants(run)]
}

/// One scenario of a sweep together with the RNG seed its runs start from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticePoint {
    pub label: String,
    pub scenario: AttackScenario,
    pub run_seed: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lattice {
    /// Every combination of the three supply-chain flags and the eight
    /// subsets of attacked packets.
    Full,
    /// The six shipped attack fixtures.
    Table4,
    Benign,
}

impl FromStr for Lattice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "full" => Ok(Lattice::Full),
            "table4" => Ok(Lattice::Table4),
            "benign" => Ok(Lattice::Benign),
            other => Err(format!("unknown lattice {other:?} (expected full, table4 or benign)")),
        }
    }
}

impl fmt::Display for Lattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Lattice::Full => "full",
            Lattice::Table4 => "table4",
            Lattice::Benign => "benign",
        })
    }
}

impl Lattice {
    pub fn points(self) -> Vec<LatticePoint> {
        match self {
            Lattice::Full => {
                let mut out = Vec::with_capacity(64);
                for flags in 0..8u8 {
                    for targets in 0..8u8 {
                        let scenario = AttackScenario {
                            ap_replaced: flags & 1 != 0,
                            root_cert_tampered: flags & 2 != 0,
                            ap_cert_tampered: flags & 4 != 0,
                            mitm_targets: PacketPhase::ALL
                                .into_iter()
                                .enumerate()
                                .filter(|(i, _)| targets & (1 << i) != 0)
                                .map(|(_, p)| p)
                                .collect(),
                            ..AttackScenario::benign()
                        };
                        out.push(LatticePoint {
                            label: scenario.label(),
                            scenario,
                            run_seed: DEFAULT_RUN_SEED.to_vec(),
                        });
                    }
                }
                out
            }
            Lattice::Table4 => TABLE4
                .iter()
                .map(|name| {
                    let f = fixture(name).expect("shipped fixture");
                    LatticePoint {
                        label: (*name).to_owned(),
                        scenario: f.scenario,
                        run_seed: f.seeds.run,
                    }
                })
                .collect(),
            Lattice::Benign => vec![LatticePoint {
                label: "benign".into(),
                scenario: AttackScenario::benign(),
                run_seed: DEFAULT_RUN_SEED.to_vec(),
            }],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    pub scenario_label: String,
    pub scenario: AttackScenario,
    #[serde(with = "hex")]
    pub run_seed: Vec<u8>,
    pub run_index: usize,
    pub final_status: Status,
    pub trace: Vec<TraceRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub check: Check,
    pub passed: bool,
    pub runs_checked: usize,
    pub violations: usize,
    /// The first few violating runs; non-empty whenever `passed` is false.
    pub counterexamples: Vec<Counterexample>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub label: String,
    pub runs: usize,
    pub final_statuses: Vec<Status>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub backend: Backend,
    pub faults: Faults,
    pub passed: bool,
    pub total_runs: usize,
    pub checks: Vec<CheckResult>,
    pub scenarios: Vec<ScenarioSummary>,
}

impl LemmaReport {
    pub fn check(&self, check: Check) -> &CheckResult {
        self.checks.iter().find(|c| c.check == check).expect("every check is reported")
    }

    pub fn violations(&self) -> usize {
        self.checks.iter().map(|c| c.violations).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report always serializes")
    }
}

const COUNTEREXAMPLES_KEPT: usize = 4;

/// Explores every lattice point and evaluates all checks on every run.
pub fn verify_all(
    record: &ProvisionRecord,
    points: &[LatticePoint],
    provider: &CryptoProvider,
    faults: Faults,
) -> Result<LemmaReport> {
    let mut checks: Vec<CheckResult> = Check::ALL
        .iter()
        .map(|&check| CheckResult {
            check,
            passed: true,
            runs_checked: 0,
            violations: 0,
            counterexamples: Vec::new(),
        })
        .collect();
    let mut scenarios = Vec::with_capacity(points.len());
    let mut total_runs = 0;
    for point in points {
        let machine = Machine::new(*provider)
            .with_mutation_seed(&point.scenario.mutation_seed)
            .with_faults(faults);
        let s0 = apply_supply_chain(record, &point.scenario, provider)?;
        let runs = explore(&machine, &s0, &point.scenario, &point.run_seed, DEFAULT_RUN_CAP)?;
        for (run_index, run) in runs.iter().enumerate() {
            for (result, ok) in checks.iter_mut().zip(evaluate(run, record)) {
                result.runs_checked += 1;
                if !ok {
                    result.passed = false;
                    result.violations += 1;
                    if result.counterexamples.len() < COUNTEREXAMPLES_KEPT {
                        result.counterexamples.push(Counterexample {
                            scenario_label: point.label.clone(),
                            scenario: point.scenario.clone(),
                            run_seed: point.run_seed.clone(),
                            run_index,
                            final_status: run.final_state.status,
                            trace: trace_of(run, provider),
                        });
                    }
                }
            }
        }
        total_runs += runs.len();
        scenarios.push(ScenarioSummary {
            label: point.label.clone(),
            runs: runs.len(),
            final_statuses: runs.iter().map(|r| r.final_state.status).collect(),
        });
    }
    Ok(LemmaReport {
        backend: provider.backend(),
        faults,
        passed: checks.iter().all(|c| c.passed),
        total_runs,
        checks,
        scenarios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Phase;
    use crate::provisioning::provision_default;

    fn setup(scenario: &AttackScenario) -> (ProvisionRecord, Machine, ProtocolState) {
        let p = CryptoProvider::symbolic();
        let r = provision_default(&p);
        let s0 = apply_supply_chain(&r, scenario, &p).unwrap();
        (r, Machine::new(p).with_mutation_seed(&scenario.mutation_seed), s0)
    }

    #[test]
    fn benign_scenario_has_one_ending_run() {
        let sc = AttackScenario::benign();
        let (r, m, s0) = setup(&sc);
        let runs = explore(&m, &s0, &sc, b"x", DEFAULT_RUN_CAP).unwrap();
        assert_eq!(runs.len(), 1);
        assert_eq!(runs[0].final_state.status, Status::End);
        assert_eq!(runs[0].len(), 21);
        assert!(evaluate(&runs[0], &r).iter().all(|&ok| ok));
    }

    #[test]
    fn cap_overflow_is_an_error() {
        let sc = AttackScenario {
            mitm_targets: PacketPhase::ALL.into(),
            ..AttackScenario::benign()
        };
        let (_, m, s0) = setup(&sc);
        assert!(matches!(
            explore(&m, &s0, &sc, b"x", 3),
            Err(Error::ExplorationOverflow { cap: 3 })
        ));
        assert_eq!(explore(&m, &s0, &sc, b"x", 4).unwrap().len(), 4);
    }

    #[test]
    fn simulate_matches_the_all_attack_branch() {
        let sc = AttackScenario {
            mitm_targets: [PacketPhase::Resp].into(),
            ..AttackScenario::benign()
        };
        let (_, m, s0) = setup(&sc);
        let runs = explore(&m, &s0, &sc, b"x", DEFAULT_RUN_CAP).unwrap();
        let single = simulate(&m, &s0, &sc, b"x").unwrap();
        assert_eq!(runs.last().unwrap(), &single);
        assert!(single.statuses().contains(&Status::Attk(PacketPhase::Resp)));
    }

    #[test]
    fn nvm_write_breaks_lemma_1() {
        let sc = AttackScenario::benign();
        let (_, m, s0) = setup(&sc);
        let mut run = simulate(&m, &s0, &sc, b"x").unwrap();
        assert!(check_functional_correctness(&run));
        run.steps[5].state.env.nvm.bsp.signature[0] ^= 1;
        assert!(!check_functional_correctness(&run));
    }

    #[test]
    fn abstraction_is_pointwise() {
        let sc = AttackScenario {
            ap_replaced: true,
            ..AttackScenario::benign()
        };
        let (r, m, s0) = setup(&sc);
        let run = simulate(&m, &s0, &sc, b"x").unwrap();
        let abs = abstract_run(&run, &r);
        assert_eq!(abs.len(), run.len() + 1);
        assert!(abs.iter().all(|h| !h.benign));
        assert_eq!(abs.last().unwrap().status, Abstract::Aborted);
        assert!(abs[..abs.len() - 1].iter().all(|h| h.status == Abstract::Running));
        assert!(run.statuses().contains(&Status::Err(CheckPhase::Resp)));
    }

    #[test]
    fn hand_built_violations_are_caught() {
        let sc = AttackScenario {
            mitm_targets: [PacketPhase::Chal].into(),
            ..AttackScenario::benign()
        };
        let (r, m, s0) = setup(&sc);
        let mut run = simulate(&m, &s0, &sc, b"x").unwrap();
        assert!(check_security_mitm(&run));
        // Relabel the rejection as a different phase: the match is now wrong.
        for s in &mut run.steps {
            if s.state.status == Status::Err(CheckPhase::Chal) {
                s.state.status = Status::Err(CheckPhase::Resp);
            }
        }
        assert!(!check_security_mitm(&run));
        // Force an END on an attacked run.
        run.final_state.status = Status::End;
        let abs = abstract_run(&run, &r);
        assert!(!check_property_2(&abs, &run));
        assert!(check_security_normal(&run, &r));
    }

    #[test]
    fn lattice_sizes() {
        assert_eq!(Lattice::Full.points().len(), 64);
        assert_eq!(Lattice::Table4.points().len(), 6);
        assert_eq!(Lattice::Benign.points().len(), 1);
        assert_eq!("table4".parse::<Lattice>().unwrap(), Lattice::Table4);
        assert!("all".parse::<Lattice>().is_err());
        let labels: std::collections::HashSet<_> = Lattice::Full.points().into_iter().map(|p| p.label).collect();
        assert_eq!(labels.len(), 64);
    }

    #[test]
    fn benign_lattice_report_passes() {
        let p = CryptoProvider::symbolic();
        let r = provision_default(&p);
        let report = verify_all(&r, &Lattice::Benign.points(), &p, Faults::none()).unwrap();
        assert!(report.passed);
        assert_eq!(report.total_runs, 1);
        assert_eq!(report.scenarios[0].final_statuses, [Status::End]);
        assert_eq!(report.check(Check::Lemma2_1).runs_checked, 1);
    }

    #[test]
    fn failures_carry_counterexamples() {
        let p = CryptoProvider::symbolic();
        let r = provision_default(&p);
        let faults = Faults {
            skip_nonce_check: true,
            ..Faults::none()
        };
        let point = LatticePoint {
            label: "apr".into(),
            scenario: AttackScenario {
                ap_replaced: true,
                ..AttackScenario::benign()
            },
            run_seed: b"x".to_vec(),
        };
        let report = verify_all(&r, &[point], &p, faults).unwrap();
        assert!(!report.passed);
        for c in &report.checks {
            assert_eq!(c.passed, c.counterexamples.is_empty(), "{}", c.check);
        }
        let cx = &report.check(Check::Lemma2_2).counterexamples[0];
        assert_eq!(cx.final_status, Status::End);
        assert_eq!(cx.trace.last().unwrap().pre_status, Status::Ok(Phase::SessKeyA));
    }
}
