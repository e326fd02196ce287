use procauth_core::adversary::{apply_supply_chain, fixture, AttackScenario, ScenarioFile, TABLE4};
use procauth_core::crypto::CryptoProvider;
use procauth_core::domain::{CheckPhase, PacketPhase, Status};
use procauth_core::protocol::{Failure, Faults, Machine};
use procauth_core::provisioning::{provision_default, ProvisionRecord};
use procauth_core::trace::{parse_jsonl, replay, to_jsonl, trace_of};
use procauth_core::verifier::{evaluate, explore, simulate, verify_all, Check, Lattice};
use procauth_core::Error;

fn run_fixture(name: &str, provider: CryptoProvider, faults: Faults) -> procauth_core::domain::Run {
    let f = fixture(name).unwrap();
    let record = f.provision(&provider).unwrap();
    let machine = Machine::new(provider).with_mutation_seed(&f.scenario.mutation_seed).with_faults(faults);
    let s0 = apply_supply_chain(&record, &f.scenario, &provider).unwrap();
    simulate(&machine, &s0, &f.scenario, &f.seeds.run).unwrap()
}

fn last_failure(run: &procauth_core::domain::Run) -> Option<Failure> {
    run.steps.iter().filter_map(|s| s.failure).last()
}

#[test]
fn benign_run_has_21_transitions() {
    for provider in [CryptoProvider::concrete(), CryptoProvider::symbolic()] {
        let run = run_fixture("benign", provider, Faults::none());
        assert_eq!(run.final_state.status, Status::End);
        assert_eq!(run.len(), 21);
        assert!(run.final_state.bsp.session_key.is_some());
        assert_eq!(run.final_state.bsp.session_key, run.final_state.ap.session_key);
    }
}

#[test]
fn fixtures_fail_for_the_documented_reason() {
    let expected = [
        ("apr", Status::Err(CheckPhase::Resp), Failure::NonceMismatch),
        ("cpm", Status::Err(CheckPhase::Chal), Failure::DecryptFail),
        ("crpm", Status::Err(CheckPhase::ChalResp), Failure::EpheHashMismatch),
        ("rpm", Status::Err(CheckPhase::Resp), Failure::EpheHashMismatch),
        ("rct", Status::Err(CheckPhase::ACerts), Failure::RootHashMismatch),
        ("apct", Status::Err(CheckPhase::BCerts), Failure::CertificateInvalid),
    ];
    assert_eq!(expected.map(|e| e.0), TABLE4);
    for provider in [CryptoProvider::concrete(), CryptoProvider::symbolic()] {
        for (name, err, reason) in expected {
            let run = run_fixture(name, provider, Faults::none());
            assert_eq!(run.final_state.status, Status::Abort, "{name}");
            assert!(run.statuses().contains(&err), "{name}: {:?}", run.statuses());
            assert_eq!(last_failure(&run), Some(reason), "{name}");
        }
    }
}

#[test]
fn skipped_checks_let_attacks_through() {
    let mut f = Faults::none();
    f.enable("skip-nonce-check").unwrap();
    assert_eq!(run_fixture("apr", CryptoProvider::symbolic(), f).final_state.status, Status::End);

    let mut f = Faults::none();
    f.enable("skip-ephe-hash-check").unwrap();
    let run = run_fixture("crpm", CryptoProvider::concrete(), f);
    assert_eq!(run.final_state.status, Status::Abort);
    assert!(!run.statuses().contains(&Status::Err(CheckPhase::ChalResp)));
    assert_eq!(last_failure(&run), Some(Failure::SessionKeyMismatch));

    assert!(Faults::none().enable("skip-everything").is_err());
}

#[test]
fn trace_round_trips_and_replays() {
    for provider in [CryptoProvider::concrete(), CryptoProvider::symbolic()] {
        for name in ["benign", "crpm", "rct"] {
            let f = fixture(name).unwrap();
            let run = run_fixture(name, provider, Faults::none());
            let text = to_jsonl(&trace_of(&run, &provider));
            let records = parse_jsonl(&text).unwrap();
            assert_eq!(records.len(), run.len());

            let record = f.provision(&provider).unwrap();
            let machine = Machine::new(provider).with_mutation_seed(&f.scenario.mutation_seed);
            let s0 = apply_supply_chain(&record, &f.scenario, &provider).unwrap();
            let again = replay(&machine, &s0, &f.seeds.run, &records).unwrap();
            assert_eq!(again.final_state, run.final_state);

            let wrong_seed = replay(&machine, &s0, b"another run", &records);
            if name == "benign" {
                assert!(matches!(wrong_seed, Err(Error::ReplayDiverged { .. })));
            }
        }
    }
}

#[test]
fn edited_trace_is_rejected() {
    let provider = CryptoProvider::symbolic();
    let f = fixture("cpm").unwrap();
    let run = run_fixture("cpm", provider, Faults::none());
    let mut records = trace_of(&run, &provider);
    let err_step = records.iter().position(|r| r.reason.is_some()).unwrap();
    records[err_step].reason = Some(Failure::NonceMismatch);

    let record = f.provision(&provider).unwrap();
    let machine = Machine::new(provider).with_mutation_seed(&f.scenario.mutation_seed);
    let s0 = apply_supply_chain(&record, &f.scenario, &provider).unwrap();
    match replay(&machine, &s0, &f.seeds.run, &records) {
        Err(Error::ReplayDiverged { step, .. }) => assert_eq!(step, err_step),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn exploration_cap_is_enforced() {
    let provider = CryptoProvider::symbolic();
    let record = provision_default(&provider);
    let sc = AttackScenario {
        mitm_targets: PacketPhase::ALL.into_iter().collect(),
        ..AttackScenario::benign()
    };
    let machine = Machine::new(provider);
    let s0 = apply_supply_chain(&record, &sc, &provider).unwrap();
    assert_eq!(explore(&machine, &s0, &sc, b"r", 4).unwrap().len(), 4);
    assert!(matches!(explore(&machine, &s0, &sc, b"r", 3), Err(Error::ExplorationOverflow { cap: 3 })));
}

#[test]
fn table4_lattice_is_clean_on_both_backends() {
    for provider in [CryptoProvider::concrete(), CryptoProvider::symbolic()] {
        let record = provision_default(&provider);
        let report = verify_all(&record, &Lattice::Table4.points(), &provider, Faults::none()).unwrap();
        assert!(report.passed, "{}", report.to_json());
        assert_eq!(report.total_runs, 9);
    }
}

#[test]
fn every_check_holds_on_the_benign_run() {
    let provider = CryptoProvider::symbolic();
    let record = provision_default(&provider);
    let run = run_fixture("benign", provider, Faults::none());
    assert_eq!(evaluate(&run, &record), [true; 8]);
    assert_eq!(Check::ALL.len(), 8);
}

#[test]
fn provisioned_directory_round_trips() {
    let provider = CryptoProvider::concrete();
    let record = provision_default(&provider);
    let dir = tempfile::tempdir().unwrap();
    record.write_dir(dir.path()).unwrap();
    let back = ProvisionRecord::read_dir(dir.path()).unwrap();
    assert_eq!(back, record);
    back.validate(&provider).unwrap();
    assert_eq!(provider.hash(&record.chain.root.encode()), record.root_cert_hash);
    assert!(back.validate(&CryptoProvider::symbolic()).is_err());
}

#[test]
fn malformed_scenarios_are_rejected() {
    for bad in [
        "",
        "[]",
        r#"{"mitm_targets":["CHAL","CHAL"]}"#,
        r#"{"mitm_targets":["ALARM"]}"#,
        r#"{"ap_replaced":"yes"}"#,
        r#"{"seeds":{"oem":"00","bsp":"00"}}"#,
        r#"{"seeds":{"run":""}}"#,
        r#"{"unknown":1}"#,
        r#"{"seeds":{"run":"zz"}}"#,
    ] {
        assert!(matches!(ScenarioFile::parse(bad), Err(Error::Scenario(_))), "{bad:?}");
    }
    assert!(ScenarioFile::parse("{}").unwrap().scenario.is_benign());
}
