//! Writes fuzz corpus seeds taken from real runs of the shipped fixtures.
//!
//! cargo run -p procauth-core --example fuzz_seeds -- fuzz/corpus

use std::fs;
use std::path::{Path, PathBuf};

use procauth_core::adversary::{apply_supply_chain, fixture, TABLE4};
use procauth_core::crypto::{Backend, CryptoProvider};
use procauth_core::protocol::{Machine, Packet};
use procauth_core::trace::{to_jsonl, trace_of};
use procauth_core::verifier::simulate;

fn put(dir: &Path, target: &str, name: &str, bytes: &[u8]) {
    let d = dir.join(target);
    fs::create_dir_all(&d).unwrap();
    fs::write(d.join(format!("seed-{name}")), bytes).unwrap();
}

fn ciphertext(pkt: &Packet) -> Option<&[u8]> {
    match pkt {
        Packet::Challenge { ciphertext }
        | Packet::ChallengeResponse { ciphertext, .. }
        | Packet::Response { ciphertext, .. } => Some(ciphertext),
        Packet::Alarm { .. } => None,
    }
}

fn main() {
    let out: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "fuzz/corpus".into()).into();
    for provider in [CryptoProvider::concrete(), CryptoProvider::symbolic()] {
        let backend = provider.backend();
        let sel = u8::from(backend == Backend::Symbolic);
        for name in std::iter::once("benign").chain(TABLE4) {
            let f = fixture(name).unwrap();
            let record = f.provision(&provider).unwrap();
            if name == "benign" {
                for (which, cert) in [("root", &record.chain.root), ("bsp", &record.chain.bsp), ("ap", &record.chain.ap)] {
                    put(&out, "certificate_decode", &format!("{backend}-{which}"), &cert.encode());
                }
            }
            let machine = Machine::new(provider).with_mutation_seed(&f.scenario.mutation_seed);
            let s0 = apply_supply_chain(&record, &f.scenario, &provider).unwrap();
            let run = simulate(&machine, &s0, &f.scenario, &f.seeds.run).unwrap();
            put(&out, "trace_parse", &format!("{backend}-{name}"), to_jsonl(&trace_of(&run, &provider)).as_bytes());

            let mut seen = Vec::new();
            for pkt in run.states().filter_map(|s| s.env.channel.clone()) {
                if seen.contains(&pkt) {
                    continue;
                }
                let stem = format!("{backend}-{name}-{}", seen.len());
                let wire = pkt.encode();
                put(&out, "packet_decode", &stem, &wire);
                put(&out, "message_parse", &stem, &[&[sel][..], &wire].concat());
                if let Some(ct) = ciphertext(&pkt) {
                    put(&out, "decrypt", &stem, &[&[sel][..], ct].concat());
                }
                seen.push(pkt);
            }
        }
    }
    for name in std::iter::once("benign").chain(TABLE4) {
        put(&out, "scenario_parse", name, fixture(name).unwrap().to_json().as_bytes());
    }
    put(&out, "scenario_parse", "empty-object", b"{}");
}
