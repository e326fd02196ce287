#![no_main]

use libfuzzer_sys::fuzz_target;
use procauth_core::crypto::CryptoProvider;
use procauth_core::protocol::{parse_challenge, parse_challenge_response, parse_response, Packet};
use procauth_core::provisioning::{initial_state, provision_default};

// Decodes a packet off the channel and hands it to every receiver-side parser.
fuzz_target!(|data: &[u8]| {
    let Some((&sel, wire)) = data.split_first() else {
        return;
    };
    let Ok(pkt) = Packet::decode(wire) else {
        return;
    };
    let provider = if sel & 1 == 0 { CryptoProvider::concrete() } else { CryptoProvider::symbolic() };
    let s = initial_state(&provision_default(&provider));
    let _ = parse_challenge(&s.bsp, &pkt, &provider);
    let _ = parse_challenge_response(&s.ap, &pkt, &provider);
    let _ = parse_response(&s.bsp, &pkt, &provider);
});
