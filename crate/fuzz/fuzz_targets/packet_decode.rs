#![no_main]

use libfuzzer_sys::fuzz_target;
use procauth_core::protocol::Packet;

fuzz_target!(|data: &[u8]| {
    if let Ok(pkt) = Packet::decode(data) {
        // The wire format is canonical: anything accepted re-encodes to itself.
        assert_eq!(pkt.encode(), data);
    }
});
