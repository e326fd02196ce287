#![no_main]

use libfuzzer_sys::fuzz_target;
use procauth_core::trace::{parse_jsonl, to_jsonl};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(records) = parse_jsonl(text) {
        assert_eq!(parse_jsonl(&to_jsonl(&records)).unwrap(), records);
    }
});
