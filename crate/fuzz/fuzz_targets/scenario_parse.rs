#![no_main]

use libfuzzer_sys::fuzz_target;
use procauth_core::adversary::ScenarioFile;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(sc) = ScenarioFile::parse(text) {
        assert_eq!(ScenarioFile::parse(&sc.to_json()).unwrap(), sc);
    }
});
