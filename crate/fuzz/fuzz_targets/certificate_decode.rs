#![no_main]

use libfuzzer_sys::fuzz_target;
use procauth_core::crypto::{Certificate, CryptoProvider};
use procauth_core::provisioning::provision_default;

fuzz_target!(|data: &[u8]| {
    let Ok(cert) = Certificate::decode(data) else {
        return;
    };
    assert_eq!(cert.encode(), data);
    for provider in [CryptoProvider::concrete(), CryptoProvider::symbolic()] {
        let record = provision_default(&provider);
        if provider.verify_certificate(&record.chain.root, &cert).valid {
            // Only the genuine certificates carry a valid root signature.
            let chain = &record.chain;
            assert!(cert == chain.root || cert == chain.bsp || cert == chain.ap);
        }
    }
});
