#![no_main]

use libfuzzer_sys::fuzz_target;
use procauth_core::crypto::CryptoProvider;
use procauth_core::provisioning::provision_default;

// First byte picks the backend, the rest is the ciphertext.
fuzz_target!(|data: &[u8]| {
    let Some((&sel, ct)) = data.split_first() else {
        return;
    };
    let provider = if sel & 1 == 0 { CryptoProvider::concrete() } else { CryptoProvider::symbolic() };
    let record = provision_default(&provider);
    let _ = provider.decrypt(&record.bsp_keypair.private_key, ct);
    let _ = provider.decrypt(&record.ap_keypair.private_key, ct);
});
