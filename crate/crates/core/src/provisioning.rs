//! OEM-side setup: key pairs, the depth-2 certificate chain, the bootROM hash
//! and the initial protocol state built from them.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::crypto::{Certificate, CertificateChain, CryptoProvider, Digest, KeyPair, PrivateKey, PublicKey};
use crate::domain::{EnvironmentState, ProcessorState, ProtocolState, Status};
use crate::error::{Error, Result};

pub const ROOT_ID: &str = "oem-root";
pub const BSP_ID: &str = "bsp";
pub const AP_ID: &str = "ap";

pub const DEFAULT_OEM_SEED: &[u8] = b"procauth/default/oem";
pub const DEFAULT_BSP_SEED: &[u8] = b"procauth/default/bsp";
pub const DEFAULT_AP_SEED: &[u8] = b"procauth/default/ap";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvisionRecord {
    pub oem_keypair: KeyPair,
    pub bsp_keypair: KeyPair,
    pub ap_keypair: KeyPair,
    pub chain: CertificateChain,
    pub root_cert_hash: Digest,
}

pub fn provision(
    oem_seed: &[u8],
    bsp_seed: &[u8],
    ap_seed: &[u8],
    provider: &CryptoProvider,
) -> Result<ProvisionRecord> {
    if oem_seed == bsp_seed || oem_seed == ap_seed || bsp_seed == ap_seed {
        return Err(Error::DuplicateSeeds);
    }
    let oem = provider.gen_keypair(oem_seed, ROOT_ID)?;
    let bsp = provider.gen_keypair(bsp_seed, BSP_ID)?;
    let ap = provider.gen_keypair(ap_seed, AP_ID)?;

    let root = provider.sign_certificate(&oem.private_key, ROOT_ID, &oem.public_key, ROOT_ID)?;
    let bsp_cert = provider.sign_certificate(&oem.private_key, BSP_ID, &bsp.public_key, ROOT_ID)?;
    let ap_cert = provider.sign_certificate(&oem.private_key, AP_ID, &ap.public_key, ROOT_ID)?;
    let root_cert_hash = provider.hash(&root.encode());

    Ok(ProvisionRecord {
        oem_keypair: oem,
        bsp_keypair: bsp,
        ap_keypair: ap,
        chain: CertificateChain {
            root,
            bsp: bsp_cert,
            ap: ap_cert,
        },
        root_cert_hash,
    })
}

pub fn provision_default(provider: &CryptoProvider) -> ProvisionRecord {
    provision(DEFAULT_OEM_SEED, DEFAULT_BSP_SEED, DEFAULT_AP_SEED, provider)
        .expect("default seeds are distinct and non-empty")
}

/// s0: both processors hold the ROM hash and their own private key, NVM holds
/// the provisioned chain, nothing else is set.
pub fn initial_state(record: &ProvisionRecord) -> ProtocolState {
    ProtocolState {
        bsp: ProcessorState::new(record.root_cert_hash, record.bsp_keypair.private_key.clone()),
        ap: ProcessorState::new(record.root_cert_hash, record.ap_keypair.private_key.clone()),
        env: EnvironmentState {
            nvm: record.chain.clone(),
            channel: None,
        },
        status: Status::Init,
    }
}

impl ProvisionRecord {
    /// Re-checks the chain, the key bindings and the ROM hash.
    pub fn validate(&self, provider: &CryptoProvider) -> Result<()> {
        let chain = &self.chain;
        if !chain.root.is_self_signed()
            || chain.root.subject_public_key != self.oem_keypair.public_key
            || !provider.verify_certificate(&chain.root, &chain.root).valid
        {
            return Err(Error::Invariant("root certificate is not self-signed by the OEM key"));
        }
        for (cert, pair) in [(&chain.bsp, &self.bsp_keypair), (&chain.ap, &self.ap_keypair)] {
            if cert.subject_public_key != pair.public_key || !provider.verify_certificate(&chain.root, cert).valid {
                return Err(Error::Invariant("processor certificate does not bind the provisioned key"));
            }
        }
        for pair in [&self.oem_keypair, &self.bsp_keypair, &self.ap_keypair] {
            if provider.public_key_of(&pair.private_key)? != pair.public_key {
                return Err(Error::Invariant("key pair halves do not match"));
            }
        }
        if provider.hash(&chain.root.encode()) != self.root_cert_hash {
            return Err(Error::Invariant("ROM hash does not match the root certificate"));
        }
        Ok(())
    }

    /// Writes the on-disk fixture layout: `root.cert`, `bsp.cert`, `ap.cert`
    /// in canonical encoding, `rom_hash.hex`, and `<id>.key` / `<id>.pub` as
    /// lowercase hex.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("root.cert"), self.chain.root.encode())?;
        fs::write(dir.join("bsp.cert"), self.chain.bsp.encode())?;
        fs::write(dir.join("ap.cert"), self.chain.ap.encode())?;
        fs::write(dir.join("rom_hash.hex"), format!("{}\n", hex::encode(self.root_cert_hash.0)))?;
        for (name, pair) in [("oem", &self.oem_keypair), ("bsp", &self.bsp_keypair), ("ap", &self.ap_keypair)] {
            fs::write(dir.join(format!("{name}.key")), format!("{}\n", hex::encode(&pair.private_key.0)))?;
            fs::write(dir.join(format!("{name}.pub")), format!("{}\n", hex::encode(&pair.public_key.0)))?;
        }
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let cert = |name: &str| -> Result<Certificate> { Ok(Certificate::decode(&fs::read(dir.join(name))?)?) };
        let hex_file = |name: &str| -> Result<Vec<u8>> {
            let text = fs::read_to_string(dir.join(name))?;
            hex::decode(text.trim()).map_err(|e| Error::Scenario(format!("{name}: {e}")))
        };
        let pair = |name: &str, key_id: &str| -> Result<KeyPair> {
            Ok(KeyPair {
                private_key: PrivateKey(hex_file(&format!("{name}.key"))?),
                public_key: PublicKey(hex_file(&format!("{name}.pub"))?),
                key_id: key_id.to_owned(),
            })
        };
        let rom = hex_file("rom_hash.hex")?;
        Ok(Self {
            oem_keypair: pair("oem", ROOT_ID)?,
            bsp_keypair: pair("bsp", BSP_ID)?,
            ap_keypair: pair("ap", AP_ID)?,
            chain: CertificateChain {
                root: cert("root.cert")?,
                bsp: cert("bsp.cert")?,
                ap: cert("ap.cert")?,
            },
            root_cert_hash: Digest::from_slice(&rom)
                .ok_or_else(|| Error::Scenario("rom_hash.hex must hold 32 bytes".into()))?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{benignity, security_context};

    const BACKENDS: [CryptoProvider; 2] = [CryptoProvider::concrete(), CryptoProvider::symbolic()];

    #[test]
    fn record_satisfies_invariants() {
        for p in BACKENDS {
            let r = provision_default(&p);
            r.validate(&p).unwrap();
            assert_eq!(p.hash(&r.chain.root.encode()), r.root_cert_hash);
            let v = p.verify_certificate(&r.chain.root, &r.chain.ap);
            assert!(v.valid);
            assert_eq!(v.subject_public_key, Some(r.ap_keypair.public_key.clone()));
        }
    }

    #[test]
    fn provisioning_is_deterministic() {
        for p in BACKENDS {
            assert_eq!(provision_default(&p), provision_default(&p));
        }
    }

    #[test]
    fn duplicate_seeds_rejected() {
        let p = CryptoProvider::symbolic();
        assert!(matches!(provision(b"a", b"a", b"b", &p), Err(Error::DuplicateSeeds)));
        assert!(matches!(provision(b"a", b"b", b"b", &p), Err(Error::DuplicateSeeds)));
    }

    #[test]
    fn initial_state_shape() {
        let p = CryptoProvider::symbolic();
        let r = provision_default(&p);
        let s0 = initial_state(&r);
        assert_eq!(s0.status, Status::Init);
        assert!(s0.env.channel.is_none());
        assert_eq!(s0.env.nvm, r.chain);
        for proc_ in [&s0.bsp, &s0.ap] {
            assert_eq!(proc_.root_cert_hash, r.root_cert_hash);
            assert!(proc_.packet_buffer.is_none() && proc_.cert_chain.is_none());
            assert!(proc_.local_nonce.is_none() && proc_.remote_nonce.is_none());
            assert!(proc_.local_ephe_key.is_none() && proc_.remote_ephe_key.is_none());
            assert!(proc_.session_key.is_none());
        }
        assert_eq!(s0.bsp.private_key, r.bsp_keypair.private_key);
        assert_eq!(s0.ap.private_key, r.ap_keypair.private_key);
        assert!(benignity(&security_context(&s0), &r));
    }

    #[test]
    fn distinct_seed_triples_give_distinct_keys() {
        let p = CryptoProvider::symbolic();
        let mut seen = std::collections::HashSet::new();
        for i in 0..100u32 {
            let r = provision(
                format!("oem-{i}").as_bytes(),
                format!("bsp-{i}").as_bytes(),
                format!("ap-{i}").as_bytes(),
                &p,
            )
            .unwrap();
            assert!(seen.insert(r.oem_keypair.public_key.clone()));
            assert!(seen.insert(r.bsp_keypair.public_key.clone()));
            assert!(seen.insert(r.ap_keypair.public_key.clone()));
        }
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = CryptoProvider::concrete();
        let r = provision_default(&p);
        r.write_dir(dir.path()).unwrap();
        let back = ProvisionRecord::read_dir(dir.path()).unwrap();
        assert_eq!(back, r);
        let rom = fs::read_to_string(dir.path().join("rom_hash.hex")).unwrap();
        let root = fs::read(dir.path().join("root.cert")).unwrap();
        assert_eq!(rom.trim(), hex::encode(p.hash(&root).0));
    }
}
