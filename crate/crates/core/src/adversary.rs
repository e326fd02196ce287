//! The threat model: supply-chain changes to the initial state and an
//! interposer that modifies packets on the channel.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::crypto::{Certificate, CryptoProvider, RunRng};
use crate::domain::{PacketPhase, ProtocolState};
use crate::error::{Error, Result};
use crate::protocol::{Packet, DEFAULT_MUTATION_SEED};
use crate::provisioning::{
    initial_state, provision, ProvisionRecord, AP_ID, DEFAULT_AP_SEED, DEFAULT_BSP_SEED, DEFAULT_OEM_SEED,
};

pub const DEFAULT_RUN_SEED: &[u8] = b"procauth/default/run";

/// Which attacks are active. All flags off and no targets is the benign
/// scenario.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttackScenario {
    pub ap_replaced: bool,
    pub root_cert_tampered: bool,
    pub ap_cert_tampered: bool,
    pub mitm_targets: BTreeSet<PacketPhase>,
    #[serde(with = "hex")]
    pub mutation_seed: Vec<u8>,
}

impl Default for AttackScenario {
    fn default() -> Self {
        Self::benign()
    }
}

impl AttackScenario {
    pub fn benign() -> Self {
        Self {
            ap_replaced: false,
            root_cert_tampered: false,
            ap_cert_tampered: false,
            mitm_targets: BTreeSet::new(),
            mutation_seed: DEFAULT_MUTATION_SEED.to_vec(),
        }
    }

    pub fn is_benign(&self) -> bool {
        !self.tampers_supply_chain() && self.mitm_targets.is_empty()
    }

    pub fn tampers_supply_chain(&self) -> bool {
        self.ap_replaced || self.root_cert_tampered || self.ap_cert_tampered
    }

    pub fn targets(&self, phase: PacketPhase) -> bool {
        self.mitm_targets.contains(&phase)
    }

    /// Short label such as `apr+rct/CHAL,RESP`, or `benign`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.ap_replaced {
            parts.push("apr");
        }
        if self.root_cert_tampered {
            parts.push("rct");
        }
        if self.ap_cert_tampered {
            parts.push("apct");
        }
        let mut label = if parts.is_empty() { "honest".to_owned() } else { parts.join("+") };
        if !self.mitm_targets.is_empty() {
            let t: Vec<_> = self.mitm_targets.iter().map(|p| p.name()).collect();
            label = format!("{label}/{}", t.join(","));
        }
        if self.is_benign() {
            "benign".to_owned()
        } else {
            label
        }
    }
}

fn digest(domain: &[u8], seed: &[u8]) -> [u8; 32] {
    Sha256::new()
        .chain_update(domain)
        .chain_update(seed)
        .finalize()
        .into()
}

fn sub_seed(seed: &[u8], label: &str) -> Vec<u8> {
    let mut out = seed.to_vec();
    out.push(b'/');
    out.extend_from_slice(label.as_bytes());
    out
}

/// Index and nonzero XOR mask for a one-byte edit of a `len`-byte field.
fn byte_edit(d: &[u8; 32], len: usize) -> (usize, u8) {
    let pos = u32::from_be_bytes([d[1], d[2], d[3], d[4]]) as usize % len.max(1);
    (pos, d[5] | 0x01)
}

fn flip(bytes: &mut Vec<u8>, d: &[u8; 32]) {
    if bytes.is_empty() {
        bytes.push(d[5] | 0x01);
        return;
    }
    let (pos, mask) = byte_edit(d, bytes.len());
    bytes[pos] ^= mask;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertField {
    Signature,
    SubjectPublicKey,
}

/// Field a certificate tampering edits. Mostly the signature; one seed in
/// four picks the subject key instead.
pub fn cert_tamper_field(seed: &[u8]) -> CertField {
    if digest(b"procauth/cert-tamper", seed)[0] % 4 == 0 {
        CertField::SubjectPublicKey
    } else {
        CertField::Signature
    }
}

pub fn tamper_certificate(cert: &Certificate, seed: &[u8]) -> Certificate {
    let d = digest(b"procauth/cert-tamper", seed);
    let mut out = cert.clone();
    match cert_tamper_field(seed) {
        CertField::Signature => flip(&mut out.signature, &d),
        CertField::SubjectPublicKey => flip(&mut out.subject_public_key.0, &d),
    }
    out
}

/// s0 for a scenario: the provisioned initial state with the AP swapped for
/// one holding an unknown key, and NVM certificates edited, as requested.
/// Cert_AP stays in NVM when the AP is replaced; the impostor simply does not
/// hold the matching private key.
pub fn apply_supply_chain(
    record: &ProvisionRecord,
    scenario: &AttackScenario,
    provider: &CryptoProvider,
) -> Result<ProtocolState> {
    let mut s = initial_state(record);
    let seed = &scenario.mutation_seed;
    if scenario.ap_replaced {
        let mut key_seed = sub_seed(seed, "ap-key");
        let mut impostor = provider.gen_keypair(&key_seed, AP_ID)?;
        while impostor.private_key == record.ap_keypair.private_key {
            key_seed.push(0);
            impostor = provider.gen_keypair(&key_seed, AP_ID)?;
        }
        s.ap.private_key = impostor.private_key;
    }
    if scenario.root_cert_tampered {
        s.env.nvm.root = tamper_certificate(&s.env.nvm.root, &sub_seed(seed, "root-cert"));
    }
    if scenario.ap_cert_tampered {
        s.env.nvm.ap = tamper_certificate(&s.env.nvm.ap, &sub_seed(seed, "ap-cert"));
    }
    Ok(s)
}

/// What the interposer does to a packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    FlipCiphertext { index: usize, mask: u8 },
    ReplaceEphemeral,
}

/// The mutation `mitm_mutate` will apply. Challenges always get a ciphertext
/// flip; the two packets carrying an ephemeral key get a replacement key for
/// half of all seeds.
pub fn mitm_choice(pkt: &Packet, seed: &[u8]) -> Result<Mutation> {
    let d = digest(b"procauth/mitm", seed);
    let ciphertext = match pkt {
        Packet::Alarm { .. } => return Err(Error::AlarmNotMutable),
        Packet::Challenge { ciphertext } => ciphertext,
        Packet::ChallengeResponse { ciphertext, .. } | Packet::Response { ciphertext, .. } => {
            if d[0] & 1 == 1 {
                return Ok(Mutation::ReplaceEphemeral);
            }
            ciphertext
        }
    };
    let (index, mask) = byte_edit(&d, ciphertext.len());
    Ok(Mutation::FlipCiphertext { index, mask })
}

/// Deterministically modifies a protocol packet. The result always differs
/// from the input and keeps its variant.
pub fn mitm_mutate(pkt: &Packet, seed: &[u8], provider: &CryptoProvider) -> Result<Packet> {
    let mut out = pkt.clone();
    match (mitm_choice(pkt, seed)?, &mut out) {
        (Mutation::ReplaceEphemeral, Packet::ChallengeResponse { ephe_public, .. })
        | (Mutation::ReplaceEphemeral, Packet::Response { ephe_public, .. }) => {
            let mut rng = RunRng::from_seed_bytes(&sub_seed(seed, "ephe"));
            let mut forged = provider.gen_ephemeral(&mut rng).public_key;
            while forged == *ephe_public {
                forged = provider.gen_ephemeral(&mut rng).public_key;
            }
            *ephe_public = forged;
        }
        (Mutation::FlipCiphertext { index, mask }, Packet::Challenge { ciphertext })
        | (Mutation::FlipCiphertext { index, mask }, Packet::ChallengeResponse { ciphertext, .. })
        | (Mutation::FlipCiphertext { index, mask }, Packet::Response { ciphertext, .. }) => {
            if ciphertext.is_empty() {
                ciphertext.push(mask);
            } else {
                ciphertext[index] ^= mask;
            }
        }
        _ => return Err(Error::Invariant("mutation does not fit the packet")),
    }
    Ok(out)
}

/// Seeds for provisioning, the interposer and the run RNG.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Seeds {
    pub oem: Vec<u8>,
    pub bsp: Vec<u8>,
    pub ap: Vec<u8>,
    pub run: Vec<u8>,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            oem: DEFAULT_OEM_SEED.to_vec(),
            bsp: DEFAULT_BSP_SEED.to_vec(),
            ap: DEFAULT_AP_SEED.to_vec(),
            run: DEFAULT_RUN_SEED.to_vec(),
        }
    }
}

/// A scenario file: the attack flags plus the seeds to run it with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioFile {
    pub name: Option<String>,
    pub scenario: AttackScenario,
    pub seeds: Seeds,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawSeeds {
    #[serde(skip_serializing_if = "Option::is_none")]
    oem: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bsp: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ap: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mutation: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    run: Option<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawScenario {
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    ap_replaced: bool,
    root_cert_tampered: bool,
    ap_cert_tampered: bool,
    mitm_targets: Vec<PacketPhase>,
    seeds: RawSeeds,
}

fn seed_field(name: &str, value: Option<String>, default: &[u8]) -> Result<Vec<u8>> {
    let Some(text) = value else {
        return Ok(default.to_vec());
    };
    let bytes = hex::decode(&text).map_err(|e| Error::Scenario(format!("seeds.{name}: {e}")))?;
    if bytes.is_empty() {
        return Err(Error::Scenario(format!("seeds.{name} must not be empty")));
    }
    Ok(bytes)
}

impl ScenarioFile {
    /// Parses the JSON scenario format. Every key is optional; seeds are hex.
    pub fn parse(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        if !value.is_object() {
            return Err(Error::Scenario("a scenario must be a JSON object".into()));
        }
        let raw: RawScenario = serde_json::from_value(value).map_err(|e| Error::Scenario(e.to_string()))?;
        let mut targets = BTreeSet::new();
        for t in raw.mitm_targets {
            if !targets.insert(t) {
                return Err(Error::Scenario(format!("mitm_targets lists {t} twice")));
            }
        }
        let seeds = Seeds {
            oem: seed_field("oem", raw.seeds.oem, DEFAULT_OEM_SEED)?,
            bsp: seed_field("bsp", raw.seeds.bsp, DEFAULT_BSP_SEED)?,
            ap: seed_field("ap", raw.seeds.ap, DEFAULT_AP_SEED)?,
            run: seed_field("run", raw.seeds.run, DEFAULT_RUN_SEED)?,
        };
        if seeds.oem == seeds.bsp || seeds.oem == seeds.ap || seeds.bsp == seeds.ap {
            return Err(Error::Scenario("provisioning seeds must be pairwise distinct".into()));
        }
        Ok(Self {
            name: raw.name,
            scenario: AttackScenario {
                ap_replaced: raw.ap_replaced,
                root_cert_tampered: raw.root_cert_tampered,
                ap_cert_tampered: raw.ap_cert_tampered,
                mitm_targets: targets,
                mutation_seed: seed_field("mutation", raw.seeds.mutation, DEFAULT_MUTATION_SEED)?,
            },
            seeds,
        })
    }

    pub fn to_json(&self) -> String {
        let raw = RawScenario {
            name: self.name.clone(),
            ap_replaced: self.scenario.ap_replaced,
            root_cert_tampered: self.scenario.root_cert_tampered,
            ap_cert_tampered: self.scenario.ap_cert_tampered,
            mitm_targets: self.scenario.mitm_targets.iter().copied().collect(),
            seeds: RawSeeds {
                oem: Some(hex::encode(&self.seeds.oem)),
                bsp: Some(hex::encode(&self.seeds.bsp)),
                ap: Some(hex::encode(&self.seeds.ap)),
                mutation: Some(hex::encode(&self.scenario.mutation_seed)),
                run: Some(hex::encode(&self.seeds.run)),
            },
        };
        serde_json::to_string_pretty(&raw).expect("scenario always serializes")
    }

    pub fn provision(&self, provider: &CryptoProvider) -> Result<ProvisionRecord> {
        provision(&self.seeds.oem, &self.seeds.bsp, &self.seeds.ap, provider)
    }
}

/// Names of the six shipped attack fixtures, in detection-matrix order.
pub const TABLE4: [&str; 6] = ["apr", "cpm", "crpm", "rpm", "rct", "apct"];

/// A shipped scenario by name: `benign` or one of [`TABLE4`].
pub fn fixture(name: &str) -> Option<ScenarioFile> {
    let text = match name {
        "benign" => include_str!("../fixtures/scenarios/benign.json"),
        "apr" => include_str!("../fixtures/scenarios/apr.json"),
        "cpm" => include_str!("../fixtures/scenarios/cpm.json"),
        "crpm" => include_str!("../fixtures/scenarios/crpm.json"),
        "rpm" => include_str!("../fixtures/scenarios/rpm.json"),
        "rct" => include_str!("../fixtures/scenarios/rct.json"),
        "apct" => include_str!("../fixtures/scenarios/apct.json"),
        _ => return None,
    };
    Some(ScenarioFile::parse(text).expect("shipped fixtures parse"))
}
