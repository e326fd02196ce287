//! The low-level transition system: event alphabet, the enabled predicate and
//! the step function over [`ProtocolState`].

mod messages;
mod packet;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use messages::{
    build_challenge, build_challenge_response, build_response, parse_challenge, parse_challenge_response,
    parse_response, ParseOutcome,
};
pub use packet::{alarm_code, Packet, TAG_ALARM, TAG_CHALLENGE, TAG_CHALLENGE_RESPONSE, TAG_RESPONSE};

use crate::adversary::mitm_mutate;
use crate::crypto::{CryptoProvider, PublicKey, RunRng};
use crate::domain::{CheckPhase, PacketPhase, Phase, ProcessorState, ProtocolState, Status};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    ReadRom,
    ReadNvm,
    VerifyRcHash,
    VerifyCert,
    GenNonce,
    SendPacket,
    ReceivePacket,
    ParsePacket,
    GenEpheKey,
    GenSessKey,
    Attack,
}

impl EventKind {
    pub const ALL: [EventKind; 11] = [
        EventKind::ReadRom,
        EventKind::ReadNvm,
        EventKind::VerifyRcHash,
        EventKind::VerifyCert,
        EventKind::GenNonce,
        EventKind::SendPacket,
        EventKind::ReceivePacket,
        EventKind::ParsePacket,
        EventKind::GenEpheKey,
        EventKind::GenSessKey,
        EventKind::Attack,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EventKind::ReadRom => "Read_ROM",
            EventKind::ReadNvm => "Read_NVM",
            EventKind::VerifyRcHash => "Verify_RCHash",
            EventKind::VerifyCert => "Verify_Cert",
            EventKind::GenNonce => "Gen_Nonce",
            EventKind::SendPacket => "Send_Packet",
            EventKind::ReceivePacket => "Receive_Packet",
            EventKind::ParsePacket => "Parse_Packet",
            EventKind::GenEpheKey => "Gen_EpheKey",
            EventKind::GenSessKey => "Gen_SessKey",
            EventKind::Attack => "Attack",
        }
    }
}

impl FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown event {s:?}"))
    }
}

impl Serialize for EventKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for EventKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Who performs an event. `Both` covers the steps the two processors take in
/// lockstep: reading ROM and NVM, and the final key confirmation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Actor {
    Bsp,
    Ap,
    Both,
    Attacker,
}

impl Actor {
    pub fn name(self) -> &'static str {
        match self {
            Actor::Bsp => "BSP",
            Actor::Ap => "AP",
            Actor::Both => "BOTH",
            Actor::Attacker => "ATTACKER",
        }
    }

    /// The processor that raises the alarm for a failed check.
    pub fn for_check(phase: CheckPhase) -> Actor {
        match phase {
            CheckPhase::ACerts | CheckPhase::ChalResp => Actor::Ap,
            CheckPhase::BCerts | CheckPhase::Chal | CheckPhase::Resp => Actor::Bsp,
        }
    }
}

/// An event together with its actor. Attack is always performed by the
/// attacker and nothing else is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawEvent", into = "RawEvent")]
pub struct EventLabel {
    kind: EventKind,
    actor: Actor,
}

#[derive(Serialize, Deserialize)]
struct RawEvent {
    event: EventKind,
    actor: Actor,
}

impl TryFrom<RawEvent> for EventLabel {
    type Error = String;

    fn try_from(raw: RawEvent) -> std::result::Result<Self, String> {
        EventLabel::new(raw.event, raw.actor)
    }
}

impl From<EventLabel> for RawEvent {
    fn from(e: EventLabel) -> Self {
        RawEvent {
            event: e.kind,
            actor: e.actor,
        }
    }
}

impl EventLabel {
    pub fn new(kind: EventKind, actor: Actor) -> std::result::Result<Self, String> {
        if (kind == EventKind::Attack) != (actor == Actor::Attacker) {
            return Err(format!("{} cannot be performed by {}", kind.name(), actor.name()));
        }
        Ok(Self { kind, actor })
    }

    const fn of(kind: EventKind, actor: Actor) -> Self {
        Self { kind, actor }
    }

    pub const fn attack() -> Self {
        Self::of(EventKind::Attack, Actor::Attacker)
    }

    pub fn kind(&self) -> EventKind {
        self.kind
    }

    pub fn actor(&self) -> Actor {
        self.actor
    }
}

impl fmt::Display for EventLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.kind.name(), self.actor.name())
    }
}

/// Why a check or a parse rejected its input. Recorded alongside the
/// transition, never folded into [`Status`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Failure {
    RootHashMismatch,
    CertificateInvalid,
    DecryptFail,
    NonceMismatch,
    EpheHashMismatch,
    MalformedPlaintext,
    WrongVariant,
    MissingPacket,
    MissingLocalState,
    SessionKeyMismatch,
    MalformedKey,
}

impl Failure {
    pub const ALL: [Failure; 11] = [
        Failure::RootHashMismatch,
        Failure::CertificateInvalid,
        Failure::DecryptFail,
        Failure::NonceMismatch,
        Failure::EpheHashMismatch,
        Failure::MalformedPlaintext,
        Failure::WrongVariant,
        Failure::MissingPacket,
        Failure::MissingLocalState,
        Failure::SessionKeyMismatch,
        Failure::MalformedKey,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Failure::RootHashMismatch => "root_hash_mismatch",
            Failure::CertificateInvalid => "certificate_invalid",
            Failure::DecryptFail => "decrypt_fail",
            Failure::NonceMismatch => "nonce_mismatch",
            Failure::EpheHashMismatch => "ephe_hash_mismatch",
            Failure::MalformedPlaintext => "malformed_plaintext",
            Failure::WrongVariant => "wrong_variant",
            Failure::MissingPacket => "missing_packet",
            Failure::MissingLocalState => "missing_local_state",
            Failure::SessionKeyMismatch => "session_key_mismatch",
            Failure::MalformedKey => "malformed_key",
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Failure {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Failure::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| format!("unknown failure reason {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Checks {
    pub nonce: bool,
    pub ephe_hash: bool,
}

impl Checks {
    pub const ALL: Checks = Checks {
        nonce: true,
        ephe_hash: true,
    };
}

/// Checks the machine can be told to skip. Used to confirm the verifier
/// catches a weakened protocol; all off by default.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Faults {
    pub skip_root_hash_check: bool,
    pub skip_cert_check: bool,
    pub skip_nonce_check: bool,
    pub skip_ephe_hash_check: bool,
}

impl Faults {
    pub const NAMES: [&'static str; 4] = [
        "skip-root-hash-check",
        "skip-cert-check",
        "skip-nonce-check",
        "skip-ephe-hash-check",
    ];

    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }

    /// Sets one fault by its kebab-case name.
    pub fn enable(&mut self, name: &str) -> std::result::Result<(), String> {
        let flag = match name {
            "skip-root-hash-check" => &mut self.skip_root_hash_check,
            "skip-cert-check" => &mut self.skip_cert_check,
            "skip-nonce-check" => &mut self.skip_nonce_check,
            "skip-ephe-hash-check" => &mut self.skip_ephe_hash_check,
            other => return Err(format!("unknown fault {other:?} (expected one of {:?})", Self::NAMES)),
        };
        *flag = true;
        Ok(())
    }

    fn checks(&self) -> Checks {
        Checks {
            nonce: !self.skip_nonce_check,
            ephe_hash: !self.skip_ephe_hash_check,
        }
    }
}

/// The outcome of one event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub state: ProtocolState,
    pub failure: Option<Failure>,
}

/// Packet phase of the in-flight packet at a status where Attack may fire.
pub fn attack_phase(status: Status) -> Option<PacketPhase> {
    match status {
        Status::Ok(Phase::SendChal) => Some(PacketPhase::Chal),
        Status::Ok(Phase::SendChalResp) => Some(PacketPhase::ChalResp),
        Status::Ok(Phase::SendResp) => Some(PacketPhase::Resp),
        _ => None,
    }
}

/// Every enabled event at `status`, in a fixed order. The protocol step comes
/// before Attack, so index 0 is always the attack-free continuation.
pub fn enabled_at(status: Status) -> Vec<EventLabel> {
    use Actor::*;
    use EventKind::*;
    let one = |k, a| vec![EventLabel::of(k, a)];
    let with_attack = |a| vec![EventLabel::of(ReceivePacket, a), EventLabel::attack()];
    match status {
        Status::Init => one(ReadRom, Both),
        Status::Ok(phase) => match phase {
            Phase::ReadRom => one(ReadNvm, Both),
            Phase::ReadNvm => one(VerifyRcHash, Ap),
            Phase::ARcHash => one(VerifyCert, Ap),
            Phase::ACerts => one(VerifyRcHash, Bsp),
            Phase::BRcHash => one(VerifyCert, Bsp),
            Phase::BCerts => one(GenNonce, Ap),
            Phase::GenNonce => one(SendPacket, Ap),
            Phase::SendChal => with_attack(Bsp),
            Phase::RecvChal => one(ParsePacket, Bsp),
            Phase::Chal => one(GenEpheKey, Bsp),
            Phase::GenEpheB => one(SendPacket, Bsp),
            Phase::SendChalResp => with_attack(Ap),
            Phase::RecvChalResp => one(ParsePacket, Ap),
            Phase::ChalResp => one(GenEpheKey, Ap),
            Phase::GenEpheA => one(SendPacket, Ap),
            Phase::SendResp => with_attack(Bsp),
            Phase::RecvResp => one(ParsePacket, Bsp),
            Phase::Resp => one(GenSessKey, Bsp),
            Phase::SessKeyB => one(GenSessKey, Ap),
            Phase::SessKeyA => one(GenSessKey, Both),
        },
        Status::Attk(PacketPhase::Chal) | Status::Attk(PacketPhase::Resp) => one(ReceivePacket, Bsp),
        Status::Attk(PacketPhase::ChalResp) => one(ReceivePacket, Ap),
        Status::Err(phase) => one(SendPacket, Actor::for_check(phase)),
        Status::End | Status::Abort => Vec::new(),
    }
}

pub fn enabled_events(s: &ProtocolState) -> Vec<EventLabel> {
    enabled_at(s.status)
}

pub fn event_enabled(s: &ProtocolState, e: &EventLabel) -> bool {
    enabled_at(s.status).contains(e)
}

/// Runs one event with the default machine configuration.
pub fn exec_event(
    s: &ProtocolState,
    e: &EventLabel,
    provider: &CryptoProvider,
    rng: &mut RunRng,
) -> Result<ProtocolState> {
    Ok(Machine::new(*provider).exec_event(s, e, rng)?.state)
}

/// Step function with its configuration: crypto backend, the seed the
/// interposer derives its mutations from, and any injected faults.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Machine {
    pub provider: CryptoProvider,
    pub mutation_seed: Vec<u8>,
    pub faults: Faults,
}

pub const DEFAULT_MUTATION_SEED: &[u8] = b"procauth/default/mutation";

impl Machine {
    pub fn new(provider: CryptoProvider) -> Self {
        Self {
            provider,
            mutation_seed: DEFAULT_MUTATION_SEED.to_vec(),
            faults: Faults::none(),
        }
    }

    pub fn with_mutation_seed(mut self, seed: &[u8]) -> Self {
        self.mutation_seed = seed.to_vec();
        self
    }

    pub fn with_faults(mut self, faults: Faults) -> Self {
        self.faults = faults;
        self
    }

    /// Per-phase mutation seed, so each attacked packet gets its own choice.
    pub fn phase_mutation_seed(&self, phase: PacketPhase) -> Vec<u8> {
        let mut seed = self.mutation_seed.clone();
        seed.push(b'/');
        seed.extend_from_slice(phase.name().as_bytes());
        seed
    }

    pub fn exec_event(&self, s: &ProtocolState, e: &EventLabel, rng: &mut RunRng) -> Result<Transition> {
        if !event_enabled(s, e) {
            return Err(Error::EventNotEnabled {
                status: s.status,
                event: *e,
            });
        }
        let p = &self.provider;
        let mut next = s.clone();
        let mut failure = None;

        next.status = match (s.status, e.kind) {
            (Status::Init, EventKind::ReadRom) => Status::Ok(Phase::ReadRom),
            (Status::Ok(Phase::ReadRom), EventKind::ReadNvm) => {
                next.bsp.cert_chain = Some(s.env.nvm.clone());
                next.ap.cert_chain = Some(s.env.nvm.clone());
                Status::Ok(Phase::ReadNvm)
            }
            (Status::Ok(Phase::ReadNvm), EventKind::VerifyRcHash) => gate(
                &mut failure,
                self.verify_root_hash(&s.ap),
                Status::Ok(Phase::ARcHash),
                CheckPhase::ACerts,
            ),
            (Status::Ok(Phase::ARcHash), EventKind::VerifyCert) => gate(
                &mut failure,
                self.verify_peer_cert(&s.ap, |c| &c.bsp),
                Status::Ok(Phase::ACerts),
                CheckPhase::ACerts,
            ),
            (Status::Ok(Phase::ACerts), EventKind::VerifyRcHash) => gate(
                &mut failure,
                self.verify_root_hash(&s.bsp),
                Status::Ok(Phase::BRcHash),
                CheckPhase::BCerts,
            ),
            (Status::Ok(Phase::BRcHash), EventKind::VerifyCert) => gate(
                &mut failure,
                self.verify_peer_cert(&s.bsp, |c| &c.ap),
                Status::Ok(Phase::BCerts),
                CheckPhase::BCerts,
            ),
            (Status::Ok(Phase::BCerts), EventKind::GenNonce) => {
                next.ap.local_nonce = Some(p.gen_nonce(rng));
                Status::Ok(Phase::GenNonce)
            }
            (Status::Ok(Phase::GenNonce), EventKind::SendPacket) => {
                let to = peer_key(&next.ap, |c| &c.bsp.subject_public_key)?;
                next.env.channel = Some(messages::seal_challenge(&next.ap, to, p, rng)?);
                Status::Ok(Phase::SendChal)
            }
            (Status::Ok(Phase::Chal), EventKind::GenEpheKey) => {
                next.bsp.local_ephe_key = Some(p.gen_ephemeral(rng));
                Status::Ok(Phase::GenEpheB)
            }
            (Status::Ok(Phase::GenEpheB), EventKind::SendPacket) => {
                let to = peer_key(&s.bsp, |c| &c.ap.subject_public_key)?;
                let (pkt, bsp) = messages::seal_challenge_response(&s.bsp, to, p, rng)?;
                next.bsp = bsp;
                next.env.channel = Some(pkt);
                Status::Ok(Phase::SendChalResp)
            }
            (Status::Ok(Phase::ChalResp), EventKind::GenEpheKey) => {
                next.ap.local_ephe_key = Some(p.gen_ephemeral(rng));
                Status::Ok(Phase::GenEpheA)
            }
            (Status::Ok(Phase::GenEpheA), EventKind::SendPacket) => {
                let to = peer_key(&next.ap, |c| &c.bsp.subject_public_key)?;
                next.env.channel = Some(messages::seal_response(&next.ap, to, p, rng)?);
                Status::Ok(Phase::SendResp)
            }
            (status, EventKind::Attack) => {
                let phase = attack_phase(status).ok_or(Error::Invariant("attack outside a send status"))?;
                let pkt = s.env.channel.as_ref().ok_or(Error::Invariant("attack on an empty channel"))?;
                next.env.channel = Some(mitm_mutate(pkt, &self.phase_mutation_seed(phase), p)?);
                Status::Attk(phase)
            }
            (status, EventKind::ReceivePacket) => {
                let phase = match status {
                    Status::Attk(phase) => phase,
                    other => attack_phase(other).ok_or(Error::Invariant("receive outside a send status"))?,
                };
                let pkt = next.env.channel.take();
                match e.actor {
                    Actor::Bsp => next.bsp.packet_buffer = pkt,
                    _ => next.ap.packet_buffer = pkt,
                }
                Status::Ok(match phase {
                    PacketPhase::Chal => Phase::RecvChal,
                    PacketPhase::ChalResp => Phase::RecvChalResp,
                    PacketPhase::Resp => Phase::RecvResp,
                })
            }
            (Status::Ok(Phase::RecvChal), EventKind::ParsePacket) => {
                let outcome = buffered(&s.bsp).and_then(|pkt| messages::parse_challenge(&s.bsp, pkt, p));
                gate(
                    &mut failure,
                    outcome.map(|bsp| next.bsp = bsp),
                    Status::Ok(Phase::Chal),
                    CheckPhase::Chal,
                )
            }
            (Status::Ok(Phase::RecvChalResp), EventKind::ParsePacket) => {
                let outcome = buffered(&s.ap).and_then(|pkt| {
                    if self.is_impostor(&s.ap) {
                        Ok(impostor_accepts(&s.ap, pkt, p, rng))
                    } else {
                        messages::parse_challenge_response_with(&s.ap, pkt, p, self.faults.checks())
                    }
                });
                gate(
                    &mut failure,
                    outcome.map(|ap| next.ap = ap),
                    Status::Ok(Phase::ChalResp),
                    CheckPhase::ChalResp,
                )
            }
            (Status::Ok(Phase::RecvResp), EventKind::ParsePacket) => {
                let outcome = buffered(&s.bsp)
                    .and_then(|pkt| messages::parse_response_with(&s.bsp, pkt, p, self.faults.checks()));
                gate(
                    &mut failure,
                    outcome.map(|bsp| next.bsp = bsp),
                    Status::Ok(Phase::Resp),
                    CheckPhase::Resp,
                )
            }
            (Status::Ok(Phase::Resp), EventKind::GenSessKey) => match self.session_key(&s.bsp) {
                Ok(k) => {
                    next.bsp.session_key = Some(k);
                    Status::Ok(Phase::SessKeyB)
                }
                Err(f) => {
                    failure = Some(f);
                    Status::Abort
                }
            },
            (Status::Ok(Phase::SessKeyB), EventKind::GenSessKey) => match self.session_key(&s.ap) {
                Ok(k) => {
                    next.ap.session_key = Some(k);
                    Status::Ok(Phase::SessKeyA)
                }
                Err(f) => {
                    failure = Some(f);
                    Status::Abort
                }
            },
            (Status::Ok(Phase::SessKeyA), EventKind::GenSessKey) => {
                if s.bsp.session_key.is_some() && s.bsp.session_key == s.ap.session_key {
                    Status::End
                } else {
                    failure = Some(Failure::SessionKeyMismatch);
                    Status::Abort
                }
            }
            (Status::Err(phase), EventKind::SendPacket) => {
                next.env.channel = Some(Packet::alarm(phase));
                Status::Abort
            }
            _ => return Err(Error::Invariant("enabled event has no transition")),
        };
        Ok(Transition { state: next, failure })
    }

    fn verify_root_hash(&self, proc_: &ProcessorState) -> std::result::Result<(), Failure> {
        let chain = proc_.cert_chain.as_ref().ok_or(Failure::MissingLocalState)?;
        if self.faults.skip_root_hash_check || self.provider.hash(&chain.root.encode()) == proc_.root_cert_hash {
            Ok(())
        } else {
            Err(Failure::RootHashMismatch)
        }
    }

    fn verify_peer_cert(
        &self,
        proc_: &ProcessorState,
        peer: impl Fn(&crate::crypto::CertificateChain) -> &crate::crypto::Certificate,
    ) -> std::result::Result<(), Failure> {
        let chain = proc_.cert_chain.as_ref().ok_or(Failure::MissingLocalState)?;
        if self.faults.skip_cert_check || self.provider.verify_certificate(&chain.root, peer(chain)).valid {
            Ok(())
        } else {
            Err(Failure::CertificateInvalid)
        }
    }

    /// An AP whose private key does not match the certificate it was read
    /// from cannot be the provisioned part.
    fn is_impostor(&self, ap: &ProcessorState) -> bool {
        let Some(chain) = &ap.cert_chain else { return false };
        self.provider
            .public_key_of(&ap.private_key)
            .map_or(true, |pk| pk != chain.ap.subject_public_key)
    }

    fn session_key(&self, proc_: &ProcessorState) -> std::result::Result<crate::crypto::SessionKey, Failure> {
        let local = proc_.local_ephe_key.as_ref().ok_or(Failure::MissingLocalState)?;
        let remote = proc_.remote_ephe_key.as_ref().ok_or(Failure::MissingLocalState)?;
        self.provider
            .derive_session_key(&local.private_key, remote)
            .map_err(|_| Failure::MalformedKey)
    }
}

fn gate(
    failure: &mut Option<Failure>,
    outcome: std::result::Result<(), Failure>,
    pass: Status,
    fail: CheckPhase,
) -> Status {
    match outcome {
        Ok(()) => pass,
        Err(f) => {
            *failure = Some(f);
            Status::Err(fail)
        }
    }
}

fn buffered(proc_: &ProcessorState) -> std::result::Result<&Packet, Failure> {
    proc_.packet_buffer.as_ref().ok_or(Failure::MissingPacket)
}

fn peer_key<'a>(
    proc_: &'a ProcessorState,
    pick: impl Fn(&'a crate::crypto::CertificateChain) -> &'a PublicKey,
) -> Result<&'a PublicKey> {
    proc_
        .cert_chain
        .as_ref()
        .map(pick)
        .ok_or(Error::Invariant("send before the certificate chain was read"))
}

/// A replaced AP cannot open the challenge-response. It keeps the protocol
/// going with a guessed N_BSP and whatever ephemeral key arrived in the clear,
/// hoping the BSP does not notice.
fn impostor_accepts(ap: &ProcessorState, pkt: &Packet, p: &CryptoProvider, rng: &mut RunRng) -> ProcessorState {
    let mut ap = ap.clone();
    ap.remote_nonce = Some(p.gen_nonce(rng));
    if let Packet::ChallengeResponse { ephe_public, .. } = pkt {
        ap.remote_ephe_key = Some(ephe_public.clone());
    }
    ap
}
