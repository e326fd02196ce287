//! Protocol state, status alphabet, runs and the security indicators over them.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::crypto::{CertificateChain, Digest, EphemeralKeyPair, Nonce, PrivateKey, PublicKey, SessionKey};
use crate::protocol::{EventKind, EventLabel, Packet, Failure};
use crate::provisioning::ProvisionRecord;

/// Phases a run passes through on the success path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    ReadRom,
    ReadNvm,
    /// AP checked the root certificate against its bootROM hash.
    ARcHash,
    /// AP validated Cert_BSP.
    ACerts,
    BRcHash,
    /// BSP validated Cert_AP.
    BCerts,
    GenNonce,
    SendChal,
    RecvChal,
    Chal,
    GenEpheB,
    SendChalResp,
    RecvChalResp,
    ChalResp,
    GenEpheA,
    SendResp,
    RecvResp,
    Resp,
    SessKeyB,
    SessKeyA,
}

impl Phase {
    pub const ALL: [Phase; 20] = [
        Phase::ReadRom,
        Phase::ReadNvm,
        Phase::ARcHash,
        Phase::ACerts,
        Phase::BRcHash,
        Phase::BCerts,
        Phase::GenNonce,
        Phase::SendChal,
        Phase::RecvChal,
        Phase::Chal,
        Phase::GenEpheB,
        Phase::SendChalResp,
        Phase::RecvChalResp,
        Phase::ChalResp,
        Phase::GenEpheA,
        Phase::SendResp,
        Phase::RecvResp,
        Phase::Resp,
        Phase::SessKeyB,
        Phase::SessKeyA,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Phase::ReadRom => "READ_ROM",
            Phase::ReadNvm => "READ_NVM",
            Phase::ARcHash => "A_RCHASH",
            Phase::ACerts => "A_CERTS",
            Phase::BRcHash => "B_RCHASH",
            Phase::BCerts => "B_CERTS",
            Phase::GenNonce => "GEN_NONCE",
            Phase::SendChal => "SEND_CHAL",
            Phase::RecvChal => "RECV_CHAL",
            Phase::Chal => "CHAL",
            Phase::GenEpheB => "GEN_EPHE_B",
            Phase::SendChalResp => "SEND_CHALRESP",
            Phase::RecvChalResp => "RECV_CHALRESP",
            Phase::ChalResp => "CHALRESP",
            Phase::GenEpheA => "GEN_EPHE_A",
            Phase::SendResp => "SEND_RESP",
            Phase::RecvResp => "RECV_RESP",
            Phase::Resp => "RESP",
            Phase::SessKeyB => "SESSKEY_B",
            Phase::SessKeyA => "SESSKEY_A",
        }
    }
}

/// Phases at which a check can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CheckPhase {
    ACerts,
    BCerts,
    Chal,
    ChalResp,
    Resp,
}

impl CheckPhase {
    pub const ALL: [CheckPhase; 5] = [
        CheckPhase::ACerts,
        CheckPhase::BCerts,
        CheckPhase::Chal,
        CheckPhase::ChalResp,
        CheckPhase::Resp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckPhase::ACerts => "A_CERTS",
            CheckPhase::BCerts => "B_CERTS",
            CheckPhase::Chal => "CHAL",
            CheckPhase::ChalResp => "CHALRESP",
            CheckPhase::Resp => "RESP",
        }
    }
}

/// The three channel packets an interposer can manipulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PacketPhase {
    Chal,
    ChalResp,
    Resp,
}

impl PacketPhase {
    pub const ALL: [PacketPhase; 3] = [PacketPhase::Chal, PacketPhase::ChalResp, PacketPhase::Resp];

    pub fn name(self) -> &'static str {
        match self {
            PacketPhase::Chal => "CHAL",
            PacketPhase::ChalResp => "CHALRESP",
            PacketPhase::Resp => "RESP",
        }
    }

    pub fn check_phase(self) -> CheckPhase {
        match self {
            PacketPhase::Chal => CheckPhase::Chal,
            PacketPhase::ChalResp => CheckPhase::ChalResp,
            PacketPhase::Resp => CheckPhase::Resp,
        }
    }
}

impl fmt::Display for PacketPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PacketPhase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PacketPhase::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown packet phase {s:?} (expected CHAL, CHALRESP or RESP)"))
    }
}

impl Serialize for PacketPhase {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for PacketPhase {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Status {
    Init,
    Ok(Phase),
    Err(CheckPhase),
    Attk(PacketPhase),
    End,
    Abort,
}

impl Status {
    /// Every value of the closed status alphabet.
    pub fn all() -> Vec<Status> {
        let mut v = vec![Status::Init];
        v.extend(Phase::ALL.map(Status::Ok));
        v.extend(CheckPhase::ALL.map(Status::Err));
        v.extend(PacketPhase::ALL.map(Status::Attk));
        v.extend([Status::End, Status::Abort]);
        v
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Status::End | Status::Abort)
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Init => f.write_str("INIT"),
            Status::Ok(p) => write!(f, "{}_OK", p.name()),
            Status::Err(p) => write!(f, "{}_ERR", p.name()),
            Status::Attk(p) => write!(f, "{}_ATTK", p.name()),
            Status::End => f.write_str("END"),
            Status::Abort => f.write_str("ABORT"),
        }
    }
}

impl FromStr for Status {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Status::all()
            .into_iter()
            .find(|st| st.to_string() == s)
            .ok_or_else(|| format!("unknown status {s:?}"))
    }
}

impl Serialize for Status {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Status {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-processor protocol variables. `root_cert_hash` and `private_key` are
/// fixed at construction; everything else starts empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProcessorState {
    pub root_cert_hash: Digest,
    pub private_key: PrivateKey,
    pub packet_buffer: Option<Packet>,
    pub cert_chain: Option<CertificateChain>,
    pub local_nonce: Option<Nonce>,
    pub remote_nonce: Option<Nonce>,
    pub local_ephe_key: Option<EphemeralKeyPair>,
    pub remote_ephe_key: Option<PublicKey>,
    pub session_key: Option<SessionKey>,
}

impl ProcessorState {
    pub fn new(root_cert_hash: Digest, private_key: PrivateKey) -> Self {
        Self {
            root_cert_hash,
            private_key,
            packet_buffer: None,
            cert_chain: None,
            local_nonce: None,
            remote_nonce: None,
            local_ephe_key: None,
            remote_ephe_key: None,
            session_key: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EnvironmentState {
    pub nvm: CertificateChain,
    pub channel: Option<Packet>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProtocolState {
    pub bsp: ProcessorState,
    pub ap: ProcessorState,
    pub env: EnvironmentState,
    pub status: Status,
}

/// The part of a state that two states in one run must not share.
#[derive(Debug, PartialEq, Eq, Hash)]
pub struct StateProjection<'a> {
    status: Status,
    channel: &'a Option<Packet>,
    buffers: [&'a Option<Packet>; 2],
    nonces: [&'a Option<Nonce>; 4],
    ephemeral: [Option<&'a PublicKey>; 4],
}

impl ProtocolState {
    pub fn projection(&self) -> StateProjection<'_> {
        StateProjection {
            status: self.status,
            channel: &self.env.channel,
            buffers: [&self.bsp.packet_buffer, &self.ap.packet_buffer],
            nonces: [
                &self.bsp.local_nonce,
                &self.bsp.remote_nonce,
                &self.ap.local_nonce,
                &self.ap.remote_nonce,
            ],
            ephemeral: [
                self.bsp.local_ephe_key.as_ref().map(|k| &k.public_key),
                self.bsp.remote_ephe_key.as_ref(),
                self.ap.local_ephe_key.as_ref().map(|k| &k.public_key),
                self.ap.remote_ephe_key.as_ref(),
            ],
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("protocol state always serializes")
    }
}

/// Γ(s): the processors and environment without the status.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SecurityContext {
    pub bsp: ProcessorState,
    pub ap: ProcessorState,
    pub env: EnvironmentState,
}

pub fn security_context(s: &ProtocolState) -> SecurityContext {
    SecurityContext {
        bsp: s.bsp.clone(),
        ap: s.ap.clone(),
        env: s.env.clone(),
    }
}

/// B(c): the AP holds its provisioned key and NVM holds the provisioned chain.
pub fn benignity(ctx: &SecurityContext, ground_truth: &ProvisionRecord) -> bool {
    ctx.ap.private_key == ground_truth.ap_keypair.private_key && ctx.env.nvm == ground_truth.chain
}

pub fn is_terminal(s: &ProtocolState) -> bool {
    s.status.is_terminal()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunStep {
    /// State before `event` fired.
    pub state: ProtocolState,
    pub event: EventLabel,
    /// Why a parse step failed, if it did.
    pub failure: Option<Failure>,
}

/// A maximal run `s0 -e1-> s1 ... -en-> sn`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Run {
    pub steps: Vec<RunStep>,
    pub final_state: ProtocolState,
}

impl Run {
    pub fn initial(&self) -> &ProtocolState {
        self.steps.first().map_or(&self.final_state, |s| &s.state)
    }

    /// `s0, s1, ..., sn`.
    pub fn states(&self) -> impl Iterator<Item = &ProtocolState> + '_ {
        self.steps
            .iter()
            .map(|s| &s.state)
            .chain(std::iter::once(&self.final_state))
    }

    pub fn statuses(&self) -> Vec<Status> {
        self.states().map(|s| s.status).collect()
    }

    pub fn events(&self) -> impl Iterator<Item = &EventLabel> + '_ {
        self.steps.iter().map(|s| &s.event)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn states_pairwise_distinct(&self) -> bool {
        let mut seen = HashSet::new();
        self.states().all(|s| seen.insert(s.projection()))
    }
}

/// M(π): no Attack event fired along the run.
pub fn free_of_attack(run: &Run) -> bool {
    run.events().all(|e| e.kind() != EventKind::Attack)
}
