use serde::{Deserialize, Serialize};

use crate::codec::{put_field, DecodeError, Reader};
use crate::crypto::PublicKey;
use crate::domain::CheckPhase;

pub const TAG_CHALLENGE: u8 = 0x01;
pub const TAG_CHALLENGE_RESPONSE: u8 = 0x02;
pub const TAG_RESPONSE: u8 = 0x03;
pub const TAG_ALARM: u8 = 0x0F;

/// A message on the inter-processor channel.
///
/// Wire format: one tag byte, then every field as a 4-byte big-endian length
/// and the field bytes, in declaration order. The alarm carries a single
/// unencrypted error-code byte.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Packet {
    /// `(N_AP)` under PK_BSP.
    Challenge {
        #[serde(with = "hex")]
        ciphertext: Vec<u8>,
    },
    /// `(N_AP, N_BSP, H(ePK_BSP))` under PK_AP, plus ePK_BSP in the clear.
    ChallengeResponse {
        #[serde(with = "hex")]
        ciphertext: Vec<u8>,
        ephe_public: PublicKey,
    },
    /// `(N_BSP, H(ePK_AP))` under PK_BSP, plus ePK_AP in the clear.
    Response {
        #[serde(with = "hex")]
        ciphertext: Vec<u8>,
        ephe_public: PublicKey,
    },
    Alarm { code: u8 },
}

impl Packet {
    pub fn tag(&self) -> u8 {
        match self {
            Packet::Challenge { .. } => TAG_CHALLENGE,
            Packet::ChallengeResponse { .. } => TAG_CHALLENGE_RESPONSE,
            Packet::Response { .. } => TAG_RESPONSE,
            Packet::Alarm { .. } => TAG_ALARM,
        }
    }

    pub fn alarm(phase: CheckPhase) -> Self {
        Packet::Alarm {
            code: alarm_code(phase),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = vec![self.tag()];
        match self {
            Packet::Challenge { ciphertext } => put_field(&mut out, ciphertext),
            Packet::ChallengeResponse {
                ciphertext,
                ephe_public,
            }
            | Packet::Response {
                ciphertext,
                ephe_public,
            } => {
                put_field(&mut out, ciphertext);
                put_field(&mut out, &ephe_public.0);
            }
            Packet::Alarm { code } => put_field(&mut out, &[*code]),
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let pkt = match r.byte()? {
            TAG_CHALLENGE => Packet::Challenge {
                ciphertext: r.field()?.to_vec(),
            },
            tag @ (TAG_CHALLENGE_RESPONSE | TAG_RESPONSE) => {
                let ciphertext = r.field()?.to_vec();
                let ephe_public = PublicKey(r.field()?.to_vec());
                if tag == TAG_RESPONSE {
                    Packet::Response {
                        ciphertext,
                        ephe_public,
                    }
                } else {
                    Packet::ChallengeResponse {
                        ciphertext,
                        ephe_public,
                    }
                }
            }
            TAG_ALARM => match r.field()? {
                [code] => Packet::Alarm { code: *code },
                other => return Err(DecodeError::BadLength(other.len())),
            },
            other => return Err(DecodeError::UnknownTag(other)),
        };
        r.finish()?;
        Ok(pkt)
    }
}

pub fn alarm_code(phase: CheckPhase) -> u8 {
    match phase {
        CheckPhase::ACerts => 0x01,
        CheckPhase::BCerts => 0x02,
        CheckPhase::Chal => 0x03,
        CheckPhase::ChalResp => 0x04,
        CheckPhase::Resp => 0x05,
    }
}
