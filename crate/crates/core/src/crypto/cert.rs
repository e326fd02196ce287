use serde::{Deserialize, Serialize};

use super::PublicKey;
use crate::codec::{put_field, DecodeError, Reader};

/// Minimal four-field certificate.
///
/// Canonical layout: `subject_id ‖ subject_public_key ‖ issuer_id ‖ signature`,
/// each field prefixed by its 4-byte big-endian length. The signature covers
/// the encoding of the first three fields.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Certificate {
    pub subject_id: String,
    pub subject_public_key: PublicKey,
    pub issuer_id: String,
    #[serde(with = "hex")]
    pub signature: Vec<u8>,
}

impl Certificate {
    pub fn signed_payload(&self) -> Vec<u8> {
        let mut out = Vec::new();
        put_field(&mut out, self.subject_id.as_bytes());
        put_field(&mut out, &self.subject_public_key.0);
        put_field(&mut out, self.issuer_id.as_bytes());
        out
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.signed_payload();
        put_field(&mut out, &self.signature);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let subject_id = r.utf8_field()?.to_owned();
        let subject_public_key = PublicKey(r.field()?.to_vec());
        let issuer_id = r.utf8_field()?.to_owned();
        let signature = r.field()?.to_vec();
        r.finish()?;
        Ok(Self {
            subject_id,
            subject_public_key,
            issuer_id,
            signature,
        })
    }

    pub fn is_self_signed(&self) -> bool {
        self.subject_id == self.issuer_id
    }
}

/// `⟨Cert_root, Cert_BSP, Cert_AP⟩` as stored in NVM.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CertificateChain {
    pub root: Certificate,
    pub bsp: Certificate,
    pub ap: Certificate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CertVerdict {
    pub valid: bool,
    pub subject_public_key: Option<PublicKey>,
}

impl CertVerdict {
    pub(crate) fn valid(key: PublicKey) -> Self {
        Self {
            valid: true,
            subject_public_key: Some(key),
        }
    }

    pub(crate) fn invalid() -> Self {
        Self {
            valid: false,
            subject_public_key: None,
        }
    }
}
