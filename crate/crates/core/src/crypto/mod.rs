//! Cryptographic provider with two interchangeable backends.
//!
//! [`Backend::Concrete`] uses P-256 (ECDSA certificates, ECIES-style packet
//! encryption, ECDHE session keys) and SHA-256. [`Backend::Symbolic`] models
//! perfect cryptography: ciphertexts and signatures are canonical terms that
//! open or verify only under the matching key. Both backends draw all
//! randomness from a caller-supplied [`RunRng`], so a fixed seed reproduces a
//! run byte for byte.

mod cert;
mod concrete;
mod symbolic;

use std::fmt;

use rand_chacha::ChaCha20Rng;
use rand_core::{CryptoRng, RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

pub use cert::{CertVerdict, Certificate, CertificateChain};

use crate::error::Result;

pub const DIGEST_LEN: usize = 32;
pub const NONCE_LEN: usize = 32;

macro_rules! byte_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(#[serde(with = "hex")] pub Vec<u8>);

        impl $name {
            pub fn as_bytes(&self) -> &[u8] {
                &self.0
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), hex::encode(&self.0))
            }
        }

        impl From<Vec<u8>> for $name {
            fn from(v: Vec<u8>) -> Self {
                Self(v)
            }
        }
    };
}

macro_rules! array_newtype {
    ($(#[$meta:meta])* $name:ident, $len:expr) => {
        $(#[$meta])*
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(#[serde(with = "hex")] pub [u8; $len]);

        impl $name {
            pub fn as_bytes(&self) -> &[u8] {
                &self.0
            }

            pub fn from_slice(bytes: &[u8]) -> Option<Self> {
                bytes.try_into().ok().map(Self)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), hex::encode(self.0))
            }
        }
    };
}

byte_newtype!(PublicKey);
byte_newtype!(PrivateKey);
byte_newtype!(
    /// Symmetric key shared by BSP and AP once both ephemeral halves are known.
    SessionKey
);
array_newtype!(Digest, DIGEST_LEN);
array_newtype!(Nonce, NONCE_LEN);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyPair {
    pub public_key: PublicKey,
    pub private_key: PrivateKey,
    pub key_id: String,
}

/// Per-run Diffie-Hellman key pair. Never provisioned.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EphemeralKeyPair {
    pub public_key: PublicKey,
    pub private_key: PrivateKey,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Concrete,
    Symbolic,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Concrete => "concrete",
            Backend::Symbolic => "symbolic",
        })
    }
}

impl std::str::FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "concrete" => Ok(Backend::Concrete),
            "symbolic" => Ok(Backend::Symbolic),
            other => Err(format!("unknown backend {other:?}")),
        }
    }
}

/// Decryption did not yield a plaintext: wrong key, tampered or malformed
/// ciphertext. The protocol treats all of these alike.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecryptFailure;

/// The seeded random stream for one protocol run.
///
/// Cloning forks the stream; the explorer relies on this so every branch of
/// the run tree sees exactly the draws a straight-line run would.
#[derive(Clone, Debug)]
pub struct RunRng(ChaCha20Rng);

impl RunRng {
    pub fn from_seed_bytes(seed: &[u8]) -> Self {
        let digest: [u8; 32] = Sha256::new()
            .chain_update(b"procauth/run-rng")
            .chain_update(seed)
            .finalize()
            .into();
        Self(ChaCha20Rng::from_seed(digest))
    }
}

impl RngCore for RunRng {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.0.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand_core::Error> {
        self.0.try_fill_bytes(dest)
    }
}

impl CryptoRng for RunRng {}

/// Stateless handle selecting a cryptographic backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CryptoProvider {
    backend: Backend,
}

impl CryptoProvider {
    pub const fn new(backend: Backend) -> Self {
        Self { backend }
    }

    pub const fn concrete() -> Self {
        Self::new(Backend::Concrete)
    }

    pub const fn symbolic() -> Self {
        Self::new(Backend::Symbolic)
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn hash(&self, data: &[u8]) -> Digest {
        match self.backend {
            Backend::Concrete => concrete::hash(data),
            Backend::Symbolic => symbolic::hash(data),
        }
    }

    /// Deterministic long-term key pair from a seed.
    pub fn gen_keypair(&self, seed: &[u8], key_id: &str) -> Result<KeyPair> {
        let (private_key, public_key) = match self.backend {
            Backend::Concrete => concrete::keypair_from_seed(seed)?,
            Backend::Symbolic => symbolic::keypair_from_seed(seed)?,
        };
        Ok(KeyPair {
            public_key,
            private_key,
            key_id: key_id.to_owned(),
        })
    }

    pub fn public_key_of(&self, private: &PrivateKey) -> Result<PublicKey> {
        match self.backend {
            Backend::Concrete => concrete::public_key_of(private),
            Backend::Symbolic => symbolic::public_key_of(private),
        }
    }

    pub fn gen_ephemeral(&self, rng: &mut RunRng) -> EphemeralKeyPair {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        let (private_key, public_key) = match self.backend {
            Backend::Concrete => concrete::keypair_from_seed(&seed),
            Backend::Symbolic => symbolic::keypair_from_seed(&seed),
        }
        .expect("32-byte seed is always accepted");
        EphemeralKeyPair {
            public_key,
            private_key,
        }
    }

    pub fn gen_nonce(&self, rng: &mut RunRng) -> Nonce {
        let mut n = [0u8; NONCE_LEN];
        rng.fill_bytes(&mut n);
        Nonce(n)
    }

    pub(crate) fn sign(&self, private: &PrivateKey, msg: &[u8]) -> Result<Vec<u8>> {
        match self.backend {
            Backend::Concrete => concrete::sign(private, msg),
            Backend::Symbolic => symbolic::sign(private, msg),
        }
    }

    pub(crate) fn verify(&self, public: &PublicKey, msg: &[u8], signature: &[u8]) -> bool {
        match self.backend {
            Backend::Concrete => concrete::verify(public, msg, signature),
            Backend::Symbolic => symbolic::verify(public, msg, signature),
        }
    }

    pub fn sign_certificate(
        &self,
        issuer_private: &PrivateKey,
        subject_id: &str,
        subject_public: &PublicKey,
        issuer_id: &str,
    ) -> Result<Certificate> {
        let mut cert = Certificate {
            subject_id: subject_id.to_owned(),
            subject_public_key: subject_public.clone(),
            issuer_id: issuer_id.to_owned(),
            signature: Vec::new(),
        };
        cert.signature = self.sign(issuer_private, &cert.signed_payload())?;
        Ok(cert)
    }

    /// Checks `cert` against the trusted `root`; on success reveals the
    /// subject's public key.
    pub fn verify_certificate(&self, root: &Certificate, cert: &Certificate) -> CertVerdict {
        if self.verify(&root.subject_public_key, &cert.signed_payload(), &cert.signature) {
            CertVerdict::valid(cert.subject_public_key.clone())
        } else {
            CertVerdict::invalid()
        }
    }

    pub fn encrypt(
        &self,
        recipient: &PublicKey,
        plaintext: &[u8],
        rng: &mut RunRng,
    ) -> Result<Vec<u8>> {
        match self.backend {
            Backend::Concrete => concrete::encrypt(recipient, plaintext, rng),
            Backend::Symbolic => symbolic::encrypt(recipient, plaintext),
        }
    }

    pub fn decrypt(
        &self,
        recipient: &PrivateKey,
        ciphertext: &[u8],
    ) -> std::result::Result<Vec<u8>, DecryptFailure> {
        match self.backend {
            Backend::Concrete => concrete::decrypt(recipient, ciphertext),
            Backend::Symbolic => symbolic::decrypt(recipient, ciphertext),
        }
    }

    pub fn derive_session_key(
        &self,
        local_ephe_private: &PrivateKey,
        remote_ephe_public: &PublicKey,
    ) -> Result<SessionKey> {
        match self.backend {
            Backend::Concrete => concrete::derive_session_key(local_ephe_private, remote_ephe_public),
            Backend::Symbolic => symbolic::derive_session_key(local_ephe_private, remote_ephe_public),
        }
    }
}
