//! P-256 / SHA-256 backend.
//!
//! Packet encryption is ephemeral-static ECIES: a fresh P-256 key agrees a
//! secret with the recipient's static key, HKDF-SHA-256 stretches it into an
//! AES-256-GCM key, and the ciphertext is `ephemeral_pub ‖ iv ‖ aead_output`.

use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes256Gcm, Nonce as GcmNonce};
use hkdf::Hkdf;
use p256::ecdsa::signature::{Signer, Verifier};
use p256::ecdsa::{Signature, SigningKey, VerifyingKey};
use p256::elliptic_curve::sec1::ToEncodedPoint;
use p256::SecretKey;
use rand_core::RngCore;
use sha2::{Digest as _, Sha256};

use super::{DecryptFailure, Digest, PrivateKey, PublicKey, RunRng, SessionKey};
use crate::error::{Error, Result};

const POINT_LEN: usize = 33;
const IV_LEN: usize = 12;
const PACKET_INFO: &[u8] = b"procauth/packet-key";
const SESSION_INFO: &[u8] = b"procauth/session-key";

pub(super) fn hash(data: &[u8]) -> Digest {
    Digest(Sha256::digest(data).into())
}

fn encode_point(pk: &p256::PublicKey) -> PublicKey {
    PublicKey(pk.to_encoded_point(true).as_bytes().to_vec())
}

fn secret(private: &PrivateKey) -> Result<SecretKey> {
    if private.0.len() != 32 {
        return Err(Error::MalformedKey("P-256 scalar must be 32 bytes"));
    }
    SecretKey::from_slice(&private.0)
        .map_err(|_| Error::MalformedKey("P-256 scalar out of range"))
}

fn point(public: &PublicKey) -> Result<p256::PublicKey> {
    p256::PublicKey::from_sec1_bytes(&public.0)
        .map_err(|_| Error::MalformedKey("not a SEC1-encoded P-256 point"))
}

/// Hashes the seed with a counter until the digest is a valid scalar.
pub(super) fn keypair_from_seed(seed: &[u8]) -> Result<(PrivateKey, PublicKey)> {
    if seed.is_empty() {
        return Err(Error::InvalidSeed("seed must be non-empty"));
    }
    for counter in 0u32.. {
        let d = Sha256::new()
            .chain_update(b"procauth/p256-keygen")
            .chain_update((seed.len() as u64).to_be_bytes())
            .chain_update(seed)
            .chain_update(counter.to_be_bytes())
            .finalize();
        if let Ok(sk) = SecretKey::from_bytes(&d) {
            return Ok((PrivateKey(sk.to_bytes().to_vec()), encode_point(&sk.public_key())));
        }
    }
    unreachable!()
}

pub(super) fn public_key_of(private: &PrivateKey) -> Result<PublicKey> {
    Ok(encode_point(&secret(private)?.public_key()))
}

pub(super) fn sign(private: &PrivateKey, msg: &[u8]) -> Result<Vec<u8>> {
    let key = SigningKey::from(secret(private)?);
    let sig: Signature = key.sign(msg);
    Ok(sig.to_bytes().to_vec())
}

pub(super) fn verify(public: &PublicKey, msg: &[u8], signature: &[u8]) -> bool {
    let Ok(key) = VerifyingKey::from_sec1_bytes(&public.0) else {
        return false;
    };
    let Ok(sig) = Signature::from_slice(signature) else {
        return false;
    };
    key.verify(msg, &sig).is_ok()
}

fn packet_key(shared: &[u8], ephemeral: &[u8], recipient: &[u8]) -> [u8; 32] {
    let mut salt = Vec::with_capacity(ephemeral.len() + recipient.len());
    salt.extend_from_slice(ephemeral);
    salt.extend_from_slice(recipient);
    let mut key = [0u8; 32];
    Hkdf::<Sha256>::new(Some(&salt), shared)
        .expand(PACKET_INFO, &mut key)
        .expect("32 bytes is a valid HKDF-SHA-256 output length");
    key
}

pub(super) fn encrypt(recipient: &PublicKey, plaintext: &[u8], rng: &mut RunRng) -> Result<Vec<u8>> {
    let recipient_point = point(recipient)?;
    let eph = SecretKey::random(&mut *rng);
    let eph_pub = encode_point(&eph.public_key());
    let shared = p256::ecdh::diffie_hellman(eph.to_nonzero_scalar(), recipient_point.as_affine());
    let key = packet_key(shared.raw_secret_bytes(), &eph_pub.0, &recipient.0);

    let mut iv = [0u8; IV_LEN];
    rng.fill_bytes(&mut iv);
    let cipher = Aes256Gcm::new_from_slice(&key).expect("32-byte AES key");
    let sealed = cipher
        .encrypt(
            &GcmNonce::from(iv),
            Payload {
                msg: plaintext,
                aad: &recipient.0,
            },
        )
        .expect("AES-GCM encryption of in-memory data cannot fail");

    let mut out = Vec::with_capacity(POINT_LEN + IV_LEN + sealed.len());
    out.extend_from_slice(&eph_pub.0);
    out.extend_from_slice(&iv);
    out.extend_from_slice(&sealed);
    Ok(out)
}

pub(super) fn decrypt(recipient: &PrivateKey, ciphertext: &[u8]) -> Result<Vec<u8>, DecryptFailure> {
    if ciphertext.len() < POINT_LEN + IV_LEN {
        return Err(DecryptFailure);
    }
    let sk = secret(recipient).map_err(|_| DecryptFailure)?;
    let recipient_pub = encode_point(&sk.public_key());
    let (eph_pub, rest) = ciphertext.split_at(POINT_LEN);
    let (iv, sealed) = rest.split_at(IV_LEN);
    let eph_point = p256::PublicKey::from_sec1_bytes(eph_pub).map_err(|_| DecryptFailure)?;
    let shared = p256::ecdh::diffie_hellman(sk.to_nonzero_scalar(), eph_point.as_affine());
    let key = packet_key(shared.raw_secret_bytes(), eph_pub, &recipient_pub.0);
    let cipher = Aes256Gcm::new_from_slice(&key).expect("32-byte AES key");
    cipher
        .decrypt(
            &GcmNonce::from(<[u8; IV_LEN]>::try_from(iv).expect("split at IV_LEN")),
            Payload {
                msg: sealed,
                aad: &recipient_pub.0,
            },
        )
        .map_err(|_| DecryptFailure)
}

pub(super) fn derive_session_key(local: &PrivateKey, remote: &PublicKey) -> Result<SessionKey> {
    let sk = secret(local)?;
    let remote_point = point(remote)?;
    let local_pub = encode_point(&sk.public_key());
    let shared = p256::ecdh::diffie_hellman(sk.to_nonzero_scalar(), remote_point.as_affine());
    // Both sides must use the same salt, so order the two halves.
    let (lo, hi) = if local_pub.0 <= remote.0 {
        (&local_pub.0, &remote.0)
    } else {
        (&remote.0, &local_pub.0)
    };
    let salt = [lo.as_slice(), hi.as_slice()].concat();
    let mut key = vec![0u8; 32];
    Hkdf::<Sha256>::new(Some(&salt), shared.raw_secret_bytes())
        .expand(SESSION_INFO, &mut key)
        .expect("32 bytes is a valid HKDF-SHA-256 output length");
    Ok(SessionKey(key))
}
