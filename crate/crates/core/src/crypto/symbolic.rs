//! Perfect-cryptography backend.
//!
//! Keys are atoms: `sk ‖ a` for a 32-byte name `a`, and `pk ‖ H(a)` for its
//! public half. A ciphertext is the term `Enc(pk, m)` carrying a seal over
//! its own contents, so it opens only under the private key whose public half
//! is `pk`, and any edit to the encoded term is rejected. Signatures and DH
//! keys are likewise canonical terms; `DH{a, b}` is unordered by construction.
//! Hash outputs are SHA-256 under a backend-specific domain tag so they keep
//! the fixed 32-byte digest shape the protocol state expects.

use sha2::{Digest as _, Sha256};

use super::{DecryptFailure, Digest, PrivateKey, PublicKey, SessionKey};
use crate::codec::{put_field, Reader};
use crate::error::{Error, Result};

const SK_TAG: &[u8; 2] = b"sk";
const PK_TAG: &[u8; 2] = b"pk";
const ENC_TAG: u8 = 0xE1;
const SIG_TAG: u8 = 0x51;
const KEY_LEN: usize = 2 + 32;

fn tagged_hash(domain: &[u8], parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new().chain_update(domain);
    for p in parts {
        h.update((p.len() as u64).to_be_bytes());
        h.update(p);
    }
    h.finalize().into()
}

pub(super) fn hash(data: &[u8]) -> Digest {
    Digest(tagged_hash(b"procauth/sym/H", &[data]))
}

fn public_from_atom(atom: &[u8]) -> PublicKey {
    let mut pk = PK_TAG.to_vec();
    pk.extend_from_slice(&tagged_hash(b"procauth/sym/pk", &[atom]));
    PublicKey(pk)
}

pub(super) fn keypair_from_seed(seed: &[u8]) -> Result<(PrivateKey, PublicKey)> {
    if seed.is_empty() {
        return Err(Error::InvalidSeed("seed must be non-empty"));
    }
    let atom = tagged_hash(b"procauth/sym/atom", &[seed]);
    let mut sk = SK_TAG.to_vec();
    sk.extend_from_slice(&atom);
    Ok((PrivateKey(sk), public_from_atom(&atom)))
}

pub(super) fn public_key_of(private: &PrivateKey) -> Result<PublicKey> {
    match private.0.strip_prefix(SK_TAG) {
        Some(atom) if private.0.len() == KEY_LEN => Ok(public_from_atom(atom)),
        _ => Err(Error::MalformedKey("not a symbolic private key")),
    }
}

fn well_formed_public(public: &PublicKey) -> bool {
    public.0.len() == KEY_LEN && public.0.starts_with(PK_TAG)
}

fn seal(pk: &[u8], msg: &[u8]) -> [u8; 32] {
    tagged_hash(b"procauth/sym/seal", &[pk, msg])
}

pub(super) fn encrypt(recipient: &PublicKey, plaintext: &[u8]) -> Result<Vec<u8>> {
    if !well_formed_public(recipient) {
        return Err(Error::MalformedKey("not a symbolic public key"));
    }
    let mut out = vec![ENC_TAG];
    put_field(&mut out, &recipient.0);
    put_field(&mut out, plaintext);
    put_field(&mut out, &seal(&recipient.0, plaintext));
    Ok(out)
}

pub(super) fn decrypt(recipient: &PrivateKey, ciphertext: &[u8]) -> Result<Vec<u8>, DecryptFailure> {
    let own = public_key_of(recipient).map_err(|_| DecryptFailure)?;
    let mut r = Reader::new(ciphertext);
    if r.byte().map_err(|_| DecryptFailure)? != ENC_TAG {
        return Err(DecryptFailure);
    }
    let pk = r.field().map_err(|_| DecryptFailure)?;
    let msg = r.field().map_err(|_| DecryptFailure)?;
    let tag = r.field().map_err(|_| DecryptFailure)?;
    r.finish().map_err(|_| DecryptFailure)?;
    if pk != own.0.as_slice() || tag != seal(pk, msg).as_slice() {
        return Err(DecryptFailure);
    }
    Ok(msg.to_vec())
}

fn signature_term(public: &PublicKey, msg: &[u8]) -> Vec<u8> {
    let mut sig = vec![SIG_TAG];
    sig.extend_from_slice(&tagged_hash(b"procauth/sym/sig", &[&public.0, msg]));
    sig
}

pub(super) fn sign(private: &PrivateKey, msg: &[u8]) -> Result<Vec<u8>> {
    Ok(signature_term(&public_key_of(private)?, msg))
}

pub(super) fn verify(public: &PublicKey, msg: &[u8], signature: &[u8]) -> bool {
    well_formed_public(public) && signature == signature_term(public, msg).as_slice()
}

pub(super) fn derive_session_key(local: &PrivateKey, remote: &PublicKey) -> Result<SessionKey> {
    let local_pub = public_key_of(local)?;
    if !well_formed_public(remote) {
        return Err(Error::MalformedKey("not a symbolic public key"));
    }
    let (lo, hi) = if local_pub.0 <= remote.0 {
        (&local_pub.0, &remote.0)
    } else {
        (&remote.0, &local_pub.0)
    };
    Ok(SessionKey(tagged_hash(b"procauth/sym/dh", &[lo, hi]).to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_single_byte_edit_of_a_ciphertext_is_rejected() {
        let (sk, pk) = keypair_from_seed(b"k").unwrap();
        let ct = encrypt(&pk, b"payload").unwrap();
        for i in 0..ct.len() {
            let mut bad = ct.clone();
            bad[i] ^= 0x01;
            assert_eq!(decrypt(&sk, &bad), Err(DecryptFailure), "byte {i}");
        }
    }

    #[test]
    fn public_key_does_not_expose_atom() {
        let (sk, pk) = keypair_from_seed(b"k").unwrap();
        assert_ne!(sk.0[2..], pk.0[2..]);
    }
}
