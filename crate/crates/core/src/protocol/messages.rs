//! Construction and checking of the three challenge-response packets.
//!
//! Builders take the sender's state and return the packet together with the
//! updated sender. Parsers take the receiver's state and either return the
//! updated receiver or the reason the packet was rejected.

use super::{Checks, Failure, Packet};
use crate::crypto::{CryptoProvider, Digest, Nonce, PublicKey, RunRng, DIGEST_LEN, NONCE_LEN};
use crate::domain::ProcessorState;
use crate::error::{Error, Result};

pub type ParseOutcome = std::result::Result<ProcessorState, Failure>;

fn nonce_at(buf: &[u8], i: usize) -> Nonce {
    Nonce::from_slice(&buf[i * NONCE_LEN..(i + 1) * NONCE_LEN]).unwrap()
}

/// Generates N_AP into `ap.local_nonce` and seals it for the BSP.
pub fn build_challenge(
    ap: &ProcessorState,
    bsp_public: &PublicKey,
    provider: &CryptoProvider,
    rng: &mut RunRng,
) -> Result<(Packet, ProcessorState)> {
    let mut ap = ap.clone();
    ap.local_nonce = Some(provider.gen_nonce(rng));
    let pkt = seal_challenge(&ap, bsp_public, provider, rng)?;
    Ok((pkt, ap))
}

pub(crate) fn seal_challenge(
    ap: &ProcessorState,
    bsp_public: &PublicKey,
    provider: &CryptoProvider,
    rng: &mut RunRng,
) -> Result<Packet> {
    let nonce = ap.local_nonce.ok_or(Error::Invariant("challenge without a local nonce"))?;
    Ok(Packet::Challenge {
        ciphertext: provider.encrypt(bsp_public, nonce.as_bytes(), rng)?,
    })
}

pub fn parse_challenge(bsp: &ProcessorState, pkt: &Packet, provider: &CryptoProvider) -> ParseOutcome {
    let Packet::Challenge { ciphertext } = pkt else {
        return Err(Failure::WrongVariant);
    };
    let plain = provider
        .decrypt(&bsp.private_key, ciphertext)
        .map_err(|_| Failure::DecryptFail)?;
    let n_ap = Nonce::from_slice(&plain).ok_or(Failure::MalformedPlaintext)?;
    let mut bsp = bsp.clone();
    bsp.remote_nonce = Some(n_ap);
    Ok(bsp)
}

/// Generates ⟨ePK_BSP, eSK_BSP⟩ and N_BSP, then seals `(N_AP, N_BSP,
/// H(ePK_BSP))` for the AP.
pub fn build_challenge_response(
    bsp: &ProcessorState,
    ap_public: &PublicKey,
    provider: &CryptoProvider,
    rng: &mut RunRng,
) -> Result<(Packet, ProcessorState)> {
    let mut bsp = bsp.clone();
    bsp.local_ephe_key = Some(provider.gen_ephemeral(rng));
    seal_challenge_response(&bsp, ap_public, provider, rng)
}

pub(crate) fn seal_challenge_response(
    bsp: &ProcessorState,
    ap_public: &PublicKey,
    provider: &CryptoProvider,
    rng: &mut RunRng,
) -> Result<(Packet, ProcessorState)> {
    let n_ap = bsp.remote_nonce.ok_or(Error::Invariant("challenge-response before the challenge"))?;
    let ephe = bsp
        .local_ephe_key
        .clone()
        .ok_or(Error::Invariant("challenge-response without an ephemeral key"))?;
    let mut bsp = bsp.clone();
    let n_bsp = provider.gen_nonce(rng);
    bsp.local_nonce = Some(n_bsp);

    let mut plain = Vec::with_capacity(2 * NONCE_LEN + DIGEST_LEN);
    plain.extend_from_slice(n_ap.as_bytes());
    plain.extend_from_slice(n_bsp.as_bytes());
    plain.extend_from_slice(provider.hash(ephe.public_key.as_bytes()).as_bytes());
    let pkt = Packet::ChallengeResponse {
        ciphertext: provider.encrypt(ap_public, &plain, rng)?,
        ephe_public: ephe.public_key,
    };
    Ok((pkt, bsp))
}

pub fn parse_challenge_response(ap: &ProcessorState, pkt: &Packet, provider: &CryptoProvider) -> ParseOutcome {
    parse_challenge_response_with(ap, pkt, provider, Checks::ALL)
}

pub(crate) fn parse_challenge_response_with(
    ap: &ProcessorState,
    pkt: &Packet,
    provider: &CryptoProvider,
    checks: Checks,
) -> ParseOutcome {
    let Packet::ChallengeResponse {
        ciphertext,
        ephe_public,
    } = pkt
    else {
        return Err(Failure::WrongVariant);
    };
    let expected = ap.local_nonce.ok_or(Failure::MissingLocalState)?;
    let plain = provider
        .decrypt(&ap.private_key, ciphertext)
        .map_err(|_| Failure::DecryptFail)?;
    if plain.len() != 2 * NONCE_LEN + DIGEST_LEN {
        return Err(Failure::MalformedPlaintext);
    }
    let echoed = nonce_at(&plain, 0);
    let n_bsp = nonce_at(&plain, 1);
    let ephe_hash = Digest::from_slice(&plain[2 * NONCE_LEN..]).unwrap();
    if checks.nonce && echoed != expected {
        return Err(Failure::NonceMismatch);
    }
    if checks.ephe_hash && ephe_hash != provider.hash(ephe_public.as_bytes()) {
        return Err(Failure::EpheHashMismatch);
    }
    let mut ap = ap.clone();
    ap.remote_nonce = Some(n_bsp);
    ap.remote_ephe_key = Some(ephe_public.clone());
    Ok(ap)
}

/// Generates ⟨ePK_AP, eSK_AP⟩ and seals `(N_BSP, H(ePK_AP))` for the BSP.
pub fn build_response(
    ap: &ProcessorState,
    bsp_public: &PublicKey,
    provider: &CryptoProvider,
    rng: &mut RunRng,
) -> Result<(Packet, ProcessorState)> {
    let mut ap = ap.clone();
    ap.local_ephe_key = Some(provider.gen_ephemeral(rng));
    let pkt = seal_response(&ap, bsp_public, provider, rng)?;
    Ok((pkt, ap))
}

pub(crate) fn seal_response(
    ap: &ProcessorState,
    bsp_public: &PublicKey,
    provider: &CryptoProvider,
    rng: &mut RunRng,
) -> Result<Packet> {
    let n_bsp = ap.remote_nonce.ok_or(Error::Invariant("response before the challenge-response"))?;
    let ephe = ap
        .local_ephe_key
        .as_ref()
        .ok_or(Error::Invariant("response without an ephemeral key"))?;
    let mut plain = Vec::with_capacity(NONCE_LEN + DIGEST_LEN);
    plain.extend_from_slice(n_bsp.as_bytes());
    plain.extend_from_slice(provider.hash(ephe.public_key.as_bytes()).as_bytes());
    Ok(Packet::Response {
        ciphertext: provider.encrypt(bsp_public, &plain, rng)?,
        ephe_public: ephe.public_key.clone(),
    })
}

pub fn parse_response(bsp: &ProcessorState, pkt: &Packet, provider: &CryptoProvider) -> ParseOutcome {
    parse_response_with(bsp, pkt, provider, Checks::ALL)
}

pub(crate) fn parse_response_with(
    bsp: &ProcessorState,
    pkt: &Packet,
    provider: &CryptoProvider,
    checks: Checks,
) -> ParseOutcome {
    let Packet::Response {
        ciphertext,
        ephe_public,
    } = pkt
    else {
        return Err(Failure::WrongVariant);
    };
    let expected = bsp.local_nonce.ok_or(Failure::MissingLocalState)?;
    let plain = provider
        .decrypt(&bsp.private_key, ciphertext)
        .map_err(|_| Failure::DecryptFail)?;
    if plain.len() != NONCE_LEN + DIGEST_LEN {
        return Err(Failure::MalformedPlaintext);
    }
    let echoed = nonce_at(&plain, 0);
    let ephe_hash = Digest::from_slice(&plain[NONCE_LEN..]).unwrap();
    if checks.nonce && echoed != expected {
        return Err(Failure::NonceMismatch);
    }
    if checks.ephe_hash && ephe_hash != provider.hash(ephe_public.as_bytes()) {
        return Err(Failure::EpheHashMismatch);
    }
    let mut bsp = bsp.clone();
    bsp.remote_ephe_key = Some(ephe_public.clone());
    Ok(bsp)
}
