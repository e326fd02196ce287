//! Executable model of a boot-time processor authentication protocol.
//!
//! A bootstrap processor (BSP) and an application processor (AP) validate each
//! other's certificates against a root certificate whose hash is burned into
//! bootROM, then run a nonce challenge-response over the inter-processor
//! channel and agree a Diffie-Hellman session key. The protocol is modelled as
//! a deterministic labelled transition system over [`domain::ProtocolState`];
//! the only branching comes from an attacker sitting on the channel.
//!
//! The [`verifier`] enumerates every run for a given attack scenario and checks
//! the functional-correctness and security properties of the protocol on each.

pub mod adversary;
pub mod crypto;
pub mod domain;
pub mod error;
pub mod protocol;
pub mod provisioning;
pub mod trace;
pub mod verifier;

mod codec;

pub use error::{Error, Result};
