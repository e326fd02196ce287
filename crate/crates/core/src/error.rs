use thiserror::Error;

use crate::domain::Status;
use crate::protocol::EventLabel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid key seed: {0}")]
    InvalidSeed(&'static str),

    #[error("malformed key material: {0}")]
    MalformedKey(&'static str),

    #[error("duplicate provisioning seeds would collapse processor identities")]
    DuplicateSeeds,

    #[error("event {event} is not enabled in status {status}")]
    EventNotEnabled { status: Status, event: EventLabel },

    #[error("state invariant violated: {0}")]
    Invariant(&'static str),

    #[error("decode error: {0}")]
    Decode(#[from] crate::codec::DecodeError),

    #[error("explorer exceeded the cap of {cap} runs")]
    ExplorationOverflow { cap: usize },

    #[error("alarm packets cannot be mutated")]
    AlarmNotMutable,

    #[error("scenario: {0}")]
    Scenario(String),

    #[error("replay diverged at step {step}: {detail}")]
    ReplayDiverged { step: usize, detail: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
