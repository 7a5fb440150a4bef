// SPDX-License-Identifier: Apache-2.0

//! Role state machines: bank, ATM and card, the registration and
//! authentication phases, and an in-process adversarial channel.

pub mod adversary;
pub mod atm;
pub mod bank;
pub mod card;
pub mod freshness;
pub mod network;
pub mod session;

pub use adversary::{
    Action, Adversary, ChannelScript, Direct, Hop, ScriptExhausted, Transcript, TranscriptEntry, Wire,
};
pub use atm::{Atm, AtmPending};
pub use bank::{initialize_secrets, initialize_secrets_with, Bank};
pub use card::{Card, CardPending};
pub use network::{Network, Secrets};
pub use freshness::{Clock, Freshness, FreshnessPolicy, ManualClock, ReplayCache, SystemClock};
pub use session::{run_session, BankLink, DecidedBy, LocalLink, Outcome, SessionOutcome, SessionParams};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{EncodeError, MsgType};
use crate::crypto::{Certificate, CryptoError, KeyPair};
use crate::share::ShareError;
use crate::store::StoreError;
use crate::EntityId;

/// The bank's long-term identity.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BankIdentity {
    pub id: EntityId,
    pub keypair: KeyPair,
    pub certificate: Certificate,
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("bad certificate")]
    BadCertificate,
    #[error("id {0} was not assigned by this bank for this role")]
    UnknownId(EntityId),
    #[error("id {0} is already registered")]
    AlreadyRegistered(EntityId),
    #[error("sealed box could not be opened")]
    OpenFailed,
    #[error("no unassigned ids remain")]
    IdSpaceExhausted,
    #[error("unknown user {0}")]
    UnknownUser(EntityId),
    #[error("base polynomial must have c0 = 0 and c2 != 0")]
    InvalidBasePolynomial,
    #[error("share does not belong to this entity")]
    ShareMismatch,
    #[error("unexpected message {0:?}")]
    UnexpectedMessage(MsgType),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Share(#[from] ShareError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
}

#[derive(Clone, Copy, Debug, Error, PartialEq, Eq)]
pub enum CardError {
    #[error("wrong PIN, {remaining} attempts left")]
    BadPin { remaining: u32 },
    #[error("card is locked")]
    CardLocked,
    #[error("signing failed")]
    SigningFailed,
}

/// Local rejections at the ATM, before or after talking to the bank.
#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum AtmError {
    #[error("user certificate does not verify")]
    BadCertificate,
    #[error("signature does not verify")]
    BadSignature,
    #[error("timestamp outside the freshness window")]
    Stale,
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("decision does not answer this request")]
    UnexpectedDecision,
    #[error("crypto failure: {0}")]
    Crypto(String),
}

impl From<CryptoError> for AtmError {
    fn from(e: CryptoError) -> Self {
        AtmError::Crypto(e.to_string())
    }
}
