// SPDX-License-Identifier: Apache-2.0

//! The protocol message catalog.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::crypto::{Certificate, SealedBox, Signature};
use crate::EntityId;

/// Milliseconds since the Unix epoch.
pub type Timestamp = u64;

/// Why the bank rejected (or accepted) an authentication.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReasonCode {
    Ok = 0,
    UnknownUser = 1,
    UnknownAtm = 2,
    Stale = 3,
    Replay = 4,
    BadSignature = 5,
    OpenFailed = 6,
    ShareMismatch = 7,
}

impl ReasonCode {
    pub const ALL: [ReasonCode; 8] = [
        ReasonCode::Ok,
        ReasonCode::UnknownUser,
        ReasonCode::UnknownAtm,
        ReasonCode::Stale,
        ReasonCode::Replay,
        ReasonCode::BadSignature,
        ReasonCode::OpenFailed,
        ReasonCode::ShareMismatch,
    ];

    pub fn from_byte(b: u8) -> Option<Self> {
        Self::ALL.get(b as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ReasonCode::Ok => "OK",
            ReasonCode::UnknownUser => "UNKNOWN_USER",
            ReasonCode::UnknownAtm => "UNKNOWN_ATM",
            ReasonCode::Stale => "STALE",
            ReasonCode::Replay => "REPLAY",
            ReasonCode::BadSignature => "BAD_SIGNATURE",
            ReasonCode::OpenFailed => "OPEN_FAILED",
            ReasonCode::ShareMismatch => "SHARE_MISMATCH",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.name() == s)
    }
}

impl fmt::Display for ReasonCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Message type byte carried in every frame header.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    AtmAssignId = 0x01,
    AtmRegisterRequest = 0x02,
    AtmRegisterResponse = 0x03,
    UserAssignId = 0x04,
    UserRegisterRequest = 0x05,
    UserRegisterResponse = 0x06,
    UserAuthRequest = 0x07,
    CertFetch = 0x08,
    BankAuthRequest = 0x09,
    AuthDecision = 0x0A,
    CertFetchReply = 0x0B,
    AuthzRequest = 0x0C,
    AuthzDecision = 0x0D,
}

impl MsgType {
    pub const ALL: [MsgType; 13] = [
        MsgType::AtmAssignId,
        MsgType::AtmRegisterRequest,
        MsgType::AtmRegisterResponse,
        MsgType::UserAssignId,
        MsgType::UserRegisterRequest,
        MsgType::UserRegisterResponse,
        MsgType::UserAuthRequest,
        MsgType::CertFetch,
        MsgType::BankAuthRequest,
        MsgType::AuthDecision,
        MsgType::CertFetchReply,
        MsgType::AuthzRequest,
        MsgType::AuthzDecision,
    ];

    pub fn from_byte(b: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|t| *t as u8 == b)
    }

    /// Protocol label, e.g. `M7` for the user's authentication request.
    pub fn label(self) -> &'static str {
        match self {
            MsgType::AtmAssignId => "M1",
            MsgType::AtmRegisterRequest => "M2",
            MsgType::AtmRegisterResponse => "M3",
            MsgType::UserAssignId => "M4",
            MsgType::UserRegisterRequest => "M5",
            MsgType::UserRegisterResponse => "M6",
            MsgType::UserAuthRequest => "M7",
            MsgType::CertFetch => "M8",
            MsgType::BankAuthRequest => "M9",
            MsgType::AuthDecision => "M10",
            MsgType::CertFetchReply => "M8R",
            MsgType::AuthzRequest => "AZ",
            MsgType::AuthzDecision => "AZR",
        }
    }
}

/// M7: card to ATM.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct UserAuthRequest {
    pub user_id: EntityId,
    pub t_s: Timestamp,
    pub user_signature: Signature,
    pub sealed_d_user: SealedBox,
}

/// M9: ATM to bank.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BankAuthRequest {
    pub user_id: EntityId,
    pub atm_id: EntityId,
    pub t_s: Timestamp,
    pub user_signature: Signature,
    pub sealed_d_user: SealedBox,
    pub sealed_d_atm: SealedBox,
}

/// M10: bank's signed decision.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AuthDecision {
    pub user_id: EntityId,
    pub atm_id: EntityId,
    pub t_s: Timestamp,
    pub accepted: bool,
    pub reason: ReasonCode,
    pub bank_signature: Signature,
}

/// Bank's signed answer to a withdrawal authorization request.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AuthzDecision {
    pub user_id: EntityId,
    pub atm_id: EntityId,
    pub t_s: Timestamp,
    pub amount: u64,
    pub allowed: bool,
    pub bank_signature: Signature,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Message {
    AtmAssignId {
        atm_id: EntityId,
    },
    AtmRegisterRequest {
        atm_id: EntityId,
        atm_certificate: Certificate,
    },
    AtmRegisterResponse {
        sealed_d_atm: SealedBox,
    },
    UserAssignId {
        user_id: EntityId,
    },
    UserRegisterRequest {
        user_id: EntityId,
        user_certificate: Certificate,
        sealed_session_key: SealedBox,
    },
    UserRegisterResponse {
        sealed_d_user: SealedBox,
    },
    UserAuthRequest(UserAuthRequest),
    CertFetch {
        user_id: EntityId,
    },
    CertFetchReply {
        user_certificate: Option<Certificate>,
    },
    BankAuthRequest(BankAuthRequest),
    AuthDecision(AuthDecision),
    AuthzRequest {
        user_id: EntityId,
        atm_id: EntityId,
        t_s: Timestamp,
        amount: u64,
    },
    AuthzDecision(AuthzDecision),
}

impl Message {
    pub fn msg_type(&self) -> MsgType {
        match self {
            Message::AtmAssignId { .. } => MsgType::AtmAssignId,
            Message::AtmRegisterRequest { .. } => MsgType::AtmRegisterRequest,
            Message::AtmRegisterResponse { .. } => MsgType::AtmRegisterResponse,
            Message::UserAssignId { .. } => MsgType::UserAssignId,
            Message::UserRegisterRequest { .. } => MsgType::UserRegisterRequest,
            Message::UserRegisterResponse { .. } => MsgType::UserRegisterResponse,
            Message::UserAuthRequest(_) => MsgType::UserAuthRequest,
            Message::CertFetch { .. } => MsgType::CertFetch,
            Message::CertFetchReply { .. } => MsgType::CertFetchReply,
            Message::BankAuthRequest(_) => MsgType::BankAuthRequest,
            Message::AuthDecision(_) => MsgType::AuthDecision,
            Message::AuthzRequest { .. } => MsgType::AuthzRequest,
            Message::AuthzDecision(_) => MsgType::AuthzDecision,
        }
    }
}
