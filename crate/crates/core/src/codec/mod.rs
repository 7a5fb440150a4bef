// SPDX-License-Identifier: Apache-2.0

//! Canonical binary encoding of protocol messages.
//!
//! Frame layout: `"SFAM" | version (0x01) | type | fields...`. Fields are
//! written in declaration order; ids, timestamps and amounts as 8-byte
//! big-endian integers, booleans and enum codes as single bytes, and
//! certificates, signatures and sealed boxes as a 4-byte big-endian length
//! followed by the bytes. A sealed box's bytes are its mode byte followed by
//! the ciphertext. The encoding is canonical, so `encode(decode(b)) == b`
//! for every accepted `b`, and signatures are computed over encodings only.

pub mod bytes;
mod message;
pub mod transport;

use std::ops::Range;

use thiserror::Error;

pub use message::{
    AuthDecision, AuthzDecision, BankAuthRequest, Message, MsgType, ReasonCode, Timestamp,
    UserAuthRequest,
};

use crate::crypto::{Certificate, SealMode, SealedBox, Signature};
use crate::EntityId;
use bytes::{Reader, Writer};

pub const MAGIC: [u8; 4] = *b"SFAM";
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 6;
/// Upper bound on a whole frame and on any single length-prefixed field.
pub const MAX_FRAME_LEN: usize = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodeError {
    #[error("field or frame of {0} bytes exceeds the 1 MiB cap")]
    OversizeField(usize),
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum DecodeError {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version")]
    BadVersion,
    #[error("unknown message type {0:#04x}")]
    UnknownType(u8),
    #[error("truncated frame")]
    Truncated,
    #[error("trailing bytes after message")]
    TrailingBytes,
    #[error("invalid field: {0}")]
    InvalidField(&'static str),
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("{0:?} carries no signature")]
pub struct NotSignable(pub MsgType);

fn put_sealed(w: &mut Writer, sealed: &SealedBox) -> Result<(), EncodeError> {
    let mut inner = Vec::with_capacity(1 + sealed.ciphertext.len());
    inner.push(sealed.mode as u8);
    inner.extend_from_slice(&sealed.ciphertext);
    w.bytes(&inner)?;
    Ok(())
}

fn get_sealed(r: &mut Reader<'_>) -> Result<SealedBox, DecodeError> {
    let raw = r.bytes()?;
    let (&mode, ciphertext) = raw
        .split_first()
        .ok_or(DecodeError::InvalidField("empty sealed box"))?;
    let mode = SealMode::from_byte(mode).ok_or(DecodeError::InvalidField("seal mode"))?;
    Ok(SealedBox {
        mode,
        ciphertext: ciphertext.to_vec(),
    })
}

fn get_bool(r: &mut Reader<'_>) -> Result<bool, DecodeError> {
    match r.u8()? {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(DecodeError::InvalidField("boolean")),
    }
}

fn get_cert(r: &mut Reader<'_>) -> Result<Certificate, DecodeError> {
    let raw = r.bytes()?;
    Certificate::from_bytes(raw)
}

fn get_id(r: &mut Reader<'_>) -> Result<EntityId, DecodeError> {
    Ok(EntityId(r.u64()?))
}

pub fn encode(msg: &Message) -> Result<Vec<u8>, EncodeError> {
    let mut w = Writer::new();
    w.raw(&MAGIC).u8(VERSION).u8(msg.msg_type() as u8);
    match msg {
        Message::AtmAssignId { atm_id } => {
            w.u64(atm_id.0);
        }
        Message::AtmRegisterRequest {
            atm_id,
            atm_certificate,
        } => {
            w.u64(atm_id.0).bytes(&atm_certificate.to_bytes())?;
        }
        Message::AtmRegisterResponse { sealed_d_atm } => put_sealed(&mut w, sealed_d_atm)?,
        Message::UserAssignId { user_id } => {
            w.u64(user_id.0);
        }
        Message::UserRegisterRequest {
            user_id,
            user_certificate,
            sealed_session_key,
        } => {
            w.u64(user_id.0).bytes(&user_certificate.to_bytes())?;
            put_sealed(&mut w, sealed_session_key)?;
        }
        Message::UserRegisterResponse { sealed_d_user } => put_sealed(&mut w, sealed_d_user)?,
        Message::UserAuthRequest(m) => {
            w.u64(m.user_id.0).u64(m.t_s).bytes(&m.user_signature.0)?;
            put_sealed(&mut w, &m.sealed_d_user)?;
        }
        Message::CertFetch { user_id } => {
            w.u64(user_id.0);
        }
        Message::CertFetchReply { user_certificate } => {
            let raw = user_certificate
                .as_ref()
                .map(Certificate::to_bytes)
                .unwrap_or_default();
            w.bytes(&raw)?;
        }
        Message::BankAuthRequest(m) => {
            w.u64(m.user_id.0)
                .u64(m.atm_id.0)
                .u64(m.t_s)
                .bytes(&m.user_signature.0)?;
            put_sealed(&mut w, &m.sealed_d_user)?;
            put_sealed(&mut w, &m.sealed_d_atm)?;
        }
        Message::AuthDecision(m) => {
            w.u64(m.user_id.0)
                .u64(m.atm_id.0)
                .u64(m.t_s)
                .u8(m.accepted as u8)
                .u8(m.reason as u8)
                .bytes(&m.bank_signature.0)?;
        }
        Message::AuthzRequest {
            user_id,
            atm_id,
            t_s,
            amount,
        } => {
            w.u64(user_id.0).u64(atm_id.0).u64(*t_s).u64(*amount);
        }
        Message::AuthzDecision(m) => {
            w.u64(m.user_id.0)
                .u64(m.atm_id.0)
                .u64(m.t_s)
                .u64(m.amount)
                .u8(m.allowed as u8)
                .bytes(&m.bank_signature.0)?;
        }
    }
    let out = w.into_inner();
    if out.len() > MAX_FRAME_LEN {
        return Err(EncodeError::OversizeField(out.len()));
    }
    Ok(out)
}

/// Validates magic, version and type; returns the type and the field reader.
fn read_header(bytes: &[u8]) -> Result<(MsgType, Reader<'_>), DecodeError> {
    if bytes.len() > MAX_FRAME_LEN {
        return Err(DecodeError::InvalidField("frame exceeds 1 MiB"));
    }
    let magic_len = bytes.len().min(MAGIC.len());
    if bytes[..magic_len] != MAGIC[..magic_len] {
        return Err(DecodeError::BadMagic);
    }
    let mut r = Reader::new(bytes);
    r.array::<4>()?;
    if r.u8()? != VERSION {
        return Err(DecodeError::BadVersion);
    }
    let code = r.u8()?;
    let ty = MsgType::from_byte(code).ok_or(DecodeError::UnknownType(code))?;
    Ok((ty, r))
}

pub fn decode(bytes: &[u8]) -> Result<Message, DecodeError> {
    let (ty, mut r) = read_header(bytes)?;
    let r = &mut r;
    let msg = match ty {
        MsgType::AtmAssignId => Message::AtmAssignId { atm_id: get_id(r)? },
        MsgType::AtmRegisterRequest => Message::AtmRegisterRequest {
            atm_id: get_id(r)?,
            atm_certificate: get_cert(r)?,
        },
        MsgType::AtmRegisterResponse => Message::AtmRegisterResponse {
            sealed_d_atm: get_sealed(r)?,
        },
        MsgType::UserAssignId => Message::UserAssignId { user_id: get_id(r)? },
        MsgType::UserRegisterRequest => Message::UserRegisterRequest {
            user_id: get_id(r)?,
            user_certificate: get_cert(r)?,
            sealed_session_key: get_sealed(r)?,
        },
        MsgType::UserRegisterResponse => Message::UserRegisterResponse {
            sealed_d_user: get_sealed(r)?,
        },
        MsgType::UserAuthRequest => Message::UserAuthRequest(UserAuthRequest {
            user_id: get_id(r)?,
            t_s: r.u64()?,
            user_signature: Signature(r.bytes()?.to_vec()),
            sealed_d_user: get_sealed(r)?,
        }),
        MsgType::CertFetch => Message::CertFetch { user_id: get_id(r)? },
        MsgType::CertFetchReply => {
            let raw = r.bytes()?;
            let user_certificate = if raw.is_empty() {
                None
            } else {
                Some(Certificate::from_bytes(raw)?)
            };
            Message::CertFetchReply { user_certificate }
        }
        MsgType::BankAuthRequest => Message::BankAuthRequest(BankAuthRequest {
            user_id: get_id(r)?,
            atm_id: get_id(r)?,
            t_s: r.u64()?,
            user_signature: Signature(r.bytes()?.to_vec()),
            sealed_d_user: get_sealed(r)?,
            sealed_d_atm: get_sealed(r)?,
        }),
        MsgType::AuthDecision => Message::AuthDecision(AuthDecision {
            user_id: get_id(r)?,
            atm_id: get_id(r)?,
            t_s: r.u64()?,
            accepted: get_bool(r)?,
            reason: ReasonCode::from_byte(r.u8()?).ok_or(DecodeError::InvalidField("reason code"))?,
            bank_signature: Signature(r.bytes()?.to_vec()),
        }),
        MsgType::AuthzRequest => Message::AuthzRequest {
            user_id: get_id(r)?,
            atm_id: get_id(r)?,
            t_s: r.u64()?,
            amount: r.u64()?,
        },
        MsgType::AuthzDecision => Message::AuthzDecision(AuthzDecision {
            user_id: get_id(r)?,
            atm_id: get_id(r)?,
            t_s: r.u64()?,
            amount: r.u64()?,
            allowed: get_bool(r)?,
            bank_signature: Signature(r.bytes()?.to_vec()),
        }),
    };
    r.finish()?;
    Ok(msg)
}

pub fn user_signed_bytes(user_id: EntityId, t_s: Timestamp) -> Vec<u8> {
    let mut w = Writer::new();
    w.u64(user_id.0).u64(t_s);
    w.into_inner()
}

pub fn decision_signed_bytes(
    user_id: EntityId,
    atm_id: EntityId,
    t_s: Timestamp,
    accepted: bool,
    reason: ReasonCode,
) -> Vec<u8> {
    let mut w = Writer::new();
    w.u64(user_id.0)
        .u64(atm_id.0)
        .u64(t_s)
        .u8(accepted as u8)
        .u8(reason as u8);
    w.into_inner()
}

pub fn authz_signed_bytes(
    user_id: EntityId,
    atm_id: EntityId,
    t_s: Timestamp,
    amount: u64,
    allowed: bool,
) -> Vec<u8> {
    let mut w = Writer::new();
    w.u64(user_id.0).u64(atm_id.0).u64(t_s).u64(amount).u8(allowed as u8);
    w.into_inner()
}

/// The canonical bytes a message's signature covers.
pub fn signing_bytes(msg: &Message) -> Result<Vec<u8>, NotSignable> {
    match msg {
        Message::UserAuthRequest(m) => Ok(user_signed_bytes(m.user_id, m.t_s)),
        Message::BankAuthRequest(m) => Ok(user_signed_bytes(m.user_id, m.t_s)),
        Message::AuthDecision(m) => Ok(decision_signed_bytes(
            m.user_id, m.atm_id, m.t_s, m.accepted, m.reason,
        )),
        Message::AuthzDecision(m) => Ok(authz_signed_bytes(
            m.user_id, m.atm_id, m.t_s, m.amount, m.allowed,
        )),
        other => Err(NotSignable(other.msg_type())),
    }
}

/// Byte ranges of an encoded frame that its signature covers.
#[allow(clippy::single_range_in_vec_init)]
pub fn signed_ranges(ty: MsgType) -> Result<Vec<Range<usize>>, NotSignable> {
    let h = HEADER_LEN;
    match ty {
        MsgType::UserAuthRequest => Ok(vec![h..h + 16]),
        // user_id, then t_s after atm_id
        MsgType::BankAuthRequest => Ok(vec![h..h + 8, h + 16..h + 24]),
        MsgType::AuthDecision => Ok(vec![h..h + 26]),
        MsgType::AuthzDecision => Ok(vec![h..h + 33]),
        other => Err(NotSignable(other)),
    }
}

/// A bank-signed frame split into its signed bytes and signature without
/// interpreting enum-valued fields, so authenticity can be checked first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignedFrame {
    pub msg_type: MsgType,
    pub signed: Vec<u8>,
    pub signature: Signature,
}

pub fn split_bank_signed(bytes: &[u8]) -> Result<SignedFrame, DecodeError> {
    let (ty, mut r) = read_header(bytes)?;
    let signed_len = match ty {
        MsgType::AuthDecision => 26,
        MsgType::AuthzDecision => 33,
        _ => return Err(DecodeError::InvalidField("not a bank-signed message")),
    };
    let start = r.position();
    for _ in 0..signed_len {
        r.u8()?;
    }
    let signed = bytes[start..start + signed_len].to_vec();
    let signature = Signature(r.bytes()?.to_vec());
    r.finish()?;
    Ok(SignedFrame {
        msg_type: ty,
        signed,
        signature,
    })
}
