// SPDX-License-Identifier: Apache-2.0

//! Append-only audit log with encrypted bodies and a SHA-256 hash chain.
//!
//! Each entry is serialized as
//! `seq (8) | timestamp (8) | prev_hash (32) | body_len (4) | sealed body`,
//! where the body is sealed under the storage key with the 48-byte header as
//! associated data. `prev_hash` is the SHA-256 of the previous serialized
//! entry, or 32 zero bytes for the first one. The hash of the newest entry
//! is anchored in the store's authenticated records blob, so truncation and
//! edits to the last entry are detected as well.

use rand::rngs::OsRng;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::StoreError;
use crate::codec::bytes::{Reader, Writer};
use crate::codec::{ReasonCode, Timestamp};
use crate::crypto;
use crate::EntityId;

pub const GENESIS_HASH: [u8; 32] = [0u8; 32];
const HEADER_LEN: usize = 8 + 8 + 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuditEvent {
    RegisterAtm,
    RegisterUser,
    AuthAccept,
    AuthReject(ReasonCode),
    AuthzAllow,
    AuthzDeny,
}

impl AuditEvent {
    pub fn name(self) -> String {
        match self {
            AuditEvent::RegisterAtm => "REGISTER_ATM".into(),
            AuditEvent::RegisterUser => "REGISTER_USER".into(),
            AuditEvent::AuthAccept => "AUTH_ACCEPT".into(),
            AuditEvent::AuthReject(r) => format!("AUTH_REJECT({r})"),
            AuditEvent::AuthzAllow => "AUTHZ_ALLOW".into(),
            AuditEvent::AuthzDeny => "AUTHZ_DENY".into(),
        }
    }
}

/// What the caller records; the log adds sequencing and chaining.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditBody {
    pub event: AuditEvent,
    pub user_id: Option<EntityId>,
    pub atm_id: Option<EntityId>,
    pub t_s: Option<Timestamp>,
    pub amount: Option<u64>,
    /// For authentications, the user's signature over `(user_id, t_s)`.
    pub evidence: Vec<u8>,
}

impl AuditBody {
    pub fn new(event: AuditEvent) -> Self {
        AuditBody {
            event,
            user_id: None,
            atm_id: None,
            t_s: None,
            amount: None,
            evidence: Vec::new(),
        }
    }
}

/// A decrypted audit entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuditRecord {
    pub seq: u64,
    pub timestamp: Timestamp,
    pub prev_hash: [u8; 32],
    pub body: AuditBody,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChainStatus {
    Ok,
    /// The first sequence number whose link into the chain does not hold.
    BrokenAt(u64),
}

struct EntryHeader {
    seq: u64,
    timestamp: Timestamp,
    prev_hash: [u8; 32],
}

fn parse_entry(raw: &[u8]) -> Option<(EntryHeader, &[u8])> {
    let mut r = Reader::new(raw);
    let seq = r.u64().ok()?;
    let timestamp = r.u64().ok()?;
    let prev_hash = r.array::<32>().ok()?;
    let body = r.bytes().ok()?;
    r.finish().ok()?;
    Some((
        EntryHeader {
            seq,
            timestamp,
            prev_hash,
        },
        body,
    ))
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AuditLog {
    entries: Vec<Vec<u8>>,
}

impl AuditLog {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn head_hash(&self) -> [u8; 32] {
        self.entries
            .last()
            .map(|e| Sha256::digest(e).into())
            .unwrap_or(GENESIS_HASH)
    }

    pub(crate) fn append(
        &mut self,
        key: &[u8; 32],
        timestamp: Timestamp,
        body: &AuditBody,
    ) -> AuditRecord {
        let seq = self.entries.len() as u64 + 1;
        let prev_hash = self.head_hash();
        let mut header = Writer::new();
        header.u64(seq).u64(timestamp).raw(&prev_hash);
        let header = header.into_inner();

        let plaintext = serde_json::to_vec(body).expect("audit bodies serialize");
        let mut nonce = [0u8; 12];
        OsRng.fill_bytes(&mut nonce);
        let sealed = crypto::seal_with_nonce(key, &nonce, &plaintext, &header);

        let mut w = Writer::new();
        w.raw(&header);
        w.bytes(&sealed).expect("audit bodies are small");
        self.entries.push(w.into_inner());
        AuditRecord {
            seq,
            timestamp,
            prev_hash,
            body: body.clone(),
        }
    }

    /// Walks the chain and compares the newest entry with the anchored head.
    pub fn verify_chain(&self, anchored_len: u64, anchored_head: &[u8; 32]) -> ChainStatus {
        let mut prev = GENESIS_HASH;
        for (i, raw) in self.entries.iter().enumerate() {
            let expected_seq = i as u64 + 1;
            match parse_entry(raw) {
                Some((h, _)) if h.seq == expected_seq && h.prev_hash == prev => {}
                _ => return ChainStatus::BrokenAt(expected_seq),
            }
            prev = Sha256::digest(raw).into();
        }
        let len = self.entries.len() as u64;
        if len < anchored_len {
            return ChainStatus::BrokenAt(len + 1);
        }
        if len > anchored_len {
            return ChainStatus::BrokenAt(anchored_len + 1);
        }
        if &prev != anchored_head {
            return ChainStatus::BrokenAt(len);
        }
        ChainStatus::Ok
    }

    pub fn decrypt_all(&self, key: &[u8; 32]) -> Result<Vec<AuditRecord>, StoreError> {
        self.entries
            .iter()
            .map(|raw| {
                let (h, body) = parse_entry(raw)
                    .ok_or_else(|| StoreError::CorruptImage("audit entry framing".into()))?;
                let plaintext = crypto::open_with_aad(key, body, &raw[..HEADER_LEN])
                    .map_err(|_| StoreError::CorruptImage(format!("audit entry {}", h.seq)))?;
                let body: AuditBody = serde_json::from_slice(&plaintext)
                    .map_err(|e| StoreError::CorruptImage(e.to_string()))?;
                Ok(AuditRecord {
                    seq: h.seq,
                    timestamp: h.timestamp,
                    prev_hash: h.prev_hash,
                    body,
                })
            })
            .collect()
    }

    /// Serialized region: each entry as `u32 len || entry`.
    pub fn to_region(&self) -> Vec<u8> {
        let mut w = Writer::new();
        for e in &self.entries {
            w.bytes(e).expect("audit entries are small");
        }
        w.into_inner()
    }

    /// Splits a region back into entries. Never fails: bytes that cannot be
    /// framed become one trailing entry, which then fails chain verification.
    pub fn from_region(region: &[u8]) -> Self {
        let mut entries = Vec::new();
        let mut rest = region;
        while !rest.is_empty() {
            let mut r = Reader::new(rest);
            match r.bytes() {
                Ok(entry) => {
                    entries.push(entry.to_vec());
                    rest = &rest[r.position()..];
                }
                Err(_) => {
                    entries.push(rest.to_vec());
                    break;
                }
            }
        }
        AuditLog { entries }
    }

    #[cfg(test)]
    pub(crate) fn entries_mut(&mut self) -> &mut Vec<Vec<u8>> {
        &mut self.entries
    }
}
