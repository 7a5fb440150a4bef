// SPDX-License-Identifier: Apache-2.0

//! The user's card: a software token holding the user key pair, the session
//! key shared with the bank and the still-sealed user share.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use subtle::ConstantTimeEq;

use super::{CardError, ProtocolError};
use crate::codec::{user_signed_bytes, Message, Timestamp, UserAuthRequest};
use crate::crypto::{Certificate, CryptoBackend, KeyPair, OpenKey, PublicKey, SealKey, SealedBox, SessionKey};
use crate::share::{Modulus, SharePoint};
use crate::EntityId;

/// Consecutive wrong PINs before the card locks.
pub const MAX_PIN_FAILURES: u32 = 3;

fn pin_digest(salt: &[u8; 16], pin: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"sfamss-pin");
    h.update(salt);
    h.update(pin.as_bytes());
    h.finalize().into()
}

/// A card between M5 and M6.
#[derive(Clone, Debug)]
pub struct CardPending {
    pub user_id: EntityId,
    pub keypair: KeyPair,
    pub certificate: Certificate,
    session_key: SessionKey,
}

impl CardPending {
    /// Generates `K_s` and builds M5 with it sealed under the bank key.
    pub fn start(
        backend: &dyn CryptoBackend,
        user_id: EntityId,
        keypair: KeyPair,
        certificate: Certificate,
        bank_public: &PublicKey,
    ) -> Result<(Self, Message), ProtocolError> {
        let session_key = backend.session_key();
        let sealed_session_key = backend.seal(SealKey::Public(bank_public), &session_key.0)?;
        let m5 = Message::UserRegisterRequest {
            user_id,
            user_certificate: certificate.clone(),
            sealed_session_key,
        };
        let pending = CardPending {
            user_id,
            keypair,
            certificate,
            session_key,
        };
        Ok((pending, m5))
    }

    pub fn session_key(&self) -> &SessionKey {
        &self.session_key
    }

    /// Stores the sealed share from M6 as issued. The share is opened once,
    /// only to check that it belongs to this user, and then discarded.
    pub fn complete(
        self,
        backend: &dyn CryptoBackend,
        m6: &Message,
        modulus: Modulus,
        pin: &str,
    ) -> Result<Card, ProtocolError> {
        let Message::UserRegisterResponse { sealed_d_user } = m6 else {
            return Err(ProtocolError::UnexpectedMessage(m6.msg_type()));
        };
        let raw = backend
            .open(OpenKey::Session(&self.session_key), sealed_d_user)
            .map_err(|_| ProtocolError::OpenFailed)?;
        if SharePoint::from_bytes(modulus, &raw)?.x.value() != self.user_id.0 {
            return Err(ProtocolError::ShareMismatch);
        }
        let mut pin_salt = [0u8; 16];
        backend.fill_random(&mut pin_salt);
        Ok(Card {
            user_id: self.user_id,
            keypair: self.keypair,
            certificate: self.certificate,
            session_key: self.session_key,
            sealed_d_user: sealed_d_user.clone(),
            pin_digest: pin_digest(&pin_salt, pin),
            pin_salt,
            failures: 0,
            locked: false,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Card {
    pub user_id: EntityId,
    pub keypair: KeyPair,
    pub certificate: Certificate,
    pub session_key: SessionKey,
    pub sealed_d_user: SealedBox,
    pin_salt: [u8; 16],
    pin_digest: [u8; 32],
    #[serde(skip)]
    failures: u32,
    #[serde(skip)]
    locked: bool,
}

impl Card {
    pub fn is_locked(&self) -> bool {
        self.locked
    }

    /// Local PIN check. Three consecutive failures lock the card for the
    /// lifetime of this value.
    pub fn check_pin(&mut self, pin: &str) -> Result<(), CardError> {
        if self.locked {
            return Err(CardError::CardLocked);
        }
        let ok: bool = pin_digest(&self.pin_salt, pin).ct_eq(&self.pin_digest).into();
        if ok {
            self.failures = 0;
            return Ok(());
        }
        self.failures += 1;
        if self.failures >= MAX_PIN_FAILURES {
            self.locked = true;
            return Err(CardError::CardLocked);
        }
        Err(CardError::BadPin {
            remaining: MAX_PIN_FAILURES - self.failures,
        })
    }

    /// M7: signs `(user_id, t_s)` and forwards the sealed share untouched.
    pub fn begin_session(
        &mut self,
        backend: &dyn CryptoBackend,
        pin: &str,
        t_s: Timestamp,
    ) -> Result<UserAuthRequest, CardError> {
        self.check_pin(pin)?;
        let user_signature = backend
            .sign(&self.keypair.private, &user_signed_bytes(self.user_id, t_s))
            .map_err(|_| CardError::SigningFailed)?;
        Ok(UserAuthRequest {
            user_id: self.user_id,
            t_s,
            user_signature,
            sealed_d_user: self.sealed_d_user.clone(),
        })
    }
}
