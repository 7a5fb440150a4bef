// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::freshness::FreshnessPolicy;
use super::{AtmError, ProtocolError};
use crate::codec::{
    self, split_bank_signed, user_signed_bytes, AuthDecision, AuthzDecision,
    BankAuthRequest, Message, MsgType, Timestamp, UserAuthRequest,
};
use crate::crypto::{Certificate, CryptoBackend, KeyPair, OpenKey, PublicKey, Role, SealKey};
use crate::share::{Modulus, SharePoint};
use crate::EntityId;

/// An ATM that has its id, key pair and certificate but no share yet.
#[derive(Clone, Debug)]
pub struct AtmPending {
    pub atm_id: EntityId,
    pub keypair: KeyPair,
    pub certificate: Certificate,
}

impl AtmPending {
    /// M2.
    pub fn request(&self) -> Message {
        Message::AtmRegisterRequest {
            atm_id: self.atm_id,
            atm_certificate: self.certificate.clone(),
        }
    }

    /// Opens the share from M3 once; from here on the ATM keeps it in the
    /// clear and re-seals it for the bank in every M9.
    pub fn complete(
        self,
        backend: &dyn CryptoBackend,
        m3: &Message,
        modulus: Modulus,
        ca_public: PublicKey,
        bank_certificate: Certificate,
    ) -> Result<Atm, ProtocolError> {
        let Message::AtmRegisterResponse { sealed_d_atm } = m3 else {
            return Err(ProtocolError::UnexpectedMessage(m3.msg_type()));
        };
        if bank_certificate.role != Role::Bank || !bank_certificate.verify(backend, &ca_public) {
            return Err(ProtocolError::BadCertificate);
        }
        let raw = backend
            .open(OpenKey::Private(&self.keypair.private), sealed_d_atm)
            .map_err(|_| ProtocolError::OpenFailed)?;
        let d_atm = SharePoint::from_bytes(modulus, &raw)?;
        if d_atm.x.value() != self.atm_id.0 {
            return Err(ProtocolError::ShareMismatch);
        }
        Ok(Atm {
            atm_id: self.atm_id,
            keypair: self.keypair,
            certificate: self.certificate,
            ca_public,
            bank_certificate,
            modulus: modulus.get(),
            d_atm: [d_atm.x.value(), d_atm.y.value()],
        })
    }
}

/// A registered ATM. Serializable so the CLI can keep it in a state file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Atm {
    pub atm_id: EntityId,
    pub keypair: KeyPair,
    pub certificate: Certificate,
    pub ca_public: PublicKey,
    pub bank_certificate: Certificate,
    pub modulus: u64,
    d_atm: [u64; 2],
}

impl Atm {
    pub fn d_atm(&self) -> Result<SharePoint, ProtocolError> {
        let m = Modulus::new(self.modulus)?;
        Ok(SharePoint::new(m.element(self.d_atm[0])?, m.element(self.d_atm[1])?))
    }

    /// Checks M7 against the user's certificate and builds M9.
    pub fn handle_user(
        &self,
        backend: &dyn CryptoBackend,
        m7: &UserAuthRequest,
        user_cert: &Certificate,
        policy: &FreshnessPolicy,
    ) -> Result<BankAuthRequest, AtmError> {
        if user_cert.subject_id != m7.user_id
            || user_cert.role != Role::User
            || !user_cert.verify(backend, &self.ca_public)
        {
            return Err(AtmError::BadCertificate);
        }
        let signed = user_signed_bytes(m7.user_id, m7.t_s);
        if !backend.verify(&user_cert.subject_public, &signed, &m7.user_signature) {
            return Err(AtmError::BadSignature);
        }
        if !policy.is_fresh(m7.t_s, policy.now()) {
            return Err(AtmError::Stale);
        }
        let d_atm = self.d_atm().map_err(|e| AtmError::Crypto(e.to_string()))?;
        let sealed_d_atm = backend.seal(
            SealKey::Public(&self.bank_certificate.subject_public),
            &d_atm.to_bytes(),
        )?;
        Ok(BankAuthRequest {
            user_id: m7.user_id,
            atm_id: self.atm_id,
            t_s: m7.t_s,
            user_signature: m7.user_signature.clone(),
            sealed_d_user: m7.sealed_d_user.clone(),
            sealed_d_atm,
        })
    }

    fn check_bank_signature(
        &self,
        backend: &dyn CryptoBackend,
        frame: &[u8],
        expected: MsgType,
    ) -> Result<Message, AtmError> {
        let split = split_bank_signed(frame).map_err(|e| AtmError::Malformed(e.to_string()))?;
        if split.msg_type != expected {
            return Err(AtmError::Malformed(format!("expected {}", expected.label())));
        }
        if !backend.verify(&self.bank_certificate.subject_public, &split.signed, &split.signature) {
            return Err(AtmError::BadSignature);
        }
        codec::decode(frame).map_err(|e| AtmError::Malformed(e.to_string()))
    }

    /// Verifies an M10 frame: bank signature first, then that it answers the
    /// request identified by `(user_id, t_s)` from this ATM. A signed
    /// rejection is final even if it names a different request (the bank
    /// saw an altered M9); only an acceptance must match exactly.
    pub fn verify_decision(
        &self,
        backend: &dyn CryptoBackend,
        frame: &[u8],
        user_id: EntityId,
        t_s: Timestamp,
    ) -> Result<AuthDecision, AtmError> {
        let Message::AuthDecision(d) = self.check_bank_signature(backend, frame, MsgType::AuthDecision)? else {
            return Err(AtmError::Malformed("expected M10".into()));
        };
        if d.accepted && (d.user_id, d.atm_id, d.t_s) != (user_id, self.atm_id, t_s) {
            return Err(AtmError::UnexpectedDecision);
        }
        Ok(d)
    }

    pub fn verify_authz(
        &self,
        backend: &dyn CryptoBackend,
        frame: &[u8],
        user_id: EntityId,
        t_s: Timestamp,
        amount: u64,
    ) -> Result<AuthzDecision, AtmError> {
        let Message::AuthzDecision(d) = self.check_bank_signature(backend, frame, MsgType::AuthzDecision)? else {
            return Err(AtmError::Malformed("expected authorization decision".into()));
        };
        if (d.user_id, d.atm_id, d.t_s, d.amount) != (user_id, self.atm_id, t_s, amount) {
            return Err(AtmError::UnexpectedDecision);
        }
        Ok(d)
    }
}
