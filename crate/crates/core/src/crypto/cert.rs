// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::{CryptoBackend, CryptoError, KeyPair, PublicKey, Signature};
use crate::codec::bytes::{Reader, Writer};
use crate::codec::DecodeError;
use crate::EntityId;

/// The CA's subject id. Zero is never assigned to an ATM or user.
pub const CA_ID: EntityId = EntityId(0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Bank = 1,
    Atm = 2,
    User = 3,
    Ca = 4,
}

impl Role {
    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            1 => Some(Role::Bank),
            2 => Some(Role::Atm),
            3 => Some(Role::User),
            4 => Some(Role::Ca),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Role::Bank => "BANK",
            Role::Atm => "ATM",
            Role::User => "USER",
            Role::Ca => "CA",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Certificate {
    pub subject_id: EntityId,
    pub role: Role,
    pub subject_public: PublicKey,
    pub issuer_id: EntityId,
    pub issuer_signature: Signature,
}

impl Certificate {
    /// Canonical encoding of everything the issuer signs.
    pub fn tbs_bytes(
        subject_id: EntityId,
        role: Role,
        subject_public: &PublicKey,
        issuer_id: EntityId,
    ) -> Vec<u8> {
        let mut w = Writer::new();
        w.u64(subject_id.0).u8(role as u8);
        w.bytes(&subject_public.0)
            .expect("public keys are far below the field cap");
        w.u64(issuer_id.0);
        w.into_inner()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&Self::tbs_bytes(
            self.subject_id,
            self.role,
            &self.subject_public,
            self.issuer_id,
        ));
        w.bytes(&self.issuer_signature.0)
            .expect("signatures are far below the field cap");
        w.into_inner()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let cert = Self::read(&mut r)?;
        r.finish()?;
        Ok(cert)
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let subject_id = EntityId(r.u64()?);
        let role = Role::from_byte(r.u8()?).ok_or(DecodeError::InvalidField("certificate role"))?;
        let subject_public = PublicKey(r.bytes()?.to_vec());
        let issuer_id = EntityId(r.u64()?);
        let issuer_signature = Signature(r.bytes()?.to_vec());
        Ok(Certificate {
            subject_id,
            role,
            subject_public,
            issuer_id,
            issuer_signature,
        })
    }

    /// True iff the issuer signature is valid under `ca_public`.
    pub fn verify(&self, backend: &dyn CryptoBackend, ca_public: &PublicKey) -> bool {
        let tbs = Self::tbs_bytes(self.subject_id, self.role, &self.subject_public, self.issuer_id);
        backend.verify(ca_public, &tbs, &self.issuer_signature)
    }
}

impl Serialize for Certificate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use base64::Engine;
        s.serialize_str(&base64::engine::general_purpose::STANDARD.encode(self.to_bytes()))
    }
}

impl<'de> Deserialize<'de> for Certificate {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use base64::Engine;
        let text = String::deserialize(d)?;
        let raw = base64::engine::general_purpose::STANDARD
            .decode(text)
            .map_err(serde::de::Error::custom)?;
        Certificate::from_bytes(&raw).map_err(serde::de::Error::custom)
    }
}

/// Deployment certificate authority: a key pair and its self-signed certificate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertificateAuthority {
    pub keypair: KeyPair,
    pub certificate: Certificate,
}

impl CertificateAuthority {
    pub fn bootstrap(backend: &dyn CryptoBackend) -> Result<Self, CryptoError> {
        let keypair = backend.generate_keypair()?;
        let tbs = Certificate::tbs_bytes(CA_ID, Role::Ca, &keypair.public, CA_ID);
        let issuer_signature = backend.sign(&keypair.private, &tbs)?;
        let certificate = Certificate {
            subject_id: CA_ID,
            role: Role::Ca,
            subject_public: keypair.public.clone(),
            issuer_id: CA_ID,
            issuer_signature,
        };
        Ok(CertificateAuthority {
            keypair,
            certificate,
        })
    }

    pub fn public(&self) -> &PublicKey {
        &self.keypair.public
    }

    pub fn issue(
        &self,
        backend: &dyn CryptoBackend,
        subject_public: &PublicKey,
        subject_id: EntityId,
        role: Role,
    ) -> Result<Certificate, CryptoError> {
        let tbs = Certificate::tbs_bytes(subject_id, role, subject_public, CA_ID);
        let issuer_signature = backend.sign(&self.keypair.private, &tbs)?;
        Ok(Certificate {
            subject_id,
            role,
            subject_public: subject_public.clone(),
            issuer_id: CA_ID,
            issuer_signature,
        })
    }
}
