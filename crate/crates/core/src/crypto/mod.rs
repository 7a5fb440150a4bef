// SPDX-License-Identifier: Apache-2.0

//! Public-key signing and sealing, symmetric sealing, and a minimal CA.
//!
//! Protocol code only sees [`CryptoBackend`]. Two backends exist:
//! [`RsaBackend`] (RSA-2048 with PSS signatures and OAEP-wrapped hybrid
//! sealing) and [`Curve25519Backend`] (Ed25519 signatures, X25519 hybrid
//! sealing). The latter can run from a seed, which makes every key,
//! signature and ciphertext reproducible for protocol tests.

mod cert;
mod curve;
pub mod keyfile;
mod rsa_backend;
mod symmetric;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cert::{CertificateAuthority, Certificate, Role, CA_ID};
pub use curve::Curve25519Backend;
pub use rsa_backend::RsaBackend;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("crypto backend failure: {0}")]
    Backend(String),
    #[error("sealed box could not be opened")]
    OpenFailed,
    #[error("malformed key material")]
    BadKey,
    #[error("malformed key file: {0}")]
    BadKeyFile(String),
}

/// Which algorithm family a deployment uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BackendKind {
    #[serde(rename = "rsa-2048")]
    Rsa2048,
    #[serde(rename = "ed25519-x25519")]
    Curve25519,
}

impl BackendKind {
    pub fn name(self) -> &'static str {
        match self {
            BackendKind::Rsa2048 => "rsa-2048",
            BackendKind::Curve25519 => "ed25519-x25519",
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BackendKind {
    type Err = CryptoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rsa-2048" | "rsa" => Ok(BackendKind::Rsa2048),
            "ed25519-x25519" | "curve25519" => Ok(BackendKind::Curve25519),
            other => Err(CryptoError::BadKeyFile(format!("unknown backend {other}"))),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PublicKey(pub Vec<u8>);

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrivateKey(pub Vec<u8>);

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", key_id_of(&self.0))
    }
}

impl fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PrivateKey(..)")
    }
}

/// Short fingerprint of a public key: the first 8 bytes of its SHA-256, hex.
pub fn key_id_of(public: &[u8]) -> String {
    let digest = Sha256::digest(public);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyPair {
    pub key_id: String,
    pub public: PublicKey,
    pub private: PrivateKey,
}

impl KeyPair {
    pub fn new(public: Vec<u8>, private: Vec<u8>) -> Self {
        KeyPair {
            key_id: key_id_of(&public),
            public: PublicKey(public),
            private: PrivateKey(private),
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Signature(pub Vec<u8>);

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({} bytes)", self.0.len())
    }
}

/// 32-byte symmetric key shared by a card and the bank.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionKey(pub [u8; 32]);

impl fmt::Debug for SessionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SessionKey(..)")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SealMode {
    PublicKey = 1,
    Symmetric = 2,
}

impl SealMode {
    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            1 => Some(SealMode::PublicKey),
            2 => Some(SealMode::Symmetric),
            _ => None,
        }
    }
}

/// Ciphertext plus the mode it was produced under.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SealedBox {
    pub mode: SealMode,
    pub ciphertext: Vec<u8>,
}

impl fmt::Debug for SealedBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SealedBox({:?}, {} bytes)", self.mode, self.ciphertext.len())
    }
}

#[derive(Clone, Copy, Debug)]
pub enum SealKey<'a> {
    Public(&'a PublicKey),
    Session(&'a SessionKey),
}

#[derive(Clone, Copy, Debug)]
pub enum OpenKey<'a> {
    Private(&'a PrivateKey),
    Session(&'a SessionKey),
}

pub trait CryptoBackend: Send + Sync {
    fn kind(&self) -> BackendKind;

    fn generate_keypair(&self) -> Result<KeyPair, CryptoError>;

    fn sign(&self, private: &PrivateKey, msg: &[u8]) -> Result<Signature, CryptoError>;

    /// Never fails: malformed keys or signatures verify as `false`.
    fn verify(&self, public: &PublicKey, msg: &[u8], sig: &Signature) -> bool;

    fn seal_public(&self, public: &PublicKey, plaintext: &[u8]) -> Result<SealedBox, CryptoError>;

    fn open_private(&self, private: &PrivateKey, sealed: &SealedBox) -> Result<Vec<u8>, CryptoError>;

    fn fill_random(&self, out: &mut [u8]);

    fn session_key(&self) -> SessionKey {
        let mut key = [0u8; 32];
        self.fill_random(&mut key);
        SessionKey(key)
    }

    fn seal_symmetric(&self, key: &SessionKey, plaintext: &[u8]) -> SealedBox {
        let mut nonce = [0u8; symmetric::NONCE_LEN];
        self.fill_random(&mut nonce);
        SealedBox {
            mode: SealMode::Symmetric,
            ciphertext: symmetric::seal(&key.0, &nonce, plaintext, &[]),
        }
    }

    fn open_symmetric(&self, key: &SessionKey, sealed: &SealedBox) -> Result<Vec<u8>, CryptoError> {
        if sealed.mode != SealMode::Symmetric {
            return Err(CryptoError::OpenFailed);
        }
        symmetric::open(&key.0, &sealed.ciphertext, &[])
    }

    fn seal(&self, key: SealKey<'_>, plaintext: &[u8]) -> Result<SealedBox, CryptoError> {
        match key {
            SealKey::Public(public) => self.seal_public(public, plaintext),
            SealKey::Session(session) => Ok(self.seal_symmetric(session, plaintext)),
        }
    }

    fn open(&self, key: OpenKey<'_>, sealed: &SealedBox) -> Result<Vec<u8>, CryptoError> {
        match key {
            OpenKey::Private(private) => self.open_private(private, sealed),
            OpenKey::Session(session) => self.open_symmetric(session, sealed),
        }
    }
}

pub type SharedBackend = Arc<dyn CryptoBackend>;

/// Builds a backend of the given kind; `seed` makes the Curve25519 backend
/// deterministic and is rejected for RSA.
pub fn backend_for(kind: BackendKind, seed: Option<u64>) -> Result<SharedBackend, CryptoError> {
    match (kind, seed) {
        (BackendKind::Rsa2048, None) => Ok(Arc::new(RsaBackend::new())),
        (BackendKind::Rsa2048, Some(_)) => Err(CryptoError::Backend(
            "the RSA backend has no deterministic mode".into(),
        )),
        (BackendKind::Curve25519, None) => Ok(Arc::new(Curve25519Backend::from_entropy())),
        (BackendKind::Curve25519, Some(seed)) => Ok(Arc::new(Curve25519Backend::seeded(seed))),
    }
}

/// Symmetric sealing with a caller-supplied nonce and associated data.
/// Used for data at rest, where the caller controls nonce generation.
pub fn seal_with_nonce(key: &[u8; 32], nonce: &[u8; 12], plaintext: &[u8], aad: &[u8]) -> Vec<u8> {
    symmetric::seal(key, nonce, plaintext, aad)
}

pub fn open_with_aad(key: &[u8; 32], ciphertext: &[u8], aad: &[u8]) -> Result<Vec<u8>, CryptoError> {
    symmetric::open(key, ciphertext, aad)
}

/// HKDF-SHA256 expansion of `secret` into a 32-byte key for `purpose`.
pub fn derive_key(secret: &[u8], purpose: &str) -> [u8; 32] {
    let hk = hkdf::Hkdf::<Sha256>::new(Some(b"sfamss-kdf-v1"), secret);
    let mut out = [0u8; 32];
    hk.expand(purpose.as_bytes(), &mut out)
        .expect("32 bytes is a valid HKDF-SHA256 output length");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn backends() -> Vec<SharedBackend> {
        vec![
            Arc::new(Curve25519Backend::seeded(7)),
            Arc::new(Curve25519Backend::from_entropy()),
            shared_rsa(),
        ]
    }

    fn shared_rsa() -> SharedBackend {
        Arc::new(RsaBackend::new())
    }

    #[test]
    fn sign_verify_round_trip_and_failures() {
        for b in backends() {
            let kp = b.generate_keypair().unwrap();
            let other = b.generate_keypair().unwrap();
            let msg = b"withdraw 100".to_vec();
            let sig = b.sign(&kp.private, &msg).unwrap();
            assert!(b.verify(&kp.public, &msg, &sig), "{}", b.kind());
            assert!(!b.verify(&other.public, &msg, &sig));
            let mut flipped = msg.clone();
            flipped[0] ^= 0x01;
            assert!(!b.verify(&kp.public, &flipped, &sig));
            let mut bad_sig = sig.clone();
            bad_sig.0[3] ^= 0x80;
            assert!(!b.verify(&kp.public, &msg, &bad_sig));
            assert!(!b.verify(&kp.public, &msg, &Signature(vec![1, 2, 3])));
            assert!(!b.verify(&PublicKey(vec![0; 5]), &msg, &sig));
        }
    }

    #[test]
    fn seal_open_round_trip_and_failures() {
        for b in backends() {
            let kp = b.generate_keypair().unwrap();
            let other = b.generate_keypair().unwrap();
            let msg = vec![0xAB; 300];
            let sealed = b.seal(SealKey::Public(&kp.public), &msg).unwrap();
            assert_eq!(sealed.mode, SealMode::PublicKey);
            assert_eq!(b.open(OpenKey::Private(&kp.private), &sealed).unwrap(), msg);
            assert_eq!(
                b.open(OpenKey::Private(&other.private), &sealed),
                Err(CryptoError::OpenFailed)
            );

            let ks = b.session_key();
            let sym = b.seal(SealKey::Session(&ks), &msg).unwrap();
            assert_eq!(b.open(OpenKey::Session(&ks), &sym).unwrap(), msg);
            assert_eq!(
                b.open(OpenKey::Session(&b.session_key()), &sym),
                Err(CryptoError::OpenFailed)
            );
            // mode mismatch
            assert_eq!(b.open(OpenKey::Session(&ks), &sealed), Err(CryptoError::OpenFailed));
            assert_eq!(
                b.open(OpenKey::Private(&kp.private), &sym),
                Err(CryptoError::OpenFailed)
            );
        }
    }

    #[test]
    fn seeded_backend_is_deterministic() {
        let a = Curve25519Backend::seeded(1).generate_keypair().unwrap();
        let b = Curve25519Backend::seeded(1).generate_keypair().unwrap();
        let c = Curve25519Backend::seeded(2).generate_keypair().unwrap();
        assert_eq!(a, b);
        assert_ne!(a.key_id, c.key_id);
    }

    #[test]
    fn derive_key_separates_purposes() {
        assert_ne!(derive_key(b"s", "store"), derive_key(b"s", "other"));
        assert_eq!(derive_key(b"s", "store"), derive_key(b"s", "store"));
    }

    #[test]
    fn backend_kind_names() {
        for kind in [BackendKind::Rsa2048, BackendKind::Curve25519] {
            assert_eq!(kind.name().parse::<BackendKind>().unwrap(), kind);
        }
        assert!("dsa".parse::<BackendKind>().is_err());
        assert!(backend_for(BackendKind::Rsa2048, Some(1)).is_err());
    }
}
