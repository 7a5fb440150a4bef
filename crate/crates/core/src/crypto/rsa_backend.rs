// SPDX-License-Identifier: Apache-2.0

//! RSA-2048: PSS/SHA-256 signatures and OAEP/SHA-256 key wrapping.
//!
//! Public-key seals are hybrid: a fresh ChaCha20-Poly1305 key is wrapped
//! with OAEP and the payload is encrypted under it. Layout:
//! `u16 wrapped_len || wrapped_key || nonce || aead_ciphertext`.

use rand::rngs::OsRng;
use rand::RngCore;
use rsa::pkcs1::{DecodeRsaPrivateKey, DecodeRsaPublicKey, EncodeRsaPrivateKey, EncodeRsaPublicKey};
use rsa::{Oaep, Pss, RsaPrivateKey, RsaPublicKey};
use sha2::{Digest, Sha256};

use super::{
    symmetric, BackendKind, CryptoBackend, CryptoError, KeyPair, PrivateKey, PublicKey, SealMode,
    SealedBox, Signature,
};

pub const RSA_BITS: usize = 2048;

#[derive(Default)]
pub struct RsaBackend;

impl RsaBackend {
    pub fn new() -> Self {
        RsaBackend
    }
}

fn backend_err(e: impl std::fmt::Display) -> CryptoError {
    CryptoError::Backend(e.to_string())
}

fn parse_private(private: &PrivateKey) -> Result<RsaPrivateKey, CryptoError> {
    RsaPrivateKey::from_pkcs1_der(&private.0).map_err(|_| CryptoError::BadKey)
}

impl CryptoBackend for RsaBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Rsa2048
    }

    fn generate_keypair(&self) -> Result<KeyPair, CryptoError> {
        let private = RsaPrivateKey::new(&mut OsRng, RSA_BITS).map_err(backend_err)?;
        let public = RsaPublicKey::from(&private);
        let public_der = public.to_pkcs1_der().map_err(backend_err)?;
        let private_der = private.to_pkcs1_der().map_err(backend_err)?;
        Ok(KeyPair::new(
            public_der.as_bytes().to_vec(),
            private_der.as_bytes().to_vec(),
        ))
    }

    fn sign(&self, private: &PrivateKey, msg: &[u8]) -> Result<Signature, CryptoError> {
        let key = parse_private(private)?;
        let digest = Sha256::digest(msg);
        key.sign_with_rng(&mut OsRng, Pss::new::<Sha256>(), &digest)
            .map(Signature)
            .map_err(backend_err)
    }

    fn verify(&self, public: &PublicKey, msg: &[u8], sig: &Signature) -> bool {
        let Ok(key) = RsaPublicKey::from_pkcs1_der(&public.0) else {
            return false;
        };
        let digest = Sha256::digest(msg);
        key.verify(Pss::new::<Sha256>(), &digest, &sig.0).is_ok()
    }

    fn seal_public(&self, public: &PublicKey, plaintext: &[u8]) -> Result<SealedBox, CryptoError> {
        let key = RsaPublicKey::from_pkcs1_der(&public.0).map_err(|_| CryptoError::BadKey)?;
        let mut content_key = [0u8; 32];
        OsRng.fill_bytes(&mut content_key);
        let wrapped = key
            .encrypt(&mut OsRng, Oaep::new::<Sha256>(), &content_key)
            .map_err(backend_err)?;
        let mut nonce = [0u8; symmetric::NONCE_LEN];
        OsRng.fill_bytes(&mut nonce);
        let wrapped_len = u16::try_from(wrapped.len()).map_err(backend_err)?;
        let mut ciphertext = wrapped_len.to_be_bytes().to_vec();
        ciphertext.extend_from_slice(&wrapped);
        ciphertext.extend(symmetric::seal(&content_key, &nonce, plaintext, &wrapped));
        Ok(SealedBox {
            mode: SealMode::PublicKey,
            ciphertext,
        })
    }

    fn open_private(&self, private: &PrivateKey, sealed: &SealedBox) -> Result<Vec<u8>, CryptoError> {
        if sealed.mode != SealMode::PublicKey || sealed.ciphertext.len() < 2 {
            return Err(CryptoError::OpenFailed);
        }
        let key = parse_private(private).map_err(|_| CryptoError::OpenFailed)?;
        let (len, rest) = sealed.ciphertext.split_at(2);
        let len = u16::from_be_bytes([len[0], len[1]]) as usize;
        if rest.len() < len {
            return Err(CryptoError::OpenFailed);
        }
        let (wrapped, body) = rest.split_at(len);
        let content_key = key
            .decrypt(Oaep::new::<Sha256>(), wrapped)
            .map_err(|_| CryptoError::OpenFailed)?;
        let content_key: [u8; 32] = content_key
            .as_slice()
            .try_into()
            .map_err(|_| CryptoError::OpenFailed)?;
        symmetric::open(&content_key, body, wrapped)
    }

    fn fill_random(&self, out: &mut [u8]) {
        OsRng.fill_bytes(out);
    }
}
