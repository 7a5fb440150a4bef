// SPDX-License-Identifier: Apache-2.0

//! Ed25519 signatures and X25519 hybrid sealing.
//!
//! Public keys are `ed25519_public || x25519_public` (64 bytes) and private
//! keys are `ed25519_seed || x25519_secret` (64 bytes).

use std::sync::Mutex;

use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use rand::rngs::OsRng;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use x25519_dalek::{PublicKey as XPublic, StaticSecret};

use super::{
    derive_key, symmetric, BackendKind, CryptoBackend, CryptoError, KeyPair, PrivateKey, PublicKey,
    SealMode, SealedBox, Signature,
};

const HALF: usize = 32;

enum Entropy {
    Os,
    Seeded(Box<Mutex<ChaCha20Rng>>),
}

pub struct Curve25519Backend {
    entropy: Entropy,
}

impl Curve25519Backend {
    pub fn from_entropy() -> Self {
        Curve25519Backend {
            entropy: Entropy::Os,
        }
    }

    /// Every key, nonce and ephemeral secret is drawn from a ChaCha20 stream
    /// seeded with `seed`, so identical call sequences give identical bytes.
    pub fn seeded(seed: u64) -> Self {
        Curve25519Backend {
            entropy: Entropy::Seeded(Box::new(Mutex::new(ChaCha20Rng::seed_from_u64(seed)))),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self.entropy, Entropy::Seeded(_))
    }

    fn random_32(&self) -> [u8; 32] {
        let mut out = [0u8; 32];
        self.fill_random(&mut out);
        out
    }
}

fn split_public(public: &PublicKey) -> Option<(VerifyingKey, XPublic)> {
    if public.0.len() != 2 * HALF {
        return None;
    }
    let ed: [u8; 32] = public.0[..HALF].try_into().ok()?;
    let x: [u8; 32] = public.0[HALF..].try_into().ok()?;
    Some((VerifyingKey::from_bytes(&ed).ok()?, XPublic::from(x)))
}

fn split_private(private: &PrivateKey) -> Result<(SigningKey, StaticSecret), CryptoError> {
    if private.0.len() != 2 * HALF {
        return Err(CryptoError::BadKey);
    }
    let ed: [u8; 32] = private.0[..HALF].try_into().map_err(|_| CryptoError::BadKey)?;
    let x: [u8; 32] = private.0[HALF..].try_into().map_err(|_| CryptoError::BadKey)?;
    Ok((SigningKey::from_bytes(&ed), StaticSecret::from(x)))
}

fn box_key(shared: &[u8; 32], ephemeral: &XPublic, recipient: &XPublic) -> [u8; 32] {
    let mut ikm = Vec::with_capacity(96);
    ikm.extend_from_slice(shared);
    ikm.extend_from_slice(ephemeral.as_bytes());
    ikm.extend_from_slice(recipient.as_bytes());
    derive_key(&ikm, "x25519-seal")
}

impl CryptoBackend for Curve25519Backend {
    fn kind(&self) -> BackendKind {
        BackendKind::Curve25519
    }

    fn generate_keypair(&self) -> Result<KeyPair, CryptoError> {
        let ed_seed = self.random_32();
        let x_secret = self.random_32();
        let signing = SigningKey::from_bytes(&ed_seed);
        let secret = StaticSecret::from(x_secret);
        let mut public = signing.verifying_key().to_bytes().to_vec();
        public.extend_from_slice(XPublic::from(&secret).as_bytes());
        let mut private = ed_seed.to_vec();
        private.extend_from_slice(&secret.to_bytes());
        Ok(KeyPair::new(public, private))
    }

    fn sign(&self, private: &PrivateKey, msg: &[u8]) -> Result<Signature, CryptoError> {
        let (signing, _) = split_private(private)?;
        Ok(Signature(signing.sign(msg).to_bytes().to_vec()))
    }

    fn verify(&self, public: &PublicKey, msg: &[u8], sig: &Signature) -> bool {
        let Some((verifying, _)) = split_public(public) else {
            return false;
        };
        let Ok(sig) = ed25519_dalek::Signature::from_slice(&sig.0) else {
            return false;
        };
        verifying.verify(msg, &sig).is_ok()
    }

    fn seal_public(&self, public: &PublicKey, plaintext: &[u8]) -> Result<SealedBox, CryptoError> {
        let (_, recipient) = split_public(public).ok_or(CryptoError::BadKey)?;
        let ephemeral = StaticSecret::from(self.random_32());
        let ephemeral_public = XPublic::from(&ephemeral);
        let shared = ephemeral.diffie_hellman(&recipient);
        if !shared.was_contributory() {
            return Err(CryptoError::BadKey);
        }
        let key = box_key(shared.as_bytes(), &ephemeral_public, &recipient);
        let mut nonce = [0u8; symmetric::NONCE_LEN];
        self.fill_random(&mut nonce);
        let mut ciphertext = ephemeral_public.as_bytes().to_vec();
        ciphertext.extend(symmetric::seal(&key, &nonce, plaintext, ephemeral_public.as_bytes()));
        Ok(SealedBox {
            mode: SealMode::PublicKey,
            ciphertext,
        })
    }

    fn open_private(&self, private: &PrivateKey, sealed: &SealedBox) -> Result<Vec<u8>, CryptoError> {
        if sealed.mode != SealMode::PublicKey || sealed.ciphertext.len() < HALF {
            return Err(CryptoError::OpenFailed);
        }
        let (_, secret) = split_private(private).map_err(|_| CryptoError::OpenFailed)?;
        let (eph, body) = sealed.ciphertext.split_at(HALF);
        let eph: [u8; 32] = eph.try_into().expect("split at 32");
        let ephemeral_public = XPublic::from(eph);
        let shared = secret.diffie_hellman(&ephemeral_public);
        if !shared.was_contributory() {
            return Err(CryptoError::OpenFailed);
        }
        let recipient = XPublic::from(&secret);
        let key = box_key(shared.as_bytes(), &ephemeral_public, &recipient);
        symmetric::open(&key, body, ephemeral_public.as_bytes())
    }

    fn fill_random(&self, out: &mut [u8]) {
        match &self.entropy {
            Entropy::Os => OsRng.fill_bytes(out),
            Entropy::Seeded(rng) => rng.lock().expect("rng lock poisoned").fill_bytes(out),
        }
    }
}
