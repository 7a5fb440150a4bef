// SPDX-License-Identifier: Apache-2.0

//! An in-process deployment: CA, bank, and helpers that run the two
//! registration flows end to end. Used by tests, the attack harness and
//! scenario runner.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::atm::{Atm, AtmPending};
use super::bank::{initialize_secrets, initialize_secrets_with, Bank};
use super::card::{Card, CardPending};
use super::freshness::FreshnessPolicy;
use super::{BankIdentity, ProtocolError};
use crate::codec::Message;
use crate::crypto::{CertificateAuthority, Role, SharedBackend};
use crate::share::{FieldElement, Modulus, Polynomial};
use crate::store::{BankStore, StorageKey, UserPrivileges};
use crate::EntityId;

pub struct Network {
    pub backend: SharedBackend,
    pub ca: CertificateAuthority,
    pub bank: Bank,
}

/// How the bank's secrets are chosen.
pub enum Secrets {
    Random(Modulus),
    Fixed { base: Polynomial, bank_id: EntityId },
}

impl Network {
    pub fn new(
        backend: SharedBackend,
        secrets: Secrets,
        policy: FreshnessPolicy,
        seed: u64,
    ) -> Result<Self, ProtocolError> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut key = [0u8; 32];
        rng.fill_bytes(&mut key);
        let mut store = BankStore::in_memory(StorageKey(key));
        let bank_id = match secrets {
            Secrets::Random(modulus) => initialize_secrets(&mut store, modulus, &mut rng)?,
            Secrets::Fixed { base, bank_id } => {
                initialize_secrets_with(&mut store, base, bank_id)?;
                bank_id
            }
        };
        Self::with_store(backend, store, bank_id, policy, Box::new(rng))
    }

    /// Bootstraps a CA and bank identity around an initialized store.
    pub fn with_store(
        backend: SharedBackend,
        store: BankStore,
        bank_id: EntityId,
        policy: FreshnessPolicy,
        rng: Box<dyn RngCore + Send>,
    ) -> Result<Self, ProtocolError> {
        let ca = CertificateAuthority::bootstrap(&*backend)?;
        let keypair = backend.generate_keypair()?;
        let certificate = ca.issue(&*backend, &keypair.public, bank_id, Role::Bank)?;
        let identity = BankIdentity {
            id: bank_id,
            keypair,
            certificate,
        };
        let bank = Bank::new(backend.clone(), identity, ca.public().clone(), store, policy, rng)?;
        Ok(Network { backend, ca, bank })
    }

    pub fn modulus(&self) -> Modulus {
        self.bank.modulus()
    }

    /// M1 to M3 for a freshly assigned id.
    pub fn register_atm(&self) -> Result<Atm, ProtocolError> {
        let id = self.bank.assign_id(Role::Atm)?;
        self.register_assigned_atm(id)
    }

    pub fn register_atm_with_id(&self, id: EntityId) -> Result<Atm, ProtocolError> {
        self.bank.assign_specific_id(id, Role::Atm)?;
        self.register_assigned_atm(id)
    }

    fn register_assigned_atm(&self, atm_id: EntityId) -> Result<Atm, ProtocolError> {
        let backend = &*self.backend;
        let keypair = backend.generate_keypair()?;
        let certificate = self.ca.issue(backend, &keypair.public, atm_id, Role::Atm)?;
        let pending = AtmPending {
            atm_id,
            keypair,
            certificate,
        };
        let m3 = self.bank.register_atm(&pending.request())?;
        pending.complete(
            backend,
            &m3,
            self.modulus(),
            self.ca.public().clone(),
            self.bank.certificate().clone(),
        )
    }

    /// M4 to M6 for a freshly assigned id and a random anchor.
    pub fn register_user(&self, pin: &str, privileges: UserPrivileges) -> Result<Card, ProtocolError> {
        let id = self.bank.assign_id(Role::User)?;
        let (pending, m5) = self.start_user(id)?;
        let m6 = self.bank.register_user(&m5, privileges)?;
        pending.complete(&*self.backend, &m6, self.modulus(), pin)
    }

    /// Registration with a chosen id and anchor value (fixtures).
    pub fn register_user_with(
        &self,
        id: EntityId,
        r_user: FieldElement,
        pin: &str,
        privileges: UserPrivileges,
    ) -> Result<Card, ProtocolError> {
        self.bank.assign_specific_id(id, Role::User)?;
        let (pending, m5) = self.start_user(id)?;
        let m6 = self.bank.register_user_with_anchor(&m5, privileges, r_user)?;
        pending.complete(&*self.backend, &m6, self.modulus(), pin)
    }

    fn start_user(&self, user_id: EntityId) -> Result<(CardPending, Message), ProtocolError> {
        let backend = &*self.backend;
        let keypair = backend.generate_keypair()?;
        let certificate = self.ca.issue(backend, &keypair.public, user_id, Role::User)?;
        CardPending::start(
            backend,
            user_id,
            keypair,
            certificate,
            &self.bank.certificate().subject_public,
        )
    }
}
