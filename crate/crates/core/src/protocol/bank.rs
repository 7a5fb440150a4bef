// SPDX-License-Identifier: Apache-2.0

//! Bank role: id assignment, registration, three-share authentication and
//! withdrawal authorization.
//!
//! All state lives behind one mutex, so replay-cache check-and-insert, store
//! writes and audit appends are serialized across concurrent sessions.

use std::collections::{BTreeMap, HashSet};
use std::sync::{Mutex, MutexGuard};

use rand::{Rng, RngCore};

use super::freshness::{Freshness, FreshnessPolicy, ReplayCache};
use super::{BankIdentity, ProtocolError};
use crate::codec::{
    self, authz_signed_bytes, decision_signed_bytes, user_signed_bytes, AuthDecision,
    AuthzDecision, BankAuthRequest, Message, ReasonCode, Timestamp,
};
use crate::crypto::{Certificate, OpenKey, PublicKey, Role, SealKey, SessionKey, SharedBackend};
use crate::share::{self, sample_base_polynomial, sample_element, FieldElement, Modulus, Polynomial, SharePoint};
use crate::store::{
    AtmRecord, AuditBody, AuditEvent, BankSecrets, BankStore, Record, RecordStatus, StoreError,
    UserPrivileges, UserRecord,
};
use crate::EntityId;

/// Samples the base polynomial and the bank's own id into a fresh store.
pub fn initialize_secrets<R: RngCore + ?Sized>(
    store: &mut BankStore,
    modulus: Modulus,
    rng: &mut R,
) -> Result<EntityId, ProtocolError> {
    let base = sample_base_polynomial(modulus, rng);
    let bank_id = EntityId(rng.gen_range(1..modulus.get()));
    initialize_secrets_with(store, base, bank_id)?;
    Ok(bank_id)
}

/// Installs a caller-chosen base polynomial and bank id.
pub fn initialize_secrets_with(
    store: &mut BankStore,
    base: Polynomial,
    bank_id: EntityId,
) -> Result<(), ProtocolError> {
    if !base.is_base() {
        return Err(ProtocolError::InvalidBasePolynomial);
    }
    if bank_id.0 == 0 || bank_id.0 >= base.modulus().get() {
        return Err(ProtocolError::UnknownId(bank_id));
    }
    store.set_secrets(BankSecrets {
        modulus: base.modulus().get(),
        base_coeffs: base.values(),
        assigned: BTreeMap::from([(bank_id, Role::Bank)]),
    });
    store.save()?;
    Ok(())
}

struct BankInner {
    store: BankStore,
    base: Polynomial,
    replay: ReplayCache,
    rng: Box<dyn RngCore + Send>,
    /// Accepted `(user, atm, t_s)` sessions not yet used for authorization.
    open_sessions: HashSet<(EntityId, EntityId, Timestamp)>,
}

pub struct Bank {
    backend: SharedBackend,
    identity: BankIdentity,
    ca_public: PublicKey,
    policy: FreshnessPolicy,
    modulus: Modulus,
    inner: Mutex<BankInner>,
}

/// Result of the signature and share checks before signing.
struct Verdict {
    reason: ReasonCode,
    evidence: Vec<u8>,
}

impl Bank {
    pub fn new(
        backend: SharedBackend,
        identity: BankIdentity,
        ca_public: PublicKey,
        store: BankStore,
        policy: FreshnessPolicy,
        rng: Box<dyn RngCore + Send>,
    ) -> Result<Self, ProtocolError> {
        let secrets = store.secrets()?;
        let modulus = Modulus::new(secrets.modulus)?;
        let base = Polynomial::from_values(modulus, secrets.base_coeffs)?;
        if !base.is_base() {
            return Err(ProtocolError::InvalidBasePolynomial);
        }
        Ok(Bank {
            backend,
            identity,
            ca_public,
            policy,
            modulus,
            inner: Mutex::new(BankInner {
                store,
                base,
                replay: ReplayCache::new(),
                rng,
                open_sessions: HashSet::new(),
            }),
        })
    }

    fn lock(&self) -> MutexGuard<'_, BankInner> {
        self.inner.lock().expect("bank state lock poisoned")
    }

    pub fn id(&self) -> EntityId {
        self.identity.id
    }

    pub fn certificate(&self) -> &Certificate {
        &self.identity.certificate
    }

    pub fn modulus(&self) -> Modulus {
        self.modulus
    }

    pub fn policy(&self) -> &FreshnessPolicy {
        &self.policy
    }

    pub fn backend(&self) -> &SharedBackend {
        &self.backend
    }

    /// Runs `f` with read access to the store.
    pub fn with_store<T>(&self, f: impl FnOnce(&BankStore) -> T) -> T {
        f(&self.lock().store)
    }

    /// Consumes the bank, returning its store (for saving or inspection).
    pub fn into_store(self) -> BankStore {
        self.inner
            .into_inner()
            .expect("bank state lock poisoned")
            .store
    }

    pub fn base_polynomial(&self) -> Polynomial {
        self.lock().base
    }

    /// Assigns a fresh nonzero id, unique among every id handed out so far.
    pub fn assign_id(&self, role: Role) -> Result<EntityId, ProtocolError> {
        let mut inner = self.lock();
        let p = self.modulus.get();
        let taken = inner.store.secrets()?.assigned.len() as u64;
        if taken >= p - 1 {
            return Err(ProtocolError::IdSpaceExhausted);
        }
        let id = loop {
            let candidate = EntityId(inner.rng.gen_range(1..p));
            if !inner.store.secrets()?.assigned.contains_key(&candidate) {
                break candidate;
            }
        };
        inner.store.secrets_mut()?.assigned.insert(id, role);
        inner.store.save()?;
        Ok(id)
    }

    /// Reserves a caller-chosen id (fixtures and migrations).
    pub fn assign_specific_id(&self, id: EntityId, role: Role) -> Result<EntityId, ProtocolError> {
        let mut inner = self.lock();
        if id.0 == 0 || id.0 >= self.modulus.get() {
            return Err(ProtocolError::UnknownId(id));
        }
        let secrets = inner.store.secrets_mut()?;
        if secrets.assigned.contains_key(&id) {
            return Err(ProtocolError::AlreadyRegistered(id));
        }
        secrets.assigned.insert(id, role);
        inner.store.save()?;
        Ok(id)
    }

    fn check_assignment(&self, inner: &BankInner, id: EntityId, role: Role) -> Result<(), ProtocolError> {
        match inner.store.secrets()?.assigned.get(&id) {
            Some(r) if *r == role => Ok(()),
            _ => Err(ProtocolError::UnknownId(id)),
        }
    }

    fn check_certificate(&self, cert: &Certificate, id: EntityId, role: Role) -> Result<(), ProtocolError> {
        if cert.subject_id != id || cert.role != role || !cert.verify(&*self.backend, &self.ca_public) {
            return Err(ProtocolError::BadCertificate);
        }
        Ok(())
    }

    fn element(&self, id: EntityId) -> FieldElement {
        self.modulus.reduce(id.0)
    }

    /// Handles M2: verifies the ATM certificate and answers with M3, the
    /// ATM's share sealed under its certified public key.
    pub fn register_atm(&self, m2: &Message) -> Result<Message, ProtocolError> {
        let Message::AtmRegisterRequest {
            atm_id,
            atm_certificate,
        } = m2
        else {
            return Err(ProtocolError::UnexpectedMessage(m2.msg_type()));
        };
        let mut inner = self.lock();
        self.check_assignment(&inner, *atm_id, Role::Atm)?;
        if inner.store.atm(*atm_id).is_some() {
            return Err(ProtocolError::AlreadyRegistered(*atm_id));
        }
        self.check_certificate(atm_certificate, *atm_id, Role::Atm)?;

        let d_atm = inner.base.share_at(self.element(*atm_id));
        let sealed_d_atm = self
            .backend
            .seal(SealKey::Public(&atm_certificate.subject_public), &d_atm.to_bytes())?;
        inner.store.upsert_record(Record::Atm(AtmRecord {
            atm_id: *atm_id,
            certificate: atm_certificate.clone(),
            status: RecordStatus::Active,
        }));
        let mut body = AuditBody::new(AuditEvent::RegisterAtm);
        body.atm_id = Some(*atm_id);
        inner.store.append_audit(self.policy.now(), body)?;
        Ok(Message::AtmRegisterResponse { sealed_d_atm })
    }

    /// Handles M5 with a freshly drawn anchor value `r_user`.
    pub fn register_user(&self, m5: &Message, privileges: UserPrivileges) -> Result<Message, ProtocolError> {
        let r_user = {
            let mut inner = self.lock();
            sample_element(self.modulus, &mut inner.rng)
        };
        self.register_user_with_anchor(m5, privileges, r_user)
    }

    /// Handles M5 with a caller-supplied anchor value. `D_USER` is
    /// `(user_id, F(user_id) + r_user)`, sealed under the session key the
    /// card sent in M5; the bank keeps `(0, r_user)` and the session key.
    pub fn register_user_with_anchor(
        &self,
        m5: &Message,
        privileges: UserPrivileges,
        r_user: FieldElement,
    ) -> Result<Message, ProtocolError> {
        let Message::UserRegisterRequest {
            user_id,
            user_certificate,
            sealed_session_key,
        } = m5
        else {
            return Err(ProtocolError::UnexpectedMessage(m5.msg_type()));
        };
        let mut inner = self.lock();
        self.check_assignment(&inner, *user_id, Role::User)?;
        if inner.store.user(*user_id).is_some() {
            return Err(ProtocolError::AlreadyRegistered(*user_id));
        }
        self.check_certificate(user_certificate, *user_id, Role::User)?;
        let key_bytes = self
            .backend
            .open(OpenKey::Private(&self.identity.keypair.private), sealed_session_key)
            .map_err(|_| ProtocolError::OpenFailed)?;
        let session_key = SessionKey(key_bytes.try_into().map_err(|_| ProtocolError::OpenFailed)?);

        let d_user = inner.base.shift(r_user).share_at(self.element(*user_id));
        let sealed_d_user = self
            .backend
            .seal(SealKey::Session(&session_key), &d_user.to_bytes())?;
        inner.store.upsert_record(Record::User(UserRecord {
            user_id: *user_id,
            certificate: user_certificate.clone(),
            r_user: r_user.value(),
            session_key,
            privileges,
            status: RecordStatus::Active,
        }));
        let mut body = AuditBody::new(AuditEvent::RegisterUser);
        body.user_id = Some(*user_id);
        inner.store.append_audit(self.policy.now(), body)?;
        Ok(Message::UserRegisterResponse { sealed_d_user })
    }

    /// Answers M8 with the stored, CA-signed user certificate.
    pub fn fetch_certificate(&self, user_id: EntityId) -> Option<Certificate> {
        let inner = self.lock();
        inner
            .store
            .user(user_id)
            .filter(|u| u.status == RecordStatus::Active)
            .map(|u| u.certificate.clone())
    }

    fn open_share(&self, key: OpenKey<'_>, sealed: &crate::crypto::SealedBox) -> Option<SharePoint> {
        let raw = self.backend.open(key, sealed).ok()?;
        SharePoint::from_bytes(self.modulus, &raw).ok()
    }

    fn evaluate(&self, inner: &mut BankInner, m9: &BankAuthRequest, now: Timestamp) -> Verdict {
        let reject = |reason| Verdict {
            reason,
            evidence: Vec::new(),
        };
        let Some(user) = inner
            .store
            .user(m9.user_id)
            .filter(|u| u.status == RecordStatus::Active)
            .cloned()
        else {
            // an id never issued to a user names no key the signature could
            // belong to; UNKNOWN_USER is kept for issued ids without an
            // active record
            let issued = inner
                .store
                .secrets()
                .is_ok_and(|s| s.assigned.get(&m9.user_id) == Some(&Role::User));
            return reject(if issued {
                ReasonCode::UnknownUser
            } else {
                ReasonCode::BadSignature
            });
        };
        if inner
            .store
            .atm(m9.atm_id)
            .filter(|a| a.status == RecordStatus::Active)
            .is_none()
        {
            return reject(ReasonCode::UnknownAtm);
        }

        let signed = user_signed_bytes(m9.user_id, m9.t_s);
        if !self
            .backend
            .verify(&user.certificate.subject_public, &signed, &m9.user_signature)
        {
            return reject(ReasonCode::BadSignature);
        }
        let evidence = m9.user_signature.0.clone();
        let verdict = |reason| Verdict {
            reason,
            evidence: evidence.clone(),
        };

        match inner.replay.classify(&self.policy, m9.user_id, m9.t_s, now) {
            Freshness::Ok => {}
            Freshness::Stale => return verdict(ReasonCode::Stale),
            Freshness::Replay => return verdict(ReasonCode::Replay),
        }

        let d_user = self.open_share(OpenKey::Session(&user.session_key), &m9.sealed_d_user);
        let d_atm = self.open_share(OpenKey::Private(&self.identity.keypair.private), &m9.sealed_d_atm);
        let (Some(d_user), Some(d_atm)) = (d_user, d_atm) else {
            return verdict(ReasonCode::OpenFailed);
        };
        if d_user.x.value() != m9.user_id.0 || d_atm.x.value() != m9.atm_id.0 {
            return verdict(ReasonCode::ShareMismatch);
        }
        let r_user = self.modulus.reduce(user.r_user);
        match share::check_shares(&inner.base, r_user, d_user, d_atm) {
            Ok(check) if check.matches() => verdict(ReasonCode::Ok),
            _ => verdict(ReasonCode::ShareMismatch),
        }
    }

    /// Handles M9. Never fails: every outcome is a bank-signed M10.
    ///
    /// Order of checks: user and ATM records, the user's signature over
    /// `(user_id, t_s)`, freshness and replay, opening both shares, and the
    /// share reconstruction. The `(user_id, t_s)` pair enters the replay
    /// cache whatever the outcome.
    pub fn authenticate(&self, m9: &BankAuthRequest) -> Result<AuthDecision, ProtocolError> {
        let mut inner = self.lock();
        let now = self.policy.now();
        let Verdict { reason, evidence } = self.evaluate(&mut inner, m9, now);
        let accepted = reason == ReasonCode::Ok;

        let signed = decision_signed_bytes(m9.user_id, m9.atm_id, m9.t_s, accepted, reason);
        let bank_signature = self.backend.sign(&self.identity.keypair.private, &signed)?;

        let event = if accepted {
            AuditEvent::AuthAccept
        } else {
            AuditEvent::AuthReject(reason)
        };
        let mut body = AuditBody::new(event);
        body.user_id = Some(m9.user_id);
        body.atm_id = Some(m9.atm_id);
        body.t_s = Some(m9.t_s);
        body.evidence = evidence;
        let audit = inner.store.append_audit(now, body);

        if self.policy.is_fresh(m9.t_s, now) {
            inner.replay.insert(m9.user_id, m9.t_s);
        }
        if accepted {
            inner.open_sessions.insert((m9.user_id, m9.atm_id, m9.t_s));
        }
        audit?;
        Ok(AuthDecision {
            user_id: m9.user_id,
            atm_id: m9.atm_id,
            t_s: m9.t_s,
            accepted,
            reason,
            bank_signature,
        })
    }

    /// Authorizes a withdrawal of `amount` for a session accepted earlier.
    /// Each accepted session authorizes at most one request.
    pub fn authorize(
        &self,
        user_id: EntityId,
        atm_id: EntityId,
        t_s: Timestamp,
        amount: u64,
    ) -> Result<AuthzDecision, ProtocolError> {
        let mut inner = self.lock();
        let user = inner.store.user(user_id).cloned();
        let session_open = inner.open_sessions.remove(&(user_id, atm_id, t_s));
        let allowed = match &user {
            Some(u) => session_open && u.privileges.allows(amount),
            None => false,
        };
        let mut body = AuditBody::new(if allowed {
            AuditEvent::AuthzAllow
        } else {
            AuditEvent::AuthzDeny
        });
        body.user_id = Some(user_id);
        body.atm_id = Some(atm_id);
        body.t_s = Some(t_s);
        body.amount = Some(amount);
        inner.store.append_audit(self.policy.now(), body)?;
        if user.is_none() {
            return Err(ProtocolError::UnknownUser(user_id));
        }
        let signed = authz_signed_bytes(user_id, atm_id, t_s, amount, allowed);
        let bank_signature = self.backend.sign(&self.identity.keypair.private, &signed)?;
        Ok(AuthzDecision {
            user_id,
            atm_id,
            t_s,
            amount,
            allowed,
            bank_signature,
        })
    }

    /// Serves one request frame from an ATM; `None` means no reply is owed
    /// (undecodable or unexpected input), and the caller should hang up.
    pub fn handle_frame(&self, frame: &[u8]) -> Option<Vec<u8>> {
        let reply = match codec::decode(frame).ok()? {
            Message::CertFetch { user_id } => Message::CertFetchReply {
                user_certificate: self.fetch_certificate(user_id),
            },
            Message::BankAuthRequest(m9) => Message::AuthDecision(self.authenticate(&m9).ok()?),
            Message::AuthzRequest {
                user_id,
                atm_id,
                t_s,
                amount,
            } => Message::AuthzDecision(self.authorize(user_id, atm_id, t_s, amount).ok()?),
            _ => return None,
        };
        codec::encode(&reply).ok()
    }

    pub fn save(&self) -> Result<(), StoreError> {
        self.lock().store.save()
    }
}
