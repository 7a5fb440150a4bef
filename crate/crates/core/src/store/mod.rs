// SPDX-License-Identifier: Apache-2.0

//! The bank's persistent state: ATM and user records, the secret base
//! polynomial and id registry, and the audit log, kept in one encrypted
//! image file.
//!
//! Image layout:
//!
//! ```text
//! "SFST" | 0x01 | key check (16) | u32 len | records blob | u32 len | secrets blob
//!        | audit region ... | SHA-256 of everything before (32)
//! ```
//!
//! Both blobs are ChaCha20-Poly1305 sealed under the storage key. The key
//! check lets a wrong key be told apart from a damaged file. Saves write a
//! temporary file and rename it over the image.

pub mod audit;

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::rngs::OsRng;
use rand::RngCore;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use audit::{AuditBody, AuditEvent, AuditLog, AuditRecord, ChainStatus, GENESIS_HASH};

use crate::codec::bytes::{Reader, Writer};
use crate::codec::Timestamp;
use crate::crypto::{self, Certificate, Role, SessionKey};
use crate::EntityId;

pub const STORE_MAGIC: [u8; 4] = *b"SFST";
pub const STORE_VERSION: u8 = 0x01;
const KEY_CHECK_LEN: usize = 16;
const TRAILER_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage key does not match this image")]
    WrongKey,
    #[error("store image is corrupt: {0}")]
    CorruptImage(String),
    #[error("no record for id {0}")]
    NotFound(EntityId),
    #[error("store is locked by another writer")]
    Locked,
    #[error("store has not been initialized")]
    NotInitialized,
    #[error("storage failure: {0}")]
    StorageFailure(#[from] std::io::Error),
}

/// Symmetric key protecting the image at rest.
#[derive(Clone)]
pub struct StorageKey(pub [u8; 32]);

impl StorageKey {
    /// Derives the storage key from the bank's master secret.
    pub fn from_master_secret(secret: &[u8]) -> Self {
        StorageKey(crypto::derive_key(secret, "bank-store"))
    }

    fn check_value(&self) -> [u8; KEY_CHECK_LEN] {
        let mut h = Sha256::new();
        h.update(b"sfamss-store-key-check");
        h.update(self.0);
        h.finalize()[..KEY_CHECK_LEN].try_into().expect("16 bytes")
    }
}

impl std::fmt::Debug for StorageKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("StorageKey(..)")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecordStatus {
    Active,
    Locked,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserPrivileges {
    /// Largest withdrawal allowed, in currency minor units.
    pub withdrawal_limit: u64,
}

impl UserPrivileges {
    pub fn allows(&self, amount: u64) -> bool {
        amount <= self.withdrawal_limit
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: EntityId,
    pub certificate: Certificate,
    /// The bank's anchor share is `(0, r_user)`.
    pub r_user: u64,
    pub session_key: SessionKey,
    pub privileges: UserPrivileges,
    pub status: RecordStatus,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtmRecord {
    pub atm_id: EntityId,
    pub certificate: Certificate,
    pub status: RecordStatus,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Record {
    User(UserRecord),
    Atm(AtmRecord),
}

/// Secret deployment material: the base polynomial and every assigned id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankSecrets {
    pub modulus: u64,
    pub base_coeffs: [u64; 3],
    pub assigned: BTreeMap<EntityId, Role>,
}

#[derive(Serialize, Deserialize)]
struct RecordsImage {
    users: Vec<UserRecord>,
    atms: Vec<AtmRecord>,
    audit_len: u64,
    audit_head: [u8; 32],
}

/// An open store. Writers hold an advisory lock on `<image>.lock`.
#[derive(Debug)]
pub struct BankStore {
    path: Option<PathBuf>,
    key: StorageKey,
    users: BTreeMap<EntityId, UserRecord>,
    atms: BTreeMap<EntityId, AtmRecord>,
    secrets: Option<BankSecrets>,
    audit: AuditLog,
    anchored_len: u64,
    anchored_head: [u8; 32],
    _lock: Option<File>,
}

fn seal_blob<T: Serialize>(key: &StorageKey, label: &[u8], value: &T) -> Vec<u8> {
    let plaintext = serde_json::to_vec(value).expect("store records serialize");
    let mut nonce = [0u8; 12];
    OsRng.fill_bytes(&mut nonce);
    crypto::seal_with_nonce(&key.0, &nonce, &plaintext, label)
}

fn open_blob<T: DeserializeOwned>(key: &StorageKey, label: &[u8], blob: &[u8]) -> Result<T, StoreError> {
    let plaintext = crypto::open_with_aad(&key.0, blob, label)
        .map_err(|_| StoreError::CorruptImage(format!("{} blob fails authentication", String::from_utf8_lossy(label))))?;
    serde_json::from_slice(&plaintext).map_err(|e| StoreError::CorruptImage(e.to_string()))
}

struct ParsedImage<'a> {
    key_check: [u8; KEY_CHECK_LEN],
    records: &'a [u8],
    secrets: &'a [u8],
    audit_region: &'a [u8],
    trailer_ok: bool,
}

fn parse_image(bytes: &[u8]) -> Result<ParsedImage<'_>, StoreError> {
    let corrupt = |why: &str| StoreError::CorruptImage(why.to_string());
    if bytes.len() < STORE_MAGIC.len() + 1 + KEY_CHECK_LEN + TRAILER_LEN {
        return Err(corrupt("image too short"));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - TRAILER_LEN);
    let trailer_ok = Sha256::digest(body).as_slice() == trailer;
    let mut r = Reader::new(body);
    if r.array::<4>().map_err(|_| corrupt("header"))? != STORE_MAGIC {
        return Err(corrupt("bad magic"));
    }
    if r.u8().map_err(|_| corrupt("header"))? != STORE_VERSION {
        return Err(corrupt("unsupported version"));
    }
    let key_check = r.array::<KEY_CHECK_LEN>().map_err(|_| corrupt("header"))?;
    let records = r.bytes().map_err(|_| corrupt("records blob framing"))?;
    let secrets = r.bytes().map_err(|_| corrupt("secrets blob framing"))?;
    let audit_region = &body[r.position()..];
    Ok(ParsedImage {
        key_check,
        records,
        secrets,
        audit_region,
        trailer_ok,
    })
}

fn lock_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".lock");
    PathBuf::from(name)
}

impl BankStore {
    /// A store that lives only in memory; `save` is a no-op.
    pub fn in_memory(key: StorageKey) -> Self {
        BankStore {
            path: None,
            key,
            users: BTreeMap::new(),
            atms: BTreeMap::new(),
            secrets: None,
            audit: AuditLog::default(),
            anchored_len: 0,
            anchored_head: GENESIS_HASH,
            _lock: None,
        }
    }

    /// Opens the image at `path`, or starts an empty store if it does not
    /// exist yet. Fails with `WrongKey` or `CorruptImage` on bad images,
    /// including any break in the audit chain.
    pub fn open(path: &Path, key: StorageKey) -> Result<Self, StoreError> {
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(lock_path(path))?;
        match lock.try_lock() {
            Ok(()) => {}
            Err(fs::TryLockError::WouldBlock) => return Err(StoreError::Locked),
            Err(fs::TryLockError::Error(e)) => return Err(e.into()),
        }

        let mut store = BankStore::in_memory(key);
        store.path = Some(path.to_path_buf());
        store._lock = Some(lock);
        if !path.exists() {
            return Ok(store);
        }
        let bytes = fs::read(path)?;
        let image = parse_image(&bytes)?;
        if !image.trailer_ok {
            return Err(StoreError::CorruptImage("image digest mismatch".into()));
        }
        if image.key_check != store.key.check_value() {
            return Err(StoreError::WrongKey);
        }
        store.load_blobs(&image)?;
        if let ChainStatus::BrokenAt(seq) = store.verify_audit_chain() {
            return Err(StoreError::CorruptImage(format!("audit chain broken at {seq}")));
        }
        Ok(store)
    }

    /// Forensic load: reads records and audit log without checking the
    /// image digest or the audit chain, and without taking the writer lock.
    /// Use with [`BankStore::verify_audit_chain`] to locate tampering.
    pub fn inspect(path: &Path, key: StorageKey) -> Result<Self, StoreError> {
        let bytes = fs::read(path)?;
        let image = parse_image(&bytes)?;
        let mut store = BankStore::in_memory(key);
        if image.key_check != store.key.check_value() {
            return Err(StoreError::WrongKey);
        }
        store.load_blobs(&image)?;
        Ok(store)
    }

    fn load_blobs(&mut self, image: &ParsedImage<'_>) -> Result<(), StoreError> {
        let records: RecordsImage = open_blob(&self.key, b"records", image.records)?;
        let secrets: Option<BankSecrets> = open_blob(&self.key, b"secrets", image.secrets)?;
        self.users = records.users.into_iter().map(|u| (u.user_id, u)).collect();
        self.atms = records.atms.into_iter().map(|a| (a.atm_id, a)).collect();
        self.anchored_len = records.audit_len;
        self.anchored_head = records.audit_head;
        self.secrets = secrets;
        self.audit = AuditLog::from_region(image.audit_region);
        Ok(())
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn to_image(&self) -> Vec<u8> {
        let records = RecordsImage {
            users: self.users.values().cloned().collect(),
            atms: self.atms.values().cloned().collect(),
            audit_len: self.anchored_len,
            audit_head: self.anchored_head,
        };
        let mut w = Writer::new();
        w.raw(&STORE_MAGIC)
            .u8(STORE_VERSION)
            .raw(&self.key.check_value());
        w.bytes(&seal_blob(&self.key, b"records", &records))
            .expect("records fit the blob cap");
        w.bytes(&seal_blob(&self.key, b"secrets", &self.secrets))
            .expect("secrets fit the blob cap");
        w.raw(&self.audit.to_region());
        let mut out = w.into_inner();
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    /// Atomically replaces the image on disk (temp file, fsync, rename).
    pub fn save(&self) -> Result<(), StoreError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let image = self.to_image();
        let mut tmp_name = path.as_os_str().to_owned();
        tmp_name.push(".tmp");
        let tmp = PathBuf::from(tmp_name);
        {
            let mut f = File::create(&tmp)?;
            f.write_all(&image)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn secrets(&self) -> Result<&BankSecrets, StoreError> {
        self.secrets.as_ref().ok_or(StoreError::NotInitialized)
    }

    pub fn secrets_mut(&mut self) -> Result<&mut BankSecrets, StoreError> {
        self.secrets.as_mut().ok_or(StoreError::NotInitialized)
    }

    pub fn set_secrets(&mut self, secrets: BankSecrets) {
        self.secrets = Some(secrets);
    }

    pub fn upsert_record(&mut self, record: Record) {
        match record {
            Record::User(u) => {
                self.users.insert(u.user_id, u);
            }
            Record::Atm(a) => {
                self.atms.insert(a.atm_id, a);
            }
        }
    }

    pub fn get_record(&self, id: EntityId) -> Result<Record, StoreError> {
        if let Some(u) = self.users.get(&id) {
            return Ok(Record::User(u.clone()));
        }
        if let Some(a) = self.atms.get(&id) {
            return Ok(Record::Atm(a.clone()));
        }
        Err(StoreError::NotFound(id))
    }

    pub fn user(&self, id: EntityId) -> Option<&UserRecord> {
        self.users.get(&id)
    }

    pub fn atm(&self, id: EntityId) -> Option<&AtmRecord> {
        self.atms.get(&id)
    }

    pub fn users(&self) -> impl Iterator<Item = &UserRecord> {
        self.users.values()
    }

    pub fn atms(&self) -> impl Iterator<Item = &AtmRecord> {
        self.atms.values()
    }

    /// Appends one audit entry and persists the whole image before returning.
    pub fn append_audit(&mut self, timestamp: Timestamp, body: AuditBody) -> Result<AuditRecord, StoreError> {
        let record = self.audit.append(&self.key.0, timestamp, &body);
        self.anchored_len = self.audit.len() as u64;
        self.anchored_head = self.audit.head_hash();
        self.save()?;
        Ok(record)
    }

    pub fn audit_len(&self) -> usize {
        self.audit.len()
    }

    pub fn verify_audit_chain(&self) -> ChainStatus {
        self.audit.verify_chain(self.anchored_len, &self.anchored_head)
    }

    pub fn read_audit(&self) -> Result<Vec<AuditRecord>, StoreError> {
        self.audit.decrypt_all(&self.key.0)
    }

    /// Byte range of the audit region within [`BankStore::to_image`] output.
    pub fn audit_region_range(image: &[u8]) -> Result<std::ops::Range<usize>, StoreError> {
        let parsed = parse_image(image)?;
        let start = parsed.audit_region.as_ptr() as usize - image.as_ptr() as usize;
        Ok(start..start + parsed.audit_region.len())
    }
}
