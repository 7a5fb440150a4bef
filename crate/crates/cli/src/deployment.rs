// SPDX-License-Identifier: Apache-2.0

//! On-disk deployment layout.
//!
//! ```text
//! <dir>/config.json          shared settings plus a checksum over them
//! <dir>/ca/ca.key, ca.cert   deployment CA
//! <dir>/bank/bank.key, bank.cert, master.key, store.sfst
//! <dir>/atms/atm-<id>.json   ATM state files
//! <dir>/cards/card-<id>.json user cards
//! ```
//!
//! ATM and card files carry the config checksum, so files from another
//! deployment are refused.

use std::fs;
use std::path::{Path, PathBuf};

use rand::rngs::OsRng;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sfamss::codec::transport::DEFAULT_PORT;
use sfamss::crypto::keyfile::{self, ArmorKind};
use sfamss::crypto::{backend_for, BackendKind, Certificate, CertificateAuthority, KeyPair, Role, SharedBackend};
use sfamss::protocol::{initialize_secrets, Atm, Bank, BankIdentity, Card, FreshnessPolicy, Network};
use sfamss::share::Modulus;
use sfamss::store::{BankStore, StorageKey, UserPrivileges};
use sfamss::EntityId;

use crate::error::CliError;

pub const DEFAULT_LIMIT: u64 = 50_000;

/// Settings every party in a deployment agrees on.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Settings {
    pub backend: BackendKind,
    pub modulus: u64,
    pub window_ms: u64,
    pub address: String,
    /// Set for reproducible deployments; implies the seeded backend.
    pub seed: Option<u64>,
}

impl Settings {
    pub fn checksum(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("settings serialize");
        hex(&Sha256::digest(canonical))
    }
}

#[derive(Serialize, Deserialize)]
struct ConfigFile {
    checksum: String,
    settings: Settings,
}

/// ATM and card files wrap their payload with the deployment checksum.
#[derive(Serialize, Deserialize)]
struct Stamped<T> {
    deployment: String,
    #[serde(flatten)]
    payload: T,
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unhex(s: &str) -> Option<Vec<u8>> {
    let s = s.trim();
    if !s.len().is_multiple_of(2) {
        return None;
    }
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(s.get(i..i + 2)?, 16).ok())
        .collect()
}

/// Mixes a deployment seed with a per-use salt, so seeded runs stay
/// reproducible without reusing one random stream for different purposes.
pub fn mix(seed: u64, salt: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_be_bytes());
    h.update(salt.to_be_bytes());
    u64::from_be_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

pub struct InitOptions {
    pub backend: BackendKind,
    pub modulus: u64,
    pub window_ms: u64,
    pub port: u16,
    pub seed: Option<u64>,
}

impl Default for InitOptions {
    fn default() -> Self {
        InitOptions {
            backend: BackendKind::Rsa2048,
            modulus: sfamss::share::MERSENNE_61,
            window_ms: FreshnessPolicy::DEFAULT_WINDOW_MS,
            port: DEFAULT_PORT,
            seed: None,
        }
    }
}

pub struct Deployment {
    dir: PathBuf,
    pub settings: Settings,
}

impl Deployment {
    fn config_path(dir: &Path) -> PathBuf {
        dir.join("config.json")
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn store_path(&self) -> PathBuf {
        self.dir.join("bank/store.sfst")
    }

    pub fn atm_path(&self, id: EntityId) -> PathBuf {
        self.dir.join(format!("atms/atm-{id}.json"))
    }

    pub fn card_path(&self, id: EntityId) -> PathBuf {
        self.dir.join(format!("cards/card-{id}.json"))
    }

    pub fn modulus(&self) -> Result<Modulus, CliError> {
        Modulus::new(self.settings.modulus).map_err(|e| CliError::Usage(e.to_string()))
    }

    /// The seeded backend when the deployment has a seed, else the
    /// configured one.
    pub fn backend(&self, salt: u64) -> Result<SharedBackend, CliError> {
        Ok(match self.settings.seed {
            Some(seed) => backend_for(BackendKind::Curve25519, Some(mix(seed, salt)))?,
            None => backend_for(self.settings.backend, None)?,
        })
    }

    fn rng(&self, salt: u64) -> Box<dyn RngCore + Send> {
        match self.settings.seed {
            Some(seed) => Box::new(ChaCha20Rng::seed_from_u64(mix(seed, salt ^ 0x5eed))),
            None => Box::new(ChaCha20Rng::from_rng(OsRng).expect("OS entropy")),
        }
    }

    pub fn policy(&self, clock: std::sync::Arc<dyn sfamss::protocol::Clock>) -> Result<FreshnessPolicy, CliError> {
        FreshnessPolicy::new(self.settings.window_ms, clock)
            .ok_or_else(|| CliError::Usage("freshness window must be positive".into()))
    }

    pub fn init(dir: &Path, opts: InitOptions) -> Result<Deployment, CliError> {
        if dir.exists() && fs::read_dir(dir)?.next().is_some() {
            return Err(CliError::DirNotEmpty(dir.to_path_buf()));
        }
        Modulus::new(opts.modulus).map_err(|e| CliError::Usage(e.to_string()))?;
        if opts.window_ms == 0 {
            return Err(CliError::Usage("freshness window must be positive".into()));
        }
        let settings = Settings {
            backend: if opts.seed.is_some() {
                BackendKind::Curve25519
            } else {
                opts.backend
            },
            modulus: opts.modulus,
            window_ms: opts.window_ms,
            address: format!("127.0.0.1:{}", opts.port),
            seed: opts.seed,
        };
        for sub in ["ca", "bank", "atms", "cards"] {
            fs::create_dir_all(dir.join(sub))?;
        }
        let dep = Deployment {
            dir: dir.to_path_buf(),
            settings,
        };
        let config = ConfigFile {
            checksum: dep.settings.checksum(),
            settings: dep.settings.clone(),
        };
        write_private(
            &Self::config_path(dir),
            &serde_json::to_vec_pretty(&config).expect("config serializes"),
        )?;

        let backend = dep.backend(0)?;
        let ca = CertificateAuthority::bootstrap(&*backend)?;
        dep.write_keypair("ca/ca", Role::Ca, &ca.keypair, &ca.certificate)?;

        let mut master = [0u8; 32];
        OsRng.fill_bytes(&mut master);
        write_private(&dep.dir.join("bank/master.key"), hex(&master).as_bytes())?;

        let mut store = BankStore::open(&dep.store_path(), StorageKey::from_master_secret(&master))?;
        let bank_id = initialize_secrets(&mut store, dep.modulus()?, &mut dep.rng(0))?;
        let keypair = backend.generate_keypair()?;
        let cert = ca.issue(&*backend, &keypair.public, bank_id, Role::Bank)?;
        dep.write_keypair("bank/bank", Role::Bank, &keypair, &cert)?;
        store.save()?;
        Ok(dep)
    }

    pub fn load(dir: &Path) -> Result<Deployment, CliError> {
        let path = Self::config_path(dir);
        let raw = fs::read(&path).map_err(|_| CliError::NotInitialized(dir.to_path_buf()))?;
        let config: ConfigFile = serde_json::from_slice(&raw).map_err(|e| CliError::bad_file(&path, e))?;
        if config.settings.checksum() != config.checksum {
            return Err(CliError::ConfigTampered(path));
        }
        Ok(Deployment {
            dir: dir.to_path_buf(),
            settings: config.settings,
        })
    }

    fn write_keypair(&self, stem: &str, role: Role, kp: &KeyPair, cert: &Certificate) -> Result<(), CliError> {
        let kind = self.backend_kind();
        let key = keyfile::encode(kind, role, ArmorKind::PrivateKey, &kp.private.0);
        let pubkey = keyfile::encode(kind, role, ArmorKind::PublicKey, &kp.public.0);
        write_private(&self.dir.join(format!("{stem}.key")), format!("{key}{pubkey}").as_bytes())?;
        let cert = keyfile::encode(kind, role, ArmorKind::Certificate, &cert.to_bytes());
        fs::write(self.dir.join(format!("{stem}.cert")), cert)?;
        Ok(())
    }

    fn backend_kind(&self) -> BackendKind {
        if self.settings.seed.is_some() {
            BackendKind::Curve25519
        } else {
            self.settings.backend
        }
    }

    fn read_keypair(&self, stem: &str) -> Result<(KeyPair, Certificate), CliError> {
        let key_path = self.dir.join(format!("{stem}.key"));
        let text = fs::read_to_string(&key_path)?;
        let mut private = None;
        let mut public = None;
        for block in split_armor(&text) {
            let a = keyfile::decode(&block).map_err(|e| CliError::bad_file(&key_path, e))?;
            if a.backend != self.backend_kind() {
                return Err(CliError::bad_file(&key_path, "key is for another backend"));
            }
            match a.kind {
                ArmorKind::PrivateKey => private = Some(a.bytes),
                ArmorKind::PublicKey => public = Some(a.bytes),
                ArmorKind::Certificate => {}
            }
        }
        let (Some(private), Some(public)) = (private, public) else {
            return Err(CliError::bad_file(&key_path, "missing key block"));
        };
        let cert_path = self.dir.join(format!("{stem}.cert"));
        let a = keyfile::decode(&fs::read_to_string(&cert_path)?).map_err(|e| CliError::bad_file(&cert_path, e))?;
        let cert = Certificate::from_bytes(&a.bytes).map_err(|e| CliError::bad_file(&cert_path, e))?;
        Ok((KeyPair::new(public, private), cert))
    }

    pub fn ca(&self) -> Result<CertificateAuthority, CliError> {
        let (keypair, certificate) = self.read_keypair("ca/ca")?;
        Ok(CertificateAuthority { keypair, certificate })
    }

    pub fn storage_key(&self) -> Result<StorageKey, CliError> {
        let path = self.dir.join("bank/master.key");
        let text = fs::read_to_string(&path)?;
        let secret = unhex(&text).ok_or_else(|| CliError::bad_file(&path, "not hex"))?;
        Ok(StorageKey::from_master_secret(&secret))
    }

    /// Opens the store (taking the writer lock) and builds the bank.
    pub fn bank(&self, backend: SharedBackend, policy: FreshnessPolicy, salt: u64) -> Result<Bank, CliError> {
        let store = BankStore::open(&self.store_path(), self.storage_key()?)?;
        let (keypair, certificate) = self.read_keypair("bank/bank")?;
        let identity = BankIdentity {
            id: certificate.subject_id,
            keypair,
            certificate,
        };
        let ca_public = self.ca()?.keypair.public;
        Ok(Bank::new(backend, identity, ca_public, store, policy, self.rng(salt))?)
    }

    /// Loads the CA and bank for an in-process registration.
    fn network(&self, policy: FreshnessPolicy) -> Result<Network, CliError> {
        // salt by the number of ids handed out so far, so each registration
        // draws fresh keys in seeded deployments
        let store = BankStore::open(&self.store_path(), self.storage_key()?)?;
        let salt = store.secrets()?.assigned.len() as u64;
        drop(store);
        let backend = self.backend(salt)?;
        let bank = self.bank(backend.clone(), policy, salt)?;
        Ok(Network {
            backend,
            ca: self.ca()?,
            bank,
        })
    }

    pub fn register_atm(&self, policy: FreshnessPolicy) -> Result<(Atm, PathBuf), CliError> {
        let net = self.network(policy)?;
        let atm = net.register_atm()?;
        let path = self.atm_path(atm.atm_id);
        self.write_stamped(&path, &atm)?;
        Ok((atm, path))
    }

    pub fn register_user(
        &self,
        policy: FreshnessPolicy,
        pin: &str,
        limit: u64,
    ) -> Result<(Card, PathBuf), CliError> {
        let net = self.network(policy)?;
        let card = net.register_user(
            pin,
            UserPrivileges {
                withdrawal_limit: limit,
            },
        )?;
        let path = self.card_path(card.user_id);
        self.write_stamped(&path, &card)?;
        Ok((card, path))
    }

    fn write_stamped<T: Serialize>(&self, path: &Path, payload: &T) -> Result<(), CliError> {
        let stamped = Stamped {
            deployment: self.settings.checksum(),
            payload,
        };
        write_private(path, &serde_json::to_vec_pretty(&stamped).expect("state serializes"))?;
        Ok(())
    }

    fn read_stamped<T: DeserializeOwned>(&self, path: &Path) -> Result<T, CliError> {
        let raw = fs::read(path).map_err(|e| CliError::bad_file(path, e))?;
        let stamped: Stamped<T> = serde_json::from_slice(&raw).map_err(|e| CliError::bad_file(path, e))?;
        if stamped.deployment != self.settings.checksum() {
            return Err(CliError::ForeignFile(path.to_path_buf()));
        }
        Ok(stamped.payload)
    }

    /// `which` is either a numeric id or a path to an ATM file.
    pub fn load_atm(&self, which: &str) -> Result<Atm, CliError> {
        let path = match which.parse::<u64>() {
            Ok(id) => self.atm_path(EntityId(id)),
            Err(_) => PathBuf::from(which),
        };
        self.read_stamped(&path)
    }

    pub fn load_card(&self, which: &str) -> Result<Card, CliError> {
        let path = match which.parse::<u64>() {
            Ok(id) => self.card_path(EntityId(id)),
            Err(_) => PathBuf::from(which),
        };
        self.read_stamped(&path)
    }
}

/// Splits concatenated armor blocks.
fn split_armor(text: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut current = String::new();
    for line in text.lines() {
        current.push_str(line);
        current.push('\n');
        if line.starts_with("-----END ") {
            blocks.push(std::mem::take(&mut current));
        }
    }
    blocks
}

fn write_private(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    fs::write(path, bytes)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        fs::set_permissions(path, fs::Permissions::from_mode(0o600))?;
    }
    Ok(())
}
