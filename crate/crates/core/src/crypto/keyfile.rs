// SPDX-License-Identifier: Apache-2.0

//! PEM-like text armor for keys and certificates.
//!
//! ```text
//! -----BEGIN SFAMSS ed25519-x25519 ATM PRIVATE KEY-----
//! <base64, 64 columns>
//! -----END SFAMSS PRIVATE KEY-----
//! ```

use base64::engine::general_purpose::STANDARD;
use base64::Engine;

use super::{BackendKind, CryptoError, Role};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArmorKind {
    PublicKey,
    PrivateKey,
    Certificate,
}

impl ArmorKind {
    fn label(self) -> &'static str {
        match self {
            ArmorKind::PublicKey => "PUBLIC KEY",
            ArmorKind::PrivateKey => "PRIVATE KEY",
            ArmorKind::Certificate => "CERTIFICATE",
        }
    }

    fn from_label(s: &str) -> Option<Self> {
        match s {
            "PUBLIC KEY" => Some(ArmorKind::PublicKey),
            "PRIVATE KEY" => Some(ArmorKind::PrivateKey),
            "CERTIFICATE" => Some(ArmorKind::Certificate),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Armored {
    pub backend: BackendKind,
    pub role: Role,
    pub kind: ArmorKind,
    pub bytes: Vec<u8>,
}

fn parse_role(s: &str) -> Option<Role> {
    [Role::Bank, Role::Atm, Role::User, Role::Ca]
        .into_iter()
        .find(|r| r.name() == s)
}

pub fn encode(backend: BackendKind, role: Role, kind: ArmorKind, bytes: &[u8]) -> String {
    let body = STANDARD.encode(bytes);
    let mut out = format!(
        "-----BEGIN SFAMSS {} {} {}-----\n",
        backend.name(),
        role.name(),
        kind.label()
    );
    for chunk in body.as_bytes().chunks(64) {
        out.push_str(std::str::from_utf8(chunk).expect("base64 is ascii"));
        out.push('\n');
    }
    out.push_str(&format!("-----END SFAMSS {}-----\n", kind.label()));
    out
}

pub fn decode(text: &str) -> Result<Armored, CryptoError> {
    let bad = |why: &str| CryptoError::BadKeyFile(why.to_string());
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let header = lines.next().ok_or_else(|| bad("empty"))?;
    let inner = header
        .strip_prefix("-----BEGIN SFAMSS ")
        .and_then(|h| h.strip_suffix("-----"))
        .ok_or_else(|| bad("missing header"))?;
    let mut parts = inner.splitn(3, ' ');
    let backend: BackendKind = parts.next().ok_or_else(|| bad("no backend"))?.parse()?;
    let role = parts.next().and_then(parse_role).ok_or_else(|| bad("bad role"))?;
    let kind = parts
        .next()
        .and_then(ArmorKind::from_label)
        .ok_or_else(|| bad("bad kind"))?;

    let footer = format!("-----END SFAMSS {}-----", kind.label());
    let mut body = String::new();
    let mut closed = false;
    for line in lines {
        if line == footer {
            closed = true;
            break;
        }
        body.push_str(line);
    }
    if !closed {
        return Err(bad("missing footer"));
    }
    let bytes = STANDARD.decode(body).map_err(|e| bad(&e.to_string()))?;
    Ok(Armored {
        backend,
        role,
        kind,
        bytes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let bytes: Vec<u8> = (0..=255u8).collect();
        let text = encode(BackendKind::Rsa2048, Role::Atm, ArmorKind::PrivateKey, &bytes);
        assert!(text.starts_with("-----BEGIN SFAMSS rsa-2048 ATM PRIVATE KEY-----\n"));
        let got = decode(&text).unwrap();
        assert_eq!(got.bytes, bytes);
        assert_eq!(got.role, Role::Atm);
        assert_eq!(got.kind, ArmorKind::PrivateKey);
        assert_eq!(got.backend, BackendKind::Rsa2048);
    }

    #[test]
    fn rejects_malformed() {
        assert!(decode("").is_err());
        assert!(decode("-----BEGIN SFAMSS rsa-2048 ATM PRIVATE KEY-----\nAAAA\n").is_err());
        assert!(decode("-----BEGIN SFAMSS dsa ATM PRIVATE KEY-----\n-----END SFAMSS PRIVATE KEY-----").is_err());
        assert!(decode("-----BEGIN SFAMSS rsa-2048 ATM PRIVATE KEY-----\n!!!\n-----END SFAMSS PRIVATE KEY-----").is_err());
    }
}
