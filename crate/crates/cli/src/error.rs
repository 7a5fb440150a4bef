// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use thiserror::Error;

use sfamss::codec::transport::TransportError;
use sfamss::crypto::CryptoError;
use sfamss::protocol::ProtocolError;
use sfamss::store::StoreError;

/// Process exit codes, shared by every subcommand.
pub mod exit {
    pub const EXPECTED: i32 = 0;
    pub const REJECTED: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const CONNECTIVITY: i32 = 3;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("directory {0} is not empty")]
    DirNotEmpty(PathBuf),
    #[error("no deployment at {0} (run `sfamss init` first)")]
    NotInitialized(PathBuf),
    #[error("config checksum mismatch in {0}")]
    ConfigTampered(PathBuf),
    #[error("{0} belongs to a different deployment")]
    ForeignFile(PathBuf),
    #[error("registering a user needs --pin")]
    PinRequired,
    #[error("unknown attack {0:?} (expected replay, tamper, impersonate, eavesdrop or stale)")]
    UnknownAttack(String),
    #[error("{file}:{line}: {msg}")]
    Parse { file: String, line: usize, msg: String },
    #[error("{0}")]
    Usage(String),
    #[error("cannot reach bank at {addr}: {reason}")]
    ConnectionFailed { addr: String, reason: String },
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error("bad file {path}: {reason}")]
    BadFile { path: PathBuf, reason: String },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::DirNotEmpty(_)
            | CliError::NotInitialized(_)
            | CliError::PinRequired
            | CliError::UnknownAttack(_)
            | CliError::Parse { .. }
            | CliError::Usage(_) => exit::USAGE,
            CliError::ConnectionFailed { .. } | CliError::PortInUse(_) | CliError::Transport(_) => {
                exit::CONNECTIVITY
            }
            _ => exit::REJECTED,
        }
    }

    pub fn bad_file(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        CliError::BadFile {
            path: path.into(),
            reason: reason.to_string(),
        }
    }
}
