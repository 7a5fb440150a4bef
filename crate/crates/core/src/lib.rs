// SPDX-License-Identifier: Apache-2.0

//! Secret-sharing based registration and authentication for an ATM network.
//!
//! A bank, its ATMs and its users' cards each hold one share of a per-user
//! quadratic polynomial over a prime field. The bank authenticates a
//! withdrawal session by interpolating the three shares and comparing the
//! result with the polynomial it issued. Shares travel sealed, requests are
//! signed and timestamped, and the bank keeps an encrypted hash-chained
//! audit log of every decision.

pub mod codec;
pub mod crypto;
pub mod protocol;
pub mod share;
pub mod store;

use std::fmt;

use serde::{Deserialize, Serialize};

/// Identifier of a bank, ATM, user or CA. ATM and user ids double as share
/// abscissas, so they are nonzero field elements.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub u64);

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
