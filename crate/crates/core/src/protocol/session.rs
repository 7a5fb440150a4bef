// SPDX-License-Identifier: Apache-2.0

//! One card-at-ATM session: PIN check, M7 to the ATM, certificate fetch,
//! M9 to the bank, M10 back, and an optional withdrawal authorization.

use std::fmt;

use serde::Serialize;

use super::adversary::{Hop, Wire};
use super::atm::Atm;
use super::bank::Bank;
use super::card::Card;
use super::freshness::FreshnessPolicy;
use super::{AtmError, CardError};
use crate::codec::{self, AuthDecision, Message, ReasonCode, Timestamp};
use crate::crypto::CryptoBackend;
use crate::EntityId;

/// Round trip to the bank for one request frame.
pub trait BankLink {
    /// `Ok(None)` means the bank hung up without answering.
    fn round_trip(&mut self, frame: &[u8]) -> Result<Option<Vec<u8>>, String>;
}

/// In-process link straight into a [`Bank`].
pub struct LocalLink<'a>(pub &'a Bank);

impl BankLink for LocalLink<'_> {
    fn round_trip(&mut self, frame: &[u8]) -> Result<Option<Vec<u8>>, String> {
        Ok(self.0.handle_frame(frame))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DecidedBy {
    Card,
    Atm,
    Bank,
    Channel,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Accept,
    /// The bank's signed rejection.
    Reject(ReasonCode),
    Card(CardError),
    Atm(AtmError),
    /// A frame was dropped or the bank did not answer.
    Dropped,
    Connectivity(String),
    ScriptExhausted,
}

impl Outcome {
    /// Stable label used in reports and scenario expectations.
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Accept => "ACCEPT",
            Outcome::Reject(r) => r.name(),
            Outcome::Card(CardError::BadPin { .. }) => "BAD_PIN",
            Outcome::Card(CardError::CardLocked) => "CARD_LOCKED",
            Outcome::Card(CardError::SigningFailed) => "CARD_FAILURE",
            Outcome::Atm(AtmError::BadCertificate) => "BAD_CERTIFICATE",
            Outcome::Atm(AtmError::BadSignature) => "BAD_SIGNATURE",
            Outcome::Atm(AtmError::Stale) => "STALE",
            Outcome::Atm(AtmError::Malformed(_)) => "MALFORMED",
            Outcome::Atm(AtmError::UnexpectedDecision) => "UNEXPECTED_DECISION",
            Outcome::Atm(AtmError::Crypto(_)) => "CRYPTO_FAILURE",
            Outcome::Dropped => "DROPPED",
            Outcome::Connectivity(_) => "CONNECTIVITY",
            Outcome::ScriptExhausted => "SCRIPT_EXHAUSTED",
        }
    }

    pub fn is_accept(&self) -> bool {
        *self == Outcome::Accept
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Debug)]
pub struct SessionOutcome {
    pub outcome: Outcome,
    pub decided_by: DecidedBy,
    pub user_id: EntityId,
    pub atm_id: EntityId,
    pub t_s: Option<Timestamp>,
    /// The verified M10, when one arrived.
    pub decision: Option<AuthDecision>,
    /// `Some(allowed)` when an authorization was requested and answered.
    pub authorized: Option<bool>,
}

impl SessionOutcome {
    pub fn authz_label(&self) -> Option<&'static str> {
        self.authorized
            .map(|a| if a { "AUTHZ_ALLOW" } else { "AUTHZ_DENY" })
    }
}

/// Everything a session needs besides the channel.
pub struct SessionParams<'a> {
    pub backend: &'a dyn CryptoBackend,
    pub policy: &'a FreshnessPolicy,
    pub pin: &'a str,
    pub amount: Option<u64>,
}

enum Step {
    Frame(Vec<u8>),
    Stop(Outcome, DecidedBy),
}

fn exchange(wire: &mut dyn Wire, link: &mut dyn BankLink, frame: Vec<u8>) -> Step {
    let carried = match wire.carry(Hop::AtmToBank, frame) {
        Ok(Some(f)) => f,
        Ok(None) => return Step::Stop(Outcome::Dropped, DecidedBy::Channel),
        Err(_) => return Step::Stop(Outcome::ScriptExhausted, DecidedBy::Channel),
    };
    let reply = match link.round_trip(&carried) {
        Ok(Some(r)) => r,
        Ok(None) => return Step::Stop(Outcome::Dropped, DecidedBy::Bank),
        Err(e) => return Step::Stop(Outcome::Connectivity(e), DecidedBy::Channel),
    };
    match wire.carry(Hop::BankToAtm, reply) {
        Ok(Some(f)) => Step::Frame(f),
        Ok(None) => Step::Stop(Outcome::Dropped, DecidedBy::Channel),
        Err(_) => Step::Stop(Outcome::ScriptExhausted, DecidedBy::Channel),
    }
}

/// Runs one session. Every hop goes through `wire`; bank requests go
/// through `link`. Never panics on hostile input: each failure becomes an
/// outcome.
pub fn run_session(
    params: &SessionParams<'_>,
    card: &mut Card,
    atm: &Atm,
    wire: &mut dyn Wire,
    link: &mut dyn BankLink,
) -> SessionOutcome {
    let mut out = SessionOutcome {
        outcome: Outcome::Accept,
        decided_by: DecidedBy::Bank,
        user_id: card.user_id,
        atm_id: atm.atm_id,
        t_s: None,
        decision: None,
        authorized: None,
    };
    let stop = |mut out: SessionOutcome, outcome, by| {
        out.outcome = outcome;
        out.decided_by = by;
        out
    };
    let backend = params.backend;

    // card -> ATM
    let t_s = params.policy.now();
    let m7 = match card.begin_session(backend, params.pin, t_s) {
        Ok(m) => m,
        Err(e) => return stop(out, Outcome::Card(e), DecidedBy::Card),
    };
    let frame = match codec::encode(&Message::UserAuthRequest(m7)) {
        Ok(f) => f,
        Err(e) => return stop(out, Outcome::Atm(AtmError::Malformed(e.to_string())), DecidedBy::Card),
    };
    let frame = match wire.carry(Hop::CardToAtm, frame) {
        Ok(Some(f)) => f,
        Ok(None) => return stop(out, Outcome::Dropped, DecidedBy::Channel),
        Err(_) => return stop(out, Outcome::ScriptExhausted, DecidedBy::Channel),
    };
    let m7 = match codec::decode(&frame) {
        Ok(Message::UserAuthRequest(m)) => m,
        Ok(other) => {
            let e = AtmError::Malformed(format!("expected M7, got {}", other.msg_type().label()));
            return stop(out, Outcome::Atm(e), DecidedBy::Atm);
        }
        Err(e) => return stop(out, Outcome::Atm(AtmError::Malformed(e.to_string())), DecidedBy::Atm),
    };
    // the ATM now acts on what it received
    out.user_id = m7.user_id;
    out.t_s = Some(m7.t_s);

    // certificate fetch, every session, so the hop sequence is fixed
    let m8 = Message::CertFetch { user_id: m7.user_id };
    let frame = codec::encode(&m8).expect("M8 always encodes");
    let reply = match exchange(wire, link, frame) {
        Step::Frame(f) => f,
        Step::Stop(o, by) => return stop(out, o, by),
    };
    let cert = match codec::decode(&reply) {
        Ok(Message::CertFetchReply { user_certificate }) => user_certificate,
        Ok(_) => return stop(out, Outcome::Atm(AtmError::Malformed("expected M8R".into())), DecidedBy::Atm),
        Err(e) => return stop(out, Outcome::Atm(AtmError::Malformed(e.to_string())), DecidedBy::Atm),
    };
    // without a certificate for the claimed id the signature cannot verify
    let Some(cert) = cert else {
        return stop(out, Outcome::Atm(AtmError::BadSignature), DecidedBy::Atm);
    };

    // ATM checks, then M9 -> bank -> M10
    let m9 = match atm.handle_user(backend, &m7, &cert, params.policy) {
        Ok(m) => m,
        Err(e) => return stop(out, Outcome::Atm(e), DecidedBy::Atm),
    };
    let frame = match codec::encode(&Message::BankAuthRequest(m9)) {
        Ok(f) => f,
        Err(e) => return stop(out, Outcome::Atm(AtmError::Malformed(e.to_string())), DecidedBy::Atm),
    };
    let reply = match exchange(wire, link, frame) {
        Step::Frame(f) => f,
        Step::Stop(o, by) => return stop(out, o, by),
    };
    let decision = match atm.verify_decision(backend, &reply, m7.user_id, m7.t_s) {
        Ok(d) => d,
        Err(e) => return stop(out, Outcome::Atm(e), DecidedBy::Atm),
    };
    out.decision = Some(decision.clone());
    if !decision.accepted {
        return stop(out, Outcome::Reject(decision.reason), DecidedBy::Bank);
    }

    // optional withdrawal authorization
    if let Some(amount) = params.amount {
        let az = Message::AuthzRequest {
            user_id: m7.user_id,
            atm_id: atm.atm_id,
            t_s: m7.t_s,
            amount,
        };
        let frame = codec::encode(&az).expect("authorization requests always encode");
        let reply = match exchange(wire, link, frame) {
            Step::Frame(f) => f,
            Step::Stop(o, by) => return stop(out, o, by),
        };
        match atm.verify_authz(backend, &reply, m7.user_id, m7.t_s, amount) {
            Ok(d) => out.authorized = Some(d.allowed),
            Err(e) => return stop(out, Outcome::Atm(e), DecidedBy::Atm),
        }
    }
    stop(out, Outcome::Accept, DecidedBy::Bank)
}
