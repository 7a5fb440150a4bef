// SPDX-License-Identifier: Apache-2.0

//! A scriptable man-in-the-middle sitting on every hop of a session.
//!
//! Each frame that crosses a hop consumes the next scripted action. The
//! adversary records every frame it sees, and the record survives across
//! sessions, so a later session can replay frames captured from an earlier
//! one.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::freshness::Clock;
use crate::codec::Timestamp;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hop {
    CardToAtm,
    AtmToBank,
    BankToAtm,
}

impl Hop {
    pub fn name(self) -> &'static str {
        match self {
            Hop::CardToAtm => "card->atm",
            Hop::AtmToBank => "atm->bank",
            Hop::BankToAtm => "bank->atm",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Deliver,
    Drop,
    /// Deliver a previously captured frame (by transcript index) instead.
    Replay(usize),
    /// XOR one byte of the frame; offsets past the end leave it unchanged.
    Tamper { offset: usize, mask: u8 },
    /// Deliver these bytes instead.
    Inject(Vec<u8>),
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Deliver => f.write_str("deliver"),
            Action::Drop => f.write_str("drop"),
            Action::Replay(i) => write!(f, "replay {i}"),
            Action::Tamper { offset, mask } => write!(f, "tamper {offset} 0x{mask:02x}"),
            Action::Inject(b) => write!(f, "inject {} bytes", b.len()),
        }
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("channel script exhausted at frame {0}")]
pub struct ScriptExhausted(pub usize);

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ChannelScript {
    actions: VecDeque<Action>,
    /// When set, running out of actions is an error instead of `Deliver`.
    pub strict: bool,
}

impl ChannelScript {
    pub fn new(actions: impl IntoIterator<Item = Action>) -> Self {
        ChannelScript {
            actions: actions.into_iter().collect(),
            strict: false,
        }
    }

    pub fn strict(actions: impl IntoIterator<Item = Action>) -> Self {
        ChannelScript {
            strict: true,
            ..Self::new(actions)
        }
    }

    pub fn deliver_all() -> Self {
        Self::default()
    }

    pub fn push(&mut self, action: Action) {
        self.actions.push_back(action);
    }

    pub fn remaining(&self) -> usize {
        self.actions.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub hop: Hop,
    /// The frame as the sender emitted it.
    pub bytes: Vec<u8>,
    /// What the receiver got, if anything.
    pub delivered: Option<Vec<u8>>,
    pub at: Timestamp,
    pub action: Action,
}

/// Append-only record of every frame the adversary handled.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Transcript {
    entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Index of the first captured frame on `hop` satisfying `pred`.
    pub fn find(&self, hop: Hop, pred: impl Fn(&[u8]) -> bool) -> Option<usize> {
        self.entries.iter().position(|e| e.hop == hop && pred(&e.bytes))
    }

    /// True if `needle` occurs in any sent or delivered frame.
    pub fn contains(&self, needle: &[u8]) -> bool {
        let hit = |hay: &[u8]| !needle.is_empty() && hay.windows(needle.len()).any(|w| w == needle);
        self.entries
            .iter()
            .any(|e| hit(&e.bytes) || e.delivered.as_deref().is_some_and(hit))
    }

    /// SHA-256 over hop names and frames, hex encoded.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for e in &self.entries {
            h.update(e.hop.name().as_bytes());
            h.update((e.bytes.len() as u64).to_be_bytes());
            h.update(&e.bytes);
            match &e.delivered {
                Some(d) => {
                    h.update([1]);
                    h.update((d.len() as u64).to_be_bytes());
                    h.update(d);
                }
                None => h.update([0]),
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Carries frames across one hop of a session.
pub trait Wire {
    /// Returns the frame the receiver sees, or `None` if it was dropped.
    fn carry(&mut self, hop: Hop, frame: Vec<u8>) -> Result<Option<Vec<u8>>, ScriptExhausted>;
}

/// A faithful channel.
#[derive(Clone, Copy, Debug, Default)]
pub struct Direct;

impl Wire for Direct {
    fn carry(&mut self, _hop: Hop, frame: Vec<u8>) -> Result<Option<Vec<u8>>, ScriptExhausted> {
        Ok(Some(frame))
    }
}

pub struct Adversary {
    script: ChannelScript,
    transcript: Transcript,
    clock: Arc<dyn Clock>,
}

impl Adversary {
    pub fn new(script: ChannelScript, clock: Arc<dyn Clock>) -> Self {
        Adversary {
            script,
            transcript: Transcript::default(),
            clock,
        }
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    /// Replaces the remaining script; the transcript is kept.
    pub fn set_script(&mut self, script: ChannelScript) {
        self.script = script;
    }

    pub fn script(&self) -> &ChannelScript {
        &self.script
    }
}

impl Wire for Adversary {
    fn carry(&mut self, hop: Hop, frame: Vec<u8>) -> Result<Option<Vec<u8>>, ScriptExhausted> {
        let action = match self.script.actions.pop_front() {
            Some(a) => a,
            None if self.script.strict => return Err(ScriptExhausted(self.transcript.len())),
            None => Action::Deliver,
        };
        let delivered = match &action {
            Action::Deliver => Some(frame.clone()),
            Action::Drop => None,
            Action::Replay(i) => Some(
                self.transcript
                    .entries
                    .get(*i)
                    .map(|e| e.bytes.clone())
                    .unwrap_or_else(|| frame.clone()),
            ),
            Action::Tamper { offset, mask } => {
                let mut out = frame.clone();
                if let Some(b) = out.get_mut(*offset) {
                    *b ^= mask;
                }
                Some(out)
            }
            Action::Inject(bytes) => Some(bytes.clone()),
        };
        self.transcript.entries.push(TranscriptEntry {
            hop,
            bytes: frame,
            delivered: delivered.clone(),
            at: self.clock.now_ms(),
            action,
        });
        Ok(delivered)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::ManualClock;

    fn adversary(actions: Vec<Action>) -> Adversary {
        Adversary::new(ChannelScript::new(actions), Arc::new(ManualClock::new(5)))
    }

    #[test]
    fn actions_apply_in_order() {
        let mut adv = adversary(vec![
            Action::Deliver,
            Action::Tamper { offset: 1, mask: 0xFF },
            Action::Drop,
            Action::Replay(0),
            Action::Inject(vec![9, 9]),
        ]);
        assert_eq!(adv.carry(Hop::CardToAtm, vec![1, 2]).unwrap(), Some(vec![1, 2]));
        assert_eq!(adv.carry(Hop::AtmToBank, vec![1, 2]).unwrap(), Some(vec![1, 0xFD]));
        assert_eq!(adv.carry(Hop::BankToAtm, vec![3]).unwrap(), None);
        assert_eq!(adv.carry(Hop::CardToAtm, vec![4]).unwrap(), Some(vec![1, 2]));
        assert_eq!(adv.carry(Hop::CardToAtm, vec![4]).unwrap(), Some(vec![9, 9]));
        // trailing default
        assert_eq!(adv.carry(Hop::CardToAtm, vec![7]).unwrap(), Some(vec![7]));
        assert_eq!(adv.transcript().len(), 6);
        assert_eq!(adv.transcript().entries()[0].at, 5);
    }

    #[test]
    fn strict_script_runs_out() {
        let mut adv = Adversary::new(ChannelScript::strict([Action::Deliver]), Arc::new(ManualClock::new(0)));
        adv.carry(Hop::CardToAtm, vec![1]).unwrap();
        assert_eq!(adv.carry(Hop::CardToAtm, vec![1]), Err(ScriptExhausted(1)));
    }

    #[test]
    fn search_and_digest() {
        let mut adv = adversary(vec![]);
        adv.carry(Hop::CardToAtm, b"hello world".to_vec()).unwrap();
        assert!(adv.transcript().contains(b"o w"));
        assert!(!adv.transcript().contains(b"xyz"));
        assert_eq!(adv.transcript().find(Hop::CardToAtm, |b| b[0] == b'h'), Some(0));
        let d1 = adv.transcript().digest();
        adv.carry(Hop::AtmToBank, vec![]).unwrap();
        assert_ne!(d1, adv.transcript().digest());
        assert_eq!(d1.len(), 64);
    }
}
