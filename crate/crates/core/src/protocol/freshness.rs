// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::codec::Timestamp;
use crate::EntityId;

/// Source of "now" in milliseconds since the Unix epoch.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> Timestamp;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> Timestamp {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// A clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start_ms: Timestamp) -> Self {
        ManualClock(AtomicU64::new(start_ms))
    }

    pub fn set(&self, ms: Timestamp) {
        self.0.store(ms, Ordering::SeqCst);
    }

    pub fn advance(&self, ms: u64) -> Timestamp {
        self.0.fetch_add(ms, Ordering::SeqCst) + ms
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> Timestamp {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Clone)]
pub struct FreshnessPolicy {
    window_ms: u64,
    pub clock: Arc<dyn Clock>,
}

impl FreshnessPolicy {
    pub const DEFAULT_WINDOW_MS: u64 = 30_000;

    /// Returns `None` for a zero window.
    pub fn new(window_ms: u64, clock: Arc<dyn Clock>) -> Option<Self> {
        (window_ms > 0).then_some(FreshnessPolicy { window_ms, clock })
    }

    pub fn window_ms(&self) -> u64 {
        self.window_ms
    }

    pub fn now(&self) -> Timestamp {
        self.clock.now_ms()
    }

    /// `|now - t_s| <= window`; the bound is inclusive and symmetric.
    pub fn is_fresh(&self, t_s: Timestamp, now: Timestamp) -> bool {
        now.abs_diff(t_s) <= self.window_ms
    }
}

impl std::fmt::Debug for FreshnessPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FreshnessPolicy")
            .field("window_ms", &self.window_ms)
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Freshness {
    Ok,
    Stale,
    Replay,
}

/// Remembers `(user_id, t_s)` pairs. Entries are evicted once their
/// timestamp has fallen out of the window, since a resubmission would be
/// stale by then anyway.
#[derive(Debug, Default)]
pub struct ReplayCache {
    seen: BTreeSet<(Timestamp, EntityId)>,
}

impl ReplayCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }

    fn evict(&mut self, window_ms: u64, now: Timestamp) {
        let Some(cutoff) = now.checked_sub(window_ms) else {
            return;
        };
        // keep entries with t_s >= cutoff
        self.seen = self.seen.split_off(&(cutoff, EntityId(0)));
    }

    pub fn contains(&self, user_id: EntityId, t_s: Timestamp) -> bool {
        self.seen.contains(&(t_s, user_id))
    }

    pub fn insert(&mut self, user_id: EntityId, t_s: Timestamp) {
        self.seen.insert((t_s, user_id));
    }

    /// Classifies without recording.
    pub fn classify(&mut self, policy: &FreshnessPolicy, user_id: EntityId, t_s: Timestamp, now: Timestamp) -> Freshness {
        self.evict(policy.window_ms(), now);
        if !policy.is_fresh(t_s, now) {
            Freshness::Stale
        } else if self.contains(user_id, t_s) {
            Freshness::Replay
        } else {
            Freshness::Ok
        }
    }

    /// Classifies, then records the key; the two steps are one `&mut` call.
    pub fn check_and_insert(
        &mut self,
        policy: &FreshnessPolicy,
        user_id: EntityId,
        t_s: Timestamp,
        now: Timestamp,
    ) -> Freshness {
        let verdict = self.classify(policy, user_id, t_s, now);
        if policy.is_fresh(t_s, now) {
            self.insert(user_id, t_s);
        }
        verdict
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn policy(window: u64) -> FreshnessPolicy {
        FreshnessPolicy::new(window, Arc::new(ManualClock::new(0))).unwrap()
    }

    #[test]
    fn window_bounds() {
        let p = policy(30_000);
        let mut cache = ReplayCache::new();
        let now = 1_000_000;
        let u = EntityId(9);
        assert_eq!(cache.check_and_insert(&p, u, now - 30_000, now), Freshness::Ok);
        assert_eq!(cache.check_and_insert(&p, u, now - 30_001, now), Freshness::Stale);
        assert_eq!(cache.check_and_insert(&p, u, now + 30_000, now), Freshness::Ok);
        assert_eq!(cache.check_and_insert(&p, u, now + 30_001, now), Freshness::Stale);
    }

    #[test]
    fn second_check_is_replay() {
        let p = policy(30_000);
        let mut cache = ReplayCache::new();
        assert_eq!(cache.check_and_insert(&p, EntityId(1), 500, 600), Freshness::Ok);
        assert_eq!(cache.check_and_insert(&p, EntityId(1), 500, 700), Freshness::Replay);
        assert_eq!(cache.check_and_insert(&p, EntityId(2), 500, 700), Freshness::Ok);
    }

    #[test]
    fn old_entries_are_evicted() {
        let p = policy(100);
        let mut cache = ReplayCache::new();
        cache.check_and_insert(&p, EntityId(1), 1_000, 1_000);
        cache.check_and_insert(&p, EntityId(1), 1_050, 1_050);
        assert_eq!(cache.len(), 2);
        assert_eq!(cache.classify(&p, EntityId(3), 1_120, 1_120), Freshness::Ok);
        assert_eq!(cache.len(), 1);
        // evicted keys come back as stale, never as fresh
        assert_eq!(cache.classify(&p, EntityId(1), 1_000, 1_120), Freshness::Stale);
    }

    #[test]
    fn zero_window_is_rejected() {
        assert!(FreshnessPolicy::new(0, Arc::new(SystemClock)).is_none());
    }

    #[test]
    fn manual_clock_moves_on_request() {
        let c = ManualClock::new(10);
        assert_eq!(c.now_ms(), 10);
        assert_eq!(c.advance(5), 15);
        c.set(3);
        assert_eq!(c.now_ms(), 3);
        assert!(SystemClock.now_ms() > 1_600_000_000_000);
    }
}
