//! Binding caches kept by home agents, MAPs and correspondent nodes.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::addr::Addr;
use crate::time::{Micros, SimTime};

/// Lifetime value meaning "never expires".
pub const INFINITE: Micros = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EntryKind {
    Primary,
    /// Demoted entry kept while a handover completes.
    Previous,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BindingCacheEntry {
    pub key: Addr,
    pub coa: Addr,
    pub expires_at: SimTime,
    pub kind: EntryKind,
    /// Multicast groups recorded on behalf of the bound node.
    pub multicast_groups: BTreeSet<Addr>,
}

impl BindingCacheEntry {
    fn live(&self, now: SimTime) -> bool {
        now < self.expires_at
    }
}

#[derive(Debug, Clone, Default)]
struct Slot {
    primary: Option<BindingCacheEntry>,
    previous: Option<BindingCacheEntry>,
}

/// What an update did to the cache.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CacheChange {
    Inserted,
    Refreshed,
    Replaced { old: Addr },
    Demoted { previous: Addr },
    /// Zero lifetime: the key was removed. Carries the groups the entry held.
    Removed { groups: BTreeSet<Addr> },
    Absent,
}

#[derive(Debug, Clone)]
pub struct BindingCache {
    dual_entries: bool,
    previous_lifetime: Micros,
    slots: BTreeMap<Addr, Slot>,
}

impl BindingCache {
    pub fn new(dual_entries: bool, previous_lifetime: Micros) -> Self {
        BindingCache {
            dual_entries,
            previous_lifetime,
            slots: BTreeMap::new(),
        }
    }

    pub fn dual_entries(&self) -> bool {
        self.dual_entries
    }

    pub fn update(&mut self, now: SimTime, key: Addr, coa: Addr, lifetime: Micros) -> CacheChange {
        if lifetime == 0 {
            return match self.slots.remove(&key) {
                Some(slot) => {
                    let groups = slot
                        .primary
                        .map(|e| e.multicast_groups)
                        .unwrap_or_default();
                    CacheChange::Removed { groups }
                }
                None => CacheChange::Absent,
            };
        }
        let expires_at = now + lifetime;
        let dual = self.dual_entries;
        let previous_lifetime = self.previous_lifetime;
        let slot = self.slots.entry(key).or_default();
        if slot.previous.as_ref().is_some_and(|p| !p.live(now)) {
            slot.previous = None;
        }
        let fresh = BindingCacheEntry {
            key,
            coa,
            expires_at,
            kind: EntryKind::Primary,
            multicast_groups: BTreeSet::new(),
        };
        match slot.primary.take() {
            Some(mut old) if old.live(now) && old.coa == coa => {
                old.expires_at = expires_at;
                slot.primary = Some(old);
                CacheChange::Refreshed
            }
            Some(old) if old.live(now) => {
                let groups = old.multicast_groups.clone();
                let old_coa = old.coa;
                slot.primary = Some(BindingCacheEntry {
                    multicast_groups: groups,
                    ..fresh
                });
                if dual {
                    slot.previous = Some(BindingCacheEntry {
                        kind: EntryKind::Previous,
                        expires_at: now + previous_lifetime,
                        multicast_groups: BTreeSet::new(),
                        ..old
                    });
                    CacheChange::Demoted { previous: old_coa }
                } else {
                    CacheChange::Replaced { old: old_coa }
                }
            }
            _ => {
                slot.primary = Some(fresh);
                CacheChange::Inserted
            }
        }
    }

    pub fn lookup(&self, now: SimTime, key: Addr) -> Option<&BindingCacheEntry> {
        self.slots
            .get(&key)
            .and_then(|s| s.primary.as_ref())
            .filter(|e| e.live(now))
    }

    pub fn previous(&self, now: SimTime, key: Addr) -> Option<&BindingCacheEntry> {
        self.slots
            .get(&key)
            .and_then(|s| s.previous.as_ref())
            .filter(|e| e.live(now))
    }

    /// Number of live entries (primary plus previous) for `key`.
    pub fn entry_count(&self, now: SimTime, key: Addr) -> usize {
        self.lookup(now, key).is_some() as usize + self.previous(now, key).is_some() as usize
    }

    /// Whether `src` is a care-of address currently bound to `key`.
    pub fn accepts_source(&self, now: SimTime, key: Addr, src: Addr) -> bool {
        self.lookup(now, key).is_some_and(|e| e.coa == src)
            || self.previous(now, key).is_some_and(|e| e.coa == src)
    }

    /// Applies the eviction rule: a packet from the primary care-of address
    /// proves the new binding is in use, so the previous entry goes.
    pub fn observe_source(&mut self, now: SimTime, key: Addr, src: Addr) -> bool {
        let Some(slot) = self.slots.get_mut(&key) else {
            return false;
        };
        let uses_primary = slot
            .primary
            .as_ref()
            .is_some_and(|e| e.live(now) && e.coa == src);
        if uses_primary && slot.previous.is_some() {
            slot.previous = None;
            true
        } else {
            false
        }
    }

    /// Reverse lookup: the key whose live primary binding points at `coa`.
    pub fn key_for_coa(&self, now: SimTime, coa: Addr) -> Option<Addr> {
        self.slots.values().find_map(|s| {
            s.primary
                .as_ref()
                .filter(|e| e.live(now) && e.coa == coa)
                .map(|e| e.key)
        })
    }

    pub fn record_group(&mut self, now: SimTime, key: Addr, group: Addr) -> bool {
        match self
            .slots
            .get_mut(&key)
            .and_then(|s| s.primary.as_mut())
            .filter(|e| e.live(now))
        {
            Some(e) => {
                e.multicast_groups.insert(group);
                true
            }
            None => false,
        }
    }

    pub fn forget_group(&mut self, key: Addr, group: Addr) -> bool {
        self.slots
            .get_mut(&key)
            .and_then(|s| s.primary.as_mut())
            .is_some_and(|e| e.multicast_groups.remove(&group))
    }

    /// Live primary entries that recorded `group`.
    pub fn members_of(&self, now: SimTime, group: Addr) -> Vec<&BindingCacheEntry> {
        self.slots
            .values()
            .filter_map(|s| s.primary.as_ref())
            .filter(|e| e.live(now) && e.multicast_groups.contains(&group))
            .collect()
    }

    pub fn wants_group(&self, now: SimTime, group: Addr) -> bool {
        !self.members_of(now, group).is_empty()
    }
}
