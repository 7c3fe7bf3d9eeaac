//! Default-drop admission table keyed on ⟨source IP, source port⟩.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use thiserror::Error;

pub const DEFAULT_FILTER_CAPACITY: usize = 1024;
pub const DEFAULT_FILTER_TTL_SECONDS: u64 = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("filter table full ({capacity} entries)")]
pub struct TableFull {
    pub capacity: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FilterEntry {
    pub src_ip: Ipv4Addr,
    pub src_port: u16,
    pub expires_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterTable {
    entries: BTreeMap<(Ipv4Addr, u16), u64>,
    capacity: usize,
    ttl: u64,
}

impl FilterTable {
    pub fn new(capacity: usize, ttl: u64) -> Self {
        FilterTable {
            entries: BTreeMap::new(),
            capacity,
            ttl,
        }
    }

    pub fn ttl(&self) -> u64 {
        self.ttl
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, src_ip: Ipv4Addr, src_port: u16) -> Option<FilterEntry> {
        self.entries
            .get(&(src_ip, src_port))
            .map(|&expires_at| FilterEntry {
                src_ip,
                src_port,
                expires_at,
            })
    }

    pub fn entries(&self) -> impl Iterator<Item = FilterEntry> + '_ {
        self.entries
            .iter()
            .map(|(&(src_ip, src_port), &expires_at)| FilterEntry {
                src_ip,
                src_port,
                expires_at,
            })
    }

    /// Hit iff a live entry (`now <= expires_at`) matches both fields. A hit
    /// refreshes the entry to `now + ttl`.
    pub fn lookup(&mut self, src_ip: Ipv4Addr, src_port: u16, now: u64) -> bool {
        match self.entries.get_mut(&(src_ip, src_port)) {
            Some(expires_at) if now <= *expires_at => {
                *expires_at = now.saturating_add(self.ttl);
                true
            }
            _ => false,
        }
    }

    /// Inserts or refreshes an entry expiring at `now + ttl`. New keys are
    /// refused once the table holds `capacity` entries; live entries are
    /// never evicted to make room.
    pub fn insert(
        &mut self,
        src_ip: Ipv4Addr,
        src_port: u16,
        now: u64,
        ttl: u64,
    ) -> Result<(), TableFull> {
        let key = (src_ip, src_port);
        let expires_at = now.saturating_add(ttl);
        if let Some(existing) = self.entries.get_mut(&key) {
            *existing = expires_at;
            return Ok(());
        }
        if self.entries.len() >= self.capacity {
            return Err(TableFull {
                capacity: self.capacity,
            });
        }
        self.entries.insert(key, expires_at);
        Ok(())
    }

    /// Removes entries with `now > expires_at`; returns how many went.
    pub fn sweep(&mut self, now: u64) -> usize {
        let before = self.entries.len();
        self.entries.retain(|_, expires_at| now <= *expires_at);
        before - self.entries.len()
    }
}

impl Default for FilterTable {
    fn default() -> Self {
        FilterTable::new(DEFAULT_FILTER_CAPACITY, DEFAULT_FILTER_TTL_SECONDS)
    }
}
