use serde::Serialize;

use crate::rng::RngStream;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ITableEntry {
    pub set_mapping: u32,
    /// Set once the entry has emptied this epoch.
    pub refresh: bool,
}

/// Indirection table plus per-entry residency counts.
#[derive(Clone, Debug)]
pub struct ITable {
    entries: Vec<ITableEntry>,
    cached: Vec<u32>,
    buffered: Vec<u32>,
    n_sets: usize,
}

impl ITable {
    /// `len` entries, each mapped to a uniform random set.
    pub fn random(len: usize, n_sets: usize, rng: &mut RngStream) -> Self {
        let entries = (0..len)
            .map(|_| ITableEntry {
                set_mapping: rng.uniform(n_sets) as u32,
                refresh: false,
            })
            .collect();
        ITable {
            entries,
            cached: vec![0; len],
            buffered: vec![0; len],
            n_sets,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n_sets(&self) -> usize {
        self.n_sets
    }

    #[inline]
    pub fn entry(&self, i: usize) -> &ITableEntry {
        &self.entries[i]
    }

    pub fn entries(&self) -> &[ITableEntry] {
        &self.entries
    }

    #[inline]
    pub fn set_of(&self, i: usize) -> usize {
        self.entries[i].set_mapping as usize
    }

    /// Lines placed through `i` that sit in cache slots.
    #[inline]
    pub fn cached(&self, i: usize) -> usize {
        self.cached[i] as usize
    }

    /// Lines placed through `i` that sit in the victim buffer.
    #[inline]
    pub fn buffered(&self, i: usize) -> usize {
        self.buffered[i] as usize
    }

    #[inline]
    pub fn resident_count(&self, i: usize) -> usize {
        self.cached(i) + self.buffered(i)
    }

    pub(crate) fn add_cached(&mut self, i: usize) {
        self.cached[i] += 1;
    }

    pub(crate) fn remove_cached(&mut self, i: usize) {
        debug_assert!(self.cached[i] > 0);
        self.cached[i] -= 1;
    }

    pub(crate) fn add_buffered(&mut self, i: usize) {
        self.buffered[i] += 1;
    }

    pub(crate) fn remove_buffered(&mut self, i: usize) {
        debug_assert!(self.buffered[i] > 0);
        self.buffered[i] -= 1;
    }

    pub fn all_transitioned(&self) -> bool {
        self.entries.iter().all(|e| e.refresh)
    }

    pub fn transitioned_count(&self) -> usize {
        self.entries.iter().filter(|e| e.refresh).count()
    }

    /// Mark `i` transitioned and, under DRP, draw a fresh set for it.
    /// Returns whether the flag was clear before.
    pub fn transition(&mut self, i: usize, drp: Option<&mut RngStream>) -> bool {
        assert_eq!(
            self.resident_count(i),
            0,
            "transition of entry {i} with lines still resident"
        );
        let e = &mut self.entries[i];
        let first = !e.refresh;
        e.refresh = true;
        if let Some(rng) = drp {
            e.set_mapping = rng.uniform(self.n_sets) as u32;
        }
        first
    }

    pub(crate) fn clear_refresh(&mut self) {
        for e in &mut self.entries {
            e.refresh = false;
        }
    }

    #[cfg(test)]
    pub(crate) fn set_refresh(&mut self, i: usize, v: bool) {
        self.entries[i].refresh = v;
    }
}
