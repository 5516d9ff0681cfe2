//! Two-level dynamic randomization through an indirection table (iTable).
//!
//! An address first selects an iTable entry, and the entry names the set.
//! Three variants share this machinery:
//!
//! * `tldr-de`: the entry index comes from an encrypted address under a
//!   rotating key pair; entry-to-set mappings are fixed random values.
//! * `tldr-drp`: the entry index is static; an entry draws a fresh set
//!   whenever all of its lines have left the cache.
//! * `de-drp`: both.
//!
//! Within an epoch, an entry is *transitioned* once it has emptied. Lines
//! whose current-key entry is transitioned use their target-key entry, so
//! only one set is ever probed. In the second half of an epoch a cleaner
//! sweeps the table and force-empties entries that have not transitioned,
//! which makes the key swap at the end of the epoch safe.

mod buffer;
mod itable;

use serde::Serialize;

pub use buffer::{BufferInsert, BufferedLine, VictimBuffer};
pub use itable::{ITable, ITableEntry};

use crate::error::{ConfigError, InvariantViolation};
use crate::geometry::{Address, CacheGeometry};
use crate::permutation::{derive_index, Permutation};
use crate::rng::{purpose, RngStream};
use crate::schemes::{
    check_no_duplicates, CacheModel, EpochUnit, FirstLevel, FirstLevelKind, SchemeConfig, SchemeKind,
};
use crate::set_array::{AccessOutcome, Eviction, LineSlot, Owner, SchemeStats, SetArray};

/// Key pair and progress of the current epoch.
#[derive(Clone, Debug)]
pub struct EpochState {
    pub current: Permutation,
    pub target: Permutation,
    pub epoch_len: u64,
    pub unit: EpochUnit,
    pub eviction_count: u64,
    pub access_count: u64,
    pub cleaner_ptr: usize,
}

impl EpochState {
    fn progress(&self) -> u64 {
        match self.unit {
            EpochUnit::Evictions => self.eviction_count,
            EpochUnit::Accesses => self.access_count,
        }
    }

    pub fn cleaner_active(&self) -> bool {
        self.progress() >= self.epoch_len / 2
    }
}

/// Per-epoch statistics, recorded at each key swap.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: u64,
    /// Entries that transitioned by emptying naturally, over table size.
    pub natural_fraction: f64,
    pub cleaner_transitions: u64,
    /// Lines the cleaner evicted.
    pub cleaner_forced: u64,
    pub buffer_peak: u64,
    pub overflows: u64,
    pub misses: u64,
    pub evictions: u64,
}

#[derive(Clone, Debug, Default)]
struct EpochTally {
    natural: u64,
    cleaner_transitions: u64,
    cleaner_forced: u64,
    overflows: u64,
    misses: u64,
    evictions: u64,
}

#[derive(Copy, Clone, PartialEq, Eq)]
enum Cause {
    Replacement,
    Cleaner,
}

#[derive(Clone)]
pub struct TldrCache {
    kind: SchemeKind,
    geo: CacheGeometry,
    first: FirstLevel,
    epoch: Option<EpochState>,
    itable: ITable,
    buffer: VictimBuffer,
    sets: SetArray,
    drp: bool,
    threshold: usize,
    repl: RngStream,
    place: RngStream,
    buf_rng: RngStream,
    keys: RngStream,
    identity: bool,
    pinned: Option<usize>,
    tally: EpochTally,
    records: Vec<EpochRecord>,
    stats: SchemeStats,
}

impl TldrCache {
    pub fn from_config(cfg: &SchemeConfig, rng: &RngStream) -> Result<Self, ConfigError> {
        let geo = cfg.geometry()?;
        let bits = geo.domain_bits();
        let t = cfg.table_size();
        let mut keys = rng.derive(purpose::KEYS);
        let mut place = rng.derive(purpose::PLACEMENT);
        let identity = cfg.identity_keys;
        let draw = |keys: &mut RngStream| {
            if identity {
                Permutation::identity(bits)
            } else {
                Permutation::random(keys, bits)
            }
        };
        let (de, drp) = match cfg.kind {
            SchemeKind::TldrDe => (true, false),
            SchemeKind::TldrDrp => (false, true),
            SchemeKind::DeDrp => (true, true),
            other => {
                return Err(ConfigError::invalid(
                    "scheme",
                    format!("{other} is not an iTable scheme"),
                ))
            }
        };
        let first = match (de, cfg.first_level) {
            (false, FirstLevelKind::Encrypted) => FirstLevel::Encrypted(draw(&mut keys)),
            _ => FirstLevel::IndexBits,
        };
        let epoch = de.then(|| {
            let current = draw(&mut keys);
            let target = draw(&mut keys);
            EpochState {
                current,
                target,
                epoch_len: cfg.tldr_epoch_len(),
                unit: cfg.epoch_unit,
                eviction_count: 0,
                access_count: 0,
                cleaner_ptr: 0,
            }
        });
        let itable = ITable::random(t, geo.n_sets, &mut place);
        let capacity = if drp { cfg.buffer_capacity } else { 0 };
        Ok(TldrCache {
            kind: cfg.kind,
            geo,
            first,
            epoch,
            itable,
            buffer: VictimBuffer::new(capacity),
            sets: SetArray::new(geo.n_sets, geo.assoc),
            drp,
            threshold: cfg.threshold(),
            repl: rng.derive(purpose::REPLACEMENT),
            place,
            buf_rng: rng.derive(purpose::BUFFER),
            keys,
            identity,
            pinned: None,
            tally: EpochTally::default(),
            records: Vec::new(),
            stats: SchemeStats::default(),
        })
    }

    pub fn itable(&self) -> &ITable {
        &self.itable
    }

    pub fn epoch_state(&self) -> Option<&EpochState> {
        self.epoch.as_ref()
    }

    pub fn buffer(&self) -> &VictimBuffer {
        &self.buffer
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    /// Route every access through entry `idx` (test hook).
    pub fn pin_entry(&mut self, idx: Option<usize>) {
        if let Some(i) = idx {
            assert!(i < self.itable.len());
        }
        self.pinned = idx;
    }

    /// The (entry, set) pair an access to `addr` would use right now.
    pub fn key_select(&self, addr: Address) -> (usize, usize) {
        self.select_line(addr.line(&self.geo))
    }

    #[inline]
    fn select_line(&self, line: u64) -> (usize, usize) {
        let t = self.itable.len();
        let e = match (self.pinned, &self.epoch) {
            (Some(p), _) => p,
            (None, Some(ep)) => {
                let i = derive_index(ep.current.encrypt(line), t);
                if self.itable.entry(i).refresh {
                    derive_index(ep.target.encrypt(line), t)
                } else {
                    i
                }
            }
            (None, None) => derive_index(self.first.apply(line), t),
        };
        (e, self.itable.set_of(e))
    }

    /// Evict every line placed through `entry`, then transition it.
    fn evict_entry(&mut self, entry: usize, cause: Cause, out: &mut Vec<Eviction>) -> usize {
        let set = self.itable.set_of(entry);
        let mut n = 0;
        for way in 0..self.sets.assoc() {
            let s = self.sets.set(set)[way];
            if s.valid && s.entry() == Some(entry) {
                self.sets.take(set, way);
                self.itable.remove_cached(entry);
                out.push(Eviction {
                    line: s.line,
                    itable_idx: Some(entry),
                    owner: s.owner,
                });
                n += 1;
            }
        }
        for b in self.buffer.drain_entry(entry) {
            self.itable.remove_buffered(entry);
            out.push(Eviction {
                line: b.line,
                itable_idx: Some(entry),
                owner: b.owner,
            });
            n += 1;
        }
        let first = self.transition(entry);
        match cause {
            Cause::Replacement => {
                self.stats.evicted_lines += n as u64;
                if first {
                    self.tally.natural += 1;
                }
            }
            Cause::Cleaner => {
                self.stats.cleaner_forced += n as u64;
                self.tally.cleaner_forced += n as u64;
                if first {
                    self.tally.cleaner_transitions += 1;
                }
            }
        }
        n
    }

    fn transition(&mut self, entry: usize) -> bool {
        let drp = if self.drp { Some(&mut self.place) } else { None };
        self.itable.transition(entry, drp)
    }

    fn count_eviction_event(&mut self) {
        self.stats.eviction_events += 1;
        self.tally.evictions += 1;
        if let Some(ep) = &mut self.epoch {
            ep.eviction_count += 1;
        }
    }

    /// Uniform pick among the entry groups present in `set`, excluding
    /// `exclude`. `None` if no other group is present.
    pub fn grouped_victim(&mut self, set: usize, exclude: usize) -> Option<usize> {
        let mut groups: Vec<usize> = Vec::with_capacity(self.sets.assoc());
        for s in self.sets.set(set) {
            if let Some(e) = s.entry() {
                if s.valid && e != exclude && !groups.contains(&e) {
                    groups.push(e);
                }
            }
        }
        if groups.is_empty() {
            None
        } else {
            Some(groups[self.repl.uniform(groups.len())])
        }
    }

    fn place(&mut self, line: u64, owner: Owner, out: &mut AccessOutcome) {
        let (mut entry, mut set) = self.select_line(line);
        loop {
            if self.drp && self.itable.cached(entry) >= self.threshold {
                if self.buffer.capacity() > 0 {
                    self.spill(line, owner, entry, out);
                    return;
                }
                self.count_eviction_event();
                self.evict_entry(entry, Cause::Replacement, &mut out.evicted);
                (entry, set) = self.select_line(line);
                continue;
            }
            if self.sets.is_full(set) {
                self.count_eviction_event();
                match self.grouped_victim(set, entry) {
                    Some(victim) => {
                        self.evict_entry(victim, Cause::Replacement, &mut out.evicted);
                    }
                    None => {
                        self.evict_entry(entry, Cause::Replacement, &mut out.evicted);
                        (entry, set) = self.select_line(line);
                        continue;
                    }
                }
            }
            let way = self
                .sets
                .set(set)
                .iter()
                .position(|s| !s.valid)
                .expect("room after eviction");
            self.sets.put(
                set,
                way,
                LineSlot {
                    valid: true,
                    line,
                    owner,
                    itable_idx: entry as u32,
                },
            );
            self.itable.add_cached(entry);
            out.set_probed = set;
            return;
        }
    }

    fn spill(&mut self, line: u64, owner: Owner, entry: usize, out: &mut AccessOutcome) {
        let item = BufferedLine { line, entry, owner };
        match self.buffer.check_insert(item, &mut self.buf_rng) {
            BufferInsert::Hit => unreachable!("buffer checked before the cache"),
            BufferInsert::Inserted => {}
            BufferInsert::Overflow(v) => {
                self.itable.remove_buffered(v.entry);
                self.stats.buffer_overflows += 1;
                self.tally.overflows += 1;
                out.evicted.push(Eviction {
                    line: v.line,
                    itable_idx: Some(v.entry),
                    owner: v.owner,
                });
            }
        }
        self.itable.add_buffered(entry);
        self.stats.buffer_spills += 1;
        self.stats.buffer_peak = self.stats.buffer_peak.max(self.buffer.len() as u64);
        out.spilled_to_buffer = true;
    }

    /// Advance the cleaner by one entry. Returns lines force-evicted.
    pub fn cleaner_step(&mut self) -> usize {
        let mut out = Vec::new();
        self.cleaner_step_into(&mut out)
    }

    fn cleaner_step_into(&mut self, out: &mut Vec<Eviction>) -> usize {
        let Some(ep) = &mut self.epoch else {
            return 0;
        };
        if ep.cleaner_ptr >= self.itable.len() {
            return 0;
        }
        let k = ep.cleaner_ptr;
        ep.cleaner_ptr += 1;
        if self.itable.entry(k).refresh {
            return 0;
        }
        self.evict_entry(k, Cause::Cleaner, out)
    }

    /// Finish the sweep and swap keys now, whatever the epoch progress.
    pub fn force_rollover(&mut self) -> EpochRecord {
        let mut out = Vec::new();
        self.rollover(&mut out);
        self.records.last().cloned().expect("record just pushed")
    }

    fn rollover(&mut self, out: &mut Vec<Eviction>) {
        assert!(self.epoch.is_some(), "rollover without a DE layer");
        while self.epoch.as_ref().is_some_and(|e| e.cleaner_ptr < self.itable.len()) {
            self.cleaner_step_into(out);
        }
        let untransitioned = self.itable.len() - self.itable.transitioned_count();
        assert_eq!(untransitioned, 0, "{untransitioned} untransitioned entries at rollover");
        let tally = std::mem::take(&mut self.tally);
        self.records.push(EpochRecord {
            epoch: self.stats.epochs,
            natural_fraction: tally.natural as f64 / self.itable.len() as f64,
            cleaner_transitions: tally.cleaner_transitions,
            cleaner_forced: tally.cleaner_forced,
            buffer_peak: self.buffer.peak() as u64,
            overflows: tally.overflows,
            misses: tally.misses,
            evictions: tally.evictions,
        });
        self.buffer.reset_peak();
        self.itable.clear_refresh();
        let bits = self.geo.domain_bits();
        let fresh = if self.identity {
            Permutation::identity(bits)
        } else {
            Permutation::random(&mut self.keys, bits)
        };
        let ep = self.epoch.as_mut().expect("checked above");
        ep.current = std::mem::replace(&mut ep.target, fresh);
        ep.eviction_count = 0;
        ep.access_count = 0;
        ep.cleaner_ptr = 0;
        self.stats.epochs += 1;
    }

    fn tick(&mut self, out: &mut Vec<Eviction>) {
        let Some(ep) = &mut self.epoch else {
            return;
        };
        ep.access_count += 1;
        if ep.cleaner_active() {
            let second_half = (ep.epoch_len - ep.epoch_len / 2).max(1);
            let steps = self.itable.len().div_ceil(second_half as usize);
            for _ in 0..steps {
                self.cleaner_step_into(out);
            }
        }
        if self.epoch.as_ref().is_some_and(|e| e.progress() >= e.epoch_len) {
            self.rollover(out);
        }
    }
}

impl CacheModel for TldrCache {
    fn kind(&self) -> SchemeKind {
        self.kind
    }

    fn geometry(&self) -> &CacheGeometry {
        &self.geo
    }

    fn access(&mut self, addr: Address, owner: Owner) -> AccessOutcome {
        let line = addr.line(&self.geo);
        self.stats.accesses += 1;
        let mut out = AccessOutcome::default();
        if self.buffer.contains(line) {
            self.stats.hits += 1;
            self.stats.buffer_hits += 1;
            out.hit = true;
        } else {
            let (_, set) = self.select_line(line);
            out.set_probed = set;
            if self.sets.lookup(set, line) {
                self.stats.hits += 1;
                out.hit = true;
            } else {
                self.stats.misses += 1;
                self.tally.misses += 1;
                self.place(line, owner, &mut out);
            }
        }
        self.tick(&mut out.evicted);
        out
    }

    fn flush(&mut self, addr: Address) -> bool {
        let line = addr.line(&self.geo);
        if let Some(b) = self.buffer.remove(line) {
            self.itable.remove_buffered(b.entry);
            self.stats.flushes += 1;
            return true;
        }
        let (entry, set) = self.select_line(line);
        match self.sets.find(set, line) {
            Some(way) => {
                let s = self.sets.take(set, way);
                debug_assert_eq!(s.entry(), Some(entry));
                self.itable.remove_cached(entry);
                self.stats.flushes += 1;
                true
            }
            None => false,
        }
    }

    fn contains(&self, addr: Address) -> bool {
        let line = addr.line(&self.geo);
        if self.buffer.contains(line) {
            return true;
        }
        let (_, set) = self.select_line(line);
        self.sets.lookup(set, line)
    }

    fn resident_lines(&self) -> Vec<u64> {
        self.sets
            .iter_valid()
            .map(|(_, _, s)| s.line)
            .chain(self.buffer.contents().iter().map(|b| b.line))
            .collect()
    }

    fn stats(&self) -> &SchemeStats {
        &self.stats
    }

    fn audit(&self) -> Result<(), InvariantViolation> {
        let t = self.itable.len();
        let mut cached = vec![0usize; t];
        for (set, _, slot) in self.sets.iter_valid() {
            let e = slot
                .entry()
                .ok_or_else(|| InvariantViolation(format!("line {:#x} has no entry", slot.line)))?;
            cached[e] += 1;
            if self.itable.set_of(e) != set {
                return Err(InvariantViolation(format!(
                    "line {:#x} in set {set} but entry {e} maps to {}",
                    slot.line,
                    self.itable.set_of(e)
                )));
            }
            if self.pinned.is_none() && self.select_line(slot.line) != (e, set) {
                return Err(InvariantViolation(format!(
                    "line {:#x} stranded: placed via entry {e}, lookup selects {:?}",
                    slot.line,
                    self.select_line(slot.line)
                )));
            }
        }
        let mut buffered = vec![0usize; t];
        for b in self.buffer.contents() {
            buffered[b.entry] += 1;
        }
        for e in 0..t {
            if cached[e] != self.itable.cached(e) || buffered[e] != self.itable.buffered(e) {
                return Err(InvariantViolation(format!(
                    "entry {e} counts {}+{} but holds {}+{}",
                    self.itable.cached(e),
                    self.itable.buffered(e),
                    cached[e],
                    buffered[e]
                )));
            }
        }
        if self.buffer.len() > self.buffer.capacity() {
            return Err(InvariantViolation("victim buffer over capacity".into()));
        }
        check_no_duplicates(&self.resident_lines())
    }

    fn epoch_records(&self) -> &[EpochRecord] {
        &self.records
    }

    fn clone_box(&self) -> Box<dyn CacheModel> {
        Box::new(self.clone())
    }

    fn reseed(&mut self, rng: &RngStream) {
        self.repl = rng.derive(purpose::REPLACEMENT);
        self.place = rng.derive(purpose::PLACEMENT);
        self.buf_rng = rng.derive(purpose::BUFFER);
    }
}
