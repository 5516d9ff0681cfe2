//! Dynamic encryption with gradual remapping (CEASER).
//!
//! Two keys are live during an epoch. A refresh pointer sweeps the sets;
//! each refresh step moves the lines of one set to wherever the target key
//! maps them. When the pointer reaches the end the keys rotate.

use crate::error::{ConfigError, InvariantViolation};
use crate::geometry::{Address, CacheGeometry};
use crate::permutation::{derive_index, Permutation};
use crate::rng::{purpose, RngStream};
use crate::set_array::{AccessOutcome, Eviction, LineSlot, Owner, SchemeStats, SetArray, NO_ENTRY};

use super::{check_no_duplicates, CacheModel, SchemeConfig, SchemeKind};

/// Key pair and refresh progress for one region of `n_sets` sets.
#[derive(Clone, Debug)]
pub struct DeState {
    pub current: Permutation,
    pub target: Permutation,
    /// Sets below this index have been refreshed and map under `target`.
    pub refresh_ptr: usize,
    pub n_sets: usize,
    /// Accesses per epoch.
    pub epoch_len: u64,
    pub access_count: u64,
}

impl DeState {
    pub fn new(current: Permutation, target: Permutation, n_sets: usize, epoch_len: u64) -> Self {
        DeState {
            current,
            target,
            refresh_ptr: 0,
            n_sets,
            epoch_len,
            access_count: 0,
        }
    }

    /// Accesses between consecutive set refreshes.
    pub fn refresh_rate(&self) -> f64 {
        self.epoch_len as f64 / self.n_sets as f64
    }

    #[inline]
    pub fn current_set(&self, line: u64) -> usize {
        derive_index(self.current.encrypt(line), self.n_sets)
    }

    #[inline]
    pub fn target_set(&self, line: u64) -> usize {
        derive_index(self.target.encrypt(line), self.n_sets)
    }

    /// The set a line belongs in right now.
    #[inline]
    pub fn placement_set(&self, line: u64) -> usize {
        let cur = self.current_set(line);
        if cur < self.refresh_ptr {
            self.target_set(line)
        } else {
            cur
        }
    }

    /// Refresh steps owed after `access_count` accesses.
    pub fn due(&self) -> usize {
        let goal = (self.access_count as u128 * self.n_sets as u128 / self.epoch_len as u128) as usize;
        goal.min(self.n_sets).saturating_sub(self.refresh_ptr)
    }

    pub fn epoch_done(&self) -> bool {
        self.refresh_ptr >= self.n_sets
    }

    /// Swap keys and draw a fresh target. Only legal once every set has
    /// been refreshed.
    pub fn rollover(&mut self, fresh: Permutation) {
        assert!(
            self.epoch_done(),
            "rollover with refresh pointer at {} of {}",
            self.refresh_ptr,
            self.n_sets
        );
        self.current = std::mem::replace(&mut self.target, fresh);
        self.refresh_ptr = 0;
        self.access_count = 0;
    }
}

/// Move every line of region set `set` to its target-key set.
/// Returns the number of lines moved.
pub(crate) fn refresh_region(
    sets: &mut SetArray,
    base: usize,
    set: usize,
    de: &DeState,
    rng: &mut RngStream,
    stats: &mut SchemeStats,
    evicted: &mut Vec<Eviction>,
) -> usize {
    let mut moved = 0;
    for way in 0..sets.assoc() {
        let slot = sets.set(base + set)[way];
        if !slot.valid {
            continue;
        }
        let dest = de.target_set(slot.line);
        if dest == set {
            continue;
        }
        let slot = sets.take(base + set, way);
        moved += 1;
        stats.relocations += 1;
        if let Some(old) = sets.fill_random(base + dest, slot, rng) {
            stats.relocation_evictions += 1;
            evicted.push(Eviction {
                line: old.line,
                itable_idx: None,
                owner: old.owner,
            });
        }
    }
    moved
}

#[derive(Clone)]
pub struct CeaserCache {
    geo: CacheGeometry,
    de: DeState,
    sets: SetArray,
    rng: RngStream,
    keys: RngStream,
    identity: bool,
    stats: SchemeStats,
}

impl CeaserCache {
    pub fn from_config(cfg: &SchemeConfig, rng: &RngStream) -> Result<Self, ConfigError> {
        let geo = cfg.geometry()?;
        let mut keys = rng.derive(purpose::KEYS);
        let bits = geo.domain_bits();
        let (cur, tgt) = if cfg.identity_keys {
            (Permutation::identity(bits), Permutation::identity(bits))
        } else {
            (
                Permutation::random(&mut keys, bits),
                Permutation::random(&mut keys, bits),
            )
        };
        Ok(CeaserCache {
            geo,
            de: DeState::new(cur, tgt, geo.n_sets, cfg.de_epoch_accesses()),
            sets: SetArray::new(geo.n_sets, geo.assoc),
            rng: rng.derive(purpose::REPLACEMENT),
            keys,
            identity: cfg.identity_keys,
            stats: SchemeStats::default(),
        })
    }

    pub fn de_state(&self) -> &DeState {
        &self.de
    }

    /// Set currently holding `addr`, if resident.
    pub fn locate(&self, addr: Address) -> Option<usize> {
        let line = addr.line(&self.geo);
        let (c, t) = (self.de.current_set(line), self.de.target_set(line));
        [c, t].into_iter().find(|&s| self.sets.lookup(s, line))
    }

    /// Refresh the set under the pointer and advance it.
    pub fn refresh_step(&mut self) -> usize {
        let mut evicted = Vec::new();
        self.refresh_step_into(&mut evicted)
    }

    fn refresh_step_into(&mut self, evicted: &mut Vec<Eviction>) -> usize {
        assert!(
            self.de.refresh_ptr < self.de.n_sets,
            "refresh past the end of the epoch"
        );
        let p = self.de.refresh_ptr;
        let moved = refresh_region(&mut self.sets, 0, p, &self.de, &mut self.rng, &mut self.stats, evicted);
        self.de.refresh_ptr += 1;
        moved
    }

    /// Swap keys once the pointer has swept every set.
    pub fn rollover(&mut self) {
        let fresh = if self.identity {
            Permutation::identity(self.geo.domain_bits())
        } else {
            Permutation::random(&mut self.keys, self.geo.domain_bits())
        };
        self.de.rollover(fresh);
        self.stats.epochs += 1;
    }

    fn tick(&mut self, evicted: &mut Vec<Eviction>) {
        self.de.access_count += 1;
        for _ in 0..self.de.due() {
            self.refresh_step_into(evicted);
        }
        if self.de.epoch_done() {
            self.rollover();
        }
    }
}

impl CacheModel for CeaserCache {
    fn kind(&self) -> SchemeKind {
        SchemeKind::De
    }

    fn geometry(&self) -> &CacheGeometry {
        &self.geo
    }

    fn access(&mut self, addr: Address, owner: Owner) -> AccessOutcome {
        let line = addr.line(&self.geo);
        self.stats.accesses += 1;
        let mut out = AccessOutcome::default();
        let (c, t) = (self.de.current_set(line), self.de.target_set(line));
        if let Some(set) = [c, t].into_iter().find(|&s| self.sets.lookup(s, line)) {
            self.stats.hits += 1;
            out.hit = true;
            out.set_probed = set;
        } else {
            self.stats.misses += 1;
            let set = self.de.placement_set(line);
            out.set_probed = set;
            let slot = LineSlot {
                valid: true,
                line,
                owner,
                itable_idx: NO_ENTRY,
            };
            if let Some(old) = self.sets.fill_random(set, slot, &mut self.rng) {
                self.stats.eviction_events += 1;
                self.stats.evicted_lines += 1;
                out.evicted.push(Eviction {
                    line: old.line,
                    itable_idx: None,
                    owner: old.owner,
                });
            }
        }
        let mut evicted = std::mem::take(&mut out.evicted);
        self.tick(&mut evicted);
        out.evicted = evicted;
        out
    }

    fn flush(&mut self, addr: Address) -> bool {
        let line = addr.line(&self.geo);
        match self.locate(addr) {
            Some(set) => {
                let way = self.sets.find(set, line).expect("located line");
                self.sets.take(set, way);
                self.stats.flushes += 1;
                true
            }
            None => false,
        }
    }

    fn contains(&self, addr: Address) -> bool {
        self.locate(addr).is_some()
    }

    fn resident_lines(&self) -> Vec<u64> {
        self.sets.iter_valid().map(|(_, _, s)| s.line).collect()
    }

    fn stats(&self) -> &SchemeStats {
        &self.stats
    }

    fn audit(&self) -> Result<(), InvariantViolation> {
        for (set, _, slot) in self.sets.iter_valid() {
            let c = self.de.current_set(slot.line);
            let t = self.de.target_set(slot.line);
            let ok = if c < self.de.refresh_ptr {
                set == t
            } else {
                set == c || set == t
            };
            if !ok {
                return Err(InvariantViolation(format!(
                    "line {:#x} in set {set}; current {c}, target {t}, pointer {}",
                    slot.line, self.de.refresh_ptr
                )));
            }
        }
        check_no_duplicates(&self.resident_lines())
    }

    fn clone_box(&self) -> Box<dyn CacheModel> {
        Box::new(self.clone())
    }

    fn reseed(&mut self, rng: &RngStream) {
        self.rng = rng.derive(purpose::REPLACEMENT);
    }
}
