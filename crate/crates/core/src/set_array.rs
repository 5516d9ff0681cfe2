//! Generic set-array storage shared by every scheme.

use serde::{Deserialize, Serialize};

use crate::rng::RngStream;

/// Who brought a line in. Simulation metadata only; schemes and attacks
/// never branch on it.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Owner {
    Attacker,
    Victim,
    Cleaner,
    #[default]
    Other,
}

pub const NO_ENTRY: u32 = u32::MAX;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct LineSlot {
    pub valid: bool,
    /// Line number (address with the offset bits removed).
    pub line: u64,
    pub owner: Owner,
    /// iTable entry the line was placed through, or [`NO_ENTRY`].
    pub itable_idx: u32,
}

impl LineSlot {
    pub const EMPTY: LineSlot = LineSlot {
        valid: false,
        line: 0,
        owner: Owner::Other,
        itable_idx: NO_ENTRY,
    };

    pub fn entry(&self) -> Option<usize> {
        (self.itable_idx != NO_ENTRY).then_some(self.itable_idx as usize)
    }
}

/// One line removed from the cache (or the victim buffer) by an access.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Eviction {
    pub line: u64,
    pub itable_idx: Option<usize>,
    pub owner: Owner,
}

/// What a single access did.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AccessOutcome {
    pub hit: bool,
    pub set_probed: usize,
    pub skew_probed: Option<usize>,
    /// Every line that left the cache during this call, including
    /// relocation victims and cleaner-forced evictions.
    pub evicted: Vec<Eviction>,
    pub spilled_to_buffer: bool,
}

impl AccessOutcome {
    pub fn hit(set: usize) -> Self {
        AccessOutcome {
            hit: true,
            set_probed: set,
            ..Default::default()
        }
    }
}

/// Counters every scheme keeps. Fields that do not apply stay zero.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeStats {
    pub accesses: u64,
    pub hits: u64,
    pub misses: u64,
    /// Misses that had to evict something to make room.
    pub eviction_events: u64,
    /// Lines removed by replacement (a grouped eviction can remove several).
    pub evicted_lines: u64,
    /// Lines moved by a DE refresh step.
    pub relocations: u64,
    /// Lines lost because a relocation target set was full.
    pub relocation_evictions: u64,
    pub cleaner_forced: u64,
    pub buffer_hits: u64,
    pub buffer_spills: u64,
    pub buffer_overflows: u64,
    pub buffer_peak: u64,
    pub flushes: u64,
    pub epochs: u64,
}

impl SchemeStats {
    /// All evictions the cache performed, whatever their cause.
    pub fn total_evictions(&self) -> u64 {
        self.evicted_lines + self.relocation_evictions + self.cleaner_forced
    }

    pub fn miss_rate(&self) -> f64 {
        if self.accesses == 0 {
            0.0
        } else {
            self.misses as f64 / self.accesses as f64
        }
    }
}

/// `n_sets x assoc` slots in one flat vector.
#[derive(Clone, Debug)]
pub struct SetArray {
    slots: Vec<LineSlot>,
    assoc: usize,
    n_sets: usize,
}

impl SetArray {
    pub fn new(n_sets: usize, assoc: usize) -> Self {
        SetArray {
            slots: vec![LineSlot::EMPTY; n_sets * assoc],
            assoc,
            n_sets,
        }
    }

    #[inline]
    pub fn assoc(&self) -> usize {
        self.assoc
    }

    #[inline]
    pub fn n_sets(&self) -> usize {
        self.n_sets
    }

    #[inline]
    pub fn set(&self, set: usize) -> &[LineSlot] {
        &self.slots[set * self.assoc..(set + 1) * self.assoc]
    }

    #[inline]
    pub fn set_mut(&mut self, set: usize) -> &mut [LineSlot] {
        &mut self.slots[set * self.assoc..(set + 1) * self.assoc]
    }

    /// Way holding `line` in `set`, if any.
    #[inline]
    pub fn find(&self, set: usize, line: u64) -> Option<usize> {
        self.set(set).iter().position(|s| s.valid && s.line == line)
    }

    #[inline]
    pub fn lookup(&self, set: usize, line: u64) -> bool {
        self.find(set, line).is_some()
    }

    pub fn is_full(&self, set: usize) -> bool {
        self.set(set).iter().all(|s| s.valid)
    }

    pub fn occupancy(&self, set: usize) -> usize {
        self.set(set).iter().filter(|s| s.valid).count()
    }

    /// Clear a way and hand back what it held.
    pub fn take(&mut self, set: usize, way: usize) -> LineSlot {
        std::mem::replace(&mut self.set_mut(set)[way], LineSlot::EMPTY)
    }

    pub fn put(&mut self, set: usize, way: usize, slot: LineSlot) {
        debug_assert!(!self.set(set)[way].valid);
        self.set_mut(set)[way] = slot;
    }

    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, usize, &LineSlot)> + '_ {
        self.slots
            .iter()
            .enumerate()
            .filter(|(_, s)| s.valid)
            .map(move |(i, s)| (i / self.assoc, i % self.assoc, s))
    }

    pub fn valid_count(&self) -> usize {
        self.slots.iter().filter(|s| s.valid).count()
    }

    /// Fill `slot` into `set` using random replacement. Returns the evicted
    /// line, if the set was full.
    pub fn fill_random(&mut self, set: usize, slot: LineSlot, rng: &mut RngStream) -> Option<LineSlot> {
        let way = random_replace(self.set(set), rng);
        let old = self.take(set, way);
        self.put(set, way, slot);
        old.valid.then_some(old)
    }
}

/// Victim way under random replacement: the first empty way if there is one,
/// otherwise a uniform draw over all ways.
#[inline]
pub fn random_replace(set: &[LineSlot], rng: &mut RngStream) -> usize {
    match set.iter().position(|s| !s.valid) {
        Some(way) => way,
        None => rng.uniform(set.len()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slot(line: u64) -> LineSlot {
        LineSlot {
            valid: true,
            line,
            owner: Owner::Other,
            itable_idx: NO_ENTRY,
        }
    }

    #[test]
    fn empty_lookup_misses() {
        let arr = SetArray::new(8, 4);
        assert!(!arr.lookup(3, 42));
    }

    #[test]
    fn fill_then_hit() {
        let mut arr = SetArray::new(8, 4);
        let mut rng = RngStream::new(1);
        assert!(arr.fill_random(5, slot(0xa), &mut rng).is_none());
        assert!(arr.lookup(5, 0xa));
        assert!(!arr.lookup(4, 0xa));
    }

    #[test]
    fn overfill_evicts_exactly_one() {
        let mut arr = SetArray::new(2, 4);
        let mut rng = RngStream::new(1);
        for l in 0..4 {
            assert!(arr.fill_random(1, slot(l), &mut rng).is_none());
        }
        let ev = arr.fill_random(1, slot(99), &mut rng).expect("eviction");
        assert!(ev.line < 4);
        assert_eq!(arr.occupancy(1), 4);
        assert!(arr.lookup(1, 99));
    }

    #[test]
    fn empty_way_preferred() {
        let mut set = vec![slot(1), LineSlot::EMPTY, slot(3), slot(4)];
        let mut rng = RngStream::new(0);
        assert_eq!(random_replace(&set, &mut rng), 1);
        set[1] = slot(2);
        assert!(random_replace(&set, &mut rng) < 4);
    }

    #[test]
    fn victim_sequence_replays_from_seed() {
        let set = vec![slot(1), slot(2), slot(3), slot(4)];
        let run = |seed| {
            let mut rng = RngStream::new(seed);
            (0..32).map(|_| random_replace(&set, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(run(17), run(17));
    }

    #[test]
    fn victims_are_uniform_over_ways() {
        let set = vec![slot(0); 8];
        let mut rng = RngStream::new(23);
        let draws = 100_000;
        let mut counts = [0u32; 8];
        for _ in 0..draws {
            counts[random_replace(&set, &mut rng)] += 1;
        }
        for c in counts {
            let p = c as f64 / draws as f64;
            assert!((p - 0.125).abs() <= 0.02 * 0.125, "{p}");
        }
    }
}
