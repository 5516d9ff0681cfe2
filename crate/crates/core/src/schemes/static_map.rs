//! Schemes whose address-to-set map is fixed at construction: SA, SE and
//! the three two-level static (TLSR) variants.

use crate::error::{ConfigError, InvariantViolation};
use crate::geometry::{Address, CacheGeometry};
use crate::permutation::{derive_index, Permutation};
use crate::rng::{purpose, RngStream};
use crate::set_array::{AccessOutcome, Eviction, LineSlot, Owner, SchemeStats, SetArray, NO_ENTRY};

use super::{check_no_duplicates, CacheModel, SchemeConfig, SchemeKind};

/// How a line number becomes a first-level index.
#[derive(Clone, Debug)]
pub enum FirstLevel {
    IndexBits,
    Encrypted(Permutation),
}

impl FirstLevel {
    #[inline]
    pub fn apply(&self, line: u64) -> u64 {
        match self {
            FirstLevel::IndexBits => line,
            FirstLevel::Encrypted(p) => p.encrypt(line),
        }
    }
}

/// Line number -> set index, optionally through a fixed table.
#[derive(Clone, Debug)]
pub struct StaticMap {
    pub first: FirstLevel,
    /// Second-level table (`table[i]` is a set index); `None` means the
    /// first-level value's low bits are the set index directly.
    pub table: Option<Vec<u32>>,
    n_sets: usize,
}

impl StaticMap {
    pub fn direct(first: FirstLevel, n_sets: usize) -> Self {
        StaticMap {
            first,
            table: None,
            n_sets,
        }
    }

    pub fn identity_table(first: FirstLevel, entries: usize, n_sets: usize) -> Self {
        let table = (0..entries).map(|i| (i % n_sets) as u32).collect();
        StaticMap {
            first,
            table: Some(table),
            n_sets,
        }
    }

    pub fn random_table(first: FirstLevel, entries: usize, n_sets: usize, rng: &mut RngStream) -> Self {
        let table = (0..entries).map(|_| rng.uniform(n_sets) as u32).collect();
        StaticMap {
            first,
            table: Some(table),
            n_sets,
        }
    }

    #[inline]
    pub fn set_of(&self, line: u64) -> usize {
        let v = self.first.apply(line);
        match &self.table {
            None => derive_index(v, self.n_sets),
            Some(t) => t[derive_index(v, t.len())] as usize,
        }
    }
}

#[derive(Clone)]
pub struct StaticCache {
    kind: SchemeKind,
    geo: CacheGeometry,
    map: StaticMap,
    sets: SetArray,
    rng: RngStream,
    stats: SchemeStats,
}

impl StaticCache {
    pub fn new(kind: SchemeKind, geo: CacheGeometry, map: StaticMap, rng: RngStream) -> Self {
        StaticCache {
            kind,
            geo,
            map,
            sets: SetArray::new(geo.n_sets, geo.assoc),
            rng,
            stats: SchemeStats::default(),
        }
    }

    pub fn from_config(cfg: &SchemeConfig, rng: &RngStream) -> Result<Self, ConfigError> {
        let geo = cfg.geometry()?;
        let mut keys = rng.derive(purpose::KEYS);
        let mut place = rng.derive(purpose::PLACEMENT);
        let mut encrypted = || {
            if cfg.identity_keys {
                FirstLevel::Encrypted(Permutation::identity(geo.domain_bits()))
            } else {
                FirstLevel::Encrypted(Permutation::random(&mut keys, geo.domain_bits()))
            }
        };
        let t = cfg.table_size();
        let map = match cfg.kind {
            SchemeKind::Sa => StaticMap::direct(FirstLevel::IndexBits, geo.n_sets),
            SchemeKind::Se => StaticMap::direct(encrypted(), geo.n_sets),
            SchemeKind::TlsrSe => StaticMap::identity_table(encrypted(), t, geo.n_sets),
            SchemeKind::TlsrSrp => StaticMap::random_table(FirstLevel::IndexBits, t, geo.n_sets, &mut place),
            SchemeKind::TlsrSeSrp => StaticMap::random_table(encrypted(), t, geo.n_sets, &mut place),
            other => {
                return Err(ConfigError::invalid(
                    "scheme",
                    format!("{other} is not a static-mapping scheme"),
                ))
            }
        };
        Ok(Self::new(cfg.kind, geo, map, rng.derive(purpose::REPLACEMENT)))
    }

    pub fn map(&self) -> &StaticMap {
        &self.map
    }

    /// Set index the scheme assigns to `addr`.
    pub fn set_of(&self, addr: Address) -> usize {
        self.map.set_of(addr.line(&self.geo))
    }
}

impl CacheModel for StaticCache {
    fn kind(&self) -> SchemeKind {
        self.kind
    }

    fn geometry(&self) -> &CacheGeometry {
        &self.geo
    }

    fn access(&mut self, addr: Address, owner: Owner) -> AccessOutcome {
        let line = addr.line(&self.geo);
        let set = self.map.set_of(line);
        self.stats.accesses += 1;
        if self.sets.lookup(set, line) {
            self.stats.hits += 1;
            return AccessOutcome::hit(set);
        }
        self.stats.misses += 1;
        let slot = LineSlot {
            valid: true,
            line,
            owner,
            itable_idx: NO_ENTRY,
        };
        let mut out = AccessOutcome {
            set_probed: set,
            ..Default::default()
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
        out
    }

    fn flush(&mut self, addr: Address) -> bool {
        let line = addr.line(&self.geo);
        let set = self.map.set_of(line);
        match self.sets.find(set, line) {
            Some(way) => {
                self.sets.take(set, way);
                self.stats.flushes += 1;
                true
            }
            None => false,
        }
    }

    fn contains(&self, addr: Address) -> bool {
        let line = addr.line(&self.geo);
        self.sets.lookup(self.map.set_of(line), line)
    }

    fn resident_lines(&self) -> Vec<u64> {
        self.sets.iter_valid().map(|(_, _, s)| s.line).collect()
    }

    fn stats(&self) -> &SchemeStats {
        &self.stats
    }

    fn audit(&self) -> Result<(), InvariantViolation> {
        for (set, _, slot) in self.sets.iter_valid() {
            if self.map.set_of(slot.line) != set {
                return Err(InvariantViolation(format!(
                    "line {:#x} sits in set {set} but maps to {}",
                    slot.line,
                    self.map.set_of(slot.line)
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_mapped_lines_alternate() {
        let cfg = SchemeConfig::new(SchemeKind::Sa, 4, 1);
        let mut c = cfg.build(&RngStream::new(0)).unwrap();
        let (a, b) = (Address(0x40), Address(0x140));
        assert!(!c.access(a, Owner::Other).hit);
        for _ in 0..10 {
            let o = c.access(b, Owner::Other);
            assert!(!o.hit);
            assert_eq!(o.evicted.len(), 1);
            assert!(!c.access(a, Owner::Other).hit);
        }
    }

    #[test]
    fn tlsr_se_with_identity_second_level_matches_se() {
        let rng = RngStream::new(3);
        let se = StaticCache::from_config(&SchemeConfig::new(SchemeKind::Se, 64, 4), &rng).unwrap();
        let tl = StaticCache::from_config(&SchemeConfig::new(SchemeKind::TlsrSe, 64, 4), &rng).unwrap();
        for l in 0..10_000u64 {
            let a = Address(l * 64 * 7919);
            assert_eq!(se.set_of(a), tl.set_of(a));
        }
    }

    #[test]
    fn flush_removes_line() {
        let mut c = SchemeConfig::new(SchemeKind::Se, 16, 2)
            .build(&RngStream::new(0))
            .unwrap();
        c.access(Address(0x80), Owner::Attacker);
        assert!(c.contains(Address(0x80)));
        assert!(c.flush(Address(0x80)));
        assert!(!c.contains(Address(0x80)));
        assert!(!c.flush(Address(0x80)));
    }
}
