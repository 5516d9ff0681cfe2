//! Skewed caches: SRS, DRS and CEASER-S (DRS with per-skew rotating keys).
//!
//! Skew `k` owns sets `[k * S/s, (k+1) * S/s)` of one flat set array.
//! SRS and DRS share a single keyed within-skew index across skews, so a
//! line conflicts with the same set position in every skew. CEASER-S keys
//! each skew independently and refreshes all skews in lockstep.

use crate::error::{ConfigError, InvariantViolation};
use crate::geometry::{Address, CacheGeometry};
use crate::permutation::{derive_index, Permutation};
use crate::rng::{purpose, RngStream};
use crate::set_array::{AccessOutcome, Eviction, LineSlot, Owner, SchemeStats, SetArray, NO_ENTRY};

use super::ceaser::{refresh_region, DeState};
use super::{check_no_duplicates, CacheModel, SchemeConfig, SchemeKind};

/// How the fill skew is chosen on a miss.
#[derive(Clone, Debug)]
pub enum SkewSelect {
    /// Keyed hash of the line (SRS).
    Static(Permutation),
    /// Fresh uniform draw per fill (DRS, CEASER-S).
    Random,
}

#[derive(Clone, Debug)]
enum SkewIndex {
    Shared(Permutation),
    Rotating(Vec<DeState>),
}

#[derive(Clone)]
pub struct SkewedCache {
    kind: SchemeKind,
    geo: CacheGeometry,
    per_skew: usize,
    index: SkewIndex,
    select: SkewSelect,
    sets: SetArray,
    repl: RngStream,
    skew_rng: RngStream,
    keys: RngStream,
    identity: bool,
    forced_skew: Option<usize>,
    stats: SchemeStats,
}

impl SkewedCache {
    pub fn from_config(cfg: &SchemeConfig, rng: &RngStream) -> Result<Self, ConfigError> {
        let geo = cfg.geometry()?;
        let bits = geo.domain_bits();
        let per_skew = geo.sets_per_skew();
        let mut keys = rng.derive(purpose::KEYS);
        let draw = |keys: &mut RngStream| {
            if cfg.identity_keys {
                Permutation::identity(bits)
            } else {
                Permutation::random(keys, bits)
            }
        };
        let index = match cfg.kind {
            SchemeKind::Srs | SchemeKind::Drs => SkewIndex::Shared(draw(&mut keys)),
            SchemeKind::DrsDe => SkewIndex::Rotating(
                (0..geo.n_skews)
                    .map(|_| {
                        let cur = draw(&mut keys);
                        let tgt = draw(&mut keys);
                        DeState::new(cur, tgt, per_skew, cfg.de_epoch_accesses())
                    })
                    .collect(),
            ),
            other => {
                return Err(ConfigError::invalid(
                    "scheme",
                    format!("{other} is not a skewed scheme"),
                ))
            }
        };
        let select = if cfg.kind == SchemeKind::Srs {
            let mut sk = rng.derive(purpose::SKEW);
            SkewSelect::Static(Permutation::random(&mut sk, bits))
        } else {
            SkewSelect::Random
        };
        Ok(SkewedCache {
            kind: cfg.kind,
            geo,
            per_skew,
            index,
            select,
            sets: SetArray::new(geo.n_sets, geo.assoc),
            repl: rng.derive(purpose::REPLACEMENT),
            skew_rng: rng.derive(purpose::SKEW),
            keys,
            identity: cfg.identity_keys,
            forced_skew: None,
            stats: SchemeStats::default(),
        })
    }

    pub fn n_skews(&self) -> usize {
        self.geo.n_skews
    }

    /// Pin every subsequent fill to one skew (test hook).
    pub fn force_skew(&mut self, skew: Option<usize>) {
        if let Some(k) = skew {
            assert!(k < self.geo.n_skews);
        }
        self.forced_skew = skew;
    }

    /// Per-skew refresh state (CEASER-S only).
    pub fn de_states(&self) -> Option<&[DeState]> {
        match &self.index {
            SkewIndex::Rotating(v) => Some(v),
            SkewIndex::Shared(_) => None,
        }
    }

    /// Global set index a line would be placed at in skew `k`.
    pub fn placement(&self, line: u64, k: usize) -> usize {
        k * self.per_skew
            + match &self.index {
                SkewIndex::Shared(p) => derive_index(p.encrypt(line), self.per_skew),
                SkewIndex::Rotating(de) => de[k].placement_set(line),
            }
    }

    /// Global set currently holding `addr`, if resident.
    pub fn locate(&self, addr: Address) -> Option<usize> {
        let line = addr.line(&self.geo);
        (0..self.geo.n_skews).find_map(|k| self.locate_in(line, k))
    }

    fn locate_in(&self, line: u64, k: usize) -> Option<usize> {
        let base = k * self.per_skew;
        match &self.index {
            SkewIndex::Shared(p) => {
                let s = base + derive_index(p.encrypt(line), self.per_skew);
                self.sets.lookup(s, line).then_some(s)
            }
            SkewIndex::Rotating(de) => {
                let d = &de[k];
                [d.current_set(line), d.target_set(line)]
                    .into_iter()
                    .map(|s| base + s)
                    .find(|&s| self.sets.lookup(s, line))
            }
        }
    }

    fn fill_skew(&mut self, line: u64) -> usize {
        if let Some(k) = self.forced_skew {
            return k;
        }
        match &self.select {
            SkewSelect::Static(p) => derive_index(p.encrypt(line), self.geo.n_skews),
            SkewSelect::Random => self.skew_rng.uniform(self.geo.n_skews),
        }
    }

    fn tick(&mut self, evicted: &mut Vec<Eviction>) {
        let SkewIndex::Rotating(de) = &mut self.index else {
            return;
        };
        for d in de.iter_mut() {
            d.access_count += 1;
        }
        let due = de[0].due();
        for _ in 0..due {
            for (k, d) in de.iter_mut().enumerate() {
                let p = d.refresh_ptr;
                refresh_region(
                    &mut self.sets,
                    k * self.per_skew,
                    p,
                    d,
                    &mut self.repl,
                    &mut self.stats,
                    evicted,
                );
                d.refresh_ptr += 1;
            }
        }
        if de[0].epoch_done() {
            let bits = self.geo.domain_bits();
            for d in de.iter_mut() {
                let fresh = if self.identity {
                    Permutation::identity(bits)
                } else {
                    Permutation::random(&mut self.keys, bits)
                };
                d.rollover(fresh);
            }
            self.stats.epochs += 1;
        }
    }
}

impl CacheModel for SkewedCache {
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
        if let Some(set) = (0..self.geo.n_skews).find_map(|k| self.locate_in(line, k)) {
            self.stats.hits += 1;
            out.hit = true;
            out.set_probed = set;
            out.skew_probed = Some(set / self.per_skew);
        } else {
            self.stats.misses += 1;
            let k = self.fill_skew(line);
            let set = self.placement(line, k);
            out.set_probed = set;
            out.skew_probed = Some(k);
            let slot = LineSlot {
                valid: true,
                line,
                owner,
                itable_idx: NO_ENTRY,
            };
            if let Some(old) = self.sets.fill_random(set, slot, &mut self.repl) {
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
            let k = set / self.per_skew;
            let local = set % self.per_skew;
            let ok = match &self.index {
                SkewIndex::Shared(p) => derive_index(p.encrypt(slot.line), self.per_skew) == local,
                SkewIndex::Rotating(de) => {
                    let d = &de[k];
                    let c = d.current_set(slot.line);
                    let t = d.target_set(slot.line);
                    if c < d.refresh_ptr {
                        local == t
                    } else {
                        local == c || local == t
                    }
                }
            };
            if !ok {
                return Err(InvariantViolation(format!(
                    "line {:#x} stranded in skew {k} set {local}",
                    slot.line
                )));
            }
        }
        check_no_duplicates(&self.resident_lines())
    }

    fn clone_box(&self) -> Box<dyn CacheModel> {
        Box::new(self.clone())
    }

    fn reseed(&mut self, rng: &RngStream) {
        self.repl = rng.derive(purpose::REPLACEMENT);
        self.skew_rng = rng.derive(purpose::SKEW);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drs(sets: usize, ways: usize, skews: usize, seed: u64) -> SkewedCache {
        let cfg = SchemeConfig::new(SchemeKind::Drs, sets, ways).skews(skews);
        SkewedCache::from_config(&cfg, &RngStream::new(seed)).unwrap()
    }

    #[test]
    fn hit_found_in_any_skew() {
        let mut c = drs(64, 4, 4, 1);
        let a = Address(0x1234_5640);
        for k in 0..4 {
            c.flush(a);
            c.force_skew(Some(k));
            assert!(!c.access(a, Owner::Other).hit);
            c.force_skew(None);
            let o = c.access(a, Owner::Other);
            assert!(o.hit);
            assert_eq!(o.skew_probed, Some(k));
        }
    }

    #[test]
    fn srs_skew_choice_is_a_function_of_the_line() {
        let cfg = SchemeConfig::new(SchemeKind::Srs, 64, 2).skews(4);
        let mut c = SkewedCache::from_config(&cfg, &RngStream::new(2)).unwrap();
        let a = Address(0xabc0);
        let k = c.access(a, Owner::Other).skew_probed;
        for _ in 0..20 {
            c.flush(a);
            assert_eq!(c.access(a, Owner::Other).skew_probed, k);
        }
    }

    #[test]
    fn ceaser_s_refreshes_skews_together() {
        let cfg = SchemeConfig::new(SchemeKind::DrsDe, 64, 4).skews(2).epoch(64);
        let mut c = SkewedCache::from_config(&cfg, &RngStream::new(3)).unwrap();
        let mut r = RngStream::new(4);
        for i in 0..1000 {
            c.access(Address(r.next_u64() << 6), Owner::Other);
            let de = c.de_states().unwrap();
            assert_eq!(de[0].refresh_ptr, de[1].refresh_ptr);
            if i % 97 == 0 {
                c.audit().unwrap();
            }
        }
        assert!(c.stats().epochs >= 15);
        c.audit().unwrap();
    }

    #[test]
    fn ceaser_s_keys_differ_per_skew() {
        let cfg = SchemeConfig::new(SchemeKind::DrsDe, 64, 4).skews(4);
        let c = SkewedCache::from_config(&cfg, &RngStream::new(5)).unwrap();
        let de = c.de_states().unwrap();
        assert_ne!(de[0].current.key(), de[1].current.key());
    }
}
