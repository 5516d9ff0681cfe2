//! Conflict-group attacks, driven only through hit/miss observations.
//!
//! An attack holds an [`AttackerOracle`] over a scheme and one victim line.
//! It may touch its own lines, flush its own lines and reload the victim
//! line; each of these returns hit or miss and counts against the budget.
//! Nothing else about the scheme is visible.

mod builder;
mod oversub;
mod reduction;
mod verify;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use builder::{builder, fast_builder};
pub use oversub::{oversubscription_attack, OversubOptions};
pub use reduction::{fractional_reduction, itable_oversubscription_attack, simple_reduction};
pub use verify::{random_group_eviction, replica_eviction, verify_scg, VerifyOptions};

use crate::error::ConfigError;
use crate::geometry::{Address, CacheGeometry};
use crate::rng::RngStream;
use crate::schemes::CacheModel;
use crate::set_array::Owner;

/// Largest group still counted as a small conflict group.
pub const SCG_MAX: usize = 1000;

/// Attacker lines that together should evict `target`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConflictGroup {
    pub members: Vec<Address>,
    pub target: Address,
}

impl ConflictGroup {
    pub fn new(members: Vec<Address>, target: Address) -> Self {
        let g = ConflictGroup { members, target };
        debug_assert!(g.is_well_formed());
        g
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Members distinct and disjoint from the target.
    pub fn is_well_formed(&self) -> bool {
        let set: HashSet<_> = self.members.iter().collect();
        set.len() == self.members.len() && !set.contains(&self.target)
    }

    pub fn is_scg(&self) -> bool {
        self.members.len() <= SCG_MAX
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    SimpleReduction,
    FractionalReduction,
    Builder,
    FastBuilder,
    Oversubscription,
    ItableOversubscription,
    /// Not an attack: eviction rate of fresh random groups of a given size.
    RandomGroup,
}

impl AttackKind {
    pub const ALL: [AttackKind; 7] = [
        AttackKind::SimpleReduction,
        AttackKind::FractionalReduction,
        AttackKind::Builder,
        AttackKind::FastBuilder,
        AttackKind::Oversubscription,
        AttackKind::ItableOversubscription,
        AttackKind::RandomGroup,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::SimpleReduction => "simple-reduction",
            AttackKind::FractionalReduction => "fractional-reduction",
            AttackKind::Builder => "builder",
            AttackKind::FastBuilder => "fast-builder",
            AttackKind::Oversubscription => "oversubscription",
            AttackKind::ItableOversubscription => "itable-oversubscription",
            AttackKind::RandomGroup => "random-group",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        AttackKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| ConfigError::invalid("attack", format!("unknown attack `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttackResult {
    pub attack: AttackKind,
    /// Implies `scg` is present and passed [`verify_scg`].
    pub succeeded: bool,
    pub scg: Option<ConflictGroup>,
    /// Oracle calls made by the attack proper (verification excluded).
    pub accesses_used: u64,
    /// Accesses spent loading candidate groups.
    pub group_load_accesses: u64,
    /// Victim reloads that missed.
    pub evictions_observed: u64,
    pub epochs_elapsed: u64,
    pub eviction_probability: Option<f64>,
    pub note: String,
}

/// Limits on an attack run. A limit of `None` is unbounded.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budget {
    pub max_accesses: Option<u64>,
    /// Key rotations of the scheme since the attack began.
    pub max_epochs: Option<u64>,
    /// Scheme eviction events since the attack began.
    pub max_evictions: Option<u64>,
}

impl Budget {
    pub const UNLIMITED: Budget = Budget {
        max_accesses: None,
        max_epochs: None,
        max_evictions: None,
    };

    pub fn accesses(n: u64) -> Self {
        Budget {
            max_accesses: Some(n),
            ..Budget::UNLIMITED
        }
    }
}

/// The budget ran out.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Exhausted;

/// Hit/miss view of a scheme from the attacker's side.
pub struct AttackerOracle<'a> {
    cache: &'a mut dyn CacheModel,
    target: Address,
    budget: Budget,
    accesses: u64,
    target_misses: u64,
    start_epochs: u64,
    start_evictions: u64,
}

impl<'a> AttackerOracle<'a> {
    pub fn new(cache: &'a mut dyn CacheModel, target: Address, budget: Budget) -> Self {
        let start_epochs = cache.epochs();
        let start_evictions = cache.stats().eviction_events;
        AttackerOracle {
            cache,
            target,
            budget,
            accesses: 0,
            target_misses: 0,
            start_epochs,
            start_evictions,
        }
    }

    pub fn target(&self) -> Address {
        self.target
    }

    /// Public design parameters (N, S, w, s).
    pub fn geometry(&self) -> &CacheGeometry {
        self.cache.geometry()
    }

    pub fn accesses(&self) -> u64 {
        self.accesses
    }

    pub fn target_misses(&self) -> u64 {
        self.target_misses
    }

    pub fn epochs_elapsed(&self) -> u64 {
        self.cache.epochs() - self.start_epochs
    }

    pub fn evictions_elapsed(&self) -> u64 {
        self.cache.stats().eviction_events - self.start_evictions
    }

    pub fn budget(&self) -> Budget {
        self.budget
    }

    pub fn set_budget(&mut self, budget: Budget) {
        self.budget = budget;
    }

    fn charge(&mut self) -> Result<(), Exhausted> {
        let b = self.budget;
        if b.max_accesses.is_some_and(|m| self.accesses >= m)
            || b.max_epochs.is_some_and(|m| self.epochs_elapsed() >= m)
            || b.max_evictions.is_some_and(|m| self.evictions_elapsed() >= m)
        {
            return Err(Exhausted);
        }
        self.accesses += 1;
        Ok(())
    }

    /// Touch an attacker line. `true` on hit.
    pub fn access(&mut self, addr: Address) -> Result<bool, Exhausted> {
        debug_assert_ne!(addr, self.target);
        self.charge()?;
        Ok(self.cache.access(addr, Owner::Attacker).hit)
    }

    /// Reload the victim line. `true` on hit; a miss refetches it.
    pub fn probe_target(&mut self) -> Result<bool, Exhausted> {
        self.charge()?;
        let hit = self.cache.access(self.target, Owner::Victim).hit;
        if !hit {
            self.target_misses += 1;
        }
        Ok(hit)
    }

    /// Flush an attacker line. Reveals nothing.
    pub fn flush(&mut self, addr: Address) -> Result<(), Exhausted> {
        debug_assert_ne!(addr, self.target);
        self.charge()?;
        self.cache.flush(addr);
        Ok(())
    }

    /// Run `f` with the budget lifted, restoring it afterwards.
    pub fn unbudgeted<R>(&mut self, f: impl FnOnce(&mut Self) -> R) -> R {
        let saved = std::mem::replace(&mut self.budget, Budget::UNLIMITED);
        let r = f(self);
        self.budget = saved;
        r
    }
}

/// Knobs shared by the search attacks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackOptions {
    /// Members to collect; defaults to the associativity.
    pub scg_size: Option<usize>,
    /// Reload passes inside one group test before it answers no.
    pub test_passes: usize,
    pub verify: VerifyOptions,
    /// Verified eviction probability needed to call the attack a success.
    pub success_threshold: f64,
}

impl Default for AttackOptions {
    fn default() -> Self {
        AttackOptions {
            scg_size: None,
            test_passes: 4,
            verify: VerifyOptions::default(),
            success_threshold: 0.5,
        }
    }
}

impl AttackOptions {
    pub fn scg_size(&self, geo: &CacheGeometry) -> usize {
        self.scg_size.unwrap_or(geo.assoc)
    }
}

/// Fresh, distinct attacker lines from a 40-bit line space.
///
/// Lines are a keyed bijection of a counter, so distinctness needs no
/// record of what was handed out; only explicitly claimed lines are stored.
#[derive(Clone, Debug)]
pub struct LinePool {
    rng: RngStream,
    offset_bits: u32,
    mult: [u64; 3],
    start: u64,
    issued: u64,
    claimed: HashSet<u64>,
}

const POOL_LINE_BITS: u32 = 40;
const POOL_MASK: u64 = (1 << POOL_LINE_BITS) - 1;
const POOL_SHIFT: u32 = POOL_LINE_BITS / 2;

/// Inverse of an odd `a` modulo 2^64 by Newton iteration.
fn inv_odd(a: u64) -> u64 {
    let mut x = a;
    for _ in 0..6 {
        x = x.wrapping_mul(2u64.wrapping_sub(a.wrapping_mul(x)));
    }
    x
}

impl LinePool {
    pub fn new(rng: RngStream, geo: &CacheGeometry, target: Address) -> Self {
        let mut rng = rng;
        let mult = [0; 3].map(|_: u64| rng.next_u64() | 1);
        let start = rng.next_u64() & POOL_MASK;
        let mut claimed = HashSet::new();
        claimed.insert(target.line(geo));
        LinePool {
            rng,
            offset_bits: geo.offset_bits,
            mult,
            start,
            issued: 0,
            claimed,
        }
    }

    fn scramble(&self, mut x: u64) -> u64 {
        for m in self.mult {
            x = x.wrapping_mul(m) & POOL_MASK;
            x ^= x >> POOL_SHIFT;
        }
        x
    }

    fn unscramble(&self, mut x: u64) -> u64 {
        for m in self.mult.iter().rev() {
            x ^= x >> POOL_SHIFT;
            x = x.wrapping_mul(inv_odd(*m)) & POOL_MASK;
        }
        x
    }

    fn was_issued(&self, line: u64) -> bool {
        line <= POOL_MASK && (self.unscramble(line).wrapping_sub(self.start) & POOL_MASK) < self.issued
    }

    pub fn fresh(&mut self) -> Address {
        loop {
            assert!(self.issued <= POOL_MASK, "line pool exhausted");
            let line = self.scramble((self.start + self.issued) & POOL_MASK);
            self.issued += 1;
            if !self.claimed.contains(&line) {
                return Address(line << self.offset_bits);
            }
        }
    }

    pub fn fresh_n(&mut self, n: usize) -> Vec<Address> {
        (0..n).map(|_| self.fresh()).collect()
    }

    /// Claim a specific line; `None` if already handed out.
    pub fn claim(&mut self, line: u64) -> Option<Address> {
        if self.was_issued(line) || !self.claimed.insert(line) {
            return None;
        }
        Some(Address(line << self.offset_bits))
    }

    pub fn rng(&mut self) -> &mut RngStream {
        &mut self.rng
    }
}

/// Common tail of every attack: verify the group and fill in the result.
pub(crate) fn finish(
    oracle: &mut AttackerOracle<'_>,
    attack: AttackKind,
    members: Vec<Address>,
    group_loads: u64,
    opts: &AttackOptions,
    note: impl Into<String>,
) -> AttackResult {
    let accesses_used = oracle.accesses();
    let evictions_observed = oracle.target_misses();
    let epochs_elapsed = oracle.epochs_elapsed();
    let mut note = note.into();
    let (scg, prob) = if members.is_empty() {
        (None, None)
    } else {
        let g = ConflictGroup::new(members, oracle.target());
        let p = verify_scg(oracle, &g, &opts.verify);
        (Some(g), Some(p))
    };
    let succeeded = prob.is_some_and(|p| p >= opts.success_threshold);
    if !succeeded && note.is_empty() {
        note = match prob {
            Some(p) => format!("group evicts the target with probability {p:.3}"),
            None => "no group found".into(),
        };
    }
    AttackResult {
        attack,
        succeeded,
        scg,
        accesses_used,
        group_load_accesses: group_loads,
        evictions_observed,
        epochs_elapsed,
        eviction_probability: prob,
        note,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schemes::{SchemeConfig, SchemeKind};

    #[test]
    fn oracle_counts_every_call_and_stops_at_budget() {
        let mut c = SchemeConfig::new(SchemeKind::Sa, 16, 2)
            .build(&RngStream::new(1))
            .unwrap();
        let t = Address(0x40_0000);
        let mut o = AttackerOracle::new(c.as_mut(), t, Budget::accesses(3));
        assert!(!o.probe_target().unwrap());
        assert!(o.probe_target().unwrap());
        o.flush(Address(0x80)).unwrap();
        assert_eq!(o.probe_target(), Err(Exhausted));
        assert_eq!(o.accesses(), 3);
        assert_eq!(o.target_misses(), 1);
        o.unbudgeted(|o| o.access(Address(0x80)).unwrap());
        assert_eq!(o.budget(), Budget::accesses(3));
    }

    #[test]
    fn pool_lines_are_distinct_and_avoid_target() {
        let geo = CacheGeometry::new(64, 4).unwrap();
        let t = Address(0x1000);
        let mut p = LinePool::new(RngStream::new(2), &geo, t);
        let v = p.fresh_n(10_000);
        let set: HashSet<_> = v.iter().collect();
        assert_eq!(set.len(), v.len());
        assert!(!set.contains(&t));
        assert!(p.claim(t.line(&geo)).is_none());
        assert!(p.claim(v[17].line(&geo)).is_none());
        let free = (0..)
            .map(|i| 0xabc_0000 + i)
            .find(|&l| !set.contains(&Address(l << 6)))
            .unwrap();
        assert!(p.claim(free).is_some());
        assert!(p.claim(free).is_none());
        assert!(p.fresh_n(10_000).iter().all(|a| a.line(&geo) != free));
    }

    #[test]
    fn pool_scramble_round_trips() {
        let geo = CacheGeometry::new(64, 4).unwrap();
        let p = LinePool::new(RngStream::new(8), &geo, Address(0));
        for x in [0u64, 1, 12345, POOL_MASK] {
            assert_eq!(p.unscramble(p.scramble(x)), x);
        }
    }

    #[test]
    fn attack_names_round_trip() {
        for k in AttackKind::ALL {
            assert_eq!(k.name().parse::<AttackKind>().unwrap(), k);
        }
    }
}
