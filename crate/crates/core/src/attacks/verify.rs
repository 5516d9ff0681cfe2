use serde::{Deserialize, Serialize};

use super::{AttackerOracle, Budget, ConflictGroup, Exhausted, LinePool};
use crate::rng::{purpose, RngStream};
use crate::schemes::CacheModel;
use crate::set_array::Owner;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyOptions {
    pub trials: usize,
    /// Group reloads per trial; loading stops early once a pass has no misses.
    pub max_passes: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            trials: 20,
            max_passes: 64,
        }
    }
}

fn verify_trial(o: &mut AttackerOracle<'_>, g: &ConflictGroup, max_passes: usize) -> Result<bool, Exhausted> {
    for &m in &g.members {
        o.flush(m)?;
    }
    o.probe_target()?;
    for _ in 0..max_passes {
        let mut missed = false;
        for &m in &g.members {
            missed |= !o.access(m)?;
        }
        if !missed {
            break;
        }
    }
    Ok(!o.probe_target()?)
}

/// Fraction of trials in which loading `group` evicts the target.
///
/// Each trial flushes the members, installs the target, reloads the group
/// until a pass is all hits (at most `max_passes`), then probes the target.
/// Runs outside the oracle's budget.
pub fn verify_scg(oracle: &mut AttackerOracle<'_>, group: &ConflictGroup, opts: &VerifyOptions) -> f64 {
    assert!(opts.trials >= 1);
    assert_eq!(group.target, oracle.target());
    if group.is_empty() {
        return 0.0;
    }
    let evicted = oracle.unbudgeted(|o| {
        (0..opts.trials)
            .filter(|_| verify_trial(o, group, opts.max_passes).expect("unbudgeted"))
            .count()
    });
    evicted as f64 / opts.trials as f64
}

/// Fraction of trials in which one pass over `g` fresh random lines evicts
/// the installed target.
pub fn random_group_eviction(oracle: &mut AttackerOracle<'_>, g: usize, trials: usize, pool: &mut LinePool) -> f64 {
    assert!(trials >= 1);
    let evicted = oracle.unbudgeted(|o| {
        let mut n = 0;
        for _ in 0..trials {
            o.probe_target().expect("unbudgeted");
            for a in pool.fresh_n(g) {
                o.access(a).expect("unbudgeted");
            }
            n += !o.probe_target().expect("unbudgeted") as usize;
        }
        n
    });
    evicted as f64 / trials as f64
}

/// Eviction probability of `group` measured on independent replicas of
/// `cache`.
///
/// A base copy first streams fresh lines until neither the target nor any
/// member is resident, keeping every set full. Each trial clones the base,
/// reseeds its runtime randomness, installs the target, loads the group
/// once and probes the target.
pub fn replica_eviction(cache: &dyn CacheModel, group: &ConflictGroup, trials: usize, rng: &RngStream) -> f64 {
    assert!(trials >= 1);
    let mut base = cache.clone_box();
    let geo = *base.geometry();
    let mut pool = LinePool::new(rng.derive(purpose::WARMUP), &geo, group.target);
    for m in &group.members {
        pool.claim(m.line(&geo));
    }
    let resident = |c: &dyn CacheModel| c.contains(group.target) || group.members.iter().any(|&m| c.contains(m));
    let cap = 64 * geo.n_lines;
    let mut n = 0;
    while resident(base.as_ref()) && n < cap {
        base.access(pool.fresh(), Owner::Other);
        n += 1;
    }
    let evicted = (0..trials)
        .filter(|&i| {
            let mut c = base.clone_box();
            c.reseed(&rng.derive(purpose::TRIAL + i as u64));
            let mut o = AttackerOracle::new(c.as_mut(), group.target, Budget::UNLIMITED);
            o.probe_target().expect("unbudgeted");
            for &m in &group.members {
                o.access(m).expect("unbudgeted");
            }
            !o.probe_target().expect("unbudgeted")
        })
        .count();
    evicted as f64 / trials as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Address, CacheGeometry};
    use crate::schemes::{SchemeConfig, SchemeKind};

    fn sa(sets: usize, ways: usize) -> Box<dyn CacheModel> {
        SchemeConfig::new(SchemeKind::Sa, sets, ways)
            .build(&RngStream::new(3))
            .unwrap()
    }

    fn same_set(geo: &CacheGeometry, target: Address, k: usize) -> Vec<Address> {
        let (tag, set, _) = geo.decompose(target);
        (1..=k as u64).map(|i| geo.recompose(tag + i, set, 0)).collect()
    }

    #[test]
    fn exact_conflict_set_always_evicts() {
        let mut c = sa(16, 4);
        let geo = *c.geometry();
        let t = Address(0x1_2340);
        let g = ConflictGroup::new(same_set(&geo, t, 4), t);
        let mut o = AttackerOracle::new(c.as_mut(), t, Budget::accesses(0));
        assert_eq!(verify_scg(&mut o, &g, &VerifyOptions::default()), 1.0);
    }

    #[test]
    fn short_or_empty_group_never_evicts() {
        let mut c = sa(16, 4);
        let geo = *c.geometry();
        let t = Address(0x1_2340);
        let mut o = AttackerOracle::new(c.as_mut(), t, Budget::UNLIMITED);
        let g = ConflictGroup::new(vec![], t);
        assert_eq!(verify_scg(&mut o, &g, &VerifyOptions::default()), 0.0);
        let g = ConflictGroup::new(same_set(&geo, t, 3), t);
        assert_eq!(verify_scg(&mut o, &g, &VerifyOptions::default()), 0.0);
    }

    #[test]
    fn replica_leaves_the_original_untouched() {
        let mut c = sa(16, 4);
        let geo = *c.geometry();
        let t = Address(0x1_2340);
        c.access(t, Owner::Victim);
        let before = c.stats().clone();
        let g = ConflictGroup::new(same_set(&geo, t, 4), t);
        let p = replica_eviction(c.as_ref(), &g, 50, &RngStream::new(9));
        assert_eq!(c.stats(), &before);
        assert!(c.contains(t));
        // Four fills into a full 4-way set: survival (3/4)^4.
        assert!((p - (1.0 - 0.75f64.powi(4))).abs() < 0.2, "{p}");
    }
}
