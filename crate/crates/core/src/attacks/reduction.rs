use std::collections::HashSet;

use rand::seq::index;

use super::{finish, AttackKind, AttackOptions, AttackResult, AttackerOracle, Exhausted, LinePool};
use crate::geometry::Address;

/// Target probes per pass over a large group.
const PROBES_PER_PASS: usize = 16;

/// Whether loading `g` evicts the target.
///
/// Installs the target, then reloads `g`, probing the target every
/// `max(w, |g| / 16)` loads and after each pass. A target miss answers
/// yes; a pass with no group misses answers no, since the group and the
/// target then fit side by side. Small groups get extra passes so that a
/// test may spend up to `floor` loads.
pub(crate) fn group_evicts(
    o: &mut AttackerOracle<'_>,
    g: &[Address],
    passes: usize,
    floor: usize,
    loads: &mut u64,
) -> Result<bool, Exhausted> {
    let passes = passes.max(floor.div_ceil(g.len().max(1)));
    let stride = o.geometry().assoc.max(g.len().div_ceil(PROBES_PER_PASS));
    o.probe_target()?;
    for _ in 0..passes {
        let mut missed = false;
        for chunk in g.chunks(stride) {
            for &a in chunk {
                missed |= !o.access(a)?;
            }
            *loads += chunk.len() as u64;
            if !o.probe_target()? {
                return Ok(true);
            }
        }
        if !missed {
            return Ok(false);
        }
    }
    Ok(false)
}

/// Extend `g` with fresh lines until it evicts the target.
fn grow(
    o: &mut AttackerOracle<'_>,
    g: &mut Vec<Address>,
    pool: &mut LinePool,
    passes: usize,
    loads: &mut u64,
) -> Result<(), Exhausted> {
    let chunk = (g.len() / 4).max(o.geometry().assoc);
    while !group_evicts(o, g, passes, 0, loads)? {
        g.extend(pool.fresh_n(chunk));
    }
    Ok(())
}

/// Full-group tests that must all fail before a group is presumed not to
/// evict after all.
const RECHECKS: usize = 3;

/// Consecutive failed removals from an `n`-line group that prompt a
/// recheck. Lines left in the target's set before the attack can make a
/// group that fits pass its first tests, after which every removal fails.
fn stall_limit(n: usize) -> usize {
    n.max(1).ilog2() as usize + 2
}

fn still_evicts(o: &mut AttackerOracle<'_>, g: &[Address], passes: usize, loads: &mut u64) -> Result<bool, Exhausted> {
    for _ in 0..RECHECKS {
        if group_evicts(o, g, passes, 0, loads)? {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Drop candidates one at a time. Returns `false` if a recheck finds that
/// the group no longer evicts.
fn one_at_a_time(
    o: &mut AttackerOracle<'_>,
    g: &mut Vec<Address>,
    want: usize,
    passes: usize,
    floor: usize,
    loads: &mut u64,
) -> Result<bool, Exhausted> {
    let mut failed = 0;
    loop {
        let before = g.len();
        let mut i = 0;
        while i < g.len() && g.len() > want {
            let c = g.remove(i);
            o.flush(c)?;
            if group_evicts(o, g, passes, floor, loads)? {
                failed = 0;
            } else {
                g.insert(i, c);
                i += 1;
                failed += 1;
                if failed >= stall_limit(g.len()) {
                    failed = 0;
                    if !still_evicts(o, g, passes, loads)? {
                        return Ok(false);
                    }
                }
            }
        }
        if g.len() <= want || g.len() == before {
            return Ok(true);
        }
    }
}

fn run_one_at_a_time(
    kind: AttackKind,
    o: &mut AttackerOracle<'_>,
    l: usize,
    opts: &AttackOptions,
    pool: &mut LinePool,
) -> AttackResult {
    let geo = *o.geometry();
    let passes = opts.test_passes.max(1);
    let want = opts.scg_size(&geo);
    let mut loads = 0;
    let mut g = pool.fresh_n(l.max(1));
    let r = (|| loop {
        grow(o, &mut g, pool, passes, &mut loads)?;
        if one_at_a_time(o, &mut g, want, passes, 0, &mut loads)? {
            return Ok(());
        }
        g.extend(pool.fresh_n((g.len() / 4).max(geo.assoc)));
    })();
    match r {
        Ok(()) => finish(o, kind, g, loads, opts, ""),
        Err(Exhausted) => finish(o, kind, Vec::new(), loads, opts, "budget exhausted"),
    }
}

/// Reduce a random `l`-line group one candidate at a time.
///
/// The group is first grown until it evicts the target. Each candidate is
/// then flushed and dropped for good if the rest still evicts the target.
pub fn simple_reduction(
    o: &mut AttackerOracle<'_>,
    l: usize,
    opts: &AttackOptions,
    pool: &mut LinePool,
) -> AttackResult {
    run_one_at_a_time(AttackKind::SimpleReduction, o, l, opts, pool)
}

/// One-at-a-time reduction aimed at lines sharing the target's iTable
/// entry on a scheme whose entries rotate.
pub fn itable_oversubscription_attack(
    o: &mut AttackerOracle<'_>,
    l: usize,
    opts: &AttackOptions,
    pool: &mut LinePool,
) -> AttackResult {
    run_one_at_a_time(AttackKind::ItableOversubscription, o, l, opts, pool)
}

/// Reduce a random `l`-line group by dropping a `1 - f` share per round.
///
/// A round that loses the eviction signal restores its chunk and retries
/// with half as many lines. A single line that cannot be dropped is kept
/// until a closing one-at-a-time sweep, whose tests run at least `16 * w`
/// loads each.
pub fn fractional_reduction(
    o: &mut AttackerOracle<'_>,
    l: usize,
    f: f64,
    opts: &AttackOptions,
    pool: &mut LinePool,
) -> AttackResult {
    assert!(f > 0.0 && f < 1.0, "fraction must lie in (0, 1)");
    let geo = *o.geometry();
    let passes = opts.test_passes.max(1);
    let want = opts.scg_size(&geo);
    let mut loads = 0;
    let mut g = pool.fresh_n(l.max(1));
    let share = |n: usize| (((1.0 - f) * n as f64).ceil() as usize).max(1);
    let mut run = |o: &mut AttackerOracle<'_>, g: &mut Vec<Address>| -> Result<(), Exhausted> {
        grow(o, g, pool, passes, &mut loads)?;
        let mut keep: HashSet<Address> = HashSet::new();
        let mut chunk = share(g.len());
        let mut failed = 0;
        while g.len() > want {
            if failed >= stall_limit(g.len()) {
                failed = 0;
                if !still_evicts(o, g, passes, &mut loads)? {
                    g.extend(pool.fresh_n((g.len() / 4).max(geo.assoc)));
                    grow(o, g, pool, passes, &mut loads)?;
                    keep.clear();
                    chunk = share(g.len());
                }
            }
            let open: Vec<usize> = (0..g.len()).filter(|&i| !keep.contains(&g[i])).collect();
            if open.is_empty() {
                break;
            }
            let k = chunk.min(g.len() - want).min(open.len()).max(1);
            let drop: HashSet<usize> = index::sample(pool.rng(), open.len(), k)
                .into_iter()
                .map(|j| open[j])
                .collect();
            let rest: Vec<Address> = (0..g.len()).filter(|i| !drop.contains(i)).map(|i| g[i]).collect();
            for &i in &drop {
                o.flush(g[i])?;
            }
            if group_evicts(o, &rest, passes, 0, &mut loads)? {
                *g = rest;
                chunk = (2 * k).min(share(g.len()));
                failed = 0;
            } else {
                failed += 1;
                if k == 1 {
                    keep.extend(drop.iter().map(|&i| g[i]));
                } else {
                    chunk = k / 2;
                }
            }
        }
        one_at_a_time(o, g, want, passes, 16 * geo.assoc, &mut loads).map(|_| ())
    };
    match run(o, &mut g) {
        Ok(()) => finish(o, AttackKind::FractionalReduction, g, loads, opts, ""),
        Err(Exhausted) => finish(
            o,
            AttackKind::FractionalReduction,
            Vec::new(),
            loads,
            opts,
            "budget exhausted",
        ),
    }
}
