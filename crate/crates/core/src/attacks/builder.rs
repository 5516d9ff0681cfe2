use std::collections::HashSet;

use super::{finish, AttackKind, AttackOptions, AttackResult, AttackerOracle, Exhausted, LinePool};
use crate::geometry::Address;

/// Stream fresh lines, probing the target after each one; a line whose
/// access coincides with a target miss joins the group.
pub fn builder(o: &mut AttackerOracle<'_>, size: usize, opts: &AttackOptions, pool: &mut LinePool) -> AttackResult {
    let mut members = Vec::with_capacity(size);
    let r = (|| -> Result<(), Exhausted> {
        o.probe_target()?;
        while members.len() < size {
            let c = pool.fresh();
            o.access(c)?;
            if !o.probe_target()? {
                members.push(c);
            }
        }
        Ok(())
    })();
    let note = match r {
        Ok(()) => "",
        Err(Exhausted) => "budget exhausted",
    };
    finish(o, AttackKind::Builder, members, 0, opts, note)
}

/// Passes without a new member before the group is replaced.
const STALE_PASSES: usize = 4;

/// Reload one random `l`-line group over and over. After every group miss
/// the target is probed, and a target miss names the line just loaded as
/// a member. A group that stops yielding members is swapped for a fresh one.
pub fn fast_builder(o: &mut AttackerOracle<'_>, l: usize, opts: &AttackOptions, pool: &mut LinePool) -> AttackResult {
    let want = opts.scg_size(o.geometry());
    let mut members: Vec<Address> = Vec::with_capacity(want);
    let mut loads = 0;
    let r = (|| -> Result<(), Exhausted> {
        let mut seen = HashSet::new();
        let mut g = pool.fresh_n(l.max(1));
        let mut stale = 0;
        o.probe_target()?;
        while members.len() < want {
            let before = members.len();
            for &a in &g {
                loads += 1;
                if !o.access(a)? && !o.probe_target()? && seen.insert(a) {
                    members.push(a);
                    if members.len() == want {
                        return Ok(());
                    }
                }
            }
            stale = if members.len() == before { stale + 1 } else { 0 };
            if stale == STALE_PASSES {
                g = pool.fresh_n(l.max(1));
                stale = 0;
            }
        }
        Ok(())
    })();
    let note = match r {
        Ok(()) => "",
        Err(Exhausted) => "budget exhausted",
    };
    finish(o, AttackKind::FastBuilder, members, loads, opts, note)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::Budget;
    use crate::rng::RngStream;
    use crate::schemes::{SchemeConfig, SchemeKind};

    #[test]
    fn builder_on_sa_collects_set_mates() {
        let mut c = SchemeConfig::new(SchemeKind::Sa, 64, 4)
            .build(&RngStream::new(1))
            .unwrap();
        let geo = *c.geometry();
        let t = Address(0x5_5540);
        let mut o = AttackerOracle::new(c.as_mut(), t, Budget::UNLIMITED);
        let mut p = LinePool::new(RngStream::new(2), &geo, t);
        let r = builder(&mut o, 4, &AttackOptions::default(), &mut p);
        assert!(r.succeeded, "{r:?}");
        let set = geo.decompose(t).1;
        assert!(r.scg.unwrap().members.iter().all(|&m| geo.decompose(m).1 == set));
        assert_eq!(r.evictions_observed, 4 + 1);
    }

    #[test]
    fn fast_builder_on_sa() {
        let mut c = SchemeConfig::new(SchemeKind::Sa, 64, 4)
            .build(&RngStream::new(3))
            .unwrap();
        let geo = *c.geometry();
        let t = Address(0x9_9980);
        let mut o = AttackerOracle::new(c.as_mut(), t, Budget::UNLIMITED);
        let mut p = LinePool::new(RngStream::new(4), &geo, t);
        let r = fast_builder(&mut o, 512, &AttackOptions::default(), &mut p);
        assert!(r.succeeded, "{r:?}");
        assert_eq!(r.scg.unwrap().len(), 4);
    }
}
