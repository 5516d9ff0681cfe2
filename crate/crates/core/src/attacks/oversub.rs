use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{finish, AttackKind, AttackOptions, AttackResult, AttackerOracle, Exhausted, LinePool};
use crate::geometry::Address;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OversubOptions {
    /// Line stride known to preserve the first-level index (the table size
    /// when that index is the low line bits). `None` draws random lines.
    pub entry_stride: Option<u64>,
}

/// Grow a group of lines that share the target's iTable entry.
///
/// Candidates are loaded one at a time with the target resident. When a
/// target probe misses, every candidate loaded since the last target hit
/// is reloaded; those that miss were evicted together with the target and
/// join the group.
pub fn oversubscription_attack(
    o: &mut AttackerOracle<'_>,
    over: &OversubOptions,
    opts: &AttackOptions,
    pool: &mut LinePool,
) -> AttackResult {
    let geo = *o.geometry();
    let want = opts.scg_size(&geo);
    let target_line = o.target().line(&geo);
    let mut k = 0u64;
    let mut next = |pool: &mut LinePool| -> Address {
        match over.entry_stride {
            Some(stride) => loop {
                k += 1;
                let line = target_line.wrapping_add(k.wrapping_mul(stride)) & geo.line_mask();
                if let Some(a) = pool.claim(line) {
                    return a;
                }
            },
            None => pool.fresh(),
        }
    };
    let mut members = Vec::with_capacity(want);
    let mut loads = 0;
    let r = (|| -> Result<(), Exhausted> {
        let mut seen = HashSet::new();
        let mut pending: Vec<Address> = Vec::new();
        o.probe_target()?;
        while members.len() < want {
            let c = next(pool);
            o.access(c)?;
            loads += 1;
            pending.push(c);
            if o.probe_target()? {
                continue;
            }
            for p in std::mem::take(&mut pending) {
                if !o.access(p)? && seen.insert(p) {
                    members.push(p);
                    if members.len() == want {
                        break;
                    }
                }
            }
        }
        Ok(())
    })();
    let note = match r {
        Ok(()) => "",
        Err(Exhausted) => "budget exhausted",
    };
    finish(o, AttackKind::Oversubscription, members, loads, opts, note)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::Budget;
    use crate::rng::RngStream;
    use crate::schemes::{SchemeConfig, SchemeKind};

    #[test]
    fn unbuffered_tldr_drp_falls_to_entry_sharing_lines() {
        let cfg = SchemeConfig::new(SchemeKind::TldrDrp, 64, 8).buffer(0);
        let t_entries = cfg.table_size() as u64;
        let mut c = cfg.build(&RngStream::new(1)).unwrap();
        let geo = *c.geometry();
        let t = Address(0x4_4440);
        let mut o = AttackerOracle::new(c.as_mut(), t, Budget::accesses(100_000));
        let mut p = LinePool::new(RngStream::new(2), &geo, t);
        let over = OversubOptions {
            entry_stride: Some(t_entries),
        };
        let r = oversubscription_attack(&mut o, &over, &AttackOptions::default(), &mut p);
        assert!(r.succeeded, "{r:?}");
        assert!(r.eviction_probability.unwrap() >= 0.9);
    }
}
