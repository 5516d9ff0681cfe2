//! Eviction probability of a 100-line built group on a skewed cache with
//! rotating keys, for a few skew counts.

use randcache::attacks::{builder, replica_eviction, AttackOptions, AttackerOracle, Budget, LinePool};
use randcache::{Address, RngStream, SchemeConfig, SchemeKind};

fn main() {
    for s in [2, 4, 8, 16] {
        let cfg = SchemeConfig::new(SchemeKind::DrsDe, 512, 16)
            .skews(s)
            .epoch(u64::MAX / 4);
        let mut cache = cfg.build(&RngStream::new(21)).unwrap();
        let geo = *cache.geometry();
        let target = Address(0x0012_3456_7840);
        let mut pool = LinePool::new(RngStream::new(22), &geo, target);
        let mut o = AttackerOracle::new(cache.as_mut(), target, Budget::UNLIMITED);
        let r = builder(&mut o, 100, &AttackOptions::default(), &mut pool);
        let p = replica_eviction(cache.as_ref(), &r.scg.unwrap(), 2000, &RngStream::new(23));
        println!("s = {s:>2}: p(evict) = {p:.3} after {} accesses", r.accesses_used);
    }
}
