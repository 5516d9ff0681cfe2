//! Build a conflict group line by line against random-skew caches and watch
//! the cost grow with the skew count.

use randcache::attacks::{builder, replica_eviction, AttackOptions, AttackerOracle, Budget, LinePool};
use randcache::{Address, RngStream, SchemeConfig, SchemeKind};

fn main() {
    let w = 8;
    println!(
        "{:>2} {:>5} {:>9} {:>8} {:>9}",
        "s", "g", "accesses", "/(N*s*w)", "p(evict)"
    );
    for s in [1, 2, 4, 8] {
        let cfg = SchemeConfig::new(SchemeKind::Drs, 64 * s, w).skews(s);
        let mut cache = cfg.build(&RngStream::new(s as u64)).unwrap();
        let geo = *cache.geometry();
        let target = Address(0x5555_0040);
        let mut pool = LinePool::new(RngStream::new(100 + s as u64), &geo, target);
        let mut o = AttackerOracle::new(cache.as_mut(), target, Budget::UNLIMITED);
        let r = builder(&mut o, s * w, &AttackOptions::default(), &mut pool);
        let group = r.scg.expect("builder always returns its group");
        let p = replica_eviction(cache.as_ref(), &group, 1000, &RngStream::new(9));
        let unit = (geo.n_lines * s * w) as f64;
        println!(
            "{s:>2} {:>5} {:>9} {:>8.2} {p:>9.3}",
            group.len(),
            r.accesses_used,
            r.accesses_used as f64 / unit
        );
    }
}
