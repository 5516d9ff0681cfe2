//! Chance that a random group of `g` lines evicts a fixed victim line on a
//! fully randomized cache, against the closed form `1 - (1 - 1/N)^g`.

use randcache::analysis::evict_probability;
use randcache::attacks::{random_group_eviction, AttackerOracle, Budget, LinePool};
use randcache::{Address, Owner, RngStream, SchemeConfig, SchemeKind};

fn main() {
    let cfg = SchemeConfig::new(SchemeKind::DeDrp, 256, 16);
    let mut cache = cfg.build(&RngStream::new(3)).unwrap();
    let geo = *cache.geometry();
    let n = geo.n_lines as u64;
    let target = Address(0xabc_d000_0040);
    let mut pool = LinePool::new(RngStream::new(4), &geo, target);
    for _ in 0..2 * n {
        cache.access(pool.fresh(), Owner::Other);
    }
    let mut oracle = AttackerOracle::new(cache.as_mut(), target, Budget::UNLIMITED);
    println!("N = {n}");
    println!("{:>6} {:>9} {:>9}", "g", "measured", "analytic");
    for g in [64, 256, 1024, 4096, 8192] {
        let p = random_group_eviction(&mut oracle, g, 4000, &mut pool);
        println!("{g:>6} {p:>9.4} {:>9.4}", evict_probability(n, g as u64));
    }
}
