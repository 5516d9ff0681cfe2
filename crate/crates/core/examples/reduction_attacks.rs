//! Recover a conflict set on a static-mapping cache by shrinking a random
//! group, one line at a time and by fractions.

use randcache::attacks::{fractional_reduction, simple_reduction, AttackOptions, AttackerOracle, Budget, LinePool};
use randcache::{Address, RngStream, SchemeConfig, SchemeKind};

fn main() {
    let opts = AttackOptions::default();
    for kind in [SchemeKind::Sa, SchemeKind::Se] {
        let mut cache = SchemeConfig::new(kind, 64, 4).build(&RngStream::new(11)).unwrap();
        let geo = *cache.geometry();
        let target = Address(0x7_0000_0040);
        let mut o = AttackerOracle::new(cache.as_mut(), target, Budget::UNLIMITED);
        let mut pool = LinePool::new(RngStream::new(12), &geo, target);
        let r = simple_reduction(&mut o, geo.n_lines / 2, &opts, &mut pool);
        println!(
            "{kind} simple:     {} lines, p = {:.2}, {} accesses",
            r.scg.as_ref().map_or(0, |g| g.len()),
            r.eviction_probability.unwrap_or(0.0),
            r.accesses_used
        );
    }
    let mut cache = SchemeConfig::new(SchemeKind::Sa, 16, 4)
        .build(&RngStream::new(13))
        .unwrap();
    let geo = *cache.geometry();
    let target = Address(0x9_0000_0080);
    let mut o = AttackerOracle::new(cache.as_mut(), target, Budget::UNLIMITED);
    let mut pool = LinePool::new(RngStream::new(14), &geo, target);
    let (l, f) = (1024, 0.5);
    let r = fractional_reduction(&mut o, l, f, &opts, &mut pool);
    println!(
        "sa fractional: {} lines, p = {:.2}, {} accesses (bound 4L/(1-f) = {})",
        r.scg.as_ref().map_or(0, |g| g.len()),
        r.eviction_probability.unwrap_or(0.0),
        r.accesses_used,
        4.0 * l as f64 / (1.0 - f)
    );
}
