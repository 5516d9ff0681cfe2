//! Build every scheme at the same size and replay one uniform trace.

use randcache::rng::purpose;
use randcache::{Address, Owner, RngStream, SchemeConfig, SchemeKind};

fn main() {
    let (sets, ways) = (256, 16);
    let n = sets * ways;
    let mut trace_rng = RngStream::new(1).derive(purpose::TRACE);
    let trace: Vec<Address> = (0..200_000)
        .map(|_| Address((trace_rng.next_u64() % (2 * n as u64)) << 6))
        .collect();
    println!(
        "{:<12} {:>9} {:>10} {:>11} {:>7}",
        "scheme", "miss rate", "evictions", "relocations", "epochs"
    );
    for kind in SchemeKind::ALL {
        let cfg = SchemeConfig::new(kind, sets, ways).skews(if kind.is_skewed() { 2 } else { 1 });
        let mut cache = cfg.build(&RngStream::new(7)).expect("valid config");
        for &a in &trace {
            cache.access(a, Owner::Other);
        }
        cache.audit().expect("invariants hold");
        let s = cache.stats();
        println!(
            "{:<12} {:>9.4} {:>10} {:>11} {:>7}",
            kind.name(),
            s.miss_rate(),
            s.total_evictions(),
            s.relocations,
            s.epochs
        );
    }
}
