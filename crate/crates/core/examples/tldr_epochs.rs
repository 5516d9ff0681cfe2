//! Run a two-level randomized cache through several epochs and print what
//! each epoch did: natural transitions, cleaner work and buffer use.

use randcache::rng::purpose;
use randcache::{Address, Owner, RngStream, SchemeConfig, SchemeKind};

fn main() {
    let cfg = SchemeConfig::new(SchemeKind::DeDrp, 512, 16);
    let mut cache = cfg.build(&RngStream::new(5)).unwrap();
    let n = cache.geometry().n_lines as u64;
    let mut rng = RngStream::new(5).derive(purpose::TRACE);
    while cache.epoch_records().len() < 8 {
        cache.access(Address((rng.next_u64() % (1 << 30)) << 6), Owner::Other);
    }
    cache.audit().expect("invariants hold");
    println!("N = {n}, epoch = {} evictions", cfg.tldr_epoch_len());
    println!(
        "{:>5} {:>8} {:>8} {:>8} {:>6} {:>9}",
        "epoch", "natural", "cleaned", "forced", "peak", "overflows"
    );
    for r in cache.epoch_records() {
        println!(
            "{:>5} {:>8.3} {:>8} {:>8} {:>6} {:>9}",
            r.epoch, r.natural_fraction, r.cleaner_transitions, r.cleaner_forced, r.buffer_peak, r.overflows
        );
    }
}
